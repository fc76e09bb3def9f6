//! Live sessions plus their journals.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use rekodx_core::config::ConfigOverrides;
use rekodx_core::cycle::{Session, SessionError};
use rekodx_core::evidence::{FindingState, Scalar};
use rekodx_core::model::KnowledgeBase;
use thiserror::Error;

use crate::journal::{self, Command, Journal, JournalError, Record};
use crate::registry::ModuleRegistry;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Journal(#[from] JournalError),
}

#[derive(Debug)]
struct Slot {
    session: Session,
    journal: Option<Journal>,
    next_seq: u64,
    closed: bool,
}

impl Slot {
    /// Writes `command` to the journal, if any. On failure the file is cut
    /// back so it still ends on a record boundary.
    fn persist(&mut self, command: Command) -> Result<(), JournalError> {
        let record = Record {
            seq: self.next_seq,
            command,
        };
        if let Some(j) = self.journal.as_mut() {
            let before = j.len()?;
            if let Err(e) = j.append(&record) {
                let _ = j.truncate_to(before);
                return Err(e);
            }
        }
        self.next_seq += 1;
        Ok(())
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RecoveryReport {
    pub restored: usize,
    pub closed: usize,
    /// Journals whose create record never completed; removed.
    pub discarded: Vec<PathBuf>,
    /// Journals that ended in a torn record; cut back to the last whole one.
    pub truncated: Vec<PathBuf>,
}

/// Concurrent requests to different sessions run in parallel; requests to
/// the same session are serialized by its mutex, and the journal order is
/// the order in which they were applied.
#[derive(Debug, Default)]
pub struct SessionStore {
    log_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
}

fn lock(slot: &Mutex<Slot>) -> MutexGuard<'_, Slot> {
    // state is only replaced after a successful mutation, so a poisoned
    // slot still holds a consistent session
    slot.lock().unwrap_or_else(|e| e.into_inner())
}

impl SessionStore {
    /// A store without persistence.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `log_dir`, replaying every journal found there.
    pub fn open(log_dir: &Path, registry: &ModuleRegistry) -> Result<(Self, RecoveryReport), JournalError> {
        let io = |source| JournalError::Io {
            path: log_dir.to_path_buf(),
            source,
        };
        std::fs::create_dir_all(log_dir).map_err(io)?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(log_dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();

        let lookup = |id: &str| registry.get(id).cloned();
        let mut report = RecoveryReport::default();
        let mut sessions = HashMap::new();
        for path in files {
            let bytes = std::fs::read(&path).map_err(|source| JournalError::Io {
                path: path.clone(),
                source,
            })?;
            // a torn multi-byte character can only sit in the torn tail
            let text = match std::str::from_utf8(&bytes) {
                Ok(t) => t,
                Err(e) => std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap(),
            };
            let Some(r) = journal::replay(&path, text, &lookup)? else {
                std::fs::remove_file(&path).map_err(|source| JournalError::Io {
                    path: path.clone(),
                    source,
                })?;
                report.discarded.push(path);
                continue;
            };
            if r.valid_len != bytes.len() as u64 {
                report.truncated.push(path.clone());
            }
            if r.closed {
                if r.valid_len != bytes.len() as u64 {
                    Journal::reopen(path, r.valid_len)?;
                }
                report.closed += 1;
                continue;
            }
            let journal = Journal::reopen(path, r.valid_len)?;
            sessions.insert(
                r.session_id,
                Arc::new(Mutex::new(Slot {
                    session: r.session,
                    journal: Some(journal),
                    next_seq: r.next_seq,
                    closed: false,
                })),
            );
            report.restored += 1;
        }
        let store = Self {
            log_dir: Some(log_dir.to_path_buf()),
            sessions: RwLock::new(sessions),
        };
        Ok((store, report))
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, StoreError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(id.to_string()))
    }

    pub fn create(
        &self,
        kb: &Arc<KnowledgeBase>,
        config_overrides: ConfigOverrides,
        context: BTreeMap<String, Scalar>,
    ) -> Result<String, StoreError> {
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let command = Command::Create {
            session_id: session_id.clone(),
            module: kb.module().clone(),
            config_overrides,
            context,
        };
        let session = journal::create(&command, Some(kb))?;
        let journal = match &self.log_dir {
            Some(dir) => {
                let mut j = Journal::create(dir.join(format!("{session_id}.jsonl")))?;
                j.append(&Record { seq: 0, command })?;
                journal::sync_dir(dir)?;
                Some(j)
            }
            None => None,
        };
        let slot = Slot {
            session,
            journal,
            next_seq: 1,
            closed: false,
        };
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(session_id.clone(), Arc::new(Mutex::new(slot)));
        Ok(session_id)
    }

    /// Ingests one finding, journals it, then runs `view` on the new state
    /// before the session is unlocked.
    pub fn ingest<R>(
        &self,
        id: &str,
        finding_id: &str,
        state: FindingState,
        view: impl FnOnce(&Session) -> R,
    ) -> Result<R, StoreError> {
        let slot = self.slot(id)?;
        let mut slot = lock(&slot);
        if slot.closed {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        let command = Command::Ingest {
            finding_id: finding_id.to_string(),
            state,
        };
        let mut next = slot.session.clone();
        journal::apply(&mut next, &command)?;
        slot.persist(command)?;
        slot.session = next;
        Ok(view(&slot.session))
    }

    /// Runs `view` on the session without changing it.
    pub fn read<R>(&self, id: &str, view: impl FnOnce(&Session) -> R) -> Result<R, StoreError> {
        let slot = self.slot(id)?;
        let slot = lock(&slot);
        if slot.closed {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        Ok(view(&slot.session))
    }

    pub fn delete(&self, id: &str) -> Result<(), StoreError> {
        let slot = self.slot(id)?;
        {
            let mut slot = lock(&slot);
            if slot.closed {
                return Err(StoreError::UnknownSession(id.to_string()));
            }
            slot.persist(Command::Delete)?;
            slot.closed = true;
        }
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .remove(id);
        Ok(())
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    pub fn log_dir(&self) -> Option<&Path> {
        self.log_dir.as_deref()
    }
}
