//! Per-session command journal.
//!
//! Each session owns one JSON Lines file. The first record creates the
//! session and embeds the full module document, which pins the module
//! version. Later records ingest findings or close the session. Replaying
//! the records through the engine rebuilds the session exactly, because
//! the engine is deterministic.
//!
//! A record is acknowledged only after it has been written and fsynced. A
//! crash can therefore leave at most one torn final line, which replay
//! drops.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rekodx_core::config::ConfigOverrides;
use rekodx_core::cycle::{start_session, Session, SessionError};
use rekodx_core::evidence::{EvidenceState, FindingState, Scalar};
use rekodx_core::model::{to_sorted_json, KnowledgeBase, ReKoModule};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Command {
    Create {
        session_id: String,
        module: ReKoModule,
        #[serde(default)]
        config_overrides: ConfigOverrides,
        #[serde(default)]
        context: BTreeMap<String, Scalar>,
    },
    Ingest {
        finding_id: String,
        state: FindingState,
    },
    Delete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub seq: u64,
    #[serde(flatten)]
    pub command: Command,
}

impl Record {
    pub fn to_line(&self) -> String {
        let mut line = to_sorted_json(self);
        line.push('\n');
        line
    }
}

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("{path}: replay failed: {source}")]
    Replay {
        path: PathBuf,
        #[source]
        source: SessionError,
    },
}

/// A session rebuilt from its journal.
#[derive(Debug)]
pub struct Replayed {
    pub session_id: String,
    pub session: Session,
    pub closed: bool,
    pub next_seq: u64,
    /// Length of the valid prefix of the file, in bytes.
    pub valid_len: u64,
}

/// Applies one non-create command to a live session.
pub fn apply(session: &mut Session, command: &Command) -> Result<(), SessionError> {
    match command {
        Command::Ingest { finding_id, state } => session.ingest_finding(finding_id, *state),
        Command::Create { .. } | Command::Delete => Ok(()),
    }
}

/// Starts a session from a create command. `shared` is offered as the
/// compiled module when it matches the embedded document.
pub fn create(command: &Command, shared: Option<&Arc<KnowledgeBase>>) -> Result<Session, SessionError> {
    let Command::Create {
        module,
        config_overrides,
        context,
        ..
    } = command
    else {
        unreachable!("create() called with a non-create command");
    };
    let kb = match shared {
        Some(kb) if kb.module() == module => kb.clone(),
        _ => Arc::new(KnowledgeBase::new(module.clone()).map_err(|e| {
            SessionError::Config(rekodx_core::config::ConfigError(format!("embedded module invalid: {}", e.0)))
        })?),
    };
    let initial = EvidenceState {
        context: context.clone(),
        ..EvidenceState::default()
    };
    start_session(kb, config_overrides, initial)
}

/// Rebuilds a session from journal text. A final line that does not parse
/// or lacks its newline is treated as torn and ignored. Returns `None` if
/// not even the create record survived.
pub fn replay(
    path: &Path,
    text: &str,
    registry: &dyn Fn(&str) -> Option<Arc<KnowledgeBase>>,
) -> Result<Option<Replayed>, JournalError> {
    let corrupt = |line: usize, message: String| JournalError::Corrupt {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut records = Vec::new();
    let mut valid_len = 0u64;
    let mut rest = text;
    let mut line_no = 0;
    while !rest.is_empty() {
        line_no += 1;
        let (line, complete) = match rest.find('\n') {
            Some(i) => (&rest[..i], true),
            None => (rest, false),
        };
        let consumed = line.len() + usize::from(complete);
        rest = &rest[consumed..];
        match serde_json::from_str::<Record>(line) {
            Ok(r) if complete => {
                records.push(r);
                valid_len += consumed as u64;
            }
            // torn tail: only allowed on the very last line
            _ if rest.is_empty() => break,
            Ok(_) => unreachable!("an incomplete line is always the last"),
            Err(e) => return Err(corrupt(line_no, e.to_string())),
        }
    }

    let mut iter = records.into_iter();
    let Some(first) = iter.next() else {
        return Ok(None);
    };
    if first.seq != 0 {
        return Err(corrupt(1, format!("first record has seq {}", first.seq)));
    }
    let Command::Create { session_id, module, .. } = &first.command else {
        return Err(corrupt(1, "first record is not a create".into()));
    };
    let session_id = session_id.clone();
    let shared = registry(&module.id);
    let mut session = create(&first.command, shared.as_ref()).map_err(|source| JournalError::Replay {
        path: path.to_path_buf(),
        source,
    })?;
    let mut next_seq = 1;
    let mut closed = false;
    for (i, r) in iter.enumerate() {
        let line = i + 2;
        if r.seq != next_seq {
            return Err(corrupt(line, format!("expected seq {next_seq}, found {}", r.seq)));
        }
        if closed {
            return Err(corrupt(line, "record after delete".into()));
        }
        match &r.command {
            Command::Create { .. } => return Err(corrupt(line, "second create record".into())),
            Command::Delete => closed = true,
            cmd => apply(&mut session, cmd).map_err(|source| JournalError::Replay {
                path: path.to_path_buf(),
                source,
            })?,
        }
        next_seq += 1;
    }
    Ok(Some(Replayed {
        session_id,
        session,
        closed,
        next_seq,
        valid_len,
    }))
}

/// Append handle on one session's journal file.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Creates a new journal file; fails if one already exists.
    pub fn create(path: PathBuf) -> Result<Self, JournalError> {
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|source| JournalError::Io { path: path.clone(), source })?;
        Ok(Self { path, file })
    }

    /// Reopens an existing journal, cutting off any torn tail first so new
    /// records start on a fresh line.
    pub fn reopen(path: PathBuf, valid_len: u64) -> Result<Self, JournalError> {
        let io = |source| JournalError::Io { path: path.clone(), source };
        let file = OpenOptions::new().write(true).open(&path).map_err(io)?;
        if file.metadata().map_err(io)?.len() != valid_len {
            file.set_len(valid_len).map_err(io)?;
            file.sync_all().map_err(io)?;
        }
        drop(file);
        let file = OpenOptions::new().append(true).open(&path).map_err(io)?;
        Ok(Self { path, file })
    }

    /// Writes and fsyncs one record.
    pub fn append(&mut self, record: &Record) -> Result<(), JournalError> {
        let io = |source| JournalError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(record.to_line().as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)
    }

    /// Undoes a failed append so the file ends on a record boundary.
    pub fn truncate_to(&mut self, len: u64) -> Result<(), JournalError> {
        let io = |source| JournalError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.set_len(len).map_err(io)?;
        self.file.sync_all().map_err(io)
    }

    pub fn len(&self) -> Result<u64, JournalError> {
        self.file
            .metadata()
            .map(|m| m.len())
            .map_err(|source| JournalError::Io {
                path: self.path.clone(),
                source,
            })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Makes a newly created file's directory entry durable.
pub fn sync_dir(dir: &Path) -> Result<(), JournalError> {
    #[cfg(unix)]
    {
        File::open(dir)
            .and_then(|d| d.sync_all())
            .map_err(|source| JournalError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
    }
    #[cfg(not(unix))]
    let _ = dir;
    Ok(())
}
