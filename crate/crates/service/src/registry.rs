//! Modules available to the service, loaded once at startup.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rekodx_core::model::{KnowledgeBase, LoadError};
use serde::Serialize;
use thiserror::Error;

/// Outcome of loading one file from the module directory.
#[derive(Debug, Clone, Serialize)]
pub struct FileReport {
    pub file: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub module_id: Option<String>,
    /// Validation or parse problems; empty when the module was registered.
    pub problems: Vec<String>,
}

impl fmt::Display for FileReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.problems.is_empty() {
            return write!(f, "{}: ok", self.file.display());
        }
        writeln!(f, "{}:", self.file.display())?;
        for p in &self.problems {
            writeln!(f, "  {p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read module directory {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("no valid modules in {dir}:\n{}", render(.reports))]
    NoValidModules { dir: PathBuf, reports: Vec<FileReport> },
    #[error("module id {id:?} is defined by both {} and {}", .first.display(), .second.display())]
    Duplicate { id: String, first: PathBuf, second: PathBuf },
}

fn render(reports: &[FileReport]) -> String {
    if reports.is_empty() {
        return "  (no *.json files)".into();
    }
    reports.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, Serialize)]
pub struct ModuleSummary {
    pub id: String,
    pub name: String,
    pub domain: String,
    pub version: String,
}

#[derive(Debug, Clone, Default)]
pub struct ModuleRegistry {
    modules: BTreeMap<String, Arc<KnowledgeBase>>,
    reports: Vec<FileReport>,
}

impl ModuleRegistry {
    /// Loads every `*.json` file in `dir`. Files that fail validation are
    /// skipped and reported; two valid files sharing an id abort loading.
    pub fn load_dir(dir: &Path) -> Result<Self, RegistryError> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| RegistryError::Io(dir.to_path_buf(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();

        let mut modules = BTreeMap::new();
        let mut origin: BTreeMap<String, PathBuf> = BTreeMap::new();
        let mut reports = Vec::new();
        for file in files {
            let loaded = std::fs::read(&file)
                .map_err(|e| vec![format!("IO_ERROR: {e}")])
                .and_then(|bytes| KnowledgeBase::load(&bytes).map_err(describe));
            match loaded {
                Ok(kb) => {
                    let id = kb.id().to_string();
                    if let Some(first) = origin.get(&id) {
                        return Err(RegistryError::Duplicate {
                            id,
                            first: first.clone(),
                            second: file,
                        });
                    }
                    reports.push(FileReport {
                        file: file.clone(),
                        module_id: Some(id.clone()),
                        problems: Vec::new(),
                    });
                    origin.insert(id.clone(), file);
                    modules.insert(id, Arc::new(kb));
                }
                Err(problems) => {
                    tracing::warn!(file = %file.display(), "module rejected");
                    reports.push(FileReport {
                        file,
                        module_id: None,
                        problems,
                    });
                }
            }
        }
        if modules.is_empty() {
            return Err(RegistryError::NoValidModules {
                dir: dir.to_path_buf(),
                reports,
            });
        }
        Ok(Self { modules, reports })
    }

    pub fn from_modules(modules: impl IntoIterator<Item = KnowledgeBase>) -> Self {
        Self {
            modules: modules
                .into_iter()
                .map(|kb| (kb.id().to_string(), Arc::new(kb)))
                .collect(),
            reports: Vec::new(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&Arc<KnowledgeBase>> {
        self.modules.get(id)
    }

    pub fn summaries(&self) -> Vec<ModuleSummary> {
        self.modules
            .values()
            .map(|kb| {
                let m = kb.module();
                ModuleSummary {
                    id: m.id.clone(),
                    name: m.name.clone(),
                    domain: m.domain.clone(),
                    version: m.version.clone(),
                }
            })
            .collect()
    }

    pub fn reports(&self) -> &[FileReport] {
        &self.reports
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }
}

fn describe(e: LoadError) -> Vec<String> {
    match e {
        LoadError::Parse(p) => vec![format!("{}: {p}", p.code())],
        LoadError::Invalid(inv) => inv
            .0
            .errors
            .iter()
            .map(|i| format!("{} at {}: {}", i.code, i.path, i.message))
            .collect(),
    }
}
