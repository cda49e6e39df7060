use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{builtin_models, validate_model, DepositModel, Diagnostic};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadedModel {
    pub file: String,
    pub deposit_type: String,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelLoadReport {
    pub loaded: Vec<LoadedModel>,
    /// (file, reason)
    pub rejected: Vec<(String, String)>,
}

/// Load one model file or every `*.json` directly inside a directory.
/// Invalid files are reported and skipped.
pub fn load_models(path: &Path) -> Result<(Vec<DepositModel>, ModelLoadReport)> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        v
    } else if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        return Err(Error::not_found(format!("{} does not exist", path.display())));
    };

    let mut models = Vec::new();
    let mut report = ModelLoadReport::default();
    for f in files {
        let name = f.display().to_string();
        let parsed = fs::read_to_string(&f)
            .map_err(|e| Error::io(&f, e))
            .and_then(|t| DepositModel::from_json(&t, &name));
        match parsed {
            Ok(m) => {
                let diagnostics = validate_model(&m);
                for d in &diagnostics {
                    tracing::warn!(file = %name, "{}", d.message);
                }
                report.loaded.push(LoadedModel {
                    file: name,
                    deposit_type: m.deposit_type.clone(),
                    diagnostics,
                });
                models.push(m);
            }
            Err(e) => report.rejected.push((name, e.to_string())),
        }
    }
    if models.is_empty() {
        return Err(Error::Ingest(format!(
            "no valid deposit models under {} ({} rejected)",
            path.display(),
            report.rejected.len()
        )));
    }
    Ok((models, report))
}

/// Directory of editable models, falling back to the bundled ones.
///
/// Layout: `{dir}/{slug}.json` for the current version of each type and
/// `{dir}/versions/{slug}/v0001.json`, … for every version it replaced.
#[derive(Debug)]
pub struct ModelStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

pub fn slug(deposit_type: &str) -> String {
    let s: String = deposit_type
        .trim()
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    s.trim_matches('_').to_string()
}

impl ModelStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ModelStore {
            dir: dir.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn current_path(&self, deposit_type: &str) -> PathBuf {
        self.dir.join(format!("{}.json", slug(deposit_type)))
    }

    fn versions_dir(&self, deposit_type: &str) -> PathBuf {
        self.dir.join("versions").join(slug(deposit_type))
    }

    pub fn get(&self, deposit_type: &str) -> Result<DepositModel> {
        let path = self.current_path(deposit_type);
        if path.is_file() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            return DepositModel::from_json(&text, &path.display().to_string());
        }
        builtin_models()
            .into_iter()
            .find(|m| slug(&m.deposit_type) == slug(deposit_type))
            .ok_or_else(|| Error::not_found(format!("no deposit model for {deposit_type:?}")))
    }

    /// Stored models merged over the bundled ones, sorted by type.
    pub fn list(&self) -> Result<Vec<DepositModel>> {
        let mut out = builtin_models();
        if self.dir.is_dir() {
            let (stored, _) = match load_models(&self.dir) {
                Ok(x) => x,
                Err(Error::Ingest(_)) => (Vec::new(), ModelLoadReport::default()),
                Err(e) => return Err(e),
            };
            for m in stored {
                out.retain(|b| slug(&b.deposit_type) != slug(&m.deposit_type));
                out.push(m);
            }
        }
        out.sort_by_key(|m| slug(&m.deposit_type));
        Ok(out)
    }

    /// Store `model` as the current version of its type. A replaced version
    /// is kept under `versions/`, and the new one is marked edited.
    pub fn put(&self, mut model: DepositModel) -> Result<DepositModel> {
        if slug(&model.deposit_type).is_empty() {
            return Err(Error::Validation("deposit_type is empty".into()));
        }
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let previous = match self.get(&model.deposit_type) {
            Ok(m) => Some(m),
            Err(Error::NotFound(_)) => None,
            Err(e) => return Err(e),
        };
        if let Some(prev) = previous {
            let vdir = self.versions_dir(&model.deposit_type);
            let n = self.versions(&model.deposit_type)?.len() + 1;
            write_atomic(&vdir.join(format!("v{n:04}.json")), prev.to_json()?.as_bytes())?;
            model.edited = true;
        }
        write_atomic(&self.current_path(&model.deposit_type), model.to_json()?.as_bytes())?;
        Ok(model)
    }

    /// Replaced versions, oldest first.
    pub fn versions(&self, deposit_type: &str) -> Result<Vec<DepositModel>> {
        let vdir = self.versions_dir(deposit_type);
        if !vdir.is_dir() {
            return Ok(Vec::new());
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&vdir)
            .map_err(|e| Error::io(&vdir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        files
            .iter()
            .map(|f| {
                let t = fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
                DepositModel::from_json(&t, &f.display().to_string())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depositmodel::{DiagnosticKind, CANONICAL_HEADINGS};

    fn full_model(kind: &str) -> DepositModel {
        DepositModel {
            deposit_type: kind.into(),
            characteristics: CANONICAL_HEADINGS
                .iter()
                .map(|h| (h.to_string(), format!("{h} text")))
                .collect(),
            source_docs: vec![],
            edited: false,
        }
    }

    #[test]
    fn loads_directory_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.json"), full_model("a").to_json().unwrap()).unwrap();
        let mut partial = full_model("b");
        partial.characteristics.retain(|(h, _)| h != "Ore controls");
        fs::write(dir.path().join("b.json"), partial.to_json().unwrap()).unwrap();
        fs::write(
            dir.path().join("c.json"),
            r#"{"deposit_type":"c","characteristics":{"Synonyms":"a","Synonyms":"b"}}"#,
        )
        .unwrap();
        let (models, report) = load_models(dir.path()).unwrap();
        assert_eq!(models.len(), 2);
        assert!(report.loaded[0].diagnostics.is_empty());
        assert_eq!(report.loaded[1].diagnostics[0].kind, DiagnosticKind::MissingHeading);
        assert_eq!(report.rejected.len(), 1);
    }

    #[test]
    fn nothing_valid_is_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.json"), "{").unwrap();
        assert!(matches!(load_models(dir.path()), Err(Error::Ingest(_))));
    }

    #[test]
    fn builtin_served_without_files() {
        let dir = tempfile::tempdir().unwrap();
        let store = ModelStore::new(dir.path());
        let m = store.get("Tungsten Skarn").unwrap();
        assert!(!m.edited);
        assert!(matches!(store.get("unobtainium"), Err(Error::NotFound(_))));
    }

    #[test]
    fn edit_keeps_original() {
        let dir = tempfile::tempdir().unwrap();
        let store = ModelStore::new(dir.path());
        let original = store.get("tungsten skarn").unwrap();
        let mut edited = original.clone();
        edited.characteristics[2].1 = "Scheelite skarn.".into();
        let saved = store.put(edited).unwrap();
        assert!(saved.edited);
        assert_eq!(store.get("tungsten skarn").unwrap(), saved);
        assert_eq!(store.versions("tungsten skarn").unwrap(), vec![original]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = ModelStore::new(dir.path());
        let m = full_model("porphyry copper");
        let saved = store.put(m.clone()).unwrap();
        assert_eq!(saved, m);
        assert_eq!(store.get("porphyry copper").unwrap(), m);
        assert_eq!(store.list().unwrap().len(), 2);
    }
}
