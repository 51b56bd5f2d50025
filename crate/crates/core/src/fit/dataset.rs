//! Reaction datasets and their JSON manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, XcError};
use crate::grid::{load_grid, save_grid, DensityGrid};

pub const MANIFEST_NAME: &str = "dataset.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A linear combination of system energies compared against a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    /// (system id, stoichiometric coefficient)
    pub terms: Vec<(String, f64)>,
    #[serde(rename = "ref_kcal")]
    pub reference_kcal: f64,
    pub weight: f64,
    pub split: Split,
    /// Fixed contribution (kcal/mol) from terms the form does not model.
    #[serde(default)]
    pub offset_kcal: f64,
}

impl Reaction {
    pub fn new(terms: Vec<(String, f64)>, reference_kcal: f64, weight: f64, split: Split) -> Self {
        Reaction {
            terms,
            reference_kcal,
            weight,
            split,
            offset_kcal: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub label: String,
    pub systems: BTreeMap<String, DensityGrid>,
    pub reactions: Vec<Reaction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemEntry {
    pub id: String,
    pub grid_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub label: String,
    pub systems: Vec<SystemEntry>,
    pub reactions: Vec<Reaction>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.reactions.iter().enumerate() {
            let field = || format!("reactions[{i}]");
            if r.terms.is_empty() {
                return Err(XcError::validation(field(), "reaction has no terms"));
            }
            if !(r.weight > 0.0) || !r.weight.is_finite() {
                return Err(XcError::validation(field(), format!("weight {} is not positive", r.weight)));
            }
            if !r.reference_kcal.is_finite() || !r.offset_kcal.is_finite() {
                return Err(XcError::validation(field(), "non-finite reference or offset"));
            }
            for (id, c) in &r.terms {
                if !self.systems.contains_key(id) {
                    return Err(XcError::Data(format!("reaction {i} references unknown system '{id}'")));
                }
                if !c.is_finite() {
                    return Err(XcError::validation(field(), format!("coefficient of '{id}' is not finite")));
                }
            }
        }
        for split in [Split::Train, Split::Val] {
            if self.count(split) == 0 {
                return Err(XcError::validation("reactions", format!("{split} split is empty")));
            }
        }
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        self.reactions.iter().filter(|r| r.split == split).count()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Reaction> {
        self.reactions.iter().filter(move |r| r.split == split)
    }

    /// Writes one grid file per system plus the manifest into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| XcError::io(dir, e))?;
        let mut systems = Vec::with_capacity(self.systems.len());
        for (i, (id, grid)) in self.systems.iter().enumerate() {
            let name = PathBuf::from(format!("system{i:03}.grid"));
            save_grid(grid, dir.join(&name))?;
            systems.push(SystemEntry {
                id: id.clone(),
                grid_path: name,
            });
        }
        let manifest = DatasetManifest {
            label: self.label.clone(),
            systems,
            reactions: self.reactions.clone(),
        };
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, text).map_err(|e| XcError::io(&path, e))?;
        Ok(path)
    }

    /// Loads a manifest file, or `dataset.json` inside a directory. Grid
    /// paths are relative to the manifest.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path.push(MANIFEST_NAME);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| XcError::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| XcError::Parse {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut systems = BTreeMap::new();
        for entry in manifest.systems {
            let loaded = load_grid(base.join(&entry.grid_path))?;
            for w in &loaded.warnings {
                log::warn!("{}: {w:?}", entry.grid_path.display());
            }
            if systems.insert(entry.id.clone(), loaded.grid).is_some() {
                return Err(XcError::Data(format!("duplicate system id '{}'", entry.id)));
            }
        }
        let ds = Dataset {
            label: manifest.label,
            systems,
            reactions: manifest.reactions,
        };
        ds.validate()?;
        Ok(ds)
    }
}
