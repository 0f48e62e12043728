//! JSON-lines dataset manifests.
//!
//! Each non-blank line describes one image:
//!
//! ```text
//! {"image": "img/0001.pgm", "boxes": [{"x": 4, "y": 9, "w": 30, "h": 22, "class": "car"}]}
//! ```
//!
//! Image paths are resolved against the manifest's directory. A missing
//! `class` reads as `"object"`.

use std::fs;
use std::path::{Path, PathBuf};

use objprop::eval::Annotation;
use objprop::geometry::BoundingBox;
use objprop::imaging::load_pgm;
use objprop::GrayImageF64;
use serde::{Deserialize, Serialize};

use crate::error::FileError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    #[serde(default = "default_class")]
    pub class: String,
}

fn default_class() -> String {
    "object".to_string()
}

impl ManifestBox {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path as written in the manifest.
    pub image: String,
    #[serde(default)]
    pub boxes: Vec<ManifestBox>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    /// Directory that relative image paths resolve against.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, FileError> {
        let text = fs::read_to_string(path).map_err(|source| FileError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root, path)
    }

    /// Parses manifest text; `origin` only labels error messages.
    pub fn parse(text: &str, root: PathBuf, origin: &Path) -> Result<Self, FileError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| FileError::Manifest {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            if let Some(b) = entry.boxes.iter().find(|b| b.w == 0 || b.h == 0) {
                return Err(bad(format!("box ({},{},{},{}) is empty", b.x, b.y, b.w, b.h)));
            }
            entries.push(entry);
        }
        Ok(Self { root, entries })
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("manifest entries serialize") + "\n")
            .collect()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.image)
    }

    /// Loads an entry's image and checks every box fits inside it.
    pub fn load_image(&self, entry: &ManifestEntry) -> Result<GrayImageF64, FileError> {
        let path = self.resolve(entry);
        let image = load_pgm(&path).map_err(|source| FileError::Image {
            path: path.clone(),
            source,
        })?;
        if let Some(b) = entry.boxes.iter().find(|b| !b.bbox().fits_within(image.width(), image.height())) {
            return Err(FileError::Image {
                path,
                source: objprop::Error::OutOfBounds {
                    x: b.x,
                    y: b.y,
                    w: b.w,
                    h: b.h,
                    width: image.width(),
                    height: image.height(),
                },
            });
        }
        Ok(image)
    }

    pub fn annotations(&self) -> Vec<Annotation> {
        self.entries
            .iter()
            .map(|e| Annotation {
                image_id: e.image.clone(),
                truths: e.boxes.iter().map(|b| (b.bbox(), b.class.clone())).collect(),
            })
            .collect()
    }

    pub fn box_count(&self) -> usize {
        self.entries.iter().map(|e| e.boxes.len()).sum()
    }
}
