//! Versioned JSON model files.
//!
//! Floats are written in their shortest round-trip form, so loading a saved
//! model reproduces every weight bit for bit.

use std::fs;
use std::path::Path;

use objprop::cascade::{Cascade, CascadeConfig, Stage1Model, Stage2Model};
use objprop::geometry::{QuantizationScheme, SchemeParams};
use objprop::svm::{LinearModel, SolverConfig, Variant};
use objprop::CascadeF64;
use serde::{Deserialize, Serialize};

use crate::error::FileError;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSection {
    #[serde(rename = "W")]
    pub w: usize,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "R")]
    pub r: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeSection {
    pub gamma: f64,
    pub d1: usize,
    pub d2: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub z: Vec<f64>,
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub variant_s1: Variant,
    pub variant_s2: Variant,
    pub pair_budget: usize,
    #[serde(rename = "C")]
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u64,
    pub scheme: SchemeParams,
    pub feature: FeatureSection,
    pub cascade: CascadeSection,
    /// One filter of length `W * H` per level.
    pub stage1: Vec<Vec<f64>>,
    pub stage2: Vec<CalibrationEntry>,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn from_cascade(cascade: &CascadeF64, seed: u64) -> Self {
        let cfg = &cascade.config;
        ModelFile {
            format_version: FORMAT_VERSION,
            scheme: cfg.scheme.params(),
            feature: FeatureSection {
                w: cfg.feature_w,
                h: cfg.feature_h,
                r: cfg.channels,
            },
            cascade: CascadeSection {
                gamma: cfg.gamma,
                d1: cfg.d1,
                d2: cfg.d2,
                eta: cfg.eta,
            },
            stage1: cascade.stage1.filters.iter().map(|f| f.weights().to_vec()).collect(),
            stage2: cascade
                .stage2
                .z
                .iter()
                .zip(&cascade.stage2.e)
                .map(|(z, &e)| CalibrationEntry { z: z.clone(), e })
                .collect(),
            provenance: Provenance {
                seed,
                variant_s1: cfg.solver1.variant(),
                variant_s2: cfg.solver2.variant(),
                pair_budget: cfg.solver1.max_pairs,
                c: cfg.solver1.c,
            },
        }
    }

    /// Rebuilds the cascade, checking that every section agrees on `K`,
    /// `W * H` and `R`.
    pub fn to_cascade(&self) -> Result<CascadeF64, FileError> {
        let bad = |e: objprop::Error| FileError::Inconsistent(e.to_string());
        let scheme = QuantizationScheme::from_params(self.scheme).map_err(bad)?;
        let k = scheme.len();
        if self.stage1.len() != k || self.stage2.len() != k {
            return Err(FileError::Inconsistent(format!(
                "scheme has {k} levels but stage1 has {} and stage2 has {}",
                self.stage1.len(),
                self.stage2.len()
            )));
        }
        let solver = |variant: Variant| SolverConfig {
            seed: self.provenance.seed,
            max_pairs: self.provenance.pair_budget,
            c: self.provenance.c,
            ..SolverConfig::for_variant(variant)
        };
        let config = CascadeConfig {
            feature_w: self.feature.w,
            feature_h: self.feature.h,
            channels: self.feature.r,
            gamma: self.cascade.gamma,
            d1: self.cascade.d1,
            d2: self.cascade.d2,
            eta: self.cascade.eta,
            solver1: solver(self.provenance.variant_s1),
            solver2: solver(self.provenance.variant_s2),
            ..CascadeConfig::new(scheme)
        };
        let filters: Vec<LinearModel<f64>> = self.stage1.iter().map(|w| LinearModel::new(w.clone(), 0.0)).collect();
        let stage1 = Stage1Model {
            trained: filters.iter().map(|f| !f.is_zero()).collect(),
            filters,
        };
        let stage2 = Stage2Model {
            z: self.stage2.iter().map(|c| c.z.clone()).collect(),
            e: self.stage2.iter().map(|c| c.e).collect(),
        };
        Cascade::new(config, stage1, stage2).map_err(bad)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self, FileError> {
        let parse = |source| FileError::Parse {
            path: origin.to_path_buf(),
            source,
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(parse)?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(FORMAT_VERSION) | None => {}
            Some(found) => {
                return Err(FileError::VersionMismatch {
                    found,
                    expected: FORMAT_VERSION,
                })
            }
        }
        serde_json::from_value(value).map_err(parse)
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        fs::write(path, self.to_json()).map_err(|source| FileError::Write {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        let text = fs::read_to_string(path).map_err(|source| FileError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }
}
