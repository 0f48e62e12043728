use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{level_geometry, level_gradient, stage1_infer, CascadeConfig, LevelGeometry, Stage1Model, Stage2Model};
use crate::error::{Error, Result};
use crate::geometry::{max_overlap, place_concentric, round_half_up, BoundingBox};
use crate::imaging::GrayImage;
use crate::scalar::Scalar;
use crate::svm::{sample_pair_indices, solve_margins_with_free, solve_report, LinearModel, MarginSet, SolverConfig, TrainingSet};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingImage<T> {
    pub image: GrayImage<T>,
    pub truths: Vec<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Report {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    /// Final objective per level; `None` for untrained levels.
    pub objectives: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Report {
    pub positives: usize,
    pub negatives: usize,
    pub objective: f64,
}

/// splitmix64 over the seed and two stream indices.
fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Up to `count` random response cells whose windows overlap every truth
/// by less than `eta`.
fn sample_negative_cells(
    rng: &mut ChaCha8Rng,
    geom: &LevelGeometry,
    grid: (usize, usize),
    img_size: (usize, usize),
    truths: &[BoundingBox],
    eta: f64,
    count: usize,
) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count * 50 {
        if out.len() == count {
            break;
        }
        let (row, col) = (rng.gen_range(0..grid.1), rng.gen_range(0..grid.0));
        let b = geom.cell_to_box(row, col, img_size.0, img_size.1);
        if max_overlap(&b, truths) < eta {
            out.push((row, col));
        }
    }
    out
}

struct LevelResult<T> {
    filter: LinearModel<T>,
    trained: bool,
    negatives: usize,
    objective: Option<f64>,
}

fn train_level<T: Scalar>(
    k: usize,
    positives: &[(usize, BoundingBox)],
    images: &[TrainingImage<T>],
    cfg: &CascadeConfig,
) -> Result<LevelResult<T>> {
    let dim = cfg.feature_len();
    let untrained = |negatives| LevelResult {
        filter: LinearModel::zeros(dim),
        trained: false,
        negatives,
        objective: None,
    };
    if positives.is_empty() {
        return Ok(untrained(0));
    }
    let (fw, fh) = (cfg.feature_w, cfg.feature_h);
    let level = &cfg.scheme.levels()[k];
    let mut set = TrainingSet::new();
    for (n, ti) in images.iter().enumerate() {
        let size = (ti.image.width(), ti.image.height());
        let Some(geom) = level_geometry(k, level, size.0, size.1, fw, fh) else {
            continue;
        };
        let grad = level_gradient(&ti.image, &geom)?;
        let grid = (grad.width() - fw + 1, grad.height() - fh + 1);
        for (_, b) in positives.iter().filter(|(m, _)| *m == n) {
            let (row, col) = geom.box_to_cell(b);
            let row = (round_half_up(row) as usize).min(grid.1 - 1);
            let col = (round_half_up(col) as usize).min(grid.0 - 1);
            set.push_positive(grad.window(col, row, fw, fh), n);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.solver1.seed, k as u64, n as u64));
        let cells = sample_negative_cells(&mut rng, &geom, grid, size, &ti.truths, cfg.eta, cfg.negatives_per_image);
        for (row, col) in cells {
            set.push_negative(grad.window(col, row, fw, fh), n);
        }
    }
    let negatives = set.negatives.len();
    let solver = SolverConfig {
        seed: mix_seed(cfg.solver1.seed, k as u64, u64::MAX),
        ..cfg.solver1.clone()
    };
    match solve_report(&set, &solver) {
        Ok(r) => Ok(LevelResult {
            filter: r.model,
            trained: true,
            negatives,
            objective: Some(r.objective),
        }),
        Err(Error::EmptyClass(_)) => Ok(untrained(negatives)),
        Err(e) => Err(e),
    }
}

/// Fits one filter per level. Positives are the concentric quantized boxes
/// of the ground truth assigned to that level; negatives are random
/// level-sized windows below the overlap threshold. Levels without
/// positives keep a zero filter.
pub fn train_stage1<T: Scalar>(
    images: &[TrainingImage<T>],
    cfg: &CascadeConfig,
) -> Result<(Stage1Model<T>, Stage1Report)> {
    cfg.validate()?;
    let k_levels = cfg.levels();
    let mut positives: Vec<Vec<(usize, BoundingBox)>> = vec![Vec::new(); k_levels];
    for (n, ti) in images.iter().enumerate() {
        let (iw, ih) = (ti.image.width(), ti.image.height());
        for g in &ti.truths {
            if !g.fits_within(iw, ih) {
                return Err(Error::OutOfBounds {
                    x: g.x,
                    y: g.y,
                    w: g.w,
                    h: g.h,
                    width: iw,
                    height: ih,
                });
            }
            let q = cfg.scheme.quantize(g)?;
            if let Some(b) = place_concentric(g, q.level.width, q.level.height, iw, ih) {
                positives[q.level_id].push((n, b));
            }
        }
    }
    if positives.iter().all(Vec::is_empty) {
        return Err(Error::NoPositives(format!(
            "{} training images carry no usable ground truth",
            images.len()
        )));
    }
    let results: Vec<LevelResult<T>> = positives
        .par_iter()
        .enumerate()
        .map(|(k, pos)| train_level(k, pos, images, cfg))
        .collect::<Result<_>>()?;

    let report = Stage1Report {
        positives: positives.iter().map(Vec::len).collect(),
        negatives: results.iter().map(|r| r.negatives).collect(),
        objectives: results.iter().map(|r| r.objective).collect(),
    };
    let model = Stage1Model {
        trained: results.iter().map(|r| r.trained).collect(),
        filters: results.into_iter().map(|r| r.filter).collect(),
    };
    Ok((model, report))
}

/// Sparse Stage-II row: level `k` owns columns `k (R+1) .. (k+1)(R+1)`,
/// holding `[v; 1]`.
fn block_row<T: Scalar>(level: usize, v: &[T], sign: T) -> Vec<(usize, T)> {
    let base = level * (v.len() + 1);
    v.iter()
        .enumerate()
        .map(|(r, &x)| (base + r, sign * x))
        .chain(std::iter::once((base + v.len(), sign)))
        .collect()
}

fn difference_row<T: Scalar>(a: Vec<(usize, T)>, b: Vec<(usize, T)>) -> Vec<(usize, T)> {
    let mut entries: Vec<(usize, T)> = a.into_iter().chain(b.into_iter().map(|(j, v)| (j, -v))).collect();
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, T)> = Vec::with_capacity(entries.len());
    for (j, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out
}

struct Labelled<T> {
    group: usize,
    level: usize,
    features: Vec<T>,
}

/// Fits the per-level calibration `(z_k, e_k)` as one linear model over
/// block features of dimension `K (R+1)`, on Stage-I candidates labelled
/// correct when they overlap a truth by at least `eta`.
pub fn train_stage2<T: Scalar>(
    images: &[TrainingImage<T>],
    stage1: &Stage1Model<T>,
    cfg: &CascadeConfig,
) -> Result<(Stage2Model<T>, Stage2Report)> {
    cfg.validate()?;
    stage1.check(cfg)?;
    let per_image: Vec<Vec<(bool, Labelled<T>)>> = images
        .par_iter()
        .enumerate()
        .map(|(n, ti)| match stage1_infer(&ti.image, stage1, cfg) {
            Ok(cands) => Ok(cands
                .into_iter()
                .map(|c| {
                    let correct = max_overlap(&c.proposal.bbox, &ti.truths) >= cfg.eta;
                    let row = Labelled {
                        group: n,
                        level: c.proposal.level_id,
                        features: c.features,
                    };
                    (correct, row)
                })
                .collect()),
            Err(Error::NoFittingLevel { .. }) => Ok(Vec::new()),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;

    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (correct, row) in per_image.into_iter().flatten() {
        if correct {
            pos.push(row);
        } else {
            neg.push(row);
        }
    }
    if pos.is_empty() {
        return Err(Error::NoPositiveCandidates);
    }

    let r = cfg.channels;
    let dim = cfg.levels() * (r + 1);
    let mut margins = MarginSet::new(dim);
    if cfg.solver2.ranking {
        let pg: Vec<usize> = pos.iter().map(|p| p.group).collect();
        let ng: Vec<usize> = neg.iter().map(|p| p.group).collect();
        for (i, j) in sample_pair_indices(&pg, &ng, cfg.solver2.max_pairs, cfg.solver2.seed)? {
            let a = block_row(pos[i].level, &pos[i].features, T::one());
            let b = block_row(neg[j].level, &neg[j].features, T::one());
            margins.push_sparse(difference_row(a, b))?;
        }
    } else {
        for p in &pos {
            margins.push_sparse(block_row(p.level, &p.features, T::one()))?;
        }
        for q in &neg {
            margins.push_sparse(block_row(q.level, &q.features, -T::one()))?;
        }
    }
    let biases: Vec<usize> = (0..cfg.levels()).map(|k| k * (r + 1) + r).collect();
    let solved = solve_margins_with_free(&margins, &cfg.solver2, &biases)?;
    let w = solved.model.weights();
    let model = Stage2Model {
        z: (0..cfg.levels()).map(|k| w[k * (r + 1)..k * (r + 1) + r].to_vec()).collect(),
        e: (0..cfg.levels()).map(|k| w[k * (r + 1) + r]).collect(),
    };
    Ok((
        model,
        Stage2Report {
            positives: pos.len(),
            negatives: neg.len(),
            objective: solved.objective,
        },
    ))
}
