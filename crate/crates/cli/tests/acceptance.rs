//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N [PASS|FAIL]` line with the measured values. Tests hold a
//! shared lock so the timed criteria never compete for cores.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use objprop::cascade::{nms_local_maxima, Cascade, CascadeConfig, Stage1Model, Stage2Model, TrainingImage};
use objprop::eval::{auc, recall_at, recall_overlap_curve, recall_proposal_curve, Annotation, Curve};
use objprop::geometry::{build_scheme, concentric_overlap, quantize_box, BoundingBox};
use objprop::imaging::{convolve_valid, convolve_valid_naive, save_pgm, GrayImage, Plane};
use objprop::svm::{margin_vectors, objective, solve, LinearModel, MarginSet, Norm, SolverConfig, TrainingSet, Variant};
use objprop::synthetic::{generate_corpus, SceneConfig};
use objprop_cli::manifest::{DatasetManifest, ManifestBox, ManifestEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const ETAS: [f64; 3] = [0.5, 2.0 / 3.0, 0.75];

/// Coverage: random boxes per scheme and the time budget for all of them.
const COVERAGE_BOXES: usize = 100_000;
const COVERAGE_BUDGET: Duration = Duration::from_secs(2);
/// Random boxes checked against the per-index overlap bound.
const BOUND_BOXES: usize = 10_000;
/// Solver objective may exceed the grid optimum by this factor.
const ORACLE_RATIO: f64 = 1.0001;
const ANALYTIC_WEIGHT_TOL: f64 = 1e-3;
const CONVOLUTION_CASES: usize = 100;
const CONVOLUTION_REL_TOL: f64 = 1e-9;
const NMS_MAPS: usize = 100;
const E2E_IMAGES: usize = 200;
const E2E_TRAIN: usize = 160;
const E2E_SEED: u64 = 2024;
const E2E_RECALL_AT_10: f64 = 0.90;
const E2E_RECALL_AT_100: f64 = 0.99;
const E2E_BUDGET: Duration = Duration::from_secs(120);
const AUC_TOL: f64 = 0.01;
const SPEED_RATIO: (f64, f64) = (1.5, 4.0);

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: usize, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2} [{verdict}] {name}: {detail}");
    assert!(pass, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_01_quantization_coverage() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = 0usize;
    let mut worst = f64::INFINITY;
    let mut elapsed = Duration::ZERO;
    for eta in ETAS {
        let scheme = build_scheme(eta, 10.0, 10.0, 500.0, 500.0).unwrap();
        let boxes: Vec<BoundingBox> = (0..COVERAGE_BOXES)
            .map(|_| BoundingBox {
                x: 0,
                y: 0,
                w: rng.gen_range(10..=500),
                h: rng.gen_range(10..=500),
            })
            .collect();
        let start = Instant::now();
        for b in &boxes {
            match quantize_box(b, &scheme) {
                Ok(q) => {
                    let o = concentric_overlap(b.w as f64, b.h as f64, q.level.width, q.level.height);
                    worst = worst.min(o - eta);
                    if o < eta {
                        failures += 1;
                    }
                }
                Err(_) => failures += 1,
            }
        }
        elapsed += start.elapsed();
    }
    report(
        1,
        "quantization coverage",
        failures == 0 && elapsed < COVERAGE_BUDGET,
        format!(
            "{failures} failures over 3x{COVERAGE_BOXES} boxes, min overlap margin {worst:.4}, {:.3}s (< {}s)",
            elapsed.as_secs_f64(),
            COVERAGE_BUDGET.as_secs()
        ),
    );
}

#[test]
fn criterion_02_scheme_cardinality() {
    let _guard = serial();
    let ks: Vec<usize> = ETAS
        .iter()
        .map(|&eta| build_scheme(eta, 10.0, 10.0, 500.0, 500.0).unwrap().len())
        .collect();
    report(
        2,
        "scheme cardinality",
        ks == [49, 121, 225],
        format!("K = {ks:?} for eta 0.5, 2/3, 0.75 (expected [49, 121, 225])"),
    );
}

#[test]
fn criterion_03_overlap_lower_bound() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0usize;
    for eta in ETAS {
        let scheme = build_scheme(eta, 10.0, 10.0, 500.0, 500.0).unwrap();
        for _ in 0..BOUND_BOXES {
            let b = BoundingBox {
                x: 0,
                y: 0,
                w: rng.gen_range(10..=500),
                h: rng.gen_range(10..=500),
            };
            let q = quantize_box(&b, &scheme).unwrap();
            let bound = eta.powf(q.index_error.0.abs() + q.index_error.1.abs());
            if q.overlap < bound - 1e-12 {
                violations += 1;
            }
        }
    }
    report(
        3,
        "overlap lower bound",
        violations == 0,
        format!("{violations} violations over 3x{BOUND_BOXES} boxes"),
    );
}

fn grid_optimum(margins: &MarginSet<f64>, cfg: &SolverConfig) -> f64 {
    let steps = 10_001usize;
    let at = |i: usize| -5.0 + i as f64 * 1e-3;
    let rows: Vec<Vec<f64>> = (0..margins.len()).map(|i| margins.dense_row(i)).collect();
    let eval = |w: &[f64]| {
        let reg: f64 = match cfg.norm {
            Norm::L1 => w.iter().map(|v| v.abs()).sum(),
            Norm::L2 => 0.5 * w.iter().map(|v| v * v).sum::<f64>(),
        };
        let hinge: f64 = rows
            .iter()
            .map(|d| (1.0 - d.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).max(0.0))
            .sum();
        reg + cfg.c * hinge
    };
    match margins.dim() {
        1 => (0..steps).map(|i| eval(&[at(i)])).fold(f64::INFINITY, f64::min),
        2 => (0..steps)
            .into_par_iter()
            .map(|i| (0..steps).map(|j| eval(&[at(i), at(j)])).fold(f64::INFINITY, f64::min))
            .reduce(|| f64::INFINITY, f64::min),
        d => panic!("grid oracle covers 1 or 2 dimensions, got {d}"),
    }
}

fn oracle_config(variant: Variant, seed: u64) -> SolverConfig {
    SolverConfig {
        max_pairs: 3,
        epochs: 20_000,
        tolerance: 0.0,
        seed,
        ..SolverConfig::for_variant(variant)
    }
}

#[test]
fn criterion_04_solver_optimality() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let variant = Variant::ALL[k % 4];
        let dim = rng.gen_range(1..=2);
        let n = rng.gen_range(2..=3);
        let npos = rng.gen_range(1..n);
        let mut set = TrainingSet::new();
        for i in 0..n {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let group = if variant.ranking { 0 } else { i };
            if i < npos {
                set.push_positive(x, group);
            } else {
                set.push_negative(x, group);
            }
        }
        let cfg = oracle_config(variant, k as u64);
        let margins = margin_vectors(&set, &cfg).unwrap();
        let got = objective(&solve(&set, &cfg).unwrap(), &margins, &cfg).unwrap();
        worst = worst.max(got / grid_optimum(&margins, &cfg));
    }

    let l2 = |ranking| oracle_config(Variant { norm: Norm::L2, ranking }, 0);
    let mut pair = TrainingSet::<f64>::new();
    pair.push_positive(vec![1.0], 0);
    pair.push_negative(vec![0.0], 0);
    let w_rank = solve(&pair, &l2(true)).unwrap().weights()[0];
    let mut signed = TrainingSet::<f64>::new();
    signed.push_positive(vec![1.0], 0);
    signed.push_negative(vec![-1.0], 1);
    let w_dummy = solve(&signed, &l2(false)).unwrap().weights()[0];
    let analytic = (w_rank - 1.0).abs() <= ANALYTIC_WEIGHT_TOL && (w_dummy - 1.0).abs() <= ANALYTIC_WEIGHT_TOL;

    report(
        4,
        "solver optimality",
        worst <= ORACLE_RATIO && analytic,
        format!("worst objective / grid optimum {worst:.7} over 20 instances (<= {ORACLE_RATIO}); analytic w* = {w_rank:.6}, {w_dummy:.6} (target 1)"),
    );
}

#[test]
fn criterion_05_l1_sparsity() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut set = TrainingSet::new();
    for i in 0..60 {
        let positive = i % 2 == 0;
        let signal = rng.gen_range(1.0..2.0) * if positive { 1.0 } else { -1.0 };
        let mut x = vec![signal];
        x.extend((0..8).map(|_| rng.gen_range(-0.5..0.5)));
        if positive {
            set.push_positive(x, 0);
        } else {
            set.push_negative(x, 0);
        }
    }
    let fit = |norm| solve(&set, &SolverConfig::for_variant(Variant { norm, ranking: false })).unwrap();
    let (l1, l2) = (fit(Norm::L1), fit(Norm::L2));
    let l1_noise = l1.weights()[1..].iter().filter(|&&w| w != 0.0).count();
    let l2_noise = l2.weights()[1..].iter().filter(|&&w| w != 0.0).count();
    report(
        5,
        "l1 sparsity",
        l1.weights()[0] > 0.0 && l1_noise == 0 && l2_noise >= 1,
        format!("nonzero noise weights: l1 {l1_noise}/8, l2 {l2_noise}/8; l1 signal weight {:.4}", l1.weights()[0]),
    );
}

#[test]
fn criterion_06_convolution_oracle() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..CONVOLUTION_CASES {
        let (mw, mh) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
        let (kw, kh) = (rng.gen_range(1..=mw.min(16)), rng.gen_range(1..=mh.min(16)));
        let map = Plane::from_fn(mw, mh, |_, _| rng.gen_range(-1.0f64..1.0));
        let kernel = Plane::from_fn(kw, kh, |_, _| rng.gen_range(-1.0f64..1.0));
        let fast = convolve_valid(&map, &kernel).unwrap();
        let slow = convolve_valid_naive(&map, &kernel).unwrap();
        assert_eq!((fast.width(), fast.height()), (slow.width(), slow.height()));
        for (a, b) in fast.data().iter().zip(slow.data()) {
            worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
    }
    report(
        6,
        "convolution oracle",
        worst <= CONVOLUTION_REL_TOL,
        format!("max relative error {worst:.2e} over {CONVOLUTION_CASES} cases (<= {CONVOLUTION_REL_TOL:.0e})"),
    );
}

#[test]
fn criterion_07_nms_properties() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad_separation = 0usize;
    let mut bad_order = 0usize;
    let mut unstable = 0usize;
    for _ in 0..NMS_MAPS {
        let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let levels = rng.gen_range(1..8);
        let scores = Plane::from_fn(w, h, |_, _| rng.gen_range(0..levels) as f64);
        let (nw, nh) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let budget = rng.gen_range(1..60);
        let peaks = nms_local_maxima(&scores, nw, nh, budget);
        for (i, p) in peaks.iter().enumerate() {
            for q in &peaks[i + 1..] {
                if p.row.abs_diff(q.row) <= nh / 2 && p.col.abs_diff(q.col) <= nw / 2 {
                    bad_separation += 1;
                }
                if !(p.score > q.score || (p.score == q.score && (p.row, p.col) < (q.row, q.col))) {
                    bad_order += 1;
                }
            }
        }
        if nms_local_maxima(&scores, nw, nh, budget) != peaks {
            unstable += 1;
        }
    }
    let constant = nms_local_maxima(&Plane::filled(30, 20, 0.25f64), 3, 3, 50).len();
    report(
        7,
        "nms properties",
        bad_separation == 0 && bad_order == 0 && unstable == 0 && constant == 1,
        format!(
            "{NMS_MAPS} maps: {bad_separation} separation, {bad_order} order, {unstable} determinism violations; constant map peaks {constant}"
        ),
    );
}

fn annotations_of(images: &[TrainingImage<f64>]) -> Vec<Annotation> {
    images
        .iter()
        .enumerate()
        .map(|(i, ti)| Annotation {
            image_id: i.to_string(),
            truths: ti.truths.iter().map(|&b| (b, "rectangle".to_string())).collect(),
        })
        .collect()
}

#[test]
fn criterion_08_end_to_end_recall() {
    let _guard = serial();
    let start = Instant::now();
    let corpus = generate_corpus::<f64>(&SceneConfig::default(), E2E_IMAGES, E2E_SEED).unwrap();
    let (train, test) = corpus.split_at(E2E_TRAIN);
    let scheme = build_scheme(0.5, 10.0, 10.0, 500.0, 500.0).unwrap();
    let config = CascadeConfig { eta: 0.5, ..CascadeConfig::new(scheme) };
    let (cascade, _, _) = Cascade::train(train, config).unwrap();
    let proposals: Vec<Vec<BoundingBox>> = test.iter().map(|ti| cascade.propose(&ti.image).unwrap().boxes()).collect();
    let anns = annotations_of(test);
    let r10 = recall_at(&proposals, &anns, 0.5, 10).unwrap();
    let r100 = recall_at(&proposals, &anns, 0.5, 100).unwrap();
    let elapsed = start.elapsed();
    report(
        8,
        "end-to-end synthetic recall",
        r10 >= E2E_RECALL_AT_10 && r100 >= E2E_RECALL_AT_100 && elapsed < E2E_BUDGET,
        format!(
            "recall@10 {r10:.3} (>= {E2E_RECALL_AT_10}), recall@100 {r100:.3} (>= {E2E_RECALL_AT_100}), {:.1}s (< {}s), K = {}",
            elapsed.as_secs_f64(),
            E2E_BUDGET.as_secs(),
            cascade.config.levels()
        ),
    );
}

#[test]
fn criterion_09_evaluation_monotonicity() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let random_box = |rng: &mut ChaCha8Rng| BoundingBox {
        x: rng.gen_range(0..80),
        y: rng.gen_range(0..80),
        w: rng.gen_range(1..48),
        h: rng.gen_range(1..48),
    };
    let mut checked = 0usize;
    let mut violations = 0usize;
    for _ in 0..100 {
        let images = rng.gen_range(1..6);
        let proposals: Vec<Vec<BoundingBox>> = (0..images)
            .map(|_| (0..rng.gen_range(0..60)).map(|_| random_box(&mut rng)).collect())
            .collect();
        let anns: Vec<Annotation> = (0..images)
            .map(|i| Annotation {
                image_id: i.to_string(),
                truths: (0..rng.gen_range(0..4)).map(|_| (random_box(&mut rng), "c".to_string())).collect(),
            })
            .collect();
        for budget in [1, 10, 100] {
            if !recall_overlap_curve(&proposals, &anns, budget).unwrap().is_non_increasing() {
                violations += 1;
            }
        }
        for eta in [0.3, 0.5, 0.7] {
            if !recall_proposal_curve(&proposals, &anns, eta).unwrap().is_non_decreasing() {
                violations += 1;
            }
        }
        checked += 6;
    }
    let xs: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let line = Curve::new(xs.clone(), xs.iter().map(|x| 1.0 - x).collect()).unwrap();
    let area = auc(&line).unwrap();
    report(
        9,
        "evaluation monotonicity",
        violations == 0 && (area - 0.5).abs() <= AUC_TOL,
        format!("{violations} monotonicity violations over {checked} curves; AUC(y = 1 - x) = {area:.6}"),
    );
}

fn objprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_objprop"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Writes images as PGM files plus a manifest next to them.
fn write_dataset(dir: &Path, images: &[TrainingImage<f64>]) -> PathBuf {
    let mut entries = Vec::new();
    for (i, ti) in images.iter().enumerate() {
        let name = format!("img{i:03}.pgm");
        save_pgm(&ti.image, dir.join(&name)).unwrap();
        entries.push(ManifestEntry {
            image: name,
            boxes: ti
                .truths
                .iter()
                .map(|b| ManifestBox {
                    x: b.x,
                    y: b.y,
                    w: b.w,
                    h: b.h,
                    class: "rectangle".into(),
                })
                .collect(),
        });
    }
    let manifest = DatasetManifest { root: dir.to_path_buf(), entries };
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, manifest.to_jsonl()).unwrap();
    path
}

#[test]
fn criterion_10_cli_determinism() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let scene = SceneConfig {
        width: 64,
        height: 64,
        min_side: 16,
        max_side: 48,
        ..SceneConfig::default()
    };
    let images = generate_corpus::<f64>(&scene, 12, 10).unwrap();
    let manifest = write_dataset(dir.path(), &images);
    let model = |name: &str| dir.path().join(name).display().to_string();
    let manifest = manifest.display().to_string();
    let train = |out: &str| {
        objprop(&[
            "train", "--manifest", &manifest, "--eta", "0.5", "--min-size", "16", "--max-size", "64", "--seed", "17",
            "--out", out,
        ])
    };
    let (a, b) = (model("a.json"), model("b.json"));
    let runs = [train(&a), train(&b)];
    let trained = runs.iter().all(|o| o.status.success());
    let same_model = trained && std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();

    let image = dir.path().join("img000.pgm").display().to_string();
    let propose = || objprop(&["propose", "--model", &a, "--image", &image, "--d2", "25"]);
    let (p, q) = (propose(), propose());
    let same_listing = p.status.success() && q.status.success() && !p.stdout.is_empty() && p.stdout == q.stdout;
    report(
        10,
        "cli determinism",
        same_model && same_listing,
        format!("train exit codes {:?}, identical models {same_model}, identical proposal listings {same_listing}", runs.iter().map(|o| o.status.code()).collect::<Vec<_>>()),
    );
}

fn random_cascade(eta: f64, rng: &mut ChaCha8Rng) -> Cascade<f64> {
    let scheme = build_scheme(eta, 10.0, 10.0, 500.0, 500.0).unwrap();
    let k = scheme.len();
    let stage1 = Stage1Model {
        filters: (0..k)
            .map(|_| LinearModel::new((0..256).map(|_| rng.gen_range(-1.0..1.0)).collect(), 0.0))
            .collect(),
        trained: vec![true; k],
    };
    Cascade::new(CascadeConfig::new(scheme), stage1, Stage2Model::identity(k, 1)).unwrap()
}

fn median_propose_seconds(cascade: &Cascade<f64>, image: &GrayImage<f64>) -> f64 {
    let mut times: Vec<f64> = (0..5)
        .map(|_| {
            let start = Instant::now();
            cascade.propose(image).unwrap();
            start.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[2]
}

#[test]
fn criterion_11_throughput_scaling() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let image = GrayImage::new(320, 240, (0..320 * 240).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let coarse = random_cascade(0.5, &mut rng);
    let fine = random_cascade(2.0 / 3.0, &mut rng);
    let t49 = median_propose_seconds(&coarse, &image);
    let t121 = median_propose_seconds(&fine, &image);
    let ratio = t121 / t49;
    report(
        11,
        "throughput scaling",
        (SPEED_RATIO.0..=SPEED_RATIO.1).contains(&ratio),
        format!(
            "K=49 {:.1} ms, K=121 {:.1} ms, ratio {ratio:.2} (in [{}, {}])",
            t49 * 1e3,
            t121 * 1e3,
            SPEED_RATIO.0,
            SPEED_RATIO.1
        ),
    );
}
