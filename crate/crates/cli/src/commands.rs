//! Argument definitions and the four subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use objprop::cascade::{Cascade, CascadeConfig, TrainingImage};
use objprop::eval::{
    auc, per_class_breakdown, recall_at, recall_overlap_curve, recall_proposal_curve, timing_report, BreakdownMode,
    Spread,
};
use objprop::geometry::{build_scheme, search_space_estimate, BoundingBox};
use objprop::imaging::load_pgm;
use objprop::svm::{SolverConfig, Variant};
use objprop::{CascadeF64, ProposalSetF64};
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::DatasetManifest;
use crate::model::ModelFile;

#[derive(Debug, Parser)]
#[command(name = "objprop", version, about = "Ranked object proposals from a cascade of linear SVMs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the quantization levels for a size range.
    BuildScheme(BuildSchemeArgs),
    /// Train both cascade stages from an annotated manifest.
    Train(TrainArgs),
    /// Rank proposals for one image.
    Propose(ProposeArgs),
    /// Measure recall of a model (or of precomputed proposals) on a manifest.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SchemeArgs {
    /// Quantization accuracy; consecutive levels differ by a factor 1/eta.
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub eta: f64,
    /// Smallest window side in pixels.
    #[arg(long, default_value_t = 10.0)]
    pub min_size: f64,
    /// Largest window side in pixels.
    #[arg(long, default_value_t = 500.0)]
    pub max_size: f64,
}

#[derive(Debug, Args)]
pub struct BuildSchemeArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Image width used for the search-space estimate.
    #[arg(long, default_value_t = 500)]
    pub width: u32,
    /// Image height used for the search-space estimate.
    #[arg(long, default_value_t = 375)]
    pub height: u32,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value = "l1-or")]
    pub variant_s1: Variant,
    #[arg(long, default_value = "l1-or")]
    pub variant_s2: Variant,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Upper bound on solver passes per stage.
    #[arg(long, default_value_t = SolverConfig::default().epochs)]
    pub epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ProposeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Number of proposals to emit; defaults to the model's d2.
    #[arg(long)]
    pub d2: Option<usize>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["model", "proposals"]))]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Ranked proposals in manifest format, used instead of a model.
    #[arg(long)]
    pub proposals: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Proposals per image counted by the recall-overlap curve.
    #[arg(long, default_value_t = 1000)]
    pub budget: usize,
    /// Overlap needed for a proposal to recall an object.
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    /// Add a per-class breakdown: recall-overlap or recall-proposal.
    #[arg(long)]
    pub per_class: Option<BreakdownMode>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Runs a parsed command, writing its report to `out`.
pub fn run(cli: Cli, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let threads = match &cli.command {
        Command::BuildScheme(_) => None,
        Command::Train(a) => a.threads,
        Command::Propose(a) => a.threads,
        Command::Evaluate(a) => a.threads,
    };
    let dispatch = |out: &mut (dyn Write + Send)| match cli.command {
        Command::BuildScheme(a) => build_scheme_cmd(&a, out),
        Command::Train(a) => train_cmd(&a, out),
        Command::Propose(a) => propose_cmd(&a, out),
        Command::Evaluate(a) => evaluate_cmd(&a, out),
    };
    match threads {
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(CliError::usage)?
            .install(|| dispatch(out)),
        None => dispatch(out),
    }
}

fn emit(out: &mut dyn Write, text: impl AsRef<str>) -> std::io::Result<()> {
    out.write_all(text.as_ref().as_bytes())
}

fn scheme_from(a: &SchemeArgs) -> Result<objprop::geometry::QuantizationScheme, CliError> {
    if !(a.min_size > 0.0 && a.min_size <= a.max_size) {
        return Err(CliError::Usage(format!(
            "need 0 < --min-size <= --max-size, got {} and {}",
            a.min_size, a.max_size
        )));
    }
    build_scheme(a.eta, a.min_size, a.min_size, a.max_size, a.max_size).map_err(CliError::usage)
}

fn build_scheme_cmd(a: &BuildSchemeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let scheme = scheme_from(&a.scheme)?;
    let mut text = format!("K = {}\n", scheme.len());
    text.push_str("level  a  b      width     height\n");
    for (k, l) in scheme.levels().iter().enumerate() {
        text.push_str(&format!("{k:>5} {:>2} {:>2} {:>10.2} {:>10.2}\n", l.a, l.b, l.width, l.height));
    }
    text.push_str(&format!(
        "search space for a {}x{} image: {} windows\n",
        a.width,
        a.height,
        search_space_estimate(&scheme, a.width, a.height)
    ));
    emit(out, text).map_err(CliError::usage)
}

fn train_cmd(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let scheme = scheme_from(&a.scheme)?;
    if a.epochs == 0 {
        return Err(CliError::usage("--epochs must be at least 1"));
    }
    let solver = |variant: Variant| SolverConfig {
        seed: a.seed,
        epochs: a.epochs,
        ..SolverConfig::for_variant(variant)
    };
    let config = CascadeConfig {
        solver1: solver(a.variant_s1),
        solver2: solver(a.variant_s2),
        ..CascadeConfig::new(scheme)
    };

    let manifest = DatasetManifest::load(&a.manifest).map_err(CliError::training)?;
    let images = manifest
        .entries
        .iter()
        .map(|e| {
            Ok(TrainingImage {
                image: manifest.load_image(e)?,
                truths: e.boxes.iter().map(|b| b.bbox()).collect(),
            })
        })
        .collect::<Result<Vec<_>, crate::error::FileError>>()
        .map_err(CliError::training)?;

    let (cascade, r1, r2) = Cascade::train(&images, config).map_err(CliError::training)?;
    ModelFile::from_cascade(&cascade, a.seed)
        .save(&a.out)
        .map_err(CliError::training)?;

    let mut text = format!(
        "trained {} levels on {} images ({} boxes), variants {} + {}\n",
        cascade.config.levels(),
        images.len(),
        manifest.box_count(),
        a.variant_s1,
        a.variant_s2
    );
    text.push_str("level  a  b  positives  negatives   objective\n");
    for (k, l) in cascade.config.scheme.levels().iter().enumerate() {
        let objective = r1.objectives[k].map_or_else(|| "-".to_string(), |o| format!("{o:.6}"));
        text.push_str(&format!(
            "{k:>5} {:>2} {:>2} {:>10} {:>10} {objective:>11}\n",
            l.a, l.b, r1.positives[k], r1.negatives[k]
        ));
    }
    text.push_str(&format!(
        "stage II: {} correct and {} incorrect candidates, objective {:.6}\n",
        r2.positives, r2.negatives, r2.objective
    ));
    text.push_str(&format!("model written to {}\n", a.out.display()));
    emit(out, text).map_err(CliError::training)
}

#[derive(Serialize)]
struct ProposalRow {
    rank: usize,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    level: usize,
    score: f64,
}

#[derive(Serialize)]
struct ProposalListing<'a> {
    image: &'a str,
    proposals: Vec<ProposalRow>,
}

fn rows(set: &ProposalSetF64) -> Vec<ProposalRow> {
    set.proposals
        .iter()
        .enumerate()
        .map(|(i, p)| ProposalRow {
            rank: i + 1,
            x: p.bbox.x,
            y: p.bbox.y,
            w: p.bbox.w,
            h: p.bbox.h,
            level: p.level_id,
            score: p.stage2_score,
        })
        .collect()
}

pub fn proposals_csv(set: &ProposalSetF64) -> String {
    let mut text = String::from("rank,x,y,w,h,level,score\n");
    for r in rows(set) {
        text.push_str(&format!("{},{},{},{},{},{},{}\n", r.rank, r.x, r.y, r.w, r.h, r.level, r.score));
    }
    text
}

pub fn proposals_json(set: &ProposalSetF64, image: &Path) -> String {
    let listing = ProposalListing {
        image: &image.display().to_string(),
        proposals: rows(set),
    };
    serde_json::to_string_pretty(&listing).expect("listing serializes") + "\n"
}

fn load_cascade(path: &Path) -> Result<CascadeF64, crate::error::FileError> {
    ModelFile::load(path)?.to_cascade()
}

fn propose_cmd(a: &ProposeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cascade = load_cascade(&a.model).map_err(CliError::inference)?;
    if let Some(d2) = a.d2 {
        if d2 == 0 {
            return Err(CliError::usage("--d2 must be at least 1"));
        }
        cascade.config.d2 = d2;
    }
    let image = load_pgm::<f64>(&a.image)
        .map_err(|e| CliError::Inference(format!("{}: {e}", a.image.display())))?;
    let set = cascade.propose(&image).map_err(CliError::inference)?;
    let text = match a.format {
        OutputFormat::Csv => proposals_csv(&set),
        OutputFormat::Json => proposals_json(&set, &a.image),
    };
    emit(out, text).map_err(CliError::inference)
}

#[derive(Debug, Serialize)]
struct ClassSummary {
    mode: BreakdownMode,
    scores: BTreeMap<String, f64>,
    spread: Option<Spread>,
}

#[derive(Debug, Serialize)]
struct Summary {
    images: usize,
    objects: usize,
    budget: usize,
    eta: f64,
    /// Recall at `eta` with `budget` proposals per image.
    recall_at_eta: f64,
    /// Area under the recall-overlap curve at `budget`.
    auc: f64,
    per_class: Option<ClassSummary>,
    timing: Option<Spread>,
}

/// Ranked boxes per manifest entry, plus per-image seconds when a model
/// produced them.
fn gather_proposals(a: &EvaluateArgs, manifest: &DatasetManifest) -> Result<(Vec<Vec<BoundingBox>>, Vec<f64>), CliError> {
    if let Some(path) = &a.model {
        let mut cascade = load_cascade(path).map_err(CliError::evaluation)?;
        cascade.config.d2 = cascade.config.d2.max(a.budget);
        let mut boxes = Vec::with_capacity(manifest.entries.len());
        let mut seconds = Vec::with_capacity(manifest.entries.len());
        for entry in &manifest.entries {
            let start = Instant::now();
            let image = manifest.load_image(entry).map_err(CliError::evaluation)?;
            let set = cascade
                .propose(&image)
                .map_err(|e| CliError::Evaluation(format!("{}: {e}", manifest.resolve(entry).display())))?;
            seconds.push(start.elapsed().as_secs_f64());
            boxes.push(set.boxes());
        }
        return Ok((boxes, seconds));
    }
    let path = a.proposals.as_ref().expect("clap requires a proposal source");
    let listed = DatasetManifest::load(path).map_err(CliError::evaluation)?;
    let by_image: BTreeMap<&str, Vec<BoundingBox>> = listed
        .entries
        .iter()
        .map(|e| (e.image.as_str(), e.boxes.iter().map(|b| b.bbox()).collect()))
        .collect();
    let boxes = manifest
        .entries
        .iter()
        .map(|e| by_image.get(e.image.as_str()).cloned().unwrap_or_default())
        .collect();
    Ok((boxes, Vec::new()))
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::Evaluation(format!("{}: {e}", path.display())))
}

fn evaluate_cmd(a: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.budget == 0 {
        return Err(CliError::usage("--budget must be at least 1"));
    }
    if !(a.eta > 0.0 && a.eta <= 1.0) {
        return Err(CliError::Usage(format!("--eta must lie in (0,1], got {}", a.eta)));
    }
    let manifest = DatasetManifest::load(&a.manifest).map_err(CliError::evaluation)?;
    let annotations = manifest.annotations();
    let (proposals, seconds) = gather_proposals(a, &manifest)?;

    let overlap_curve = recall_overlap_curve(&proposals, &annotations, a.budget).map_err(CliError::evaluation)?;
    let proposal_curve = recall_proposal_curve(&proposals, &annotations, a.eta).map_err(CliError::evaluation)?;
    let area = auc(&overlap_curve).map_err(CliError::evaluation)?;
    let recall = recall_at(&proposals, &annotations, a.eta, a.budget).map_err(CliError::evaluation)?;
    let per_class = a
        .per_class
        .map(|mode| per_class_breakdown(&proposals, &annotations, mode, a.eta, a.budget))
        .transpose()
        .map_err(CliError::evaluation)?
        .map(|b| ClassSummary {
            mode: b.mode,
            scores: b.scores,
            spread: b.spread,
        });
    let timing = match seconds.len() {
        0 => None,
        1 => Spread::of(&seconds),
        _ => Some(timing_report(&seconds).map_err(CliError::evaluation)?),
    };
    let summary = Summary {
        images: manifest.entries.len(),
        objects: manifest.box_count(),
        budget: a.budget,
        eta: a.eta,
        recall_at_eta: recall,
        auc: area,
        per_class,
        timing,
    };

    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::Evaluation(format!("{}: {e}", a.out_dir.display())))?;
    write_file(&a.out_dir, "recall_overlap.csv", &overlap_curve.to_csv())?;
    write_file(&a.out_dir, "recall_proposal.csv", &proposal_curve.to_csv())?;
    let json = serde_json::to_string_pretty(&summary).map_err(CliError::evaluation)? + "\n";
    write_file(&a.out_dir, "summary.json", &json)?;
    if !seconds.is_empty() {
        let mut timing_csv = String::from("image,seconds\n");
        for (entry, s) in manifest.entries.iter().zip(&seconds) {
            timing_csv.push_str(&format!("{},{s}\n", entry.image));
        }
        write_file(&a.out_dir, "timing.csv", &timing_csv)?;
    }

    let mut text = format!(
        "recall at overlap {} with {} proposals: {:.4}\nrecall-overlap AUC: {:.4}\n",
        a.eta, a.budget, recall, area
    );
    if let Some(t) = &summary.timing {
        text.push_str(&format!("seconds per image: {t}\n"));
    }
    if let Some(pc) = &summary.per_class {
        for (class, score) in &pc.scores {
            text.push_str(&format!("{class}: {score:.4}\n"));
        }
    }
    emit(out, text).map_err(CliError::evaluation)
}
