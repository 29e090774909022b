//! One function per subcommand. Each reads its inputs, calls into darp-core,
//! writes its outputs plus a JSON run manifest, and surfaces problems as
//! `darp_core::Error` so `main` can map them onto the exit-code contract.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use darp_core::estimator::{self, AggregatedPredictions};
use darp_core::harness::{
    balanced_accuracy, generate_biased_pseudolabels, geometric_mean_score, imbalance_ratio,
    SyntheticScenario,
};
use darp_core::io::{
    read_class_indices, read_matrix, read_vector, write_class_indices, write_matrix, write_vector,
};
use darp_core::refinery::{darp, mismatch, DarpConfig, WeightMode};
use darp_core::types::{
    ClassMarginals, ConfidenceWeights, ConfusionMatrix, ImbalanceProfile, PseudoLabelMatrix,
};
use darp_core::{Error, Result};
use serde_json::json;

use crate::report::{
    artifact_version, delta_value, to_pretty, write_json, DualSummary, EvalSummary, RefineReport,
    RunManifest,
};

/// `--delta`: a positive clipping ratio, or `inf` to disable clipping.
fn parse_delta(text: &str) -> std::result::Result<f64, String> {
    if text.eq_ignore_ascii_case("inf") || text.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    let value: f64 = text
        .parse()
        .map_err(|_| format!("`{text}` is neither a number nor `inf`"))?;
    if !value.is_finite() || value <= 0.0 {
        return Err(format!("delta must be positive, got {value}"));
    }
    Ok(value)
}

#[derive(Args)]
pub struct RefineArgs {
    /// Pseudo-label matrix CSV, one row-stochastic row per sample
    #[arg(long, value_name = "PATH")]
    pub labels: PathBuf,
    /// Target class totals CSV (single comma-separated line, or one value per line)
    #[arg(long, value_name = "PATH")]
    pub marginals: PathBuf,
    /// Where to write the refined matrix CSV
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Per-class clipping ratio; `inf` disables clipping
    #[arg(long, default_value = "2", value_parser = parse_delta)]
    pub delta: f64,
    /// Number of dual coordinate-ascent updates
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    /// Row weights: `entropy`, `uniform`, or a CSV path with one weight per sample
    #[arg(long, default_value = "entropy", value_name = "MODE|PATH")]
    pub weights: String,
    /// Column-residual tolerance, relative to total mass
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Where to write the JSON solve report (default: OUT with `.report.json`)
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Skip the first line of every input CSV
    #[arg(long)]
    pub header: bool,
}

pub fn refine(args: &RefineArgs) -> Result<()> {
    let labels = PseudoLabelMatrix::new(read_matrix(&args.labels, args.header)?)?;
    let marginals = ClassMarginals::new(read_vector(&args.marginals, args.header)?)?;
    let (weight_mode, weights_recorded, weights_input) =
        resolve_weights(&args.weights, args.header)?;
    let config = DarpConfig {
        delta: args.delta,
        iters: args.iters,
        tol: args.tol,
        weight_mode,
        ..DarpConfig::default()
    };
    let outcome = darp(&labels, &marginals, &config)?;
    if outcome.marginals_renormalized {
        eprintln!(
            "warning: marginal targets sum to {} but the matrix carries {} samples; \
             targets were rescaled to match",
            marginals.total(),
            labels.num_samples()
        );
    }
    if !outcome.report.converged {
        eprintln!(
            "warning: column residual {:.3e} still above tolerance after {} updates",
            outcome.report.col_residual, outcome.report.iterations
        );
    }
    write_matrix(&args.out, &outcome.refined.values().view())?;

    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.with_extension("report.json"));
    let trace = &outcome.report.dual_objective_trace;
    write_json(
        &report_path,
        &RefineReport {
            converged: outcome.report.converged,
            iterations: outcome.report.iterations,
            row_residual: outcome.report.row_residual,
            col_residual: outcome.report.col_residual,
            mismatch_before: outcome.mismatch_before,
            mismatch_after: outcome.mismatch_after,
            marginals_renormalized: outcome.marginals_renormalized,
            restored_rows: outcome.restored_rows.len(),
            dual_objective: DualSummary {
                first: trace[0],
                last: *trace.last().expect("trace is never empty"),
                trace: trace.clone(),
            },
        },
    )?;

    let mut inputs = path_map(&[
        ("labels", args.labels.as_path()),
        ("marginals", args.marginals.as_path()),
    ]);
    if let Some(path) = weights_input {
        inputs.insert("weights", path.display().to_string());
    }
    write_json(
        &args.out.with_extension("manifest.json"),
        &RunManifest {
            command: "refine",
            version: artifact_version(),
            inputs,
            outputs: path_map(&[("refined", args.out.as_path()), ("report", &report_path)]),
            config: json!({
                "delta": delta_value(args.delta),
                "iters": args.iters,
                "tol": args.tol,
                "weights": weights_recorded,
                "entropy_floor": config.entropy_floor,
                "newton_tol": config.newton_tol,
                "newton_max_iter": config.newton_max_iter,
                "header": args.header,
            }),
        },
    )
}

fn resolve_weights(spec: &str, header: bool) -> Result<(WeightMode, String, Option<PathBuf>)> {
    if spec.eq_ignore_ascii_case("entropy") {
        return Ok((WeightMode::Entropy, "entropy".into(), None));
    }
    if spec.eq_ignore_ascii_case("uniform") {
        return Ok((WeightMode::Uniform, "uniform".into(), None));
    }
    let path = PathBuf::from(spec);
    let weights = ConfidenceWeights::new(read_vector(&path, header)?)?;
    Ok((WeightMode::External(weights), spec.into(), Some(path)))
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Column-stochastic confusion matrix CSV
    #[arg(long, value_name = "PATH")]
    pub confusion: PathBuf,
    /// Pseudo-label matrix CSV whose column sums are the aggregated totals
    #[arg(long, value_name = "PATH")]
    pub predictions: PathBuf,
    /// Where to write the estimated class totals CSV
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Skip the first line of every input CSV
    #[arg(long)]
    pub header: bool,
}

pub fn estimate(args: &EstimateArgs) -> Result<()> {
    let confusion = ConfusionMatrix::new(read_matrix(&args.confusion, args.header)?)?;
    let predictions = PseudoLabelMatrix::new(read_matrix(&args.predictions, args.header)?)?;
    let totals = AggregatedPredictions::from_labels(&predictions)?;
    let estimate = estimator::estimate_marginals(&confusion, &totals)?;
    eprintln!("confusion condition estimate {:.3e}", estimate.condition);
    if estimate.clamped {
        eprintln!("warning: negative solution components clamped to zero, remainder rescaled");
    }
    write_vector(&args.out, estimate.marginals.mass())?;
    write_json(
        &args.out.with_extension("manifest.json"),
        &RunManifest {
            command: "estimate",
            version: artifact_version(),
            inputs: path_map(&[
                ("confusion", args.confusion.as_path()),
                ("predictions", args.predictions.as_path()),
            ]),
            outputs: path_map(&[("marginals", args.out.as_path())]),
            config: json!({ "header": args.header }),
        },
    )
}

#[derive(Args)]
pub struct BuildConfusionArgs {
    /// Pseudo-label matrix CSV over samples with known true classes
    #[arg(long, value_name = "PATH")]
    pub predictions: PathBuf,
    /// True class indices, one per line
    #[arg(long, value_name = "PATH")]
    pub truth: PathBuf,
    /// Where to write the confusion matrix CSV
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Skip the first line of every input CSV
    #[arg(long)]
    pub header: bool,
}

pub fn build_confusion(args: &BuildConfusionArgs) -> Result<()> {
    let predictions = PseudoLabelMatrix::new(read_matrix(&args.predictions, args.header)?)?;
    let truth = read_class_indices(&args.truth, args.header)?;
    let confusion = estimator::build_confusion(&predictions, &truth)?;
    write_matrix(&args.out, &confusion.values().view())?;
    write_json(
        &args.out.with_extension("manifest.json"),
        &RunManifest {
            command: "build-confusion",
            version: artifact_version(),
            inputs: path_map(&[
                ("predictions", args.predictions.as_path()),
                ("truth", args.truth.as_path()),
            ]),
            outputs: path_map(&[("confusion", args.out.as_path())]),
            config: json!({ "header": args.header }),
        },
    )
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Flat `key=value` scenario file; explicit flags override its entries
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Number of classes
    #[arg(long)]
    pub classes: Option<usize>,
    /// Head-class sample count of the labeled profile
    #[arg(long)]
    pub labeled_head: Option<u64>,
    /// Head/tail imbalance ratio of the labeled profile
    #[arg(long)]
    pub labeled_ratio: Option<f64>,
    /// Head-class sample count of the unlabeled pool
    #[arg(long)]
    pub unlabeled_head: Option<u64>,
    /// Head/tail imbalance ratio of the unlabeled pool
    #[arg(long)]
    pub unlabeled_ratio: Option<f64>,
    /// Reverse the unlabeled pool so its tail class is largest
    #[arg(long)]
    pub reversed: bool,
    /// How strongly pseudo-labels skew toward the labeled head classes
    #[arg(long)]
    pub bias_strength: Option<f64>,
    /// Softmax noise temperature
    #[arg(long)]
    pub noise_temp: Option<f64>,
    /// RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the generated CSVs, summary, and manifest
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let spec = resolve_scenario(args)?;
    let labeled =
        ImbalanceProfile::new(spec.labeled_head, spec.labeled_ratio, spec.classes, false)?;
    let unlabeled = ImbalanceProfile::new(
        spec.unlabeled_head,
        spec.unlabeled_ratio,
        spec.classes,
        spec.reversed,
    )?;
    let scenario = SyntheticScenario::new(
        spec.classes,
        labeled,
        unlabeled,
        spec.bias_strength,
        spec.noise_temp,
        spec.seed,
    )?;
    let data = generate_biased_pseudolabels(&scenario)?;

    fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.display().to_string(),
        source: e,
    })?;
    let labels_path = args.out_dir.join("pseudo_labels.csv");
    let truth_path = args.out_dir.join("truth.csv");
    let marginals_path = args.out_dir.join("marginals.csv");
    let summary_path = args.out_dir.join("summary.json");
    write_matrix(&labels_path, &data.labels.values().view())?;
    write_class_indices(&truth_path, &data.truth)?;
    write_vector(&marginals_path, data.true_marginals.mass())?;

    let pred = data.labels.argmax_rows();
    let soft_gap = mismatch(&data.labels, &data.true_marginals);
    let summary = score(&pred, &data.truth, spec.classes, Some(soft_gap))?;
    write_json(&summary_path, &summary)?;

    write_json(
        &args.out_dir.join("manifest.json"),
        &RunManifest {
            command: "simulate",
            version: artifact_version(),
            inputs: match &args.config {
                Some(path) => path_map(&[("config", path.as_path())]),
                None => BTreeMap::new(),
            },
            outputs: path_map(&[
                ("pseudo_labels", &labels_path),
                ("truth", &truth_path),
                ("marginals", &marginals_path),
                ("summary", &summary_path),
            ]),
            config: json!({
                "classes": spec.classes,
                "labeled_head": spec.labeled_head,
                "labeled_ratio": spec.labeled_ratio,
                "unlabeled_head": spec.unlabeled_head,
                "unlabeled_ratio": spec.unlabeled_ratio,
                "reversed": spec.reversed,
                "bias_strength": spec.bias_strength,
                "noise_temp": spec.noise_temp,
                "seed": spec.seed,
            }),
        },
    )
}

struct ScenarioSpec {
    classes: usize,
    labeled_head: u64,
    labeled_ratio: f64,
    unlabeled_head: u64,
    unlabeled_ratio: f64,
    reversed: bool,
    bias_strength: f64,
    noise_temp: f64,
    seed: u64,
}

#[derive(Default)]
struct PartialScenario {
    classes: Option<usize>,
    labeled_head: Option<u64>,
    labeled_ratio: Option<f64>,
    unlabeled_head: Option<u64>,
    unlabeled_ratio: Option<f64>,
    reversed: Option<bool>,
    bias_strength: Option<f64>,
    noise_temp: Option<f64>,
    seed: Option<u64>,
}

fn resolve_scenario(args: &SimulateArgs) -> Result<ScenarioSpec> {
    let file = match &args.config {
        Some(path) => parse_scenario_file(path)?,
        None => PartialScenario::default(),
    };
    Ok(ScenarioSpec {
        classes: require("classes", args.classes.or(file.classes))?,
        labeled_head: require("labeled_head", args.labeled_head.or(file.labeled_head))?,
        labeled_ratio: require("labeled_ratio", args.labeled_ratio.or(file.labeled_ratio))?,
        unlabeled_head: require("unlabeled_head", args.unlabeled_head.or(file.unlabeled_head))?,
        unlabeled_ratio: require(
            "unlabeled_ratio",
            args.unlabeled_ratio.or(file.unlabeled_ratio),
        )?,
        reversed: args.reversed || file.reversed.unwrap_or(false),
        bias_strength: require("bias_strength", args.bias_strength.or(file.bias_strength))?,
        noise_temp: require("noise_temp", args.noise_temp.or(file.noise_temp))?,
        seed: require("seed", args.seed.or(file.seed))?,
    })
}

fn require<T>(key: &str, value: Option<T>) -> Result<T> {
    value.ok_or_else(|| {
        Error::InvalidInput(format!(
            "missing scenario parameter `{key}`: pass --{flag} or set `{key}=` in the config \
             file",
            flag = key.replace('_', "-")
        ))
    })
}

fn parse_scenario_file(path: &Path) -> Result<PartialScenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut out = PartialScenario::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_err(path, idx + 1, 1, "expected key=value"));
        };
        // 1-based column where the value starts, for error reports.
        let column = raw.find('=').map_or(1, |pos| pos + 2);
        let key = key.trim();
        let value = value.trim();
        match key {
            "classes" => out.classes = Some(parse_value(value, path, idx + 1, column)?),
            "labeled_head" => out.labeled_head = Some(parse_value(value, path, idx + 1, column)?),
            "labeled_ratio" => {
                out.labeled_ratio = Some(parse_value(value, path, idx + 1, column)?)
            }
            "unlabeled_head" => {
                out.unlabeled_head = Some(parse_value(value, path, idx + 1, column)?)
            }
            "unlabeled_ratio" => {
                out.unlabeled_ratio = Some(parse_value(value, path, idx + 1, column)?)
            }
            "reversed" => out.reversed = Some(parse_value(value, path, idx + 1, column)?),
            "bias_strength" => {
                out.bias_strength = Some(parse_value(value, path, idx + 1, column)?)
            }
            "noise_temp" => out.noise_temp = Some(parse_value(value, path, idx + 1, column)?),
            "seed" => out.seed = Some(parse_value(value, path, idx + 1, column)?),
            other => {
                return Err(parse_err(
                    path,
                    idx + 1,
                    1,
                    &format!("unknown scenario key `{other}`"),
                ))
            }
        }
    }
    Ok(out)
}

fn parse_value<T>(value: &str, path: &Path, line: usize, column: usize) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| parse_err(path, line, column, &format!("{e}")))
}

fn parse_err(path: &Path, line: usize, column: usize, reason: &str) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        column,
        reason: reason.into(),
    }
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["pred", "labels"]))]
pub struct EvaluateArgs {
    /// Predicted class indices, one per line
    #[arg(long, value_name = "PATH")]
    pub pred: Option<PathBuf>,
    /// Pseudo-label matrix CSV, scored by row argmax
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
    /// Ground-truth class indices, one per line
    #[arg(long, value_name = "PATH")]
    pub truth: PathBuf,
    /// Number of classes (default: inferred from the inputs)
    #[arg(long)]
    pub classes: Option<usize>,
    /// Skip the first line of every input CSV
    #[arg(long)]
    pub header: bool,
    /// Also write a run manifest to this path
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let truth = read_class_indices(&args.truth, args.header)?;
    let (pred, num_classes, soft_labels) = match (&args.pred, &args.labels) {
        (Some(path), None) => {
            let pred = read_class_indices(path, args.header)?;
            let inferred = pred.iter().chain(&truth).max().map_or(0, |&top| top + 1);
            (pred, args.classes.unwrap_or(inferred), None)
        }
        (None, Some(path)) => {
            let labels = PseudoLabelMatrix::new(read_matrix(path, args.header)?)?;
            let num_classes = labels.num_classes();
            if let Some(k) = args.classes {
                if k != num_classes {
                    return Err(Error::InvalidInput(format!(
                        "--classes {k} does not match the {num_classes}-column label matrix"
                    )));
                }
            }
            (labels.argmax_rows(), num_classes, Some(labels))
        }
        _ => unreachable!("clap enforces exactly one of --pred/--labels"),
    };

    let mut summary = score(&pred, &truth, num_classes, None)?;
    if let Some(labels) = &soft_labels {
        // score() has validated the truth indices, so every class has at
        // least one sample and the counts form valid marginals.
        let targets = ClassMarginals::from_counts(&class_histogram(&truth, num_classes))?;
        summary.mismatch = Some(mismatch(labels, &targets));
    }
    print!("{}", to_pretty(&summary));

    if let Some(manifest_path) = &args.manifest {
        let mut inputs = path_map(&[("truth", args.truth.as_path())]);
        if let Some(path) = &args.pred {
            inputs.insert("pred", path.display().to_string());
        }
        if let Some(path) = &args.labels {
            inputs.insert("labels", path.display().to_string());
        }
        write_json(
            manifest_path,
            &RunManifest {
                command: "evaluate",
                version: artifact_version(),
                inputs,
                outputs: BTreeMap::new(),
                config: json!({ "classes": num_classes, "header": args.header }),
            },
        )?;
    }
    Ok(())
}

fn score(
    pred: &[usize],
    truth: &[usize],
    num_classes: usize,
    mismatch: Option<f64>,
) -> Result<EvalSummary> {
    let bacc = balanced_accuracy(pred, truth, num_classes)?;
    let gm = geometric_mean_score(pred, truth, num_classes)?;
    Ok(EvalSummary {
        bacc,
        gm,
        mismatch,
        imbalance_ratio_pred: imbalance_ratio(&class_histogram(pred, num_classes)),
        imbalance_ratio_truth: imbalance_ratio(&class_histogram(truth, num_classes)),
    })
}

/// Counts per class. Callers must have range-checked the indices first (the
/// metric functions do).
fn class_histogram(indices: &[usize], num_classes: usize) -> Vec<u64> {
    let mut counts = vec![0_u64; num_classes];
    for &class in indices {
        counts[class] += 1;
    }
    counts
}

fn path_map(entries: &[(&'static str, &Path)]) -> BTreeMap<&'static str, String> {
    entries
        .iter()
        .map(|&(key, path)| (key, path.display().to_string()))
        .collect()
}
