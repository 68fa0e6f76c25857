//! `objdisc`: the discovery pipeline as subcommands over the on-disk formats.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error.
//! Diagnostics go to stderr; stdout carries only the `eval` table and
//! `--print-default-params` output.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use objdisc::dataio::{self, DataError};
use objdisc::detector::{DetectorError, TemplateModel};
use objdisc::eval::{self, EvalConfig, EvalError};
use objdisc::selftrain::{self, RoundConfig, SelfTrainError};
use objdisc::synth::{self, SceneConfig};
use objdisc::PipelineParams;

#[derive(Parser)]
#[command(name = "objdisc", version, about = "Label-free object discovery for LiDAR sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Print the full default parameter JSON for this subcommand and exit.
    #[arg(long)]
    print_default_params: bool,
    /// Worker threads for per-frame work (0 = one per core).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sequence with ground truth.
    Synth {
        /// Scene config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_default_params")]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Zero-shot labels: clustering, box fitting and temporal filtering.
    Autolabel {
        #[arg(long, required_unless_present = "print_default_params")]
        data: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_default_params")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Learn a template model from labels.
    Train {
        #[arg(long, required_unless_present = "print_default_params")]
        data: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_default_params")]
        labels: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_default_params")]
        out: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a model over every frame.
    Infer {
        #[arg(long, required_unless_present = "print_default_params")]
        data: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_default_params")]
        model: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_default_params")]
        out: Option<PathBuf>,
        /// Supplies the grid the frames are rasterized on.
        #[arg(long)]
        params: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Iterated train → detect → filter rounds.
    Selftrain {
        #[arg(long, required_unless_present = "print_default_params")]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_default_params")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score detections against ground truth.
    Eval {
        #[arg(long, required_unless_present = "print_default_params")]
        det: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_default_params")]
        gt: Option<PathBuf>,
        /// Sequence whose poses give the ego path; required with --dtc.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_default_params")]
        report: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Add the distance-to-collision bucketed report.
        #[arg(long)]
        dtc: bool,
        /// Comma-separated IoU thresholds, e.g. 0.3,0.5.
        #[arg(long, value_delimiter = ',')]
        iou: Option<Vec<f64>>,
        /// Drop boxes beyond this range (m) on both sides before scoring.
        #[arg(long)]
        range_max: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Config(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) => m,
        }
    }
}

type Outcome = Result<(), Failure>;

fn data(e: DataError) -> Failure {
    Failure::Data(e.to_string())
}

fn detector(e: DetectorError) -> Failure {
    match e {
        DetectorError::InvalidParams(_) => Failure::Config(e.to_string()),
        _ => Failure::Data(e.to_string()),
    }
}

/// Reads a config file; every failure, including a missing file, is a config error.
fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    match path {
        Some(p) => dataio::read_json(p).map_err(|e| Failure::Config(e.to_string())),
        None => Ok(T::default()),
    }
}

fn read_params(path: Option<&Path>) -> Result<PipelineParams, Failure> {
    let p: PipelineParams = read_config(path)?;
    p.validate().map_err(Failure::Config)?;
    Ok(p)
}

fn print_json<T: Serialize>(value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Config(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn required(p: Option<PathBuf>) -> PathBuf {
    p.expect("clap enforces required paths")
}

fn create_parent(path: &Path) -> Outcome {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))
        }
        _ => Ok(()),
    }
}

fn synth_cmd(config: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> Outcome {
    let mut cfg: SceneConfig = read_config(config.as_deref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    // Generate everything before touching the output directory.
    let output = synth::generate(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
    dataio::write_sequence(&out, &output.sequence).map_err(data)?;
    dataio::write_labels(&out.join("gt_labels.jsonl"), &output.ground_truth.labels).map_err(data)
}

fn autolabel_cmd(data_dir: PathBuf, params: Option<PathBuf>, out: PathBuf) -> Outcome {
    let params = read_params(params.as_deref())?;
    let seq = dataio::read_sequence(&data_dir).map_err(data)?;
    let labels = selftrain::round_zero(&seq, &params);
    create_parent(&out)?;
    dataio::write_labels(&out, &labels).map_err(data)
}

fn train_cmd(data_dir: PathBuf, labels: PathBuf, out: PathBuf, params: Option<PathBuf>) -> Outcome {
    let params = read_params(params.as_deref())?;
    let seq = dataio::read_sequence(&data_dir).map_err(data)?;
    let labels = dataio::read_labels(&labels).map_err(data)?;
    let grids = selftrain::sequence_grids(&seq, &params);
    let model = selftrain::train_on_grids(&seq, &grids, &labels, &params, params.detector.train_range_m).map_err(detector)?;
    create_parent(&out)?;
    dataio::write_json(&out, &model).map_err(data)
}

fn infer_cmd(data_dir: PathBuf, model: PathBuf, out: PathBuf, params: Option<PathBuf>) -> Outcome {
    let params = read_params(params.as_deref())?;
    let model: TemplateModel = dataio::read_json(&model).map_err(data)?;
    model.validate().map_err(detector)?;
    let seq = dataio::read_sequence(&data_dir).map_err(data)?;
    if model.spec != params.detector.grid {
        return Err(detector(DetectorError::SpecMismatch { model: model.spec, grid: params.detector.grid }));
    }
    let grids = selftrain::sequence_grids(&seq, &params);
    let dets = selftrain::detect_on_grids(&seq, &grids, &model).map_err(detector)?;
    create_parent(&out)?;
    dataio::write_labels(&out, &dets).map_err(data)
}

fn selftrain_cmd(data_dir: PathBuf, config: Option<PathBuf>, out: PathBuf) -> Outcome {
    let config: RoundConfig = read_config(config.as_deref())?;
    config.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let seq = dataio::read_sequence(&data_dir).map_err(data)?;
    match selftrain::self_train(&seq, &config) {
        Ok(rounds) => selftrain::write_rounds(&out, &rounds).map_err(data),
        Err(SelfTrainError::NoLabels { completed, .. }) if !completed.is_empty() => {
            let msg = format!(
                "stopped early: round {} had no training labels; wrote rounds 0..={}",
                completed.len(),
                completed.len() - 1
            );
            selftrain::write_rounds(&out, &completed).map_err(data)?;
            Err(Failure::Data(msg))
        }
        Err(e @ SelfTrainError::InvalidConfig(_)) => Err(Failure::Config(e.to_string())),
        Err(e) => Err(Failure::Data(e.to_string())),
    }
}

#[allow(clippy::too_many_arguments)]
fn eval_cmd(
    det: PathBuf,
    gt: PathBuf,
    data_dir: Option<PathBuf>,
    report: PathBuf,
    params: Option<PathBuf>,
    dtc: bool,
    iou: Option<Vec<f64>>,
    range_max: Option<f64>,
) -> Outcome {
    let mut config: EvalConfig = read_config(params.as_deref())?;
    config.dtc |= dtc;
    if let Some(t) = iou {
        config.iou_thresholds = t;
    }
    if range_max.is_some() {
        config.range_max_m = range_max;
    }
    config.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let frames = match (&data_dir, config.dtc) {
        (Some(d), _) => dataio::read_manifest(&dataio::resolve_manifest_path(d)).map_err(data)?.frame_poses(),
        (None, true) => return Err(Failure::Config("--dtc needs --data for the ego path".into())),
        (None, false) => Vec::new(),
    };
    let dets = dataio::read_labels(&det).map_err(data)?;
    let gts = dataio::read_labels(&gt).map_err(data)?;
    let result = eval::evaluate(&dets, &gts, &frames, &config).map_err(|e| match e {
        EvalError::InvalidTrajectory(_) => Failure::Data(e.to_string()),
        _ => Failure::Config(e.to_string()),
    })?;
    create_parent(&report)?;
    dataio::write_json(&report, &result).map_err(data)?;
    print!("{}", eval::format_table(&result));
    Ok(())
}

fn set_threads(n: usize) -> Outcome {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("cannot set up {n} threads: {e}")))
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Synth { config, out, seed, common } => {
            if common.print_default_params {
                return print_json(&SceneConfig::default());
            }
            set_threads(common.threads)?;
            synth_cmd(config, required(out), seed)
        }
        Command::Autolabel { data, params, out, common } => {
            if common.print_default_params {
                return print_json(&PipelineParams::default());
            }
            set_threads(common.threads)?;
            autolabel_cmd(required(data), params, required(out))
        }
        Command::Train { data, labels, out, params, common } => {
            if common.print_default_params {
                return print_json(&PipelineParams::default());
            }
            set_threads(common.threads)?;
            train_cmd(required(data), required(labels), required(out), params)
        }
        Command::Infer { data, model, out, params, common } => {
            if common.print_default_params {
                return print_json(&PipelineParams::default());
            }
            set_threads(common.threads)?;
            infer_cmd(required(data), required(model), required(out), params)
        }
        Command::Selftrain { data, config, out, common } => {
            if common.print_default_params {
                return print_json(&RoundConfig::default());
            }
            set_threads(common.threads)?;
            selftrain_cmd(required(data), config, required(out))
        }
        Command::Eval { det, gt, data, report, params, dtc, iou, range_max, common } => {
            if common.print_default_params {
                return print_json(&EvalConfig::default());
            }
            set_threads(common.threads)?;
            eval_cmd(required(det), required(gt), data, required(report), params, dtc, iou, range_max)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
