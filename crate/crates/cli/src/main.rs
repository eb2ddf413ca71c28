use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod failure;
mod manifest;

use failure::EXIT_USAGE;

/// Standardize head CT volumes to the orbitomeatal baseline and evaluate
/// landmark detectors.
#[derive(Parser, Debug)]
#[command(name = "omline", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// DICOM series import.
    #[command(subcommand)]
    Dicom(DicomCommand),
    /// Synthetic head phantoms.
    #[command(subcommand)]
    Phantom(PhantomCommand),
    /// Run the threshold-based landmark detector on a volume.
    Detect(DetectArgs),
    /// Select the four landmarks and print the head-pose angles.
    Identify(IdentifyArgs),
    /// Identify landmarks, undo the head pose and write the result.
    Standardize(StandardizeArgs),
    /// Extract an isosurface as an OBJ mesh.
    Reconstruct(ReconstructArgs),
    /// Evaluation reports.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Subcommand, Debug)]
enum DicomCommand {
    /// Assemble a directory of axial slices into a volume.
    Import {
        #[arg(long)]
        dir: PathBuf,
        /// Volume header path; the voxels go to a sibling `.raw` file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum PhantomCommand {
    /// Render a tilted phantom with its truth manifest and ground-truth boxes.
    Gen(PhantomArgs),
}

#[derive(Args, Debug)]
struct PhantomArgs {
    #[arg(long)]
    out: PathBuf,
    /// Degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    roll: f64,
    /// Degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pitch: f64,
    /// Degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    yaw: f64,
    /// Grid size per axis.
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value = "phantom")]
    case_id: String,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Volume header to scan.
    #[arg(long, value_name = "VOLUME")]
    classic: PathBuf,
    /// Detections file to write.
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the volume file stem.
    #[arg(long)]
    case_id: Option<String>,
    #[arg(long, default_value_t = 4.0)]
    eye_radius_mm: f64,
    #[arg(long, default_value_t = 4.0)]
    eac_radius_mm: f64,
}

#[derive(Args, Debug)]
struct SelectionArgs {
    /// Ignore detections scoring below this.
    #[arg(long, default_value_t = 0.0)]
    min_confidence: f64,
    /// Compute angles from raw (cx, cy, slice) indices instead of millimetres.
    #[arg(long)]
    index_space: bool,
    /// Warn when any angle exceeds this many degrees.
    #[arg(long, default_value_t = omline::orientation::DEFAULT_MAX_ANGLE_DEG)]
    max_angle_deg: f64,
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    volume: PathBuf,
    detections: PathBuf,
    #[command(flatten)]
    selection: SelectionArgs,
    /// Also write the landmark report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StandardizeArgs {
    volume: PathBuf,
    detections: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    selection: SelectionArgs,
    /// Resampler threads; defaults to the machine's parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    volume: PathBuf,
    /// Threshold in HU.
    #[arg(long, allow_negative_numbers = true)]
    iso: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// AP, mAP and PR/F1 curves of predictions against ground truth.
    Det {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = omline::metrics::DEFAULT_IOU_THRESHOLD)]
        iou: f64,
    },
    /// PEI and CPEI of each model in a `name,map,gflops,params_millions` file.
    Efficiency { models: PathBuf },
    /// Observer-score summaries and the paired Wilcoxon test.
    Scores(ScoresArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = true, id = "inputs")]
struct ScoresArgs {
    /// `observer,condition,n1,...,n5[,reported_mean]` tallies.
    #[arg(long, group = "inputs")]
    tables: Option<PathBuf>,
    /// `case_id,<x>,<y>` paired scores.
    #[arg(long, group = "inputs")]
    paired: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    method: Method,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Auto,
    Exact,
    Normal,
}

impl From<Method> for omline::metrics::WilcoxonMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Auto => Self::Auto,
            Method::Exact => Self::Exact,
            Method::Normal => Self::Normal,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Dicom(DicomCommand::Import { dir, out }) => commands::dicom_import(&dir, &out),
        Command::Phantom(PhantomCommand::Gen(a)) => commands::phantom_gen(&a),
        Command::Detect(a) => commands::detect_classic(&a),
        Command::Identify(a) => commands::identify(&a),
        Command::Standardize(a) => commands::standardize(&a),
        Command::Reconstruct(a) => commands::reconstruct(&a),
        Command::Eval(EvalCommand::Det { pred, gt, out_dir, iou }) => commands::eval_det(&pred, &gt, &out_dir, iou),
        Command::Eval(EvalCommand::Efficiency { models }) => commands::eval_efficiency(&models),
        Command::Eval(EvalCommand::Scores(a)) => commands::eval_scores(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
