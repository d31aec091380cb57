//! `cleanjoint`: estimate label-noise joints, find label errors, and
//! drive the synthetic-noise lab from the command line.
//!
//! Exit codes: 0 success, 1 I/O or parse failure, 2 validation or spec
//! failure (including a failing theorem suite), 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cleanjoint::confident::{compute_thresholds, confident_joint};
use cleanjoint::error::Error;
use cleanjoint::estimate::{calibrate, class_weights, latent_estimates};
use cleanjoint::eval::{score_errors, score_joint, run_theorem_suite, TheoremSuiteConfig};
use cleanjoint::io::{
    self, ChecksumEntry, InputsBlock, IoError, MetaBlock, MetricsBlock, PriorsBlock, ReportFile,
};
use cleanjoint::noise_lab::{
    check_learnability, flip_labels, gen_probs, gen_noise_matrix, DiffractionSpec, NoiseSpec,
};
use cleanjoint::rank_prune::{
    errors_cj, errors_cnr, errors_confusion, errors_pbc, errors_pbnr, prune, ErrorReport, Method,
    RankRule,
};
use cleanjoint::{JointMatrix, LabelVector, PriorVector, ProbMatrix};

#[derive(Parser)]
#[command(name = "cleanjoint", version, about = "Label-noise joint estimation and data cleaning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate thresholds, the confident joint, and all latent matrices.
    Estimate(EstimateArgs),
    /// Flag label-error candidates with one of the five methods.
    FindErrors(FindErrorsArgs),
    /// Flag, remove, and report kept indices plus class weights.
    Prune(FindErrorsArgs),
    /// Synthetic data generation.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Score estimates against ground truth.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Evaluate necessary-condition bounds.
    #[command(subcommand)]
    Check(CheckCommand),
    /// Executable robustness suites.
    #[command(subcommand)]
    Suite(SuiteCommand),
}

#[derive(Args)]
struct InputArgs {
    /// CSV matrix of predicted probabilities, one example per row.
    #[arg(long)]
    probs: PathBuf,
    /// Single-column CSV of noisy labels (0-based class indices).
    #[arg(long)]
    labels: PathBuf,
    /// Accept probabilities outside [0, 1] (entries must still be finite).
    #[arg(long)]
    allow_unnormalized: bool,
}

#[derive(Args)]
struct OutputArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit the metadata block (timestamps) for byte-stable output.
    #[arg(long)]
    no_meta: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Confusion,
    Cj,
    Pbc,
    Pbnr,
    Cnr,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Confusion => Method::Confusion,
            MethodArg::Cj => Method::Cj,
            MethodArg::Pbc => Method::Pbc,
            MethodArg::Pbnr => Method::Pbnr,
            MethodArg::Cnr => Method::Cnr,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RankArg {
    Margin,
    Selfconf,
}

impl From<RankArg> for RankRule {
    fn from(r: RankArg) -> Self {
        match r {
            RankArg::Margin => RankRule::NormalizedMargin,
            RankArg::Selfconf => RankRule::SelfConfidence,
        }
    }
}

#[derive(Args)]
struct FindErrorsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Flagging method.
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Ranking rule for the flagged examples.
    #[arg(long, value_enum, default_value = "margin")]
    rank: RankArg,
    /// Unused (flagging is deterministic); accepted so every subcommand
    /// takes a seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Generate a noise transition matrix (CSV, column-stochastic).
    GenNoise(GenNoiseArgs),
    /// Flip labels through a noise transition matrix.
    Flip(FlipArgs),
    /// Generate ideal or diffracted probabilities.
    Probs(ProbsArgs),
}

#[derive(Args)]
struct GenNoiseArgs {
    /// Number of classes.
    #[arg(short = 'm', long)]
    classes: usize,
    /// Target trace of the transition matrix, in (1, m].
    #[arg(long)]
    trace: f64,
    /// Target fraction of zero off-diagonal entries, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    sparsity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated latent prior (defaults to uniform).
    #[arg(long)]
    prior: Option<String>,
    /// Drop the requirement that diagonals dominate rows and columns.
    #[arg(long)]
    no_dominance: bool,
    /// Write the matrix CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FlipArgs {
    /// Single-column CSV of true labels.
    #[arg(long)]
    labels: PathBuf,
    /// Noise transition matrix CSV.
    #[arg(long)]
    noise: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ideal,
    PerClass,
    PerExample,
}

#[derive(Args)]
struct ProbsArgs {
    /// Single-column CSV of true labels.
    #[arg(long)]
    true_labels: PathBuf,
    /// Single-column CSV of noisy labels (required for per-example mode,
    /// whose ranges are anchored to the ideal thresholds).
    #[arg(long, required_if_eq("mode", "per-example"))]
    noisy_labels: Option<PathBuf>,
    /// Noise transition matrix CSV.
    #[arg(long)]
    noise: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Per-class scale factors (single value broadcasts), per-class mode.
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    scale: String,
    /// Per-class offsets (single value broadcasts), per-class mode.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    offset: String,
    /// Per-class mean errors (single value broadcasts), per-example mode.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    mean: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Entry-wise error between an estimated joint and a reference joint.
    Joint(EvalJointArgs),
    /// Precision/recall/F1/accuracy of a flagged set against true flips.
    Errors(EvalErrorsArgs),
}

#[derive(Args)]
struct EvalJointArgs {
    /// Estimated joint CSV.
    #[arg(long)]
    estimated: PathBuf,
    /// Ground-truth joint CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Unused; accepted so every subcommand takes a seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct EvalErrorsArgs {
    /// Single-column CSV of flagged example indices.
    #[arg(long)]
    flagged: PathBuf,
    /// Single-column CSV of ground-truth flipped indices.
    #[arg(long)]
    true_flips: PathBuf,
    /// Total number of examples.
    #[arg(short = 'n', long)]
    n: usize,
    /// Unused; accepted so every subcommand takes a seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Evaluate the learnability bounds on a joint distribution.
    Learnability(LearnabilityArgs),
}

#[derive(Args)]
struct LearnabilityArgs {
    /// Joint distribution CSV (entries sum to 1).
    #[arg(long)]
    joint: PathBuf,
    /// Number of examples behind the joint.
    #[arg(short = 'n', long)]
    n: usize,
    /// Unused; accepted so every subcommand takes a seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Subcommand)]
enum SuiteCommand {
    /// Run the exact-recovery and robustness suites on seeded synthetic
    /// data. Exits non-zero unless every executed case passes.
    Theorems(TheoremsArgs),
}

#[derive(Args)]
struct TheoremsArgs {
    /// Number of seeds; the suite runs seeds 0..count offset by --seed.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Base seed added to every suite seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Examples per instance.
    #[arg(short = 'n', long, default_value_t = 3000)]
    n: usize,
    /// Comma-separated class counts.
    #[arg(long, default_value = "3,5,10")]
    classes: String,
    /// Comma-separated fractions of incorrect labels.
    #[arg(long, default_value = "0.2,0.4,0.7")]
    noise: String,
    /// Comma-separated sparsity targets.
    #[arg(long, default_value = "0,0.2,0.4,0.6")]
    sparsity: String,
    #[command(flatten)]
    output: OutputArgs,
}

enum CliError {
    Io(IoError),
    Validation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Io(e) => e.to_string(),
            CliError::Validation(m) => m.clone(),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // A panic past argument parsing is an internal invariant breach: exit 3.
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(3),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate(args) => estimate(args),
        Command::FindErrors(args) => find_errors(args, false),
        Command::Prune(args) => find_errors(args, true),
        Command::Synth(SynthCommand::GenNoise(args)) => synth_gen_noise(args),
        Command::Synth(SynthCommand::Flip(args)) => synth_flip(args),
        Command::Synth(SynthCommand::Probs(args)) => synth_probs(args),
        Command::Eval(EvalCommand::Joint(args)) => eval_joint(args),
        Command::Eval(EvalCommand::Errors(args)) => eval_errors(args),
        Command::Check(CheckCommand::Learnability(args)) => check_learnability_cmd(args),
        Command::Suite(SuiteCommand::Theorems(args)) => suite_theorems(args),
    }
}

fn meta_block(no_meta: bool) -> Option<MetaBlock> {
    if no_meta {
        return None;
    }
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Some(MetaBlock {
        tool: format!("cleanjoint {}", env!("CARGO_PKG_VERSION")),
        generated_at_unix: now,
    })
}

fn emit_report(report: &ReportFile, output: &OutputArgs) -> Result<(), CliError> {
    match &output.out {
        Some(path) => report.write(path).map_err(CliError::from),
        None => {
            print!("{}", report.to_json());
            Ok(())
        }
    }
}

fn emit_text(text: &str, out: &Option<PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| {
            CliError::Io(IoError::Io {
                path: path.display().to_string(),
                source,
            })
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn checksum_of(path: &Path) -> Result<ChecksumEntry, CliError> {
    let bytes = std::fs::read(path).map_err(|source| {
        CliError::Io(IoError::Io {
            path: path.display().to_string(),
            source,
        })
    })?;
    Ok(ChecksumEntry {
        file: path.display().to_string(),
        fnv1a64: io::fnv1a64(&bytes),
    })
}

fn load_inputs(input: &InputArgs) -> Result<(ProbMatrix, LabelVector, InputsBlock), CliError> {
    let rows = io::read_matrix(&input.probs)?;
    let n = rows.len();
    let m = rows.first().map(|r| r.len()).unwrap_or(0);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let probs = if input.allow_unnormalized {
        ProbMatrix::new_unnormalized(n, m, flat)
    } else {
        ProbMatrix::new(n, m, flat)
    }?;
    let labels = LabelVector::new(io::read_labels(&input.labels)?, m)?;
    cleanjoint::validate_inputs(&probs, &labels)?;
    let inputs = InputsBlock {
        probs_path: Some(input.probs.display().to_string()),
        labels_path: Some(input.labels.display().to_string()),
        n,
        m,
        checksums: vec![checksum_of(&input.probs)?, checksum_of(&input.labels)?],
    };
    Ok((probs, labels, inputs))
}

fn estimate(args: EstimateArgs) -> Result<(), CliError> {
    let (probs, labels, inputs) = load_inputs(&args.input)?;
    let thresholds = compute_thresholds(&probs, &labels)?;
    let (counts, _) = confident_joint(&probs, &labels, &thresholds)?;
    let calibrated = calibrate(&counts, &labels)?;
    let latents = latent_estimates(&calibrated.joint)?;
    let weights = class_weights(&calibrated.joint)?;
    let learnability = check_learnability(&calibrated.joint, labels.len());

    let mut report = ReportFile::new();
    report.meta = meta_block(args.output.no_meta);
    report.inputs = Some(inputs);
    report.thresholds = Some(thresholds.values().to_vec());
    report.confident_joint = Some(counts.to_rows());
    report.joint = Some(calibrated.joint.to_rows());
    report.noise_transition = Some(latents.noise_transition.to_rows());
    report.mixing = Some(latents.mixing.to_rows());
    report.priors = Some(PriorsBlock {
        noisy: latents.noisy_prior.values().to_vec(),
        latent: latents.latent_prior.values().to_vec(),
    });
    report.sparsity = Some(calibrated.joint.sparsity(0.0));
    report.class_weights = Some(weights);
    report.learnability = Some((&learnability).into());
    for class in &calibrated.zero_row_fallbacks {
        report.warnings.push(format!(
            "no example of class {class} was confidently counted; its joint row fell back to the diagonal"
        ));
    }
    emit_report(&report, &args.output)
}

fn run_method(
    probs: &ProbMatrix,
    labels: &LabelVector,
    method: Method,
    rule: RankRule,
) -> Result<(ErrorReport, Option<JointMatrix>, Vec<usize>), CliError> {
    match method {
        Method::Confusion => Ok((errors_confusion(probs, labels, rule)?, None, Vec::new())),
        Method::Cj => Ok((errors_cj(probs, labels, rule)?, None, Vec::new())),
        Method::Pbc | Method::Pbnr | Method::Cnr => {
            let thresholds = compute_thresholds(probs, labels)?;
            let (counts, _) = confident_joint(probs, labels, &thresholds)?;
            let calibrated = calibrate(&counts, labels)?;
            let report = match method {
                Method::Pbc => errors_pbc(probs, labels, &calibrated.joint, rule)?,
                Method::Pbnr => errors_pbnr(probs, labels, &calibrated.joint, rule)?,
                _ => errors_cnr(probs, labels, &calibrated.joint, rule)?,
            };
            Ok((report, Some(calibrated.joint), calibrated.zero_row_fallbacks))
        }
    }
}

fn find_errors(args: FindErrorsArgs, do_prune: bool) -> Result<(), CliError> {
    let (probs, labels, inputs) = load_inputs(&args.input)?;
    let method: Method = args.method.into();
    let rule: RankRule = args.rank.into();
    let (error_report, joint, fallbacks) = run_method(&probs, &labels, method, rule)?;

    let mut report = ReportFile::new();
    report.meta = meta_block(args.output.no_meta);
    report.inputs = Some(inputs);
    report.methods.push((&error_report).into());
    for class in &fallbacks {
        report.warnings.push(format!(
            "no example of class {class} was confidently counted; its joint row fell back to the diagonal"
        ));
    }
    if do_prune {
        // Class weights need a calibrated joint even for the counting
        // methods that did not build one on the way.
        let joint = match joint {
            Some(j) => j,
            None => {
                let thresholds = compute_thresholds(&probs, &labels)?;
                let (counts, _) = confident_joint(&probs, &labels, &thresholds)?;
                calibrate(&counts, &labels)?.joint
            }
        };
        let pruned = prune(&labels, &error_report, &joint)?;
        report.joint = Some(joint.to_rows());
        report.kept = Some(pruned.kept);
        report.class_weights = Some(pruned.class_weights);
    }
    emit_report(&report, &args.output)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|cell| {
            cell.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("cannot parse {what} entry {cell:?}")))
        })
        .collect()
}

fn broadcast(values: Vec<f64>, m: usize, what: &str) -> Result<Vec<f64>, CliError> {
    match values.len() {
        1 => Ok(vec![values[0]; m]),
        len if len == m => Ok(values),
        len => Err(CliError::Validation(format!(
            "{what} needs 1 or {m} entries, got {len}"
        ))),
    }
}

fn synth_gen_noise(args: GenNoiseArgs) -> Result<(), CliError> {
    let prior = match &args.prior {
        Some(text) => PriorVector::new(parse_list(text, "prior")?)?,
        None => PriorVector::uniform(args.classes),
    };
    let spec = NoiseSpec {
        classes: args.classes,
        trace: args.trace,
        sparsity: args.sparsity,
        seed: args.seed,
        latent_prior: prior,
        dominance: !args.no_dominance,
    };
    let matrix = gen_noise_matrix(&spec)?;
    emit_text(&io::matrix_to_csv(&matrix.to_rows()), &args.out)
}

fn read_noise_matrix(path: &Path) -> Result<cleanjoint::ConditionalMatrix, CliError> {
    let rows = io::read_matrix(path)?;
    Ok(cleanjoint::ConditionalMatrix::from_rows(
        rows,
        cleanjoint::Orientation::NoiseTransition,
    )?)
}

fn read_label_vector(path: &Path, classes: usize) -> Result<LabelVector, CliError> {
    Ok(LabelVector::new(io::read_labels(path)?, classes)?)
}

fn synth_flip(args: FlipArgs) -> Result<(), CliError> {
    let noise = read_noise_matrix(&args.noise)?;
    let labels = read_label_vector(&args.labels, noise.classes())?;
    let flipped = flip_labels(&labels, &noise, args.seed)?;
    emit_text(&io::labels_to_csv(flipped.as_slice()), &args.out)
}

fn synth_probs(args: ProbsArgs) -> Result<(), CliError> {
    let noise = read_noise_matrix(&args.noise)?;
    let m = noise.classes();
    let y_true = read_label_vector(&args.true_labels, m)?;
    let y_noisy = match &args.noisy_labels {
        Some(path) => read_label_vector(path, m)?,
        None => y_true.clone(),
    };
    let spec = match args.mode {
        ModeArg::Ideal => DiffractionSpec::Ideal,
        ModeArg::PerClass => DiffractionSpec::PerClass {
            scale: broadcast(parse_list(&args.scale, "scale")?, m, "scale")?,
            offset: broadcast(parse_list(&args.offset, "offset")?, m, "offset")?,
        },
        ModeArg::PerExample => DiffractionSpec::PerExample {
            mean: broadcast(parse_list(&args.mean, "mean")?, m, "mean")?,
            seed: args.seed,
        },
    };
    let probs = gen_probs(&y_true, &y_noisy, &noise, &spec)?;
    let rows: Vec<Vec<f64>> = (0..probs.rows()).map(|k| probs.row(k).to_vec()).collect();
    emit_text(&io::matrix_to_csv(&rows), &args.out)
}

fn read_joint(path: &Path) -> Result<JointMatrix, CliError> {
    Ok(JointMatrix::from_rows(io::read_matrix(path)?)?)
}

fn eval_joint(args: EvalJointArgs) -> Result<(), CliError> {
    let estimated = read_joint(&args.estimated)?;
    let truth = read_joint(&args.truth)?;
    let error = score_joint(&estimated, &truth)?;
    let mut report = ReportFile::new();
    report.meta = meta_block(args.output.no_meta);
    report.metrics = Some(MetricsBlock {
        errors: None,
        joint: Some(error.into()),
    });
    emit_report(&report, &args.output)
}

fn eval_errors(args: EvalErrorsArgs) -> Result<(), CliError> {
    let flagged = io::read_index_set(&args.flagged)?;
    let true_flips = io::read_index_set(&args.true_flips)?;
    let metrics = score_errors(&flagged, &true_flips, args.n)?;
    let mut report = ReportFile::new();
    report.meta = meta_block(args.output.no_meta);
    report.metrics = Some(MetricsBlock {
        errors: Some(metrics.into()),
        joint: None,
    });
    emit_report(&report, &args.output)
}

fn check_learnability_cmd(args: LearnabilityArgs) -> Result<(), CliError> {
    let joint = read_joint(&args.joint)?;
    let learnability = check_learnability(&joint, args.n);
    let mut report = ReportFile::new();
    report.meta = meta_block(args.output.no_meta);
    report.learnability = Some((&learnability).into());
    emit_report(&report, &args.output)
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|cell| {
            cell.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Validation(format!("cannot parse {what} entry {cell:?}")))
        })
        .collect()
}

fn suite_theorems(args: TheoremsArgs) -> Result<(), CliError> {
    let config = TheoremSuiteConfig {
        seeds: (0..args.seeds).map(|s| s + args.seed).collect(),
        n: args.n,
        class_counts: parse_usize_list(&args.classes, "classes")?,
        noise_fractions: parse_list(&args.noise, "noise")?,
        sparsities: parse_list(&args.sparsity, "sparsity")?,
    };
    let suite = run_theorem_suite(&config);
    let mut report = ReportFile::new();
    report.meta = meta_block(args.output.no_meta);
    report.suite = Some((&suite).into());
    emit_report(&report, &args.output)?;
    if suite.all_executed_passed() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "theorem suite: {} failed, {} passed, {} hypotheses-not-met",
            suite.failed(),
            suite.passed(),
            suite.gated()
        )))
    }
}
