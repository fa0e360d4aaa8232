//! `nnquad` command line: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 usage / config / data error, 2 flight crash,
//! 3 planner did not converge.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nnquad::config::{render_kv, ConfigFile};
use nnquad::control::{fly, tracking_error, FlightLog, FlightMode, FlightOptions, FlightReference};
use nnquad::dynamics::GroundTruth;
use nnquad::harness::{
    build_dataset, collect, coverage_audit, flight_seed, read_trajectory, run_generalization_experiment, save_models,
    total_rows, train_models, write_mse_table, write_training_history, write_trajectory, ExperimentConfig,
    ModelRegistry,
};
use nnquad::planner::{plan, DesiredTrajectory};
use nnquad::sysid::{Dataset, NetKind};
use nnquad::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CRASH: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nnquad", version, about = "Learned quadrotor dynamics: collect, train, plan, fly")]
struct Cli {
    /// INI config file; repeat to layer several (later files win).
    #[arg(long, global = true, value_name = "PATH")]
    config: Vec<PathBuf>,
    /// Master seed, overriding `[experiment] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fly the training maneuvers and write logs, datasets and the coverage audit.
    Collect,
    /// Fit both networks to a collected dataset.
    Train(TrainArgs),
    /// Plan a feasible reference for a desired trajectory.
    Plan(PlanArgs),
    /// Fly a planned reference or a desired trajectory on the simulator.
    Fly(FlyArgs),
    /// Tracking error of a flight log (or trajectory file) against a desired trajectory.
    Eval(EvalArgs),
    /// Collect, train, plan and compare nn_model against model_free.
    Experiment,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory [default: <out>/data].
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Desired trajectory CSV [default: the configured sinusoid-yaw task].
    #[arg(long, value_name = "CSV")]
    desired: Option<PathBuf>,
    /// Directory with the two model files [default: <out>/models].
    #[arg(long, value_name = "DIR")]
    models: Option<PathBuf>,
    /// Dynamics model to plan with [default: `[experiment] plan_model`].
    #[arg(long)]
    model: Option<String>,
}

#[derive(Debug, Args)]
struct FlyArgs {
    /// Planned trajectory CSV with input columns (nn_model mode).
    #[arg(long, value_name = "CSV")]
    reference: Option<PathBuf>,
    /// Desired trajectory CSV the error is measured against [default: the
    /// configured sinusoid-yaw task].
    #[arg(long, value_name = "CSV")]
    desired: Option<PathBuf>,
    /// nn_model or model_free [default: nn_model with --reference, else model_free].
    #[arg(long)]
    mode: Option<FlightMode>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Flight log CSV, or a trajectory CSV.
    #[arg(long, value_name = "CSV")]
    log: PathBuf,
    #[arg(long, value_name = "CSV")]
    desired: PathBuf,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Collect => "collect",
            Command::Train(_) => "train",
            Command::Plan(_) => "plan",
            Command::Fly(_) => "fly",
            Command::Eval(_) => "eval",
            Command::Experiment => "experiment",
        }
    }

    fn stages(&self) -> &'static [&'static str] {
        match self {
            Command::Collect => &["collect", "dataset", "audit"],
            Command::Train(_) => &["train"],
            Command::Plan(_) => &["plan"],
            Command::Fly(_) => &["fly", "eval"],
            Command::Eval(_) => &["eval"],
            Command::Experiment => &["collect", "dataset", "train", "plan", "fly", "eval"],
        }
    }
}

/// What produced an output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config_paths: Vec<PathBuf>,
    pub stages: Vec<String>,
    pub out: PathBuf,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let configs: Vec<String> = self.config_paths.iter().map(|p| p.display().to_string()).collect();
        let mut s = String::new();
        let _ = writeln!(s, "tool = nnquad {}", self.tool_version);
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "config = {}", configs.join(", "));
        let _ = writeln!(s, "stages = {}", self.stages.join(", "));
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("manifest.txt"), self.render())
    }
}

/// A failed command: the message printed and the exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::EnvelopeViolation(_) | Error::SingularAttitude { .. } => EXIT_CRASH,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::default();
    for path in &cli.config {
        let applied = ConfigFile::load(path).and_then(|file| cfg.apply(&file));
        if let Err(e) = applied {
            return Err(fail(EXIT_USAGE, format!("{}: {e}", path.display())));
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Outcome {
    let mut cfg = load_config(cli)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cli.command.name().to_string(),
        seed: cfg.seed,
        config_paths: cli.config.clone(),
        stages: cli.command.stages().iter().map(|s| s.to_string()).collect(),
        out: cli.out.clone(),
    };
    manifest.write(&cli.out)?;
    std::fs::write(cli.out.join("config.txt"), render_kv(&cfg.to_kv()))?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Collect => cmd_collect(&cfg, out),
        Command::Train(args) => {
            if let Some(p) = args.passes {
                cfg.train.passes = p;
            }
            if let Some(h) = args.hidden {
                cfg.train.hidden = h;
            }
            let data = args.data.clone().unwrap_or_else(|| out.join("data"));
            cmd_train(&cfg, &data, out)
        }
        Command::Plan(args) => cmd_plan(&cfg, args, out),
        Command::Fly(args) => cmd_fly(&cfg, args, out),
        Command::Eval(args) => cmd_eval(args, out),
        Command::Experiment => cmd_experiment(&cfg, out),
    }
}

fn cmd_collect(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    let suite = cfg.suite();
    if suite.is_empty() {
        return Err(fail(EXIT_USAGE, "no maneuvers: the config selects corpus `none` and lists no [maneuver]"));
    }
    let setup = cfg.control_setup()?;
    let logs = collect(&suite, &setup, cfg.seed)?;
    let log_dir = out.join("logs");
    std::fs::create_dir_all(&log_dir)?;
    for (i, l) in logs.iter().enumerate() {
        l.log.write_csv(&log_dir.join(format!("flight_{i:03}_{}.csv", l.spec.kind.as_str())))?;
    }
    let audit = coverage_audit(&logs);
    let crashes: Vec<usize> = (0..logs.len()).filter(|&i| logs[i].log.crash.is_some()).collect();
    let mut summary = vec![
        ("maneuvers", logs.len().to_string()),
        ("rows", total_rows(&logs).to_string()),
        ("crashes", crashes.len().to_string()),
    ];
    summary.extend(audit.to_kv());
    summary.push(("audit_passed", audit.passed().to_string()));
    std::fs::write(out.join("audit.txt"), render_kv(&summary))?;
    print!("{}", render_kv(&summary));

    let (fv, fw) = build_dataset(&logs, &cfg.pd, &cfg.params, &cfg.fractions, cfg.seed, cfg.targets)?;
    fv.write_csv(&out.join("data"))?;
    fw.write_csv(&out.join("data"))?;
    if let Some(&first) = crashes.first() {
        let c = logs[first].log.crash.as_ref().expect("crash index");
        return Err(fail(
            EXIT_CRASH,
            format!("{} flight(s) crashed; first is #{first} at t = {}: {}", crashes.len(), c.t, c.reason),
        ));
    }
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, data: &Path, out: &Path) -> Outcome {
    let fv = Dataset::read_csv(data, NetKind::Translational)?;
    let fw = Dataset::read_csv(data, NetKind::Rotational)?;
    let (model, fv_report, fw_report) = train_models(&cfg.params, &fv, &fw, &cfg.train)?;
    save_models(&model, &out.join("models"))?;
    write_training_history(&out.join("training_history.csv"), &fv_report, &fw_report)?;
    write_mse_table(&out.join("mse.csv"), &fv_report, &fw_report)?;
    println!("{:<14} {:>12} {:>12}", "net", "train_mse", "test_mse");
    for (name, r) in [("translational", &fv_report), ("rotational", &fw_report)] {
        println!("{name:<14} {:>12.6} {:>12.6}", r.train_mse, r.test_mse);
    }
    Ok(())
}

/// The `--desired` file, or the configured sinusoid-yaw task.
fn desired_trajectory(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<DesiredTrajectory, Failure> {
    match path {
        Some(p) => Ok(read_trajectory(p)?.desired),
        None => Ok(cfg.test.generate(cfg.params.dt)?),
    }
}

fn cmd_plan(cfg: &ExperimentConfig, args: &PlanArgs, out: &Path) -> Outcome {
    let desired = desired_trajectory(cfg, args.desired.as_deref())?;
    let name = args.model.as_deref().unwrap_or(&cfg.plan_model);
    let models = args.models.clone().unwrap_or_else(|| out.join("models"));
    let model = ModelRegistry::default().build(name, &cfg.params, Some(&models))?;
    let result = plan(model.as_ref(), &desired, &cfg.scp)?;
    write_trajectory(&out.join("plan.csv"), &result.ref_states, Some(&result.ref_inputs), desired.dt)?;
    let mut report = vec![("model", name.to_string())];
    report.extend(result.to_kv().into_iter().map(|(k, v)| (k, v)));
    std::fs::write(out.join("plan_report.txt"), render_kv(&report))?;
    print!("{}", render_kv(&report));
    if !result.converged {
        return Err(fail(
            EXIT_NOT_CONVERGED,
            format!("plan did not converge: max defect {:e}", result.max_violation),
        ));
    }
    Ok(())
}

fn cmd_fly(cfg: &ExperimentConfig, args: &FlyArgs, out: &Path) -> Outcome {
    let desired = desired_trajectory(cfg, args.desired.as_deref())?;
    let mode = args.mode.unwrap_or(if args.reference.is_some() {
        FlightMode::NnModel
    } else {
        FlightMode::ModelFree
    });
    let reference = match mode {
        FlightMode::NnModel => {
            let path = args
                .reference
                .as_deref()
                .ok_or_else(|| fail(EXIT_USAGE, "nn_model mode needs --reference"))?;
            let planned = read_trajectory(path)?;
            let inputs = planned
                .inputs
                .ok_or_else(|| fail(EXIT_USAGE, format!("{} has no input columns", path.display())))?;
            FlightReference::planned(&planned.desired.states, &inputs, &cfg.pd, planned.desired.dt)
        }
        FlightMode::ModelFree => FlightReference::model_free(&desired, cfg.params.hover_thrust()),
    };
    let setup = cfg.control_setup()?;
    let options = FlightOptions {
        noise: setup.noise,
        seed: flight_seed(cfg.seed, 1_000_000),
        initial_state: None,
    };
    let log = fly(&GroundTruth::new(cfg.params), &reference, &setup.design, &setup.pd, &options)?;
    log.write_csv(&out.join("flight.csv"))?;
    if let Some(c) = &log.crash {
        return Err(fail(EXIT_CRASH, format!("{mode} flight crashed at t = {}: {}", c.t, c.reason)));
    }
    report_errors(&log, &desired, out)
}

fn report_errors(log: &FlightLog, desired: &DesiredTrajectory, out: &Path) -> Outcome {
    let errors = tracking_error(log, desired)?;
    errors.write_csv(&out.join("errors.csv"))?;
    let kv = errors.to_kv();
    std::fs::write(out.join("error_report.txt"), render_kv(&kv))?;
    print!("{}", render_kv(&kv));
    Ok(())
}

/// Reads a flight log, falling back to a trajectory file whose states are
/// taken as the flown ones.
fn read_flown(path: &Path) -> Result<FlightLog, Failure> {
    match FlightLog::read_csv(path) {
        Ok(log) => Ok(log),
        Err(log_err) => match read_trajectory(path) {
            Ok(traj) => Ok(FlightLog::from_states(&traj.desired.states, traj.desired.dt)),
            Err(_) => Err(log_err.into()),
        },
    }
}

fn cmd_eval(args: &EvalArgs, out: &Path) -> Outcome {
    let log = read_flown(&args.log)?;
    if let Some(c) = &log.crash {
        return Err(fail(EXIT_CRASH, format!("{} is a crashed flight (t = {}: {})", args.log.display(), c.t, c.reason)));
    }
    let desired = read_trajectory(&args.desired)?.desired;
    report_errors(&log, &desired, out)
}

fn cmd_experiment(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    let report = run_generalization_experiment(cfg, out)?;
    let pick = ["rows", "audit_violations", "plan_converged", "nn_model_rms_position", "model_free_rms_position", "error_ratio"];
    let kv = report.to_kv();
    for (k, v) in kv.iter().filter(|(k, _)| pick.contains(&k.as_str())) {
        println!("{k} = {v}");
    }
    Ok(())
}
