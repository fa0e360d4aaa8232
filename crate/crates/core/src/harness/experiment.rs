use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::collect::{build_dataset, collect, coverage_audit, flight_seed, total_rows, ControlSetup, CoverageAudit, TargetSource};
use super::maneuver::{default_suite, Corpus, ExcitationLevels, ManeuverSpec, SinusoidYaw};
use super::plot::{LinePlot, Series};
use super::registry::{LearnedFactory, ModelRegistry};
use super::trajectory_io::write_trajectory;
use crate::config::{render_kv, ConfigFile, Section};
use crate::control::{
    fly, tracking_error, ErrorReport, FlightLog, FlightMode, FlightOptions, FlightReference, LqrWeights, NoiseConfig,
    PdGains,
};
use crate::dynamics::{DynamicsModel, GroundTruth, PhysicalParams};
use crate::error::{Error, Result, StageContext};
use crate::planner::{plan, DesiredTrajectory, PlanResult, ScpConfig};
use crate::sysid::{save_model, train, Dataset, LearnedModel, SplitFractions, TrainConfig, TrainReport};

/// Sections an experiment config file may contain.
pub const CONFIG_SECTIONS: [&str; 9] = [
    "physical",
    "pd",
    "lqr",
    "noise",
    "train",
    "scp",
    "experiment",
    "excitation",
    "maneuver",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: PhysicalParams,
    pub pd: PdGains,
    pub lqr: LqrWeights,
    pub noise: NoiseConfig,
    pub excitation: ExcitationLevels,
    pub train: TrainConfig,
    pub scp: ScpConfig,
    pub corpus: Corpus,
    /// Explicit `[maneuver]` sections; when empty the `corpus` preset is used.
    pub maneuvers: Vec<ManeuverSpec>,
    pub test: SinusoidYaw,
    pub fractions: SplitFractions,
    pub seed: u64,
    pub plan_model: String,
    /// Also plan with the ground-truth model and fly that reference.
    pub ablation: bool,
    pub targets: TargetSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            params: PhysicalParams::default(),
            pd: PdGains::default(),
            lqr: LqrWeights::default(),
            noise: NoiseConfig::default(),
            excitation: ExcitationLevels::default(),
            train: TrainConfig::default(),
            scp: ScpConfig::default(),
            corpus: Corpus::Full,
            maneuvers: Vec::new(),
            test: SinusoidYaw::default(),
            fractions: SplitFractions::default(),
            seed: 1,
            plan_model: "learned".into(),
            ablation: true,
            targets: TargetSource::default(),
        }
    }
}

fn apply_excitation(levels: &mut ExcitationLevels, section: &Section) -> Result<()> {
    for e in &section.entries {
        match e.key.as_str() {
            "thrust" => levels.thrust = e.f64()?,
            "tilt" => levels.tilt = e.f64()?,
            "tilt_rate" => levels.tilt_rate = e.f64()?,
            "time_constant" => levels.time_constant = e.f64()?,
            "taper" => levels.taper = e.f64()?,
            _ => return Err(e.unknown(&section.name)),
        }
    }
    let l = levels;
    if [l.thrust, l.tilt, l.tilt_rate, l.taper].iter().any(|x| *x < 0.0) || !(l.time_constant > 0.0) {
        return Err(Error::config(section.line, "excitation levels must be non-negative with a positive time constant"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_config(file: &ConfigFile) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(file)?;
        Ok(cfg)
    }

    /// Layers one config file over the current values. `[maneuver]`
    /// sections accumulate across files; everything else overrides.
    pub fn apply(&mut self, file: &ConfigFile) -> Result<()> {
        file.check_sections(&CONFIG_SECTIONS)?;
        for s in &file.sections {
            match s.name.as_str() {
                "physical" => self.params.apply(s)?,
                "pd" => self.pd.apply(s)?,
                "lqr" => self.lqr.apply(s)?,
                "noise" => self.noise.apply(s)?,
                "train" => self.train.apply(s)?,
                "scp" => self.scp.apply(s)?,
                "excitation" => apply_excitation(&mut self.excitation, s)?,
                "maneuver" => self.maneuvers.push(ManeuverSpec::from_section(s)?),
                "experiment" => self.apply_experiment(s)?,
                _ => unreachable!("sections checked above"),
            }
        }
        Ok(())
    }

    fn apply_experiment(&mut self, section: &Section) -> Result<()> {
        let bad = |e: &crate::config::Entry, err: Error| Error::config(e.line, err.to_string());
        for e in &section.entries {
            match e.key.as_str() {
                "seed" => self.seed = e.parse()?,
                "corpus" => self.corpus = e.value.parse().map_err(|err| bad(e, err))?,
                "amplitude" => self.test.amplitude = e.f64()?,
                "frequency" => self.test.frequency = e.f64()?,
                "duration" => self.test.duration = e.f64()?,
                "yaw_turns" => self.test.yaw_turns = e.f64()?,
                "plan_model" => {
                    if !ModelRegistry::default().contains(&e.value) {
                        return Err(Error::config(e.line, format!("unknown plan_model `{}`", e.value)));
                    }
                    self.plan_model = e.value.clone();
                }
                "ablation" => self.ablation = e.bool()?,
                "targets" => self.targets = e.value.parse().map_err(|err| bad(e, err))?,
                "train_fraction" => self.fractions.train = e.f64()?,
                "val_fraction" => self.fractions.val = e.f64()?,
                _ => return Err(e.unknown(&section.name)),
            }
        }
        Ok(())
    }

    /// Maneuvers to fly for training data: the `[maneuver]` list if there
    /// is one, otherwise the built-in corpus.
    pub fn suite(&self) -> Vec<ManeuverSpec> {
        if self.maneuvers.is_empty() {
            default_suite(self.corpus)
        } else {
            self.maneuvers.clone()
        }
    }

    pub fn control_setup(&self) -> Result<ControlSetup> {
        let mut setup = ControlSetup::new(self.params, self.pd, &self.lqr, self.noise)?;
        setup.excitation = self.excitation;
        Ok(setup)
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("corpus".into(), self.corpus.to_string()),
            ("maneuvers".into(), self.suite().len().to_string()),
            ("test_amplitude".into(), self.test.amplitude.to_string()),
            ("test_frequency".into(), self.test.frequency.to_string()),
            ("test_duration".into(), self.test.duration.to_string()),
            ("test_yaw_turns".into(), self.test.yaw_turns.to_string()),
            ("plan_model".into(), self.plan_model.clone()),
            ("ablation".into(), self.ablation.to_string()),
            ("targets".into(), self.targets.to_string()),
        ];
        let sections = [
            ("physical", self.params.to_kv()),
            ("pd", self.pd.to_kv()),
            ("lqr", self.lqr.to_kv()),
            ("noise", self.noise.to_kv()),
        ];
        for (name, pairs) in sections {
            kv.extend(pairs.into_iter().map(|(k, v)| (format!("{name}.{k}"), v)));
        }
        kv
    }
}

/// Trains both networks and assembles the learned model.
pub fn train_models(
    params: &PhysicalParams,
    fv_data: &Dataset,
    fw_data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(LearnedModel, TrainReport, TrainReport)> {
    let (fv, fv_report) = train(fv_data, cfg)?;
    let (fw, fw_report) = train(fw_data, cfg)?;
    Ok((LearnedModel::new(*params, fv, fw)?, fv_report, fw_report))
}

pub fn save_models(model: &LearnedModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (fv, fw) = LearnedFactory::paths(dir);
    save_model(&model.fv, &fv)?;
    save_model(&model.fw, &fw)
}

/// Per-epoch loss and MSE of both nets side by side.
pub fn write_training_history(path: &Path, fv: &TrainReport, fw: &TrainReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "epoch,translational_loss,translational_train_mse,translational_val_mse,rotational_loss,rotational_train_mse,rotational_val_mse"
    )?;
    for (a, b) in fv.history.iter().zip(&fw.history) {
        writeln!(w, "{},{},{},{},{},{},{}", a.epoch, a.loss, a.train_mse, a.val_mse, b.loss, b.train_mse, b.val_mse)?;
    }
    w.flush()?;
    Ok(())
}

/// Normalised MSE per net and split.
pub fn write_mse_table(path: &Path, fv: &TrainReport, fw: &TrainReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "net,train,val,test,best_epoch")?;
    for (name, r) in [("translational", fv), ("rotational", fw)] {
        writeln!(w, "{name},{},{},{},{}", r.train_mse, r.val_mse, r.test_mse, r.best_epoch)?;
    }
    w.flush()?;
    Ok(())
}

/// One evaluated flight on the test trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedFlight {
    pub label: String,
    pub log: FlightLog,
    pub errors: ErrorReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: usize,
    pub collection_crashes: usize,
    pub audit: CoverageAudit,
    pub translational: TrainReport,
    pub rotational: TrainReport,
    pub plan_model: String,
    pub plan: PlanResult,
    pub nn_model: EvaluatedFlight,
    pub model_free: EvaluatedFlight,
    pub ground_truth: Option<(PlanResult, EvaluatedFlight)>,
}

impl ExperimentReport {
    /// Planned-reference RMS position error over the model-free one.
    pub fn error_ratio(&self) -> f64 {
        self.nn_model.errors.rms_position / self.model_free.errors.rms_position
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = vec![
            ("rows".into(), self.rows.to_string()),
            ("collection_crashes".into(), self.collection_crashes.to_string()),
        ];
        kv.extend(self.audit.to_kv().into_iter().map(|(k, v)| (k.to_string(), v)));
        for (name, r) in [("translational", &self.translational), ("rotational", &self.rotational)] {
            kv.push((format!("{name}_train_mse"), r.train_mse.to_string()));
            kv.push((format!("{name}_val_mse"), r.val_mse.to_string()));
            kv.push((format!("{name}_test_mse"), r.test_mse.to_string()));
            kv.push((format!("{name}_best_epoch"), r.best_epoch.to_string()));
        }
        kv.push(("plan_model".into(), self.plan_model.clone()));
        kv.extend(self.plan.to_kv().into_iter().map(|(k, v)| (format!("plan_{k}"), v)));
        let mut flights = vec![&self.nn_model, &self.model_free];
        if let Some((gt_plan, gt)) = &self.ground_truth {
            kv.extend(gt_plan.to_kv().into_iter().map(|(k, v)| (format!("ground_truth_plan_{k}"), v)));
            flights.push(gt);
        }
        for f in flights {
            kv.extend(f.errors.to_kv().into_iter().map(|(k, v)| (format!("{}_{k}", f.label), v)));
        }
        kv.push(("error_ratio".into(), self.error_ratio().to_string()));
        kv
    }
}

pub fn evaluate(
    label: &str,
    reference: &FlightReference,
    desired: &DesiredTrajectory,
    setup: &ControlSetup,
    seed: u64,
) -> Result<EvaluatedFlight> {
    let plant = GroundTruth::new(setup.params);
    let options = FlightOptions {
        noise: setup.noise,
        seed,
        initial_state: None,
    };
    let log = fly(&plant, reference, &setup.design, &setup.pd, &options)?;
    if let Some(c) = &log.crash {
        return Err(Error::EnvelopeViolation(format!("{label} flight crashed at t = {}: {}", c.t, c.reason)));
    }
    let errors = tracking_error(&log, desired)?;
    Ok(EvaluatedFlight {
        label: label.to_string(),
        log,
        errors,
    })
}

pub fn planned_flight(
    model: &dyn DynamicsModel,
    label: &str,
    desired: &DesiredTrajectory,
    cfg: &ExperimentConfig,
    setup: &ControlSetup,
    seed: u64,
) -> Result<(PlanResult, EvaluatedFlight)> {
    let result = plan(model, desired, &cfg.scp).stage("plan")?;
    let reference = FlightReference::from_plan(&result, &setup.pd, desired.dt);
    let flight = evaluate(label, &reference, desired, setup, seed).stage("fly")?;
    Ok((result, flight))
}

/// Collect, train, plan the sinusoid-yaw reference with the configured
/// model, fly it and the model-free baseline, and write every artifact
/// under `out`.
pub fn run_generalization_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    std::fs::create_dir_all(out)?;
    let setup = cfg.control_setup().stage("setup")?;

    let logs = collect(&cfg.suite(), &setup, cfg.seed).stage("collect")?;
    let audit = coverage_audit(&logs);
    let (fv_data, fw_data) =
        build_dataset(&logs, &cfg.pd, &cfg.params, &cfg.fractions, cfg.seed, cfg.targets).stage("dataset")?;
    let rows = total_rows(&logs);
    let collection_crashes = logs.iter().filter(|l| l.log.crash.is_some()).count();
    drop(logs);
    let data_dir = out.join("data");
    fv_data.write_csv(&data_dir).stage("write")?;
    fw_data.write_csv(&data_dir).stage("write")?;

    let (learned, fv_report, fw_report) = train_models(&cfg.params, &fv_data, &fw_data, &cfg.train).stage("train")?;
    drop((fv_data, fw_data));
    let model_dir = out.join("models");
    save_models(&learned, &model_dir).stage("write")?;
    write_training_history(&out.join("training_history.csv"), &fv_report, &fw_report).stage("write")?;
    write_mse_table(&out.join("mse.csv"), &fv_report, &fw_report).stage("write")?;

    let desired = cfg.test.generate(cfg.params.dt).stage("plan")?;
    write_trajectory(&out.join("desired.csv"), &desired.states, None, desired.dt).stage("write")?;
    let eval_seed = |k: usize| flight_seed(cfg.seed, 1_000_000 + k);

    let registry = ModelRegistry::default();
    let plan_model = registry.build(&cfg.plan_model, &cfg.params, Some(&model_dir)).stage("plan")?;
    let (plan_result, nn_model) = planned_flight(
        plan_model.as_ref(),
        FlightMode::NnModel.as_str(),
        &desired,
        cfg,
        &setup,
        eval_seed(0),
    )?;
    let model_free = evaluate(
        FlightMode::ModelFree.as_str(),
        &FlightReference::model_free(&desired, cfg.params.hover_thrust()),
        &desired,
        &setup,
        eval_seed(1),
    )
    .stage("fly")?;
    let ground_truth = if cfg.ablation {
        let gt = GroundTruth::new(cfg.params);
        Some(planned_flight(&gt, "ground_truth", &desired, cfg, &setup, eval_seed(2))?)
    } else {
        None
    };

    let report = ExperimentReport {
        rows,
        collection_crashes,
        audit,
        translational: fv_report,
        rotational: fw_report,
        plan_model: cfg.plan_model.clone(),
        plan: plan_result,
        nn_model,
        model_free,
        ground_truth,
    };
    write_artifacts(&report, &desired, out).stage("write")?;
    Ok(report)
}

fn write_artifacts(report: &ExperimentReport, desired: &DesiredTrajectory, out: &Path) -> Result<()> {
    write_trajectory(&out.join("plan.csv"), &report.plan.ref_states, Some(&report.plan.ref_inputs), desired.dt)?;
    std::fs::write(out.join("plan_report.txt"), render_kv(&report.plan.to_kv()))?;
    let mut flights = vec![&report.nn_model, &report.model_free];
    if let Some((gt_plan, gt)) = &report.ground_truth {
        write_trajectory(&out.join("plan_ground_truth.csv"), &gt_plan.ref_states, Some(&gt_plan.ref_inputs), desired.dt)?;
        flights.push(gt);
    }
    let mut cmp = BufWriter::new(File::create(out.join("comparison.csv"))?);
    writeln!(cmp, "flight,rms_x,rms_y,rms_z,rms_psi,rms_position,max_position")?;
    for f in &flights {
        f.log.write_csv(&out.join(format!("flight_{}.csv", f.label)))?;
        f.errors.write_csv(&out.join(format!("errors_{}.csv", f.label)))?;
        let e = &f.errors;
        writeln!(
            cmp,
            "{},{},{},{},{},{},{}",
            f.label, e.rms[0], e.rms[1], e.rms[2], e.rms[3], e.rms_position, e.max_position
        )?;
    }
    cmp.flush()?;
    std::fs::write(out.join("report.txt"), render_kv(&report.to_kv()))?;

    let xy = |states: &[crate::dynamics::State]| states.iter().map(|s| (s.p.y, s.p.x)).collect::<Vec<_>>();
    let mut path_series = vec![Series::new("desired", xy(&desired.states))];
    path_series.extend(flights.iter().map(|f| Series::new(f.label.clone(), xy(&f.log.states()))));
    LinePlot {
        title: "Horizontal path".into(),
        x_label: "y (east) [m]".into(),
        y_label: "x (north) [m]".into(),
        series: path_series,
        equal_axes: true,
    }
    .write(&out.join("path_xy.svg"))?;

    let position_error = |e: &ErrorReport| {
        e.t.iter()
            .zip(&e.abs_error)
            .map(|(t, a)| (*t, (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()))
            .collect::<Vec<_>>()
    };
    LinePlot {
        title: "Position tracking error".into(),
        x_label: "t [s]".into(),
        y_label: "|p - p_d| [m]".into(),
        series: flights.iter().map(|f| Series::new(f.label.clone(), position_error(&f.errors))).collect(),
        equal_axes: false,
    }
    .write(&out.join("position_error.svg"))?;

    let history = |r: &TrainReport, val: bool| {
        r.history
            .iter()
            .map(|h| (h.epoch as f64, if val { h.val_mse } else { h.train_mse }))
            .collect::<Vec<_>>()
    };
    LinePlot {
        title: "Normalised MSE".into(),
        x_label: "epoch".into(),
        y_label: "MSE".into(),
        series: vec![
            Series::new("translational train", history(&report.translational, false)),
            Series::new("translational val", history(&report.translational, true)),
            Series::new("rotational train", history(&report.rotational, false)),
            Series::new("rotational val", history(&report.rotational, true)),
        ],
        equal_axes: false,
    }
    .write(&out.join("training.svg"))?;
    Ok(())
}
