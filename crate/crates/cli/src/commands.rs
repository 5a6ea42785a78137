use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use targetctl::augmentation::{augmented_pipeline, check_augmented_conditions, compute_dmin, AugmentedDesign};
use targetctl::existence::{existence_report, extract_t1t2, ExistenceReport, Verdict};
use targetctl::numerics::{eig, PoleSet};
use targetctl::observer::{design_observer, design_observer_based_controller, ClosedLoopSpec, ObserverDesign};
use targetctl::simulator::{
    corpus_horizon, generate_experiment, oracle_conditions, random_state, rollout_observer_based,
    rollout_state_feedback, DemoCase, InputLaw, OracleReport, PlantModel, SimulationTrace,
};
use targetctl::synthesis::{stabilize, synthesize, verify_against_model, ControllerDesign, STABILITY_MARGIN};
use targetctl::trajectory::{partition, Format, TrajectoryDataset};
use targetctl::{Error, RankTolerance, Result};

use crate::{CaseArg, Command, Common, InputKind, PlantSource};

const CASE1_POLES: &str = "0.39";
const CASE2_POLES: &str = "0.3,0.4";
const DEMO_OBSERVER_POLES: &str = "-0.5378,0.4233+0.0990i,0.4233-0.0990i,0.0304,0.1249";
const CASE2_REFERENCE_R: [f64; 5] = [0.75, 1.0, -2.0, 0.25, 2.25];
const DEMO_STEPS: usize = 60;

pub fn run(command: Command, common: &Common) -> Result<u8> {
    let tol = common.tolerance()?;
    let out = common.out.as_deref();
    match command {
        Command::Check { data, model } => check(&data, model.as_deref(), &tol, out),
        Command::Synthesize { data, poles, stabilize, model } => {
            synthesize_cmd(&data, poles.as_deref(), stabilize, model.as_deref(), &tol, out)
        }
        Command::Augment { data, poles, t } => augment(&data, &poles, t, &tol, out),
        Command::Observe { data, obs_poles, poles } => observe(&data, &obs_poles, poles.as_deref(), &tol, out),
        Command::Generate { plant, horizon, seed, input } => generate(&plant, horizon, seed, input, out),
        Command::Simulate { plant, controller, observer, steps, seed } => {
            simulate(&plant, &controller, observer.as_deref(), steps, seed, out)
        }
        Command::Demo { case, seed } => demo(case, seed, &tol, out),
        Command::Oracle { plant, data } => oracle(&plant, data.as_deref(), &tol, out),
    }
}

fn emit_json<S: Serialize>(value: &S, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_data(path: &Path) -> Result<TrajectoryDataset<f64>> {
    TrajectoryDataset::load_path(path)
}

fn parse_poles(s: &str) -> Result<PoleSet<f64>> {
    PoleSet::parse(s)
}

fn case(arg: CaseArg) -> DemoCase {
    match arg {
        CaseArg::Case1 => DemoCase::Case1,
        CaseArg::Case2 => DemoCase::Case2,
    }
}

fn load_plant(src: &PlantSource) -> Result<PlantModel<f64>> {
    match (&src.model, src.case) {
        (Some(path), _) => PlantModel::load_path(path),
        (None, Some(c)) => Ok(case(c).plant()),
        (None, None) => Err(Error::Schema("either --model or --case is required".into())),
    }
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Exists => 0,
        Verdict::AsymptoticOnly => 2,
        Verdict::None => 3,
        Verdict::Inconclusive => 5,
    }
}

fn summarize(rep: &ExistenceReport) {
    eprintln!(
        "verdict: {} (nesting {}, pencil {}, asymptotic pencil {}; rk[Up;Zp] {}, rk[Up;Zp;Zf] {}, r {})",
        rep.verdict,
        rep.cond_nesting,
        rep.cond_pencil,
        rep.cond_pencil_asymptotic,
        rep.ranks.rk_up_zp,
        rep.ranks.rk_up_zp_zf,
        rep.ranks.r
    );
    for note in &rep.notes {
        eprintln!("note: {note}");
    }
}

fn check(data: &Path, model: Option<&Path>, tol: &RankTolerance<f64>, out: Option<&Path>) -> Result<u8> {
    let ds = load_data(data)?;
    let rep = existence_report(&partition(&ds)?, tol)?;
    summarize(&rep);
    if let Some(path) = model {
        let oracle = oracle_conditions(&PlantModel::load_path(path)?, tol)?;
        let agree = oracle.nesting == rep.cond_nesting
            && oracle.pencil == rep.cond_pencil
            && oracle.pencil_asymptotic == rep.cond_pencil_asymptotic;
        eprintln!("model verdict: {} (agrees with data: {agree})", oracle.verdict);
    }
    emit_json(&rep, out)?;
    Ok(verdict_code(rep.verdict))
}

fn synthesize_cmd(
    data: &Path,
    poles: Option<&str>,
    stabilize_only: bool,
    model: Option<&Path>,
    tol: &RankTolerance<f64>,
    out: Option<&Path>,
) -> Result<u8> {
    let dp = partition(&load_data(data)?)?;
    let cd = match (poles, stabilize_only) {
        (Some(p), _) => synthesize(&dp, &parse_poles(p)?)?,
        (None, true) => {
            let mut cd = stabilize(&extract_t1t2(&dp)?, STABILITY_MARGIN, tol)?;
            cd.f_eff = Some(dp.target_map()?);
            cd
        }
        (None, false) => return Err(Error::BadPoleSet("either --poles or --stabilize is required".into())),
    };
    eprintln!("controller order {}, closed-loop poles {}", cd.order, cd.achieved);
    if let Some(path) = model {
        let m = PlantModel::load_path(path)?;
        let mc = verify_against_model(&cd, &m.a, &m.b, &m.f)?;
        eprintln!(
            "model check: relation residual {:e}, pole error {:e}",
            mc.relation_residual, mc.pole_error
        );
    }
    emit_json(&cd, out)?;
    Ok(0)
}

fn augment(data: &Path, poles: &str, t: Option<usize>, tol: &RankTolerance<f64>, out: Option<&Path>) -> Result<u8> {
    let ds = load_data(data)?;
    let t = t.unwrap_or_else(|| ds.n());
    let design = augmented_pipeline(&ds, &parse_poles(poles)?, t, tol)?;
    eprintln!(
        "d_min {}, controller order {}, closed-loop poles {}",
        design.augmentation.d_min, design.controller.order, design.controller.achieved
    );
    emit_json(&design, out)?;
    Ok(0)
}

fn observe(
    data: &Path,
    obs_poles: &str,
    poles: Option<&str>,
    tol: &RankTolerance<f64>,
    out: Option<&Path>,
) -> Result<u8> {
    let dp = partition(&load_data(data)?)?;
    let obs = parse_poles(obs_poles)?;
    match poles {
        None => {
            let od = design_observer(&dp, &obs, tol)?;
            eprintln!("observer poles {}, residual {:e}", od.observer_poles, od.residual);
            emit_json(&od, out)?;
        }
        Some(p) => {
            let cls = design_observer_based_controller(&dp, &parse_poles(p)?, &obs, tol)?;
            eprintln!("closed-loop spectrum {}, separation error {:e}", eig(&cls.block_matrix)?, cls.separation_error()?);
            emit_json(&cls, out)?;
        }
    }
    Ok(0)
}

fn generate(plant: &PlantSource, horizon: Option<usize>, seed: u64, input: InputKind, out: Option<&Path>) -> Result<u8> {
    let model = load_plant(plant)?;
    let horizon = horizon.unwrap_or(match plant.case {
        Some(_) => DemoCase::HORIZON,
        None => corpus_horizon(model.m(), model.n()),
    });
    let law = match input {
        InputKind::Uniform => InputLaw::Uniform01,
        InputKind::Gaussian => InputLaw::Gaussian,
    };
    let ds = generate_experiment(&model, horizon, seed, &law)?;
    match out {
        Some(path) => ds.save_path(path)?,
        None => ds.save(io::stdout().lock(), Format::Csv)?,
    }
    Ok(0)
}

fn read_controller(path: &Path) -> Result<ControllerDesign<f64>> {
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let inner = value.get("controller").cloned().unwrap_or(value);
    Ok(serde_json::from_value(inner)?)
}

fn read_observer(path: &Path) -> Result<ObserverDesign<f64>> {
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let inner = value.get("observer").cloned().unwrap_or(value);
    Ok(serde_json::from_value(inner)?)
}

fn write_trace(trace: &SimulationTrace<f64>, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => trace.write_csv(fs::File::create(path)?),
        None => trace.write_csv(io::stdout().lock()),
    }
}

fn simulate(
    plant: &PlantSource,
    controller: &Path,
    observer: Option<&Path>,
    steps: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<u8> {
    let model = load_plant(plant)?;
    let cd = read_controller(controller)?;
    let x0: DVector<f64> = random_state(model.n(), seed);
    let trace = match observer {
        None => {
            let f_eff = cd.f_eff.clone().unwrap_or_else(|| model.f.clone());
            rollout_state_feedback(&model, &cd.k, &f_eff, &x0, steps)?
        }
        Some(path) => {
            let cls = ClosedLoopSpec::assemble(cd, read_observer(path)?)?;
            rollout_observer_based(&model, &cls, &x0, &DVector::zeros(model.n()), steps)?
        }
    };
    eprintln!(
        "{} steps, final target norm {:e}, overshoot {:.6}{}",
        trace.steps,
        trace.target_norm.last().copied().unwrap_or(0.0),
        trace.overshoot(),
        if trace.diverged { ", diverged" } else { "" }
    );
    write_trace(&trace, out)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct OracleComparison {
    oracle: OracleReport,
    data: ExistenceReport,
    agree: bool,
}

fn oracle(plant: &PlantSource, data: Option<&Path>, tol: &RankTolerance<f64>, out: Option<&Path>) -> Result<u8> {
    let model = load_plant(plant)?;
    let report = oracle_conditions(&model, tol)?;
    eprintln!(
        "model verdict: {} (nesting {}, pencil {}, asymptotic pencil {}, d_min {})",
        report.verdict, report.nesting, report.pencil, report.pencil_asymptotic, report.d_min
    );
    let Some(path) = data else {
        emit_json(&report, out)?;
        return Ok(0);
    };
    let rep = existence_report(&partition(&load_data(path)?)?, tol)?;
    let agree = report.nesting == rep.cond_nesting
        && report.pencil == rep.cond_pencil
        && report.pencil_asymptotic == rep.cond_pencil_asymptotic;
    eprintln!("data verdict: {} (agrees: {agree})", rep.verdict);
    emit_json(&OracleComparison { oracle: report, data: rep, agree }, out)?;
    Ok(if agree { 0 } else { 6 })
}

#[derive(Debug, Serialize)]
struct DemoCheck {
    name: &'static str,
    value: f64,
    limit: f64,
    pass: bool,
    /// Trend checks are reported but do not decide the exit status.
    required: bool,
}

#[derive(Debug, Serialize)]
struct DemoSummary {
    case: &'static str,
    seed: u64,
    verdict: Verdict,
    checks: Vec<DemoCheck>,
    passed: bool,
}

struct Checks(Vec<DemoCheck>);

impl Checks {
    fn at_most(&mut self, name: &'static str, value: f64, limit: f64) {
        self.0.push(DemoCheck { name, value, limit, pass: value <= limit, required: true });
    }

    fn flag(&mut self, name: &'static str, ok: bool) {
        self.0.push(DemoCheck { name, value: f64::from(u8::from(ok)), limit: 1.0, pass: ok, required: true });
    }

    fn trend(&mut self, name: &'static str, value: f64) {
        self.0.push(DemoCheck { name, value, limit: 0.0, pass: value >= 0.0, required: false });
    }
}

struct DemoFiles(Option<PathBuf>);

impl DemoFiles {
    fn json<S: Serialize>(&self, name: &str, value: &S) -> Result<()> {
        match &self.0 {
            Some(dir) => emit_json(value, Some(&dir.join(name))),
            None => Ok(()),
        }
    }

    fn trace(&self, name: &str, trace: &SimulationTrace<f64>) -> Result<()> {
        match &self.0 {
            Some(dir) => write_trace(trace, Some(&dir.join(name))),
            None => Ok(()),
        }
    }

    fn data(&self, ds: &TrajectoryDataset<f64>) -> Result<()> {
        match &self.0 {
            Some(dir) => ds.save_path(dir.join("data.csv")),
            None => Ok(()),
        }
    }
}

fn demo(arg: CaseArg, seed: u64, tol: &RankTolerance<f64>, out: Option<&Path>) -> Result<u8> {
    let which = case(arg);
    let model: PlantModel<f64> = which.plant();
    let (ds, used) = which.experiment(seed, tol)?;
    let files = DemoFiles(out.map(Path::to_path_buf));
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    files.data(&ds)?;
    let dp = partition(&ds)?;
    let rep = existence_report(&dp, tol)?;
    files.json("report.json", &rep)?;
    let mut checks = Checks(Vec::new());
    let x0: DVector<f64> = random_state(model.n(), used);
    let obs_poles = parse_poles(DEMO_OBSERVER_POLES)?;

    let (controller, name) = match which {
        DemoCase::Case1 => {
            checks.flag("verdict_exists", rep.verdict == Verdict::Exists);
            let pair = extract_t1t2(&dp)?;
            let t_err = (&pair.t1 - DMatrix::from_row_slice(1, 2, &[2.0, 2.0]))
                .amax()
                .max((pair.t2[(0, 0)] - 1.0).abs());
            checks.at_most("t1_t2_error", t_err, 1e-6);
            let desired = parse_poles(CASE1_POLES)?;
            let cd = synthesize(&dp, &desired)?;
            checks.at_most("pole_error", eig(&cd.n)?.matching_error(&desired), 1e-8);
            files.json("controller.json", &cd)?;
            (cd, "case1")
        }
        DemoCase::Case2 => {
            checks.flag("nesting_fails", !rep.cond_nesting);
            checks.flag("d_min_is_1", compute_dmin(&ds, model.n(), tol)? == 1);
            let reference_r = DMatrix::from_row_slice(1, 5, &CASE2_REFERENCE_R);
            let conds = check_augmented_conditions(&ds, &reference_r, tol)?;
            checks.flag("reference_r_conditions", conds.nesting_aug && conds.pencil_aug);
            let design: AugmentedDesign<f64> = augmented_pipeline(&ds, &parse_poles(CASE2_POLES)?, model.n(), tol)?;
            checks.flag("order_2", design.controller.order == 2);
            let r = design.augmentation.r.clone();
            let f_eff = design.controller.f_eff.clone().unwrap_or_else(|| model.f.clone());
            let tr = rollout_state_feedback(&model, &design.controller.k, &f_eff, &x0, DEMO_STEPS)?;
            let size = |t: usize| (&model.f * tr.x.column(t)).norm().max((&r * tr.x.column(t)).norm());
            checks.at_most("dual_convergence_ratio", size(DEMO_STEPS) / size(0), 1e-6);
            files.json("augmented.json", &design)?;
            (design.controller, "case2")
        }
    };

    let observer = design_observer(&dp, &obs_poles, tol)?;
    checks.at_most("observer_spectrum_error", eig(&observer.sigma_xp)?.matching_error(&obs_poles), 1e-3);
    checks.at_most("observer_residual", observer.residual, 1e-8);
    files.json("observer.json", &observer)?;
    let cls = ClosedLoopSpec::assemble(controller.clone(), observer)?;
    checks.at_most("separation_error", cls.separation_error()?, 1e-8);

    let f_eff = controller.f_eff.clone().unwrap_or_else(|| model.f.clone());
    let exact = rollout_state_feedback(&model, &controller.k, &f_eff, &x0, DEMO_STEPS)?;
    let observed = rollout_observer_based(&model, &cls, &x0, &DVector::zeros(model.n()), DEMO_STEPS)?;
    checks.trend("observer_overshoot_excess", observed.overshoot() - exact.overshoot());
    files.trace("trace_state_feedback.csv", &exact)?;
    files.trace("trace_observer.csv", &observed)?;

    let passed = checks.0.iter().all(|c| c.pass || !c.required);
    for c in &checks.0 {
        let tag = match (c.pass, c.required) {
            (true, _) => "ok",
            (false, true) => "FAIL",
            (false, false) => "trend not met",
        };
        eprintln!("{name} {:<28} {:>12.4e}  {tag}", c.name, c.value);
    }
    let summary = DemoSummary { case: name, seed: used, verdict: rep.verdict, checks: checks.0, passed };
    match out {
        Some(dir) => {
            emit_json(&summary, Some(&dir.join("summary.json")))?;
            emit_json(&summary, None)?;
        }
        None => emit_json(&summary, None)?,
    }
    Ok(if passed { 0 } else { 6 })
}
