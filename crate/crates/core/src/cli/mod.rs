//! Scenario runner: JSON config in, CSV / JSON / SVG artifacts out.

pub mod counterexample;
pub mod plot;

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::inclusion::{builtin, estimate_lipschitz, parse_system, relax, OutputMap, SampleSpec, SetMap};
use crate::integrate::{
    ac_norm, check_selection, integrate, integrate_relaxed, write_csv, RadiusProfile, TimeGrid, Trajectory,
};
use crate::relaxapprox::{stitch_infinite, ApproxParams, Partition};
use crate::setgeom::Point;
use crate::stability::{
    check_attractivity, estimate_stability_margin, estimate_uniform_attraction, gain_table, lemma54_sup, run_bundle,
    BundleSpec, InitialSet, MarginSpec, OutputSystem, PolicySpec, Region,
};

use counterexample::{counterexample_bounded, counterexample_escape, EscapePolicy};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Simulate,
    Relax,
    Approximate,
    Counterexample,
    Stability,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Relax => "relax",
            Task::Approximate => "approximate",
            Task::Counterexample => "counterexample",
            Task::Stability => "stability",
        }
    }

    pub fn from_name(name: &str) -> Option<Task> {
        [Task::Simulate, Task::Relax, Task::Approximate, Task::Counterexample, Task::Stability]
            .into_iter()
            .find(|t| t.name() == name)
    }

    fn default_system(self) -> &'static str {
        match self {
            Task::Simulate | Task::Stability => "linear_decay",
            Task::Relax | Task::Approximate => "binary_switch",
            Task::Counterexample => "example41",
        }
    }

    /// `(horizon, step)` when the config leaves them out.
    fn default_grid(self) -> (f64, f64) {
        match self {
            Task::Counterexample => (100.0, 1e-3),
            Task::Stability => (10.0, 5e-3),
            _ => (10.0, 0.01),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Builtin(String),
    /// Equation text, e.g. `"dim 1\nx1' = -x1"`.
    Source(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RadiusSpec {
    Value(f64),
    /// Expression in `t`.
    Expr(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    Uniform { step: f64 },
    Geometric { first: f64, ratio: f64, k_max: usize },
    Explicit { times: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    Ball { radius: f64, open: bool },
    /// `{ g <= 0 }`, or `{ g < 0 }` when open.
    Expr { level: String, open: bool },
}

impl RegionSpec {
    fn build(&self, dim: usize) -> Result<Region> {
        match self {
            RegionSpec::Ball { radius, open } => Ok(Region::ball(dim, *radius, *open)),
            RegionSpec::Expr { level, open } => Region::parse(level, *open),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub eps: f64,
    pub escape_policy: EscapePolicy,
    pub escape_horizon: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig {
            eps: 0.1,
            escape_policy: EscapePolicy::Plus,
            escape_horizon: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub eps: f64,
    pub kappa: f64,
    pub kappas: Vec<f64>,
    pub epss: Vec<f64>,
    pub eps_attr: f64,
    pub margin: MarginSpec,
    pub bundle: BundleSpec,
    /// Initial ball for the crossing-time supremum.
    pub c_radius: f64,
    pub phi: RegionSpec,
    pub j: RegionSpec,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            eps: 0.1,
            kappa: 1.0,
            kappas: vec![0.5, 1.0, 2.0],
            epss: vec![0.5, 0.1],
            eps_attr: 1e-3,
            margin: MarginSpec::default(),
            bundle: BundleSpec::default(),
            c_radius: 1.0,
            phi: RegionSpec::Ball { radius: 0.1, open: true },
            j: RegionSpec::Ball { radius: 0.05, open: false },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub task: Option<Task>,
    pub system: Option<SystemSpec>,
    /// Output map expressions; empty means the system's own outputs, else the identity.
    pub outputs: Vec<String>,
    pub x0: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    /// Master seed, copied into every seeded component.
    pub seed: u64,
    pub policy: PolicySpec,
    /// Constant relaxed velocity of the reference.
    pub target: Option<Vec<f64>>,
    pub radius: RadiusSpec,
    pub partition: PartitionSpec,
    pub approx: ApproxParams,
    pub counterexample: CounterexampleConfig,
    pub stability: StabilityConfig,
    pub plot: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            task: None,
            system: None,
            outputs: vec![],
            x0: None,
            horizon: None,
            step: None,
            seed: 0,
            policy: PolicySpec::ConstantAtom { index: 0 },
            target: None,
            radius: RadiusSpec::Value(0.1),
            partition: PartitionSpec::Uniform { step: 1.0 },
            approx: ApproxParams::default(),
            counterexample: CounterexampleConfig::default(),
            stability: StabilityConfig::default(),
            plot: true,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    fn build_system(&self) -> Result<SetMap> {
        match self.system.as_ref() {
            Some(SystemSpec::Builtin(name)) => builtin(name),
            Some(SystemSpec::Source(text)) => parse_system(text),
            None => Err(Error::InvalidInput("no system given".into())),
        }
    }

    /// Fills every default for `task` so that the echo is complete.
    pub fn resolve(mut self, task: Task, ov: &Overrides) -> Result<Self> {
        if let Some(t) = self.task {
            if t != task {
                return Err(Error::InvalidInput(format!(
                    "config is for task {}, invoked as {}",
                    t.name(),
                    task.name()
                )));
            }
        }
        self.task = Some(task);
        if task == Task::Counterexample {
            match &self.system {
                None => {}
                Some(SystemSpec::Builtin(n)) if n == "example41" => {}
                Some(_) => return Err(Error::InvalidInput("counterexample runs the builtin example41 only".into())),
            }
        }
        if self.system.is_none() {
            self.system = Some(SystemSpec::Builtin(task.default_system().into()));
        }
        let (h0, s0) = task.default_grid();
        if task == Task::Stability {
            self.horizon = ov.horizon.or(self.horizon).or(Some(self.stability.bundle.horizon));
            self.step = ov.step.or(self.step).or(Some(self.stability.bundle.step));
        } else {
            self.horizon = ov.horizon.or(self.horizon).or(Some(h0));
            self.step = ov.step.or(self.step).or(Some(s0));
        }
        let horizon = self.horizon.unwrap_or(h0);
        let step = self.step.unwrap_or(s0);
        if !(horizon > 0.0 && horizon.is_finite()) || !(step > 0.0 && step <= horizon) {
            return Err(Error::InvalidInput(format!("bad grid: horizon {horizon}, step {step}")));
        }
        self.stability.bundle.horizon = horizon;
        self.stability.bundle.step = step;
        if let Some(s) = ov.seed {
            self.seed = s;
        }
        let seed = self.seed;
        self.approx.seed = seed;
        self.stability.bundle.seed = seed;
        if let PolicySpec::Random { seed: s } = &mut self.policy {
            *s = seed;
        }
        for p in &mut self.stability.bundle.policies {
            if let PolicySpec::Random { seed: s } = p {
                *s = seed;
            }
        }
        let f = self.build_system()?;
        let n = f.dim();
        let x0 = self.x0.get_or_insert_with(|| vec![0.0; n]);
        if x0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x0.len(),
            });
        }
        let tg = self.target.get_or_insert_with(|| vec![0.0; n]);
        if tg.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: tg.len(),
            });
        }
        if self.outputs.is_empty() {
            self.outputs = f
                .system()
                .and_then(|s| s.output_map())
                .map(|h| h.describe())
                .unwrap_or_else(|| (1..=n).map(|i| format!("x{i}")).collect());
        }
        Ok(self)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub task: Task,
    pub status: &'static str,
    pub exit_code: i32,
    pub error: Option<ErrorInfo>,
    pub config: Option<Scenario>,
    pub result: Option<Value>,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

pub struct Outcome {
    pub exit_code: i32,
    pub report: Report,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "invalid_input",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::NotInHull { .. } => "not_in_hull",
        Error::Parse { .. } => "parse",
        Error::Domain { .. } => "domain",
        Error::Divergence { .. } => "divergence",
        Error::RadiusFloor { .. } => "radius_floor",
        Error::SegmentFailure { .. } => "segment_failure",
        Error::ConstructionFailure(_) => "construction_failure",
        Error::NonConvergence { .. } => "non_convergence",
        Error::TubeViolation { .. } => "tube_violation",
        Error::Verification(_) => "verification",
        Error::Io(_) => "io",
    }
}

fn run_exit_code(e: &Error) -> i32 {
    match e {
        Error::Verification(_) => EXIT_VERIFICATION,
        Error::InvalidInput(_) | Error::Parse { .. } | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::from(e)
    })
}

pub fn to_json_pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

struct Artifacts<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Artifacts<'_> {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, x: &Trajectory) -> Result<()> {
        let mut buf = Vec::new();
        write_csv(x, &mut buf)?;
        self.put(name, &buf)
    }

    fn svg(&mut self, name: &str, series: &[plot::Series<'_>], tube: Option<&plot::Tube<'_>>) -> Result<()> {
        let s = plot::render(series, tube)?;
        self.put(name, s.as_bytes())
    }
}

const TUBE_NOTE: &str = "tube containment is checked at grid nodes and along linear interpolation between them";
const EMPIRICAL_NOTE: &str = "stability verdicts are empirical over the sampled bundle; starts are also bounded by |xi| <= r_init";

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(e.to_string()))
}

fn step_guidance(f: &SetMap, x: &Trajectory, sc: &Scenario) -> Result<Value> {
    let radius = x.states().iter().map(|p| p.norm()).fold(0.0, f64::max) + sc.approx.margin;
    let mut spec = SampleSpec::new(radius, 5);
    spec.seed = sc.seed;
    spec.t_range = (x.t0(), x.t_end());
    let est = estimate_lipschitz(f, &spec)?;
    let bound = if est.k_hat > 0.0 {
        sc.approx.h_max.min(0.1 / est.k_hat)
    } else {
        sc.approx.h_max
    };
    Ok(json!({
        "k_hat": est.k_hat,
        "radius": radius,
        "recommended_max_step": bound,
        "step": sc.step,
        "within_guidance": sc.step.is_some_and(|h| h <= bound),
    }))
}

fn grid_of(sc: &Scenario) -> Result<TimeGrid> {
    TimeGrid::uniform(0.0, sc.horizon.unwrap_or(10.0), sc.step.unwrap_or(0.01))
}

fn point(v: &Option<Vec<f64>>) -> Result<Point> {
    Point::new(v.clone().unwrap_or_default())
}

fn radius_of(sc: &Scenario) -> Result<RadiusProfile> {
    match &sc.radius {
        RadiusSpec::Value(r) => RadiusProfile::constant(*r),
        RadiusSpec::Expr(s) => RadiusProfile::parse(s),
    }
}

fn partition_of(sc: &Scenario) -> Result<Partition> {
    let horizon = sc.horizon.unwrap_or(10.0);
    match &sc.partition {
        PartitionSpec::Uniform { step } => Partition::uniform(*step, horizon),
        PartitionSpec::Geometric { first, ratio, k_max } => Partition::geometric(*first, *ratio, horizon, *k_max),
        PartitionSpec::Explicit { times } => Partition::explicit(times.clone()),
    }
}

fn output_map(sc: &Scenario, dim: usize) -> Result<OutputMap> {
    let refs: Vec<&str> = sc.outputs.iter().map(String::as_str).collect();
    OutputMap::parse(&refs, dim)
}

fn relaxed_reference(f: &SetMap, sc: &Scenario) -> Result<Trajectory> {
    let v = point(&sc.target)?;
    let target = move |_: f64, _: &Point| v.clone();
    integrate_relaxed(f, &target, &point(&sc.x0)?, &grid_of(sc)?)
}

fn task_simulate(f: &SetMap, sc: &Scenario, out: &mut Artifacts<'_>) -> Result<Value> {
    let x = integrate(f, &sc.policy.to_policy(f.dim()), &point(&sc.x0)?, &grid_of(sc)?)?;
    let sel = check_selection(&x, f)?;
    out.csv("trajectory.csv", &x)?;
    if sc.plot {
        out.svg("plot.svg", &[plot::Series { label: "x", trajectory: &x }], None)?;
    }
    Ok(json!({
        "nodes": x.len(),
        "final_state": x.last(),
        "ac_norm": ac_norm(&x),
        "selection_distance": sel,
        "euler_defect": x.euler_defect(),
        "step_guidance": step_guidance(f, &x, sc)?,
    }))
}

fn task_relax(f: &SetMap, sc: &Scenario, out: &mut Artifacts<'_>) -> Result<Value> {
    let z = relaxed_reference(f, sc)?;
    let sel = check_selection(&z, &relax(f))?;
    out.csv("trajectory.csv", &z)?;
    if sc.plot {
        out.svg("plot.svg", &[plot::Series { label: "z", trajectory: &z }], None)?;
    }
    let max_atoms = z.weights().map(|w| w.iter().map(|c| c.atoms.len()).max().unwrap_or(0));
    Ok(json!({
        "nodes": z.len(),
        "final_state": z.last(),
        "ac_norm": ac_norm(&z),
        "selection_distance": sel,
        "max_atoms": max_atoms,
        "step_guidance": step_guidance(f, &z, sc)?,
    }))
}

fn task_approximate(f: &SetMap, sc: &Scenario, out: &mut Artifacts<'_>) -> Result<Value> {
    let z = relaxed_reference(f, sc)?;
    let r = radius_of(sc)?;
    let p = partition_of(sc)?;
    let (gamma, report) = stitch_infinite(f, &z, &r, &p, &sc.approx)?;
    out.csv("reference.csv", &z)?;
    out.csv("trajectory.csv", &gamma)?;
    if sc.plot {
        out.svg(
            "plot.svg",
            &[
                plot::Series { label: "gamma", trajectory: &gamma },
                plot::Series { label: "z", trajectory: &z },
            ],
            Some(&plot::Tube { center: &z, radius: &r }),
        )?;
    }
    let mut v = to_value(&report)?;
    v["radius"] = json!(r.describe());
    v["step_guidance"] = step_guidance(f, &z, sc)?;
    v["note"] = json!(TUBE_NOTE);
    Ok(v)
}

fn task_counterexample(sc: &Scenario, out: &mut Artifacts<'_>) -> Result<(Value, Option<Error>)> {
    let cfg = &sc.counterexample;
    let h = sc.step.unwrap_or(1e-3);
    let horizon = sc.horizon.unwrap_or(100.0);
    let (esc, x_esc) = counterexample_escape(cfg.eps, &cfg.escape_policy, cfg.escape_horizon, h)?;
    let (bnd, x_bnd, x_zero) = counterexample_bounded(cfg.eps, horizon, h)?;
    out.csv("escape.csv", &x_esc)?;
    out.csv("bounded.csv", &x_bnd)?;
    out.csv("bounded_from_origin.csv", &x_zero)?;
    if sc.plot {
        let zero = Trajectory::constant(&TimeGrid::uniform(0.0, esc.horizon, h)?, &Point::zeros(3));
        let r = RadiusProfile::constant(cfg.eps)?;
        out.svg(
            "escape.svg",
            &[plot::Series { label: "escape", trajectory: &x_esc }],
            Some(&plot::Tube { center: &zero, radius: &r }),
        )?;
        out.svg("bounded.svg", &[plot::Series { label: "bounded", trajectory: &x_bnd }], None)?;
    }
    let mut failure = None;
    if !esc.bound_check {
        failure = Some(Error::Verification(format!(
            "escape lower bound broken (worst x1 margin {})",
            esc.worst_x1_margin
        )));
    } else if !bnd.ok {
        failure = Some(Error::Verification(format!("bounded witness left the tube (sup {})", bnd.sup_norm)));
    }
    let v = json!({
        "escape": esc,
        "bounded": bnd,
        "extrapolation": "x1 and x2 are nondecreasing with finite limits, so the bounded witness stays in its box after the horizon; this is an analytic argument, not a numerical check",
    });
    Ok((v, failure))
}

fn task_stability(f: SetMap, sc: &Scenario) -> Result<Value> {
    let h = output_map(sc, f.dim())?;
    let sys = OutputSystem::new(f, h)?;
    let st = &sc.stability;
    let dim = sys.f.dim();
    let margin = estimate_stability_margin(&sys, st.eps, &st.margin, &st.bundle)?;
    let attraction = estimate_uniform_attraction(&sys, st.kappa, st.eps, &st.bundle)?;
    let gains = gain_table(&sys, &st.kappas, &st.epss, &st.bundle)?;
    let starts = InitialSet::Ball { radius: st.kappa }.samples(dim, &st.bundle);
    let b = run_bundle(&sys.f, &starts, &st.bundle)?;
    let attractivity = check_attractivity(&b, &sys.h, st.bundle.horizon, st.eps_attr)?;
    let ydim = sys.h.dim_out();
    let lemma = lemma54_sup(
        &sys,
        &InitialSet::Ball { radius: st.c_radius },
        &st.phi.build(ydim)?,
        &st.j.build(ydim)?,
        &st.bundle,
    )?;
    Ok(json!({
        "margin": margin,
        "attraction": attraction,
        "gain_table": gains,
        "attractivity": attractivity,
        "crossing_sup": lemma,
        "note": EMPIRICAL_NOTE,
    }))
}

/// Runs a resolved scenario and writes its artifacts and `report.json` into `dir`.
pub fn run(task: Task, config: std::result::Result<Scenario, Error>, ov: &Overrides, dir: &Path) -> Outcome {
    let mut art = Artifacts { dir, written: vec![] };
    let mut notes = vec![];
    let resolved = config.and_then(|c| c.resolve(task, ov));
    let (config, result, err, code) = match resolved {
        Err(e) => (None, None, Some(e), EXIT_CONFIG),
        Ok(sc) => {
            let f = sc.build_system();
            let res = match f {
                Err(e) => Err((e, EXIT_CONFIG)),
                Ok(f) => {
                    let r = match task {
                        Task::Simulate => task_simulate(&f, &sc, &mut art).map(|v| (v, None)),
                        Task::Relax => task_relax(&f, &sc, &mut art).map(|v| (v, None)),
                        Task::Approximate => {
                            notes.push(TUBE_NOTE.to_string());
                            task_approximate(&f, &sc, &mut art).map(|v| (v, None))
                        }
                        Task::Counterexample => task_counterexample(&sc, &mut art),
                        Task::Stability => {
                            notes.push(EMPIRICAL_NOTE.to_string());
                            task_stability(f, &sc).map(|v| (v, None))
                        }
                    };
                    r.map_err(|e| {
                        let c = run_exit_code(&e);
                        (e, c)
                    })
                }
            };
            match res {
                Ok((v, None)) => (Some(sc), Some(v), None, EXIT_OK),
                Ok((v, Some(e))) => (Some(sc), Some(v), Some(e), EXIT_VERIFICATION),
                Err((e, c)) => (Some(sc), None, Some(e), c),
            }
        }
    };
    let mut report = Report {
        schema_version: SCHEMA_VERSION,
        task,
        status: if code == EXIT_OK { "ok" } else { "error" },
        exit_code: code,
        error: err.as_ref().map(|e| ErrorInfo {
            kind: error_kind(e),
            message: e.to_string(),
        }),
        config,
        result,
        files: art.written.clone(),
        notes,
    };
    report.files.push("report.json".into());
    let mut exit_code = code;
    let written = to_json_pretty(&report).and_then(|s| write_atomic(&dir.join("report.json"), s.as_bytes()));
    if let Err(e) = written {
        report.status = "error";
        if exit_code == EXIT_OK {
            exit_code = EXIT_NUMERIC;
        }
        report.exit_code = exit_code;
        report.error.get_or_insert(ErrorInfo {
            kind: "io",
            message: e.to_string(),
        });
    }
    Outcome { exit_code, report }
}

/// Reads the config file (if any) and runs; the config error, if any, lands in the report.
pub fn run_files(task: Task, config: Option<&Path>, ov: &Overrides, dir: &Path) -> Outcome {
    let sc = match config {
        None => Ok(Scenario::default()),
        Some(p) => fs::read_to_string(p)
            .map_err(Error::from)
            .and_then(|s| Scenario::from_json(&s)),
    };
    if let Err(e) = fs::create_dir_all(dir) {
        let err = Error::from(e);
        return Outcome {
            exit_code: EXIT_NUMERIC,
            report: Report {
                schema_version: SCHEMA_VERSION,
                task,
                status: "error",
                exit_code: EXIT_NUMERIC,
                error: Some(ErrorInfo {
                    kind: error_kind(&err),
                    message: err.to_string(),
                }),
                config: None,
                result: None,
                files: vec![],
                notes: vec![],
            },
        };
    }
    run(task, sc, ov, dir)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_echoes_defaults() {
        let sc = Scenario::from_json(r#"{"system": {"builtin": "linear_decay"}, "horizon": 2}"#).unwrap();
        let r = sc.resolve(Task::Simulate, &Overrides::default()).unwrap();
        assert_eq!(r.step, Some(0.01));
        assert_eq!(r.x0, Some(vec![0.0]));
        assert_eq!(r.outputs, vec!["x1".to_string()]);
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(Scenario::from_json(&text).unwrap(), r);
    }

    #[test]
    fn unknown_fields_and_task_mismatch_are_config_errors() {
        assert!(Scenario::from_json(r#"{"horizn": 2}"#).is_err());
        let sc = Scenario::from_json(r#"{"task": "relax"}"#).unwrap();
        assert!(sc.resolve(Task::Simulate, &Overrides::default()).is_err());
        let sc = Scenario::from_json(r#"{"x0": [1, 2]}"#).unwrap();
        assert!(matches!(
            sc.resolve(Task::Simulate, &Overrides::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn seed_override_reaches_components() {
        let sc = Scenario::from_json(r#"{"policy": {"kind": "random", "seed": 3}}"#).unwrap();
        let r = sc
            .resolve(
                Task::Simulate,
                &Overrides {
                    seed: Some(9),
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(r.policy, PolicySpec::Random { seed: 9 });
        assert_eq!(r.approx.seed, 9);
        assert_eq!(r.stability.bundle.seed, 9);
    }

    #[test]
    fn atomic_write_replaces() {
        let d = std::env::temp_dir().join(format!("relaxtube-atomic-{}", std::process::id()));
        fs::create_dir_all(&d).unwrap();
        let p = d.join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(&d).unwrap().count(), 1);
        fs::remove_dir_all(&d).unwrap();
    }
}
