//! Experiment configurations, figure presets, parameter sweeps and their artifacts.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinetics::{positive_equilibria, ModelVariant};
use crate::params::{ModelParameters, DEFAULT_K};
use crate::pdesim::{blocking_verdict, front_position, initial_front, run, BlockingVerdict, Grid, PdeError, ReleaseProfile, SpaceTimeRecord, VerdictOptions};
use crate::waves::{critical_by_predicate, BarrierOptions, CriticalRelease, PhasePlane, WavesError, TOL_RELEASE};

/// One invalid configuration entry, addressed by its JSON path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Config(Vec<ConfigIssue>),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Waves(#[from] WavesError),
    #[error("I/O: {0}")]
    Io(#[from] io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown figure `{0}` (expected one of tw, 1, 2, 3, 4, 5)")]
    UnknownFigure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReleaseSpec {
    None,
    /// `U_bar` on `[start, start + length]`.
    Band { u_bar: f64, start: f64, length: f64 },
    /// `U_bar` on the whole domain.
    Everywhere { u_bar: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    /// Invaded state left of `x0`, empty right of it. `f_plus` defaults to the
    /// invaded female density; `ms` is a uniform initial sterile density.
    Front {
        x0: f64,
        #[serde(default)]
        f_plus: Option<f64>,
        #[serde(default)]
        ms: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub parameters: ModelParameters<f64>,
    pub variant: ModelVariant,
    pub grid: GridSpec,
    pub release: ReleaseSpec,
    pub initial: InitialSpec,
    pub t_end: f64,
    pub dt: f64,
    /// Keep every n-th step.
    pub snapshot_every: usize,
    /// Blocking test; omitted for runs without a verdict.
    #[serde(default)]
    pub verdict: Option<VerdictOptions<f64>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Command-line overrides applied on top of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Overrides {
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    /// Sets `t_end` and the verdict horizon.
    pub horizon: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self, ExperimentError> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dx) = o.dx {
            self.grid.dx = dx;
        }
        if let Some(dt) = o.dt {
            self.dt = dt;
        }
        if let Some(h) = o.horizon {
            self.t_end = h;
            if let Some(v) = self.verdict.as_mut() {
                v.horizon = h;
            }
        }
    }

    /// Reports every problem at once, each with its JSON path.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let mut issues = Vec::new();
        let mut bad = |path: &str, message: &str| issues.push(ConfigIssue { path: path.to_string(), message: message.to_string() });
        if let Err(e) = self.parameters.validate() {
            for v in e.violations() {
                bad(&format!("parameters.{}", v.field), &v.message);
            }
        }
        let g = &self.grid;
        if !(g.dx > 0.0) {
            bad("grid.dx", "must be positive");
        }
        if !(g.x_min < g.x_max) {
            bad("grid.x_max", "must exceed grid.x_min");
        } else if g.dx > 0.0 && (g.x_max - g.x_min) / g.dx + 1.0 < crate::pdesim::MIN_NODES as f64 {
            bad("grid.dx", "grid would have fewer than 16 nodes");
        }
        match self.release {
            ReleaseSpec::None => {}
            ReleaseSpec::Band { u_bar, start, length } => {
                if !(u_bar >= 0.0) {
                    bad("release.u_bar", "must be >= 0");
                }
                if !(length > 0.0) {
                    bad("release.length", "must be positive");
                }
                if !(start >= g.x_min && start + length <= g.x_max) {
                    bad("release.start", "zone must lie inside the grid");
                }
            }
            ReleaseSpec::Everywhere { u_bar } => {
                if !(u_bar >= 0.0) {
                    bad("release.u_bar", "must be >= 0");
                }
            }
        }
        let InitialSpec::Front { x0, f_plus, ms } = self.initial;
        if !(x0 >= g.x_min && x0 <= g.x_max) {
            bad("initial.x0", "must lie inside the grid");
        }
        if let Some(f) = f_plus {
            if !(f >= 0.0) {
                bad("initial.f_plus", "must be >= 0");
            }
        }
        if !(ms >= 0.0) {
            bad("initial.ms", "must be >= 0");
        }
        if !(self.t_end > 0.0) {
            bad("t_end", "must be positive");
        }
        if !(self.dt > 0.0) {
            bad("dt", "must be positive");
        } else if self.dt > self.t_end {
            bad("dt", "must not exceed t_end");
        }
        if self.snapshot_every == 0 {
            bad("snapshot_every", "must be >= 1");
        }
        if let Some(v) = &self.verdict {
            if !(v.horizon > 0.0 && v.horizon <= self.t_end) {
                bad("verdict.horizon", "must lie in (0, t_end]");
            }
            if !(v.threshold_fraction > 0.0) {
                bad("verdict.threshold_fraction", "must be positive");
            }
            match self.release {
                ReleaseSpec::Band { start, length, .. } if start + length + v.probe_offset > g.x_max => {
                    bad("verdict.probe_offset", "probe lies beyond the grid");
                }
                ReleaseSpec::Band { .. } => {}
                _ => bad("release", "a verdict needs a band release"),
            }
        }
        if self.parameters.validate().is_ok() && positive_equilibria(0.0, &self.parameters).invaded().is_none() && matches!(self.initial, InitialSpec::Front { f_plus: None, .. }) {
            bad("initial.f_plus", "no invaded equilibrium to default to; give f_plus");
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ExperimentError::Config(issues))
        }
    }

    pub fn grid(&self) -> Result<Grid<f64>, PdeError> {
        Grid::with_spacing(self.grid.x_min, self.grid.x_max, self.grid.dx)
    }

    pub fn release_profile(&self) -> Result<ReleaseProfile<f64>, PdeError> {
        match self.release {
            ReleaseSpec::None => Ok(ReleaseProfile::none()),
            ReleaseSpec::Band { u_bar, start, length } => ReleaseProfile::band(u_bar, start, length),
            ReleaseSpec::Everywhere { u_bar } => Ok(ReleaseProfile::everywhere(u_bar)),
        }
    }

    /// Invaded female density in the reduced coordinate (the `f_plus` default).
    pub fn invaded_density(&self) -> Option<f64> {
        positive_equilibria(0.0, &self.parameters).invaded()
    }
}

/// Result of one configuration.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub record: SpaceTimeRecord<f64>,
    pub verdict: Option<BlockingVerdict<f64>>,
}

impl ExperimentOutcome {
    /// Front position of the final field at half the invaded density.
    pub fn final_front(&self) -> Option<f64> {
        let level = self.config.invaded_density()? / 2.0;
        front_position(self.record.final_field(), level)
    }
}

/// Runs a configuration and, when it names an output directory, writes the
/// space-time CSVs, `meta.json` (with the verdict), `plot.gp`, the final
/// profile and the exact configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    config.validate()?;
    let grid = config.grid()?;
    let p = &config.parameters;
    let InitialSpec::Front { x0, f_plus, ms } = config.initial;
    let f_plus = f_plus.or_else(|| config.invaded_density()).expect("validated");
    let mut init = initial_front(grid, f_plus, x0, config.variant, p)?;
    if ms > 0.0 {
        let c = config.variant.sterile_index();
        init.values[c].iter_mut().for_each(|v| *v = ms);
    }
    let release = config.release_profile()?;
    let record = run(init, &release, config.t_end, config.dt, p, config.snapshot_every)?;
    let verdict = match &config.verdict {
        Some(opts) => Some(blocking_verdict(&record, opts)?),
        None => None,
    };
    let outcome = ExperimentOutcome { config: config.clone(), record, verdict };
    if let Some(dir) = &config.output_dir {
        write_outcome(&outcome, dir)?;
    }
    Ok(outcome)
}

fn write_outcome(o: &ExperimentOutcome, dir: &Path) -> Result<(), ExperimentError> {
    o.record.write_dir(dir, o.verdict.clone())?;
    fs::write(dir.join("config.json"), o.config.to_json_pretty())?;
    let mut w = io::BufWriter::new(fs::File::create(dir.join("profile.csv"))?);
    o.record.final_field().write_profile_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Preset layout shared by the figure runs.
pub const PRESET_MARGIN: f64 = 40.0;
pub const PRESET_DX: f64 = 0.05;
pub const PRESET_DT: f64 = 0.1;
pub const PRESET_X0: f64 = -20.0;
pub const PRESET_HORIZON: f64 = 2000.0;
pub const PRESET_SNAPSHOT_EVERY: usize = 100;
/// Profile time of the travelling-wave comparison.
pub const TW_TIME: f64 = 140.0;

/// Verdict run: band `[0, L]`, domain `[-40, L + 40]`, front at `x = -20`.
pub fn verdict_preset(name: &str, variant: ModelVariant, beta_infinite: bool, l: f64, u_bar: f64) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        parameters: ModelParameters::reference(DEFAULT_K).with_beta_infinite(beta_infinite),
        variant,
        grid: GridSpec { x_min: -PRESET_MARGIN, x_max: l + PRESET_MARGIN, dx: PRESET_DX },
        release: ReleaseSpec::Band { u_bar, start: 0.0, length: l },
        initial: InitialSpec::Front { x0: PRESET_X0, f_plus: None, ms: 0.0 },
        t_end: PRESET_HORIZON,
        dt: PRESET_DT,
        snapshot_every: PRESET_SNAPSHOT_EVERY,
        verdict: Some(VerdictOptions { horizon: PRESET_HORIZON, ..VerdictOptions::default() }),
        output_dir: None,
    }
}

/// Free invasion without release up to `TW_TIME`.
pub fn wave_preset(name: &str, variant: ModelVariant) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        parameters: ModelParameters::reference(DEFAULT_K),
        variant,
        grid: GridSpec { x_min: -PRESET_MARGIN, x_max: PRESET_MARGIN, dx: PRESET_DX },
        release: ReleaseSpec::None,
        initial: InitialSpec::Front { x0: PRESET_X0, f_plus: None, ms: 0.0 },
        t_end: TW_TIME,
        dt: PRESET_DT,
        snapshot_every: 50,
        verdict: None,
        output_dir: None,
    }
}

/// Panel configurations of a figure id (`tw`, `1` ... `5`).
pub fn figure_presets(id: &str) -> Result<Vec<ExperimentConfig>, ExperimentError> {
    use ModelVariant::*;
    let band = |variant, binf, l, u: f64, tag: &str| verdict_preset(&format!("fig{id}-{tag}"), variant, binf, l, u);
    Ok(match id {
        "tw" => vec![wave_preset("figtw-full", Full), wave_preset("figtw-reduced", Reduced)],
        "1" => vec![band(Full, false, 5.0, 10_000.0, "left"), band(Full, false, 5.0, 15_000.0, "center"), band(Full, false, 5.0, 20_000.0, "right")],
        "2" => vec![
            band(Reduced, false, 5.0, 10_000.0, "left"),
            band(Reduced, false, 5.0, 15_000.0, "center"),
            band(Reduced, false, 5.0, 20_000.0, "right"),
        ],
        "3" => vec![band(Full, true, 10.0, 20_000.0, "left"), band(Full, true, 10.0, 30_000.0, "right")],
        "4" => vec![
            band(Fertilized, false, 5.0, 10_000.0, "left"),
            band(Fertilized, false, 5.0, 20_000.0, "center"),
            band(Fertilized, false, 5.0, 30_000.0, "right"),
        ],
        "5" => vec![
            band(Fertilized, false, 10.0, 20_000.0, "left"),
            band(Fertilized, true, 10.0, 30_000.0, "center"),
            band(Fertilized, true, 10.0, 40_000.0, "right"),
        ],
        other => return Err(ExperimentError::UnknownFigure(other.to_string())),
    })
}

/// One row of a figure's verdict table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelResult {
    pub name: String,
    pub variant: ModelVariant,
    pub beta_infinite: bool,
    pub length: Option<f64>,
    pub u_bar: Option<f64>,
    pub blocked: Option<bool>,
    pub breakthrough_time: Option<f64>,
    /// Front position (half invaded density) at the end of the run.
    pub final_front: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureReport {
    pub id: String,
    pub panels: Vec<PanelResult>,
}

impl FigureReport {
    pub fn write_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "panel,variant,beta_infinite,L,U_bar,blocked,breakthrough_time,final_front")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.panels {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                p.name,
                p.variant.name(),
                p.beta_infinite,
                opt(p.length),
                opt(p.u_bar),
                p.blocked.map(|b| b.to_string()).unwrap_or_default(),
                opt(p.breakthrough_time),
                opt(p.final_front)
            )?;
        }
        Ok(())
    }
}

/// Runs every panel of a figure concurrently. With `out`, each panel writes
/// into `out/<panel name>/`, and `out/verdicts.csv` holds the table.
pub fn reproduce_figure(id: &str, overrides: &Overrides, out: Option<&Path>) -> Result<FigureReport, ExperimentError> {
    let mut configs = figure_presets(id)?;
    for c in &mut configs {
        c.apply(overrides);
        c.output_dir = out.map(|o| o.join(&c.name));
    }
    let outcomes: Vec<ExperimentOutcome> = configs.par_iter().map(run_experiment).collect::<Result<_, _>>()?;
    let panels = outcomes
        .iter()
        .map(|o| {
            let (length, u_bar) = match o.config.release {
                ReleaseSpec::Band { u_bar, length, .. } => (Some(length), Some(u_bar)),
                ReleaseSpec::Everywhere { u_bar } => (None, Some(u_bar)),
                ReleaseSpec::None => (None, None),
            };
            PanelResult {
                name: o.config.name.clone(),
                variant: o.config.variant,
                beta_infinite: o.config.parameters.beta_infinite,
                length,
                u_bar,
                blocked: o.verdict.as_ref().map(|v| v.blocked),
                breakthrough_time: o.verdict.as_ref().and_then(|v| v.breakthrough_time),
                final_front: o.final_front(),
            }
        })
        .collect();
    let report = FigureReport { id: id.to_string(), panels };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        report.write_table(io::BufWriter::new(fs::File::create(dir.join("verdicts.csv"))?))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMethod {
    Simulation,
    Geometric,
    Both,
}

/// Bisection settings for the critical release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BisectionSpec {
    pub lo: f64,
    pub hi: f64,
    /// Relative tolerance for the geometric bisection.
    #[serde(default = "default_geometric_tol")]
    pub geometric_rel_tol: f64,
    /// Relative tolerance for the simulation bisection.
    #[serde(default = "default_simulation_tol")]
    pub simulation_rel_tol: f64,
}

fn default_geometric_tol() -> f64 {
    TOL_RELEASE
}

fn default_simulation_tol() -> f64 {
    SIMULATION_REL_TOL
}

/// Relative bisection tolerance on `U_bar` for simulation verdicts.
pub const SIMULATION_REL_TOL: f64 = 2e-3;
/// Horizon of simulation verdicts inside critical-release sweeps. Close to
/// the critical curve the front settles slowly, so the stall rule needs more
/// time than the figure presets use.
pub const SWEEP_HORIZON: f64 = 8000.0;
/// Relative allowance, against `U*`, for the residual creep a finite
/// horizon leaves near the critical curve.
pub const SIMULATION_HORIZON_ALLOWANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_parameters")]
    pub parameters: ModelParameters<f64>,
    pub lengths: Vec<f64>,
    pub method: SweepMethod,
    /// Fixed release values: one verdict per `(L, U_bar)` cell.
    #[serde(default)]
    pub releases: Option<Vec<f64>>,
    /// Critical-release search, used when `releases` is absent.
    #[serde(default)]
    pub bisection: Option<BisectionSpec>,
    /// Model used for simulation verdicts.
    #[serde(default = "default_sweep_variant")]
    pub variant: ModelVariant,
    #[serde(default = "default_dx")]
    pub dx: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Relative agreement allowance on top of both bisection tolerances.
    #[serde(default = "default_allowance")]
    pub agreement_allowance: f64,
}

fn default_parameters() -> ModelParameters<f64> {
    ModelParameters::reference(DEFAULT_K)
}
fn default_sweep_variant() -> ModelVariant {
    ModelVariant::Reduced
}
fn default_dx() -> f64 {
    PRESET_DX
}
fn default_dt() -> f64 {
    PRESET_DT
}
fn default_horizon() -> f64 {
    SWEEP_HORIZON
}
fn default_allowance() -> f64 {
    SIMULATION_HORIZON_ALLOWANCE
}

impl SweepSpec {
    pub fn from_json_str(s: &str) -> Result<Self, ExperimentError> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let mut issues = Vec::new();
        let mut bad = |path: &str, message: &str| issues.push(ConfigIssue { path: path.into(), message: message.into() });
        if let Err(e) = self.parameters.validate() {
            for v in e.violations() {
                bad(&format!("parameters.{}", v.field), &v.message);
            }
        }
        if self.lengths.is_empty() {
            bad("lengths", "must be nonempty");
        }
        if self.lengths.iter().any(|l| !(*l > 0.0)) {
            bad("lengths", "every length must be positive");
        }
        match (&self.releases, &self.bisection) {
            (Some(r), _) if r.is_empty() => bad("releases", "must be nonempty"),
            (Some(r), _) if r.iter().any(|u| !(*u >= 0.0)) => bad("releases", "every release must be >= 0"),
            (None, None) => bad("bisection", "give either releases or bisection"),
            (None, Some(b)) if !(b.lo > 0.0 && b.lo < b.hi) => bad("bisection.lo", "need 0 < lo < hi"),
            _ => {}
        }
        if self.releases.is_some() && self.method == SweepMethod::Both {
            bad("method", "fixed-release sweeps take simulation or geometric");
        }
        if !(self.dx > 0.0) {
            bad("dx", "must be positive");
        }
        if !(self.dt > 0.0) {
            bad("dt", "must be positive");
        }
        if !(self.horizon > 0.0) {
            bad("horizon", "must be positive");
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ExperimentError::Config(issues))
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dx) = o.dx {
            self.dx = dx;
        }
        if let Some(dt) = o.dt {
            self.dt = dt;
        }
        if let Some(h) = o.horizon {
            self.horizon = h;
        }
    }

    /// Simulation verdict configuration for one `(L, U_bar)` cell.
    pub fn cell_config(&self, l: f64, u_bar: f64) -> ExperimentConfig {
        let mut c = verdict_preset(&format!("L{l}-U{u_bar}"), self.variant, self.parameters.beta_infinite, l, u_bar);
        c.parameters = self.parameters;
        c.grid.dx = self.dx;
        c.dt = self.dt;
        c.t_end = self.horizon;
        c.verdict = Some(VerdictOptions { horizon: self.horizon, ..VerdictOptions::default() });
        c
    }

    pub fn simulation_blocks(&self, l: f64, u_bar: f64) -> Result<bool, ExperimentError> {
        let out = run_experiment(&self.cell_config(l, u_bar))?;
        Ok(out.verdict.expect("cell config carries a verdict").blocked)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    /// No barrier (or no blocking) even at the top of the bracket.
    NoBarrierAtCap,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalCell {
    pub l: f64,
    pub method: SweepMethod,
    pub bracket: Option<CriticalRelease<f64>>,
    pub status: CellStatus,
}

impl CriticalCell {
    pub fn u_star(&self) -> Option<f64> {
        self.bracket.map(|b| b.estimate())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictCell {
    pub l: f64,
    pub u_bar: f64,
    pub method: SweepMethod,
    pub blocked: Option<bool>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub critical: Vec<CriticalCell>,
    pub verdicts: Vec<VerdictCell>,
    /// Per length, in both-mode: whether the two critical values agree.
    pub agreement: Vec<(f64, Option<bool>)>,
}

/// Allowed gap between geometric and simulation critical values: both
/// bisection brackets plus `allowance * U*`.
pub fn agreement_band(geo: &CriticalRelease<f64>, sim: &CriticalRelease<f64>, allowance: f64) -> f64 {
    (geo.hi - geo.lo) + (sim.hi - sim.lo) + allowance * geo.estimate().max(sim.estimate())
}

fn critical_cell(l: f64, method: SweepMethod, r: Result<Option<CriticalRelease<f64>>, ExperimentError>) -> CriticalCell {
    let (bracket, status) = match r {
        Ok(Some(b)) => (Some(b), CellStatus::Ok),
        Ok(None) => (None, CellStatus::NoBarrierAtCap),
        Err(e) => (None, CellStatus::Error(e.to_string())),
    };
    CriticalCell { l, method, bracket, status }
}

/// Critical release per length, or verdicts per `(L, U_bar)` cell. Cells run
/// concurrently; failures are recorded per cell.
pub fn sweep(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    spec.validate()?;
    let p = spec.parameters;
    let opts = BarrierOptions::default();
    let plane = match spec.method {
        SweepMethod::Simulation => None,
        _ => Some(PhasePlane::new(&p)?),
    };
    if let Some(releases) = &spec.releases {
        let cells: Vec<(f64, f64)> = spec.lengths.iter().flat_map(|l| releases.iter().map(move |u| (*l, *u))).collect();
        let verdicts = cells
            .par_iter()
            .map(|&(l, u)| {
                let r = match &plane {
                    Some(pl) => pl.barrier(u, l, &opts).map(|c| c.exists).map_err(ExperimentError::from),
                    None => spec.simulation_blocks(l, u),
                };
                let (blocked, status) = match r {
                    Ok(b) => (Some(b), CellStatus::Ok),
                    Err(e) => (None, CellStatus::Error(e.to_string())),
                };
                VerdictCell { l, u_bar: u, method: spec.method, blocked, status }
            })
            .collect();
        return Ok(SweepResult { critical: Vec::new(), verdicts, agreement: Vec::new() });
    }
    let b = spec.bisection.expect("validated");
    let methods: Vec<SweepMethod> = match spec.method {
        SweepMethod::Both => vec![SweepMethod::Geometric, SweepMethod::Simulation],
        m => vec![m],
    };
    let jobs: Vec<(f64, SweepMethod)> = spec.lengths.iter().flat_map(|l| methods.iter().map(move |m| (*l, *m))).collect();
    let critical: Vec<CriticalCell> = jobs
        .par_iter()
        .map(|&(l, m)| {
            let r = match m {
                SweepMethod::Geometric => {
                    let pl = plane.as_ref().expect("plane built for geometric sweeps");
                    critical_by_predicate(|u| pl.barrier(u, l, &opts).map(|c| c.exists), (b.lo, b.hi), b.geometric_rel_tol).map_err(ExperimentError::from)
                }
                _ => simulation_critical(spec, l, (b.lo, b.hi), b.simulation_rel_tol),
            };
            critical_cell(l, m, r)
        })
        .collect();
    let agreement = if spec.method == SweepMethod::Both {
        spec.lengths
            .iter()
            .map(|&l| {
                let find = |m| critical.iter().find(|c| c.l == l && c.method == m);
                let geo = find(SweepMethod::Geometric).and_then(|c| c.bracket);
                let sim = find(SweepMethod::Simulation).and_then(|c| c.bracket);
                let ok = match (geo, sim) {
                    (Some(g), Some(s)) => Some((g.estimate() - s.estimate()).abs() <= agreement_band(&g, &s, spec.agreement_allowance)),
                    _ => None,
                };
                (l, ok)
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(SweepResult { critical, verdicts: Vec::new(), agreement })
}

/// Critical release by bisection on simulation verdicts.
pub fn simulation_critical(spec: &SweepSpec, l: f64, bracket: (f64, f64), rel_tol: f64) -> Result<Option<CriticalRelease<f64>>, ExperimentError> {
    // adapt the error type of the verdict to the predicate bisection
    let failure = std::sync::Mutex::new(None);
    let pred = |u: f64| match spec.simulation_blocks(l, u) {
        Ok(b) => Ok(b),
        Err(e) => {
            let msg = e.to_string();
            failure.lock().unwrap().get_or_insert(e);
            Err(WavesError::NonMonotone { pattern: format!("simulation failed: {msg}") })
        }
    };
    let r = critical_by_predicate(pred, bracket, rel_tol);
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(r?)
}

impl SweepResult {
    /// Critical curve CSV: `L,U_star,method,status` (plus `agreement` in both-mode).
    pub fn write_critical_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let both = !self.agreement.is_empty();
        writeln!(w, "L,U_star,method,status{}", if both { ",agreement" } else { "" })?;
        for c in &self.critical {
            let method = match c.method {
                SweepMethod::Geometric => "geometric",
                SweepMethod::Simulation => "simulation",
                SweepMethod::Both => "both",
            };
            let status = match &c.status {
                CellStatus::Ok => "ok".to_string(),
                CellStatus::NoBarrierAtCap => "no-barrier-at-cap".to_string(),
                CellStatus::Error(e) => format!("\"error: {}\"", e.replace('"', "'")),
            };
            write!(w, "{},{},{},{}", c.l, c.u_star().map(|u| u.to_string()).unwrap_or_default(), method, status)?;
            if both {
                let a = self.agreement.iter().find(|(l, _)| *l == c.l).and_then(|(_, a)| *a);
                write!(w, ",{}", a.map(|b| b.to_string()).unwrap_or_default())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Verdict CSV for fixed-release sweeps: `L,U_bar,method,blocked,status`.
    pub fn write_verdict_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "L,U_bar,method,blocked,status")?;
        for v in &self.verdicts {
            let method = if v.method == SweepMethod::Geometric { "geometric" } else { "simulation" };
            let status = match &v.status {
                CellStatus::Ok => "ok".to_string(),
                CellStatus::NoBarrierAtCap => "no-barrier-at-cap".to_string(),
                CellStatus::Error(e) => format!("\"error: {}\"", e.replace('"', "'")),
            };
            writeln!(w, "{},{},{},{},{}", v.l, v.u_bar, method, v.blocked.map(|b| b.to_string()).unwrap_or_default(), status)?;
        }
        Ok(())
    }
}
