//! One-dimensional reaction-diffusion solver for the spatial models and the
//! empirical blocking test.
//!
//! Time stepping is IMEX: reaction by forward Euler, then backward Euler for
//! diffusion with a second-order Laplacian and zero-flux ends. The aquatic
//! compartment `E` does not diffuse.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinetics::{invaded_female_level, rhs_slice, slaved_fertilized_state, slaved_full_state, ModelVariant};
use crate::params::ModelParameters;
use crate::scalar::Scalar;
use crate::tridiag::{Breakdown, Tridiagonal};

pub const MIN_NODES: usize = 16;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("grid needs at least {MIN_NODES} nodes, got {0}")]
    TooFewNodes(usize),
    #[error("grid bounds must satisfy x_min < x_max")]
    BadBounds,
    #[error("position {x} lies outside the grid [{x_min}, {x_max}]")]
    OutsideGrid { x: f64, x_min: f64, x_max: f64 },
    #[error("time step must be positive")]
    BadTimeStep,
    #[error("release zone needs length > 0 and rate >= 0")]
    BadRelease,
    #[error(transparent)]
    Breakdown(#[from] Breakdown),
    #[error("non-finite density at t = {t}")]
    NonFinite { t: f64 },
    #[error("horizon {horizon} exceeds the recorded span {span}")]
    HorizonBeyondRecord { horizon: f64, span: f64 },
    #[error("no invaded equilibrium for these parameters")]
    NoInvadedState,
    #[error("field has {got} compartments, the {variant} model needs {want}")]
    WrongShape { variant: &'static str, want: usize, got: usize },
    #[error("I/O: {0}")]
    Io(#[from] io::Error),
    #[error("metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed record: {0}")]
    Format(String),
}

/// Uniform node set `x_i = x_min + i dx`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    pub x_min: T,
    pub x_max: T,
    pub n: usize,
    pub dx: T,
}

impl<T: Scalar> Grid<T> {
    pub fn new(x_min: T, x_max: T, n: usize) -> Result<Self, PdeError> {
        if n < MIN_NODES {
            return Err(PdeError::TooFewNodes(n));
        }
        if !(x_min < x_max) {
            return Err(PdeError::BadBounds);
        }
        let dx = (x_max - x_min) / T::from_usize_lossy(n - 1);
        Ok(Grid { x_min, x_max, n, dx })
    }

    /// Grid with spacing as close to `dx` as the interval allows.
    pub fn with_spacing(x_min: T, x_max: T, dx: T) -> Result<Self, PdeError> {
        if !(dx > T::zero()) {
            return Err(PdeError::BadBounds);
        }
        let cells = ((x_max - x_min) / dx).round().to_usize().unwrap_or(0).max(1);
        Self::new(x_min, x_max, cells + 1)
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        self.x_min + self.dx * T::from_usize_lossy(i)
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    fn require(&self, x: T) -> Result<(), PdeError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(PdeError::OutsideGrid { x: x.as_f64(), x_min: self.x_min.as_f64(), x_max: self.x_max.as_f64() })
        }
    }

    pub fn nearest(&self, x: T) -> usize {
        let i = ((x - self.x_min) / self.dx).round().to_usize().unwrap_or(0);
        i.min(self.n - 1)
    }

    /// Trapezoid-rule integral of nodal values.
    pub fn integrate(&self, values: &[T]) -> T {
        let interior: T = values[1..self.n - 1].iter().copied().sum();
        (interior + (values[0] + values[self.n - 1]) / T::lit(2.0)) * self.dx
    }
}

/// Nodal densities of every compartment of one model variant at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    pub grid: Grid<T>,
    pub variant: ModelVariant,
    pub time: T,
    /// `values[c][i]`: compartment `c` at node `i`, in the variant's component order.
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> Field<T> {
    pub fn zeros(grid: Grid<T>, variant: ModelVariant) -> Self {
        Field { grid, variant, time: T::zero(), values: vec![vec![T::zero(); grid.n]; variant.dim()] }
    }

    pub fn female(&self) -> &[T] {
        &self.values[self.variant.female_index()]
    }

    pub fn sterile(&self) -> &[T] {
        &self.values[self.variant.sterile_index()]
    }

    pub fn component(&self, name: &str) -> Option<&[T]> {
        let i = self.variant.component_names().iter().position(|c| *c == name)?;
        Some(&self.values[i])
    }

    /// `x,<components>` rows, one per node.
    pub fn write_profile_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,{}", self.variant.component_names().join(","))?;
        for i in 0..self.grid.n {
            write!(w, "{}", self.grid.x(i))?;
            for c in &self.values {
                write!(w, ",{}", c[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReleaseZone<T> {
    /// `[start, start + length]`.
    Band { start: T, length: T },
    /// The whole domain.
    Everywhere,
}

/// Constant release `U_bar` on a zone, zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseProfile<T> {
    pub u_bar: T,
    pub zone: ReleaseZone<T>,
}

impl<T: Scalar> ReleaseProfile<T> {
    pub fn band(u_bar: T, start: T, length: T) -> Result<Self, PdeError> {
        if !(length > T::zero()) || !(u_bar >= T::zero()) {
            return Err(PdeError::BadRelease);
        }
        Ok(ReleaseProfile { u_bar, zone: ReleaseZone::Band { start, length } })
    }

    pub fn everywhere(u_bar: T) -> Self {
        ReleaseProfile { u_bar, zone: ReleaseZone::Everywhere }
    }

    pub fn none() -> Self {
        Self::everywhere(T::zero())
    }

    /// Right end of the zone, `None` for a domain-wide release.
    pub fn right_edge(&self) -> Option<T> {
        match self.zone {
            ReleaseZone::Band { start, length } => Some(start + length),
            ReleaseZone::Everywhere => None,
        }
    }

    /// Nodal release rates: `U_bar` times the fraction of each node's control
    /// cell covered by the zone. Cells fully inside or outside match midpoint
    /// sampling; the two cells cut by the zone edges get the covered fraction.
    pub fn rates(&self, grid: &Grid<T>) -> Vec<T> {
        match self.zone {
            ReleaseZone::Everywhere => vec![self.u_bar; grid.n],
            ReleaseZone::Band { start, length } => {
                let end = start + length;
                let half = grid.dx / T::lit(2.0);
                (0..grid.n)
                    .map(|i| {
                        let x = grid.x(i);
                        let lo = (x - half).max(grid.x_min);
                        let hi = (x + half).min(grid.x_max);
                        let covered = (hi.min(end) - lo.max(start)).max(T::zero());
                        self.u_bar * covered / (hi - lo)
                    })
                    .collect()
            }
        }
    }
}

/// Step datum: female density `f_plus` left of `x0`, zero right of it, one
/// half-value node at the node nearest `x0`.
///
/// `f_plus` is the female density of the reduced model; the full model gets
/// `M = tau F` and quasi-steady `E`, the fertilized model additionally
/// `Fm = F * mating_success`. `Ms = 0`.
pub fn initial_front<T: Scalar>(grid: Grid<T>, f_plus: T, x0: T, variant: ModelVariant, p: &ModelParameters<T>) -> Result<Field<T>, PdeError> {
    grid.require(x0)?;
    let k = grid.nearest(x0);
    let mut field = Field::zeros(grid, variant);
    for i in 0..=k {
        let f = if i == k { f_plus / T::lit(2.0) } else { f_plus };
        set_slaved(&mut field, i, f, T::zero(), p);
    }
    Ok(field)
}

/// Space-independent datum: every node carries the slaved state of female
/// density `f` and sterile density `ms`.
pub fn uniform_field<T: Scalar>(grid: Grid<T>, f: T, ms: T, variant: ModelVariant, p: &ModelParameters<T>) -> Field<T> {
    let mut field = Field::zeros(grid, variant);
    for i in 0..grid.n {
        set_slaved(&mut field, i, f, ms, p);
    }
    field
}

fn set_slaved<T: Scalar>(field: &mut Field<T>, i: usize, f: T, ms: T, p: &ModelParameters<T>) {
    let v = &mut field.values;
    match field.variant {
        ModelVariant::Reduced => {
            v[0][i] = f;
            v[1][i] = ms;
        }
        ModelVariant::Full => {
            let s = slaved_full_state(f, ms, p);
            for (c, x) in [s.e, s.m, s.f, s.ms].into_iter().enumerate() {
                v[c][i] = x;
            }
        }
        ModelVariant::Fertilized => {
            let s = slaved_fertilized_state(f, ms, p);
            for (c, x) in [s.e, s.m, s.fm, s.ms].into_iter().enumerate() {
                v[c][i] = x;
            }
        }
    }
}

fn diffusing(variant: ModelVariant) -> &'static [usize] {
    match variant {
        ModelVariant::Reduced => &[0, 1],
        _ => &[1, 2, 3],
    }
}

/// IMEX stepper for a fixed grid, variant, release and time step.
#[derive(Debug, Clone)]
pub struct Stepper<T> {
    grid: Grid<T>,
    variant: ModelVariant,
    dt: T,
    params: ModelParameters<T>,
    rates: Vec<T>,
    implicit: Tridiagonal<T>,
    reaction: bool,
    y: Vec<T>,
    dy: Vec<T>,
}

impl<T: Scalar> Stepper<T> {
    pub fn new(grid: Grid<T>, variant: ModelVariant, release: &ReleaseProfile<T>, dt: T, p: &ModelParameters<T>) -> Result<Self, PdeError> {
        if !(dt > T::zero()) {
            return Err(PdeError::BadTimeStep);
        }
        let n = grid.n;
        let r = p.d_u * dt / (grid.dx * grid.dx);
        let two_r = r + r;
        let mut lower = vec![-r; n];
        let diag = vec![T::one() + two_r; n];
        let mut upper = vec![-r; n];
        // ghost nodes mirror the first interior node
        upper[0] = -two_r;
        lower[n - 1] = -two_r;
        lower[0] = T::zero();
        upper[n - 1] = T::zero();
        let implicit = Tridiagonal::new(lower, diag, upper)?;
        Ok(Stepper {
            grid,
            variant,
            dt,
            params: *p,
            rates: release.rates(&grid),
            implicit,
            reaction: true,
            y: vec![T::zero(); variant.dim()],
            dy: vec![T::zero(); variant.dim()],
        })
    }

    /// Switches the kinetics off (release still acts on `Ms`) or back on.
    pub fn with_reaction(mut self, on: bool) -> Self {
        self.reaction = on;
        self
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    pub fn step(&mut self, field: &mut Field<T>) -> Result<(), PdeError> {
        let dim = self.variant.dim();
        if field.values.len() != dim {
            return Err(PdeError::WrongShape { variant: self.variant.name(), want: dim, got: field.values.len() });
        }
        let ms = self.variant.sterile_index();
        for i in 0..self.grid.n {
            for c in 0..dim {
                self.y[c] = field.values[c][i];
            }
            if self.reaction {
                rhs_slice(self.variant, &self.y, self.rates[i], &self.params, &mut self.dy);
            } else {
                self.dy.iter_mut().for_each(|d| *d = T::zero());
                self.dy[ms] = self.rates[i];
            }
            for c in 0..dim {
                field.values[c][i] = self.y[c] + self.dt * self.dy[c];
            }
        }
        for &c in diffusing(self.variant) {
            self.implicit.solve_in_place(&mut field.values[c]);
        }
        field.time += self.dt;
        for comp in &mut field.values {
            for v in comp.iter_mut() {
                if !v.is_finite() {
                    return Err(PdeError::NonFinite { t: field.time.as_f64() });
                }
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        Ok(())
    }
}

/// Snapshots of a run plus the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeRecord<T> {
    pub grid: Grid<T>,
    pub variant: ModelVariant,
    pub dt: T,
    pub params: ModelParameters<T>,
    pub release: ReleaseProfile<T>,
    pub snapshots: Vec<Field<T>>,
}

impl<T: Scalar> SpaceTimeRecord<T> {
    pub fn final_field(&self) -> &Field<T> {
        self.snapshots.last().expect("record holds the initial field")
    }

    pub fn times(&self) -> Vec<T> {
        self.snapshots.iter().map(|f| f.time).collect()
    }

    pub fn span(&self) -> T {
        self.final_field().time - self.snapshots[0].time
    }

    /// `(t, front position)` at every snapshot.
    pub fn front_history(&self, level: T) -> Vec<(T, Option<T>)> {
        self.snapshots.iter().map(|f| (f.time, front_position(f, level))).collect()
    }
}

/// Steps `initial` to `t_end`, keeping the initial field, every
/// `snapshot_every`-th step and the final field.
pub fn run<T: Scalar>(
    initial: Field<T>,
    release: &ReleaseProfile<T>,
    t_end: T,
    dt: T,
    p: &ModelParameters<T>,
    snapshot_every: usize,
) -> Result<SpaceTimeRecord<T>, PdeError> {
    let grid = initial.grid;
    let variant = initial.variant;
    let mut stepper = Stepper::new(grid, variant, release, dt, p)?;
    let steps = (t_end / dt).round().to_usize().unwrap_or(0);
    let every = snapshot_every.max(1);
    let mut field = initial;
    let mut snapshots = vec![field.clone()];
    for k in 1..=steps {
        stepper.step(&mut field)?;
        if k % every == 0 || k == steps {
            snapshots.push(field.clone());
        }
    }
    Ok(SpaceTimeRecord { grid, variant, dt, params: *p, release: *release, snapshots })
}

/// Rightmost position where the female density crosses `level`, linearly
/// interpolated; `None` when the density is below `level` everywhere.
pub fn front_position<T: Scalar>(field: &Field<T>, level: T) -> Option<T> {
    front_position_of(&field.grid, field.female(), level)
}

pub fn front_position_of<T: Scalar>(grid: &Grid<T>, values: &[T], level: T) -> Option<T> {
    let i = values.iter().rposition(|v| *v >= level)?;
    if i + 1 == grid.n {
        return Some(grid.x(i));
    }
    let (a, b) = (values[i], values[i + 1]);
    Some(grid.x(i) + grid.dx * (a - level) / (a - b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictOptions<T> {
    /// Probe sits this far right of the zone's right edge (km).
    pub probe_offset: T,
    /// Breakthrough when female density at or beyond the probe reaches this fraction of the invaded level.
    pub threshold_fraction: T,
    pub horizon: T,
}

impl<T: Scalar> Default for VerdictOptions<T> {
    fn default() -> Self {
        VerdictOptions { probe_offset: T::lit(2.0), threshold_fraction: T::lit(0.01), horizon: T::lit(2000.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockingVerdict<T> {
    pub blocked: bool,
    pub front_history: Vec<(T, Option<T>)>,
    pub breakthrough_time: Option<T>,
    /// Largest female density seen at or beyond the probe.
    pub probe_max: T,
    /// Front advance over the last fifth of the horizon.
    pub late_advance: T,
}

/// Blocked iff the female density at and beyond the probe stays below the
/// threshold up to the horizon and the front (level: half the invaded
/// density) advanced by less than one cell over the final 20% of the horizon.
pub fn blocking_verdict<T: Scalar>(record: &SpaceTimeRecord<T>, opts: &VerdictOptions<T>) -> Result<BlockingVerdict<T>, PdeError> {
    let grid = record.grid;
    let t0 = record.snapshots[0].time;
    let span = record.span();
    if opts.horizon > span * (T::one() + T::lit(1e-9)) {
        return Err(PdeError::HorizonBeyondRecord { horizon: opts.horizon.as_f64(), span: span.as_f64() });
    }
    let invaded = invaded_female_level(record.variant, &record.params).ok_or(PdeError::NoInvadedState)?;
    let probe = record.release.right_edge().unwrap_or(grid.x_min) + opts.probe_offset;
    grid.require(probe)?;
    let first = (0..grid.n).find(|&i| grid.x(i) >= probe).unwrap_or(grid.n - 1);
    let threshold = opts.threshold_fraction * invaded;
    let level = invaded / T::lit(2.0);
    let end = t0 + opts.horizon;
    let slack = record.dt / T::lit(2.0);
    let window: Vec<&Field<T>> = record.snapshots.iter().filter(|f| f.time <= end + slack).collect();
    let mut probe_max = T::zero();
    let mut breakthrough_time = None;
    let mut front_history = Vec::with_capacity(window.len());
    for f in &window {
        let m = f.female()[first..].iter().fold(T::zero(), |a, v| a.max(*v));
        probe_max = probe_max.max(m);
        if breakthrough_time.is_none() && m >= threshold {
            breakthrough_time = Some(f.time);
        }
        front_history.push((f.time, front_position(f, level)));
    }
    let late_start = t0 + opts.horizon * T::lit(0.8);
    let late: Vec<T> = front_history.iter().filter(|(t, _)| *t >= late_start - slack).filter_map(|(_, x)| *x).collect();
    let late_advance = match (late.first(), late.last()) {
        (Some(a), Some(b)) => *b - *a,
        _ => T::zero(),
    };
    let stalled = late_advance < grid.dx;
    let blocked = breakthrough_time.is_none() && stalled;
    Ok(BlockingVerdict { blocked, front_history, breakthrough_time: if blocked { None } else { breakthrough_time }, probe_max, late_advance })
}

/// Settings written next to the CSV matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub grid: Grid<f64>,
    pub variant: ModelVariant,
    pub dt: f64,
    pub parameters: ModelParameters<f64>,
    pub release: ReleaseProfile<f64>,
    pub components: Vec<String>,
    pub snapshots: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<BlockingVerdict<f64>>,
}

impl SpaceTimeRecord<f64> {
    pub fn meta(&self, verdict: Option<BlockingVerdict<f64>>) -> RecordMeta {
        RecordMeta {
            grid: self.grid,
            variant: self.variant,
            dt: self.dt,
            parameters: self.params,
            release: self.release,
            components: self.variant.component_names().iter().map(|s| s.to_string()).collect(),
            snapshots: self.snapshots.len(),
            verdict,
        }
    }

    /// Writes `<component>.csv` (header `t,<node positions>`, one row per
    /// snapshot), `meta.json` and `plot.gp` into `dir`.
    pub fn write_dir(&self, dir: &Path, verdict: Option<BlockingVerdict<f64>>) -> Result<(), PdeError> {
        fs::create_dir_all(dir)?;
        let nodes = self.grid.nodes();
        for (c, name) in self.variant.component_names().iter().enumerate() {
            let mut w = BufWriter::new(fs::File::create(dir.join(format!("{name}.csv")))?);
            write!(w, "t")?;
            for x in &nodes {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
            for snap in &self.snapshots {
                write!(w, "{}", snap.time)?;
                for v in &snap.values[c] {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
            w.flush()?;
        }
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.meta(verdict))?)?;
        fs::write(dir.join("plot.gp"), plot_script(self.variant))?;
        Ok(())
    }

    /// Reads a record written by [`SpaceTimeRecord::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<(Self, RecordMeta), PdeError> {
        let meta: RecordMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
        let mut per_comp: Vec<Vec<(f64, Vec<f64>)>> = Vec::new();
        for name in meta.variant.component_names() {
            let file = io::BufReader::new(fs::File::open(dir.join(format!("{name}.csv")))?);
            let mut rows = Vec::new();
            for (ln, line) in file.lines().enumerate().skip(1) {
                let line = line?;
                let mut vals = line.split(',').map(|s| s.trim().parse::<f64>());
                let t = vals
                    .next()
                    .ok_or_else(|| PdeError::Format(format!("{name}.csv line {}: empty", ln + 1)))?
                    .map_err(|e| PdeError::Format(format!("{name}.csv line {}: {e}", ln + 1)))?;
                let row: Result<Vec<f64>, _> = vals.collect();
                let row = row.map_err(|e| PdeError::Format(format!("{name}.csv line {}: {e}", ln + 1)))?;
                if row.len() != meta.grid.n {
                    return Err(PdeError::Format(format!("{name}.csv line {}: {} values for {} nodes", ln + 1, row.len(), meta.grid.n)));
                }
                rows.push((t, row));
            }
            per_comp.push(rows);
        }
        let count = per_comp[0].len();
        if count == 0 || per_comp.iter().any(|r| r.len() != count) {
            return Err(PdeError::Format("compartment files disagree on snapshot count".into()));
        }
        let snapshots = (0..count)
            .map(|s| Field {
                grid: meta.grid,
                variant: meta.variant,
                time: per_comp[0][s].0,
                values: per_comp.iter().map(|rows| rows[s].1.clone()).collect(),
            })
            .collect();
        let record = SpaceTimeRecord {
            grid: meta.grid,
            variant: meta.variant,
            dt: meta.dt,
            params: meta.parameters,
            release: meta.release,
            snapshots,
        };
        Ok((record, meta))
    }
}

/// Gnuplot script: space-time heatmap of the female compartment and its final profile.
pub fn plot_script(variant: ModelVariant) -> String {
    let female = variant.component_names()[variant.female_index()];
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 1000,700");
    let _ = writeln!(s, "set output '{female}_heatmap.png'");
    let _ = writeln!(s, "set xlabel 'x (km)'\nset ylabel 't (day)'\nset view map");
    let _ = writeln!(s, "stats '{female}.csv' nooutput");
    let _ = writeln!(s, "plot '{female}.csv' matrix rowheaders columnheaders using 2:1:3 with image title '{female}'");
    let _ = writeln!(s, "set output '{female}_final.png'");
    let _ = writeln!(s, "set ylabel '{female}'");
    let _ = writeln!(s, "plot '{female}.csv' matrix rowheaders columnheaders every :::(STATS_records-1)::(STATS_records-1) using 2:3 with lines title 'final'");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::positive_equilibria;
    use crate::odesim::{integrate, Control, ReleaseSchedule};
    use approx::assert_relative_eq;

    fn reference() -> ModelParameters<f64> {
        ModelParameters::reference(1000.0)
    }

    #[test]
    fn grid_rules() {
        assert!(matches!(Grid::new(0.0, 1.0, 15), Err(PdeError::TooFewNodes(15))));
        assert!(Grid::new(1.0, 1.0, 32).is_err());
        let g = Grid::with_spacing(-40.0, 45.0, 0.05).unwrap();
        assert_eq!(g.n, 1701);
        assert_relative_eq!(g.dx, 0.05, max_relative = 1e-12);
        assert_relative_eq!(g.x(g.n - 1), 45.0, max_relative = 1e-12);
    }

    #[test]
    fn front_datum_shapes() {
        let p = reference();
        let g = Grid::new(0.0, 10.0, 101).unwrap();
        let f = initial_front(g, 600.0, 0.0, ModelVariant::Reduced, &p).unwrap();
        assert_eq!(f.female()[0], 300.0);
        assert!(f.female()[1..].iter().all(|v| *v == 0.0));
        let f = initial_front(g, 600.0, 4.0, ModelVariant::Full, &p).unwrap();
        let mass = g.integrate(f.female());
        assert!((mass - 600.0 * 4.0).abs() <= g.dx * 600.0);
        let x = front_position(&f, 300.0).unwrap();
        assert!((x - 4.0).abs() <= g.dx);
        assert!(initial_front(g, 600.0, 11.0, ModelVariant::Full, &p).is_err());
        let s = f.component("M").unwrap();
        assert_relative_eq!(s[0], p.tau() * 600.0, max_relative = 1e-14);
    }

    #[test]
    fn front_position_cases() {
        let g = Grid::new(0.0, 15.0, 16).unwrap();
        let mut f = Field::zeros(g, ModelVariant::Reduced);
        assert_eq!(front_position(&f, 1.0), None);
        f.values[0][3] = 4.0;
        f.values[0][4] = 2.0;
        assert_relative_eq!(front_position(&f, 3.0).unwrap(), 3.5);
        f.values[0][15] = 5.0;
        assert_eq!(front_position(&f, 3.0), Some(15.0));
    }

    #[test]
    fn release_cell_overlap() {
        let g = Grid::new(0.0, 10.0, 101).unwrap();
        let r = ReleaseProfile::band(100.0, 2.0, 3.0).unwrap().rates(&g);
        assert_relative_eq!(r[20], 50.0, max_relative = 1e-12);
        assert_relative_eq!(r[50], 50.0, max_relative = 1e-12);
        assert_eq!(r[30], 100.0);
        assert_eq!(r[19], 0.0);
        assert_relative_eq!(g.integrate(&r), 300.0, max_relative = 1e-12);
        let r = ReleaseProfile::band(100.0, 2.02, 3.0).unwrap().rates(&g);
        assert_relative_eq!(r[20], 30.0, max_relative = 1e-9);
        assert!(ReleaseProfile::band(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn diffusion_conserves_mass() {
        let p = reference();
        let g = Grid::<f64>::new(-5.0, 5.0, 201).unwrap();
        let mut f = Field::zeros(g, ModelVariant::Full);
        for i in 0..g.n {
            let x = g.x(i);
            f.values[1][i] = (-x * x).exp() * 10.0;
            f.values[2][i] = if x.abs() < 1.0 { 7.0 } else { 0.0 };
            f.values[3][i] = 6.0 + x;
        }
        let mut st = Stepper::new(g, ModelVariant::Full, &ReleaseProfile::none(), 0.5, &p.with_diffusivity(0.3)).unwrap().with_reaction(false);
        let before: Vec<f64> = (1..4).map(|c| g.integrate(&f.values[c])).collect();
        for _ in 0..50 {
            let prev: Vec<f64> = (1..4).map(|c| g.integrate(&f.values[c])).collect();
            st.step(&mut f).unwrap();
            for (c, m) in prev.iter().enumerate() {
                let now = g.integrate(&f.values[c + 1]);
                assert!((now - m).abs() <= 1e-10 * m.abs(), "compartment {}: {m} -> {now}", c + 1);
            }
        }
        assert!((g.integrate(&f.values[1]) - before[0]).abs() <= 1e-9 * before[0]);
    }

    #[test]
    fn uniform_decay_of_sterile_males() {
        let p = reference();
        let g = Grid::new(0.0, 10.0, 64).unwrap();
        let mut f = Field::zeros(g, ModelVariant::Reduced);
        f.values[1].iter_mut().for_each(|v| *v = 500.0);
        let dt = 0.01;
        let rec = run(f, &ReleaseProfile::none(), 10.0, dt, &p, 1000).unwrap();
        let ms = rec.final_field().sterile();
        let discrete = 500.0 * (1.0 - p.mu_s * dt).powi(1000);
        let exact = 500.0 * (-p.mu_s * 10.0f64).exp();
        for v in ms {
            assert_relative_eq!(*v, discrete, max_relative = 1e-12);
            // forward Euler bound t mu_s^2 dt / 2
            assert!((v - exact).abs() <= exact * 10.0 * p.mu_s * p.mu_s * dt);
        }
    }

    #[test]
    fn uniform_column_follows_ode() {
        let p = reference();
        let (f1, f2) = positive_equilibria(0.0, &p).bistable_pair().unwrap();
        let g = Grid::new(0.0, 5.0, 32).unwrap();
        let start = 0.5 * (f1 + f2);
        let field = uniform_field(g, start, 0.0, ModelVariant::Full, &p);
        let y0: Vec<f64> = field.values.iter().map(|c| c[0]).collect();
        let rec = run(field, &ReleaseProfile::everywhere(30.0), 50.0, 0.005, &p, 10_000).unwrap();
        let ode = integrate(ModelVariant::Full, &y0, &ReleaseSchedule::constant(30.0), 50.0, Control::new(1e-10, 1e-10), &p).unwrap();
        let end = ode.last();
        for c in 0..4 {
            for v in &rec.final_field().values[c] {
                assert!((v - end[c]).abs() <= 2e-3 * end[c].abs().max(1.0), "c={c}: {v} vs {}", end[c]);
            }
        }
    }

    #[test]
    fn gaussian_heat_kernel_second_order() {
        // Ms only: diffusion with decay against the exact heat kernel; dt tied to dx^2
        let p = reference().with_diffusivity(0.05);
        let t0 = 10.0;
        let t_end = 5.0;
        let exact = |x: f64, t: f64| {
            let s = 4.0 * p.d_u * (t + t0);
            (-x * x / s).exp() / (std::f64::consts::PI * s).sqrt() * (-p.mu_s * t).exp()
        };
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&dx| {
                let g = Grid::with_spacing(-8.0, 8.0, dx).unwrap();
                let mut f = Field::zeros(g, ModelVariant::Reduced);
                for i in 0..g.n {
                    f.values[1][i] = exact(g.x(i), 0.0);
                }
                let dt = 0.5 * dx * dx;
                let rec = run(f, &ReleaseProfile::none(), t_end, dt, &p, usize::MAX).unwrap();
                let last = rec.final_field();
                (0..g.n).map(|i| (last.values[1][i] - exact(g.x(i), last.time)).abs()).fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&order), "order {order} from {errs:?}");
        }
    }

    #[test]
    fn free_front_advances() {
        let p = reference();
        let f2 = positive_equilibria(0.0, &p).invaded().unwrap();
        let g = Grid::with_spacing(-10.0, 30.0, 0.1).unwrap();
        let init = initial_front(g, f2, 0.0, ModelVariant::Reduced, &p).unwrap();
        let rec = run(init, &ReleaseProfile::none(), 200.0, 0.1, &p, 100).unwrap();
        let hist = rec.front_history(f2 / 2.0);
        let xs: Vec<f64> = hist.iter().skip(3).map(|(_, x)| x.unwrap()).collect();
        assert!(xs.windows(2).all(|w| w[1] >= w[0]), "{xs:?}");
        assert!(xs.last().unwrap() - xs[0] > 1.0);
    }

    #[test]
    fn verdict_without_release_is_breakthrough() {
        let p = reference();
        let f2 = positive_equilibria(0.0, &p).invaded().unwrap();
        let g = Grid::with_spacing(-20.0, 20.0, 0.1).unwrap();
        let init = initial_front(g, f2, -10.0, ModelVariant::Reduced, &p).unwrap();
        let release = ReleaseProfile::band(0.0, 0.0, 2.0).unwrap();
        let rec = run(init, &release, 300.0, 0.1, &p, 20).unwrap();
        let v = blocking_verdict(&rec, &VerdictOptions { horizon: 300.0, ..Default::default() }).unwrap();
        assert!(!v.blocked);
        assert!(v.breakthrough_time.unwrap() > 0.0);
        let too_long = VerdictOptions { horizon: 301.0, ..Default::default() };
        assert!(matches!(blocking_verdict(&rec, &too_long), Err(PdeError::HorizonBeyondRecord { .. })));
    }

    #[test]
    fn record_roundtrip_through_files() {
        let p = reference();
        let g = Grid::new(0.0, 10.0, 41).unwrap();
        let init = initial_front(g, 500.0, 3.0, ModelVariant::Fertilized, &p).unwrap();
        let release = ReleaseProfile::band(100.0, 5.0, 2.0).unwrap();
        let rec = run(init, &release, 2.0, 0.1, &p, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        rec.write_dir(dir.path(), None).unwrap();
        for name in ["E.csv", "M.csv", "Fm.csv", "Ms.csv", "meta.json", "plot.gp"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let (back, meta) = SpaceTimeRecord::read_dir(dir.path()).unwrap();
        assert_eq!(meta.components, vec!["E", "M", "Fm", "Ms"]);
        assert_eq!(back.snapshots.len(), rec.snapshots.len());
        for (a, b) in back.snapshots.iter().zip(&rec.snapshots) {
            assert_eq!(a.time, b.time);
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn f32_step() {
        let p = ModelParameters::<f32>::reference(1000.0);
        let g = Grid::new(0.0f32, 10.0, 32).unwrap();
        let init = initial_front(g, 600.0, 5.0, ModelVariant::Full, &p).unwrap();
        let rec = run(init, &ReleaseProfile::band(50.0, 6.0, 1.0).unwrap(), 5.0, 0.1, &p, 10).unwrap();
        assert!(rec.final_field().values.iter().flatten().all(|v| v.is_finite() && *v >= 0.0));
    }
}
