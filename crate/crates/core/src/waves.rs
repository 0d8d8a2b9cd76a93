//! Travelling-wave and barrier analysis of the reduced spatial model
//! `dF/dt = D_u F'' + g(F, Ms(x))`.
//!
//! The invasion runs left to right, from the invaded state at `x = -inf`
//! towards a release band `[0, L]`. Stationary profiles solve
//! `-D_u F'' = g(F, Ms(x))`, a planar system in `(F, F')` with energy
//! `(D_u/2) F'^2 + G(F)` where `G' = g(., 0)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinetics::{positive_equilibria, reaction};
use crate::odesim::{Control, Dopri5, OdeError, StepCheck};
use crate::params::ModelParameters;
use crate::pdesim::{front_position, SpaceTimeRecord};
use crate::quadrature::{adaptive_panels, gk15, integrate, Panel};
use crate::roots::{bisect_bracket, bisect_predicate};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WavesError {
    #[error("parameters are not viable (b r nu_E <= mu_F (nu_E + mu_E))")]
    NotViable,
    #[error("no bistable pair of equilibria at Ms = {ms}")]
    NotBistable { ms: f64 },
    #[error("the invaded state does not invade (G(F2) <= 0); no decaying stationary branch")]
    NotInvading,
    #[error("no sign change of the wave-speed integral found on Ms in [{lo}, {hi}]")]
    BracketNotFound { lo: f64, hi: f64 },
    #[error("barrier predicate is not monotone across the bracket: {pattern}")]
    NonMonotone { pattern: String },
    #[error("even the smallest bracket value {u} yields a barrier")]
    BracketFloorBlocks { u: f64 },
    #[error("no barrier up to length {l_max} at release {u}")]
    NoBarrierLength { u: f64, l_max: f64 },
    #[error("level set not real at F = {f}")]
    ManifoldNotReal { f: f64 },
    #[error("integration blew up at x = {x}")]
    BlowUp { x: f64 },
    #[error("integration failed: {0}")]
    Integration(#[from] OdeError),
    #[error("front absent from the record")]
    FrontAbsent,
}

/// `G(F) = int_0^F g(s, Ms) ds` for fixed `Ms`, from cached Gauss-Kronrod panels.
#[derive(Debug, Clone)]
pub struct Potential<T> {
    ms: T,
    params: ModelParameters<T>,
    upper: T,
    panels: Vec<Panel<T>>,
    prefix: Vec<T>,
}

/// Relative accuracy requested from the potential quadrature.
pub const POTENTIAL_REL_TOL: f64 = 1e-9;

impl<T: Scalar> Potential<T> {
    /// Panels cover `[0, 2 K r nu_E / mu_F]`; larger arguments are integrated on demand.
    pub fn new(ms: T, p: &ModelParameters<T>) -> Self {
        Self::on(ms, p, T::lit(2.0) * p.f_upper())
    }

    pub fn on(ms: T, p: &ModelParameters<T>, upper: T) -> Self {
        let rel = T::tol_floor(POTENTIAL_REL_TOL * 1e-3);
        let panels = adaptive_panels(|f| reaction(f, ms, p), T::zero(), upper, rel, T::zero(), 4000);
        let mut prefix = Vec::with_capacity(panels.len());
        let mut acc = T::zero();
        for pan in &panels {
            prefix.push(acc);
            acc += pan.integral;
        }
        Potential { ms, params: *p, upper, panels, prefix }
    }

    pub fn ms(&self) -> T {
        self.ms
    }

    pub fn eval(&self, f: T) -> T {
        if f <= T::zero() {
            return T::zero();
        }
        let mut g = |s: T| reaction(s, self.ms, &self.params);
        if f >= self.upper {
            let total = *self.prefix.last().unwrap() + self.panels.last().unwrap().integral;
            let rel = T::tol_floor(POTENTIAL_REL_TOL * 1e-3);
            return total + integrate(g, self.upper, f, rel, T::zero());
        }
        let i = self.panels.partition_point(|p| p.b <= f).min(self.panels.len() - 1);
        let pan = &self.panels[i];
        if f == pan.b {
            return self.prefix[i] + pan.integral;
        }
        self.prefix[i] + gk15(&mut g, pan.a, f).0
    }
}

pub fn potential<T: Scalar>(ms: T, p: &ModelParameters<T>) -> Potential<T> {
    Potential::new(ms, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedSign {
    Negative,
    Zero,
    Positive,
}

impl SpeedSign {
    pub fn of<T: Scalar>(v: T, zero_band: T) -> Self {
        if v.abs() <= zero_band {
            SpeedSign::Zero
        } else if v > T::zero() {
            SpeedSign::Positive
        } else {
            SpeedSign::Negative
        }
    }
}

/// Relative width of the zero band of [`wave_speed_sign`].
pub const SPEED_ZERO_BAND: f64 = 1e-8;

/// `G(F2(Ms))` and the scale `int_0^F2 |g|` it is compared against.
fn speed_integral<T: Scalar>(ms: T, p: &ModelParameters<T>) -> Result<(T, T), WavesError> {
    let (_, f2) = positive_equilibria(ms, p).bistable_pair().ok_or(WavesError::NotBistable { ms: ms.as_f64() })?;
    let pot = Potential::on(ms, p, f2);
    let value = pot.eval(f2);
    let rel = T::tol_floor(1e-10);
    let scale = integrate(|f| reaction(f, ms, p).abs(), T::zero(), f2, rel, T::zero());
    Ok((value, scale))
}

/// Sign of the bistable wave speed at constant sterile density `ms`.
pub fn wave_speed_sign<T: Scalar>(ms: T, p: &ModelParameters<T>) -> Result<SpeedSign, WavesError> {
    let (v, scale) = speed_integral(ms, p)?;
    Ok(SpeedSign::of(v, T::tol_floor(SPEED_ZERO_BAND) * scale))
}

/// Direction of invasion at constant `ms` beyond the bistable range: with no
/// positive equilibrium the population retreats, with only a stable one it invades.
pub fn invasion_direction<T: Scalar>(ms: T, p: &ModelParameters<T>) -> SpeedSign {
    match wave_speed_sign(ms, p) {
        Ok(s) => s,
        Err(_) => {
            if positive_equilibria(ms, p).invaded().is_some() {
                SpeedSign::Positive
            } else {
                SpeedSign::Negative
            }
        }
    }
}

/// Number of scan points used to bracket `M_infinity`.
pub const M_INFINITY_SCAN: usize = 256;

/// Sterile density at which the wave speed changes sign.
pub fn m_infinity<T: Scalar>(p: &ModelParameters<T>) -> Result<T, WavesError> {
    let u_tilde = p.derive().u_tilde.ok_or(WavesError::NotViable)?;
    let top = u_tilde / p.mu_s;
    let mut last_positive: Option<T> = None;
    for k in 0..=M_INFINITY_SCAN {
        let ms = top * T::from_usize_lossy(k) / T::from_usize_lossy(M_INFINITY_SCAN);
        match speed_integral(ms, p) {
            Ok((v, _)) if v > T::zero() => last_positive = Some(ms),
            Ok((v, _)) if v < T::zero() => {
                let lo = last_positive.ok_or(WavesError::BracketNotFound { lo: 0.0, hi: ms.as_f64() })?;
                let h = |m: T| speed_integral(m, p).map(|r| r.0).unwrap_or(-T::one());
                let (a, b) = bisect_bracket(h, lo, ms, T::tol_floor(1e-8) * ms, 200).expect("sign change bracketed");
                return Ok(a + (b - a) / T::lit(2.0));
            }
            Ok(_) => return Ok(ms),
            Err(_) if last_positive.is_some() => break,
            Err(_) => {}
        }
    }
    Err(WavesError::BracketNotFound { lo: 0.0, hi: top.as_f64() })
}

/// Steady sterile-male density under release `U_bar` on `[0, L]`: the
/// bounded solution of `-D_u Ms'' + mu_s Ms = U_bar 1_[0,L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyMsProfile<T> {
    pub u_bar: T,
    pub l: T,
    pub mu_s: T,
    pub d_u: T,
    pub lambda: T,
}

pub fn steady_ms_profile<T: Scalar>(u_bar: T, l: T, p: &ModelParameters<T>) -> SteadyMsProfile<T> {
    SteadyMsProfile { u_bar, l, mu_s: p.mu_s, d_u: p.d_u, lambda: (p.mu_s / p.d_u).sqrt() }
}

impl<T: Scalar> SteadyMsProfile<T> {
    fn plateau(&self) -> T {
        self.u_bar / self.mu_s
    }

    fn edge(&self) -> T {
        self.plateau() * (-(-self.lambda * self.l).exp_m1()) / T::lit(2.0)
    }

    pub fn eval(&self, x: T) -> T {
        let lam = self.lambda;
        if x < T::zero() {
            self.edge() * (lam * x).exp()
        } else if x > self.l {
            self.edge() * (-lam * (x - self.l)).exp()
        } else {
            // e^{-lam L/2} cosh(lam (x - L/2)) without overflow
            let c = ((lam * (x - self.l)).exp() + (-lam * x).exp()) / T::lit(2.0);
            self.plateau() * (T::one() - c)
        }
    }

    pub fn derivative(&self, x: T) -> T {
        let lam = self.lambda;
        if x < T::zero() {
            lam * self.eval(x)
        } else if x > self.l {
            -lam * self.eval(x)
        } else {
            let s = ((lam * (x - self.l)).exp() - (-lam * x).exp()) / T::lit(2.0);
            -self.plateau() * lam * s
        }
    }

    pub fn second_derivative(&self, x: T) -> T {
        let lam = self.lambda;
        if x < T::zero() || x > self.l {
            lam * lam * self.eval(x)
        } else {
            let c = ((lam * (x - self.l)).exp() + (-lam * x).exp()) / T::lit(2.0);
            -self.plateau() * lam * lam * c
        }
    }

    /// `-D_u Ms'' + mu_s Ms - U_bar 1_[0,L]` at `x`.
    pub fn residual(&self, x: T) -> T {
        let source = if x >= T::zero() && x <= self.l { self.u_bar } else { T::zero() };
        -self.d_u * self.second_derivative(x) + self.mu_s * self.eval(x) - source
    }

    pub fn max_value(&self) -> T {
        self.plateau() * (-(-self.lambda * self.l / T::lit(2.0)).exp_m1())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint<T> {
    pub f: T,
    pub df: T,
}

/// How the sterile density enters the stationary equation on the band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MsMode {
    /// The steady profile, including its exponential tails outside the band.
    #[default]
    Exact,
    /// `U_bar / mu_s` on `[0, L]`, zero outside.
    Constant,
}

/// Quantities of the unperturbed (`Ms = 0`) stationary phase plane.
#[derive(Debug, Clone)]
pub struct PhasePlane<T> {
    pub params: ModelParameters<T>,
    pub potential: Potential<T>,
    pub f1: T,
    pub f2: T,
    /// `G(F2)`: energy of the saddle level.
    pub g2: T,
    /// Turning point `F_z` of the homoclinic loop (`G(F_z) = 0`, `F1 < F_z < F2`),
    /// present when `G(F2) > 0`.
    pub fz: Option<T>,
}

impl<T: Scalar> PhasePlane<T> {
    pub fn new(p: &ModelParameters<T>) -> Result<Self, WavesError> {
        if !p.is_viable() {
            return Err(WavesError::NotViable);
        }
        let (f1, f2) = positive_equilibria(T::zero(), p).bistable_pair().ok_or(WavesError::NotBistable { ms: 0.0 })?;
        let potential = Potential::new(T::zero(), p);
        let g2 = potential.eval(f2);
        let fz = if g2 > T::zero() {
            bisect_bracket(|f| potential.eval(f), f1, f2, T::tol_floor(1e-13) * f2, 400).map(|(a, b)| a + (b - a) / T::lit(2.0))
        } else {
            None
        };
        Ok(PhasePlane { params: *p, potential, f1, f2, g2, fz })
    }

    /// `(D_u/2) dF^2 + G(F)` with `G` at `Ms = 0`.
    pub fn energy(&self, pt: PhasePoint<T>) -> T {
        self.params.d_u / T::lit(2.0) * pt.df * pt.df + self.potential.eval(pt.f)
    }

    /// Non-increasing branch of the level set `energy = level` at `f`.
    fn descending(&self, level: T, f: T) -> Option<T> {
        let q = T::lit(2.0) * (level - self.potential.eval(f)) / self.params.d_u;
        let tol = T::tol_floor(1e-9) * level.abs().max(T::one()) * T::lit(2.0) / self.params.d_u;
        if q < -tol {
            None
        } else {
            Some(-q.max(T::zero()).sqrt())
        }
    }

    /// Saddle level through `(F2, 0)` on `F in (0, F2]`, `dF <= 0`; samples
    /// `F_i = F2 sin(pi i / 2n)`, clustered near `F2`.
    pub fn left_manifold(&self, n: usize) -> Result<Vec<PhasePoint<T>>, WavesError> {
        (1..=n)
            .map(|i| {
                let theta = T::FRAC_PI_2() * T::from_usize_lossy(i) / T::from_usize_lossy(n);
                let f = if i == n { self.f2 } else { self.f2 * theta.sin() };
                let df = if i == n { T::zero() } else { self.descending(self.g2, f).ok_or(WavesError::ManifoldNotReal { f: f.as_f64() })? };
                Ok(PhasePoint { f, df })
            })
            .collect()
    }

    /// Zero-energy level (homoclinic loop) on `F in (0, F_z]`, decaying branch
    /// `dF <= 0`, uniform in `F`.
    pub fn right_manifold(&self, n: usize) -> Result<Vec<PhasePoint<T>>, WavesError> {
        let fz = self.fz.ok_or(WavesError::NotInvading)?;
        Ok((1..=n)
            .map(|i| {
                let f = fz * T::from_usize_lossy(i) / T::from_usize_lossy(n);
                let df = if i == n { T::zero() } else { self.descending(T::zero(), f).unwrap_or(T::zero()) };
                PhasePoint { f, df }
            })
            .collect())
    }

    fn ms_function(&self, u_bar: T, l: T, mode: MsMode) -> impl Fn(T) -> T + Sync {
        let prof = steady_ms_profile(u_bar, l, &self.params);
        let constant = u_bar / self.params.mu_s;
        move |x: T| match mode {
            MsMode::Exact => prof.eval(x),
            MsMode::Constant => {
                if x >= T::zero() && x <= l {
                    constant
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Escape level for shooting: far above every equilibrium.
    fn escape(&self) -> T {
        T::lit(2.0) * self.params.f_upper()
    }

    /// Integrates the stationary system across `[x0, x1]` (either direction),
    /// split at the band edges. Returns the end point, or `Absorbed(x)` when `F`
    /// reaches zero.
    fn flow<M: Fn(T) -> T>(&self, start: PhasePoint<T>, x0: T, x1: T, l: T, ms: &M, trace: Option<&mut Vec<(T, PhasePoint<T>)>>) -> Result<Flow<T>, WavesError> {
        let p = &self.params;
        let control = Control::new(T::tol_floor(1e-11), T::min_positive_value().sqrt()).with_max_step(T::lit(0.25));
        let mut solver = Dopri5::new(2, control);
        let mut y = [start.f, start.df];
        let mut cuts: Vec<T> = [T::zero(), l].into_iter().filter(|c| (*c - x0) * (*c - x1) < T::zero()).collect();
        if x1 < x0 {
            cuts.reverse();
        }
        cuts.push(x1);
        let escape = self.escape();
        let mut event: Option<Flow<T>> = None;
        let mut trace = trace;
        let mut from = x0;
        for to in cuts {
            solver.solve(
                |x, y, dy| {
                    dy[0] = y[1];
                    dy[1] = -reaction(y[0].max(T::zero()), ms(x), p) / p.d_u;
                },
                from,
                to,
                &mut y,
                |x, y| {
                    if y[0] <= T::zero() {
                        y[0] = T::zero();
                        event = Some(Flow::Absorbed(x));
                        return StepCheck::Stop;
                    }
                    if y[0] > escape {
                        event = Some(Flow::Escaped(x));
                        return StepCheck::Stop;
                    }
                    if let Some(t) = trace.as_deref_mut() {
                        t.push((x, PhasePoint { f: y[0], df: y[1] }));
                    }
                    StepCheck::Accept
                },
            )?;
            if let Some(e) = event {
                return Ok(e);
            }
            from = to;
        }
        Ok(Flow::Reached(PhasePoint { f: y[0], df: y[1] }))
    }

    /// Maps a phase point across the band `[0, L]` by the stationary equation.
    pub fn zone_map(&self, start: PhasePoint<T>, u_bar: T, l: T, mode: MsMode) -> Result<ZoneExit<T>, WavesError> {
        let ms = self.ms_function(u_bar, l, mode);
        match self.flow(start, T::zero(), l, l, &ms, None)? {
            Flow::Reached(pt) => Ok(ZoneExit { point: pt, absorbed_at: None }),
            Flow::Absorbed(x) => Ok(ZoneExit { point: PhasePoint { f: T::zero(), df: T::zero() }, absorbed_at: Some(x) }),
            Flow::Escaped(x) => Err(WavesError::BlowUp { x: x.as_f64() }),
        }
    }

    /// [`PhasePlane::zone_map`] that also returns every accepted step.
    pub fn zone_path(&self, start: PhasePoint<T>, u_bar: T, l: T, mode: MsMode) -> Result<Vec<(T, PhasePoint<T>)>, WavesError> {
        let ms = self.ms_function(u_bar, l, mode);
        let mut path = vec![(T::zero(), start)];
        match self.flow(start, T::zero(), l, l, &ms, Some(&mut path))? {
            Flow::Escaped(x) => Err(WavesError::BlowUp { x: x.as_f64() }),
            _ => Ok(path),
        }
    }

    /// Tail length outside the band beyond which the steady profile is
    /// negligible against the threshold density.
    fn tail(&self, u_bar: T, l: T, mode: MsMode) -> T {
        match mode {
            MsMode::Constant => T::zero(),
            MsMode::Exact => {
                let prof = steady_ms_profile(u_bar, l, &self.params);
                let edge = prof.eval(T::zero());
                let floor = T::lit(1e-6) * self.f1;
                let a = if edge > floor { (edge / floor).ln() / prof.lambda } else { T::zero() };
                a.max(T::lit(0.5))
            }
        }
    }

    /// Barrier test by backward shooting.
    ///
    /// Right of the band (`x > L + a`) a barrier lies on the decaying branch of
    /// the zero-energy loop; left of it (`x < -a`) on the saddle level
    /// `energy = G(F2)`. Points of the decaying branch, parametrised by
    /// `s = ln F`, are integrated from `x = L + a` back to `x = -a`, and the
    /// defect `dF - sgn(F - F2) sqrt(2 (G(F2) - G(F)) / D_u)` against the
    /// saddle level is tracked along `s`. A sign change of the defect between
    /// two finite end points, refined by bisection in `s`, is a barrier.
    /// Trajectories that hit `F = 0` count as `+inf`, those that escape above
    /// `2 K r nu_E / mu_F` as `-inf`.
    pub fn barrier(&self, u_bar: T, l: T, opts: &BarrierOptions) -> Result<BarrierCertificate<T>, WavesError> {
        let fz = self.fz.ok_or(WavesError::NotInvading)?;
        let p = &self.params;
        let a = self.tail(u_bar, l, opts.ms_mode);
        let kappa = (p.mu_f / p.d_u).sqrt();
        let span = kappa * (l + a + a) + T::lit(20.0);
        let s_hi = fz.ln() - T::lit(1e-9);
        let s_lo = fz.ln() - span;
        let n = opts.samples.max(2);
        let ms = self.ms_function(u_bar, l, opts.ms_mode);
        let shoot = |s: T| -> Result<Shot<T>, WavesError> {
            let f = s.exp();
            let start = PhasePoint { f, df: self.descending(T::zero(), f).unwrap_or(T::zero()) };
            Ok(match self.flow(start, l + a, -a, l, &ms, None)? {
                Flow::Absorbed(_) => Shot { s, outcome: ShotOutcome::Absorbed, defect: T::infinity(), exit: None },
                Flow::Escaped(_) => Shot { s, outcome: ShotOutcome::Escaped, defect: T::neg_infinity(), exit: None },
                Flow::Reached(pt) => {
                    let level = (T::lit(2.0) * (self.g2 - self.potential.eval(pt.f)).max(T::zero()) / p.d_u).sqrt();
                    let target = if pt.f > self.f2 { level } else { -level };
                    Shot { s, outcome: ShotOutcome::Reached, defect: pt.df - target, exit: Some(pt) }
                }
            })
        };
        let params: Vec<T> = (0..n).map(|i| s_lo + (s_hi - s_lo) * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1)).collect();
        let shots: Vec<Shot<T>> = params.par_iter().map(|&s| shoot(s)).collect::<Result<_, _>>()?;
        let tol = T::lit(opts.defect_tol) * (T::lit(2.0) * self.g2 / p.d_u).sqrt();
        let mut crossing = None;
        for w in shots.windows(2) {
            let (mut lo, mut hi) = (w[0], w[1]);
            if lo.defect.signum() == hi.defect.signum() {
                continue;
            }
            for _ in 0..200 {
                let mid = lo.s + (hi.s - lo.s) / T::lit(2.0);
                if mid == lo.s || mid == hi.s {
                    break;
                }
                let m = shoot(mid)?;
                if m.defect.signum() == lo.defect.signum() {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            let best = [lo, hi]
                .into_iter()
                .filter(|s| s.outcome == ShotOutcome::Reached && s.defect.abs() <= tol)
                .min_by(|a, b| a.defect.abs().partial_cmp(&b.defect.abs()).unwrap());
            if let Some(b) = best {
                crossing = Some(b);
                break;
            }
        }
        let mut degenerate = false;
        if crossing.is_none() {
            // tangential near-miss: no sign change but a sample on the target
            crossing = shots
                .iter()
                .filter(|s| s.outcome == ShotOutcome::Reached && s.defect.abs() <= tol)
                .min_by(|a, b| a.defect.abs().partial_cmp(&b.defect.abs()).unwrap())
                .copied();
            degenerate = crossing.is_some();
        }
        Ok(BarrierCertificate {
            exists: crossing.is_some(),
            degenerate,
            crossing: crossing.map(|c| c.s),
            exit: crossing.and_then(|c| c.exit),
            tail: a,
            samples: shots
                .iter()
                .map(|s| BarrierSample { s: s.s, outcome: s.outcome, defect: if s.outcome == ShotOutcome::Reached { Some(s.defect) } else { None } })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Flow<T> {
    Reached(PhasePoint<T>),
    Absorbed(T),
    Escaped(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Shot<T> {
    s: T,
    outcome: ShotOutcome,
    defect: T,
    exit: Option<PhasePoint<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneExit<T> {
    pub point: PhasePoint<T>,
    /// Position where `F` reached zero inside the band.
    pub absorbed_at: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotOutcome {
    Reached,
    Absorbed,
    Escaped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSample<T> {
    /// `ln F` of the starting point on the decaying zero-energy branch.
    pub s: T,
    pub outcome: ShotOutcome,
    pub defect: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierCertificate<T> {
    pub exists: bool,
    /// Set when the accepted point is a near-tangency without a sign change.
    pub degenerate: bool,
    /// `ln F` at `x = L + tail` of the barrier's starting point.
    pub crossing: Option<T>,
    /// Phase point of the barrier at `x = -tail`.
    pub exit: Option<PhasePoint<T>>,
    /// Distance beyond the band edges over which the sterile tail is resolved.
    pub tail: T,
    pub samples: Vec<BarrierSample<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierOptions {
    pub samples: usize,
    pub ms_mode: MsMode,
    /// Accepted defect, relative to `sqrt(2 G(F2) / D_u)`.
    pub defect_tol: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions { samples: 512, ms_mode: MsMode::Exact, defect_tol: 1e-3 }
    }
}

pub fn barrier_exists<T: Scalar>(u_bar: T, l: T, p: &ModelParameters<T>) -> Result<BarrierCertificate<T>, WavesError> {
    PhasePlane::new(p)?.barrier(u_bar, l, &BarrierOptions::default())
}

/// Relative bisection tolerance on `U_bar`.
pub const TOL_RELEASE: f64 = 1e-6;
/// Absolute bisection tolerance on `L` (km).
pub const TOL_LENGTH: f64 = 1e-4;
/// Predicate evaluations spread over the bracket before bisecting.
pub const MONOTONICITY_PROBES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRelease<T> {
    /// Largest tested release without a barrier.
    pub lo: T,
    /// Smallest tested release with a barrier.
    pub hi: T,
}

impl<T: Scalar> CriticalRelease<T> {
    pub fn estimate(&self) -> T {
        self.lo + (self.hi - self.lo) / T::lit(2.0)
    }
}

/// Bisects a monotone predicate over `[lo, hi]` after checking monotonicity
/// on a few geometric probes. `Ok(None)` when `hi` fails.
pub fn critical_by_predicate<T: Scalar, P: Fn(T) -> Result<bool, WavesError> + Sync>(
    pred: P,
    bracket: (T, T),
    rel_tol: T,
) -> Result<Option<CriticalRelease<T>>, WavesError> {
    let (lo, hi) = bracket;
    if !pred(hi)? {
        return Ok(None);
    }
    if pred(lo)? {
        return Err(WavesError::BracketFloorBlocks { u: lo.as_f64() });
    }
    let ratio = hi / lo;
    let probes: Vec<T> = (1..=MONOTONICITY_PROBES)
        .map(|k| lo * ratio.powf(T::from_usize_lossy(k) / T::from_usize_lossy(MONOTONICITY_PROBES + 1)))
        .collect();
    let verdicts: Vec<bool> = probes.par_iter().map(|&u| pred(u)).collect::<Result<_, _>>()?;
    let mut pattern = vec![false];
    pattern.extend(&verdicts);
    pattern.push(true);
    if pattern.windows(2).any(|w| w[0] && !w[1]) {
        let text = pattern.iter().map(|b| if *b { 'T' } else { 'F' }).collect();
        return Err(WavesError::NonMonotone { pattern: text });
    }
    let first = verdicts.iter().position(|b| *b);
    let (mut a, mut b) = (lo, hi);
    if let Some(k) = first {
        b = probes[k];
        if k > 0 {
            a = probes[k - 1];
        }
    } else if let Some(last) = probes.last() {
        a = *last;
    }
    let mut failure = None;
    let (a, b) = bisect_predicate(
        |u| match pred(u) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                true
            }
        },
        a,
        b,
        rel_tol,
        200,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Some(CriticalRelease { lo: a, hi: b }))
}

/// Critical release `U*(L)` by bisection on [`PhasePlane::barrier`].
pub fn critical_release<T: Scalar>(
    l: T,
    p: &ModelParameters<T>,
    bracket: (T, T),
    rel_tol: T,
    opts: &BarrierOptions,
) -> Result<Option<CriticalRelease<T>>, WavesError> {
    let plane = PhasePlane::new(p)?;
    critical_by_predicate(|u| plane.barrier(u, l, opts).map(|c| c.exists), bracket, rel_tol)
}

/// Default bracket `[mu_s M_inf / 2, 10^3 mu_s M_inf]` for [`critical_release`].
pub fn default_release_bracket<T: Scalar>(p: &ModelParameters<T>) -> Result<(T, T), WavesError> {
    let floor = p.mu_s * m_infinity(p)?;
    Ok((floor / T::lit(2.0), floor * T::lit(1e3)))
}

/// Shortest band admitting a barrier at release `u_cap`, to within `tol` km.
/// An upper proxy for the minimal band width that tightens as `u_cap` grows.
pub fn critical_length<T: Scalar>(p: &ModelParameters<T>, u_cap: T, tol: T, opts: &BarrierOptions) -> Result<T, WavesError> {
    let plane = PhasePlane::new(p)?;
    let pred = |l: T| plane.barrier(u_cap, l, opts).map(|c| c.exists);
    let mut lo = tol;
    if pred(lo)? {
        return Ok(lo);
    }
    let mut hi = T::one();
    let l_max = T::lit(1e3);
    while !pred(hi)? {
        lo = hi;
        hi *= T::lit(2.0);
        if hi > l_max {
            return Err(WavesError::NoBarrierLength { u: u_cap.as_f64(), l_max: l_max.as_f64() });
        }
    }
    while hi - lo > tol {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Least-squares slope of `ln U*` against `ln(L - L*)`; the blow-up rate near
/// `L*`. Points with `L <= L*` are skipped.
pub fn loglog_slope<T: Scalar>(l_star: T, curve: &[(T, T)]) -> Option<T> {
    let pts: Vec<(T, T)> = curve.iter().filter(|(l, u)| *l > l_star && *u > T::zero()).map(|(l, u)| ((*l - l_star).ln(), u.ln())).collect();
    least_squares_slope(&pts)
}

fn least_squares_slope<T: Scalar>(pts: &[(T, T)]) -> Option<T> {
    if pts.len() < 2 {
        return None;
    }
    let n = T::from_usize_lossy(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == T::zero() {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Front speed: least-squares slope of the front position (female level
/// `level`) against time over the second half of the record. Snapshots where
/// the front is absent are skipped.
pub fn measure_wave_speed<T: Scalar>(record: &SpaceTimeRecord<T>, level: T) -> Result<T, WavesError> {
    let t0 = record.snapshots[0].time;
    let mid = t0 + record.span() / T::lit(2.0);
    let pts: Vec<(T, T)> = record
        .snapshots
        .iter()
        .filter(|f| f.time >= mid)
        .filter_map(|f| front_position(f, level).map(|x| (f.time, x)))
        .collect();
    least_squares_slope(&pts).ok_or(WavesError::FrontAbsent)
}
