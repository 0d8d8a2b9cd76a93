//! Time integration of the well-mixed models with an embedded Runge-Kutta
//! 5(4) pair (Dormand-Prince).

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinetics::{rhs_slice, ModelVariant};
use crate::params::ModelParameters;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step budget of {steps} exhausted at t = {t}")]
    TooManySteps { t: f64, steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid initial state: {0}")]
    InvalidInitial(String),
    #[error("t_end must be positive")]
    BadHorizon,
}

/// Error control for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_step: T,
    pub max_steps: usize,
}

impl<T: Scalar> Control<T> {
    pub fn new(rel_tol: T, abs_tol: T) -> Self {
        Control {
            rel_tol,
            abs_tol,
            max_step: T::infinity(),
            max_steps: 10_000_000,
        }
    }

    pub fn with_max_step(mut self, h: T) -> Self {
        self.max_step = h;
        self
    }
}

impl<T: Scalar> Default for Control<T> {
    fn default() -> Self {
        Control::new(T::tol_floor(1e-8), T::tol_floor(1e-8))
    }
}

/// Verdict of a step hook on a candidate state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepCheck {
    Accept,
    /// Retry with a smaller step.
    Reject,
    /// Accept and end the integration here.
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveEnd<T> {
    pub t: T,
    pub stopped: bool,
    pub accepted: usize,
    pub rejected: usize,
}

// Dormand-Prince coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand-Prince 5(4) stepper with reusable scratch space for a fixed dimension.
#[derive(Debug, Clone)]
pub struct Dopri5<T> {
    control: Control<T>,
    k: [Vec<T>; 7],
    stage: Vec<T>,
    y_new: Vec<T>,
    h_last: Option<T>,
}

impl<T: Scalar> Dopri5<T> {
    pub fn new(dim: usize, control: Control<T>) -> Self {
        Dopri5 {
            control,
            k: std::array::from_fn(|_| vec![T::zero(); dim]),
            stage: vec![T::zero(); dim],
            y_new: vec![T::zero(); dim],
            h_last: None,
        }
    }

    pub fn control(&self) -> &Control<T> {
        &self.control
    }

    fn initial_step<F: FnMut(T, &[T], &mut [T])>(&mut self, rhs: &mut F, t0: T, y: &[T], dir: T, span: T) -> T {
        let c = &self.control;
        let sc = |i: usize| c.abs_tol + c.rel_tol * y[i].abs();
        let n = T::from_usize_lossy(y.len());
        let d0 = (y.iter().enumerate().map(|(i, v)| (*v / sc(i)).powi(2)).sum::<T>() / n).sqrt();
        let d1 = (self.k[0].iter().enumerate().map(|(i, v)| (*v / sc(i)).powi(2)).sum::<T>() / n).sqrt();
        let small = T::lit(1e-5);
        let mut h0 = if d0 < small || d1 < small { T::lit(1e-6) } else { T::lit(0.01) * d0 / d1 };
        h0 = h0.min(span).min(c.max_step);
        for i in 0..y.len() {
            self.stage[i] = y[i] + dir * h0 * self.k[0][i];
        }
        let (stage, k1) = (&self.stage, &mut self.k[1]);
        rhs(t0 + dir * h0, stage, k1);
        let d2 = (self.k[1]
            .iter()
            .zip(&self.k[0])
            .enumerate()
            .map(|(i, (a, b))| ((*a - *b) / sc(i)).powi(2))
            .sum::<T>()
            / n)
            .sqrt()
            / h0;
        let h1 = if d1.max(d2) <= T::lit(1e-15) {
            (h0 * T::lit(1e-3)).max(T::lit(1e-6))
        } else {
            (T::lit(0.01) / d1.max(d2)).powf(T::lit(0.2))
        };
        let floor = span * T::lit(1e-10);
        (T::lit(100.0) * h0).min(h1).max(floor).min(span).min(c.max_step)
    }

    /// Integrates `y' = rhs(t, y)` from `t0` to `t1` (either direction) in place.
    ///
    /// `check` sees every candidate state before acceptance and may modify it
    /// (for example clamping), reject it, or stop the integration.
    pub fn solve<F, H>(&mut self, mut rhs: F, t0: T, t1: T, y: &mut [T], mut check: H) -> Result<SolveEnd<T>, OdeError>
    where
        F: FnMut(T, &[T], &mut [T]),
        H: FnMut(T, &mut [T]) -> StepCheck,
    {
        let dim = y.len();
        assert_eq!(dim, self.stage.len(), "state dimension fixed at construction");
        let span = (t1 - t0).abs();
        let mut out = SolveEnd { t: t0, stopped: false, accepted: 0, rejected: 0 };
        if span == T::zero() {
            return Ok(out);
        }
        let dir = if t1 > t0 { T::one() } else { -T::one() };
        let mut t = t0;
        rhs(t, y, &mut self.k[0]);
        let mut h = match self.h_last {
            Some(h) => h.min(span).min(self.control.max_step),
            None => self.initial_step(&mut rhs, t0, y, dir, span),
        };
        let ulp = T::epsilon() * T::lit(16.0);
        let tscale = t0.abs().max(t1.abs()).max(span);
        loop {
            let remaining = (t1 - t).abs();
            if remaining <= ulp * tscale {
                break;
            }
            if out.accepted + out.rejected >= self.control.max_steps {
                return Err(OdeError::TooManySteps { t: t.as_f64(), steps: self.control.max_steps });
            }
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h <= ulp * tscale {
                return Err(OdeError::StepUnderflow { t: t.as_f64() });
            }
            let hs = dir * h;
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = T::zero();
                    for (j, kj) in self.k.iter().enumerate().take(s) {
                        let a = A[s][j];
                        if a != 0.0 {
                            acc += T::lit(a) * kj[i];
                        }
                    }
                    self.stage[i] = y[i] + hs * acc;
                }
                rhs(t + hs * T::lit(C[s]), &self.stage, &mut self.k[s]);
            }
            // the last stage is evaluated at the fifth-order solution
            self.y_new.copy_from_slice(&self.stage);
            let mut err = T::zero();
            for i in 0..dim {
                let mut e = T::zero();
                for (j, kj) in self.k.iter().enumerate() {
                    e += T::lit(E[j]) * kj[i];
                }
                let sc = self.control.abs_tol + self.control.rel_tol * y[i].abs().max(self.y_new[i].abs());
                err += (hs * e / sc).powi(2);
            }
            let err = (err / T::from_usize_lossy(dim)).sqrt();
            if !err.is_finite() || self.y_new.iter().any(|v| !v.is_finite()) {
                if h <= ulp * tscale * T::lit(1e3) {
                    return Err(OdeError::NonFinite { t: t.as_f64() });
                }
                h *= T::lit(0.25);
                out.rejected += 1;
                continue;
            }
            if err > T::one() {
                let fac = (T::lit(0.9) * err.powf(T::lit(-0.2))).max(T::lit(0.2));
                h *= fac;
                out.rejected += 1;
                continue;
            }
            let t_new = if last { t1 } else { t + hs };
            match check(t_new, &mut self.y_new) {
                StepCheck::Reject => {
                    h *= T::lit(0.5);
                    out.rejected += 1;
                    continue;
                }
                verdict => {
                    y.copy_from_slice(&self.y_new);
                    t = t_new;
                    out.accepted += 1;
                    out.t = t;
                    if verdict == StepCheck::Stop {
                        out.stopped = true;
                        return Ok(out);
                    }
                    rhs(t, y, &mut self.k[0]);
                }
            }
            let fac = if err == T::zero() {
                T::lit(5.0)
            } else {
                (T::lit(0.9) * err.powf(T::lit(-0.2))).min(T::lit(5.0)).max(T::lit(0.2))
            };
            h = (h * fac).min(self.control.max_step);
            self.h_last = Some(h);
            if last {
                break;
            }
        }
        out.t = t1;
        Ok(out)
    }
}

/// Piecewise-constant release rate: `u(t) = rate_i` for `t` in `[start_i, start_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseSchedule<T> {
    pieces: Vec<(T, T)>,
}

impl<T: Scalar> ReleaseSchedule<T> {
    pub fn constant(u: T) -> Self {
        ReleaseSchedule { pieces: vec![(T::zero(), u)] }
    }

    /// `pieces` are `(start, rate)` pairs; starts must increase and the first
    /// must be 0.
    pub fn piecewise(pieces: Vec<(T, T)>) -> Result<Self, OdeError> {
        if pieces.is_empty() || pieces[0].0 != T::zero() {
            return Err(OdeError::InvalidInitial("schedule must start at t = 0".into()));
        }
        if pieces.windows(2).any(|w| w[1].0 <= w[0].0) || pieces.iter().any(|p| p.1 < T::zero()) {
            return Err(OdeError::InvalidInitial("schedule starts must increase and rates be >= 0".into()));
        }
        Ok(ReleaseSchedule { pieces })
    }

    pub fn rate_at(&self, t: T) -> T {
        self.pieces.iter().rev().find(|p| p.0 <= t).map_or(self.pieces[0].1, |p| p.1)
    }

    fn breakpoints(&self) -> impl Iterator<Item = T> + '_ {
        self.pieces.iter().skip(1).map(|p| p.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub variant: ModelVariant,
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn last(&self) -> &[T] {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,{}", self.variant.component_names().join(","))?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(w, "{t}")?;
            for v in s {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn check_initial<T: Scalar>(variant: ModelVariant, y0: &[T]) -> Result<(), OdeError> {
    if y0.len() != variant.dim() {
        return Err(OdeError::InvalidInitial(format!(
            "{} components expected for the {} model, got {}",
            variant.dim(),
            variant.name(),
            y0.len()
        )));
    }
    if y0.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(OdeError::InvalidInitial("components must be finite and >= 0".into()));
    }
    Ok(())
}

/// Clamps undershoots in `[-abs_tol, 0)` to zero; deeper undershoots reject the step.
fn nonnegative<T: Scalar>(abs_tol: T) -> impl FnMut(T, &mut [T]) -> StepCheck {
    move |_, y| {
        for v in y.iter_mut() {
            if *v < T::zero() {
                if *v < -abs_tol {
                    return StepCheck::Reject;
                }
                *v = T::zero();
            }
        }
        StepCheck::Accept
    }
}

/// Integrates a well-mixed model over `[0, t_end]`, recording every accepted step.
pub fn integrate<T: Scalar>(
    variant: ModelVariant,
    y0: &[T],
    schedule: &ReleaseSchedule<T>,
    t_end: T,
    control: Control<T>,
    p: &ModelParameters<T>,
) -> Result<Trajectory<T>, OdeError> {
    check_initial(variant, y0)?;
    if !(t_end > T::zero()) {
        return Err(OdeError::BadHorizon);
    }
    let mut traj = Trajectory { variant, times: vec![T::zero()], states: vec![y0.to_vec()] };
    let mut y = y0.to_vec();
    let mut solver = Dopri5::new(variant.dim(), control);
    let mut t = T::zero();
    let mut edges: Vec<T> = schedule.breakpoints().filter(|b| *b < t_end).collect();
    edges.push(t_end);
    for edge in edges {
        let u = schedule.rate_at(t);
        let mut clamp = nonnegative(control.abs_tol);
        let times = &mut traj.times;
        let states = &mut traj.states;
        solver.solve(
            |_, y, dy| rhs_slice(variant, y, u, p, dy),
            t,
            edge,
            &mut y,
            |tn, yn| {
                let verdict = clamp(tn, yn);
                if verdict == StepCheck::Accept {
                    times.push(tn);
                    states.push(yn.to_vec());
                }
                verdict
            },
        )?;
        t = edge;
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettleOptions<T> {
    /// Give up after this much model time.
    pub t_cap: T,
    /// Converged once `|rhs|_inf <= stall_factor * (abs_tol + |y|_inf)`.
    pub stall_factor: T,
}

impl<T: Scalar> Default for SettleOptions<T> {
    fn default() -> Self {
        SettleOptions { t_cap: T::lit(1e5), stall_factor: T::lit(1e-9) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settled<T> {
    pub state: Vec<T>,
    pub time: T,
    pub converged: bool,
}

/// Integrates under constant release until the vector field stalls or the time cap is hit.
pub fn settle<T: Scalar>(
    variant: ModelVariant,
    y0: &[T],
    u: T,
    control: Control<T>,
    options: SettleOptions<T>,
    p: &ModelParameters<T>,
) -> Result<Settled<T>, OdeError> {
    check_initial(variant, y0)?;
    let mut y = y0.to_vec();
    let mut dy = vec![T::zero(); y.len()];
    let stalled = |y: &[T], dy: &mut [T]| {
        rhs_slice(variant, y, u, p, dy);
        let ynorm = y.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let fnorm = dy.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        fnorm <= options.stall_factor * (control.abs_tol + ynorm)
    };
    if stalled(&y, &mut dy) {
        return Ok(Settled { state: y, time: T::zero(), converged: true });
    }
    let mut solver = Dopri5::new(variant.dim(), control);
    let mut clamp = nonnegative(control.abs_tol);
    let end = solver.solve(
        |_, y, dy| rhs_slice(variant, y, u, p, dy),
        T::zero(),
        options.t_cap,
        &mut y,
        |t, yn| match clamp(t, yn) {
            StepCheck::Accept if stalled(yn, &mut dy) => StepCheck::Stop,
            v => v,
        },
    )?;
    Ok(Settled { state: y, time: end.t, converged: end.stopped })
}
