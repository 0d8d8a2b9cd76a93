//! Reaction terms of the well-mixed mosquito models, their equilibria and the
//! linear stability of the mosquito-free state.
//!
//! Three variants share one parameter set:
//!
//! * [`ModelVariant::Full`]: aquatic stage `E`, wild males `M`, females `F`,
//!   sterile males `Ms`; mating success enters the egg-laying term.
//! * [`ModelVariant::Fertilized`]: same compartments with fertilized females
//!   `Fm`; mating success enters the `Fm` recruitment term.
//! * [`ModelVariant::Reduced`]: `(F, Ms)` obtained from the full model with
//!   `M = tau F` and `E` at its quasi-steady value, giving `dF/dt = g(F, Ms)`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::eigen::SmallMatrix;
use crate::params::ModelParameters;
use crate::roots::bisect_bracket;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    Full,
    Reduced,
    Fertilized,
}

impl ModelVariant {
    pub fn component_names(self) -> &'static [&'static str] {
        match self {
            ModelVariant::Full => &["E", "M", "F", "Ms"],
            ModelVariant::Fertilized => &["E", "M", "Fm", "Ms"],
            ModelVariant::Reduced => &["F", "Ms"],
        }
    }

    pub fn dim(self) -> usize {
        self.component_names().len()
    }

    /// Index of the female compartment (`F` or `Fm`) in the state vector.
    pub fn female_index(self) -> usize {
        match self {
            ModelVariant::Reduced => 0,
            _ => 2,
        }
    }

    pub fn sterile_index(self) -> usize {
        self.dim() - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Full => "full",
            ModelVariant::Reduced => "reduced",
            ModelVariant::Fertilized => "fertilized",
        }
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(ModelVariant::Full),
            "reduced" => Ok(ModelVariant::Reduced),
            "fertilized" => Ok(ModelVariant::Fertilized),
            other => Err(format!("unknown model variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FullState<T> {
    pub e: T,
    pub m: T,
    pub f: T,
    pub ms: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FertilizedState<T> {
    pub e: T,
    pub m: T,
    pub fm: T,
    pub ms: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReducedState<T> {
    pub f: T,
    pub ms: T,
}

impl<T: Scalar> FullState<T> {
    pub fn to_vec(self) -> Vec<T> {
        vec![self.e, self.m, self.f, self.ms]
    }
    pub fn from_slice(y: &[T]) -> Self {
        FullState { e: y[0], m: y[1], f: y[2], ms: y[3] }
    }
}

impl<T: Scalar> FertilizedState<T> {
    pub fn to_vec(self) -> Vec<T> {
        vec![self.e, self.m, self.fm, self.ms]
    }
    pub fn from_slice(y: &[T]) -> Self {
        FertilizedState { e: y[0], m: y[1], fm: y[2], ms: y[3] }
    }
}

impl<T: Scalar> ReducedState<T> {
    pub fn to_vec(self) -> Vec<T> {
        vec![self.f, self.ms]
    }
    pub fn from_slice(y: &[T]) -> Self {
        ReducedState { f: y[0], ms: y[1] }
    }
}

/// Allee factor `1 - e^{-beta x}`, or 1 in the `beta -> inf` limit.
#[inline]
fn allee<T: Scalar>(x: T, p: &ModelParameters<T>) -> T {
    if p.beta_infinite {
        T::one()
    } else {
        -(-p.beta * x).exp_m1()
    }
}

/// Probability-weighted mating success `(1 - e^{-beta (M + gamma_s Ms)}) M / (M + gamma_s Ms)`;
/// zero when no male is present.
#[inline]
pub fn mating_success<T: Scalar>(m: T, ms: T, p: &ModelParameters<T>) -> T {
    let males = m + p.gamma_s * ms;
    if males <= T::zero() {
        return T::zero();
    }
    allee(males, p) * m / males
}

#[inline]
fn g_with_allee<T: Scalar>(f: T, ms: T, p: &ModelParameters<T>, allee_factor: impl Fn(T) -> T) -> T {
    if f == T::zero() {
        return T::zero();
    }
    let tau = p.tau();
    let males = tau * f + p.gamma_s * ms;
    let laying = p.b * tau * f * f * allee_factor(males);
    if laying == T::zero() {
        // f*f underflowed
        return -p.mu_f * f;
    }
    let num = p.r * p.nu_e * p.k * laying;
    let den = laying + p.k * p.aquatic_exit() * males;
    num / den - p.mu_f * f
}

/// Reduced nonlinearity `g(F, Ms)` with finite `beta` (the flag is ignored).
pub fn g<T: Scalar>(f: T, ms: T, p: &ModelParameters<T>) -> T {
    g_with_allee(f, ms, p, |x| -(-p.beta * x).exp_m1())
}

/// `beta -> inf` limit of [`g`].
pub fn g_beta_inf<T: Scalar>(f: T, ms: T, p: &ModelParameters<T>) -> T {
    g_with_allee(f, ms, p, |_| T::one())
}

/// [`g`] or [`g_beta_inf`] depending on `p.beta_infinite`.
#[inline]
pub fn reaction<T: Scalar>(f: T, ms: T, p: &ModelParameters<T>) -> T {
    if p.beta_infinite {
        g_beta_inf(f, ms, p)
    } else {
        g(f, ms, p)
    }
}

pub fn rhs_full<T: Scalar>(s: FullState<T>, u: T, p: &ModelParameters<T>) -> FullState<T> {
    let laying = p.b * (T::one() - s.e / p.k) * s.f * mating_success(s.m, s.ms, p);
    FullState {
        e: laying - p.aquatic_exit() * s.e,
        m: (T::one() - p.r) * p.nu_e * s.e - p.mu_m * s.m,
        f: p.r * p.nu_e * s.e - p.mu_f * s.f,
        ms: u - p.mu_s * s.ms,
    }
}

pub fn rhs_fertilized<T: Scalar>(s: FertilizedState<T>, u: T, p: &ModelParameters<T>) -> FertilizedState<T> {
    FertilizedState {
        e: p.b * (T::one() - s.e / p.k) * s.fm - p.aquatic_exit() * s.e,
        m: (T::one() - p.r) * p.nu_e * s.e - p.mu_m * s.m,
        fm: p.r * p.nu_e * s.e * mating_success(s.m, s.ms, p) - p.mu_f * s.fm,
        ms: u - p.mu_s * s.ms,
    }
}

pub fn rhs_reduced<T: Scalar>(s: ReducedState<T>, u: T, p: &ModelParameters<T>) -> ReducedState<T> {
    ReducedState {
        f: reaction(s.f, s.ms, p),
        ms: u - p.mu_s * s.ms,
    }
}

/// Right-hand side on a flat state vector. Negative inputs (stage overshoots
/// inside an integrator) are read as zero.
pub fn rhs_slice<T: Scalar>(variant: ModelVariant, y: &[T], u: T, p: &ModelParameters<T>, out: &mut [T]) {
    let c = |v: T| v.max(T::zero());
    match variant {
        ModelVariant::Full => {
            let d = rhs_full(FullState { e: c(y[0]), m: c(y[1]), f: c(y[2]), ms: c(y[3]) }, u, p);
            out.copy_from_slice(&[d.e, d.m, d.f, d.ms]);
        }
        ModelVariant::Fertilized => {
            let d = rhs_fertilized(FertilizedState { e: c(y[0]), m: c(y[1]), fm: c(y[2]), ms: c(y[3]) }, u, p);
            out.copy_from_slice(&[d.e, d.m, d.fm, d.ms]);
        }
        ModelVariant::Reduced => {
            let d = rhs_reduced(ReducedState { f: c(y[0]), ms: c(y[1]) }, u, p);
            out.copy_from_slice(&[d.f, d.ms]);
        }
    }
}

/// Quasi-steady aquatic density for the full model: the `E` that zeroes `dE/dt`
/// given `F`, `M`, `Ms`.
pub fn aquatic_equilibrium<T: Scalar>(f: T, m: T, ms: T, p: &ModelParameters<T>) -> T {
    let laying = p.b * f * mating_success(m, ms, p);
    if laying <= T::zero() {
        return T::zero();
    }
    laying / (laying / p.k + p.aquatic_exit())
}

/// Quasi-steady aquatic density for the fertilized-female model.
pub fn aquatic_equilibrium_fertilized<T: Scalar>(fm: T, p: &ModelParameters<T>) -> T {
    let laying = p.b * fm;
    if laying <= T::zero() {
        return T::zero();
    }
    laying / (laying / p.k + p.aquatic_exit())
}

/// Full-model state slaved to a female density `F`: `M = tau F`, `E` quasi-steady.
pub fn slaved_full_state<T: Scalar>(f: T, ms: T, p: &ModelParameters<T>) -> FullState<T> {
    let m = p.tau() * f;
    FullState { e: aquatic_equilibrium(f, m, ms, p), m, f, ms }
}

/// Fertilized-model state sharing `E` and `M` with [`slaved_full_state`] for
/// the same `F`: `Fm = F * mating_success(M, Ms)`.
pub fn slaved_fertilized_state<T: Scalar>(f: T, ms: T, p: &ModelParameters<T>) -> FertilizedState<T> {
    let full = slaved_full_state(f, ms, p);
    FertilizedState {
        e: full.e,
        m: full.m,
        fm: f * mating_success(full.m, ms, p),
        ms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    /// `g` keeps its sign across the root (tangency).
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium<T> {
    pub f: T,
    pub stability: Stability,
}

/// Positive roots of `F -> g(F, Ms)`, increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet<T> {
    pub ms: T,
    pub roots: Vec<Equilibrium<T>>,
}

impl<T: Scalar> EquilibriumSet<T> {
    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    /// `(F1, F2)` when exactly two roots exist, unstable then stable.
    pub fn bistable_pair(&self) -> Option<(T, T)> {
        match self.roots.as_slice() {
            [a, b] if a.stability == Stability::Unstable && b.stability == Stability::Stable => Some((a.f, b.f)),
            _ => None,
        }
    }

    /// Largest stable root (the invaded state).
    pub fn invaded(&self) -> Option<T> {
        self.roots.iter().rev().find(|r| r.stability == Stability::Stable).map(|r| r.f)
    }
}

/// Number of uniform scan points on `(0, K r nu_E / mu_F]`.
pub const ROOT_SCAN_POINTS: usize = 2048;
/// Geometric scan points between `1e-12` of the upper end and the first uniform point.
pub const ROOT_SCAN_GEOMETRIC_POINTS: usize = 2048;
/// Relative bisection tolerance on roots.
pub const TOL_ROOT: f64 = 1e-10;

/// Scan grid for root detection: uniform points plus a geometric refinement
/// near zero where the Allee threshold sits for large `K`.
pub fn root_scan_grid<T: Scalar>(upper: T, uniform: usize, geometric: usize) -> Vec<T> {
    let mut pts = Vec::with_capacity(uniform + geometric);
    let step = upper / T::from_usize_lossy(uniform);
    if geometric > 0 {
        let lo = (upper * T::lit(1e-12)).ln();
        let hi = step.ln();
        for i in 0..geometric {
            let t = T::from_usize_lossy(i) / T::from_usize_lossy(geometric);
            pts.push((lo + (hi - lo) * t).exp());
        }
    }
    for i in 1..=uniform {
        pts.push(step * T::from_usize_lossy(i));
    }
    pts
}

pub fn positive_equilibria<T: Scalar>(ms: T, p: &ModelParameters<T>) -> EquilibriumSet<T> {
    positive_equilibria_on(ms, p, &root_scan_grid(p.f_upper(), ROOT_SCAN_POINTS, ROOT_SCAN_GEOMETRIC_POINTS))
}

/// [`positive_equilibria`] on a caller-provided increasing scan grid.
pub fn positive_equilibria_on<T: Scalar>(ms: T, p: &ModelParameters<T>, grid: &[T]) -> EquilibriumSet<T> {
    let h = |f: T| reaction(f, ms, p);
    let tol = T::tol_floor(TOL_ROOT);
    let mut roots = Vec::new();
    let mut prev: Option<(T, T)> = None;
    for &x in grid {
        let v = h(x);
        if let Some((xp, vp)) = prev {
            if vp != T::zero() && (v == T::zero() || vp.signum() != v.signum()) {
                let (a, b) = bisect_bracket(h, xp, x, tol * x, 400).expect("sign change brackets a root");
                roots.push(a + (b - a) / T::lit(2.0));
            }
        }
        prev = Some((x, v));
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= tol * b.abs());
    let radius = tol * T::lit(1e3);
    let roots = roots
        .into_iter()
        .map(|f| {
            let left = h(f * (T::one() - radius));
            let right = h(f * (T::one() + radius));
            let stability = if left > T::zero() && right < T::zero() {
                Stability::Stable
            } else if left < T::zero() && right > T::zero() {
                Stability::Unstable
            } else {
                Stability::Degenerate
            };
            Equilibrium { f, stability }
        })
        .collect();
    EquilibriumSet { ms, roots }
}

/// Female density of the invaded state without release, in the variant's own
/// female compartment (`F`, or `Fm` for the fertilized model). `None` when no
/// stable positive equilibrium exists.
pub fn invaded_female_level<T: Scalar>(variant: ModelVariant, p: &ModelParameters<T>) -> Option<T> {
    let f = positive_equilibria(T::zero(), p).invaded()?;
    Some(match variant {
        ModelVariant::Fertilized => slaved_fertilized_state(f, T::zero(), p).fm,
        _ => f,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianVariant {
    Full,
    Fertilized,
    /// Three-compartment `(E, M, F)` system at `Ms = 0` with `beta -> inf`.
    FullBetaInf,
}

/// Jacobian at the mosquito-free state `(0, 0, 0, U_bar / mu_s)`.
pub fn mosquito_free_jacobian_matrix<T: Scalar>(variant: JacobianVariant, u_bar: T, p: &ModelParameters<T>) -> SmallMatrix<T> {
    let z = T::zero();
    let ms = u_bar / p.mu_s;
    let ce = p.aquatic_exit();
    let male_e = (T::one() - p.r) * p.nu_e;
    let female_e = p.r * p.nu_e;
    match variant {
        JacobianVariant::Full => {
            // d(laying)/dF at M = 0 is b * mating_success(0, Ms) = 0
            let de_df = p.b * mating_success(z, ms, p);
            SmallMatrix::from_rows(&[
                &[-ce, z, de_df, z],
                &[male_e, -p.mu_m, z, z],
                &[female_e, z, -p.mu_f, z],
                &[z, z, z, -p.mu_s],
            ])
        }
        JacobianVariant::Fertilized => SmallMatrix::from_rows(&[
            &[-ce, z, p.b, z],
            &[male_e, -p.mu_m, z, z],
            &[female_e * mating_success(z, ms, p), z, -p.mu_f, z],
            &[z, z, z, -p.mu_s],
        ]),
        JacobianVariant::FullBetaInf => SmallMatrix::from_rows(&[
            &[-ce, z, p.b],
            &[male_e, -p.mu_m, z],
            &[female_e, z, -p.mu_f],
        ]),
    }
}

pub fn mosquito_free_jacobian<T: Scalar>(variant: JacobianVariant, u_bar: T, p: &ModelParameters<T>) -> Vec<Complex<T>> {
    mosquito_free_jacobian_matrix(variant, u_bar, p).eigenvalues()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> ModelParameters<f64> {
        ModelParameters::reference(1000.0)
    }

    /// Root oracle kept independent of `positive_equilibria`: dense uniform
    /// sign scan of the closed-form `g(F, 0)` numerator, then plain bisection.
    fn oracle_roots(p: &ModelParameters<f64>) -> Vec<f64> {
        let tau = p.tau();
        let numer = |f: f64| {
            let a = 1.0 - (-p.beta * tau * f).exp();
            p.b * (p.k * p.r * p.nu_e - p.mu_f * f) * a - p.k * p.mu_f * p.aquatic_exit()
        };
        let n = 200_000;
        let top = p.f_upper();
        let mut out = Vec::new();
        for i in 1..n {
            let (a, b) = (top * i as f64 / n as f64, top * (i + 1) as f64 / n as f64);
            if numer(a).signum() != numer(b).signum() {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if numer(mid).signum() == numer(lo).signum() {
                        lo = mid
                    } else {
                        hi = mid
                    }
                }
                out.push(0.5 * (lo + hi));
            }
        }
        out
    }

    #[test]
    fn g_vanishes_at_zero_density() {
        let p = reference();
        for ms in [0.0, 1.0, 1e3, 1e6] {
            assert_eq!(g(0.0, ms, &p), 0.0);
            assert_eq!(g_beta_inf(0.0, ms, &p), 0.0);
        }
    }

    #[test]
    fn g_finite_at_subnormal_density() {
        let p = reference();
        for f in [1e-320, 5e-324, 1e-200] {
            for ms in [0.0, 1e3] {
                assert!(g(f, ms, &p).is_finite() && g(f, ms, &p).abs() <= 1e-150, "{f} {ms}");
                assert!(g_beta_inf(f, ms, &p).is_finite());
            }
        }
    }

    #[test]
    fn equilibria_reference_match_oracle() {
        let p = reference();
        let set = positive_equilibria(0.0, &p);
        let oracle = oracle_roots(&p);
        assert_eq!(oracle.len(), 2);
        assert_eq!(set.len(), 2);
        for (r, o) in set.roots.iter().zip(&oracle) {
            assert_relative_eq!(r.f, *o, max_relative = 1e-9);
        }
        let (f1, f2) = set.bistable_pair().expect("unstable then stable");
        assert!(0.0 < f1 && f1 < f2 && f2 < p.f_upper());
        // frozen from the oracle above
        assert_relative_eq!(f1, 3.174_484_717_149_8, max_relative = 1e-8);
        assert_relative_eq!(f2, 603.795_233_701_353_7, max_relative = 1e-8);
    }

    #[test]
    fn sign_pattern_between_roots() {
        let p = reference();
        let (f1, f2) = positive_equilibria(0.0, &p).bistable_pair().unwrap();
        for i in 1..200 {
            let t = i as f64 / 200.0;
            assert!(g(f1 * t, 0.0, &p) < 0.0);
            assert!(g(f1 + (f2 - f1) * t, 0.0, &p) > 0.0);
            assert!(g(f2 * (1.0 + 3.0 * t), 0.0, &p) < 0.0);
        }
    }

    #[test]
    fn large_release_kills_every_root() {
        let p = reference();
        let u_tilde = p.derive().u_tilde.unwrap();
        let ms = 1.01 * u_tilde / p.mu_s;
        assert!(positive_equilibria(ms, &p).is_empty());
        let top = p.f_upper();
        for i in 1..=20_000 {
            let f = top * i as f64 / 20_000.0;
            assert!(g(f, ms, &p) < 0.0, "g >= 0 at F = {f}");
        }
    }

    #[test]
    fn non_viable_has_no_roots() {
        let mut p = reference();
        p.b = 0.9 * p.mu_f * p.aquatic_exit() / (p.r * p.nu_e);
        assert!(!p.is_viable());
        assert!(positive_equilibria(0.0, &p).is_empty());
    }

    #[test]
    fn beta_inf_root_is_f_mono() {
        let p = reference().with_beta_infinite(true);
        let set = positive_equilibria(0.0, &p);
        assert_eq!(set.len(), 1);
        assert_eq!(set.roots[0].stability, Stability::Stable);
        assert_relative_eq!(set.roots[0].f, p.derive().f_mono.unwrap(), max_relative = 1e-9);
        // closed form at Ms = 0
        let f = 123.0;
        let closed = p.r * p.nu_e * p.k * p.b * f / (p.b * f + p.k * p.aquatic_exit()) - p.mu_f * f;
        assert_relative_eq!(g_beta_inf(f, 0.0, &p), closed, max_relative = 1e-12);
    }

    #[test]
    fn beta_inf_dominates_finite_beta() {
        for beta in [1e-4, 1e-2, 1.0, 100.0] {
            let mut p = reference();
            p.beta = beta;
            for i in 0..400 {
                let f = p.f_upper() * 1.2 * i as f64 / 400.0;
                assert!(g_beta_inf(f, 0.0, &p) >= g(f, 0.0, &p) - 1e-12 * f.max(1.0));
            }
        }
    }

    #[test]
    fn extinction_is_absorbing() {
        let p = reference();
        let d = rhs_full(FullState { e: 0.0, m: 0.0, f: 0.0, ms: 50.0 }, 30.0, &p);
        assert_eq!(d, FullState { e: 0.0, m: 0.0, f: 0.0, ms: 30.0 - p.mu_s * 50.0 });
        let d = rhs_fertilized(FertilizedState { e: 0.0, m: 0.0, fm: 0.0, ms: 50.0 }, 30.0, &p);
        assert_eq!(d, FertilizedState { e: 0.0, m: 0.0, fm: 0.0, ms: 30.0 - p.mu_s * 50.0 });
        let d = rhs_reduced(ReducedState { f: 0.0, ms: 50.0 }, 30.0, &p);
        assert_eq!(d, ReducedState { f: 0.0, ms: 30.0 - p.mu_s * 50.0 });
        // steady sterile density under constant release
        let ms = 30.0 / p.mu_s;
        assert_eq!(rhs_reduced(ReducedState { f: 0.0, ms }, 30.0, &p).ms, 0.0);
    }

    #[test]
    fn aquatic_stage_decays_above_capacity() {
        let p = reference();
        let d = rhs_full(FullState { e: 1.5 * p.k, m: 10.0, f: 300.0, ms: 0.0 }, 0.0, &p);
        assert!(d.e < 0.0);
    }

    #[test]
    fn full_equilibria_from_reduced_roots() {
        let p = reference();
        for root in positive_equilibria(0.0, &p).roots {
            let s = slaved_full_state(root.f, 0.0, &p);
            let d = rhs_full(s, 0.0, &p);
            let scale = p.k * p.aquatic_exit();
            assert!(d.e.abs() < 1e-9 * scale && d.m.abs() < 1e-9 * scale && d.f.abs() < 1e-9 * scale, "{d:?}");
        }
    }

    #[test]
    fn fertilized_equilibria_share_aquatic_and_male_levels() {
        // Steady (7) at u = 0 reduces to r nu_E E phi(M)/mu_F = Fm with M and E
        // tied to F = r nu_E E / mu_F exactly as in (1); solve that scalar
        // equation in E independently and compare.
        let p = reference();
        let tau = p.tau();
        let resid = |e: f64| {
            let f = p.r * p.nu_e * e / p.mu_f;
            let m = tau * f;
            let fm = f * mating_success(m, 0.0, &p);
            p.b * (1.0 - e / p.k) * fm - p.aquatic_exit() * e
        };
        let mut e_roots = Vec::new();
        let n = 100_000;
        for i in 1..n {
            let (a, b) = (p.k * i as f64 / n as f64, p.k * (i + 1) as f64 / n as f64);
            if resid(a).signum() != resid(b).signum() {
                e_roots.push(crate::roots::bisect(resid, a, b, 1e-13 * b, 300).unwrap());
            }
        }
        let set = positive_equilibria(0.0, &p);
        assert_eq!(e_roots.len(), set.len());
        for (e, root) in e_roots.iter().zip(&set.roots) {
            let s = slaved_fertilized_state(root.f, 0.0, &p);
            assert_relative_eq!(s.e, *e, max_relative = 1e-8);
            assert_relative_eq!(p.r * p.nu_e * s.e / p.mu_f, root.f, max_relative = 1e-8);
            let d = rhs_fertilized(s, 0.0, &p);
            assert!(d.e.abs() < 1e-8 && d.m.abs() < 1e-8 && d.fm.abs() < 1e-8, "{d:?}");
        }
    }

    #[test]
    fn aquatic_equilibrium_bounds() {
        let p = reference();
        assert_eq!(aquatic_equilibrium(0.0, 10.0, 5.0, &p), 0.0);
        assert_eq!(aquatic_equilibrium(10.0, 0.0, 0.0, &p), 0.0);
        for f in [1e-3, 1.0, 100.0, 1e4, 1e8] {
            let e = aquatic_equilibrium(f, p.tau() * f, 3.0, &p);
            assert!((0.0..p.k).contains(&e));
        }
    }

    #[test]
    fn reduction_reproduces_g() {
        let p = reference();
        for &(f, ms) in &[(0.5, 0.0), (3.0, 10.0), (250.0, 0.0), (600.0, 4000.0), (1e4, 1.0)] {
            let s = slaved_full_state(f, ms, &p);
            let df = p.r * p.nu_e * s.e - p.mu_f * f;
            assert_relative_eq!(df, g(f, ms, &p), max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn jacobian_full_is_diagonal_rates() {
        let p = reference();
        for u in [0.0, 100.0, 1e4] {
            let ev = mosquito_free_jacobian(JacobianVariant::Full, u, &p);
            let re: Vec<f64> = ev.iter().map(|z| z.re).collect();
            assert_eq!(re, vec![-(p.nu_e + p.mu_e), -p.mu_m, -p.mu_f, -p.mu_s]);
            assert!(ev.iter().all(|z| z.im == 0.0));
        }
    }

    #[test]
    fn jacobian_fertilized_is_stable() {
        let p = reference();
        let ev = mosquito_free_jacobian(JacobianVariant::Fertilized, 500.0, &p);
        assert!(ev.iter().all(|z| z.re < 0.0));
        let mut re: Vec<f64> = ev.iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in re.iter().zip([-p.mu_s, -p.mu_m, -(p.nu_e + p.mu_e), -p.mu_f]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn jacobian_beta_inf_unstable_for_reference() {
        let p = reference();
        let ev = mosquito_free_jacobian(JacobianVariant::FullBetaInf, 0.0, &p);
        assert!(ev.iter().any(|z| z.re > 0.0));
        // (lambda + mu_M) [(lambda + c_E)(lambda + mu_F) - b r nu_E] factorisation
        let ce = p.aquatic_exit();
        let disc = ((ce - p.mu_f).powi(2) + 4.0 * p.b * p.r * p.nu_e).sqrt();
        let top = 0.5 * (-(ce + p.mu_f) + disc);
        let max_re = ev.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        assert_relative_eq!(max_re, top, max_relative = 1e-9);
    }

    #[test]
    fn jacobian_beta_inf_stable_below_viability() {
        let mut p = reference();
        p.b = 0.5 * p.mu_f * p.aquatic_exit() / (p.r * p.nu_e);
        let ev = mosquito_free_jacobian(JacobianVariant::FullBetaInf, 0.0, &p);
        assert!(ev.iter().all(|z| z.re < 0.0), "{ev:?}");
    }

    #[test]
    fn f32_kinetics_agree_with_f64() {
        let p64 = reference();
        let p32 = ModelParameters::<f32>::reference(1000.0);
        for &f in &[1.0f32, 10.0, 300.0] {
            let a = g(f, 5.0, &p32) as f64;
            let b = g(f as f64, 5.0, &p64);
            assert!((a - b).abs() <= 1e-4 * b.abs().max(1.0));
        }
        let set = positive_equilibria(0.0f32, &p32);
        assert_eq!(set.len(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn g_nonincreasing_in_ms(fi in 1u32..=400, mi in 0u32..400, dm in 1u32..50) {
                // sampled on (0, 2 F2] x [0, 2 U_tilde / mu_s]
                let p = reference();
                let f2 = 603.795_233_701_353_7;
                let top_ms = 2.0 * p.derive().u_tilde.unwrap() / p.mu_s;
                let f = 2.0 * f2 * fi as f64 / 400.0;
                let m0 = top_ms * mi as f64 / 400.0;
                let m1 = m0 + top_ms * dm as f64 / 400.0;
                prop_assert!(g(f, m1, &p) <= g(f, m0, &p) + 1e-12 * f);
            }

            #[test]
            fn equilibria_stable_under_grid_refinement(extra in 0usize..4) {
                let p = reference();
                let base = positive_equilibria(0.0, &p);
                let fine = root_scan_grid(p.f_upper(), ROOT_SCAN_POINTS << extra, ROOT_SCAN_GEOMETRIC_POINTS << extra);
                let refined = positive_equilibria_on(0.0, &p, &fine);
                prop_assert_eq!(base.len(), refined.len());
                for (a, b) in base.roots.iter().zip(&refined.roots) {
                    prop_assert!((a.f - b.f).abs() <= 1e-9 * b.f);
                    prop_assert_eq!(a.stability, b.stability);
                }
            }

            #[test]
            fn reduction_identity_random(f in 1e-3f64..2e3, ms in 0.0f64..1e4) {
                let p = reference();
                let s = slaved_full_state(f, ms, &p);
                let df = p.r * p.nu_e * s.e - p.mu_f * f;
                let gv = g(f, ms, &p);
                prop_assert!((df - gv).abs() <= 1e-12 * (p.mu_f * f).max(gv.abs()));
            }
        }
    }
}
