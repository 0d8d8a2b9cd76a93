//! Model constants, their validity rules and the quantities derived from them.
//!
//! Units: rates per day, lengths in km, densities in km⁻². Release rates
//! (`u`, `U_bar`) carry km⁻²·day⁻¹.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Aquatic carrying capacity used by the presets when no other value is given.
///
/// Chosen so that the L = 5 km release patterns (10 000 passes, 20 000 blocks)
/// appear for the reduced and the full model at the release intensities of the
/// figure presets.
pub const DEFAULT_K: f64 = 25_000.0;

/// Biological and physical constants of the mosquito model.
///
/// JSON field names are the conventional symbols (`mu_E`, `K`, `D_u`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParameters<T> {
    /// Oviposition rate.
    pub b: T,
    /// Probability that an emerging adult is female.
    pub r: T,
    #[serde(rename = "mu_E")]
    pub mu_e: T,
    #[serde(rename = "nu_E")]
    pub nu_e: T,
    #[serde(rename = "mu_F")]
    pub mu_f: T,
    #[serde(rename = "mu_M")]
    pub mu_m: T,
    pub mu_s: T,
    /// Mating efficiency; `(1 - e^{-beta (M + gamma_s Ms)})` is the Allee factor.
    pub beta: T,
    /// Competitiveness of sterile males (written γ or γ_s).
    pub gamma_s: T,
    /// Environmental capacity of the aquatic phase.
    #[serde(rename = "K")]
    pub k: T,
    /// Diffusivity shared by all adult compartments.
    #[serde(rename = "D_u")]
    pub d_u: T,
    /// Use the `beta -> +inf` kinetics instead of the finite-`beta` Allee factor.
    #[serde(default)]
    pub beta_infinite: bool,
}

/// One violated validity rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("invalid parameters: {}", .0.iter().map(|v| v.message.clone()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("cannot read parameter file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed parameter JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl ParamError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ParamError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// Quantities computed once from [`ModelParameters`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants<T> {
    /// Male/female ratio `(1-r) mu_F / (r mu_M)` at equilibrium.
    pub tau: T,
    /// Release rate above which the mosquito-free state is the only equilibrium.
    pub u_tilde: Option<T>,
    /// Nonzero root of `F -> g(F, 0)` in the `beta -> inf` limit.
    pub f_mono: Option<T>,
    /// `b r nu_E > mu_F (nu_E + mu_E)`.
    pub viable: bool,
}

impl<T: Scalar> ModelParameters<T> {
    /// Reference rate constants with the given carrying capacity.
    pub fn reference(k: T) -> Self {
        ModelParameters {
            b: T::lit(10.0),
            r: T::lit(0.49),
            mu_e: T::lit(0.03),
            nu_e: T::lit(0.05),
            mu_f: T::lit(0.04),
            mu_m: T::lit(0.1),
            mu_s: T::lit(0.12),
            beta: T::lit(1e-2),
            gamma_s: T::lit(1.0),
            k,
            d_u: T::lit(0.0125),
            beta_infinite: false,
        }
    }

    pub fn with_beta_infinite(mut self, on: bool) -> Self {
        self.beta_infinite = on;
        self
    }

    pub fn with_k(mut self, k: T) -> Self {
        self.k = k;
        self
    }

    pub fn with_diffusivity(mut self, d_u: T) -> Self {
        self.d_u = d_u;
        self
    }

    /// Returns the parameters unchanged when every rule holds, otherwise all
    /// violations at once.
    pub fn validate(self) -> Result<Self, ParamError> {
        let mut bad = Vec::new();
        let zero = T::zero();
        let mut positive = |field: &'static str, value: T| {
            if !(value > zero) || !value.is_finite() {
                bad.push(Violation {
                    field,
                    message: format!("{field} must be positive"),
                });
            }
        };
        positive("b", self.b);
        positive("mu_E", self.mu_e);
        positive("nu_E", self.nu_e);
        positive("mu_F", self.mu_f);
        positive("mu_M", self.mu_m);
        positive("mu_s", self.mu_s);
        positive("gamma_s", self.gamma_s);
        positive("K", self.k);
        positive("D_u", self.d_u);
        if !self.beta_infinite {
            positive("beta", self.beta);
        }
        if !(self.r > zero && self.r < T::one()) {
            bad.push(Violation {
                field: "r",
                message: "r out of (0,1)".to_string(),
            });
        }
        if bad.is_empty() {
            Ok(self)
        } else {
            Err(ParamError::Invalid(bad))
        }
    }

    pub fn tau(&self) -> T {
        (T::one() - self.r) * self.mu_f / (self.r * self.mu_m)
    }

    /// `nu_E + mu_E`, the total exit rate of the aquatic phase.
    #[inline]
    pub fn aquatic_exit(&self) -> T {
        self.nu_e + self.mu_e
    }

    pub fn is_viable(&self) -> bool {
        self.b * self.r * self.nu_e > self.mu_f * self.aquatic_exit()
    }

    /// Upper end `K r nu_E / mu_F` of the interval holding every positive root of `g`.
    pub fn f_upper(&self) -> T {
        self.k * self.r * self.nu_e / self.mu_f
    }

    pub fn derive(&self) -> DerivedConstants<T> {
        let tau = self.tau();
        let viable = self.is_viable();
        let surplus = self.b * self.r * self.nu_e - self.mu_f * self.aquatic_exit();
        let (u_tilde, f_mono) = if viable {
            let u = tau * self.mu_s * self.k * surplus * surplus
                / (T::lit(4.0) * self.b * self.mu_f * self.mu_f * self.aquatic_exit() * self.gamma_s);
            let f = self.k * surplus / (self.b * self.mu_f);
            (Some(u), Some(f))
        } else {
            (None, None)
        };
        DerivedConstants {
            tau,
            u_tilde,
            f_mono,
            viable,
        }
    }
}

impl Default for ModelParameters<f64> {
    fn default() -> Self {
        ModelParameters::reference(DEFAULT_K)
    }
}

impl<T> ModelParameters<T>
where
    T: Scalar + Serialize + for<'de> Deserialize<'de>,
{
    pub fn from_json_str(s: &str) -> Result<Self, ParamError> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, ParamError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize")
    }
}
