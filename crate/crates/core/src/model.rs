//! Distributional building blocks: the mixing density over the conditional
//! scale parameter `Q`, the conditional tail envelopes, and the Gaussian
//! conditional laws used for simulation.

use std::fmt;

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::special;

pub use crate::special::gamma as gamma_function;

/// Normalizer of the density `Q^γ exp(-c₃ Q^κ)` on `(0, ∞)`:
/// `κ c₃^{(γ+1)/κ} / Γ((γ+1)/κ)`.
pub fn normalizer(gamma: f64, kappa: f64, c3: f64) -> Result<f64> {
    Ok(ln_normalizer(gamma, kappa, c3)?.exp())
}

fn ln_normalizer(gamma: f64, kappa: f64, c3: f64) -> Result<f64> {
    check_mixing_params(gamma, kappa, c3)?;
    let shape = (gamma + 1.0) / kappa;
    Ok(kappa.ln() + shape * c3.ln() - special::ln_gamma(shape)?)
}

fn check_mixing_params(gamma: f64, kappa: f64, c3: f64) -> Result<()> {
    if !(gamma > -1.0 && gamma.is_finite()) {
        return domain(format!("mixing exponent gamma must be > -1, got {gamma}"));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return domain(format!("mixing exponent kappa must be > 0, got {kappa}"));
    }
    if !(c3 > 0.0 && c3.is_finite()) {
        return domain(format!("mixing rate c3 must be > 0, got {c3}"));
    }
    Ok(())
}

/// Probability density `c₂ Q^γ exp(-c₃ Q^κ)` on `(0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingDensity {
    gamma: f64,
    kappa: f64,
    c3: f64,
    ln_c2: f64,
}

impl MixingDensity {
    pub fn new(gamma: f64, kappa: f64, c3: f64) -> Result<Self> {
        let ln_c2 = ln_normalizer(gamma, kappa, c3)?;
        Ok(Self {
            gamma,
            kappa,
            c3,
            ln_c2,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn c3(&self) -> f64 {
        self.c3
    }

    pub fn c2(&self) -> f64 {
        self.ln_c2.exp()
    }

    pub fn ln_c2(&self) -> f64 {
        self.ln_c2
    }

    /// Shape of the Gamma variate `c₃ Q^κ`, i.e. `(γ+1)/κ`.
    pub fn gamma_shape(&self) -> f64 {
        (self.gamma + 1.0) / self.kappa
    }

    /// Fault-injection hook: multiplies the cached normalizer by `factor`.
    #[doc(hidden)]
    pub fn with_scaled_normalizer(mut self, factor: f64) -> Self {
        self.ln_c2 += factor.ln();
        self
    }

    /// Log-density at `q > 0`.
    pub fn ln_pdf(&self, q: f64) -> Result<f64> {
        if !(q > 0.0) {
            return domain(format!("mixing density requires q > 0, got {q}"));
        }
        Ok(self.ln_pdf_log_arg(q.ln()))
    }

    /// Log-density expressed through `u = ln q`. Not the density of `u`.
    pub fn ln_pdf_log_arg(&self, u: f64) -> f64 {
        self.ln_c2 + self.gamma * u - self.c3 * (self.kappa * u).exp()
    }

    /// Raw moment `E[Q^k]` for `k > -(γ+1)`.
    pub fn moment(&self, k: f64) -> Result<f64> {
        let a = self.gamma_shape();
        let ak = (self.gamma + 1.0 + k) / self.kappa;
        if !(ak > 0.0) {
            return domain(format!("moment of order {k} does not exist"));
        }
        Ok((special::ln_gamma(ak)? - special::ln_gamma(a)? - k / self.kappa * self.c3.ln()).exp())
    }
}

/// Density value at `q`. At `q = 0` the right limit is returned when it is finite.
pub fn mixing_pdf(m: &MixingDensity, q: f64) -> Result<f64> {
    if q == 0.0 {
        return if m.gamma == 0.0 {
            Ok(m.c2())
        } else if m.gamma > 0.0 {
            Ok(0.0)
        } else {
            domain("mixing density is unbounded at q = 0 for gamma < 0")
        };
    }
    Ok(m.ln_pdf(q)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeForm {
    /// `exp(-c₁ t^α Q^β)`
    DirectPower,
    /// `exp(-c₁ t^α Q^{-β})`
    InversePower,
}

impl EnvelopeForm {
    pub fn name(self) -> &'static str {
        match self {
            EnvelopeForm::DirectPower => "direct_power",
            EnvelopeForm::InversePower => "inverse_power",
        }
    }
}

impl fmt::Display for EnvelopeForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Conditional tail bound, uniform in the sum length, parameterized by `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEnvelope {
    form: EnvelopeForm,
    c1: f64,
    alpha: f64,
    beta: f64,
}

impl TailEnvelope {
    pub fn new(form: EnvelopeForm, c1: f64, alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("c1", c1), ("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("envelope parameter {name} must be > 0, got {v}"));
            }
        }
        Ok(Self { form, c1, alpha, beta })
    }

    pub fn direct(c1: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(EnvelopeForm::DirectPower, c1, alpha, beta)
    }

    pub fn inverse(c1: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(EnvelopeForm::InversePower, c1, alpha, beta)
    }

    pub fn form(&self) -> EnvelopeForm {
        self.form
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Same envelope with `c₁` replaced.
    pub fn with_c1(&self, c1: f64) -> Result<Self> {
        Self::new(self.form, c1, self.alpha, self.beta)
    }

    /// Signed power of Q in the exponent.
    pub(crate) fn q_power(&self) -> f64 {
        match self.form {
            EnvelopeForm::DirectPower => self.beta,
            EnvelopeForm::InversePower => -self.beta,
        }
    }

    /// Log of the envelope, `-c₁ t^α Q^{±β}`, given `ln t` and `ln Q`.
    pub fn ln_eval_log_args(&self, ln_t: f64, ln_q: f64) -> f64 {
        -(self.c1.ln() + self.alpha * ln_t + self.q_power() * ln_q).exp()
    }

    pub fn ln_eval(&self, t: f64, q: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return domain(format!("envelope requires t >= 0, got {t}"));
        }
        if !(q > 0.0) {
            return domain(format!("envelope requires q > 0, got {q}"));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(self.ln_eval_log_args(t.ln(), q.ln()))
    }

    /// Evaluation for the single-variable form returned by [`envelope_from_weibull`].
    pub fn eval_unit_q(&self, t: f64) -> Result<f64> {
        envelope_eval(self, t, 1.0)
    }
}

/// Envelope value in `(0, 1]`, computed in log space and exponentiated last.
pub fn envelope_eval(e: &TailEnvelope, t: f64, q: f64) -> Result<f64> {
    Ok(e.ln_eval(t, q)?.exp())
}

/// Envelope for normalized sums of i.i.d. variables with Weibull-type tails
/// `P(|η| ≥ u) ≤ exp(-u^m)`: `exp(-c(m) u^{min(m,2)})`.
///
/// `c(m)` has no closed form and is supplied by the caller. The result has no
/// `Q` coupling; evaluate it with `q = 1` (see [`TailEnvelope::eval_unit_q`]).
pub fn envelope_from_weibull(m: f64, c_of_m: f64) -> Result<TailEnvelope> {
    if !(m > 0.0 && m.is_finite()) {
        return domain(format!("tail exponent m must be > 0, got {m}"));
    }
    TailEnvelope::direct(c_of_m, m.min(2.0), 1.0)
}

/// Law of each `ξᵢ` given `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionalLaw {
    /// `ξ | Q ~ N(0, Q²)`
    GaussianScale,
    /// `ξ | Q ~ N(0, Q⁻²)`
    GaussianPrecision,
}

impl ConditionalLaw {
    pub fn name(self) -> &'static str {
        match self {
            ConditionalLaw::GaussianScale => "gaussian_scale",
            ConditionalLaw::GaussianPrecision => "gaussian_precision",
        }
    }

    /// Conditional standard deviation.
    pub fn sd(self, q: f64) -> f64 {
        match self {
            ConditionalLaw::GaussianScale => q,
            ConditionalLaw::GaussianPrecision => q.recip(),
        }
    }

    pub fn mean(self, _q: f64) -> f64 {
        0.0
    }

    pub fn variance(self, q: f64) -> f64 {
        let s = self.sd(q);
        s * s
    }

    /// The exact sub-Gaussian envelope `exp(-t²/(2σ²))` written in the
    /// corresponding power form with `c₁ = 1/2`, `α = β = 2`.
    pub fn implied_envelope(self) -> TailEnvelope {
        let form = match self {
            ConditionalLaw::GaussianScale => EnvelopeForm::InversePower,
            ConditionalLaw::GaussianPrecision => EnvelopeForm::DirectPower,
        };
        TailEnvelope {
            form,
            c1: 0.5,
            alpha: 2.0,
            beta: 2.0,
        }
    }

    /// `P(ξ > x | Q = q)`.
    pub fn upper_tail(self, q: f64, x: f64) -> f64 {
        if x == f64::NEG_INFINITY {
            return 1.0;
        }
        if x == f64::INFINITY {
            return 0.0;
        }
        0.5 * erfc(x / (self.sd(q) * std::f64::consts::SQRT_2))
    }

    /// `P(lo < ξ ≤ hi | Q = q)`.
    pub fn interval_prob(self, q: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        // use the smaller tail on each side to avoid cancellation
        if lo >= 0.0 || hi == f64::INFINITY {
            self.upper_tail(q, lo) - self.upper_tail(q, hi)
        } else {
            self.upper_tail(q, -hi) - self.upper_tail(q, -lo)
        }
    }

    /// Exact two-sided tail `P(|S(n)| ≥ t | Q = q)`, identical for every `n`.
    pub fn two_sided_tail(self, q: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        2.0 * self.upper_tail(q, t)
    }
}

impl fmt::Display for ConditionalLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
