//! Tail bounds, asymptotics and simulation for normalized sums of
//! exchangeable sequences with a scale-mixture representation.
//!
//! The conditional parameter `Q` has density `c₂ Q^γ exp(−c₃ Q^κ)` on
//! `(0, ∞)`. Conditional on `Q`, each summand obeys a tail envelope of
//! direct (`exp(−c₁ t^α Q^β)`) or inverse (`exp(−c₁ t^α Q^{−β})`) power form.
//! Averaging the envelope against the mixing law gives a bound on
//! `P(|S(n)| ≥ t)` that does not depend on `n`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod model;
pub mod quadrature;
pub mod simulate;
pub mod special;

pub use asymptotics::{
    adjudicate_prefactor, asymptotic_report, exp_asym, fit_asymptotics, power_asym, saddle_solve, AsymptoticReport,
    MatchVerdict,
};
pub use error::{Error, Result};
pub use model::{
    envelope_eval, envelope_from_weibull, mixing_pdf, normalizer, ConditionalLaw, EnvelopeForm, MixingDensity,
    TailEnvelope,
};
pub use quadrature::{
    aux_integral, bound_exp, bound_power, mixture_bound, mixture_tail_probability, AuxIntegralSpec, QuadratureResult,
};
pub use simulate::{mc_tail, mc_tail_grid, DeFinettiModel, MCEstimate, TailQuery};
