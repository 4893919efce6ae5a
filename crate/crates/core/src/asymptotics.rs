//! Large-`t` behaviour of the mixture bounds.
//!
//! * Direct-power envelopes give power decay `t^{-α(γ+1)/β}`.
//! * Inverse-power envelopes give stretched-exponential decay
//!   `exp(-C t^{ακ/(β+κ)})`, obtained by expanding the two-power exponent
//!   `φ(Q) = c₁t^αQ^{-β} + c₃Q^κ` around its minimizer.
//!
//! Two candidate prefactor exponents are carried side by side: the one with
//! the trailing `-1` (`c₁₁`) and the one produced by a second-order Laplace
//! expansion. [`adjudicate_prefactor`] decides between them by fitting
//! quadrature values.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::model::{EnvelopeForm, MixingDensity, TailEnvelope};
use crate::quadrature::{self, AuxIntegralSpec, QuadratureResult};
use crate::special::{gamma, ln_gamma};

fn require_form(e: &TailEnvelope, expected: EnvelopeForm) -> Result<()> {
    if e.form() != expected {
        return Err(Error::FormMismatch {
            expected: expected.name(),
            got: e.form().name(),
        });
    }
    Ok(())
}

fn require_t(t: f64) -> Result<()> {
    if !(t >= 1.0 && t.is_finite()) {
        return domain(format!("asymptotics are evaluated for t >= 1, got {t}"));
    }
    Ok(())
}

/// `t^θ I[θ,g](t) / Γ(θ)` along an increasing grid of `t ≥ 1`.
pub fn lemma41_ratio(spec: &AuxIntegralSpec, t_grid: &[f64], rel_tol: f64) -> Result<Vec<(f64, f64)>> {
    if t_grid.is_empty() {
        return Err(Error::InsufficientData("empty t grid".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("t grid must be strictly increasing");
    }
    if t_grid[0] < 1.0 {
        return domain(format!("t grid must start at t >= 1, got {}", t_grid[0]));
    }
    let theta = spec.theta();
    let lg = ln_gamma(theta)?;
    t_grid
        .iter()
        .map(|&t| {
            let r = quadrature::aux_integral(spec, t, rel_tol)?;
            Ok((t, (r.log_value + theta * t.ln() - lg).exp()))
        })
        .collect()
}

/// Quantities probed for a weighted auxiliary integral `J[θ,g,L](t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedLimitProbe {
    pub t: f64,
    /// `t^θ J[θ,g,L](t)`
    pub scaled_integral: f64,
    /// `Γ(θ) L(1/t)`
    pub pointwise_limit: f64,
    /// `∫₀^∞ y^{θ-1} e^{-y} L(y) dy`
    pub stated_integral: f64,
}

/// Reports the three candidate limits for a weighted integral side by side.
/// No identity between them is assumed.
pub fn weighted_limit_probe(spec: &AuxIntegralSpec, t: f64, rel_tol: f64) -> Result<WeightedLimitProbe> {
    let theta = spec.theta();
    let j = quadrature::aux_integral(spec, t, rel_tol)?;
    let l_at = |x: f64| spec.weight().map_or(1.0, |w| w.eval(x));
    let unweighted_g = match spec.weight() {
        Some(w) => {
            let w = w.clone();
            AuxIntegralSpec::without_g(theta)?.with_weight(move |x| w.eval(x), spec.l_max())?
        }
        None => AuxIntegralSpec::without_g(theta)?,
    };
    let stated = quadrature::aux_integral(&unweighted_g, 1.0, rel_tol)?;
    Ok(WeightedLimitProbe {
        t,
        scaled_integral: (j.log_value + theta * t.ln()).exp(),
        pointwise_limit: gamma(theta)? * l_at(1.0 / t),
        stated_integral: stated.value,
    })
}

/// Leading power-law equivalent `C t^{p}` of the direct-power mixture bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerAsymptotic {
    /// `p = -α(γ+1)/β`
    pub decay_exponent: f64,
    /// `C = c₁^{-(γ+1)/β} c₂ β⁻¹ Γ((γ+1)/β)`
    pub constant: f64,
}

pub fn power_asym_terms(m: &MixingDensity, e: &TailEnvelope) -> Result<PowerAsymptotic> {
    require_form(e, EnvelopeForm::DirectPower)?;
    let shape = (m.gamma() + 1.0) / e.beta();
    let ln_c = -shape * e.c1().ln() + m.ln_c2() - e.beta().ln() + ln_gamma(shape)?;
    Ok(PowerAsymptotic {
        decay_exponent: -e.alpha() * shape,
        constant: ln_c.exp(),
    })
}

/// `c₁^{-(γ+1)/β} c₂ β⁻¹ Γ((γ+1)/β) t^{-α(γ+1)/β}`.
pub fn power_asym(m: &MixingDensity, e: &TailEnvelope, t: f64) -> Result<f64> {
    require_t(t)?;
    let p = power_asym_terms(m, e)?;
    Ok(p.constant * t.powf(p.decay_exponent))
}

/// Minimizer of `φ(Q) = c₁t^αQ^{-β} + c₃Q^κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddleSolution {
    pub q_star: f64,
    pub phi_star: f64,
    /// `φ''(Q*)`
    pub phi2_star: f64,
}

struct TwoPower {
    a: f64,
    beta: f64,
    c3: f64,
    kappa: f64,
}

impl TwoPower {
    fn phi(&self, q: f64) -> f64 {
        self.a * q.powf(-self.beta) + self.c3 * q.powf(self.kappa)
    }

    fn d1(&self, q: f64) -> f64 {
        -self.beta * self.a * q.powf(-self.beta - 1.0) + self.kappa * self.c3 * q.powf(self.kappa - 1.0)
    }

    fn d2(&self, q: f64) -> f64 {
        self.beta * (self.beta + 1.0) * self.a * q.powf(-self.beta - 2.0)
            + self.kappa * (self.kappa - 1.0) * self.c3 * q.powf(self.kappa - 2.0)
    }
}

fn two_power(m: &MixingDensity, e: &TailEnvelope, t: f64) -> TwoPower {
    TwoPower {
        a: e.c1() * t.powf(e.alpha()),
        beta: e.beta(),
        c3: m.c3(),
        kappa: m.kappa(),
    }
}

/// Closed-form `Q* = (βc₁t^α/(κc₃))^{1/(β+κ)}` polished by one safeguarded Newton step.
pub fn saddle_solve(e: &TailEnvelope, m: &MixingDensity, t: f64) -> Result<SaddleSolution> {
    require_form(e, EnvelopeForm::InversePower)?;
    require_t(t)?;
    let (beta, kappa) = (e.beta(), m.kappa());
    let ln_q = (beta.ln() + e.c1().ln() + e.alpha() * t.ln() - kappa.ln() - m.c3().ln()) / (beta + kappa);
    let f = two_power(m, e, t);
    let mut q = ln_q.exp();
    let d2 = f.d2(q);
    if d2 > 0.0 {
        let cand = (q - f.d1(q) / d2).clamp(0.5 * q, 2.0 * q);
        if f.d1(cand).abs() < f.d1(q).abs() {
            q = cand;
        }
    }
    Ok(SaddleSolution {
        q_star: q,
        phi_star: f.phi(q),
        phi2_star: f.d2(q),
    })
}

/// `|φ'(Q*)| Q* / φ(Q*)`.
pub fn stationarity_residual(e: &TailEnvelope, m: &MixingDensity, t: f64, s: &SaddleSolution) -> f64 {
    let f = two_power(m, e, t);
    f.d1(s.q_star).abs() * s.q_star / s.phi_star
}

/// Which prefactor exponent the quadrature supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchVerdict {
    Paper,
    Laplace,
    Inconclusive,
}

impl MatchVerdict {
    pub fn name(self) -> &'static str {
        match self {
            MatchVerdict::Paper => "paper",
            MatchVerdict::Laplace => "laplace",
            MatchVerdict::Inconclusive => "inconclusive",
        }
    }
}

/// Constants of the stretched-exponential asymptotic for an inverse-power envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticReport {
    /// `ρ = ακ/(β+κ)`
    pub rate_exponent: f64,
    /// `φ(Q*)/t^ρ`, which equals `c₁₀(A⁻¹ + B⁻¹)`
    pub rate_constant: f64,
    /// `c₁₁ = α(2γ+2-κ)/(2(β+κ)) - 1`
    pub prefactor_exponent_paper: f64,
    /// `α(2γ+2-κ)/(2(β+κ))`
    pub prefactor_exponent_laplace: f64,
    /// Laplace prefactor divided by `t^{prefactor_exponent_laplace}`
    pub prefactor_constant: f64,
    pub a: f64,
    pub b: f64,
    pub c10: f64,
    pub fitted_rate: Option<f64>,
    pub fitted_prefactor_exponent: Option<f64>,
    pub match_verdict: MatchVerdict,
}

/// `A = β/(γ+1)`, `B = κ/(γ+1)`, `c₁₀ = (γ+1)⁻¹ [c₁^κ c₃^β β^κ κ^β]^{1/(β+κ)}`.
pub fn display_constants(gamma: f64, kappa: f64, c3: f64, c1: f64, beta: f64) -> (f64, f64, f64) {
    let g1 = gamma + 1.0;
    let s = beta + kappa;
    let ln_c10 = -g1.ln() + (kappa * c1.ln() + beta * c3.ln() + kappa * beta.ln() + beta * kappa.ln()) / s;
    (beta / g1, kappa / g1, ln_c10.exp())
}

/// `[c₁^κ c₃^β]^{1/(β+κ)} β^{-β/(β+κ)} κ^{-κ/(β+κ)} (β+κ)`.
pub fn rate_constant_closed(c1: f64, c3: f64, beta: f64, kappa: f64) -> f64 {
    let s = beta + kappa;
    ((kappa * c1.ln() + beta * c3.ln()) / s - beta / s * beta.ln() - kappa / s * kappa.ln()).exp() * s
}

/// Builds the t-independent constants; fitted fields are left empty.
pub fn asymptotic_report(m: &MixingDensity, e: &TailEnvelope) -> Result<AsymptoticReport> {
    require_form(e, EnvelopeForm::InversePower)?;
    let (alpha, beta, kappa, gamma_) = (e.alpha(), e.beta(), m.kappa(), m.gamma());
    let s = beta + kappa;
    let (a, b, c10) = display_constants(gamma_, kappa, m.c3(), e.c1(), beta);
    let laplace = alpha * (2.0 * gamma_ + 2.0 - kappa) / (2.0 * s);
    let ln_q0 = (beta.ln() + e.c1().ln() - kappa.ln() - m.c3().ln()) / s;
    let ln_pref = m.ln_c2() + 0.5 * (2.0 * PI / (s * kappa * m.c3())).ln() + (gamma_ + 1.0 - 0.5 * kappa) * ln_q0;
    Ok(AsymptoticReport {
        rate_exponent: alpha * kappa / s,
        rate_constant: rate_constant_closed(e.c1(), m.c3(), beta, kappa),
        prefactor_exponent_paper: laplace - 1.0,
        prefactor_exponent_laplace: laplace,
        prefactor_constant: ln_pref.exp(),
        a,
        b,
        c10,
        fitted_rate: None,
        fitted_prefactor_exponent: None,
        match_verdict: MatchVerdict::Inconclusive,
    })
}

/// Both asymptotic evaluations of `R₀(t)` at a single `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpAsymptotic {
    pub t: f64,
    /// `ln[√(2π) c₂ c₁₀ t^{c₁₁} (A+B)^{-1/2} exp{-c₁₀(A⁻¹+B⁻¹) t^ρ}]`
    pub ln_paper: f64,
    /// `ln[c₂ Q*^γ √(2π/φ''(Q*)) exp(-φ(Q*))]`
    pub ln_laplace: f64,
    pub saddle: SaddleSolution,
    pub report: AsymptoticReport,
}

impl ExpAsymptotic {
    pub fn paper_value(&self) -> f64 {
        self.ln_paper.exp()
    }

    pub fn laplace_value(&self) -> f64 {
        self.ln_laplace.exp()
    }
}

pub fn exp_asym(m: &MixingDensity, e: &TailEnvelope, t: f64) -> Result<ExpAsymptotic> {
    let report = asymptotic_report(m, e)?;
    let saddle = saddle_solve(e, m, t)?;
    let ln_t = t.ln();
    let ln_paper = 0.5 * (2.0 * PI).ln() + m.ln_c2() + report.c10.ln() + report.prefactor_exponent_paper * ln_t
        - 0.5 * (report.a + report.b).ln()
        - report.c10 * (1.0 / report.a + 1.0 / report.b) * (report.rate_exponent * ln_t).exp();
    let ln_laplace =
        m.ln_c2() + m.gamma() * saddle.q_star.ln() + 0.5 * (2.0 * PI / saddle.phi2_star).ln() - saddle.phi_star;
    Ok(ExpAsymptotic {
        t,
        ln_paper,
        ln_laplace,
        saddle,
        report,
    })
}

const MAX_CONDITION: f64 = 1e12;

fn least_squares(design: DMatrix<f64>, y: DVector<f64>) -> Result<DVector<f64>> {
    // unit-norm columns so the condition number reflects the geometry, not units
    let mut scaled = design.clone();
    let mut norms = Vec::with_capacity(design.ncols());
    for mut col in scaled.column_iter_mut() {
        let n = col.norm();
        if n == 0.0 {
            return Err(Error::IllConditioned(f64::INFINITY));
        }
        col /= n;
        norms.push(n);
    }
    let svd = scaled.svd(true, true);
    let sv = &svd.singular_values;
    let cond = sv.max() / sv.min();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let coef = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Domain(format!("least squares failed: {e}")))?;
    Ok(DVector::from_iterator(
        coef.len(),
        coef.iter().zip(&norms).map(|(c, n)| c / n),
    ))
}

fn check_fit_points(values: &[(f64, f64)], min_points: usize, min_span: f64) -> Result<()> {
    if values.len() < min_points {
        return Err(Error::InsufficientData(format!(
            "need at least {min_points} points, got {}",
            values.len()
        )));
    }
    if values.iter().any(|&(t, y)| !(t > 0.0) || !y.is_finite()) {
        return domain("fit points need t > 0 and finite values");
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(t, _)| (lo.min(t), hi.max(t)));
    if hi / lo < min_span {
        return Err(Error::InsufficientData(format!(
            "t must span a factor of at least {min_span}, got {}",
            hi / lo
        )));
    }
    Ok(())
}

/// Least-squares fit of `ln R₀(t) = -r t^ρ + s ln t + c`; returns `(r, s)`.
pub fn fit_asymptotics(values: &[(f64, f64)], rho: f64) -> Result<(f64, f64)> {
    check_fit_points(values, 6, 100.0)?;
    let n = values.len();
    let design = DMatrix::from_fn(n, 3, |i, j| {
        let t = values[i].0;
        match j {
            0 => -t.powf(rho),
            1 => t.ln(),
            _ => 1.0,
        }
    });
    let y = DVector::from_iterator(n, values.iter().map(|&(_, v)| v));
    let coef = least_squares(design, y)?;
    Ok((coef[0], coef[1]))
}

/// Slope of `ln R` against `ln t`.
pub fn fit_log_slope(values: &[(f64, f64)]) -> Result<f64> {
    check_fit_points(values, 3, 1.0)?;
    let n = values.len();
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { values[i].0.ln() } else { 1.0 });
    let y = DVector::from_iterator(n, values.iter().map(|&(_, v)| v));
    Ok(least_squares(design, y)?[0])
}

pub fn adjudicate(fitted: f64, paper: f64, laplace: f64, tol: f64) -> MatchVerdict {
    let p = (fitted - paper).abs() <= tol;
    let l = (fitted - laplace).abs() <= tol;
    match (p, l) {
        (true, false) => MatchVerdict::Paper,
        (false, true) => MatchVerdict::Laplace,
        _ => MatchVerdict::Inconclusive,
    }
}

/// Geometric grid of `points` values from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi / lo).ln() / (points - 1) as f64;
            (0..points)
                .map(|k| {
                    if k + 1 == points {
                        hi
                    } else {
                        lo * (step * k as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// Fits `bound_exp` over `t_grid` and decides which prefactor exponent it follows.
pub fn adjudicate_prefactor(
    m: &MixingDensity,
    e: &TailEnvelope,
    t_grid: &[f64],
    rel_tol: f64,
    tol: f64,
) -> Result<(AsymptoticReport, Vec<(f64, QuadratureResult)>)> {
    let mut report = asymptotic_report(m, e)?;
    let values = t_grid
        .iter()
        .map(|&t| Ok((t, quadrature::bound_exp(m, e, t, rel_tol)?)))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = values.iter().map(|(t, r)| (*t, r.log_value)).collect();
    let (r, s) = fit_asymptotics(&pts, report.rate_exponent)?;
    report.fitted_rate = Some(r);
    report.fitted_prefactor_exponent = Some(s);
    report.match_verdict = adjudicate(
        s,
        report.prefactor_exponent_paper,
        report.prefactor_exponent_laplace,
        tol,
    );
    Ok((report, values))
}
