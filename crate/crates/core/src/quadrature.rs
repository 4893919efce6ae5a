//! Semi-axis quadrature in the log domain.
//!
//! Every integral over `(0, ∞)` is rewritten on the log scale `u = ln Q` and
//! then mapped to the real line by a double-exponential substitution
//! `u = center + width · sinh(τ)`. Trapezoidal sums in `τ` are accumulated as
//! a running log-sum-exp, so integrands whose logarithm sits far below
//! `-745` are handled without underflow. The step is halved until two
//! successive levels agree to the requested relative tolerance.

use std::cell::RefCell;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::model::{ConditionalLaw, EnvelopeForm, MixingDensity, TailEnvelope};
use crate::special::ln_gamma_unchecked;

pub const DEFAULT_REL_TOL: f64 = 1e-10;
pub const MIN_REL_TOL: f64 = 1e-13;
pub const MAX_REL_TOL: f64 = 1e-2;
/// Hard cap on integrand evaluations per integral.
pub const MAX_EVALUATIONS: usize = 1 << 20;

/// `u = ln Q` range in which `Q` itself is a normal `f64`.
const REPRESENTABLE_LOG_RANGE: (f64, f64) = (-708.0, 709.0);
/// `u` range for integrands written directly on the log scale.
const LOG_SCALE_RANGE: (f64, f64) = (-1e5, 1e5);

const INITIAL_STEP: f64 = 0.5;
const TAU_MAX: f64 = 8.0;
const MIN_LEVELS: usize = 2;
/// Terms more than this far (in log) below the running maximum are dropped.
const NEGLIGIBLE_LOG: f64 = 46.0;
/// A term this close to the maximum at a truncation edge means real mass is lost.
const TRUNCATION_LOG: f64 = 36.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum QuadWarning {
    /// `θ < 1` gives an integrable singularity at the origin.
    EndpointSingularity { theta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureResult {
    /// Natural log of the integral; authoritative when `value` underflows.
    pub log_value: f64,
    pub value: f64,
    pub abs_tol_achieved: f64,
    pub rel_tol_achieved: f64,
    pub evaluations: usize,
    pub warnings: Vec<QuadWarning>,
}

impl QuadratureResult {
    fn from_log(log_value: f64, rel_change: f64, evaluations: usize) -> Self {
        let value = log_value.exp();
        Self {
            log_value,
            value,
            abs_tol_achieved: rel_change * value,
            rel_tol_achieved: rel_change,
            evaluations,
            warnings: Vec::new(),
        }
    }

    /// Adds `delta` to the log value (multiplies the integral by `e^delta`).
    pub fn scaled_log(mut self, delta: f64) -> Self {
        self.log_value += delta;
        self.value = self.log_value.exp();
        self.abs_tol_achieved = self.rel_tol_achieved * self.value;
        self
    }
}

/// Placement of the substitution on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Placement {
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.scaled += (v - self.max).exp();
        }
    }
}

fn check_rel_tol(rel_tol: f64) -> Result<()> {
    if !(MIN_REL_TOL..=MAX_REL_TOL).contains(&rel_tol) {
        return domain(format!(
            "rel_tol must lie in [{MIN_REL_TOL:e}, {MAX_REL_TOL:e}], got {rel_tol:e}"
        ));
    }
    Ok(())
}

struct Engine<'a, F> {
    g: &'a F,
    placement: Placement,
    bounds: (f64, f64),
    evaluations: usize,
    sum: LogSum,
}

enum Node {
    Value(f64),
    OutOfRange,
}

impl<F: Fn(f64) -> f64> Engine<'_, F> {
    fn node(&mut self, tau: f64) -> Result<Node> {
        let u = self.placement.center + self.placement.width * tau.sinh();
        if !(u > self.bounds.0 && u < self.bounds.1) {
            return Ok(Node::OutOfRange);
        }
        self.evaluations += 1;
        let v = (self.g)(u);
        if v.is_nan() {
            return domain(format!("integrand log is NaN at ln Q = {u}"));
        }
        if v == f64::INFINITY {
            return domain(format!("integrand is infinite at ln Q = {u}"));
        }
        Ok(Node::Value(v + (self.placement.width * tau.cosh()).ln()))
    }

    /// Walks outward from `start` in steps of `stride` until terms are negligible.
    fn sweep(&mut self, start: f64, stride: f64) -> Result<()> {
        let mut tau = start;
        let mut quiet = 0;
        while tau.abs() <= TAU_MAX {
            match self.node(tau)? {
                Node::OutOfRange => {
                    return Ok(());
                }
                Node::Value(v) => {
                    self.sum.add(v);
                    let edge = self.sum.max - v;
                    if edge > NEGLIGIBLE_LOG {
                        quiet += 1;
                        if quiet >= 2 && tau.abs() >= 1.0 {
                            return Ok(());
                        }
                    } else {
                        quiet = 0;
                        if self.next_out_of_range(tau + stride) && edge < TRUNCATION_LOG {
                            return Err(Error::NonConvergence {
                                evaluations: self.evaluations,
                                last_rel_change: f64::INFINITY,
                            });
                        }
                    }
                }
            }
            tau += stride;
        }
        Ok(())
    }

    fn next_out_of_range(&self, tau: f64) -> bool {
        let u = self.placement.center + self.placement.width * tau.sinh();
        !(u > self.bounds.0 && u < self.bounds.1)
    }

    fn run(&mut self, rel_tol: f64) -> Result<QuadratureResult> {
        let mut h = INITIAL_STEP;
        if let Node::Value(v) = self.node(0.0)? {
            self.sum.add(v);
        }
        self.sweep(h, h)?;
        self.sweep(-h, -h)?;
        // the peak log and the local sum are compared separately, so the
        // change stays resolvable when the log value itself is huge
        let mut prev = (self.sum.max, h.ln() + self.sum.scaled.ln());
        let mut level = 0;
        loop {
            level += 1;
            h *= 0.5;
            self.sweep(h, 2.0 * h)?;
            self.sweep(-h, -2.0 * h)?;
            let local = h.ln() + self.sum.scaled.ln();
            let cur = self.sum.max + local;
            if cur == f64::NEG_INFINITY {
                return domain("integrand vanishes identically");
            }
            let rel_change = ((self.sum.max - prev.0) + (local - prev.1)).exp_m1().abs();
            if level >= MIN_LEVELS && rel_change <= rel_tol {
                return Ok(QuadratureResult::from_log(cur, rel_change, self.evaluations));
            }
            if self.evaluations >= MAX_EVALUATIONS {
                return Err(Error::NonConvergence {
                    evaluations: self.evaluations,
                    last_rel_change: rel_change,
                });
            }
            prev = (self.sum.max, local);
        }
    }
}

/// Integrates `exp(g(u))` over `u` in `bounds`, where `g(u)` is the log of the
/// integrand already multiplied by the Jacobian `e^u`.
pub(crate) fn integrate_log_scale<F: Fn(f64) -> f64>(
    g: &F,
    placement: Placement,
    bounds: (f64, f64),
    rel_tol: f64,
) -> Result<QuadratureResult> {
    check_rel_tol(rel_tol)?;
    let mut engine = Engine {
        g,
        placement,
        bounds,
        evaluations: 0,
        sum: LogSum::new(),
    };
    engine.run(rel_tol)
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section scan for the maximum of `g` on the log scale, plus a
/// curvature-based width.
pub(crate) fn locate_peak<F: Fn(f64) -> f64>(g: &F, bounds: (f64, f64)) -> Result<Placement> {
    let lo = bounds.0.max(-700.0);
    let hi = bounds.1.min(700.0);
    let mut best_u = f64::NAN;
    let mut best = f64::NEG_INFINITY;
    let mut u = lo + 0.5;
    while u < hi {
        let v = g(u);
        if v.is_nan() {
            return domain(format!("integrand log is NaN at ln Q = {u}"));
        }
        if v > best {
            best = v;
            best_u = u;
        }
        u += 0.5;
    }
    if best == f64::NEG_INFINITY {
        return domain("integrand vanishes on the scanned range");
    }
    let (mut a, mut b) = (best_u - 0.5, best_u + 0.5);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (g(x1), g(x2));
    for _ in 0..100 {
        if b - a < 1e-10 {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = g(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = g(x1);
        }
    }
    let center = 0.5 * (a + b);
    let center = if g(center) >= best { center } else { best_u };
    Ok(Placement {
        center,
        width: curvature_width(g, center),
    })
}

fn curvature_width<F: Fn(f64) -> f64>(g: &F, u: f64) -> f64 {
    let second = |d: f64| -(g(u + d) - 2.0 * g(u) + g(u - d)) / (d * d);
    let c = second(1e-2);
    let c = if c.is_finite() && c > 0.0 {
        // re-measure over the half-width of the peak itself
        let c2 = second((0.5 / c.sqrt()).min(0.5));
        if c2.is_finite() && c2 > 0.0 {
            c2
        } else {
            c
        }
    } else {
        return 1.0;
    };
    (1.0 / c.sqrt()).clamp(1e-9, 8.0)
}

/// `ln ∫₀^∞ f(Q) dQ` for an integrand given through `f_log(Q) = ln f(Q)`.
pub fn integrate_semiaxis<F: Fn(f64) -> f64>(f_log: F, rel_tol: f64) -> Result<QuadratureResult> {
    check_rel_tol(rel_tol)?;
    let g = |u: f64| f_log(u.exp()) + u;
    let placement = locate_peak(&g, REPRESENTABLE_LOG_RANGE)?;
    integrate_log_scale(&g, placement, REPRESENTABLE_LOG_RANGE, rel_tol)
}

/// Same as [`integrate_semiaxis`] but with the integrand given on the log
/// scale, `h(u) = ln f(e^u)`, so arguments need not be representable.
pub fn integrate_semiaxis_log_arg<F: Fn(f64) -> f64>(h: F, rel_tol: f64) -> Result<QuadratureResult> {
    check_rel_tol(rel_tol)?;
    let g = |u: f64| h(u) + u;
    let placement = locate_peak(&g, LOG_SCALE_RANGE)?;
    integrate_log_scale(&g, placement, LOG_SCALE_RANGE, rel_tol)
}

/// `∫₀^∞ μ(dQ) = 1` check for a mixing density, returned as the integral.
pub fn mixing_mass(m: &MixingDensity, rel_tol: f64) -> Result<QuadratureResult> {
    integrate_semiaxis_log_arg(|u| m.ln_pdf_log_arg(u), rel_tol)
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Bounded nonnegative weight `L` with its declared supremum.
#[derive(Clone)]
pub struct Weight {
    f: ScalarFn,
    l_max: f64,
}

impl Weight {
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }
}

/// `(θ, g, L)` defining `∫₀^∞ x^{θ-1} exp(-t x - g(x)) L(x) dx`.
#[derive(Clone)]
pub struct AuxIntegralSpec {
    theta: f64,
    g: ScalarFn,
    weight: Option<Weight>,
}

impl std::fmt::Debug for AuxIntegralSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuxIntegralSpec")
            .field("theta", &self.theta)
            .field("weighted", &self.weight.is_some())
            .finish()
    }
}

const ORIGIN_PROBE: f64 = 1e-300;

const WEIGHT_PROBES: std::ops::RangeInclusive<i32> = -12..=12;

impl AuxIntegralSpec {
    pub fn new(theta: f64, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return domain(format!("theta must be > 0, got {theta}"));
        }
        let g0 = g(ORIGIN_PROBE);
        if !(0.0..=1e-8).contains(&g0) {
            return domain(format!("g must vanish at the origin: g({ORIGIN_PROBE:e}) = {g0:e}"));
        }
        Ok(Self {
            theta,
            g: Arc::new(g),
            weight: None,
        })
    }

    /// `g ≡ 0`.
    pub fn without_g(theta: f64) -> Result<Self> {
        Self::new(theta, |_| 0.0)
    }

    /// `g(x) = coeff · x^p` with `p > 0`, `coeff ≥ 0`.
    pub fn power(theta: f64, coeff: f64, p: f64) -> Result<Self> {
        if !(p > 0.0) || !(coeff >= 0.0) {
            return domain(format!("power g needs p > 0 and coeff >= 0, got p={p}, coeff={coeff}"));
        }
        Self::new(theta, move |x| coeff * x.powf(p))
    }

    /// Attaches a weight `L` with `0 ≤ L ≤ l_max`, probed on a log grid.
    pub fn with_weight(mut self, l: impl Fn(f64) -> f64 + Send + Sync + 'static, l_max: f64) -> Result<Self> {
        if !(l_max > 0.0 && l_max.is_finite()) {
            return domain(format!("weight bound must be finite and > 0, got {l_max}"));
        }
        for k in WEIGHT_PROBES {
            let x = 10f64.powi(k);
            let v = l(x);
            if !(0.0..=l_max).contains(&v) {
                return domain(format!("weight L({x:e}) = {v} outside [0, {l_max}]"));
            }
        }
        self.weight = Some(Weight { f: Arc::new(l), l_max });
        Ok(self)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn g(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    pub fn weight(&self) -> Option<&Weight> {
        self.weight.as_ref()
    }

    pub fn l_max(&self) -> f64 {
        self.weight.as_ref().map_or(1.0, |w| w.l_max)
    }
}

/// `∫₀^∞ x^{θ-1} exp(-t x - g(x)) L(x) dx` for `t > 0`.
///
/// The result never exceeds `Γ(θ) t^{-θ} sup L`, which holds exactly for
/// nonnegative `g`; quadrature error above that ceiling is clipped.
pub fn aux_integral(spec: &AuxIntegralSpec, t: f64, rel_tol: f64) -> Result<QuadratureResult> {
    if !(t > 0.0 && t.is_finite()) {
        return domain(format!("aux integral requires t > 0, got {t}"));
    }
    check_rel_tol(rel_tol)?;
    let violation: RefCell<Option<String>> = RefCell::new(None);
    let theta = spec.theta;
    let integrand = |u: f64| {
        let x = u.exp();
        let gx = spec.g(x);
        if gx < 0.0 {
            violation
                .borrow_mut()
                .get_or_insert(format!("g({x:e}) = {gx} is negative"));
            return f64::NAN;
        }
        let mut v = theta * u - t * x - gx;
        if let Some(w) = &spec.weight {
            let l = w.eval(x);
            if !(0.0..=w.l_max).contains(&l) {
                violation
                    .borrow_mut()
                    .get_or_insert(format!("L({x:e}) = {l} outside [0, {}]", w.l_max));
                return f64::NAN;
            }
            v += l.ln();
        }
        v
    };
    let run = || -> Result<QuadratureResult> {
        let placement = locate_peak(&integrand, REPRESENTABLE_LOG_RANGE)?;
        integrate_log_scale(&integrand, placement, REPRESENTABLE_LOG_RANGE, rel_tol)
    };
    let mut res = match run() {
        Err(Error::Domain(msg)) => {
            return Err(Error::Domain(violation.into_inner().unwrap_or(msg)));
        }
        other => other?,
    };
    let ceiling = ln_gamma_unchecked(theta) - theta * t.ln() + spec.l_max().ln();
    if res.log_value > ceiling {
        let shift = ceiling - res.log_value;
        res = res.scaled_log(shift);
    }
    if theta < 1.0 {
        res.warnings.push(QuadWarning::EndpointSingularity { theta });
    }
    Ok(res)
}

fn check_bound_args(e: &TailEnvelope, expected: EnvelopeForm, t: f64) -> Result<()> {
    if e.form() != expected {
        return Err(Error::FormMismatch {
            expected: expected.name(),
            got: e.form().name(),
        });
    }
    if !(t >= 1.0 && t.is_finite()) {
        return domain(format!("mixture bounds are stated for t >= 1, got {t}"));
    }
    Ok(())
}

/// `e^x - 1 - x` without cancellation near zero.
fn exp_minus_linear(x: f64) -> f64 {
    if x.abs() >= 0.5 {
        return x.exp_m1() - x;
    }
    let mut term = x * x / 2.0;
    let mut sum = term;
    for k in 3..20 {
        term *= x / k as f64;
        sum += term;
    }
    sum
}

/// `w (e^x - 1 - x)` with `w = e^{ln_w}`, finite whenever the product is,
/// even if `w` underflows or `e^x` overflows.
fn weighted_exp_minus_linear(ln_w: f64, w: f64, x: f64) -> f64 {
    if x > 0.5 {
        (ln_w + x).exp() - w * (1.0 + x)
    } else {
        w * exp_minus_linear(x)
    }
}

/// `ln c₂∫₀^∞ Q^γ exp(-c₁t^αQ^{±β} - c₃Q^κ) dQ`. In `u = ln Q` the exponent
/// `(γ+1)u - c₁t^α e^{±βu} - c₃e^{κu}` is strictly concave, so its peak `u*`
/// is the single sign change of the derivative. The integrand is evaluated
/// as an offset from the peak through `expm1`, which stays accurate when the
/// exponent itself is far beyond the resolution of `f64`.
fn mixture_log_integral(m: &MixingDensity, e: &TailEnvelope, t: f64, rel_tol: f64) -> Result<QuadratureResult> {
    let s = match e.form() {
        EnvelopeForm::DirectPower => 1.0,
        EnvelopeForm::InversePower => -1.0,
    };
    let g1 = m.gamma() + 1.0;
    let ln_a = e.c1().ln() + e.alpha() * t.ln();
    let (beta, kappa, ln_c3) = (e.beta(), m.kappa(), m.c3().ln());
    let env = |u: f64| (ln_a + s * beta * u).exp();
    let mix = |u: f64| (ln_c3 + kappa * u).exp();
    let d1 = |u: f64| g1 - s * beta * env(u) - kappa * mix(u);

    let (lo_limit, hi_limit) = LOG_SCALE_RANGE;
    let (mut lo, mut hi) = (0.0, 0.0);
    let mut step = 1.0;
    while !(d1(lo) > 0.0) {
        lo -= step;
        step *= 2.0;
        if lo < lo_limit {
            return Err(Error::Overflow(
                "integrand peak lies below the representable range".into(),
            ));
        }
    }
    step = 1.0;
    while !(d1(hi) < 0.0) {
        hi += step;
        step *= 2.0;
        if hi > hi_limit {
            return Err(Error::Overflow(
                "integrand peak lies above the representable range".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if d1(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let peak = 0.5 * (lo + hi);
    let (ln_a_peak, ln_c_peak) = (ln_a + s * beta * peak, ln_c3 + kappa * peak);
    let (a, c) = (ln_a_peak.exp(), ln_c_peak.exp());
    let peak_log = m.ln_c2() + g1 * peak - a - c;
    if !peak_log.is_finite() {
        return Err(Error::Overflow(format!("log-integrand at its peak is {peak_log}")));
    }
    // first-order terms cancel at the peak up to the rounding left in `slope`
    let slope = g1 - s * beta * a - kappa * c;
    let offset = move |v: f64| {
        slope * v
            - weighted_exp_minus_linear(ln_a_peak, a, s * beta * v)
            - weighted_exp_minus_linear(ln_c_peak, c, kappa * v)
    };
    let placement = Placement {
        center: 0.0,
        width: (1.0 / (beta * beta * a + kappa * kappa * c).sqrt()).clamp(1e-9, 8.0),
    };
    let bounds = (lo_limit - peak, hi_limit - peak);
    Ok(integrate_log_scale(&offset, placement, bounds, rel_tol)?.scaled_log(peak_log))
}

/// Mixture bound `c₂ ∫₀^∞ Q^γ exp(-c₁ t^α Q^β - c₃ Q^κ) dQ` for a
/// direct-power envelope.
pub fn bound_power(m: &MixingDensity, e: &TailEnvelope, t: f64, rel_tol: f64) -> Result<QuadratureResult> {
    check_bound_args(e, EnvelopeForm::DirectPower, t)?;
    check_rel_tol(rel_tol)?;
    mixture_log_integral(m, e, t, rel_tol)
}

/// Mixture bound `R₀(t) = c₂ ∫₀^∞ Q^γ exp(-c₁ t^α Q^{-β} - c₃ Q^κ) dQ` for an
/// inverse-power envelope.
pub fn bound_exp(m: &MixingDensity, e: &TailEnvelope, t: f64, rel_tol: f64) -> Result<QuadratureResult> {
    check_bound_args(e, EnvelopeForm::InversePower, t)?;
    check_rel_tol(rel_tol)?;
    mixture_log_integral(m, e, t, rel_tol)
}

/// Dispatches to [`bound_power`] or [`bound_exp`] by envelope form.
pub fn mixture_bound(m: &MixingDensity, e: &TailEnvelope, t: f64, rel_tol: f64) -> Result<QuadratureResult> {
    match e.form() {
        EnvelopeForm::DirectPower => bound_power(m, e, t, rel_tol),
        EnvelopeForm::InversePower => bound_exp(m, e, t, rel_tol),
    }
}

/// `ln erfc(z)` for `z ≥ 0`, valid far beyond the underflow of `erfc`.
fn ln_erfc(z: f64) -> f64 {
    if z < 26.0 {
        return libm::erfc(z).ln();
    }
    let z2 = z * z;
    let series = 1.0 - 0.5 / z2 + 0.75 / (z2 * z2) - 1.875 / (z2 * z2 * z2);
    -z2 - (z * std::f64::consts::PI.sqrt()).ln() + series.ln()
}

/// Exact tail `P(|S(n)| ≥ t) = ∫ P(|ξ-sum| ≥ t | Q) μ(dQ)` for a Gaussian
/// conditional law, where the conditional tail does not depend on `n`.
pub fn mixture_tail_probability(
    m: &MixingDensity,
    law: ConditionalLaw,
    t: f64,
    rel_tol: f64,
) -> Result<QuadratureResult> {
    if !(t >= 0.0) {
        return domain(format!("tail threshold must be >= 0, got {t}"));
    }
    if t == 0.0 {
        return Ok(QuadratureResult::from_log(0.0, 0.0, 0));
    }
    let g = |u: f64| {
        let sd = law.sd(u.exp());
        let z = t / (sd * std::f64::consts::SQRT_2);
        m.ln_pdf_log_arg(u) + u + ln_erfc(z)
    };
    let placement = locate_peak(&g, REPRESENTABLE_LOG_RANGE)?;
    integrate_log_scale(&g, placement, REPRESENTABLE_LOG_RANGE, rel_tol)
}
