//! JSON run configuration, validated against the model constraints with
//! errors that point at the offending line.

use std::path::Path;

use exchtail_core::asymptotics::geometric_grid;
use exchtail_core::quadrature::{DEFAULT_REL_TOL, MAX_REL_TOL, MIN_REL_TOL};
use exchtail_core::{ConditionalLaw, EnvelopeForm, MixingDensity, TailEnvelope};
use serde::Deserialize;

use crate::CliError;

pub const SWEEP_CAP: u64 = 10_000;
pub const MAX_GRID_POINTS: usize = 100_000;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mixing: RawMixing,
    envelope: RawEnvelope,
    law: RawLaw,
    grid: RawGrid,
    #[serde(default)]
    mc: RawMc,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    sweep: Option<RawSweep>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMixing {
    gamma: f64,
    kappa: f64,
    c3: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvelope {
    form: EnvelopeForm,
    c1: f64,
    alpha: f64,
    beta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLaw {
    family: ConditionalLaw,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    t_min: f64,
    t_max: f64,
    points: usize,
    n_list: Vec<usize>,
    #[serde(default)]
    t_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    trials: u64,
    seed: u64,
}

impl Default for RawMc {
    fn default() -> Self {
        Self {
            trials: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    quadrature: f64,
    asym_match: f64,
}

impl Default for RawTolerances {
    fn default() -> Self {
        Self {
            quadrature: DEFAULT_REL_TOL,
            asym_match: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    gamma: Option<Vec<f64>>,
    kappa: Option<Vec<f64>>,
    c3: Option<Vec<f64>>,
    c1: Option<Vec<f64>>,
    alpha: Option<Vec<f64>>,
    beta: Option<Vec<f64>>,
}

/// One point of a parameter lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamPoint {
    pub gamma: f64,
    pub kappa: f64,
    pub c3: f64,
    pub c1: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Per-parameter value lists; the lattice is their Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub gamma: Vec<f64>,
    pub kappa: Vec<f64>,
    pub c3: Vec<f64>,
    pub c1: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Lattice {
    pub fn size(&self) -> u64 {
        [&self.gamma, &self.kappa, &self.c3, &self.c1, &self.alpha, &self.beta]
            .iter()
            .map(|v| v.len() as u64)
            .product()
    }

    /// Points in lexicographic order, `gamma` varying slowest.
    pub fn points(&self) -> Vec<ParamPoint> {
        let mut out = Vec::with_capacity(self.size() as usize);
        for &gamma in &self.gamma {
            for &kappa in &self.kappa {
                for &c3 in &self.c3 {
                    for &c1 in &self.c1 {
                        for &alpha in &self.alpha {
                            for &beta in &self.beta {
                                out.push(ParamPoint {
                                    gamma,
                                    kappa,
                                    c3,
                                    c1,
                                    alpha,
                                    beta,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mixing: MixingDensity,
    pub envelope: TailEnvelope,
    pub law: ConditionalLaw,
    pub t_grid: Vec<f64>,
    pub n_list: Vec<usize>,
    pub trials: u64,
    pub seed: u64,
    pub rel_tol: f64,
    pub asym_match: f64,
    pub sweep: Option<Lattice>,
    /// Line of the t-grid definition, for later domain errors.
    t_line: Option<usize>,
    origin: String,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub rel_tol: Option<f64>,
    pub corrupt_c2: Option<f64>,
}

/// 1-based line of the first `"key"` after the first `"section"`.
fn line_of(src: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let start = src.find(&format!("\"{section}\""))?;
    let pos = match key {
        Some(k) => start + src[start..].find(&format!("\"{k}\""))?,
        None => start,
    };
    Some(src[..pos].matches('\n').count() + 1)
}

struct Locator<'a> {
    src: &'a str,
    origin: &'a str,
}

impl Locator<'_> {
    fn err(&self, section: &str, key: Option<&str>, msg: impl std::fmt::Display) -> CliError {
        let field = match key {
            Some(k) => format!("{section}.{k}"),
            None => section.to_string(),
        };
        let at = match line_of(self.src, section, key) {
            Some(line) => format!("{}:{line}", self.origin),
            None => self.origin.to_string(),
        };
        CliError::Config(format!("{at}: {field}: {msg}"))
    }

    fn positive(&self, section: &str, key: &str, v: f64) -> Result<(), CliError> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(self.err(section, Some(key), format!("must be finite and > 0, got {v}")))
        }
    }

    fn mixing(&self, section: &str, gamma: f64, kappa: f64, c3: f64) -> Result<MixingDensity, CliError> {
        if !(gamma > -1.0 && gamma.is_finite()) {
            return Err(self.err(section, Some("gamma"), format!("must be finite and > -1, got {gamma}")));
        }
        self.positive(section, "kappa", kappa)?;
        self.positive(section, "c3", c3)?;
        MixingDensity::new(gamma, kappa, c3).map_err(|e| self.err(section, None, e))
    }

    fn envelope(
        &self,
        section: &str,
        form: EnvelopeForm,
        c1: f64,
        alpha: f64,
        beta: f64,
    ) -> Result<TailEnvelope, CliError> {
        self.positive(section, "c1", c1)?;
        self.positive(section, "alpha", alpha)?;
        self.positive(section, "beta", beta)?;
        TailEnvelope::new(form, c1, alpha, beta).map_err(|e| self.err(section, None, e))
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
        Self::parse(&src, &path.display().to_string())
    }

    /// Parses and validates `src`; `origin` names the source in messages.
    pub fn parse(src: &str, origin: &str) -> Result<Self, CliError> {
        let raw: RawConfig = serde_json::from_str(src)
            .map_err(|e| CliError::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
        let loc = Locator { src, origin };

        let mixing = loc.mixing("mixing", raw.mixing.gamma, raw.mixing.kappa, raw.mixing.c3)?;
        let envelope = loc.envelope(
            "envelope",
            raw.envelope.form,
            raw.envelope.c1,
            raw.envelope.alpha,
            raw.envelope.beta,
        )?;

        let g = &raw.grid;
        let (t_grid, t_line) = match &g.t_list {
            Some(list) => {
                if list.is_empty() || list.len() > MAX_GRID_POINTS {
                    return Err(loc.err("grid", Some("t_list"), format!("needs 1..={MAX_GRID_POINTS} entries")));
                }
                if let Some(t) = list.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
                    return Err(loc.err(
                        "grid",
                        Some("t_list"),
                        format!("entries must be finite and >= 0, got {t}"),
                    ));
                }
                (list.clone(), line_of(src, "grid", Some("t_list")))
            }
            None => {
                loc.positive("grid", "t_min", g.t_min)?;
                if !(g.t_max >= g.t_min && g.t_max.is_finite()) {
                    return Err(loc.err(
                        "grid",
                        Some("t_max"),
                        format!("must be finite and >= t_min, got {}", g.t_max),
                    ));
                }
                if g.points == 0 || g.points > MAX_GRID_POINTS {
                    return Err(loc.err(
                        "grid",
                        Some("points"),
                        format!("must be in 1..={MAX_GRID_POINTS}, got {}", g.points),
                    ));
                }
                if g.points > 1 && g.t_max == g.t_min {
                    return Err(loc.err("grid", Some("t_max"), "must exceed t_min when points > 1"));
                }
                (
                    geometric_grid(g.t_min, g.t_max, g.points),
                    line_of(src, "grid", Some("t_min")),
                )
            }
        };
        if g.n_list.is_empty() || g.n_list.contains(&0) {
            return Err(loc.err("grid", Some("n_list"), "must be a non-empty list of integers >= 1"));
        }

        if raw.mc.trials == 0 {
            return Err(loc.err("mc", Some("trials"), "must be >= 1"));
        }
        let tol = &raw.tolerances;
        if !(MIN_REL_TOL..=MAX_REL_TOL).contains(&tol.quadrature) {
            return Err(loc.err(
                "tolerances",
                Some("quadrature"),
                format!("must lie in [{MIN_REL_TOL:e}, {MAX_REL_TOL:e}], got {}", tol.quadrature),
            ));
        }
        loc.positive("tolerances", "asym_match", tol.asym_match)?;

        let sweep = match &raw.sweep {
            None => None,
            Some(s) => Some(lattice(&loc, s, &raw)?),
        };

        Ok(Self {
            mixing,
            envelope,
            law: raw.law.family,
            t_grid,
            n_list: g.n_list.clone(),
            trials: raw.mc.trials,
            seed: raw.mc.seed,
            rel_tol: tol.quadrature,
            asym_match: tol.asym_match,
            sweep,
            t_line,
            origin: origin.to_string(),
        })
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(trials) = o.trials {
            if trials == 0 {
                return Err(CliError::Config("--trials: must be >= 1".into()));
            }
            self.trials = trials;
        }
        if let Some(tol) = o.rel_tol {
            if !(MIN_REL_TOL..=MAX_REL_TOL).contains(&tol) {
                return Err(CliError::Config(format!(
                    "--rel-tol: must lie in [{MIN_REL_TOL:e}, {MAX_REL_TOL:e}], got {tol}"
                )));
            }
            self.rel_tol = tol;
        }
        if let Some(f) = o.corrupt_c2 {
            self.mixing = self.mixing.with_scaled_normalizer(f);
        }
        Ok(())
    }

    /// Bounds and asymptotics are only claimed for `t >= 1`.
    pub fn require_unit_domain(&self) -> Result<(), CliError> {
        match self.t_grid.iter().find(|&&t| t < 1.0) {
            None => Ok(()),
            Some(t) => {
                let at = match self.t_line {
                    Some(line) => format!("{}:{line}", self.origin),
                    None => self.origin.clone(),
                };
                Err(CliError::Config(format!(
                    "{at}: grid: bounds and asymptotics need t >= 1, grid contains {t}"
                )))
            }
        }
    }

    /// The lattice to sweep; the base parameters when none is configured.
    pub fn lattice(&self) -> Lattice {
        self.sweep.clone().unwrap_or_else(|| Lattice {
            gamma: vec![self.mixing.gamma()],
            kappa: vec![self.mixing.kappa()],
            c3: vec![self.mixing.c3()],
            c1: vec![self.envelope.c1()],
            alpha: vec![self.envelope.alpha()],
            beta: vec![self.envelope.beta()],
        })
    }
}

fn lattice(loc: &Locator<'_>, s: &RawSweep, raw: &RawConfig) -> Result<Lattice, CliError> {
    let pick = |key: &str, v: &Option<Vec<f64>>, base: f64| -> Result<Vec<f64>, CliError> {
        match v {
            None => Ok(vec![base]),
            Some(list) if list.is_empty() => Err(loc.err("sweep", Some(key), "must not be empty")),
            Some(list) => Ok(list.clone()),
        }
    };
    let l = Lattice {
        gamma: pick("gamma", &s.gamma, raw.mixing.gamma)?,
        kappa: pick("kappa", &s.kappa, raw.mixing.kappa)?,
        c3: pick("c3", &s.c3, raw.mixing.c3)?,
        c1: pick("c1", &s.c1, raw.envelope.c1)?,
        alpha: pick("alpha", &s.alpha, raw.envelope.alpha)?,
        beta: pick("beta", &s.beta, raw.envelope.beta)?,
    };
    let size = l.size();
    if size > SWEEP_CAP {
        return Err(CliError::Budget(format!(
            "sweep lattice has {size} points, the cap is {SWEEP_CAP}"
        )));
    }
    for &g in &l.gamma {
        loc.mixing("sweep", g, l.kappa[0], l.c3[0])?;
    }
    for &k in &l.kappa {
        loc.positive("sweep", "kappa", k)?;
    }
    for &c in &l.c3 {
        loc.positive("sweep", "c3", c)?;
    }
    for &c in &l.c1 {
        loc.positive("sweep", "c1", c)?;
    }
    for &a in &l.alpha {
        loc.positive("sweep", "alpha", a)?;
    }
    for &b in &l.beta {
        loc.positive("sweep", "beta", b)?;
    }
    Ok(l)
}
