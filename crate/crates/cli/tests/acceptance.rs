//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use exchtail_cli::commands::seed_for_n;
use exchtail_core::asymptotics::{
    adjudicate_prefactor, display_constants, fit_log_slope, geometric_grid, lemma41_ratio, power_asym,
    rate_constant_closed, saddle_solve,
};
use exchtail_core::quadrature::{bound_exp, bound_power, mixing_mass, mixture_tail_probability, AuxIntegralSpec};
use exchtail_core::simulate::{
    derive_seed, empirical_measure_check, exchangeability_check, mc_tail_grid, quantile_partition, random_permutations,
    DeFinettiModel, Interval,
};
use exchtail_core::{ConditionalLaw, MatchVerdict, MixingDensity, TailEnvelope};

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within_budget(o: Outcome, elapsed: f64, budget: Option<f64>) -> Outcome {
    match budget {
        Some(b) if elapsed > b => outcome(false, format!("{} [runtime {elapsed:.2} s exceeds {b} s]", o.detail)),
        _ => o,
    }
}

fn normalization() -> Outcome {
    let mut worst: f64 = 0.0;
    for &gamma in &[0.0, 0.5, 2.0] {
        for &kappa in &[0.5, 1.0, 2.0] {
            for &c3 in &[0.5, 1.0, 3.0] {
                let m = MixingDensity::new(gamma, kappa, c3).unwrap();
                let mass = mixing_mass(&m, 1e-10).unwrap().value;
                worst = worst.max((mass - 1.0).abs());
            }
        }
    }
    outcome(
        worst <= 1e-8,
        format!("27 families, max |mass - 1| = {worst:.2e} (limit 1e-8)"),
    )
}

fn aux_ratios() -> Outcome {
    let ts = [1e1, 1e2, 1e3, 1e4];
    let mut ok = true;
    let mut parts = Vec::new();
    for &theta in &[0.5, 1.0, 2.5] {
        for &p in &[0.5, 2.0] {
            let spec = AuxIntegralSpec::power(theta, 1.0, p).unwrap();
            let r = lemma41_ratio(&spec, &ts, 1e-12).unwrap();
            let bounded = r.iter().all(|&(_, x)| x <= 1.0);
            let near = (1.0 - r[2].1).abs() <= 0.05;
            let shrinking = r.windows(2).all(|w| 1.0 - w[1].1 < 1.0 - w[0].1);
            ok &= bounded && near && shrinking;
            parts.push(format!("({theta},{p}) r(1e3)={:.5}", r[2].1));
        }
    }
    outcome(
        ok,
        format!("ratios <= 1, within 5% at 1e3, gap shrinking: {}", parts.join(" ")),
    )
}

fn power_family() -> Outcome {
    let m = MixingDensity::new(1.0, 1.0, 1.0).unwrap();
    let e = TailEnvelope::direct(1.0, 2.0, 2.0).unwrap();
    let ratio = power_asym(&m, &e, 30.0).unwrap() / bound_power(&m, &e, 30.0, 1e-12).unwrap().value;
    let pts: Vec<(f64, f64)> = geometric_grid(10.0, 1e3, 21)
        .into_iter()
        .map(|t| (t, bound_power(&m, &e, t, 1e-12).unwrap().log_value))
        .collect();
    let slope = fit_log_slope(&pts).unwrap();
    let pass = (0.97..=1.03).contains(&ratio) && (slope + 2.0).abs() <= 0.05;
    outcome(
        pass,
        format!("asymptotic/bound at t=30 = {ratio:.6}; fitted decay exponent {slope:.5} (target -2 ± 0.05)"),
    )
}

fn rate_convergence() -> Outcome {
    let m = MixingDensity::new(1.0, 2.0, 1.0).unwrap();
    let e = TailEnvelope::inverse(1.0, 2.0, 2.0).unwrap();
    let t = 5e3;
    let r0 = bound_exp(&m, &e, t, 1e-12).unwrap();
    let rate = -r0.log_value / t;
    let phi = saddle_solve(&e, &m, t).unwrap().phi_star;
    let pass = (rate / 2.0 - 1.0).abs() <= 0.01 && (phi / (2.0 * t) - 1.0).abs() <= 1e-12;
    outcome(
        pass,
        format!(
            "-ln R0(5e3)/5e3 = {rate:.6} (target 2 ± 1%); saddle value / 2t = {:.15}",
            phi / (2.0 * t)
        ),
    )
}

fn prefactor_adjudication() -> Outcome {
    let m = MixingDensity::new(1.0, 2.0, 1.0).unwrap();
    let e = TailEnvelope::inverse(1.0, 2.0, 2.0).unwrap();
    let grid = geometric_grid(1e2, 1e4, 17);
    let (r, _) = adjudicate_prefactor(&m, &e, &grid, 1e-12, 0.05).unwrap();
    let fitted = r.fitted_prefactor_exponent.unwrap();
    let decisive = r.match_verdict != MatchVerdict::Inconclusive;

    // the same adjudication must surface in the verify command's summary
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/inverse_power.json");
    let out = Command::new(env!("CARGO_BIN_EXE_exchtail"))
        .args(["verify", "--config", cfg.to_str().unwrap(), "--trials", "20000"])
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let json: serde_json::Value = stdout
        .find('{')
        .and_then(|i| serde_json::from_str(&stdout[i..]).ok())
        .unwrap_or(serde_json::Value::Null);
    let reported = json["verdict"].as_str().unwrap_or("missing").to_string();
    let pass = decisive && reported == r.match_verdict.name();
    outcome(
        pass,
        format!(
            "fitted prefactor exponent {fitted:.4}; display c11 {:.4}, Laplace {:.4}; verdict {}; verify reports {reported}",
            r.prefactor_exponent_paper,
            r.prefactor_exponent_laplace,
            r.match_verdict.name()
        ),
    )
}

fn unit_draw(i: u64, k: u64) -> f64 {
    (derive_seed(SEED ^ 0xa6, i * 8 + k) >> 11) as f64 / (1u64 << 53) as f64
}

fn algebraic_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_saddle: f64 = 0.0;
    for i in 0..1000 {
        let gamma = -0.9 + 6.0 * unit_draw(i, 0);
        let kappa = (4.0 * unit_draw(i, 1) - 2.0).exp();
        let beta = (4.0 * unit_draw(i, 2) - 2.0).exp();
        let c1 = (8.0 * unit_draw(i, 3) - 4.0).exp();
        let c3 = (8.0 * unit_draw(i, 4) - 4.0).exp();
        let alpha = (3.0 * unit_draw(i, 5) - 1.5).exp();
        let (a, b, c10) = display_constants(gamma, kappa, c3, c1, beta);
        let lhs = c10 * (1.0 / a + 1.0 / b);
        let rhs = rate_constant_closed(c1, c3, beta, kappa);
        worst = worst.max((lhs / rhs - 1.0).abs());

        let m = MixingDensity::new(gamma, kappa, c3).unwrap();
        let e = TailEnvelope::inverse(c1, alpha, beta).unwrap();
        let t = 10.0;
        let s = saddle_solve(&e, &m, t).unwrap();
        let rho = alpha * kappa / (beta + kappa);
        worst_saddle = worst_saddle.max((s.phi_star / t.powf(rho) / rhs - 1.0).abs());
    }
    outcome(
        worst <= 1e-12,
        format!("1000 draws, max relative gap {worst:.2e} (limit 1e-12); saddle value agrees to {worst_saddle:.2e}"),
    )
}

fn mixture_oracle() -> Outcome {
    let m = MixingDensity::new(1.0, 2.0, 0.5).unwrap();
    let law = ConditionalLaw::GaussianScale;
    let model = DeFinettiModel::new(m, law);
    let e = TailEnvelope::inverse(0.5, 2.0, 2.0).unwrap();
    let ts = [1.0, 2.0, 3.0];
    let ns = [1usize, 10, 100];
    let est: Vec<_> = ns
        .iter()
        .map(|&n| mc_tail_grid(&model, n, &ts, 1_000_000, seed_for_n(SEED, n)).unwrap())
        .collect();
    let mut overlap = true;
    let mut contains = true;
    let mut dominated = true;
    let mut parts = Vec::new();
    for (j, &t) in ts.iter().enumerate() {
        let oracle = mixture_tail_probability(&m, law, t, 1e-12).unwrap().value;
        let bound = bound_exp(&m, &e, t, 1e-12).unwrap().value;
        for a in 0..ns.len() {
            let x = &est[a][j];
            contains &= x.contains(oracle);
            dominated &= x.ci_low <= bound;
            for y in &est[a + 1..] {
                overlap &= x.overlaps(&y[j]);
            }
            parts.push(format!("n={} t={t}: [{:.5}, {:.5}]", x.n, x.ci_low, x.ci_high));
        }
        parts.push(format!("oracle(t={t})={oracle:.5} bound={bound:.5}"));
    }
    let pass = overlap && contains && dominated;
    outcome(
        pass,
        format!(
            "(a) n-independent {overlap}, (b) oracle inside every CI {contains}, (c) ci_low <= bound {dominated}; {}",
            parts.join("; ")
        ),
    )
}

fn exchangeability() -> Outcome {
    let m = MixingDensity::new(1.0, 2.0, 0.5).unwrap();
    let model = DeFinettiModel::new(m, ConditionalLaw::GaussianScale);
    let part = quantile_partition(&model, 8, 100_000, derive_seed(SEED, 0xe8c1)).unwrap();
    let perms = random_permutations(4, 3, SEED);
    let r = exchangeability_check(&model, 4, &part, &perms, 1_000_000, derive_seed(SEED, 0xe8c2)).unwrap();
    let parts: Vec<String> = r
        .comparisons
        .iter()
        .map(|c| {
            format!(
                "{:?} max z {:.2}, {} cells beyond 4 SE",
                c.permutation, c.max_z, c.failing_cells
            )
        })
        .collect();
    outcome(r.passed(), format!("n=4, 8 cells, 1e6 trials: {}", parts.join("; ")))
}

fn empirical_limit() -> Outcome {
    let m = MixingDensity::new(1.0, 2.0, 0.5).unwrap();
    let model = DeFinettiModel::new(m, ConditionalLaw::GaussianScale);
    let a = Interval::new(1.0, f64::INFINITY).unwrap();
    let r = empirical_measure_check(&model, a, 100_000, 100, derive_seed(SEED, 0xe3)).unwrap();
    let inside = r.inside_count();
    outcome(
        inside >= 99,
        format!("A=(1,inf), n=1e5: {inside}/100 replications inside the band (need 99)"),
    )
}

fn determinism() -> Outcome {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/gaussian_scale.json");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (k, workers) in ["1", "2", "8", "8"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_exchtail"))
            .args([
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--trials",
                "200000",
                "--workers",
                workers,
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .expect("binary runs");
        if !status.success() {
            return outcome(false, format!("simulate with {workers} workers exited with {status}"));
        }
        outputs.push(std::fs::read(out).unwrap());
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same,
        format!(
            "simulate CSV with 1, 2, 8 and 8 workers byte-identical: {same} ({} bytes)",
            outputs[0].len()
        ),
    )
}

fn main() {
    type Criterion = (&'static str, &'static str, fn() -> Outcome, Option<f64>);
    let criteria: [Criterion; 10] = [
        ("AC1", "normalization", normalization, Some(5.0)),
        ("AC2", "auxiliary integral ratios", aux_ratios, Some(30.0)),
        ("AC3", "power-form asymptotics", power_family, Some(30.0)),
        ("AC4", "exponential rate", rate_convergence, Some(30.0)),
        ("AC5", "prefactor adjudication", prefactor_adjudication, None),
        ("AC6", "algebraic identity", algebraic_identity, None),
        ("AC7", "mixture oracle", mixture_oracle, Some(60.0)),
        ("AC8", "exchangeability", exchangeability, None),
        ("AC9", "empirical measure limit", empirical_limit, None),
        ("AC10", "determinism across workers", determinism, None),
    ];
    let mut failures = 0;
    for (id, name, f, budget) in criteria {
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed().as_secs_f64();
        let o = within_budget(o, elapsed, budget);
        if !o.pass {
            failures += 1;
        }
        println!(
            "{id} {} {name} ({elapsed:.2} s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
