//! The table-producing commands: `bound`, `asym`, `simulate` and `sweep`.

use exchtail_core::asymptotics::{exp_asym, power_asym};
use exchtail_core::simulate::derive_seed;
use exchtail_core::{mc_tail_grid, mixture_bound, DeFinettiModel, EnvelopeForm, MixingDensity, TailEnvelope};
use rayon::prelude::*;

use crate::config::{ParamPoint, RunConfig};
use crate::output::{Cell, Table};
use crate::CliError;

pub const BOUND_HEADER: [&str; 4] = ["t", "log_bound", "bound", "tol_achieved"];
pub const ASYM_HEADER: [&str; 9] = [
    "t",
    "value_paper",
    "value_laplace",
    "rate_exponent",
    "rate_constant",
    "c10",
    "c11",
    "A",
    "B",
];
pub const SIMULATE_HEADER: [&str; 7] = ["n", "t", "p_hat", "ci_low", "ci_high", "trials", "seed"];
pub const SWEEP_PARAMS: [&str; 6] = ["gamma", "kappa", "c3", "c1", "alpha", "beta"];

fn bound_rows(m: &MixingDensity, e: &TailEnvelope, ts: &[f64], rel_tol: f64) -> Result<Vec<Vec<Cell>>, CliError> {
    ts.iter()
        .map(|&t| {
            let r = mixture_bound(m, e, t, rel_tol)?;
            Ok(vec![
                t.into(),
                r.log_value.into(),
                r.value.into(),
                r.rel_tol_achieved.into(),
            ])
        })
        .collect()
}

/// Both asymptotic evaluations and the named constants. Power-form envelopes
/// have no exponential rate, so the exponential-only columns are NaN and both
/// value columns carry the power law.
fn asym_rows(m: &MixingDensity, e: &TailEnvelope, ts: &[f64]) -> Result<Vec<Vec<Cell>>, CliError> {
    ts.iter()
        .map(|&t| {
            let row: Vec<Cell> = match e.form() {
                EnvelopeForm::InversePower => {
                    let a = exp_asym(m, e, t)?;
                    let r = &a.report;
                    vec![
                        t.into(),
                        a.paper_value().into(),
                        a.laplace_value().into(),
                        r.rate_exponent.into(),
                        r.rate_constant.into(),
                        r.c10.into(),
                        r.prefactor_exponent_paper.into(),
                        r.a.into(),
                        r.b.into(),
                    ]
                }
                EnvelopeForm::DirectPower => {
                    let v = power_asym(m, e, t)?;
                    let mut row = vec![Cell::Float(t), v.into(), v.into()];
                    row.extend(std::iter::repeat_n(Cell::Float(f64::NAN), 6));
                    row
                }
            };
            Ok(row)
        })
        .collect()
}

pub fn cmd_bound(cfg: &RunConfig) -> Result<Table, CliError> {
    cfg.require_unit_domain()?;
    let mut table = Table::new(BOUND_HEADER.to_vec());
    for row in bound_rows(&cfg.mixing, &cfg.envelope, &cfg.t_grid, cfg.rel_tol)? {
        table.push(row);
    }
    table.sort_by_columns(1);
    Ok(table)
}

pub fn cmd_asym(cfg: &RunConfig) -> Result<Table, CliError> {
    cfg.require_unit_domain()?;
    let mut table = Table::new(ASYM_HEADER.to_vec());
    for row in asym_rows(&cfg.mixing, &cfg.envelope, &cfg.t_grid)? {
        table.push(row);
    }
    table.sort_by_columns(1);
    Ok(table)
}

/// Seed used for the sum length `n`; each `n` gets an independent sample.
pub fn seed_for_n(seed: u64, n: usize) -> u64 {
    derive_seed(seed, n as u64)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = DeFinettiModel::new(cfg.mixing, cfg.law);
    let mut table = Table::new(SIMULATE_HEADER.to_vec());
    for &n in &cfg.n_list {
        for e in mc_tail_grid(&model, n, &cfg.t_grid, cfg.trials, seed_for_n(cfg.seed, n))? {
            table.push(vec![
                n.into(),
                e.t.into(),
                e.p_hat.into(),
                e.ci_low.into(),
                e.ci_high.into(),
                e.trials.into(),
                cfg.seed.into(),
            ]);
        }
    }
    table.sort_by_columns(2);
    Ok(table)
}

fn point_model(cfg: &RunConfig, p: &ParamPoint) -> Result<(MixingDensity, TailEnvelope), CliError> {
    let m = MixingDensity::new(p.gamma, p.kappa, p.c3)?;
    let e = TailEnvelope::new(cfg.envelope.form(), p.c1, p.alpha, p.beta)?;
    Ok((m, e))
}

/// `bound` and `asym` joined on `t` for every lattice point.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Table, CliError> {
    cfg.require_unit_domain()?;
    let lattice = cfg.lattice();
    let mut header: Vec<&'static str> = SWEEP_PARAMS.to_vec();
    header.extend(BOUND_HEADER);
    header.extend(&ASYM_HEADER[1..]);
    let blocks = lattice
        .points()
        .par_iter()
        .map(|p| {
            let (m, e) = point_model(cfg, p)?;
            let bounds = bound_rows(&m, &e, &cfg.t_grid, cfg.rel_tol)?;
            let asyms = asym_rows(&m, &e, &cfg.t_grid)?;
            let params = [p.gamma, p.kappa, p.c3, p.c1, p.alpha, p.beta].map(Cell::Float);
            Ok(bounds
                .into_iter()
                .zip(asyms)
                .map(|(b, a)| params.iter().copied().chain(b).chain(a.into_iter().skip(1)).collect())
                .collect::<Vec<Vec<Cell>>>())
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut table = Table::new(header);
    for row in blocks.into_iter().flatten() {
        table.push(row);
    }
    table.sort_by_columns(SWEEP_PARAMS.len() + 1);
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;

    fn config(body: &str) -> RunConfig {
        RunConfig::parse(body, "test.json").unwrap()
    }

    const UNIT: &str = r#"{
  "mixing": {"gamma": 0, "kappa": 1, "c3": 1},
  "envelope": {"form": "direct_power", "c1": 1, "alpha": 1, "beta": 1},
  "law": {"family": "gaussian_precision"},
  "grid": {"t_min": 1, "t_max": 3, "points": 2, "n_list": [1]}
}"#;

    const SCALE: &str = r#"{
  "mixing": {"gamma": 1, "kappa": 2, "c3": 0.5},
  "envelope": {"form": "inverse_power", "c1": 0.5, "alpha": 2, "beta": 2},
  "law": {"family": "gaussian_scale"},
  "grid": {"t_min": 1, "t_max": 100, "points": 5, "n_list": [1, 10]},
  "mc": {"trials": 2000, "seed": 3}
}"#;

    fn col(t: &Table, name: &str) -> Vec<f64> {
        let j = t.column(name).unwrap();
        t.rows
            .iter()
            .map(|r| match r[j] {
                Cell::Float(v) => v,
                Cell::Int(v) => v as f64,
            })
            .collect()
    }

    #[test]
    fn bound_unit_family() {
        let t = cmd_bound(&config(UNIT)).unwrap();
        let b = col(&t, "bound");
        assert!((b[0] - 0.5).abs() < 1e-10 && (b[1] - 0.25).abs() < 1e-10, "{b:?}");
        assert!(t.to_csv_string().starts_with("t,log_bound,bound,tol_achieved\n"));
    }

    #[test]
    fn bound_rejects_small_t() {
        let cfg = config(&UNIT.replace("\"t_min\": 1", "\"t_min\": 0.5"));
        assert!(matches!(cmd_bound(&cfg), Err(CliError::Config(_))));
        assert!(matches!(cmd_asym(&cfg), Err(CliError::Config(_))));
    }

    #[test]
    fn asym_columns() {
        let src = SCALE
            .replace(
                "\"gamma\": 1, \"kappa\": 2, \"c3\": 0.5",
                "\"gamma\": 1, \"kappa\": 2, \"c3\": 1",
            )
            .replace("\"c1\": 0.5", "\"c1\": 1");
        let cfg = config(&src);
        let t = cmd_asym(&cfg).unwrap();
        for (c11, (a, b)) in col(&t, "c11").iter().zip(col(&t, "A").iter().zip(col(&t, "B"))) {
            assert_eq!(*c11, -0.5);
            assert!((a / b - 1.0).abs() < 1e-15);
        }
        assert!(col(&t, "rate_exponent").iter().all(|&r| r == 1.0));
        for (t, k) in col(&t, "t").iter().zip(col(&t, "rate_constant")) {
            let s = exchtail_core::saddle_solve(&cfg.envelope, &cfg.mixing, *t).unwrap();
            assert!((s.phi_star / t - k).abs() <= 1e-10 * k);
        }
        let t = cmd_asym(&config(UNIT)).unwrap();
        assert!(col(&t, "c10").iter().all(|v| v.is_nan()));
    }

    #[test]
    fn simulate_rows_and_t_zero() {
        let src = SCALE.replace("\"n_list\": [1, 10]", "\"n_list\": [10, 1], \"t_list\": [2, 0]");
        let t = cmd_simulate(&config(&src)).unwrap();
        assert_eq!(col(&t, "n"), vec![1.0, 1.0, 10.0, 10.0]);
        assert_eq!(col(&t, "t"), vec![0.0, 2.0, 0.0, 2.0]);
        assert_eq!(col(&t, "p_hat")[0], 1.0);
        assert_eq!(col(&t, "ci_high")[0], 1.0);
        assert!(col(&t, "seed").iter().all(|&s| s == 3.0));
        assert_eq!(t.to_csv_string(), cmd_simulate(&config(&src)).unwrap().to_csv_string());
    }

    #[test]
    fn sweep_single_point_joins_bound_and_asym() {
        let cfg = config(SCALE);
        let s = cmd_sweep(&cfg).unwrap();
        let b = cmd_bound(&cfg).unwrap();
        let a = cmd_asym(&cfg).unwrap();
        assert_eq!(s.rows.len(), b.rows.len());
        for ((srow, brow), arow) in s.rows.iter().zip(&b.rows).zip(&a.rows) {
            let joined: Vec<String> = brow.iter().chain(&arow[1..]).map(Cell::render).collect();
            let tail: Vec<String> = srow[6..].iter().map(Cell::render).collect();
            assert_eq!(joined, tail);
        }
    }

    #[test]
    fn sweep_two_by_two() {
        let src = SCALE.replace("\"mc\"", "\"sweep\": {\"gamma\": [0, 1], \"kappa\": [1, 2]},\n  \"mc\"");
        let mut cfg = config(&src);
        cfg.apply(&Overrides::default()).unwrap();
        let s = cmd_sweep(&cfg).unwrap();
        assert_eq!(s.rows.len(), 4 * cfg.t_grid.len());
        let bounds = col(&s, "bound");
        let logs = col(&s, "log_bound");
        for (b, l) in bounds.iter().zip(&logs) {
            assert!((b.ln() - l).abs() < 1e-9 * l.abs().max(1.0));
            assert!(*b <= 1.0);
        }
    }
}
