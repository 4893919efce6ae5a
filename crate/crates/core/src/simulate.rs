//! Monte Carlo for exchangeable sequences built by the two-stage de Finetti
//! mechanism: draw `Q` from the mixing law, then draw `ξ₁, …, ξₙ` i.i.d. from
//! the conditional law given `Q`.
//!
//! Trial `i` always draws from the ChaCha stream `i` under a key derived from
//! the seed, so results do not depend on how trials are scheduled across
//! rayon workers. Success counts are integer sums and reduce exactly.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::inv_beta_reg;

use crate::error::{domain, Error, Result};
use crate::model::{ConditionalLaw, MixingDensity};
use crate::special::gamma_p_inv_ln;

/// Law of the conditional parameter `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Mixing {
    Density(MixingDensity),
    /// Point mass at a fixed `Q`, used to test the conditional layer alone.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeFinettiModel {
    pub mixing: Mixing,
    pub law: ConditionalLaw,
}

impl DeFinettiModel {
    pub fn new(mixing: MixingDensity, law: ConditionalLaw) -> Self {
        Self {
            mixing: Mixing::Density(mixing),
            law,
        }
    }

    pub fn fixed_q(q: f64, law: ConditionalLaw) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return domain(format!("fixed Q must be finite and > 0, got {q}"));
        }
        Ok(Self {
            mixing: Mixing::Fixed(q),
            law,
        })
    }

    fn draw_q<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.mixing {
            Mixing::Density(m) => sample_q(&m, rng),
            Mixing::Fixed(q) => q,
        }
    }

    fn draw_xi<R: Rng + ?Sized>(&self, q: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.law.sd(q) * z
    }
}

/// SplitMix64 finalizer, used to derive independent keys from one seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for trial `index` under `seed`: ChaCha8 keyed by the seed, stream = index.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform on the open interval (0, 1).
fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Draw from the mixing density by inversion: `c₃Q^κ` is Gamma((γ+1)/κ),
/// so `Q = (P⁻¹(a, U)/c₃)^{1/κ}` with `U` uniform.
pub fn sample_q<R: Rng + ?Sized>(m: &MixingDensity, rng: &mut R) -> f64 {
    let u = open_unit(rng);
    // u ∈ (0,1) and a > 0, so the inverse is always defined
    let ln_x = gamma_p_inv_ln(m.gamma_shape(), u).expect("valid inverse incomplete gamma arguments");
    ((ln_x - m.c3().ln()) / m.kappa()).exp()
}

/// One draw of `S(n) = n^{-1/2} Σ ξᵢ` with a single shared `Q`.
pub fn sample_sum<R: Rng + ?Sized>(model: &DeFinettiModel, n: usize, rng: &mut R) -> f64 {
    let q = model.draw_q(rng);
    let sum: f64 = (0..n).map(|_| model.draw_xi(q, rng)).sum();
    sum / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailQuery {
    pub n: usize,
    pub t: f64,
    pub trials: u64,
    pub seed: u64,
}

impl TailQuery {
    pub fn new(n: usize, t: f64, trials: u64, seed: u64) -> Result<Self> {
        if n == 0 {
            return domain("sum length n must be >= 1");
        }
        if !(t >= 0.0 && t.is_finite()) {
            return domain(format!("threshold t must be finite and >= 0, got {t}"));
        }
        if trials == 0 {
            return domain("trials must be >= 1");
        }
        Ok(Self { n, t, trials, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub n: usize,
    pub t: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
    pub successes: u64,
    pub seed: u64,
}

impl MCEstimate {
    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }

    pub fn overlaps(&self, other: &MCEstimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

pub const CONFIDENCE: f64 = 0.95;

/// Exact two-sided Clopper–Pearson interval at the given confidence level.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    assert!(trials > 0 && successes <= trials);
    let tail = 0.5 * (1.0 - confidence);
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        inv_beta_reg(k, n - k + 1.0, tail)
    };
    let hi = if successes == trials {
        1.0
    } else {
        inv_beta_reg(k + 1.0, n - k, 1.0 - tail)
    };
    (lo, hi)
}

fn estimate(n: usize, t: f64, successes: u64, trials: u64, seed: u64) -> MCEstimate {
    let (ci_low, ci_high) = clopper_pearson(successes, trials, CONFIDENCE);
    MCEstimate {
        n,
        t,
        p_hat: successes as f64 / trials as f64,
        ci_low,
        ci_high,
        trials,
        successes,
        seed,
    }
}

/// Estimates `P(|S(n)| ≥ t)` for every `t` in `ts` from one shared sample set.
pub fn mc_tail_grid(model: &DeFinettiModel, n: usize, ts: &[f64], trials: u64, seed: u64) -> Result<Vec<MCEstimate>> {
    for &t in ts {
        TailQuery::new(n, t, trials, seed)?;
    }
    let k = ts.len();
    let counts = (0..trials)
        .into_par_iter()
        .fold(
            || vec![0u64; k],
            |mut acc, i| {
                let mut rng = trial_rng(seed, i);
                let s = sample_sum(model, n, &mut rng).abs();
                for (c, &t) in acc.iter_mut().zip(ts) {
                    *c += u64::from(s >= t);
                }
                acc
            },
        )
        .reduce(|| vec![0u64; k], add_counts);
    Ok(ts
        .iter()
        .zip(counts)
        .map(|(&t, c)| estimate(n, t, c, trials, seed))
        .collect())
}

fn add_counts(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Estimates `R_n(t) = P(|S(n)| ≥ t)` with an exact binomial interval.
pub fn mc_tail(model: &DeFinettiModel, query: &TailQuery) -> MCEstimate {
    mc_tail_grid(model, query.n, &[query.t], query.trials, query.seed).expect("validated query")[0]
}

/// Finite partition of the real line by increasing cut points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    cuts: Vec<f64>,
}

impl Partition {
    pub fn new(cuts: Vec<f64>) -> Result<Self> {
        if cuts.windows(2).any(|w| !(w[1] > w[0])) || cuts.iter().any(|c| !c.is_finite()) {
            return domain("partition cuts must be finite and strictly increasing");
        }
        if cuts.len() + 1 > 8 {
            return domain(format!("partition has {} cells, at most 8 allowed", cuts.len() + 1));
        }
        Ok(Self { cuts })
    }

    pub fn cells(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn cell(&self, x: f64) -> usize {
        self.cuts.partition_point(|&c| c < x)
    }
}

/// Partition whose cells carry roughly equal marginal mass, from a pilot sample.
pub fn quantile_partition(model: &DeFinettiModel, cells: usize, pilot: u64, seed: u64) -> Result<Partition> {
    if !(2..=8).contains(&cells) || pilot < cells as u64 {
        return domain("quantile partition needs 2..=8 cells and a pilot at least that large");
    }
    let mut xs: Vec<f64> = (0..pilot)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let q = model.draw_q(&mut rng);
            model.draw_xi(q, &mut rng)
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    let cuts = (1..cells)
        .map(|k| xs[(k as u64 * pilot / cells as u64) as usize])
        .collect();
    Partition::new(cuts)
}

/// Fisher–Yates permutations of `0..n`, skipping the identity.
pub fn random_permutations(n: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(n >= 2, "need n >= 2 for a non-identity permutation");
    let mut rng = trial_rng(derive_seed(seed, 0x7065_726d), 0);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            p.swap(i, j);
        }
        if p.iter().enumerate().any(|(i, &v)| i != v) {
            out.push(p);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationComparison {
    pub permutation: Vec<usize>,
    pub tv_distance: f64,
    /// Largest standardized difference over joint cells.
    pub max_z: f64,
    pub failing_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExchangeabilityReport {
    pub n: usize,
    pub cells: usize,
    pub trials: u64,
    pub z_threshold: f64,
    pub comparisons: Vec<PermutationComparison>,
}

impl ExchangeabilityReport {
    pub fn passed(&self) -> bool {
        self.comparisons.iter().all(|c| c.failing_cells == 0)
    }
}

pub const EXCHANGEABILITY_Z: f64 = 4.0;

/// Compares the empirical joint cell law of `(ξ₁,…,ξₙ)` with that of every
/// permuted vector, cell by cell at the 4-standard-error level.
pub fn exchangeability_check(
    model: &DeFinettiModel,
    n: usize,
    partition: &Partition,
    permutations: &[Vec<usize>],
    trials: u64,
    seed: u64,
) -> Result<ExchangeabilityReport> {
    if !(2..=6).contains(&n) {
        return domain(format!("exchangeability check takes n in [2, 6], got {n}"));
    }
    if trials == 0 {
        return domain("trials must be >= 1");
    }
    for p in permutations {
        let mut sorted = p.clone();
        sorted.sort_unstable();
        if sorted != (0..n).collect::<Vec<_>>() {
            return domain(format!("{p:?} is not a permutation of 0..{n}"));
        }
    }
    let cells = partition.cells();
    let joint = cells.pow(n as u32);
    let counts = (0..trials)
        .into_par_iter()
        .fold(
            || vec![0u64; joint],
            |mut acc, i| {
                let mut rng = trial_rng(seed, i);
                let q = model.draw_q(&mut rng);
                let mut idx = 0;
                for _ in 0..n {
                    idx = idx * cells + partition.cell(model.draw_xi(q, &mut rng));
                }
                acc[idx] += 1;
                acc
            },
        )
        .reduce(|| vec![0u64; joint], add_counts);

    // pooled marginal occupancy of each cell
    let mut marginal = vec![0u64; cells];
    for (idx, &c) in counts.iter().enumerate() {
        let mut rest = idx;
        for _ in 0..n {
            marginal[rest % cells] += c;
            rest /= cells;
        }
    }
    let threshold = 10.0 / trials as f64;
    for (cell, &m) in marginal.iter().enumerate() {
        let p = m as f64 / (trials as f64 * n as f64);
        if p < threshold {
            return Err(Error::DegeneratePartition {
                cell,
                probability: p,
                threshold,
            });
        }
    }

    let nt = trials as f64;
    let decode = |mut idx: usize| {
        let mut digits = vec![0usize; n];
        for d in digits.iter_mut().rev() {
            *d = idx % cells;
            idx /= cells;
        }
        digits
    };
    let encode = |digits: &[usize]| digits.iter().fold(0, |acc, &d| acc * cells + d);
    let comparisons = permutations
        .iter()
        .map(|perm| {
            let mut tv = 0.0;
            let mut max_z: f64 = 0.0;
            let mut failing = 0;
            for idx in 0..joint {
                let c = decode(idx);
                // (ξ_{π(0)},…,ξ_{π(n-1)}) ∈ c  ⟺  ξ ∈ c' with c'[π(j)] = c[j]
                let mut pre = vec![0usize; n];
                for (j, &pj) in perm.iter().enumerate() {
                    pre[pj] = c[j];
                }
                let p1 = counts[idx] as f64 / nt;
                let p2 = counts[encode(&pre)] as f64 / nt;
                let diff = (p1 - p2).abs();
                tv += 0.5 * diff;
                if diff > 0.0 {
                    let se = ((p1 + p2 - diff * diff) / nt).sqrt();
                    let z = diff / se;
                    max_z = max_z.max(z);
                    if z > EXCHANGEABILITY_Z {
                        failing += 1;
                    }
                }
            }
            PermutationComparison {
                permutation: perm.clone(),
                tv_distance: tv,
                max_z,
                failing_cells: failing,
            }
        })
        .collect();
    Ok(ExchangeabilityReport {
        n,
        cells,
        trials,
        z_threshold: EXCHANGEABILITY_Z,
        comparisons,
    })
}

/// Interval `(lo, hi]` on the real line; infinite ends allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || !(hi > lo) {
            return domain(format!("interval needs lo < hi, got ({lo}, {hi}]"));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicationOutcome {
    pub q: f64,
    pub frequency: f64,
    pub conditional_probability: f64,
    pub band: f64,
}

impl ReplicationOutcome {
    pub fn inside(&self) -> bool {
        (self.frequency - self.conditional_probability).abs() <= self.band
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasureReport {
    pub n: usize,
    pub replications: Vec<ReplicationOutcome>,
}

impl EmpiricalMeasureReport {
    pub fn inside_count(&self) -> usize {
        self.replications.iter().filter(|r| r.inside()).count()
    }

    pub fn inside_fraction(&self) -> f64 {
        self.inside_count() as f64 / self.replications.len() as f64
    }
}

pub const MIN_EMPIRICAL_N: usize = 10_000;

/// For each replication draws `Q` and `n` values, and compares the empirical
/// frequency of `A` with `Q(A)` inside a 4-standard-deviation band.
pub fn empirical_measure_check(
    model: &DeFinettiModel,
    set_a: Interval,
    n: usize,
    replications: u64,
    seed: u64,
) -> Result<EmpiricalMeasureReport> {
    if n < MIN_EMPIRICAL_N {
        return domain(format!("empirical measure check needs n >= {MIN_EMPIRICAL_N}, got {n}"));
    }
    if replications == 0 {
        return domain("replications must be >= 1");
    }
    let outcomes = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = trial_rng(seed, r);
            let q = model.draw_q(&mut rng);
            let hits = (0..n).filter(|_| set_a.contains(model.draw_xi(q, &mut rng))).count();
            let p = model.law.interval_prob(q, set_a.lo, set_a.hi);
            ReplicationOutcome {
                q,
                frequency: hits as f64 / n as f64,
                conditional_probability: p,
                band: 4.0 * (p * (1.0 - p) / n as f64).sqrt(),
            }
        })
        .collect();
    Ok(EmpiricalMeasureReport {
        n,
        replications: outcomes,
    })
}

/// Sample mean of `ξ` given a fixed `Q` and its standard error.
pub fn conditional_mean(law: ConditionalLaw, q: f64, samples: u64, seed: u64) -> (f64, f64) {
    let model = DeFinettiModel {
        mixing: Mixing::Fixed(q),
        law,
    };
    let (s1, s2) = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let x = model.draw_xi(q, &mut rng);
            (x, x * x)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}
