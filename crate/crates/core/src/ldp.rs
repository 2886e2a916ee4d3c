//! Tail probabilities of ergodic averages and the variational rate bounds
//! for Bernoulli shifts.
//!
//! For an identity-coordinate observable `φ` and a Bernoulli measure `μ` the
//! sum `S_Fφ` is a sum of `|F|` i.i.d. terms, so its tail is computed exactly.
//! The variational suprema reduce, over product measures, to a relative
//! entropy minimization under one moment constraint, solved by exponential
//! tilting.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::entropy;
use crate::error::{Error, Result};
use crate::exact;
use crate::group::{FiniteSubset, FolnerSequence, GroupModel};
use crate::shift::{
    self, all_patterns, Bernoulli, MeasureModel, Observable, Pattern, ShiftSystem, Symbol, ENUMERATION_BUDGET,
};
use crate::tiling::{self, QuasiTiling, SubfamilyPartition, TileFamily, TilingRecord};

/// Offset used to turn a strict moment constraint `> c` into `≥ c + STRICT_GAP`.
pub const STRICT_GAP: f64 = 1e-9;
/// Bisection stops once `|E_qφ - c|` is below this.
pub const MOMENT_TOLERANCE: f64 = 1e-9;
pub const MAX_BISECTION_STEPS: u32 = 200;
/// Largest `|F|` for which tails are computed in rational arithmetic.
pub const EXACT_TAIL_LIMIT: usize = 64;
/// Largest `|F|` accepted by [`exact_tail`].
pub const TAIL_SIZE_LIMIT: usize = 10_000;

fn ser_opt_rat<S: Serializer>(r: &Option<BigRational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_some(&r.to_string()),
        None => s.serialize_none(),
    }
}

/// Observable values and a threshold `c`, scaled to a common integer
/// denominator so that `S_Fφ > c|F|` is decided exactly.
#[derive(Clone, Debug)]
struct Scaled {
    nums: Vec<i128>,
    den: i128,
    c_num: i128,
    c_den: i128,
}

impl Scaled {
    fn new(values: &[f64], c: f64) -> Result<Self> {
        let too_fine = || Error::Unsupported("observable values or threshold too finely resolved for exact comparison".into());
        let rs: Vec<BigRational> = values.iter().map(|&v| exact::rat(v)).collect();
        let den = rs.iter().fold(BigInt::one(), |acc, r| num_integer::Integer::lcm(&acc, r.denom()));
        let nums = rs
            .iter()
            .map(|r| (r.numer() * (&den / r.denom())).to_i128().ok_or_else(too_fine))
            .collect::<Result<Vec<_>>>()?;
        let cr = exact::rat(c);
        Ok(Scaled {
            nums,
            den: den.to_i128().ok_or_else(too_fine)?,
            c_num: cr.numer().to_i128().ok_or_else(too_fine)?,
            c_den: cr.denom().to_i128().ok_or_else(too_fine)?,
        })
    }

    /// `(sum_num/den)` against `c·count`.
    fn cmp(&self, sum_num: i128, count: usize) -> Ordering {
        let lhs = sum_num.checked_mul(self.c_den);
        let rhs = self
            .c_num
            .checked_mul(count as i128)
            .and_then(|x| x.checked_mul(self.den));
        match (lhs, rhs) {
            (Some(l), Some(r)) => l.cmp(&r),
            _ => {
                let l = BigInt::from(sum_num) * BigInt::from(self.c_den);
                let r = BigInt::from(self.c_num) * BigInt::from(count) * BigInt::from(self.den);
                l.cmp(&r)
            }
        }
    }
}

/// Streaming `ln Σ exp(x_i)`.
#[derive(Clone, Copy, Debug)]
struct LogSum {
    max: f64,
    acc: f64,
}

impl LogSum {
    fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            acc: 0.0,
        }
    }

    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.acc = self.acc * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.acc += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }
}

fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = LogSum::new();
    for x in xs {
        s.add(x);
    }
    s.value()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMethod {
    ExactRational,
    LogSpace,
    MonteCarlo,
}

/// `μ(S_Fφ > c|F|)` and `μ(S_Fφ ≥ c|F|)`.
#[derive(Clone, Debug, Serialize)]
pub struct TailProbability {
    pub size: usize,
    pub c: f64,
    pub method: TailMethod,
    pub strict: f64,
    pub weak: f64,
    pub ln_strict: Option<f64>,
    pub ln_weak: Option<f64>,
    #[serde(serialize_with = "ser_opt_rat")]
    pub exact_strict: Option<BigRational>,
    #[serde(serialize_with = "ser_opt_rat")]
    pub exact_weak: Option<BigRational>,
    /// Bound on the absolute error of `ln_strict`/`ln_weak` (0 when exact).
    pub ln_error_bound: f64,
}

fn finite_ln(x: f64) -> Option<f64> {
    (x > f64::NEG_INFINITY).then_some(x)
}

/// Exact tail of `S_Fφ` under a Bernoulli measure for an identity-coordinate
/// observable.
///
/// Up to [`EXACT_TAIL_LIMIT`] terms the distribution is built by iterated
/// convolution on the attainable sums with integer weights; beyond that the
/// multinomial classes are summed in log space.
pub fn exact_tail(mu: &Bernoulli, phi: &Observable, c: f64, size: usize) -> Result<TailProbability> {
    let values = phi
        .identity_values()
        .ok_or_else(|| Error::Unsupported("exact tails need an identity-coordinate observable".into()))?;
    if phi.alphabet() != mu.alphabet() {
        return Err(Error::InvalidParameter("observable and measure alphabets differ".into()));
    }
    if size == 0 {
        return Err(Error::EmptySet("F"));
    }
    if size > TAIL_SIZE_LIMIT {
        return Err(Error::budget(size, TAIL_SIZE_LIMIT));
    }
    let scaled = Scaled::new(values, c)?;
    if size <= EXACT_TAIL_LIMIT {
        exact_tail_rational(mu, &scaled, c, size)
    } else {
        exact_tail_log(mu, &scaled, c, size)
    }
}

fn exact_tail_rational(mu: &Bernoulli, scaled: &Scaled, c: f64, size: usize) -> Result<TailProbability> {
    let probs = mu.exact_probs();
    let den = probs
        .iter()
        .fold(BigInt::one(), |acc, r| num_integer::Integer::lcm(&acc, r.denom()));
    let weights: Vec<BigUint> = probs
        .iter()
        .map(|r| (r.numer() * (&den / r.denom())).to_biguint().expect("nonnegative"))
        .collect();
    let mut dist: BTreeMap<i128, BigUint> = BTreeMap::new();
    dist.insert(0, BigUint::one());
    for _ in 0..size {
        let mut next: BTreeMap<i128, BigUint> = BTreeMap::new();
        for (s, w) in &dist {
            for (a, wa) in weights.iter().enumerate() {
                if wa.is_zero() {
                    continue;
                }
                *next.entry(s + scaled.nums[a]).or_default() += w * wa;
            }
        }
        dist = next;
    }
    let total = num_traits::pow(den.to_biguint().expect("positive"), size);
    let (mut strict, mut weak) = (BigUint::zero(), BigUint::zero());
    for (s, w) in &dist {
        match scaled.cmp(*s, size) {
            Ordering::Greater => {
                strict += w;
                weak += w;
            }
            Ordering::Equal => weak += w,
            Ordering::Less => {}
        }
    }
    let to_rat = |x: BigUint| BigRational::new(BigInt::from(x), BigInt::from(total.clone()));
    let (strict, weak) = (to_rat(strict), to_rat(weak));
    let ln = |r: &BigRational| (!r.is_zero()).then(|| exact::ln_rational(r));
    Ok(TailProbability {
        size,
        c,
        method: TailMethod::ExactRational,
        strict: exact::to_f64(&strict),
        weak: exact::to_f64(&weak),
        ln_strict: ln(&strict),
        ln_weak: ln(&weak),
        exact_strict: Some(strict),
        exact_weak: Some(weak),
        ln_error_bound: 0.0,
    })
}

/// Calls `visit` on every vector of `m` nonnegative integers summing to `n`.
pub(crate) fn for_each_count_vector(n: usize, m: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(left: usize, slot: usize, v: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if slot + 1 == v.len() {
            v[slot] = left;
            visit(v);
            return;
        }
        for k in 0..=left {
            v[slot] = k;
            rec(left - k, slot + 1, v, visit);
        }
    }
    let mut v = vec![0; m];
    rec(n, 0, &mut v, visit);
}

fn exact_tail_log(mu: &Bernoulli, scaled: &Scaled, c: f64, size: usize) -> Result<TailProbability> {
    let support: Vec<usize> = (0..mu.alphabet()).filter(|&a| mu.probs()[a] > 0.0).collect();
    let classes = entropy::binomial((size + support.len() - 1) as u64, (support.len() - 1) as u64);
    if classes > BigUint::from(ENUMERATION_BUDGET) {
        return Err(Error::budget(classes, ENUMERATION_BUDGET));
    }
    let mut ln_fact = vec![0.0f64; size + 1];
    for k in 1..=size {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let ln_p: Vec<f64> = support.iter().map(|&a| mu.probs()[a].ln()).collect();
    let nums: Vec<i128> = support.iter().map(|&a| scaled.nums[a]).collect();
    let (mut strict, mut weak) = (LogSum::new(), LogSum::new());
    for_each_count_vector(size, support.len(), &mut |v| {
        let sum: i128 = v.iter().zip(&nums).map(|(&k, &x)| k as i128 * x).sum();
        let ord = scaled.cmp(sum, size);
        if ord == Ordering::Less {
            return;
        }
        let ln_term = ln_fact[size]
            + v.iter()
                .zip(&ln_p)
                .map(|(&k, &lp)| k as f64 * lp - ln_fact[k])
                .sum::<f64>();
        weak.add(ln_term);
        if ord == Ordering::Greater {
            strict.add(ln_term);
        }
    });
    let max_lp = ln_p.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let bound = 8.0 * f64::EPSILON * size as f64 * (max_lp + (size as f64).ln() + 1.0);
    let (ls, lw) = (strict.value(), weak.value());
    Ok(TailProbability {
        size,
        c,
        method: TailMethod::LogSpace,
        strict: ls.exp(),
        weak: lw.exp(),
        ln_strict: finite_ln(ls),
        ln_weak: finite_ln(lw),
        exact_strict: None,
        exact_weak: None,
        ln_error_bound: bound,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub hits: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

const WILSON_Z: f64 = 1.959963984540054;

/// Wilson score interval at 95%.
pub fn wilson_interval(hits: u64, samples: u64) -> Interval {
    let n = samples as f64;
    let p = hits as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Interval {
        hits,
        estimate: p,
        lower: if hits == 0 { 0.0 } else { (center - half).max(0.0) },
        upper: if hits == samples { 1.0 } else { (center + half).min(1.0) },
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MonteCarloTail {
    pub samples: u64,
    pub seed: u64,
    pub size: usize,
    pub c: f64,
    pub strict: Interval,
    pub weak: Interval,
}

const MC_CHUNK: u64 = 4096;

/// Frequency estimate of both tails from `samples` independent draws of the
/// pattern on `W₀F`. Chunk `j` of [`MC_CHUNK`] draws uses ChaCha8 stream `j`
/// of `seed`, so the result does not depend on scheduling.
pub fn monte_carlo_tail(
    mu: &Bernoulli,
    phi: &Observable,
    c: f64,
    f: &FiniteSubset,
    samples: u64,
    seed: u64,
) -> Result<MonteCarloTail> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    if f.is_empty() {
        return Err(Error::EmptySet("F"));
    }
    if phi.alphabet() != mu.alphabet() {
        return Err(Error::InvalidParameter("observable and measure alphabets differ".into()));
    }
    let scaled = Scaled::new(phi.values(), c)?;
    let window = phi.required_window(f)?;
    let position: HashMap<_, usize> = window.iter().enumerate().map(|(i, g)| (g, i)).collect();
    let model = f.model();
    // offsets[g][w] = position of w·g in the sampled window
    let offsets: Vec<Vec<usize>> = f
        .iter()
        .map(|g| {
            phi.window()
                .iter()
                .map(|w| Ok(position[&model.mul(w, g)?]))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let q = phi.alphabet();
    let chunks = samples.div_ceil(MC_CHUNK);
    let counts: Vec<(u64, u64)> = (0..chunks)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j);
            let todo = MC_CHUNK.min(samples - j * MC_CHUNK);
            let mut symbols: Vec<Symbol> = vec![0; window.len()];
            let (mut strict, mut weak) = (0u64, 0u64);
            for _ in 0..todo {
                for s in symbols.iter_mut() {
                    *s = shift::draw(&mut rng, mu.probs());
                }
                let sum: i128 = offsets
                    .iter()
                    .map(|offs| {
                        let idx = offs.iter().fold(0usize, |acc, &o| acc * q + symbols[o] as usize);
                        scaled.nums[idx]
                    })
                    .sum();
                match scaled.cmp(sum, f.len()) {
                    Ordering::Greater => {
                        strict += 1;
                        weak += 1;
                    }
                    Ordering::Equal => weak += 1,
                    Ordering::Less => {}
                }
            }
            (strict, weak)
        })
        .collect();
    let (strict, weak) = counts.iter().fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
    Ok(MonteCarloTail {
        samples,
        seed,
        size: f.len(),
        c,
        strict: wilson_interval(strict, samples),
        weak: wilson_interval(weak, samples),
    })
}

/// Minimizer of `D(q‖p)` subject to `E_qφ ≥ c`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KlSolution {
    pub value: f64,
    pub lambda: f64,
    pub q: Vec<f64>,
    pub active: bool,
    pub iterations: u32,
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidParameter("probability vector must be nonempty and nonnegative".into()));
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter("probability vector must sum to 1".into()));
    }
    Ok(())
}

fn kl_divergence(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(qa, _)| **qa > 0.0)
        .map(|(qa, pa)| qa * (qa / pa).ln())
        .sum()
}

/// `inf { D(q‖p) : Σ q_a φ_a ≥ c }` by tilting `q_λ ∝ p e^{λφ}` with
/// bisection on `λ ≥ 0`.
pub fn kl_rate(p: &[f64], phi: &[f64], c: f64) -> Result<KlSolution> {
    check_distribution(p)?;
    if p.len() != phi.len() || phi.iter().any(|v| !v.is_finite()) || !c.is_finite() {
        return Err(Error::InvalidParameter("φ must give one finite value per symbol".into()));
    }
    let support: Vec<usize> = (0..p.len()).filter(|&a| p[a] > 0.0).collect();
    let top = support.iter().map(|&a| phi[a]).fold(f64::NEG_INFINITY, f64::max);
    if c > top {
        return Err(Error::Infeasible { c, max: top });
    }
    let mean: f64 = support.iter().map(|&a| p[a] * phi[a]).sum();
    if c <= mean {
        return Ok(KlSolution {
            value: 0.0,
            lambda: 0.0,
            q: p.to_vec(),
            active: false,
            iterations: 0,
        });
    }
    if c >= top {
        let mass: f64 = support.iter().filter(|&&a| phi[a] == top).map(|&a| p[a]).sum();
        let q = (0..p.len())
            .map(|a| if p[a] > 0.0 && phi[a] == top { p[a] / mass } else { 0.0 })
            .collect();
        return Ok(KlSolution {
            value: -mass.ln(),
            lambda: f64::INFINITY,
            q,
            active: true,
            iterations: 0,
        });
    }
    let tilt = |lambda: f64| -> Vec<f64> {
        let w: Vec<f64> = (0..p.len())
            .map(|a| if p[a] > 0.0 { p[a] * (lambda * (phi[a] - top)).exp() } else { 0.0 })
            .collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    };
    let moment = |q: &[f64]| q.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while moment(&tilt(hi)) < c {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    let mut iterations = 0;
    let mut lambda = hi;
    for _ in 0..MAX_BISECTION_STEPS {
        iterations += 1;
        lambda = 0.5 * (lo + hi);
        let m = moment(&tilt(lambda));
        if (m - c).abs() <= MOMENT_TOLERANCE {
            break;
        }
        if m < c {
            lo = lambda;
        } else {
            hi = lambda;
        }
    }
    let q = tilt(lambda);
    Ok(KlSolution {
        value: kl_divergence(&q, p),
        lambda,
        q,
        active: true,
        iterations,
    })
}

/// `h_μ({F_n};ν)` for product `ν` against Bernoulli `μ`: the cross-entropy
/// `-Σ ν_a ln μ_a`.
pub fn relative_entropy_rate(mu: &Bernoulli, nu: &Bernoulli) -> Result<f64> {
    if mu.alphabet() != nu.alphabet() {
        return Err(Error::InvalidParameter("alphabets differ".into()));
    }
    Ok(nu
        .probs()
        .iter()
        .zip(mu.probs())
        .filter(|(n, _)| **n > 0.0)
        .map(|(n, m)| if *m > 0.0 { -n * m.ln() } else { f64::INFINITY })
        .sum())
}

/// Value of one of the product-measure suprema.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationalBound {
    pub value: f64,
    pub strict: bool,
    /// Threshold actually imposed (`c`, or `c + STRICT_GAP` when strict).
    pub threshold: f64,
    pub maximizer: Vec<f64>,
    pub lambda: f64,
}

fn identity_values<'a>(o: &'a Observable, what: &str) -> Result<&'a [f64]> {
    o.identity_values()
        .ok_or_else(|| Error::Unsupported(format!("{what} must depend on the identity coordinate only")))
}

fn effective_threshold(c: f64, strict: bool) -> f64 {
    if strict {
        c + STRICT_GAP
    } else {
        c
    }
}

/// `sup { h(ν) - h_μ({F_n};ν) : ν product, ∫φ dν > c } = -inf D(ν‖μ)`.
pub fn thm1_lower_bound(mu: &Bernoulli, phi: &Observable, c: f64) -> Result<VariationalBound> {
    let values = identity_values(phi, "φ")?;
    if values.len() != mu.alphabet() {
        return Err(Error::InvalidParameter("observable and measure alphabets differ".into()));
    }
    let threshold = effective_threshold(c, true);
    let sol = kl_rate(mu.probs(), values, threshold)?;
    Ok(VariationalBound {
        value: -sol.value,
        strict: true,
        threshold,
        maximizer: sol.q,
        lambda: sol.lambda,
    })
}

/// `sup { H(q) - Σ q_a ψ_a : Σ q_a φ_a ⋛ c } = ln Z_ψ - inf D(q‖r)` with
/// `r ∝ e^{-ψ}`.
fn entropy_minus_potential(psi: &[f64], phi: &[f64], c: f64, strict: bool) -> Result<VariationalBound> {
    if psi.len() != phi.len() {
        return Err(Error::InvalidParameter("ψ and φ alphabets differ".into()));
    }
    let ln_z = log_sum_exp(psi.iter().map(|v| -v));
    let r: Vec<f64> = psi.iter().map(|v| (-v - ln_z).exp()).collect();
    let sum: f64 = r.iter().sum();
    let r: Vec<f64> = r.into_iter().map(|x| x / sum).collect();
    let threshold = effective_threshold(c, strict);
    let sol = kl_rate(&r, phi, threshold)?;
    Ok(VariationalBound {
        value: ln_z - sol.value,
        strict,
        threshold,
        maximizer: sol.q,
        lambda: sol.lambda,
    })
}

fn potential_inputs<'a>(mu: &Bernoulli, psi: &'a Observable, phi: &'a Observable) -> Result<(&'a [f64], &'a [f64])> {
    let (p, f) = (identity_values(psi, "ψ")?, identity_values(phi, "φ")?);
    if p.len() != mu.alphabet() || f.len() != mu.alphabet() {
        return Err(Error::InvalidParameter("observable and measure alphabets differ".into()));
    }
    Ok((p, f))
}

/// `sup { h(ν) - ∫ψ dν : ν product, ∫φ dν ≥ c }`.
pub fn thm2_upper_bound(mu: &Bernoulli, psi: &Observable, phi: &Observable, c: f64) -> Result<VariationalBound> {
    let (p, f) = potential_inputs(mu, psi, phi)?;
    entropy_minus_potential(p, f, c, false)
}

/// `sup { h(ν) - ∫ψ dν : ν product, ∫φ dν > c }`.
pub fn thm3_lower_bound(mu: &Bernoulli, psi: &Observable, phi: &Observable, c: f64) -> Result<VariationalBound> {
    let (p, f) = potential_inputs(mu, psi, phi)?;
    entropy_minus_potential(p, f, c, true)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialCertificate {
    /// Windows `[0, n)` checked, `n = 1..=max_window`.
    pub max_window: usize,
    pub patterns_checked: u64,
    /// Largest `|μ([x]) - exp(-S_Fψ(x))| / μ([x])` seen.
    pub max_relative_error: f64,
    pub holds: bool,
}

/// `ψ(x) = -ln p_{x_e}` with `C = 1`.
#[derive(Clone, Debug)]
pub struct CanonicalPotential {
    pub psi: Observable,
    pub constant: f64,
    pub certificate: PotentialCertificate,
}

/// Canonical potential of a full-support Bernoulli measure on `Z`, certified
/// by comparing `μ([x]_F)` with `exp(-S_Fψ(x))` on every pattern over the
/// windows `[0,n)`, `n ≤ 12` (fewer when `q^n` outgrows `2^20`). For
/// `ε ∈ (1/2, 1]` the Bowen window of `F` is `F` itself, so these cylinders
/// are exactly the Bowen balls.
pub fn canonical_potential(mu: &Bernoulli) -> Result<CanonicalPotential> {
    if let Some(a) = mu.exact_probs().iter().position(|r| r.is_zero()) {
        return Err(Error::ZeroProbability(a));
    }
    let model = GroupModel::Zd(1);
    let psi = Observable::identity_coordinate(model, mu.probs().iter().map(|p| -p.ln()).collect())?;
    let q = mu.alphabet() as u64;
    let mut max_window = 0;
    while max_window < 12 && q.pow(max_window as u32 + 1) <= 1 << 12 {
        max_window += 1;
    }
    let measure = MeasureModel::Bernoulli(mu.clone());
    let mut checked = 0u64;
    let mut worst = 0.0f64;
    let mut holds = true;
    for n in 1..=max_window {
        let f = FiniteSubset::zd_box(&[0..n as i64]);
        holds &= shift::bowen_window(&f, 0.75)?.window == f;
        for x in all_patterns(&f, mu.alphabet())? {
            let m = shift::cylinder_measure_exact(&measure, &x)?;
            let product: BigRational = x.iter().map(|(_, a)| mu.exact_probs()[a as usize].clone()).product();
            holds &= m == product;
            let predicted = (-shift::birkhoff_sum(&psi, &x, &f)?).exp();
            let mf = exact::to_f64(&m);
            let err = (mf - predicted).abs() / mf;
            worst = worst.max(err);
            holds &= err <= 1e-12;
            checked += 1;
        }
    }
    Ok(CanonicalPotential {
        psi,
        constant: 1.0,
        certificate: PotentialCertificate {
            max_window,
            patterns_checked: checked,
            max_relative_error: worst,
            holds,
        },
    })
}

/// Whether `ψ` equals the canonical potential of `μ` to `1e-12`.
pub fn is_canonical(mu: &Bernoulli, psi: &Observable) -> bool {
    psi.identity_values().is_some_and(|v| {
        v.len() == mu.alphabet()
            && v.iter()
                .zip(mu.probs())
                .all(|(x, p)| *p > 0.0 && (x + p.ln()).abs() <= 1e-12)
    })
}

/// Atomic measure with weights `e^{-S_Fψ(x)}/Z` on a finite support.
#[derive(Clone, Debug)]
pub struct GibbsAtomicMeasure {
    pub support: Vec<Pattern>,
    pub window: FiniteSubset,
    pub sums: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_partition: f64,
}

/// Builds the Gibbs atomic measure; no two support points may agree on `F`.
pub fn gibbs_measure(support: Vec<Pattern>, psi: &Observable, f: &FiniteSubset) -> Result<GibbsAtomicMeasure> {
    if support.is_empty() {
        return Err(Error::EmptySet("support"));
    }
    let mut seen: HashMap<Vec<Symbol>, usize> = HashMap::new();
    for (i, x) in support.iter().enumerate() {
        if let Some(j) = seen.insert(x.symbols_on(f)?, i) {
            return Err(Error::DuplicateCell(j, i));
        }
    }
    let sums = support
        .iter()
        .map(|x| shift::birkhoff_sum(psi, x, f))
        .collect::<Result<Vec<_>>>()?;
    let log_partition = log_sum_exp(sums.iter().map(|s| -s));
    let weights = sums.iter().map(|s| (-s - log_partition).exp()).collect();
    Ok(GibbsAtomicMeasure {
        support,
        window: f.clone(),
        sums,
        weights,
        log_partition,
    })
}

/// `|H_σ(β_W) - ∫S_Fψ dσ - ln Z|`, with `β_W` the partition into cylinders
/// on `beta_window`.
pub fn z_identity_check(g: &GibbsAtomicMeasure, beta_window: &FiniteSubset) -> Result<f64> {
    let mut cells: HashMap<Vec<Symbol>, f64> = HashMap::new();
    for (x, w) in g.support.iter().zip(&g.weights) {
        *cells.entry(x.symbols_on(beta_window)?).or_default() += w;
    }
    let mut masses: Vec<f64> = cells.into_values().collect();
    masses.sort_by(f64::total_cmp);
    let h: f64 = masses.iter().filter(|m| **m > 0.0).map(|m| -m * m.ln()).sum();
    let integral: f64 = g.weights.iter().zip(&g.sums).map(|(w, s)| w * s).sum();
    Ok((h - integral - g.log_partition).abs())
}

/// Product measures `λ_i` with convex weights `a_i`.
#[derive(Clone, Debug)]
pub struct ProductMeasureFamily {
    members: Vec<Bernoulli>,
    weights: Vec<f64>,
}

impl ProductMeasureFamily {
    pub fn new(members: Vec<Bernoulli>, weights: Vec<f64>) -> Result<Self> {
        if members.is_empty() || members.len() != weights.len() {
            return Err(Error::InvalidParameter("one weight per member required".into()));
        }
        if members.iter().any(|m| m.alphabet() != members[0].alphabet()) {
            return Err(Error::InvalidParameter("members must share an alphabet".into()));
        }
        check_distribution(&weights)?;
        Ok(ProductMeasureFamily { members, weights })
    }

    pub fn single(member: Bernoulli) -> Self {
        ProductMeasureFamily {
            members: vec![member],
            weights: vec![1.0],
        }
    }

    pub fn members(&self) -> &[Bernoulli] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Inputs to [`thm3_construction_demo`].
#[derive(Clone, Debug)]
pub struct Thm3Config {
    pub mu: Bernoulli,
    pub family: ProductMeasureFamily,
    pub phi: Observable,
    pub psi: Observable,
    pub c: f64,
    pub seq: FolnerSequence,
    pub n: u64,
    /// Tile shapes; defaults to the box of side `⌊√n⌋`.
    pub tiles: Option<TileFamily>,
    /// Bowen-ball radius `ε`.
    pub epsilon: f64,
    pub gamma: f64,
    pub max_points: usize,
    pub max_draws: usize,
    pub seed: u64,
}

impl Thm3Config {
    pub fn new(mu: Bernoulli, family: ProductMeasureFamily, c: f64, seq: FolnerSequence, n: u64, seed: u64) -> Result<Self> {
        let model = seq.model();
        let q = mu.alphabet();
        let phi = Observable::identity_coordinate(model, (0..q).map(|a| a as f64).collect())?;
        let psi = Observable::identity_coordinate(model, mu.probs().iter().map(|p| -p.ln()).collect())?;
        Ok(Thm3Config {
            mu,
            family,
            phi,
            psi,
            c,
            seq,
            n,
            tiles: None,
            epsilon: 0.6,
            gamma: 0.1,
            max_points: 200,
            max_draws: 800,
            seed,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Thm3Constants {
    pub gamma: f64,
    /// `max(‖ψ‖, ‖φ‖, 1)`.
    pub m: f64,
    /// Cylinders on the Bowen window `B_m` (maximal ε-separated set size).
    pub l: u64,
    pub k: usize,
    /// `|F|` for the thickening `F = B_m`.
    pub f_size: usize,
    pub bowen_radius: u64,
    pub tile_epsilon: f64,
    pub partition_tolerance: f64,
    pub core_threshold: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Thm3Report {
    pub n: u64,
    pub size: usize,
    pub c: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub constants: Thm3Constants,
    pub tiling: TilingRecord,
    pub partition: Option<SubfamilyPartition>,
    pub core_sizes: Vec<usize>,
    pub vacuous: bool,
    pub draws: usize,
    pub rejected_below_threshold: usize,
    pub rejected_duplicate: usize,
    pub q_real: usize,
    pub ln_q_real: f64,
    /// `|F_n| Σ (a_i - 3γ/(kML|F|))(h(λ_i) - 4γ)`.
    pub displayed_bound_ln: f64,
    pub meets_displayed_bound: bool,
    /// Every emitted point has `A_{F_n}φ > c`, checked in exact arithmetic.
    pub all_in_v: bool,
    pub min_average: Option<f64>,
    /// Pairwise distinct on the Bowen window of `F_n`, checked pair by pair.
    pub cylinders_disjoint: bool,
    /// `Σ_y μ(B_{F_n}(y, ε))`, a lower bound for `μ(V_n)`.
    pub tail_lower_bound: f64,
    pub exact_tail: Option<f64>,
    pub tail_bound_consistent: Option<bool>,
    /// Symbols of each point on `F_n`, in window order.
    pub points: Vec<String>,
}

fn default_tile(model: GroupModel, n: u64) -> Result<TileFamily> {
    let side = (n as f64).sqrt().floor().max(1.0) as i64;
    let d = match model {
        GroupModel::Zd(d) => d,
        _ => unreachable!("checked by caller"),
    };
    TileFamily::new(vec![FiniteSubset::zd_box(&vec![0..side; d])])
}

fn point_string(symbols: &[Symbol]) -> String {
    symbols
        .iter()
        .map(|a| char::from_digit(*a as u32, 36).unwrap_or('?'))
        .collect()
}

/// Runs the lower-bound construction on a small `Z` or `Z²` full shift:
/// quasi-tile `F_n`, split the translates to the weights `a_i`, extract
/// cores, sample patterns on each core from `λ_i`, patch them into shadow
/// points, and keep the distinct points with `A_{F_n}φ > c`.
pub fn thm3_construction_demo(cfg: &Thm3Config) -> Result<Thm3Report> {
    let model = cfg.seq.model();
    if !matches!(model, GroupModel::Zd(1) | GroupModel::Zd(2)) {
        return Err(Error::Unsupported("the construction demo runs on Z or Z² only".into()));
    }
    let q = cfg.mu.alphabet();
    if cfg.family.members().iter().any(|m| m.alphabet() != q) {
        return Err(Error::InvalidParameter("family and μ alphabets differ".into()));
    }
    let f_n = cfg.seq.set(cfg.n).map_err(|e| e.at("folner"))?;
    if f_n.len() > 400 {
        return Err(Error::budget(f_n.len(), 400));
    }
    let sys = ShiftSystem::full(model, q)?;
    let radius = shift::bowen_radius(cfg.epsilon)?;
    let ball = model.ball(radius);
    let bowen = shift::bowen_window(&f_n, cfg.epsilon)?.window;

    let k = cfg.family.len();
    let m_const = cfg.psi.sup_norm().max(cfg.phi.sup_norm()).max(1.0);
    let l_const = (q as u64)
        .checked_pow(ball.len() as u32)
        .ok_or_else(|| Error::budget(format!("{q}^{}", ball.len()), u64::MAX))?;
    let base = k as f64 * m_const * l_const as f64 * ball.len() as f64;
    let constants = Thm3Constants {
        gamma: cfg.gamma,
        m: m_const,
        l: l_const,
        k,
        f_size: ball.len(),
        bowen_radius: radius,
        tile_epsilon: cfg.gamma / base,
        partition_tolerance: 3.0 * cfg.gamma / base,
        core_threshold: 1.0 - 3.0 * cfg.gamma / (m_const * l_const as f64),
    };

    let tiles = match &cfg.tiles {
        Some(t) => t.clone(),
        None => default_tile(model, cfg.n)?,
    };
    let tiling: QuasiTiling = tiling::quasi_tile(&f_n, &tiles, constants.tile_epsilon).map_err(|e| e.at("quasi_tile"))?;
    let translates = tiling.translates();
    let vacuous = translates.is_empty();

    let (partition, cores) = if vacuous {
        (None, Vec::new())
    } else {
        let partition = tiling::partition_subfamilies(&tiling, cfg.family.weights(), constants.partition_tolerance)
            .map_err(|e| e.at("partition_subfamilies"))?;
        let cores = tiling::extract_cores(&tiling, &ball, cfg.gamma, m_const, l_const).map_err(|e| e.at("extract_cores"))?;
        (Some(partition), cores.cores)
    };
    let mut member_of = vec![0usize; translates.len()];
    if let Some(p) = &partition {
        for (i, fam) in p.families.iter().enumerate() {
            for &j in fam {
                member_of[j] = i;
            }
        }
    }
    let core_cells: Vec<FiniteSubset> = cores
        .iter()
        .map(|c| c.core.translate_right(&c.center_element))
        .collect::<Result<_>>()?;
    let core_windows: Vec<FiniteSubset> = core_cells.iter().map(|d| ball.product(d)).collect::<Result<_>>()?;

    let phi_values = cfg.phi.values();
    let fill = (0..q)
        .filter(|&a| cfg.phi.identity_values().is_none() || a < phi_values.len())
        .max_by(|&a, &b| {
            let va = cfg.phi.identity_values().map_or(0.0, |v| v[a]);
            let vb = cfg.phi.identity_values().map_or(0.0, |v| v[b]);
            va.total_cmp(&vb).then(b.cmp(&a))
        })
        .unwrap_or(0) as Symbol;
    let needed = cfg.phi.required_window(&f_n)?.union(&bowen)?;
    let threshold = exact::rat(cfg.c) * BigRational::from_integer(BigInt::from(f_n.len()));

    let build = |draw: usize| -> Result<Pattern> {
        let mut pieces = Vec::with_capacity(cores.len());
        if !cores.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(draw as u64);
            for ((core, cells), window) in cores.iter().zip(&core_cells).zip(&core_windows) {
                let lambda = &cfg.family.members()[member_of[translates_index(&translates, core)]];
                let x = Pattern::from_fn(window, |_| shift::draw(&mut rng, lambda.probs()));
                pieces.push((x, cells.clone()));
            }
        }
        let shadow = shift::weak_spec_shadow(&sys, &pieces, &ball, cfg.epsilon, fill).map_err(|e| e.at("weak_spec_shadow"))?;
        if !shadow.passed() {
            return Err(Error::Certificate {
                stage: "weak_spec_shadow".into(),
                detail: "shadow point leaves an ε-ball".into(),
            });
        }
        let cells = shadow.point.iter().map(|(g, a)| (g.clone(), a)).collect::<Vec<_>>();
        let defined: HashSet<_> = cells.iter().map(|(g, _)| g.clone()).collect();
        let extra = needed.iter().filter(|g| !defined.contains(*g)).map(|g| (g.clone(), fill));
        Pattern::new(model, cells.into_iter().chain(extra))
    };

    let mut points: Vec<Pattern> = Vec::new();
    let mut keys: Vec<Vec<Symbol>> = Vec::new();
    let mut seen: HashSet<Vec<Symbol>> = HashSet::new();
    let (mut draws, mut below, mut dup) = (0, 0, 0);
    let attempts = if vacuous { 1 } else { cfg.max_draws };
    while draws < attempts && points.len() < cfg.max_points {
        let y = build(draws)?;
        draws += 1;
        if shift::birkhoff_sum_exact(&cfg.phi, &y, &f_n)? <= threshold {
            below += 1;
            continue;
        }
        let key = y.symbols_on(&bowen)?;
        if !seen.insert(key.clone()) {
            dup += 1;
            continue;
        }
        keys.push(key);
        points.push(y);
    }

    // Independent re-checks of the emitted family.
    let mut all_in_v = true;
    let mut min_average: Option<f64> = None;
    let mut tail_lower = BigRational::zero();
    let measure = MeasureModel::Bernoulli(cfg.mu.clone());
    for y in &points {
        let s = shift::birkhoff_sum_exact(&cfg.phi, y, &f_n)?;
        all_in_v &= s > threshold;
        let avg = exact::to_f64(&s) / f_n.len() as f64;
        min_average = Some(min_average.map_or(avg, |m: f64| m.min(avg)));
        tail_lower += shift::cylinder_measure_exact(&measure, &y.restrict(&bowen)?)?;
    }
    let mut cylinders_disjoint = true;
    for i in 0..keys.len() {
        for j in i + 1..keys.len() {
            cylinders_disjoint &= keys[i] != keys[j];
        }
    }
    let cylinder_in_v = cfg.phi.required_window(&f_n)?.is_subset(&bowen);
    let exact_tail_value = if cfg.phi.identity_values().is_some() && f_n.len() <= TAIL_SIZE_LIMIT {
        exact_tail(&cfg.mu, &cfg.phi, cfg.c, f_n.len()).ok()
    } else {
        None
    };
    let tail_bound_consistent = exact_tail_value.as_ref().map(|t| match &t.exact_strict {
        Some(e) => cylinder_in_v && tail_lower <= *e,
        None => cylinder_in_v && exact::to_f64(&tail_lower) <= t.strict * (1.0 + 1e-9),
    });

    let h_terms: f64 = cfg
        .family
        .members()
        .iter()
        .zip(cfg.family.weights())
        .map(|(lam, a)| (a - constants.partition_tolerance) * (lam.entropy() - 4.0 * cfg.gamma))
        .sum();
    let displayed_bound_ln = f_n.len() as f64 * h_terms;
    let ln_q_real = (points.len() as f64).ln();
    if !all_in_v || !cylinders_disjoint {
        return Err(Error::Certificate {
            stage: "thm3_construction_demo".into(),
            detail: "emitted shadow family failed its re-check".into(),
        });
    }
    let fn_symbols: Vec<String> = points
        .iter()
        .map(|y| y.symbols_on(&f_n).map(|s| point_string(&s)))
        .collect::<Result<_>>()?;
    Ok(Thm3Report {
        n: cfg.n,
        size: f_n.len(),
        c: cfg.c,
        epsilon: cfg.epsilon,
        seed: cfg.seed,
        tiling: tiling.record(&format!("F_{}", cfg.n)),
        partition,
        core_sizes: cores.iter().map(|c| c.core_size).collect(),
        vacuous,
        draws,
        rejected_below_threshold: below,
        rejected_duplicate: dup,
        q_real: points.len(),
        ln_q_real,
        displayed_bound_ln,
        meets_displayed_bound: ln_q_real >= displayed_bound_ln,
        all_in_v,
        min_average,
        cylinders_disjoint,
        tail_lower_bound: exact::to_f64(&tail_lower),
        exact_tail: exact_tail_value.map(|t| t.strict),
        tail_bound_consistent,
        points: fn_symbols,
        constants,
    })
}

fn translates_index(translates: &[(usize, crate::GroupElement, FiniteSubset)], core: &tiling::Core) -> usize {
    translates
        .iter()
        .position(|(i, c, _)| *i == core.tile && *c == core.center_element)
        .expect("every core comes from a translate")
}

#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub n: u64,
    pub size: u128,
    pub method: TailMethod,
    pub strict: f64,
    pub weak: f64,
    #[serde(serialize_with = "ser_opt_rat")]
    pub exact_strict: Option<BigRational>,
    #[serde(serialize_with = "ser_opt_rat")]
    pub exact_weak: Option<BigRational>,
    pub exponent_strict: Option<f64>,
    pub exponent_weak: Option<f64>,
    /// Wilson interval of the strict tail for Monte Carlo rows.
    pub interval: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub c: f64,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub ns: Vec<u64>,
    pub samples: u64,
    pub seed: Option<u64>,
    pub rows: Vec<RateRow>,
    pub skipped: Vec<(u64, String)>,
    pub thm1_lower: f64,
    pub thm2_upper: f64,
    pub thm3_lower: f64,
    /// `inf { D(q‖p) : E_qφ ≥ c }`.
    pub kl_reference: f64,
    pub psi_canonical: bool,
    /// Mean strict exponent over the last third of the rows.
    pub tail_mean: Option<f64>,
}

impl RateReport {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.12}")).unwrap_or_default();
        let mut out = String::from("n,size,method,strict,weak,exponent_strict,exponent_weak\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.12e},{:.12e},{},{}\n",
                r.n,
                r.size,
                match r.method {
                    TailMethod::ExactRational => "exact-rational",
                    TailMethod::LogSpace => "log-space",
                    TailMethod::MonteCarlo => "monte-carlo",
                },
                r.strict,
                r.weak,
                opt(r.exponent_strict),
                opt(r.exponent_weak)
            ));
        }
        out
    }

    pub fn row(&self, n: u64) -> Option<&RateRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

/// Tolerance for the ordering check between bounds and the reference.
pub const ORDERING_TOLERANCE: f64 = 1e-6;

/// Per-`n` tail exponents together with the three variational bounds and the
/// relative-entropy reference.
#[allow(clippy::too_many_arguments)]
pub fn rate_report(
    mu: &Bernoulli,
    phi: &Observable,
    psi: &Observable,
    c: f64,
    seq: &FolnerSequence,
    ns: &[u64],
    samples: u64,
    seed: Option<u64>,
) -> Result<RateReport> {
    let phi_values = identity_values(phi, "φ")?.to_vec();
    let psi_values = identity_values(psi, "ψ")?.to_vec();
    let thm1 = thm1_lower_bound(mu, phi, c).map_err(|e| e.at("thm1"))?;
    let thm2 = thm2_upper_bound(mu, psi, phi, c).map_err(|e| e.at("thm2"))?;
    let thm3 = thm3_lower_bound(mu, psi, phi, c).map_err(|e| e.at("thm3"))?;
    let kl = kl_rate(mu.probs(), &phi_values, c).map_err(|e| e.at("kl_rate"))?;
    let canonical = is_canonical(mu, psi);
    let ordered = if canonical {
        thm1.value <= -kl.value + ORDERING_TOLERANCE
            && -kl.value <= thm2.value + ORDERING_TOLERANCE
            && thm3.value <= thm2.value + ORDERING_TOLERANCE
    } else {
        thm3.value <= thm2.value + ORDERING_TOLERANCE
    };
    if !ordered {
        return Err(Error::Certificate {
            stage: "rate_report".into(),
            detail: format!(
                "bounds out of order: thm1 {} thm3 {} reference {} thm2 {}",
                thm1.value, thm3.value, -kl.value, thm2.value
            ),
        });
    }

    let results: Vec<(u64, Result<RateRow>)> = ns
        .par_iter()
        .map(|&n| (n, rate_row(mu, phi, c, seq, n, samples, seed)))
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (n, r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e @ Error::BudgetExceeded { .. }) | Err(e @ Error::Unsupported(_)) => skipped.push((n, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    rows.sort_by_key(|r| r.n);
    let tail: Vec<f64> = {
        let start = rows.len() - rows.len().div_ceil(3);
        rows[start..].iter().filter_map(|r| r.exponent_strict).collect()
    };
    let tail_mean = (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64);
    Ok(RateReport {
        c,
        mu: mu.probs().to_vec(),
        phi: phi_values,
        psi: psi_values,
        ns: ns.to_vec(),
        samples,
        seed,
        rows,
        skipped,
        thm1_lower: thm1.value,
        thm2_upper: thm2.value,
        thm3_lower: thm3.value,
        kl_reference: kl.value,
        psi_canonical: canonical,
        tail_mean,
    })
}

fn rate_row(
    mu: &Bernoulli,
    phi: &Observable,
    c: f64,
    seq: &FolnerSequence,
    n: u64,
    samples: u64,
    seed: Option<u64>,
) -> Result<RateRow> {
    let size = seq.cardinality(n)?;
    if size as usize <= TAIL_SIZE_LIMIT {
        if let Ok(t) = exact_tail(mu, phi, c, size as usize) {
            return Ok(RateRow {
                n,
                size,
                method: t.method,
                strict: t.strict,
                weak: t.weak,
                exponent_strict: t.ln_strict.map(|l| l / size as f64),
                exponent_weak: t.ln_weak.map(|l| l / size as f64),
                exact_strict: t.exact_strict,
                exact_weak: t.exact_weak,
                interval: None,
            });
        }
    }
    let Some(seed) = seed.filter(|_| samples > 0) else {
        return Err(Error::Unsupported(format!("no exact tail for n = {n} and Monte Carlo disabled")));
    };
    let f = seq.set(n)?;
    let mc = monte_carlo_tail(mu, phi, c, &f, samples, seed ^ n.wrapping_mul(0x9E37_79B9_7F4A_7C15))?;
    let ln = |x: f64| (x > 0.0).then(|| x.ln() / size as f64);
    Ok(RateRow {
        n,
        size,
        method: TailMethod::MonteCarlo,
        strict: mc.strict.estimate,
        weak: mc.weak.estimate,
        exact_strict: None,
        exact_weak: None,
        exponent_strict: ln(mc.strict.estimate),
        exponent_weak: ln(mc.weak.estimate),
        interval: Some([mc.strict.lower, mc.strict.upper]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    fn z1() -> GroupModel {
        GroupModel::Zd(1)
    }

    fn coin() -> Bernoulli {
        Bernoulli::new(vec![0.5, 0.5]).unwrap()
    }

    fn x0() -> Observable {
        Observable::identity_coordinate(z1(), vec![0.0, 1.0]).unwrap()
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    const KL_07: f64 = 0.08228287850505178;

    #[test]
    fn binomial_tail_example() {
        let t = exact_tail(&coin(), &x0(), 0.7, 10).unwrap();
        assert_eq!(t.exact_strict, Some(rat(56, 1024)));
        assert_eq!(t.strict, 0.0546875);
        // weak adds P(S = 7) = 120/1024
        assert_eq!(t.exact_weak, Some(rat(176, 1024)));
        assert_eq!(exact_tail(&coin(), &x0(), 1.0, 10).unwrap().strict, 0.0);
        assert_eq!(exact_tail(&coin(), &x0(), -0.1, 10).unwrap().weak, 1.0);
        assert_eq!(exact_tail(&coin(), &x0(), -0.1, 10).unwrap().strict, 1.0);
    }

    #[test]
    fn log_space_agrees_with_rational() {
        let mu = Bernoulli::new(vec![0.8, 0.2]).unwrap();
        let phi = Observable::identity_coordinate(z1(), vec![0.0, 1.0]).unwrap();
        let exact = exact_tail(&mu, &phi, 0.3, 60).unwrap();
        let scaled = Scaled::new(phi.values(), 0.3).unwrap();
        let log = exact_tail_log(&mu, &scaled, 0.3, 60).unwrap();
        assert!((exact.ln_strict.unwrap() - log.ln_strict.unwrap()).abs() < 1e-10);
        assert!((exact.ln_weak.unwrap() - log.ln_weak.unwrap()).abs() < 1e-10);
        let big = exact_tail(&coin(), &x0(), 0.7, 1000).unwrap();
        assert_eq!(big.method, TailMethod::LogSpace);
        assert!(big.ln_strict.unwrap() / 1000.0 < -KL_07);
    }

    #[test]
    fn exact_tail_rejects_windows() {
        let w = FiniteSubset::zd_box(&[0..2]);
        let phi = Observable::new(w, 2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(exact_tail(&coin(), &phi, 0.5, 5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn monte_carlo_examples() {
        let f = FiniteSubset::zd_box(&[0..10]);
        let mc = monte_carlo_tail(&coin(), &x0(), 0.7, &f, 100_000, 7).unwrap();
        assert!((mc.strict.estimate - 0.0546875).abs() < 0.0015);
        assert!(mc.strict.lower < 0.0546875 && 0.0546875 < mc.strict.upper);
        let again = monte_carlo_tail(&coin(), &x0(), 0.7, &f, 100_000, 7).unwrap();
        assert_eq!(mc.strict, again.strict);
        let never = monte_carlo_tail(&coin(), &x0(), 1.0, &f, 1000, 7).unwrap();
        assert_eq!(never.strict.estimate, 0.0);
        assert!(never.strict.lower == 0.0 && never.strict.upper > 0.0);
    }

    #[test]
    fn kl_examples() {
        let s = kl_rate(&[0.5, 0.5], &[0.0, 1.0], 0.7).unwrap();
        assert!((s.value - KL_07).abs() < 1e-8);
        assert_eq!(kl_rate(&[0.5, 0.5], &[0.0, 1.0], 0.5).unwrap().value, 0.0);
        assert!((kl_rate(&[0.5, 0.5], &[0.0, 1.0], 1.0).unwrap().value - 2f64.ln()).abs() < 1e-12);
        assert!(matches!(kl_rate(&[0.5, 0.5], &[0.0, 1.0], 1.1), Err(Error::Infeasible { .. })));
        assert!(matches!(kl_rate(&[1.0, 0.0], &[0.0, 1.0], 0.5), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn bound_examples() {
        let psi = canonical_potential(&coin()).unwrap().psi;
        for v in [
            thm1_lower_bound(&coin(), &x0(), 0.7).unwrap().value,
            thm2_upper_bound(&coin(), &psi, &x0(), 0.7).unwrap().value,
            thm3_lower_bound(&coin(), &psi, &x0(), 0.7).unwrap().value,
        ] {
            assert!((v + KL_07).abs() < 1e-6, "{v}");
        }
        assert_eq!(thm1_lower_bound(&coin(), &x0(), 0.3).unwrap().value, 0.0);
        let mu = Bernoulli::new(vec![0.2, 0.8]).unwrap();
        let want = -(0.9 * (9.0f64 / 8.0).ln() + 0.1 * 0.5f64.ln());
        assert!((thm1_lower_bound(&mu, &x0(), 0.9).unwrap().value - want).abs() < 1e-6);
        let psi8 = canonical_potential(&mu).unwrap().psi;
        assert!((thm2_upper_bound(&mu, &psi8, &x0(), 0.9).unwrap().value - want).abs() < 1e-6);
        let zero = Observable::identity_coordinate(z1(), vec![0.0, 0.0, 0.0]).unwrap();
        let three = Bernoulli::uniform(3).unwrap();
        let phi3 = Observable::identity_coordinate(z1(), vec![0.0, 1.0, 2.0]).unwrap();
        let v = thm3_lower_bound(&three, &zero, &phi3, -1.0).unwrap().value;
        assert!((v - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn canonical_examples() {
        let c = canonical_potential(&coin()).unwrap();
        assert_eq!(c.psi.identity_values().unwrap(), &[2f64.ln(), 2f64.ln()]);
        assert!(c.certificate.holds);
        let skew = canonical_potential(&Bernoulli::new(vec![0.8, 0.2]).unwrap()).unwrap();
        let v = skew.psi.identity_values().unwrap();
        assert!((v[0] - 0.2231).abs() < 1e-4 && (v[1] - 1.6094).abs() < 1e-4);
        assert_eq!(skew.certificate.max_window, 12);
        assert_eq!(skew.certificate.patterns_checked, (1..=12).map(|n| 1u64 << n).sum::<u64>());
        assert!(skew.certificate.holds);
        assert!(matches!(
            canonical_potential(&Bernoulli::new(vec![1.0, 0.0]).unwrap()),
            Err(Error::ZeroProbability(1))
        ));
    }

    fn pat(bits: &[u8]) -> Pattern {
        Pattern::from_symbols(&FiniteSubset::zd_box(&[0..bits.len() as i64]), bits).unwrap()
    }

    #[test]
    fn gibbs_examples() {
        let zero = Observable::identity_coordinate(z1(), vec![0.0, 0.0]).unwrap();
        let f1 = FiniteSubset::zd_box(&[0..1]);
        let g = gibbs_measure(vec![pat(&[0]), pat(&[1])], &zero, &f1).unwrap();
        assert!((g.log_partition - 2f64.ln()).abs() < 1e-15);
        assert!(z_identity_check(&g, &f1).unwrap() < 1e-15);

        let psi = Observable::identity_coordinate(z1(), vec![0.0, 2f64.ln()]).unwrap();
        let f2 = FiniteSubset::zd_box(&[0..2]);
        let g = gibbs_measure(vec![pat(&[0, 0]), pat(&[0, 1]), pat(&[1, 0])], &psi, &f2).unwrap();
        assert!((g.log_partition - 2f64.ln()).abs() < 1e-15);
        for (w, want) in g.weights.iter().zip([0.5, 0.25, 0.25]) {
            assert!((w - want).abs() < 1e-15);
        }
        assert!(z_identity_check(&g, &f2).unwrap() <= 1e-10);

        assert!(matches!(
            gibbs_measure(vec![pat(&[0, 1]), pat(&[0, 1])], &psi, &f2),
            Err(Error::DuplicateCell(0, 1))
        ));
    }

    #[test]
    fn rate_report_example() {
        let psi = canonical_potential(&coin()).unwrap().psi;
        let seq = FolnerSequence::boxes(z1());
        let ns: Vec<u64> = (1..=24).collect();
        let r = rate_report(&coin(), &x0(), &psi, 0.7, &seq, &ns, 0, None).unwrap();
        for b in [r.thm1_lower, r.thm2_upper, r.thm3_lower] {
            assert!((b + KL_07).abs() < 1e-6);
        }
        assert_eq!(r.row(10).unwrap().exact_strict, Some(rat(56, 1024)));
        let e24 = r.row(24).unwrap().exponent_strict.unwrap();
        assert!((e24 - (-0.1435)).abs() < 1e-4, "{e24}");
        assert!(e24.abs() < r.row(10).unwrap().exponent_strict.unwrap().abs());
        assert!(r.to_csv().starts_with("n,size,method"));

        let low = rate_report(&coin(), &x0(), &psi, 0.3, &seq, &[5, 24], 0, None).unwrap();
        assert_eq!((low.thm1_lower, low.thm2_upper), (0.0, 0.0));
        let (e5, e24) = (low.row(5).unwrap().exponent_strict.unwrap(), low.row(24).unwrap().exponent_strict.unwrap());
        assert!(e24 > -0.01 && e24.abs() < e5.abs());
    }

    #[test]
    fn tail_window_mean_needs_longer_ranges() {
        let psi = canonical_potential(&coin()).unwrap().psi;
        let seq = FolnerSequence::boxes(z1());
        let mean = |top: u64| {
            let ns: Vec<u64> = (1..=top).collect();
            rate_report(&coin(), &x0(), &psi, 0.7, &seq, &ns, 0, None).unwrap().tail_mean.unwrap()
        };
        // Over n ≤ 24 the last third still sits about 0.085 below the bound.
        assert!(mean(24) < -KL_07 - 0.05);
        for top in [60, 120, 300] {
            assert!(mean(top) > -KL_07 - 0.05, "n ≤ {top}: {}", mean(top));
        }
    }

    #[test]
    fn thm3_degenerate_example() {
        let seq = FolnerSequence::boxes(z1());
        let mut cfg = Thm3Config::new(coin(), ProductMeasureFamily::single(coin()), 0.4, seq.clone(), 10, 3).unwrap();
        cfg.tiles = Some(TileFamily::new(vec![FiniteSubset::zd_box(&[0..5])]).unwrap());
        let r = thm3_construction_demo(&cfg).unwrap();
        assert_eq!(r.tiling.tiles[0].centers, vec!["0", "5"]);
        assert!(r.q_real >= 2 && r.all_in_v && r.cylinders_disjoint);
        assert_eq!(r.tail_bound_consistent, Some(true));

        cfg.tiles = Some(TileFamily::new(vec![FiniteSubset::zd_box(&[0..20])]).unwrap());
        let r = thm3_construction_demo(&cfg).unwrap();
        assert!(r.vacuous);
        assert_eq!(r.q_real, 1);
    }

    #[test]
    fn thm3_biased_example() {
        let seq = FolnerSequence::boxes(z1());
        let lam = Bernoulli::new(vec![0.1, 0.9]).unwrap();
        let cfg = Thm3Config::new(coin(), ProductMeasureFamily::single(lam), 0.6, seq, 100, 11).unwrap();
        let r = thm3_construction_demo(&cfg).unwrap();
        assert!(r.q_real >= 2);
        assert!(r.all_in_v && r.cylinders_disjoint);
        assert!(r.min_average.unwrap() > 0.6);
        assert_eq!(r.core_sizes, vec![10; 10]);
        assert_eq!(r.tail_bound_consistent, Some(true));
        let again = thm3_construction_demo(&cfg).unwrap();
        assert_eq!(r.points, again.points);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn gibbs_identity_is_exact(
                weights in proptest::collection::vec(0.0f64..5.0, 2..4),
                picks in proptest::collection::btree_set(0u32..64, 1..20),
            ) {
                let q = weights.len();
                let psi = Observable::identity_coordinate(z1(), weights).unwrap();
                let f = FiniteSubset::zd_box(&[0..3]);
                let support: Vec<Pattern> = picks
                    .iter()
                    .filter(|&&i| (i as usize) < q.pow(3))
                    .map(|&i| {
                        let i = i as usize;
                        pat(&[(i % q) as u8, (i / q % q) as u8, (i / q / q) as u8])
                    })
                    .collect();
                prop_assume!(!support.is_empty());
                let g = gibbs_measure(support, &psi, &f).unwrap();
                prop_assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(z_identity_check(&g, &f).unwrap() <= 1e-10);
            }

            #[test]
            fn three_bounds_collapse_for_canonical_potential(p in 0.05f64..0.95, c in 0.0f64..0.99) {
                let p = (p * 1000.0).round() / 1000.0;
                let mu = Bernoulli::new(vec![1.0 - p, p]).unwrap();
                let psi = Observable::identity_coordinate(z1(), mu.probs().iter().map(|x| -x.ln()).collect()).unwrap();
                let kl = kl_rate(mu.probs(), &[0.0, 1.0], c).unwrap().value;
                let b1 = thm1_lower_bound(&mu, &x0(), c).unwrap().value;
                let b2 = thm2_upper_bound(&mu, &psi, &x0(), c).unwrap().value;
                let b3 = thm3_lower_bound(&mu, &psi, &x0(), c).unwrap().value;
                for b in [b1, b2, b3] {
                    prop_assert!((b + kl).abs() < 1e-6, "{b} vs {kl}");
                }
            }

            #[test]
            fn exact_tail_matches_enumeration(n in 1usize..9, c in -0.5f64..1.5, p in 0.1f64..0.9) {
                let p = (p * 100.0).round() / 100.0;
                let mu = Bernoulli::new(vec![1.0 - p, p]).unwrap();
                let t = exact_tail(&mu, &x0(), c, n).unwrap();
                let f = FiniteSubset::zd_box(&[0..n as i64]);
                let measure = MeasureModel::Bernoulli(mu.clone());
                let cn = exact::rat(c) * BigRational::from_integer(BigInt::from(n));
                let (mut s, mut w) = (BigRational::zero(), BigRational::zero());
                for x in all_patterns(&f, 2).unwrap() {
                    let sum = shift::birkhoff_sum_exact(&x0(), &x, &f).unwrap();
                    let m = shift::cylinder_measure_exact(&measure, &x).unwrap();
                    if sum > cn { s += &m; }
                    if sum >= cn { w += &m; }
                }
                prop_assert_eq!(t.exact_strict.unwrap(), s);
                prop_assert_eq!(t.exact_weak.unwrap(), w);
            }
        }
    }
}
