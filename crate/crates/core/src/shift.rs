//! Shift spaces over the built-in groups.
//!
//! A configuration `x ∈ A^G` is only ever handled through a finite [`Pattern`]
//! together with the window it is defined on; every operation states the
//! window it needs and fails with [`Error::InsufficientWindow`] otherwise.
//!
//! The action is `(g·x)_h = x_{hg}`, which is a left action and satisfies
//! `S_Fφ(g·x) = S_{Fg}φ(x)`. The metric is `d(x,y) = 2^{-r}` where `r` is the
//! least word length at which the configurations differ, so
//! `d(g·x, g·y) < ε` for all `g ∈ F` exactly when `x` and `y` agree on
//! `B_m·F` with `m` the largest integer such that `2^{-m} ≥ ε`.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact;
use crate::group::{FiniteSubset, GroupElement, GroupModel};

pub type Symbol = u8;

/// Largest number of patterns any routine in this crate will enumerate.
pub const ENUMERATION_BUDGET: u128 = 1 << 24;

/// A finite configuration: a total map from a window to the alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    model: GroupModel,
    cells: BTreeMap<GroupElement, Symbol>,
}

impl Pattern {
    pub fn new(model: GroupModel, cells: impl IntoIterator<Item = (GroupElement, Symbol)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (g, a) in cells {
            model.check(&g)?;
            if let Some(old) = map.insert(g.clone(), a) {
                if old != a {
                    return Err(Error::InvalidParameter(format!("cell {g} assigned twice")));
                }
            }
        }
        Ok(Pattern { model, cells: map })
    }

    pub fn from_fn(window: &FiniteSubset, mut f: impl FnMut(&GroupElement) -> Symbol) -> Self {
        Pattern {
            model: window.model(),
            cells: window.iter().map(|g| (g.clone(), f(g))).collect(),
        }
    }

    pub fn constant(window: &FiniteSubset, a: Symbol) -> Self {
        Self::from_fn(window, |_| a)
    }

    /// Pattern on `window` with symbols listed in the window's sorted order.
    pub fn from_symbols(window: &FiniteSubset, symbols: &[Symbol]) -> Result<Self> {
        if symbols.len() != window.len() {
            return Err(Error::InvalidParameter(format!(
                "{} symbols for a window of {} cells",
                symbols.len(),
                window.len()
            )));
        }
        Ok(Pattern {
            model: window.model(),
            cells: window.iter().cloned().zip(symbols.iter().copied()).collect(),
        })
    }

    pub fn model(&self) -> GroupModel {
        self.model
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, g: &GroupElement) -> Option<Symbol> {
        self.cells.get(g).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GroupElement, Symbol)> {
        self.cells.iter().map(|(g, a)| (g, *a))
    }

    pub fn window(&self) -> FiniteSubset {
        FiniteSubset::from_valid(self.model, self.cells.keys().cloned().collect())
    }

    pub fn covers(&self, w: &FiniteSubset) -> bool {
        w.iter().all(|g| self.cells.contains_key(g))
    }

    /// Symbols on `w` in the window's sorted order.
    pub fn symbols_on(&self, w: &FiniteSubset) -> Result<Vec<Symbol>> {
        w.iter()
            .map(|g| {
                self.get(g)
                    .ok_or_else(|| Error::InsufficientWindow(format!("pattern undefined at {g}")))
            })
            .collect()
    }

    pub fn restrict(&self, w: &FiniteSubset) -> Result<Pattern> {
        let symbols = self.symbols_on(w)?;
        Pattern::from_symbols(w, &symbols)
    }

    /// `g·x`, defined on `W·g⁻¹` when `x` is defined on `W`.
    pub fn shift(&self, g: &GroupElement) -> Result<Pattern> {
        let g_inv = self.model.inv(g)?;
        let mut cells = BTreeMap::new();
        for (w, a) in &self.cells {
            cells.insert(self.model.mul(w, &g_inv)?, *a);
        }
        Ok(Pattern {
            model: self.model,
            cells,
        })
    }

    /// Line format: `coords symbol` per cell, `#` comments.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (g, a) in &self.cells {
            out.push_str(&format!("{g} {a}\n"));
        }
        out
    }

    pub fn parse(model: GroupModel, text: &str) -> Result<Pattern> {
        let mut cells = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: String| Error::Parse { line: i + 1, message: m };
            let (coords, sym) = line
                .rsplit_once(char::is_whitespace)
                .ok_or_else(|| bad("expected `coords symbol`".into()))?;
            let g = model.parse_element(coords).map_err(|e| bad(e.to_string()))?;
            let a = sym.parse::<Symbol>().map_err(|e| bad(e.to_string()))?;
            cells.push((g, a));
        }
        Pattern::new(model, cells)
    }
}

/// Encodes symbols in sorted-window order as a mixed-radix integer (first
/// cell most significant).
fn pattern_index(symbols: &[Symbol], q: usize) -> usize {
    symbols.iter().fold(0, |acc, &a| acc * q + a as usize)
}

fn symbols_of_index(mut idx: usize, q: usize, len: usize) -> Vec<Symbol> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = (idx % q) as Symbol;
        idx /= q;
    }
    out
}

fn check_budget(q: usize, cells: usize) -> Result<usize> {
    let count = (q as u128).checked_pow(cells as u32).unwrap_or(u128::MAX);
    if count > ENUMERATION_BUDGET {
        return Err(Error::budget(format!("{q}^{cells}"), ENUMERATION_BUDGET));
    }
    Ok(count as usize)
}

/// All patterns on `w` over an alphabet of size `q`, in mixed-radix order.
pub fn all_patterns(w: &FiniteSubset, q: usize) -> Result<impl Iterator<Item = Pattern> + '_> {
    let count = check_budget(q, w.len())?;
    Ok((0..count).map(move |i| {
        Pattern::from_symbols(w, &symbols_of_index(i, q, w.len())).expect("length matches")
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub enum ShiftKind {
    Full,
    /// Subshift of finite type over `Z` or `Z²` given by forbidden patterns.
    Sft {
        forbidden: Vec<Pattern>,
        safe_symbol: Option<Symbol>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShiftSystem {
    model: GroupModel,
    alphabet: usize,
    kind: ShiftKind,
}

impl ShiftSystem {
    pub fn full(model: GroupModel, alphabet: usize) -> Result<Self> {
        check_alphabet(alphabet)?;
        Ok(ShiftSystem {
            model,
            alphabet,
            kind: ShiftKind::Full,
        })
    }

    pub fn sft(
        model: GroupModel,
        alphabet: usize,
        forbidden: Vec<Pattern>,
        safe_symbol: Option<Symbol>,
    ) -> Result<Self> {
        check_alphabet(alphabet)?;
        if !matches!(model, GroupModel::Zd(1) | GroupModel::Zd(2)) {
            return Err(Error::Unsupported(format!("subshifts of finite type over {model}")));
        }
        for p in &forbidden {
            if p.model() != model {
                return Err(Error::ModelMismatch {
                    expected: model.to_string(),
                    found: p.model().to_string(),
                });
            }
            if p.is_empty() {
                return Err(Error::EmptySet("forbidden pattern"));
            }
            if p.iter().any(|(_, a)| a as usize >= alphabet) {
                return Err(Error::InvalidParameter("forbidden pattern uses a symbol outside the alphabet".into()));
            }
            if let Some(s) = safe_symbol {
                if p.iter().any(|(_, a)| a == s) {
                    return Err(Error::InvalidParameter(format!(
                        "safe symbol {s} appears in a forbidden pattern"
                    )));
                }
            }
        }
        if safe_symbol.is_some_and(|s| s as usize >= alphabet) {
            return Err(Error::InvalidParameter("safe symbol outside the alphabet".into()));
        }
        Ok(ShiftSystem {
            model,
            alphabet,
            kind: ShiftKind::Sft {
                forbidden,
                safe_symbol,
            },
        })
    }

    /// Golden-mean shift on `Z`: binary sequences without two adjacent 1s.
    pub fn golden_mean() -> Self {
        let m = GroupModel::Zd(1);
        let p = Pattern::new(m, [(GroupElement::zd(&[0]), 1), (GroupElement::zd(&[1]), 1)]).expect("valid");
        ShiftSystem::sft(m, 2, vec![p], Some(0)).expect("valid")
    }

    pub fn model(&self) -> GroupModel {
        self.model
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn kind(&self) -> &ShiftKind {
        &self.kind
    }

    /// Whether no forbidden pattern occurs inside the pattern's window.
    pub fn is_admissible(&self, x: &Pattern) -> Result<bool> {
        if x.iter().any(|(_, a)| a as usize >= self.alphabet) {
            return Ok(false);
        }
        let ShiftKind::Sft { forbidden, .. } = &self.kind else {
            return Ok(true);
        };
        for p in forbidden {
            let (anchor, _) = p.iter().next().expect("nonempty");
            let anchor_inv = self.model.inv(anchor)?;
            for (w, _) in x.iter() {
                // Abelian: placement t with anchor + t = w.
                let t = self.model.mul(w, &anchor_inv)?;
                let mut occurs = true;
                for (h, a) in p.iter() {
                    if x.get(&self.model.mul(h, &t)?) != Some(a) {
                        occurs = false;
                        break;
                    }
                }
                if occurs {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Number of admissible patterns on `w`.
    ///
    /// Full shifts use `q^{|w|}`. For an SFT over `Z` with `w` an interval the
    /// count comes from the transfer matrix on words of length `span-1`;
    /// anything else is enumerated within [`ENUMERATION_BUDGET`].
    pub fn count_admissible(&self, w: &FiniteSubset) -> Result<BigUint> {
        match &self.kind {
            ShiftKind::Full => Ok(BigUint::from(self.alphabet).pow(w.len() as u32)),
            ShiftKind::Sft { forbidden, .. } => {
                if let (GroupModel::Zd(1), Some(n)) = (self.model, interval_len(w)) {
                    let span = forbidden.iter().map(interval_span).max().unwrap_or(1);
                    if n >= span {
                        return self.transfer_count(span, n);
                    }
                }
                let mut count = BigUint::zero();
                for x in all_patterns(w, self.alphabet)? {
                    if self.is_admissible(&x)? {
                        count += 1u32;
                    }
                }
                Ok(count)
            }
        }
    }

    fn transfer_count(&self, span: usize, n: usize) -> Result<BigUint> {
        let q = self.alphabet;
        let state_len = span - 1;
        let states = check_budget(q, state_len)?;
        check_budget(q, span)?;
        let word = |symbols: &[Symbol]| {
            let window = FiniteSubset::zd_box(&[0..symbols.len() as i64]);
            Pattern::from_symbols(&window, symbols).expect("length matches")
        };
        let mut v: Vec<BigUint> = (0..states)
            .map(|s| {
                let ok = self.is_admissible(&word(&symbols_of_index(s, q, state_len)))?;
                Ok(if ok { BigUint::one() } else { BigUint::zero() })
            })
            .collect::<Result<_>>()?;
        // edges[s] = successor states t such that the span-word s·a is admissible.
        let mut edges: Vec<Vec<usize>> = vec![Vec::new(); states];
        for (s, out) in edges.iter_mut().enumerate() {
            let prefix = symbols_of_index(s, q, state_len);
            for a in 0..q {
                let mut full = prefix.clone();
                full.push(a as Symbol);
                if self.is_admissible(&word(&full))? {
                    out.push(pattern_index(&full[1..], q));
                }
            }
        }
        for _ in state_len..n {
            let mut next = vec![BigUint::zero(); states];
            for (s, out) in edges.iter().enumerate() {
                if v[s].is_zero() {
                    continue;
                }
                for &t in out {
                    next[t] += &v[s];
                }
            }
            v = next;
        }
        Ok(v.into_iter().sum())
    }
}

fn check_alphabet(q: usize) -> Result<()> {
    if !(2..=Symbol::MAX as usize + 1).contains(&q) {
        return Err(Error::InvalidParameter(format!("alphabet size {q} outside [2, 256]")));
    }
    Ok(())
}

/// Length of `w` if it is an integer interval in `Z`.
fn interval_len(w: &FiniteSubset) -> Option<usize> {
    let coord = |g: &GroupElement| match g {
        GroupElement::Zd(v) if v.len() == 1 => Some(v[0]),
        _ => None,
    };
    let lo = coord(w.first()?)?;
    let hi = coord(w.elements().last()?)?;
    ((hi - lo + 1) as usize == w.len()).then_some(w.len())
}

fn interval_span(p: &Pattern) -> usize {
    let w = p.window();
    match (w.first(), w.elements().last()) {
        (Some(GroupElement::Zd(a)), Some(GroupElement::Zd(b))) => (b[0] - a[0] + 1) as usize,
        _ => 1,
    }
}

/// A product measure with exact rational marginals.
#[derive(Clone, Debug, PartialEq)]
pub struct Bernoulli {
    p: Vec<f64>,
    exact: Vec<BigRational>,
}

impl Bernoulli {
    /// Accepts a probability vector whose entries sum to 1 within `1e-12`;
    /// the exact marginals are the decimal readings renormalized to sum to 1.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_alphabet(p.len())?;
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidParameter(format!("probabilities must be nonnegative: {p:?}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}, not 1")));
        }
        let raw: Vec<BigRational> = p.iter().map(|&x| exact::rat(x)).collect();
        let sum: BigRational = raw.iter().sum();
        let exact: Vec<BigRational> = raw.into_iter().map(|r| r / &sum).collect();
        let p = exact.iter().map(exact::to_f64).collect();
        Ok(Bernoulli { p, exact })
    }

    pub fn uniform(q: usize) -> Result<Self> {
        check_alphabet(q)?;
        let exact = vec![BigRational::new(BigInt::one(), BigInt::from(q)); q];
        Ok(Bernoulli {
            p: vec![1.0 / q as f64; q],
            exact,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn exact_probs(&self) -> &[BigRational] {
        &self.exact
    }

    pub fn alphabet(&self) -> usize {
        self.p.len()
    }

    /// Per-site Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
    }

    pub fn has_full_support(&self) -> bool {
        self.exact.iter().all(|r| !r.is_zero())
    }
}

/// Uniform distribution over a list of sampled patterns on a common window.
#[derive(Clone, Debug, PartialEq)]
pub struct Empirical {
    alphabet: usize,
    window: FiniteSubset,
    samples: Vec<Pattern>,
}

impl Empirical {
    pub fn new(alphabet: usize, window: FiniteSubset, samples: Vec<Pattern>) -> Result<Self> {
        check_alphabet(alphabet)?;
        if samples.is_empty() {
            return Err(Error::EmptySet("empirical sample list"));
        }
        let samples = samples
            .iter()
            .map(|s| s.restrict(&window))
            .collect::<Result<Vec<_>>>()?;
        Ok(Empirical {
            alphabet,
            window,
            samples,
        })
    }

    pub fn window(&self) -> &FiniteSubset {
        &self.window
    }

    pub fn samples(&self) -> &[Pattern] {
        &self.samples
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureModel {
    Bernoulli(Bernoulli),
    Empirical(Empirical),
}

impl MeasureModel {
    pub fn bernoulli(p: Vec<f64>) -> Result<Self> {
        Ok(MeasureModel::Bernoulli(Bernoulli::new(p)?))
    }

    pub fn alphabet(&self) -> usize {
        match self {
            MeasureModel::Bernoulli(b) => b.alphabet(),
            MeasureModel::Empirical(e) => e.alphabet,
        }
    }

    pub fn as_bernoulli(&self) -> Option<&Bernoulli> {
        match self {
            MeasureModel::Bernoulli(b) => Some(b),
            MeasureModel::Empirical(_) => None,
        }
    }
}

/// Exact probability of the cylinder `[p]`.
pub fn cylinder_measure_exact(mu: &MeasureModel, p: &Pattern) -> Result<BigRational> {
    match mu {
        MeasureModel::Bernoulli(b) => {
            let mut r = BigRational::one();
            for (_, a) in p.iter() {
                let pa = b
                    .exact
                    .get(a as usize)
                    .ok_or_else(|| Error::InvalidParameter(format!("symbol {a} outside the alphabet")))?;
                r *= pa;
            }
            Ok(r)
        }
        MeasureModel::Empirical(e) => {
            let w = p.window();
            if !w.is_subset(&e.window) {
                return Err(Error::InsufficientWindow(
                    "cylinder window exceeds the empirical sample window".into(),
                ));
            }
            let hits = e
                .samples
                .iter()
                .filter(|s| p.iter().all(|(g, a)| s.get(g) == Some(a)))
                .count();
            Ok(BigRational::new(BigInt::from(hits), BigInt::from(e.samples.len())))
        }
    }
}

pub fn cylinder_measure(mu: &MeasureModel, p: &Pattern) -> Result<f64> {
    Ok(exact::to_f64(&cylinder_measure_exact(mu, p)?))
}

pub(crate) fn draw(rng: &mut ChaCha8Rng, p: &[f64]) -> Symbol {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, &pa) in p.iter().enumerate() {
        acc += pa;
        if u < acc && pa > 0.0 {
            return a as Symbol;
        }
    }
    // Rounding left u above the accumulated mass: take the last supported symbol.
    p.iter().rposition(|&pa| pa > 0.0).unwrap_or(0) as Symbol
}

/// Random pattern on `w`, deterministic in `(seed, stream)`.
pub fn sample_pattern_stream(mu: &MeasureModel, w: &FiniteSubset, seed: u64, stream: u64) -> Result<Pattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    match mu {
        MeasureModel::Bernoulli(b) => Ok(Pattern::from_fn(w, |_| draw(&mut rng, &b.p))),
        MeasureModel::Empirical(e) => {
            let i = rng.random_range(0..e.samples.len());
            e.samples[i].restrict(w)
        }
    }
}

pub fn sample_pattern(mu: &MeasureModel, w: &FiniteSubset, seed: u64) -> Result<Pattern> {
    sample_pattern_stream(mu, w, seed, 0)
}

/// A continuous function with finite dependence window `W₀ ∋ e`, stored as a
/// table over the `W₀`-patterns.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    window: FiniteSubset,
    alphabet: usize,
    values: Vec<f64>,
}

impl Observable {
    pub fn new(window: FiniteSubset, alphabet: usize, values: Vec<f64>) -> Result<Self> {
        check_alphabet(alphabet)?;
        if !window.contains(&window.model().identity()) {
            return Err(Error::InvalidParameter("observable window must contain the identity".into()));
        }
        let count = check_budget(alphabet, window.len())?;
        if values.len() != count {
            return Err(Error::InvalidParameter(format!(
                "observable table has {} entries, expected {count}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("observable values must be finite".into()));
        }
        Ok(Observable {
            window,
            alphabet,
            values,
        })
    }

    /// `φ(x) = v[x_e]`.
    pub fn identity_coordinate(model: GroupModel, values: Vec<f64>) -> Result<Self> {
        let alphabet = values.len();
        Self::new(FiniteSubset::identity(model), alphabet, values)
    }

    pub fn from_fn(window: FiniteSubset, alphabet: usize, f: impl Fn(&[Symbol]) -> f64) -> Result<Self> {
        let count = check_budget(alphabet, window.len())?;
        let values = (0..count)
            .map(|i| f(&symbols_of_index(i, alphabet, window.len())))
            .collect();
        Self::new(window, alphabet, values)
    }

    pub fn window(&self) -> &FiniteSubset {
        &self.window
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// The value table, indexed by `W₀`-pattern (first cell most significant).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-symbol values when `W₀ = {e}`.
    pub fn identity_values(&self) -> Option<&[f64]> {
        (self.window.len() == 1).then_some(&self.values[..])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Window `W₀·F` on which `x` must be defined to evaluate `S_Fφ(x)`.
    pub fn required_window(&self, f: &FiniteSubset) -> Result<FiniteSubset> {
        self.window.product(f)
    }

    pub(crate) fn index_at(&self, x: &Pattern, g: &GroupElement) -> Result<usize> {
        let model = self.window.model();
        let mut idx = 0;
        for w in &self.window {
            let cell = model.mul(w, g)?;
            let a = x
                .get(&cell)
                .ok_or_else(|| Error::InsufficientWindow(format!("pattern undefined at {cell}")))?;
            if a as usize >= self.alphabet {
                return Err(Error::InvalidParameter(format!("symbol {a} outside the alphabet")));
            }
            idx = idx * self.alphabet + a as usize;
        }
        Ok(idx)
    }

    /// `φ(g·x)`.
    pub fn eval_at(&self, x: &Pattern, g: &GroupElement) -> Result<f64> {
        Ok(self.values[self.index_at(x, g)?])
    }
}

/// `S_Fφ(x) = Σ_{g∈F} φ(g·x)`.
pub fn birkhoff_sum(phi: &Observable, x: &Pattern, f: &FiniteSubset) -> Result<f64> {
    f.iter().map(|g| phi.eval_at(x, g)).sum()
}

/// `S_Fφ(x)` in exact arithmetic on the decimal readings of the table.
pub fn birkhoff_sum_exact(phi: &Observable, x: &Pattern, f: &FiniteSubset) -> Result<BigRational> {
    let mut counts = vec![0u64; phi.values.len()];
    for g in f {
        counts[phi.index_at(x, g)?] += 1;
    }
    Ok(counts
        .iter()
        .zip(&phi.values)
        .filter(|(c, _)| **c > 0)
        .map(|(c, v)| exact::rat(*v) * BigRational::from_integer(BigInt::from(*c)))
        .sum())
}

pub fn birkhoff_avg(phi: &Observable, x: &Pattern, f: &FiniteSubset) -> Result<f64> {
    if f.is_empty() {
        return Err(Error::EmptySet("F"));
    }
    Ok(birkhoff_sum(phi, x, f)? / f.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Distance {
    /// First disagreement at word length `radius`: `d = 2^{-radius}`.
    Exact { value: f64, radius: u64 },
    /// Agreement on the whole resolved ball `B_radius`: `d ≤ 2^{-(radius+1)}`.
    AtMost { bound: f64, radius: u64 },
}

impl Distance {
    /// The exact distance, or the upper bound when unresolved.
    pub fn value(&self) -> f64 {
        match self {
            Distance::Exact { value, .. } => *value,
            Distance::AtMost { bound, .. } => *bound,
        }
    }
}

/// `d(x,y) = 2^{-min{|g| : x_g ≠ y_g}}` evaluated on the common window.
pub fn metric_dist(x: &Pattern, y: &Pattern) -> Result<Distance> {
    let model = x.model();
    if y.model() != model {
        return Err(Error::ModelMismatch {
            expected: model.to_string(),
            found: y.model().to_string(),
        });
    }
    let e = model.identity();
    if x.get(&e).is_none() || y.get(&e).is_none() {
        return Err(Error::InsufficientWindow("the identity is not in the common window".into()));
    }
    for (r, sphere) in model.spheres().enumerate() {
        let mut complete = true;
        for g in &sphere {
            match (x.get(g), y.get(g)) {
                (Some(a), Some(b)) if a != b => {
                    return Ok(Distance::Exact {
                        value: 2f64.powi(-(r as i32)),
                        radius: r as u64,
                    })
                }
                (Some(_), Some(_)) => {}
                _ => complete = false,
            }
        }
        if !complete {
            return Ok(Distance::AtMost {
                bound: 2f64.powi(-(r as i32)),
                radius: r as u64 - 1,
            });
        }
    }
    unreachable!("finite windows cannot contain every sphere")
}

/// The largest `m ≥ 0` with `2^{-m} ≥ ε`, decided exactly.
pub fn bowen_radius(epsilon: f64) -> Result<u64> {
    let eps = exact::decimal_rational(epsilon)
        .filter(|e| *e > BigRational::zero() && *e <= BigRational::one())
        .ok_or_else(|| Error::InvalidParameter(format!("ε must lie in (0, 1], got {epsilon}")))?;
    let mut m = 0u64;
    let mut next = BigRational::new(BigInt::one(), BigInt::from(2));
    while next >= eps {
        m += 1;
        next /= BigInt::from(2);
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BowenWindow {
    pub f: FiniteSubset,
    pub epsilon: f64,
    pub radius: u64,
    /// `B_m·F`.
    pub window: FiniteSubset,
}

pub fn bowen_window(f: &FiniteSubset, epsilon: f64) -> Result<BowenWindow> {
    let radius = bowen_radius(epsilon)?;
    let window = if radius == 0 {
        f.clone()
    } else {
        f.model().ball(radius).product(f)?
    };
    Ok(BowenWindow {
        f: f.clone(),
        epsilon,
        radius,
        window,
    })
}

/// Whether `d(g·x, g·y) < ε` for every `g ∈ F`, evaluated directly from the
/// metric. Both patterns must resolve `B_m·g` for each `g`.
pub fn within_bowen_ball(x: &Pattern, y: &Pattern, f: &FiniteSubset, epsilon: f64) -> Result<bool> {
    let m = bowen_radius(epsilon)?;
    let eps = exact::rat(epsilon);
    let ball = f.model().ball(m);
    for g in f {
        let local = ball.translate_right(g)?;
        let gx = x.restrict(&local)?.shift(g)?;
        let gy = y.restrict(&local)?.shift(g)?;
        let d = metric_dist(&gx, &gy)?;
        let strictly_less = match d {
            Distance::Exact { radius, .. } => pow2_neg(radius) < eps,
            // Agreement on B_m gives d ≤ 2^{-(m+1)} < ε.
            Distance::AtMost { .. } => true,
        };
        if !strictly_less {
            return Ok(false);
        }
    }
    Ok(true)
}

fn pow2_neg(r: u64) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << r as usize)
}

#[derive(Clone, Debug, Serialize)]
pub struct PieceCertificate {
    pub piece: usize,
    pub cells_checked: usize,
    /// Largest `d(g·x_i, g·y)` over `g ∈ F_i` (exact value or resolved bound).
    pub max_distance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct Shadow {
    pub point: Pattern,
    pub radius: u64,
    pub certificates: Vec<PieceCertificate>,
}

impl Shadow {
    pub fn passed(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }
}

/// Constructive weak specification for full shifts and safe-symbol SFTs.
///
/// Each piece is `(x_i, F_i)`; `x_i` must be defined on `B_m·F_i`. The output
/// copies `x_i` onto `B_m·F_i`, fills the rest of `∪ F·F_i` with `fill` (full
/// shift) or the safe symbol (SFT), and certifies `d(g·x_i, g·y) ≤ ε` for all
/// `g ∈ F_i` through [`metric_dist`].
pub fn weak_spec_shadow(
    sys: &ShiftSystem,
    pieces: &[(Pattern, FiniteSubset)],
    thickening: &FiniteSubset,
    epsilon: f64,
    fill: Symbol,
) -> Result<Shadow> {
    let fill = match sys.kind() {
        ShiftKind::Full => fill,
        ShiftKind::Sft {
            safe_symbol: Some(s), ..
        } => *s,
        ShiftKind::Sft { safe_symbol: None, .. } => {
            return Err(Error::Unsupported("shadowing in an SFT without a safe symbol".into()))
        }
    };
    if fill as usize >= sys.alphabet() {
        return Err(Error::InvalidParameter(format!("fill symbol {fill} outside the alphabet")));
    }
    let radius = bowen_radius(epsilon)?;
    let ball = sys.model().ball(radius);
    let mut thick = Vec::with_capacity(pieces.len());
    let mut copies = Vec::with_capacity(pieces.len());
    for (_, fi) in pieces {
        thick.push(thickening.product(fi)?);
        copies.push(ball.product(fi)?);
    }
    for i in 0..pieces.len() {
        for j in i + 1..pieces.len() {
            if !thick[i].is_disjoint(&thick[j]) || !copies[i].is_disjoint(&copies[j]) {
                return Err(Error::ThickenedOverlap(i, j));
            }
        }
    }
    let mut cells: BTreeMap<GroupElement, Symbol> = BTreeMap::new();
    for t in &thick {
        for g in t {
            cells.insert(g.clone(), fill);
        }
    }
    for ((x, _), c) in pieces.iter().zip(&copies) {
        for g in c {
            let a = x
                .get(g)
                .ok_or_else(|| Error::InsufficientWindow(format!("piece undefined at {g}")))?;
            cells.insert(g.clone(), a);
        }
    }
    let point = Pattern {
        model: sys.model(),
        cells,
    };
    if !sys.is_admissible(&point)? {
        return Err(Error::Certificate {
            stage: "weak_spec_shadow".into(),
            detail: "shadow point contains a forbidden pattern".into(),
        });
    }
    let eps = exact::rat(epsilon);
    let mut certificates = Vec::with_capacity(pieces.len());
    for (i, (x, fi)) in pieces.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut passed = true;
        for g in fi {
            let local = ball.translate_right(g)?;
            let d = metric_dist(&x.restrict(&local)?.shift(g)?, &point.restrict(&local)?.shift(g)?)?;
            let r = match d {
                Distance::Exact { radius, .. } => radius,
                Distance::AtMost { radius, .. } => radius + 1,
            };
            passed &= pow2_neg(r) <= eps;
            worst = worst.max(d.value());
        }
        certificates.push(PieceCertificate {
            piece: i,
            cells_checked: fi.len(),
            max_distance: worst,
            passed,
        });
    }
    Ok(Shadow {
        point,
        radius,
        certificates,
    })
}
