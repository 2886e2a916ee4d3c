//! ε-quasi-tilings by right translates of finitely many shapes.
//!
//! A family `A_1, …, A_k` ε-quasi-tiles `A` with centers `C_1, …, C_k` when
//! `A_iC_i ⊆ A`, the translates `A_ic (c ∈ C_i)` are ε-disjoint, the blocks
//! `A_iC_i` are mutually disjoint and together cover at least `(1-ε)|A|`.
//! Construction and verification are kept apart: [`quasi_tile`] builds a
//! tiling greedily, [`verify_quasi_tiling`] re-derives every condition from
//! the sets alone, with ε-disjointness decided by a max-flow computation.

use std::collections::{HashMap, HashSet};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use petgraph::algo::dinics;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact;
use crate::group::{self, FiniteSubset, FolnerSequence, GroupElement, GroupModel};

/// `k` and `δ` with `(1-ε/2)^k < ε` and `6^k δ < ε/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct TileParameters {
    pub epsilon: BigRational,
    pub k: u32,
    pub delta: BigRational,
}

impl TileParameters {
    pub fn delta_f64(&self) -> f64 {
        exact::to_f64(&self.delta)
    }

    /// Both defining inequalities, evaluated exactly.
    pub fn satisfies_schedule(&self) -> bool {
        let six_k = num_traits::pow(BigInt::from(6), self.k as usize);
        let (dn, dd) = (self.delta.numer(), self.delta.denom());
        let (en, ed) = (self.epsilon.numer(), self.epsilon.denom());
        decays_below(&self.epsilon, self.k) && six_k * dn * ed * 2 < en * dd
    }
}

fn epsilon_rational(epsilon: f64, upper: &BigRational) -> Result<BigRational> {
    exact::decimal_rational(epsilon)
        .filter(|e| *e > BigRational::zero() && e <= upper)
        .ok_or_else(|| Error::InvalidParameter(format!("ε = {epsilon} outside (0, {upper}]")))
}

/// Smallest `k` with `(1-ε/2)^k < ε`; `δ = ε / (4·6^k)`, half the largest
/// value the strict bound `6^kδ < ε/2` would allow.
pub fn select_tile_parameters(epsilon: f64) -> Result<TileParameters> {
    let eps = epsilon_rational(epsilon, &BigRational::new(1.into(), 4.into()))?;
    let e = exact::to_f64(&eps);
    let guess = (e.ln() / (1.0 - e / 2.0).ln()).ceil().max(1.0) as u32;
    let mut k = guess;
    while k > 1 && decays_below(&eps, k - 1) {
        k -= 1;
    }
    while !decays_below(&eps, k) {
        k += 1;
    }
    Ok(parameters_for(eps, k))
}

/// `(1-ε/2)^k < ε` with `ε = p/q`, i.e. `q(2q-p)^k < p(2q)^k`.
fn decays_below(eps: &BigRational, k: u32) -> bool {
    let (p, q) = (eps.numer(), eps.denom());
    let two_q: BigInt = q * 2;
    q * num_traits::pow(&two_q - p, k as usize) < p * num_traits::pow(two_q, k as usize)
}

/// Parameters with a forced `k` (for degenerate and test schedules).
pub fn tile_parameters_with_k(epsilon: f64, k: u32) -> Result<TileParameters> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let eps = epsilon_rational(epsilon, &BigRational::one())?;
    Ok(parameters_for(eps, k))
}

fn parameters_for(eps: BigRational, k: u32) -> TileParameters {
    let denom = BigRational::from_integer(BigInt::from(4) * num_traits::pow(BigInt::from(6), k as usize));
    let delta = &eps / denom;
    TileParameters { epsilon: eps, k, delta }
}

/// The two conditions linking consecutive tile indices `n < n'`:
/// `|B(F_{n'}, F_nF_n⁻¹)| < δ|F_{n'}|` and `|F_n| < δ|F_{n'}|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairCertificate {
    pub from: String,
    pub to: String,
    pub boundary: String,
    pub from_size: String,
    pub to_size: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TileIndices {
    pub indices: Vec<BigUint>,
    pub params: TileParameters,
    pub pairs: Vec<(BigUint, BigUint, BigUint)>,
}

impl TileIndices {
    /// Indices as machine integers when they all fit.
    pub fn as_u64(&self) -> Option<Vec<u64>> {
        self.indices.iter().map(|n| n.to_u64()).collect()
    }

    /// Re-checks each recorded `(boundary, from_size, to_size)` triple
    /// against `δ` in exact arithmetic.
    pub fn recheck(&self) -> bool {
        let num = self.params.delta.numer().to_biguint().expect("positive");
        let den = self.params.delta.denom().to_biguint().expect("positive");
        self.indices.windows(2).all(|w| w[0] < w[1])
            && self.pairs.len() + 1 == self.indices.len()
            && self.pairs.iter().all(|(b, from, to)| {
                let rhs = &num * to;
                b * &den < rhs && from * &den < rhs
            })
    }

    pub fn certificates(&self) -> Vec<PairCertificate> {
        self.indices
            .windows(2)
            .zip(&self.pairs)
            .map(|(w, (b, from, to))| PairCertificate {
                from: w[0].to_string(),
                to: w[1].to_string(),
                boundary: b.to_string(),
                from_size: from.to_string(),
                to_size: to.to_string(),
            })
            .collect()
    }
}

/// Greedy upward scan for `N ≤ n_1 < … < n_k` such that each `F_{n_{i+1}}`
/// is `(F_{n_i}F_{n_i}⁻¹, δ)`-invariant with `|F_{n_i}|/|F_{n_{i+1}}| < δ`.
///
/// Built-in `Z^d` boxes use the closed-form boundary count and can return
/// indices far beyond anything materializable. Other sequences are scanned
/// set by set, at most `scan_limit` indices past each accepted one.
pub fn select_tile_indices(
    seq: &FolnerSequence,
    params: &TileParameters,
    n_start: u64,
    scan_limit: u64,
) -> Result<TileIndices> {
    if n_start == 0 {
        return Err(Error::InvalidParameter("tile indices start at 1".into()));
    }
    if let (true, GroupModel::Zd(d)) = (seq.is_builtin(), seq.model()) {
        return box_tile_indices(d, params, n_start, seq.cap());
    }
    seq.cardinality(n_start)?;
    let num = params.delta.numer().to_biguint().expect("positive");
    let den = params.delta.denom().to_biguint().expect("positive");
    let mut indices = vec![BigUint::from(n_start)];
    let mut pairs = Vec::new();
    let mut current = n_start;
    let cap = seq.cap().unwrap_or(u64::MAX);
    for _ in 1..params.k {
        let base = seq.set(current)?;
        let k_set = base.product(&base.inverse())?;
        let from_size = BigUint::from(base.len());
        let mut failed = String::from("no index scanned");
        let mut last = current;
        let mut found = None;
        let limit = current.saturating_add(scan_limit).min(cap);
        for n in current + 1..=limit {
            last = n;
            let to_size = BigUint::from(seq.cardinality(n)?);
            if &from_size * &den >= &num * &to_size {
                failed = format!("|F_{current}|/|F_{n}| < δ");
                continue;
            }
            let candidate = seq.set(n)?;
            let b = BigUint::from(group::k_boundary(&candidate, &k_set)?.len());
            if &b * &den >= &num * &to_size {
                failed = format!("F_{n} is not (F_{current}F_{current}⁻¹, δ)-invariant");
                continue;
            }
            found = Some((n, b, to_size));
            break;
        }
        let Some((n, b, to_size)) = found else {
            return Err(Error::PrefixExhausted {
                found: indices.iter().filter_map(|i| i.to_u64()).collect(),
                index: last,
                failed,
            });
        };
        pairs.push((b, from_size, to_size));
        indices.push(BigUint::from(n));
        current = n;
    }
    Ok(TileIndices {
        indices,
        params: params.clone(),
        pairs,
    })
}

/// `|B([0,m)^d, [-a,a]^d)| = (m+2a)^d - max(0, m-2a)^d`.
pub fn box_boundary(m: &BigUint, a: &BigUint, d: usize) -> BigUint {
    let two_a = a * 2u32;
    let outer = num_traits::pow(m + &two_a, d);
    let inner = if *m > two_a {
        num_traits::pow(m - &two_a, d)
    } else {
        BigUint::zero()
    };
    outer - inner
}

/// Closed-form version of [`select_tile_indices`] for boxes `[0,n)^d`, where
/// `F_nF_n⁻¹ = [-(n-1), n-1]^d`. Both conditions are monotone in the larger
/// index, so each step is an exponential search followed by bisection.
pub fn box_tile_indices(d: usize, params: &TileParameters, n_start: u64, cap: Option<u64>) -> Result<TileIndices> {
    let num = params.delta.numer().to_biguint().expect("positive");
    let den = params.delta.denom().to_biguint().expect("positive");
    let ok = |n: &BigUint, m: &BigUint| -> (bool, bool) {
        let a = n - 1u32;
        let size = num_traits::pow(m.clone(), d);
        let rhs = &num * &size;
        let ratio_ok = num_traits::pow(n.clone(), d) * &den < rhs;
        let inv_ok = box_boundary(m, &a, d) * &den < rhs;
        (ratio_ok, inv_ok)
    };
    let cap_big = cap.map(BigUint::from);
    if cap_big.as_ref().is_some_and(|c| *c < BigUint::from(n_start)) {
        return Err(Error::IndexUnavailable {
            n: n_start,
            cap: cap.unwrap_or(0),
        });
    }
    let mut indices = vec![BigUint::from(n_start)];
    let mut pairs = Vec::new();
    for _ in 1..params.k {
        let n = indices.last().expect("nonempty").clone();
        let good = |m: &BigUint| {
            let (a, b) = ok(&n, m);
            a && b
        };
        let mut lo = n.clone();
        let mut hi = &n + 1u32;
        while !good(&hi) {
            lo = hi.clone();
            hi *= 2u32;
        }
        // invariant: !good(lo) (or lo == n), good(hi)
        while &hi - &lo > BigUint::one() {
            let mid = (&lo + &hi) >> 1;
            if good(&mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if let Some(c) = &cap_big {
            if hi > *c {
                let (ratio_ok, _) = ok(&n, c);
                let failed = if ratio_ok {
                    format!("F_{c} is not (F_{n}F_{n}⁻¹, δ)-invariant")
                } else {
                    format!("|F_{n}|/|F_{c}| < δ")
                };
                return Err(Error::PrefixExhausted {
                    found: indices.iter().filter_map(|i| i.to_u64()).collect(),
                    index: c.to_u64().unwrap_or(u64::MAX),
                    failed,
                });
            }
        }
        let a = &n - 1u32;
        pairs.push((
            box_boundary(&hi, &a, d),
            num_traits::pow(n.clone(), d),
            num_traits::pow(hi.clone(), d),
        ));
        indices.push(hi);
    }
    Ok(TileIndices {
        indices,
        params: params.clone(),
        pairs,
    })
}

/// Ordered tile shapes, optionally tagged with Følner indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TileFamily {
    shapes: Vec<FiniteSubset>,
    indices: Option<Vec<u64>>,
}

impl TileFamily {
    pub fn new(shapes: Vec<FiniteSubset>) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::EmptySet("tile family"));
        }
        let model = shapes[0].model();
        for s in &shapes {
            if s.is_empty() {
                return Err(Error::EmptySet("tile shape"));
            }
            if s.model() != model {
                return Err(Error::ModelMismatch {
                    expected: model.to_string(),
                    found: s.model().to_string(),
                });
            }
        }
        Ok(TileFamily { shapes, indices: None })
    }

    pub fn from_sequence(seq: &FolnerSequence, indices: &[u64]) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("tile indices must increase strictly".into()));
        }
        let shapes = indices.iter().map(|&n| seq.set(n)).collect::<Result<Vec<_>>>()?;
        let mut f = Self::new(shapes)?;
        f.indices = Some(indices.to_vec());
        Ok(f)
    }

    pub fn shapes(&self) -> &[FiniteSubset] {
        &self.shapes
    }

    pub fn indices(&self) -> Option<&[u64]> {
        self.indices.as_deref()
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn model(&self) -> GroupModel {
        self.shapes[0].model()
    }
}

/// Translated copies `F̄_i = F_i g_i ⋯ g_k` with `{e} ⊆ F̄_1 ⊆ ⋯ ⊆ F̄_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct NestedFamily {
    pub shapes: Vec<FiniteSubset>,
    pub translates: Vec<GroupElement>,
}

pub fn nest_translates(tiles: &TileFamily) -> Result<NestedFamily> {
    let model = tiles.model();
    let shapes = tiles.shapes();
    let k = shapes.len();
    let mut g: Vec<GroupElement> = Vec::with_capacity(k);
    for i in 0..k - 1 {
        let (a, b) = (&shapes[i], &shapes[i + 1]);
        let a0_inv = model.inv(a.first().expect("nonempty"))?;
        // g with A g ⊆ B must satisfy a0 g ∈ B.
        let candidates = b.translate_left(&a0_inv)?;
        let chosen = candidates
            .iter()
            .find(|c| a.translate_right(c).map(|t| t.is_subset(b)).unwrap_or(false))
            .cloned()
            .ok_or(Error::NoNestingTranslate(i + 1))?;
        g.push(chosen);
    }
    let mut prod = model.identity();
    for x in &g {
        prod = model.mul(&prod, x)?;
    }
    let prod_inv = model.inv(&prod)?;
    let last = shapes[0]
        .inverse()
        .iter()
        .map(|a| model.mul(&prod_inv, a))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min()
        .expect("nonempty");
    g.push(last);

    let mut nested = vec![FiniteSubset::empty(model); k];
    let mut suffix = model.identity();
    for i in (0..k).rev() {
        suffix = model.mul(&g[i], &suffix)?;
        nested[i] = shapes[i].translate_right(&suffix)?;
    }
    let e = model.identity();
    if !nested[0].contains(&e) || nested.windows(2).any(|w| !w[0].is_subset(&w[1])) {
        return Err(Error::Certificate {
            stage: "nest_translates".into(),
            detail: "translated family is not nested around the identity".into(),
        });
    }
    Ok(NestedFamily {
        shapes: nested,
        translates: g,
    })
}

/// Representative-size requirement `⌊(1-ε)|A|⌋ + 1`, i.e. `|B|/|A| > 1-ε`.
pub fn required_representative(size: usize, eps: &BigRational) -> usize {
    let keep = (BigRational::one() - eps) * BigRational::from_integer(BigInt::from(size));
    exact::least_integer_above(&keep) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpsDisjointness {
    pub disjoint: bool,
    /// Mutually disjoint `B_i ⊆ A_i` with `|B_i| > (1-ε)|A_i|`, when they exist.
    pub representatives: Option<Vec<FiniteSubset>>,
}

/// Decides ε-disjointness by max flow: source → set `i` with capacity
/// `⌊(1-ε)|A_i|⌋+1`, set → each of its elements, element → sink with
/// capacity 1. The family is ε-disjoint iff every set's demand saturates.
pub fn verify_eps_disjoint(family: &[FiniteSubset], epsilon: f64) -> Result<EpsDisjointness> {
    let eps = exact::decimal_rational(epsilon)
        .filter(|e| *e > BigRational::zero() && *e < BigRational::one())
        .ok_or_else(|| Error::InvalidParameter(format!("ε must lie in (0, 1), got {epsilon}")))?;
    eps_disjoint_exact(family, &eps)
}

pub(crate) fn eps_disjoint_exact(family: &[FiniteSubset], eps: &BigRational) -> Result<EpsDisjointness> {
    if family.is_empty() {
        return Err(Error::EmptySet("family"));
    }
    let mut graph: DiGraph<(), u64> = DiGraph::new();
    let source = graph.add_node(());
    let sink = graph.add_node(());
    let mut element_nodes: HashMap<&GroupElement, NodeIndex> = HashMap::new();
    let mut demand_total = 0u64;
    let mut set_edges = Vec::with_capacity(family.len());
    for set in family {
        let demand = required_representative(set.len(), eps) as u64;
        if demand > set.len() as u64 {
            return Ok(EpsDisjointness {
                disjoint: false,
                representatives: None,
            });
        }
        demand_total += demand;
        let node = graph.add_node(());
        graph.add_edge(source, node, demand);
        let mut edges = Vec::with_capacity(set.len());
        for g in set {
            let en = *element_nodes.entry(g).or_insert_with(|| {
                let n = graph.add_node(());
                graph.add_edge(n, sink, 1);
                n
            });
            edges.push((g, graph.add_edge(node, en, 1)));
        }
        set_edges.push(edges);
    }
    let (value, flows) = dinics(&graph, source, sink);
    if value < demand_total {
        return Ok(EpsDisjointness {
            disjoint: false,
            representatives: None,
        });
    }
    let model = family[0].model();
    let reps = set_edges
        .iter()
        .map(|edges| {
            FiniteSubset::from_valid(
                model,
                edges
                    .iter()
                    .filter(|(_, e)| flows[e.index()] > 0)
                    .map(|(g, _)| (*g).clone())
                    .collect(),
            )
        })
        .collect();
    Ok(EpsDisjointness {
        disjoint: true,
        representatives: Some(reps),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TilingReport {
    /// `A_iC_i ⊆ A` for every `i`.
    pub contained: bool,
    /// Per tile: the translates `A_ic`, `c ∈ C_i`, are ε-disjoint.
    pub eps_disjoint: Vec<bool>,
    /// The blocks `A_iC_i` are mutually disjoint.
    pub blocks_disjoint: bool,
    pub covered: usize,
    pub target_size: usize,
    pub coverage: f64,
    /// `|∪ A_iC_i ∩ A| ≥ (1-ε)|A|`.
    pub covers: bool,
}

impl TilingReport {
    pub fn valid(&self) -> bool {
        self.contained && self.eps_disjoint.iter().all(|b| *b) && self.blocks_disjoint && self.covers
    }

    /// Conditions that do not depend on how much of `A` was reached.
    pub fn structurally_valid(&self) -> bool {
        self.contained && self.eps_disjoint.iter().all(|b| *b) && self.blocks_disjoint
    }
}

#[derive(Clone, Debug)]
pub struct QuasiTiling {
    pub target: FiniteSubset,
    pub tiles: Vec<FiniteSubset>,
    /// `C_i`, sorted.
    pub centers: Vec<Vec<GroupElement>>,
    pub epsilon: f64,
    /// Unmet sufficient conditions for the covering guarantee.
    pub warnings: Vec<String>,
    pub report: TilingReport,
}

impl QuasiTiling {
    /// Assembles a tiling from explicit centers and certifies it.
    pub fn from_centers(
        target: FiniteSubset,
        tiles: Vec<FiniteSubset>,
        centers: Vec<Vec<GroupElement>>,
        epsilon: f64,
    ) -> Result<Self> {
        if tiles.len() != centers.len() {
            return Err(Error::InvalidParameter("one center list per tile required".into()));
        }
        let report = verify_quasi_tiling(&target, &tiles, &centers, epsilon)?;
        Ok(QuasiTiling {
            target,
            tiles,
            centers,
            epsilon,
            warnings: Vec::new(),
            report,
        })
    }

    /// Every translate `(tile index, center, A_i c)` in tile-then-center order.
    pub fn translates(&self) -> Vec<(usize, GroupElement, FiniteSubset)> {
        let mut out = Vec::new();
        for (i, (tile, cs)) in self.tiles.iter().zip(&self.centers).enumerate() {
            for c in cs {
                out.push((i, c.clone(), tile.translate_right(c).expect("same model")));
            }
        }
        out
    }

    pub fn verify(&self) -> Result<TilingReport> {
        verify_quasi_tiling(&self.target, &self.tiles, &self.centers, self.epsilon)
    }

    pub fn record(&self, target_id: &str) -> TilingRecord {
        TilingRecord {
            target: target_id.to_string(),
            target_size: self.target.len(),
            epsilon: self.epsilon,
            tiles: self
                .tiles
                .iter()
                .zip(&self.centers)
                .enumerate()
                .map(|(i, (t, cs))| TileRecord {
                    tile: i + 1,
                    size: t.len(),
                    centers: cs.iter().map(|c| c.to_string()).collect(),
                })
                .collect(),
            certificate: self.report.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TileRecord {
    pub tile: usize,
    pub size: usize,
    pub centers: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TilingRecord {
    pub target: String,
    pub target_size: usize,
    pub epsilon: f64,
    pub tiles: Vec<TileRecord>,
    pub certificate: TilingReport,
    pub warnings: Vec<String>,
}

/// Re-checks the three quasi-tiling conditions from the raw sets.
pub fn verify_quasi_tiling(
    target: &FiniteSubset,
    tiles: &[FiniteSubset],
    centers: &[Vec<GroupElement>],
    epsilon: f64,
) -> Result<TilingReport> {
    let eps = exact::decimal_rational(epsilon)
        .filter(|e| *e > BigRational::zero() && *e < BigRational::one())
        .ok_or_else(|| Error::InvalidParameter(format!("ε must lie in (0, 1), got {epsilon}")))?;
    if target.is_empty() {
        return Err(Error::EmptySet("target set"));
    }
    let mut contained = true;
    let mut eps_disjoint = Vec::with_capacity(tiles.len());
    let mut blocks = Vec::with_capacity(tiles.len());
    for (tile, cs) in tiles.iter().zip(centers) {
        let translates = cs
            .iter()
            .map(|c| tile.translate_right(c))
            .collect::<Result<Vec<_>>>()?;
        let mut block: HashSet<GroupElement> = HashSet::new();
        for t in &translates {
            contained &= t.is_subset(target);
            block.extend(t.iter().cloned());
        }
        eps_disjoint.push(translates.is_empty() || eps_disjoint_exact(&translates, &eps)?.disjoint);
        blocks.push(block);
    }
    let mut blocks_disjoint = true;
    for i in 0..blocks.len() {
        for j in i + 1..blocks.len() {
            blocks_disjoint &= blocks[i].is_disjoint(&blocks[j]);
        }
    }
    let covered = target
        .iter()
        .filter(|g| blocks.iter().any(|b| b.contains(*g)))
        .count();
    let need = (BigRational::one() - &eps) * BigRational::from_integer(BigInt::from(target.len()));
    let covers = BigRational::from_integer(BigInt::from(covered)) >= need;
    Ok(TilingReport {
        contained,
        eps_disjoint,
        blocks_disjoint,
        covered,
        target_size: target.len(),
        coverage: covered as f64 / target.len() as f64,
        covers,
    })
}

/// Deliberate defects for exercising the verifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TilingFaults {
    /// Accept translates with one fewer fresh cell than ε-disjointness needs.
    pub coverage_off_by_one: bool,
}

/// Greedy quasi-tiling of `target`.
///
/// Shapes are processed from largest to smallest. In each round, candidate
/// centers are scanned in increasing order twice: first accepting only
/// translates disjoint from those already placed, then accepting any
/// translate with more than `(1-ε)|T|` cells not yet covered this round.
/// Translates must lie inside the part of `target` left by earlier rounds.
pub fn quasi_tile(target: &FiniteSubset, tiles: &TileFamily, epsilon: f64) -> Result<QuasiTiling> {
    quasi_tile_with_faults(target, tiles, epsilon, TilingFaults::default())
}

pub fn quasi_tile_with_faults(
    target: &FiniteSubset,
    tiles: &TileFamily,
    epsilon: f64,
    faults: TilingFaults,
) -> Result<QuasiTiling> {
    let eps = exact::decimal_rational(epsilon)
        .filter(|e| *e > BigRational::zero() && *e < BigRational::one())
        .ok_or_else(|| Error::InvalidParameter(format!("ε must lie in (0, 1), got {epsilon}")))?;
    if target.is_empty() {
        return Err(Error::EmptySet("target set"));
    }
    if target.model() != tiles.model() {
        return Err(Error::ModelMismatch {
            expected: target.model().to_string(),
            found: tiles.model().to_string(),
        });
    }
    let model = target.model();
    let shapes = tiles.shapes();
    let warnings = precondition_warnings(target, shapes, epsilon)?;

    let mut order: Vec<usize> = (0..shapes.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(shapes[i].len()), std::cmp::Reverse(i)));

    let mut remaining: HashSet<GroupElement> = target.iter().cloned().collect();
    let mut centers = vec![Vec::new(); shapes.len()];
    for i in order {
        let tile = &shapes[i];
        let mut demand = required_representative(tile.len(), &eps);
        if faults.coverage_off_by_one {
            demand = demand.saturating_sub(1);
        }
        let t0_inv = model.inv(tile.first().expect("nonempty"))?;
        let candidates = target.translate_left(&t0_inv)?;
        let mut placed: HashSet<GroupElement> = HashSet::new();
        let mut chosen: Vec<GroupElement> = Vec::new();
        for strict in [true, false] {
            for c in &candidates {
                if chosen.contains(c) {
                    continue;
                }
                let tc = tile.translate_right(c)?;
                if !tc.iter().all(|g| remaining.contains(g)) {
                    continue;
                }
                let fresh = tc.iter().filter(|g| !placed.contains(*g)).count();
                let accept = if strict { fresh == tc.len() } else { fresh >= demand };
                if accept {
                    placed.extend(tc.iter().cloned());
                    chosen.push(c.clone());
                }
            }
        }
        for g in &placed {
            remaining.remove(g);
        }
        chosen.sort();
        centers[i] = chosen;
    }

    let report = verify_quasi_tiling(target, shapes, &centers, epsilon)?;
    if !report.structurally_valid() && !faults.coverage_off_by_one {
        return Err(Error::Certificate {
            stage: "quasi_tile".into(),
            detail: format!("constructed tiling fails verification: {report:?}"),
        });
    }
    Ok(QuasiTiling {
        target: target.clone(),
        tiles: shapes.to_vec(),
        centers,
        epsilon,
        warnings,
        report,
    })
}

/// The sufficient conditions for a guaranteed ε-quasi-tiling: `A` is
/// `(T T⁻¹, δ)`-invariant for the largest tile `T` and `|T|/|A| < δ`.
fn precondition_warnings(target: &FiniteSubset, shapes: &[FiniteSubset], epsilon: f64) -> Result<Vec<String>> {
    let Ok(params) = select_tile_parameters(epsilon) else {
        return Ok(vec![format!("ε = {epsilon} exceeds 1/4; no parameter schedule applies")]);
    };
    let mut warnings = Vec::new();
    let largest = shapes.iter().max_by_key(|s| s.len()).expect("nonempty");
    let size_ratio = BigRational::new(BigInt::from(largest.len()), BigInt::from(target.len()));
    if size_ratio >= params.delta {
        warnings.push(format!(
            "largest tile is {}/{} of the target, not below δ = {:.3e}",
            largest.len(),
            target.len(),
            params.delta_f64()
        ));
    }
    let k = largest.product(&largest.inverse())?;
    if (k.len() as u128) * (target.len() as u128) <= 1 << 22 {
        let inv = group::is_invariant_exact(target, &k, &params.delta)?;
        if !inv.invariant {
            warnings.push(format!(
                "target is not (TT⁻¹, δ)-invariant for the largest tile (boundary ratio {}/{})",
                inv.ratio.numer(),
                inv.ratio.denom()
            ));
        }
    } else {
        warnings.push("invariance of the target not checked (boundary too large to enumerate)".into());
    }
    Ok(warnings)
}

#[derive(Clone, Debug, Serialize)]
pub struct Core {
    pub tile: usize,
    pub center: String,
    #[serde(skip)]
    pub center_element: GroupElement,
    /// `T_c ⊆ A_i`, stored as a shape (before translation by `c`).
    #[serde(skip)]
    pub core: FiniteSubset,
    pub core_size: usize,
    pub tile_size: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TileCoreSet {
    #[serde(skip)]
    pub separation: FiniteSubset,
    pub cores: Vec<Core>,
    /// `1 - 3γ/(ML)`.
    pub threshold: f64,
    pub translated_disjoint: bool,
    pub thickened_disjoint: bool,
}

impl TileCoreSet {
    /// `T_c c` for each core.
    pub fn placed(&self) -> Vec<FiniteSubset> {
        self.cores
            .iter()
            .map(|c| c.core.translate_right(&c.center_element).expect("same model"))
            .collect()
    }
}

fn pairwise_disjoint(sets: &[FiniteSubset]) -> bool {
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if !sets[i].is_disjoint(&sets[j]) {
                return false;
            }
        }
    }
    true
}

/// Cores `T_c = {t ∈ T̃_c : Ft ⊆ T̃_c}` inside each translate, where the
/// `T̃_c c` are disjoint representatives of the translates.
///
/// Requires the whole family of translates to be `γ/(ML|F|)`-disjoint and
/// certifies that the `T_c c` and the `F T_c c` are pairwise disjoint and that
/// `|T_c|/|A_i| > 1 - 3γ/(ML)`.
pub fn extract_cores(t: &QuasiTiling, f: &FiniteSubset, gamma: f64, m: f64, l: u64) -> Result<TileCoreSet> {
    if f.is_empty() {
        return Err(Error::Precondition("separation set F must be nonempty".into()));
    }
    if !(gamma > 0.0 && m > 0.0 && l > 0) {
        return Err(Error::InvalidParameter("γ, M and L must be positive".into()));
    }
    let model = t.target.model();
    let (g, mm) = (exact::rat(gamma), exact::rat(m));
    let ml = &mm * BigRational::from_integer(BigInt::from(l));
    let small = &g / (&ml * BigRational::from_integer(BigInt::from(f.len())));
    let translates = t.translates();
    let sets: Vec<FiniteSubset> = translates.iter().map(|(_, _, s)| s.clone()).collect();
    if sets.is_empty() {
        return Ok(TileCoreSet {
            separation: f.clone(),
            cores: Vec::new(),
            threshold: 1.0 - 3.0 * gamma / (m * l as f64),
            translated_disjoint: true,
            thickened_disjoint: true,
        });
    }
    if small >= BigRational::one() {
        return Err(Error::Precondition("γ/(ML|F|) must be below 1".into()));
    }
    let witness = eps_disjoint_exact(&sets, &small)?;
    let Some(mut reps) = witness.representatives else {
        return Err(Error::Precondition(format!(
            "translates are not {:.4}-disjoint",
            exact::to_f64(&small)
        )));
    };
    // Grow each representative by cells no other representative holds.
    let mut owner: HashMap<GroupElement, usize> = HashMap::new();
    for (i, r) in reps.iter().enumerate() {
        for x in r {
            owner.insert(x.clone(), i);
        }
    }
    for (i, s) in sets.iter().enumerate() {
        let extra: Vec<GroupElement> = s.iter().filter(|x| !owner.contains_key(*x)).cloned().collect();
        for x in &extra {
            owner.insert(x.clone(), i);
        }
        if !extra.is_empty() {
            reps[i] = reps[i].union(&FiniteSubset::from_valid(model, extra))?;
        }
    }

    let threshold = BigRational::one() - BigRational::from_integer(3.into()) * &g / &ml;
    let mut cores = Vec::with_capacity(sets.len());
    for ((tile_idx, c, _), rep) in translates.iter().zip(&reps) {
        let c_inv = model.inv(c)?;
        let tilde = rep.translate_right(&c_inv)?;
        let shape = &t.tiles[*tile_idx];
        let mut core = Vec::new();
        for x in &tilde {
            if f.translate_right(x)?.is_subset(&tilde) {
                core.push(x.clone());
            }
        }
        let core = FiniteSubset::from_valid(model, core);
        let ratio = BigRational::new(BigInt::from(core.len()), BigInt::from(shape.len()));
        if ratio <= threshold {
            return Err(Error::Certificate {
                stage: "extract_cores".into(),
                detail: format!(
                    "core of tile {} at {c} keeps {}/{} cells, not above {:.4}",
                    tile_idx + 1,
                    core.len(),
                    shape.len(),
                    exact::to_f64(&threshold)
                ),
            });
        }
        cores.push(Core {
            tile: *tile_idx,
            center: c.to_string(),
            center_element: c.clone(),
            core_size: core.len(),
            tile_size: shape.len(),
            ratio: exact::to_f64(&ratio),
            core,
        });
    }
    let mut out = TileCoreSet {
        separation: f.clone(),
        cores,
        threshold: exact::to_f64(&threshold),
        translated_disjoint: false,
        thickened_disjoint: false,
    };
    let placed = out.placed();
    out.translated_disjoint = pairwise_disjoint(&placed);
    let thick = placed.iter().map(|p| f.product(p)).collect::<Result<Vec<_>>>()?;
    out.thickened_disjoint = pairwise_disjoint(&thick);
    if !(out.translated_disjoint && out.thickened_disjoint) {
        return Err(Error::Certificate {
            stage: "extract_cores".into(),
            detail: "cores overlap after translation or thickening".into(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SubfamilyPartition {
    /// Indices into [`QuasiTiling::translates`].
    pub families: Vec<Vec<usize>>,
    pub union_sizes: Vec<usize>,
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub largest_translate: f64,
}

/// Splits the translates into `k` groups whose unions occupy fractions close
/// to the weights `a_i` of the target.
///
/// Translates are assigned largest first to the group with the largest
/// remaining deficit `a_i|A| - |∪ group|`. Fails when some deviation
/// `||∪F_i|/|A| - a_i|` reaches `tol`.
pub fn partition_subfamilies(t: &QuasiTiling, weights: &[f64], tol: f64) -> Result<SubfamilyPartition> {
    if weights.is_empty() || weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(Error::InvalidParameter("weights must be a nonempty nonnegative vector".into()));
    }
    if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter("weights must sum to 1".into()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let size = t.target.len() as f64;
    let translates = t.translates();
    let mut order: Vec<usize> = (0..translates.len()).collect();
    order.sort_by_key(|&j| std::cmp::Reverse(translates[j].2.len()));
    let k = weights.len();
    let mut families = vec![Vec::new(); k];
    let mut unions: Vec<HashSet<GroupElement>> = vec![HashSet::new(); k];
    for j in order {
        let deficit = |i: usize| weights[i] * size - unions[i].len() as f64;
        let best = (0..k)
            .max_by(|&a, &b| deficit(a).total_cmp(&deficit(b)).then(b.cmp(&a)))
            .expect("k ≥ 1");
        families[best].push(j);
        unions[best].extend(translates[j].2.iter().cloned());
    }
    for f in &mut families {
        f.sort_unstable();
    }
    let union_sizes: Vec<usize> = unions.iter().map(|u| u.len()).collect();
    let deviations: Vec<f64> = union_sizes
        .iter()
        .zip(weights)
        .map(|(&u, &a)| (u as f64 / size - a).abs())
        .collect();
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    let largest_translate = translates.iter().map(|x| x.2.len()).max().unwrap_or(0) as f64 / size;
    if max_deviation >= tol {
        return Err(Error::InfeasibleTolerance {
            achieved: max_deviation,
            tol,
            largest_translate,
        });
    }
    Ok(SubfamilyPartition {
        families,
        union_sizes,
        deviations,
        max_deviation,
        largest_translate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(a: i64, b: i64) -> FiniteSubset {
        FiniteSubset::zd_box(&[a..b])
    }

    fn z(x: i64) -> GroupElement {
        GroupElement::zd(&[x])
    }

    fn exact_tiling() -> QuasiTiling {
        let tiles = TileFamily::new(vec![interval(0, 10)]).unwrap();
        quasi_tile(&interval(0, 100), &tiles, 0.2).unwrap()
    }

    #[test]
    fn parameter_examples() {
        let p = select_tile_parameters(0.25).unwrap();
        assert_eq!(p.k, 11);
        assert!(p.satisfies_schedule());
        assert_eq!(select_tile_parameters(0.2).unwrap().k, 16);
        assert!(select_tile_parameters(0.1).unwrap().k > 16);
        assert!(select_tile_parameters(0.3).is_err());
    }

    #[test]
    fn box_indices_for_z() {
        let p = select_tile_parameters(0.25).unwrap();
        let seq = FolnerSequence::boxes(GroupModel::Zd(1));
        let t = select_tile_indices(&seq, &p, 1, 1000).unwrap();
        assert_eq!(t.indices.len(), 11);
        assert!(t.recheck());
        let capped = seq.clone().with_cap(5);
        assert!(matches!(
            select_tile_indices(&capped, &p, 1, 1000),
            Err(Error::PrefixExhausted { .. })
        ));
        let one = tile_parameters_with_k(0.25, 1).unwrap();
        assert_eq!(select_tile_indices(&seq, &one, 4, 10).unwrap().indices, vec![BigUint::from(4u32)]);
    }

    #[test]
    fn box_boundary_formula_matches_enumeration() {
        for d in 1..=2usize {
            for n in 1..=3i64 {
                for m in 1..=7i64 {
                    let a_set = FiniteSubset::zd_box(&vec![0..m; d]);
                    let k = FiniteSubset::zd_box(&vec![-(n - 1)..n; d]);
                    let brute = group::k_boundary(&a_set, &k).unwrap().len();
                    let formula = box_boundary(&BigUint::from(m as u64), &BigUint::from((n - 1) as u64), d);
                    assert_eq!(BigUint::from(brute), formula, "d={d} n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn generic_scan_agrees_with_closed_form() {
        // δ = 0.9/144 = 1/160
        let p = tile_parameters_with_k(0.9, 2).unwrap();
        let boxes = FolnerSequence::boxes(GroupModel::Zd(1));
        let list: Vec<FiniteSubset> = (1..=200).map(|n| interval(0, n)).collect();
        let explicit = FolnerSequence::explicit(GroupModel::Zd(1), list).unwrap();
        let a = select_tile_indices(&boxes, &p, 1, 1000).unwrap();
        let b = select_tile_indices(&explicit, &p, 1, 1000).unwrap();
        assert_eq!(a.as_u64().unwrap(), vec![1, 161]);
        assert_eq!(a.indices, b.indices);
        assert!(b.recheck());
        let short = explicit.clone().with_cap(100);
        match select_tile_indices(&short, &p, 1, 1000) {
            Err(Error::PrefixExhausted { found, index, .. }) => {
                assert_eq!((found, index), (vec![1], 100));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nesting_examples() {
        let fam = TileFamily::new(vec![interval(0, 2), interval(0, 5)]).unwrap();
        let nested = nest_translates(&fam).unwrap();
        assert_eq!(nested.translates[0], z(0));
        assert!(nested.shapes[0].contains(&z(0)));
        let shifted = TileFamily::new(vec![interval(3, 5), interval(0, 5)]).unwrap();
        let nested = nest_translates(&shifted).unwrap();
        assert_eq!(nested.translates[0], z(-3));
        assert!(nested.shapes[0].is_subset(&nested.shapes[1]));
        let bad = TileFamily::new(vec![interval(0, 6), interval(0, 5)]).unwrap();
        assert!(matches!(nest_translates(&bad), Err(Error::NoNestingTranslate(1))));
    }

    #[test]
    fn nesting_in_heisenberg() {
        let seq = FolnerSequence::boxes(GroupModel::Heisenberg);
        let fam = TileFamily::from_sequence(&seq, &[1, 2, 3]).unwrap();
        let nested = nest_translates(&fam).unwrap();
        assert!(nested.shapes[0].contains(&GroupModel::Heisenberg.identity()));
        assert!(nested.shapes.windows(2).all(|w| w[0].is_subset(&w[1])));
    }

    #[test]
    fn exact_tiling_of_interval() {
        let t = exact_tiling();
        let want: Vec<GroupElement> = (0..10).map(|i| z(10 * i)).collect();
        assert_eq!(t.centers[0], want);
        assert_eq!(t.report.coverage, 1.0);
        assert!(t.report.valid());
    }

    #[test]
    fn square_tiling_covers() {
        let a = FiniteSubset::zd_box(&[0..30, 0..30]);
        let tiles = TileFamily::new(vec![
            FiniteSubset::zd_box(&[0..2, 0..2]),
            FiniteSubset::zd_box(&[0..5, 0..5]),
        ])
        .unwrap();
        let t = quasi_tile(&a, &tiles, 0.2).unwrap();
        assert!(t.report.coverage >= 0.8);
        assert!(t.verify().unwrap().valid());
    }

    #[test]
    fn tiny_target_gets_no_tiles() {
        let tiles = TileFamily::new(vec![interval(0, 10)]).unwrap();
        let t = quasi_tile(&interval(0, 5), &tiles, 0.2).unwrap();
        assert!(t.centers[0].is_empty());
        assert_eq!(t.report.coverage, 0.0);
        assert!(!t.report.covers);
        assert!(t.report.structurally_valid());
    }

    #[test]
    fn overlapping_translates_are_admitted_when_eps_allows() {
        let tiles = TileFamily::new(vec![interval(0, 5)]).unwrap();
        let t = quasi_tile(&interval(0, 9), &tiles, 0.25).unwrap();
        // [0,5) then [4,9) with four fresh cells: 4/5 > 0.75
        assert_eq!(t.centers[0], vec![z(0), z(4)]);
        assert!(t.report.valid());
        let strict = quasi_tile(&interval(0, 9), &tiles, 0.2).unwrap();
        assert_eq!(strict.centers[0], vec![z(0)]);
        let faulty = quasi_tile_with_faults(
            &interval(0, 9),
            &tiles,
            0.2,
            TilingFaults { coverage_off_by_one: true },
        )
        .unwrap();
        assert!(!faulty.report.eps_disjoint[0]);
    }

    #[test]
    fn eps_disjoint_examples() {
        let fam = vec![interval(0, 10), interval(8, 18)];
        let r = verify_eps_disjoint(&fam, 0.2).unwrap();
        assert!(r.disjoint);
        let reps = r.representatives.unwrap();
        assert!(reps[0].len() >= 9 && reps[1].len() >= 9 && reps[0].is_disjoint(&reps[1]));
        assert!(!verify_eps_disjoint(&fam, 0.05).unwrap().disjoint);
        let single = verify_eps_disjoint(&[interval(0, 4)], 0.5).unwrap();
        assert!(single.disjoint);
    }

    #[test]
    fn verification_catches_violations() {
        let a = interval(0, 100);
        let r = verify_quasi_tiling(&a, &[interval(0, 10)], &[vec![z(0), z(1)]], 0.05).unwrap();
        assert!(!r.eps_disjoint[0]);
        let centers: Vec<GroupElement> = (0..15).map(|i| z(5 * i)).collect();
        let r = verify_quasi_tiling(&a, &[interval(0, 5)], &[centers], 0.2).unwrap();
        assert_eq!(r.covered, 75);
        assert!(!r.covers);
        let r = verify_quasi_tiling(&a, &[interval(0, 10)], &[vec![z(95)]], 0.2).unwrap();
        assert!(!r.contained);
    }

    #[test]
    fn core_examples() {
        let t = exact_tiling();
        let f = FiniteSubset::new(GroupModel::Zd(1), [z(0), z(1)]).unwrap();
        let cores = extract_cores(&t, &f, 0.1, 1.0, 1).unwrap();
        assert_eq!(cores.cores.len(), 10);
        for c in &cores.cores {
            assert_eq!(c.core, interval(0, 9));
            assert_eq!(c.ratio, 0.9);
        }
        assert!(cores.translated_disjoint && cores.thickened_disjoint);
        let e = FiniteSubset::identity(GroupModel::Zd(1));
        let cores = extract_cores(&t, &e, 0.1, 1.0, 1).unwrap();
        assert!(cores.cores.iter().all(|c| c.core == interval(0, 10)));
        assert!(matches!(
            extract_cores(&t, &FiniteSubset::empty(GroupModel::Zd(1)), 0.1, 1.0, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn partition_examples() {
        let t = exact_tiling();
        let p = partition_subfamilies(&t, &[0.5, 0.5], 0.05).unwrap();
        assert_eq!(p.families[0].len(), 5);
        assert_eq!(p.deviations, vec![0.0, 0.0]);
        let single = partition_subfamilies(&t, &[1.0], 0.05).unwrap();
        assert_eq!(single.deviations, vec![0.0]);

        let big = QuasiTiling::from_centers(interval(0, 100), vec![interval(0, 50)], vec![vec![z(0)]], 0.2).unwrap();
        assert!(matches!(
            partition_subfamilies(&big, &[0.5, 0.5], 0.01),
            Err(Error::InfeasibleTolerance { .. })
        ));
        let p = partition_subfamilies(&big, &[1.0], 0.6).unwrap();
        assert_eq!(p.deviations, vec![0.5]);
    }

    #[test]
    fn record_lists_centers() {
        let rec = exact_tiling().record("[0,100)");
        assert_eq!(rec.tiles[0].centers.len(), 10);
        assert_eq!(rec.tiles[0].centers[1], "10");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Exhaustive search for disjoint representatives.
        fn brute_eps_disjoint(family: &[Vec<i64>], eps: &BigRational) -> bool {
            fn go(i: usize, family: &[Vec<i64>], need: &[usize], used: &mut HashSet<i64>) -> bool {
                if i == family.len() {
                    return true;
                }
                let set = &family[i];
                let free: Vec<i64> = set.iter().copied().filter(|x| !used.contains(x)).collect();
                if free.len() < need[i] {
                    return false;
                }
                // subsets of exactly need[i] free elements
                let n = free.len();
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as usize != need[i] {
                        continue;
                    }
                    let pick: Vec<i64> = (0..n).filter(|b| mask >> b & 1 == 1).map(|b| free[b]).collect();
                    used.extend(&pick);
                    let ok = go(i + 1, family, need, used);
                    for x in &pick {
                        used.remove(x);
                    }
                    if ok {
                        return true;
                    }
                }
                false
            }
            let need: Vec<usize> = family.iter().map(|s| required_representative(s.len(), eps)).collect();
            go(0, family, &need, &mut HashSet::new())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn flow_matches_exhaustive_search(
                sets in proptest::collection::vec(proptest::collection::btree_set(0i64..8, 1..6), 1..4),
                eps_pct in 5u32..95,
            ) {
                let eps = eps_pct as f64 / 100.0;
                let family: Vec<Vec<i64>> = sets.iter().map(|s| s.iter().copied().collect()).collect();
                let subsets: Vec<FiniteSubset> = family
                    .iter()
                    .map(|s| FiniteSubset::new(GroupModel::Zd(1), s.iter().map(|&x| z(x))).unwrap())
                    .collect();
                let r = verify_eps_disjoint(&subsets, eps).unwrap();
                let exact = exact::decimal_rational(eps).unwrap();
                prop_assert_eq!(r.disjoint, brute_eps_disjoint(&family, &exact));
                if let Some(reps) = r.representatives {
                    for (rep, set) in reps.iter().zip(&subsets) {
                        prop_assert!(rep.is_subset(set));
                        prop_assert!(rep.len() >= required_representative(set.len(), &exact));
                    }
                    prop_assert!(pairwise_disjoint(&reps));
                }
            }

            #[test]
            fn greedy_tilings_verify(
                d in 1usize..=2,
                side in 4i64..24,
                holes in proptest::collection::vec(0i64..24, 0..4),
                sizes in proptest::collection::btree_set(2i64..6, 1..3),
                eps_pct in 5u32..30,
            ) {
                let eps = eps_pct as f64 / 100.0;
                let side = if d == 2 { side.min(12) } else { side };
                let full = FiniteSubset::zd_box(&vec![0..side; d]);
                let cut: Vec<GroupElement> = holes.iter().map(|&h| GroupElement::zd(&vec![h % side; d])).collect();
                let target = full.difference(&FiniteSubset::new(GroupModel::Zd(d), cut).unwrap()).unwrap();
                prop_assume!(!target.is_empty());
                let mut shapes = vec![FiniteSubset::zd_box(&vec![0..1; d])];
                shapes.extend(sizes.iter().map(|&s| FiniteSubset::zd_box(&vec![0..s; d])));
                let tiles = TileFamily::new(shapes).unwrap();
                let t = quasi_tile(&target, &tiles, eps).unwrap();
                let r = t.verify().unwrap();
                prop_assert!(r.valid());
                prop_assert_eq!(r.covered, target.len());
            }

            #[test]
            fn dividing_boxes_cover_exactly(d in 1usize..=2, m in 1i64..=5, k in 1i64..=5, eps_pct in 1u32..=25) {
                let target = FiniteSubset::zd_box(&vec![0..m * k; d]);
                let tiles = TileFamily::new(vec![FiniteSubset::zd_box(&vec![0..m; d])]).unwrap();
                let t = quasi_tile(&target, &tiles, eps_pct as f64 / 100.0).unwrap();
                prop_assert_eq!(t.report.coverage, 1.0);
                prop_assert_eq!(t.report.covered, target.len());
            }

            #[test]
            fn schedule_inequalities_hold(eps_milli in 10u32..=250) {
                let p = select_tile_parameters(eps_milli as f64 / 1000.0).unwrap();
                prop_assert!(p.satisfies_schedule());
                if p.k > 1 {
                    prop_assert!(!decays_below(&p.epsilon, p.k - 1));
                }
            }
        }
    }
}
