//! Concrete amenable groups, finite-subset algebra and Følner diagnostics.
//!
//! Three models are built in:
//!
//! * `Z^d` with coordinatewise addition,
//! * the discrete Heisenberg group `H₃(Z)` with
//!   `(a,b,c)(a',b',c') = (a+a', b+b', c+c'+ab')`,
//! * the lamplighter group `Z/2 ≀ Z`, encoded as a pair (sorted lamp support,
//!   cursor) with `(f,t)(f',t') = (τ_{t'}f + f', t+t')` where `τ_s` shifts the
//!   support by `+s`. Left multiplication by the cursor generator moves the
//!   cursor and left multiplication by the toggle flips the lamp under the
//!   cursor, so the built-in boxes are left Følner sets.
//!
//! Ratios are returned as exact rationals; `(K, δ)`-invariance compares
//! `|B(A,K)|` against `δ|A|` without rounding.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact;

/// Largest set the built-in Følner rules will materialize.
pub const MATERIALIZE_BUDGET: u128 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GroupModel {
    Zd(usize),
    Heisenberg,
    Lamplighter,
}

impl FromStr for GroupModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "heis3" => Ok(GroupModel::Heisenberg),
            "lamplighter" => Ok(GroupModel::Lamplighter),
            _ => {
                let dim = s
                    .strip_prefix("zd:")
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&d| d >= 1)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown group model `{s}`")))?;
                Ok(GroupModel::Zd(dim))
            }
        }
    }
}

impl TryFrom<String> for GroupModel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GroupModel> for String {
    fn from(m: GroupModel) -> String {
        m.to_string()
    }
}

impl fmt::Display for GroupModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupModel::Zd(d) => write!(f, "zd:{d}"),
            GroupModel::Heisenberg => f.write_str("heis3"),
            GroupModel::Lamplighter => f.write_str("lamplighter"),
        }
    }
}

/// A group element in canonical coordinates. The derived order is the
/// lexicographic order on those coordinates and is used as the scan order
/// everywhere a deterministic choice is needed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupElement {
    Zd(Vec<i64>),
    Heis([i64; 3]),
    Lamp { cursor: i64, lamps: Vec<i64> },
}

impl GroupElement {
    pub fn zd(coords: &[i64]) -> Self {
        GroupElement::Zd(coords.to_vec())
    }

    pub fn heis(a: i64, b: i64, c: i64) -> Self {
        GroupElement::Heis([a, b, c])
    }

    /// Lamplighter element from a cursor and a list of lit lamps. Repeated
    /// positions cancel in pairs.
    pub fn lamp(cursor: i64, lamps: &[i64]) -> Self {
        let mut sorted = lamps.to_vec();
        sorted.sort_unstable();
        let mut support: Vec<i64> = Vec::with_capacity(sorted.len());
        for x in sorted {
            if support.last() == Some(&x) {
                support.pop();
            } else {
                support.push(x);
            }
        }
        GroupElement::Lamp {
            cursor,
            lamps: support,
        }
    }

    pub fn model(&self) -> GroupModel {
        match self {
            GroupElement::Zd(v) => GroupModel::Zd(v.len()),
            GroupElement::Heis(_) => GroupModel::Heisenberg,
            GroupElement::Lamp { .. } => GroupModel::Lamplighter,
        }
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[i64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match self {
            GroupElement::Zd(v) => f.write_str(&join(v)),
            GroupElement::Heis(v) => f.write_str(&join(v)),
            GroupElement::Lamp { cursor, lamps } => {
                if lamps.is_empty() {
                    write!(f, "{cursor}")
                } else {
                    write!(f, "{cursor},{}", join(lamps))
                }
            }
        }
    }
}

fn shifted(lamps: &[i64], s: i64) -> Vec<i64> {
    lamps.iter().map(|x| x + s).collect()
}

fn xor_sorted(a: &[i64], b: &[i64]) -> Vec<i64> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

impl GroupModel {
    pub fn check(&self, g: &GroupElement) -> Result<()> {
        if g.model() == *self {
            Ok(())
        } else {
            Err(Error::ModelMismatch {
                expected: self.to_string(),
                found: g.model().to_string(),
            })
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            GroupModel::Zd(d) => GroupElement::Zd(vec![0; *d]),
            GroupModel::Heisenberg => GroupElement::Heis([0; 3]),
            GroupModel::Lamplighter => GroupElement::Lamp {
                cursor: 0,
                lamps: Vec::new(),
            },
        }
    }

    pub fn mul(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        self.check(h)?;
        Ok(mul_unchecked(g, h))
    }

    pub fn inv(&self, g: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        Ok(inv_unchecked(g))
    }

    /// The standard generating set: unit vectors for `Z^d`, `(1,0,0)` and
    /// `(0,1,0)` for `H₃`, cursor step and toggle for the lamplighter.
    pub fn generators(&self) -> Vec<GroupElement> {
        match self {
            GroupModel::Zd(d) => (0..*d)
                .map(|i| {
                    let mut v = vec![0; *d];
                    v[i] = 1;
                    GroupElement::Zd(v)
                })
                .collect(),
            GroupModel::Heisenberg => vec![GroupElement::heis(1, 0, 0), GroupElement::heis(0, 1, 0)],
            GroupModel::Lamplighter => vec![GroupElement::lamp(1, &[]), GroupElement::lamp(0, &[0])],
        }
    }

    /// Generators together with their inverses, deduplicated and sorted.
    pub fn symmetric_generators(&self) -> Vec<GroupElement> {
        let mut out: Vec<GroupElement> = self
            .generators()
            .into_iter()
            .flat_map(|g| {
                let inv = inv_unchecked(&g);
                [g, inv]
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Word length with respect to [`GroupModel::generators`].
    pub fn word_length(&self, g: &GroupElement) -> Result<u64> {
        self.check(g)?;
        Ok(match g {
            GroupElement::Zd(v) => v.iter().map(|x| x.unsigned_abs()).sum(),
            GroupElement::Lamp { cursor, lamps } => lamplighter_length(*cursor, lamps),
            GroupElement::Heis(_) => {
                let mut spheres = self.spheres();
                let mut r = 0;
                loop {
                    let layer = spheres.next().expect("spheres are infinite");
                    if layer.contains(g) {
                        break r;
                    }
                    r += 1;
                }
            }
        })
    }

    /// Breadth-first spheres `{g : |g| = r}` for `r = 0, 1, 2, …`.
    pub fn spheres(&self) -> Spheres {
        Spheres {
            gens: self.symmetric_generators(),
            visited: HashSet::new(),
            current: Vec::new(),
            started: false,
            identity: self.identity(),
        }
    }

    /// The word-length ball `B_r`.
    pub fn ball(&self, radius: u64) -> FiniteSubset {
        let elems = self
            .spheres()
            .take(radius as usize + 1)
            .flatten()
            .collect::<Vec<_>>();
        FiniteSubset::from_valid(*self, elems)
    }

    pub fn parse_element(&self, s: &str) -> Result<GroupElement> {
        let coords = s
            .split(',')
            .map(|t| t.trim().parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidParameter(format!("bad coordinate in `{s}`: {e}")))?;
        let wrong_len = |want: &str| {
            Error::InvalidParameter(format!("`{s}` is not a {self} element ({want} coordinates)"))
        };
        match self {
            GroupModel::Zd(d) => {
                if coords.len() != *d {
                    return Err(wrong_len(&d.to_string()));
                }
                Ok(GroupElement::Zd(coords))
            }
            GroupModel::Heisenberg => {
                if coords.len() != 3 {
                    return Err(wrong_len("3"));
                }
                Ok(GroupElement::heis(coords[0], coords[1], coords[2]))
            }
            GroupModel::Lamplighter => {
                let (cursor, lamps) = coords.split_first().ok_or_else(|| wrong_len("1 or more"))?;
                Ok(GroupElement::lamp(*cursor, lamps))
            }
        }
    }
}

fn mul_unchecked(g: &GroupElement, h: &GroupElement) -> GroupElement {
    match (g, h) {
        (GroupElement::Zd(a), GroupElement::Zd(b)) => {
            GroupElement::Zd(a.iter().zip(b).map(|(x, y)| x + y).collect())
        }
        (GroupElement::Heis([a, b, c]), GroupElement::Heis([a2, b2, c2])) => {
            GroupElement::Heis([a + a2, b + b2, c + c2 + a * b2])
        }
        (
            GroupElement::Lamp { cursor: t, lamps: f },
            GroupElement::Lamp {
                cursor: t2,
                lamps: f2,
            },
        ) => GroupElement::Lamp {
            cursor: t + t2,
            lamps: xor_sorted(&shifted(f, *t2), f2),
        },
        _ => unreachable!("model checked by caller"),
    }
}

fn inv_unchecked(g: &GroupElement) -> GroupElement {
    match g {
        GroupElement::Zd(a) => GroupElement::Zd(a.iter().map(|x| -x).collect()),
        GroupElement::Heis([a, b, c]) => GroupElement::Heis([-a, -b, -c + a * b]),
        GroupElement::Lamp { cursor, lamps } => GroupElement::Lamp {
            cursor: -cursor,
            lamps: shifted(lamps, -cursor),
        },
    }
}

/// Shortest walk from 0 that visits every lit lamp and stops at the cursor,
/// plus one toggle per lamp.
fn lamplighter_length(cursor: i64, lamps: &[i64]) -> u64 {
    let lo = lamps.first().copied().unwrap_or(0).min(0).min(cursor);
    let hi = lamps.last().copied().unwrap_or(0).max(0).max(cursor);
    let left_first = (0 - lo) + (hi - lo) + (hi - cursor);
    let right_first = hi + (hi - lo) + (cursor - lo);
    lamps.len() as u64 + left_first.min(right_first) as u64
}

/// Iterator over word-length spheres; see [`GroupModel::spheres`].
pub struct Spheres {
    gens: Vec<GroupElement>,
    visited: HashSet<GroupElement>,
    current: Vec<GroupElement>,
    started: bool,
    identity: GroupElement,
}

impl Iterator for Spheres {
    type Item = Vec<GroupElement>;

    fn next(&mut self) -> Option<Self::Item> {
        if !self.started {
            self.started = true;
            self.visited.insert(self.identity.clone());
            self.current = vec![self.identity.clone()];
            return Some(self.current.clone());
        }
        let mut next = Vec::new();
        for g in &self.current {
            for s in &self.gens {
                let h = mul_unchecked(g, s);
                if self.visited.insert(h.clone()) {
                    next.push(h);
                }
            }
        }
        next.sort();
        self.current = next;
        Some(self.current.clone())
    }
}

/// A finite set of group elements, kept sorted and duplicate-free.
#[derive(Clone, Debug)]
pub struct FiniteSubset {
    model: GroupModel,
    elems: Vec<GroupElement>,
    lookup: HashSet<GroupElement>,
}

impl PartialEq for FiniteSubset {
    fn eq(&self, other: &Self) -> bool {
        self.model == other.model && self.elems == other.elems
    }
}

impl Eq for FiniteSubset {}

impl FiniteSubset {
    pub fn new(model: GroupModel, elems: impl IntoIterator<Item = GroupElement>) -> Result<Self> {
        let elems: Vec<GroupElement> = elems.into_iter().collect();
        for g in &elems {
            model.check(g)?;
        }
        Ok(Self::from_valid(model, elems))
    }

    pub(crate) fn from_valid(model: GroupModel, mut elems: Vec<GroupElement>) -> Self {
        elems.sort();
        elems.dedup();
        let lookup = elems.iter().cloned().collect();
        FiniteSubset {
            model,
            elems,
            lookup,
        }
    }

    pub fn empty(model: GroupModel) -> Self {
        Self::from_valid(model, Vec::new())
    }

    pub fn singleton(model: GroupModel, g: GroupElement) -> Result<Self> {
        Self::new(model, [g])
    }

    pub fn identity(model: GroupModel) -> Self {
        Self::from_valid(model, vec![model.identity()])
    }

    /// `{0,…,n-1}^d`-style integer box in `Z^d` with the given side ranges.
    pub fn zd_box(ranges: &[std::ops::Range<i64>]) -> Self {
        let d = ranges.len();
        let mut out: Vec<Vec<i64>> = vec![Vec::with_capacity(d)];
        for r in ranges {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    r.clone().map(move |x| {
                        let mut v = prefix.clone();
                        v.push(x);
                        v
                    })
                })
                .collect();
        }
        Self::from_valid(GroupModel::Zd(d), out.into_iter().map(GroupElement::Zd).collect())
    }

    pub fn model(&self) -> GroupModel {
        self.model
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.lookup.contains(g)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, GroupElement> {
        self.elems.iter()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elems
    }

    pub fn first(&self) -> Option<&GroupElement> {
        self.elems.first()
    }

    fn same_model(&self, other: &FiniteSubset) -> Result<()> {
        if self.model == other.model {
            Ok(())
        } else {
            Err(Error::ModelMismatch {
                expected: self.model.to_string(),
                found: other.model.to_string(),
            })
        }
    }

    /// `A·B = {ab : a ∈ A, b ∈ B}`.
    pub fn product(&self, other: &FiniteSubset) -> Result<FiniteSubset> {
        self.same_model(other)?;
        let mut seen = HashSet::with_capacity(self.len() * other.len().min(64));
        for a in &self.elems {
            for b in &other.elems {
                seen.insert(mul_unchecked(a, b));
            }
        }
        Ok(Self::from_valid(self.model, seen.into_iter().collect()))
    }

    pub fn inverse(&self) -> FiniteSubset {
        Self::from_valid(self.model, self.elems.iter().map(inv_unchecked).collect())
    }

    /// `gA`.
    pub fn translate_left(&self, g: &GroupElement) -> Result<FiniteSubset> {
        self.model.check(g)?;
        Ok(Self::from_valid(
            self.model,
            self.elems.iter().map(|a| mul_unchecked(g, a)).collect(),
        ))
    }

    /// `Ag`.
    pub fn translate_right(&self, g: &GroupElement) -> Result<FiniteSubset> {
        self.model.check(g)?;
        Ok(Self::from_valid(
            self.model,
            self.elems.iter().map(|a| mul_unchecked(a, g)).collect(),
        ))
    }

    pub fn union(&self, other: &FiniteSubset) -> Result<FiniteSubset> {
        self.same_model(other)?;
        let mut v = self.elems.clone();
        v.extend(other.elems.iter().filter(|g| !self.contains(g)).cloned());
        Ok(Self::from_valid(self.model, v))
    }

    pub fn intersection(&self, other: &FiniteSubset) -> Result<FiniteSubset> {
        self.same_model(other)?;
        Ok(Self::from_valid(
            self.model,
            self.elems.iter().filter(|g| other.contains(g)).cloned().collect(),
        ))
    }

    pub fn difference(&self, other: &FiniteSubset) -> Result<FiniteSubset> {
        self.same_model(other)?;
        Ok(Self::from_valid(
            self.model,
            self.elems.iter().filter(|g| !other.contains(g)).cloned().collect(),
        ))
    }

    pub fn symmetric_difference(&self, other: &FiniteSubset) -> Result<FiniteSubset> {
        let mut v = self.difference(other)?.elems;
        v.extend(other.difference(self)?.elems);
        Ok(Self::from_valid(self.model, v))
    }

    pub fn intersection_len(&self, other: &FiniteSubset) -> usize {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.elems.iter().filter(|g| large.contains(g)).count()
    }

    pub fn is_subset(&self, other: &FiniteSubset) -> bool {
        self.model == other.model && self.elems.iter().all(|g| other.contains(g))
    }

    pub fn is_disjoint(&self, other: &FiniteSubset) -> bool {
        self.intersection_len(other) == 0
    }
}

impl<'a> IntoIterator for &'a FiniteSubset {
    type Item = &'a GroupElement;
    type IntoIter = std::slice::Iter<'a, GroupElement>;
    fn into_iter(self) -> Self::IntoIter {
        self.elems.iter()
    }
}

/// Reads the line-oriented subset format: one element per line, coordinates
/// separated by commas, `#` starts a comment. Lamplighter lines are
/// `cursor,lamp,lamp,…`.
pub fn parse_subset(model: GroupModel, text: &str) -> Result<FiniteSubset> {
    let mut elems = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let g = model.parse_element(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        elems.push(g);
    }
    Ok(FiniteSubset::from_valid(model, elems))
}

pub fn format_subset(set: &FiniteSubset) -> String {
    let mut out = format!("# {} ({} elements)\n", set.model(), set.len());
    for g in set {
        out.push_str(&g.to_string());
        out.push('\n');
    }
    out
}

/// `|F Δ gF| / |F|` as an exact fraction in `[0, 2]`.
pub fn symmetric_difference_ratio(f: &FiniteSubset, g: &GroupElement) -> Result<Ratio<u64>> {
    if f.is_empty() {
        return Err(Error::EmptySet("F"));
    }
    let gf = f.translate_left(g)?;
    let moved_out = gf.iter().filter(|h| !f.contains(h)).count() as u64;
    Ok(Ratio::new(2 * moved_out, f.len() as u64))
}

/// The `K`-boundary `B(A,K) = {g : Kg ∩ A ≠ ∅ and Kg ⊄ A}`.
pub fn k_boundary(a: &FiniteSubset, k: &FiniteSubset) -> Result<FiniteSubset> {
    if k.is_empty() {
        return Err(Error::EmptySet("K"));
    }
    a.same_model(k)?;
    // Kg meets A only if g ∈ K⁻¹A.
    let candidates = k.inverse().product(a)?;
    let boundary = candidates
        .elems
        .into_iter()
        .filter(|g| {
            let mut inside = false;
            let mut outside = false;
            for x in k {
                if a.contains(&mul_unchecked(x, g)) {
                    inside = true;
                } else {
                    outside = true;
                }
                if inside && outside {
                    return true;
                }
            }
            false
        })
        .collect();
    Ok(FiniteSubset::from_valid(a.model, boundary))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Invariance {
    pub boundary_size: u64,
    pub ratio: Ratio<u64>,
    pub invariant: bool,
}

/// Decides `(K, δ)`-invariance: `|B(A,K)| / |A| < δ`, compared exactly.
pub fn is_invariant(a: &FiniteSubset, k: &FiniteSubset, delta: f64) -> Result<Invariance> {
    let d = exact::decimal_rational(delta)
        .filter(|d| *d > BigRational::zero())
        .ok_or_else(|| Error::InvalidParameter(format!("δ must be positive, got {delta}")))?;
    is_invariant_exact(a, k, &d)
}

pub fn is_invariant_exact(a: &FiniteSubset, k: &FiniteSubset, delta: &BigRational) -> Result<Invariance> {
    if a.is_empty() {
        return Err(Error::EmptySet("A"));
    }
    let b = k_boundary(a, k)?.len() as u64;
    let lhs = BigRational::from_integer(BigInt::from(b));
    let rhs = delta * BigRational::from_integer(BigInt::from(a.len()));
    Ok(Invariance {
        boundary_size: b,
        ratio: Ratio::new(b, a.len() as u64),
        invariant: lhs < rhs,
    })
}

#[derive(Clone, Debug)]
enum FolnerRule {
    Boxes,
    Explicit(Vec<FiniteSubset>),
}

/// A Følner sequence `n ↦ F_n`, indexed from `n = 1`.
///
/// Built-in shapes: boxes `[0,n)^d` in `Z^d`; `{(a,b,c): 0 ≤ a,b < n, 0 ≤ c < n²}`
/// in `H₃`; lamps supported in `[0,n)` with cursor in `[0,n)` for the
/// lamplighter.
#[derive(Clone, Debug)]
pub struct FolnerSequence {
    model: GroupModel,
    rule: FolnerRule,
    cap: Option<u64>,
}

impl FolnerSequence {
    pub fn boxes(model: GroupModel) -> Self {
        FolnerSequence {
            model,
            rule: FolnerRule::Boxes,
            cap: None,
        }
    }

    /// A user-supplied list; `sets[0]` is `F_1`.
    pub fn explicit(model: GroupModel, sets: Vec<FiniteSubset>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::EmptySet("explicit Følner list"));
        }
        for s in &sets {
            if s.model() != model {
                return Err(Error::ModelMismatch {
                    expected: model.to_string(),
                    found: s.model().to_string(),
                });
            }
            if s.is_empty() {
                return Err(Error::EmptySet("Følner set"));
            }
        }
        Ok(FolnerSequence {
            model,
            rule: FolnerRule::Explicit(sets),
            cap: None,
        })
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn model(&self) -> GroupModel {
        self.model
    }

    pub fn is_builtin(&self) -> bool {
        matches!(self.rule, FolnerRule::Boxes)
    }

    /// Largest available index, if any.
    pub fn cap(&self) -> Option<u64> {
        let list = match &self.rule {
            FolnerRule::Explicit(v) => Some(v.len() as u64),
            FolnerRule::Boxes => None,
        };
        match (self.cap, list) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn check_index(&self, n: u64) -> Result<()> {
        let cap = self.cap().unwrap_or(u64::MAX);
        if n == 0 || n > cap {
            return Err(Error::IndexUnavailable { n, cap });
        }
        Ok(())
    }

    /// `|F_n|`, saturating at `u128::MAX`.
    pub fn cardinality(&self, n: u64) -> Result<u128> {
        self.check_index(n)?;
        let m = n as u128;
        Ok(match &self.rule {
            FolnerRule::Explicit(v) => v[(n - 1) as usize].len() as u128,
            FolnerRule::Boxes => match self.model {
                GroupModel::Zd(d) => m.checked_pow(d as u32).unwrap_or(u128::MAX),
                GroupModel::Heisenberg => m.checked_pow(4).unwrap_or(u128::MAX),
                GroupModel::Lamplighter => 1u128
                    .checked_shl(n as u32)
                    .filter(|_| n < 128)
                    .and_then(|p| p.checked_mul(m))
                    .unwrap_or(u128::MAX),
            },
        })
    }

    pub fn set(&self, n: u64) -> Result<FiniteSubset> {
        let size = self.cardinality(n)?;
        if size > MATERIALIZE_BUDGET {
            return Err(Error::budget(size, MATERIALIZE_BUDGET));
        }
        let m = n as i64;
        Ok(match &self.rule {
            FolnerRule::Explicit(v) => v[(n - 1) as usize].clone(),
            FolnerRule::Boxes => match self.model {
                GroupModel::Zd(d) => FiniteSubset::zd_box(&vec![0..m; d]),
                GroupModel::Heisenberg => {
                    let mut v = Vec::with_capacity(size as usize);
                    for a in 0..m {
                        for b in 0..m {
                            for c in 0..m * m {
                                v.push(GroupElement::Heis([a, b, c]));
                            }
                        }
                    }
                    FiniteSubset::from_valid(self.model, v)
                }
                GroupModel::Lamplighter => {
                    let mut v = Vec::with_capacity(size as usize);
                    for cursor in 0..m {
                        for mask in 0u64..(1u64 << n) {
                            let lamps: Vec<i64> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
                            v.push(GroupElement::Lamp { cursor, lamps });
                        }
                    }
                    FiniteSubset::from_valid(self.model, v)
                }
            },
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TemperednessReport {
    /// `(n, |∪_{k<n} F_k⁻¹F_n|, |F_n|)` for `2 ≤ n ≤ n_max`.
    pub per_n: Vec<(u64, u64, u64)>,
    pub constant: f64,
    pub attained_at: u64,
}

/// Lower estimate of the Shulman constant: `max_{2≤n≤n_max} |∪_{k<n}F_k⁻¹F_n| / |F_n|`.
///
/// `max_elements` bounds the size of any single product set that would be
/// enumerated.
pub fn temperedness_constant(
    seq: &FolnerSequence,
    n_max: u64,
    max_elements: u128,
) -> Result<TemperednessReport> {
    if n_max < 2 {
        return Err(Error::InvalidParameter("temperedness needs n_max ≥ 2".into()));
    }
    let mut per_n = Vec::new();
    let mut best: Option<Ratio<u64>> = None;
    let mut attained_at = 2;
    let mut inverses: Vec<FiniteSubset> = Vec::new();
    for n in 1..=n_max {
        let fn_set = seq.set(n)?;
        if n >= 2 {
            let mut union: HashSet<GroupElement> = HashSet::new();
            for inv in &inverses {
                let work = inv.len() as u128 * fn_set.len() as u128;
                if work > max_elements {
                    return Err(Error::budget(work, max_elements));
                }
                for a in inv {
                    for b in &fn_set {
                        union.insert(mul_unchecked(a, b));
                    }
                }
            }
            let r = Ratio::new(union.len() as u64, fn_set.len() as u64);
            per_n.push((n, union.len() as u64, fn_set.len() as u64));
            if best.is_none_or(|b| r > b) {
                best = Some(r);
                attained_at = n;
            }
        }
        inverses.push(fn_set.inverse());
    }
    let c = best.expect("n_max ≥ 2");
    Ok(TemperednessReport {
        per_n,
        constant: *c.numer() as f64 / *c.denom() as f64,
        attained_at,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthRow {
    pub n: u64,
    pub size: u128,
    pub size_over_log_n: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthTable {
    pub rows: Vec<GrowthRow>,
    /// First `n` at which `|F_n| ≤ |F_{n-1}|`, if any.
    pub first_non_monotone: Option<u64>,
}

/// Rows `(n, |F_n|, |F_n| / ln n)` for `2 ≤ n ≤ n_max`.
pub fn growth_diagnostic(seq: &FolnerSequence, n_max: u64) -> Result<GrowthTable> {
    if n_max < 2 {
        return Err(Error::InvalidParameter("growth diagnostic needs n_max ≥ 2".into()));
    }
    let mut rows = Vec::new();
    let mut first_non_monotone = None;
    let mut prev = seq.cardinality(1)?;
    for n in 2..=n_max {
        let size = seq.cardinality(n)?;
        if size <= prev && first_non_monotone.is_none() {
            first_non_monotone = Some(n);
        }
        prev = size;
        rows.push(GrowthRow {
            n,
            size,
            size_over_log_n: size as f64 / (n as f64).ln(),
        });
    }
    Ok(GrowthTable {
        rows,
        first_non_monotone,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FolnerRatioRow {
    pub n: u64,
    pub size: u64,
    pub generator: String,
    pub ratio: f64,
    pub numer: u64,
    pub denom: u64,
}

/// `|F_n Δ sF_n| / |F_n|` for every standard generator `s` and `1 ≤ n ≤ n_max`.
pub fn folner_profile(seq: &FolnerSequence, n_max: u64) -> Result<Vec<FolnerRatioRow>> {
    let gens = seq.model().generators();
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let f = seq.set(n)?;
        for g in &gens {
            let r = symmetric_difference_ratio(&f, g)?;
            rows.push(FolnerRatioRow {
                n,
                size: f.len() as u64,
                generator: g.to_string(),
                ratio: *r.numer() as f64 / *r.denom() as f64,
                numer: *r.numer(),
                denom: *r.denom(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(v: &[i64]) -> GroupElement {
        GroupElement::zd(v)
    }

    fn interval(a: i64, b: i64) -> FiniteSubset {
        FiniteSubset::zd_box(&[a..b])
    }

    #[test]
    fn multiplication_examples() {
        let z2 = GroupModel::Zd(2);
        assert_eq!(z2.mul(&z(&[1, 2]), &z(&[3, 4])).unwrap(), z(&[4, 6]));
        let h = GroupModel::Heisenberg;
        assert_eq!(
            h.mul(&GroupElement::heis(1, 0, 0), &GroupElement::heis(0, 1, 0)).unwrap(),
            GroupElement::heis(1, 1, 1)
        );
        assert_eq!(h.inv(&GroupElement::heis(1, 0, 0)).unwrap(), GroupElement::heis(-1, 0, 0));
        assert!(h.mul(&GroupElement::heis(1, 0, 0), &z(&[1, 2])).is_err());
        assert!(GroupModel::Zd(3).inv(&z(&[1, 2])).is_err());
    }

    #[test]
    fn lamplighter_generators_act_as_expected() {
        let l = GroupModel::Lamplighter;
        let g = GroupElement::lamp(3, &[1, 5]);
        let step = GroupElement::lamp(1, &[]);
        let toggle = GroupElement::lamp(0, &[0]);
        // left multiplication: step moves the cursor, toggle flips the lamp under it
        assert_eq!(l.mul(&step, &g).unwrap(), GroupElement::lamp(4, &[1, 5]));
        assert_eq!(l.mul(&toggle, &g).unwrap(), GroupElement::lamp(3, &[1, 3, 5]));
        assert_eq!(l.mul(&g, &l.inv(&g).unwrap()).unwrap(), l.identity());
    }

    #[test]
    fn word_lengths_match_bfs() {
        for model in [GroupModel::Lamplighter, GroupModel::Zd(2)] {
            for (r, layer) in model.spheres().take(6).enumerate() {
                for g in layer {
                    assert_eq!(model.word_length(&g).unwrap(), r as u64, "{g}");
                }
            }
        }
        let h = GroupModel::Heisenberg;
        assert_eq!(h.word_length(&GroupElement::heis(1, 1, 1)).unwrap(), 2);
        assert_eq!(h.word_length(&GroupElement::heis(0, 0, 1)).unwrap(), 4);
    }

    #[test]
    fn set_operation_examples() {
        let a = interval(0, 3);
        let b = interval(0, 2);
        assert_eq!(a.product(&b).unwrap(), interval(0, 4));
        assert_eq!(a.inverse(), interval(-2, 1));
        let sq = FiniteSubset::zd_box(&[0..2, 0..2]);
        let t = sq.translate_left(&z(&[1, 0])).unwrap();
        let want = FiniteSubset::new(GroupModel::Zd(2), [z(&[1, 0]), z(&[1, 1]), z(&[2, 0]), z(&[2, 1])]).unwrap();
        assert_eq!(t, want);
        assert!(a.product(&sq).is_err());
    }

    #[test]
    fn symmetric_difference_examples() {
        let f = FiniteSubset::zd_box(&[0..10, 0..10]);
        assert_eq!(symmetric_difference_ratio(&f, &z(&[1, 0])).unwrap(), Ratio::new(1, 5));
        assert_eq!(symmetric_difference_ratio(&f, &z(&[0, 0])).unwrap(), Ratio::new(0, 1));
        assert_eq!(symmetric_difference_ratio(&interval(0, 5), &z(&[7])).unwrap(), Ratio::new(2, 1));
        assert!(symmetric_difference_ratio(&FiniteSubset::empty(GroupModel::Zd(1)), &z(&[1])).is_err());
    }

    #[test]
    fn boundary_examples() {
        let a = FiniteSubset::zd_box(&[0..4, 0..4]);
        let k = FiniteSubset::new(GroupModel::Zd(2), [z(&[0, 0]), z(&[1, 0])]).unwrap();
        let b = k_boundary(&a, &k).unwrap();
        assert_eq!(b.len(), 8);
        assert!(b.iter().all(|g| matches!(g, GroupElement::Zd(v) if v[0] == -1 || v[0] == 3)));
        assert!(k_boundary(&a, &FiniteSubset::identity(GroupModel::Zd(2))).unwrap().is_empty());
        let b = k_boundary(&interval(0, 10), &interval(0, 2)).unwrap();
        assert_eq!(b, FiniteSubset::new(GroupModel::Zd(1), [z(&[-1]), z(&[9])]).unwrap());
        assert!(k_boundary(&a, &FiniteSubset::empty(GroupModel::Zd(2))).is_err());
    }

    #[test]
    fn invariance_examples() {
        let a = FiniteSubset::zd_box(&[0..4, 0..4]);
        let k = FiniteSubset::new(GroupModel::Zd(2), [z(&[0, 0]), z(&[1, 0])]).unwrap();
        let r = is_invariant(&a, &k, 0.6).unwrap();
        assert_eq!(r.ratio, Ratio::new(1, 2));
        assert!(r.invariant);
        assert!(!is_invariant(&a, &k, 0.5).unwrap().invariant);
        let r = is_invariant(&interval(0, 100), &interval(0, 2), 0.03).unwrap();
        assert_eq!(r.ratio, Ratio::new(2, 100));
        assert!(r.invariant);
        assert!(is_invariant(&FiniteSubset::empty(GroupModel::Zd(1)), &interval(0, 2), 0.1).is_err());
    }

    #[test]
    fn temperedness_examples() {
        let seq = FolnerSequence::boxes(GroupModel::Zd(1));
        let t = temperedness_constant(&seq, 10, 1 << 20).unwrap();
        assert_eq!(t.constant, 1.8);
        assert_eq!(t.attained_at, 10);
        let t = temperedness_constant(&seq, 2, 1 << 20).unwrap();
        assert_eq!(t.per_n, vec![(2, 2, 2)]);
        let t = temperedness_constant(&FolnerSequence::boxes(GroupModel::Zd(2)), 6, 1 << 20).unwrap();
        for (n, u, _) in &t.per_n {
            assert_eq!(*u, (2 * n - 2) * (2 * n - 2));
        }
        assert!(t.constant <= 4.0);
        assert!(temperedness_constant(&seq, 10, 4).is_err());
        assert!(temperedness_constant(&seq, 1, 4).is_err());
    }

    #[test]
    fn growth_examples() {
        let t = growth_diagnostic(&FolnerSequence::boxes(GroupModel::Zd(1)), 8).unwrap();
        let last = t.rows.last().unwrap();
        assert_eq!((last.n, last.size), (8, 8));
        assert!((last.size_over_log_n - 3.847).abs() < 1e-3);
        assert_eq!(t.rows[0].size_over_log_n, 2.0 / 2f64.ln());
        let h = growth_diagnostic(&FolnerSequence::boxes(GroupModel::Heisenberg), 2).unwrap();
        assert_eq!(h.rows[0].size, 16);
        assert!(t.first_non_monotone.is_none());
        let flat = FolnerSequence::explicit(GroupModel::Zd(1), vec![interval(0, 2), interval(0, 2)]).unwrap();
        assert_eq!(growth_diagnostic(&flat, 2).unwrap().first_non_monotone, Some(2));
    }

    #[test]
    fn builtin_sets_have_stated_sizes() {
        let lamp = FolnerSequence::boxes(GroupModel::Lamplighter);
        assert_eq!(lamp.set(3).unwrap().len(), 24);
        assert_eq!(FolnerSequence::boxes(GroupModel::Heisenberg).set(3).unwrap().len(), 81);
        let capped = FolnerSequence::boxes(GroupModel::Zd(1)).with_cap(5);
        assert!(capped.set(6).is_err());
        assert!(capped.set(0).is_err());
    }

    #[test]
    fn subset_text_format() {
        let text = "# header\n1,2\n\n3,4 # trailing\n1,2\n";
        let s = parse_subset(GroupModel::Zd(2), text).unwrap();
        assert_eq!(s.len(), 2);
        let back = parse_subset(GroupModel::Zd(2), &format_subset(&s)).unwrap();
        assert_eq!(back, s);
        let err = parse_subset(GroupModel::Zd(2), "1,2\n1,2,3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let l = parse_subset(GroupModel::Lamplighter, "2,0,1\n-1\n").unwrap();
        assert!(l.contains(&GroupElement::lamp(2, &[0, 1])));
        assert!(l.contains(&GroupElement::lamp(-1, &[])));
    }

    #[test]
    fn model_ids() {
        for id in ["zd:1", "zd:3", "heis3", "lamplighter"] {
            assert_eq!(id.parse::<GroupModel>().unwrap().to_string(), id);
        }
        assert!("zd:0".parse::<GroupModel>().is_err());
        assert!("free2".parse::<GroupModel>().is_err());
    }

    #[test]
    fn builtin_ratios_do_not_grow_under_doubling() {
        for model in [GroupModel::Zd(1), GroupModel::Zd(2), GroupModel::Zd(3), GroupModel::Heisenberg, GroupModel::Lamplighter] {
            let seq = FolnerSequence::boxes(model);
            let top = if model == GroupModel::Lamplighter { 4 } else { 6 };
            for n in 1..=top {
                let (f, f2) = (seq.set(n).unwrap(), seq.set(2 * n).unwrap());
                for g in model.generators() {
                    let (r, r2) = (
                        symmetric_difference_ratio(&f, &g).unwrap(),
                        symmetric_difference_ratio(&f2, &g).unwrap(),
                    );
                    assert!(r2 <= r, "{model} n={n} g={g}: {r2} > {r}");
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn model() -> impl Strategy<Value = GroupModel> {
            prop_oneof![Just(GroupModel::Zd(2)), Just(GroupModel::Heisenberg), Just(GroupModel::Lamplighter)]
        }

        /// Product of symmetric generators picked by index.
        fn word(m: GroupModel, w: &[usize]) -> GroupElement {
            let gens = m.symmetric_generators();
            w.iter()
                .fold(m.identity(), |acc, &i| m.mul(&acc, &gens[i % gens.len()]).unwrap())
        }

        fn subset(m: GroupModel, words: &[Vec<usize>]) -> FiniteSubset {
            FiniteSubset::new(m, words.iter().map(|w| word(m, w))).unwrap()
        }

        fn words(max_len: usize, max_count: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
            prop::collection::vec(prop::collection::vec(0usize..8, 0..=max_len), 1..=max_count)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn boundary_matches_definition(m in model(), a in words(2, 6), k in words(2, 4)) {
                let (a, k) = (subset(m, &a), subset(m, &k));
                let fast = k_boundary(&a, &k).unwrap();
                // Kg meets A forces |g| ≤ |x| + |a| ≤ 4.
                let brute: Vec<GroupElement> = m
                    .ball(4)
                    .iter()
                    .filter(|g| {
                        let kg = k.translate_right(g).unwrap();
                        kg.intersection_len(&a) > 0 && !kg.is_subset(&a)
                    })
                    .cloned()
                    .collect();
                prop_assert_eq!(fast, FiniteSubset::new(m, brute).unwrap());
            }

            #[test]
            fn identity_ratio_is_zero(m in model(), f in words(3, 8)) {
                let f = subset(m, &f);
                prop_assert!(symmetric_difference_ratio(&f, &m.identity()).unwrap().is_zero());
            }

            #[test]
            fn box_boundary_under_unit_shift(d in 1usize..=3, n in 1i64..=8) {
                let f = FiniteSubset::zd_box(&vec![0..n; d]);
                for g in GroupModel::Zd(d).generators() {
                    let moved = f.symmetric_difference(&f.translate_left(&g).unwrap()).unwrap();
                    prop_assert_eq!(moved.len() as i64, 2 * n.pow(d as u32 - 1));
                }
            }

            #[test]
            fn cardinality_laws(m in model(), a in words(3, 6), b in words(3, 6), g in prop::collection::vec(0usize..8, 0..4)) {
                let (a, b, g) = (subset(m, &a), subset(m, &b), word(m, &g));
                prop_assert_eq!(a.translate_left(&g).unwrap().len(), a.len());
                prop_assert_eq!(a.translate_right(&g).unwrap().len(), a.len());
                prop_assert_eq!(a.inverse().len(), a.len());
                prop_assert_eq!(a.inverse().inverse(), a.clone());
                let ab = a.product(&b).unwrap();
                prop_assert!(ab.len() >= a.len().max(b.len()));
                prop_assert!(ab.len() <= a.len() * b.len());
            }
        }
    }
}
