//! Partition entropy, Katok covering numbers, SMB traces, topological
//! entropy of shifts and the Hamming-ball count used to bound the number of
//! cylinders near a typical one. All logarithms are natural.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact;
use crate::group::{FiniteSubset, FolnerSequence};
use crate::shift::{self, MeasureModel, Pattern, ShiftKind, ShiftSystem, Symbol, ENUMERATION_BUDGET};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: u64,
    pub size: u128,
    pub value: f64,
}

/// Min, max and last value over the final third of a curve: the finite-`n`
/// stand-ins for `liminf`, `limsup` and the limit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailWindow {
    pub from_n: u64,
    pub min: f64,
    pub max: f64,
    pub last: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyCurve {
    pub points: Vec<CurvePoint>,
    /// Indices that could not be computed, with the reason.
    pub skipped: Vec<(u64, String)>,
    pub tail: Option<TailWindow>,
}

impl EntropyCurve {
    pub fn new(mut points: Vec<CurvePoint>, skipped: Vec<(u64, String)>) -> Result<Self> {
        points.sort_by_key(|p| p.n);
        if points.windows(2).any(|w| w[0].n == w[1].n) {
            return Err(Error::InvalidParameter("duplicate n in entropy curve".into()));
        }
        if points.iter().any(|p| !p.value.is_finite()) {
            return Err(Error::InvalidParameter("entropy curve values must be finite".into()));
        }
        let tail = tail_window(&points);
        Ok(EntropyCurve { points, skipped, tail })
    }

    pub fn value_at(&self, n: u64) -> Option<f64> {
        self.points.iter().find(|p| p.n == n).map(|p| p.value)
    }

    /// Largest value over `n ∈ [lo, hi]`.
    pub fn max_over(&self, lo: u64, hi: u64) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| (lo..=hi).contains(&p.n))
            .map(|p| p.value)
            .reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,size,value\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.n, p.size, p.value));
        }
        out
    }
}

fn tail_window(points: &[CurvePoint]) -> Option<TailWindow> {
    let len = points.len();
    if len == 0 {
        return None;
    }
    let tail = &points[len - len.div_ceil(3)..];
    Some(TailWindow {
        from_n: tail[0].n,
        min: tail.iter().map(|p| p.value).fold(f64::INFINITY, f64::min),
        max: tail.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max),
        last: tail[tail.len() - 1].value,
    })
}

/// Every vector of `q` nonnegative counts summing to `n`.
pub(crate) fn count_vectors(n: usize, q: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(left - k, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, q, &mut Vec::with_capacity(q), &mut out);
    out
}

pub(crate) fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

pub(crate) fn multinomial(counts: &[usize]) -> BigUint {
    let mut left: u64 = counts.iter().sum::<usize>() as u64;
    let mut acc = BigUint::one();
    for &k in counts {
        acc *= binomial(left, k as u64);
        left -= k as u64;
    }
    acc
}

/// The distinct cylinders on `w` grouped into classes of equal measure:
/// `(measure of one cylinder, number of cylinders)`, zero-measure classes
/// dropped.
fn cylinder_classes(mu: &MeasureModel, w: &FiniteSubset) -> Result<Vec<(BigRational, BigUint)>> {
    match mu {
        MeasureModel::Bernoulli(b) => {
            let p = b.exact_probs();
            Ok(count_vectors(w.len(), p.len())
                .into_iter()
                .filter_map(|k| {
                    let mut m = BigRational::one();
                    for (pa, &ka) in p.iter().zip(&k) {
                        m *= num_traits::pow(pa.clone(), ka);
                    }
                    (!m.is_zero()).then(|| (m, multinomial(&k)))
                })
                .collect())
        }
        MeasureModel::Empirical(e) => {
            if !w.is_subset(e.window()) {
                return Err(Error::InsufficientWindow(
                    "window exceeds the empirical sample window".into(),
                ));
            }
            let mut counts: HashMap<Vec<Symbol>, u64> = HashMap::new();
            for s in e.samples() {
                *counts.entry(s.symbols_on(w)?).or_default() += 1;
            }
            let total = e.samples().len() as u64;
            Ok(counts
                .into_values()
                .map(|c| (BigRational::new(c.into(), total.into()), BigUint::one()))
                .collect())
        }
    }
}

fn check_window_budget(q: usize, cells: usize) -> Result<()> {
    let count = (q as u128).checked_pow(cells as u32).unwrap_or(u128::MAX);
    if count > ENUMERATION_BUDGET {
        return Err(Error::budget(format!("{q}^{cells}"), ENUMERATION_BUDGET));
    }
    Ok(())
}

/// `H(P_F) = -Σ μ(C) ln μ(C)` over the `F`-cylinders of the alphabet partition.
pub fn partition_entropy(mu: &MeasureModel, f: &FiniteSubset) -> Result<f64> {
    check_window_budget(mu.alphabet(), f.len())?;
    let mut h = 0.0;
    for (m, mult) in cylinder_classes(mu, f)? {
        let lm = exact::ln_rational(&m);
        h -= exact::to_f64(&(&m * BigRational::from_integer(mult.into()))) * lm;
    }
    Ok(h)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KatokCount {
    #[serde(serialize_with = "serialize_big")]
    pub count: BigUint,
    pub window_size: usize,
    pub radius: u64,
}

fn serialize_big<S: serde::Serializer>(n: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&n.to_string())
}

/// `N(F, ε, δ)`: the least number of Bowen balls covering measure `≥ 1-δ`.
///
/// Under the word-length metric the balls are exactly the cylinders on
/// `B_m·F` and distinct ones are disjoint, so the optimum takes the heaviest
/// cylinders first. Cylinders of equal measure are counted in bulk.
pub fn katok_covering_number(mu: &MeasureModel, f: &FiniteSubset, epsilon: f64, delta: f64) -> Result<KatokCount> {
    let d = exact::decimal_rational(delta)
        .filter(|d| *d >= BigRational::zero() && *d < BigRational::one())
        .ok_or_else(|| Error::InvalidParameter(format!("δ must lie in [0, 1), got {delta}")))?;
    if f.is_empty() {
        return Err(Error::EmptySet("F"));
    }
    let bw = shift::bowen_window(f, epsilon)?;
    check_window_budget(mu.alphabet(), bw.window.len())?;
    let mut classes = cylinder_classes(mu, &bw.window)?;
    classes.sort_by(|a, b| b.0.cmp(&a.0));
    let target = BigRational::one() - d;
    let mut covered = BigRational::zero();
    let mut count = BigUint::zero();
    for (m, mult) in classes {
        let mass = &m * BigRational::from_integer(mult.clone().into());
        if &covered + &mass < target {
            covered += mass;
            count += mult;
            continue;
        }
        let need = ((&target - &covered) / &m).ceil().to_integer();
        count += need.to_biguint().expect("nonnegative");
        return Ok(KatokCount {
            count,
            window_size: bw.window.len(),
            radius: bw.radius,
        });
    }
    // Only reachable when rounding left the total below 1, which exact
    // marginals rule out.
    Err(Error::Certificate {
        stage: "katok_covering_number".into(),
        detail: "cylinder masses do not reach 1 - δ".into(),
    })
}

fn curve_over<F>(ns: &[u64], seq: &FolnerSequence, eval: F) -> Result<EntropyCurve>
where
    F: Fn(u64, &FiniteSubset) -> Result<f64> + Sync,
{
    let results: Vec<(u64, Result<CurvePoint>)> = ns
        .par_iter()
        .map(|&n| {
            let r = seq.set(n).and_then(|f| {
                let value = eval(n, &f)?;
                Ok(CurvePoint {
                    n,
                    size: f.len() as u128,
                    value,
                })
            });
            (n, r)
        })
        .collect();
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for (n, r) in results {
        match r {
            Ok(p) => points.push(p),
            Err(e @ Error::BudgetExceeded { .. }) => skipped.push((n, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    EntropyCurve::new(points, skipped)
}

/// `n ↦ ln N(F_n, ε, δ) / |F_n|`; indices over budget are skipped and listed.
pub fn katok_entropy_curve(
    mu: &MeasureModel,
    seq: &FolnerSequence,
    epsilon: f64,
    delta: f64,
    ns: &[u64],
) -> Result<EntropyCurve> {
    curve_over(ns, seq, |_, f| {
        let k = katok_covering_number(mu, f, epsilon, delta)?;
        Ok(exact::ln_biguint(&k.count) / f.len() as f64)
    })
}

/// `n ↦ -ln μ(P_{F_n}(x)) / |F_n|` for one point `x`.
pub fn smb_trace(mu: &MeasureModel, x: &Pattern, seq: &FolnerSequence, ns: &[u64]) -> Result<EntropyCurve> {
    curve_over(ns, seq, |_, f| {
        let m = shift::cylinder_measure_exact(mu, &x.restrict(f)?)?;
        if m.is_zero() {
            return Err(Error::InvalidParameter("x lies in a null cylinder".into()));
        }
        Ok(-exact::ln_rational(&m) / f.len() as f64)
    })
}

/// `n ↦ ln #{admissible F_n-patterns} / |F_n|`.
pub fn topological_entropy_curve(sys: &ShiftSystem, seq: &FolnerSequence, ns: &[u64]) -> Result<EntropyCurve> {
    if let ShiftKind::Full = sys.kind() {
        let mut points = Vec::new();
        for &n in ns {
            let size = seq.cardinality(n)?;
            points.push(CurvePoint {
                n,
                size,
                value: (sys.alphabet() as f64).ln(),
            });
        }
        return EntropyCurve::new(points, Vec::new());
    }
    curve_over(ns, seq, |_, f| {
        Ok(exact::ln_biguint(&sys.count_admissible(f)?) / f.len() as f64)
    })
}

fn floor_eps_n(n: u64, epsilon: f64) -> Result<u64> {
    let e = exact::decimal_rational(epsilon)
        .filter(|e| *e > BigRational::zero() && *e < BigRational::one())
        .ok_or_else(|| Error::InvalidParameter(format!("ε must lie in (0, 1), got {epsilon}")))?;
    Ok(exact::floor_u64(&(e * BigRational::from_integer(n.into()))))
}

/// `L = Σ_{j=0}^{⌊εn⌋} C(n,j)(q-1)^j`: words within Hamming distance `εn` of a fixed word.
pub fn hamming_ball_count(n: u64, epsilon: f64, q: u64) -> Result<BigUint> {
    if q < 2 {
        return Err(Error::InvalidParameter("partition size must be at least 2".into()));
    }
    let top = floor_eps_n(n, epsilon)?;
    Ok((0..=top)
        .map(|j| binomial(n, j) * BigUint::from(q - 1).pow(j as u32))
        .sum())
}

/// `η(ε, q) = ε + ε ln(q-1) - ε ln ε - (1-ε) ln(1-ε)`, so that `L ≤ e^{ηn}`.
pub fn eta_bound(epsilon: f64, q: u64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) || q < 2 {
        return Err(Error::InvalidParameter(format!("need 0 < ε < 1 and q ≥ 2, got ({epsilon}, {q})")));
    }
    let e = epsilon;
    Ok(e + e * ((q - 1) as f64).ln() - e * e.ln() - (1.0 - e) * (1.0 - e).ln())
}

/// Natural log of the cruder bound `εn · C(n, ⌊εn⌋) · (q-1)^{εn}`.
pub fn hamming_binomial_bound_ln(n: u64, epsilon: f64, q: u64) -> Result<f64> {
    let top = floor_eps_n(n, epsilon)?;
    let en = epsilon * n as f64;
    Ok(en.ln() + exact::ln_biguint(&binomial(n, top)) + en * ((q - 1) as f64).ln())
}

/// `ln` of a count, for reporting.
pub fn ln_count(n: &BigUint) -> f64 {
    n.to_f64().map(f64::ln).unwrap_or_else(|| exact::ln_biguint(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{GroupElement, GroupModel};
    use crate::shift::sample_pattern;

    fn interval(a: i64, b: i64) -> FiniteSubset {
        FiniteSubset::zd_box(&[a..b])
    }

    fn bern(p: &[f64]) -> MeasureModel {
        MeasureModel::bernoulli(p.to_vec()).unwrap()
    }

    #[test]
    fn partition_entropy_examples() {
        let h = partition_entropy(&bern(&[0.5, 0.5]), &interval(0, 5)).unwrap();
        assert!((h - 5.0 * 2f64.ln()).abs() < 1e-12);
        let h = partition_entropy(&bern(&[0.8, 0.2]), &interval(0, 1)).unwrap();
        assert!((h - 0.5004024235381879).abs() < 1e-12);
        assert_eq!(partition_entropy(&bern(&[1.0, 0.0]), &interval(0, 7)).unwrap(), 0.0);
        assert!(partition_entropy(&bern(&[0.5, 0.5]), &interval(0, 25)).is_err());
    }

    #[test]
    fn katok_examples() {
        let n = katok_covering_number(&bern(&[0.5, 0.5]), &interval(0, 3), 0.6, 0.1).unwrap();
        assert_eq!(n.count, BigUint::from(8u32));
        let n = katok_covering_number(&bern(&[0.8, 0.2]), &interval(0, 2), 0.6, 0.1).unwrap();
        assert_eq!(n.count, BigUint::from(3u32));
        let n = katok_covering_number(&bern(&[0.3, 0.3, 0.4]), &interval(0, 4), 0.9, 0.0).unwrap();
        assert_eq!(n.count, BigUint::from(81u32));
        // radius 1 thickens [0,3) to [-1,4)
        let n = katok_covering_number(&bern(&[0.5, 0.5]), &interval(0, 3), 0.5, 0.0).unwrap();
        assert_eq!((n.window_size, n.count), (5, BigUint::from(32u32)));
        assert!(katok_covering_number(&bern(&[0.5, 0.5]), &interval(0, 3), 0.6, 1.0).is_err());
    }

    #[test]
    fn katok_curve_at_three_is_ln2() {
        let seq = FolnerSequence::boxes(GroupModel::Zd(1));
        let c = katok_entropy_curve(&bern(&[0.5, 0.5]), &seq, 0.6, 0.1, &[3]).unwrap();
        assert_eq!(c.value_at(3).unwrap(), 8f64.ln() / 3.0);
    }

    #[test]
    fn katok_curve_skips_over_budget_indices() {
        let seq = FolnerSequence::boxes(GroupModel::Zd(1));
        let c = katok_entropy_curve(&bern(&[0.5, 0.5]), &seq, 0.6, 0.1, &[2, 30]).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.skipped[0].0, 30);
    }

    #[test]
    fn empirical_katok_counts_distinct_samples() {
        let w = interval(0, 2);
        let pats = [[0, 0], [0, 0], [0, 1], [1, 1]];
        let samples = pats.iter().map(|s| Pattern::from_symbols(&w, s).unwrap()).collect();
        let mu = MeasureModel::Empirical(shift::Empirical::new(2, w.clone(), samples).unwrap());
        assert_eq!(katok_covering_number(&mu, &w, 0.6, 0.5).unwrap().count, BigUint::from(1u32));
        assert_eq!(katok_covering_number(&mu, &w, 0.6, 0.2).unwrap().count, BigUint::from(3u32));
        let h = partition_entropy(&mu, &w).unwrap();
        assert!((h - (0.5 * 2f64.ln() + 2.0 * 0.25 * 4f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn smb_examples() {
        let seq = FolnerSequence::boxes(GroupModel::Zd(1));
        let w = interval(0, 12);
        let half = bern(&[0.5, 0.5]);
        let x = sample_pattern(&half, &w, 5).unwrap();
        let c = smb_trace(&half, &x, &seq, &(1..=12).collect::<Vec<_>>()).unwrap();
        assert!(c.points.iter().all(|p| (p.value - 2f64.ln()).abs() < 1e-12));

        let mut symbols = vec![0; 7];
        symbols.extend([1, 1, 1]);
        let x = Pattern::from_symbols(&interval(0, 10), &symbols).unwrap();
        let c = smb_trace(&bern(&[0.8, 0.2]), &x, &seq, &[10]).unwrap();
        let want = -(0.8f64.powi(7) * 0.2f64.powi(3)).ln() / 10.0;
        assert!((c.value_at(10).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.639).abs() < 1e-3);

        let det = bern(&[1.0, 0.0]);
        let x = Pattern::constant(&w, 0);
        let c = smb_trace(&det, &x, &seq, &[4, 8]).unwrap();
        assert!(c.points.iter().all(|p| p.value == 0.0));
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_ball_count(10, 0.2, 2).unwrap(), BigUint::from(56u32));
        let eta = eta_bound(0.2, 2).unwrap();
        assert!((eta - 0.7004).abs() < 1e-4);
        assert!((10.0 * eta).exp() >= 56.0);
        assert!((eta_bound(0.01, 2).unwrap() - 0.0660).abs() < 1e-4);
        assert!((eta_bound(0.001, 2).unwrap() - 0.00890).abs() < 1e-5);
        assert!(eta_bound(0.0, 2).is_err());
        assert!(hamming_ball_count(10, 1.0, 2).is_err());
        // ⌊εn⌋ = 1: L = 6 exceeds εn·C(5,1) = 5.
        assert!(ln_count(&hamming_ball_count(5, 0.2, 2).unwrap()) > hamming_binomial_bound_ln(5, 0.2, 2).unwrap());
    }

    #[test]
    fn topological_examples() {
        let seq = FolnerSequence::boxes(GroupModel::Zd(1));
        let full = ShiftSystem::full(GroupModel::Zd(1), 2).unwrap();
        let c = topological_entropy_curve(&full, &seq, &[1, 5, 40]).unwrap();
        assert!(c.points.iter().all(|p| p.value == 2f64.ln()));
        let c = topological_entropy_curve(&ShiftSystem::full(GroupModel::Zd(2), 3).unwrap(), &FolnerSequence::boxes(GroupModel::Zd(2)), &[3]).unwrap();
        assert_eq!(c.points[0].value, 3f64.ln());
        let gm = ShiftSystem::golden_mean();
        let c = topological_entropy_curve(&gm, &seq, &[10, 200]).unwrap();
        assert!((c.value_at(10).unwrap() - 144f64.ln() / 10.0).abs() < 1e-12);
        let golden = ((1.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((c.value_at(200).unwrap() - golden).abs() < 5e-3);
    }

    #[test]
    fn tail_window_is_final_third() {
        let pts = (1..=12)
            .map(|n| CurvePoint { n, size: n as u128, value: n as f64 })
            .collect();
        let c = EntropyCurve::new(pts, vec![]).unwrap();
        let t = c.tail.clone().unwrap();
        assert_eq!((t.from_n, t.min, t.max, t.last), (9, 9.0, 12.0, 12.0));
        assert!(c.to_csv().starts_with("n,size,value\n1,1,1\n"));
    }

    #[test]
    fn class_counts_cover_all_cylinders() {
        let total: BigUint = count_vectors(6, 3).iter().map(|k| multinomial(k)).sum();
        assert_eq!(total, BigUint::from(729u32));
    }

    #[test]
    fn smb_concentrates_at_twenty_cells() {
        let seq = FolnerSequence::boxes(GroupModel::Zd(1));
        let f = seq.set(20).unwrap();
        for p in [vec![0.8, 0.2], vec![0.5, 0.3, 0.2]] {
            let mu = bern(&p);
            let h: f64 = -p.iter().map(|a| a * a.ln()).sum::<f64>();
            let second: f64 = p.iter().map(|a| a * a.ln() * a.ln()).sum();
            let draws = 1000;
            let mean = (0..draws)
                .map(|i| {
                    let x = sample_pattern(&mu, &f, 0x5eed + i).unwrap();
                    smb_trace(&mu, &x, &seq, &[20]).unwrap().points[0].value
                })
                .sum::<f64>()
                / draws as f64;
            let sigma = ((second - h * h) / (20.0 * draws as f64)).sqrt();
            assert!((mean - h).abs() < 5.0 * sigma, "{p:?}: mean {mean}, H {h}, σ {sigma}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn window() -> impl Strategy<Value = FiniteSubset> {
            prop_oneof![
                (1i64..6).prop_map(|n| interval(0, n)),
                prop::collection::btree_set((-2i64..3, -2i64..3), 1..5).prop_map(|cells| {
                    FiniteSubset::new(GroupModel::Zd(2), cells.into_iter().map(|(a, b)| GroupElement::zd(&[a, b])))
                        .unwrap()
                }),
            ]
        }

        fn measure() -> impl Strategy<Value = MeasureModel> {
            prop::collection::vec(1u32..10, 2..=3).prop_map(|w| {
                let t: u32 = w.iter().sum();
                bern(&w.iter().map(|&k| k as f64 / t as f64).collect::<Vec<_>>())
            })
        }

        fn count(mu: &MeasureModel, f: &FiniteSubset, eps: f64, delta: f64) -> BigUint {
            katok_covering_number(mu, f, eps, delta).unwrap().count
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            #[test]
            fn katok_is_monotone(
                mu in measure(),
                f in window(),
                extra in (-3i64..3, -3i64..3),
                eps in prop::sample::select(vec![1.0, 0.6, 0.5]),
                d1 in 0u32..100,
                d2 in 0u32..100,
            ) {
                let g = if f.model() == GroupModel::Zd(1) { GroupElement::zd(&[extra.0 + 6]) } else { GroupElement::zd(&[extra.0, extra.1]) };
                let bigger = f.union(&FiniteSubset::singleton(f.model(), g).unwrap()).unwrap();
                let cells = shift::bowen_window(&bigger, eps).unwrap().window.len();
                prop_assume!((mu.alphabet() as f64).powi(cells as i32) <= ENUMERATION_BUDGET as f64);
                let (lo, hi) = (d1.min(d2) as f64 / 100.0, d1.max(d2) as f64 / 100.0);
                prop_assert!(count(&mu, &f, eps, lo) >= count(&mu, &f, eps, hi));
                prop_assert!(count(&mu, &f, eps, lo) <= count(&mu, &bigger, eps, lo));
            }

            #[test]
            fn uniform_katok_sandwich(
                q in 2usize..=3,
                f in window(),
                eps in prop::sample::select(vec![1.0, 0.8, 0.6, 0.51]),
                d in 0u32..100,
            ) {
                let delta = d as f64 / 100.0;
                let mu = MeasureModel::Bernoulli(crate::shift::Bernoulli::uniform(q).unwrap());
                let size = f.len() as f64;
                let rate = ln_count(&count(&mu, &f, eps, delta)) / size;
                let lower = (q as f64).ln() - 2f64.ln() / size - (1.0 - delta).ln().abs() / size;
                prop_assert!(rate <= (q as f64).ln() + 1e-12);
                prop_assert!(rate >= lower - 1e-12);
            }

            #[test]
            fn hamming_bounds(n in 1u64..200, eps_pct in 1u32..50, q in 2u64..=4) {
                let eps = eps_pct as f64 / 100.0;
                let ln_l = ln_count(&hamming_ball_count(n, eps, q).unwrap());
                prop_assert!(ln_l <= eta_bound(eps, q).unwrap() * n as f64 + 1e-9);
                // The crude form needs at least two flipped sites.
                if floor_eps_n(n, eps).unwrap() >= 2 {
                    prop_assert!(ln_l <= hamming_binomial_bound_ln(n, eps, q).unwrap() + 1e-9);
                }
            }

            #[test]
            fn partition_entropy_is_additive(mu in measure(), f in window()) {
                let one = partition_entropy(&mu, &FiniteSubset::identity(f.model())).unwrap();
                let all = partition_entropy(&mu, &f).unwrap();
                prop_assert!((all - f.len() as f64 * one).abs() <= 1e-12 * f.len() as f64);
            }
        }
    }
}
