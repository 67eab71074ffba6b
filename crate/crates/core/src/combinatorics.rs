//! Faà di Bruno index tuples and the coefficient estimates built on them.
//!
//! A tuple (m₁,…,mₙ) with Σ j·mⱼ = n indexes one term of
//! ∂ⁿ(F∘g) = Σ n!/(m₁!⋯mₙ!) F⁽ᵏ⁾(g) Πⱼ (g⁽ʲ⁾/j!)^{mⱼ}, where k = Σ mⱼ.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::weights::{phi, MarginReport, TimePoint};

pub const DEFAULT_N_MAX: u32 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct PartitionTuple {
    pub n: u32,
    pub m: Vec<u32>,
    pub k: u32,
    pub s: u32,
}

impl PartitionTuple {
    pub fn from_multiplicities(m: Vec<u32>) -> Result<Self> {
        let n = m.len() as u32;
        let total: u32 = m.iter().enumerate().map(|(j, &mj)| (j as u32 + 1) * mj).sum();
        if n == 0 || total != n {
            return Err(Error::InvalidArgument(format!("multiplicities {m:?} do not partition {n}")));
        }
        let k = m.iter().sum();
        let s = 2 * k - m[0];
        Ok(Self { n, m, k, s })
    }

    /// mⱼ for 1 ≤ j ≤ n.
    #[inline]
    pub fn mult(&self, j: u32) -> u32 {
        self.m[(j - 1) as usize]
    }

    /// Stable identifier for reports: the multiplicities joined by '_'.
    pub fn id(&self) -> String {
        self.m.iter().map(u32::to_string).collect::<Vec<_>>().join("_")
    }
}

/// All tuples for order n in lexicographic order of m, with the default cap.
pub fn enumerate_partitions(n: u32) -> Result<Vec<PartitionTuple>> {
    enumerate_partitions_capped(n, DEFAULT_N_MAX)
}

pub fn enumerate_partitions_capped(n: u32, n_max: u32) -> Result<Vec<PartitionTuple>> {
    if n == 0 {
        return Err(Error::InvalidArgument("partitions need n >= 1".into()));
    }
    if n > n_max {
        return Err(Error::OrderTooLarge { order: n as usize, max: n_max as usize });
    }
    let mut out = Vec::new();
    let mut m = vec![0u32; n as usize];
    fill(1, n, &mut m, &mut out);
    Ok(out)
}

fn fill(j: u32, remaining: u32, m: &mut Vec<u32>, out: &mut Vec<PartitionTuple>) {
    let n = m.len() as u32;
    if j == n {
        if remaining % n == 0 {
            m[(j - 1) as usize] = remaining / n;
            out.push(PartitionTuple::from_multiplicities(m.clone()).expect("valid by construction"));
            m[(j - 1) as usize] = 0;
        }
        return;
    }
    for mj in 0..=remaining / j {
        m[(j - 1) as usize] = mj;
        fill(j + 1, remaining - mj * j, m, out);
    }
    m[(j - 1) as usize] = 0;
}

/// The restricted sum ∗∗ drops the single tuple with mₙ = 1.
pub fn without_top(tuples: Vec<PartitionTuple>) -> Vec<PartitionTuple> {
    tuples.into_iter().filter(|p| p.mult(p.n) == 0).collect()
}

/// Integer partition numbers p(0..=n) by Euler's pentagonal recurrence.
pub fn partition_numbers(n: usize) -> Vec<u128> {
    let mut p = vec![0u128; n + 1];
    p[0] = 1;
    for i in 1..=n {
        let mut acc: i128 = 0;
        let mut k: i64 = 1;
        loop {
            let g1 = (k * (3 * k - 1) / 2) as usize;
            if g1 > i {
                break;
            }
            let sign = if k % 2 == 1 { 1 } else { -1 };
            acc += sign * p[i - g1] as i128;
            let g2 = (k * (3 * k + 1) / 2) as usize;
            if g2 <= i {
                acc += sign * p[i - g2] as i128;
            }
            k += 1;
        }
        p[i] = acc as u128;
    }
    p
}

pub fn factorial(n: u32) -> Result<u128> {
    (1..=n as u128).try_fold(1u128, |acc, i| acc.checked_mul(i)).ok_or(Error::Overflow("factorial"))
}

pub fn factorial_f64(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// n!/(m₁!⋯mₙ!) as an exact integer.
pub fn multinomial_weight(p: &PartitionTuple) -> Result<u128> {
    let mut num = factorial(p.n)?;
    for &mj in &p.m {
        // exact at every step: n!/(m₁!⋯mⱼ!) is an integer
        num /= factorial(mj)?;
    }
    Ok(num)
}

/// Exact integer product, or None on overflow.
fn checked_product(factors: impl IntoIterator<Item = u128>) -> Option<u128> {
    factors.into_iter().try_fold(1u128, |acc, f| acc.checked_mul(f))
}

fn pow_u128(b: u128, e: u32) -> Option<u128> {
    b.checked_pow(e)
}

/// Ratio of two integer products formed exactly, falling back to logarithms.
fn ratio(num: Option<u128>, den: Option<u128>, ln_num: f64, ln_den: f64) -> f64 {
    match (num, den) {
        (Some(a), Some(b)) => a as f64 / b as f64,
        _ => (ln_num - ln_den).exp(),
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// The factor (k!)²/(m₁!·n!)·Π_{j≥2} (j!/2)^{mⱼ} shared by the two partition bounds.
fn partition_factor(p: &PartitionTuple) -> f64 {
    let k = p.k;
    let fk = factorial(k).ok();
    let halves: u32 = p.m.iter().skip(1).sum();
    let num = fk.and_then(|f| f.checked_mul(f)).and_then(|sq| {
        let prod = checked_product((2..=p.n).map(|j| {
            factorial(j).ok().and_then(|fj| pow_u128(fj, p.mult(j))).unwrap_or(0)
        }))?;
        if prod == 0 {
            None
        } else {
            sq.checked_mul(prod)
        }
    });
    let den = factorial(p.m[0])
        .ok()
        .zip(factorial(p.n).ok())
        .and_then(|(a, b)| a.checked_mul(b))
        .and_then(|d| d.checked_mul(pow_u128(2, halves)?));
    let ln_num = 2.0 * ln_factorial(k) + (2..=p.n).map(|j| p.mult(j) as f64 * ln_factorial(j)).sum::<f64>();
    let ln_den = ln_factorial(p.m[0]) + ln_factorial(p.n) + halves as f64 * 2f64.ln();
    ratio(num, den, ln_num, ln_den)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TupleMargin {
    pub tuple: PartitionTuple,
    pub report: MarginReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientReport {
    pub n: u32,
    pub t: f64,
    pub partition: Vec<TupleMargin>,
    pub partition_phi: Vec<TupleMargin>,
    pub root_sum: MarginReport,
    pub coefficient_sum: MarginReport,
}

impl CoefficientReport {
    pub fn min_margin(&self) -> f64 {
        self.partition
            .iter()
            .chain(&self.partition_phi)
            .map(|m| m.report.margin)
            .chain([self.root_sum.margin, self.coefficient_sum.margin])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Σⱼ₌₂ⁿ (j/n)^{(j−2)/4}, bounded by 15.
pub fn root_sum(n: u32) -> f64 {
    let nf = n as f64;
    (2..=n).map(|j| (j as f64 / nf).powf((j as f64 - 2.0) / 4.0)).sum()
}

pub fn coefficient_margins(n: u32, t: TimePoint) -> Result<CoefficientReport> {
    coefficient_margins_capped(n, t, DEFAULT_N_MAX)
}

pub fn coefficient_margins_capped(n: u32, t: TimePoint, n_max: u32) -> Result<CoefficientReport> {
    let tv = t.value();
    let tuples = enumerate_partitions_capped(n, n_max)?;
    let nf = n as f64;
    let phi_n = phi(n, tv);
    let mut partition = Vec::with_capacity(tuples.len());
    let mut partition_phi = Vec::with_capacity(tuples.len());
    let mut sum_lhs = 0.0;
    for p in &tuples {
        let base = partition_factor(p);
        let sf = p.s as f64;
        let mut rhs1 = (sf / nf).powf((sf - 2.0) / 2.0);
        let mut rhs2 = 1.0;
        let mut phi_prod = 1.0;
        for j in 2..=n {
            let mj = p.mult(j);
            if mj == 0 {
                continue;
            }
            let ratio = j as f64 / nf;
            let e = (j as f64 - 2.0) * mj as f64;
            rhs1 *= ratio.powf(e / 2.0);
            rhs2 *= ratio.powf(e / 4.0);
            phi_prod *= phi(j, tv).powi(mj as i32);
        }
        let lhs2 = base * phi(p.k, tv) / phi_n * phi_prod;
        partition.push(TupleMargin { tuple: p.clone(), report: MarginReport::new(base, rhs1) });
        partition_phi.push(TupleMargin { tuple: p.clone(), report: MarginReport::new(lhs2, rhs2) });
        sum_lhs += coefficient_term(p, tv);
    }
    let root_sum = MarginReport::new(root_sum(n), 15.0);
    let coefficient_sum = MarginReport::new(sum_lhs, factorial_f64(n) * phi_n * 0.15f64.exp());
    Ok(CoefficientReport { n, t: tv, partition, partition_phi, root_sum, coefficient_sum })
}

/// (k!)² φₖ/(m₁!⋯mₙ!) Π_{j≥2} (j! φⱼ/200)^{mⱼ}.
fn coefficient_term(p: &PartitionTuple, t: f64) -> f64 {
    let num = factorial(p.k).ok().and_then(|f| f.checked_mul(f)).and_then(|sq| {
        let prod = checked_product(
            (2..=p.n).map(|j| factorial(j).ok().and_then(|fj| pow_u128(fj, p.mult(j))).unwrap_or(0)),
        )?;
        (prod != 0).then_some(())?;
        sq.checked_mul(prod)
    });
    let den = checked_product(p.m.iter().map(|&mj| factorial(mj).unwrap_or(0))).filter(|&d| d != 0);
    let ln_num = 2.0 * ln_factorial(p.k) + (2..=p.n).map(|j| p.mult(j) as f64 * ln_factorial(j)).sum::<f64>();
    let ln_den: f64 = p.m.iter().map(|&mj| ln_factorial(mj)).sum();
    let mut v = ratio(num, den, ln_num, ln_den) * phi(p.k, t);
    for j in 2..=p.n {
        let mj = p.mult(j);
        if mj > 0 {
            v *= (phi(j, t) / 200.0).powi(mj as i32);
        }
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexSplitReport {
    pub factorial: MarginReport,
    pub phi: MarginReport,
}

/// j!/2 ≤ (n!/2)^{(j−2)/(n−2)} (j/n)^{(j−2)/2} and
/// φⱼ ≤ φₙ^{(j−2)/(n−2)} (j/n)^{−(j−2)/4}.
pub fn index_split_margins(n: u32, j: u32, t: TimePoint) -> Result<IndexSplitReport> {
    if n < 3 || j < 2 || j > n {
        return Err(Error::InvalidArgument(format!("need n >= 3 and 2 <= j <= n, got n = {n}, j = {j}")));
    }
    let tv = t.value();
    let e = (j as f64 - 2.0) / (n as f64 - 2.0);
    let ratio = j as f64 / n as f64;
    let jm2 = j as f64 - 2.0;
    let rhs1 = (ln_factorial(n) - 2f64.ln()).mul_add(e, 0.0).exp() * ratio.powf(jm2 / 2.0);
    let lhs1 = factorial_f64(j) / 2.0;
    let rhs2 = phi(n, tv).powf(e) * ratio.powf(-jm2 / 4.0);
    let lhs2 = phi(j, tv);
    // the j = 2 statements are the identities 1 ≤ 1
    let (fac, ph) = if j == 2 {
        (MarginReport::new(1.0, 1.0), MarginReport::new(1.0, 1.0))
    } else {
        (MarginReport::new(lhs1, rhs1), MarginReport::new(lhs2, rhs2))
    };
    Ok(IndexSplitReport { factorial: fac, phi: ph })
}

pub fn binomial_f64(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinomPhiSums {
    pub sum_from_1: f64,
    pub sum_from_0: f64,
}

/// Σₖ C(n,k)⁻¹ φₙ₋ₖ φₖ / φₙ, from k = 1 and from k = 0.
pub fn binom_phi_sums(n: u32, t: TimePoint) -> BinomPhiSums {
    let tv = t.value();
    let pn = phi(n, tv);
    let sum_from_1: f64 = (1..=n).map(|k| phi(n - k, tv) * phi(k, tv) / (pn * binomial_f64(n, k))).sum();
    BinomPhiSums { sum_from_1, sum_from_0: 1.0 + sum_from_1 }
}

/// Precomputed Faà di Bruno terms for one order: coefficient n!/(m₁!⋯mₙ!),
/// outer order k, and the (j, mⱼ, 1/j!) factors with mⱼ > 0.
#[derive(Debug, Clone)]
pub struct FaaDiBrunoTable {
    pub n: u32,
    terms: Vec<(f64, usize, Vec<(usize, i32, f64)>)>,
}

impl FaaDiBrunoTable {
    /// `exclude_top` drops the F′·g⁽ⁿ⁾ term (the ∗∗ sum).
    pub fn new(n: u32, exclude_top: bool) -> Result<Self> {
        if n == 0 {
            return Ok(Self { n, terms: vec![(1.0, 0, vec![])] });
        }
        let tuples = enumerate_partitions_capped(n, n.max(DEFAULT_N_MAX))?;
        let mut terms = Vec::with_capacity(tuples.len());
        for p in &tuples {
            if exclude_top && p.mult(n) != 0 {
                continue;
            }
            let factors = (1..=n)
                .filter(|&j| p.mult(j) > 0)
                .map(|j| (j as usize, p.mult(j) as i32, 1.0 / factorial_f64(j)))
                .collect();
            terms.push((multinomial_weight(p)? as f64, p.k as usize, factors));
        }
        Ok(Self { n, terms })
    }

    /// Σ n!/(m₁!⋯mₙ!)·outer[k]·Πⱼ(inner[j]/j!)^{mⱼ}; `outer[k]` is F⁽ᵏ⁾(g) and
    /// `inner[j]` is g⁽ʲ⁾ (index 0 unused).
    #[inline]
    pub fn apply(&self, outer: &[f64], inner: &[f64]) -> f64 {
        let mut total = 0.0;
        for (coef, k, factors) in &self.terms {
            let mut term = coef * outer[*k];
            for &(j, m, inv) in factors {
                term *= (inner[j] * inv).powi(m);
            }
            total += term;
        }
        total
    }
}

/// n-th derivative of F∘g from F⁽ᵏ⁾(g(x)) (index k, 0..=n) and g⁽ʲ⁾(x)
/// (index j, 0..=n); `exclude_top` drops the F′·g⁽ⁿ⁾ term (the ∗∗ sum).
pub fn faa_di_bruno_apply(outer: &[f64], inner: &[f64], n: u32, exclude_top: bool) -> Result<f64> {
    if outer.len() <= n as usize || inner.len() <= n as usize {
        return Err(Error::InvalidArgument("derivative arrays shorter than the order".into()));
    }
    Ok(FaaDiBrunoTable::new(n, exclude_top)?.apply(outer, inner))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_enumerations() {
        let one = enumerate_partitions(1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].m, vec![1]);
        let two = enumerate_partitions(2).unwrap();
        let found: Vec<_> = two.iter().map(|p| (p.m[0], p.m[1], p.k, p.s)).collect();
        assert_eq!(found, vec![(0, 1, 1, 2), (2, 0, 2, 2)]);
        assert_eq!(enumerate_partitions(4).unwrap().len(), 5);
        assert_eq!(enumerate_partitions(12).unwrap().len(), 77);
    }

    #[test]
    fn counts_match_partition_numbers() {
        let p = partition_numbers(16);
        for n in 1..=16u32 {
            let tuples = enumerate_partitions(n).unwrap();
            assert_eq!(tuples.len() as u128, p[n as usize], "n={n}");
            let mut sorted = tuples.clone();
            sorted.sort_by(|a, b| a.m.cmp(&b.m));
            assert_eq!(sorted, tuples, "lexicographic order");
            for t in &tuples {
                assert!(t.k >= 1 && t.k <= n);
                if n >= 2 {
                    assert!(t.s >= 2);
                }
            }
        }
        assert_eq!(p[16], 231);
    }

    #[test]
    fn cap_enforced() {
        assert!(matches!(enumerate_partitions(17), Err(Error::OrderTooLarge { .. })));
        assert_eq!(enumerate_partitions_capped(20, 20).unwrap().len(), 627);
    }

    #[test]
    fn multinomial_examples() {
        let p = |m: Vec<u32>| PartitionTuple::from_multiplicities(m).unwrap();
        assert_eq!(multinomial_weight(&p(vec![2, 0])).unwrap(), 1);
        assert_eq!(multinomial_weight(&p(vec![0, 1])).unwrap(), 2);
        assert_eq!(multinomial_weight(&p(vec![0, 3, 0, 0, 0, 0])).unwrap(), 120);
    }

    #[test]
    fn faa_di_bruno_identity_inner() {
        // g(x) = x: only m₁ = n survives
        let outer: Vec<f64> = (0..=8).map(|k| 1.5 + k as f64).collect();
        let mut inner = vec![0.0; 9];
        inner[1] = 1.0;
        for n in 1..=8 {
            let v = faa_di_bruno_apply(&outer, &inner, n, false).unwrap();
            assert!((v - outer[n as usize]).abs() < 1e-12);
        }
    }

    #[test]
    fn faa_di_bruno_exp_of_sin() {
        // derivatives of exp(sin x) at x = 0.3 against a Taylor-coefficient recurrence
        let x: f64 = 0.3;
        let n_max = 6;
        let e = x.sin().exp();
        let outer = vec![e; n_max + 1];
        let inner: Vec<f64> = (0..=n_max)
            .map(|j| match j % 4 {
                0 => x.sin(),
                1 => x.cos(),
                2 => -x.sin(),
                _ => -x.cos(),
            })
            .collect();
        // h = exp(g) satisfies h' = g' h, so h⁽ⁿ⁺¹⁾ = Σ C(n,i) g⁽ⁱ⁺¹⁾ h⁽ⁿ⁻ⁱ⁾
        let mut h = vec![e];
        for n in 0..n_max {
            let v: f64 = (0..=n).map(|i| binomial_f64(n as u32, i as u32) * inner[i + 1] * h[n - i]).sum();
            h.push(v);
        }
        for n in 1..=n_max as u32 {
            let v = faa_di_bruno_apply(&outer, &inner, n, false).unwrap();
            assert!((v - h[n as usize]).abs() < 1e-12 * h[n as usize].abs().max(1.0), "n={n}");
        }
    }

    #[test]
    fn coefficient_small_cases() {
        let r = coefficient_margins(1, TimePoint::ZERO).unwrap();
        assert_eq!((r.partition[0].report.lhs, r.partition[0].report.rhs), (1.0, 1.0));
        assert_eq!((r.partition_phi[0].report.lhs, r.partition_phi[0].report.rhs), (1.0, 1.0));
        assert_eq!(r.root_sum.lhs, 0.0);
        assert_eq!(r.coefficient_sum.lhs, 1.0);
        assert!((r.coefficient_sum.rhs - 0.15f64.exp()).abs() < 1e-15);

        let r = coefficient_margins(2, TimePoint::ZERO).unwrap();
        assert!((r.coefficient_sum.lhs - 2.01).abs() < 1e-15);
        assert!((r.coefficient_sum.rhs - 2.0 * 0.15f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn coefficient_n12_t100_all_nonnegative() {
        let r = coefficient_margins(12, TimePoint::new(100.0).unwrap()).unwrap();
        assert_eq!(r.partition.len(), 77);
        assert!(r.min_margin() >= -1e-12, "{}", r.min_margin());
    }

    #[test]
    fn index_split_examples() {
        let z = TimePoint::ZERO;
        let r = index_split_margins(7, 2, z).unwrap();
        assert_eq!((r.factorial.margin, r.phi.margin), (0.0, 0.0));
        let r = index_split_margins(4, 3, z).unwrap();
        assert!(r.factorial.margin.abs() < 1e-12, "{:?}", r);
        assert!((r.factorial.lhs - 3.0).abs() < 1e-15);
        let r = index_split_margins(10, 5, z).unwrap();
        assert!(r.phi.margin >= 0.0);
        assert!(index_split_margins(2, 2, z).is_err());
        assert!(index_split_margins(5, 6, z).is_err());
    }

    #[test]
    fn binom_sums_examples() {
        let s = binom_phi_sums(3, TimePoint::ZERO);
        assert!((s.sum_from_1 - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(binom_phi_sums(0, TimePoint::ZERO).sum_from_0, 1.0);
        assert!(binom_phi_sums(20, TimePoint::new(25.0).unwrap()).sum_from_1 <= 5.0 / 3.0);
    }
}
