//! Empirical types of sequences over small alphabets.
//!
//! Sequences are byte slices whose entries are symbol indices. A type is the
//! vector of symbol counts; joint types count symbol pairs position by position.

use std::fmt;

use num_bigint::BigUint;
use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dist::Distribution;
use super::measures::entropy_of;
use crate::error::{Error, Result};

/// Default cap on the number of types `enumerate_types` will materialize.
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000_000;

pub type Symbol = u8;

fn check_symbols(seq: &[Symbol], k: usize, what: &str) -> Result<()> {
    match seq.iter().find(|&&s| s as usize >= k) {
        Some(s) => Err(Error::InvalidParameter(format!(
            "{what}: symbol {s} outside alphabet of size {k}"
        ))),
        None => Ok(()),
    }
}

/// Count vector of a length-`n` sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EmpiricalType {
    counts: Vec<u32>,
}

impl EmpiricalType {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidParameter("type over fewer than 2 symbols".into()));
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::InvalidParameter("type of an empty sequence".into()));
        }
        Ok(Self { counts })
    }

    pub fn of_sequence(seq: &[Symbol], k: usize) -> Result<Self> {
        check_symbols(seq, k, "sequence")?;
        let mut counts = vec![0u32; k];
        for &s in seq {
            counts[s as usize] += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    /// `counts / n`.
    pub fn probs(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn distribution(&self) -> Distribution {
        Distribution::normalized(self.counts.iter().map(|&c| c as f64).collect())
            .expect("counts of a nonempty type")
    }

    pub fn entropy(&self) -> f64 {
        entropy_of(&self.probs())
    }

    /// L1 distance between count vectors.
    pub fn l1(&self, other: &EmpiricalType) -> u32 {
        self.counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a.abs_diff(*b))
            .sum()
    }
}

impl fmt::Display for EmpiricalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// `k1 x k2` matrix of pair counts, first symbol indexes the row.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointEmpiricalType {
    k1: usize,
    k2: usize,
    counts: Vec<u32>,
}

impl JointEmpiricalType {
    pub fn from_counts(k1: usize, k2: usize, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != k1 * k2 {
            return Err(Error::DimensionMismatch(format!(
                "joint counts of length {} for {k1}x{k2}",
                counts.len()
            )));
        }
        Ok(Self { k1, k2, counts })
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self) -> usize {
        self.k2
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn get(&self, a: usize, b: usize) -> u32 {
        self.counts[a * self.k2 + b]
    }

    pub fn n(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn first_counts(&self) -> Vec<u32> {
        self.counts.chunks(self.k2).map(|r| r.iter().sum()).collect()
    }

    pub fn second_counts(&self) -> Vec<u32> {
        let mut m = vec![0u32; self.k2];
        for row in self.counts.chunks(self.k2) {
            for (o, v) in m.iter_mut().zip(row) {
                *o += v;
            }
        }
        m
    }

    pub fn first_type(&self) -> Result<EmpiricalType> {
        EmpiricalType::new(self.first_counts())
    }

    pub fn second_type(&self) -> Result<EmpiricalType> {
        EmpiricalType::new(self.second_counts())
    }

    /// Joint frequencies `counts / n`, row-major.
    pub fn probs(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = vec![0u32; self.counts.len()];
        for a in 0..self.k1 {
            for b in 0..self.k2 {
                t[b * self.k1 + a] = self.get(a, b);
            }
        }
        Self { k1: self.k2, k2: self.k1, counts: t }
    }

    /// `ln |T(first | second)|`: the number of first-component sequences sharing
    /// this joint type with a fixed second-component sequence.
    pub fn ln_class_size_given_second(&self) -> f64 {
        (0..self.k2)
            .map(|b| ln_multinomial((0..self.k1).map(|a| self.get(a, b))))
            .sum()
    }

    /// `ln |T(second | first)|`.
    pub fn ln_class_size_given_first(&self) -> f64 {
        self.counts.chunks(self.k2).map(|r| ln_multinomial(r.iter().copied())).sum()
    }
}

impl fmt::Display for JointEmpiricalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (a, row) in self.counts.chunks(self.k2).enumerate() {
            if a > 0 {
                write!(f, ";")?;
            }
            let cells: Vec<String> = row.iter().map(u32::to_string).collect();
            write!(f, "{}", cells.join(","))?;
        }
        write!(f, "]")
    }
}

/// `ln(m!)` by direct summation.
pub fn ln_factorial(m: u32) -> f64 {
    (2..=m).map(|i| (i as f64).ln()).sum()
}

/// `ln( (sum c)! / prod c! )`.
pub fn ln_multinomial(counts: impl IntoIterator<Item = u32>) -> f64 {
    let mut total = 0u32;
    let mut denom = 0.0;
    for c in counts {
        total += c;
        denom += ln_factorial(c);
    }
    ln_factorial(total) - denom
}

/// Size of a type class, exact and as a natural log.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassSize {
    pub exact: BigUint,
    pub ln: f64,
}

/// `n! / prod counts!` exactly.
pub fn type_class_size(t: &EmpiricalType) -> ClassSize {
    // Build the multinomial as a product of binomials so the intermediate values
    // stay integral: C(c1, c1) * C(c1+c2, c2) * ...
    let mut exact = BigUint::one();
    let mut running = 0u32;
    for &c in t.counts() {
        for j in 1..=c {
            exact *= running + j;
            exact /= j;
        }
        running += c;
    }
    ClassSize {
        exact,
        ln: ln_multinomial(t.counts().iter().copied()),
    }
}

/// `C(n + k - 1, k - 1)` as a float (used for cap checks).
fn composition_count(n: usize, k: usize) -> f64 {
    let mut c = 1.0f64;
    for i in 1..k {
        c = c * (n + i) as f64 / i as f64;
    }
    c.round()
}

/// All count vectors of `n` into `k` parts, first coordinate descending.
pub fn enumerate_types(n: usize, k: usize) -> Result<Vec<EmpiricalType>> {
    enumerate_types_capped(n, k, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_types_capped(n: usize, k: usize, cap: usize) -> Result<Vec<EmpiricalType>> {
    if n == 0 || k < 2 {
        return Err(Error::InvalidParameter(format!("enumerate_types(n={n}, k={k})")));
    }
    let total = composition_count(n, k);
    if total > cap as f64 {
        return Err(Error::CapExceeded(format!(
            "{total} types of length {n} over {k} symbols exceeds cap {cap}"
        )));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut current = vec![0u32; k];
    fill(&mut current, 0, n as u32, &mut out);
    Ok(out)
}

fn fill(current: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<EmpiricalType>) {
    if pos == current.len() - 1 {
        current[pos] = remaining;
        out.push(EmpiricalType { counts: current.clone() });
        return;
    }
    for c in (0..=remaining).rev() {
        current[pos] = c;
        fill(current, pos + 1, remaining - c, out);
    }
}

/// Pair counts of `(x_i, y_i)`.
pub fn empirical_joint(
    x: &[Symbol],
    y: &[Symbol],
    kx: usize,
    ky: usize,
) -> Result<JointEmpiricalType> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "sequences of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    check_symbols(x, kx, "first sequence")?;
    check_symbols(y, ky, "second sequence")?;
    let mut counts = vec![0u32; kx * ky];
    for (&a, &b) in x.iter().zip(y) {
        counts[a as usize * ky + b as usize] += 1;
    }
    JointEmpiricalType::from_counts(kx, ky, counts)
}

/// Fills `buf` with the pair counts of `(x, y)` without validation.
#[inline]
pub(crate) fn joint_counts_into(x: &[Symbol], y: &[Symbol], ky: usize, buf: &mut [u32]) {
    buf.iter_mut().for_each(|c| *c = 0);
    for (&a, &b) in x.iter().zip(y) {
        buf[a as usize * ky + b as usize] += 1;
    }
}

/// Uniform draw from the type class of `t`.
pub fn sample_from_type_class<R: Rng + ?Sized>(t: &EmpiricalType, rng: &mut R) -> Vec<Symbol> {
    let mut seq: Vec<Symbol> = Vec::with_capacity(t.n());
    for (s, &c) in t.counts().iter().enumerate() {
        seq.extend(std::iter::repeat_n(s as Symbol, c as usize));
    }
    // Fisher-Yates over the multiset gives every arrangement equal probability.
    for i in (1..seq.len()).rev() {
        let j = rng.random_range(0..=i);
        seq.swap(i, j);
    }
    debug_assert_eq!(EmpiricalType::of_sequence(&seq, t.k()).ok().as_ref(), Some(t));
    seq
}

/// Whether `y2` lies in the conditional type class of `y1` given `z`.
pub fn same_conditional_type(
    y1: &[Symbol],
    y2: &[Symbol],
    z: &[Symbol],
    ky: usize,
    kz: usize,
) -> Result<bool> {
    if y1.len() != y2.len() {
        return Err(Error::DimensionMismatch("y1 and y2 lengths differ".into()));
    }
    Ok(empirical_joint(y1, z, ky, kz)? == empirical_joint(y2, z, ky, kz)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::{HashMap, HashSet};

    fn t(c: &[u32]) -> EmpiricalType {
        EmpiricalType::new(c.to_vec()).unwrap()
    }

    fn seq(s: &str) -> Vec<Symbol> {
        s.bytes().map(|b| b - b'0').collect()
    }

    /// Independent brute force: every vector in {0..=n}^k with sum n.
    fn brute_force_types(n: u32, k: usize) -> HashSet<Vec<u32>> {
        let mut out = HashSet::new();
        let total = (n as usize + 1).pow(k as u32);
        for code in 0..total {
            let mut c = code;
            let v: Vec<u32> = (0..k)
                .map(|_| {
                    let d = (c % (n as usize + 1)) as u32;
                    c /= n as usize + 1;
                    d
                })
                .collect();
            if v.iter().sum::<u32>() == n {
                out.insert(v);
            }
        }
        out
    }

    #[test]
    fn enumerate_examples() {
        let e = enumerate_types(2, 2).unwrap();
        let got: Vec<&[u32]> = e.iter().map(|t| t.counts()).collect();
        assert_eq!(got, vec![&[2, 0][..], &[1, 1], &[0, 2]]);
        assert_eq!(enumerate_types(4, 2).unwrap().len(), 5);
        let e = enumerate_types(4, 3).unwrap();
        assert_eq!(e.len(), 15);
        let set: HashSet<Vec<u32>> = e.iter().map(|t| t.counts().to_vec()).collect();
        assert_eq!(set, brute_force_types(4, 3));
    }

    #[test]
    fn enumerate_cap() {
        assert!(matches!(
            enumerate_types_capped(30, 4, 100),
            Err(Error::CapExceeded(_))
        ));
    }

    #[test]
    fn class_size_examples() {
        // Brute force: 4-bit words with two ones.
        let two_ones = (0u32..16).filter(|w| w.count_ones() == 2).count();
        assert_eq!(two_ones, 6);
        assert_eq!(type_class_size(&t(&[2, 2])).exact, BigUint::from(6u32));
        assert_eq!(type_class_size(&t(&[4, 0])).exact, BigUint::from(1u32));
        let s = type_class_size(&t(&[1, 1, 1]));
        assert_eq!(s.exact, BigUint::from(6u32));
        assert!((s.ln - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empirical_joint_examples() {
        let j = empirical_joint(&seq("0011"), &seq("0011"), 2, 2).unwrap();
        assert_eq!(j.counts(), &[2, 0, 0, 2]);
        let j = empirical_joint(&seq("0101"), &seq("0011"), 2, 2).unwrap();
        assert_eq!(j.counts(), &[1, 1, 1, 1]);
        let j = empirical_joint(&seq("0000"), &seq("1111"), 2, 2).unwrap();
        assert_eq!(j.counts(), &[0, 4, 0, 0]);
        assert!(empirical_joint(&seq("000"), &seq("1111"), 2, 2).is_err());
        assert_eq!(j.first_counts(), vec![4, 0]);
        assert_eq!(j.second_counts(), vec![0, 4]);
    }

    #[test]
    fn sampler_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(sample_from_type_class(&t(&[4, 0]), &mut rng), seq("0000"));
        }
        let mut seen = HashMap::new();
        for _ in 0..2000 {
            *seen.entry(sample_from_type_class(&t(&[1, 1]), &mut rng)).or_insert(0) += 1;
        }
        assert_eq!(seen.len(), 2);
        for c in seen.values() {
            assert!((*c as f64 / 2000.0 - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn conditional_type_examples() {
        let z = seq("0011");
        assert!(same_conditional_type(&z, &z, &z, 2, 2).unwrap());
        assert!(!same_conditional_type(&seq("0011"), &seq("1100"), &z, 2, 2).unwrap());
        assert!(
            same_conditional_type(&seq("0101"), &seq("1010"), &seq("0000"), 2, 2).unwrap()
        );
    }

    #[test]
    fn conditional_class_sizes() {
        // y = 0011, z = 0101: every joint cell has one count, |T(y|z)| = 2! * 2!.
        let j = empirical_joint(&seq("0011"), &seq("0101"), 2, 2).unwrap();
        assert!((j.ln_class_size_given_second() - 4f64.ln()).abs() < 1e-12);
        assert!((j.ln_class_size_given_first() - 4f64.ln()).abs() < 1e-12);
    }
}
