use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a probability vector.
pub const MASS_TOL: f64 = 1e-12;

fn check_probs(probs: &[f64], what: impl Fn() -> String) -> Result<()> {
    if probs.len() < 2 {
        return Err(Error::InvalidDistribution(format!(
            "{}: alphabet size {} < 2",
            what(),
            probs.len()
        )));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
        return Err(Error::InvalidDistribution(format!(
            "{}: entry {p} outside [0, 1]",
            what()
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > MASS_TOL * probs.len() as f64 {
        return Err(Error::InvalidDistribution(format!(
            "{}: entries sum to {total}",
            what()
        )));
    }
    Ok(())
}

/// Probability vector over a finite alphabet `{0, .., k-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_probs(&probs, || "distribution".into())?;
        Ok(Self { probs })
    }

    /// Builds a distribution after dividing by the total; used for vectors that are
    /// correct up to rounding.
    pub fn normalized(mut probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "cannot normalize vector with total {total}"
            )));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(probs)
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn point_mass(k: usize, at: usize) -> Result<Self> {
        if at >= k {
            return Err(Error::InvalidParameter(format!("point mass at {at} >= {k}")));
        }
        let mut p = vec![0.0; k];
        p[at] = 1.0;
        Self::new(p)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn min_positive(&self) -> f64 {
        self.probs
            .iter()
            .copied()
            .filter(|p| *p > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &Distribution) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl AsRef<[f64]> for Distribution {
    fn as_ref(&self) -> &[f64] {
        &self.probs
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

/// Stochastic matrix; row `a` is the distribution of the output given input `a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ConditionalKernel {
    k_in: usize,
    k_out: usize,
    data: Vec<f64>,
}

impl ConditionalKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k_in = rows.len();
        if k_in == 0 {
            return Err(Error::InvalidDistribution("kernel has no rows".into()));
        }
        let k_out = rows[0].len();
        if rows.iter().any(|r| r.len() != k_out) {
            return Err(Error::DimensionMismatch("ragged kernel rows".into()));
        }
        Self::from_flat(k_in, k_out, rows.into_iter().flatten().collect())
    }

    pub fn from_flat(k_in: usize, k_out: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k_in * k_out {
            return Err(Error::DimensionMismatch(format!(
                "kernel data length {} != {k_in}x{k_out}",
                data.len()
            )));
        }
        for (i, row) in data.chunks(k_out).enumerate() {
            check_probs(row, || format!("kernel row {i}"))?;
        }
        Ok(Self { k_in, k_out, data })
    }

    /// Like [`ConditionalKernel::from_flat`] but renormalizes every row first.
    pub fn normalized(k_in: usize, k_out: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != k_in * k_out {
            return Err(Error::DimensionMismatch("kernel data length".into()));
        }
        for row in data.chunks_mut(k_out) {
            let t: f64 = row.iter().sum();
            if !(t > 0.0) {
                return Err(Error::InvalidDistribution("zero kernel row".into()));
            }
            row.iter_mut().for_each(|v| *v = (*v / t).max(0.0));
        }
        Self::from_flat(k_in, k_out, data)
    }

    /// `y = x` embedded into an output alphabet at least as large as the input one.
    pub fn identity(k_in: usize, k_out: usize) -> Result<Self> {
        if k_out < k_in {
            return Err(Error::InvalidParameter(format!(
                "identity kernel needs k_out >= k_in ({k_out} < {k_in})"
            )));
        }
        let mut data = vec![0.0; k_in * k_out];
        for a in 0..k_in {
            data[a * k_out + a] = 1.0;
        }
        Self::from_flat(k_in, k_out, data)
    }

    pub fn uniform(k_in: usize, k_out: usize) -> Result<Self> {
        Self::from_flat(k_in, k_out, vec![1.0 / k_out as f64; k_in * k_out])
    }

    /// Every row equal to `row`, so the output is independent of the input.
    pub fn constant(k_in: usize, row: &Distribution) -> Result<Self> {
        let data = (0..k_in).flat_map(|_| row.probs().iter().copied()).collect();
        Self::from_flat(k_in, row.len(), data)
    }

    /// Binary symmetric channel with crossover `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    pub fn k_in(&self) -> usize {
        self.k_in
    }

    pub fn k_out(&self) -> usize {
        self.k_out
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.data[a * self.k_out..(a + 1) * self.k_out]
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.k_out + b]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.k_out)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.data.iter().all(|v| *v > 0.0)
    }

    /// Output marginal `sum_a p(a) K(b|a)`.
    pub fn output_marginal(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k_out];
        for (a, pa) in input.iter().enumerate() {
            for (b, o) in out.iter_mut().enumerate() {
                *o += pa * self.get(a, b);
            }
        }
        out
    }

    /// `(1 - t) * self + t * other`.
    pub fn blend(&self, other: &ConditionalKernel, t: f64) -> Result<Self> {
        if self.k_in != other.k_in || self.k_out != other.k_out {
            return Err(Error::DimensionMismatch("blend of unequal kernels".into()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        Self::normalized(self.k_in, self.k_out, data)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for ConditionalKernel {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ConditionalKernel> for Vec<Vec<f64>> {
    fn from(k: ConditionalKernel) -> Self {
        k.to_rows()
    }
}

/// Two-dimensional joint distribution, row index first.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    k1: usize,
    k2: usize,
    table: Vec<f64>,
}

impl JointDistribution {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k1 = rows.len();
        let k2 = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k2) {
            return Err(Error::DimensionMismatch("ragged joint table".into()));
        }
        Self::from_flat(k1, k2, rows.into_iter().flatten().collect())
    }

    pub fn from_flat(k1: usize, k2: usize, table: Vec<f64>) -> Result<Self> {
        if table.len() != k1 * k2 || k1 == 0 || k2 == 0 {
            return Err(Error::DimensionMismatch(format!("joint table {k1}x{k2}")));
        }
        if table.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution("negative joint entry".into()));
        }
        let total: f64 = table.iter().sum();
        if (total - 1.0).abs() > MASS_TOL * table.len() as f64 {
            return Err(Error::InvalidDistribution(format!("joint sums to {total}")));
        }
        Ok(Self { k1, k2, table })
    }

    /// `P(a, b) = p(a) K(b|a)`.
    pub fn from_marginal_and_kernel(p: &[f64], kernel: &ConditionalKernel) -> Result<Self> {
        if p.len() != kernel.k_in() {
            return Err(Error::DimensionMismatch("marginal vs kernel input".into()));
        }
        let k2 = kernel.k_out();
        let mut table = vec![0.0; p.len() * k2];
        for (a, pa) in p.iter().enumerate() {
            for b in 0..k2 {
                table[a * k2 + b] = pa * kernel.get(a, b);
            }
        }
        Self::from_flat(p.len(), k2, table)
    }

    pub fn product(p: &[f64], q: &[f64]) -> Result<Self> {
        let table = p.iter().flat_map(|a| q.iter().map(move |b| a * b)).collect();
        Self::from_flat(p.len(), q.len(), table)
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self) -> usize {
        self.k2
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.table[a * self.k2 + b]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.table
    }

    pub fn first_marginal(&self) -> Vec<f64> {
        self.table.chunks(self.k2).map(|r| r.iter().sum()).collect()
    }

    pub fn second_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.k2];
        for row in self.table.chunks(self.k2) {
            for (o, v) in m.iter_mut().zip(row) {
                *o += v;
            }
        }
        m
    }

    /// `P(b|a)`; rows with zero mass become uniform.
    pub fn second_given_first(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.table.len()];
        for (a, row) in self.table.chunks(self.k2).enumerate() {
            let s: f64 = row.iter().sum();
            for b in 0..self.k2 {
                out[a * self.k2 + b] = if s > 0.0 { row[b] / s } else { 1.0 / self.k2 as f64 };
            }
        }
        out
    }

    /// `P(a|b)` stored as a `k2 x k1` matrix; columns with zero mass become uniform.
    pub fn first_given_second(&self) -> Vec<f64> {
        let col = self.second_marginal();
        let mut out = vec![0.0; self.table.len()];
        for b in 0..self.k2 {
            for a in 0..self.k1 {
                out[b * self.k1 + a] = if col[b] > 0.0 {
                    self.get(a, b) / col[b]
                } else {
                    1.0 / self.k1 as f64
                };
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = vec![0.0; self.table.len()];
        for a in 0..self.k1 {
            for b in 0..self.k2 {
                t[b * self.k1 + a] = self.get(a, b);
            }
        }
        Self { k1: self.k2, k2: self.k1, table: t }
    }
}
