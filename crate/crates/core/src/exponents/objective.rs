use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::inner::{inner_min_flat, InnerSolution, DEFAULT_INNER_MAX_ITER};
use crate::ensemble::{
    select_test_channel_continuous, CompressionConstraint, MappingPolicy, SelectionContext,
};
use crate::error::{Error, Result};
use crate::types::{kl, mutual_information_flat, ConditionalKernel, Distribution};

/// Which rate term enters the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateRule {
    /// `max{[I(Y;Z) - I(X;Y)]_+, [I(Y;Z) + D(Q_X||G) - R_I]_+}`.
    Ensemble,
    /// `[I(Y;Z) - R_I]_+`, the MMI-baseline term.
    Dd,
}

pub type MappingFn = dyn Fn(&[f64]) -> Result<ConditionalKernel> + Send + Sync;

/// A test channel `Q_{Y|X}` defined for every point of the source simplex.
#[derive(Clone)]
pub enum ContinuousMapping {
    /// `Y = X` (requires `|Y| >= |X|`).
    Identity,
    /// The same kernel for every `Q_X`.
    Fixed(ConditionalKernel),
    /// The ensemble's selection rule with the `Delta`, `epsilon` margins dropped.
    Policy { policy: MappingPolicy, constraint: CompressionConstraint, k_y: usize },
    Custom { k_y: usize, map: Arc<MappingFn> },
}

impl fmt::Debug for ContinuousMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => f.write_str("Identity"),
            Self::Fixed(k) => f.debug_tuple("Fixed").field(k).finish(),
            Self::Policy { policy, constraint, k_y } => f
                .debug_struct("Policy")
                .field("policy", policy)
                .field("constraint", constraint)
                .field("k_y", k_y)
                .finish(),
            Self::Custom { k_y, .. } => f.debug_struct("Custom").field("k_y", k_y).finish(),
        }
    }
}

impl ContinuousMapping {
    pub fn k_y(&self, k_x: usize) -> usize {
        match self {
            Self::Identity => k_x,
            Self::Fixed(k) => k.k_out(),
            Self::Policy { k_y, .. } | Self::Custom { k_y, .. } => *k_y,
        }
    }

    pub fn kernel(
        &self,
        qx: &[f64],
        source: &Distribution,
        channel: &ConditionalKernel,
    ) -> Result<ConditionalKernel> {
        let k_x = qx.len();
        let k = match self {
            Self::Identity => ConditionalKernel::identity(k_x, k_x)?,
            Self::Fixed(k) => k.clone(),
            Self::Policy { policy, constraint, k_y } => {
                let ctx = SelectionContext {
                    source,
                    k_y: *k_y,
                    policy,
                    constraint,
                    channel: Some(channel),
                };
                select_test_channel_continuous(qx, &ctx)?
            }
            Self::Custom { map, .. } => map(qx)?,
        };
        if k.k_in() != k_x {
            return Err(Error::DimensionMismatch("mapping kernel input alphabet".into()));
        }
        Ok(k)
    }
}

pub(crate) fn pos(u: f64) -> f64 {
    u.max(0.0)
}

pub(crate) fn rate_term(rule: RateRule, i_yz: f64, i_xy: f64, div: f64, r_i: f64) -> f64 {
    match rule {
        RateRule::Ensemble => pos(i_yz - i_xy).max(pos(i_yz + div - r_i)),
        RateRule::Dd => pos(i_yz - r_i),
    }
}

/// The three non-negative terms of the exponent objective at one point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObjectiveTerms {
    /// `D(Q_X || G)`.
    pub divergence: f64,
    /// `min D(Q~_{XZ|Y} || Q_{X|Y} x W | Q_Y)`.
    pub inner: f64,
    pub rate: f64,
    pub i_xy: f64,
    pub i_yz: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.divergence + self.inner + self.rate
    }

    /// Recomputes every term from scratch at `(Q_X, Q_{Y|X}, Q_{Z|Y})`.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        source: &Distribution,
        channel: &ConditionalKernel,
        qx: &[f64],
        kernel: &ConditionalKernel,
        qz_y: &ConditionalKernel,
        r_i: f64,
        rule: RateRule,
        inner_tol: f64,
    ) -> Result<(ObjectiveTerms, InnerSolution)> {
        let (kx, ky, kz) = (qx.len(), kernel.k_out(), channel.k_out());
        if source.len() != kx || kernel.k_in() != kx || channel.k_in() != kx {
            return Err(Error::DimensionMismatch("objective: input alphabets".into()));
        }
        if qz_y.k_in() != ky || qz_y.k_out() != kz {
            return Err(Error::DimensionMismatch("objective: Q_{Z|Y} shape".into()));
        }
        let q_xy: Vec<f64> = (0..kx * ky).map(|i| qx[i / ky] * kernel.as_flat()[i]).collect();
        let q_y: Vec<f64> = (0..ky).map(|y| (0..kx).map(|x| q_xy[x * ky + y]).sum()).collect();
        let mut qx_y = vec![0.0; ky * kx];
        for y in 0..ky {
            for x in 0..kx {
                qx_y[y * kx + x] = if q_y[y] > 0.0 { q_xy[x * ky + y] / q_y[y] } else { 1.0 / kx as f64 };
            }
        }
        let q_yz: Vec<f64> = (0..ky * kz).map(|i| q_y[i / kz] * qz_y.as_flat()[i]).collect();
        let inner = inner_min_flat(&q_y, &qx_y, qz_y.as_flat(), channel, inner_tol, DEFAULT_INNER_MAX_ITER)?;
        let divergence = pos(kl(qx, source.probs()));
        let i_xy = pos(mutual_information_flat(&q_xy, kx, ky));
        let i_yz = pos(mutual_information_flat(&q_yz, ky, kz));
        let rate = rate_term(rule, i_yz, i_xy, divergence, r_i);
        Ok((ObjectiveTerms { divergence, inner: inner.value, rate, i_xy, i_yz }, inner))
    }
}

/// Smoothed `max(a, b, 0)` with temperature `tau` (exact at `tau = 0`).
fn soft_max3(a: f64, b: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return a.max(b).max(0.0);
    }
    let m = a.max(b).max(0.0);
    m + tau * (((a - m) / tau).exp() + ((b - m) / tau).exp() + (-m / tau).exp()).ln()
}

/// Precomputed problem data for the joint parametrization `(Q_X, V_{Z|XY})`.
///
/// The inner minimization and the outer minimization over `Q_{Z|Y}` merge into one
/// minimization over `V`: `Q~_{XZ|Y}` ranges over every law with first marginal
/// `Q_{X|Y}`, and its `Z` marginal is exactly `Q_{Z|Y}`.
pub(crate) struct Problem<'a> {
    pub source: &'a Distribution,
    pub channel: &'a ConditionalKernel,
    pub r_i: f64,
    pub rule: RateRule,
    pub kx: usize,
    pub ky: usize,
    pub kz: usize,
    pub ln_w: Vec<f64>,
    /// Support of `G` and of each `W(.|x)`.
    pub g_support: Vec<usize>,
    pub w_support: Vec<Vec<usize>>,
}

impl<'a> Problem<'a> {
    pub fn new(
        source: &'a Distribution,
        channel: &'a ConditionalKernel,
        ky: usize,
        r_i: f64,
        rule: RateRule,
    ) -> Result<Self> {
        let (kx, kz) = (source.len(), channel.k_out());
        if channel.k_in() != kx {
            return Err(Error::DimensionMismatch("channel input vs source alphabet".into()));
        }
        if !(r_i >= 0.0) || !r_i.is_finite() {
            return Err(Error::InvalidParameter(format!("R_I = {r_i}")));
        }
        let g_support = (0..kx).filter(|&x| source.probs()[x] > 0.0).collect();
        let w_support = (0..kx)
            .map(|x| (0..kz).filter(|&z| channel.get(x, z) > 0.0).collect())
            .collect();
        let ln_w = channel.as_flat().iter().map(|w| w.ln()).collect();
        Ok(Self { source, channel, r_i, rule, kx, ky, kz, ln_w, g_support, w_support })
    }

    pub fn v_lens(&self) -> Vec<usize> {
        (0..self.kx * self.ky).map(|i| self.w_support[i / self.ky].len()).collect()
    }

    /// Expands reduced `V` blocks to the full `[x][y][z]` array.
    pub fn expand_v(&self, reduced: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.kx * self.ky * self.kz];
        let mut k = 0;
        for xy in 0..self.kx * self.ky {
            for &z in &self.w_support[xy / self.ky] {
                v[xy * self.kz + z] = reduced[k];
                k += 1;
            }
        }
        v
    }

    pub fn reduce_v(&self, full: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for xy in 0..self.kx * self.ky {
            for &z in &self.w_support[xy / self.ky] {
                out.push(full[xy * self.kz + z]);
            }
        }
        out
    }

    pub fn expand_qx(&self, reduced: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.kx];
        for (i, &x) in self.g_support.iter().enumerate() {
            q[x] = reduced[i];
        }
        q
    }

    pub fn reduce_qx(&self, full: &[f64]) -> Vec<f64> {
        self.g_support.iter().map(|&x| full[x]).collect()
    }

    /// `V = W` for every `(x, y)`.
    pub fn channel_v(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.kx * self.ky * self.kz];
        for xy in 0..self.kx * self.ky {
            let x = xy / self.ky;
            v[xy * self.kz..(xy + 1) * self.kz].copy_from_slice(self.channel.row(x));
        }
        v
    }

    /// Objective in the `(Q_X, K, V)` parametrization with full-length arrays.
    pub fn value(&self, qx: &[f64], kernel: &[f64], v: &[f64], tau: f64) -> f64 {
        let (kx, ky, kz) = (self.kx, self.ky, self.kz);
        let g = self.source.probs();
        let mut div = 0.0;
        for x in 0..kx {
            if qx[x] > 0.0 {
                div += qx[x] * (qx[x] / g[x]).ln();
            }
        }
        let mut inner = 0.0;
        let mut q_xy = vec![0.0; kx * ky];
        let mut q_yz = vec![0.0; ky * kz];
        for x in 0..kx {
            for y in 0..ky {
                let p = qx[x] * kernel[x * ky + y];
                q_xy[x * ky + y] = p;
                if p <= 0.0 {
                    continue;
                }
                let base = (x * ky + y) * kz;
                let mut d = 0.0;
                for &z in &self.w_support[x] {
                    let vz = v[base + z];
                    if vz > 0.0 {
                        d += vz * (vz.ln() - self.ln_w[x * kz + z]);
                    }
                    q_yz[y * kz + z] += p * vz;
                }
                inner += p * d;
            }
        }
        let i_xy = mutual_information_flat(&q_xy, kx, ky);
        let i_yz = mutual_information_flat(&q_yz, ky, kz);
        let rate = match self.rule {
            RateRule::Ensemble => soft_max3(i_yz - i_xy, i_yz + div - self.r_i, tau),
            RateRule::Dd => soft_max3(i_yz - self.r_i, f64::NEG_INFINITY, tau),
        };
        div + inner + rate
    }

    /// `Q_{Z|Y}` induced by `V`; rows with `Q_Y(y) = 0` are uniform.
    pub fn induced_qz_y(&self, qx: &[f64], kernel: &[f64], v: &[f64]) -> Result<ConditionalKernel> {
        let (kx, ky, kz) = (self.kx, self.ky, self.kz);
        let mut rows = vec![vec![0.0; kz]; ky];
        let mut q_y = vec![0.0; ky];
        for x in 0..kx {
            for y in 0..ky {
                let p = qx[x] * kernel[x * ky + y];
                q_y[y] += p;
                for z in 0..kz {
                    rows[y][z] += p * v[(x * ky + y) * kz + z];
                }
            }
        }
        for y in 0..ky {
            if q_y[y] > 1e-300 {
                let s: f64 = rows[y].iter().sum();
                rows[y].iter_mut().for_each(|r| *r /= s);
            } else {
                rows[y] = vec![1.0 / kz as f64; kz];
            }
        }
        ConditionalKernel::new(rows)
    }

    /// `V` reconstructed from an inner-problem witness: `V(z|x,y) = Q~(x|y,z) Q(z|y) / Q(x|y)`.
    pub fn v_from_witness(
        &self,
        qx: &[f64],
        kernel: &[f64],
        qz_y: &ConditionalKernel,
        witness: &[f64],
        fallback: &[f64],
    ) -> Vec<f64> {
        let (kx, ky, kz) = (self.kx, self.ky, self.kz);
        let mut v = fallback.to_vec();
        let q_y: Vec<f64> = (0..ky).map(|y| (0..kx).map(|x| qx[x] * kernel[x * ky + y]).sum()).collect();
        for x in 0..kx {
            for y in 0..ky {
                let p = qx[x] * kernel[x * ky + y];
                if p <= 0.0 || q_y[y] <= 0.0 {
                    continue;
                }
                let a = p / q_y[y];
                let base = (x * ky + y) * kz;
                let mut row: Vec<f64> =
                    (0..kz).map(|z| witness[(y * kz + z) * kx + x] * qz_y.get(y, z) / a).collect();
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter_mut().for_each(|r| *r /= s);
                    v[base..base + kz].copy_from_slice(&row);
                }
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn positive_part_identities_are_exact() {
        // Dyadic inputs keep every subtraction exact.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a = rng.random_range(-(1i64 << 20)..(1i64 << 20)) as f64 / (1u64 << 20) as f64;
            let b = rng.random_range(-(1i64 << 20)..(1i64 << 20)) as f64 / (1u64 << 20) as f64;
            assert_eq!(a - pos(a - b), a.min(b));
            assert_eq!(b + pos(a - b), a.max(b));
        }
    }

    #[test]
    fn rate_term_is_max_of_positive_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let (iyz, ixy, d, r): (f64, f64, f64, f64) =
                (rng.random(), rng.random(), rng.random(), rng.random());
            let a = iyz - ixy;
            let b = iyz + d - r;
            let expected = if a > 0.0 || b > 0.0 { a.max(b) } else { 0.0 };
            assert_eq!(rate_term(RateRule::Ensemble, iyz, ixy, d, r), expected);
            assert!(rate_term(RateRule::Dd, iyz, ixy, d, r) <= expected);
        }
    }

    #[test]
    fn v_objective_agrees_with_terms_at_the_inner_optimum() {
        let g = Distribution::new(vec![0.7, 0.3]).unwrap();
        let w = ConditionalKernel::new(vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let k = ConditionalKernel::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let p = Problem::new(&g, &w, 2, 0.1, RateRule::Ensemble).unwrap();
        let qx = [0.6, 0.4];
        let v = vec![0.5, 0.5, 0.1, 0.9, 0.6, 0.4, 0.25, 0.75];
        let qz_y = p.induced_qz_y(&qx, k.as_flat(), &v).unwrap();
        let (terms, inner) =
            ObjectiveTerms::evaluate(&g, &w, &qx, &k, &qz_y, 0.1, RateRule::Ensemble, 1e-12).unwrap();
        let v_star = p.v_from_witness(&qx, k.as_flat(), &qz_y, &inner.witness, &v);
        assert!(p.value(&qx, k.as_flat(), &v, 0.0) >= terms.total() - 1e-12);
        assert!((p.value(&qx, k.as_flat(), &v_star, 0.0) - terms.total()).abs() < 1e-9);
    }

    #[test]
    fn soft_max_bounds() {
        for (a, b) in [(0.3, -0.1), (-1.0, -2.0), (0.5, 0.5)] {
            let exact = soft_max3(a, b, 0.0);
            let s = soft_max3(a, b, 1e-3);
            assert!(s >= exact && s <= exact + 1e-3 * 3f64.ln() + 1e-15);
        }
    }
}
