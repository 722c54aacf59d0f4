use serde::{Deserialize, Serialize};

use super::constraint::{check_with_mi, CompressionConstraint, CEILING_SLACK};
use crate::error::{Error, Result};
use crate::types::{
    entropy_of, kl, mutual_information_flat, ConditionalKernel, Distribution, EmpiricalType,
};

/// One row of a user-supplied mapping table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    /// Source type as a count vector.
    pub qx: Vec<u32>,
    pub kernel: ConditionalKernel,
}

/// How a test channel `Q_{Y|X}` is chosen for a source type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum MappingStrategy {
    /// Use the table entry for the type; types without an entry fall back to
    /// `identity_if_allowed`.
    UserTable { entries: Vec<TableEntry> },
    /// Start from `y = x` and blend toward the uniform kernel until all predicates hold.
    IdentityIfAllowed,
    /// Maximize `I_Q(Y;Z)` through the configured channel over a kernel grid.
    GreedyCapacity {
        #[serde(default = "default_grid_step")]
        grid_step: f64,
    },
}

fn default_grid_step() -> f64 {
    0.05
}

/// Test-channel policy plus the `Delta`, `epsilon` margins of the ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingPolicy {
    #[serde(flatten)]
    pub strategy: MappingStrategy,
    pub delta: f64,
    pub epsilon: f64,
}

impl MappingPolicy {
    pub fn new(strategy: MappingStrategy, delta: f64, epsilon: f64) -> Result<Self> {
        let p = Self { strategy, delta, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn identity_if_allowed(delta: f64, epsilon: f64) -> Result<Self> {
        Self::new(MappingStrategy::IdentityIfAllowed, delta, epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = if self.delta == 0.0 {
            self.epsilon == 0.0
        } else {
            self.delta > 0.0 && self.epsilon > 0.0 && self.epsilon < self.delta
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "need 0 < epsilon < delta or delta = epsilon = 0 (delta {}, epsilon {})",
                self.delta, self.epsilon
            )));
        }
        if let MappingStrategy::GreedyCapacity { grid_step } = self.strategy {
            if !(grid_step > 0.0 && grid_step <= 0.5) {
                return Err(Error::InvalidParameter(format!("grid_step = {grid_step}")));
            }
        }
        Ok(())
    }

    /// Source types with entropy below this threshold are stored losslessly.
    pub fn entropy_threshold(&self) -> f64 {
        self.delta.sqrt()
    }

    /// Required floor on `H_Q(X|Y)` for quantized types.
    pub fn equivocation_floor(&self) -> f64 {
        self.delta + 3.0 * self.epsilon
    }
}

/// Everything test-channel selection depends on besides the source type itself.
#[derive(Clone, Copy, Debug)]
pub struct SelectionContext<'a> {
    pub source: &'a Distribution,
    pub k_y: usize,
    pub policy: &'a MappingPolicy,
    pub constraint: &'a CompressionConstraint,
    /// Needed by `greedy_capacity`.
    pub channel: Option<&'a ConditionalKernel>,
}

/// Values of the predicates a quantizing kernel has to satisfy.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct PredicateCheck {
    pub mutual_information: f64,
    pub equivocation: f64,
    pub constraint_ok: bool,
    pub equivocation_ok: bool,
    divergence: f64,
    ceiling: Option<f64>,
    floor: f64,
}

impl PredicateCheck {
    pub fn ok(&self) -> bool {
        self.constraint_ok && self.equivocation_ok
    }

    pub fn detail(&self) -> String {
        if !self.constraint_ok {
            match self.ceiling {
                Some(c) => format!("compression constraint violated: I_Q(X;Y) = {:.6} <= {c:.6}", self.mutual_information),
                None => format!("compression constraint violated: D(Q_X||G) = {:.6}", self.divergence),
            }
        } else if !self.equivocation_ok {
            format!("H_Q(X|Y) = {:.6} < {:.6}", self.equivocation, self.floor)
        } else {
            "ok".to_string()
        }
    }
}

pub(crate) fn check_joint(
    qx: &[f64],
    joint: &[f64],
    k_y: usize,
    ctx: &SelectionContext<'_>,
    floor: f64,
) -> PredicateCheck {
    let k_x = qx.len();
    let mi = mutual_information_flat(joint, k_x, k_y);
    let equivocation = (entropy_of(qx) - mi).max(0.0);
    let divergence = kl(qx, ctx.source.probs());
    let ceiling = ctx.constraint.rate_ceiling(divergence);
    PredicateCheck {
        mutual_information: mi,
        equivocation,
        constraint_ok: ceiling.is_none_or(|c| mi <= c + CEILING_SLACK),
        equivocation_ok: equivocation >= floor - 1e-12,
        divergence,
        ceiling,
        floor,
    }
}

fn joint_of(qx: &[f64], kernel: &ConditionalKernel) -> Vec<f64> {
    qx.iter()
        .enumerate()
        .flat_map(|(a, pa)| kernel.row(a).iter().map(move |k| pa * k))
        .collect()
}

/// Smallest blend weight `t` such that `(1-t) K + t U` passes both predicates.
///
/// Blending with the uniform kernel is a post-processing of `Y`, so `I_Q(X;Y)` is
/// non-increasing and `H_Q(X|Y)` non-decreasing in `t`; bisection is valid.
pub(crate) fn blend_until_feasible(
    qx: &[f64],
    start: &ConditionalKernel,
    ctx: &SelectionContext<'_>,
    floor: f64,
) -> Result<ConditionalKernel> {
    let (k_y, base) = (start.k_out(), start.as_flat());
    let mut joint = vec![0.0; base.len()];
    let mut passes = |t: f64| -> PredicateCheck {
        for (i, j) in joint.iter_mut().enumerate() {
            *j = qx[i / k_y] * ((1.0 - t) * base[i] + t / k_y as f64);
        }
        check_joint(qx, &joint, k_y, ctx, floor)
    };
    if passes(0.0).ok() {
        return Ok(start.clone());
    }
    let c1 = passes(1.0);
    if !c1.ok() {
        return Err(Error::Infeasible(format!(
            "no blend of the test channel toward uniform is feasible for Q_X = {qx:?}: {}",
            c1.detail()
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if passes(mid).ok() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    start.blend(&ConditionalKernel::uniform(start.k_in(), k_y)?, hi)
}

/// All kernels `k_x -> k_y` whose rows lie on the simplex grid of the given step.
pub(crate) fn kernel_grid(k_x: usize, k_y: usize, step: f64, cap: usize) -> Result<Vec<Vec<f64>>> {
    let m = (1.0 / step).round() as u32;
    let rows: Vec<Vec<f64>> = crate::types::enumerate_types(m as usize, k_y)?
        .into_iter()
        .map(|t| t.counts().iter().map(|&c| c as f64 / m as f64).collect())
        .collect();
    let total = (rows.len() as f64).powi(k_x as i32);
    if total > cap as f64 {
        return Err(Error::CapExceeded(format!(
            "kernel grid of {total} points (step {step}) exceeds cap {cap}"
        )));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; k_x];
    loop {
        out.push(idx.iter().flat_map(|&i| rows[i].iter().copied()).collect());
        let mut pos = k_x;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < rows.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// `I(Y;Z)` for `Y <- X -> Z` with `X ~ qx`, `Y|X ~ kernel`, `Z|X ~ channel`.
pub(crate) fn mi_yz_through(qx: &[f64], kernel: &[f64], k_y: usize, channel: &ConditionalKernel) -> f64 {
    let k_z = channel.k_out();
    let mut q_yz = vec![0.0; k_y * k_z];
    for (a, pa) in qx.iter().enumerate() {
        if *pa == 0.0 {
            continue;
        }
        for b in 0..k_y {
            let pab = pa * kernel[a * k_y + b];
            if pab == 0.0 {
                continue;
            }
            for c in 0..k_z {
                q_yz[b * k_z + c] += pab * channel.get(a, c);
            }
        }
    }
    mutual_information_flat(&q_yz, k_y, k_z)
}

const GREEDY_GRID_CAP: usize = 2_000_000;

fn select_core(
    qx: &[f64],
    table_key: Option<&EmpiricalType>,
    ctx: &SelectionContext<'_>,
    floor: f64,
) -> Result<ConditionalKernel> {
    let k_x = qx.len();
    if ctx.k_y < k_x && !matches!(ctx.policy.strategy, MappingStrategy::UserTable { .. }) {
        // Blending needs a starting kernel; without room for y = x start from uniform.
        let u = ConditionalKernel::uniform(k_x, ctx.k_y)?;
        return blend_until_feasible(qx, &u, ctx, floor);
    }
    match &ctx.policy.strategy {
        MappingStrategy::UserTable { entries } => {
            let hit = table_key
                .and_then(|key| entries.iter().find(|e| e.qx.as_slice() == key.counts()));
            match hit {
                Some(entry) => {
                    let k = &entry.kernel;
                    if k.k_in() != k_x || k.k_out() != ctx.k_y {
                        return Err(Error::DimensionMismatch(format!(
                            "table kernel for {:?} is {}x{}",
                            entry.qx,
                            k.k_in(),
                            k.k_out()
                        )));
                    }
                    let c = check_joint(qx, &joint_of(qx, k), ctx.k_y, ctx, floor);
                    if !c.ok() {
                        return Err(Error::Infeasible(format!(
                            "table entry for {:?}: {}",
                            entry.qx, c.detail()
                        )));
                    }
                    Ok(k.clone())
                }
                None => {
                    let id = ConditionalKernel::identity(k_x, ctx.k_y)?;
                    blend_until_feasible(qx, &id, ctx, floor)
                }
            }
        }
        MappingStrategy::IdentityIfAllowed => {
            let id = ConditionalKernel::identity(k_x, ctx.k_y)?;
            blend_until_feasible(qx, &id, ctx, floor)
        }
        MappingStrategy::GreedyCapacity { grid_step } => {
            let channel = ctx.channel.ok_or_else(|| {
                Error::InvalidParameter("greedy_capacity needs the channel W".into())
            })?;
            if channel.k_in() != k_x {
                return Err(Error::DimensionMismatch("channel input alphabet".into()));
            }
            let mut best: Option<(f64, Vec<f64>)> = None;
            for kernel in kernel_grid(k_x, ctx.k_y, *grid_step, GREEDY_GRID_CAP)? {
                let joint: Vec<f64> = qx
                    .iter()
                    .enumerate()
                    .flat_map(|(a, pa)| kernel[a * ctx.k_y..(a + 1) * ctx.k_y].iter().map(move |k| pa * k))
                    .collect();
                let mi = mutual_information_flat(&joint, k_x, ctx.k_y);
                if !check_with_mi(qx, mi, ctx.source, ctx.constraint).passed {
                    continue;
                }
                let v = mi_yz_through(qx, &kernel, ctx.k_y, channel);
                if best.as_ref().is_none_or(|(b, _)| v > *b + 1e-15) {
                    best = Some((v, kernel));
                }
            }
            let (_, kernel) = best.ok_or_else(|| {
                Error::Infeasible(format!(
                    "no grid kernel satisfies the compression constraint at Q_X = {qx:?}"
                ))
            })?;
            let k = ConditionalKernel::from_flat(k_x, ctx.k_y, kernel)?;
            blend_until_feasible(qx, &k, ctx, floor)
        }
    }
}

/// Chooses `Q_{Y|X}` for a quantized source type.
///
/// The result satisfies the compression constraint and `H_Q(X|Y) >= Delta + 3 epsilon`;
/// types below the entropy threshold are rejected because they are stored losslessly.
pub fn select_test_channel(qx: &EmpiricalType, ctx: &SelectionContext<'_>) -> Result<ConditionalKernel> {
    let probs = qx.probs();
    if qx.k() != ctx.source.len() {
        return Err(Error::DimensionMismatch("source type vs source alphabet".into()));
    }
    let h = entropy_of(&probs);
    if h < ctx.policy.entropy_threshold() {
        return Err(Error::InvalidParameter(format!(
            "type {qx} has entropy {h:.6} below the threshold {:.6}",
            ctx.policy.entropy_threshold()
        )));
    }
    select_core(&probs, Some(qx), ctx, ctx.policy.equivocation_floor())
}

/// Test channel for an arbitrary (not necessarily quantized) source distribution,
/// with the `Delta`, `epsilon` margins dropped. Used by the exponent evaluators.
pub fn select_test_channel_continuous(qx: &[f64], ctx: &SelectionContext<'_>) -> Result<ConditionalKernel> {
    select_core(qx, None, ctx, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{joint_measures, JointDistribution};

    fn measures(qx: &[f64], k: &ConditionalKernel) -> crate::types::JointMeasures {
        joint_measures(&JointDistribution::from_marginal_and_kernel(qx, k).unwrap())
    }

    #[test]
    fn user_table_entry_is_returned_verbatim() {
        let g = Distribution::uniform(2).unwrap();
        let kernel = ConditionalKernel::new(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let policy = MappingPolicy::new(
            MappingStrategy::UserTable {
                entries: vec![TableEntry { qx: vec![3, 3], kernel: kernel.clone() }],
            },
            0.01,
            0.001,
        )
        .unwrap();
        let constraint = CompressionConstraint::ExpectedLength { rate: 1.0, vicinity: 0.1 };
        let ctx = SelectionContext {
            source: &g,
            k_y: 2,
            policy: &policy,
            constraint: &constraint,
            channel: None,
        };
        let t = EmpiricalType::new(vec![3, 3]).unwrap();
        assert_eq!(select_test_channel(&t, &ctx).unwrap(), kernel);
    }

    #[test]
    fn identity_blends_until_equivocation_floor() {
        // Bisection oracle: the blend weight is the smallest one meeting both predicates.
        let g = Distribution::uniform(2).unwrap();
        let policy = MappingPolicy::identity_if_allowed(0.1, 0.02).unwrap();
        let constraint = CompressionConstraint::ExpectedLength { rate: 2.0, vicinity: 0.1 };
        let ctx = SelectionContext {
            source: &g,
            k_y: 2,
            policy: &policy,
            constraint: &constraint,
            channel: None,
        };
        let t = EmpiricalType::new(vec![5, 5]).unwrap();
        let k = select_test_channel(&t, &ctx).unwrap();
        let m = measures(&t.probs(), &k);
        let floor = policy.equivocation_floor();
        assert!(m.h_x_given_y >= floor - 1e-11, "{} < {floor}", m.h_x_given_y);
        assert!(m.h_x_given_y - floor < 1e-9, "blend not minimal: {}", m.h_x_given_y);
        assert!(m.mutual_information <= 2.0);
    }

    #[test]
    fn low_rate_constraint_gives_low_rate_kernel() {
        let g = Distribution::uniform(2).unwrap();
        let policy = MappingPolicy::identity_if_allowed(0.1, 0.02).unwrap();
        let constraint = CompressionConstraint::ExpectedLength { rate: 0.01, vicinity: 0.1 };
        let ctx = SelectionContext {
            source: &g,
            k_y: 2,
            policy: &policy,
            constraint: &constraint,
            channel: None,
        };
        let t = EmpiricalType::new(vec![10, 10]).unwrap();
        assert!((t.entropy() - 0.693).abs() < 1e-2);
        let k = select_test_channel(&t, &ctx).unwrap();
        let m = measures(&t.probs(), &k);
        assert!(m.mutual_information <= 0.01 + 1e-12);
        assert!(m.mutual_information > 0.009, "blend overshoots: {}", m.mutual_information);
    }

    #[test]
    fn low_entropy_type_rejected() {
        let g = Distribution::uniform(2).unwrap();
        let policy = MappingPolicy::identity_if_allowed(0.1, 0.02).unwrap();
        let constraint = CompressionConstraint::unconstrained();
        let ctx = SelectionContext {
            source: &g,
            k_y: 2,
            policy: &policy,
            constraint: &constraint,
            channel: None,
        };
        assert!(select_test_channel(&EmpiricalType::new(vec![6, 0]).unwrap(), &ctx).is_err());
    }

    #[test]
    fn greedy_capacity_prefers_informative_kernel() {
        let g = Distribution::uniform(2).unwrap();
        let w = ConditionalKernel::bsc(0.1).unwrap();
        let policy = MappingPolicy::new(MappingStrategy::GreedyCapacity { grid_step: 0.1 }, 0.0, 0.0).unwrap();
        let constraint = CompressionConstraint::unconstrained();
        let ctx = SelectionContext {
            source: &g,
            k_y: 2,
            policy: &policy,
            constraint: &constraint,
            channel: Some(&w),
        };
        let k = select_test_channel_continuous(&[0.5, 0.5], &ctx).unwrap();
        // Identity (or its relabeling) is optimal without a constraint.
        let v = mi_yz_through(&[0.5, 0.5], k.as_flat(), 2, &w);
        let cap = std::f64::consts::LN_2 + 0.1 * 0.1f64.ln() + 0.9 * 0.9f64.ln();
        assert!((v - cap).abs() < 1e-12);
    }

    #[test]
    fn kernel_grid_size() {
        assert_eq!(kernel_grid(2, 2, 0.05, 10_000).unwrap().len(), 441);
        assert!(kernel_grid(3, 3, 0.05, 1000).is_err());
    }

    #[test]
    fn policy_validation() {
        assert!(MappingPolicy::identity_if_allowed(0.1, 0.2).is_err());
        assert!(MappingPolicy::identity_if_allowed(0.0, 0.0).is_ok());
        assert!(MappingPolicy::identity_if_allowed(0.0, 0.01).is_err());
    }
}
