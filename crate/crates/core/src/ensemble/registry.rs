use std::collections::{HashMap, HashSet};

use serde::Serialize;

use super::policy::{check_joint, select_test_channel, SelectionContext};
use crate::error::{Error, Result};
use crate::types::{
    entropy_of, enumerate_types, mutual_information_flat, ConditionalKernel, EmpiricalType,
    JointEmpiricalType,
};

/// Blend increment toward the uniform kernel when a rounded joint type misses a predicate.
const ROUNDING_BLEND_STEP: f64 = 0.02;

/// One registered source type and its quantization joint type.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegistryEntry {
    pub qx: EmpiricalType,
    pub qy: EmpiricalType,
    /// Joint n-type of `(x, y)`; rows sum to `qx`, columns to `qy`.
    pub joint: JointEmpiricalType,
    /// `Q_{Y|X}` read off `joint` (rows of absent symbols are uniform).
    pub kernel: ConditionalKernel,
    pub mutual_information: f64,
    /// `H_Q(X|Y)` of the joint type.
    pub equivocation: f64,
    /// Low-entropy type stored losslessly (`y = x`).
    pub identity: bool,
    pub repaired: bool,
}

impl RegistryEntry {
    pub(crate) fn from_joint(joint: JointEmpiricalType, identity: bool, repaired: bool) -> Result<Self> {
        let qx = joint.first_type()?;
        let qy = joint.second_type()?;
        let (kx, ky) = (joint.k1(), joint.k2());
        let mut rows = Vec::with_capacity(kx * ky);
        for (a, &na) in qx.counts().iter().enumerate() {
            for b in 0..ky {
                rows.push(if na == 0 {
                    1.0 / ky as f64
                } else {
                    joint.get(a, b) as f64 / na as f64
                });
            }
        }
        let kernel = ConditionalKernel::from_flat(kx, ky, rows)?;
        let p = joint.probs();
        let mutual_information = mutual_information_flat(&p, kx, ky);
        let equivocation = (entropy_of(&qx.probs()) - mutual_information).max(0.0);
        Ok(Self { qx, qy, joint, kernel, mutual_information, equivocation, identity, repaired })
    }
}

/// A collision resolved by moving a source type to another output type.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Repair {
    pub qx: EmpiricalType,
    pub original_qy: EmpiricalType,
    pub repaired_qy: EmpiricalType,
    /// Source type that already held `original_qy`, if any.
    pub collided_with: Option<EmpiricalType>,
}

/// One-to-one map between source n-types and output n-types.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeRegistry {
    n: usize,
    k_x: usize,
    k_y: usize,
    delta: f64,
    epsilon: f64,
    entries: Vec<RegistryEntry>,
    #[serde(skip)]
    forward: HashMap<Vec<u32>, usize>,
    #[serde(skip)]
    reverse: HashMap<Vec<u32>, usize>,
    repairs: Vec<Repair>,
    notes: Vec<String>,
}

impl TypeRegistry {
    /// Assembles a registry from entries, rejecting non-injective input.
    pub fn from_entries(
        n: usize,
        k_x: usize,
        k_y: usize,
        delta: f64,
        epsilon: f64,
        entries: Vec<RegistryEntry>,
    ) -> Result<Self> {
        let mut forward = HashMap::with_capacity(entries.len());
        let mut reverse = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.joint.k1() != k_x || e.joint.k2() != k_y || e.qx.n() != n {
                return Err(Error::DimensionMismatch(format!("registry entry {}", e.qx)));
            }
            if forward.insert(e.qx.counts().to_vec(), i).is_some() {
                return Err(Error::Format(format!("source type {} registered twice", e.qx)));
            }
            if let Some(j) = reverse.insert(e.qy.counts().to_vec(), i) {
                return Err(Error::InjectivityRepair(format!(
                    "{} and {} share output type {}",
                    entries[j].qx, e.qx, e.qy
                )));
            }
        }
        Ok(Self {
            n,
            k_x,
            k_y,
            delta,
            epsilon,
            entries,
            forward,
            reverse,
            repairs: Vec::new(),
            notes: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_x(&self) -> usize {
        self.k_x
    }

    pub fn k_y(&self) -> usize {
        self.k_y
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn repairs(&self) -> &[Repair] {
        &self.repairs
    }

    /// Boundary remarks, e.g. types whose entropy sits at the lossless threshold.
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn index_of_x(&self, counts: &[u32]) -> Option<usize> {
        self.forward.get(counts).copied()
    }

    pub fn index_of_y(&self, counts: &[u32]) -> Option<usize> {
        self.reverse.get(counts).copied()
    }

    pub fn forward(&self, qx: &EmpiricalType) -> Option<&RegistryEntry> {
        self.index_of_x(qx.counts()).map(|i| &self.entries[i])
    }

    pub fn reverse(&self, qy: &EmpiricalType) -> Option<&RegistryEntry> {
        self.index_of_y(qy.counts()).map(|i| &self.entries[i])
    }

    /// `reverse(forward(Q_X)) = Q_X` for every registered type.
    pub fn is_injective(&self) -> bool {
        self.entries.iter().all(|e| {
            self.reverse(&e.qy).map(|r| &r.qx) == Some(&e.qx)
        }) && self.reverse.len() == self.entries.len()
    }
}

/// Largest-remainder rounding of `weights` (summing to one) to integers summing to `total`.
fn largest_remainder(weights: &[f64], total: u32) -> Vec<u32> {
    let raw: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut out: Vec<u32> = raw.iter().map(|r| r.floor() as u32).collect();
    let assigned: u32 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        (raw[j] - raw[j].floor())
            .total_cmp(&(raw[i] - raw[i].floor()))
            .then(i.cmp(&j))
    });
    for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
        out[i] += 1;
    }
    out
}

fn quantize_kernel(qx: &EmpiricalType, kernel: &ConditionalKernel) -> Result<JointEmpiricalType> {
    let ky = kernel.k_out();
    let mut counts = Vec::with_capacity(qx.k() * ky);
    for (a, &na) in qx.counts().iter().enumerate() {
        counts.extend(largest_remainder(kernel.row(a), na));
    }
    JointEmpiricalType::from_counts(qx.k(), ky, counts)
}

/// Integer matrix with the given margins, close to `target` (an unnormalized joint).
fn joint_with_margins(target: &[f64], rows: &[u32], cols: &[u32]) -> Vec<u32> {
    let (kx, ky) = (rows.len(), cols.len());
    let total: f64 = rows.iter().map(|&r| r as f64).sum();
    let floor_mass = 1e-6 / (kx * ky) as f64;
    let mut m: Vec<f64> = (0..kx * ky)
        .map(|i| {
            let (a, b) = (i / ky, i % ky);
            if rows[a] == 0 || cols[b] == 0 {
                0.0
            } else {
                target[i] + floor_mass
            }
        })
        .collect();
    for _ in 0..2000 {
        for a in 0..kx {
            let s: f64 = m[a * ky..(a + 1) * ky].iter().sum();
            if s > 0.0 {
                let f = rows[a] as f64 / s;
                m[a * ky..(a + 1) * ky].iter_mut().for_each(|v| *v *= f);
            }
        }
        let mut worst = 0.0f64;
        for b in 0..ky {
            let s: f64 = (0..kx).map(|a| m[a * ky + b]).sum();
            if s > 0.0 {
                worst = worst.max((s - cols[b] as f64).abs());
                let f = cols[b] as f64 / s;
                (0..kx).for_each(|a| m[a * ky + b] *= f);
            }
        }
        if worst < 1e-10 * total.max(1.0) {
            break;
        }
    }
    let mut out: Vec<u32> = m.iter().map(|v| v.floor() as u32).collect();
    let mut frac: Vec<f64> = m.iter().zip(&out).map(|(v, o)| v - *o as f64).collect();
    let mut row_def: Vec<i64> = (0..kx)
        .map(|a| rows[a] as i64 - out[a * ky..(a + 1) * ky].iter().map(|&c| c as i64).sum::<i64>())
        .collect();
    let mut col_def: Vec<i64> = (0..ky)
        .map(|b| cols[b] as i64 - (0..kx).map(|a| out[a * ky + b] as i64).sum::<i64>())
        .collect();
    // Floors never overshoot a margin, and any row with a deficit can pair with
    // any column with a deficit, so greedy filling always completes.
    while row_def.iter().any(|&d| d > 0) {
        let mut best: Option<usize> = None;
        for i in 0..kx * ky {
            let (a, b) = (i / ky, i % ky);
            if row_def[a] > 0 && col_def[b] > 0 && best.is_none_or(|j| frac[i] > frac[j]) {
                best = Some(i);
            }
        }
        let i = best.expect("margins with equal totals");
        out[i] += 1;
        frac[i] -= 1.0;
        row_def[i / ky] -= 1;
        col_def[i % ky] -= 1;
    }
    out
}

fn identity_joint(qx: &EmpiricalType, ky: usize) -> Result<JointEmpiricalType> {
    let kx = qx.k();
    let mut counts = vec![0u32; kx * ky];
    for (a, &c) in qx.counts().iter().enumerate() {
        counts[a * ky + a] = c;
    }
    JointEmpiricalType::from_counts(kx, ky, counts)
}

/// Builds the one-to-one registry `Q_X -> (Q_{Y|X}, Q_Y)` for all n-types.
///
/// Low-entropy types (`H < sqrt(Delta)`) map to themselves. Every other type gets the
/// policy's test channel rounded to a joint n-type; when its output type is taken or
/// falls below the entropy threshold, the nearest free output type in L1 that keeps
/// the predicates is used instead and the move is recorded.
pub fn build_registry(n: usize, ctx: &SelectionContext<'_>) -> Result<TypeRegistry> {
    let policy = ctx.policy;
    policy.validate()?;
    ctx.constraint.validate()?;
    let (kx, ky) = (ctx.source.len(), ctx.k_y);
    if policy.delta > 0.0 && ky < kx {
        return Err(Error::InvalidParameter(format!(
            "|Y| = {ky} < |X| = {kx} requires delta = 0"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n = 0".into()));
    }
    let threshold = policy.entropy_threshold();
    let floor = policy.equivocation_floor();
    let types = enumerate_types(n, kx)?;
    let (low, high): (Vec<_>, Vec<_>) = types.into_iter().partition(|t| t.entropy() < threshold);

    let mut entries = Vec::with_capacity(low.len() + high.len());
    let mut notes = Vec::new();
    for qx in &low {
        entries.push(RegistryEntry::from_joint(identity_joint(qx, ky)?, true, false)?);
    }

    let mut raw = Vec::with_capacity(high.len());
    for qx in &high {
        if (qx.entropy() - threshold).abs() < 1e-9 {
            notes.push(format!(
                "type {qx} has entropy {:.9} at the lossless threshold; quantized",
                qx.entropy()
            ));
        }
        raw.push(rounded_joint(qx, ctx, floor)?);
    }

    let mut m = Matcher {
        high: &high,
        raw,
        ctx,
        floor,
        threshold,
        n,
        pool: None,
        candidates: vec![None; high.len()],
        owner: HashMap::new(),
        assigned: vec![None; high.len()],
    };
    let mut pending = Vec::new();
    for i in 0..high.len() {
        let qy = m.raw[i].second_counts();
        let eligible = EmpiricalType::new(qy.clone())?.entropy() >= threshold;
        if eligible && !m.owner.contains_key(&qy) {
            m.owner.insert(qy, i);
            m.assigned[i] = Some(m.raw[i].clone());
        } else {
            pending.push(i);
        }
    }
    for i in pending {
        let mut visited = HashSet::new();
        if !m.augment(i, &mut visited)? {
            let qy = m.raw[i].second_type()?;
            let holder = m
                .owner
                .get(qy.counts())
                .map(|&j| high[j].to_string())
                .unwrap_or_else(|| "below the entropy threshold".to_string());
            return Err(Error::InjectivityRepair(format!("{} -> {qy} (held by {holder})", high[i])));
        }
    }

    let mut repairs = Vec::new();
    for (i, qx) in high.iter().enumerate() {
        let joint = m.assigned[i].clone().expect("every type matched");
        let original_qy = m.raw[i].second_type()?;
        let repaired = joint.second_counts() != original_qy.counts();
        let e = RegistryEntry::from_joint(joint, false, repaired)?;
        if repaired {
            repairs.push(Repair {
                qx: qx.clone(),
                repaired_qy: e.qy.clone(),
                collided_with: m.owner.get(original_qy.counts()).map(|&j| high[j].clone()),
                original_qy,
            });
        }
        entries.push(e);
    }

    let mut reg = TypeRegistry::from_entries(n, kx, ky, policy.delta, policy.epsilon, entries)?;
    reg.repairs = repairs;
    reg.notes = notes;
    debug_assert!(reg.is_injective());
    Ok(reg)
}

/// The policy kernel rounded to a joint n-type, blended toward uniform until the
/// rounded type meets the predicates.
fn rounded_joint(qx: &EmpiricalType, ctx: &SelectionContext<'_>, floor: f64) -> Result<JointEmpiricalType> {
    let (kx, ky) = (qx.k(), ctx.k_y);
    let probs = qx.probs();
    let kernel = select_test_channel(qx, ctx)?;
    let uniform = ConditionalKernel::uniform(kx, ky)?;
    let steps = (1.0 / ROUNDING_BLEND_STEP).round() as usize;
    let mut last = String::new();
    for s in 0..=steps {
        let t = (s as f64 * ROUNDING_BLEND_STEP).min(1.0);
        let j = quantize_kernel(qx, &kernel.blend(&uniform, t)?)?;
        let c = check_joint(&probs, &j.probs(), ky, ctx, floor);
        if c.ok() {
            return Ok(j);
        }
        last = c.detail();
    }
    Err(Error::Infeasible(format!(
        "type {qx}: no rounded joint type satisfies the predicates ({last})"
    )))
}

/// Augmenting-path assignment of source types to distinct output types.
struct Matcher<'a, 'c> {
    high: &'a [EmpiricalType],
    raw: Vec<JointEmpiricalType>,
    ctx: &'a SelectionContext<'c>,
    floor: f64,
    threshold: f64,
    n: usize,
    pool: Option<Vec<EmpiricalType>>,
    /// Feasible `(Q_Y, joint)` alternatives per source type, nearest first.
    candidates: Vec<Option<Vec<JointEmpiricalType>>>,
    owner: HashMap<Vec<u32>, usize>,
    assigned: Vec<Option<JointEmpiricalType>>,
}

impl Matcher<'_, '_> {
    fn candidates(&mut self, i: usize) -> Result<Vec<JointEmpiricalType>> {
        if let Some(c) = &self.candidates[i] {
            return Ok(c.clone());
        }
        if self.pool.is_none() {
            let threshold = self.threshold;
            let pool = enumerate_types(self.n, self.ctx.k_y)?
                .into_iter()
                .filter(|q| q.entropy() >= threshold)
                .collect();
            self.pool = Some(pool);
        }
        let qx = &self.high[i];
        let probs = qx.probs();
        let raw = &self.raw[i];
        let raw_qy = raw.second_type()?;
        let mut order: Vec<&EmpiricalType> = self.pool.as_ref().expect("set above").iter().collect();
        order.sort_by_key(|q| q.l1(&raw_qy));
        let target: Vec<f64> = raw.counts().iter().map(|&c| c as f64).collect();
        let mut out = Vec::new();
        for q in order {
            let j = if q == &raw_qy {
                raw.clone()
            } else {
                let counts = joint_with_margins(&target, qx.counts(), q.counts());
                JointEmpiricalType::from_counts(qx.k(), self.ctx.k_y, counts)?
            };
            if check_joint(&probs, &j.probs(), self.ctx.k_y, self.ctx, self.floor).ok() {
                out.push(j);
            }
        }
        self.candidates[i] = Some(out.clone());
        Ok(out)
    }

    fn augment(&mut self, i: usize, visited: &mut HashSet<Vec<u32>>) -> Result<bool> {
        let cands = self.candidates(i)?;
        // Prefer a free output type before displacing another source type.
        if let Some(joint) = cands
            .iter()
            .find(|j| !self.owner.contains_key(&j.second_counts()) && !visited.contains(&j.second_counts()))
        {
            self.owner.insert(joint.second_counts(), i);
            self.assigned[i] = Some(joint.clone());
            return Ok(true);
        }
        for joint in cands {
            let qy = joint.second_counts();
            if !visited.insert(qy.clone()) {
                continue;
            }
            let free = match self.owner.get(&qy).copied() {
                None => true,
                Some(j) => self.augment(j, visited)?,
            };
            if free {
                self.owner.insert(qy, i);
                self.assigned[i] = Some(joint);
                return Ok(true);
            }
        }
        Ok(false)
    }
}
