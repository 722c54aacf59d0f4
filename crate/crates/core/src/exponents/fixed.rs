use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{ContinuousMapping, ObjectiveTerms, Problem, RateRule};
use super::optimize::{minimize, Blocks, LocalConfig};
use super::DEFAULT_INNER_TOL;
use crate::error::{Error, Result};
use crate::types::{enumerate_types, ConditionalKernel, Distribution};

/// Smoothing schedule of the rate term; the last level is exact.
const TAU_SCHEDULE: [f64; 4] = [1e-2, 1e-3, 1e-4, 0.0];

fn default_starts() -> usize {
    32
}
fn default_max_iter() -> usize {
    400
}
fn default_inner_tol() -> f64 {
    DEFAULT_INNER_TOL
}
fn default_floor() -> f64 {
    1e-9
}
fn default_grid_step() -> f64 {
    0.05
}

/// Solver settings shared by the exponent evaluators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentOptions {
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    /// Interior floor of every simplex coordinate during the search.
    #[serde(default = "default_floor")]
    pub floor: f64,
    /// Kernel grid resolution of the max step (min-max-min) and the capacity search.
    #[serde(default = "default_grid_step")]
    pub kernel_grid_step: f64,
    /// Source simplex grid resolution of the outer min (min-max-min).
    #[serde(default = "default_grid_step")]
    pub qx_grid_step: f64,
    /// Additional starting points, evaluated as given and as seeds of a local search.
    #[serde(skip)]
    pub warm_starts: Vec<StartPoint>,
}

impl Default for ExponentOptions {
    fn default() -> Self {
        Self {
            starts: default_starts(),
            seed: 0,
            max_iter: default_max_iter(),
            inner_tol: default_inner_tol(),
            floor: default_floor(),
            kernel_grid_step: default_grid_step(),
            qx_grid_step: default_grid_step(),
            warm_starts: Vec::new(),
        }
    }
}

impl ExponentOptions {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 && self.warm_starts.is_empty() {
            return Err(Error::InvalidParameter("exponent solver needs at least one start".into()));
        }
        for (name, v) in [("kernel_grid_step", self.kernel_grid_step), ("qx_grid_step", self.qx_grid_step)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v}")));
            }
        }
        if !(self.floor >= 0.0 && self.floor < 1e-3) || !(self.inner_tol > 0.0) {
            return Err(Error::InvalidParameter("floor or inner_tol out of range".into()));
        }
        Ok(())
    }

    pub(crate) fn local(&self) -> LocalConfig {
        LocalConfig { floor: self.floor, max_iter: self.max_iter, ..LocalConfig::default() }
    }
}

/// A point `(Q_X, V_{Z|XY})` of the joint search space; `v` is flattened `[x][y][z]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartPoint {
    pub qx: Vec<f64>,
    pub v: Vec<f64>,
}

/// Value and witnesses of an exponent evaluation.
///
/// The outer problem is non-convex: `value` is the best value found, i.e. an upper
/// bound on the true minimum (`upper_bound` is always set for that reason).
#[derive(Clone, Debug, Serialize)]
pub struct ExponentResult {
    pub value: f64,
    pub rule: RateRule,
    pub r_i: f64,
    pub qx: Vec<f64>,
    /// `Q_{Y|X}` at the witness `Q_X`.
    pub kernel: ConditionalKernel,
    pub qz_y: ConditionalKernel,
    /// Inner minimizer `Q~_{X|YZ}`, flattened `[y][z][x]`.
    pub inner_witness: Vec<f64>,
    /// `Q~_{Z|XY}` realizing the inner minimum, flattened `[x][y][z]`.
    pub v: Vec<f64>,
    pub terms: ObjectiveTerms,
    pub restarts: usize,
    pub failed_starts: usize,
    pub best_start: usize,
    pub inner_residual: f64,
    pub upper_bound: bool,
}

impl ExponentResult {
    pub fn start_point(&self) -> StartPoint {
        StartPoint { qx: self.qx.clone(), v: self.v.clone() }
    }

    /// Objective recomputed from scratch at the reported witnesses.
    pub fn reevaluate(&self, source: &Distribution, channel: &ConditionalKernel, inner_tol: f64) -> Result<ObjectiveTerms> {
        Ok(ObjectiveTerms::evaluate(
            source, channel, &self.qx, &self.kernel, &self.qz_y, self.r_i, self.rule, inner_tol,
        )?
        .0)
    }
}

pub(crate) struct Candidate {
    pub value: f64,
    pub qx: Vec<f64>,
    pub kernel: ConditionalKernel,
    pub qz_y: ConditionalKernel,
    pub inner_witness: Vec<f64>,
    pub v: Vec<f64>,
    pub terms: ObjectiveTerms,
    pub residual: f64,
}

/// Exact evaluation at `(Q_X, K, Q_{Z|Y}(V))` and the inner-optimal `V` at that point.
pub(crate) fn canonicalize(
    p: &Problem<'_>,
    qx: &[f64],
    kernel: &ConditionalKernel,
    v: &[f64],
    inner_tol: f64,
) -> Result<Candidate> {
    let qz_y = p.induced_qz_y(qx, kernel.as_flat(), v)?;
    let (terms, inner) =
        ObjectiveTerms::evaluate(p.source, p.channel, qx, kernel, &qz_y, p.r_i, p.rule, inner_tol)?;
    let v_star = p.v_from_witness(qx, kernel.as_flat(), &qz_y, &inner.witness, v);
    Ok(Candidate {
        value: terms.total(),
        qx: qx.to_vec(),
        kernel: kernel.clone(),
        qz_y,
        inner_witness: inner.witness,
        v: v_star,
        terms,
        residual: inner.residual,
    })
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

fn dirichlet<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    normalize(&mut v);
    v
}

/// Source-simplex grid points (interior) plus random draws, and a `V` for each.
fn start_points(p: &Problem<'_>, opts: &ExponentOptions) -> Result<Vec<StartPoint>> {
    let s = p.g_support.len();
    let mut out: Vec<StartPoint> = opts.warm_starts.clone();
    if opts.starts == 0 {
        return Ok(out);
    }
    let budget = opts.starts.div_ceil(2).max(1);
    let mut m = 1;
    while enumerate_types(m + 1, s)?.len() <= budget {
        m += 1;
    }
    let channel_v = p.channel_v();
    for t in enumerate_types(m, s)? {
        let reduced: Vec<f64> =
            t.counts().iter().map(|&c| (c as f64 + 0.25) / (m as f64 + 0.25 * s as f64)).collect();
        out.push(StartPoint { qx: p.expand_qx(&reduced), v: channel_v.clone() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while out.len() < opts.starts + opts.warm_starts.len() {
        let qx = p.expand_qx(&dirichlet(&mut rng, s));
        let mut v = channel_v.clone();
        for xy in 0..p.kx * p.ky {
            let sup = &p.w_support[xy / p.ky];
            let r = dirichlet(&mut rng, sup.len());
            for (i, &z) in sup.iter().enumerate() {
                let slot = &mut v[xy * p.kz + z];
                *slot = 0.5 * *slot + 0.5 * r[i];
            }
        }
        out.push(StartPoint { qx, v });
    }
    Ok(out)
}

fn kernel_for(
    mapping: &ContinuousMapping,
    fixed: Option<&ConditionalKernel>,
    qx: &[f64],
    p: &Problem<'_>,
) -> Option<ConditionalKernel> {
    match fixed {
        Some(k) => Some(k.clone()),
        None => mapping.kernel(qx, p.source, p.channel).ok(),
    }
}

/// Local search from one start; returns the better of the canonicalized start and end.
fn run_start(
    p: &Problem<'_>,
    mapping: &ContinuousMapping,
    fixed: Option<&ConditionalKernel>,
    start: &StartPoint,
    opts: &ExponentOptions,
) -> Option<Candidate> {
    let blocks = {
        let mut lens = vec![p.g_support.len()];
        lens.extend(p.v_lens());
        Blocks::new(lens)
    };
    let split = p.g_support.len();
    let mut x = p.reduce_qx(&start.qx);
    x.extend(p.reduce_v(&start.v));
    let cfg = opts.local();

    let mut best: Option<Candidate> = None;
    let mut consider = |c: Candidate| {
        if c.value.is_finite() && best.as_ref().is_none_or(|b| c.value < b.value) {
            best = Some(c);
        }
    };
    if let Some(k) = kernel_for(mapping, fixed, &start.qx, p) {
        if let Ok(c) = canonicalize(p, &start.qx, &k, &start.v, opts.inner_tol) {
            consider(c);
        }
    }
    // Block moves on V leave Q_X unchanged; reuse the last mapping kernel.
    let last: RefCell<Option<(Vec<f64>, Option<ConditionalKernel>)>> = RefCell::new(None);
    for tau in TAU_SCHEDULE {
        let f = |x: &[f64]| -> f64 {
            let qx = p.expand_qx(&x[..split]);
            let v = p.expand_v(&x[split..]);
            let mut cache = last.borrow_mut();
            if cache.as_ref().is_none_or(|(q, _)| *q != qx) {
                *cache = Some((qx.clone(), kernel_for(mapping, fixed, &qx, p)));
            }
            match cache.as_ref().and_then(|(_, k)| k.as_ref()) {
                Some(k) => p.value(&qx, k.as_flat(), &v, tau),
                None => f64::INFINITY,
            }
        };
        let r = minimize(&f, &x, &blocks, &cfg);
        if r.value.is_finite() {
            x = r.x;
        }
    }
    let qx = p.expand_qx(&x[..split]);
    if let Some(k) = kernel_for(mapping, fixed, &qx, p) {
        if let Ok(c) = canonicalize(p, &qx, &k, &p.expand_v(&x[split..]), opts.inner_tol) {
            // Points within the floor of the boundary: try the boundary itself.
            let snapped: Vec<f64> = {
                let mut q: Vec<f64> = c.qx.iter().map(|&v| if v < 1e-7 { 0.0 } else { v }).collect();
                normalize(&mut q);
                q
            };
            if snapped != c.qx {
                if let Some(ks) = kernel_for(mapping, fixed, &snapped, p) {
                    if let Ok(cs) = canonicalize(p, &snapped, &ks, &c.v, opts.inner_tol) {
                        consider(cs);
                    }
                }
            }
            consider(c);
        }
    }
    best
}

pub(crate) fn solve(
    source: &Distribution,
    channel: &ConditionalKernel,
    mapping: &ContinuousMapping,
    r_i: f64,
    rule: RateRule,
    opts: &ExponentOptions,
) -> Result<ExponentResult> {
    opts.validate()?;
    let ky = mapping.k_y(source.len());
    let p = Problem::new(source, channel, ky, r_i, rule)?;
    let fixed = match mapping {
        ContinuousMapping::Identity | ContinuousMapping::Fixed(_) => {
            Some(mapping.kernel(source.probs(), source, channel)?)
        }
        _ => None,
    };
    if let Some(k) = &fixed {
        if k.k_out() != ky {
            return Err(Error::DimensionMismatch("mapping output alphabet".into()));
        }
    }
    let starts = start_points(&p, opts)?;
    for s in &starts {
        if s.qx.len() != p.kx || s.v.len() != p.kx * p.ky * p.kz {
            return Err(Error::DimensionMismatch("warm start shape".into()));
        }
    }
    let results: Vec<Option<Candidate>> = starts
        .par_iter()
        .map(|s| run_start(&p, mapping, fixed.as_ref(), s, opts))
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    let (best_start, best) = results
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|c| (i, c)))
        .min_by(|(ia, a), (ib, b)| a.value.total_cmp(&b.value).then(ia.cmp(ib)))
        .ok_or_else(|| Error::Infeasible("every start of the exponent search failed".into()))?;
    Ok(ExponentResult {
        value: best.value,
        rule,
        r_i,
        qx: best.qx,
        kernel: best.kernel,
        qz_y: best.qz_y,
        inner_witness: best.inner_witness,
        v: best.v,
        terms: best.terms,
        restarts: starts.len(),
        failed_starts: failed,
        best_start,
        inner_residual: best.residual,
        upper_bound: true,
    })
}

/// `E(R_I)` for a fixed test-channel mapping: the minimum over `Q_X`, `Q_{Z|Y}` of
/// `D(Q_X||G) + min D(Q~_{XZ|Y}||Q_{X|Y} x W|Q_Y)` plus the ensemble rate term.
pub fn exponent_fixed_mapping(
    source: &Distribution,
    channel: &ConditionalKernel,
    mapping: &ContinuousMapping,
    r_i: f64,
    opts: &ExponentOptions,
) -> Result<ExponentResult> {
    solve(source, channel, mapping, r_i, RateRule::Ensemble, opts)
}

/// The MMI-baseline exponent: the same objective with rate term `[I(Y;Z) - R_I]_+`.
pub fn exponent_dd(
    source: &Distribution,
    channel: &ConditionalKernel,
    mapping: &ContinuousMapping,
    r_i: f64,
    opts: &ExponentOptions,
) -> Result<ExponentResult> {
    solve(source, channel, mapping, r_i, RateRule::Dd, opts)
}

/// `E(R_I)` and `E_DD(R_I)`, the latter also started from the former's witness so that
/// the computed values respect `E_DD <= E`.
pub fn exponent_pair(
    source: &Distribution,
    channel: &ConditionalKernel,
    mapping: &ContinuousMapping,
    r_i: f64,
    opts: &ExponentOptions,
) -> Result<(ExponentResult, ExponentResult)> {
    let e = exponent_fixed_mapping(source, channel, mapping, r_i, opts)?;
    let mut o = opts.clone();
    o.warm_starts.push(e.start_point());
    let dd = exponent_dd(source, channel, mapping, r_i, &o)?;
    Ok((e, dd))
}

/// Exponents over an ascending rate grid, each warm-started from its predecessor.
pub fn exponent_curve(
    source: &Distribution,
    channel: &ConditionalKernel,
    mapping: &ContinuousMapping,
    rates: &[f64],
    rule: RateRule,
    opts: &ExponentOptions,
) -> Result<Vec<ExponentResult>> {
    if rates.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("rates must be ascending".into()));
    }
    let mut out: Vec<ExponentResult> = Vec::with_capacity(rates.len());
    for &r in rates {
        let mut o = opts.clone();
        if let Some(prev) = out.last() {
            o.warm_starts.push(prev.start_point());
        }
        out.push(solve(source, channel, mapping, r, rule, &o)?);
    }
    Ok(out)
}
