use std::cell::RefCell;

use rayon::prelude::*;
use serde::Serialize;

use super::fixed::{canonicalize, Candidate, ExponentOptions, ExponentResult};
use super::objective::{Problem, RateRule};
use super::optimize::{minimize, pattern_search, pattern_search_max, project_simplex, Blocks, LocalConfig};
use crate::ensemble::{check_compression_constraint, kernel_grid, CompressionConstraint};
use crate::error::{Error, Result};
use crate::types::{enumerate_types, ConditionalKernel, Distribution};

const KERNEL_GRID_CAP: usize = 1_000_000;

/// One row of the achieving mapping: the maximizing kernel found at a source point.
#[derive(Clone, Debug, Serialize)]
pub struct MappingRow {
    pub qx: Vec<f64>,
    pub kernel: ConditionalKernel,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinMaxMinResult {
    pub exponent: ExponentResult,
    /// Every evaluated source point with its maximizing kernel, in evaluation order.
    pub mapping: Vec<MappingRow>,
    /// The max over kernels is a grid search with local refinement: a lower bound
    /// on the true max at each source point.
    pub max_is_heuristic: bool,
}

/// `min over Q_{Z|Y}` (through `V`) at fixed `(Q_X, K)`; a convex problem.
fn min_over_v(p: &Problem<'_>, qx: &[f64], kernel: &ConditionalKernel, opts: &ExponentOptions) -> Result<Candidate> {
    let blocks = Blocks::new(p.v_lens());
    let mut x = p.reduce_v(&p.channel_v());
    let cfg = LocalConfig { floor: opts.floor, max_iter: opts.max_iter, ..LocalConfig::default() };
    for tau in [1e-3, 0.0] {
        let f = |v: &[f64]| p.value(qx, kernel.as_flat(), &p.expand_v(v), tau);
        x = minimize(&f, &x, &blocks, &cfg).x;
    }
    canonicalize(p, qx, kernel, &p.expand_v(&x), opts.inner_tol)
}

fn feasible(qx: &[f64], k: &ConditionalKernel, source: &Distribution, c: &CompressionConstraint) -> bool {
    check_compression_constraint(qx, k, source, c).is_ok_and(|r| r.passed)
}

/// `max over K in Q(Q_X)` of `min over V`, returning the maximizing kernel.
fn max_min(
    p: &Problem<'_>,
    qx: &[f64],
    constraint: &CompressionConstraint,
    grid: &[Vec<f64>],
    opts: &ExponentOptions,
) -> Result<(f64, Candidate)> {
    let (kx, ky) = (p.kx, p.ky);
    let kernels: Vec<ConditionalKernel> = grid
        .iter()
        .filter_map(|k| ConditionalKernel::from_flat(kx, ky, k.clone()).ok())
        .filter(|k| feasible(qx, k, p.source, constraint))
        .collect();
    if kernels.is_empty() {
        return Err(Error::Infeasible(format!(
            "no grid kernel satisfies the compression constraint at Q_X = {qx:?}"
        )));
    }
    let evaluated: Vec<Result<Candidate>> =
        kernels.par_iter().map(|k| min_over_v(p, qx, k, opts)).collect();
    let mut best: Option<Candidate> = None;
    for c in evaluated {
        let c = c?;
        if best.as_ref().is_none_or(|b| c.value > b.value) {
            best = Some(c);
        }
    }
    let best = best.expect("non-empty");
    // Local refinement of the kernel, staying inside the feasible set.
    let phi = |k: &[f64]| -> f64 {
        let Ok(kernel) = ConditionalKernel::normalized(kx, ky, k.to_vec()) else { return f64::NEG_INFINITY };
        if !feasible(qx, &kernel, p.source, constraint) {
            return f64::NEG_INFINITY;
        }
        min_over_v(p, qx, &kernel, opts).map(|c| c.value).unwrap_or(f64::NEG_INFINITY)
    };
    let cfg = LocalConfig {
        floor: 0.0,
        pattern_step: opts.kernel_grid_step / 2.0,
        min_step: (opts.kernel_grid_step / 64.0).max(1e-4),
        ..LocalConfig::default()
    };
    let (k, v) = pattern_search_max(&phi, best.kernel.as_flat().to_vec(), best.value, &Blocks::new(vec![ky; kx]), &cfg);
    let refined = if v > best.value {
        min_over_v(p, qx, &ConditionalKernel::normalized(kx, ky, k)?, opts)?
    } else {
        best
    };
    Ok((refined.value, refined))
}

/// The min-max-min exponent: outer min over `Q_X` of the max over admissible kernels of
/// the min over `Q_{Z|Y}` of the fixed-mapping objective.
pub fn exponent_minmaxmin(
    source: &Distribution,
    channel: &ConditionalKernel,
    constraint: &CompressionConstraint,
    k_y: usize,
    r_i: f64,
    opts: &ExponentOptions,
) -> Result<MinMaxMinResult> {
    opts.validate()?;
    constraint.validate()?;
    let p = Problem::new(source, channel, k_y, r_i, RateRule::Ensemble)?;
    let grid = kernel_grid(p.kx, k_y, opts.kernel_grid_step, KERNEL_GRID_CAP)?;
    let s = p.g_support.len();
    let m = (1.0 / opts.qx_grid_step).round().max(1.0) as usize;

    struct Outer {
        mapping: Vec<MappingRow>,
        best: Option<Candidate>,
        failure: Option<Error>,
    }
    let state = RefCell::new(Outer { mapping: Vec::new(), best: None, failure: None });
    let phi = |reduced: &[f64]| -> f64 {
        let qx = p.expand_qx(reduced);
        let mut st = state.borrow_mut();
        match max_min(&p, &qx, constraint, &grid, opts) {
            Ok((v, c)) => {
                st.mapping.push(MappingRow { qx, kernel: c.kernel.clone(), value: v });
                if st.best.as_ref().is_none_or(|b| v < b.value) {
                    st.best = Some(c);
                }
                v
            }
            Err(e) => {
                st.failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };

    let mut start: Option<(f64, Vec<f64>)> = None;
    for t in enumerate_types(m, s)? {
        let mut reduced: Vec<f64> = t.counts().iter().map(|&c| c as f64 / m as f64).collect();
        project_simplex(&mut reduced, opts.floor);
        let v = phi(&reduced);
        if let Some(e) = state.borrow_mut().failure.take() {
            return Err(e);
        }
        if start.as_ref().is_none_or(|(b, _)| v < *b) {
            start = Some((v, reduced));
        }
    }
    let (v0, x0) = start.expect("grid is non-empty");
    let cfg = LocalConfig {
        floor: opts.floor,
        pattern_step: opts.qx_grid_step / 2.0,
        min_step: 1e-5,
        ..LocalConfig::default()
    };
    let _ = pattern_search(&phi, x0, v0, &Blocks::new(vec![s]), &cfg);
    let Outer { mapping, best, failure } = state.into_inner();
    if let Some(e) = failure {
        return Err(e);
    }
    let best = best.expect("evaluated at least once");
    Ok(MinMaxMinResult {
        exponent: ExponentResult {
            value: best.value,
            rule: RateRule::Ensemble,
            r_i,
            qx: best.qx,
            kernel: best.kernel,
            qz_y: best.qz_y,
            inner_witness: best.inner_witness,
            v: best.v,
            terms: best.terms,
            restarts: 1,
            failed_starts: 0,
            best_start: 0,
            inner_residual: best.residual,
            upper_bound: true,
        },
        mapping,
        max_is_heuristic: true,
    })
}
