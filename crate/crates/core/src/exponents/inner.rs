use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{ConditionalKernel, JointDistribution};

/// Default marginal tolerance of the inner solver.
pub const DEFAULT_INNER_TOL: f64 = 1e-10;
/// Default iteration cap of the inner solver.
pub const DEFAULT_INNER_MAX_ITER: usize = 100_000;

const MASS_EPS: f64 = 1e-13;

/// Minimizer of the inner divergence problem.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InnerSolution {
    /// `min D(Q~_{XZ|Y} || Q_{X|Y} x W | Q_Y)`; `+inf` when the feasible set is empty.
    pub value: f64,
    /// `Q~_{X|YZ}` flattened as `[y][z][x]`; rows with `Q_{YZ}(y,z) = 0` are set to `Q_{X|Y}(.|y)`.
    pub witness: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Coupling, divergence, iterations and final marginal residual.
type Projection = (Vec<f64>, f64, usize, f64);

/// Per-`y` coupling problem: the I-projection of `r(x,z) = a(x) W(z|x)` onto couplings
/// with marginals `a` and `b`. Returns the coupling and the divergence, or `None` when
/// no coupling supported on `supp r` exists.
pub(crate) fn project_coupling(
    a: &[f64],
    b: &[f64],
    w: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Option<Projection>> {
    let (kx, kz) = (a.len(), b.len());
    let mut r: Vec<f64> = (0..kx * kz)
        .map(|i| {
            let (x, z) = (i / kz, i % kz);
            if a[x] > MASS_EPS && b[z] > MASS_EPS {
                a[x] * w[i]
            } else {
                0.0
            }
        })
        .collect();
    let rows: Vec<usize> = (0..kx).filter(|&x| a[x] > MASS_EPS).collect();

    // Hall's condition over row subsets, then zero the cells that every feasible coupling
    // leaves empty (a tight set S must ship all of N(S)'s demand) so scaling converges fast.
    loop {
        let mut changed = false;
        for mask in 1u32..(1u32 << rows.len()) {
            let members: Vec<usize> =
                (0..rows.len()).filter(|i| mask >> i & 1 == 1).map(|i| rows[i]).collect();
            let supply: f64 = members.iter().map(|&x| a[x]).sum();
            let reach: Vec<bool> =
                (0..kz).map(|z| members.iter().any(|&x| r[x * kz + z] > 0.0)).collect();
            let demand: f64 = (0..kz).filter(|&z| reach[z]).map(|z| b[z]).sum();
            if supply > demand + 1e-12 {
                return Ok(None);
            }
            if supply >= demand - 1e-12 {
                for &x in &rows {
                    if members.contains(&x) {
                        continue;
                    }
                    for z in 0..kz {
                        if reach[z] && r[x * kz + z] > 0.0 {
                            r[x * kz + z] = 0.0;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let orig: Vec<f64> = (0..kx * kz).map(|i| a[i / kz] * w[i]).collect();
    let mut q = r;
    let mut residual = f64::INFINITY;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        for z in 0..kz {
            let s: f64 = (0..kx).map(|x| q[x * kz + z]).sum();
            if s > 0.0 {
                let f = b[z] / s;
                (0..kx).for_each(|x| q[x * kz + z] *= f);
            }
        }
        residual = 0.0;
        for x in 0..kx {
            let s: f64 = q[x * kz..(x + 1) * kz].iter().sum();
            residual = residual.max((s - a[x]).abs());
            if s > 0.0 {
                let f = a[x] / s;
                q[x * kz..(x + 1) * kz].iter_mut().for_each(|v| *v *= f);
            }
        }
        if residual <= tol {
            break;
        }
    }
    if residual > tol {
        return Err(Error::NonConvergence { iterations: it, residual });
    }
    let value: f64 = q
        .iter()
        .zip(&orig)
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, o)| v * (v / o).ln())
        .sum();
    Ok(Some((q, value.max(0.0), it, residual)))
}

pub(crate) fn inner_min_flat(
    q_y: &[f64],
    qx_y: &[f64],
    qz_y: &[f64],
    w: &ConditionalKernel,
    tol: f64,
    max_iter: usize,
) -> Result<InnerSolution> {
    let (ky, kx, kz) = (q_y.len(), w.k_in(), w.k_out());
    let mut witness = vec![0.0; ky * kz * kx];
    let mut value = 0.0;
    let (mut iterations, mut residual) = (0usize, 0.0f64);
    for y in 0..ky {
        let a = &qx_y[y * kx..(y + 1) * kx];
        let b = &qz_y[y * kz..(y + 1) * kz];
        let base = y * kz * kx;
        if q_y[y] <= 0.0 {
            for z in 0..kz {
                witness[base + z * kx..base + (z + 1) * kx].copy_from_slice(a);
            }
            continue;
        }
        match project_coupling(a, b, w.as_flat(), tol, max_iter)? {
            None => {
                return Ok(InnerSolution { value: f64::INFINITY, witness, iterations, residual })
            }
            Some((coupling, v, it, res)) => {
                value += q_y[y] * v;
                iterations = iterations.max(it);
                residual = residual.max(res);
                for z in 0..kz {
                    let slot = &mut witness[base + z * kx..base + (z + 1) * kx];
                    if b[z] > MASS_EPS {
                        for x in 0..kx {
                            slot[x] = coupling[x * kz + z] / b[z];
                        }
                    } else {
                        slot.copy_from_slice(a);
                    }
                }
            }
        }
    }
    Ok(InnerSolution { value, witness, iterations, residual })
}

/// `min over Q~_{X|YZ} in U(Q_{X|Y})` of `D(Q~_{XZ|Y} || Q_{X|Y} x W | Q_Y)`.
///
/// For each `y` this is the I-projection of `Q_{X|Y}(x|y) W(z|x)` onto the couplings of
/// `Q_{X|Y}(.|y)` and `Q_{Z|Y}(.|y)`, solved by iterative proportional fitting.
pub fn inner_divergence_min(
    q_xy: &JointDistribution,
    q_zy: &ConditionalKernel,
    w: &ConditionalKernel,
    tol: f64,
) -> Result<InnerSolution> {
    let (kx, ky) = (q_xy.k1(), q_xy.k2());
    if w.k_in() != kx || q_zy.k_in() != ky || q_zy.k_out() != w.k_out() {
        return Err(Error::DimensionMismatch("inner_divergence_min shapes".into()));
    }
    let q_y = q_xy.second_marginal();
    let qx_y = q_xy.first_given_second();
    inner_min_flat(&q_y, &qx_y, q_zy.as_flat(), w, tol, DEFAULT_INNER_MAX_ITER)
}
