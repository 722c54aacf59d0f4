use std::cmp::Ordering;

use serde::Serialize;

use super::{is_error_row, Decision, DecoderContext, TIE_TOL};
use crate::ensemble::{index_to_word, rank, Encoded, EncoderTable};
use crate::error::{Error, Result};
use crate::types::Symbol;

const TIE_KEY: u64 = 0x2545_f491_4f6c_dd1d;

/// Exact likelihood terms of one candidate, in natural log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExactLikelihood {
    /// `ln P(y) = ln sum_{x in f^{-1}(y)} G^n(x)`.
    pub ln_p_y: f64,
    /// `ln P(z, y) = ln sum_{x in f^{-1}(y)} G^n(x) W^n(z|x)`.
    pub ln_p_zy: f64,
    /// `ln P(z|y)`; `-inf` for excluded candidates.
    pub ln_p_z_given_y: f64,
    /// Error-word row or `P(y) = 0`.
    pub excluded: bool,
}

fn log_sum_exp(acc: &mut (f64, f64), v: f64) {
    // (max, scaled sum)
    if v == f64::NEG_INFINITY {
        return;
    }
    if v > acc.0 {
        acc.1 = acc.1 * (acc.0 - v).exp() + 1.0;
        acc.0 = v;
    } else {
        acc.1 += (v - acc.0).exp();
    }
}

fn finish(acc: (f64, f64)) -> f64 {
    if acc.1 == 0.0 {
        f64::NEG_INFINITY
    } else {
        acc.0 + acc.1.ln()
    }
}

/// Exact `P(z|y_m)` for every row using the tabulated inverse image of the encoder.
pub fn exact_likelihoods(
    z: &[Symbol],
    rows: &[Encoded],
    ctx: &DecoderContext<'_>,
    table: &EncoderTable,
) -> Result<Vec<ExactLikelihood>> {
    let (n, kx) = (table.n(), table.k_x());
    if z.len() != n {
        return Err(Error::DimensionMismatch("query length".into()));
    }
    if ctx.source.len() != kx || ctx.channel.k_in() != kx {
        return Err(Error::DimensionMismatch("source or channel alphabet".into()));
    }
    let ln_g: Vec<f64> = ctx.source.probs().iter().map(|p| p.ln()).collect();
    let ln_w: Vec<f64> = ctx.channel.as_flat().iter().map(|p| p.ln()).collect();
    let kz = ctx.channel.k_out();
    let excluded = ExactLikelihood {
        ln_p_y: f64::NEG_INFINITY,
        ln_p_zy: f64::NEG_INFINITY,
        ln_p_z_given_y: f64::NEG_INFINITY,
        excluded: true,
    };
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        if is_error_row(row) {
            out.push(excluded);
            continue;
        }
        let (mut py, mut pzy) = ((f64::NEG_INFINITY, 0.0), (f64::NEG_INFINITY, 0.0));
        for &xi in table.preimage_indices(&row.word) {
            let x = index_to_word(xi, n, kx);
            let lg: f64 = x.iter().map(|&a| ln_g[a as usize]).sum();
            let lw: f64 = x
                .iter()
                .zip(z)
                .map(|(&a, &c)| ln_w[a as usize * kz + c as usize])
                .sum();
            log_sum_exp(&mut py, lg);
            log_sum_exp(&mut pzy, lg + lw);
        }
        let (ln_p_y, ln_p_zy) = (finish(py), finish(pzy));
        if ln_p_y == f64::NEG_INFINITY {
            out.push(excluded);
            continue;
        }
        out.push(ExactLikelihood { ln_p_y, ln_p_zy, ln_p_z_given_y: ln_p_zy - ln_p_y, excluded: false });
    }
    Ok(out)
}

/// Keyed pseudorandom tie-break rank of candidate `m` for query `z`.
pub fn tie_rank(seed: u64, m: usize, z: &[Symbol]) -> u64 {
    rank(z, &(m as u64).to_le_bytes(), seed ^ TIE_KEY)
}

fn same_likelihood(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= TIE_TOL
}

/// Candidates in decreasing likelihood with pseudorandom tie-breaking; excluded rows omitted.
pub fn ml_order(likelihoods: &[ExactLikelihood], z: &[Symbol], seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..likelihoods.len()).filter(|&i| !likelihoods[i].excluded).collect();
    // Group by tolerance: sort by likelihood, then merge near-equal runs and order each run by PRF.
    idx.sort_by(|&a, &b| {
        likelihoods[b]
            .ln_p_z_given_y
            .partial_cmp(&likelihoods[a].ln_p_z_given_y)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut out = Vec::with_capacity(idx.len());
    let mut start = 0;
    while start < idx.len() {
        let head = likelihoods[idx[start]].ln_p_z_given_y;
        let mut end = start + 1;
        while end < idx.len() && same_likelihood(head, likelihoods[idx[end]].ln_p_z_given_y) {
            end += 1;
        }
        let mut run = idx[start..end].to_vec();
        run.sort_by_key(|&m| (tie_rank(seed, m, z), m));
        out.extend(run);
        start = end;
    }
    out
}

/// Exact ML decoder; ties are broken by the keyed tie rank, so the result is
/// deterministic given `seed`.
pub fn decode_exact_ml(
    z: &[Symbol],
    rows: &[Encoded],
    ctx: &DecoderContext<'_>,
    table: &EncoderTable,
    seed: u64,
) -> Result<Decision> {
    let lik = exact_likelihoods(z, rows, ctx, table)?;
    let order = ml_order(&lik, z, seed);
    let Some(&index) = order.first() else {
        return Err(Error::DecodeFailure("no candidate has positive probability".into()));
    };
    let best = lik[index].ln_p_z_given_y;
    let tie = order.get(1).is_some_and(|&m| same_likelihood(best, lik[m].ln_p_z_given_y));
    Ok(Decision { index, metrics: lik.iter().map(|l| l.ln_p_z_given_y).collect(), tie })
}
