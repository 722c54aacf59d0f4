use serde::Serialize;

use crate::decoders::{exact_likelihoods, ml_order, DecoderContext, ExactLikelihood};
use crate::ensemble::{Encoded, EncoderTable};
use crate::error::{Error, Result};
use crate::types::Symbol;

/// `K_n = sum_i a_i / (a_1 + .. + a_i)` for weights given in candidate order.
pub fn kn_from_weights(ln_a: &[f64]) -> f64 {
    let mut ln_cum = f64::NEG_INFINITY;
    let mut k = 0.0;
    for &la in ln_a {
        ln_cum = if ln_cum == f64::NEG_INFINITY {
            la
        } else {
            let m = ln_cum.max(la);
            m + ((ln_cum - m).exp() + (la - m).exp()).ln()
        };
        k += (la - ln_cum).exp();
    }
    k
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KnReport {
    pub k_n: f64,
    /// `1 + n ln(1/G_min)`.
    pub bound: f64,
    pub holds: bool,
    /// Distinct candidates with `P(y) > 0`, in decreasing `P(z|y)` order.
    pub candidates: usize,
    /// Rows dropped as duplicates of an earlier row.
    pub duplicates: usize,
    /// Error-word rows and rows with `P(y) = 0`.
    pub excluded: usize,
}

/// `K_n(z)` over the distinct enrolled words, ordered by exact `P(z|y)` with the keyed
/// tie-break, and checked against `1 + n ln(1/G_min)`.
pub fn kn_diagnostic(
    rows: &[Encoded],
    z: &[Symbol],
    ctx: &DecoderContext<'_>,
    table: &EncoderTable,
    tie_seed: u64,
) -> Result<KnReport> {
    let mut distinct: Vec<Encoded> = Vec::with_capacity(rows.len());
    for r in rows {
        if !distinct.iter().any(|d| d.word == r.word && d.kind == r.kind) {
            distinct.push(r.clone());
        }
    }
    let duplicates = rows.len() - distinct.len();
    let lik: Vec<ExactLikelihood> = exact_likelihoods(z, &distinct, ctx, table)?;
    let order = ml_order(&lik, z, tie_seed);
    let ln_a: Vec<f64> = order.iter().map(|&i| lik[i].ln_p_y).collect();
    let g_min = ctx.source.min_positive();
    if !(g_min > 0.0) {
        return Err(Error::InvalidDistribution("source has no positive mass".into()));
    }
    let k_n = kn_from_weights(&ln_a);
    let bound = 1.0 + table.n() as f64 * (1.0 / g_min).ln();
    Ok(KnReport {
        k_n,
        bound,
        holds: k_n <= bound + 1e-9,
        candidates: order.len(),
        duplicates,
        excluded: distinct.len() - order.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kn_examples() {
        assert_eq!(kn_from_weights(&[0.3f64.ln()]), 1.0);
        let p = 0.01f64.ln();
        assert!((kn_from_weights(&[p, p]) - 1.5).abs() < 1e-15);
        assert_eq!(kn_from_weights(&[]), 0.0);
        // Harmonic sum for equal weights.
        let k = kn_from_weights(&[p; 4]);
        assert!((k - (1.0 + 0.5 + 1.0 / 3.0 + 0.25)).abs() < 1e-12);
    }
}
