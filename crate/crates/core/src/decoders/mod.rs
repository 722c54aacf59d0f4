//! Decision rules for identifying a noisy query among enrolled reproduction words.
//!
//! Candidate indices are zero-based positions in the enrolled list. Every decoder
//! treats error-word rows as the worst possible candidate.

mod exact;
mod metrics;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::{Codebook, Encoded, EncodingKind};
use crate::error::{Error, Result};
use crate::types::{ConditionalKernel, Distribution};

pub use exact::{decode_exact_ml, exact_likelihoods, ml_order, tie_rank, ExactLikelihood};
pub use metrics::{
    alpha_of, beta_of, count_matches, decode_approx_ml, decode_mmi, decode_universal, gamma_of,
    universal_metric, GammaMemo, MatchScope,
};

/// Relative tolerance under which two metric values are treated as a tie.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Universal,
    Mmi,
    ApproxMl,
    ExactMl,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 4] =
        [DecoderKind::Universal, DecoderKind::Mmi, DecoderKind::ApproxMl, DecoderKind::ExactMl];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Universal => "universal",
            DecoderKind::Mmi => "mmi",
            DecoderKind::ApproxMl => "approx_ml",
            DecoderKind::ExactMl => "exact_ml",
        }
    }
}

impl std::fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "universal" => Ok(DecoderKind::Universal),
            "mmi" => Ok(DecoderKind::Mmi),
            "approx_ml" | "approxml" => Ok(DecoderKind::ApproxMl),
            "exact_ml" | "exactml" | "ml" => Ok(DecoderKind::ExactMl),
            other => Err(Error::InvalidParameter(format!("unknown decoder '{other}'"))),
        }
    }
}

/// Outcome of one decoding: the chosen index and every candidate's metric.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decision {
    pub index: usize,
    /// Per-candidate metric in the decoder's own orientation (the chosen index optimizes it).
    pub metrics: Vec<f64>,
    /// More than one candidate attained the optimum.
    pub tie: bool,
}

/// Shared inputs of the type-based decoders.
#[derive(Clone, Copy, Debug)]
pub struct DecoderContext<'a> {
    pub codebook: &'a Codebook,
    pub source: &'a Distribution,
    pub channel: &'a ConditionalKernel,
}

pub(crate) fn is_error_row(row: &Encoded) -> bool {
    row.kind == EncodingKind::ErrorWord
}

/// Smallest index whose metric is within the tie tolerance of the minimum.
pub(crate) fn argmin_first(metrics: Vec<f64>) -> Result<Decision> {
    let best = metrics.iter().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() && metrics.iter().all(|m| *m == f64::INFINITY) {
        return Err(Error::DecodeFailure("every candidate is infeasible".into()));
    }
    let slack = TIE_TOL * best.abs().max(1.0);
    let within: Vec<usize> = (0..metrics.len()).filter(|&i| metrics[i] <= best + slack).collect();
    Ok(Decision { index: within[0], tie: within.len() > 1, metrics })
}

/// Smallest index whose metric is within the tie tolerance of the maximum.
pub(crate) fn argmax_first(metrics: Vec<f64>) -> Result<Decision> {
    let negated: Vec<f64> = metrics.iter().map(|m| -m).collect();
    let d = argmin_first(negated)?;
    Ok(Decision { index: d.index, tie: d.tie, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoder_names_round_trip() {
        for d in DecoderKind::ALL {
            assert_eq!(d.name().parse::<DecoderKind>().unwrap(), d);
        }
        assert!("nope".parse::<DecoderKind>().is_err());
    }

    #[test]
    fn tie_breaks_to_smallest_index() {
        let d = argmin_first(vec![2.0, 1.0, 1.0 + 1e-15, 3.0]).unwrap();
        assert_eq!(d.index, 1);
        assert!(d.tie);
        let d = argmax_first(vec![0.0, 0.0]).unwrap();
        assert_eq!(d.index, 0);
        assert!(argmin_first(vec![f64::INFINITY; 2]).is_err());
    }
}
