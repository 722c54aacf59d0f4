use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{kl, mutual_information_flat, ConditionalKernel, Distribution};

fn default_vicinity() -> f64 {
    0.1
}

/// Compression constraint, expressed as a ceiling on `I_Q(X;Y)` per source type.
///
/// The compressed description of an encoder output costs about `n I_Q(X;Y)` nats,
/// so each kind reduces to a per-type rate predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressionConstraint {
    /// `E L(Y) <= n R_C`: `I <= R_C` for every `Q_X` with `D(Q_X||G) <= vicinity`.
    ExpectedLength {
        rate: f64,
        #[serde(default = "default_vicinity")]
        vicinity: f64,
    },
    /// `Pr{L(Y) >= n R_C} <= exp(-n E_C)`: `I <= R_C` whenever `D(Q_X||G) <= E_C`.
    ExcessProbability { rate: f64, excess_exponent: f64 },
    /// `E exp(s L(Y)) <= exp(n Lambda)`: `s I - D(Q_X||G) <= Lambda` for every `Q_X`.
    ExponentialMoment { s: f64, lambda: f64 },
}

impl CompressionConstraint {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidParameter(format!("compression constraint: {what} = {v}")))
        };
        match *self {
            Self::ExpectedLength { rate, vicinity } => {
                if !(rate >= 0.0) || !rate.is_finite() {
                    return bad("rate", rate);
                }
                if !(vicinity > 0.0) {
                    return bad("vicinity", vicinity);
                }
            }
            Self::ExcessProbability { rate, excess_exponent } => {
                if !(rate >= 0.0) || !rate.is_finite() {
                    return bad("rate", rate);
                }
                if !(excess_exponent > 0.0) {
                    return bad("excess_exponent", excess_exponent);
                }
            }
            Self::ExponentialMoment { s, lambda } => {
                if !(s > 0.0) || !s.is_finite() {
                    return bad("s", s);
                }
                if !(lambda > 0.0) {
                    return bad("lambda", lambda);
                }
            }
        }
        Ok(())
    }

    /// Largest admissible `I_Q(X;Y)` for a source type at divergence `d` from `G`;
    /// `None` when the constraint does not restrict this type.
    pub fn rate_ceiling(&self, d: f64) -> Option<f64> {
        match *self {
            Self::ExpectedLength { rate, vicinity } => (d <= vicinity).then_some(rate),
            Self::ExcessProbability { rate, excess_exponent } => {
                (d <= excess_exponent).then_some(rate)
            }
            Self::ExponentialMoment { s, lambda } => Some((lambda + d) / s),
        }
    }

    /// A constraint that admits every kernel.
    pub fn unconstrained() -> Self {
        Self::ExcessProbability { rate: f64::MAX, excess_exponent: f64::MAX }
    }
}

/// Outcome of [`check_compression_constraint`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub passed: bool,
    pub mutual_information: f64,
    pub divergence_from_source: f64,
    /// `None` when the type lies outside the region the constraint governs.
    pub ceiling: Option<f64>,
    pub predicate: String,
}

/// Slack added to ceilings so that kernels sitting exactly on the boundary pass.
pub(crate) const CEILING_SLACK: f64 = 1e-12;

pub(crate) fn check_with_mi(
    qx: &[f64],
    mi: f64,
    source: &Distribution,
    constraint: &CompressionConstraint,
) -> ConstraintReport {
    let d = kl(qx, source.probs());
    let ceiling = constraint.rate_ceiling(d);
    let passed = ceiling.is_none_or(|c| mi <= c + CEILING_SLACK);
    let predicate = match ceiling {
        None => format!("D(Q_X||G) = {d:.6} outside the constrained region"),
        Some(c) => format!("I_Q(X;Y) = {mi:.6} <= {c:.6}"),
    };
    ConstraintReport {
        passed,
        mutual_information: mi,
        divergence_from_source: d,
        ceiling,
        predicate,
    }
}

/// Evaluates the constraint for source type `qx` quantized through `qyx`.
pub fn check_compression_constraint(
    qx: &[f64],
    qyx: &ConditionalKernel,
    source: &Distribution,
    constraint: &CompressionConstraint,
) -> Result<ConstraintReport> {
    if qx.len() != qyx.k_in() || qx.len() != source.len() {
        return Err(Error::DimensionMismatch("constraint check shapes".into()));
    }
    let joint: Vec<f64> = qx
        .iter()
        .enumerate()
        .flat_map(|(a, pa)| qyx.row(a).iter().map(move |k| pa * k))
        .collect();
    let mi = mutual_information_flat(&joint, qyx.k_in(), qyx.k_out());
    Ok(check_with_mi(qx, mi, source, constraint))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_passes_every_kind() {
        let g = Distribution::new(vec![0.7, 0.3]).unwrap();
        let k = ConditionalKernel::uniform(2, 2).unwrap();
        for c in [
            CompressionConstraint::ExpectedLength { rate: 0.01, vicinity: 0.1 },
            CompressionConstraint::ExcessProbability { rate: 0.01, excess_exponent: 0.1 },
            CompressionConstraint::ExponentialMoment { s: 1.0, lambda: 0.01 },
        ] {
            let r = check_compression_constraint(&[0.2, 0.8], &k, &g, &c).unwrap();
            assert!(r.passed, "{c:?}");
            assert!(r.mutual_information.abs() < 1e-15);
        }
    }

    #[test]
    fn excess_probability_outside_vicinity() {
        let g = Distribution::new(vec![0.5, 0.5]).unwrap();
        let id = ConditionalKernel::identity(2, 2).unwrap();
        let c = CompressionConstraint::ExcessProbability { rate: 0.01, excess_exponent: 0.1 };
        // D((0.95,0.05)||uniform) = 0.4946 > E_C
        let r = check_compression_constraint(&[0.95, 0.05], &id, &g, &c).unwrap();
        assert!(r.passed);
        assert!(r.ceiling.is_none());
        let r = check_compression_constraint(&[0.5, 0.5], &id, &g, &c).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn exponential_moment_ceiling() {
        // s I - D <= Lambda, so with s = 1, Lambda = 0.5, D = 0.2 the ceiling is 0.7.
        let c = CompressionConstraint::ExponentialMoment { s: 1.0, lambda: 0.5 };
        let ceiling = c.rate_ceiling(0.2).unwrap();
        assert!((ceiling - 0.7).abs() < 1e-15);
        assert!(0.4 <= ceiling);
        assert!(0.8 > ceiling);
        let c = CompressionConstraint::ExponentialMoment { s: 2.0, lambda: 0.5 };
        assert!((c.rate_ceiling(0.2).unwrap() - 0.35).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(CompressionConstraint::ExponentialMoment { s: 0.0, lambda: 1.0 }
            .validate()
            .is_err());
        assert!(CompressionConstraint::ExpectedLength { rate: -1.0, vicinity: 0.1 }
            .validate()
            .is_err());
        assert!(CompressionConstraint::unconstrained().validate().is_ok());
    }
}
