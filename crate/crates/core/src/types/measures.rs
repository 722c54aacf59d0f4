//! Information measures in nats, with `0 log 0 = 0`.

use serde::Serialize;

use super::dist::{ConditionalKernel, Distribution, JointDistribution};
use crate::error::{Error, Result};

/// `p ln p` with the `0 ln 0 = 0` convention.
#[inline]
pub(crate) fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `p ln(p/q)`, `+inf` when `p > 0 = q`.
#[inline]
fn xlogxy(p: f64, q: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else if q <= 0.0 {
        f64::INFINITY
    } else {
        p * (p / q).ln()
    }
}

pub(crate) fn entropy_of(p: &[f64]) -> f64 {
    -p.iter().map(|&v| xlogx(v)).sum::<f64>()
}

pub(crate) fn kl(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    p.iter().zip(q).map(|(&a, &b)| xlogxy(a, b)).sum::<f64>().max(0.0)
}

/// Shannon entropy `H(p)`.
pub fn entropy(p: &Distribution) -> f64 {
    entropy_of(p.probs())
}

/// Relative entropy `D(p||q)`; `+inf` on a support violation.
pub fn divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "divergence over alphabets {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(kl(p.probs(), q.probs()))
}

/// The five standard measures of a two-dimensional joint law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JointMeasures {
    pub h_x: f64,
    pub h_y: f64,
    pub h_x_given_y: f64,
    pub h_y_given_x: f64,
    pub mutual_information: f64,
}

pub(crate) fn mutual_information_flat(table: &[f64], k1: usize, k2: usize) -> f64 {
    let mut row = vec![0.0; k1];
    let mut col = vec![0.0; k2];
    for a in 0..k1 {
        for b in 0..k2 {
            let v = table[a * k2 + b];
            row[a] += v;
            col[b] += v;
        }
    }
    let mut i = 0.0;
    for a in 0..k1 {
        for b in 0..k2 {
            let v = table[a * k2 + b];
            if v > 0.0 {
                i += v * (v / (row[a] * col[b])).ln();
            }
        }
    }
    i.max(0.0)
}

/// Entropies and mutual information of `q`, with `X` the row variable.
pub fn joint_measures(q: &JointDistribution) -> JointMeasures {
    let h_xy = entropy_of(q.as_flat());
    let h_x = entropy_of(&q.first_marginal());
    let h_y = entropy_of(&q.second_marginal());
    let mutual_information = mutual_information_flat(q.as_flat(), q.k1(), q.k2());
    JointMeasures {
        h_x,
        h_y,
        h_x_given_y: (h_xy - h_y).max(0.0),
        h_y_given_x: (h_xy - h_x).max(0.0),
        mutual_information,
    }
}

/// `sum_x q(x) D(Q(.|x) || W(.|x))`; rows with `q(x) = 0` contribute nothing.
pub fn weighted_conditional_divergence(
    qz_x: &ConditionalKernel,
    w: &ConditionalKernel,
    qx: &Distribution,
) -> Result<f64> {
    if qz_x.k_in() != w.k_in() || qz_x.k_out() != w.k_out() || qx.len() != w.k_in() {
        return Err(Error::DimensionMismatch(
            "weighted divergence: kernel or weight shapes differ".into(),
        ));
    }
    Ok(weighted_kl_flat(qz_x.as_flat(), w.as_flat(), qx.probs(), w.k_out()))
}

fn weighted_kl_flat(v: &[f64], w: &[f64], weights: &[f64], k_out: usize) -> f64 {
    let mut total = 0.0;
    for (a, &pa) in weights.iter().enumerate() {
        if pa > 0.0 {
            let d = kl(&v[a * k_out..(a + 1) * k_out], &w[a * k_out..(a + 1) * k_out]);
            if d.is_infinite() {
                return f64::INFINITY;
            }
            total += pa * d;
        }
    }
    total
}

/// `[u]_+`.
#[inline]
pub fn positive_part(u: f64) -> f64 {
    if u > 0.0 {
        u
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&d(&[0.5, 0.5])) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(entropy(&d(&[1.0, 0.0])), 0.0);
        // -0.8 ln 0.8 - 0.2 ln 0.2
        assert!((entropy(&d(&[0.8, 0.2])) - 0.500_402_423_538_187_9).abs() < 1e-12);
    }

    #[test]
    fn divergence_examples() {
        let p = d(&[0.8, 0.2]);
        assert_eq!(divergence(&p, &p).unwrap(), 0.0);
        let v = divergence(&p, &d(&[0.5, 0.5])).unwrap();
        assert!((v - 0.192_744_757_021_757_5).abs() < 1e-12);
        assert_eq!(
            divergence(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(),
            f64::INFINITY
        );
        assert!(divergence(&p, &d(&[0.2, 0.3, 0.5])).is_err());
    }

    #[test]
    fn joint_measure_examples() {
        let indep = JointDistribution::new(vec![vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        assert!(joint_measures(&indep).mutual_information.abs() < 1e-15);
        let diag = JointDistribution::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let m = joint_measures(&diag);
        assert!((m.mutual_information - std::f64::consts::LN_2).abs() < 1e-12);
        let q = JointDistribution::new(vec![vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap();
        let m = joint_measures(&q);
        assert!((m.mutual_information - 0.192_744_757_021_757_5).abs() < 1e-12);
        assert!((m.h_x - m.h_x_given_y - m.mutual_information).abs() < 1e-12);
    }

    #[test]
    fn weighted_divergence_examples() {
        let w = ConditionalKernel::uniform(2, 2).unwrap();
        let u = d(&[0.5, 0.5]);
        assert_eq!(weighted_conditional_divergence(&w, &w, &u).unwrap(), 0.0);

        // Only row 1 differs and it carries no weight.
        let q = ConditionalKernel::new(vec![vec![0.5, 0.5], vec![0.9, 0.1]]).unwrap();
        let v = weighted_conditional_divergence(&q, &w, &d(&[1.0, 0.0])).unwrap();
        assert_eq!(v, 0.0);

        // 0.9 ln 1.8 + 0.1 ln 0.2, identical on both rows.
        let q = ConditionalKernel::new(vec![vec![0.9, 0.1], vec![0.9, 0.1]]).unwrap();
        let v = weighted_conditional_divergence(&q, &w, &u).unwrap();
        assert!((v - 0.368_064_207_168_497_1).abs() < 1e-12);

        let hard = ConditionalKernel::identity(2, 2).unwrap();
        let v = weighted_conditional_divergence(&w, &hard, &u).unwrap();
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn positive_part_identities() {
        // a - [a-b]_+ = min(a,b) and b + [a-b]_+ = max(a,b), exactly.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        // Dyadic values keep every subtraction exact in f64.
        let scale = (1u64 << 20) as f64;
        for _ in 0..10_000 {
            let a = rng.random_range(-(1i64 << 24)..(1i64 << 24)) as f64 / scale;
            let b = rng.random_range(-(1i64 << 24)..(1i64 << 24)) as f64 / scale;
            assert_eq!(a - positive_part(a - b), a.min(b));
            assert_eq!(b + positive_part(a - b), a.max(b));
        }
    }
}
