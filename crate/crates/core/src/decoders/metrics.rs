use std::collections::HashMap;
use std::sync::{Once, RwLock};

use serde::{Deserialize, Serialize};

use super::{argmax_first, argmin_first, is_error_row, Decision, DecoderContext};
use crate::ensemble::{Encoded, TypeRegistry};
use crate::error::{Error, Result};
use crate::exponents::{inner_min_flat, DEFAULT_INNER_MAX_ITER};
use crate::types::{
    entropy_of, joint_counts_into, kl, mutual_information_flat, ConditionalKernel, Distribution,
    EmpiricalType, JointEmpiricalType, Symbol,
};

/// Which set of words `N(y|z)` counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchScope {
    /// The encoder's reproduction codebook `C` (with multiplicity); low-entropy outputs
    /// count the whole conditional class, since every word of such a type is reachable.
    #[default]
    Reproduction,
    /// Only the enrolled rows.
    Enrolled,
}

/// `A_Q(Y) = I_Q(X;Y) + D(Q_X || G)` for the source type registered under `qy`.
pub fn alpha_of(qy: &EmpiricalType, registry: &TypeRegistry, source: &Distribution) -> Result<f64> {
    let entry = registry
        .reverse(qy)
        .ok_or_else(|| Error::UnregisteredType(qy.to_string()))?;
    if source.len() != registry.k_x() {
        return Err(Error::DimensionMismatch("source alphabet vs registry".into()));
    }
    Ok(entry.mutual_information + kl(&entry.qx.probs(), source.probs()))
}

/// Number of rows sharing the joint type of `(y, z)`, counted with multiplicity.
pub fn count_matches<R: AsRef<[Symbol]>>(
    y: &[Symbol],
    z: &[Symbol],
    rows: &[R],
    ky: usize,
    kz: usize,
) -> usize {
    let mut target = vec![0u32; ky * kz];
    joint_counts_into(y, z, kz, &mut target);
    let mut buf = vec![0u32; ky * kz];
    rows.iter()
        .filter(|r| {
            let r = r.as_ref();
            r.len() == z.len() && {
                joint_counts_into(r, z, kz, &mut buf);
                buf == target
            }
        })
        .count()
}

fn type_of(w: &[Symbol], k: usize) -> Option<EmpiricalType> {
    EmpiricalType::of_sequence(w, k).ok()
}

static POSITIVITY_WARNING: Once = Once::new();

/// `d(y, z) = ln N(y|z) - n alpha(P_y)` for every row; error-word rows and rows of
/// unregistered type get `+inf`.
pub fn universal_metric(
    z: &[Symbol],
    rows: &[Encoded],
    ctx: &DecoderContext<'_>,
    scope: MatchScope,
) -> Result<Vec<f64>> {
    let cb = ctx.codebook;
    let reg = cb.registry();
    let (ky, kz) = (reg.k_y(), ctx.channel.k_out());
    if z.len() != reg.n() {
        return Err(Error::DimensionMismatch("query length".into()));
    }
    if !ctx.channel.is_strictly_positive() {
        POSITIVITY_WARNING.call_once(|| {
            log::warn!("channel has zero transitions; the universal decoder's optimality is proven only for positive channels")
        });
    }
    let n = reg.n() as f64;
    let enrolled: Vec<&[Symbol]> =
        rows.iter().filter(|r| !is_error_row(r)).map(|r| r.word.as_slice()).collect();
    let mut memo: HashMap<Vec<u32>, f64> = HashMap::new();
    let mut buf = vec![0u32; ky * kz];
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        if is_error_row(row) {
            out.push(f64::INFINITY);
            continue;
        }
        let y = row.word.as_slice();
        let Some(qy) = type_of(y, ky) else {
            out.push(f64::INFINITY);
            continue;
        };
        let Some(idx) = reg.index_of_y(qy.counts()) else {
            out.push(f64::INFINITY);
            continue;
        };
        joint_counts_into(y, z, kz, &mut buf);
        if let Some(&v) = memo.get(&buf) {
            out.push(v);
            continue;
        }
        let entry = &reg.entries()[idx];
        let ln_n = match scope {
            MatchScope::Reproduction if entry.identity => {
                JointEmpiricalType::from_counts(ky, kz, buf.clone())?.ln_class_size_given_second()
            }
            MatchScope::Reproduction => {
                let words: Vec<&[Symbol]> = cb.sub_codebook(idx).collect();
                (count_matches(y, z, &words, ky, kz).max(1) as f64).ln()
            }
            MatchScope::Enrolled => (count_matches(y, z, &enrolled, ky, kz).max(1) as f64).ln(),
        };
        let alpha = entry.mutual_information + kl(&entry.qx.probs(), ctx.source.probs());
        let v = ln_n - n * alpha;
        memo.insert(buf.clone(), v);
        out.push(v);
    }
    Ok(out)
}

/// Universal decoder: `argmin_m [ln N(y_m|z) - n alpha(P_{y_m})]`, smallest index on ties.
pub fn decode_universal(
    z: &[Symbol],
    rows: &[Encoded],
    ctx: &DecoderContext<'_>,
    scope: MatchScope,
) -> Result<Decision> {
    argmin_first(universal_metric(z, rows, ctx, scope)?)
}

/// Maximum empirical mutual information decoder.
pub fn decode_mmi(z: &[Symbol], rows: &[Encoded], ky: usize, kz: usize) -> Result<Decision> {
    let mut buf = vec![0u32; ky * kz];
    let metrics: Vec<f64> = rows
        .iter()
        .map(|r| {
            if is_error_row(r) || r.word.len() != z.len() {
                return f64::NEG_INFINITY;
            }
            joint_counts_into(&r.word, z, kz, &mut buf);
            let total = z.len() as f64;
            let p: Vec<f64> = buf.iter().map(|&c| c as f64 / total).collect();
            mutual_information_flat(&p, ky, kz)
        })
        .collect();
    if metrics.iter().all(|m| *m == f64::NEG_INFINITY) {
        return Err(Error::DecodeFailure("every candidate is an error word".into()));
    }
    argmax_first(metrics)
}

/// `B_Q(Y,Z)` for a joint type of `(y, z)`:
/// `min over U(Q_{X|Y})` of `sum Q_{XYZ} ln[Q~_{X|YZ} / (G W)]`, evaluated as
/// `H(Y,Z) - H(Y|X) + D(Q_X||G) + min D(Q~_{XZ|Y} || Q_{X|Y} x W | Q_Y)`.
pub fn beta_of(
    qyz: &JointEmpiricalType,
    registry: &TypeRegistry,
    source: &Distribution,
    channel: &ConditionalKernel,
    tol: f64,
) -> Result<f64> {
    let (ky, kz, kx) = (qyz.k1(), qyz.k2(), registry.k_x());
    if ky != registry.k_y() || kz != channel.k_out() || channel.k_in() != kx {
        return Err(Error::DimensionMismatch("beta_of shapes".into()));
    }
    let qy = qyz.first_type()?;
    let entry = registry
        .reverse(&qy)
        .ok_or_else(|| Error::UnregisteredType(qy.to_string()))?;
    let q_y = qy.probs();
    let joint_xy = entry.joint.probs();
    let mut qx_y = vec![0.0; ky * kx];
    for y in 0..ky {
        for x in 0..kx {
            qx_y[y * kx + x] = if q_y[y] > 0.0 {
                joint_xy[x * ky + y] / q_y[y]
            } else {
                1.0 / kx as f64
            };
        }
    }
    let p_yz = qyz.probs();
    let mut qz_y = vec![0.0; ky * kz];
    for y in 0..ky {
        for z in 0..kz {
            qz_y[y * kz + z] = if q_y[y] > 0.0 { p_yz[y * kz + z] / q_y[y] } else { 1.0 / kz as f64 };
        }
    }
    let inner = inner_min_flat(&q_y, &qx_y, &qz_y, channel, tol, DEFAULT_INNER_MAX_ITER)?;
    if inner.value.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let qx = entry.qx.probs();
    let h_y_given_x = entropy_of(&joint_xy) - entropy_of(&qx);
    Ok(entropy_of(&p_yz) - h_y_given_x.max(0.0) + kl(&qx, source.probs()) + inner.value)
}

/// `gamma = beta - alpha`, the exponent of the approximate likelihood `P(z|y)`.
pub fn gamma_of(
    qyz: &JointEmpiricalType,
    registry: &TypeRegistry,
    source: &Distribution,
    channel: &ConditionalKernel,
    tol: f64,
) -> Result<f64> {
    let beta = beta_of(qyz, registry, source, channel, tol)?;
    let alpha = alpha_of(&qyz.first_type()?, registry, source)?;
    Ok(beta - alpha)
}

/// Concurrent memo of `gamma` per joint type, valid for one `(registry, G, W)`.
#[derive(Debug, Default)]
pub struct GammaMemo {
    table: RwLock<HashMap<Vec<u32>, f64>>,
}

impl GammaMemo {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.table.read().expect("memo lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_compute(
        &self,
        qyz: &JointEmpiricalType,
        compute: impl FnOnce() -> Result<f64>,
    ) -> Result<f64> {
        if let Some(&v) = self.table.read().expect("memo lock").get(qyz.counts()) {
            return Ok(v);
        }
        let v = compute()?;
        self.table.write().expect("memo lock").insert(qyz.counts().to_vec(), v);
        Ok(v)
    }
}

/// Approximate ML decoder: `argmin_m gamma(P_{y_m z})`. Requires a strictly positive channel.
pub fn decode_approx_ml(
    z: &[Symbol],
    rows: &[Encoded],
    ctx: &DecoderContext<'_>,
    memo: &GammaMemo,
    tol: f64,
) -> Result<Decision> {
    if !ctx.channel.is_strictly_positive() {
        return Err(Error::NotPositive(
            "the approximate-ML metric is only justified for channels with W(z|x) > 0 everywhere"
                .into(),
        ));
    }
    let reg = ctx.codebook.registry();
    let (ky, kz) = (reg.k_y(), ctx.channel.k_out());
    let mut metrics = Vec::with_capacity(rows.len());
    for row in rows {
        if is_error_row(row) || row.word.len() != z.len() {
            metrics.push(f64::INFINITY);
            continue;
        }
        let joint = crate::types::empirical_joint(&row.word, z, ky, kz)?;
        let registered = joint.first_type().ok().and_then(|q| reg.index_of_y(q.counts()));
        if registered.is_none() {
            metrics.push(f64::INFINITY);
            continue;
        }
        let g = memo.get_or_compute(&joint, || gamma_of(&joint, reg, ctx.source, ctx.channel, tol))?;
        metrics.push(g);
    }
    argmin_first(metrics)
}
