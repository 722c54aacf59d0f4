use rand::Rng;
use serde::Serialize;

use super::codebook::Codebook;
use super::encoder::{index_to_word, EncoderTable, EncodingKind, LossyEncoder};
use crate::error::{Error, Result};
use crate::types::{joint_counts_into, Symbol};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntersectionSample {
    pub x_type: Vec<u32>,
    /// `|C_Q ∩ T(Q_{Y|X}|x)|`, counting repeated codewords with multiplicity.
    pub intersection: usize,
    pub inside: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreimageSample {
    pub y_type: Vec<u32>,
    /// `|T(Q_{X|Y}|y) ∩ f^{-1}(y)|`.
    pub count: usize,
    pub lower_bound: f64,
    pub inside: bool,
}

/// Concentration of intersection and preimage sizes around their typical values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub delta: f64,
    pub epsilon: f64,
    /// `[e^{n(Delta-eps)}, e^{n(Delta+eps)}]`.
    pub window: (f64, f64),
    pub x_samples: Vec<IntersectionSample>,
    /// Sampled x of low-entropy type (not subject to the window).
    pub x_skipped: usize,
    pub x_fraction_inside: Option<f64>,
    pub y_samples: Vec<PreimageSample>,
    /// `None` when the brute-force regime is unavailable or no y was eligible.
    pub y_fraction_inside: Option<f64>,
}

impl ConcentrationReport {
    /// Every evaluated fraction is at least `min_fraction`.
    pub fn passes(&self, min_fraction: f64) -> bool {
        self.x_fraction_inside.is_none_or(|f| f >= min_fraction)
            && self.y_fraction_inside.is_none_or(|f| f >= min_fraction)
    }
}

fn fraction(flags: impl Iterator<Item = bool>) -> Option<f64> {
    let (mut k, mut m) = (0usize, 0usize);
    for f in flags {
        m += 1;
        k += f as usize;
    }
    (m > 0).then(|| k as f64 / m as f64)
}

/// Checks sampled `x` against the intersection window and, given a tabulated encoder,
/// sampled codewords `y` against the preimage lower bound.
pub fn concentration_diagnostic(
    enc: &LossyEncoder,
    xs: &[Vec<Symbol>],
    ys: &[Vec<Symbol>],
    table: Option<&EncoderTable>,
) -> Result<ConcentrationReport> {
    let cb = enc.codebook();
    let reg = cb.registry();
    let n = reg.n() as f64;
    let (delta, epsilon) = (reg.delta(), reg.epsilon());
    let window = ((n * (delta - epsilon)).exp(), (n * (delta + epsilon)).exp());

    let mut x_samples = Vec::new();
    let mut x_skipped = 0;
    for x in xs {
        let counts = type_counts(x, reg.k_x());
        let i = reg
            .index_of_x(&counts)
            .ok_or_else(|| Error::UnregisteredType(format!("{counts:?}")))?;
        let entry = &reg.entries()[i];
        if entry.identity {
            x_skipped += 1;
            continue;
        }
        let m = enc.intersection(x)?.len();
        let inside = m as f64 >= window.0 && m as f64 <= window.1;
        x_samples.push(IntersectionSample { x_type: entry.qx.counts().to_vec(), intersection: m, inside });
    }

    let mut y_samples = Vec::new();
    if let Some(table) = table {
        let mut buf = vec![0u32; reg.k_x() * reg.k_y()];
        for y in ys {
            let Some(j) = reg.index_of_y(&type_counts(y, reg.k_y())) else { continue };
            let entry = &reg.entries()[j];
            if entry.identity {
                continue;
            }
            let count = table
                .preimage_indices(y)
                .iter()
                .filter(|&&xi| table.kind_of(xi) != EncodingKind::ErrorWord)
                .filter(|&&xi| {
                    let x = index_to_word(xi, reg.n(), reg.k_x());
                    joint_counts_into(&x, y, reg.k_y(), &mut buf);
                    buf == entry.joint.counts()
                })
                .count();
            let lower_bound = (n * (entry.equivocation - delta - 2.0 * epsilon)).exp();
            y_samples.push(PreimageSample {
                y_type: entry.qy.counts().to_vec(),
                count,
                lower_bound,
                inside: count as f64 >= lower_bound,
            });
        }
    }

    Ok(ConcentrationReport {
        n: reg.n(),
        delta,
        epsilon,
        window,
        x_fraction_inside: fraction(x_samples.iter().map(|s| s.inside)),
        y_fraction_inside: fraction(y_samples.iter().map(|s| s.inside)),
        x_samples,
        x_skipped,
        y_samples,
    })
}

/// Diagnostic over all of `X^n` and every distinct codeword (brute-force regime).
pub fn exhaustive_concentration(enc: &LossyEncoder, table: &EncoderTable) -> Result<ConcentrationReport> {
    let reg = enc.codebook().registry();
    let total = (reg.k_x() as u64).pow(reg.n() as u32);
    let xs: Vec<Vec<Symbol>> = (0..total).map(|i| index_to_word(i, reg.n(), reg.k_x())).collect();
    let mut ys: Vec<Vec<Symbol>> = (0..reg.entries().len())
        .flat_map(|i| enc.codebook().sub_codebook(i).map(|w| w.to_vec()).collect::<Vec<_>>())
        .collect();
    ys.sort();
    ys.dedup();
    concentration_diagnostic(enc, &xs, &ys, Some(table))
}

/// Uniform draws (with replacement) from the non-identity codewords.
pub fn sample_codewords<R: Rng + ?Sized>(cb: &Codebook, count: usize, rng: &mut R) -> Vec<Vec<Symbol>> {
    let sizes: Vec<usize> = (0..cb.registry().entries().len()).map(|i| cb.sub_codebook_len(i)).collect();
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let mut k = rng.random_range(0..total);
            let mut i = 0;
            while k >= sizes[i] {
                k -= sizes[i];
                i += 1;
            }
            cb.word(i, k).to_vec()
        })
        .collect()
}

fn type_counts(w: &[Symbol], k: usize) -> Vec<u32> {
    let mut c = vec![0u32; k];
    for &s in w {
        if let Some(slot) = c.get_mut(s as usize) {
            *slot += 1;
        }
    }
    c
}
