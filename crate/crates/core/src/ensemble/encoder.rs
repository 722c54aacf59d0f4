use std::collections::HashMap;

use serde::Serialize;

use super::codebook::Codebook;
use crate::error::{Error, Result};
use crate::types::{joint_counts_into, Symbol};

/// Default cap on `|X|^n` for exhaustive tabulation of the encoder.
pub const DEFAULT_BRUTE_FORCE_CAP: u64 = 1 << 24;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn absorb(mut h: u64, seq: &[Symbol]) -> u64 {
    for chunk in seq.chunks(8) {
        let mut word = 0u64;
        for (i, &s) in chunk.iter().enumerate() {
            word |= (s as u64) << (8 * i);
        }
        h = mix(h.wrapping_add(GOLDEN) ^ word);
    }
    mix(h ^ (seq.len() as u64).wrapping_mul(GOLDEN))
}

/// Keyed pseudorandom rank of `y` in the ordering attached to `x`.
///
/// Smaller is preferred; callers break equal ranks by lexicographic `y`.
pub fn rank(x: &[Symbol], y: &[Symbol], seed: u64) -> u64 {
    let h = absorb(mix(seed ^ GOLDEN), x);
    absorb(mix(h ^ 0x5bd1_e995_c6a4_a793), y)
}

/// Which branch of the encoding rule produced the output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodingKind {
    /// Low-entropy source type, stored losslessly.
    Identity,
    /// Smallest-rank member of the sub-codebook intersection; `index` is the
    /// position inside the sub-codebook.
    Codeword { index: usize },
    /// Empty intersection; the output is the reserved all-zero word.
    ErrorWord,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub word: Vec<Symbol>,
    pub kind: EncodingKind,
}

/// Deterministic rate-distortion encoder `f` over a fixed codebook.
#[derive(Clone, Debug)]
pub struct LossyEncoder {
    codebook: Codebook,
}

impl LossyEncoder {
    pub fn new(codebook: Codebook) -> Self {
        Self { codebook }
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    fn type_index(&self, x: &[Symbol]) -> Result<usize> {
        let reg = self.codebook.registry();
        if x.len() != reg.n() {
            return Err(Error::DimensionMismatch(format!(
                "source word of length {} for n = {}",
                x.len(),
                reg.n()
            )));
        }
        let mut counts = vec![0u32; reg.k_x()];
        for &s in x {
            let s = s as usize;
            if s >= reg.k_x() {
                return Err(Error::InvalidParameter(format!("source symbol {s}")));
            }
            counts[s] += 1;
        }
        reg.index_of_x(&counts)
            .ok_or_else(|| Error::UnregisteredType(format!("{counts:?}")))
    }

    /// Members of `C_Q ∩ T(Q_{Y|X} | x)` as sub-codebook positions, for the type of `x`.
    pub fn intersection(&self, x: &[Symbol]) -> Result<Vec<usize>> {
        let i = self.type_index(x)?;
        Ok(self.intersection_in(i, x))
    }

    fn intersection_in(&self, i: usize, x: &[Symbol]) -> Vec<usize> {
        let reg = self.codebook.registry();
        let target = reg.entries()[i].joint.counts();
        let mut buf = vec![0u32; target.len()];
        self.codebook
            .sub_codebook(i)
            .enumerate()
            .filter_map(|(j, y)| {
                joint_counts_into(x, y, reg.k_y(), &mut buf);
                (buf == target).then_some(j)
            })
            .collect()
    }

    /// The encoding rule: identity for low-entropy types, otherwise the smallest-rank
    /// codeword jointly typical with `x`, or the error word.
    pub fn encode(&self, x: &[Symbol]) -> Result<Encoded> {
        let i = self.type_index(x)?;
        let entry = &self.codebook.registry().entries()[i];
        if entry.identity {
            return Ok(Encoded { word: x.to_vec(), kind: EncodingKind::Identity });
        }
        let seed = self.codebook.ranking_seed();
        let best = self
            .intersection_in(i, x)
            .into_iter()
            .map(|j| (rank(x, self.codebook.word(i, j), seed), self.codebook.word(i, j), j))
            .min_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
        Ok(match best {
            Some((_, y, j)) => Encoded { word: y.to_vec(), kind: EncodingKind::Codeword { index: j } },
            None => Encoded { word: self.codebook.error_word(), kind: EncodingKind::ErrorWord },
        })
    }

    /// Encodes every source word; requires `|X|^n <= cap`.
    pub fn tabulate(&self, cap: u64) -> Result<EncoderTable> {
        let reg = self.codebook.registry();
        let (n, kx) = (reg.n(), reg.k_x());
        let total = (kx as f64).powi(n as i32);
        if total > cap as f64 {
            return Err(Error::CapExceeded(format!(
                "|X|^n = {total} exceeds the brute-force cap {cap}"
            )));
        }
        let total = total as u64;
        use rayon::prelude::*;
        let encoded: Vec<Encoded> = (0..total)
            .into_par_iter()
            .map(|idx| self.encode(&index_to_word(idx, n, kx)))
            .collect::<Result<_>>()?;
        let mut outputs: Vec<Vec<Symbol>> = Vec::new();
        let mut output_id: HashMap<Vec<Symbol>, u32> = HashMap::new();
        let mut image = Vec::with_capacity(total as usize);
        let mut kinds = Vec::with_capacity(total as usize);
        let mut preimages: Vec<Vec<u64>> = Vec::new();
        for (idx, e) in encoded.into_iter().enumerate() {
            let id = *output_id.entry(e.word.clone()).or_insert_with(|| {
                outputs.push(e.word.clone());
                preimages.push(Vec::new());
                (outputs.len() - 1) as u32
            });
            preimages[id as usize].push(idx as u64);
            image.push(id);
            kinds.push(e.kind);
        }
        Ok(EncoderTable { n, k_x: kx, outputs, output_id, image, kinds, preimages })
    }

    /// `f^{-1}(y)` by exhaustive enumeration of `X^n`.
    pub fn inverse_image(&self, y: &[Symbol], cap: u64) -> Result<Vec<Vec<Symbol>>> {
        let table = self.tabulate(cap)?;
        Ok(table.inverse_image(y))
    }
}

/// Free-function form of [`LossyEncoder::encode`] returning only the output word.
pub fn encode(x: &[Symbol], enc: &LossyEncoder) -> Result<Vec<Symbol>> {
    Ok(enc.encode(x)?.word)
}

/// Free-function form of [`LossyEncoder::inverse_image`] with the default cap.
pub fn inverse_image(y: &[Symbol], enc: &LossyEncoder) -> Result<Vec<Vec<Symbol>>> {
    enc.inverse_image(y, DEFAULT_BRUTE_FORCE_CAP)
}

/// Word with lexicographic index `idx` in `{0..k}^n` (first symbol most significant).
pub fn index_to_word(mut idx: u64, n: usize, k: usize) -> Vec<Symbol> {
    let mut w = vec![0; n];
    for slot in w.iter_mut().rev() {
        *slot = (idx % k as u64) as Symbol;
        idx /= k as u64;
    }
    w
}

pub fn word_to_index(w: &[Symbol], k: usize) -> u64 {
    w.iter().fold(0u64, |acc, &s| acc * k as u64 + s as u64)
}

/// The encoder evaluated on all of `X^n`.
#[derive(Clone, Debug)]
pub struct EncoderTable {
    n: usize,
    k_x: usize,
    outputs: Vec<Vec<Symbol>>,
    output_id: HashMap<Vec<Symbol>, u32>,
    image: Vec<u32>,
    kinds: Vec<EncodingKind>,
    preimages: Vec<Vec<u64>>,
}

impl EncoderTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_x(&self) -> usize {
        self.k_x
    }

    /// Distinct outputs of `f` (its range).
    pub fn outputs(&self) -> &[Vec<Symbol>] {
        &self.outputs
    }

    pub fn output_of(&self, x_index: u64) -> &[Symbol] {
        &self.outputs[self.image[x_index as usize] as usize]
    }

    pub fn kind_of(&self, x_index: u64) -> EncodingKind {
        self.kinds[x_index as usize]
    }

    /// Source-word indices mapped to `y`; empty when `y` is outside the range.
    pub fn preimage_indices(&self, y: &[Symbol]) -> &[u64] {
        self.output_id
            .get(y)
            .map(|&id| self.preimages[id as usize].as_slice())
            .unwrap_or(&[])
    }

    pub fn inverse_image(&self, y: &[Symbol]) -> Vec<Vec<Symbol>> {
        self.preimage_indices(y)
            .iter()
            .map(|&i| index_to_word(i, self.n, self.k_x))
            .collect()
    }
}
