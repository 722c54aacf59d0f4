use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::policy::SelectionContext;
use super::registry::{build_registry, RegistryEntry, TypeRegistry};
use crate::error::{Error, Result};
use crate::types::{sample_from_type_class, JointEmpiricalType, Symbol};

/// Default cap on the number of codewords in one sub-codebook.
pub const DEFAULT_MAX_WORDS_PER_TYPE: u64 = 1 << 21;

const MAGIC: &[u8; 8] = b"VQIDCB\0\0";
const FORMAT_VERSION: u32 = 1;

/// `ceil(exp(n (I + Delta)))`, with a relative slack so exact integers are not bumped up.
pub fn sub_codebook_size(n: usize, mutual_information: f64, delta: f64) -> f64 {
    let x = (n as f64 * (mutual_information.max(0.0) + delta)).exp();
    (x * (1.0 - 1e-12)).ceil().max(1.0)
}

/// The random reproduction codebook `C = union_Q C_Q` together with its type registry.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    registry: Arc<TypeRegistry>,
    /// Flat word storage per registry entry, `n` symbols per word; empty for identity types.
    words: Vec<Vec<Symbol>>,
    seed: u64,
    ranking_seed: u64,
}

impl Codebook {
    /// Draws every sub-codebook for a prebuilt registry.
    ///
    /// The per-type streams are derived from one master seed taken from `rng`, so the result
    /// does not depend on the thread count.
    pub fn sample<R: RngCore + ?Sized>(
        registry: Arc<TypeRegistry>,
        rng: &mut R,
        max_words_per_type: u64,
    ) -> Result<Self> {
        let seed = rng.next_u64();
        let ranking_seed = rng.next_u64();
        let n = registry.n();
        let delta = registry.delta();
        for e in registry.entries().iter().filter(|e| !e.identity) {
            let m = sub_codebook_size(n, e.mutual_information, delta);
            if m > max_words_per_type as f64 {
                return Err(Error::CapExceeded(format!(
                    "sub-codebook of type {} needs {m} words (cap {max_words_per_type})",
                    e.qx
                )));
            }
        }
        let words = registry
            .entries()
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                if e.identity {
                    return Vec::new();
                }
                let m = sub_codebook_size(n, e.mutual_information, delta) as usize;
                let mut stream = ChaCha8Rng::seed_from_u64(seed);
                stream.set_stream(i as u64);
                let mut flat = Vec::with_capacity(m * n);
                for _ in 0..m {
                    flat.extend(sample_from_type_class(&e.qy, &mut stream));
                }
                flat
            })
            .collect();
        Ok(Self { registry, words, seed, ranking_seed })
    }

    /// Codebook with explicitly given sub-codebooks (one list per registry entry).
    pub fn from_parts(
        registry: Arc<TypeRegistry>,
        sub_codebooks: Vec<Vec<Vec<Symbol>>>,
        seed: u64,
        ranking_seed: u64,
    ) -> Result<Self> {
        if sub_codebooks.len() != registry.entries().len() {
            return Err(Error::DimensionMismatch("one sub-codebook per registry entry".into()));
        }
        let n = registry.n();
        let mut words = Vec::with_capacity(sub_codebooks.len());
        for (e, list) in registry.entries().iter().zip(sub_codebooks) {
            if e.identity && !list.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "identity type {} cannot carry codewords",
                    e.qx
                )));
            }
            let mut flat = Vec::with_capacity(list.len() * n);
            for w in list {
                if w.len() != n || w.iter().any(|&s| s as usize >= registry.k_y()) {
                    return Err(Error::InvalidParameter("codeword shape".into()));
                }
                flat.extend(w);
            }
            words.push(flat);
        }
        Ok(Self { registry, words, seed, ranking_seed })
    }

    pub fn n(&self) -> usize {
        self.registry.n()
    }

    pub fn registry(&self) -> &TypeRegistry {
        &self.registry
    }

    pub fn shared_registry(&self) -> Arc<TypeRegistry> {
        Arc::clone(&self.registry)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ranking_seed(&self) -> u64 {
        self.ranking_seed
    }

    /// Reserved output for an empty intersection: the all-zero word.
    pub fn error_word(&self) -> Vec<Symbol> {
        vec![0; self.n()]
    }

    /// Number of words (with multiplicity) in the sub-codebook of registry entry `i`.
    pub fn sub_codebook_len(&self, i: usize) -> usize {
        self.words[i].len() / self.n()
    }

    pub fn sub_codebook(&self, i: usize) -> impl ExactSizeIterator<Item = &[Symbol]> + '_ {
        self.words[i].chunks_exact(self.n())
    }

    pub fn word(&self, i: usize, j: usize) -> &[Symbol] {
        let n = self.n();
        &self.words[i][j * n..(j + 1) * n]
    }

    pub fn total_words(&self) -> usize {
        (0..self.words.len()).map(|i| self.sub_codebook_len(i)).sum()
    }

    /// Serializes to the versioned binary sidecar format (little-endian).
    pub fn to_bytes(&self) -> Vec<u8> {
        let reg = &self.registry;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [reg.n(), reg.k_x(), reg.k_y()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&reg.delta().to_le_bytes());
        out.extend_from_slice(&reg.epsilon().to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.ranking_seed.to_le_bytes());
        out.extend_from_slice(&(reg.entries().len() as u32).to_le_bytes());
        for (i, e) in reg.entries().iter().enumerate() {
            out.push(e.identity as u8);
            out.push(e.repaired as u8);
            for &c in e.joint.counts() {
                out.extend_from_slice(&c.to_le_bytes());
            }
            out.extend_from_slice(&(self.sub_codebook_len(i) as u64).to_le_bytes());
            out.extend_from_slice(&self.words[i]);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a codebook sidecar (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported sidecar version {version}")));
        }
        let n = r.u32()? as usize;
        let kx = r.u32()? as usize;
        let ky = r.u32()? as usize;
        let delta = r.f64()?;
        let epsilon = r.f64()?;
        let seed = r.u64()?;
        let ranking_seed = r.u64()?;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count);
        let mut words = Vec::with_capacity(count);
        for _ in 0..count {
            let identity = r.u8()? != 0;
            let repaired = r.u8()? != 0;
            let counts = (0..kx * ky).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let joint = JointEmpiricalType::from_counts(kx, ky, counts)?;
            entries.push(RegistryEntry::from_joint(joint, identity, repaired)?);
            let m = r.u64()? as usize;
            let flat = r.take(m.checked_mul(n).ok_or_else(|| Error::Format("word count".into()))?)?;
            if flat.iter().any(|&s| s as usize >= ky) {
                return Err(Error::Format("codeword symbol outside the alphabet".into()));
            }
            words.push(flat.to_vec());
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after codebook".into()));
        }
        let registry = TypeRegistry::from_entries(n, kx, ky, delta, epsilon, entries)?;
        Ok(Self { registry: Arc::new(registry), words, seed, ranking_seed })
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_sidecar(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("truncated codebook sidecar".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Builds the registry and draws a codebook.
pub fn build_codebook<R: RngCore + ?Sized>(
    n: usize,
    ctx: &SelectionContext<'_>,
    rng: &mut R,
    max_words_per_type: u64,
) -> Result<Codebook> {
    let registry = Arc::new(build_registry(n, ctx)?);
    Codebook::sample(registry, rng, max_words_per_type)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{CompressionConstraint, MappingPolicy};
    use crate::types::{Distribution, EmpiricalType};

    fn setup(n: usize, seed: u64) -> Codebook {
        let g = Distribution::uniform(2).unwrap();
        let policy = MappingPolicy::identity_if_allowed(0.05, 0.01).unwrap();
        let c = CompressionConstraint::ExcessProbability { rate: 0.2, excess_exponent: 1.0 };
        let ctx = SelectionContext { source: &g, k_y: 2, policy: &policy, constraint: &c, channel: None };
        build_codebook(n, &ctx, &mut ChaCha8Rng::seed_from_u64(seed), DEFAULT_MAX_WORDS_PER_TYPE)
            .unwrap()
    }

    #[test]
    fn sizing_rule() {
        assert_eq!(sub_codebook_size(10, 0.2, 0.05), 13.0);
        assert_eq!(sub_codebook_size(10, 0.0, 0.0), 1.0);
        assert_eq!(sub_codebook_size(8, 0.0, 4f64.ln() / 8.0), 4.0);
    }

    #[test]
    fn codewords_lie_in_their_type_class_and_sizes_match() {
        let cb = setup(10, 1);
        let reg = cb.registry();
        for (i, e) in reg.entries().iter().enumerate() {
            if e.identity {
                assert_eq!(cb.sub_codebook_len(i), 0);
                continue;
            }
            let m = sub_codebook_size(10, e.mutual_information, reg.delta());
            assert_eq!(cb.sub_codebook_len(i) as f64, m);
            for w in cb.sub_codebook(i) {
                assert_eq!(&EmpiricalType::of_sequence(w, 2).unwrap(), &e.qy);
            }
        }
    }

    #[test]
    fn same_seed_same_codebook() {
        assert_eq!(setup(12, 9), setup(12, 9));
        assert_ne!(setup(12, 9), setup(12, 10));
    }

    #[test]
    fn sidecar_round_trip() {
        let cb = setup(10, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cb.bin");
        cb.write_sidecar(&path).unwrap();
        let back = Codebook::read_sidecar(&path).unwrap();
        assert_eq!(back.to_bytes(), cb.to_bytes());
        assert_eq!(back.registry().entries(), cb.registry().entries());
        let mut bad = cb.to_bytes();
        bad[0] = b'X';
        assert!(matches!(Codebook::from_bytes(&bad), Err(Error::Format(_))));
        assert!(Codebook::from_bytes(&cb.to_bytes()[..40]).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        let g = Distribution::uniform(2).unwrap();
        let policy = MappingPolicy::identity_if_allowed(0.05, 0.01).unwrap();
        let c = CompressionConstraint::unconstrained();
        let ctx = SelectionContext { source: &g, k_y: 2, policy: &policy, constraint: &c, channel: None };
        let err = build_codebook(30, &ctx, &mut ChaCha8Rng::seed_from_u64(0), 1000).unwrap_err();
        assert!(matches!(err, Error::CapExceeded(_)));
    }
}
