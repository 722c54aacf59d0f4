//! Random ensemble of lossy encoders: test-channel selection under a compression
//! constraint, the one-to-one type registry, sub-codebooks, ranking and encoding.

mod codebook;
mod constraint;
mod diagnostics;
mod encoder;
mod policy;
mod registry;

pub use codebook::{build_codebook, sub_codebook_size, Codebook, DEFAULT_MAX_WORDS_PER_TYPE};
pub use constraint::{check_compression_constraint, CompressionConstraint, ConstraintReport};
pub use diagnostics::{
    concentration_diagnostic, exhaustive_concentration, sample_codewords, ConcentrationReport,
    IntersectionSample, PreimageSample,
};
pub use encoder::{
    encode, index_to_word, inverse_image, rank, word_to_index, Encoded, EncoderTable,
    EncodingKind, LossyEncoder, DEFAULT_BRUTE_FORCE_CAP,
};
pub use policy::{
    select_test_channel, select_test_channel_continuous, MappingPolicy, MappingStrategy,
    SelectionContext, TableEntry,
};
pub use registry::{build_registry, Repair, RegistryEntry, TypeRegistry};

pub(crate) use policy::{kernel_grid, mi_yz_through};
