//! Method-of-types calculus: distributions, empirical types, information measures.

mod dist;
mod empirical;
mod measures;

pub use dist::{ConditionalKernel, Distribution, JointDistribution, MASS_TOL};
pub use empirical::{
    empirical_joint, enumerate_types, enumerate_types_capped, ln_factorial, ln_multinomial,
    same_conditional_type, sample_from_type_class, type_class_size, ClassSize, EmpiricalType,
    JointEmpiricalType, Symbol, DEFAULT_ENUMERATION_CAP,
};
pub(crate) use empirical::joint_counts_into;
pub use measures::{
    divergence, entropy, joint_measures, positive_part, weighted_conditional_divergence,
    JointMeasures,
};
pub(crate) use measures::{entropy_of, kl, mutual_information_flat};
