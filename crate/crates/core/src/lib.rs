//! Deep ReLU networks as consecutive compositions `N_n = L_n ∘ ⋯ ∘ L_1`,
//! their activation regions, and the convergence of `N_n` as depth grows.
//!
//! The pieces, bottom-up:
//!
//! - [`mask`] and [`linalg`]: activation matrices and the small dense
//!   matrices everything else is built from.
//! - [`network`] and [`eval`]: the network model, exact forward evaluation
//!   and the affine piece `A x + c` of each activation region.
//! - [`regions`]: region enumeration over `[0,1]^d` with an LP interior
//!   certificate, nestedness checks and the hyperplane-arrangement bound.
//! - [`products`]: masked products `∏ I_iW_i`, the bias series, tail bounds.
//! - [`sequence`] and [`lab`]: generators for infinite families and
//!   end-to-end convergence experiments.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod lab;
pub mod linalg;
pub mod lp;
pub mod mask;
pub mod network;
pub mod norm;
pub mod products;
pub mod regions;
pub mod sequence;

pub use error::{Error, Result};
pub use eval::{affine_piece, forward, output_map, representation_check, AffinePiece, Forward};
pub use lab::{
    contradiction, lp_distance_estimate, necessary_condition_audit, pointwise_experiment,
    region_coefficient_convergence, AuditReport, CoefficientTrace, ConvergenceReport, ExperimentOptions, Grid,
    DEFAULT_SCHEDULE,
};
pub use linalg::Matrix;
pub use mask::{activation_product, ActivationMatrix, ActivationPattern};
pub use network::{Layer, Network};
pub use norm::{induced_matrix_norm, vector_norm, NormKind};
pub use products::{
    check_product_conditions, partial_product, product_limit, product_norm_bound, series_limit, series_tail_bound,
    stabilization_index, tail_bound, tail_bound_applies, verify_tail_lemma, ConditionReport, MaskRule, ProductLimit,
    ProductState, SeriesLimit, SeriesState, Status,
};
pub use regions::{
    check_nested, enumerate_levels, enumerate_regions, grid_census, verify_partition, zaslavsky_bound, PartitionReport,
    Polyhedron, RegionCell,
};
pub use sequence::{generate_sequence, DecayModel, Distribution, SequenceKind, SequenceSpec};
