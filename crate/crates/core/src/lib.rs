//! Elastic shape analysis of landmark-sequence trajectories.
//!
//! Skeleton frames live on Kendall shape space (translation, scale and
//! rotation removed); trajectories are registered in time with transported
//! square-root velocity functions and a dynamic-programming warp search,
//! averaged with an iterative Fréchet mean, and embedded with a variational
//! autoencoder whose decoder shoots back onto the manifold.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod kendall;
pub mod pca;
pub mod pipeline;
pub mod registration;
pub mod rvae;
pub mod seeds;
pub mod sphere;
pub mod trajectory;
pub mod tsrvf;
pub mod warp;

pub use error::{Error, Result};
pub use kendall::{
    center, exp_map, log_map, optimal_rotation, parallel_transport, preshape_distance,
    project_to_tangent, shape_distance, to_preshape, Configuration, PreShape, Rotation,
    RotationFit, TangentVector,
};
pub use trajectory::{
    apply_warp, covariant_velocity, resample_trajectory, trajectory_exp, trajectory_log,
    TangentField, Trajectory,
};
pub use tsrvf::{alignment_cost, compute_tsrvf, warp_action, TsrvfRep};
pub use warp::{optimal_warp, optimal_warp_with_cost, WarpingFunction};
pub use registration::{
    register_collection, register_collection_from, static_frechet_mean, static_frechet_mean_from, AlignmentTarget, RegistrationConfig,
    RegistrationResult,
};
pub use pca::{fit_pca, Pca};
