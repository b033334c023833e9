//! End-to-end experiments: the sphere submanifold comparison and the
//! alignment / loss / KL-weight ablation.

mod ablation;
mod sphere_demo;

pub use ablation::{run_ablation, AblationConfig, AblationResult, AblationRow};
pub use sphere_demo::{base_point, run_sphere_demo, MethodResult, SphereDemoConfig, SphereDemoResult, METHODS};
