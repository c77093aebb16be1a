//! Zero-cost proxies: scores of untrained networks from at most one batch.

pub mod batch;
pub mod counts;
pub mod error;
pub mod hessian;
pub mod ids;
pub mod jacob_fro;
pub mod jacobian;
pub mod nwot;
pub mod saliency;
pub mod stats;
pub mod vector;
pub mod zen;

pub use batch::ScoreBatch;
pub use counts::{count_static, StaticCounts};
pub use error::{ProxyError, Result};
pub use hessian::{hessian_eig, power_iteration, Eigen, PowerConfig};
pub use ids::ProxyId;
pub use jacob_fro::{jacob_fro, OutputSpace};
pub use jacobian::{epe_nas_from_jacobian, jacov_from_jacobian, per_sample_jacobian};
pub use nwot::{activation_codes, nwot_from_codes};
pub use saliency::{
    fisher, gradient_scores, gradient_scores_of, grasp, grasp_of, loss_pass, param_grads, synflow,
    GradientScores, LossPass,
};
pub use vector::{
    csv_header, proxy_vector, proxy_vector_for, write_csv, HessianPolicy, ProxyConfig, ProxyVector,
    Score,
};
pub use zen::{zen, ZenConfig};
