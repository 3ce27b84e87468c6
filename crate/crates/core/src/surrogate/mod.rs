//! Gaussian-process surrogates: RBF, periodic and deep kernels trained by
//! marginal likelihood.

mod gp;
mod kernel;
mod linalg;
mod net;

pub use gp::{fit_gp, initial_kernel, nll, nll_with_grad, train_kernel, GpModel, Inputs, Posterior, TrainConfig};
pub use kernel::{kernel_eval, BaseKind, Kernel, KernelKind, Stationary};
pub use net::{Dense, FeatureNet};
