//! Dense network kernel: forward/backward passes, Adam, layer resets and the
//! probability helpers used by the composition and risk code.

mod adam;
mod mlp;
mod prob;
mod rng;

pub use adam::{reset_layers, AdamState};
pub use mlp::{init_bound, Activation, ForwardCache, GradientSet, Mlp};
pub use prob::{normal_cdf, normal_pdf, normal_quantile, softmax};
pub use rng::Rng;
