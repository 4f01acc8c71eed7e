//! Reverse-mode differentiation, small MLPs, positional encoding and Adam.

pub mod adam;
pub mod container;
pub mod encoding;
pub mod mlp;
pub mod real;
pub mod tape;

pub use adam::{lr_schedule, lr_schedule_between, AdamState};
pub use encoding::{pe_dim, pe_encode};
pub use mlp::{mlp_forward, MlpConfig, MlpParams, NetRef, ParamKey};
pub use real::Real;
pub use tape::{GradStore, Gradients, Tape, Var};
