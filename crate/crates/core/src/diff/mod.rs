//! Reverse-mode differentiation, parameter storage, optimizer and
//! gradient checking.

mod adam;
mod checkpoint;
mod gradcheck;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, Objective};
pub use params::{Gradients, ParamId, ParamSlot, ParamStore};
pub use tape::{gelu, Mode, NodeGrads, Tape, Var};
