pub mod error;
pub mod geometry;
pub mod gmrf;
pub mod hyper;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod par;
pub mod samplers;
pub mod simulate;

pub use error::{Error, Result};
pub use geometry::{Domain, Point, Rect, Region};
pub use model::{AugmentedState, Bin, Dataset, GammaPrior, Layout};
