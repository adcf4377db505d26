pub mod codec;
pub mod constraints;
pub mod error;
pub mod gradsuite;
pub mod groups;
pub mod layers;
pub mod metrics;
pub mod tasks;
pub mod tensor;
pub mod trainer;

pub use error::{AceError, Result};
pub use groups::{Group, GroupElement, Representation, Space};
pub use tensor::Tensor;
