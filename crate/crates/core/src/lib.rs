pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod verify;

pub use data::{MaskSequence, VideoClip};
pub use error::{Error, Result};
pub use model::{ModelConfig, ParamStore, TokenGrid};
pub use rng::SeededRng;
pub use tensor::Tensor;
