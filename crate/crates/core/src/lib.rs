pub mod acceptance;
pub mod bdmodel;
pub mod blowup;
pub mod cellsolver;
pub mod cli;
pub mod density;
pub mod error;
pub mod geometry;
pub mod homog;
pub mod quadrature;
pub mod represent;
pub mod rigid;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Mat;
