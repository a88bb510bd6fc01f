//! Dense arrays and the reverse-mode differentiation tape the model runs on.

mod array;
mod graph;
mod params;

pub use array::{broadcast_shape, Array};
pub use graph::{
    leaky_relu, sigmoid, softplus, BinaryOp, ConvPair, DiffNode, Graph, UnaryOp, Var,
};
pub use params::{Binding, ParamGroup, ParamId, ParamSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ArrayError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract error: {0}")]
    Contract(String),
}
