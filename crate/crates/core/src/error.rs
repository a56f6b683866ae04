use thiserror::Error;

use crate::expr::ExprError;
use crate::jet::JetError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("jet arithmetic: {0}")]
    Jet(#[from] JetError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("degree {degree} not supported here: {context}")]
    Degree { degree: usize, context: &'static str },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("vector not in H (theta0 = {residual:e})")]
    NotHorizontal { residual: f64 },
    #[error("point outside the chart domain: {0}")]
    Domain(String),
    #[error("invalid structure: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
