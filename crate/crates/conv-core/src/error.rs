use thiserror::Error;

use crate::tensor::Layout;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConvError {
    #[error("invalid parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: i64 },

    #[error("derived output size {out_h}x{out_w} is not positive")]
    NonPositiveOutput { out_h: i64, out_w: i64 },

    #[error("{layout:?} tensor has dims {got:?}, shape requires {expected:?}")]
    ShapeMismatch {
        layout: Layout,
        expected: [usize; 4],
        got: [usize; 4],
    },

    #[error("matrix operands disagree: {0}")]
    DimMismatch(String),

    #[error("malformed fixture: {0}")]
    Fixture(String),
}
