//! Convolution primitives shared by the simulator-facing crates.
//!
//! Tensors use the channel-innermost layouts the implicit-GEMM formulation
//! needs: `IN` as `[inH, inW, IC, B]`, `FLT` as `[fltH, fltW, IC, OC]` and
//! `OUT` as `[outH, outW, OC, B]`. Fixing the two spatial coordinates of any
//! of them yields a contiguous matrix ([`MatrixView`]), and one output pixel
//! of the convolution is a sum of transposed products of those matrices
//! ([`mm_unit`]).
//!
//! [`direct_conv`] is the seven-loop reference used as the correctness
//! oracle by everything downstream.

mod conv;
mod error;
mod fixture;
mod shape;
mod tensor;

pub use conv::{conv_flops, conv_via_mm, direct_conv, max_rel_err, mm_unit};
pub use error::ConvError;
pub use fixture::{decode_fixture, encode_fixture, FixtureHeader};
pub use shape::{ConvParams, ConvShape};
pub use tensor::{Layout, MatrixView, MatrixViewMut, Tensor4};
