use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConvError;
use crate::shape::ConvShape;

/// Dimension order of a convolution operand. The two leading dimensions are
/// spatial, the trailing two form the MM_unit matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Layout {
    /// `[inH, inW, IC, B]`
    In,
    /// `[fltH, fltW, IC, OC]`
    Flt,
    /// `[outH, outW, OC, B]`
    Out,
}

impl Layout {
    pub fn dims_for(self, shape: &ConvShape) -> [usize; 4] {
        match self {
            Layout::In => shape.in_dims(),
            Layout::Flt => shape.flt_dims(),
            Layout::Out => shape.out_dims(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    layout: Layout,
    dims: [usize; 4],
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn zeros(layout: Layout, dims: [usize; 4]) -> Self {
        Self {
            layout,
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn zeros_for(layout: Layout, shape: &ConvShape) -> Self {
        Self::zeros(layout, layout.dims_for(shape))
    }

    pub fn from_vec(layout: Layout, dims: [usize; 4], data: Vec<f32>) -> Result<Self, ConvError> {
        let len = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if len != Some(data.len()) {
            return Err(ConvError::DimMismatch(format!(
                "{} values for dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { layout, dims, data })
    }

    /// Uniform values in `[-1, 1]` from a seeded ChaCha stream.
    pub fn random(layout: Layout, dims: [usize; 4], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
        Self { layout, dims, data }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, i0: usize, i1: usize, i2: usize, i3: usize) -> usize {
        let [_, d1, d2, d3] = self.dims;
        ((i0 * d1 + i1) * d2 + i2) * d3 + i3
    }

    #[inline]
    pub fn get(&self, i0: usize, i1: usize, i2: usize, i3: usize) -> f32 {
        self.data[self.offset(i0, i1, i2, i3)]
    }

    #[inline]
    pub fn set(&mut self, i0: usize, i1: usize, i2: usize, i3: usize, v: f32) {
        let o = self.offset(i0, i1, i2, i3);
        self.data[o] = v;
    }

    pub fn check_shape(&self, layout: Layout, shape: &ConvShape) -> Result<(), ConvError> {
        let expected = layout.dims_for(shape);
        if self.layout != layout || self.dims != expected {
            return Err(ConvError::ShapeMismatch {
                layout,
                expected,
                got: self.dims,
            });
        }
        Ok(())
    }

    fn matrix_range(&self, h: usize, w: usize) -> Option<std::ops::Range<usize>> {
        let [d0, d1, d2, d3] = self.dims;
        if h >= d0 || w >= d1 {
            return None;
        }
        let start = (h * d1 + w) * d2 * d3;
        Some(start..start + d2 * d3)
    }

    /// The matrix at spatial coordinate `(h, w)`; `None` outside the tensor
    /// (padding positions have no view).
    pub fn view(&self, h: usize, w: usize) -> Option<MatrixView<'_>> {
        let range = self.matrix_range(h, w)?;
        Some(MatrixView {
            data: &self.data[range],
            rows: self.dims[2],
            cols: self.dims[3],
        })
    }

    pub fn view_mut(&mut self, h: usize, w: usize) -> Option<MatrixViewMut<'_>> {
        let range = self.matrix_range(h, w)?;
        let (rows, cols) = (self.dims[2], self.dims[3]);
        Some(MatrixViewMut {
            data: &mut self.data[range],
            rows,
            cols,
        })
    }
}

/// Zero-copy row-major window over the trailing two dimensions of a tensor.
#[derive(Debug, Clone, Copy)]
pub struct MatrixView<'a> {
    data: &'a [f32],
    rows: usize,
    cols: usize,
}

impl<'a> MatrixView<'a> {
    pub fn new(data: &'a [f32], rows: usize, cols: usize) -> Result<Self, ConvError> {
        if data.len() != rows * cols {
            return Err(ConvError::DimMismatch(format!(
                "{} values for a {rows}x{cols} view",
                data.len()
            )));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &'a [f32] {
        self.data
    }
}

#[derive(Debug)]
pub struct MatrixViewMut<'a> {
    data: &'a mut [f32],
    rows: usize,
    cols: usize,
}

impl<'a> MatrixViewMut<'a> {
    pub fn new(data: &'a mut [f32], rows: usize, cols: usize) -> Result<Self, ConvError> {
        if data.len() != rows * cols {
            return Err(ConvError::DimMismatch(format!(
                "{} values for a {rows}x{cols} view",
                data.len()
            )));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }
}
