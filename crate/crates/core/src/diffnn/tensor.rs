use serde::{Deserialize, Serialize};

use super::DiffError;

/// Dense row-major array of `f64`.
///
/// Tape operations treat every tensor as a matrix: a 2-D shape is
/// `[rows, cols]`, a 1-D shape `[n]` is a single row and a 0-D shape is a
/// 1x1 scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, DiffError> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(DiffError::ShapeMismatch {
                op: "tensor",
                left: shape,
                right: vec![values.len()],
            });
        }
        Ok(Self { shape, values })
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, DiffError> {
        Self::new(vec![rows, cols], values)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, values: vec![0.0; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1, 1], values: vec![value] }
    }

    /// Column vector `[n, 1]`.
    pub fn column(values: Vec<f64>) -> Self {
        Self { shape: vec![values.len(), 1], values }
    }

    /// Stacks equally sized rows into a `[rows.len(), cols]` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, DiffError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(DiffError::ShapeMismatch {
                    op: "from_rows",
                    left: vec![cols],
                    right: vec![row.len()],
                });
            }
            values.extend_from_slice(row);
        }
        Ok(Self { shape: vec![rows.len(), cols], values })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            n => self.shape[n - 1],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.values.len() == 1).then(|| self.values[0])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn same_shape_as(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { shape: self.shape.clone(), values }
    }
}

/// `out[r, :] = x[r, :] . w + b` for `x: [rows, inner]`, `w: [inner, cols]`.
pub(crate) fn affine(x: &[f64], w: &[f64], b: Option<&[f64]>, rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let out_len = rows * cols;
    let mut out = match b {
        Some(b) => {
            let mut v = Vec::with_capacity(out_len);
            (0..rows).for_each(|_| v.extend_from_slice(b));
            v
        }
        None => vec![0.0; out_len],
    };
    // SAFETY: slices are row-major with the stated dimensions (checked by callers).
    unsafe {
        matrixmultiply::dgemm(
            rows, inner, cols, 1.0,
            x.as_ptr(), inner as isize, 1,
            w.as_ptr(), cols as isize, 1,
            1.0, out.as_mut_ptr(), cols as isize, 1,
        );
    }
    out
}

/// `gx += g * w^T` for `g: [rows, cols]`, `w: [inner, cols]`.
pub(crate) fn affine_grad_input(g: &[f64], w: &[f64], gx: &mut [f64], rows: usize, inner: usize, cols: usize) {
    debug_assert!(g.len() == rows * cols && w.len() == inner * cols && gx.len() == rows * inner);
    // SAFETY: lengths asserted above; w^T is read through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            rows, cols, inner, 1.0,
            g.as_ptr(), cols as isize, 1,
            w.as_ptr(), 1, cols as isize,
            1.0, gx.as_mut_ptr(), inner as isize, 1,
        );
    }
}

/// `gw += x^T * g` for `x: [rows, inner]`, `g: [rows, cols]`.
pub(crate) fn affine_grad_weight(x: &[f64], g: &[f64], gw: &mut [f64], rows: usize, inner: usize, cols: usize) {
    debug_assert!(x.len() == rows * inner && g.len() == rows * cols && gw.len() == inner * cols);
    // SAFETY: lengths asserted above; x^T is read through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            inner, rows, cols, 1.0,
            x.as_ptr(), 1, inner as isize,
            g.as_ptr(), cols as isize, 1,
            1.0, gw.as_mut_ptr(), cols as isize, 1,
        );
    }
}
