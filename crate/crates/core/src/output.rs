//! Dense network predictions at the output stride.

use ndarray::{Array3, ArrayView2, Axis};

/// Score and geometry grids for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// `(rows, cols, 1)`, confidence in `[0, 1]`.
    pub score: Array3<f64>,
    /// `(rows, cols, 5)`: top, right, bottom, left distances in input
    /// pixels, then the angle in radians.
    pub geometry: Array3<f64>,
    pub stride: usize,
}

impl ModelOutput {
    pub fn zeros(rows: usize, cols: usize, stride: usize) -> Self {
        Self {
            score: Array3::zeros((rows, cols, 1)),
            geometry: Array3::zeros((rows, cols, 5)),
            stride,
        }
    }

    /// `(rows, cols)`.
    pub fn dim(&self) -> (usize, usize) {
        let (r, c, _) = self.score.dim();
        (r, c)
    }

    pub fn score_map(&self) -> ArrayView2<'_, f64> {
        self.score.index_axis(Axis(2), 0)
    }
}
