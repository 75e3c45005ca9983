use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense square complex matrix that remembers whether it is complex symmetric.
///
/// The flag is set only when `m[(i, j)] == m[(j, i)]` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    data: Array2<Complex64>,
    symmetric: bool,
}

impl ComplexMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            data: Array2::zeros((n, n)),
            symmetric: true,
        }
    }

    pub fn from_array(data: Array2<Complex64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c {
            return Err(Error::Shape(format!("expected a square matrix, got {r}x{c}")));
        }
        let symmetric = max_asymmetry(&data) == 0.0;
        Ok(Self { data, symmetric })
    }

    /// Mirrors the upper triangle into the lower one, producing an exactly symmetric matrix.
    pub fn symmetrized_from_upper(mut data: Array2<Complex64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c {
            return Err(Error::Shape(format!("expected a square matrix, got {r}x{c}")));
        }
        for i in 0..r {
            for j in 0..i {
                data[(i, j)] = data[(j, i)];
            }
        }
        Ok(Self {
            data,
            symmetric: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn as_array(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[(row, col)]
    }

    pub fn max_asymmetry(&self) -> f64 {
        max_asymmetry(&self.data)
    }
}

fn max_asymmetry(m: &Array2<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).norm());
        }
    }
    worst
}

impl std::ops::Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            data: &self.data + &rhs.data,
            symmetric: self.symmetric && rhs.symmetric,
        }
    }
}
