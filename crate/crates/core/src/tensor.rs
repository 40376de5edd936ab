//! Dense row-major matrices of `f64`.
//!
//! Model parameters are kept f32-representable (every write rounds through
//! `f32`) so checkpoints stored as little-endian float32 round-trip without
//! loss; activations and gradients use the full f64 width.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{self, Rng};

/// A `rows x cols` matrix. Vectors are `1 x n`, scalars `1 x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor shape/data mismatch");
        Tensor { rows, cols, data }
    }

    /// Gaussian init with the given std, rounded to f32 precision.
    pub fn randn(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| (rng::gaussian(rng) * std) as f32 as f64)
            .collect();
        Tensor { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rounds every entry to the nearest f32 value.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }

    /// Bitwise equality, distinguishing e.g. -0.0 from 0.0.
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        self.same_shape(other)
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn from_f32_slice(rows: usize, cols: usize, data: &[f32]) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor shape/data mismatch");
        Tensor {
            rows,
            cols,
            data: data.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// `c = a * b` for `a: [m,k]`, `b: [k,n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.rows, "matmul inner dimension mismatch");
    let mut c = Tensor::zeros(a.rows, b.cols);
    matmul_into(&mut c.data, &a.data, &b.data, a.rows, a.cols, b.cols);
    c
}

/// `c += a * b`, all row-major flat slices.
pub fn matmul_into(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c += a * b^T` for `a: [m,k]`, `b: [n,k]`, `c: [m,n]`.
pub fn matmul_nt_into(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *cv += acc;
        }
    }
}

/// `c += a^T * b` for `a: [k,m]`, `b: [k,n]`, `c: [m,n]`.
pub fn matmul_tn_into(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_hand_example() {
        let a = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = matmul(&a, &b);
        assert_eq!(c.data, vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_variants_agree_with_plain_matmul() {
        let mut rng = crate::rng::substream(1, &[]);
        let a = Tensor::randn(3, 4, 1.0, &mut rng);
        let b = Tensor::randn(5, 4, 1.0, &mut rng);
        // a * b^T via matmul_nt vs. materialized transpose.
        let mut c1 = vec![0.0; 3 * 5];
        matmul_nt_into(&mut c1, &a.data, &b.data, 3, 4, 5);
        let mut bt = Tensor::zeros(4, 5);
        for i in 0..5 {
            for j in 0..4 {
                bt.set(j, i, b.get(i, j));
            }
        }
        let c2 = matmul(&a, &bt);
        for (x, y) in c1.iter().zip(&c2.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn randn_values_are_f32_representable() {
        let mut rng = crate::rng::substream(3, &[]);
        let t = Tensor::randn(4, 4, 0.3, &mut rng);
        for &v in &t.data {
            assert_eq!(v, v as f32 as f64);
        }
    }

    #[test]
    fn bits_eq_distinguishes_signed_zero() {
        let a = Tensor::from_vec(1, 1, vec![0.0]);
        let b = Tensor::from_vec(1, 1, vec![-0.0]);
        assert!(!a.bits_eq(&b));
        assert!(a.bits_eq(&a.clone()));
    }
}
