//! Minimal dense row-major tensor with the handful of operations the MPS code
//! needs: permutation, reshaping and pairwise contraction through a matrix
//! product.

use nalgebra::{ComplexField, DMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

impl<T> Tensor<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); len],
        }
    }

    pub fn from_data(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (k, (&i, &n)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(i < n, "index {i} out of range on axis {k}");
            off = off * n + i;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn get_mut(&mut self, idx: &[usize]) -> &mut T {
        let off = self.offset(idx);
        &mut self.data[off]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len(), "reshape size mismatch");
        self.shape = shape;
        self
    }

    /// Reorders axes so that output axis `k` is input axis `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.shape.len());
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return self.clone();
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let old_strides = strides(&self.shape);
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; new_shape.len()];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            out.push(self.data[src]);
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                src += src_strides[k];
                if idx[k] < new_shape[k] {
                    break;
                }
                src -= src_strides[k] * new_shape[k];
                idx[k] = 0;
            }
        }
        Tensor {
            shape: new_shape,
            data: out,
        }
    }

    /// Row-major data viewed as a `rows x (len / rows)` matrix.
    pub fn to_matrix(&self, rows: usize) -> DMatrix<T> {
        let cols = self.data.len() / rows;
        DMatrix::from_row_slice(rows, cols, &self.data)
    }

    pub fn from_matrix(m: &DMatrix<T>, shape: Vec<usize>) -> Self {
        let (r, c) = m.shape();
        assert_eq!(r * c, shape.iter().product::<usize>());
        // nalgebra is column-major; transpose to get row-major storage
        let data = m.transpose().as_slice().to_vec();
        Tensor { shape, data }
    }

    /// Contracts axes `ax_a` of `self` with axes `ax_b` of `other`; free axes
    /// of `self` come first in the result, then those of `other`.
    pub fn tensordot(&self, other: &Tensor<T>, ax_a: &[usize], ax_b: &[usize]) -> Tensor<T> {
        assert_eq!(ax_a.len(), ax_b.len());
        for (&i, &j) in ax_a.iter().zip(ax_b) {
            assert_eq!(self.shape[i], other.shape[j], "contracted dimensions differ");
        }
        let free_a: Vec<usize> = (0..self.shape.len()).filter(|k| !ax_a.contains(k)).collect();
        let free_b: Vec<usize> = (0..other.shape.len()).filter(|k| !ax_b.contains(k)).collect();
        let perm_a: Vec<usize> = free_a.iter().chain(ax_a).copied().collect();
        let perm_b: Vec<usize> = ax_b.iter().chain(&free_b).copied().collect();
        let m: usize = free_a.iter().map(|&k| self.shape[k]).product();
        let kk: usize = ax_a.iter().map(|&k| self.shape[k]).product();
        let n: usize = free_b.iter().map(|&k| other.shape[k]).product();
        let a = self.permute(&perm_a);
        let b = other.permute(&perm_b);
        // row-major (m x k) is column-major (k x m); C^T = B^T A^T
        let at = DMatrix::from_column_slice(kk, m, &a.data);
        let bt = DMatrix::from_column_slice(n, kk, &b.data);
        let ct = bt * at;
        let shape: Vec<usize> = free_a
            .iter()
            .map(|&k| self.shape[k])
            .chain(free_b.iter().map(|&k| other.shape[k]))
            .collect();
        Tensor {
            shape,
            data: ct.as_slice().to_vec(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x.modulus_squared()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn map<U, F>(&self, f: F) -> Tensor<U>
    where
        U: ComplexField<RealField = f64> + Copy,
        F: Fn(T) -> U,
    {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        self.map(|x| x.conjugate())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: Vec<usize>) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_data(shape, (0..n).map(|k| k as f64).collect())
    }

    #[test]
    fn permute_transposes() {
        let t = seq(vec![2, 3]);
        let p = t.permute(&[1, 0]);
        assert_eq!(p.shape(), &[3, 2]);
        assert_eq!(p.get(&[2, 1]), t.get(&[1, 2]));
    }

    #[test]
    fn permute_rank3() {
        let t = seq(vec![2, 3, 4]);
        let p = t.permute(&[2, 0, 1]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(p.get(&[k, i, j]), t.get(&[i, j, k]));
                }
            }
        }
    }

    #[test]
    fn tensordot_matches_loops() {
        let a = seq(vec![2, 3, 4]);
        let b = seq(vec![4, 3, 5]);
        let c = a.tensordot(&b, &[1, 2], &[1, 0]);
        assert_eq!(c.shape(), &[2, 5]);
        for i in 0..2 {
            for l in 0..5 {
                let mut s = 0.0;
                for j in 0..3 {
                    for k in 0..4 {
                        s += a.get(&[i, j, k]) * b.get(&[k, j, l]);
                    }
                }
                assert_eq!(c.get(&[i, l]), s);
            }
        }
    }

    #[test]
    fn matrix_round_trip() {
        let t = seq(vec![2, 2, 3]);
        let m = t.to_matrix(4);
        assert_eq!(m[(3, 1)], t.get(&[1, 1, 1]));
        assert_eq!(Tensor::from_matrix(&m, vec![2, 2, 3]), t);
    }
}
