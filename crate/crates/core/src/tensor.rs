//! Dense row-major tensors with pairwise contraction.
//!
//! A [`Tensor`] is a flat buffer plus a shape. Contraction permutes both
//! operands so that the summed axes are adjacent, views them as matrices and
//! multiplies. A full contraction (no free axes left) yields a tensor of
//! shape `[1]`, since every tensor carries at least one axis.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Element type of a [`Tensor`].
pub trait Scalar: Copy + Debug + PartialEq + Add<Output = Self> + Mul<Output = Self> + AddAssign + Send + Sync {
    fn zero() -> Self;
    fn one() -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub type DenseTensor = Tensor<f64>;
pub type ComplexTensor = Tensor<Complex64>;

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::dim("tensor rank must be at least 1"));
    }
    if shape.iter().any(|&e| e == 0) {
        return Err(Error::dim(format!("zero extent in shape {shape:?}")));
    }
    Ok(shape.iter().product())
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = check_shape(&shape)?;
        Ok(Self {
            shape,
            data: vec![T::zero(); n],
        })
    }

    /// Square identity matrix of size `n`.
    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(vec![n, n])?;
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        Ok(t)
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::Index(format!(
                "index of rank {} into tensor of rank {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut off = 0;
        for (axis, (&i, &e)) in index.iter().zip(&self.shape).enumerate() {
            if i >= e {
                return Err(Error::Index(format!("index {i} out of range on axis {axis} (extent {e})")));
            }
            off = off * e + i;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: T) -> Result<()> {
        let off = self.offset(index)?;
        self.data[off] = value;
        Ok(())
    }

    /// Same flat data under a new shape.
    pub fn reshape(&self, new_shape: Vec<usize>) -> Result<Self> {
        let n = check_shape(&new_shape)?;
        if n != self.data.len() {
            return Err(Error::dim(format!(
                "cannot reshape {:?} ({} elements) into {new_shape:?} ({n} elements)",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Self {
            shape: new_shape,
            data: self.data.clone(),
        })
    }

    /// Axis permutation: axis `k` of the result is axis `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        if perm.len() != r {
            return Err(Error::Index(format!("permutation of length {} for rank {r}", perm.len())));
        }
        let mut seen = vec![false; r];
        for &p in perm {
            if p >= r || seen[p] {
                return Err(Error::Index(format!("invalid permutation {perm:?}")));
            }
            seen[p] = true;
        }
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let old_strides = strides(&self.shape);
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; r];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            out.push(self.data[src]);
            // odometer increment over the new shape
            for ax in (0..r).rev() {
                idx[ax] += 1;
                src += src_strides[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                src -= src_strides[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self {
            shape: new_shape,
            data: out,
        })
    }

    pub fn scale(&self, factor: T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| x * factor).collect(),
        }
    }

    /// Outer product; the result's axes are those of `self` followed by those of `other`.
    pub fn outer(&self, other: &Self) -> Self {
        let mut shape = self.shape.clone();
        shape.extend_from_slice(&other.shape);
        let mut data = Vec::with_capacity(self.data.len() * other.data.len());
        for &a in &self.data {
            data.extend(other.data.iter().map(|&b| a * b));
        }
        Self { shape, data }
    }

    /// Sum over the paired axes `(axis_of_self, axis_of_other)`.
    ///
    /// Free axes of `self` come first in the result, followed by the free
    /// axes of `other`, each in their original order.
    pub fn contract(&self, other: &Self, axes: &[(usize, usize)]) -> Result<Self> {
        let (ra, rb) = (self.rank(), other.rank());
        let mut used_a = vec![false; ra];
        let mut used_b = vec![false; rb];
        for &(i, j) in axes {
            if i >= ra {
                return Err(Error::Index(format!("axis {i} out of range for rank {ra}")));
            }
            if j >= rb {
                return Err(Error::Index(format!("axis {j} out of range for rank {rb}")));
            }
            if used_a[i] || used_b[j] {
                return Err(Error::Index(format!("axis pair ({i}, {j}) reuses an axis")));
            }
            if self.shape[i] != other.shape[j] {
                return Err(Error::dim(format!(
                    "paired axes ({i}, {j}) have extents {} and {}",
                    self.shape[i], other.shape[j]
                )));
            }
            used_a[i] = true;
            used_b[j] = true;
        }

        let free_a: Vec<usize> = (0..ra).filter(|&i| !used_a[i]).collect();
        let free_b: Vec<usize> = (0..rb).filter(|&j| !used_b[j]).collect();

        let perm_a: Vec<usize> = free_a.iter().copied().chain(axes.iter().map(|p| p.0)).collect();
        let perm_b: Vec<usize> = axes.iter().map(|p| p.1).chain(free_b.iter().copied()).collect();
        let a = self.permute(&perm_a)?;
        let b = other.permute(&perm_b)?;

        let m: usize = free_a.iter().map(|&i| self.shape[i]).product();
        let k: usize = axes.iter().map(|p| self.shape[p.0]).product();
        let n: usize = free_b.iter().map(|&j| other.shape[j]).product();

        let data = matmul(&a.data, &b.data, m, k, n);
        let mut shape: Vec<usize> = free_a
            .iter()
            .map(|&i| self.shape[i])
            .chain(free_b.iter().map(|&j| other.shape[j]))
            .collect();
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(Self { shape, data })
    }
}

impl DenseTensor {
    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Row-major `(m×k)·(k×n)`.
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> DenseTensor {
        DenseTensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn dot_product() {
        let r = t(&[2], &[1.0, 2.0]).contract(&t(&[2], &[3.0, 4.0]), &[(0, 0)]).unwrap();
        assert_eq!(r.shape(), &[1]);
        assert_eq!(r.data(), &[11.0]);
    }

    #[test]
    fn identity_action() {
        let id = DenseTensor::identity(2).unwrap();
        let r = id.contract(&t(&[2], &[5.0, 7.0]), &[(1, 0)]).unwrap();
        assert_eq!(r.data(), &[5.0, 7.0]);
    }

    #[test]
    fn rank3_against_triple_loop() {
        let mut a = DenseTensor::zeros(vec![2, 2, 2]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    a.set(&[i, j, k], (i + j + k) as f64).unwrap();
                }
            }
        }
        let r = a.contract(&t(&[2], &[1.0, 1.0]), &[(2, 0)]).unwrap();
        assert_eq!(r.shape(), &[2, 2]);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(r.get(&[i, j]).unwrap(), (2 * (i + j) + 1) as f64);
            }
        }
    }

    #[test]
    fn contract_errors() {
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2], &[0.0; 2]);
        assert!(matches!(a.contract(&b, &[(1, 0)]), Err(Error::Dimension(_))));
        assert!(matches!(a.contract(&b, &[(2, 0)]), Err(Error::Index(_))));
        assert!(matches!(a.contract(&b, &[(0, 1)]), Err(Error::Index(_))));
        let c = t(&[2, 2], &[0.0; 4]);
        assert!(matches!(c.contract(&c, &[(0, 0), (0, 1)]), Err(Error::Index(_))));
    }

    #[test]
    fn reshape_cases() {
        let v = t(&[4], &[1.0, 2.0, 3.0, 4.0]);
        let m = v.reshape(vec![2, 2]).unwrap();
        assert_eq!(m.get(&[0, 1]).unwrap(), 2.0);
        assert_eq!(m.get(&[1, 0]).unwrap(), 3.0);
        assert_eq!(m.reshape(vec![4]).unwrap(), v);
        let r = t(&[2, 3], &[0.0; 6]).reshape(vec![4]);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn invalid_shapes() {
        assert!(DenseTensor::from_vec(vec![], vec![]).is_err());
        assert!(DenseTensor::from_vec(vec![0, 2], vec![]).is_err());
        assert!(DenseTensor::from_vec(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn permute_transposes() {
        let m = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let tr = m.permute(&[1, 0]).unwrap();
        assert_eq!(tr.shape(), &[3, 2]);
        assert_eq!(tr.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn complex_contraction() {
        let i = Complex64::new(0.0, 1.0);
        let a = ComplexTensor::from_vec(vec![2], vec![i, Complex64::one()]).unwrap();
        let r = a.contract(&a, &[(0, 0)]).unwrap();
        assert_eq!(r.data()[0], Complex64::new(0.0, 0.0));
    }
}
