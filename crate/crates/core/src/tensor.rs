//! Dense row-major `f64` tensors.
//!
//! A [`Tensor`] always has at least one axis and no zero extents; the data
//! length is the product of the extents. Images and feature maps use the
//! `[H, W, C]` layout, sequences `[L, C]`, and complex planes carry a trailing
//! axis of length 2 holding `(re, im)`.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::shape("tensor must have at least one axis"));
    }
    if shape.contains(&0) {
        return Err(Error::shape(format!("degenerate shape {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        })
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        Self::from_fn(shape, |_| lo + (hi - lo) * rng.random::<f64>())
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Extents as `(H, W, C)`; rejects anything that is not rank 3.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::shape(format!("expected [H, W, C], got {:?}", self.shape))),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [a, b] => Ok((a, b)),
            _ => Err(Error::shape(format!("expected rank 2, got {:?}", self.shape))),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn at3(&self, h: usize, w: usize, c: usize) -> f64 {
        let (_, wd, cd) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(h * wd + w) * cd + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_same_shape(other, "zip")?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn expect_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!("{what}: {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|x| x * k)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Compensated (Neumaier) sum of all elements.
    pub fn sum(&self) -> f64 {
        neumaier_sum(self.data.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest absolute element-wise difference. Shapes must match.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        self.map(|x| x.clamp(lo, hi))
    }
}

/// Neumaier-compensated summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        assert_eq!(neumaier_sum([1e16, 1.0, -1e16]), 1.0);
        assert_eq!(neumaier_sum([0.1; 10]), 1.0);
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(Tensor::zeros(&[]).is_err());
        assert!(Tensor::zeros(&[3, 0, 2]).is_err());
        assert!(Tensor::new(&[2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn reshape_keeps_data() {
        let t = Tensor::from_fn(&[2, 3], |i| i as f64).unwrap();
        let r = t.reshape(&[3, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn at3_is_row_major() {
        let t = Tensor::from_fn(&[2, 3, 4], |i| i as f64).unwrap();
        assert_eq!(t.at3(1, 2, 3), 23.0);
        assert_eq!(t.at3(0, 1, 0), 4.0);
    }
}
