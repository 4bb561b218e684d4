use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probability mass function over a finite set of categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pmf<T> {
    values: Vec<T>,
}

impl<T: Scalar> Pmf<T> {
    /// Validates nonnegativity and unit mass.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("pmf has no categories"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= T::zero())) {
            return Err(Error::Normalization(format!("entry {i} is {v}")));
        }
        let total: T = values.iter().copied().sum();
        if (total - T::one()).abs() > T::mass_tolerance() {
            return Err(Error::Normalization(format!("mass sums to {total}")));
        }
        Ok(Self { values })
    }

    /// Rescales a nonnegative vector to unit mass.
    pub fn normalized(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= T::zero())) {
            return Err(Error::Normalization("negative entry".into()));
        }
        let total: T = values.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::EmptyCounts);
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform pmf over zero categories");
        let v = T::one() / T::from_usize(n).unwrap();
        Self { values: vec![v; n] }
    }

    pub fn point_mass(n: usize, index: usize) -> Self {
        assert!(index < n);
        let mut values = vec![T::zero(); n];
        values[index] = T::one();
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, i: usize) -> T {
        self.values[i]
    }

    pub fn dot(&self, other: &[T]) -> T {
        self.values.iter().zip(other).map(|(&a, &b)| a * b).sum()
    }

    /// Floors every entry at `eps` and renormalizes.
    pub fn smoothed(&self, eps: T) -> Self {
        let floored: Vec<T> = self.values.iter().map(|&v| v.max(eps)).collect();
        Self::normalized(floored).expect("floored vector has positive mass")
    }

    /// Largest absolute componentwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Total-variation distance, `½ Σ |p_i − q_i|`.
    pub fn total_variation(&self, other: &Self) -> T {
        let s: T = self.values.iter().zip(&other.values).map(|(&a, &b)| (a - b).abs()).sum();
        s / T::lit(2.0)
    }
}

/// Maximum-likelihood estimate `m_i / m` from category counts.
pub fn ml_estimate<T: Scalar>(counts: &[u64]) -> Result<Pmf<T>> {
    if counts.is_empty() {
        return Err(Error::Empty("no categories"));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    let m = T::from_u64(total).unwrap();
    Ok(Pmf {
        values: counts.iter().map(|&c| T::from_u64(c).unwrap() / m).collect(),
    })
}
