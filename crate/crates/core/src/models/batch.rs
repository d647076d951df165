use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// A view of some rows of a feature matrix and their labels.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    features: &'a Matrix,
    labels: &'a [usize],
    rows: Cow<'a, [usize]>,
}

impl<'a> Batch<'a> {
    /// Checked constructor: rows must be non-empty and in bounds.
    pub fn new(features: &'a Matrix, labels: &'a [usize], rows: Cow<'a, [usize]>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                got: labels.len(),
            });
        }
        if rows.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if let Some(&r) = rows.iter().find(|&&r| r >= labels.len()) {
            return Err(Error::invalid(format!(
                "row {r} out of bounds for {} rows",
                labels.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            rows,
        })
    }

    /// Every row of the matrix.
    pub fn full(features: &'a Matrix, labels: &'a [usize]) -> Result<Self> {
        Self::new(features, labels, Cow::Owned((0..labels.len()).collect()))
    }

    pub(crate) fn from_rows(features: &'a Matrix, labels: &'a [usize], rows: &'a [usize]) -> Self {
        Self {
            features,
            labels,
            rows: Cow::Borrowed(rows),
        }
    }

    pub(crate) fn with_owned_rows(features: &'a Matrix, labels: &'a [usize], rows: Vec<usize>) -> Self {
        Self {
            features,
            labels,
            rows: Cow::Owned(rows),
        }
    }

    pub fn features(&self) -> &Matrix {
        self.features
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.rows
            .iter()
            .map(|&r| (self.features.row(r), self.labels[r]))
    }

    pub(crate) fn iter_labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.iter().map(|&r| self.labels[r])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_checked() {
        let x = Matrix::zeros(3, 2);
        let y = [0, 1, 0];
        assert!(Batch::new(&x, &y, Cow::Owned(vec![])).is_err());
        assert!(Batch::new(&x, &y, Cow::Owned(vec![3])).is_err());
        let b = Batch::new(&x, &y, Cow::Owned(vec![2, 1])).unwrap();
        assert_eq!(b.iter_labels().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(Batch::full(&x, &y).unwrap().len(), 3);
    }
}
