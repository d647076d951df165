use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::rng::RngStream;

/// Flat parameter vector shared by every model family.
///
/// Entries are finite after every public operation; constructors and the
/// arithmetic helpers reject NaN and infinities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite("ParamVector::new"))
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    /// `self += a * x`, in place.
    pub fn axpy_assign(&mut self, a: f64, x: &ParamVector) -> Result<()> {
        check_len(self.len(), x.len())?;
        for (y, &xv) in self.0.iter_mut().zip(&x.0) {
            *y += a * xv;
        }
        self.ensure_finite("axpy_assign")
    }

    pub fn scale(&self, a: f64) -> Result<ParamVector> {
        let out = ParamVector(self.0.iter().map(|v| a * v).collect());
        out.ensure_finite("scale")?;
        Ok(out)
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        check_len(self.len(), other.len())?;
        let out = ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect());
        out.ensure_finite("sub")?;
        Ok(out)
    }

    pub fn dist_sq(&self, other: &ParamVector) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(op))
        }
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.0
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// `a * x + y`.
pub fn axpy(a: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    if !a.is_finite() {
        return Err(Error::invalid("axpy scale must be finite"));
    }
    let mut out = y.clone();
    out.axpy_assign(a, x)?;
    Ok(out)
}

pub fn dot(x: &ParamVector, y: &ParamVector) -> Result<f64> {
    check_len(x.len(), y.len())?;
    Ok(x.0.iter().zip(&y.0).map(|(a, b)| a * b).sum())
}

/// Convex mixture `alpha * v + (1 - alpha) * w`.
pub fn mix(alpha: f64, v: &ParamVector, w: &ParamVector) -> Result<ParamVector> {
    check_len(v.len(), w.len())?;
    let beta = 1.0 - alpha;
    let out = ParamVector(
        v.0.iter()
            .zip(&w.0)
            .map(|(a, b)| alpha * a + beta * b)
            .collect(),
    );
    out.ensure_finite("mix")?;
    Ok(out)
}

/// Mean of a non-empty list of vectors, summed in the order given.
pub fn mean<'a, I>(vectors: I) -> Result<ParamVector>
where
    I: IntoIterator<Item = &'a ParamVector>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(Error::EmptyDataset)?;
    let mut acc = first.0.clone();
    let mut count = 1usize;
    for v in iter {
        check_len(acc.len(), v.len())?;
        for (a, b) in acc.iter_mut().zip(&v.0) {
            *a += b;
        }
        count += 1;
    }
    let inv = 1.0 / count as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    let out = ParamVector(acc);
    out.ensure_finite("mean")?;
    Ok(out)
}

/// Mean of a Gaussian draw: one value broadcast to every entry, or per-entry.
#[derive(Debug, Clone, Copy)]
pub enum Mean<'a> {
    Scalar(f64),
    Vector(&'a [f64]),
}

/// i.i.d. normal draws `mean + stddev * z`. With `stddev == 0` the mean is
/// returned exactly and the stream is not advanced.
pub fn gaussian_vector(
    rng: &mut RngStream,
    len: usize,
    mean: Mean<'_>,
    stddev: f64,
) -> Result<ParamVector> {
    if !(stddev >= 0.0) || !stddev.is_finite() {
        return Err(Error::invalid(format!("stddev must be >= 0, got {stddev}")));
    }
    if let Mean::Vector(m) = mean {
        check_len(len, m.len())?;
    }
    let centre = |k: usize| match mean {
        Mean::Scalar(m) => m,
        Mean::Vector(m) => m[k],
    };
    let values = if stddev == 0.0 {
        (0..len).map(centre).collect()
    } else {
        (0..len)
            .map(|k| centre(k) + stddev * rng.standard_normal())
            .collect()
    };
    ParamVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn axpy_examples() {
        assert_eq!(axpy(0.0, &pv(&[9.0, -3.0]), &pv(&[1.0, 2.0])).unwrap(), pv(&[1.0, 2.0]));
        assert_eq!(axpy(1.0, &pv(&[1.0, 1.0]), &pv(&[1.0, 1.0])).unwrap(), pv(&[2.0, 2.0]));
        assert_eq!(axpy(-0.5, &pv(&[2.0, 4.0]), &pv(&[1.0, 1.0])).unwrap(), pv(&[0.0, -1.0]));
    }

    #[test]
    fn axpy_dimension_mismatch() {
        let err = axpy(1.0, &pv(&[1.0]), &pv(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn axpy_rejects_non_finite_scale() {
        assert!(axpy(f64::NAN, &pv(&[1.0]), &pv(&[1.0])).is_err());
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&pv(&[0.0, 0.0]), &pv(&[3.0, 4.0])).unwrap(), 0.0);
        assert_eq!(dot(&pv(&[1.0, 2.0]), &pv(&[3.0, 4.0])).unwrap(), 11.0);
        let x = pv(&[3.0, 4.0]);
        assert_eq!(dot(&x, &x).unwrap(), 25.0);
        assert!(dot(&pv(&[1.0]), &x).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(ParamVector::new(vec![1.0, f64::INFINITY]).is_err());
        let mut big = pv(&[f64::MAX]);
        assert!(big.axpy_assign(2.0, &pv(&[f64::MAX])).is_err());
    }

    #[test]
    fn gaussian_degenerate_is_exact() {
        let mut rng = RngStream::new(1, 1);
        let before = rng.word_pos();
        let v = gaussian_vector(&mut rng, 3, Mean::Scalar(0.0), 0.0).unwrap();
        assert_eq!(v, pv(&[0.0, 0.0, 0.0]));
        assert_eq!(rng.word_pos(), before);
        let m = [1.5, -2.0];
        let v = gaussian_vector(&mut rng, 2, Mean::Vector(&m), 0.0).unwrap();
        assert_eq!(v.as_slice(), &m);
    }

    #[test]
    fn gaussian_deterministic() {
        let a = gaussian_vector(&mut RngStream::new(5, 9), 16, Mean::Scalar(0.3), 2.0).unwrap();
        let b = gaussian_vector(&mut RngStream::new(5, 9), 16, Mean::Scalar(0.3), 2.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_sample_mean() {
        let v = gaussian_vector(&mut RngStream::new(42, 0), 100_000, Mean::Scalar(1.0), 1.0)
            .unwrap();
        let m = v.as_slice().iter().sum::<f64>() / v.len() as f64;
        // standard error is 1/sqrt(1e5) ~ 0.0032
        assert!((m - 1.0).abs() < 0.02, "sample mean {m}");
    }

    #[test]
    fn gaussian_negative_stddev() {
        assert!(gaussian_vector(&mut RngStream::new(0, 0), 2, Mean::Scalar(0.0), -1.0).is_err());
    }

    #[test]
    fn mean_fixed_order() {
        let m = mean([&pv(&[0.0]), &pv(&[2.0])]).unwrap();
        assert_eq!(m, pv(&[1.0]));
        assert!(mean(std::iter::empty::<&ParamVector>()).is_err());
    }

    proptest! {
        #[test]
        fn dot_self_nonnegative(v in prop::collection::vec(-1e3f64..1e3, 0..20)) {
            let x = pv(&v);
            let d = dot(&x, &x).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d == 0.0, v.iter().all(|&a| a == 0.0));
        }

        #[test]
        fn mix_endpoints(v in prop::collection::vec(-1e3f64..1e3, 1..10)) {
            let x = pv(&v);
            let w = x.scale(-2.0).unwrap();
            prop_assert_eq!(mix(1.0, &x, &w).unwrap(), x.clone());
            prop_assert_eq!(mix(0.0, &x, &w).unwrap(), w);
        }
    }
}
