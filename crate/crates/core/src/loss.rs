//! Masked mean squared error over a batch of rating rows.
//!
//! The loss is normalized by the number of observed entries in the whole
//! batch, so the square root of the loss over any evaluation set is exactly
//! the RMSE over its ratings.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::real::Real;

/// Dense rating rows plus a 0/1 mask of observed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub ratings: Array2<T>,
    pub mask: Array2<T>,
    /// Dataset user ids of the rows; empty for re-fed batches.
    pub users: Vec<u32>,
}

impl<T: Real> Batch<T> {
    /// Sparse-origin batch: the mask marks nonzero ratings.
    pub fn from_ratings(ratings: Array2<T>, users: Vec<u32>) -> Result<Self> {
        let mask = ratings.mapv(|v| if v.is_zero() { T::zero() } else { T::one() });
        for (i, row) in mask.rows().into_iter().enumerate() {
            if row.iter().all(|v| v.is_zero()) {
                return Err(Error::InvalidArgument(format!("batch row {i} has no ratings")));
            }
        }
        Ok(Batch { ratings, mask, users })
    }

    /// Fully observed batch (all-ones mask), as used when re-feeding dense outputs.
    pub fn dense(ratings: Array2<T>) -> Self {
        let mask = Array2::ones(ratings.raw_dim());
        Batch {
            ratings,
            mask,
            users: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ratings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.nrows() == 0
    }

    pub fn observed(&self) -> usize {
        self.mask.iter().filter(|m| !m.is_zero()).count()
    }
}

fn check_shapes<T>(predicted: &ArrayView2<'_, T>, target: &ArrayView2<'_, T>, mask: &ArrayView2<'_, T>) -> Result<()> {
    if predicted.shape() != target.shape() {
        return Err(Error::shape("loss target", predicted.shape(), target.shape()));
    }
    if predicted.shape() != mask.shape() {
        return Err(Error::shape("loss mask", predicted.shape(), mask.shape()));
    }
    Ok(())
}

/// Sum of masked squared errors and the number of observed entries.
pub fn masked_sse<T: Real>(
    predicted: ArrayView2<'_, T>,
    target: ArrayView2<'_, T>,
    mask: ArrayView2<'_, T>,
) -> Result<(f64, f64)> {
    check_shapes(&predicted, &target, &mask)?;
    let mut sse = 0.0f64;
    let mut count = 0.0f64;
    Zip::from(&predicted).and(&target).and(&mask).for_each(|&y, &r, &m| {
        let m = m.as_f64();
        if m != 0.0 {
            let d = r.as_f64() - y.as_f64();
            sse += m * d * d;
            count += m;
        }
    });
    Ok((sse, count))
}

/// `sum m (r - y)^2 / sum m` over the whole batch.
pub fn masked_mse<T: Real>(
    predicted: ArrayView2<'_, T>,
    target: ArrayView2<'_, T>,
    mask: ArrayView2<'_, T>,
) -> Result<f64> {
    let (sse, count) = masked_sse(predicted, target, mask)?;
    if count == 0.0 {
        return Err(Error::EmptyMask);
    }
    Ok(sse / count)
}

/// `d masked_mse / d predicted = 2 m (y - r) / sum m`; zero off the mask.
pub fn masked_mse_gradient<T: Real>(
    predicted: ArrayView2<'_, T>,
    target: ArrayView2<'_, T>,
    mask: ArrayView2<'_, T>,
) -> Result<Array2<T>> {
    check_shapes(&predicted, &target, &mask)?;
    let count: f64 = mask.iter().map(|m| m.as_f64()).sum();
    if count == 0.0 {
        return Err(Error::EmptyMask);
    }
    let scale = T::of(2.0 / count);
    let mut grad = Array2::zeros(predicted.raw_dim());
    Zip::from(&mut grad)
        .and(&predicted)
        .and(&target)
        .and(&mask)
        .for_each(|g, &y, &r, &m| {
            if !m.is_zero() {
                *g = scale * m * (y - r);
            }
        });
    Ok(grad)
}

pub fn rmse_from_mmse(mmse: f64) -> Result<f64> {
    if mmse < 0.0 || mmse.is_nan() {
        return Err(Error::InvalidArgument(format!("mean squared error {mmse} is negative")));
    }
    Ok(mmse.sqrt())
}
