use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// Squared Euclidean distance matrix. Exactly symmetric with a zero diagonal.
pub fn pairwise_sq_distances(points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::invalid("distance matrix needs at least one point"));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("points"));
    }
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        let a = points.row(i);
        for j in (i + 1)..n {
            let b = points.row(j);
            let s: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            d[[i, j]] = s;
            d[[j, i]] = s;
        }
    }
    Ok(d)
}

/// Euclidean distance matrix.
pub fn pairwise_distances(points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(pairwise_sq_distances(points)?.mapv_into(f64::sqrt))
}
