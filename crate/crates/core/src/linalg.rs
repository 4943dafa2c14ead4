use nalgebra::{DMatrix, DVector};

pub(crate) struct NullSpace {
    /// Orthonormal basis of the (numerical) null space.
    pub basis: Vec<DVector<f64>>,
    /// All singular values, in decreasing order.
    pub singular_values: Vec<f64>,
}

/// Null space of a matrix with at least as many rows as columns, through a
/// full SVD. A direction counts as null when its singular value is at most
/// `threshold(largest singular value)`.
pub(crate) fn null_space(matrix: &DMatrix<f64>, threshold: impl Fn(f64) -> f64) -> NullSpace {
    let (rows, cols) = matrix.shape();
    let square = if rows < cols {
        let mut padded = DMatrix::zeros(cols, cols);
        padded.rows_mut(0, rows).copy_from(matrix);
        padded
    } else {
        matrix.clone()
    };
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut pairs: Vec<(f64, DVector<f64>)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, v_t.row(i).transpose()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let largest = pairs.first().map_or(0.0, |p| p.0);
    let cut = threshold(largest);
    let singular_values = pairs.iter().map(|p| p.0).collect();
    let basis = pairs
        .into_iter()
        .filter(|(s, _)| *s <= cut)
        .map(|(_, v)| v)
        .collect();
    NullSpace {
        basis,
        singular_values,
    }
}

/// Minimum-norm least-squares solution of `a x = b`.
pub(crate) fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-14)
        .expect("SVD with both factors computed")
}
