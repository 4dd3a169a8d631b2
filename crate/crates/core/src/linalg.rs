use nalgebra::DMatrix;

pub(crate) struct LeastSquares {
    pub solution: DMatrix<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
}

/// Minimum-norm least-squares solution of `a · x = b` through the SVD.
///
/// Singular values below `1e-10 · σ_max` are treated as zero, which makes
/// the result the pseudo-inverse solution when `a` is rank-deficient.
pub(crate) fn lstsq(a: DMatrix<f64>, b: &DMatrix<f64>) -> LeastSquares {
    let cols = a.ncols();
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let solution = if smax == 0.0 {
        DMatrix::zeros(cols, b.ncols())
    } else {
        svd.solve(b, eps).expect("u and v were computed")
    };
    LeastSquares {
        solution,
        rank,
        rank_deficient: rank < cols,
    }
}
