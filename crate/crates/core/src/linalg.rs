//! Dense SVD helpers shared by the quadrature and operator builders.

use nalgebra::{DMatrix, DVector};

use crate::error::{FsbpError, Result};

pub(crate) struct Decomposition {
    pub u: DMatrix<f64>,
    pub v_t: DMatrix<f64>,
    pub singular: DVector<f64>,
    /// Number of singular values above the relative cutoff.
    pub rank: usize,
}

/// Thin SVD of `a` with singular values below `rel_cutoff * sigma_max`
/// counted as zero. The retained triplets are the first `rank` entries
/// after sorting.
pub(crate) fn decompose(a: &DMatrix<f64>, rel_cutoff: f64) -> Result<Decomposition> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(Decomposition {
            u: DMatrix::zeros(m, 0),
            v_t: DMatrix::zeros(0, n),
            singular: DVector::zeros(0),
            rank: 0,
        });
    }
    let mat = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = mat.thin_svd().map_err(|_| FsbpError::SvdFailure)?;
    let (fu, fv) = (svd.U(), svd.V());
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(FsbpError::SvdFailure);
    }

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let sigma_max = s[order[0]];
    let rank = if sigma_max > 0.0 {
        order
            .iter()
            .take_while(|&&i| s[i] > rel_cutoff * sigma_max)
            .count()
    } else {
        0
    };

    let u_sorted = DMatrix::from_fn(m, order.len(), |r, c| fu[(r, order[c])]);
    let vt_sorted = DMatrix::from_fn(order.len(), n, |r, c| fv[(c, order[r])]);
    let s_sorted = DVector::from_fn(order.len(), |i, _| s[order[i]]);
    Ok(Decomposition {
        u: u_sorted,
        v_t: vt_sorted,
        singular: s_sorted,
        rank,
    })
}

pub(crate) fn numerical_rank(a: &DMatrix<f64>, rel_cutoff: f64) -> Result<usize> {
    Ok(decompose(a, rel_cutoff)?.rank)
}

fn apply_pinv(dec: &Decomposition, b: &DVector<f64>, ncols: usize) -> DVector<f64> {
    let mut x = DVector::zeros(ncols);
    for i in 0..dec.rank {
        let coeff = dec.u.column(i).dot(b) / dec.singular[i];
        x.axpy(coeff, &dec.v_t.row(i).transpose(), 1.0);
    }
    x
}

/// Minimum-Euclidean-norm least-squares solution of `a x = b` using the
/// truncated pseudo-inverse, followed by one step of iterative refinement.
pub(crate) fn min_norm_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    rel_cutoff: f64,
) -> Result<DVector<f64>> {
    let dec = decompose(a, rel_cutoff)?;
    let x = apply_pinv(&dec, b, a.ncols());
    let correction = apply_pinv(&dec, &(b - a * &x), a.ncols());
    Ok(x + correction)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_repeated_rows() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 2.0, 4.0]);
        assert_eq!(numerical_rank(&a, 1e-10).unwrap(), 1);
    }

    #[test]
    fn min_norm_underdetermined() {
        // x + y = 2 has minimum-norm solution (1, 1).
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0]);
        let x = min_norm_solve(&a, &b, 1e-12).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_gives_zero_solution() {
        let a = DMatrix::zeros(2, 3);
        let b = DVector::from_vec(vec![0.0, 0.0]);
        let x = min_norm_solve(&a, &b, 1e-12).unwrap();
        assert_eq!(x.len(), 3);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
