//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const EIGEN_FLOOR: f64 = -1e-10;
const SAMPLER_JITTER: f64 = 1e-12;

/// Checks symmetry (absolute, 1e-12) and the eigenvalue floor (-1e-10).
pub fn check_symmetric_psd(m: &DMatrix<f64>, name: &str, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidParameter(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::InvalidParameter(format!(
                    "{name} is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    if n > 0 {
        let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
        if min_eig < EIGEN_FLOOR {
            return Err(Error::InvalidParameter(format!(
                "{name} is not positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
    }
    Ok(())
}

/// Lower factor `L` with `L Lᵀ ≈ m` for a PSD matrix. Plain Cholesky first,
/// then with a 1e-12 diagonal jitter, then a symmetric square root.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return c.l();
    }
    let n = m.nrows();
    let jittered = m + DMatrix::<f64>::identity(n, n) * SAMPLER_JITTER;
    if let Some(c) = Cholesky::new(jittered) {
        return c.l();
    }
    let eig = SymmetricEigen::new(m.clone());
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
}

/// Cholesky factorization that reports failure as `SingularCovariance`.
pub fn cholesky_pd(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| {
        Error::SingularCovariance(format!("{}x{} matrix failed Cholesky", m.nrows(), m.ncols()))
    })
}

/// ln|M| from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Log density of N(mean, cov) at `x` given the Cholesky factor of `cov`.
pub fn gaussian_log_pdf(x: &DVector<f64>, mean: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let n = x.len() as f64;
    let diff = x - mean;
    let z = chol.l_dirty().solve_lower_triangular(&diff).expect("triangular solve");
    -0.5 * z.norm_squared() - 0.5 * log_det(chol) - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Orthonormal basis (as columns) for the null space of `c`.
pub fn null_space(c: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = c.ncols();
    if c.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    let gram = c.transpose() * c;
    let eig = SymmetricEigen::new(gram);
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let keep: Vec<usize> = (0..cols)
        .filter(|&k| eig.eigenvalues[k].abs() <= 1e-12 * scale)
        .collect();
    let mut z = DMatrix::zeros(cols, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        z.set_column(j, &eig.eigenvectors.column(k));
    }
    z
}

/// Minimal-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1e-300);
    svd.solve(b, tol).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Least squares `min ‖a x − b‖` with `x[k] ≥ 0` for `k ≥ n_free` and the
/// first `n_free` entries unconstrained (Lawson–Hanson active set).
pub fn nnls_partial(a: &DMatrix<f64>, b: &DVector<f64>, n_free: usize) -> DVector<f64> {
    let m = a.ncols();
    let mut passive: Vec<bool> = (0..m).map(|k| k < n_free).collect();
    let solve = |passive: &[bool]| {
        let idx: Vec<usize> = (0..m).filter(|&k| passive[k]).collect();
        let sub = lstsq(&a.select_columns(&idx), b);
        let mut z = DVector::zeros(m);
        for (i, &k) in idx.iter().enumerate() {
            z[k] = sub[i];
        }
        z
    };
    let mut x = solve(&passive);
    let tol = 1e-13 * (a.amax() * b.amax()).max(1e-300);
    let mut excluded = vec![false; m];
    for _ in 0..3 * m.max(1) {
        let w = a.transpose() * (b - a * &x);
        let Some(j) = (n_free..m)
            .filter(|&k| !passive[k] && !excluded[k] && w[k] > tol)
            .max_by(|&p, &q| w[p].total_cmp(&w[q]))
        else {
            break;
        };
        passive[j] = true;
        let before = x.clone();
        for _ in 0..3 * m {
            let z = solve(&passive);
            let mut alpha = 1.0_f64;
            for k in n_free..m {
                if passive[k] && z[k] <= 0.0 {
                    alpha = alpha.min(x[k] / (x[k] - z[k]));
                }
            }
            if alpha >= 1.0 {
                x = z;
                break;
            }
            x += (z - &x) * alpha;
            for k in n_free..m {
                if passive[k] && x[k] <= 0.0 {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
        if passive[j] || x != before {
            excluded.iter_mut().for_each(|e| *e = false);
        } else {
            // entering `j` could not move the solution
            excluded[j] = true;
        }
    }
    x
}

pub(crate) mod serde_matrix {
    //! Row-major nested-array serialization for dense matrices.
    use nalgebra::DMatrix;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        serde::Serialize::serialize(&rows, s)
    }
}

pub(crate) mod serde_vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        serde::Serialize::serialize(v.as_slice(), s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let v: Vec<f64> = Vec::deserialize(d)?;
        Ok(DVector::from_vec(v))
    }
}

/// Builds a matrix from row-major nested vectors, rejecting ragged input.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".to_string());
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
