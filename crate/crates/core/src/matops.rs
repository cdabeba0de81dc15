//! Dense Hermitian kernels with fixed ordering conventions.
//!
//! Eigenvalues are always sorted descending. Within a tie class the order of
//! eigenvectors is whatever the underlying routine produces.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::{CMat, C64};

/// Threshold on the smallest eigenvalue below which a matrix is treated as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-12;

/// Relative singular-value cutoff for rank decisions.
pub const RANK_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct EigDecomposition {
    /// Unitary, columns are eigenvectors matching `phi`.
    pub v: CMat,
    /// Real eigenvalues, descending.
    pub phi: Vec<f64>,
}

impl EigDecomposition {
    pub fn max(&self) -> f64 {
        self.phi[0]
    }

    pub fn min(&self) -> f64 {
        self.phi[self.phi.len() - 1]
    }

    /// Eigenvector of the largest eigenvalue.
    pub fn top(&self) -> DVector<C64> {
        self.v.column(0).into_owned()
    }

    /// Eigenvector of the smallest eigenvalue.
    pub fn bottom(&self) -> DVector<C64> {
        self.v.column(self.v.ncols() - 1).into_owned()
    }
}

pub(crate) fn check_finite(a: &CMat, what: &str) -> Result<()> {
    if a.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigendecomposition of a Hermitian matrix (symmetrized first), eigenvalues descending.
pub fn herm_eig(a: &CMat) -> Result<EigDecomposition> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "herm_eig needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a, "herm_eig input")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(EigDecomposition { v: CMat::zeros(0, 0), phi: Vec::new() });
    }
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let phi = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let v = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigDecomposition { v, phi })
}

/// `V diag(f(phi)) V^H`.
pub fn eig_apply(e: &EigDecomposition, f: impl Fn(f64) -> f64) -> CMat {
    let n = e.phi.len();
    let mut scaled = e.v.clone();
    for c in 0..n {
        let s = f(e.phi[c]);
        for r in 0..n {
            scaled[(r, c)] *= s;
        }
    }
    &scaled * e.v.adjoint()
}

/// Hermitian inverse square root `A^{-1/2}` of a positive-definite matrix.
pub fn inv_sqrt(a: &CMat) -> Result<CMat> {
    let e = herm_eig(a)?;
    if e.phi.is_empty() {
        return Ok(CMat::zeros(0, 0));
    }
    let delta_min = e.min();
    if delta_min <= SINGULAR_THRESHOLD {
        return Err(Error::Singular { delta_min, threshold: SINGULAR_THRESHOLD });
    }
    Ok(eig_apply(&e, |x| 1.0 / x.sqrt()))
}

/// Orthonormal basis (columns) of the null space of `t_stack`.
pub fn null_space_basis(t_stack: &CMat) -> Result<CMat> {
    check_finite(t_stack, "null_space_basis input")?;
    let m = t_stack.ncols();
    let rows = t_stack.nrows().max(m);
    // Pad to at least square so the SVD returns a full right basis.
    let mut padded = CMat::zeros(rows, m);
    padded.view_mut((0, 0), (t_stack.nrows(), m)).copy_from(t_stack);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("SVD requested V^T");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = RANK_CUTOFF * s_max;
    let null_idx: Vec<usize> = (0..s.len()).filter(|&i| s_max == 0.0 || s[i] <= cutoff).collect();
    let rank = m - null_idx.len();
    if null_idx.is_empty() {
        return Err(Error::EmptyNullSpace { rank, cols: m });
    }
    let u = CMat::from_fn(m, null_idx.len(), |r, c| v_t[(null_idx[c], r)].conj());
    Ok(u)
}

/// Unitary DFT matrix with entries `exp(-2 pi i jk / N) / sqrt(N)`.
pub fn dft_matrix(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |j, k| {
        let angle = -2.0 * std::f64::consts::PI * ((j * k) % n.max(1)) as f64 / n as f64;
        C64::from_polar(scale, angle)
    })
}

/// Elementwise `max(d_i, 0)`.
pub fn pos_part_diag(d: &[f64]) -> Vec<f64> {
    d.iter().map(|&x| x.max(0.0)).collect()
}

/// `trace(A)` real part.
pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

/// `trace(X^H Q X)` for Hermitian `Q`, i.e. `||Q^{1/2} X||_F^2`.
pub fn quad_trace(q: &CMat, x: &CMat) -> f64 {
    let qx = q * x;
    x.iter().zip(qx.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

/// `||X||_F^2`.
pub fn fro2(x: &CMat) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Cholesky factor of a Hermitian matrix, or `None` unless it is numerically
/// positive definite.
///
/// The complex factorization in nalgebra takes complex square roots of the
/// pivots and so never rejects a negative one; the pivots are checked here.
pub fn cholesky_hpd(a: &CMat) -> Option<Cholesky<C64, Dyn>> {
    let ch = a.clone().cholesky()?;
    let ok = ch.l_dirty().diagonal().iter().all(|d| d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-8 * d.re);
    ok.then_some(ch)
}

/// `ln det(A)` for Hermitian positive-definite `A` via Cholesky.
pub fn logdet_hpd(a: &CMat) -> Result<f64> {
    match cholesky_hpd(a) {
        Some(ch) => Ok(ch.l_dirty().diagonal().iter().map(|z| 2.0 * z.re.ln()).sum()),
        None => {
            let e = herm_eig(a)?;
            let delta_min = e.min();
            if delta_min <= 0.0 {
                return Err(Error::Singular { delta_min, threshold: 0.0 });
            }
            Ok(e.phi.iter().map(|x| x.ln()).sum())
        }
    }
}

/// Inverse of a Hermitian positive-definite matrix, Hermitian-symmetrized.
pub fn inv_hpd(a: &CMat) -> Result<CMat> {
    if let Some(ch) = cholesky_hpd(a) {
        return Ok(hermitian_part(&ch.inverse()));
    }
    let e = herm_eig(a)?;
    let delta_min = e.min();
    if delta_min <= 0.0 {
        return Err(Error::Singular { delta_min, threshold: 0.0 });
    }
    Ok(eig_apply(&e, |x| 1.0 / x))
}

/// Identity scaled by a real number.
pub fn scaled_identity(n: usize, c: f64) -> CMat {
    CMat::from_diagonal_element(n, n, C64::new(c, 0.0))
}
