//! Dense small-matrix routines: spectra, Hurwitz tests, Lyapunov equations,
//! controllability and the feedforward gain.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use super::LtiError;

/// Relative rank tolerance for controllability tests.
pub const RANK_REL_TOL: f64 = 1e-9;

/// Default margin used by certification callers to reject marginal cases.
pub const CERTIFY_HURWITZ_MARGIN: f64 = 1e-6;

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues (with multiplicity) of a real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, LtiError> {
    check_square(a, "A")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![Complex::new(a[(0, 0)], 0.0)]);
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(LtiError::NoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64, LtiError> {
    Ok(eigenvalues(a)?
        .iter()
        .fold(f64::NEG_INFINITY, |m, z| m.max(z.re)))
}

/// `true` iff every eigenvalue has real part strictly below `-margin`.
pub fn is_hurwitz(a: &DMatrix<f64>, margin: f64) -> Result<bool, LtiError> {
    if a.nrows() == 0 {
        return Ok(true);
    }
    Ok(spectral_abscissa(a)? < -margin)
}

/// Solution of `AᵀP + PA = -Q` with the extreme eigenvalues of `P` and `Q`.
#[derive(Debug, Clone)]
pub struct LyapunovPair {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
    pub lambda_min_q: f64,
    pub lambda_max_q: f64,
}

impl LyapunovPair {
    /// `max |AᵀP + PA + Q|` over entries.
    pub fn residual(&self, a: &DMatrix<f64>) -> f64 {
        (a.transpose() * &self.p + &self.p * a + &self.q).amax()
    }
}

fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn is_spd(q: &DMatrix<f64>) -> bool {
    let scale = q.amax().max(f64::MIN_POSITIVE);
    if (q - q.transpose()).amax() > 1e-12 * scale {
        return false;
    }
    q.clone().cholesky().is_some() && symmetric_extremes(q).0 > 0.0
}

/// Solves the continuous Lyapunov equation `AᵀP + PA = -Q` by Kronecker
/// vectorization.
pub fn lyapunov_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<LyapunovPair, LtiError> {
    check_square(a, "A")?;
    check_square(q, "Q")?;
    let n = a.nrows();
    if q.nrows() != n {
        return Err(LtiError::DimensionMismatch(format!(
            "Q is {}x{} but A is {n}x{n}",
            q.nrows(),
            q.ncols()
        )));
    }
    if !is_hurwitz(a, 0.0)? {
        return Err(LtiError::NotHurwitz);
    }
    if !is_spd(q) {
        return Err(LtiError::NotSpd);
    }

    // vec(AᵀP + PA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P), column-major vec.
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let kron = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let lu = kron.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(LtiError::SingularMatrix)?;
    // One step of iterative refinement.
    let r = &rhs - &kron * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let p = DMatrix::from_column_slice(n, n, x.as_slice());
    let p = (&p + p.transpose()) * 0.5;

    let (lambda_min_p, lambda_max_p) = symmetric_extremes(&p);
    let (lambda_min_q, lambda_max_q) = symmetric_extremes(q);
    if lambda_min_p <= 0.0 {
        // Cannot happen for Hurwitz A and SPD Q unless the solve broke down.
        return Err(LtiError::SingularMatrix);
    }
    Ok(LyapunovPair {
        p,
        q: q.clone(),
        lambda_min_p,
        lambda_max_p,
        lambda_min_q,
        lambda_max_q,
    })
}

/// `[b, Ab, ..., A^{n-1} b]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for k in 0..n {
        m.set_column(k, &col);
        col = a * col;
    }
    m
}

/// Rank of the controllability matrix, singular values compared against
/// `RANK_REL_TOL` times the largest column norm.
pub fn controllability_matrix_rank(a: &DMatrix<f64>, b: &DVector<f64>) -> usize {
    let m = controllability_matrix(a, b);
    numerical_rank(&m)
}

pub(crate) fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let largest_col = m
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0_f64, f64::max);
    if largest_col == 0.0 {
        return 0;
    }
    let tol = RANK_REL_TOL * largest_col;
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > tol)
        .count()
}

/// `k_g = -1 / (cᵀ A_m⁻¹ b)`, the gain giving unit DC gain from `r` to `y`.
pub fn feedforward_gain(
    a_m: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
) -> Result<f64, LtiError> {
    check_square(a_m, "A_m")?;
    let z = a_m.clone().lu().solve(b).ok_or(LtiError::SingularMatrix)?;
    let dc = c.dot(&z);
    if dc.abs() <= 1e-14 * c.norm() * z.norm() || dc == 0.0 {
        return Err(LtiError::ZeroDcGain);
    }
    Ok(-1.0 / dc)
}

/// Characteristic polynomial coefficients and adjugate coefficients of `sI - A`
/// (Faddeev–LeVerrier).
///
/// Returns `(charpoly, adj)` where `charpoly` is ascending and
/// `adj(sI - A) = Σ_{k=1..n} adj[k-1] s^{n-k}`.
pub fn faddeev_leverrier(a: &DMatrix<f64>) -> (Vec<f64>, Vec<DMatrix<f64>>) {
    let n = a.nrows();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut m_prev = DMatrix::<f64>::zeros(n, n);
    let mut adj = Vec::with_capacity(n);
    for k in 1..=n {
        let m_k = a * &m_prev + &eye * c[n - k + 1];
        c[n - k] = -(a * &m_k).trace() / k as f64;
        adj.push(m_k.clone());
        m_prev = m_k;
    }
    (c, adj)
}

fn check_square(m: &DMatrix<f64>, name: &str) -> Result<(), LtiError> {
    if m.nrows() != m.ncols() {
        return Err(LtiError::DimensionMismatch(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}
