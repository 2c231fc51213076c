//! Dense LTI algebra: realizations, transfer functions, interconnections and
//! the matrix routines the controller and certificates need.

mod linalg;
mod poly;
mod tf;

pub use linalg::{
    controllability_matrix, controllability_matrix_rank, eigenvalues, faddeev_leverrier,
    feedforward_gain, is_hurwitz, lyapunov_solve, spectral_abscissa, LyapunovPair,
    CERTIFY_HURWITZ_MARGIN, RANK_REL_TOL,
};
pub(crate) use linalg::numerical_rank;
pub use poly::Polynomial;
pub use tf::{ss_of_tf, tf_of_ss, RationalTf};

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("matrix is not Hurwitz")]
    NotHurwitz,
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("DC gain cᵀA⁻¹b is zero")]
    ZeroDcGain,
    #[error("transfer function is improper")]
    ImproperTransferFunction,
    #[error("feedback interconnection is ill-posed (algebraic loop)")]
    IllPosedLoop,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Finite-dimensional realization `ẋ = Ax + Bu`, `y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        let n = a.nrows();
        let dims_ok = a.ncols() == n
            && b.nrows() == n
            && c.ncols() == n
            && d.nrows() == c.nrows()
            && d.ncols() == b.ncols();
        if !dims_ok {
            return Err(LtiError::DimensionMismatch(format!(
                "A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(StateSpace { a, b, c, d })
    }

    /// A memoryless gain `y = K u`.
    pub fn static_gain(k: DMatrix<f64>) -> Self {
        let (p, m) = k.shape();
        StateSpace {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, m),
            c: DMatrix::zeros(p, 0),
            d: k,
        }
    }

    pub fn scalar_gain(k: f64) -> Self {
        Self::static_gain(DMatrix::from_element(1, 1, k))
    }

    /// `(sI - A)⁻¹ b` with full state output.
    pub fn input_to_state(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self, LtiError> {
        let n = a.nrows();
        StateSpace::new(
            a.clone(),
            DMatrix::from_column_slice(n, 1, b.as_slice()),
            DMatrix::identity(n, n),
            DMatrix::zeros(n, 1),
        )
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_siso(&self) -> bool {
        self.n_inputs() == 1 && self.n_outputs() == 1
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.d.iter().all(|&v| v == 0.0)
    }

    pub fn is_stable(&self, margin: f64) -> Result<bool, LtiError> {
        is_hurwitz(&self.a, margin)
    }

    /// `D - C A⁻¹ B`.
    pub fn dc_gain(&self) -> Result<DMatrix<f64>, LtiError> {
        if self.n_states() == 0 {
            return Ok(self.d.clone());
        }
        let x = self
            .a
            .clone()
            .lu()
            .solve(&self.b)
            .ok_or(LtiError::SingularMatrix)?;
        Ok(&self.d - &self.c * x)
    }

    /// `C (jω I - A)⁻¹ B + D`.
    pub fn freq_response(&self, omega: f64) -> Result<DMatrix<Complex<f64>>, LtiError> {
        let n = self.n_states();
        let to_c = |m: &DMatrix<f64>| m.map(|v| Complex::new(v, 0.0));
        if n == 0 {
            return Ok(to_c(&self.d));
        }
        let jw = DMatrix::<Complex<f64>>::identity(n, n) * Complex::new(0.0, omega);
        let x = (jw - to_c(&self.a))
            .lu()
            .solve(&to_c(&self.b))
            .ok_or(LtiError::SingularMatrix)?;
        Ok(to_c(&self.c) * x + to_c(&self.d))
    }

    /// `next ∘ self`: the output of `self` drives `next`.
    pub fn series(&self, next: &StateSpace) -> Result<StateSpace, LtiError> {
        if next.n_inputs() != self.n_outputs() {
            return Err(LtiError::DimensionMismatch(format!(
                "series: {} outputs feed {} inputs",
                self.n_outputs(),
                next.n_inputs()
            )));
        }
        let (n1, n2) = (self.n_states(), next.n_states());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&next.b * &self.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&next.a);
        let mut b = DMatrix::zeros(n1 + n2, self.n_inputs());
        b.view_mut((0, 0), (n1, self.n_inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.n_inputs()))
            .copy_from(&(&next.b * &self.d));
        let mut c = DMatrix::zeros(next.n_outputs(), n1 + n2);
        c.view_mut((0, 0), (next.n_outputs(), n1))
            .copy_from(&(&next.d * &self.c));
        c.view_mut((0, n1), (next.n_outputs(), n2)).copy_from(&next.c);
        let d = &next.d * &self.d;
        StateSpace::new(a, b, c, d)
    }

    /// Sum of two systems sharing input and output dimensions.
    pub fn parallel(&self, other: &StateSpace) -> Result<StateSpace, LtiError> {
        if self.n_inputs() != other.n_inputs() || self.n_outputs() != other.n_outputs() {
            return Err(LtiError::DimensionMismatch(
                "parallel: input/output dimensions differ".into(),
            ));
        }
        let (n1, n2) = (self.n_states(), other.n_states());
        let (p, m) = (self.n_outputs(), self.n_inputs());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&other.a);
        let mut b = DMatrix::zeros(n1 + n2, m);
        b.view_mut((0, 0), (n1, m)).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, m)).copy_from(&other.b);
        let mut c = DMatrix::zeros(p, n1 + n2);
        c.view_mut((0, 0), (p, n1)).copy_from(&self.c);
        c.view_mut((0, n1), (p, n2)).copy_from(&other.c);
        StateSpace::new(a, b, c, &self.d + &other.d)
    }

    pub fn difference(&self, other: &StateSpace) -> Result<StateSpace, LtiError> {
        self.parallel(&other.scale(-1.0))
    }

    /// Closed loop of `self` (forward path) with `loop_path` in the return
    /// path: `e = r + sign·y_loop`, `y = self(e)`. `sign = -1` is negative
    /// feedback.
    pub fn feedback(&self, loop_path: &StateSpace, sign: f64) -> Result<StateSpace, LtiError> {
        let (p, m) = (self.n_outputs(), self.n_inputs());
        if loop_path.n_inputs() != p || loop_path.n_outputs() != m {
            return Err(LtiError::DimensionMismatch(
                "feedback: loop path dimensions do not match forward path".into(),
            ));
        }
        let (n1, n2) = (self.n_states(), loop_path.n_states());
        // (I - sign D1 D2) y = C1 x1 + sign D1 C2 x2 + D1 r
        let lhs = DMatrix::<f64>::identity(p, p) - (&self.d * &loop_path.d) * sign;
        let e = lhs.try_inverse().ok_or(LtiError::IllPosedLoop)?;
        if !e.iter().all(|v| v.is_finite()) {
            return Err(LtiError::IllPosedLoop);
        }
        let y_x1 = &e * &self.c;
        let y_x2 = &e * (&self.d * &loop_path.c) * sign;
        let y_r = &e * &self.d;
        // error signal e_sig = r + sign (C2 x2 + D2 y)
        let e_x1 = (&loop_path.d * &y_x1) * sign;
        let e_x2 = (&loop_path.c + &loop_path.d * &y_x2) * sign;
        let e_r = DMatrix::<f64>::identity(m, m) + (&loop_path.d * &y_r) * sign;

        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1))
            .copy_from(&(&self.a + &self.b * &e_x1));
        a.view_mut((0, n1), (n1, n2)).copy_from(&(&self.b * &e_x2));
        a.view_mut((n1, 0), (n2, n1))
            .copy_from(&(&loop_path.b * &y_x1));
        a.view_mut((n1, n1), (n2, n2))
            .copy_from(&(&loop_path.a + &loop_path.b * &y_x2));
        let mut b = DMatrix::zeros(n1 + n2, m);
        b.view_mut((0, 0), (n1, m)).copy_from(&(&self.b * &e_r));
        b.view_mut((n1, 0), (n2, m))
            .copy_from(&(&loop_path.b * &y_r));
        let mut c = DMatrix::zeros(p, n1 + n2);
        c.view_mut((0, 0), (p, n1)).copy_from(&y_x1);
        c.view_mut((0, n1), (p, n2)).copy_from(&y_x2);
        StateSpace::new(a, b, c, y_r)
    }

    /// Scalar multiple of the output.
    pub fn scale(&self, k: f64) -> StateSpace {
        StateSpace {
            a: self.a.clone(),
            b: self.b.clone(),
            c: &self.c * k,
            d: &self.d * k,
        }
    }

    /// `K · self`.
    pub fn scale_output(&self, k: &DMatrix<f64>) -> Result<StateSpace, LtiError> {
        self.series(&StateSpace::static_gain(k.clone()))
    }

    /// `self · K`.
    pub fn scale_input(&self, k: &DMatrix<f64>) -> Result<StateSpace, LtiError> {
        StateSpace::static_gain(k.clone()).series(self)
    }

    /// Restriction to one output row and one input column.
    pub fn entry(&self, row: usize, col: usize) -> StateSpace {
        StateSpace {
            a: self.a.clone(),
            b: self.b.columns(col, 1).into_owned(),
            c: self.c.rows(row, 1).into_owned(),
            d: DMatrix::from_element(1, 1, self.d[(row, col)]),
        }
    }
}

/// `C(s) = ωk D(s) / (1 + ωk D(s))`, the low-pass filter induced by the
/// control law for a given product `ωk`.
pub fn closed_loop_filter(d_filter: &StateSpace, omega_k: f64) -> Result<StateSpace, LtiError> {
    d_filter
        .scale(omega_k)
        .feedback(&StateSpace::scalar_gain(1.0), -1.0)
}
