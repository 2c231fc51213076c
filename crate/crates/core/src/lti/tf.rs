//! Rational transfer matrices with a common denominator, and conversions to
//! and from state space.

use nalgebra::{Complex, DMatrix};

use super::linalg::faddeev_leverrier;
use super::{LtiError, Polynomial, StateSpace};

/// `num[i][j](s) / den(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTf {
    pub num: Vec<Vec<Polynomial>>,
    pub den: Polynomial,
}

impl RationalTf {
    pub fn siso(num: Polynomial, den: Polynomial) -> Self {
        RationalTf {
            num: vec![vec![num]],
            den,
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.num.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.num.first().map_or(0, |r| r.len())
    }

    pub fn is_proper(&self) -> bool {
        self.num
            .iter()
            .flatten()
            .all(|p| p.is_zero() || p.degree() <= self.den.degree())
    }

    pub fn eval(&self, s: Complex<f64>) -> DMatrix<Complex<f64>> {
        let d = self.den.eval_complex(s);
        DMatrix::from_fn(self.n_outputs(), self.n_inputs(), |i, j| {
            self.num[i][j].eval_complex(s) / d
        })
    }

    /// SISO product `self · other`.
    pub fn mul_siso(&self, other: &RationalTf) -> RationalTf {
        RationalTf::siso(
            &self.num[0][0] * &other.num[0][0],
            &self.den * &other.den,
        )
    }

    /// SISO reciprocal `1 / self`.
    pub fn recip_siso(&self) -> RationalTf {
        RationalTf::siso(self.den.clone(), self.num[0][0].clone())
    }
}

/// Transfer matrix of a realization: `den = det(sI - A)`,
/// `num_ij = C_i adj(sI - A) B_j + D_ij den`.
pub fn tf_of_ss(sys: &StateSpace) -> RationalTf {
    let n = sys.n_states();
    let (charpoly, adj) = faddeev_leverrier(&sys.a);
    let den = Polynomial::new(charpoly);
    let num = (0..sys.n_outputs())
        .map(|i| {
            (0..sys.n_inputs())
                .map(|j| {
                    let mut coeffs = vec![0.0; n + 1];
                    for (k, m_k) in adj.iter().enumerate() {
                        // adj[k] multiplies s^{n-1-k}
                        let v = (sys.c.row(i) * m_k * sys.b.column(j))[(0, 0)];
                        coeffs[n - 1 - k] += v;
                    }
                    let strictly = Polynomial::new(coeffs);
                    &strictly + &den.scale(sys.d[(i, j)])
                })
                .collect()
        })
        .collect();
    RationalTf { num, den }
}

/// Controllable-canonical realization, one block per input column.
pub fn ss_of_tf(tf: &RationalTf) -> Result<StateSpace, LtiError> {
    if tf.den.is_zero() {
        return Err(LtiError::SingularMatrix);
    }
    if !tf.is_proper() {
        return Err(LtiError::ImproperTransferFunction);
    }
    let (p, m) = (tf.n_outputs(), tf.n_inputs());
    let lead = tf.den.leading();
    let den = tf.den.monic();
    let nd = den.degree();
    let mut d = DMatrix::zeros(p, m);
    let mut a = DMatrix::zeros(nd * m, nd * m);
    let mut b = DMatrix::zeros(nd * m, m);
    let mut c = DMatrix::zeros(p, nd * m);
    for j in 0..m {
        let off = j * nd;
        for k in 0..nd {
            if k + 1 < nd {
                a[(off + k, off + k + 1)] = 1.0;
            }
            a[(off + nd - 1, off + k)] = -den.coeff(k);
        }
        if nd > 0 {
            b[(off + nd - 1, j)] = 1.0;
        }
        for i in 0..p {
            let num = tf.num[i][j].scale(1.0 / lead);
            let feedthrough = num.coeff(nd);
            d[(i, j)] = feedthrough;
            let rem = &num - &den.scale(feedthrough);
            for k in 0..nd {
                c[(i, off + k)] = rem.coeff(k);
            }
        }
    }
    StateSpace::new(a, b, c, d)
}
