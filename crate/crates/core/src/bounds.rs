//! Stability certificates and transient performance bounds.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::controller::ControllerConfig;
use crate::l1norm::{l1_gain_mimo, L1Error};
use crate::lti::{
    closed_loop_filter, faddeev_leverrier, is_hurwitz, numerical_rank, ss_of_tf, tf_of_ss,
    LtiError, LyapunovPair, Polynomial, RationalTf, StateSpace, CERTIFY_HURWITZ_MARGIN,
};
use crate::plant::{Interval, PlantSpec, UncertaintySets};
use crate::reference::build_ag;

pub const DEFAULT_OMEGA_GRID_POINTS: usize = 9;
pub const DEFAULT_HURWITZ_GRID: usize = 9;
pub const DEFAULT_CO_ZERO: f64 = -1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("C(s) is unstable at omega = {omega}")]
    UnstableC { omega: f64 },
    #[error("(A_m, b) is not controllable")]
    NotControllable,
    #[error("output zeros must be {expected} negative reals, got {found:?}")]
    InvalidZeros { expected: usize, found: Vec<f64> },
    #[error("omega grid is empty or contains non-positive values")]
    InvalidOmegaGrid,
    #[error("certificate unavailable: {0}")]
    CertificateUnavailable(String),
    #[error(transparent)]
    L1(#[from] L1Error),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// `Σ_i max(|lo_i|, |hi_i|)`.
pub fn compute_l(sets: &UncertaintySets) -> f64 {
    sets.theta_box.iter().map(Interval::max_abs).sum()
}

/// `points` uniformly spaced values over `interval`, endpoints included.
pub fn uniform_grid(interval: Interval, points: usize) -> Vec<f64> {
    if points <= 1 || interval.width() == 0.0 {
        return vec![if points <= 1 { interval.center() } else { interval.lo }];
    }
    (0..points)
        .map(|i| {
            if i == points - 1 {
                interval.hi
            } else {
                interval.lo + interval.width() * i as f64 / (points - 1) as f64
            }
        })
        .collect()
}

/// `G(s) = (sI - A_m)⁻¹ b (1 - C(s))` for the product `ωk`.
pub fn g_system(
    a_m: &DMatrix<f64>,
    b: &DVector<f64>,
    d_filter: &StateSpace,
    omega_k: f64,
) -> Result<StateSpace, LtiError> {
    let h = StateSpace::input_to_state(a_m, b)?;
    let c = closed_loop_filter(d_filter, omega_k)?;
    StateSpace::scalar_gain(1.0).difference(&c)?.series(&h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Requirement {
    /// `max_ω ‖G_ω‖_L1 · L`.
    pub value: f64,
    pub pass: bool,
    pub worst_omega: f64,
}

fn check_grid(omega_grid: &[f64]) -> Result<(), BoundsError> {
    if omega_grid.is_empty() || omega_grid.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(BoundsError::InvalidOmegaGrid);
    }
    Ok(())
}

/// `max_ω ‖G_ω‖_L1 · L < 1` over `omega_grid`, with `L` taken from `sets`.
pub fn check_l1_requirement(
    a_m: &DMatrix<f64>,
    b: &DVector<f64>,
    d_filter: &StateSpace,
    k: f64,
    sets: &UncertaintySets,
    omega_grid: &[f64],
    rel_tol: f64,
) -> Result<L1Requirement, BoundsError> {
    check_grid(omega_grid)?;
    let l = compute_l(sets);
    let mut worst = L1Requirement {
        value: 0.0,
        pass: true,
        worst_omega: omega_grid[0],
    };
    for &omega in omega_grid {
        let c = closed_loop_filter(d_filter, omega * k)?;
        if !is_hurwitz(&c.a, 0.0)? {
            return Err(BoundsError::UnstableC { omega });
        }
        if l == 0.0 {
            continue;
        }
        let g = g_system(a_m, b, d_filter, omega * k)?;
        let value = l1_gain_mimo(&g, rel_tol)?.value * l;
        if value > worst.value {
            worst.value = value;
            worst.worst_omega = omega;
        }
    }
    worst.pass = worst.value < 1.0;
    Ok(worst)
}

/// `A_g` Hurwitz (margin 1e-6) at every point of a grid over `Θ × Ω` with
/// `grid_per_dim` points per axis; vertices are always included.
pub fn hurwitz_sweep(
    a_m: &DMatrix<f64>,
    b: &DVector<f64>,
    k: f64,
    sets: &UncertaintySets,
    grid_per_dim: usize,
) -> Result<bool, BoundsError> {
    let per = grid_per_dim.max(2);
    let axes: Vec<Vec<f64>> = sets
        .theta_box
        .iter()
        .map(|i| uniform_grid(*i, per))
        .chain(std::iter::once(uniform_grid(sets.omega, per)))
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let n = a_m.nrows();
    let all_ok = (0..total).into_par_iter().map(|mut idx| {
        let mut point = Vec::with_capacity(n + 1);
        for axis in &axes {
            point.push(axis[idx % axis.len()]);
            idx /= axis.len();
        }
        let theta = DVector::from_column_slice(&point[..n]);
        let ag = build_ag(a_m, b, &theta, point[n], k);
        is_hurwitz(&ag, CERTIFY_HURWITZ_MARGIN)
    });
    let results: Result<Vec<bool>, LtiError> = all_ok.collect();
    Ok(results?.into_iter().all(|ok| ok))
}

/// Output vector `c_o` such that `c_oᵀ(sI - A_m)⁻¹b` has the monic numerator
/// `Π(s - z_i)` (relative degree one, minimum phase for negative zeros).
pub fn select_output_vector(
    a_m: &DMatrix<f64>,
    b: &DVector<f64>,
    zeros: &[f64],
) -> Result<DVector<f64>, BoundsError> {
    let n = a_m.nrows();
    if zeros.len() + 1 != n || zeros.iter().any(|z| !(z.is_finite() && *z < 0.0)) {
        return Err(BoundsError::InvalidZeros {
            expected: n.saturating_sub(1),
            found: zeros.to_vec(),
        });
    }
    let (_, adj) = faddeev_leverrier(a_m);
    // Row k holds the numerator coefficients of s^{n-1-k}.
    let mut m = DMatrix::zeros(n, n);
    for (k, adj_k) in adj.iter().enumerate() {
        m.row_mut(k).copy_from(&(adj_k * b).transpose());
    }
    if numerical_rank(&m) < n {
        return Err(BoundsError::NotControllable);
    }
    let target = Polynomial::from_real_roots(zeros);
    let rhs = DVector::from_fn(n, |k, _| target.coeff(n - 1 - k));
    m.lu().solve(&rhs).ok_or(BoundsError::NotControllable)
}

/// Numerator of `c_oᵀ(sI - A_m)⁻¹b` (ascending coefficients).
pub fn output_numerator(a_m: &DMatrix<f64>, b: &DVector<f64>, c_o: &DVector<f64>) -> Polynomial {
    let n = a_m.nrows();
    let (_, adj) = faddeev_leverrier(a_m);
    let mut coeffs = vec![0.0; n];
    for (k, adj_k) in adj.iter().enumerate() {
        coeffs[n - 1 - k] = c_o.dot(&(adj_k * b));
    }
    Polynomial::new(coeffs)
}

/// The four terms of `θ_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaMTerms {
    /// `4 max_Θ Σ θ_i²`.
    pub theta: f64,
    /// `4Δ²`.
    pub sigma: f64,
    /// `4(ω_u - ω_l)²`.
    pub omega: f64,
    /// `2 λmax(P)/λmin(Q) (max_Θ ‖θ‖ d_θ + d_σ Δ)`.
    pub rates: f64,
}

impl ThetaMTerms {
    pub fn total(&self) -> f64 {
        self.theta + self.sigma + self.omega + self.rates
    }
}

pub fn theta_m_terms(sets: &UncertaintySets, lyap: &LyapunovPair) -> ThetaMTerms {
    let max_sq: f64 = sets.theta_box.iter().map(|i| i.max_abs().powi(2)).sum();
    let max_norm = max_sq.sqrt();
    ThetaMTerms {
        theta: 4.0 * max_sq,
        sigma: 4.0 * sets.delta * sets.delta,
        omega: 4.0 * sets.omega.width().powi(2),
        rates: 2.0 * lyap.lambda_max_p / lyap.lambda_min_q
            * (max_norm * sets.d_theta + sets.d_sigma * sets.delta),
    }
}

/// `θ_m` evaluated over the given sets (callers pass the inflated sets).
pub fn compute_theta_m(sets: &UncertaintySets, lyap: &LyapunovPair) -> f64 {
    theta_m_terms(sets, lyap).total()
}

/// `sqrt(θ_m / (λ Γc))`.
pub fn sqrt_term(theta_m: f64, lambda: f64, gamma_c: f64) -> f64 {
    (theta_m / (lambda * gamma_c)).sqrt()
}

/// `‖C‖ / (1 - ‖G‖L) · sqrt_term`, infinite when `‖G‖L ≥ 1`.
pub fn gamma1_formula(c_norm: f64, g_norm_times_l: f64, sqrt_term: f64) -> f64 {
    if g_norm_times_l >= 1.0 {
        f64::INFINITY
    } else {
        c_norm / (1.0 - g_norm_times_l) * sqrt_term
    }
}

/// Inputs of a full certification run.
#[derive(Debug, Clone)]
pub struct CertificateInputs<'a> {
    pub plant: &'a PlantSpec,
    pub cfg: &'a ControllerConfig,
    pub omega_grid: Vec<f64>,
    pub co_zeros: Vec<f64>,
    pub conservative_lambda: bool,
    /// Constant `θ` for the constant-parameter bounds, if applicable.
    pub constant_theta: Option<DVector<f64>>,
    pub hurwitz_grid: usize,
    pub rel_tol: f64,
}

/// Norms entering the bounds at one grid value of `ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaTerms {
    pub omega: f64,
    pub c_norm: f64,
    pub g_norm: f64,
    pub c_over_omega_norm: f64,
    /// `‖C/ω · (c_oᵀH)⁻¹ c_oᵀ‖`.
    pub filtered_inverse_norm: f64,
    /// `‖H_g C (c_oᵀH)⁻¹ c_oᵀ‖`, constant-parameter mode only.
    pub hg_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateDetails {
    /// `L` over the inflated box.
    pub l: f64,
    pub theta_m_terms: ThetaMTerms,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
    pub sqrt_term_lambda_min: f64,
    pub sqrt_term_lambda_max: f64,
    pub gamma1_lambda_min: f64,
    pub gamma1_lambda_max: f64,
    pub gamma2_lambda_min: f64,
    pub gamma2_lambda_max: f64,
    pub worst_omega: f64,
    pub ag_hurwitz_at_true: Option<bool>,
    pub per_omega: Vec<OmegaTerms>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub l1_condition_value: f64,
    pub l1_condition_pass: bool,
    pub hurwitz_sweep_pass: Option<bool>,
    pub theta_m: f64,
    pub xtilde_bound: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: Option<f64>,
    pub gamma4: Option<f64>,
    pub c_o: DVector<f64>,
    pub details: CertificateDetails,
}

impl Certificate {
    /// Requirement passes, and the `A_g` sweep passes when it was run.
    pub fn passes(&self) -> bool {
        self.l1_condition_pass && self.hurwitz_sweep_pass.unwrap_or(true)
    }
}

/// `C(s)/ω · (c_oᵀH(s))⁻¹`, a proper SISO system.
fn filtered_inverse(
    c: &StateSpace,
    omega: f64,
    h_num: &Polynomial,
    h_den: &Polynomial,
) -> Result<StateSpace, LtiError> {
    let c_tf = tf_of_ss(c);
    let num = (&c_tf.num[0][0].trimmed(1e-12) * h_den).trimmed(1e-12);
    let den = (&c_tf.den * h_num).scale(omega);
    ss_of_tf(&RationalTf::siso(num, den))
}

fn row_gain(c_o: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, c_o.len(), c_o.as_slice())
}

fn omega_terms(
    inputs: &CertificateInputs,
    c_o: &DVector<f64>,
    l_inflated: f64,
    omega: f64,
) -> Result<OmegaTerms, BoundsError> {
    let cfg = inputs.cfg;
    let (a_m, b) = (&inputs.plant.a_m, &inputs.plant.b);
    let tol = inputs.rel_tol;
    let c = closed_loop_filter(&cfg.d_filter, omega * cfg.k)?;
    if !is_hurwitz(&c.a, 0.0)? {
        return Err(BoundsError::UnstableC { omega });
    }
    let c_norm = l1_gain_mimo(&c, tol)?.value;
    let g_norm = if l_inflated == 0.0 {
        0.0
    } else {
        l1_gain_mimo(&g_system(a_m, b, &cfg.d_filter, omega * cfg.k)?, tol)?.value
    };
    let h_num = output_numerator(a_m, b, c_o);
    let h_den = Polynomial::new(faddeev_leverrier(a_m).0);
    let fi = filtered_inverse(&c, omega, &h_num, &h_den)?;
    let fi_row = fi.scale_input(&row_gain(c_o))?;
    let filtered_inverse_norm = l1_gain_mimo(&fi_row, tol)?.value;

    let hg_norm = match &inputs.constant_theta {
        Some(theta) => {
            let ag = build_ag(a_m, b, theta, omega, cfg.k);
            if is_hurwitz(&ag, CERTIFY_HURWITZ_MARGIN)? {
                let n = a_m.nrows();
                let mut bg = DMatrix::zeros(n + 1, 1);
                bg.view_mut((0, 0), (n, 1)).copy_from(b);
                let hg = StateSpace::new(
                    ag,
                    bg,
                    DMatrix::identity(n + 1, n + 1),
                    DMatrix::zeros(n + 1, 1),
                )?;
                // C · (c_oᵀH)⁻¹ = ω · (C/ω · (c_oᵀH)⁻¹).
                let chain = fi.scale(omega).scale_input(&row_gain(c_o))?.series(&hg)?;
                Some(l1_gain_mimo(&chain, tol)?.value)
            } else {
                None
            }
        }
        None => None,
    };
    Ok(OmegaTerms {
        omega,
        c_norm,
        g_norm,
        c_over_omega_norm: c_norm / omega,
        filtered_inverse_norm,
        hg_norm,
    })
}

/// Runs every check and evaluates every bound; failed requirements show up
/// as `false` flags and infinite `γ`.
pub fn certify(inputs: &CertificateInputs) -> Result<Certificate, BoundsError> {
    let cfg = inputs.cfg;
    let plant = inputs.plant;
    check_grid(&inputs.omega_grid)?;
    let inflated = cfg.inflated_sets();
    let l = compute_l(&inflated);
    let c_o = select_output_vector(&plant.a_m, &plant.b, &inputs.co_zeros)?;

    let per_omega = inputs
        .omega_grid
        .par_iter()
        .map(|&w| omega_terms(inputs, &c_o, l, w))
        .collect::<Result<Vec<_>, _>>()?;

    let (worst_omega, l1_value) = per_omega
        .iter()
        .map(|t| (t.omega, t.g_norm * l))
        .fold((inputs.omega_grid[0], 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let l1_pass = l1_value < 1.0;

    let terms = theta_m_terms(&inflated, &cfg.lyap);
    let theta_m = terms.total();
    let lyap = &cfg.lyap;
    let sq_min = sqrt_term(theta_m, lyap.lambda_min_p, cfg.gamma_c);
    let sq_max = sqrt_term(theta_m, lyap.lambda_max_p, cfg.gamma_c);

    let gammas = |sq: f64| {
        per_omega.iter().fold((0.0_f64, 0.0_f64), |(g1, g2), t| {
            let a = gamma1_formula(t.c_norm, t.g_norm * l, sq);
            let b = t.c_over_omega_norm * l * a + t.filtered_inverse_norm * sq;
            (g1.max(a), g2.max(b))
        })
    };
    let (g1_min, g2_min) = gammas(sq_min);
    let (g1_max, g2_max) = gammas(sq_max);
    let sq = if inputs.conservative_lambda { sq_min } else { sq_max };

    let (hurwitz_sweep_pass, ag_hurwitz_at_true, gamma3, gamma4) = match &inputs.constant_theta {
        Some(theta) => {
            let sweep = hurwitz_sweep(&plant.a_m, &plant.b, cfg.k, &cfg.sets, inputs.hurwitz_grid)?;
            let at_true = is_hurwitz(
                &build_ag(&plant.a_m, &plant.b, theta, plant.true_omega, cfg.k),
                CERTIFY_HURWITZ_MARGIN,
            )?;
            let theta_abs: f64 = theta.iter().map(|v| v.abs()).sum();
            let mut g3 = Some(0.0_f64);
            let mut g4 = Some(0.0_f64);
            for t in &per_omega {
                match (t.hg_norm, g3, g4) {
                    (Some(hg), Some(a), Some(b)) => {
                        let v3 = hg * sq;
                        let v4 = t.c_over_omega_norm * theta_abs * v3 + t.filtered_inverse_norm * sq;
                        g3 = Some(a.max(v3));
                        g4 = Some(b.max(v4));
                    }
                    _ => {
                        g3 = None;
                        g4 = None;
                    }
                }
            }
            (Some(sweep), Some(at_true), g3, g4)
        }
        None => (None, None, None, None),
    };

    let (gamma1, gamma2) = if inputs.conservative_lambda {
        (g1_min, g2_min)
    } else {
        (g1_max, g2_max)
    };
    Ok(Certificate {
        l1_condition_value: l1_value,
        l1_condition_pass: l1_pass,
        hurwitz_sweep_pass,
        theta_m,
        xtilde_bound: sq_min,
        gamma1,
        gamma2,
        gamma3,
        gamma4,
        c_o,
        details: CertificateDetails {
            l,
            theta_m_terms: terms,
            lambda_min_p: lyap.lambda_min_p,
            lambda_max_p: lyap.lambda_max_p,
            sqrt_term_lambda_min: sq_min,
            sqrt_term_lambda_max: sq_max,
            gamma1_lambda_min: g1_min,
            gamma1_lambda_max: g1_max,
            gamma2_lambda_min: g2_min,
            gamma2_lambda_max: g2_max,
            worst_omega,
            ag_hurwitz_at_true,
            per_omega,
        },
    })
}

/// Like [`certify`], but fails when the requirement does not hold or the
/// constant-parameter bounds were requested and are unavailable.
pub fn compute_performance_bounds(inputs: &CertificateInputs) -> Result<Certificate, BoundsError> {
    let cert = certify(inputs)?;
    if !cert.l1_condition_pass {
        return Err(BoundsError::CertificateUnavailable(format!(
            "L1 requirement fails: ‖G‖·L = {}",
            cert.l1_condition_value
        )));
    }
    if inputs.constant_theta.is_some() && cert.gamma3.is_none() {
        return Err(BoundsError::CertificateUnavailable(
            "A_g is not Hurwitz at the constant parameter".into(),
        ));
    }
    Ok(cert)
}
