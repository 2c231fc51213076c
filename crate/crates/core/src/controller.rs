//! L1 adaptive controller: state predictor, projection-based adaptive laws and
//! the `D(s)`-filtered control law.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lti::{feedforward_gain, lyapunov_solve, LtiError, LyapunovPair, StateSpace};
use crate::plant::{Interval, PlantSpec, UncertaintySets};

pub const DEFAULT_PROJECTION_EPS: f64 = 0.1;

/// Estimates may overshoot the inflated box inside RK4 stages by this many
/// boundary-layer widths before the step is rejected.
const STAGE_OVERSHOOT_LAYERS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimate {
    Theta(usize),
    Sigma,
    Omega,
}

impl std::fmt::Display for Estimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimate::Theta(i) => write!(f, "thetahat{}", i + 1),
            Estimate::Sigma => f.write_str("sigmahat"),
            Estimate::Omega => f.write_str("omegahat"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("D(s) must be a strictly proper SISO system")]
    FilterNotStrictlyProper,
    #[error("{0} must be positive and finite")]
    InvalidGain(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("estimate {which} = {value} left its inflated set [{lo}, {hi}]; reduce dt")]
    EstimateOutOfBounds {
        which: Estimate,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Componentwise boundary-layer projection on one interval.
///
/// The layer lies outside `box_i` and has width `eps · half-width`. Inside
/// the box the update passes unchanged; across the layer the outward part is
/// scaled linearly to zero. Inward updates are never modified.
#[inline]
pub fn proj_component(update: f64, estimate: f64, box_i: Interval, eps: f64) -> Option<f64> {
    let layer = eps * box_i.half_width();
    let slack = (1.0 + STAGE_OVERSHOOT_LAYERS) * layer;
    if !(estimate >= box_i.lo - slack && estimate <= box_i.hi + slack) {
        return None;
    }
    let factor = |depth: f64| {
        if layer > 0.0 {
            (1.0 - depth / layer).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    if update > 0.0 && estimate >= box_i.hi {
        Some(update * factor(estimate - box_i.hi))
    } else if update < 0.0 && estimate <= box_i.lo {
        Some(update * factor(box_i.lo - estimate))
    } else {
        Some(update)
    }
}

/// Vector form of [`proj_component`].
pub fn proj(
    update: &[f64],
    estimate: &[f64],
    boxes: &[Interval],
    eps: f64,
) -> Result<Vec<f64>, ControllerError> {
    if update.len() != estimate.len() || estimate.len() != boxes.len() {
        return Err(ControllerError::Dimension(
            "update, estimate and box lengths differ".into(),
        ));
    }
    update
        .iter()
        .zip(estimate)
        .zip(boxes)
        .enumerate()
        .map(|(i, ((&y, &e), &b))| {
            proj_component(y, e, b, eps).ok_or_else(|| out_of_bounds(Estimate::Theta(i), e, b, eps))
        })
        .collect()
}

fn out_of_bounds(which: Estimate, value: f64, b: Interval, eps: f64) -> ControllerError {
    let inflated = b.inflated(eps);
    ControllerError::EstimateOutOfBounds {
        which,
        value,
        lo: inflated.lo,
        hi: inflated.hi,
    }
}

/// Parameter estimates `(θ̂, σ̂, ω̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub theta: DVector<f64>,
    pub sigma: f64,
    pub omega: f64,
}

impl Estimates {
    /// Centers of Θ, `[-Δ, Δ]` and Ω.
    pub fn box_centers(sets: &UncertaintySets) -> Self {
        Estimates {
            theta: DVector::from_iterator(
                sets.theta_box.len(),
                sets.theta_box.iter().map(Interval::center),
            ),
            sigma: 0.0,
            omega: sets.omega.center(),
        }
    }
}

/// Fixed controller data, shareable across threads.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub gamma_c: f64,
    pub k: f64,
    pub d_filter: StateSpace,
    pub lyap: LyapunovPair,
    pub k_g: f64,
    pub sets: UncertaintySets,
    pub projection_eps: f64,
    pub initial: Estimates,
    pub a_m: DMatrix<f64>,
    pub b: DVector<f64>,
    pb: DVector<f64>,
}

/// `D(s) = 1/s`.
pub fn integrator() -> StateSpace {
    StateSpace::new(
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::zeros(1, 1),
    )
    .expect("1x1 realization")
}

impl ControllerConfig {
    /// Solves `A_mᵀP + PA_m = -Q` and computes `k_g = -1/(cᵀA_m⁻¹b)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        plant: &PlantSpec,
        sets: UncertaintySets,
        k: f64,
        gamma_c: f64,
        d_filter: StateSpace,
        q: &DMatrix<f64>,
        projection_eps: f64,
        initial: Option<Estimates>,
    ) -> Result<Self, ControllerError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(k) {
            return Err(ControllerError::InvalidGain("k"));
        }
        if !positive(gamma_c) {
            return Err(ControllerError::InvalidGain("gamma_c"));
        }
        if !positive(projection_eps) {
            return Err(ControllerError::InvalidGain("projection_eps"));
        }
        if !d_filter.is_siso() || !d_filter.is_strictly_proper() || d_filter.n_states() == 0 {
            return Err(ControllerError::FilterNotStrictlyProper);
        }
        let n = plant.n();
        if sets.theta_box.len() != n {
            return Err(ControllerError::Dimension(format!(
                "theta box has {} intervals, expected {n}",
                sets.theta_box.len()
            )));
        }
        let lyap = lyapunov_solve(&plant.a_m, q)?;
        let k_g = feedforward_gain(&plant.a_m, &plant.b, &plant.c)?;
        let initial = initial.unwrap_or_else(|| Estimates::box_centers(&sets));
        if initial.theta.len() != n {
            return Err(ControllerError::Dimension(format!(
                "initial theta estimate has length {}, expected {n}",
                initial.theta.len()
            )));
        }
        let pb = &lyap.p * &plant.b;
        let cfg = ControllerConfig {
            gamma_c,
            k,
            d_filter,
            lyap,
            k_g,
            sets,
            projection_eps,
            initial,
            a_m: plant.a_m.clone(),
            b: plant.b.clone(),
            pb,
        };
        cfg.check_estimates(&cfg.initial)?;
        Ok(cfg)
    }

    pub fn n(&self) -> usize {
        self.a_m.nrows()
    }

    /// Order of `D(s)`.
    pub fn filter_order(&self) -> usize {
        self.d_filter.n_states()
    }

    /// `P b`.
    pub fn pb(&self) -> &DVector<f64> {
        &self.pb
    }

    /// Sets the estimates are confined to.
    pub fn inflated_sets(&self) -> UncertaintySets {
        self.sets.inflated(self.projection_eps)
    }

    fn check_estimates(&self, e: &Estimates) -> Result<(), ControllerError> {
        let eps = self.projection_eps;
        let check = |which, v: f64, b: Interval| {
            let inf = b.inflated(eps);
            if inf.contains(v) {
                Ok(())
            } else {
                Err(out_of_bounds(which, v, b, eps))
            }
        };
        for (i, (&v, &b)) in e.theta.iter().zip(&self.sets.theta_box).enumerate() {
            check(Estimate::Theta(i), v, b)?;
        }
        check(Estimate::Sigma, e.sigma, self.sets.sigma_interval())?;
        check(Estimate::Omega, e.omega, self.sets.omega)
    }

    /// Length of the packed controller state.
    pub fn state_len(&self) -> usize {
        2 * self.n() + 2 + self.filter_order()
    }

    /// Right-hand side of the packed controller state
    /// `[x̂, θ̂, σ̂, ω̂, χ]` for plant state `x` and command `r`; returns `u`.
    #[inline]
    pub(crate) fn rhs(
        &self,
        x: &[f64],
        r: f64,
        cs: &[f64],
        dcs: &mut [f64],
    ) -> Result<f64, ControllerError> {
        let n = x.len();
        let (x_hat, rest) = cs.split_at(n);
        let (theta_hat, rest) = rest.split_at(n);
        let (sigma_hat, omega_hat, chi) = (rest[0], rest[1], &rest[2..]);
        let (dx_hat, drest) = dcs.split_at_mut(n);
        let (dtheta, drest) = drest.split_at_mut(n);
        let (dscalars, dchi) = drest.split_at_mut(2);

        let u = self.control_output(chi);
        let mut xt_pb = 0.0;
        let mut theta_x = 0.0;
        for i in 0..n {
            xt_pb += (x_hat[i] - x[i]) * self.pb[i];
            theta_x += theta_hat[i] * x[i];
        }

        let eps = self.projection_eps;
        let g = self.gamma_c;
        for i in 0..n {
            let b = self.sets.theta_box[i];
            dtheta[i] = g * proj_component(-x[i] * xt_pb, theta_hat[i], b, eps)
                .ok_or_else(|| out_of_bounds(Estimate::Theta(i), theta_hat[i], b, eps))?;
        }
        let sb = self.sets.sigma_interval();
        dscalars[0] = g * proj_component(-xt_pb, sigma_hat, sb, eps)
            .ok_or_else(|| out_of_bounds(Estimate::Sigma, sigma_hat, sb, eps))?;
        let ob = self.sets.omega;
        dscalars[1] = g * proj_component(-xt_pb * u, omega_hat, ob, eps)
            .ok_or_else(|| out_of_bounds(Estimate::Omega, omega_hat, ob, eps))?;

        let r_bar = theta_x + sigma_hat - self.k_g * r;
        let r_u = omega_hat * u + r_bar;
        let d = &self.d_filter;
        for (i, dc) in dchi.iter_mut().enumerate() {
            let mut s = d.b[(i, 0)] * r_u;
            for (j, cj) in chi.iter().enumerate() {
                s += d.a[(i, j)] * cj;
            }
            *dc = s;
        }

        let mix = omega_hat * u + theta_x + sigma_hat;
        for i in 0..n {
            let mut s = self.b[i] * mix;
            for j in 0..n {
                s += self.a_m[(i, j)] * x_hat[j];
            }
            dx_hat[i] = s;
        }
        Ok(u)
    }

    /// `u = -k · C_D χ`.
    #[inline]
    pub(crate) fn control_output(&self, chi: &[f64]) -> f64 {
        let mut y = 0.0;
        for (j, cj) in chi.iter().enumerate() {
            y += self.d_filter.c[(0, j)] * cj;
        }
        -self.k * y
    }

    /// Clamps the packed estimates to the inflated sets.
    #[inline]
    pub(crate) fn clamp_estimates(&self, cs: &mut [f64]) {
        let n = self.n();
        let eps = self.projection_eps;
        for i in 0..n {
            cs[n + i] = self.sets.theta_box[i].inflated(eps).clamp(cs[n + i]);
        }
        cs[2 * n] = self.sets.sigma_interval().inflated(eps).clamp(cs[2 * n]);
        cs[2 * n + 1] = self.sets.omega.inflated(eps).clamp(cs[2 * n + 1]);
    }
}

/// Predictor state, estimates and filter state.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub x_hat: DVector<f64>,
    pub theta_hat: DVector<f64>,
    pub sigma_hat: f64,
    pub omega_hat: f64,
    pub chi: DVector<f64>,
}

impl ControllerState {
    /// `x̂(0) = x(0)`, configured initial estimates, `χ(0) = 0`.
    pub fn initial(cfg: &ControllerConfig, x0: &DVector<f64>) -> Self {
        ControllerState {
            x_hat: x0.clone(),
            theta_hat: cfg.initial.theta.clone(),
            sigma_hat: cfg.initial.sigma,
            omega_hat: cfg.initial.omega,
            chi: DVector::zeros(cfg.filter_order()),
        }
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.x_hat.len() + 2 + self.chi.len());
        v.extend(self.x_hat.iter());
        v.extend(self.theta_hat.iter());
        v.push(self.sigma_hat);
        v.push(self.omega_hat);
        v.extend(self.chi.iter());
        v
    }

    pub fn unpack(packed: &[f64], n: usize) -> Self {
        ControllerState {
            x_hat: DVector::from_column_slice(&packed[..n]),
            theta_hat: DVector::from_column_slice(&packed[n..2 * n]),
            sigma_hat: packed[2 * n],
            omega_hat: packed[2 * n + 1],
            chi: DVector::from_column_slice(&packed[2 * n + 2..]),
        }
    }
}

/// Derivatives of one controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerDerivatives {
    pub dx_hat: DVector<f64>,
    pub dtheta_hat: DVector<f64>,
    pub dsigma_hat: f64,
    pub domega_hat: f64,
    pub dchi: DVector<f64>,
    pub u: f64,
}

fn evaluate(
    cs: &ControllerState,
    x: &DVector<f64>,
    r: f64,
    cfg: &ControllerConfig,
) -> Result<ControllerDerivatives, ControllerError> {
    let n = cfg.n();
    if x.len() != n || cs.x_hat.len() != n || cs.theta_hat.len() != n {
        return Err(ControllerError::Dimension(format!(
            "state vectors must have length {n}"
        )));
    }
    if cs.chi.len() != cfg.filter_order() {
        return Err(ControllerError::Dimension(format!(
            "filter state has length {}, expected {}",
            cs.chi.len(),
            cfg.filter_order()
        )));
    }
    let packed = cs.pack();
    let mut d = vec![0.0; packed.len()];
    let u = cfg.rhs(x.as_slice(), r, &packed, &mut d)?;
    let dcs = ControllerState::unpack(&d, n);
    Ok(ControllerDerivatives {
        dx_hat: dcs.x_hat,
        dtheta_hat: dcs.theta_hat,
        dsigma_hat: dcs.sigma_hat,
        domega_hat: dcs.omega_hat,
        dchi: dcs.chi,
        u,
    })
}

/// `Γc · Proj(·)` applied to `-x x̃ᵀPb`, `-x̃ᵀPb` and `-x̃ᵀPb u`, where `u` is
/// supplied by the caller.
pub fn adaptive_derivatives(
    cs: &ControllerState,
    x: &DVector<f64>,
    u: f64,
    cfg: &ControllerConfig,
) -> Result<(DVector<f64>, f64, f64), ControllerError> {
    let n = cfg.n();
    if x.len() != n || cs.x_hat.len() != n || cs.theta_hat.len() != n {
        return Err(ControllerError::Dimension(format!(
            "state vectors must have length {n}"
        )));
    }
    let eps = cfg.projection_eps;
    let xt_pb = (&cs.x_hat - x).dot(cfg.pb());
    let raw: Vec<f64> = x.iter().map(|xi| -xi * xt_pb).collect();
    let dtheta = proj(&raw, cs.theta_hat.as_slice(), &cfg.sets.theta_box, eps)?;
    let sb = cfg.sets.sigma_interval();
    let dsigma = proj_component(-xt_pb, cs.sigma_hat, sb, eps)
        .ok_or_else(|| out_of_bounds(Estimate::Sigma, cs.sigma_hat, sb, eps))?;
    let ob = cfg.sets.omega;
    let domega = proj_component(-xt_pb * u, cs.omega_hat, ob, eps)
        .ok_or_else(|| out_of_bounds(Estimate::Omega, cs.omega_hat, ob, eps))?;
    let g = cfg.gamma_c;
    Ok((DVector::from_vec(dtheta) * g, g * dsigma, g * domega))
}

/// Returns `(χ̇, u, x̂̇)`.
pub fn control_derivatives(
    cs: &ControllerState,
    x: &DVector<f64>,
    r: f64,
    cfg: &ControllerConfig,
) -> Result<(DVector<f64>, f64, DVector<f64>), ControllerError> {
    let d = evaluate(cs, x, r, cfg)?;
    Ok((d.dchi, d.u, d.dx_hat))
}

/// All derivatives of the controller state at once.
pub fn controller_derivatives(
    cs: &ControllerState,
    x: &DVector<f64>,
    r: f64,
    cfg: &ControllerConfig,
) -> Result<ControllerDerivatives, ControllerError> {
    evaluate(cs, x, r, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{robot_arm_preset, ArmDisturbance};
    use crate::signals::SignalExpr;
    use nalgebra::{dmatrix, dvector};

    fn arm_config(gamma_c: f64) -> (PlantSpec, ControllerConfig) {
        let (plant, sets) = robot_arm_preset(ArmDisturbance::Sine);
        let cfg = ControllerConfig::new(
            &plant,
            sets,
            60.0,
            gamma_c,
            integrator(),
            &DMatrix::identity(2, 2),
            DEFAULT_PROJECTION_EPS,
            None,
        )
        .unwrap();
        (plant, cfg)
    }

    fn scalar_config(gamma_c: f64, p_target: f64) -> ControllerConfig {
        // a = -1, b = 1, Q = 2p gives P = p.
        let plant = PlantSpec {
            a_m: dmatrix![-1.0],
            b: dvector![1.0],
            c: dvector![1.0],
            true_omega: 1.0,
            true_theta: vec![SignalExpr::constant(0.0, 1)],
            true_sigma: SignalExpr::constant(0.0, 1),
            x0: dvector![0.0],
        };
        let sets = UncertaintySets {
            omega: Interval::new(0.5, 1.5),
            theta_box: vec![Interval::symmetric(1.0)],
            delta: 1.0,
            d_theta: 0.0,
            d_sigma: 0.0,
        };
        ControllerConfig::new(
            &plant,
            sets,
            1.0,
            gamma_c,
            integrator(),
            &dmatrix![2.0 * p_target],
            0.1,
            None,
        )
        .unwrap()
    }

    #[test]
    fn projection_interior_passes_through() {
        let b = Interval::symmetric(10.0);
        assert_eq!(proj_component(5.0, 0.0, b, 0.1), Some(5.0));
        assert_eq!(proj_component(-5.0, 0.0, b, 0.1), Some(-5.0));
        assert_eq!(proj_component(5.0, 10.0, b, 0.1), Some(5.0));
    }

    #[test]
    fn projection_layer_edge_blocks_outward() {
        let b = Interval::symmetric(10.0);
        assert_eq!(proj_component(5.0, 11.0, b, 0.1), Some(0.0));
        assert_eq!(proj_component(-5.0, -11.0, b, 0.1), Some(0.0));
        let half = proj_component(4.0, 10.5, b, 0.1).unwrap();
        assert!((half - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_layer_edge_passes_inward() {
        let b = Interval::symmetric(10.0);
        assert_eq!(proj_component(-5.0, 11.0, b, 0.1), Some(-5.0));
        assert_eq!(proj_component(5.0, -11.0, b, 0.1), Some(5.0));
    }

    #[test]
    fn projection_rejects_escaped_estimates() {
        let b = Interval::symmetric(10.0);
        assert_eq!(proj_component(1.0, 12.5, b, 0.1), None);
        assert!(matches!(
            proj(&[1.0], &[-13.0], &[b], 0.1),
            Err(ControllerError::EstimateOutOfBounds { .. })
        ));
    }

    #[test]
    fn degenerate_interval_freezes_estimate() {
        let b = Interval::new(2.0, 2.0);
        assert_eq!(proj_component(1.0, 2.0, b, 0.1), Some(0.0));
        assert_eq!(proj_component(-1.0, 2.0, b, 0.1), Some(0.0));
    }

    #[test]
    fn zero_prediction_error_gives_zero_adaptation() {
        let (plant, cfg) = arm_config(1e4);
        let cs = ControllerState::initial(&cfg, &plant.x0);
        let x = dvector![0.3, -0.2];
        let mut cs2 = cs.clone();
        cs2.x_hat = x.clone();
        let (dth, ds, dw) = adaptive_derivatives(&cs2, &x, 1.5, &cfg).unwrap();
        assert_eq!(dth, DVector::zeros(2));
        assert_eq!((ds, dw), (0.0, 0.0));
    }

    #[test]
    fn scalar_adaptive_laws_by_substitution() {
        let p = 0.75;
        let g = 100.0;
        let cfg = scalar_config(g, p);
        assert!((cfg.pb()[0] - p).abs() < 1e-12);
        let cs = ControllerState {
            x_hat: dvector![2.0],
            theta_hat: dvector![0.0],
            sigma_hat: 0.0,
            omega_hat: 1.0,
            chi: dvector![0.0],
        };
        let u = 0.4;
        let (dth, ds, dw) = adaptive_derivatives(&cs, &dvector![1.0], u, &cfg).unwrap();
        let pb = cfg.pb()[0];
        assert!((dth[0] + g * pb).abs() < 1e-9);
        assert!((ds + g * pb).abs() < 1e-9);
        assert!((dw + g * pb * u).abs() < 1e-9);
    }

    #[test]
    fn pinned_estimates_with_outward_gradient_do_not_move() {
        let cfg = scalar_config(100.0, 0.5);
        // x̃ < 0 makes every raw gradient positive for x = 1, u = 1.
        let cs = ControllerState {
            x_hat: dvector![0.0],
            theta_hat: dvector![1.1],
            sigma_hat: 1.1,
            omega_hat: 1.55,
            chi: dvector![0.0],
        };
        let (dth, ds, dw) = adaptive_derivatives(&cs, &dvector![1.0], 1.0, &cfg).unwrap();
        assert_eq!((dth[0], ds, dw), (0.0, 0.0, 0.0));
    }

    #[test]
    fn integrator_filter_reduces_to_first_order_law() {
        let (_, cfg) = arm_config(1e4);
        let cs = ControllerState {
            x_hat: dvector![0.1, 0.2],
            theta_hat: dvector![1.0, -2.0],
            sigma_hat: 0.5,
            omega_hat: 1.3,
            chi: dvector![0.05],
        };
        let x = dvector![0.3, -0.1];
        let r = 0.7;
        let (dchi, u, _) = control_derivatives(&cs, &x, r, &cfg).unwrap();
        let r_bar = cs.theta_hat.dot(&x) + cs.sigma_hat - cfg.k_g * r;
        assert_eq!(u, -60.0 * 0.05);
        assert!((dchi[0] - (-60.0 * 1.3 * 0.05 + r_bar)).abs() < 1e-12);
    }

    #[test]
    fn quiescent_controller_is_at_rest() {
        let (plant, cfg) = arm_config(1e4);
        let mut cs = ControllerState::initial(&cfg, &plant.x0);
        cs.theta_hat.fill(0.0);
        cs.sigma_hat = 0.0;
        let (dchi, u, dx_hat) = control_derivatives(&cs, &plant.x0, 0.0, &cfg).unwrap();
        assert_eq!(u, 0.0);
        assert_eq!(dchi, DVector::zeros(1));
        assert_eq!(dx_hat, DVector::zeros(2));
    }

    #[test]
    fn true_estimates_reproduce_plant() {
        let (mut plant, _) = robot_arm_preset(ArmDisturbance::Sine);
        plant.true_theta = vec![SignalExpr::constant(2.0, 2), SignalExpr::constant(-1.0, 2)];
        plant.true_sigma = SignalExpr::constant(0.5, 2);
        let (_, cfg) = arm_config(1e4);
        let x = dvector![0.4, -0.3];
        let cs = ControllerState {
            x_hat: x.clone(),
            theta_hat: dvector![2.0, -1.0],
            sigma_hat: 0.5,
            omega_hat: 1.0,
            chi: dvector![0.02],
        };
        let (_, u, dx_hat) = control_derivatives(&cs, &x, 1.0, &cfg).unwrap();
        let dx = crate::plant::plant_derivative(&plant, 0.0, &x, u).unwrap();
        assert!((dx_hat - dx).norm() < 1e-14);
    }

    #[test]
    fn config_rejects_proper_filter_and_bad_gains() {
        let (plant, sets) = robot_arm_preset(ArmDisturbance::Sine);
        let q = DMatrix::identity(2, 2);
        let biproper = StateSpace::new(dmatrix![-1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0])
            .unwrap();
        let err = ControllerConfig::new(&plant, sets.clone(), 60.0, 1e4, biproper, &q, 0.1, None)
            .unwrap_err();
        assert_eq!(err, ControllerError::FilterNotStrictlyProper);
        let err = ControllerConfig::new(&plant, sets, 0.0, 1e4, integrator(), &q, 0.1, None)
            .unwrap_err();
        assert_eq!(err, ControllerError::InvalidGain("k"));
    }

    #[test]
    fn default_estimates_are_box_centers() {
        let (_, cfg) = arm_config(1e4);
        assert_eq!(cfg.initial.theta, dvector![0.0, 0.0]);
        assert_eq!(cfg.initial.sigma, 0.0);
        assert!((cfg.initial.omega - 2.6).abs() < 1e-12);
        assert_eq!(cfg.k_g, 1.0);
    }
}
