//! Non-implementable comparison systems driven by the true parameters: the
//! closed-loop reference system, its constant-parameter matrix `A_g`, and the
//! exact-cancellation control.

use nalgebra::{DMatrix, DVector};

use crate::controller::ControllerConfig;
use crate::lti::{closed_loop_filter, LtiError, StateSpace};
use crate::plant::{PlantError, PlantSpec};
use crate::signals::SignalError;

/// `C(s)/ω` at the true `ω`, realized from `D(s)` and `k`.
pub fn reference_filter(d_filter: &StateSpace, k: f64, omega: f64) -> Result<StateSpace, LtiError> {
    if omega == 0.0 {
        return Err(LtiError::SingularMatrix);
    }
    Ok(closed_loop_filter(d_filter, omega * k)?.scale(1.0 / omega))
}

/// Reference plant state and the state of the `C(s)/ω` filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceState {
    pub x_ref: DVector<f64>,
    pub filter_state: DVector<f64>,
}

impl ReferenceState {
    pub fn initial(spec: &PlantSpec, filter: &StateSpace) -> Self {
        ReferenceState {
            x_ref: spec.x0.clone(),
            filter_state: DVector::zeros(filter.n_states()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDerivatives {
    pub dx_ref: DVector<f64>,
    pub dfilter: DVector<f64>,
    pub u_ref: f64,
}

/// Reference system with its filter realized once.
#[derive(Debug, Clone)]
pub struct ReferenceSystem {
    pub filter: StateSpace,
    pub k_g: f64,
}

impl ReferenceSystem {
    pub fn new(spec: &PlantSpec, cfg: &ControllerConfig) -> Result<Self, LtiError> {
        Ok(ReferenceSystem {
            filter: reference_filter(&cfg.d_filter, cfg.k, spec.true_omega)?,
            k_g: cfg.k_g,
        })
    }

    pub fn state_len(&self, n: usize) -> usize {
        n + self.filter.n_states()
    }

    /// Right-hand side of the packed state `[x_ref, ζ]` given `θ(t)`; returns
    /// `u_ref`.
    #[inline]
    pub(crate) fn rhs(
        &self,
        spec: &PlantSpec,
        t: f64,
        r: f64,
        theta: &[f64],
        rs: &[f64],
        drs: &mut [f64],
    ) -> Result<f64, SignalError> {
        let n = theta.len();
        let (x_ref, zeta) = rs.split_at(n);
        let (dx_ref, dzeta) = drs.split_at_mut(n);
        let sigma = spec.sigma(t, x_ref)?;
        let mut theta_x = 0.0;
        for i in 0..n {
            theta_x += theta[i] * x_ref[i];
        }
        let r_bar = -theta_x - sigma + self.k_g * r;
        let f = &self.filter;
        let mut u_ref = f.d[(0, 0)] * r_bar;
        for (j, z) in zeta.iter().enumerate() {
            u_ref += f.c[(0, j)] * z;
        }
        for (i, dz) in dzeta.iter_mut().enumerate() {
            let mut s = f.b[(i, 0)] * r_bar;
            for (j, z) in zeta.iter().enumerate() {
                s += f.a[(i, j)] * z;
            }
            *dz = s;
        }
        spec.derivative_with(x_ref, u_ref, theta, sigma, dx_ref);
        Ok(u_ref)
    }

    /// Output `u_ref` for a packed state, without derivatives.
    pub(crate) fn output(
        &self,
        spec: &PlantSpec,
        t: f64,
        r: f64,
        theta: &[f64],
        rs: &[f64],
    ) -> Result<f64, SignalError> {
        let n = theta.len();
        let (x_ref, zeta) = rs.split_at(n);
        let sigma = spec.sigma(t, x_ref)?;
        let theta_x: f64 = theta.iter().zip(x_ref).map(|(a, b)| a * b).sum();
        let r_bar = -theta_x - sigma + self.k_g * r;
        let f = &self.filter;
        let mut u_ref = f.d[(0, 0)] * r_bar;
        for (j, z) in zeta.iter().enumerate() {
            u_ref += f.c[(0, j)] * z;
        }
        Ok(u_ref)
    }
}

/// `u_ref = C(s)/ω · r̄_ref` with `r̄_ref = -θᵀx_ref - σ(t, x_ref) + k_g r`,
/// and `ẋ_ref = A_m x_ref + b(ω u_ref + θᵀx_ref + σ)`.
pub fn reference_derivatives(
    rs: &ReferenceState,
    t: f64,
    r: f64,
    spec: &PlantSpec,
    cfg: &ControllerConfig,
) -> Result<ReferenceDerivatives, PlantError> {
    let sys = ReferenceSystem::new(spec, cfg)?;
    let n = spec.n();
    if rs.x_ref.len() != n || rs.filter_state.len() != sys.filter.n_states() {
        return Err(PlantError::Dimension(
            "reference state does not match the plant and filter orders".into(),
        ));
    }
    let mut theta = vec![0.0; n];
    spec.theta_into(t, &mut theta)?;
    let packed: Vec<f64> = rs.x_ref.iter().chain(rs.filter_state.iter()).copied().collect();
    let mut d = vec![0.0; packed.len()];
    let u_ref = sys.rhs(spec, t, r, &theta, &packed, &mut d)?;
    if d.iter().any(|v| !v.is_finite()) || !u_ref.is_finite() {
        return Err(SignalError::NonFinite { t }.into());
    }
    Ok(ReferenceDerivatives {
        dx_ref: DVector::from_column_slice(&d[..n]),
        dfilter: DVector::from_column_slice(&d[n..]),
        u_ref,
    })
}

/// `A_g = [[A_m + bθᵀ, bω], [-kθᵀ, -kω]]`.
pub fn build_ag(
    a_m: &DMatrix<f64>,
    b: &DVector<f64>,
    theta: &DVector<f64>,
    omega: f64,
    k: f64,
) -> DMatrix<f64> {
    let n = a_m.nrows();
    let mut ag = DMatrix::zeros(n + 1, n + 1);
    ag.view_mut((0, 0), (n, n))
        .copy_from(&(a_m + b * theta.transpose()));
    ag.view_mut((0, n), (n, 1)).copy_from(&(b * omega));
    ag.view_mut((n, 0), (1, n))
        .copy_from(&(theta.transpose() * -k));
    ag[(n, n)] = -k * omega;
    ag
}

/// `(k_g r - θ(t)ᵀx_ref - σ(t, x_ref)) / ω`.
pub fn ideal_control(
    t: f64,
    x_ref: &DVector<f64>,
    r: f64,
    spec: &PlantSpec,
    k_g: f64,
) -> Result<f64, PlantError> {
    let n = spec.n();
    if x_ref.len() != n {
        return Err(PlantError::Dimension(format!(
            "state has length {}, expected {n}",
            x_ref.len()
        )));
    }
    if spec.true_omega == 0.0 {
        return Err(PlantError::OmegaOutsideSet {
            omega: 0.0,
            lo: f64::MIN_POSITIVE,
            hi: f64::INFINITY,
        });
    }
    let mut theta = vec![0.0; n];
    spec.theta_into(t, &mut theta)?;
    let sigma = spec.sigma(t, x_ref.as_slice())?;
    let theta_x: f64 = theta.iter().zip(x_ref.iter()).map(|(a, b)| a * b).sum();
    Ok((k_g * r - theta_x - sigma) / spec.true_omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{integrator, ControllerConfig, DEFAULT_PROJECTION_EPS};
    use crate::lti::{faddeev_leverrier, is_hurwitz};
    use crate::plant::{plant_derivative, robot_arm_preset, ArmDisturbance, UncertaintySets};
    use crate::signals::SignalExpr;
    use crate::sim::rk4::rk4_step;
    use nalgebra::{dmatrix, dvector};

    fn config(plant: &PlantSpec, sets: UncertaintySets) -> ControllerConfig {
        ControllerConfig::new(
            plant,
            sets,
            60.0,
            1e4,
            integrator(),
            &DMatrix::identity(plant.n(), plant.n()),
            DEFAULT_PROJECTION_EPS,
            None,
        )
        .unwrap()
    }

    fn nominal_arm() -> (PlantSpec, ControllerConfig) {
        let (mut plant, sets) = robot_arm_preset(ArmDisturbance::Sine);
        plant.true_theta = vec![SignalExpr::constant(0.0, 2); 2];
        plant.true_sigma = SignalExpr::constant(0.0, 2);
        let cfg = config(&plant, sets);
        (plant, cfg)
    }

    fn simulate_reference(
        plant: &PlantSpec,
        cfg: &ControllerConfig,
        r: impl Fn(f64) -> f64,
        horizon: f64,
        dt: f64,
    ) -> Vec<Vec<f64>> {
        let sys = ReferenceSystem::new(plant, cfg).unwrap();
        let n = plant.n();
        let mut s: Vec<f64> = plant.x0.iter().copied().collect();
        s.resize(sys.state_len(n), 0.0);
        let steps = (horizon / dt).round() as usize;
        let mut out = vec![s.clone()];
        for k in 0..steps {
            let t = k as f64 * dt;
            s = rk4_step(
                |t, x, dx| {
                    let mut th = vec![0.0; n];
                    plant.theta_into(t, &mut th).unwrap();
                    sys.rhs(plant, t, r(t), &th, x, dx).unwrap();
                },
                t,
                &s,
                dt,
            )
            .unwrap();
            out.push(s.clone());
        }
        out
    }

    #[test]
    fn ag_example_and_characteristic_polynomial() {
        let a_m = dmatrix![0.0, 1.0; -1.0, -1.4];
        let b = dvector![0.0, 1.0];
        let ag = build_ag(&a_m, &b, &dvector![2.0, 2.0], 1.0, 60.0);
        let expected = dmatrix![
            0.0, 1.0, 0.0;
            1.0, 0.6, 1.0;
            -120.0, -120.0, -60.0
        ];
        assert!((&ag - &expected).norm() < 1e-14);
        let (charpoly, _) = faddeev_leverrier(&ag);
        let want = [60.0, 83.0, 59.4, 1.0];
        for (c, w) in charpoly.iter().zip(want) {
            assert!((c - w).abs() < 1e-9, "{charpoly:?}");
        }
        // Routh: a2 a1 > a0 a3 with all coefficients positive.
        assert!(59.4 * 83.0 > 60.0);
        assert!(is_hurwitz(&ag, 1e-6).unwrap());
    }

    #[test]
    fn ag_with_zero_theta_couples_only_through_b_omega() {
        let a_m = dmatrix![0.0, 1.0; -1.0, -1.4];
        let b = dvector![0.0, 1.0];
        let ag = build_ag(&a_m, &b, &dvector![0.0, 0.0], 1.0, 1.0);
        assert_eq!(ag.view((0, 0), (2, 2)), a_m);
        assert_eq!(ag.view((2, 0), (1, 2)), DMatrix::<f64>::zeros(1, 2));
        assert_eq!(ag[(1, 2)], 1.0);
        assert_eq!(ag[(2, 2)], -1.0);
    }

    #[test]
    fn zero_input_keeps_reference_at_rest() {
        let (plant, cfg) = nominal_arm();
        let traj = simulate_reference(&plant, &cfg, |_| 0.0, 1.0, 1e-3);
        assert!(traj.iter().flatten().all(|v| *v == 0.0));
        let rs = ReferenceState::initial(&plant, &ReferenceSystem::new(&plant, &cfg).unwrap().filter);
        let d = reference_derivatives(&rs, 0.0, 0.0, &plant, &cfg).unwrap();
        assert_eq!(d.u_ref, 0.0);
    }

    #[test]
    fn unit_step_settles_to_one() {
        let (plant, cfg) = nominal_arm();
        let traj = simulate_reference(&plant, &cfg, |_| 1.0, 20.0, 1e-3);
        let y = plant.c.dot(&DVector::from_column_slice(&traj.last().unwrap()[..2]));
        assert!((y - 1.0).abs() < 1e-6, "{y}");
    }

    #[test]
    fn sigma_is_evaluated_on_reference_state() {
        let (mut plant, cfg) = nominal_arm();
        plant.true_sigma = SignalExpr::parse("x1", 2).unwrap();
        let rs = ReferenceState {
            x_ref: dvector![0.5, 0.0],
            filter_state: dvector![0.0],
        };
        let d = reference_derivatives(&rs, 0.0, 0.0, &plant, &cfg).unwrap();
        // ẋ2 = -x1 + σ = -0.5 + 0.5.
        assert!(d.dx_ref[1].abs() < 1e-15);
        assert!((d.dfilter[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn ideal_control_examples() {
        let (plant, cfg) = nominal_arm();
        let x = dvector![0.3, -0.7];
        assert_eq!(ideal_control(0.0, &x, 2.0, &plant, cfg.k_g).unwrap(), 2.0);

        let (arm, _) = robot_arm_preset(ArmDisturbance::Sine);
        let u = ideal_control(0.0, &DVector::zeros(2), 1.0, &arm, 1.0).unwrap();
        assert_eq!(u, 1.0);

        let t = 0.37;
        let x = dvector![0.2, -0.4];
        let r = 0.8;
        let u = ideal_control(t, &x, r, &arm, 1.0).unwrap();
        let f = plant_derivative(&arm, t, &x, u).unwrap();
        let desired = &arm.a_m * &x + &arm.b * r;
        assert!((f - desired).norm() < 1e-14);
    }

    #[test]
    fn constant_theta_matches_ag_form() {
        let (mut plant, sets) = robot_arm_preset(ArmDisturbance::Sine);
        plant.true_theta = vec![SignalExpr::constant(2.0, 2), SignalExpr::constant(2.0, 2)];
        plant.true_sigma = SignalExpr::constant(1.0, 2);
        plant.x0 = dvector![0.1, -0.2];
        let cfg = config(&plant, sets);
        let r = |t: f64| (std::f64::consts::PI * t).cos();
        let dt = 1e-3;
        let traj = simulate_reference(&plant, &cfg, r, 5.0, dt);

        let ag = build_ag(&plant.a_m, &plant.b, &dvector![2.0, 2.0], 1.0, 60.0);
        let (k, kg, sigma) = (60.0, cfg.k_g, 1.0);
        // ζ = [x_ref; u_ref], u_ref(0) = 0.
        let mut z = vec![0.1, -0.2, 0.0];
        let mut worst: f64 = 0.0;
        for (step, s) in traj.iter().enumerate() {
            let x_err = (z[0] - s[0]).abs().max((z[1] - s[1]).abs());
            // For D = 1/s the filter output is u_ref = k·ζ_filter.
            let u_err = (z[2] - k * s[2]).abs();
            worst = worst.max(x_err).max(u_err);
            let t = step as f64 * dt;
            z = rk4_step(
                |t, z, dz| {
                    for i in 0..3 {
                        dz[i] = (0..3).map(|j| ag[(i, j)] * z[j]).sum::<f64>();
                    }
                    dz[1] += sigma;
                    dz[2] += -k * sigma + k * kg * r(t);
                },
                t,
                &z,
                dt,
            )
            .unwrap();
        }
        assert!(worst < 1e-9, "{worst}");
    }
}
