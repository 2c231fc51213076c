//! Fixed-step simulation of the coupled plant, controller and reference
//! system.

pub mod rk4;
pub mod spectrum;
mod trace;

pub use rk4::{rk4_step, NonFiniteStep, OdeSystem, Rk4, StepError};
pub use trace::Trace;

use std::cell::RefCell;

use thiserror::Error;

use crate::controller::{ControllerConfig, ControllerError, ControllerState};
use crate::lti::LtiError;
use crate::plant::PlantSpec;
use crate::reference::ReferenceSystem;
use crate::signals::{SignalError, SignalExpr};

/// Any state or signal magnitude above this aborts the run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e9;
/// `dt · Γc` above this emits a warning.
pub const STIFFNESS_WARN: f64 = 0.1;
/// `dt · Γc` above this is refused.
pub const STIFFNESS_LIMIT: f64 = 1.0;
/// Fraction of the horizon over which `terminal_xtilde` is measured.
pub const TERMINAL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub dt: f64,
    pub horizon: f64,
    pub record_stride: usize,
    /// Start of the window used for the tracking RMS.
    pub transient: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            dt: 1e-4,
            horizon: 10.0,
            record_stride: 1,
            transient: 2.0,
        }
    }
}

impl SimSettings {
    /// Number of steps; `horizon / dt` must be an integer up to rounding.
    pub fn steps(&self) -> Result<usize, SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0 && self.horizon.is_finite() && self.horizon > 0.0)
        {
            return Err(SimError::InvalidSettings(
                "dt and horizon must be positive".into(),
            ));
        }
        if self.record_stride == 0 {
            return Err(SimError::InvalidSettings("record_stride must be at least 1".into()));
        }
        let ratio = self.horizon / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
            return Err(SimError::InvalidSettings(format!(
                "horizon {} is not an integer multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(steps as usize)
    }

    /// Same settings with `dt` divided by `factor` and the stride scaled so
    /// recorded times coincide.
    pub fn refined(&self, factor: usize) -> SimSettings {
        SimSettings {
            dt: self.dt / factor as f64,
            record_stride: self.record_stride * factor,
            ..*self
        }
    }
}

/// Discrete sup-norms over the integration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `max_t ‖x̂ - x‖_∞`.
    pub sup_xtilde: f64,
    pub sup_xtilde_components: Vec<f64>,
    pub sup_x_components: Vec<f64>,
    /// `max_t ‖x - x_ref‖_∞`.
    pub sup_e: Option<f64>,
    /// `max_t |u - u_ref|`.
    pub sup_u_err: Option<f64>,
    /// `max ‖x̃‖_∞` over the final tenth of the horizon.
    pub terminal_xtilde: f64,
    /// RMS of `cᵀx - r` after the transient window.
    pub tracking_rms_after: f64,
    pub transient: f64,
    /// `max_t` of `x̃ᵀPx̃ + (‖θ̃‖² + σ̃² + ω̃²)/Γc`.
    pub sup_lyapunov: f64,
    pub sup_u: f64,
    pub steps: usize,
}

impl Metrics {
    fn new(n: usize, with_reference: bool, transient: f64) -> Self {
        Metrics {
            sup_xtilde: 0.0,
            sup_xtilde_components: vec![0.0; n],
            sup_x_components: vec![0.0; n],
            sup_e: with_reference.then_some(0.0),
            sup_u_err: with_reference.then_some(0.0),
            terminal_xtilde: 0.0,
            tracking_rms_after: 0.0,
            transient,
            sup_lyapunov: 0.0,
            sup_u: 0.0,
            steps: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trace: Trace,
    pub metrics: Metrics,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation settings: {0}")]
    InvalidSettings(String),
    #[error("dt·Γc = {0} exceeds the stiffness limit {STIFFNESS_LIMIT}; reduce dt")]
    StiffnessLimit(f64),
    #[error("the reference command must not depend on the state")]
    StateDependentCommand,
    #[error("simulation diverged at t = {t}")]
    Diverged { t: f64, partial: Box<SimOutput> },
    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64, partial: Box<SimOutput> },
    #[error("at t = {t}: {source}")]
    EstimateOutOfBounds {
        t: f64,
        source: ControllerError,
        partial: Box<SimOutput>,
    },
    #[error("signal evaluation failed at t = {t}: {source}")]
    Signal {
        t: f64,
        source: SignalError,
        partial: Box<SimOutput>,
    },
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

impl SimError {
    /// The trace recorded up to the failure, if any.
    pub fn partial(&self) -> Option<&SimOutput> {
        match self {
            SimError::Diverged { partial, .. }
            | SimError::NonFinite { partial, .. }
            | SimError::EstimateOutOfBounds { partial, .. }
            | SimError::Signal { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

#[derive(Debug)]
enum RhsError {
    Signal(SignalError),
    Controller(ControllerError),
}

/// Plant, controller and optional reference system as one state vector
/// `[x, x̂, θ̂, σ̂, ω̂, χ, x_ref, ζ]`.
struct ClosedLoop<'a> {
    plant: &'a PlantSpec,
    cfg: &'a ControllerConfig,
    command: &'a SignalExpr,
    reference: Option<ReferenceSystem>,
    n: usize,
    ctrl_len: usize,
    theta: RefCell<Vec<f64>>,
}

impl ClosedLoop<'_> {
    fn dim(&self) -> usize {
        self.n + self.ctrl_len + self.reference.as_ref().map_or(0, |r| r.state_len(self.n))
    }

    fn ctrl_range(&self) -> std::ops::Range<usize> {
        self.n..self.n + self.ctrl_len
    }

    fn ref_start(&self) -> usize {
        self.n + self.ctrl_len
    }
}

impl OdeSystem for ClosedLoop<'_> {
    type Error = RhsError;

    fn dim(&self) -> usize {
        ClosedLoop::dim(self)
    }

    fn derivative(&self, t: f64, s: &[f64], ds: &mut [f64]) -> Result<(), RhsError> {
        let n = self.n;
        let mut theta = self.theta.borrow_mut();
        self.plant.theta_into(t, &mut theta).map_err(RhsError::Signal)?;
        let r = self.command.eval_unchecked(t, &[]).map_err(RhsError::Signal)?;
        let (x, rest) = s.split_at(n);
        let (dx, drest) = ds.split_at_mut(n);
        let (cs, rs) = rest.split_at(self.ctrl_len);
        let (dcs, drs) = drest.split_at_mut(self.ctrl_len);
        let u = self.cfg.rhs(x, r, cs, dcs).map_err(RhsError::Controller)?;
        let sigma = self.plant.sigma(t, x).map_err(RhsError::Signal)?;
        self.plant.derivative_with(x, u, &theta, sigma, dx);
        if let Some(refsys) = &self.reference {
            refsys
                .rhs(self.plant, t, r, &theta, rs, drs)
                .map_err(RhsError::Signal)?;
        }
        Ok(())
    }
}

/// Values derived from a full state at one grid point.
struct Outputs {
    u: f64,
    u_ref: f64,
    r: f64,
    sigma: f64,
}

/// Integrates plant, controller and (optionally) reference system on one grid.
///
/// The caller is responsible for checking the certificate first; this
/// function only enforces the integrator's own guards.
pub fn run_scenario(
    plant: &PlantSpec,
    cfg: &ControllerConfig,
    command: &SignalExpr,
    settings: &SimSettings,
    with_reference: bool,
) -> Result<SimOutput, SimError> {
    let steps = settings.steps()?;
    let mut warnings = Vec::new();
    let stiffness = settings.dt * cfg.gamma_c;
    if stiffness > STIFFNESS_LIMIT {
        return Err(SimError::StiffnessLimit(stiffness));
    }
    if stiffness > STIFFNESS_WARN {
        let msg = format!(
            "dt·Γc = {stiffness} exceeds {STIFFNESS_WARN}; qualify dt with a step-convergence check"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    if command.depends_on_state() {
        return Err(SimError::StateDependentCommand);
    }
    if cfg.n() != plant.n() {
        return Err(SimError::InvalidSettings(
            "controller and plant dimensions differ".into(),
        ));
    }

    let n = plant.n();
    let reference = if with_reference {
        Some(ReferenceSystem::new(plant, cfg)?)
    } else {
        None
    };
    let sys = ClosedLoop {
        plant,
        cfg,
        command,
        reference,
        n,
        ctrl_len: cfg.state_len(),
        theta: RefCell::new(vec![0.0; n]),
    };

    let mut state = Vec::with_capacity(sys.dim());
    state.extend(plant.x0.iter());
    state.extend(ControllerState::initial(cfg, &plant.x0).pack());
    if let Some(refsys) = &sys.reference {
        state.extend(plant.x0.iter());
        state.extend(std::iter::repeat_n(0.0, refsys.filter.n_states()));
    }

    let capacity = steps / settings.record_stride + 2;
    let mut out = SimOutput {
        trace: Trace::with_capacity(n, with_reference, capacity),
        metrics: Metrics::new(n, with_reference, settings.transient),
        warnings,
    };
    let terminal_start = settings.horizon * (1.0 - TERMINAL_FRACTION);
    let mut rms_acc = 0.0;
    let mut rms_count = 0usize;
    let mut stepper = Rk4::new(sys.dim());

    for k in 0..=steps {
        let t = k as f64 * settings.dt;
        let o = match observe(&sys, t, &state) {
            Ok(o) => o,
            Err(source) => {
                return Err(SimError::Signal {
                    t,
                    source,
                    partial: Box::new(out),
                })
            }
        };
        if state.iter().any(|v| v.abs() > DIVERGENCE_THRESHOLD)
            || o.u.abs() > DIVERGENCE_THRESHOLD
        {
            return Err(SimError::Diverged {
                t,
                partial: Box::new(out),
            });
        }
        accumulate(&sys, t, &state, &o, terminal_start, &mut out.metrics);
        if t >= settings.transient {
            let y: f64 = plant.c.iter().zip(&state[..n]).map(|(c, x)| c * x).sum();
            rms_acc += (y - o.r).powi(2);
            rms_count += 1;
        }
        if k % settings.record_stride == 0 || k == steps {
            out.trace.push(t, &state, n, sys.ctrl_range(), sys.ref_start(), o.u, o.u_ref, o.r);
        }
        out.metrics.steps = k;
        if k == steps {
            break;
        }
        match stepper.step(&sys, t, &mut state, settings.dt) {
            Ok(()) => cfg.clamp_estimates(&mut state[sys.ctrl_range()]),
            Err(StepError::NonFinite(_)) => {
                return Err(SimError::NonFinite {
                    t,
                    partial: Box::new(out),
                })
            }
            Err(StepError::System(RhsError::Signal(source))) => {
                return Err(SimError::Signal {
                    t,
                    source,
                    partial: Box::new(out),
                })
            }
            Err(StepError::System(RhsError::Controller(source))) => {
                return Err(SimError::EstimateOutOfBounds {
                    t,
                    source,
                    partial: Box::new(out),
                })
            }
        }
    }
    out.metrics.tracking_rms_after = if rms_count > 0 {
        (rms_acc / rms_count as f64).sqrt()
    } else {
        0.0
    };
    Ok(out)
}

fn observe(sys: &ClosedLoop, t: f64, state: &[f64]) -> Result<Outputs, SignalError> {
    let n = sys.n;
    let r = sys.command.eval_unchecked(t, &[])?;
    let chi = &state[sys.ctrl_range()][2 * n + 2..];
    let u = sys.cfg.control_output(chi);
    let mut theta = sys.theta.borrow_mut();
    sys.plant.theta_into(t, &mut theta)?;
    let sigma = sys.plant.sigma(t, &state[..n])?;
    let u_ref = match &sys.reference {
        Some(refsys) => refsys.output(sys.plant, t, r, &theta, &state[sys.ref_start()..])?,
        None => f64::NAN,
    };
    Ok(Outputs { u, u_ref, r, sigma })
}

fn accumulate(
    sys: &ClosedLoop,
    t: f64,
    state: &[f64],
    o: &Outputs,
    terminal_start: f64,
    m: &mut Metrics,
) {
    let n = sys.n;
    let cfg = sys.cfg;
    let x = &state[..n];
    let cs = &state[sys.ctrl_range()];
    let x_hat = &cs[..n];
    let mut xt_inf: f64 = 0.0;
    for i in 0..n {
        let xt = (x_hat[i] - x[i]).abs();
        xt_inf = xt_inf.max(xt);
        m.sup_xtilde_components[i] = m.sup_xtilde_components[i].max(xt);
        m.sup_x_components[i] = m.sup_x_components[i].max(x[i].abs());
    }
    m.sup_xtilde = m.sup_xtilde.max(xt_inf);
    if t >= terminal_start {
        m.terminal_xtilde = m.terminal_xtilde.max(xt_inf);
    }
    m.sup_u = m.sup_u.max(o.u.abs());
    if let (Some(e), Some(du)) = (m.sup_e.as_mut(), m.sup_u_err.as_mut()) {
        let x_ref = &state[sys.ref_start()..sys.ref_start() + n];
        for i in 0..n {
            *e = e.max((x[i] - x_ref[i]).abs());
        }
        *du = du.max((o.u - o.u_ref).abs());
    }

    // Lyapunov function with the true parameters; `observe` left θ(t) in
    // the scratch buffer.
    let theta = sys.theta.borrow();
    let p = &cfg.lyap.p;
    let mut v = 0.0;
    for i in 0..n {
        for j in 0..n {
            v += (x_hat[i] - x[i]) * p[(i, j)] * (x_hat[j] - x[j]);
        }
    }
    let mut est = 0.0;
    for i in 0..n {
        est += (cs[n + i] - theta[i]).powi(2);
    }
    est += (cs[2 * n] - o.sigma).powi(2);
    est += (cs[2 * n + 1] - sys.plant.true_omega).powi(2);
    v += est / cfg.gamma_c;
    m.sup_lyapunov = m.sup_lyapunov.max(v);
}

/// Maximum pointwise deviation between runs at `settings.dt` and half of it,
/// compared on the coarse recorded grid over every recorded column.
pub fn step_convergence_check(
    plant: &PlantSpec,
    cfg: &ControllerConfig,
    command: &SignalExpr,
    settings: &SimSettings,
    with_reference: bool,
) -> Result<f64, SimError> {
    let coarse = run_scenario(plant, cfg, command, settings, with_reference)?;
    let fine = run_scenario(plant, cfg, command, &settings.refined(2), with_reference)?;
    Ok(coarse.trace.max_deviation(&fine.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{integrator, Estimates, DEFAULT_PROJECTION_EPS};
    use crate::plant::{Interval, UncertaintySets};
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn linear_plant() -> (PlantSpec, UncertaintySets) {
        let plant = PlantSpec {
            a_m: dmatrix![0.0, 1.0; -1.0, -1.4],
            b: dvector![0.0, 1.0],
            c: dvector![1.0, 0.0],
            true_omega: 1.0,
            true_theta: vec![SignalExpr::constant(0.0, 2); 2],
            true_sigma: SignalExpr::constant(0.0, 2),
            x0: dvector![0.0, 0.0],
        };
        let sets = UncertaintySets {
            omega: Interval::new(0.5, 1.5),
            theta_box: vec![Interval::symmetric(1.0); 2],
            delta: 1.0,
            d_theta: 0.0,
            d_sigma: 0.0,
        };
        (plant, sets)
    }

    fn exact_config(plant: &PlantSpec, sets: UncertaintySets, gamma_c: f64) -> ControllerConfig {
        ControllerConfig::new(
            plant,
            sets,
            20.0,
            gamma_c,
            integrator(),
            &DMatrix::identity(2, 2),
            DEFAULT_PROJECTION_EPS,
            Some(Estimates {
                theta: dvector![0.0, 0.0],
                sigma: 0.0,
                omega: 1.0,
            }),
        )
        .unwrap()
    }

    #[test]
    fn settings_validation() {
        let s = SimSettings {
            dt: 0.3,
            horizon: 1.0,
            ..SimSettings::default()
        };
        assert!(matches!(s.steps(), Err(SimError::InvalidSettings(_))));
        let s = SimSettings {
            dt: 0.25,
            horizon: 1.0,
            ..SimSettings::default()
        };
        assert_eq!(s.steps().unwrap(), 4);
    }

    #[test]
    fn zero_uncertainty_keeps_predictor_exact() {
        let (plant, sets) = linear_plant();
        let cfg = exact_config(&plant, sets, 100.0);
        let r = SignalExpr::parse("1", 2).unwrap();
        let settings = SimSettings {
            dt: 1e-3,
            horizon: 20.0,
            record_stride: 10,
            transient: 1.0,
        };
        let out = run_scenario(&plant, &cfg, &r, &settings, true).unwrap();
        assert!(out.metrics.sup_xtilde < 1e-12);
        // With exact estimates the loop equals the reference system.
        assert!(out.metrics.sup_e.unwrap() < 1e-12);
        assert!(out.metrics.sup_u_err.unwrap() < 1e-12);
        let last = out.trace.len() - 1;
        assert!((out.trace.x_at(last)[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn stiffness_guard() {
        let (plant, sets) = linear_plant();
        let r = SignalExpr::parse("1", 2).unwrap();
        let settings = SimSettings {
            dt: 1e-3,
            horizon: 0.01,
            record_stride: 1,
            transient: 0.0,
        };
        let cfg = exact_config(&plant, sets.clone(), 2000.0);
        assert!(matches!(
            run_scenario(&plant, &cfg, &r, &settings, false),
            Err(SimError::StiffnessLimit(_))
        ));
        let cfg = exact_config(&plant, sets, 500.0);
        let out = run_scenario(&plant, &cfg, &r, &settings, false).unwrap();
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn rk4_order_on_linear_plant() {
        let (plant, sets) = linear_plant();
        let cfg = exact_config(&plant, sets, 1.0);
        let r = SignalExpr::parse("cos(t)", 2).unwrap();
        let settings = SimSettings {
            dt: 1e-2,
            horizon: 2.0,
            record_stride: 1,
            transient: 0.0,
        };
        let dev1 = step_convergence_check(&plant, &cfg, &r, &settings, true).unwrap();
        let dev2 = step_convergence_check(&plant, &cfg, &r, &settings.refined(2), true).unwrap();
        assert!(dev1 < 1e-4, "{dev1}");
        // Fourth order: halving dt divides the deviation by about 16.
        assert!(dev1 / dev2 > 10.0, "{dev1} / {dev2}");
    }

    #[test]
    fn divergence_returns_partial_trace() {
        let (mut plant, sets) = linear_plant();
        // θ₂ = 5 lies outside the controller's box and a tiny Γc cannot
        // compensate, so the closed loop grows like e^{3.3t}.
        plant.true_theta = vec![SignalExpr::constant(0.0, 2), SignalExpr::constant(5.0, 2)];
        plant.x0 = dvector![0.1, 0.0];
        let cfg = exact_config(&plant, sets, 1e-30);
        let r = SignalExpr::parse("0", 2).unwrap();
        let settings = SimSettings {
            dt: 1e-2,
            horizon: 20.0,
            record_stride: 1,
            transient: 0.0,
        };
        let err = run_scenario(&plant, &cfg, &r, &settings, false).unwrap_err();
        match &err {
            SimError::Diverged { t, partial } => {
                assert!(*t > 1.0 && *t < 20.0);
                assert!(partial.trace.len() > 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn state_dependent_command_is_rejected() {
        let (plant, sets) = linear_plant();
        let cfg = exact_config(&plant, sets, 1.0);
        let r = SignalExpr::parse("x1", 2).unwrap();
        assert_eq!(
            run_scenario(&plant, &cfg, &r, &SimSettings::default(), false),
            Err(SimError::StateDependentCommand)
        );
    }
}
