//! Scenario files, built-in presets, and the batch operations run on them.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{
    certify, compute_l, g_system, uniform_grid, BoundsError, Certificate, CertificateInputs,
    DEFAULT_CO_ZERO, DEFAULT_HURWITZ_GRID, DEFAULT_OMEGA_GRID_POINTS,
};
use crate::controller::{ControllerConfig, ControllerError, Estimates, DEFAULT_PROJECTION_EPS};
use crate::l1norm::{l1_gain_mimo, L1Error, DEFAULT_REL_TOL};
use crate::lti::{ss_of_tf, LtiError, Polynomial, RationalTf, StateSpace};
use crate::plant::{robot_arm_preset, ArmDisturbance, Interval, PlantError, PlantSpec, UncertaintySets};
use crate::signals::{SignalError, SignalExpr};
use crate::sim::{run_scenario, SimError, SimOutput, SimSettings};

/// Environment variable capping the worker threads of sweeps.
pub const THREADS_ENV: &str = "L1ADAPT_THREADS";
/// Additive slack on the predictor-error bound check.
pub const XTILDE_BOUND_SLACK: f64 = 1e-3;
/// Target `dt·Γc` used when a sweep reduces the step.
pub const SWEEP_STIFFNESS: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub plant: PlantSection,
    pub sets: SetsSection,
    pub controller: ControllerSection,
    pub reference: ReferenceSection,
    pub sim: SimSection,
    #[serde(default)]
    pub bounds: BoundsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub a_m: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub true_omega: f64,
    pub theta: Vec<String>,
    pub sigma: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetsSection {
    pub omega: [f64; 2],
    pub theta: Vec<[f64; 2]>,
    pub delta: f64,
    pub d_theta: f64,
    pub d_sigma: f64,
}

/// `D(s) = num(s)/den(s)`, coefficients in descending powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            num: vec![1.0],
            den: vec![1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub theta: Vec<f64>,
    pub sigma: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub k: f64,
    pub gamma_c: f64,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_eps")]
    pub projection_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub r: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_transient")]
    pub transient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub co_zeros: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_grid: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    pub conservative_lambda: bool,
    #[serde(default = "default_hurwitz_grid")]
    pub hurwitz_grid: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

impl Default for BoundsSection {
    fn default() -> Self {
        BoundsSection {
            co_zeros: None,
            omega_grid: None,
            conservative_lambda: true,
            hurwitz_grid: DEFAULT_HURWITZ_GRID,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

fn default_eps() -> f64 {
    DEFAULT_PROJECTION_EPS
}
fn default_stride() -> usize {
    1
}
fn default_transient() -> f64 {
    SimSettings::default().transient
}
fn default_true() -> bool {
    true
}
fn default_hurwitz_grid() -> usize {
    DEFAULT_HURWITZ_GRID
}
fn default_rel_tol() -> f64 {
    DEFAULT_REL_TOL
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("cannot serialize scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("{field}: {source}")]
    Expression { field: String, source: SignalError },
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    L1(#[from] L1Error),
    #[error("certificate failed (‖G‖·L = {value}); pass the unsafe flag to run anyway")]
    CertificateFailed { value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub plant: PlantSpec,
    pub sets: UncertaintySets,
    pub d_filter: StateSpace,
    pub q: DMatrix<f64>,
    pub initial: Estimates,
    pub command: SignalExpr,
    pub settings: SimSettings,
    pub omega_grid: Vec<f64>,
    pub co_zeros: Vec<f64>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ScenarioError> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(ScenarioError::Schema(format!("{what} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn vector_of_len(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>, ScenarioError> {
    if v.len() != n {
        return Err(ScenarioError::Schema(format!("{what} has length {}, expected {n}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn expression(text: &str, n: usize, field: String) -> Result<SignalExpr, ScenarioError> {
    SignalExpr::parse(text, n).map_err(|source| ScenarioError::Expression { field, source })
}

fn descending(coeffs: &[f64]) -> Polynomial {
    Polynomial::new(coeffs.iter().rev().copied().collect())
}

fn interval(pair: [f64; 2], what: &str) -> Result<Interval, ScenarioError> {
    if !(pair[0].is_finite() && pair[1].is_finite() && pair[0] <= pair[1]) {
        return Err(ScenarioError::Schema(format!("{what} must be [lo, hi] with lo <= hi")));
    }
    Ok(Interval::new(pair[0], pair[1]))
}

/// Samples used when checking the declared bounds over the horizon.
fn validation_samples(horizon: f64) -> usize {
    ((horizon * 400.0) as usize).clamp(2001, 200_001)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text)?;
        Scenario::from_file(file)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ScenarioError> {
        Scenario::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(&self.file)?)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let p = &file.plant;
        let a_m = matrix(&p.a_m, "plant.a_m")?;
        let n = a_m.nrows();
        if a_m.ncols() != n {
            return Err(ScenarioError::Schema("plant.a_m must be square".into()));
        }
        let b = vector_of_len(&p.b, n, "plant.b")?;
        let c = vector_of_len(&p.c, n, "plant.c")?;
        let x0 = match &p.x0 {
            Some(v) => vector_of_len(v, n, "plant.x0")?,
            None => DVector::zeros(n),
        };
        if p.theta.len() != n {
            return Err(ScenarioError::Schema(format!(
                "plant.theta has {} expressions, expected {n}",
                p.theta.len()
            )));
        }
        let true_theta = p
            .theta
            .iter()
            .enumerate()
            .map(|(i, s)| expression(s, n, format!("plant.theta[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let true_sigma = expression(&p.sigma, n, "plant.sigma".into())?;
        let plant = PlantSpec {
            a_m,
            b,
            c,
            true_omega: p.true_omega,
            true_theta,
            true_sigma,
            x0,
        };

        let s = &file.sets;
        if s.theta.len() != n {
            return Err(ScenarioError::Schema(format!(
                "sets.theta has {} intervals, expected {n}",
                s.theta.len()
            )));
        }
        let sets = UncertaintySets {
            omega: interval(s.omega, "sets.omega")?,
            theta_box: s
                .theta
                .iter()
                .map(|&pair| interval(pair, "sets.theta"))
                .collect::<Result<_, _>>()?,
            delta: s.delta,
            d_theta: s.d_theta,
            d_sigma: s.d_sigma,
        };

        let sim = &file.sim;
        let settings = SimSettings {
            dt: sim.dt,
            horizon: sim.horizon,
            record_stride: sim.record_stride,
            transient: sim.transient,
        };
        settings
            .steps()
            .map_err(|e| ScenarioError::Schema(e.to_string()))?;
        plant.validate(&sets, settings.horizon, validation_samples(settings.horizon))?;

        let ctrl = &file.controller;
        let f = &ctrl.filter;
        if f.num.is_empty() || f.den.is_empty() {
            return Err(ScenarioError::Schema("controller.filter needs num and den".into()));
        }
        let d_filter = ss_of_tf(&RationalTf::siso(descending(&f.num), descending(&f.den)))?;
        let q = match &ctrl.q {
            Some(rows) => matrix(rows, "controller.q")?,
            None => DMatrix::identity(n, n),
        };
        let initial = match &ctrl.initial {
            Some(init) => Estimates {
                theta: vector_of_len(&init.theta, n, "controller.initial.theta")?,
                sigma: init.sigma,
                omega: init.omega,
            },
            None => Estimates::box_centers(&sets),
        };
        let command = expression(&file.reference.r, n, "reference.r".into())?;
        if command.depends_on_state() {
            return Err(ScenarioError::Schema("reference.r must depend on t only".into()));
        }

        let bounds = &file.bounds;
        let omega_grid = match &bounds.omega_grid {
            Some(g) => g.clone(),
            None => uniform_grid(sets.omega, DEFAULT_OMEGA_GRID_POINTS),
        };
        if omega_grid.is_empty() || omega_grid.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(ScenarioError::Schema("bounds.omega_grid must hold positive values".into()));
        }
        let co_zeros = bounds
            .co_zeros
            .clone()
            .unwrap_or_else(|| vec![DEFAULT_CO_ZERO; n - 1]);
        if !(bounds.rel_tol > 0.0 && bounds.rel_tol < 1.0) {
            return Err(ScenarioError::Schema("bounds.rel_tol must lie in (0, 1)".into()));
        }

        let scenario = Scenario {
            file,
            plant,
            sets,
            d_filter,
            q,
            initial,
            command,
            settings,
            omega_grid,
            co_zeros,
        };
        // Surfaces gain, filter and estimate errors at load time.
        scenario.config()?;
        Ok(scenario)
    }

    pub fn name(&self) -> &str {
        self.file.name.as_deref().unwrap_or("scenario")
    }

    pub fn gamma_c(&self) -> f64 {
        self.file.controller.gamma_c
    }

    pub fn config(&self) -> Result<ControllerConfig, ControllerError> {
        self.config_with_gamma(self.gamma_c())
    }

    pub fn config_with_gamma(&self, gamma_c: f64) -> Result<ControllerConfig, ControllerError> {
        ControllerConfig::new(
            &self.plant,
            self.sets.clone(),
            self.file.controller.k,
            gamma_c,
            self.d_filter.clone(),
            &self.q,
            self.file.controller.projection_eps,
            Some(self.initial.clone()),
        )
    }

    /// `θ` as a vector when every component is a constant expression.
    pub fn constant_theta(&self) -> Option<DVector<f64>> {
        let exprs = &self.plant.true_theta;
        if exprs.iter().any(|e| e.depends_on_time() || e.depends_on_state()) {
            return None;
        }
        let vals: Result<Vec<f64>, _> = exprs.iter().map(|e| e.eval_at(0.0)).collect();
        vals.ok().map(DVector::from_vec)
    }

    pub fn certify_with(&self, cfg: &ControllerConfig) -> Result<Certificate, BoundsError> {
        let b = &self.file.bounds;
        let inputs = CertificateInputs {
            plant: &self.plant,
            cfg,
            omega_grid: self.omega_grid.clone(),
            co_zeros: self.co_zeros.clone(),
            conservative_lambda: b.conservative_lambda,
            constant_theta: self.constant_theta(),
            hurwitz_grid: b.hurwitz_grid,
            rel_tol: b.rel_tol,
        };
        with_thread_pool(|| certify(&inputs))
    }

    pub fn certify(&self) -> Result<Certificate, RunError> {
        let cfg = self.config().map_err(ScenarioError::from)?;
        Ok(self.certify_with(&cfg)?)
    }

    /// Certifies, then simulates unless the certificate fails and
    /// `unsafe_run` is false.
    pub fn simulate(&self, with_reference: bool, unsafe_run: bool) -> Result<SimReport, RunError> {
        self.simulate_with(self.gamma_c(), &self.settings, with_reference, unsafe_run)
    }

    pub fn simulate_with(
        &self,
        gamma_c: f64,
        settings: &SimSettings,
        with_reference: bool,
        unsafe_run: bool,
    ) -> Result<SimReport, RunError> {
        let cfg = self.config_with_gamma(gamma_c).map_err(ScenarioError::from)?;
        let certificate = self.certify_with(&cfg)?;
        let certified = certificate.passes();
        if !certified && !unsafe_run {
            return Err(RunError::CertificateFailed {
                value: certificate.l1_condition_value,
            });
        }
        let output = run_scenario(&self.plant, &cfg, &self.command, settings, with_reference)?;
        let checks = if certified {
            bound_checks(&certificate, &output)
        } else {
            Vec::new()
        };
        Ok(SimReport {
            output,
            certificate,
            certified,
            checks,
        })
    }

    /// Settings for `gamma_c` with `dt` reduced to respect
    /// [`SWEEP_STIFFNESS`], and only the endpoints recorded.
    pub fn sweep_settings(&self, gamma_c: f64) -> SimSettings {
        let s = self.settings;
        let target = s.dt.min(SWEEP_STIFFNESS / gamma_c);
        let steps = (s.horizon / target).ceil().max(1.0);
        SimSettings {
            dt: s.horizon / steps,
            record_stride: steps as usize,
            ..s
        }
    }

    /// Runs the scenario with reference co-simulation for every `Γc`.
    pub fn sweep_gamma(&self, gammas: &[f64]) -> Result<Vec<SweepRow>, RunError> {
        if gammas.is_empty() || gammas.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(RunError::InvalidArgument("gammas must be positive".into()));
        }
        with_thread_pool(|| {
            gammas
                .par_iter()
                .map(|&g| {
                    let settings = self.sweep_settings(g);
                    let rep = self.simulate_with(g, &settings, true, false)?;
                    let m = &rep.output.metrics;
                    Ok(SweepRow {
                        gamma_c: g,
                        dt: settings.dt,
                        sup_xtilde: m.sup_xtilde,
                        sup_e: m.sup_e.unwrap_or(f64::NAN),
                        sup_u_err: m.sup_u_err.unwrap_or(f64::NAN),
                        gamma1: rep.certificate.gamma1,
                        gamma2: rep.certificate.gamma2,
                    })
                })
                .collect()
        })
    }

    /// `‖G‖_L1 · L` over `ωk` with `L` from the uninflated sets.
    pub fn fig2_curve(&self, wk: &[f64]) -> Result<Vec<(f64, f64)>, RunError> {
        fig2_curve(
            &self.plant.a_m,
            &self.plant.b,
            &self.d_filter,
            compute_l(&self.sets),
            wk,
            self.file.bounds.rel_tol,
        )
    }

    /// Robot-arm scenario with `k = 60`, `Γc = 10⁴`, `r = cos(πt)` over
    /// 10 s, certified at the true `ω`.
    pub fn robot_arm(disturbance: ArmDisturbance) -> Scenario {
        let (plant, sets) = robot_arm_preset(disturbance);
        let file = ScenarioFile {
            name: Some(format!("robot_arm_{}", disturbance_name(disturbance))),
            plant: PlantSection {
                a_m: rows_of(&plant.a_m),
                b: plant.b.iter().copied().collect(),
                c: plant.c.iter().copied().collect(),
                x0: Some(plant.x0.iter().copied().collect()),
                true_omega: plant.true_omega,
                theta: plant.true_theta.iter().map(|e| e.to_string()).collect(),
                sigma: disturbance.expression().into(),
            },
            sets: sets_section(&sets),
            controller: ControllerSection {
                k: 60.0,
                gamma_c: 1e4,
                filter: FilterSection::default(),
                q: None,
                projection_eps: DEFAULT_PROJECTION_EPS,
                initial: None,
            },
            reference: ReferenceSection {
                r: "cos(pi*t)".into(),
            },
            sim: SimSection {
                dt: 2.5e-5,
                horizon: 10.0,
                record_stride: 4,
                transient: 2.0,
            },
            bounds: BoundsSection {
                omega_grid: Some(vec![plant.true_omega]),
                ..BoundsSection::default()
            },
        };
        Scenario::from_file(file).expect("robot-arm preset is valid")
    }

    /// Robot arm with `θ = [2, 2]`, `σ = 1`, `k = 60` over 40 s.
    pub fn constant_theta_preset() -> Scenario {
        let mut file = Scenario::robot_arm(ArmDisturbance::Sine).file;
        file.name = Some("constant_theta".into());
        file.plant.theta = vec!["2".into(), "2".into()];
        file.plant.sigma = "1".into();
        file.sets.d_theta = 0.0;
        file.sets.d_sigma = 0.0;
        file.sim.horizon = 40.0;
        file.sim.record_stride = 40;
        Scenario::from_file(file).expect("constant-theta preset is valid")
    }

    /// Built-in scenarios by name.
    pub fn builtin(name: &str) -> Option<Scenario> {
        match name {
            "fig3" => Some(Scenario::robot_arm(ArmDisturbance::Sine)),
            "fig4" => Some(Scenario::robot_arm(ArmDisturbance::LowFrequency)),
            "fig5" => Some(Scenario::robot_arm(ArmDisturbance::HighFrequency)),
            "constant_theta" => Some(Scenario::constant_theta_preset()),
            _ => None,
        }
    }

    pub const BUILTIN_NAMES: [&'static str; 4] = ["fig3", "fig4", "fig5", "constant_theta"];
}

fn disturbance_name(d: ArmDisturbance) -> &'static str {
    match d {
        ArmDisturbance::Sine => "sine",
        ArmDisturbance::LowFrequency => "low_frequency",
        ArmDisturbance::HighFrequency => "high_frequency",
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn sets_section(sets: &UncertaintySets) -> SetsSection {
    SetsSection {
        omega: [sets.omega.lo, sets.omega.hi],
        theta: sets.theta_box.iter().map(|i| [i.lo, i.hi]).collect(),
        delta: sets.delta,
        d_theta: sets.d_theta,
        d_sigma: sets.d_sigma,
    }
}

/// One measured quantity against its analytic bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub name: &'static str,
    pub measured: f64,
    pub bound: f64,
}

impl BoundCheck {
    pub fn pass(&self) -> bool {
        self.measured <= self.bound
    }
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub output: SimOutput,
    pub certificate: Certificate,
    pub certified: bool,
    /// Empty when the certificate failed.
    pub checks: Vec<BoundCheck>,
}

impl SimReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(BoundCheck::pass)
    }
}

fn bound_checks(cert: &Certificate, out: &SimOutput) -> Vec<BoundCheck> {
    let m = &out.metrics;
    let mut checks = vec![BoundCheck {
        name: "xtilde",
        measured: m.sup_xtilde,
        bound: cert.xtilde_bound + XTILDE_BOUND_SLACK,
    }];
    if let (Some(e), Some(du)) = (m.sup_e, m.sup_u_err) {
        checks.push(BoundCheck {
            name: "x_minus_xref",
            measured: e,
            bound: cert.gamma1,
        });
        checks.push(BoundCheck {
            name: "u_minus_uref",
            measured: du,
            bound: cert.gamma2,
        });
        if let (Some(g3), Some(g4)) = (cert.gamma3, cert.gamma4) {
            checks.push(BoundCheck {
                name: "x_minus_xref_constant_theta",
                measured: e,
                bound: g3,
            });
            checks.push(BoundCheck {
                name: "u_minus_uref_constant_theta",
                measured: du,
                bound: g4,
            });
        }
    }
    checks
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub gamma_c: f64,
    pub dt: f64,
    pub sup_xtilde: f64,
    pub sup_e: f64,
    pub sup_u_err: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

/// True when `sup_e` strictly decreases as `Γc` increases.
pub fn sweep_is_monotone(rows: &[SweepRow]) -> bool {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.gamma_c.total_cmp(&b.gamma_c));
    sorted.windows(2).all(|w| w[1].sup_e < w[0].sup_e)
}

/// `‖G‖_L1 · L` at each `ωk`, evaluated in parallel.
pub fn fig2_curve(
    a_m: &DMatrix<f64>,
    b: &DVector<f64>,
    d_filter: &StateSpace,
    l: f64,
    wk: &[f64],
    rel_tol: f64,
) -> Result<Vec<(f64, f64)>, RunError> {
    with_thread_pool(|| {
        wk.par_iter()
            .map(|&w| {
                if l == 0.0 {
                    return Ok((w, 0.0));
                }
                let g = g_system(a_m, b, d_filter, w).map_err(BoundsError::from)?;
                Ok((w, l1_gain_mimo(&g, rel_tol)?.value * l))
            })
            .collect()
    })
}

/// Writes `wk,l1_gain_times_L` rows.
pub fn write_curve_csv<W: std::io::Write>(curve: &[(f64, f64)], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["wk", "l1_gain_times_L"])?;
    for (wk, v) in curve {
        wr.write_record([wk.to_string(), v.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Smallest grid `ωk` with a value below one.
pub fn curve_crossing(curve: &[(f64, f64)]) -> Option<f64> {
    curve
        .iter()
        .filter(|(_, v)| *v < 1.0)
        .map(|(w, _)| *w)
        .min_by(f64::total_cmp)
}

/// True when values do not increase along increasing `ωk`, up to `rel_tol`.
pub fn curve_is_nonincreasing(curve: &[(f64, f64)], rel_tol: f64) -> bool {
    let mut sorted = curve.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    sorted
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 * (1.0 + rel_tol) + f64::MIN_POSITIVE)
}

/// Writes `gamma_c,sup_xtilde,sup_e,sup_u_err,gamma1,gamma2` rows.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["gamma_c", "dt", "sup_xtilde", "sup_e", "sup_u_err", "gamma1", "gamma2"])?;
    for r in rows {
        wr.write_record(
            [r.gamma_c, r.dt, r.sup_xtilde, r.sup_e, r.sup_u_err, r.gamma1, r.gamma2].map(|v| v.to_string()),
        )?;
    }
    wr.flush()?;
    Ok(())
}

/// Parses `lo:hi:steps` into `steps` evenly spaced values.
pub fn parse_range(text: &str) -> Result<Vec<f64>, RunError> {
    let bad = || RunError::InvalidArgument(format!("expected lo:hi:steps, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) || steps == 0 {
        return Err(bad());
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect())
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `f` on a rayon pool limited by [`THREADS_ENV`]. Calls made from
/// inside a pool run on that pool.
pub fn with_thread_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    if rayon::current_thread_index().is_some() {
        return f();
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    match builder.build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for name in Scenario::BUILTIN_NAMES {
            let s = Scenario::builtin(name).unwrap();
            let text = s.to_toml().unwrap();
            let back = Scenario::from_toml(&text).unwrap();
            assert_eq!(back.file, s.file, "{name}");
            assert_eq!(back.plant, s.plant);
            assert_eq!(back.sets, s.sets);
            assert_eq!(back.d_filter, s.d_filter);
            assert_eq!(back.settings, s.settings);
        }
    }

    #[test]
    fn default_filter_is_integrator() {
        let s = Scenario::robot_arm(ArmDisturbance::Sine);
        assert_eq!(s.d_filter, crate::controller::integrator());
    }

    #[test]
    fn schema_errors() {
        let good = Scenario::robot_arm(ArmDisturbance::Sine).to_toml().unwrap();
        let bad_expr = good.replace("sigma = \"sin(pi*t)\"", "sigma = \"sin(pi*t\"");
        assert!(matches!(
            Scenario::from_toml(&bad_expr),
            Err(ScenarioError::Expression { .. })
        ));
        let bad_dim = good.replace("b = [0.0, 1.0]", "b = [0.0, 1.0, 2.0]");
        assert!(matches!(Scenario::from_toml(&bad_dim), Err(ScenarioError::Schema(_))));
        let unknown = format!("{good}\n[extra]\nfoo = 1\n");
        assert!(matches!(Scenario::from_toml(&unknown), Err(ScenarioError::Toml(_))));
        let bad_k = good.replace("k = 60.0", "k = -1.0");
        assert!(matches!(Scenario::from_toml(&bad_k), Err(ScenarioError::Controller(_))));
    }

    #[test]
    fn constant_theta_detection() {
        assert!(Scenario::robot_arm(ArmDisturbance::Sine).constant_theta().is_none());
        let s = Scenario::constant_theta_preset();
        assert_eq!(s.constant_theta(), Some(DVector::from_vec(vec![2.0, 2.0])));
    }

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("5:100:96").unwrap().len(), 96);
        assert_eq!(parse_range("5:100:96").unwrap()[95], 100.0);
        assert_eq!(parse_range("2:2:1").unwrap(), vec![2.0]);
        assert!(parse_range("5:1:3").is_err());
        assert!(parse_range("a:1:3").is_err());
    }

    #[test]
    fn sweep_settings_respect_stiffness() {
        let s = Scenario::robot_arm(ArmDisturbance::Sine);
        for g in [1e2, 1e3, 1e4, 1e5] {
            let st = s.sweep_settings(g);
            assert!(st.dt * g <= SWEEP_STIFFNESS * (1.0 + 1e-12));
            assert!(st.dt <= s.settings.dt);
            assert!(st.steps().is_ok());
        }
    }

    #[test]
    fn monotonicity_check() {
        let row = |g, e| SweepRow {
            gamma_c: g,
            dt: 0.0,
            sup_xtilde: 0.0,
            sup_e: e,
            sup_u_err: 0.0,
            gamma1: 0.0,
            gamma2: 0.0,
        };
        assert!(sweep_is_monotone(&[row(1.0, 2.0)]));
        assert!(sweep_is_monotone(&[row(10.0, 1.0), row(1.0, 2.0)]));
        assert!(!sweep_is_monotone(&[row(1.0, 2.0), row(10.0, 2.0)]));
    }

    #[test]
    fn zero_l_curve_is_zero() {
        let s = Scenario::robot_arm(ArmDisturbance::Sine);
        let curve = fig2_curve(&s.plant.a_m, &s.plant.b, &s.d_filter, 0.0, &[5.0, 50.0], 1e-4)
            .unwrap();
        assert!(curve.iter().all(|&(_, v)| v == 0.0));
    }
}
