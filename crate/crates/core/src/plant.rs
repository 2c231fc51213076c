//! The uncertain plant `ẋ = A_m x + b(ωu + θ(t)ᵀx + σ(t, x))` and the
//! single-link robot-arm preset.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::{controllability_matrix_rank, is_hurwitz, LtiError};
use crate::signals::{SignalError, SignalExpr, BOUND_SLACK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("A_m is not Hurwitz")]
    NotHurwitz,
    #[error("(A_m, b) is not controllable")]
    NotControllable,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid uncertainty sets: {0}")]
    InvalidSets(String),
    #[error("true omega {omega} lies outside [{lo}, {hi}]")]
    OmegaOutsideSet { omega: f64, lo: f64, hi: f64 },
    #[error("theta component {index} depends on the state; only time-varying parameters are supported")]
    ThetaDependsOnState { index: usize },
    #[error("theta component {index} = {value} at t = {t} lies outside its interval")]
    ThetaOutsideSet { index: usize, t: f64, value: f64 },
    #[error("|dtheta/dt| = {rate} at t = {t} exceeds d_theta = {bound}")]
    ThetaRateExceeded { t: f64, rate: f64, bound: f64 },
    #[error("sigma violates its declared bound or rate bound")]
    SigmaBoundExceeded,
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn symmetric(r: f64) -> Self {
        Interval { lo: -r, hi: r }
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Widened by `eps` half-widths on each side.
    pub fn inflated(&self, eps: f64) -> Self {
        let pad = eps * self.half_width();
        Interval {
            lo: self.lo - pad,
            hi: self.hi + pad,
        }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }
}

/// Compact sets Ω, Θ, Δ and the derivative bounds `d_θ`, `d_σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySets {
    pub omega: Interval,
    pub theta_box: Vec<Interval>,
    pub delta: f64,
    pub d_theta: f64,
    pub d_sigma: f64,
}

impl UncertaintySets {
    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |m: &str| Err(PlantError::InvalidSets(m.to_string()));
        if !self.omega.is_valid() || self.omega.lo <= 0.0 {
            return bad("omega interval must satisfy 0 < lo <= hi");
        }
        if self.theta_box.iter().any(|i| !i.is_valid()) {
            return bad("theta intervals must be finite with lo <= hi");
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return bad("delta must be finite and nonnegative");
        }
        if !(self.d_theta.is_finite() && self.d_theta >= 0.0)
            || !(self.d_sigma.is_finite() && self.d_sigma >= 0.0)
        {
            return bad("derivative bounds must be finite and nonnegative");
        }
        Ok(())
    }

    /// Interval for `σ̂`: `[-Δ, Δ]`.
    pub fn sigma_interval(&self) -> Interval {
        Interval::symmetric(self.delta)
    }

    /// Every set widened by `eps` half-widths on each side.
    pub fn inflated(&self, eps: f64) -> UncertaintySets {
        UncertaintySets {
            omega: self.omega.inflated(eps),
            theta_box: self.theta_box.iter().map(|i| i.inflated(eps)).collect(),
            delta: self.delta * (1.0 + eps),
            d_theta: self.d_theta,
            d_sigma: self.d_sigma,
        }
    }
}

/// Plant data with the true (unknown to the controller) parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub a_m: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub true_omega: f64,
    pub true_theta: Vec<SignalExpr>,
    pub true_sigma: SignalExpr,
    pub x0: DVector<f64>,
}

impl PlantSpec {
    pub fn n(&self) -> usize {
        self.a_m.nrows()
    }

    pub fn check_dimensions(&self) -> Result<(), PlantError> {
        let n = self.n();
        let mismatch = |what: &str, got: usize| {
            Err(PlantError::Dimension(format!("{what} has length {got}, expected {n}")))
        };
        if self.a_m.ncols() != n {
            return Err(PlantError::Dimension("A_m must be square".into()));
        }
        if self.b.len() != n {
            return mismatch("b", self.b.len());
        }
        if self.c.len() != n {
            return mismatch("c", self.c.len());
        }
        if self.x0.len() != n {
            return mismatch("x0", self.x0.len());
        }
        if self.true_theta.len() != n {
            return mismatch("theta", self.true_theta.len());
        }
        let exprs = self.true_theta.iter().chain(std::iter::once(&self.true_sigma));
        if exprs.into_iter().any(|e| e.n_states() != n) {
            return Err(PlantError::Dimension(
                "signal expressions are bound to a different state dimension".into(),
            ));
        }
        Ok(())
    }

    /// Structural checks plus sampled checks of the declared bounds over
    /// `[0, horizon]`. The rate of `σ` is checked along `x = 0`.
    pub fn validate(
        &self,
        sets: &UncertaintySets,
        horizon: f64,
        samples: usize,
    ) -> Result<(), PlantError> {
        self.check_dimensions()?;
        sets.validate()?;
        let n = self.n();
        if sets.theta_box.len() != n {
            return Err(PlantError::Dimension(format!(
                "theta box has {} intervals, expected {n}",
                sets.theta_box.len()
            )));
        }
        if !is_hurwitz(&self.a_m, 0.0)? {
            return Err(PlantError::NotHurwitz);
        }
        if controllability_matrix_rank(&self.a_m, &self.b) < n {
            return Err(PlantError::NotControllable);
        }
        if !sets.omega.contains(self.true_omega) {
            return Err(PlantError::OmegaOutsideSet {
                omega: self.true_omega,
                lo: sets.omega.lo,
                hi: sets.omega.hi,
            });
        }
        if let Some(index) = self.true_theta.iter().position(|e| e.depends_on_state()) {
            return Err(PlantError::ThetaDependsOnState { index });
        }
        self.check_theta_samples(sets, horizon, samples)?;
        let sigma = crate::signals::SignalSpec {
            expr: self.true_sigma.clone(),
            declared_bound: sets.delta,
            declared_rate_bound: sets.d_sigma,
        };
        if !crate::signals::verify_declared_bounds(&sigma, horizon, samples)? {
            return Err(PlantError::SigmaBoundExceeded);
        }
        Ok(())
    }

    fn check_theta_samples(
        &self,
        sets: &UncertaintySets,
        horizon: f64,
        samples: usize,
    ) -> Result<(), PlantError> {
        let samples = samples.max(2);
        let h = 1e-6 * horizon.max(1.0);
        for k in 0..samples {
            let t = horizon * k as f64 / (samples - 1) as f64;
            let mut rate_sq = 0.0;
            for (index, (expr, box_i)) in self.true_theta.iter().zip(&sets.theta_box).enumerate() {
                let value = expr.eval_at(t)?;
                let slack = BOUND_SLACK * box_i.max_abs();
                if value < box_i.lo - slack || value > box_i.hi + slack {
                    return Err(PlantError::ThetaOutsideSet { index, t, value });
                }
                let rate = (expr.eval_at(t + h)? - expr.eval_at(t - h)?) / (2.0 * h);
                rate_sq += rate * rate;
            }
            let rate = rate_sq.sqrt();
            if rate > sets.d_theta * (1.0 + BOUND_SLACK) {
                return Err(PlantError::ThetaRateExceeded {
                    t,
                    rate,
                    bound: sets.d_theta,
                });
            }
        }
        Ok(())
    }

    /// Writes `θ(t)` into `out`.
    #[inline]
    pub fn theta_into(&self, t: f64, out: &mut [f64]) -> Result<(), SignalError> {
        for (o, e) in out.iter_mut().zip(&self.true_theta) {
            *o = e.eval_unchecked(t, &[])?;
        }
        Ok(())
    }

    #[inline]
    pub fn sigma(&self, t: f64, x: &[f64]) -> Result<f64, SignalError> {
        self.true_sigma.eval_unchecked(t, x)
    }

    /// `A_m x + b(ωu + θᵀx + σ)` for given parameter values, written to `dx`.
    #[inline]
    pub fn derivative_with(&self, x: &[f64], u: f64, theta: &[f64], sigma: f64, dx: &mut [f64]) {
        let n = x.len();
        let mut mix = self.true_omega * u + sigma;
        for i in 0..n {
            mix += theta[i] * x[i];
        }
        for (i, d) in dx.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..n {
                s += self.a_m[(i, j)] * x[j];
            }
            *d = s + self.b[i] * mix;
        }
    }
}

/// `ẋ = A_m x + b(ωu + θ(t)ᵀx + σ(t, x))`.
pub fn plant_derivative(
    spec: &PlantSpec,
    t: f64,
    x: &DVector<f64>,
    u: f64,
) -> Result<DVector<f64>, PlantError> {
    let n = spec.n();
    if x.len() != n {
        return Err(PlantError::Dimension(format!(
            "state has length {}, expected {n}",
            x.len()
        )));
    }
    let mut theta = vec![0.0; n];
    spec.theta_into(t, &mut theta)?;
    let sigma = spec.sigma(t, x.as_slice())?;
    let mut dx = DVector::zeros(n);
    spec.derivative_with(x.as_slice(), u, &theta, sigma, dx.as_mut_slice());
    if dx.iter().any(|v| !v.is_finite()) {
        return Err(SignalError::NonFinite { t }.into());
    }
    Ok(dx)
}

/// Disturbance profiles of the robot-arm example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmDisturbance {
    /// `sin(πt)`.
    Sine,
    /// `cos(x1) + 2 sin(10t) + cos(15t)`.
    LowFrequency,
    /// `cos(x1) + 2 sin(100t) + cos(150t)`.
    HighFrequency,
}

impl ArmDisturbance {
    pub const ALL: [ArmDisturbance; 3] = [
        ArmDisturbance::Sine,
        ArmDisturbance::LowFrequency,
        ArmDisturbance::HighFrequency,
    ];

    pub fn expression(self) -> &'static str {
        match self {
            ArmDisturbance::Sine => "sin(pi*t)",
            ArmDisturbance::LowFrequency => "cos(x1) + 2*sin(10*t) + cos(15*t)",
            ArmDisturbance::HighFrequency => "cos(x1) + 2*sin(100*t) + cos(150*t)",
        }
    }

    /// Declared bound on `|dσ/dt|`; the `cos(x1)` term contributes at most
    /// `|x2|`, which stays well below the margin left here.
    pub fn rate_bound(self) -> f64 {
        match self {
            ArmDisturbance::Sine => 3.2,
            ArmDisturbance::LowFrequency => 40.0,
            ArmDisturbance::HighFrequency => 360.0,
        }
    }
}

pub const ARM_THETA: [&str; 2] = ["2 + cos(pi*t)", "2 + 0.3*sin(pi*t) + 0.2*cos(2*t)"];
pub const ARM_D_THETA: f64 = 3.5;

/// Robot arm on a vertical plane in the `(ω, θ, σ)` parametrization:
/// `A_m = [[0, 1], [-1, -1.4]]`, `ω = 1`, `Ω = [0.2, 5]`, `Θ = [-10, 10]²`,
/// `Δ = 10`.
pub fn robot_arm_preset(disturbance: ArmDisturbance) -> (PlantSpec, UncertaintySets) {
    let n = 2;
    let parse = |s: &str| SignalExpr::parse(s, n).expect("preset expression");
    let spec = PlantSpec {
        a_m: dmatrix![0.0, 1.0; -1.0, -1.4],
        b: dvector![0.0, 1.0],
        c: dvector![1.0, 0.0],
        true_omega: 1.0,
        true_theta: ARM_THETA.iter().map(|s| parse(s)).collect(),
        true_sigma: parse(disturbance.expression()),
        x0: DVector::zeros(n),
    };
    let sets = UncertaintySets {
        omega: Interval::new(0.2, 5.0),
        theta_box: vec![Interval::symmetric(10.0); n],
        delta: 10.0,
        d_theta: ARM_D_THETA,
        d_sigma: disturbance.rate_bound(),
    };
    (spec, sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::eigenvalues;

    fn nominal() -> PlantSpec {
        PlantSpec {
            a_m: dmatrix![0.0, 1.0; -1.0, -1.4],
            b: dvector![0.0, 1.0],
            c: dvector![1.0, 0.0],
            true_omega: 1.0,
            true_theta: vec![SignalExpr::constant(0.0, 2); 2],
            true_sigma: SignalExpr::constant(0.0, 2),
            x0: dvector![0.5, -1.0],
        }
    }

    #[test]
    fn unit_input_at_origin_gives_b() {
        let spec = nominal();
        let dx = plant_derivative(&spec, 0.0, &DVector::zeros(2), 1.0).unwrap();
        assert_eq!(dx, spec.b);
    }

    #[test]
    fn free_response_is_a_m_x() {
        let spec = nominal();
        let dx = plant_derivative(&spec, 0.3, &spec.x0, 0.0).unwrap();
        assert_eq!(dx, &spec.a_m * &spec.x0);
    }

    #[test]
    fn arm_preset_at_rest() {
        let (spec, sets) = robot_arm_preset(ArmDisturbance::Sine);
        let dx = plant_derivative(&spec, 0.0, &DVector::zeros(2), 0.0).unwrap();
        assert_eq!(dx, DVector::zeros(2));
        assert_eq!(sets.omega, Interval::new(0.2, 5.0));
        let l: f64 = sets.theta_box.iter().map(Interval::max_abs).sum();
        assert_eq!(l, 20.0);
        let eig = eigenvalues(&spec.a_m).unwrap();
        for z in &eig {
            assert!((z.re + 0.7).abs() < 1e-12);
            assert!((z.im.abs() - 0.51f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn arm_presets_validate() {
        for d in ArmDisturbance::ALL {
            let (spec, sets) = robot_arm_preset(d);
            spec.validate(&sets, 10.0, 20_001).unwrap();
        }
    }

    #[test]
    fn validation_rejects_bad_plants() {
        let (spec, sets) = robot_arm_preset(ArmDisturbance::Sine);
        let mut s = spec.clone();
        s.true_omega = 7.0;
        assert!(matches!(
            s.validate(&sets, 10.0, 100),
            Err(PlantError::OmegaOutsideSet { .. })
        ));
        let mut s = spec.clone();
        s.true_theta[1] = SignalExpr::parse("x1", 2).unwrap();
        assert_eq!(
            s.validate(&sets, 10.0, 100),
            Err(PlantError::ThetaDependsOnState { index: 1 })
        );
        let mut s = spec.clone();
        s.true_theta[0] = SignalExpr::parse("15", 2).unwrap();
        assert!(matches!(
            s.validate(&sets, 10.0, 1000),
            Err(PlantError::ThetaOutsideSet { index: 0, .. })
        ));
        let mut s = spec.clone();
        s.a_m = dmatrix![0.0, 1.0; 1.0, -1.4];
        assert_eq!(s.validate(&sets, 10.0, 100), Err(PlantError::NotHurwitz));
        let mut s = spec.clone();
        s.b = dvector![1.0, 0.0];
        s.a_m = dmatrix![-1.0, 0.0; 0.0, -2.0];
        assert_eq!(s.validate(&sets, 10.0, 100), Err(PlantError::NotControllable));
        let mut tight = sets.clone();
        tight.d_sigma = 1.0;
        assert_eq!(
            spec.validate(&tight, 10.0, 1000),
            Err(PlantError::SigmaBoundExceeded)
        );
        let mut tight = sets.clone();
        tight.d_theta = 1.0;
        assert!(matches!(
            spec.validate(&tight, 10.0, 1000),
            Err(PlantError::ThetaRateExceeded { .. })
        ));
    }

    #[test]
    fn inflation_widens_by_half_width_fraction() {
        let (_, sets) = robot_arm_preset(ArmDisturbance::Sine);
        let inf = sets.inflated(0.1);
        assert_eq!(inf.theta_box[0], Interval::new(-11.0, 11.0));
        assert!((inf.delta - 11.0).abs() < 1e-12);
        assert!((inf.omega.lo + 0.04).abs() < 1e-12);
        assert!((inf.omega.hi - 5.24).abs() < 1e-12);
    }

    #[test]
    fn non_finite_sigma_is_reported() {
        let mut spec = nominal();
        spec.true_sigma = SignalExpr::parse("1/(t - 1)", 2).unwrap();
        assert!(plant_derivative(&spec, 1.0, &DVector::zeros(2), 0.0).is_err());
    }
}
