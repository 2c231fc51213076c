//! L1 gain of stable proper LTI systems by impulse-response quadrature.
//!
//! Each input column is propagated through `ẋ = Ax` from `x(0) = B_j` with the
//! shared RK4 stepper, `|C_i x|` is integrated by composite Simpson, and the
//! grid is halved until successive estimates agree. The part of the integral
//! beyond the truncation time is bounded with a quadratic Lyapunov envelope
//! and added to the result, so `value` is an upper estimate.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::lti::{eigenvalues, lyapunov_solve, LtiError, LyapunovPair, StateSpace};
use crate::sim::rk4::{OdeSystem, Rk4, StepError};

pub const DEFAULT_REL_TOL: f64 = 1e-4;

/// Share of the tolerance spent on quadrature, and separately on the tail.
const BUDGET_SHARE: f64 = 0.25;
const MIN_HORIZON: f64 = 10.0;
const SLOW_DECAY_MULTIPLE: f64 = 20.0;
const MAX_HORIZON_DOUBLINGS: usize = 4;
const INITIAL_STEP_SCALE: f64 = 0.02;
const MIN_STEPS: usize = 200;
const MAX_STEPS: usize = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum L1Error {
    #[error("system is not stable (spectral abscissa {abscissa})")]
    UnstableSystem { abscissa: f64 },
    #[error("tolerance {requested} not met (best relative error estimate {achieved})")]
    ToleranceNotMet { requested: f64, achieved: f64 },
    #[error("invalid tolerance {0}")]
    InvalidTolerance(f64),
    #[error("impulse response became non-finite")]
    NonFinite,
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// `value = feedthrough_part + ∫₀^T |h| + tail_bound`, taken on the row that
/// attains the maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1GainResult {
    pub value: f64,
    pub truncation_time: f64,
    pub tail_bound: f64,
    pub feedthrough_part: f64,
}

impl L1GainResult {
    pub fn integral_part(&self) -> f64 {
        self.value - self.feedthrough_part
    }
}

pub fn l1_gain_siso(sys: &StateSpace, rel_tol: f64) -> Result<L1GainResult, L1Error> {
    if !sys.is_siso() {
        return Err(LtiError::DimensionMismatch(format!(
            "expected a 1x1 system, got {}x{}",
            sys.n_outputs(),
            sys.n_inputs()
        ))
        .into());
    }
    l1_gain_mimo(sys, rel_tol)
}

/// Row-wise gains `Σ_j ‖H_ij‖` together with the data of the maximizing row.
pub fn l1_gain_mimo(sys: &StateSpace, rel_tol: f64) -> Result<L1GainResult, L1Error> {
    let rows = l1_row_gains(sys, rel_tol)?;
    Ok(rows
        .into_iter()
        .fold(None::<L1GainResult>, |best, r| match best {
            Some(b) if b.value >= r.value => Some(b),
            _ => Some(r),
        })
        .unwrap_or(L1GainResult {
            value: 0.0,
            truncation_time: 0.0,
            tail_bound: 0.0,
            feedthrough_part: 0.0,
        }))
}

/// `true` iff `‖M‖_L1 · delta_gain < 1`.
pub fn small_gain_check(m: &StateSpace, delta_gain: f64, rel_tol: f64) -> Result<bool, L1Error> {
    Ok(l1_gain_mimo(m, rel_tol)?.value * delta_gain < 1.0)
}

/// One result per output row.
pub fn l1_row_gains(sys: &StateSpace, rel_tol: f64) -> Result<Vec<L1GainResult>, L1Error> {
    if !(rel_tol.is_finite() && rel_tol > 0.0) {
        return Err(L1Error::InvalidTolerance(rel_tol));
    }
    let (p, m, n) = (sys.n_outputs(), sys.n_inputs(), sys.n_states());
    let feed: Vec<f64> = (0..p)
        .map(|i| (0..m).map(|j| sys.d[(i, j)].abs()).sum())
        .collect();
    if n == 0 {
        return Ok(feed
            .into_iter()
            .map(|f| L1GainResult {
                value: f,
                truncation_time: 0.0,
                tail_bound: 0.0,
                feedthrough_part: f,
            })
            .collect());
    }

    let eig = eigenvalues(&sys.a)?;
    let abscissa = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= 0.0 {
        return Err(L1Error::UnstableSystem { abscissa });
    }
    let radius = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lyap = lyapunov_solve(&sys.a, &DMatrix::identity(n, n))?;
    let row_norms: Vec<f64> = (0..p).map(|i| sys.c.row(i).norm()).collect();

    let mut horizon = (SLOW_DECAY_MULTIPLE / abscissa.abs()).max(MIN_HORIZON);
    let mut worst = f64::INFINITY;
    for _ in 0..=MAX_HORIZON_DOUBLINGS {
        let quad = converge_quadrature(sys, &feed, horizon, radius, rel_tol)?;
        let tails: Vec<f64> = (0..p)
            .map(|i| {
                quad.end_states
                    .iter()
                    .map(|x| row_norms[i] * tail_envelope(&lyap, x))
                    .sum()
            })
            .collect();
        let results: Vec<L1GainResult> = (0..p)
            .map(|i| {
                let integral: f64 = (0..m).map(|j| quad.integrals[(i, j)]).sum();
                L1GainResult {
                    value: feed[i] + integral + tails[i],
                    truncation_time: horizon,
                    tail_bound: tails[i],
                    feedthrough_part: feed[i],
                }
            })
            .collect();
        let value = results.iter().map(|r| r.value).fold(0.0, f64::max);
        let max_tail = tails.iter().copied().fold(0.0, f64::max);
        if max_tail <= BUDGET_SHARE * rel_tol * value {
            return Ok(results);
        }
        worst = worst.min(max_tail / value);
        horizon *= 2.0;
    }
    Err(L1Error::ToleranceNotMet {
        requested: rel_tol,
        achieved: worst / BUDGET_SHARE,
    })
}

/// Bound on `∫_T^∞ ‖x(τ)‖ dτ` given `x(T)`, from `V = xᵀPx` with
/// `AᵀP + PA = -I`: `V̇ ≤ -V/λmax(P)` and `‖x‖² ≤ V/λmin(P)`.
fn tail_envelope(lyap: &LyapunovPair, x: &[f64]) -> f64 {
    let n = x.len();
    let mut v = 0.0;
    for i in 0..n {
        for j in 0..n {
            v += x[i] * lyap.p[(i, j)] * x[j];
        }
    }
    (v.max(0.0) / lyap.lambda_min_p).sqrt() * 2.0 * lyap.lambda_max_p
}

struct Quadrature {
    integrals: DMatrix<f64>,
    end_states: Vec<Vec<f64>>,
}

fn converge_quadrature(
    sys: &StateSpace,
    feed: &[f64],
    horizon: f64,
    radius: f64,
    rel_tol: f64,
) -> Result<Quadrature, L1Error> {
    let steps = (horizon * radius / INITIAL_STEP_SCALE).ceil() as usize;
    let mut steps = steps.max(MIN_STEPS).next_multiple_of(2);
    let mut coarse = quadrature(sys, horizon, steps)?;
    let mut achieved = f64::INFINITY;
    while steps * 2 <= MAX_STEPS {
        steps *= 2;
        let fine = quadrature(sys, horizon, steps)?;
        let (p, m) = fine.integrals.shape();
        let value = (0..p)
            .map(|i| feed[i] + (0..m).map(|j| fine.integrals[(i, j)]).sum::<f64>())
            .fold(0.0, f64::max);
        let change = (0..p)
            .map(|i| {
                (0..m)
                    .map(|j| (fine.integrals[(i, j)] - coarse.integrals[(i, j)]).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        if change <= BUDGET_SHARE * rel_tol * value {
            return Ok(fine);
        }
        achieved = change / (BUDGET_SHARE * value);
        coarse = fine;
    }
    Err(L1Error::ToleranceNotMet {
        requested: rel_tol,
        achieved,
    })
}

struct Autonomous<'a> {
    a: &'a DMatrix<f64>,
}

impl OdeSystem for Autonomous<'_> {
    type Error = std::convert::Infallible;

    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), Self::Error> {
        let n = x.len();
        for (i, out) in dx.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, xj) in x.iter().enumerate().take(n) {
                s += self.a[(i, j)] * xj;
            }
            *out = s;
        }
        Ok(())
    }
}

/// Simpson integrals of `|C_i e^{At} B_j|` on `[0, horizon]` with `steps`
/// (even) intervals.
fn quadrature(sys: &StateSpace, horizon: f64, steps: usize) -> Result<Quadrature, L1Error> {
    let (p, m, n) = (sys.n_outputs(), sys.n_inputs(), sys.n_states());
    let dt = horizon / steps as f64;
    let ode = Autonomous { a: &sys.a };
    let mut stepper = Rk4::new(n);
    let mut integrals = DMatrix::zeros(p, m);
    let mut end_states = Vec::with_capacity(m);
    let mut acc = vec![0.0; p];
    let mut x = vec![0.0; n];
    for j in 0..m {
        x.iter_mut()
            .zip(sys.b.column(j).iter())
            .for_each(|(xi, bi)| *xi = *bi);
        acc.fill(0.0);
        for k in 0..=steps {
            let w = if k == 0 || k == steps {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            for (i, a) in acc.iter_mut().enumerate() {
                let mut y = 0.0;
                for (l, xl) in x.iter().enumerate() {
                    y += sys.c[(i, l)] * xl;
                }
                *a += w * y.abs();
            }
            if k < steps {
                stepper
                    .step(&ode, k as f64 * dt, &mut x, dt)
                    .map_err(|e| match e {
                        StepError::NonFinite(_) => L1Error::NonFinite,
                        StepError::System(never) => match never {},
                    })?;
            }
        }
        for i in 0..p {
            integrals[(i, j)] = acc[i] * dt / 3.0;
        }
        end_states.push(x.clone());
    }
    Ok(Quadrature {
        integrals,
        end_states,
    })
}
