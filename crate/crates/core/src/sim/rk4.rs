//! Classical fixed-step fourth-order Runge–Kutta.

/// A first-order system `ẋ = f(t, x)` with a fixed dimension.
pub trait OdeSystem {
    type Error;

    fn dim(&self) -> usize;

    fn derivative(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), Self::Error>;
}

/// Stepper with preallocated stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

/// Outcome of a step whose result contains NaN or infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonFiniteStep {
    pub last_good_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepError<E> {
    System(E),
    NonFinite(NonFiniteStep),
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` from `t` to `t + dt` in place. On error `x` is left
    /// untouched.
    pub fn step<S: OdeSystem>(
        &mut self,
        sys: &S,
        t: f64,
        x: &mut [f64],
        dt: f64,
    ) -> Result<(), StepError<S::Error>> {
        let n = x.len();
        debug_assert_eq!(n, self.k1.len());
        let half = 0.5 * dt;

        sys.derivative(t, x, &mut self.k1).map_err(StepError::System)?;
        for i in 0..n {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        sys.derivative(t + half, &self.tmp, &mut self.k2)
            .map_err(StepError::System)?;
        for i in 0..n {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        sys.derivative(t + half, &self.tmp, &mut self.k3)
            .map_err(StepError::System)?;
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        sys.derivative(t + dt, &self.tmp, &mut self.k4)
            .map_err(StepError::System)?;

        let sixth = dt / 6.0;
        for i in 0..n {
            self.tmp[i] =
                x[i] + sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        if self.tmp.iter().any(|v| !v.is_finite()) {
            return Err(StepError::NonFinite(NonFiniteStep { last_good_time: t }));
        }
        x.copy_from_slice(&self.tmp);
        Ok(())
    }
}

struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    type Error = std::convert::Infallible;

    fn dim(&self) -> usize {
        self.dim
    }

    fn derivative(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), Self::Error> {
        (self.f)(t, x, dx);
        Ok(())
    }
}

/// One RK4 step of a closure-defined system, returning the new state.
pub fn rk4_step<F>(f: F, t: f64, state: &[f64], dt: f64) -> Result<Vec<f64>, NonFiniteStep>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let sys = FnSystem {
        dim: state.len(),
        f,
    };
    let mut x = state.to_vec();
    let mut stepper = Rk4::new(sys.dim());
    match stepper.step(&sys, t, &mut x, dt) {
        Ok(()) => Ok(x),
        Err(StepError::NonFinite(e)) => Err(e),
        Err(StepError::System(never)) => match never {},
    }
}
