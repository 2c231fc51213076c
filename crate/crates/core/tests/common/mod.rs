#![allow(dead_code)]

use l1adapt::lti::{spectral_abscissa, StateSpace};
use l1adapt::sim::rk4_step;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random stable realization with `n` states, `m` inputs and `p` outputs.
pub fn random_stable(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> StateSpace {
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
    let shift = spectral_abscissa(&a).unwrap() + rng.random_range(0.3..2.0);
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
    let d = DMatrix::from_fn(p, m, |_, _| rng.random_range(-0.5..0.5));
    StateSpace::new(a, b, c, d).unwrap()
}

/// Output of a SISO system from rest for a piecewise-constant input with
/// values in `[-1, 1]` held for `hold` seconds; returns `max |y|`.
pub fn peak_output(sys: &StateSpace, rng: &mut ChaCha8Rng, horizon: f64, dt: f64, hold: f64) -> f64 {
    let n = sys.n_states();
    let steps = (horizon / dt).round() as usize;
    let per_hold = ((hold / dt).round() as usize).max(1);
    let mut x = vec![0.0; n];
    let mut u = 0.0;
    let mut peak: f64 = 0.0;
    for k in 0..steps {
        if k % per_hold == 0 {
            u = if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(0.5..1.0);
        }
        let y: f64 = (0..n).map(|j| sys.c[(0, j)] * x[j]).sum::<f64>() + sys.d[(0, 0)] * u;
        peak = peak.max(y.abs());
        x = rk4_step(
            |_, s, ds| {
                for i in 0..n {
                    let mut v = sys.b[(i, 0)] * u;
                    for j in 0..n {
                        v += sys.a[(i, j)] * s[j];
                    }
                    ds[i] = v;
                }
            },
            k as f64 * dt,
            &x,
            dt,
        )
        .unwrap();
    }
    peak
}
