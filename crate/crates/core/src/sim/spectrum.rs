//! Amplitude spectra of uniformly sampled signals.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// One-sided amplitude spectrum of `samples` (mean removed) taken at spacing
/// `dt`. Returns `(angular frequency, amplitude)` pairs for bins `1..=N/2`.
pub fn amplitude_spectrum(samples: &[f64], dt: f64) -> Vec<(f64, f64)> {
    let len = samples.len();
    if len < 2 {
        return Vec::new();
    }
    let mean = samples.iter().sum::<f64>() / len as f64;
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let df = std::f64::consts::TAU / (len as f64 * dt);
    (1..=len / 2)
        .map(|k| (k as f64 * df, 2.0 * buf[k].norm() / len as f64))
        .collect()
}

/// Angular frequency of the largest spectral line and the bin spacing.
pub fn dominant_frequency(samples: &[f64], dt: f64) -> Option<(f64, f64)> {
    let spec = amplitude_spectrum(samples, dt);
    let df = spec.first()?.0;
    let peak = spec
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    Some((peak.0, df))
}

/// Largest amplitude within `±half_width` of `omega`.
pub fn amplitude_near(samples: &[f64], dt: f64, omega: f64, half_width: f64) -> f64 {
    amplitude_spectrum(samples, dt)
        .into_iter()
        .filter(|(w, _)| (w - omega).abs() <= half_width)
        .map(|(_, a)| a)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_sinusoid() {
        // Record length 20π puts 15 and 100 rad/s on exact bins.
        let dt = std::f64::consts::PI / 1000.0;
        let x: Vec<f64> = (0..20_000)
            .map(|k| {
                let t = k as f64 * dt;
                3.0 + 2.0 * (100.0 * t).sin() + 0.5 * (15.0 * t).cos()
            })
            .collect();
        let (w, df) = dominant_frequency(&x, dt).unwrap();
        assert!((w - 100.0).abs() <= df, "{w}");
        let a = amplitude_near(&x, dt, 100.0, df);
        assert!((a - 2.0).abs() < 0.3, "{a}");
        assert!(amplitude_near(&x, dt, 15.0, df) > 0.3);
    }
}
