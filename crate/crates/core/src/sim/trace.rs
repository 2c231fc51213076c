//! Recorded time series and CSV export.

use std::io::{Read, Write};
use std::ops::Range;

/// Row-major record of `[x, x̂, u, θ̂, σ̂, ω̂, (x_ref, u_ref), r]` per time.
#[derive(Clone, PartialEq)]
pub struct Trace {
    n: usize,
    with_reference: bool,
    t: Vec<f64>,
    data: Vec<f64>,
}

impl std::fmt::Debug for Trace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trace")
            .field("n", &self.n)
            .field("with_reference", &self.with_reference)
            .field("rows", &self.len())
            .field("t_end", &self.t.last())
            .finish()
    }
}

impl Trace {
    pub fn new(n: usize, with_reference: bool) -> Self {
        Self::with_capacity(n, with_reference, 0)
    }

    pub fn with_capacity(n: usize, with_reference: bool, rows: usize) -> Self {
        let mut tr = Trace {
            n,
            with_reference,
            t: Vec::with_capacity(rows),
            data: Vec::new(),
        };
        tr.data.reserve(rows * tr.width());
        tr
    }

    /// Values per row, excluding time.
    pub fn width(&self) -> usize {
        let base = 3 * self.n + 4;
        if self.with_reference {
            base + self.n + 1
        } else {
            base
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn with_reference(&self) -> bool {
        self.with_reference
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push(
        &mut self,
        t: f64,
        state: &[f64],
        n: usize,
        ctrl: Range<usize>,
        ref_start: usize,
        u: f64,
        u_ref: f64,
        r: f64,
    ) {
        let cs = &state[ctrl];
        self.t.push(t);
        self.data.extend_from_slice(&state[..n]);
        self.data.extend_from_slice(&cs[..n]);
        self.data.push(u);
        self.data.extend_from_slice(&cs[n..2 * n + 2]);
        if self.with_reference {
            self.data.extend_from_slice(&state[ref_start..ref_start + n]);
            self.data.push(u_ref);
        }
        self.data.push(r);
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let w = self.width();
        &self.data[k * w..(k + 1) * w]
    }

    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.row(k)[..self.n]
    }

    pub fn x_hat_at(&self, k: usize) -> &[f64] {
        &self.row(k)[self.n..2 * self.n]
    }

    pub fn u_at(&self, k: usize) -> f64 {
        self.row(k)[2 * self.n]
    }

    pub fn theta_hat_at(&self, k: usize) -> &[f64] {
        &self.row(k)[2 * self.n + 1..3 * self.n + 1]
    }

    pub fn sigma_hat_at(&self, k: usize) -> f64 {
        self.row(k)[3 * self.n + 1]
    }

    pub fn omega_hat_at(&self, k: usize) -> f64 {
        self.row(k)[3 * self.n + 2]
    }

    pub fn x_ref_at(&self, k: usize) -> Option<&[f64]> {
        let n = self.n;
        self.with_reference
            .then(|| &self.row(k)[3 * n + 3..4 * n + 3])
    }

    pub fn u_ref_at(&self, k: usize) -> Option<f64> {
        self.with_reference.then(|| self.row(k)[4 * self.n + 3])
    }

    pub fn r_at(&self, k: usize) -> f64 {
        *self.row(k).last().expect("non-empty row")
    }

    /// Column `j` of every row.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.row(k)[j]).collect()
    }

    pub fn u_series(&self) -> Vec<f64> {
        self.column(2 * self.n)
    }

    pub fn header(&self) -> Vec<String> {
        let n = self.n;
        let idx = |p: &'static str| (1..=n).map(move |i| format!("{p}{i}"));
        let mut h = vec!["t".to_string()];
        h.extend(idx("x"));
        h.extend(idx("xhat"));
        h.push("u".into());
        h.extend(idx("thetahat"));
        h.push("sigmahat".into());
        h.push("omegahat".into());
        if self.with_reference {
            h.extend(idx("xref"));
            h.push("uref".into());
        }
        h.push("r".into());
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.header())?;
        let mut rec = Vec::with_capacity(self.width() + 1);
        for k in 0..self.len() {
            rec.clear();
            rec.push(self.t[k].to_string());
            rec.extend(self.row(k).iter().map(f64::to_string));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Trace, csv::Error> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let with_reference = header.iter().any(|h| h == "uref");
        let cols = header.len().saturating_sub(1);
        let n = if with_reference {
            cols.checked_sub(5).map(|c| c / 4)
        } else {
            cols.checked_sub(4).map(|c| c / 3)
        };
        let mut tr = Trace::new(n.unwrap_or(0), with_reference);
        if n.is_none() || tr.width() != cols {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "unrecognized trace header",
            )
            .into());
        }
        for rec in rd.records() {
            let rec = rec?;
            let mut vals = rec.iter().map(|s| {
                s.parse::<f64>().map_err(|e| {
                    csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
                })
            });
            tr.t.push(vals.next().transpose()?.unwrap_or(f64::NAN));
            for v in vals {
                tr.data.push(v?);
            }
        }
        Ok(tr)
    }

    /// Maximum absolute difference over all columns at the times of `self`
    /// that also appear in `other`. Returns infinity if a time is missing.
    pub fn max_deviation(&self, other: &Trace) -> f64 {
        if self.width() != other.width() {
            return f64::INFINITY;
        }
        let mut j = 0;
        let mut dev: f64 = 0.0;
        for k in 0..self.len() {
            let t = self.t[k];
            let tol = 1e-9 * t.abs().max(1.0);
            while j < other.len() && other.t[j] < t - tol {
                j += 1;
            }
            if j == other.len() || (other.t[j] - t).abs() > tol {
                return f64::INFINITY;
            }
            for (a, b) in self.row(k).iter().zip(other.row(j)) {
                dev = dev.max((a - b).abs());
            }
        }
        dev
    }

    pub fn is_finite(&self) -> bool {
        self.t.iter().chain(&self.data).all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(with_reference: bool) -> Trace {
        let mut tr = Trace::new(2, with_reference);
        // state: x(2), ctrl [x̂(2), θ̂(2), σ̂, ω̂, χ(1)], ref [x_ref(2), ζ(1)]
        let state = [1.0, 2.0, 1.5, 2.5, 0.1, 0.2, 0.3, 0.9, 7.0, 0.75, 1.75, 3.0];
        tr.push(0.0, &state, 2, 2..9, 9, -4.0, -3.5, 1.0);
        tr.push(0.5, &state, 2, 2..9, 9, 1.0 / 3.0, 0.0, 2.0);
        tr
    }

    #[test]
    fn accessors_follow_column_layout() {
        let tr = sample(true);
        assert_eq!(tr.x_at(0), &[1.0, 2.0]);
        assert_eq!(tr.x_hat_at(0), &[1.5, 2.5]);
        assert_eq!(tr.u_at(0), -4.0);
        assert_eq!(tr.theta_hat_at(0), &[0.1, 0.2]);
        assert_eq!(tr.sigma_hat_at(0), 0.3);
        assert_eq!(tr.omega_hat_at(0), 0.9);
        assert_eq!(tr.x_ref_at(0).unwrap(), &[0.75, 1.75]);
        assert_eq!(tr.u_ref_at(0), Some(-3.5));
        assert_eq!(tr.r_at(1), 2.0);
        assert_eq!(tr.header().len(), tr.width() + 1);
        assert_eq!(
            tr.header().join(","),
            "t,x1,x2,xhat1,xhat2,u,thetahat1,thetahat2,sigmahat,omegahat,xref1,xref2,uref,r"
        );
    }

    #[test]
    fn csv_round_trip_is_exact() {
        for with_reference in [true, false] {
            let tr = sample(with_reference);
            let mut buf = Vec::new();
            tr.write_csv(&mut buf).unwrap();
            let back = Trace::read_csv(buf.as_slice()).unwrap();
            assert_eq!(back, tr);
        }
    }

    #[test]
    fn deviation_matches_times() {
        let a = sample(false);
        let mut b = a.clone();
        b.data[0] += 0.25;
        assert_eq!(a.max_deviation(&b), 0.25);
        let mut c = a.clone();
        c.t[1] = 0.6;
        assert_eq!(a.max_deviation(&c), f64::INFINITY);
    }
}
