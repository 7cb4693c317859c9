//! Dormand-Prince 5(4) with embedded error control.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at x = {x} (h = {h:e})")]
    StepUnderflow { x: f64, h: f64 },
    #[error("step limit {limit} reached at x = {x}")]
    TooManySteps { x: f64, limit: usize },
    #[error("non-finite state at x = {x}")]
    NonFinite { x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_step: f64::INFINITY, initial_step: None, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    /// The step observer asked to stop after the step ending at this index.
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    /// Largest accepted local error estimate, in units of the tolerance.
    pub max_error_ratio: f64,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn combine<const N: usize>(y: &[f64; N], h: f64, ks: &[[f64; N]], coef: &[f64]) -> [f64; N] {
    let mut out = *y;
    for (k, &c) in ks.iter().zip(coef) {
        if c != 0.0 {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

/// Integrates `y' = f(x, y)` from `x0` to `x_end > x0`.
///
/// `observe(x, y, dy)` is called with the initial point and after every
/// accepted step; returning `false` stops the integration.
pub fn integrate<const N: usize>(
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
    x0: f64,
    y0: [f64; N],
    x_end: f64,
    opts: &Dopri5Options,
    mut observe: impl FnMut(f64, &[f64; N], &[f64; N]) -> bool,
) -> Result<(Outcome, Stats), OdeError> {
    let mut stats = Stats::default();
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y);
    if !observe(x, &y, &k1) {
        return Ok((Outcome::Stopped, stats));
    }
    let span = x_end - x0;
    let mut h = opts.initial_step.unwrap_or(1e-3 * span).min(opts.max_step).min(span);
    let min_step = 16.0 * f64::EPSILON * x0.abs().max(x_end.abs()).max(1.0);

    while x < x_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(OdeError::TooManySteps { x, limit: opts.max_steps });
        }
        let last = x + h >= x_end;
        if last {
            h = x_end - x;
        }
        let k2 = f(x + C[1] * h, &combine(&y, h, &[k1], &A2));
        let k3 = f(x + C[2] * h, &combine(&y, h, &[k1, k2], &A3));
        let k4 = f(x + C[3] * h, &combine(&y, h, &[k1, k2, k3], &A4));
        let k5 = f(x + C[4] * h, &combine(&y, h, &[k1, k2, k3, k4], &A5));
        let k6 = f(x + C[5] * h, &combine(&y, h, &[k1, k2, k3, k4, k5], &A6));
        let y_new = combine(&y, h, &[k1, k2, k3, k4, k5, k6], &B[..6]);
        let k7 = f(x + h, &y_new);
        let ks = [k1, k2, k3, k4, k5, k6, k7];

        let mut err = 0.0;
        let mut finite = true;
        for i in 0..N {
            let e: f64 = ks.iter().zip(&E).map(|(k, c)| c * k[i]).sum::<f64>() * h;
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
            finite &= y_new[i].is_finite() && k7[i].is_finite();
        }
        let err = (err / N as f64).sqrt();

        if finite && err <= 1.0 {
            x = if last { x_end } else { x + h };
            y = y_new;
            k1 = k7;
            stats.accepted += 1;
            stats.max_error_ratio = stats.max_error_ratio.max(err);
            if !observe(x, &y, &k1) {
                return Ok((Outcome::Stopped, stats));
            }
        } else {
            stats.rejected += 1;
        }
        let factor = if !finite {
            0.2
        } else if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * factor).min(opts.max_step);
        if h < min_step {
            if !finite {
                return Err(OdeError::NonFinite { x });
            }
            return Err(OdeError::StepUnderflow { x, h });
        }
    }
    Ok((Outcome::Completed, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let opts = Dopri5Options { rtol: 1e-10, atol: 1e-14, ..Default::default() };
        let mut last = (0.0, [0.0]);
        let (out, stats) = integrate(|_, y| [-y[0]], 0.0, [1.0], 5.0, &opts, |x, y, _| {
            last = (x, *y);
            true
        })
        .unwrap();
        assert_eq!(out, Outcome::Completed);
        assert_eq!(last.0, 5.0);
        assert!((last.1[0] - (-5f64).exp()).abs() < 1e-11);
        assert!(stats.accepted > 10);
    }

    #[test]
    fn harmonic_oscillator_tolerance_scaling() {
        let run = |rtol: f64| {
            let opts = Dopri5Options { rtol, atol: rtol * 1e-2, ..Default::default() };
            let mut y_end = [0.0; 2];
            integrate(|_, y| [y[1], -y[0]], 0.0, [1.0, 0.0], 10.0, &opts, |_, y, _| {
                y_end = *y;
                true
            })
            .unwrap();
            (y_end[0] - 10f64.cos()).abs()
        };
        let coarse = run(1e-6);
        let fine = run(1e-9);
        assert!(fine < coarse / 50.0, "{coarse:e} {fine:e}");
    }

    #[test]
    fn observer_can_stop() {
        let opts = Dopri5Options::default();
        let (out, _) = integrate(|_, y| [y[0]], 0.0, [1.0], 10.0, &opts, |_, y, _| y[0] < 100.0).unwrap();
        assert_eq!(out, Outcome::Stopped);
    }

    #[test]
    fn finite_time_blowup_underflows() {
        let opts = Dopri5Options { max_steps: 100_000, ..Default::default() };
        let err = integrate(|_, y| [y[0] * y[0]], 0.0, [1.0], 2.0, &opts, |_, _, _| true).unwrap_err();
        assert!(matches!(err, OdeError::StepUnderflow { .. } | OdeError::NonFinite { .. } | OdeError::TooManySteps { .. }));
    }

    #[test]
    fn respects_max_step() {
        let opts = Dopri5Options { max_step: 0.1, ..Default::default() };
        let mut xs = vec![];
        integrate(|_, _| [0.0], 0.0, [0.0], 1.0, &opts, |x, _, _| {
            xs.push(x);
            true
        })
        .unwrap();
        assert!(xs.windows(2).all(|w| w[1] - w[0] <= 0.1 + 1e-15));
    }
}
