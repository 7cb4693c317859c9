//! Warped-product data `g = dt^2 + a(t)^2 g_{S^n}` rebuilt from a profile `h`.
//!
//! Samples are parameterized by `a`, with `t(a) = int_0^a d rho / sqrt(h(rho^2))`.
//! Below the first profile node the leading term `h = c0 r^{-alpha}` is used,
//! so `t = c0^{-1/2} a^{alpha+1} / (alpha+1)` there.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::SolitonParams;
use crate::continuation::{GlobalProfile, ProfileError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("samples must be positive and strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("a = {a} lies beyond the profile (a^2 > {r_max})")]
    OutOfCoverage { a: f64, r_max: f64 },
    #[error("non-positive h = {h} at r = {r}")]
    NonPositive { r: f64, h: f64 },
    #[error("singular division: a * a_t = {0} at sample {1}")]
    Singular(f64, usize),
    #[error("potential not reconstructed yet")]
    MissingPotential,
    #[error("t covers {0:.2} decades, need at least 2")]
    InsufficientCoverage(f64),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Sampled metric data. The potential fields stay empty until
/// [`reconstruct_f`] fills them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricProfile {
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub a_t: Vec<f64>,
    pub a_tt: Vec<f64>,
    pub f_t: Vec<f64>,
    pub f_tt: Vec<f64>,
    /// Gauge fixed by `f = 0` at the first sample.
    pub f: Vec<f64>,
}

impl MetricProfile {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn has_potential(&self) -> bool {
        self.f_t.len() == self.len() && self.f_tt.len() == self.len() && self.f.len() == self.len()
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (l0, l1) = (lo.ln(), hi.ln());
    let step = (l1 - l0) / (count.max(2) - 1) as f64;
    (0..count)
        .map(|i| match i {
            0 => lo,
            _ if i == count - 1 => hi,
            _ => (l0 + step * i as f64).exp(),
        })
        .collect()
}

/// Log-spaced `a` covering the whole profile.
pub fn profile_samples(profile: &GlobalProfile, count: usize) -> Vec<f64> {
    log_spaced(profile.r_min().sqrt(), profile.r_max().sqrt(), count)
}

fn tail_t(params: &SolitonParams, a: f64) -> f64 {
    let al = params.alpha;
    a.powf(al + 1.0) / ((al + 1.0) * params.c0().sqrt())
}

pub fn reconstruct_a(profile: &GlobalProfile, a_samples: &[f64]) -> Result<MetricProfile, MetricError> {
    if a_samples.len() < 2 {
        return Err(MetricError::TooFewSamples { need: 2, got: a_samples.len() });
    }
    for (i, &a) in a_samples.iter().enumerate() {
        if !(a > 0.0) || (i > 0 && a <= a_samples[i - 1]) {
            return Err(MetricError::NotIncreasing(i));
        }
    }
    let p = &profile.params;
    let (r_lo, r_hi) = (profile.r_min(), profile.r_max());
    let last = a_samples[a_samples.len() - 1];
    // Squaring the end sample may overshoot by an ulp or two.
    if last * last > r_hi * (1.0 + 1e-12) {
        return Err(MetricError::OutOfCoverage { a: last, r_max: r_hi });
    }

    let dt = |rho: f64, h: f64| 0.5 / (rho * h).sqrt();
    let m = a_samples.len();
    let (mut t, mut a_t, mut a_tt) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
    let mut prev_r: Option<f64> = None;
    let mut acc = 0.0;
    for &a in a_samples {
        let r = (a * a).min(r_hi);
        let (h, h_r) = if r < r_lo {
            let h = p.c0() * r.powf(-p.alpha);
            (h, -p.alpha * h / r)
        } else {
            let pt = profile.eval(r)?;
            (pt.h, pt.h_r)
        };
        if !(h > 0.0) {
            return Err(MetricError::NonPositive { r, h });
        }
        let ti = match prev_r {
            _ if r < r_lo => tail_t(p, a),
            Some(r0) if r0 >= r_lo => {
                acc += profile.integrate(r0, r, dt)?;
                acc
            }
            _ => {
                acc = tail_t(p, r_lo.sqrt()) + profile.integrate(r_lo, r, dt)?;
                acc
            }
        };
        prev_r = Some(r);
        t.push(ti);
        a_t.push(h.sqrt());
        a_tt.push(a * h_r);
    }
    Ok(MetricProfile { t, a: a_samples.to_vec(), a_t, a_tt, f_t: vec![], f_tt: vec![], f: vec![] })
}

/// Largest `|a / (sqrt(n c0) t)^{1/sqrt n} - 1|` over the smallest decade of `t`.
pub fn check_a_asymptote(mp: &MetricProfile, params: &SolitonParams) -> Result<f64, MetricError> {
    if mp.len() < 2 {
        return Err(MetricError::TooFewSamples { need: 2, got: mp.len() });
    }
    let (t0, t1) = (mp.t[0], mp.t[mp.len() - 1]);
    let decades = (t1 / t0).log10();
    if !(decades >= 2.0) {
        return Err(MetricError::InsufficientCoverage(decades));
    }
    let sqrt_n = params.nf().sqrt();
    let k = (params.nf() * params.c0()).sqrt();
    Ok(mp
        .t
        .iter()
        .zip(&mp.a)
        .take_while(|(&t, _)| t <= 10.0 * t0)
        .map(|(&t, &a)| (a / (k * t).powf(1.0 / sqrt_n) - 1.0).abs())
        .fold(0.0, f64::max))
}

/// Fills `f_t` from the sphere component, `f_tt` from the `dt^2` component and
/// `f` by the trapezoid rule.
pub fn reconstruct_f(mp: &MetricProfile, lambda: f64, n: u32) -> Result<MetricProfile, MetricError> {
    let nm1 = f64::from(n) - 1.0;
    let mut f_t = Vec::with_capacity(mp.len());
    let mut f_tt = Vec::with_capacity(mp.len());
    for i in 0..mp.len() {
        let (a, at, att) = (mp.a[i], mp.a_t[i], mp.a_tt[i]);
        let den = a * at;
        if !(den > 0.0) {
            return Err(MetricError::Singular(den, i));
        }
        f_t.push((nm1 - a * att - nm1 * at * at + lambda * a * a) / den);
        f_tt.push(lambda - f64::from(n) * att / a);
    }
    let mut f = vec![0.0; mp.len()];
    for i in 1..mp.len() {
        f[i] = f[i - 1] + 0.5 * (mp.t[i] - mp.t[i - 1]) * (f_t[i] + f_t[i - 1]);
    }
    Ok(MetricProfile { f_t, f_tt, f, ..mp.clone() })
}

/// Second-order first derivative on a nonuniform grid; the end values are 0.
fn derivative(x: &[f64], y: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut out = vec![0.0; m];
    for i in 1..m.saturating_sub(1) {
        let (d0, d1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        out[i] = (y[i + 1] * d0 * d0 - y[i - 1] * d1 * d1 + y[i] * (d1 * d1 - d0 * d0)) / (d0 * d1 * (d0 + d1));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolitonResidual {
    /// `dt^2` component with `f_tt` replaced by a finite difference of `f_t`;
    /// the end samples are 0.
    pub res_tt: Vec<f64>,
    pub res_sphere: Vec<f64>,
}

/// Componentwise `Ric - Hess f + lambda g`.
pub fn soliton_residual(mp: &MetricProfile, lambda: f64, n: u32) -> Result<SolitonResidual, MetricError> {
    if !mp.has_potential() {
        return Err(MetricError::MissingPotential);
    }
    if mp.len() < 3 {
        return Err(MetricError::TooFewSamples { need: 3, got: mp.len() });
    }
    let (nf, nm1) = (f64::from(n), f64::from(n) - 1.0);
    let f_tt_fd = derivative(&mp.t, &mp.f_t);
    let last = mp.len() - 1;
    let res_tt = (0..mp.len())
        .map(|i| if i == 0 || i == last { 0.0 } else { -nf * mp.a_tt[i] / mp.a[i] - (f_tt_fd[i] - lambda) })
        .collect();
    let res_sphere = (0..mp.len())
        .map(|i| {
            let (a, at, att) = (mp.a[i], mp.a_t[i], mp.a_tt[i]);
            (nm1 - a * att - nm1 * at * at) - (a * at * mp.f_t[i] - lambda * a * a)
        })
        .collect();
    Ok(SolitonResidual { res_tt, res_sphere })
}

/// Residual of the third-order equation for `a`, with `a_ttt` by finite
/// differences of `a_tt`; the end samples are 0.
pub fn a_eqn_residual(mp: &MetricProfile, lambda: f64, n: u32) -> Result<Vec<f64>, MetricError> {
    if mp.len() < 5 {
        return Err(MetricError::TooFewSamples { need: 5, got: mp.len() });
    }
    let nm1 = f64::from(n) - 1.0;
    let a_ttt = derivative(&mp.t, &mp.a_tt);
    let last = mp.len() - 1;
    Ok((0..mp.len())
        .map(|i| {
            if i == 0 || i == last {
                return 0.0;
            }
            let (a, at, att) = (mp.a[i], mp.a_t[i], mp.a_tt[i]);
            let rhs = a * at * at * att + a * a * att * att - nm1 * a * att - lambda * a * a * a * att - nm1 * at * at
                + nm1 * at.powi(4);
            a * a * at * a_ttt[i] - rhs
        })
        .collect())
}
