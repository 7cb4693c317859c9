//! Outward continuation of the local solution and the resulting global profile.
//!
//! The default integrates the regularized pair `(w - c0, Z)` in `s = log r`,
//! where `Z = r^{-alpha} w_r + c2 / r` equals `v_dev / r` from the fixed point.
//! Integrating `(h, h_r)` directly from a small `eps` feeds local errors into
//! the subdominant `r^{alpha+1}` mode with a gain of order `eps^{-(alpha+1)}`;
//! the regularized pair keeps that mode at unit size. The direct form is kept
//! for comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{ConstantsError, SolitonParams};
use crate::ode::{integrate, Dopri5Options, OdeError, Outcome};
use crate::picard::{LocalSolution, PicardError};
use crate::quadrature::{cubic_hermite, gauss_legendre};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("profile needs at least {need} nodes, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("column lengths differ")]
    LengthMismatch,
    #[error("radii not strictly increasing at index {0}")]
    NotIncreasing(usize),
    #[error("h = {h:e} is not positive at r = {r:e}")]
    NonPositive { r: f64, h: f64 },
    #[error("non-finite value at r = {0:e}")]
    NonFinite(f64),
    #[error("r = {r:e} outside profile range [{lo:e}, {hi:e}]")]
    OutOfRange { r: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuationError {
    #[error("R_max = {r_max} must exceed the handoff radius {eps:e}")]
    RangeTooShort { r_max: f64, eps: f64 },
    #[error("R_max = {r_max} reaches the barrier -(n-1)/lambda = {barrier} for lambda < 0")]
    BeyondBarrier { r_max: f64, barrier: f64 },
    #[error("invalid tolerance {name} = {value}")]
    InvalidTolerance { name: &'static str, value: f64 },
    #[error("positivity lost: h = {h:e} at r = {r:e}")]
    PositivityLoss { r: f64, h: f64 },
    #[error("integrator failure (stiffness or blow-up): {0}")]
    Integrator(#[from] OdeError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error(transparent)]
    Local(#[from] PicardError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSource {
    LocalOnly,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// `(w - c0, Z)` in `log r`.
    Regularized,
    /// `(h, h_r)` in `log r`.
    Direct,
}

/// Right-hand side of the profile equation solved for `h_rr`.
pub fn h_rr_of(params: &SolitonParams, r: f64, h: f64, h_r: f64) -> f64 {
    let nm1 = params.nf() - 1.0;
    let rh = r * h_r;
    (nm1 * h * (h - 1.0) + rh * (rh - params.lambda() * r - nm1)) / (2.0 * r * r * h)
}

/// `(h, h_r)` sampled on increasing radii, plus the regularized offset
/// `w - c0 = r^alpha h - c0` and its log-derivative `r d(w)/dr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalProfile {
    pub params: SolitonParams,
    pub source: ProfileSource,
    /// Radius where the fixed point hands over to the integrator.
    pub eps: f64,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub h: Vec<f64>,
    pub h_r: Vec<f64>,
    pub h_rr: Vec<f64>,
    pub w_dev: Vec<f64>,
    pub w_dev_s: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub h: f64,
    pub h_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowBounds {
    pub min_h: f64,
    pub max_h: f64,
    pub min_hr: f64,
    pub max_hr: f64,
}

impl GlobalProfile {
    /// Builds the profile from `s = log r`, `w - c0` and `Z`.
    pub fn from_regularized(
        params: SolitonParams,
        source: ProfileSource,
        eps: f64,
        s: Vec<f64>,
        w_dev: Vec<f64>,
        z: Vec<f64>,
    ) -> Result<Self, ProfileError> {
        if s.len() != w_dev.len() || s.len() != z.len() {
            return Err(ProfileError::LengthMismatch);
        }
        let a = params.alpha;
        let (c0, c2) = (params.c0(), params.c2);
        let n = s.len();
        let (mut r, mut h, mut h_r, mut h_rr, mut w_dev_s) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let ri = s[i].exp();
            let w = c0 + w_dev[i];
            let big_v = ri * z[i] - c2;
            let hi = w * (-a * s[i]).exp();
            let ra = (a * s[i]).exp();
            let hri = (ra * big_v - a * w) * (-(a + 1.0) * s[i]).exp();
            r.push(ri);
            h.push(hi);
            h_r.push(hri);
            h_rr.push(h_rr_of(&params, ri, hi, hri));
            w_dev_s.push(ra * big_v);
        }
        let out = Self { params, source, eps, r, s, h, h_r, h_rr, w_dev, w_dev_s };
        out.validate()?;
        Ok(out)
    }

    /// Builds the profile from samples of `h` and its first two derivatives.
    pub fn from_h(
        params: SolitonParams,
        source: ProfileSource,
        eps: f64,
        r: Vec<f64>,
        h: Vec<f64>,
        h_r: Vec<f64>,
        h_rr: Vec<f64>,
    ) -> Result<Self, ProfileError> {
        if r.len() != h.len() || r.len() != h_r.len() || r.len() != h_rr.len() {
            return Err(ProfileError::LengthMismatch);
        }
        let a = params.alpha;
        let s: Vec<f64> = r.iter().map(|x| x.ln()).collect();
        let w_dev = r.iter().zip(&h).map(|(ri, hi)| ri.powf(a) * hi - params.c0()).collect();
        let w_dev_s = r.iter().zip(h.iter().zip(&h_r)).map(|(ri, (hi, hri))| ri.powf(a) * (a * hi + ri * hri)).collect();
        let out = Self { params, source, eps, r, s, h, h_r, h_rr, w_dev, w_dev_s };
        out.validate()?;
        Ok(out)
    }

    fn validate(&self) -> Result<(), ProfileError> {
        if self.r.len() < 2 {
            return Err(ProfileError::TooShort { need: 2, got: self.r.len() });
        }
        for i in 0..self.r.len() {
            let r = self.r[i];
            if !(self.h[i].is_finite() && self.h_r[i].is_finite() && self.h_rr[i].is_finite() && r.is_finite()) {
                return Err(ProfileError::NonFinite(r));
            }
            if self.h[i] <= 0.0 {
                return Err(ProfileError::NonPositive { r, h: self.h[i] });
            }
            if i > 0 && r <= self.r[i - 1] {
                return Err(ProfileError::NotIncreasing(i));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn r_min(&self) -> f64 {
        self.r[0]
    }

    pub fn r_max(&self) -> f64 {
        self.r[self.r.len() - 1]
    }

    /// `q = r h_r / h` at the nodes.
    pub fn q(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.r[i] * self.h_r[i] / self.h[i]).collect()
    }

    /// Interval `i` with `r_i <= r <= r_{i+1}`.
    pub fn locate(&self, r: f64) -> Result<usize, ProfileError> {
        if !(r >= self.r_min() && r <= self.r_max()) {
            return Err(ProfileError::OutOfRange { r, lo: self.r_min(), hi: self.r_max() });
        }
        let i = self.r.partition_point(|&x| x <= r);
        Ok(i.saturating_sub(1).min(self.len() - 2))
    }

    fn q_and_slope(&self, i: usize) -> (f64, f64) {
        let (r, h) = (self.r[i], self.h[i]);
        let q = r * self.h_r[i] / h;
        (q, q + r * r * self.h_rr[i] / h - q * q)
    }

    /// `h` and `h_r` between nodes: cubic Hermite in `log r` on `log h` and on
    /// `q`, which reproduces pure power laws exactly.
    pub fn eval(&self, r: f64) -> Result<ProfilePoint, ProfileError> {
        let i = self.locate(r)?;
        let (s0, s1) = (self.s[i], self.s[i + 1]);
        let x = r.ln();
        let (q0, dq0) = self.q_and_slope(i);
        let (q1, dq1) = self.q_and_slope(i + 1);
        let lh = cubic_hermite(s0, s1, self.h[i].ln(), self.h[i + 1].ln(), q0, q1, x);
        let q = cubic_hermite(s0, s1, q0, q1, dq0, dq1, x);
        let h = lh.exp();
        Ok(ProfilePoint { h, h_r: q * h / r })
    }

    /// `r^alpha h - c0` between nodes.
    pub fn eval_w_dev(&self, r: f64) -> Result<f64, ProfileError> {
        let i = self.locate(r)?;
        Ok(cubic_hermite(
            self.s[i],
            self.s[i + 1],
            self.w_dev[i],
            self.w_dev[i + 1],
            self.w_dev_s[i],
            self.w_dev_s[i + 1],
            r.ln(),
        ))
    }

    /// `int_{r_lo}^{r_hi} g(rho, h(rho)) d rho`, five-point Gauss-Legendre in
    /// `log rho` on every node interval.
    pub fn integrate(&self, r_lo: f64, r_hi: f64, g: impl Fn(f64, f64) -> f64) -> Result<f64, ProfileError> {
        let i0 = self.locate(r_lo)?;
        let i1 = self.locate(r_hi)?;
        let mut total = 0.0;
        for i in i0..=i1 {
            let a = if i == i0 { r_lo.ln() } else { self.s[i] };
            let b = if i == i1 { r_hi.ln() } else { self.s[i + 1] };
            if b <= a {
                continue;
            }
            total += gauss_legendre(a, b, |x| {
                let rho = x.exp();
                let h = self.eval(rho).map(|p| p.h).unwrap_or(f64::NAN);
                g(rho, h) * rho
            });
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_floor: f64,
    pub formulation: Formulation,
    /// Largest step in `log r`; defaults to the log step of the local grid.
    pub max_log_step: Option<f64>,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_floor: 1e-12, formulation: Formulation::Regularized, max_log_step: None }
    }
}

fn regularized_rhs(params: &SolitonParams, s: f64, y: &[f64; 2]) -> [f64; 2] {
    let a = params.alpha;
    let (c0, c2, lambda, nm1) = (params.c0(), params.c2, params.lambda(), params.nf() - 1.0);
    let r = s.exp();
    let w = c0 + y[0];
    let big_v = r * y[1] - c2;
    let ra = (a * s).exp();
    [ra * big_v, 0.5 * a * lambda + ra / r * big_v * (big_v - nm1 - lambda * r) / (2.0 * w)]
}

fn direct_rhs(params: &SolitonParams, s: f64, y: &[f64; 2]) -> [f64; 2] {
    let r = s.exp();
    [r * y[1], r * h_rr_of(params, r, y[0], y[1])]
}

/// Validates the outward range, including the barrier for `lambda < 0`.
pub fn check_range(params: &SolitonParams, eps: f64, r_max: f64) -> Result<(), ContinuationError> {
    if !(r_max.is_finite() && r_max > eps) {
        return Err(ContinuationError::RangeTooShort { r_max, eps });
    }
    if params.lambda() < 0.0 {
        let barrier = -(params.nf() - 1.0) / params.lambda();
        if r_max >= barrier {
            return Err(ContinuationError::BeyondBarrier { r_max, barrier });
        }
    }
    Ok(())
}

/// Continues the local solution from its outer radius to `r_max`.
pub fn extend_global(
    local: &LocalSolution,
    r_max: f64,
    opts: &ContinuationOptions,
) -> Result<GlobalProfile, ContinuationError> {
    for (name, value) in [("rtol", opts.rtol), ("atol", opts.atol), ("h_floor", opts.h_floor)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(ContinuationError::InvalidTolerance { name, value });
        }
    }
    let params = local.params;
    let eps = local.eps();
    check_range(&params, eps, r_max)?;

    let grid = local.grid();
    let k = grid.intervals();
    let ode_opts = Dopri5Options {
        rtol: opts.rtol,
        atol: opts.atol,
        max_step: opts.max_log_step.unwrap_or(grid.log_step()),
        initial_step: Some(0.1 * grid.log_step()),
        ..Default::default()
    };
    let s0 = grid.logs()[k];
    let s1 = r_max.ln();
    let a = params.alpha;
    let c0 = params.c0();

    let mut s = grid.logs().to_vec();
    let mut lost: Option<(f64, f64)> = None;
    match opts.formulation {
        Formulation::Regularized => {
            let mut w_dev = local.w_dev().to_vec();
            let mut z: Vec<f64> = grid.nodes().iter().zip(local.v_dev()).map(|(r, d)| d / r).collect();
            let y0 = [w_dev[k], z[k]];
            let (outcome, _) = integrate(
                |x, y| regularized_rhs(&params, x, y),
                s0,
                y0,
                s1,
                &ode_opts,
                |x, y, _| {
                    if x == s0 {
                        return true;
                    }
                    let h = (c0 + y[0]) * (-a * x).exp();
                    if !(h > opts.h_floor) {
                        lost = Some((x.exp(), h));
                        return false;
                    }
                    s.push(x);
                    w_dev.push(y[0]);
                    z.push(y[1]);
                    true
                },
            )?;
            if let (Outcome::Stopped, Some((r, h))) = (outcome, lost) {
                return Err(ContinuationError::PositivityLoss { r, h });
            }
            Ok(GlobalProfile::from_regularized(params, ProfileSource::Extended, eps, s, w_dev, z)?)
        }
        Formulation::Direct => {
            let local_profile = crate::picard::to_h(local)?;
            let mut r = local_profile.r.clone();
            let mut h = local_profile.h.clone();
            let mut h_r = local_profile.h_r.clone();
            let y0 = [h[k], h_r[k]];
            s.truncate(k + 1);
            let (outcome, _) = integrate(
                |x, y| direct_rhs(&params, x, y),
                s0,
                y0,
                s1,
                &ode_opts,
                |x, y, _| {
                    if x == s0 {
                        return true;
                    }
                    if !(y[0] > opts.h_floor) {
                        lost = Some((x.exp(), y[0]));
                        return false;
                    }
                    r.push(x.exp());
                    h.push(y[0]);
                    h_r.push(y[1]);
                    true
                },
            )?;
            if let (Outcome::Stopped, Some((r, h))) = (outcome, lost) {
                return Err(ContinuationError::PositivityLoss { r, h });
            }
            let h_rr = r.iter().zip(h.iter().zip(&h_r)).map(|(ri, (hi, hri))| h_rr_of(&params, *ri, *hi, *hri)).collect();
            Ok(GlobalProfile::from_h(params, ProfileSource::Extended, eps, r, h, h_r, h_rr)?)
        }
    }
}

/// Integrates the regularized system backward from `eps` to `eps / 2` and
/// returns the largest relative deviation from the fixed-point `h` at the
/// local grid nodes in that range.
pub fn backward_overlap_deviation(local: &LocalSolution, rtol: f64, atol: f64) -> Result<f64, ContinuationError> {
    let params = local.params;
    let grid = local.grid();
    let k = grid.intervals();
    let s_end = grid.logs()[k];
    let s_stop = (0.5 * grid.eps()).ln();
    let opts = Dopri5Options {
        rtol,
        atol,
        max_step: grid.log_step(),
        initial_step: Some(0.1 * grid.log_step()),
        ..Default::default()
    };
    // t = -s turns the backward sweep into a forward one
    let y0 = [local.w_dev()[k], local.v_dev()[k] / grid.eps()];
    let mut samples: Vec<(f64, [f64; 2], [f64; 2])> = Vec::new();
    integrate(
        |t, y| {
            let d = regularized_rhs(&params, -t, y);
            [-d[0], -d[1]]
        },
        -s_end,
        y0,
        -s_stop,
        &opts,
        |t, y, dy| {
            samples.push((-t, *y, [-dy[0], -dy[1]]));
            true
        },
    )?;
    samples.reverse();
    let a = params.alpha;
    let mut worst: f64 = 0.0;
    for j in (0..k).rev() {
        let sj = grid.logs()[j];
        if sj < s_stop {
            break;
        }
        let i = samples.partition_point(|p| p.0 <= sj).clamp(1, samples.len() - 1) - 1;
        let (x0, y0, d0) = samples[i];
        let (x1, y1, d1) = samples[i + 1];
        let wd = cubic_hermite(x0, x1, y0[0], y1[0], d0[0], d1[0], sj);
        let h_ode = (params.c0() + wd) * (-a * sj).exp();
        let h_fix = (params.c0() + local.w_dev()[j]) * (-a * sj).exp();
        worst = worst.max((h_ode / h_fix - 1.0).abs());
    }
    Ok(worst)
}

/// `|LHS - RHS|` of the identity expressing `h_r(r1)` through data at `r2`
/// and the integral of `(h + 1) / (rho^2 sqrt(h))` over `[r2, r1]`.
pub fn integral_identity_residual(profile: &GlobalProfile, r2: f64, r1: f64) -> Result<f64, ProfileError> {
    if r2 == r1 {
        return Ok(0.0);
    }
    let nm1 = profile.params.nf() - 1.0;
    let lambda = profile.params.lambda();
    let p1 = profile.eval(r1)?;
    let p2 = profile.eval(r2)?;
    let integral = profile.integrate(r2, r1, |rho, h| (h + 1.0) / (rho * rho * h.sqrt()))?;
    let rhs = nm1 / r1 + lambda + (p1.h / p2.h).sqrt() * (p2.h_r - nm1 / r2 - lambda) + 0.5 * nm1 * p1.h.sqrt() * integral;
    Ok((p1.h_r - rhs).abs())
}

/// Extrema of `h` and `h_r` over `[L/2, L]`.
pub fn window_bounds(profile: &GlobalProfile, l: f64) -> Result<WindowBounds, ProfileError> {
    let lo = 0.5 * l;
    let a = profile.eval(lo)?;
    let b = profile.eval(l)?;
    let mut out = WindowBounds {
        min_h: a.h.min(b.h),
        max_h: a.h.max(b.h),
        min_hr: a.h_r.min(b.h_r),
        max_hr: a.h_r.max(b.h_r),
    };
    for i in 0..profile.len() {
        let r = profile.r[i];
        if r > lo && r < l {
            out.min_h = out.min_h.min(profile.h[i]);
            out.max_h = out.max_h.max(profile.h[i]);
            out.min_hr = out.min_hr.min(profile.h_r[i]);
            out.max_hr = out.max_hr.max(profile.h_r[i]);
        }
    }
    Ok(out)
}
