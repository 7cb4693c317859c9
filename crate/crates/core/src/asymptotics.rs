//! Near-tip expansions, remainders, blow-up rate fits and the `q = r h_r / h`
//! diagnostics.
//!
//! All three branches share one truncated form for `w = r^alpha h`:
//!
//! `c0 + a1 r^alpha + a2 r^{alpha+1} + a3 r^{alpha+1} log r + a4 r^{2 alpha}`
//!
//! with the coefficients that do not appear in a branch set to zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{Branch, SolitonParams};
use crate::continuation::{GlobalProfile, ProfileError};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error("branch {branch:?} does not apply to n = {n}")]
    BranchMismatch { branch: Branch, n: u32 },
    #[error("expansion needs r > 0, got {0}")]
    NonPositiveRadius(f64),
    #[error("fit window [{lo:e}, {hi:e}] holds {got} nodes, need at least 8")]
    TooFewNodes { lo: f64, hi: f64, got: usize },
    #[error("profile has {0} nodes, need at least 3")]
    ProfileTooShort(usize),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionOrder {
    H,
    Hr,
}

/// Coefficients of the truncated near-tip expansion of `r^alpha h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerms {
    pub branch: Branch,
    pub alpha: f64,
    pub c0: f64,
    /// `r^alpha`
    pub a1: f64,
    /// `r^{alpha+1}`
    pub a2: f64,
    /// `r^{alpha+1} log r`
    pub a3: f64,
    /// `r^{2 alpha}`
    pub a4: f64,
}

impl ExpansionTerms {
    pub fn new(params: &SolitonParams) -> Self {
        Self::for_branch(params, params.branch).expect("branch derived from n")
    }

    pub fn for_branch(params: &SolitonParams, branch: Branch) -> Result<Self, AsymptoticsError> {
        if Branch::of(params.n()) != branch {
            return Err(AsymptoticsError::BranchMismatch { branch, n: params.n() });
        }
        let a = params.alpha;
        let (c0, c1, c2, lambda, n) = (params.c0(), params.c1(), params.c2, params.lambda(), params.nf());
        let zero = Self { branch, alpha: a, c0, a1: 0.0, a2: 0.0, a3: 0.0, a4: 0.0 };
        Ok(match branch {
            Branch::HighN => Self {
                a1: -c2 / a,
                a2: c1 / (a + 1.0) - a * lambda / (2.0 * (a + 1.0).powi(2)),
                a3: a * lambda / (2.0 * a + 2.0),
                a4: c2 * (n - 1.0 + c2) / (4.0 * c0 * a * (a - 1.0)),
                ..zero
            },
            Branch::LowN => Self {
                a1: -c2 / a,
                a4: -c2 * (c2 + n - 1.0) / (4.0 * c0 * a * (1.0 - a)),
                ..zero
            },
            Branch::CriticalN => Self { a3: lambda / 4.0, ..zero },
        })
    }

    /// Named coefficients in the order they appear in the expansion.
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        match self.branch {
            Branch::HighN => vec![
                ("c0", self.c0),
                ("r^alpha", self.a1),
                ("r^(alpha+1)", self.a2),
                ("r^(alpha+1) log r", self.a3),
                ("r^(2 alpha)", self.a4),
            ],
            Branch::LowN => vec![("c0", self.c0), ("r^alpha", self.a1), ("r^(2 alpha)", self.a4)],
            Branch::CriticalN => vec![("c0", self.c0), ("r^2 log r", self.a3)],
        }
    }

    /// Truncated `r^alpha h - c0`.
    pub fn w_dev(&self, r: f64) -> f64 {
        let a = self.alpha;
        let s = r.ln();
        let ra = r.powf(a);
        ra * (self.a1 + self.a2 * r + self.a3 * r * s + self.a4 * ra)
    }

    /// Scale `s(r)` the remainder of `r^alpha h` is measured against.
    pub fn remainder_scale(&self, r: f64) -> f64 {
        match self.branch {
            Branch::CriticalN => r * r * r.ln().abs(),
            _ => r.powf(2.0 * self.alpha),
        }
    }

    pub fn eval(&self, r: f64, order: ExpansionOrder) -> Result<f64, AsymptoticsError> {
        if !(r > 0.0) {
            return Err(AsymptoticsError::NonPositiveRadius(r));
        }
        let a = self.alpha;
        let s = r.ln();
        Ok(match order {
            ExpansionOrder::H => (self.c0 + self.w_dev(r)) * r.powf(-a),
            ExpansionOrder::Hr => match self.branch {
                // the constant lambda/4 from differentiating r^2 log r is o(|log r|) and dropped
                Branch::CriticalN => (-self.c0 + self.a3 * r * r * s) / (r * r),
                _ => {
                    -a * self.c0 * (-(a + 1.0) * s).exp()
                        + self.a2
                        + self.a3 * (s + 1.0)
                        + a * self.a4 * ((a - 1.0) * s).exp()
                }
            },
        })
    }
}

/// Truncated near-tip expansion of `h` or `h_r`.
pub fn eval_expansion(params: &SolitonParams, r: f64, order: ExpansionOrder) -> Result<f64, AsymptoticsError> {
    ExpansionTerms::new(params).eval(r, order)
}

/// Operational cutoff below which the expansions are compared.
pub fn delta0(eps: f64) -> f64 {
    eps.min(0.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderSample {
    pub r: f64,
    /// `r^alpha h - truncated expansion`
    pub remainder: f64,
    pub scaled_remainder: f64,
}

fn remainder_at(terms: &ExpansionTerms, r: f64, w_dev: f64) -> RemainderSample {
    let remainder = w_dev - terms.w_dev(r);
    RemainderSample { r, remainder, scaled_remainder: remainder / terms.remainder_scale(r) }
}

/// Scaled remainders at every profile node with `r <= delta0`.
pub fn remainder_profile(profile: &GlobalProfile, params: &SolitonParams) -> Vec<RemainderSample> {
    let terms = ExpansionTerms::new(params);
    let cut = delta0(profile.eps);
    profile
        .r
        .iter()
        .zip(&profile.w_dev)
        .take_while(|(r, _)| **r <= cut)
        .map(|(&r, &wd)| remainder_at(&terms, r, wd))
        .collect()
}

/// Scaled remainders at `top * 10^{-j}`, `j = 0..decades`, interpolated from the
/// profile; points below the profile range are skipped.
pub fn remainder_by_decade(
    profile: &GlobalProfile,
    params: &SolitonParams,
    top: f64,
    decades: usize,
) -> Result<Vec<RemainderSample>, AsymptoticsError> {
    let terms = ExpansionTerms::new(params);
    let mut out = Vec::with_capacity(decades + 1);
    for j in 0..=decades {
        let r = top * 10f64.powi(-(j as i32));
        if r < profile.r_min() {
            break;
        }
        out.push(remainder_at(&terms, r, profile.eval_w_dev(r)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub alpha_hat: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub nodes: usize,
    /// `(r, q(r))` at the fitted nodes.
    pub q_tail: Vec<(f64, f64)>,
}

/// Least-squares slope of `log h` against `log r` over the nodes in `window`.
pub fn fit_blowup_rate(profile: &GlobalProfile, window: (f64, f64)) -> Result<RateFit, AsymptoticsError> {
    let (lo, hi) = window;
    let idx: Vec<usize> = (0..profile.len()).filter(|&i| profile.r[i] >= lo && profile.r[i] <= hi).collect();
    if idx.len() < 8 {
        return Err(AsymptoticsError::TooFewNodes { lo, hi, got: idx.len() });
    }
    let m = idx.len() as f64;
    let xs: Vec<f64> = idx.iter().map(|&i| profile.s[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| profile.h[i].ln()).collect();
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - ym - slope * (x - xm)).powi(2)).sum();
    let stderr = if idx.len() > 2 { (sse / (m - 2.0) / sxx).sqrt() } else { 0.0 };
    let q_tail = idx.iter().map(|&i| (profile.r[i], profile.r[i] * profile.h_r[i] / profile.h[i])).collect();
    Ok(RateFit { alpha_hat: -slope, stderr, window, nodes: idx.len(), q_tail })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QDiagnostics {
    /// `r` times the residual of the `q` equation at each node, central
    /// differences in `log r`; 0 at the two end nodes.
    pub residual: Vec<f64>,
    /// Integrating factor `F(r)` at each node.
    pub f_factor: Vec<f64>,
    /// Reference radius of the integral representation, `min(1, R_max, eps)`.
    /// Beyond the local range `F` can grow by hundreds of orders of magnitude,
    /// and the representation then cancels catastrophically.
    pub r_ref: f64,
    /// Largest `|q_repr - q|` over nodes in `[r_ref / 100, r_ref]`.
    pub representation_residual: f64,
}

/// Residual of the first-order equation satisfied by `q`, the integrating
/// factor `F` and the check of the integral representation of `q`.
pub fn q_ode_residual(profile: &GlobalProfile) -> Result<QDiagnostics, AsymptoticsError> {
    let m = profile.len();
    if m < 3 {
        return Err(AsymptoticsError::ProfileTooShort(m));
    }
    let p = &profile.params;
    let (lambda, nm1, a, c0) = (p.lambda(), p.nf() - 1.0, p.alpha, p.c0());
    let q = profile.q();
    let (r, s, h) = (&profile.r, &profile.s, &profile.h);

    let mut residual = vec![0.0; m];
    for i in 1..m - 1 {
        let (d0, d1) = (s[i] - s[i - 1], s[i + 1] - s[i]);
        let q_s = (q[i + 1] * d0 * d0 - q[i - 1] * d1 * d1 + q[i] * (d1 * d1 - d0 * d0)) / (d0 * d1 * (d0 + d1));
        let coef = -1.0 + lambda * r[i] / (2.0 * h[i]) + nm1 / (2.0 * h[i]);
        residual[i] = q_s + coef * q[i] + 0.5 * (q[i] * q[i] - nm1 * (h[i] - 1.0) / h[i]);
    }

    // log F = (lambda/2) int_0^r d rho / h + ((n-1)/2) int_0^r d rho / (rho h), tails from h ~ c0 r^{-alpha}
    let r0 = r[0];
    let mut log_f = vec![0.0; m];
    log_f[0] = 0.5 * lambda * r0.powf(a + 1.0) / ((a + 1.0) * c0) + 0.5 * nm1 * r0.powf(a) / (a * c0);
    for i in 1..m {
        let piece = gauss_legendre(s[i - 1], s[i], |x| {
            let rho = x.exp();
            let hv = profile.eval(rho).map(|pt| pt.h).unwrap_or(f64::NAN);
            0.5 * (lambda * rho + nm1) / hv
        });
        log_f[i] = log_f[i - 1] + piece;
    }
    let f_factor: Vec<f64> = log_f.iter().map(|x| x.exp()).collect();

    // q(r) = (r / F(r)) (F(r_ref) q(r_ref) / r_ref + I_1(r)), I_1 = int_r^{r_ref} F/(2 rho^2) (q^2 - (n-1)(h-1)/h)
    let r_ref = profile.r_max().min(1.0).min(profile.eps);
    let i_ref = profile.locate(r_ref)?;
    let f_at = |x: f64, i: usize| -> f64 {
        let extra = gauss_legendre(s[i], x.ln(), |y| {
            let rho = y.exp();
            let hv = profile.eval(rho).map(|pt| pt.h).unwrap_or(f64::NAN);
            0.5 * (lambda * rho + nm1) / hv
        });
        (log_f[i] + extra).exp()
    };
    let integrand = |rho: f64| -> f64 {
        let pt = profile.eval(rho).unwrap_or(crate::continuation::ProfilePoint { h: f64::NAN, h_r: f64::NAN });
        let qq = rho * pt.h_r / pt.h;
        let i = profile.locate(rho).unwrap_or(0);
        f_at(rho, i) / (2.0 * rho * rho) * (qq * qq - nm1 * (pt.h - 1.0) / pt.h)
    };
    let f_ref = f_at(r_ref, i_ref);
    let pt_ref = profile.eval(r_ref)?;
    let q_ref = r_ref * pt_ref.h_r / pt_ref.h;
    let lo = (r_ref / 100.0).max(profile.r_min());
    let mut worst: f64 = 0.0;
    let mut acc = 0.0;
    let mut upper = r_ref;
    for i in (0..=i_ref).rev() {
        let ri = r[i];
        if ri < lo {
            break;
        }
        acc += gauss_legendre(ri.ln(), upper.ln(), |y| {
            let rho = y.exp();
            integrand(rho) * rho
        });
        upper = ri;
        let q_repr = ri / f_factor[i] * (f_ref * q_ref / r_ref + acc);
        worst = worst.max((q_repr - q[i]).abs());
    }
    Ok(QDiagnostics { residual, f_factor, r_ref, representation_residual: worst })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::constants::{derive_params, SolitonInputs};
    use crate::continuation::{extend_global, ContinuationOptions, ProfileSource};
    use crate::picard::{solve_local, PicardOptions};
    use crate::quadrature::RadialGrid;
    use std::sync::Arc;

    fn params(n: u32, lambda: f64, c0: f64, c1: f64) -> SolitonParams {
        derive_params(SolitonInputs::new(n, lambda, c0, c1)).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs()
    }

    #[test]
    fn frozen_expansion_values() {
        let cases = [
            (params(2, 0.0, 1.0, 0.0), 0.01, 7.475_172_230_940_88, -277.718_244_261_534_38),
            (params(9, 1.0, 1.0, 0.0), 0.01, 9_997.984_138_321_602, -2_000_001.192_834_506_4),
            (params(3, 1.0, 2.0, 0.5), 0.02, 35.438_898_520_117_84, -1_282.521_051_602_488),
            (params(4, 1.0, 1.0, 0.0), 0.01, 99.988_487_074_535_03, -10_001.151_292_546_497),
        ];
        for (p, r, h, hr) in cases {
            let got_h = eval_expansion(&p, r, ExpansionOrder::H).unwrap();
            let got_hr = eval_expansion(&p, r, ExpansionOrder::Hr).unwrap();
            assert!(close(got_h, h, 1e-14), "n={} {got_h} {h}", p.n());
            assert!(close(got_hr, hr, 1e-14), "n={} {got_hr} {hr}", p.n());
        }
    }

    #[test]
    fn n4_without_lambda_is_pure_inverse() {
        let p = params(4, 0.0, 1.7, 0.3);
        for r in [1e-6, 1e-3, 0.05] {
            let h = eval_expansion(&p, r, ExpansionOrder::H).unwrap();
            assert!((h - 1.7 / r).abs() <= 2.0 * f64::EPSILON * h, "{h}");
        }
        let t = ExpansionTerms::new(&p);
        assert_eq!(t.named(), vec![("c0", 1.7), ("r^2 log r", 0.0)]);
    }

    #[test]
    fn branch_mismatch_and_bad_radius() {
        let p = params(3, 0.0, 1.0, 0.0);
        assert!(matches!(
            ExpansionTerms::for_branch(&p, Branch::HighN),
            Err(AsymptoticsError::BranchMismatch { .. })
        ));
        assert!(eval_expansion(&p, 0.0, ExpansionOrder::H).is_err());
    }

    #[test]
    fn high_n_log_coefficient() {
        let p = params(9, 1.0, 1.0, 0.0);
        let t = ExpansionTerms::new(&p);
        assert!(close(t.a3, 2.0 / 6.0, 1e-15));
        // stored factored form equals the expanded one
        let expanded = (p.c2 * p.c2 + (p.nf() - 1.0) * p.c2) / (4.0 * p.c0() * p.alpha * (p.alpha - 1.0));
        assert!(close(t.a4, expanded, 1e-15));
    }

    #[test]
    fn derivative_consistency() {
        for (n, lambda) in [(2, 1.0), (3, 0.0), (5, 1.0), (9, 1.0), (4, 1.0)] {
            let p = params(n, lambda, 1.0, 0.4);
            let t = ExpansionTerms::new(&p);
            for r in [1e-4, 1e-3, 1e-2] {
                let d = 1e-5 * r;
                let fd = (t.eval(r + d, ExpansionOrder::H).unwrap() - t.eval(r - d, ExpansionOrder::H).unwrap()) / (2.0 * d);
                let hr = t.eval(r, ExpansionOrder::Hr).unwrap();
                // dropped pieces are below the last kept order of h_r
                let dropped = if n == 4 { lambda / 4.0 + 1e-6 / (r * r) } else { 1e-6 * hr.abs() };
                assert!((fd - hr).abs() <= dropped + 1e-7 * hr.abs(), "n={n} r={r} {fd} {hr}");
            }
        }
    }

    fn synthetic(p: &SolitonParams, f: impl Fn(f64) -> (f64, f64, f64)) -> GlobalProfile {
        let r: Vec<f64> = (0..=600).map(|i| 1e-9 * 10f64.powf(i as f64 / 75.0)).collect();
        let (mut h, mut hr, mut hrr) = (vec![], vec![], vec![]);
        for &x in &r {
            let (a, b, c) = f(x);
            h.push(a);
            hr.push(b);
            hrr.push(c);
        }
        GlobalProfile::from_h(*p, ProfileSource::LocalOnly, 0.05, r, h, hr, hrr).unwrap()
    }

    #[test]
    fn remainder_of_truncated_expansion_vanishes() {
        for n in [2u32, 5] {
            let p = params(n, 1.0, 1.0, 0.0);
            let t = ExpansionTerms::new(&p);
            let mut prof = synthetic(&p, |x| (t.eval(x, ExpansionOrder::H).unwrap(), 0.0, 0.0));
            // the profile's w_dev is r^alpha h - c0; use the exact truncated value
            prof.w_dev = prof.r.iter().map(|&x| t.w_dev(x)).collect();
            let rem = remainder_profile(&prof, &p);
            assert!(!rem.is_empty());
            assert!(rem.iter().all(|s| s.scaled_remainder == 0.0));
        }
    }

    #[test]
    fn exact_power_law_fit() {
        let p = params(3, 0.0, 1.0, 0.0);
        let e = -0.7;
        let prof = synthetic(&p, |x| (2.0 * x.powf(e), 2.0 * e * x.powf(e - 1.0), 2.0 * e * (e - 1.0) * x.powf(e - 2.0)));
        let fit = fit_blowup_rate(&prof, (1e-6, 1e-3)).unwrap();
        assert!((fit.alpha_hat - 0.7).abs() < 1e-12);
        assert!(fit.stderr < 1e-12);
        assert!(fit.q_tail.iter().all(|(_, q)| (q + 0.7).abs() < 1e-12));
        assert!(matches!(fit_blowup_rate(&prof, (1e-6, 1.05e-6)), Err(AsymptoticsError::TooFewNodes { .. })));
    }

    #[test]
    fn unit_probe_q_diagnostics() {
        let p = params(3, 0.0, 1.0, 0.0);
        let prof = synthetic(&p, |_| (1.0, 0.0, 0.0));
        let d = q_ode_residual(&prof).unwrap();
        assert!(d.residual.iter().all(|&x| x == 0.0));
        assert!(d.representation_residual == 0.0);
    }

    fn solved(n: u32, lambda: f64, k: usize, r_max: f64) -> GlobalProfile {
        let p = params(n, lambda, 1.0, 0.0);
        let g = Arc::new(RadialGrid::geometric(p.eps3, p.eps3 * 1e-8, k).unwrap());
        let loc = solve_local(&p, g, &PicardOptions::default()).unwrap();
        extend_global(&loc, r_max, &ContinuationOptions::default()).unwrap()
    }

    // Continuation steps capped so that every node spacing halves with K.
    fn solved_refined(k: usize, r_max: f64) -> GlobalProfile {
        let p = params(2, 1.0, 1.0, 0.0);
        let g = Arc::new(RadialGrid::geometric(p.eps3, p.eps3 * 1e-8, k).unwrap());
        let loc = solve_local(&p, g, &PicardOptions::default()).unwrap();
        let opts = ContinuationOptions { max_log_step: Some(2.0 / k as f64), ..Default::default() };
        extend_global(&loc, r_max, &opts).unwrap()
    }

    #[test]
    fn solved_profile_q_diagnostics() {
        let prof = solved(2, 1.0, 1024, 4.0);
        let d = q_ode_residual(&prof).unwrap();
        assert!(d.f_factor.iter().all(|&f| f > 0.0));
        assert!(d.f_factor.windows(2).all(|w| w[1] >= w[0]));
        assert!(d.representation_residual < 1e-6, "{:e}", d.representation_residual);
        let sup = |p: &GlobalProfile| q_ode_residual(p).unwrap().residual.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let coarse = sup(&solved_refined(1024, 4.0));
        let fine_prof = solved_refined(2048, 4.0);
        let fine = sup(&fine_prof);
        assert!(coarse / fine > 3.0, "{coarse:e} {fine:e}");
        // q tends to -alpha at the tip
        let q = prof.q();
        assert!((q[0] + prof.params.alpha).abs() < 1e-4);
    }

    #[test]
    fn n5_remainder_shrinks_toward_tip() {
        // at eps3 the remainder sits below the roundoff of w itself, so use a wider local range
        let p = params(5, 0.0, 1.0, 0.0);
        let g = Arc::new(RadialGrid::geometric(0.03, 0.03e-8, 2048).unwrap());
        let opts = PicardOptions { allow_large_eps: true, ..Default::default() };
        let loc = solve_local(&p, g, &opts).unwrap();
        let prof = extend_global(&loc, 1.0, &ContinuationOptions::default()).unwrap();
        let terms = ExpansionTerms::new(&p);
        let at = |r: f64| remainder_at(&terms, r, prof.eval_w_dev(r).unwrap()).scaled_remainder.abs();
        assert!(at(1e-5) < at(1e-3), "{:e} {:e}", at(1e-5), at(1e-3));
        let rows = remainder_by_decade(&prof, &p, delta0(prof.eps), 4).unwrap();
        assert_eq!(rows.len(), 5);
    }

    #[test]
    fn rate_fit_on_solved_n3() {
        let prof = solved(3, 0.0, 2048, 1.0);
        let fit = fit_blowup_rate(&prof, (1e-6, 1e-3)).unwrap();
        assert!((fit.alpha_hat - (3f64.sqrt() - 1.0)).abs() <= 1e-3, "{}", fit.alpha_hat);
    }

    #[test]
    fn rate_fit_improves_toward_tip() {
        for n in [2u32, 3, 5, 9] {
            let prof = solved(n, 0.0, 2048, 1.0);
            let a = prof.params.alpha;
            let mut last = f64::INFINITY;
            for hi in [1e-1f64, 1e-3, 1e-5] {
                let lo = (hi * 1e-3).max(prof.r_min());
                let err = (fit_blowup_rate(&prof, (lo, hi)).unwrap().alpha_hat - a).abs();
                assert!(err <= last, "n={n} hi={hi} {err:e} {last:e}");
                last = err;
            }
        }
    }
}
