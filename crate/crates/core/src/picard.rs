//! Fixed-point iteration for the regularized unknown `w = r^alpha h` near the tip.
//!
//! The iterate is stored as its offset from the ball center
//! `(c0, -c2 r^{alpha-1})`:
//!
//! * `w_dev = w - c0`
//! * `v_dev = r^{1-alpha} v + c2`
//!
//! Both components are then measured directly in the sup-norm of the ball, and
//! the large `r^{alpha-1}` part of `v` never has to be subtracted back out.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::SolitonParams;
use crate::continuation::{GlobalProfile, ProfileError, ProfileSource};
use crate::quadrature::{
    cubic_hermite, cumulative_from_zero, cumulative_to_right, GridFunction, QuadratureError, RadialGrid,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PicardError {
    #[error("iterate left the ball: {component} distance {distance:e} exceeds radius {radius:e} (iteration {iteration})")]
    BallEscape { component: BallComponent, distance: f64, radius: f64, iteration: usize },
    #[error("no convergence after {iterations} iterations (last update {last_update:e}, recent ratios {recent:?})")]
    NotConverged { iterations: usize, last_update: f64, recent: Vec<f64> },
    #[error("eps = {eps:e} exceeds the guaranteed-contraction radius {eps3:e}; enable the override to proceed")]
    EpsTooLarge { eps: f64, eps3: f64 },
    #[error("eps = {0:e} is above the hard limit 1/2")]
    EpsAboveHalf(f64),
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("the origin-anchored map needs n > 4, got n = {0}")]
    VariantNeedsHighN(u32),
    #[error("grid mismatch between iterate components")]
    GridMismatch,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallComponent {
    W,
    V,
}

impl std::fmt::Display for BallComponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BallComponent::W => f.write_str("|w - c0|"),
            BallComponent::V => f.write_str("|r^(1-alpha) v + c2|"),
        }
    }
}

/// Which integral form of the `w` equation the map is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapVariant {
    /// Singular integrals run over `(r, eps)`; available for every `n`.
    ToEps,
    /// All integrals run over `(0, r)`; requires `n > 4`.
    FromOrigin,
}

impl MapVariant {
    pub fn default_for(n: u32) -> Self {
        if n > 4 {
            MapVariant::FromOrigin
        } else {
            MapVariant::ToEps
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Accept `eps > eps3` (up to 1/2) and rely on the ball-escape check.
    pub allow_large_eps: bool,
    pub variant: Option<MapVariant>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 200, allow_large_eps: false, variant: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub w_dev: GridFunction,
    pub v_dev: GridFunction,
    pub norm_distance_to_center: f64,
}

fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl IterateState {
    pub fn new(w_dev: GridFunction, v_dev: GridFunction) -> Result<Self, PicardError> {
        if !Arc::ptr_eq(w_dev.grid(), v_dev.grid()) && w_dev.grid() != v_dev.grid() {
            return Err(PicardError::GridMismatch);
        }
        let norm_distance_to_center = sup(w_dev.values()).max(sup(v_dev.values()));
        Ok(Self { w_dev, v_dev, norm_distance_to_center })
    }

    /// The ball center `(c0, -c2 r^{alpha-1})`.
    pub fn center(grid: Arc<RadialGrid>) -> Self {
        let zeros = vec![0.0; grid.len()];
        let w_dev = GridFunction::new(grid.clone(), zeros.clone()).expect("zeros are finite");
        let v_dev = GridFunction::new(grid, zeros).expect("zeros are finite");
        Self { w_dev, v_dev, norm_distance_to_center: 0.0 }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.w_dev.grid()
    }

    pub fn w(&self, params: &SolitonParams) -> Vec<f64> {
        self.w_dev.values().iter().map(|d| params.c0() + d).collect()
    }

    pub fn v(&self, params: &SolitonParams) -> Vec<f64> {
        let a = params.alpha;
        self.grid()
            .logs()
            .iter()
            .zip(self.v_dev.values())
            .map(|(s, d)| ((a - 1.0) * s).exp() * (d - params.c2))
            .collect()
    }

    /// Sup-norm distance between two states in the weighted norm of the ball.
    pub fn distance(&self, other: &Self) -> f64 {
        let dw = self.w_dev.values().iter().zip(other.w_dev.values()).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()));
        let dv = self.v_dev.values().iter().zip(other.v_dev.values()).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()));
        dw.max(dv)
    }

    fn check_ball(&self, params: &SolitonParams, iteration: usize) -> Result<(), PicardError> {
        let radius = params.ball_radius();
        let dw = sup(self.w_dev.values());
        let dv = sup(self.v_dev.values());
        if dw > radius {
            return Err(PicardError::BallEscape { component: BallComponent::W, distance: dw, radius, iteration });
        }
        if dv > radius {
            return Err(PicardError::BallEscape { component: BallComponent::V, distance: dv, radius, iteration });
        }
        Ok(())
    }
}

/// One application of the contraction map.
pub fn phi_step(state: &IterateState, params: &SolitonParams, variant: MapVariant) -> Result<IterateState, PicardError> {
    if variant == MapVariant::FromOrigin && params.n() <= 4 {
        return Err(PicardError::VariantNeedsHighN(params.n()));
    }
    let grid = state.grid().clone();
    let a = params.alpha;
    let (c0, c1, c2, lambda, nm1) = (params.c0(), params.c1(), params.c2, params.lambda(), params.nf() - 1.0);

    let mut ratio = Vec::with_capacity(grid.len());
    let mut quad = Vec::with_capacity(grid.len());
    for (wd, vd) in state.w_dev.values().iter().zip(state.v_dev.values()) {
        let w = c0 + wd;
        let v = vd - c2;
        ratio.push(v / w);
        quad.push(match variant {
            MapVariant::ToEps => ((nm1 - v) * v) / (2.0 * w),
            MapVariant::FromOrigin => ((v - nm1) * v) / (2.0 * w),
        });
    }
    let quad = GridFunction::new(grid.clone(), quad)?;
    let ratio = GridFunction::new(grid.clone(), ratio)?;
    let singular = match variant {
        MapVariant::ToEps => cumulative_to_right(&quad, a - 2.0)?,
        MapVariant::FromOrigin => cumulative_from_zero(&quad, a - 2.0, 0.0)?,
    };
    let drift = cumulative_from_zero(&ratio, a - 1.0, 0.0)?;
    let w_int = cumulative_from_zero(&state.v_dev, a - 1.0, a.min(1.0))?;

    let mut w_dev = Vec::with_capacity(grid.len());
    let mut v_dev = Vec::with_capacity(grid.len());
    for (k, (&r, &s)) in grid.nodes().iter().zip(grid.logs()).enumerate() {
        let ra = (a * s).exp();
        w_dev.push(-(c2 / a) * ra + w_int[k]);
        v_dev.push(c1 * r + 0.5 * a * lambda * r * s + r * (singular[k] - 0.5 * lambda * drift[k]));
    }
    IterateState::new(GridFunction::new(grid.clone(), w_dev)?, GridFunction::new(grid, v_dev)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub params: SolitonParams,
    pub variant: MapVariant,
    pub state: IterateState,
    pub iterations: usize,
    pub final_update_norm: f64,
    /// Ratios of successive update norms.
    pub contraction_estimates: Vec<f64>,
    /// Largest distance to the ball center seen over the whole iteration.
    pub max_distance_to_center: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalMetadata<'a> {
    pub params: &'a SolitonParams,
    pub variant: MapVariant,
    pub eps: f64,
    pub r_min: f64,
    pub intervals: usize,
    pub iterations: usize,
    pub final_update_norm: f64,
    pub contraction_estimates: &'a [f64],
}

impl LocalSolution {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.state.grid()
    }

    pub fn eps(&self) -> f64 {
        self.grid().eps()
    }

    pub fn w_dev(&self) -> &[f64] {
        self.state.w_dev.values()
    }

    pub fn v_dev(&self) -> &[f64] {
        self.state.v_dev.values()
    }

    pub fn w(&self) -> Vec<f64> {
        self.state.w(&self.params)
    }

    pub fn v(&self) -> Vec<f64> {
        self.state.v(&self.params)
    }

    /// `r dw/dr` at the nodes.
    pub fn w_dev_s(&self) -> Vec<f64> {
        let (a, c2) = (self.params.alpha, self.params.c2);
        self.grid().logs().iter().zip(self.v_dev()).map(|(s, d)| (a * s).exp() * (d - c2)).collect()
    }

    /// `w - c0` between nodes by cubic Hermite interpolation in `log r`.
    pub fn eval_w_dev(&self, r: f64) -> Option<f64> {
        let grid = self.grid();
        let k = grid.interval_of(r)?;
        let logs = grid.logs();
        let (a, c2) = (self.params.alpha, self.params.c2);
        let slope = |j: usize| (a * logs[j]).exp() * (self.v_dev()[j] - c2);
        Some(cubic_hermite(
            logs[k],
            logs[k + 1],
            self.w_dev()[k],
            self.w_dev()[k + 1],
            slope(k),
            slope(k + 1),
            r.ln(),
        ))
    }

    pub fn eval_h(&self, r: f64) -> Option<f64> {
        let wd = self.eval_w_dev(r)?;
        Some((self.params.c0() + wd) * r.powf(-self.params.alpha))
    }

    pub fn metadata(&self) -> LocalMetadata<'_> {
        LocalMetadata {
            params: &self.params,
            variant: self.variant,
            eps: self.eps(),
            r_min: self.grid().r_min(),
            intervals: self.grid().intervals(),
            iterations: self.iterations,
            final_update_norm: self.final_update_norm,
            contraction_estimates: &self.contraction_estimates,
        }
    }
}

/// Iterates the map from the ball center until the update falls below `opts.tol`.
pub fn solve_local(
    params: &SolitonParams,
    grid: Arc<RadialGrid>,
    opts: &PicardOptions,
) -> Result<LocalSolution, PicardError> {
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(PicardError::InvalidTolerance(opts.tol));
    }
    let eps = grid.eps();
    if eps > 0.5 {
        return Err(PicardError::EpsAboveHalf(eps));
    }
    if eps > params.eps3 && !opts.allow_large_eps {
        return Err(PicardError::EpsTooLarge { eps, eps3: params.eps3 });
    }
    let variant = opts.variant.unwrap_or_else(|| MapVariant::default_for(params.n()));

    let mut state = IterateState::center(grid);
    let mut estimates = Vec::new();
    let mut last_update = f64::INFINITY;
    let mut max_distance: f64 = 0.0;
    for iteration in 1..=opts.max_iter {
        let next = phi_step(&state, params, variant)?;
        next.check_ball(params, iteration)?;
        max_distance = max_distance.max(next.norm_distance_to_center);
        let update = next.distance(&state);
        if last_update.is_finite() && last_update > 0.0 {
            estimates.push(update / last_update);
        }
        last_update = update;
        state = next;
        if update <= opts.tol {
            return Ok(LocalSolution {
                params: *params,
                variant,
                state,
                iterations: iteration,
                final_update_norm: update,
                contraction_estimates: estimates,
                max_distance_to_center: max_distance,
            });
        }
    }
    let recent = estimates.iter().rev().take(5).rev().copied().collect();
    Err(PicardError::NotConverged { iterations: opts.max_iter, last_update, recent })
}

/// Pointwise residual of the second-order `w` equation, with `w_r` and `w_rr`
/// from central differences in `log r`. The two nodes at each end are set to 0.
pub fn residual_wrr(sol: &LocalSolution) -> GridFunction {
    wrr_residual_of(&sol.params, sol.grid(), sol.w_dev())
}

pub(crate) fn wrr_residual_of(params: &SolitonParams, grid: &Arc<RadialGrid>, w_dev: &[f64]) -> GridFunction {
    let a = params.alpha;
    let (c0, c2, lambda, nm1) = (params.c0(), params.c2, params.lambda(), params.nf() - 1.0);
    let hs = grid.log_step();
    let last = grid.intervals();
    let mut out = vec![0.0; grid.len()];
    for k in 2..=last.saturating_sub(2) {
        let r = grid.nodes()[k];
        let s = grid.logs()[k];
        let ws = (w_dev[k + 1] - w_dev[k - 1]) / (2.0 * hs);
        let wss = (w_dev[k + 1] - 2.0 * w_dev[k] + w_dev[k - 1]) / (hs * hs);
        let wr = ws / r;
        let wrr = (wss - ws) / (r * r);
        let w = c0 + w_dev[k];
        let ra1 = ((a - 1.0) * s).exp();
        let rhs = a / r * wr + c2 * ra1 / r + 0.5 * a * lambda * ra1 - nm1 * ra1 * wr / (2.0 * w)
            - lambda * ra1 * r * wr / (2.0 * w)
            + wr * wr / (2.0 * w);
        out[k] = wrr - rhs;
    }
    GridFunction::new(grid.clone(), out).expect("residual of finite data is finite")
}

/// The local solution as a profile `h = r^{-alpha} w` on `[r_min, eps]`.
pub fn to_h(sol: &LocalSolution) -> Result<GlobalProfile, PicardError> {
    let grid = sol.grid();
    let z: Vec<f64> = grid.nodes().iter().zip(sol.v_dev()).map(|(r, d)| d / r).collect();
    Ok(GlobalProfile::from_regularized(
        sol.params,
        ProfileSource::LocalOnly,
        sol.eps(),
        grid.logs().to_vec(),
        sol.w_dev().to_vec(),
        z,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{derive_params, SolitonInputs};
    use proptest::prelude::*;

    fn params(n: u32, lambda: f64) -> SolitonParams {
        derive_params(SolitonInputs::new(n, lambda, 1.0, 0.0)).unwrap()
    }

    fn grid(eps: f64, k: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::geometric(eps, eps * 1e-8, k).unwrap())
    }

    #[test]
    fn center_has_zero_distance() {
        let c = IterateState::center(grid(1e-3, 128));
        assert_eq!(c.norm_distance_to_center, 0.0);
    }

    #[test]
    fn center_image_stays_in_ball_for_n2() {
        let p = params(2, 0.0);
        let c = IterateState::center(grid(p.eps3, 512));
        let out = phi_step(&c, &p, MapVariant::ToEps).unwrap();
        assert!(out.norm_distance_to_center <= p.ball_radius());
        out.check_ball(&p, 1).unwrap();
    }

    #[test]
    fn n4_without_forcing_has_trivial_fixed_point() {
        let p = params(4, 0.0);
        assert_eq!(p.c2, 0.0);
        let c = IterateState::center(grid(p.eps3, 256));
        let out = phi_step(&c, &p, MapVariant::ToEps).unwrap();
        assert_eq!(out.norm_distance_to_center, 0.0);
    }

    #[test]
    fn center_image_matches_oracle_for_n9() {
        // nodes at eps3 * 2^{-j/80}, so eps3/2 is node K - 80
        let p = params(9, 1.0);
        let eps = p.eps3;
        let g = Arc::new(RadialGrid::geometric(eps, eps * 2f64.powi(-27), 2160).unwrap());
        let k = 2160 - 80;
        assert!((g.nodes()[k] / (eps / 2.0) - 1.0).abs() < 1e-14);
        let out = phi_step(&IterateState::center(g.clone()), &p, MapVariant::FromOrigin).unwrap();
        let want = -2.012_019_771_835_229_5e-8;
        let got = out.v_dev.values()[k];
        assert!((got - want).abs() <= 1e-12 * want.abs(), "{got:e} vs {want:e}");
        let v = out.v(&p)[k];
        assert!((v / -3.877_789_723_524_37e-9 - 1.0).abs() < 1e-11, "{v:e}");
    }

    #[test]
    fn from_origin_map_requires_high_n() {
        let p = params(3, 0.0);
        let c = IterateState::center(grid(p.eps3, 128));
        assert_eq!(phi_step(&c, &p, MapVariant::FromOrigin), Err(PicardError::VariantNeedsHighN(3)));
    }

    #[test]
    fn eps_guard() {
        let p = params(2, 0.0);
        let g = grid(1e-3, 256);
        assert!(matches!(
            solve_local(&p, g.clone(), &PicardOptions::default()),
            Err(PicardError::EpsTooLarge { .. })
        ));
        let opts = PicardOptions { allow_large_eps: true, ..Default::default() };
        solve_local(&p, g, &opts).unwrap();
        let big = Arc::new(RadialGrid::geometric(0.6, 0.6e-8, 2048).unwrap());
        assert!(matches!(solve_local(&p, big, &opts), Err(PicardError::EpsAboveHalf(_))));
    }

    #[test]
    fn ball_escape_names_component() {
        let opts = PicardOptions { allow_large_eps: true, ..Default::default() };
        // c1 r alone exceeds c0/10 at eps while w stays close to c0
        let p = derive_params(SolitonInputs::new(3, 0.0, 1.0, 15.0)).unwrap();
        let err = solve_local(&p, grid(0.01, 256), &opts).unwrap_err();
        assert!(matches!(err, PicardError::BallEscape { component: BallComponent::V, iteration: 1, .. }), "{err}");
        // the center offset -(c2/alpha) r^alpha of w already exceeds c0/10
        let p = derive_params(SolitonInputs::new(3, 0.0, 1.0, 50.0)).unwrap();
        let err = solve_local(&p, grid(0.4, 256), &opts).unwrap_err();
        assert!(matches!(err, PicardError::BallEscape { component: BallComponent::W, .. }), "{err}");
    }

    #[test]
    fn converges_and_contracts() {
        for (n, lambda) in [(2, 0.0), (3, 1.0), (4, 1.0), (5, 0.0), (9, 1.0)] {
            let p = params(n, lambda);
            let sol = solve_local(&p, grid(p.eps3, 1024), &PicardOptions::default()).unwrap();
            assert!(sol.final_update_norm <= 1e-12);
            assert!(sol.contraction_estimates.iter().take(4).any(|&q| q <= 0.5), "n={n}");
            assert!(sol.max_distance_to_center <= p.ball_radius());
            // fixed point: one more application moves nothing
            let again = phi_step(&sol.state, &p, sol.variant).unwrap();
            assert!(again.distance(&sol.state) <= 10.0 * 1e-12, "n={n}");
        }
    }

    #[test]
    fn boundary_behaviour_at_r_min() {
        for n in [2, 3, 5, 9] {
            let p = params(n, 1.0);
            let sol = solve_local(&p, grid(p.eps3, 1024), &PicardOptions::default()).unwrap();
            let rmin = sol.grid().r_min();
            let bound = 10.0 * p.c3 * rmin.powf(p.alpha) / p.alpha;
            assert!(sol.w_dev()[0].abs() <= bound);
            assert!(sol.v_dev()[0].abs() <= 1e-3);
            let w = sol.w();
            let v = sol.v();
            assert!(w.iter().all(|x| (0.9..=1.1).contains(x)));
            for (r, vv) in sol.grid().nodes().iter().zip(&v) {
                assert!(vv.abs() <= p.c3 * r.powf(p.alpha - 1.0) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn v_is_derivative_of_w() {
        let p = params(3, 1.0);
        let sol = solve_local(&p, grid(p.eps3, 2048), &PicardOptions::default()).unwrap();
        let (g, wd, ws) = (sol.grid(), sol.w_dev(), sol.w_dev_s());
        let hs = g.log_step();
        for k in [10usize, 500, 1500, 2040] {
            let fd = (wd[k + 1] - wd[k - 1]) / (2.0 * hs);
            assert!((fd - ws[k]).abs() <= 1e-4 * ws[k].abs(), "k={k} {fd} {}", ws[k]);
        }
    }

    #[test]
    fn w_at_eps_matches_oracle_n2() {
        let p = params(2, 0.0);
        let sol = solve_local(&p, grid(p.eps3, 2048), &PicardOptions::default()).unwrap();
        let w = 1.0 + sol.w_dev()[2048];
        let fine = solve_local(&p, grid(p.eps3, 4096), &PicardOptions { tol: 5e-13, ..Default::default() }).unwrap();
        assert!((w - (1.0 + fine.w_dev()[4096])).abs() <= 1e-9);
        let oracle = W_EPS_N2;
        assert!((w - oracle).abs() <= 1e-9, "{w:.17e}");
    }

    // shooting on the regularized ODE from tip data at r = eps e^{-30},
    // matching r^{-alpha} w_r + c2/r = c1 at eps (DOP853, rtol 1e-13)
    const W_EPS_N2: f64 = 1.003_155_457_544_15;

    #[test]
    fn wrr_residual_of_probe_is_the_forcing() {
        for (n, lambda) in [(2u32, 0.0), (5, 1.0)] {
            let p = params(n, lambda);
            let g = grid(1e-3, 128);
            let zeros = vec![0.0; g.len()];
            let res = wrr_residual_of(&p, &g, &zeros);
            for k in 2..=126 {
                let r: f64 = g.nodes()[k];
                let want = -p.c2 * r.powf(p.alpha - 2.0) - 0.5 * p.alpha * lambda * r.powf(p.alpha - 1.0);
                assert!((res.values()[k] - want).abs() <= 1e-12 * want.abs().max(1e-300));
            }
            assert_eq!(res.values()[0], 0.0);
            assert_eq!(res.values()[127], 0.0);
        }
    }

    #[test]
    fn wrr_residual_small_for_solution_and_large_for_perturbation() {
        let p = params(3, 0.0);
        let g = Arc::new(RadialGrid::geometric(p.eps3, p.eps3 * 1e-4, 8192).unwrap());
        let sol = solve_local(&p, g.clone(), &PicardOptions::default()).unwrap();
        let res = residual_wrr(&sol);
        let hs = g.log_step();
        let mut max_wrr: f64 = 0.0;
        for k in 1..g.intervals() {
            let r = g.nodes()[k];
            let wd = sol.w_dev();
            let ws = (wd[k + 1] - wd[k - 1]) / (2.0 * hs);
            let wss = (wd[k + 1] - 2.0 * wd[k] + wd[k - 1]) / (hs * hs);
            max_wrr = max_wrr.max(((wss - ws) / (r * r)).abs());
        }
        let max_res = sup(res.values());
        assert!(max_res <= 1e-6 * max_wrr, "{max_res:e} vs {max_wrr:e}");

        let bumped: Vec<f64> = sol.w_dev().iter().map(|x| x + 0.01).collect();
        let res2 = wrr_residual_of(&p, &g, &bumped);
        assert!(sup(res2.values()) > 1e2 * max_res, "{:e}", sup(res2.values()));
    }

    #[test]
    fn to_h_of_center_is_pure_blowup() {
        let p = params(3, 0.0);
        let g = grid(p.eps3, 256);
        let sol = LocalSolution {
            params: p,
            variant: MapVariant::ToEps,
            state: IterateState::center(g.clone()),
            iterations: 0,
            final_update_norm: 0.0,
            contraction_estimates: vec![],
            max_distance_to_center: 0.0,
        };
        let prof = to_h(&sol).unwrap();
        for (r, h) in prof.r.iter().zip(&prof.h) {
            assert!((h / r.powf(-p.alpha) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn h_blows_up_at_rate_alpha() {
        let p = params(2, 0.0);
        let sol = solve_local(&p, grid(p.eps3, 1024), &PicardOptions::default()).unwrap();
        let prof = to_h(&sol).unwrap();
        let scaled = prof.r[0].powf(p.alpha) * prof.h[0];
        assert!((scaled - 1.0).abs() < 1e-5);
        assert!(prof.h.iter().all(|&h| h > 0.0));
    }

    #[test]
    fn h_r_matches_finite_difference_n5() {
        let p = params(5, 1.0);
        let sol = solve_local(&p, grid(p.eps3, 2048), &PicardOptions::default()).unwrap();
        let prof = to_h(&sol).unwrap();
        let r = p.eps3 / 2.0;
        let k = sol.grid().interval_of(r).unwrap();
        let dr = 1e-3 * r;
        let fd = (sol.eval_h(r + dr).unwrap() - sol.eval_h(r - dr).unwrap()) / (2.0 * dr);
        let (h_r0, h_r1) = (prof.h_r[k], prof.h_r[k + 1]);
        let (r0, r1) = (prof.r[k], prof.r[k + 1]);
        let lin = h_r0 + (h_r1 - h_r0) * (r - r0) / (r1 - r0);
        assert!((fd / lin - 1.0).abs() < 1e-4, "{fd} {lin}");
    }

    #[test]
    fn deterministic() {
        let p = params(9, 1.0);
        let a = solve_local(&p, grid(p.eps3, 512), &PicardOptions::default()).unwrap();
        let b = solve_local(&p, grid(p.eps3, 512), &PicardOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    fn random_state(g: &Arc<RadialGrid>, p: &SolitonParams, amp: [f64; 4]) -> IterateState {
        let rad = p.ball_radius();
        let wd: Vec<f64> = g.logs().iter().map(|s| rad * (amp[0] * (3.0 * s).sin() + amp[1]) / 2.0).collect();
        let vd: Vec<f64> = g.logs().iter().map(|s| rad * (amp[2] * (2.0 * s).cos() + amp[3]) / 2.0).collect();
        IterateState::new(GridFunction::new(g.clone(), wd).unwrap(), GridFunction::new(g.clone(), vd).unwrap()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn contraction_and_ball_preservation(
            n in prop::sample::select(vec![2u32, 3, 4, 5, 9]),
            lambda in 0.0f64..1.0,
            a in prop::array::uniform4(-1.0f64..1.0),
            b in prop::array::uniform4(-1.0f64..1.0),
        ) {
            let p = params(n, lambda);
            let g = grid(p.eps3, 256);
            let variant = MapVariant::default_for(n);
            let s1 = random_state(&g, &p, a);
            let s2 = random_state(&g, &p, b);
            let i1 = phi_step(&s1, &p, variant).unwrap();
            let i2 = phi_step(&s2, &p, variant).unwrap();
            prop_assert!(i1.norm_distance_to_center <= p.ball_radius());
            prop_assert!(i1.distance(&i2) <= 0.5 * s1.distance(&s2) + 1e-15);
        }
    }
}
