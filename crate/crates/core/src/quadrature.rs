//! Power-weighted quadrature on geometric grids.
//!
//! Every kernel in the fixed-point map has the shape `rho^p * g(rho)` with `g`
//! slowly varying. After the substitution `rho = e^s` the integrand becomes
//! `e^{(p+1)s} g(e^s)` on a uniform `s` grid. The rules here interpolate `g` by
//! a polynomial in `s` and integrate it against the exponential weight exactly
//! (product integration), so `rho^p * (polynomial in log rho)` is reproduced to
//! roundoff and the error constant only sees the smooth factor.
//!
//! Cumulative sums are assembled from 3-point (Simpson-type) panels; when the
//! parity of the node count requires it, one 4-point (3/8-type) panel is used.
//! The single interval next to the fixed end is integrated with the quadratic
//! through its two nodes and the next one inward.

use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("non-finite integrand value at node {index}")]
    NonFinite { index: usize },
    #[error("integrand rho^{p} is not admissible (need p > -2)")]
    InvalidWeight { p: f64 },
    #[error("tail rho^({exponent}) is not integrable at the origin")]
    DivergentTail { exponent: f64 },
    #[error("node index {index} outside grid with {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid function has {got} values for {want} nodes")]
    LengthMismatch { got: usize, want: usize },
}

/// Geometric grid `r_k = eps * theta^(K-k)`, `k = 0..=K`, on `[r_min, eps]`.
///
/// The logarithms `s_k = log r_k` are stored alongside the nodes so that
/// `log r` never has to be recovered from a rounded `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    eps: f64,
    log_step: f64,
    nodes: Vec<f64>,
    logs: Vec<f64>,
}

impl RadialGrid {
    pub const MIN_INTERVALS: usize = 64;

    /// Builds the grid with `intervals = K` log-uniform steps between `r_min` and `eps`.
    pub fn geometric(eps: f64, r_min: f64, intervals: usize) -> Result<Self, QuadratureError> {
        if !(eps.is_finite() && eps > 0.0 && r_min.is_finite() && r_min > 0.0 && r_min < eps) {
            return Err(QuadratureError::InvalidGrid(format!(
                "need 0 < r_min < eps, got r_min = {r_min}, eps = {eps}"
            )));
        }
        if intervals < Self::MIN_INTERVALS {
            return Err(QuadratureError::InvalidGrid(format!(
                "need at least {} intervals, got {intervals}",
                Self::MIN_INTERVALS
            )));
        }
        let log_eps = eps.ln();
        let log_step = (log_eps - r_min.ln()) / intervals as f64;
        let ratio = (-log_step).exp();
        if !(ratio > 0.5 && ratio < 1.0) {
            return Err(QuadratureError::InvalidGrid(format!(
                "ratio {ratio} outside (0.5, 1); use more intervals"
            )));
        }
        let logs: Vec<f64> = (0..=intervals)
            .map(|k| log_eps - (intervals - k) as f64 * log_step)
            .collect();
        let mut nodes: Vec<f64> = logs.iter().map(|s| s.exp()).collect();
        nodes[intervals] = eps;
        Ok(Self { eps, log_step, nodes, logs })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn r_min(&self) -> f64 {
        self.nodes[0]
    }

    /// Number of intervals `K`; there are `K + 1` nodes.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn log_step(&self) -> f64 {
        self.log_step
    }

    pub fn ratio(&self) -> f64 {
        (-self.log_step).exp()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn logs(&self) -> &[f64] {
        &self.logs
    }

    /// Index `k` with `r_k <= r < r_{k+1}`, clamped to the last interval.
    pub fn interval_of(&self, r: f64) -> Option<usize> {
        if !(r >= self.nodes[0] && r <= self.eps) {
            return None;
        }
        let k = ((r.ln() - self.logs[0]) / self.log_step).floor();
        let k = (k.max(0.0) as usize).min(self.intervals() - 1);
        Some(k)
    }
}

/// Values sampled at the nodes of a [`RadialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self, QuadratureError> {
        if values.len() != grid.len() {
            return Err(QuadratureError::LengthMismatch { got: values.len(), want: grid.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(QuadratureError::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self, QuadratureError> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Product-integration weights for one exponent `b = (p + 1) * log_step`.
#[derive(Debug, Clone, Copy)]
struct Weights {
    simpson: [f64; 3],
    three_eighths: [f64; 4],
    // quadratic through nodes 0, 1, 2 integrated over [0, 1] and over [1, 2]
    lower: [f64; 3],
    upper: [f64; 3],
}

impl Weights {
    fn new(b: f64) -> Self {
        let s = lagrange_weights(&[0.0, 1.0, 2.0], 0.0, 2.0, b);
        let t = lagrange_weights(&[0.0, 1.0, 2.0, 3.0], 0.0, 3.0, b);
        let lo = lagrange_weights(&[0.0, 1.0, 2.0], 0.0, 1.0, b);
        let up = lagrange_weights(&[0.0, 1.0, 2.0], 1.0, 2.0, b);
        Self {
            simpson: [s[0], s[1], s[2]],
            three_eighths: [t[0], t[1], t[2], t[3]],
            lower: [lo[0], lo[1], lo[2]],
            upper: [up[0], up[1], up[2]],
        }
    }
}

/// `int_lo^hi x^j e^{b x} dx` for `j = 0..count`.
fn exp_moments(b: f64, lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let reach = b.abs() * hi.abs().max(lo.abs());
    if reach <= 2.0 {
        (0..count)
            .map(|j| {
                let mut sum = 0.0;
                let mut coef = 1.0; // b^m / m!
                for m in 0..80 {
                    let e = (j + m + 1) as i32;
                    let term = coef * (hi.powi(e) - lo.powi(e)) / e as f64;
                    sum += term;
                    if m > 2 && term.abs() <= 1e-18 * sum.abs() {
                        break;
                    }
                    coef *= b / (m + 1) as f64;
                }
                sum
            })
            .collect()
    } else {
        // x^j e^{bx} integrated by parts: M_j = [x^j e^{bx} / b] - (j / b) M_{j-1}.
        let mut out = Vec::with_capacity(count);
        let (ehi, elo) = ((b * hi).exp(), (b * lo).exp());
        for j in 0..count {
            let boundary = (hi.powi(j as i32) * ehi - lo.powi(j as i32) * elo) / b;
            let prev = if j == 0 { 0.0 } else { out[j - 1] };
            out.push(boundary - j as f64 / b * prev);
        }
        out
    }
}

/// Weights `w_i` with `int_lo^hi e^{bx} P(x) dx = sum_i w_i P(x_i)` for every
/// polynomial `P` of degree `< nodes.len()`.
fn lagrange_weights(nodes: &[f64], lo: f64, hi: f64, b: f64) -> Vec<f64> {
    let m = nodes.len();
    let moments = exp_moments(b, lo, hi, m);
    (0..m)
        .map(|i| {
            // monomial coefficients of the i-th Lagrange basis polynomial
            let mut coef = vec![1.0];
            let mut denom = 1.0;
            for (j, &xj) in nodes.iter().enumerate() {
                if j == i {
                    continue;
                }
                let mut next = vec![0.0; coef.len() + 1];
                for (d, &c) in coef.iter().enumerate() {
                    next[d + 1] += c;
                    next[d] -= xj * c;
                }
                coef = next;
                denom *= nodes[i] - xj;
            }
            coef.iter().zip(&moments).map(|(c, mo)| c * mo).sum::<f64>() / denom
        })
        .collect()
}

fn check_weight(p: f64) -> Result<(), QuadratureError> {
    if p.is_finite() && p > -2.0 {
        Ok(())
    } else {
        Err(QuadratureError::InvalidWeight { p })
    }
}

fn check_finite(values: &[f64], range: std::ops::RangeInclusive<usize>) -> Result<(), QuadratureError> {
    for index in range {
        if !values[index].is_finite() {
            return Err(QuadratureError::NonFinite { index });
        }
    }
    Ok(())
}

struct Kernel<'a> {
    logs: &'a [f64],
    g: &'a [f64],
    beta: f64,
    step: f64,
    w: Weights,
}

impl<'a> Kernel<'a> {
    fn new(f: &'a GridFunction, p: f64) -> Self {
        let grid = f.grid();
        let beta = p + 1.0;
        let step = grid.log_step();
        Self { logs: grid.logs(), g: f.values(), beta, step, w: Weights::new(beta * step) }
    }

    fn scale(&self, k: usize) -> f64 {
        self.step * (self.beta * self.logs[k]).exp()
    }

    fn simpson(&self, k: usize) -> f64 {
        let w = &self.w.simpson;
        self.scale(k) * (w[0] * self.g[k] + w[1] * self.g[k + 1] + w[2] * self.g[k + 2])
    }

    fn three_eighths(&self, k: usize) -> f64 {
        let w = &self.w.three_eighths;
        self.scale(k)
            * (w[0] * self.g[k] + w[1] * self.g[k + 1] + w[2] * self.g[k + 2] + w[3] * self.g[k + 3])
    }

    /// `[s_k, s_{k+1}]` using nodes `k, k+1, k+2`.
    fn lower(&self, k: usize) -> f64 {
        let w = &self.w.lower;
        self.scale(k) * (w[0] * self.g[k] + w[1] * self.g[k + 1] + w[2] * self.g[k + 2])
    }

    /// `[s_{k+1}, s_{k+2}]` using nodes `k, k+1, k+2`.
    fn upper(&self, k: usize) -> f64 {
        let w = &self.w.upper;
        self.scale(k) * (w[0] * self.g[k] + w[1] * self.g[k + 1] + w[2] * self.g[k + 2])
    }

    /// `int_{r_lo}^{r_hi}` for node indices `lo < hi`, grouped the same way as
    /// the cumulative sums: panels start at `hi` for the right-anchored case
    /// and at `lo` for the origin-anchored one.
    fn span(&self, lo: usize, hi: usize, from_right: bool) -> f64 {
        let m = hi - lo;
        if m == 1 {
            return if from_right { self.upper(lo - 1) } else { self.lower(lo) };
        }
        let mut sum = 0.0;
        let (mut k, end) = match (m % 2 == 1, from_right) {
            (true, true) => {
                sum += self.three_eighths(lo);
                (lo + 3, hi)
            }
            (true, false) => {
                sum += self.three_eighths(hi - 3);
                (lo, hi - 3)
            }
            _ => (lo, hi),
        };
        while k < end {
            sum += self.simpson(k);
            k += 2;
        }
        sum
    }
}

/// `int_{r_k}^{eps} rho^p f(rho) d rho`.
pub fn integral_to_right(f: &GridFunction, k: usize, p: f64) -> Result<f64, QuadratureError> {
    check_weight(p)?;
    let last = f.grid().intervals();
    if k > last {
        return Err(QuadratureError::IndexOutOfRange { index: k, len: last + 1 });
    }
    check_finite(f.values(), k..=last)?;
    if k == last {
        return Ok(0.0);
    }
    Ok(Kernel::new(f, p).span(k, last, true))
}

/// `int_{r_k}^{eps} rho^p f(rho) d rho` at every node `k`.
pub fn cumulative_to_right(f: &GridFunction, p: f64) -> Result<Vec<f64>, QuadratureError> {
    check_weight(p)?;
    let last = f.grid().intervals();
    check_finite(f.values(), 0..=last)?;
    let kern = Kernel::new(f, p);
    let mut out = vec![0.0; last + 1];
    for k in (0..last).rev() {
        let m = last - k;
        out[k] = if m == 1 {
            kern.upper(k - 1)
        } else if m.is_multiple_of(2) {
            out[k + 2] + kern.simpson(k)
        } else {
            out[k + 3] + kern.three_eighths(k)
        };
    }
    Ok(out)
}

/// Integral of `rho^p f(rho)` over `(0, r_min]`, assuming `f ~ g(rho) rho^q` with
/// `g` linear through the two smallest nodes.
fn origin_tail(f: &GridFunction, p: f64, q: f64) -> Result<f64, QuadratureError> {
    let e = p + q + 1.0;
    if !(e > 0.0) {
        return Err(QuadratureError::DivergentTail { exponent: p + q });
    }
    let grid = f.grid();
    let (r0, r1) = (grid.nodes()[0], grid.nodes()[1]);
    let (s0, s1) = (grid.logs()[0], grid.logs()[1]);
    let g0 = f.values()[0] * (-q * s0).exp();
    let g1 = f.values()[1] * (-q * s1).exp();
    let slope = (g1 - g0) / (r1 - r0);
    let r0e = (e * s0).exp();
    Ok(g0 * r0e / e - slope * r0 * r0e / (e * (e + 1.0)))
}

/// `int_0^{r_k} rho^p f(rho) d rho`, with the part below `r_min` taken from the
/// leading behaviour `rho^{p+q}` of the integrand.
pub fn integral_from_zero(f: &GridFunction, k: usize, p: f64, q: f64) -> Result<f64, QuadratureError> {
    check_weight(p)?;
    let last = f.grid().intervals();
    if k > last {
        return Err(QuadratureError::IndexOutOfRange { index: k, len: last + 1 });
    }
    check_finite(f.values(), 0..=k.max(1))?;
    let tail = origin_tail(f, p, q)?;
    if k == 0 {
        return Ok(tail);
    }
    Ok(tail + Kernel::new(f, p).span(0, k, false))
}

/// `int_0^{r_k} rho^p f(rho) d rho` at every node `k`.
pub fn cumulative_from_zero(f: &GridFunction, p: f64, q: f64) -> Result<Vec<f64>, QuadratureError> {
    check_weight(p)?;
    let last = f.grid().intervals();
    check_finite(f.values(), 0..=last)?;
    let kern = Kernel::new(f, p);
    let mut out = vec![0.0; last + 1];
    out[0] = origin_tail(f, p, q)?;
    for k in 1..=last {
        out[k] = if k == 1 {
            out[0] + kern.lower(0)
        } else if k % 2 == 0 {
            out[k - 2] + kern.simpson(k - 2)
        } else {
            out[k - 3] + kern.three_eighths(k - 3)
        };
    }
    Ok(out)
}

/// Five-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    half * X.iter().zip(W.iter()).map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
}

/// Cubic Hermite interpolation on `[x0, x1]` from values and slopes at both ends.
pub fn cubic_hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let dx = x1 - x0;
    let t = (x - x0) / dx;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * dx * d0 + h01 * y1 + h11 * dx * d1
}
