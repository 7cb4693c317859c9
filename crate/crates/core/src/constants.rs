//! Problem inputs and every constant the contraction argument derives from them.
//!
//! The constants `c2..c7` and the radii `eps1..eps3` are evaluated once, stored,
//! and never recomputed at use sites. `eps3` is the largest right endpoint for
//! which the fixed-point map is guaranteed to be a contraction with factor 1/2
//! on the ball of radius `c0/10` around the leading-order profile.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Constant with `|log r| <= C4 * r^(-1/2)` on `(0, 1/2]`.
///
/// `sup sqrt(r) |log r|` over that interval is `2/e`, so anything `>= 1` works.
pub const C4: f64 = 1.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstantsError {
    #[error("dimension n = {0} is invalid, need n >= 2")]
    Dimension(u32),
    #[error("blow-up coefficient c0 = {0} must be positive and finite")]
    BlowupCoefficient(f64),
    #[error("parameter {name} = {value} is not finite")]
    NonFinite { name: &'static str, value: f64 },
    #[error("global solves need lambda >= 0, got {0}")]
    NegativeLambda(f64),
}

/// User-facing inputs: sphere dimension `n`, soliton constant `lambda`,
/// blow-up coefficient `c0` and the free integration constant `c1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonInputs {
    pub n: u32,
    pub lambda: f64,
    pub c0: f64,
    pub c1: f64,
}

impl Default for SolitonInputs {
    fn default() -> Self {
        Self { n: 2, lambda: 0.0, c0: 1.0, c1: 0.0 }
    }
}

impl SolitonInputs {
    pub fn new(n: u32, lambda: f64, c0: f64, c1: f64) -> Self {
        Self { n, lambda, c0, c1 }
    }

    pub fn validate(&self) -> Result<(), ConstantsError> {
        if self.n < 2 {
            return Err(ConstantsError::Dimension(self.n));
        }
        if !self.lambda.is_finite() {
            return Err(ConstantsError::NonFinite { name: "lambda", value: self.lambda });
        }
        if !self.c1.is_finite() {
            return Err(ConstantsError::NonFinite { name: "c1", value: self.c1 });
        }
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(ConstantsError::BlowupCoefficient(self.c0));
        }
        Ok(())
    }

    /// Extra hypothesis for continuation to arbitrarily large radius.
    pub fn validate_global(&self) -> Result<(), ConstantsError> {
        self.validate()?;
        if self.lambda < 0.0 {
            return Err(ConstantsError::NegativeLambda(self.lambda));
        }
        Ok(())
    }
}

/// Sign class of `c2`, which decides which integral bounds and expansions apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// n in {2, 3}: alpha < 1, c2 < 0.
    LowN,
    /// n = 4: alpha = 1, c2 = 0.
    CriticalN,
    /// n > 4: alpha > 1, c2 > 0.
    HighN,
}

impl Branch {
    pub fn of(n: u32) -> Self {
        match n {
            0..=3 => Branch::LowN,
            4 => Branch::CriticalN,
            _ => Branch::HighN,
        }
    }
}

/// Inputs together with all derived constants. Serializes as one flat object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    #[serde(flatten)]
    pub inputs: SolitonInputs,
    pub alpha: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub branch: Branch,
}

impl SolitonParams {
    pub fn n(&self) -> u32 {
        self.inputs.n
    }

    pub fn nf(&self) -> f64 {
        f64::from(self.inputs.n)
    }

    pub fn lambda(&self) -> f64 {
        self.inputs.lambda
    }

    pub fn c0(&self) -> f64 {
        self.inputs.c0
    }

    pub fn c1(&self) -> f64 {
        self.inputs.c1
    }

    /// Radius of the ball around the leading-order profile.
    pub fn ball_radius(&self) -> f64 {
        self.inputs.c0 / 10.0
    }
}

/// Evaluates every constant of the contraction argument.
pub fn derive_params(inputs: SolitonInputs) -> Result<SolitonParams, ConstantsError> {
    inputs.validate()?;
    let SolitonInputs { n, lambda, c0, c1 } = inputs;
    let nf = f64::from(n);
    let branch = Branch::of(n);

    let alpha = nf.sqrt() - 1.0;
    // (n-1)(alpha-1)/2 with alpha - 1 = sqrt(n) - 2; exactly zero for n = 4.
    let c2 = (nf - 1.0) * (nf.sqrt() - 2.0) / 2.0;
    let c3 = c2.abs() + c0 / 10.0;
    let lam = lambda.abs();

    let eps1 = 0.5_f64.min((c0 * alpha / (10.0 * c2.abs() + c0)).powf(1.0 / alpha));

    let c6 = 20.0 / (9.0 * c0) + 200.0 * c3 / (81.0 * c0 * c0);
    let (c5, c7) = match branch {
        Branch::CriticalN => (
            4.0 * nf * C4 * (c3 + c3 * c3) / c0 + c3 * lam / (c0 * alpha),
            c6 * (nf * C4 * (1.0 + c3) + lam / alpha),
        ),
        Branch::LowN | Branch::HighN => {
            let gap = (alpha - 1.0).abs();
            (
                4.0 * nf * (c3 + c3 * c3) / (c0 * gap) + c3 * lam / (c0 * alpha),
                c6 * (nf * (1.0 + c3) / gap + lam / alpha),
            )
        }
    };

    let eps2 = [
        eps1,
        c0 / (30.0 * (c1.abs() + 1.0)),
        (c0 / (30.0 * c5)).powf(1.0 / alpha),
        c0 * c0 / (900.0 * (alpha * lam * C4 + c5).powi(2)),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);

    let eps3 = [
        eps2,
        (alpha / 6.0).powf(1.0 / alpha),
        (6.0 * c7).powf(-1.0 / alpha),
        (6.0 * c7).powi(-2),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);

    Ok(SolitonParams {
        inputs,
        alpha,
        c2,
        c3,
        c4: C4,
        c5,
        c6,
        c7,
        eps1,
        eps2,
        eps3,
        branch,
    })
}
