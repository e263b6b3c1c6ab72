//! Threshold constants and the hypothesis margins of the decay theorem.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::kato::{kato_norm, split_potential, GridRef};
use super::PotentialSpec;
use crate::error::{LabError, Result};

/// `Γ(m/2) / Γ(1/2)` for odd `m`, `Γ(m/2)` for even `m`, by recurrence.
fn gamma_half_reduced(m: u32) -> f64 {
    let (mut value, mut x) = if m.is_multiple_of(2) { (1.0, 1.0) } else { (1.0, 0.5) };
    let target = m as f64 / 2.0;
    while x < target {
        value *= x;
        x += 1.0;
    }
    value
}

/// `c_n = 2π^{n/2} / Γ(n/2 - 1)`, the reciprocal of the Newton kernel
/// constant in dimension `n ≥ 3`. The factors of `√π` cancel exactly for
/// odd `n`.
pub fn c_n(n: u32) -> Result<f64> {
    if n < 3 {
        return Err(LabError::InvalidArgument(format!("c_n needs n >= 3, got {n}")));
    }
    let pi_power = PI.powi((n / 2) as i32);
    Ok(2.0 * pi_power / gamma_half_reduced(n - 2))
}

/// Kato-norm bound on `V₋` for the form-bounded self-adjoint realization.
pub fn self_adjoint_threshold() -> f64 {
    4.0 * PI
}

/// Kato-norm bound on `V₋` for the Gaussian heat-kernel estimate, `c₃/2`.
pub fn heat_threshold() -> f64 {
    PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub value: f64,
    pub threshold: f64,
    pub ok: bool,
}

impl Margin {
    fn below(value: f64, threshold: f64) -> Self {
        Self {
            value,
            threshold,
            ok: value.is_finite() && value < threshold,
        }
    }

    /// `threshold - value`; negative when failing.
    pub fn slack(&self) -> f64 {
        self.threshold - self.value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub split_radius: f64,
    pub kato_norm_v1: f64,
    pub kato_norm_v2: f64,
    pub kato_norm_negative: f64,
    pub selfadjoint: Margin,
    pub thm_main_i: bool,
    pub thm_main_ii: Margin,
    pub thm_main_iii: Margin,
    pub decay_exponent_check: bool,
    pub heat_ok: Margin,
    /// `‖V₋‖_K` against the full constant `c₃`, used by the semigroup bounds.
    pub heat_full: Margin,
}

impl HypothesisReport {
    /// Conditions (i)-(iii) together with self-adjointness.
    pub fn main_ok(&self) -> bool {
        self.selfadjoint.ok && self.thm_main_i && self.thm_main_ii.ok && self.thm_main_iii.ok
    }
}

fn norm_or_infinite<'a>(v: &PotentialSpec, grid: GridRef<'a>) -> Result<f64> {
    match kato_norm(v, grid) {
        Ok(k) => Ok(k),
        Err(LabError::KatoDivergent { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Margins of the decay theorem for `V = V₁ + V₂` split at `radius`.
/// Condition (iv), absence of resonances, is left to the resonance scan.
pub fn check_hypotheses<'a>(v: &PotentialSpec, radius: f64, grid: impl Into<GridRef<'a>>) -> Result<HypothesisReport> {
    if !(radius >= 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "split radius must be >= 0, got {radius}"
        )));
    }
    let grid = grid.into();
    let c3 = c_n(3)?;
    let (v1, v2) = split_potential(v, radius);
    let k1 = norm_or_infinite(&v1, grid)?;
    let k2 = norm_or_infinite(&v2, grid)?;
    let kneg = norm_or_infinite(&v.negative_part(), grid)?;
    let ii = if k2 == 0.0 && k1.is_finite() {
        0.0
    } else {
        k2 * (1.0 + k1 / (4.0 * PI))
    };
    let p = v.decay_exponent();
    let all_finite = k1.is_finite() && k2.is_finite() && kneg.is_finite();
    let mut report = HypothesisReport {
        split_radius: radius,
        kato_norm_v1: k1,
        kato_norm_v2: k2,
        kato_norm_negative: kneg,
        selfadjoint: Margin::below(kneg, self_adjoint_threshold()),
        thm_main_i: v1.support_radius().is_some() && k1.is_finite(),
        thm_main_ii: Margin::below(ii, 4.0 * PI),
        thm_main_iii: Margin::below(kneg, c3),
        decay_exponent_check: p > 2.0,
        heat_ok: Margin::below(kneg, 0.5 * c3),
        heat_full: Margin::below(kneg, c3),
    };
    if !all_finite {
        for m in [
            &mut report.selfadjoint,
            &mut report.thm_main_ii,
            &mut report.thm_main_iii,
            &mut report.heat_ok,
            &mut report.heat_full,
        ] {
            m.ok = false;
        }
        report.thm_main_i = false;
        report.decay_exponent_check = false;
    }
    Ok(report)
}
