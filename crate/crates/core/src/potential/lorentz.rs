//! Lorentz `L^{3/2,1}` norm with the layer-cake convention
//! `‖f‖ = ∫_0^∞ μ{|f| > s}^{2/3} ds`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::kato::GridRef;
use super::PotentialSpec;
use crate::error::Result;

/// `2π (3/4π)^{2/3}`: with the convention above, the Kato norm of any
/// potential is at most this multiple of its Lorentz norm (layer cake plus
/// the bathtub bound for `∫_E |y|^{-1} dy`).
pub const YOUNG_CONSTANT: f64 = 2.417_987_931_024_704_6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzReport {
    pub value: f64,
    pub tail_bound: f64,
    /// Truncation tail exceeds the requested relative tolerance.
    pub truncated: bool,
}

/// Layer-cake integral for cell values `vals` with measures `meas`.
fn layer_cake(mut cells: Vec<(f64, f64)>) -> f64 {
    cells.retain(|(v, m)| *v > 0.0 && *m > 0.0);
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut total = 0.0;
    let mut measure = 0.0;
    for (k, &(v, m)) in cells.iter().enumerate() {
        measure += m;
        let next = cells.get(k + 1).map_or(0.0, |c| c.0);
        total += (v - next) * measure.powf(2.0 / 3.0);
    }
    total
}

pub fn lorentz_321_norm<'a>(v: &PotentialSpec, grid: impl Into<GridRef<'a>>, tol: f64) -> Result<LorentzReport> {
    match grid.into() {
        GridRef::Radial(g) => {
            let edges = g.edges();
            let s2 = |s: f64| s * s;
            let shell = |a: f64, b: f64| -> (f64, f64) {
                let m = 4.0 * PI / 3.0 * (b.powi(3) - a.powi(3));
                let mean = v
                    .radial_integral(a, b, true, &s2)
                    .map(|x| 4.0 * PI * x / m)
                    .unwrap_or(f64::INFINITY);
                (mean, m)
            };
            let mut cells: Vec<(f64, f64)> = edges.windows(2).map(|e| shell(e[0], e[1])).collect();
            if v.singular_at_origin() {
                // resolve the blow-up inside the first shell dyadically
                cells.remove(0);
                let mut hi = edges[1];
                while hi > 1e-12 * edges[1] {
                    cells.push(shell(hi / 1.02, hi));
                    hi /= 1.02;
                }
                cells.push(shell(0.0, hi));
            }
            let value = layer_cake(cells.clone());

            // geometric shells beyond the grid, then an analytic remainder
            let r_max = g.r_max();
            let mut extended = cells;
            let mut a = r_max;
            for _ in 0..1000 {
                let b = a * 1.02;
                extended.push(shell(a, b));
                a = b;
            }
            let with_shells = layer_cake(extended);
            let far = {
                let vt = v.radial_abs_bound(a);
                let p = v.decay_exponent();
                if vt == 0.0 {
                    0.0
                } else if p.is_finite() && p > 2.0 {
                    (4.0 * PI / 3.0).powf(2.0 / 3.0) * a * a * vt / (1.0 - 2.0 / p)
                } else {
                    (4.0 * PI / 3.0).powf(2.0 / 3.0) * a * a * vt * 10.0
                }
            };
            let tail_bound = (with_shells - value).max(0.0) + far;
            Ok(LorentzReport {
                value,
                tail_bound,
                truncated: tail_bound > tol * value.max(f64::MIN_POSITIVE),
            })
        }
        GridRef::Cartesian(g) => {
            let m = g.cell_volume();
            let cells = g.points().map(|p| (v.eval(p).abs(), m)).collect();
            let value = layer_cake(cells);
            Ok(LorentzReport {
                value,
                tail_bound: 0.0,
                truncated: false,
            })
        }
    }
}
