//! Radial mollification `V_ε = V * ρ_ε` with the standard bump
//! `ρ(x) = c exp(-1/(1-|x|²))`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

use super::kato::{kato_norm, GridRef};
use super::PotentialSpec;
use crate::error::{LabError, Result};
use crate::quad::integrate;

fn bump(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

fn bump_normalization() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| 1.0 / (4.0 * PI * integrate(|s| bump(s) * s * s, 0.0, 1.0, 16, 64)))
}

/// `ρ_ε(x)` at `|x| = r`; integrates to one over ℝ³.
pub fn mollifier(r: f64, eps: f64) -> f64 {
    bump_normalization() * bump(r / eps) / eps.powi(3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifiedPotential {
    pub spec: PotentialSpec,
    pub eps: f64,
    /// `‖V_ε - V‖_K` measured on the supplied grid.
    pub kato_distance: f64,
    pub support_radius: f64,
}

/// `V * ρ_ε` tabulated on `samples` radii, for compactly supported radial `V`.
pub fn mollify<'a>(v: &PotentialSpec, eps: f64, grid: impl Into<GridRef<'a>>) -> Result<MollifiedPotential> {
    if !(eps > 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "mollifier width must be positive, got {eps}"
        )));
    }
    if !v.is_radial() {
        return Err(LabError::InvalidArgument(
            "mollification is implemented for radial potentials".into(),
        ));
    }
    let support = v
        .support_radius()
        .ok_or_else(|| LabError::InvalidArgument("mollification needs a compactly supported potential".into()))?;
    let outer = support + eps;

    // G(u) = ∫_0^u V(s) s ds on a fine table
    let m = 8192;
    let step = outer / m as f64;
    let s1 = |s: f64| s;
    let mut g_table = vec![0.0; m + 1];
    for k in 0..m {
        let piece = v
            .radial_integral(k as f64 * step, (k + 1) as f64 * step, false, &s1)
            .map_err(|(coarse, fine)| LabError::KatoDivergent { coarse, fine })?;
        g_table[k + 1] = g_table[k] + piece;
    }
    let g_at = |u: f64| {
        let x = (u / step).min(m as f64);
        let k = (x.floor() as usize).min(m - 1);
        let t = x - k as f64;
        g_table[k] * (1.0 - t) + g_table[k + 1] * t
    };
    // spherical mean of V over the sphere of radius s around a point at radius r
    let shell_mean = |r: f64, s: f64| {
        if r < 1e-9 {
            v.radial(s)
        } else {
            (g_at(r + s) - g_at((r - s).abs())) / (2.0 * r * s)
        }
    };

    let samples = 1024;
    let radii: Vec<f64> = (0..=samples).map(|i| outer * i as f64 / samples as f64).collect();
    let values: Vec<f64> = radii
        .iter()
        .map(|&r| {
            integrate(
                |s| mollifier(s, eps) * 4.0 * PI * s * s * shell_mean(r, s),
                0.0,
                eps,
                12,
                16,
            )
        })
        .collect();
    let spec = PotentialSpec::Tabulated { radii, values };
    let diff = spec.plus(&v.times(-1.0));
    let kato_distance = kato_norm(&diff, grid)?;
    Ok(MollifiedPotential {
        spec,
        eps,
        kato_distance,
        support_radius: outer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RadialGrid;

    #[test]
    fn mollifier_has_unit_mass() {
        let eps = 0.3;
        let mass = integrate(|s| mollifier(s, eps) * 4.0 * PI * s * s, 0.0, eps, 16, 32);
        assert!((mass - 1.0).abs() < 1e-12);
        assert_eq!(mollifier(0.31, eps), 0.0);
    }

    #[test]
    fn ball_distance_shrinks_linearly() {
        let g = RadialGrid::uniform(800, 2.0).unwrap();
        let v = PotentialSpec::ball_well(1.0, 0.8);
        let a = mollify(&v, 0.2, &g).unwrap();
        let b = mollify(&v, 0.1, &g).unwrap();
        assert!(
            b.kato_distance <= 0.6 * a.kato_distance,
            "{} {}",
            a.kato_distance,
            b.kato_distance
        );
        assert!(b.kato_distance >= 0.4 * a.kato_distance);
    }

    #[test]
    fn smooth_profile_converges() {
        let g = RadialGrid::uniform(800, 2.0).unwrap();
        let radii: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
        let values = radii.iter().map(|r| (1.0 - r * r).powi(2)).collect();
        let v = PotentialSpec::Tabulated { radii, values };
        let a = mollify(&v, 0.2, &g).unwrap();
        let b = mollify(&v, 0.1, &g).unwrap();
        assert!(b.kato_distance <= 0.6 * a.kato_distance);
        assert!(a.kato_distance < 0.1);
    }

    #[test]
    fn preserves_sign_and_support() {
        let g = RadialGrid::uniform(300, 2.0).unwrap();
        let v = PotentialSpec::ball_indicator(1.0);
        let m = mollify(&v, 0.25, &g).unwrap();
        assert!(m.support_radius <= 1.25 + 1e-12);
        assert_eq!(m.spec.support_radius(), Some(1.25));
        if let PotentialSpec::Tabulated { radii, values } = &m.spec {
            assert!(values.iter().all(|&x| x >= -1e-14));
            for (r, val) in radii.iter().zip(values) {
                if *r < 0.75 {
                    assert!((val - 1.0).abs() < 1e-6);
                }
            }
        } else {
            panic!("expected tabulated profile");
        }
    }

    #[test]
    fn rejects_unbounded_support() {
        let g = RadialGrid::uniform(100, 2.0).unwrap();
        assert!(mollify(&PotentialSpec::gaussian(1.0, 1.0), 0.1, &g).is_err());
    }
}
