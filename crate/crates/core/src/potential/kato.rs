//! Numerical Kato norm `sup_x ∫ |V(y)| / |x - y| dy` and Kato modulus.
//!
//! Radial potentials use Newton's theorem: for a probe at radius `r`
//! the integral is `4π [ r⁻¹ ∫_0^r |V| s² ds + ∫_r^∞ |V| s ds ]`, with the
//! kernel integrated exactly across the shell holding the probe. General
//! potentials fall back to direct summation on a Cartesian grid, where the
//! cell containing `x` is integrated exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

use super::PotentialSpec;
use crate::error::{LabError, Result};
use crate::grid::{dist3, CartesianGrid, RadialGrid};
use crate::quad::{gauss_legendre, integrate};

#[derive(Debug, Clone, Copy)]
pub enum GridRef<'a> {
    Radial(&'a RadialGrid),
    Cartesian(&'a CartesianGrid),
}

impl<'a> From<&'a RadialGrid> for GridRef<'a> {
    fn from(g: &'a RadialGrid) -> Self {
        GridRef::Radial(g)
    }
}

impl<'a> From<&'a CartesianGrid> for GridRef<'a> {
    fn from(g: &'a CartesianGrid) -> Self {
        GridRef::Cartesian(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KatoNorm {
    pub value: f64,
    /// Radius (radial grids) or distance from the origin (Cartesian grids)
    /// of the maximizing probe.
    pub argmax: f64,
    /// Analytic bound on the part of the integral beyond the grid, already
    /// included in `value`.
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatoReport {
    pub kato_norm: f64,
    pub tail_bound: f64,
    pub modulus_samples: Vec<(f64, f64)>,
    pub class_verdict: bool,
}

/// `∫_{[-1/2,1/2]^3} |y|^{-1} dy`, the self-cell weight of the Newton kernel.
pub(crate) fn unit_cube_newton_integral() -> f64 {
    static VALUE: OnceLock<f64> = OnceLock::new();
    *VALUE.get_or_init(|| {
        // Six pyramids over the faces; each reduces to (1/8)∫∫_{[-1,1]²} (1+u²+v²)^{-1/2}.
        let (x, w) = gauss_legendre(40);
        let mut face = 0.0;
        for (u, wu) in x.iter().zip(&w) {
            for (v, wv) in x.iter().zip(&w) {
                face += wu * wv / (1.0 + u * u + v * v).sqrt();
            }
        }
        0.75 * face
    })
}

fn divergent((coarse, fine): (f64, f64)) -> LabError {
    LabError::KatoDivergent {
        coarse: 4.0 * PI * coarse,
        fine: 4.0 * PI * fine,
    }
}

fn require_radial(v: &PotentialSpec) -> Result<()> {
    if v.is_radial() {
        Ok(())
    } else {
        Err(LabError::InvalidArgument(
            "non-radial potential needs a Cartesian grid".into(),
        ))
    }
}

/// Newton potential `Φ(r) = ∫ |V(y)| / |x - y| dy` at `|x| = r` for every
/// probe in `{0} ∪ nodes`, returned as `(radii, values, tail_bound)`.
pub(crate) fn radial_newton_profile(v: &PotentialSpec, grid: &RadialGrid) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    require_radial(v)?;
    let edges = grid.edges();
    let n = grid.len();
    let s2 = |s: f64| s * s;
    let s1 = |s: f64| s;
    let cells2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| v.radial_integral(edges[k], edges[k + 1], true, &s2))
        .collect::<std::result::Result<_, _>>()
        .map_err(divergent)?;
    let cells1: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| v.radial_integral(edges[k], edges[k + 1], true, &s1))
        .collect::<std::result::Result<_, _>>()
        .map_err(divergent)?;

    let mut inner2 = vec![0.0; n + 1];
    for k in 0..n {
        inner2[k + 1] = inner2[k] + cells2[k];
    }
    let mut outer1 = vec![0.0; n + 1];
    for k in (0..n).rev() {
        outer1[k] = outer1[k + 1] + cells1[k];
    }
    let tail = v.tail_moment(grid.r_max());

    let mut radii = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    radii.push(0.0);
    values.push(4.0 * PI * (outer1[0] + tail));
    let nodal: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let r = grid.nodes()[i];
            let left = v.radial_integral(edges[i], r, true, &s2)?;
            let right = v.radial_integral(r, edges[i + 1], true, &s1)?;
            Ok(4.0 * PI * ((inner2[i] + left) / r + right + outer1[i + 1] + tail))
        })
        .collect::<std::result::Result<_, (f64, f64)>>()
        .map_err(divergent)?;
    radii.extend_from_slice(grid.nodes());
    values.extend(nodal);
    Ok((radii, values, 4.0 * PI * tail))
}

/// Newton potential of `|V|` at every Cartesian node, by direct summation.
fn cartesian_newton_profile(v: &PotentialSpec, grid: &CartesianGrid) -> Vec<f64> {
    let h = grid.spacing();
    let vol = grid.cell_volume();
    let self_weight = h * h * unit_cube_newton_integral();
    let support: Vec<([f64; 3], f64)> = grid
        .points()
        .map(|p| (p, v.eval(p).abs()))
        .filter(|(_, a)| *a > 0.0)
        .collect();
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let x = grid.point(idx);
            support
                .iter()
                .map(|(y, a)| {
                    let d = dist3(x, *y);
                    if d < 0.5 * h {
                        a * self_weight
                    } else {
                        a * vol / d
                    }
                })
                .sum()
        })
        .collect()
}

fn argmax(radii: &[f64], values: &[f64]) -> (f64, f64) {
    radii.iter().zip(values).fold(
        (0.0, f64::NEG_INFINITY),
        |(ra, va), (&r, &v)| {
            if v > va {
                (r, v)
            } else {
                (ra, va)
            }
        },
    )
}

/// Kato norm with the location of the maximizing probe and the tail bound.
pub fn kato_norm_detailed<'a>(v: &PotentialSpec, grid: impl Into<GridRef<'a>>) -> Result<KatoNorm> {
    match grid.into() {
        GridRef::Radial(g) => {
            let (radii, values, tail) = radial_newton_profile(v, g)?;
            let (argmax, value) = argmax(&radii, &values);
            Ok(KatoNorm {
                value: value.max(0.0),
                argmax,
                tail_bound: tail,
            })
        }
        GridRef::Cartesian(g) => {
            let values = cartesian_newton_profile(v, g);
            let radii: Vec<f64> = g.points().map(crate::grid::norm3).collect();
            let (argmax, value) = argmax(&radii, &values);
            Ok(KatoNorm {
                value: value.max(0.0),
                argmax,
                tail_bound: 0.0,
            })
        }
    }
}

/// `‖V‖_K = sup_x ∫ |V(y)| / |x - y| dy`.
pub fn kato_norm<'a>(v: &PotentialSpec, grid: impl Into<GridRef<'a>>) -> Result<f64> {
    kato_norm_detailed(v, grid).map(|k| k.value)
}

/// Cumulative `F(u) = ∫_0^u |V(s)| s ds` on a fine table.
struct RadialMoment<'a> {
    v: &'a PotentialSpec,
    step: f64,
    table: Vec<f64>,
    tail: f64,
    breakpoints: Vec<f64>,
}

impl<'a> RadialMoment<'a> {
    fn new(v: &'a PotentialSpec, grid: &RadialGrid) -> Result<Self> {
        let m = 8 * grid.len();
        let step = grid.r_max() / m as f64;
        let s1 = |s: f64| s;
        let pieces: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|k| v.radial_integral(k as f64 * step, (k + 1) as f64 * step, true, &s1))
            .collect::<std::result::Result<_, _>>()
            .map_err(divergent)?;
        let mut table = vec![0.0; m + 1];
        for k in 0..m {
            table[k + 1] = table[k] + pieces[k];
        }
        Ok(Self {
            v,
            step,
            table,
            tail: v.tail_moment(grid.r_max()),
            breakpoints: v.radial_breakpoints(),
        })
    }

    fn at(&self, u: f64) -> f64 {
        let m = self.table.len() - 1;
        let x = u / self.step;
        if x >= m as f64 {
            return self.table[m] + self.tail;
        }
        let k = x.floor() as usize;
        let lo = k as f64 * self.step;
        self.table[k]
            + self
                .v
                .radial_integral(lo, u, true, &|s| s)
                .unwrap_or(self.table[k + 1] - self.table[k])
    }
}

/// `∫_{|x-y|<r} |V(y)| / |x - y| dy` for a probe at distance `a` from the
/// origin, radial `V`.
fn radial_ball_integral(moment: &RadialMoment, a: f64, r: f64) -> f64 {
    if a < 1e-12 {
        return 4.0 * PI * moment.at(r);
    }
    let mut cuts = vec![0.0, r];
    if a < r {
        cuts.push(a);
    }
    for &b in &moment.breakpoints {
        for c in [(b - a).abs(), a + b] {
            if c > 0.0 && c < r {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup();
    let integrand = |rho: f64| moment.at(a + rho) - moment.at((a - rho).abs());
    let total: f64 = cuts.windows(2).map(|c| integrate(integrand, c[0], c[1], 8, 32)).sum();
    2.0 * PI / a * total
}

/// Kato modulus `η(r) = sup_x ∫_{|x-y|<r} |V(y)| / |x - y| dy` for each
/// radius in ascending `radii`.
pub fn kato_modulus<'a>(v: &PotentialSpec, grid: impl Into<GridRef<'a>>, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    if radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|p| p[0] > p[1]) {
        return Err(LabError::InvalidArgument(
            "modulus radii must be positive and ascending".into(),
        ));
    }
    match grid.into() {
        GridRef::Radial(g) => {
            require_radial(v)?;
            let moment = RadialMoment::new(v, g)?;
            let probes: Vec<f64> = std::iter::once(0.0).chain(g.nodes().iter().copied()).collect();
            Ok(radii
                .iter()
                .map(|&r| {
                    let eta = probes
                        .par_iter()
                        .map(|&a| radial_ball_integral(&moment, a, r))
                        .reduce(|| 0.0, f64::max);
                    (r, eta)
                })
                .collect())
        }
        GridRef::Cartesian(g) => {
            let h = g.spacing();
            let vol = g.cell_volume();
            let self_weight = h * h * unit_cube_newton_integral();
            let support: Vec<([f64; 3], f64)> = g
                .points()
                .map(|p| (p, v.eval(p).abs()))
                .filter(|(_, a)| *a > 0.0)
                .collect();
            Ok(radii
                .iter()
                .map(|&r| {
                    let eta = (0..g.len())
                        .into_par_iter()
                        .map(|idx| {
                            let x = g.point(idx);
                            support
                                .iter()
                                .map(|(y, a)| {
                                    let d = dist3(x, *y);
                                    if d < 0.5 * h {
                                        a * self_weight
                                    } else if d < r {
                                        a * vol / d
                                    } else {
                                        0.0
                                    }
                                })
                                .sum::<f64>()
                        })
                        .reduce(|| 0.0, f64::max);
                    (r, eta)
                })
                .collect())
        }
    }
}

/// Kato norm, modulus samples and the Kato-class verdict
/// `η(r_min) ≤ tol · max(‖V‖_K, 1)`.
pub fn kato_report<'a>(
    v: &PotentialSpec,
    grid: impl Into<GridRef<'a>> + Copy,
    radii: &[f64],
    tol: f64,
) -> Result<KatoReport> {
    let norm = kato_norm_detailed(v, grid)?;
    let modulus_samples = kato_modulus(v, grid, radii)?;
    let class_verdict = modulus_samples
        .first()
        .is_none_or(|&(_, eta)| eta <= tol * norm.value.max(1.0));
    Ok(KatoReport {
        kato_norm: norm.value,
        tail_bound: norm.tail_bound,
        modulus_samples,
        class_verdict,
    })
}

/// `V₁ = V·1{|x| < R}`, `V₂ = V - V₁`.
pub fn split_potential(v: &PotentialSpec, radius: f64) -> (PotentialSpec, PotentialSpec) {
    if radius <= 0.0 {
        return (PotentialSpec::Zero, v.clone());
    }
    if v.support_radius().is_some_and(|s| s < radius) {
        return (v.clone(), PotentialSpec::Zero);
    }
    (
        PotentialSpec::Cutoff {
            radius,
            inside: true,
            inner: Box::new(v.clone()),
        },
        PotentialSpec::Cutoff {
            radius,
            inside: false,
            inner: Box::new(v.clone()),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    fn grid(n: usize, r: f64) -> RadialGrid {
        RadialGrid::uniform(n, r).unwrap()
    }

    /// Brute force Newton potential of a radial profile by iterated
    /// quadrature in spherical coordinates around the probe.
    fn newton_oracle(v: &PotentialSpec, a: f64, r_max: f64) -> f64 {
        let angular = |s: f64| {
            // ∫_{-1}^{1} dμ / |x - y| for |x| = a, |y| = s
            if a == 0.0 {
                2.0 / s
            } else {
                2.0 / a.max(s)
            }
        };
        2.0 * PI * integrate(|s| v.radial(s).abs() * s * s * angular(s), 0.0, r_max, 12, 400)
    }

    #[test]
    fn unit_cube_constant() {
        // independent check: Monte Carlo-free midpoint sum on a fine lattice
        let m = 200;
        let h = 1.0 / m as f64;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let p = [
                        (i as f64 + 0.5) * h - 0.5,
                        (j as f64 + 0.5) * h - 0.5,
                        (k as f64 + 0.5) * h - 0.5,
                    ];
                    s += h * h * h / crate::grid::norm3(p);
                }
            }
        }
        assert!(
            (unit_cube_newton_integral() - s).abs() < 2e-3,
            "{} vs {}",
            unit_cube_newton_integral(),
            s
        );
        assert!((unit_cube_newton_integral() - 2.380077).abs() < 1e-5);
    }

    #[test]
    fn ball_indicator_has_norm_two_pi() {
        let k = kato_norm_detailed(&PotentialSpec::ball_indicator(1.0), &grid(2000, 2.0)).unwrap();
        assert!((k.value - 2.0 * PI).abs() < 1e-6, "{}", k.value);
        assert_eq!(k.argmax, 0.0);
    }

    #[test]
    fn ball_profile_matches_closed_form() {
        // Φ(a) = 2π(1 - a²/3) inside the unit ball, 4π/(3a) outside
        let (radii, values, _) = radial_newton_profile(&PotentialSpec::ball_indicator(1.0), &grid(400, 3.0)).unwrap();
        for (a, phi) in radii.iter().zip(&values) {
            let exact = if *a < 1.0 {
                2.0 * PI * (1.0 - a * a / 3.0)
            } else {
                4.0 * PI / (3.0 * a)
            };
            assert!((phi - exact).abs() < 1e-9, "a = {a}: {phi} vs {exact}");
        }
    }

    #[test]
    fn zero_potential_has_zero_norm() {
        assert_eq!(kato_norm(&PotentialSpec::Zero, &grid(100, 1.0)).unwrap(), 0.0);
        let m = kato_modulus(&PotentialSpec::Zero, &grid(50, 1.0), &[0.1, 0.5]).unwrap();
        assert!(m.iter().all(|&(_, e)| e == 0.0));
    }

    #[test]
    fn well_norm_is_linear_in_depth() {
        let k = kato_norm(&PotentialSpec::ball_well(1.0, 0.9), &grid(1000, 2.0)).unwrap();
        assert!((k - 0.9 * 2.0 * PI).abs() < 1e-6);
        assert!((k - 5.6549).abs() < 1e-4);
    }

    #[test]
    fn gaussian_norm_matches_oracle() {
        let v = PotentialSpec::gaussian(1.0, 1.5);
        let k = kato_norm(&v, &grid(800, 8.0)).unwrap();
        // for a radially decreasing profile the maximum sits at the origin
        let oracle = newton_oracle(&v, 0.0, 12.0);
        assert!((k - oracle).abs() < 1e-6 * oracle, "{k} vs {oracle}");
        // closed form 4π ∫ A e^{-s²} s ds = 2π A
        assert!((k - 2.0 * PI * 1.5).abs() < 1e-6);
    }

    #[test]
    fn shell_maximum_is_off_center() {
        let shell = PotentialSpec::ball_indicator(2.0).plus(&PotentialSpec::ball_indicator(1.0).times(-1.0));
        let k = kato_norm_detailed(&shell, &grid(600, 3.0)).unwrap();
        // Φ is constant 4π∫_1^2 s ds = 6π inside the hole and decreases outward
        assert!((k.value - 6.0 * PI).abs() < 1e-6);
        assert!(k.argmax <= 1.0);
    }

    #[test]
    fn inverse_decay_converges_with_tail() {
        let v = PotentialSpec::InverseDecay { c: 1.0, eps: 0.5 };
        let coarse = kato_norm_detailed(&v, &grid(200, 10.0)).unwrap();
        let fine = kato_norm_detailed(&v, &grid(800, 40.0)).unwrap();
        assert!(coarse.tail_bound > fine.tail_bound);
        // the tail bound is an over-estimate, so refinement can only lower the value
        assert!(fine.value <= coarse.value + 1e-9);
        // exact: 4π ∫_0^∞ s/(s^{2.5}+s^{1.5}) ds = 4π ∫ s^{-1/2}/(1+s) ds = 4π·π
        let exact = 4.0 * PI * PI;
        assert!(fine.value >= exact * (1.0 - 1e-6) && fine.value < exact * 1.1);
    }

    #[test]
    fn inverse_square_is_flagged_divergent() {
        let v = PotentialSpec::InverseDecay { c: 1.0, eps: 0.0 };
        match kato_norm(&v, &grid(100, 5.0)) {
            Err(LabError::KatoDivergent { coarse, fine }) => assert!(fine > coarse),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn modulus_of_ball_at_center() {
        let v = PotentialSpec::ball_indicator(1.0);
        let g = grid(400, 2.0);
        let m = kato_modulus(&v, &g, &[0.5]).unwrap();
        // probe at the origin gives 2π(1/2)² = π/2; the sup can only be larger
        assert!(m[0].1 >= PI / 2.0 - 1e-6);
        // for r < 1 the small ball around an interior point is full: exactly π/2
        assert!((m[0].1 - PI / 2.0).abs() < 1e-3, "{}", m[0].1);
    }

    #[test]
    fn modulus_bounds_and_monotonicity() {
        let v = PotentialSpec::gaussian(0.7, 2.0);
        let g = grid(300, 6.0);
        let radii = [0.05, 0.1, 0.3, 1.0, 3.0, 20.0];
        let m = kato_modulus(&v, &g, &radii).unwrap();
        let norm = kato_norm(&v, &g).unwrap();
        for w in m.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-12);
        }
        for &(r, eta) in &m {
            assert!(eta <= norm * (1.0 + 1e-6));
            assert!(eta <= 2.0 * PI * 2.0 * r * r * (1.0 + 1e-6));
        }
        assert!((m.last().unwrap().1 - norm).abs() < 1e-3 * norm);
    }

    #[test]
    fn report_flags_kato_class() {
        let v = PotentialSpec::ball_well(1.0, 0.5);
        let g = grid(400, 2.0);
        let r = kato_report(&v, &g, &[0.01, 0.1, 1.0], 1e-2).unwrap();
        assert!(r.class_verdict);
        assert!((r.kato_norm - PI).abs() < 1e-6);
    }

    #[test]
    fn non_radial_needs_cartesian_grid() {
        let v = PotentialSpec::BallWell {
            radius: 0.5,
            depth: -1.0,
            center: [0.5, 0.0, 0.0],
        };
        assert!(kato_norm(&v, &grid(100, 2.0)).is_err());
        let cg = CartesianGrid::new(25, 1.5).unwrap();
        let k = kato_norm(&v, &cg).unwrap();
        // translation invariance: same as a centred ball of radius 1/2, 2π·(1/2)²
        let exact = 2.0 * PI * 0.25;
        assert!((k - exact).abs() < 0.08 * exact, "{k} vs {exact}");
    }

    #[test]
    fn cartesian_and_radial_agree_for_gaussian() {
        let v = PotentialSpec::gaussian(1.0, 1.0);
        let cg = CartesianGrid::new(31, 4.0).unwrap();
        let kc = kato_norm(&v, &cg).unwrap();
        let kr = kato_norm(&v, &grid(400, 8.0)).unwrap();
        assert!((kc - kr).abs() < 0.02 * kr, "{kc} vs {kr}");
    }

    #[test]
    fn split_edges() {
        let v = PotentialSpec::ball_well(1.0, 0.3);
        let (v1, v2) = split_potential(&v, 2.0);
        assert_eq!(v1, v);
        assert_eq!(v2, PotentialSpec::Zero);
        let (v1, v2) = split_potential(&v, 0.0);
        assert_eq!(v1, PotentialSpec::Zero);
        assert_eq!(v2, v);
    }

    #[test]
    fn gaussian_tail_norm_decreases_in_split_radius() {
        let v = PotentialSpec::gaussian(1.0, 1.0);
        let g = grid(800, 10.0);
        let mut last = f64::INFINITY;
        for r in [0.5, 1.0, 2.0, 3.0, 4.0] {
            let (_, v2) = split_potential(&v, r);
            let k = kato_norm(&v2, &g).unwrap();
            assert!(k < last);
            last = k;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn scaling_preserves_norm() {
        for v in [PotentialSpec::ball_well(1.0, 0.7), PotentialSpec::gaussian(1.0, 0.5)] {
            let base = kato_norm(&v, &grid(1600, 8.0)).unwrap();
            for theta in [0.25, 1.0, 4.0] {
                let k = kato_norm(&v.scaled(theta), &grid(1600, 8.0 / theta.sqrt())).unwrap();
                assert!((k - base).abs() < 1e-3 * base, "theta {theta}: {k} vs {base}");
            }
        }
    }

    #[test]
    fn lorentz_domination_over_catalog() {
        let g = grid(800, 12.0);
        let mut fitted: f64 = 0.0;
        for (_, v) in crate::potential::catalog() {
            let k = kato_norm(&v, &g).unwrap();
            let l = crate::potential::lorentz_321_norm(&v, &g, 1e-2).unwrap();
            if l.value > 0.0 {
                fitted = fitted.max(k / (l.value + l.tail_bound).max(l.value));
            }
        }
        // radially decreasing profiles attain the constant, so the fit sits
        // at it up to the tail bounds
        assert!(fitted >= crate::potential::YOUNG_CONSTANT * (1.0 - 1e-6));
        assert!(fitted <= crate::potential::YOUNG_CONSTANT * 1.01, "{fitted}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn norm_is_subadditive(r1 in 0.2f64..2.0, d1 in -2.0f64..2.0, w in 0.2f64..2.0, a in -2.0f64..2.0) {
            let g = grid(300, 6.0);
            let v1 = PotentialSpec::ball_well(r1, d1);
            let v2 = PotentialSpec::gaussian(w, a);
            let both = kato_norm(&v1.plus(&v2), &g).unwrap();
            let k1 = kato_norm(&v1, &g).unwrap();
            let k2 = kato_norm(&v2, &g).unwrap();
            proptest::prop_assert!(both <= (k1 + k2) * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn modulus_is_monotone(d in 0.1f64..3.0, r in 0.2f64..2.0) {
            let g = grid(200, 4.0);
            let v = PotentialSpec::ball_well(r, d);
            let m = kato_modulus(&v, &g, &[0.05, 0.2, 0.8, 3.0]).unwrap();
            let k = kato_norm(&v, &g).unwrap();
            for w in m.windows(2) {
                proptest::prop_assert!(w[1].1 >= w[0].1 - 1e-12);
            }
            for &(_, eta) in &m {
                proptest::prop_assert!(eta <= k * (1.0 + 1e-6));
            }
        }
    }
}
