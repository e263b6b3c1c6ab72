//! Solutions of `u_tt - Δu + Vu = 0` with `u(0) = 0`, `u_t(0) = f`:
//! the eigen-sum `sin(t√H)/√H f`, the resolvent λ-integral, a leapfrog
//! solver on the cube and dispersive-ratio scans.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::besov::{besov_norm_full, phi0, phi_j, psi, psi_prime, BesovKind};
use crate::error::{LabError, Result};
use crate::grid::{norm3, CartesianGrid, RadialGrid};
use crate::potential::{check_hypotheses, PotentialSpec};
use crate::quad::gauss_legendre;
use crate::resolvent::{assemble_r0, assemble_r0_squared, potential_samples, SpectralPoint};
use crate::semigroup::{sqrt_spectrum, DiscreteHamiltonian};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SpectralEigen,
    SpectralResolvent,
    Fdtd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub t: f64,
    pub u: Vec<f64>,
    pub method: Method,
    /// A bound state contributes `sinh` growth.
    pub outside_theorem: bool,
}

/// `sin(t√μ)/√μ`, continued by `t` at `μ = 0` and `sinh(t√-μ)/√-μ` below.
pub fn wave_multiplier(mu: f64, t: f64) -> f64 {
    let k = mu.abs().sqrt();
    if k * t.abs() < 1e-8 {
        return t;
    }
    if mu >= 0.0 {
        (t * k).sin() / k
    } else {
        (t * k).sinh() / k
    }
}

pub fn evolve_spectral(h: &DiscreteHamiltonian, f: &[f64], t: f64) -> WaveState {
    let c = h.coefficients(f);
    let mut outside = false;
    let ck: Vec<f64> = c
        .iter()
        .zip(&h.eigenvalues)
        .map(|(c, &mu)| {
            if mu < 0.0 && c.abs() > 1e-14 {
                outside = true;
            }
            c * wave_multiplier(mu, t)
        })
        .collect();
    if outside {
        log::warn!("negative eigenvalue in the datum: sinh growth");
    }
    WaveState {
        t,
        u: h.synthesize(&ck),
        method: Method::SpectralEigen,
        outside_theorem: outside,
    }
}

/// Free solution for `f = e^{-r²/σ²}`: `(σ²/4r)(e^{-(r-t)²/σ²} - e^{-(r+t)²/σ²})`.
pub fn kirchhoff_gaussian(t: f64, r: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let x = 2.0 * r * t / s2;
    if x.abs() < 1e-6 {
        return t * (-(r * r + t * t) / s2).exp() * (1.0 + x * x / 6.0);
    }
    if x < 50.0 {
        s2 / (2.0 * r) * (-(r * r + t * t) / s2).exp() * x.sinh()
    } else {
        s2 / (4.0 * r) * ((-(r - t).powi(2) / s2).exp() - (-(r + t).powi(2) / s2).exp())
    }
}

/// `max |u_i|` and its parabolic refinement through the neighbouring nodes.
pub fn sup_norm(u: &[f64]) -> (f64, f64) {
    let (i, raw) = u
        .iter()
        .map(|x| x.abs())
        .enumerate()
        .fold((0, 0.0), |best, (i, x)| if x > best.1 { (i, x) } else { best });
    if i == 0 || i + 1 >= u.len() {
        return (raw, raw);
    }
    let (a, b, c) = (u[i - 1].abs(), raw, u[i + 1].abs());
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return (raw, raw);
    }
    let refined = b - 0.125 * (c - a).powi(2) / denom;
    (raw, refined.max(raw))
}

/// Spectral window `ψ(λ) = φ₀(λ / center)`, supported in `[center/2, 2 center]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralWindow {
    pub center: f64,
}

impl SpectralWindow {
    pub fn value(&self, lambda: f64) -> f64 {
        phi0(lambda / self.center)
    }

    pub fn derivative(&self, lambda: f64) -> f64 {
        let x = lambda / self.center;
        (psi_prime(x) - 2.0 * psi_prime(2.0 * x)) / self.center
    }

    pub fn support(&self) -> (f64, f64) {
        (0.5 * self.center, 2.0 * self.center)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventWave {
    pub t: f64,
    pub eps: f64,
    /// Direct λ-integral of `sin(t√λ)/√λ ψ(λ) dR_V`.
    pub repr1: Vec<f64>,
    /// Integrated-by-parts form with `R_V²`.
    pub repr2: Vec<f64>,
    pub panels: usize,
    /// Relative sup gap of `repr1` against half as many panels.
    pub refinement_gap: f64,
    pub flagged: bool,
}

/// `Im R_V(λ+iε) f` and `Im R_V(λ+iε)² f`; the `-iε` side is the conjugate.
/// The square uses the exact `R₀²` kernel, `(I + R₀V)^{-1} R₀² (I + VR₀)^{-1}`.
fn resolvent_pair(grid: &RadialGrid, v: &[f64], f: &[f64], z: &SpectralPoint) -> Result<(Vec<f64>, Vec<f64>)> {
    let r0 = assemble_r0(grid, z)?;
    let r0sq = assemble_r0_squared(grid, z)?;
    let n = f.len();
    let left = DMatrix::from_fn(n, n, |i, j| {
        let m = r0.matrix[(i, j)] * v[j];
        if i == j {
            m + 1.0
        } else {
            m
        }
    })
    .lu();
    let right = DMatrix::from_fn(n, n, |i, j| {
        let m = v[i] * r0.matrix[(i, j)];
        if i == j {
            m + 1.0
        } else {
            m
        }
    })
    .lu();
    let fc = DVector::from_iterator(n, f.iter().map(|&x| Complex64::new(x, 0.0)));
    let x = left.solve(&(&r0.matrix * &fc)).ok_or(LabError::SingularMatrix)?;
    let y = right.solve(&fc).ok_or(LabError::SingularMatrix)?;
    let x2 = left.solve(&(&r0sq.matrix * y)).ok_or(LabError::SingularMatrix)?;
    Ok((x.iter().map(|c| c.im).collect(), x2.iter().map(|c| c.im).collect()))
}

fn resolvent_quadrature(
    grid: &RadialGrid,
    v: &[f64],
    f: &[f64],
    t: f64,
    window: &SpectralWindow,
    eps: f64,
    panels: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = window.support();
    let (ka, kb) = (lo.sqrt(), hi.sqrt());
    let (xs, ws) = gauss_legendre(8);
    let width = (kb - ka) / panels as f64;
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| {
            let a = ka + p as f64 * width;
            xs.iter()
                .zip(&ws)
                .map(move |(x, w)| (a + 0.5 * width * (x + 1.0), 0.5 * width * w))
                .collect::<Vec<_>>()
        })
        .collect();
    let n = f.len();
    let parts = nodes
        .par_iter()
        .map(|&(k, w)| {
            let lambda = k * k;
            let (x1, x2) = resolvent_pair(grid, v, f, &SpectralPoint::plus(lambda, eps))?;
            // dλ = 2k dk
            let dl = 2.0 * k * w;
            let a1 = dl * (t * k).sin() / k * window.value(lambda) / PI;
            let c2 = dl * 2.0 / (PI * t) * (t * k).cos();
            let (b1, b2) = (c2 * window.derivative(lambda), c2 * window.value(lambda));
            let r1: Vec<f64> = x1.iter().map(|x| a1 * x).collect();
            let r2: Vec<f64> = x1.iter().zip(&x2).map(|(x, y)| b1 * x + b2 * y).collect();
            Ok((r1, r2))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut repr1 = vec![0.0; n];
    let mut repr2 = vec![0.0; n];
    for (r1, r2) in parts {
        for i in 0..n {
            repr1[i] += r1[i];
            repr2[i] += r2[i];
        }
    }
    Ok((repr1, repr2))
}

/// Resolvent representation of `sin(t√H)/√H ψ(H) f` at fixed `ε > 0`.
pub fn evolve_spectral_resolvent(
    grid: &RadialGrid,
    v: &PotentialSpec,
    f: &[f64],
    t: f64,
    window: &SpectralWindow,
    eps: f64,
    panels: usize,
) -> Result<ResolventWave> {
    if !(eps > 0.0) || !(t > 0.0) || panels < 2 || !(window.center > 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "resolvent path needs eps > 0, t > 0, panels >= 2 and a positive window (got {eps}, {t}, {panels})"
        )));
    }
    let vs = potential_samples(grid, v)?;
    let (repr1, repr2) = resolvent_quadrature(grid, &vs, f, t, window, eps, panels)?;
    let (coarse, _) = resolvent_quadrature(grid, &vs, f, t, window, eps, panels / 2)?;
    let scale = repr1.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let refinement_gap = repr1.iter().zip(&coarse).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
    let flagged = refinement_gap > 1e-3;
    if flagged {
        log::warn!("λ-quadrature not converged: gap {refinement_gap:.3e} at {panels} panels");
    }
    Ok(ResolventWave {
        t,
        eps,
        repr1,
        repr2,
        panels,
        refinement_gap,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventSequence {
    pub runs: Vec<ResolventWave>,
    /// Polynomial extrapolation of `repr1` to `ε = 0`.
    pub extrapolated: Vec<f64>,
}

/// Runs over an `ε` sequence and extrapolates to `ε = 0`.
pub fn evolve_resolvent_extrapolated(
    grid: &RadialGrid,
    v: &PotentialSpec,
    f: &[f64],
    t: f64,
    window: &SpectralWindow,
    eps_seq: &[f64],
    panels: usize,
) -> Result<ResolventSequence> {
    let runs = eps_seq
        .iter()
        .map(|&e| evolve_spectral_resolvent(grid, v, f, t, window, e, panels))
        .collect::<Result<Vec<_>>>()?;
    // Lagrange weights at ε = 0
    let weights: Vec<f64> = (0..eps_seq.len())
        .map(|a| {
            (0..eps_seq.len())
                .filter(|&b| b != a)
                .map(|b| eps_seq[b] / (eps_seq[b] - eps_seq[a]))
                .product()
        })
        .collect();
    let extrapolated = (0..f.len())
        .map(|i| runs.iter().zip(&weights).map(|(r, w)| w * r.repr1[i]).sum())
        .collect();
    Ok(ResolventSequence { runs, extrapolated })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedWave {
    pub j: i32,
    pub state: WaveState,
    /// `‖φ_j(√H) f‖_{L¹}`.
    pub block_l1: f64,
    /// `t ‖u(t)‖_∞ / (2^j ‖φ_j(√H) f‖_{L¹})`.
    pub ratio: f64,
}

/// Evolution of the block `φ_j(√H) f`.
pub fn evolve_localized(h: &DiscreteHamiltonian, f: &[f64], j: i32, t: f64) -> LocalizedWave {
    let datum = h.spectral_apply(f, |mu| phi_j(j, sqrt_spectrum(mu)));
    let block_l1 = h.grid().l1_norm(&datum);
    let state = evolve_spectral(h, &datum, t);
    let sup = sup_norm(&state.u).1;
    LocalizedWave {
        j,
        state,
        block_l1,
        ratio: t * sup / (2f64.powi(j) * block_l1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedScan {
    pub js: Vec<i32>,
    pub times: Vec<f64>,
    /// `ratios[j][t]`.
    pub ratios: Vec<Vec<f64>>,
    pub fitted_c: f64,
    /// Largest over smallest per-block maximum.
    pub block_spread: f64,
}

pub fn localized_scan(h: &DiscreteHamiltonian, f: &[f64], js: &[i32], times: &[f64]) -> LocalizedScan {
    let ratios: Vec<Vec<f64>> = js
        .par_iter()
        .map(|&j| times.iter().map(|&t| evolve_localized(h, f, j, t).ratio).collect())
        .collect();
    let per_block: Vec<f64> = ratios.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
    let fitted_c = per_block.iter().copied().fold(0.0, f64::max);
    let lowest = per_block.iter().copied().fold(f64::INFINITY, f64::min);
    LocalizedScan {
        js: js.to_vec(),
        times: times.to_vec(),
        ratios,
        fitted_c,
        block_spread: fitted_c / lowest,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdtdRun {
    pub grid: CartesianGrid,
    pub dt: f64,
    pub steps: usize,
    /// Snapshots at the requested times (rounded to whole steps).
    pub snapshots: Vec<WaveState>,
    /// Staggered energy `½‖(u^{n+1}-u^n)/Δt‖² + ½⟨u^{n+1}, A u^n⟩` per step.
    pub energy: Vec<f64>,
    /// `max |E_n - E_0| / |E_0|`.
    pub energy_drift: f64,
}

/// `(-Δ_h + V) u` at interior nodes, zero on the boundary faces.
fn apply_operator(grid: &CartesianGrid, v: &[f64], u: &[f64], out: &mut [f64]) {
    let n = grid.count();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    out.par_chunks_mut(n * n).enumerate().for_each(|(i, plane)| {
        if i == 0 || i + 1 == n {
            plane.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        for j in 0..n {
            for k in 0..n {
                let idx = (i * n + j) * n + k;
                let local = j * n + k;
                if j == 0 || k == 0 || j + 1 == n || k + 1 == n {
                    plane[local] = 0.0;
                    continue;
                }
                let lap =
                    u[idx + n * n] + u[idx - n * n] + u[idx + n] + u[idx - n] + u[idx + 1] + u[idx - 1] - 6.0 * u[idx];
                plane[local] = -lap * inv_h2 + v[idx] * u[idx];
            }
        }
    });
}

/// Fixed-order sum of `term(a_i, b_i)`: parallel over chunks, sequential across them.
fn chunked_sum(a: &[f64], b: &[f64], term: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
    const CHUNK: usize = 1 << 14;
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| term(*p, *q)).sum())
        .collect();
    partial.iter().sum()
}

/// Leapfrog on the cube with zero boundary values. `dt = None` picks
/// `0.5 h/√3` rounded so that `horizon` is a whole number of steps.
#[allow(clippy::too_many_arguments)]
pub fn evolve_fdtd(
    grid: &CartesianGrid,
    v: &PotentialSpec,
    f: impl Fn([f64; 3]) -> f64 + Sync,
    support_radius: f64,
    horizon: f64,
    dt: Option<f64>,
    outputs: &[f64],
) -> Result<FdtdRun> {
    let h = grid.spacing();
    let limit = h / 3f64.sqrt();
    let (dt, steps) = match dt {
        Some(dt) => {
            if dt > limit {
                return Err(LabError::Cfl { dt, limit });
            }
            (dt, (horizon / dt).round() as usize)
        }
        None => {
            let steps = (horizon / (0.5 * limit)).ceil().max(1.0) as usize;
            (horizon / steps as f64, steps)
        }
    };
    if grid.half_width() < support_radius + horizon {
        return Err(LabError::InvalidArgument(format!(
            "half-width {} is smaller than support radius + horizon = {}",
            grid.half_width(),
            support_radius + horizon
        )));
    }
    let len = grid.len();
    let vs: Vec<f64> = (0..len).into_par_iter().map(|i| v.eval(grid.point(i))).collect();
    let n = grid.count();
    let boundary = |idx: usize| {
        let p = [idx / (n * n), (idx / n) % n, idx % n];
        p.iter().any(|&c| c == 0 || c + 1 == n)
    };
    let f0: Vec<f64> = (0..len)
        .into_par_iter()
        .map(|i| if boundary(i) { 0.0 } else { f(grid.point(i)) })
        .collect();
    let mut work = vec![0.0; len];
    let mut prev = vec![0.0; len];
    // u¹ = Δt f + (Δt³/6)(Δ_h - V) f
    apply_operator(grid, &vs, &f0, &mut work);
    let mut cur: Vec<f64> = f0
        .iter()
        .zip(&work)
        .map(|(a, b)| dt * a - dt.powi(3) / 6.0 * b)
        .collect();
    let mut next = vec![0.0; len];
    let cell = grid.cell_volume();
    let energy_of = |new: &[f64], old: &[f64], a_old: &[f64]| -> f64 {
        let kinetic = chunked_sum(new, old, |a, b| ((a - b) / dt).powi(2));
        0.5 * cell * (kinetic + chunked_sum(new, a_old, |a, b| a * b))
    };
    apply_operator(grid, &vs, &prev, &mut work);
    let mut energy = vec![energy_of(&cur, &prev, &work)];
    let targets: Vec<usize> = outputs.iter().map(|&t| (t / dt).round() as usize).collect();
    let mut snapshots = Vec::new();
    let record = |step: usize, u: &[f64], snapshots: &mut Vec<WaveState>| {
        for &s in targets.iter().filter(|&&s| s == step) {
            snapshots.push(WaveState {
                t: s as f64 * dt,
                u: u.to_vec(),
                method: Method::Fdtd,
                outside_theorem: false,
            });
        }
    };
    record(0, &prev, &mut snapshots);
    record(1, &cur, &mut snapshots);
    for step in 1..steps {
        apply_operator(grid, &vs, &cur, &mut work);
        next.par_iter_mut()
            .zip(cur.par_iter().zip(prev.par_iter().zip(work.par_iter())))
            .for_each(|(x, (c, (p, w)))| *x = 2.0 * c - p - dt * dt * w);
        energy.push(energy_of(&next, &cur, &work));
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        record(step + 1, &cur, &mut snapshots);
    }
    let e0 = energy[0];
    let energy_drift = energy.iter().fold(0.0f64, |m, e| m.max((e - e0).abs())) / e0.abs().max(f64::MIN_POSITIVE);
    snapshots.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(FdtdRun {
        grid: *grid,
        dt,
        steps,
        snapshots,
        energy,
        energy_drift,
    })
}

/// `(max |u - reference(|x|)|, max |reference(|x|)|)` over the cube nodes.
pub fn radial_error(grid: &CartesianGrid, u: &[f64], reference: impl Fn(f64) -> f64 + Sync) -> (f64, f64) {
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let r = reference(norm3(grid.point(i)));
            ((u[i] - r).abs(), r.abs())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub times: Vec<f64>,
    /// `sup_norms[f][t]`, parabolically refined.
    pub sup_norms: Vec<Vec<f64>>,
    pub sup_norms_raw: Vec<Vec<f64>>,
    /// `‖f‖_{Ḃ¹_{1,1}(V)}` per datum.
    pub besov_norms: Vec<f64>,
    /// `‖f‖_{Ḃ¹_{1,1}}` of the free flow per datum.
    pub besov_norms_free: Vec<f64>,
    /// `t ‖u(t)‖_∞ / ‖f‖_{Ḃ¹_{1,1}(V)}`.
    pub ratios: Vec<Vec<f64>>,
    pub c_star: f64,
    /// Max over min of the ratio in `t`, per datum.
    pub flatness: Vec<f64>,
    pub outside_theorem: bool,
    pub reasons: Vec<String>,
}

/// Dispersive ratios over a datum set and time grid.
pub fn dispersive_ratio(
    h: &DiscreteHamiltonian,
    v: &PotentialSpec,
    fs: &[Vec<f64>],
    times: &[f64],
    resonance_dip: bool,
) -> Result<DecayReport> {
    if times.iter().any(|&t| t < 0.5) {
        return Err(LabError::InvalidArgument("dispersive scan needs t >= 0.5".into()));
    }
    let grid = h.grid();
    let mut reasons = Vec::new();
    let radius = v.support_radius().unwrap_or(0.5 * grid.r_max()).min(grid.r_max());
    let hyp = check_hypotheses(v, radius, grid)?;
    if !hyp.main_ok() {
        reasons.push("hypotheses fail".to_string());
    }
    if h.eigenvalues.first().is_some_and(|&mu| mu < 0.0) {
        reasons.push(format!("bound state at {:.4e}", h.eigenvalues[0]));
    }
    if resonance_dip {
        reasons.push("resonance dip".to_string());
    }
    let free = DiscreteHamiltonian::free(grid)?;
    let besov_norms = fs
        .iter()
        .map(|f| besov_norm_full(h, f, BesovKind::Homogeneous).map(|p| p.norm(1.0, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    let besov_norms_free = fs
        .iter()
        .map(|f| besov_norm_full(&free, f, BesovKind::Homogeneous).map(|p| p.norm(1.0, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    let sups: Vec<Vec<(f64, f64)>> = fs
        .par_iter()
        .map(|f| times.iter().map(|&t| sup_norm(&evolve_spectral(h, f, t).u)).collect())
        .collect();
    let sup_norms: Vec<Vec<f64>> = sups.iter().map(|s| s.iter().map(|x| x.1).collect()).collect();
    let sup_norms_raw = sups.iter().map(|s| s.iter().map(|x| x.0).collect()).collect();
    let ratios: Vec<Vec<f64>> = sup_norms
        .iter()
        .zip(&besov_norms)
        .map(|(s, b)| s.iter().zip(times).map(|(x, t)| t * x / b).collect())
        .collect();
    let c_star = ratios.iter().flatten().copied().fold(0.0, f64::max);
    let flatness = ratios
        .iter()
        .map(|r| {
            let hi = r.iter().copied().fold(0.0, f64::max);
            let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
            hi / lo
        })
        .collect();
    Ok(DecayReport {
        times: times.to_vec(),
        sup_norms,
        sup_norms_raw,
        besov_norms,
        besov_norms_free,
        ratios,
        c_star,
        flatness,
        outside_theorem: !reasons.is_empty(),
        reasons,
    })
}

/// `ψ(H) f` for the window of [`evolve_spectral_resolvent`].
pub fn window_filter(h: &DiscreteHamiltonian, f: &[f64], window: &SpectralWindow) -> Vec<f64> {
    h.spectral_apply(f, |mu| window.value(mu))
}

/// Smooth radial bump `ψ(r/a)` supported in `|x| ≤ 2a`.
pub fn bump_datum(a: f64) -> impl Fn([f64; 3]) -> f64 + Sync {
    move |x| psi(norm3(x) / a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(g: &RadialGrid, sigma: f64) -> Vec<f64> {
        g.sample(|r| (-(r / sigma).powi(2)).exp())
    }

    #[test]
    fn multiplier_limits() {
        assert_eq!(wave_multiplier(0.0, 1.7), 1.7);
        assert_eq!(wave_multiplier(1e-20, 0.3), 0.3);
        assert!((wave_multiplier(4.0, 1.0) - 1f64.sin() * 0.0 - 2f64.sin() / 2.0).abs() < 1e-15);
        assert!(wave_multiplier(-1.0, 3.0) > 10.0);
        assert_eq!(wave_multiplier(2.0, -0.7), -wave_multiplier(2.0, 0.7));
    }

    #[test]
    fn kirchhoff_branches_agree() {
        for &(t, r) in &[(1.0f64, 1e-9f64), (1.0, 0.3), (2.0, 1.7), (8.0, 8.0)] {
            let s2 = 1.0f64;
            let direct = if r < 1e-6 {
                t * (-t * t).exp()
            } else {
                s2 / (4.0 * r) * ((-(r - t) * (r - t)).exp() - (-(r + t) * (r + t)).exp())
            };
            assert!((kirchhoff_gaussian(t, r, 1.0) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_matches_kirchhoff() {
        let g = RadialGrid::uniform(800, 16.0).unwrap();
        let h = DiscreteHamiltonian::free(&g).unwrap();
        let f = gaussian(&g, 1.0);
        assert!(evolve_spectral(&h, &f, 0.0).u.iter().all(|&x| x.abs() < 1e-12));
        for t in [0.5, 1.0, 2.0] {
            let u = evolve_spectral(&h, &f, t).u;
            let exact = g.sample(|r| kirchhoff_gaussian(t, r, 1.0));
            let err = u.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let scale = exact.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(err < 1e-3 * scale, "t={t}: {}", err / scale);
        }
    }

    #[test]
    fn time_symmetry_and_second_difference() {
        let g = RadialGrid::uniform(200, 10.0).unwrap();
        let h = DiscreteHamiltonian::assemble(&g, &PotentialSpec::ball_well(1.0, 0.4)).unwrap();
        let f = gaussian(&g, 1.0);
        let a = evolve_spectral(&h, &f, 1.3).u;
        let b = evolve_spectral(&h, &f, -1.3).u;
        assert!(a.iter().zip(&b).all(|(x, y)| (x + y).abs() < 1e-12));
        let dt = 1e-3;
        let up = evolve_spectral(&h, &f, 1.0 + dt).u;
        let um = evolve_spectral(&h, &f, 1.0 - dt).u;
        let hu = h.apply(&evolve_spectral(&h, &f, 1.0).u);
        for i in 0..50 {
            let dd = (up[i] - 2.0 * evolve_spectral(&h, &f, 1.0).u[i] + um[i]) / (dt * dt);
            assert!((dd + hu[i]).abs() < 1e-3 * hu.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        }
    }

    #[test]
    fn bound_state_is_flagged() {
        let g = RadialGrid::uniform(200, 10.0).unwrap();
        let h = DiscreteHamiltonian::assemble(&g, &PotentialSpec::ball_well(1.0, 3.0)).unwrap();
        assert!(evolve_spectral(&h, &gaussian(&g, 1.0), 2.0).outside_theorem);
    }

    #[test]
    fn resolvent_path_matches_eigen_path() {
        // the eigen path runs in a box four times larger so the wall does not see ψ(H)f
        let g = RadialGrid::uniform(80, 8.0).unwrap();
        let big = RadialGrid::uniform(320, 32.0).unwrap();
        let v = PotentialSpec::ball_well(1.0, 0.4);
        let h = DiscreteHamiltonian::assemble(&big, &v).unwrap();
        let window = SpectralWindow { center: 2.0 };
        let t = 1.5;
        let reference = &evolve_spectral(&h, &window_filter(&h, &gaussian(&big, 1.0), &window), t).u[..80];
        let scale = reference.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let gap = |u: &[f64]| u.iter().zip(reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        let f = gaussian(&g, 1.0);
        let run = evolve_spectral_resolvent(&g, &v, &f, t, &window, 1e-2, 8).unwrap();
        assert!(!run.flagged, "{}", run.refinement_gap);
        assert!(gap(&run.repr1) < 0.01, "repr1 {}", gap(&run.repr1));
        let between = run
            .repr1
            .iter()
            .zip(&run.repr2)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / scale;
        assert!(between < 1e-6, "{between}");
    }

    #[test]
    fn window_above_spectrum_gives_zero() {
        let g = RadialGrid::uniform(40, 4.0).unwrap();
        let h = DiscreteHamiltonian::free(&g).unwrap();
        let top = *h.eigenvalues.last().unwrap();
        let w = SpectralWindow { center: 4.0 * top };
        let u = evolve_spectral(&h, &window_filter(&h, &gaussian(&g, 1.0), &w), 1.0).u;
        assert!(u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn localized_blocks_and_linearity() {
        // blocks with 2^j t ≥ 8 are past the focusing transient at the origin
        let g = RadialGrid::uniform(1000, 4.0).unwrap();
        let h = DiscreteHamiltonian::free(&g).unwrap();
        let f = gaussian(&g, 0.02);
        let scan = localized_scan(&h, &f, &[3, 4, 5, 6], &[1.0, 2.0]);
        assert!(scan.block_spread < 3.0, "{:?}", scan.ratios);
        let a = evolve_localized(&h, &f, 1, 2.0);
        let f2: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
        let b = evolve_localized(&h, &f2, 1, 2.0);
        let (sa, sb) = (sup_norm(&a.state.u).0, sup_norm(&b.state.u).0);
        assert!((sb - 2.0 * sa).abs() < 1e-12 * sb);
        // φ̃_j φ_j = φ_j on the spectrum
        let block = h.spectral_apply(&f, |mu| phi_j(1, sqrt_spectrum(mu)));
        let tilde = h.spectral_apply(&block, |mu| {
            let r = sqrt_spectrum(mu);
            phi_j(0, r) + phi_j(1, r) + phi_j(2, r)
        });
        assert!(block.iter().zip(&tilde).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn fdtd_refuses_cfl_violation() {
        let g = CartesianGrid::new(21, 4.0).unwrap();
        let dt = g.spacing();
        let r = evolve_fdtd(&g, &PotentialSpec::Zero, bump_datum(0.5), 1.0, 1.0, Some(dt), &[]);
        assert!(matches!(r, Err(LabError::Cfl { .. })));
    }

    #[test]
    fn fdtd_finite_speed_and_energy() {
        let g = CartesianGrid::new(41, 4.0).unwrap();
        let h = g.spacing();
        let dt = 0.5 * h / 3f64.sqrt();
        let steps = 6;
        let v = PotentialSpec::ball_well(1.0, 0.4);
        let run = evolve_fdtd(
            &g,
            &v,
            bump_datum(0.5),
            1.0,
            steps as f64 * dt,
            Some(dt),
            &[steps as f64 * dt],
        )
        .unwrap();
        let u = &run.snapshots[0].u;
        let reach = 1.0 + (steps + 1) as f64 * h * 3f64.sqrt();
        for (i, x) in u.iter().enumerate() {
            if norm3(g.point(i)) > reach {
                assert!(x.abs() < 1e-10);
            }
        }
        assert!(run.energy_drift < 1e-10, "{}", run.energy_drift);
    }

    #[test]
    fn dispersive_report_labels_bound_state() {
        let g = RadialGrid::uniform(200, 16.0).unwrap();
        let v = PotentialSpec::ball_well(1.0, 3.0);
        let h = DiscreteHamiltonian::assemble(&g, &v).unwrap();
        let rep = dispersive_ratio(&h, &v, &[gaussian(&g, 0.5)], &[1.0, 2.0, 4.0, 8.0], false).unwrap();
        assert!(rep.outside_theorem);
        assert!(rep.ratios[0][3] > rep.ratios[0][0]);
        assert!(dispersive_ratio(&h, &v, &[gaussian(&g, 0.5)], &[0.1], false).is_err());
    }
}
