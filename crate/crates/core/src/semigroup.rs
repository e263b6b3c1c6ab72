//! `H = -Δ + V` on radial functions, its heat semigroup and functional
//! calculus, and Monte-Carlo path-integral checks.
//!
//! The discretization is finite-volume on the cell-centred radial grid with
//! a Dirichlet wall at `r_max`: `H = W⁻¹K + V` with `K` the symmetric
//! stiffness matrix (face areas `4πr²`) and `W` the shell volumes. The
//! eigenvectors are orthonormal in the weighted pairing `Σ w_i f_i g_i`.
//! Kernel matrices are the spherically averaged 3D kernels, i.e.
//! `(T f)_i = Σ_j k(r_i, r_j) w_j f_j`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::PI;

use crate::besov::phi0;
use crate::error::{LabError, Result};
use crate::grid::RadialGrid;
use crate::potential::{c_n, kato_norm, self_adjoint_threshold, PotentialSpec};
use crate::resolvent::cell_means;

#[derive(Debug, Clone)]
pub struct DiscreteHamiltonian {
    grid: RadialGrid,
    potential: Vec<f64>,
    /// Ascending eigenvalues `μ_k`.
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors `e_k` at the nodes.
    eigenvectors: DMatrix<f64>,
    /// `‖V₋‖_K` measured on the same grid.
    pub negative_kato_norm: f64,
    /// `‖V₋‖_K ≥ 4π`: the form-bound hypothesis fails.
    pub selfadjoint_warning: bool,
}

fn stiffness(grid: &RadialGrid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.len();
    let h = grid.spacing();
    let e = grid.edges();
    let area = |r: f64| 4.0 * PI * r * r;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for i in 0..n {
        let inner = if i == 0 { 0.0 } else { area(e[i]) / h };
        let outer = if i + 1 == n {
            // Dirichlet wall half a cell beyond the last node
            2.0 * area(e[n]) / h
        } else {
            area(e[i + 1]) / h
        };
        diag[i] = inner + outer;
        if i + 1 < n {
            off[i] = -area(e[i + 1]) / h;
        }
    }
    (diag, off)
}

impl DiscreteHamiltonian {
    pub fn assemble(grid: &RadialGrid, v: &PotentialSpec) -> Result<Self> {
        let potential = cell_means(grid, v)?;
        let negative_kato_norm = kato_norm(&v.negative_part(), grid)?;
        let selfadjoint_warning = negative_kato_norm >= self_adjoint_threshold();
        if selfadjoint_warning {
            log::warn!("‖V-‖_K = {negative_kato_norm:.4} exceeds 4π; self-adjointness hypothesis violated");
        }
        let n = grid.len();
        let (diag, off) = stiffness(grid);
        let w = grid.weights();
        let sym = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i] / w[i] + potential[i]
            } else if j == i + 1 {
                off[i] / (w[i] * w[j]).sqrt()
            } else if i == j + 1 {
                off[j] / (w[i] * w[j]).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let eigenvectors = DMatrix::from_fn(n, n, |i, k| {
            let q = eig.eigenvectors[(i, order[k])];
            // fix the sign so each mode is positive near the origin
            let s = eig
                .eigenvectors
                .column(order[k])
                .iter()
                .find(|x| x.abs() > 1e-12)
                .map_or(1.0, |x| x.signum());
            s * q / w[i].sqrt()
        });
        Ok(Self {
            grid: grid.clone(),
            potential,
            eigenvalues,
            eigenvectors,
            negative_kato_norm,
            selfadjoint_warning,
        })
    }

    pub fn free(grid: &RadialGrid) -> Result<Self> {
        Self::assemble(grid, &PotentialSpec::Zero)
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `H f` from the finite-volume stencil.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let (diag, off) = stiffness(&self.grid);
        let w = self.grid.weights();
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = diag[i] * f[i];
                if i > 0 {
                    acc += off[i - 1] * f[i - 1];
                }
                if i + 1 < n {
                    acc += off[i] * f[i + 1];
                }
                acc / w[i] + self.potential[i] * f[i]
            })
            .collect()
    }

    /// `⟨e_k, f⟩ = Σ_i w_i e_k(i) f_i`.
    pub fn coefficients(&self, f: &[f64]) -> Vec<f64> {
        let w = self.grid.weights();
        let wf: Vec<f64> = f.iter().zip(w).map(|(a, b)| a * b).collect();
        let wf = nalgebra::DVector::from_vec(wf);
        (self.eigenvectors.transpose() * wf).iter().copied().collect()
    }

    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let c = nalgebra::DVector::from_column_slice(coeffs);
        (&self.eigenvectors * c).iter().copied().collect()
    }

    /// `g(H) f = Σ_k g(μ_k) ⟨e_k, f⟩ e_k`.
    pub fn spectral_apply(&self, f: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        let c: Vec<f64> = self
            .coefficients(f)
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, &mu)| c * g(mu))
            .collect();
        self.synthesize(&c)
    }

    /// Node-action matrix of `g(H)`: `E diag(g(μ)) Eᵀ W`.
    pub fn spectral_matrix(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let kernel = self.spectral_kernel(g);
        let w = self.grid.weights();
        DMatrix::from_fn(kernel.nrows(), kernel.ncols(), |i, j| kernel[(i, j)] * w[j])
    }

    /// Kernel matrix `Σ_k g(μ_k) e_k(r_i) e_k(r_j)` of `g(H)`.
    pub fn spectral_kernel(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let keep: Vec<(usize, f64)> = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &mu)| (k, g(mu)))
            .filter(|(_, gk)| *gk != 0.0)
            .collect();
        let n = self.len();
        let e = DMatrix::from_fn(n, keep.len(), |i, a| self.eigenvectors[(i, keep[a].0)]);
        let eg = DMatrix::from_fn(n, keep.len(), |i, a| e[(i, a)] * keep[a].1);
        eg * e.transpose()
    }

    pub fn heat_apply(&self, t: f64, f: &[f64]) -> Result<Vec<f64>> {
        if !(t > 0.0) {
            return Err(LabError::InvalidArgument(format!("heat flow needs t > 0, got {t}")));
        }
        Ok(self.spectral_apply(f, |mu| (-t * mu).exp()))
    }

    pub fn heat_kernel(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t > 0.0) {
            return Err(LabError::InvalidArgument(format!("heat flow needs t > 0, got {t}")));
        }
        Ok(self.spectral_kernel(|mu| (-t * mu).exp()))
    }

    /// `(H - z)^{-1} f` for real `z` below the spectrum.
    pub fn resolvent_apply(&self, z: f64, f: &[f64]) -> Result<Vec<f64>> {
        if z >= self.eigenvalues[0] {
            return Err(LabError::InvalidArgument(format!("z = {z} is not below the spectrum")));
        }
        Ok(self.spectral_apply(f, |mu| 1.0 / (mu - z)))
    }

    /// Nodes at distance at least `margin` from the wall.
    pub fn interior(&self, margin: f64) -> Vec<usize> {
        let limit = self.grid.r_max() - margin;
        (0..self.len()).filter(|&i| self.grid.nodes()[i] <= limit).collect()
    }
}

/// Largest weighted column sum, the `L¹ → L¹` norm of a node-action matrix.
pub fn l1_operator_norm(m: &DMatrix<f64>, w: &[f64]) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| w[i] * m[(i, j)].abs()).sum::<f64>() / w[j])
        .fold(0.0, f64::max)
}

/// Spherical average of the free heat kernel `(4πt)^{-3/2} e^{-|x-y|²/4t}`.
pub fn free_heat_kernel_average(t: f64, r: f64, s: f64) -> f64 {
    gaussian_average(t, r, s, 4.0, (4.0 * PI * t).powf(-1.5))
}

/// Spherical average of `c · e^{-|x-y|²/(a t)}` over `|y| = s`, `|x| = r`.
fn gaussian_average(t: f64, r: f64, s: f64, a: f64, c: f64) -> f64 {
    let d = r - s;
    let x = 2.0 * r * s / (a * t);
    let shape = if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-2.0 * x).exp_m1() / (2.0 * x)
    };
    c * (-d * d / (a * t)).exp() * shape
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelCheck {
    pub t: f64,
    /// `max (k - bound)` over interior node pairs.
    pub max_violation: f64,
    pub max_ratio: f64,
    /// `1 / (1 - 2‖V₋‖_K / c₃)`.
    pub constant: f64,
    /// The Gaussian bound is `e^{-|x-y|²/(width)}` with `width = 8t`.
    pub width: f64,
    pub interior_nodes: usize,
    pub passed: bool,
    pub skipped: Option<String>,
}

/// Pointwise check of `k_t(x,y) ≤ (2πt)^{-3/2} e^{-|x-y|²/8t} / (1 - 2‖V₋‖_K/c₃)`
/// on nodes at least `3√(2t)` from the wall.
pub fn kernel_bound_check(h: &DiscreteHamiltonian, t: f64) -> Result<HeatKernelCheck> {
    let c3 = c_n(3)?;
    let kneg = h.negative_kato_norm;
    if kneg >= 0.5 * c3 {
        return Ok(HeatKernelCheck {
            t,
            max_violation: f64::NAN,
            max_ratio: f64::NAN,
            constant: f64::INFINITY,
            width: 8.0 * t,
            interior_nodes: 0,
            passed: false,
            skipped: Some(format!("‖V-‖_K = {kneg:.4} is not below c3/2 = π")),
        });
    }
    let constant = 1.0 / (1.0 - 2.0 * kneg / c3);
    let kernel = h.heat_kernel(t)?;
    let interior = h.interior(3.0 * (2.0 * t).sqrt());
    let r = h.grid().nodes();
    let c = constant * (2.0 * PI * t).powf(-1.5);
    let mut max_violation = f64::NEG_INFINITY;
    let mut max_ratio: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for &i in &interior {
        for &j in &interior {
            let bound = gaussian_average(t, r[i], r[j], 8.0, c);
            peak = peak.max(bound);
            max_violation = max_violation.max(kernel[(i, j)] - bound);
            if bound > 0.0 {
                max_ratio = max_ratio.max(kernel[(i, j)] / bound);
            }
        }
    }
    Ok(HeatKernelCheck {
        t,
        max_violation,
        max_ratio,
        constant,
        width: 8.0 * t,
        interior_nodes: interior.len(),
        passed: max_violation <= 1e-9 * peak,
        skipped: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpLqCheck {
    pub t: f64,
    pub p: f64,
    pub q: f64,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Discrete `L^p → L^q` norm of `e^{-tH}` for `(p, q)` in
/// `{(1,∞), (2,2), (1,2), (2,∞)}` against `(2πt)^{-γ} / (1 - ‖V₋‖_K/c₃)²`.
pub fn lplq_check(h: &DiscreteHamiltonian, t: f64, p: f64, q: f64) -> Result<LpLqCheck> {
    let c3 = c_n(3)?;
    let w = h.grid().weights();
    let interior = h.interior(3.0 * (2.0 * t).sqrt());
    let measured = if p == 1.0 && q.is_infinite() {
        let k = h.heat_kernel(t)?;
        interior
            .iter()
            .flat_map(|&i| interior.iter().map(move |&j| (i, j)))
            .fold(0.0f64, |m, (i, j)| m.max(k[(i, j)].abs()))
    } else if p == 2.0 && q == 2.0 {
        h.eigenvalues.iter().fold(0.0f64, |m, &mu| m.max((-t * mu).exp()))
    } else if (p == 1.0 && q == 2.0) || (p == 2.0 && q.is_infinite()) {
        let k = h.heat_kernel(t)?;
        interior
            .iter()
            .map(|&j| (0..h.len()).map(|i| w[i] * k[(i, j)].powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    } else {
        return Err(LabError::InvalidArgument(format!(
            "unsupported exponent pair ({p}, {q})"
        )));
    };
    let alpha = h.negative_kato_norm / c3;
    let gamma = 1.5 * (1.0 / p - if q.is_infinite() { 0.0 } else { 1.0 / q });
    let bound = if alpha < 1.0 {
        (2.0 * PI * t).powf(-gamma) / (1.0 - alpha).powi(2)
    } else {
        f64::INFINITY
    };
    Ok(LpLqCheck {
        t,
        p,
        q,
        measured,
        bound,
        passed: measured <= bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub count: usize,
    pub steps: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl PathEnsemble {
    /// `dt = t/200`.
    pub fn new(count: usize, horizon: f64, seed: u64) -> Self {
        Self {
            count,
            steps: 200,
            horizon,
            seed,
        }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub paths: usize,
    pub seed: u64,
    /// `stderr` exceeded the requested tolerance.
    pub flagged: bool,
}

const CHUNK: usize = 1024;

/// Mean and standard error of `F(path)` over Brownian paths started at `x`
/// with increments `N(0, 2 dt)` per coordinate (the `e^{tΔ}` convention).
/// `F` receives the trapezoid value of `∫ V` and the endpoint.
fn path_average<F>(v: &PotentialSpec, x: [f64; 3], ensemble: &PathEnsemble, functional: F) -> (f64, f64)
where
    F: Fn(f64, [f64; 3]) -> f64 + Sync,
{
    let chunks = ensemble.count.div_ceil(CHUNK);
    let mut master = ChaCha8Rng::seed_from_u64(ensemble.seed);
    let seeds: Vec<u64> = (0..chunks).map(|_| master.gen()).collect();
    let dt = ensemble.dt();
    let sd = (2.0 * dt).sqrt();
    let partial: Vec<(f64, f64)> = seeds
        .par_iter()
        .enumerate()
        .map(|(c, &seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let count = CHUNK.min(ensemble.count - c * CHUNK);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..count {
                let mut p = x;
                let mut integral = 0.5 * v.eval(p);
                for step in 0..ensemble.steps {
                    for coord in p.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *coord += sd * z;
                    }
                    let weight = if step + 1 == ensemble.steps { 0.5 } else { 1.0 };
                    integral += weight * v.eval(p);
                }
                let value = functional(integral * dt, p);
                sum += value;
                sumsq += value * value;
            }
            (sum, sumsq)
        })
        .collect();
    let (sum, sumsq) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = ensemble.count as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Feynman–Kac estimate of `(e^{-tH} f)(x) = E_x[exp(-∫₀ᵗ V(b)) f(b(t))]`,
/// with `f ≡ 1` when no datum is given.
pub fn feynman_kac_mc(
    v: &PotentialSpec,
    x: [f64; 3],
    ensemble: &PathEnsemble,
    datum: Option<&(dyn Fn([f64; 3]) -> f64 + Sync)>,
    tolerance: f64,
) -> Result<McEstimate> {
    if ensemble.count < 2 || !(ensemble.horizon > 0.0) {
        return Err(LabError::InvalidArgument("ensemble needs >= 2 paths and t > 0".into()));
    }
    let (estimate, stderr) = path_average(v, x, ensemble, |integral, end| {
        (-integral).exp() * datum.map_or(1.0, |f| f(end))
    });
    let flagged = stderr > tolerance;
    if flagged {
        log::warn!("Feynman-Kac stderr {stderr:.3e} above tolerance {tolerance:.3e}; more paths needed");
    }
    Ok(McEstimate {
        estimate,
        stderr,
        paths: ensemble.count,
        seed: ensemble.seed,
        flagged,
    })
}

/// `Q_t(ρ) = ∫₀ᵗ (2πs)^{-3/2} e^{-ρ²/2s} ds = erfc(ρ/√(2t)) / (2πρ)`.
pub fn q_t(t: f64, rho: f64) -> f64 {
    erfc(rho / (2.0 * t).sqrt()) / (2.0 * PI * rho)
}

/// Spherical average of `Q_t(|x - y|)` over `|y| = s`, `|x| = r`.
fn q_t_average(t: f64, r: f64, s: f64) -> f64 {
    if r < 1e-12 {
        return q_t(t, s);
    }
    if s < 1e-12 {
        return q_t(t, r);
    }
    let a = (2.0 * t).sqrt();
    let anti = |u: f64| u * erfc(u / a) - a / PI.sqrt() * (-(u / a).powi(2)).exp();
    (anti(r + s) - anti((r - s).abs())) / (4.0 * PI * r * s)
}

/// `∫ Q_t(x - y) V(y) dy` at `|x| = r` for radial `V`.
pub fn q_t_potential(v: &PotentialSpec, t: f64, r: f64, r_max: f64) -> Result<f64> {
    let mut cuts: Vec<f64> = vec![0.0, r_max];
    if r > 0.0 && r < r_max {
        cuts.push(r);
    }
    cuts.extend(v.radial_breakpoints().into_iter().filter(|&b| b > 0.0 && b < r_max));
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let mut total = 0.0;
    for c in cuts.windows(2) {
        let panels = 32;
        let step = (c[1] - c[0]) / panels as f64;
        for p in 0..panels {
            let lo = c[0] + p as f64 * step;
            total += v
                .radial_integral(lo, lo + step, false, &|s| 4.0 * PI * s * s * q_t_average(t, r, s))
                .map_err(|(coarse, fine)| LabError::KatoDivergent { coarse, fine })?;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KhasminskiiReport {
    pub t: f64,
    /// `(r, ∫ Q_t(x-y) V₋(y) dy)` at each probe.
    pub q_values: Vec<(f64, f64)>,
    /// `sup_x ∫ Q_t V₋` over the probes.
    pub alpha_measured: f64,
    /// `‖V₋‖_K / c₃`.
    pub alpha: f64,
    /// MC estimates of `E_x ∫₀ᵗ V₋(β)` at each probe.
    pub mc_integrals: Vec<McEstimate>,
    /// MC estimates of `E_x exp(∫₀ᵗ V₋(β))` at each probe.
    pub mc_exponentials: Vec<McEstimate>,
    /// `1 / (1 - α)`, infinite when Khasminskii does not apply.
    pub bound: f64,
    pub applicable: bool,
}

/// Khasminskii check for standard Brownian motion `β` (generator `Δ/2`).
/// Paths are simulated in the `e^{tΔ}` convention and rescaled:
/// `∫₀ᵗ V(β(u)) du = 2 ∫₀^{t/2} V(b(s)) ds` with `b(s) = β(2s)`.
pub fn qt_and_khasminskii(
    v_neg: &PotentialSpec,
    t: f64,
    probes: &[f64],
    grid: &RadialGrid,
    paths: usize,
    seed: u64,
) -> Result<KhasminskiiReport> {
    if !v_neg.is_radial() {
        return Err(LabError::InvalidArgument("Khasminskii check needs a radial V-".into()));
    }
    let c3 = c_n(3)?;
    let alpha = kato_norm(v_neg, grid)? / c3;
    let q_values: Vec<(f64, f64)> = probes
        .iter()
        .map(|&r| q_t_potential(v_neg, t, r, grid.r_max()).map(|q| (r, q)))
        .collect::<Result<_>>()?;
    let alpha_measured = q_values.iter().fold(0.0f64, |m, &(_, q)| m.max(q));
    let applicable = alpha < 1.0;
    if !applicable {
        log::warn!("α = {alpha:.4} >= 1: Khasminskii's lemma does not apply");
    }
    let ensemble = PathEnsemble::new(paths, 0.5 * t, seed);
    let mut mc_integrals = Vec::new();
    let mut mc_exponentials = Vec::new();
    for (k, &r) in probes.iter().enumerate() {
        let e = PathEnsemble {
            seed: seed.wrapping_add(k as u64),
            ..ensemble
        };
        let (m, s) = path_average(v_neg, [r, 0.0, 0.0], &e, |integral, _| 2.0 * integral);
        mc_integrals.push(McEstimate {
            estimate: m,
            stderr: s,
            paths,
            seed: e.seed,
            flagged: false,
        });
        let (m, s) = path_average(v_neg, [r, 0.0, 0.0], &e, |integral, _| (2.0 * integral).exp());
        mc_exponentials.push(McEstimate {
            estimate: m,
            stderr: s,
            paths,
            seed: e.seed,
            flagged: false,
        });
    }
    Ok(KhasminskiiReport {
        t,
        q_values,
        alpha_measured,
        alpha,
        mc_integrals,
        mc_exponentials,
        bound: if applicable { 1.0 / (1.0 - alpha) } else { f64::INFINITY },
        applicable,
    })
}

#[derive(Debug, Clone)]
pub struct FunctionalCalculus {
    /// Node-action matrix of `g(θH)`.
    pub matrix: DMatrix<f64>,
    pub theta: f64,
    /// `g` does not vanish at the top of the discrete spectrum.
    pub truncated: bool,
}

impl FunctionalCalculus {
    pub fn l1_norm(&self, grid: &RadialGrid) -> f64 {
        l1_operator_norm(&self.matrix, grid.weights())
    }
}

/// `g(θH) = Σ_k g(θμ_k) ⟨e_k, ·⟩ e_k`.
pub fn functional_calculus(h: &DiscreteHamiltonian, g: impl Fn(f64) -> f64, theta: f64) -> FunctionalCalculus {
    let top = *h.eigenvalues.last().unwrap_or(&0.0);
    let scale = h.eigenvalues.iter().fold(0.0f64, |m, &mu| m.max(g(theta * mu).abs()));
    let truncated = g(theta * top).abs() > 1e-8 * scale.max(f64::MIN_POSITIVE);
    if truncated {
        log::warn!("profile support exceeds the resolved spectrum at θ = {theta}");
    }
    FunctionalCalculus {
        matrix: h.spectral_matrix(|mu| g(theta * mu)),
        theta,
        truncated,
    }
}

/// `√μ`, with negative eigenvalues clamped to zero.
pub(crate) fn sqrt_spectrum(mu: f64) -> f64 {
    mu.max(0.0).sqrt()
}

/// `‖φ_j(√H_θ) φ_k(√H₀)‖_{L¹→L¹}`.
pub fn cross_block_norm(h_theta: &DiscreteHamiltonian, h0: &DiscreteHamiltonian, j: i32, k: i32) -> f64 {
    let sj = 2f64.powi(-j);
    let sk = 2f64.powi(-k);
    let a = h_theta.spectral_kernel(|mu| phi0(sj * sqrt_spectrum(mu)));
    let b = h0.spectral_matrix(|mu| phi0(sk * sqrt_spectrum(mu)));
    let w = h0.grid().weights();
    let aw = DMatrix::from_fn(a.nrows(), a.ncols(), |i, c| a[(i, c)] * w[c]);
    l1_operator_norm(&(aw * b), w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossBlockScan {
    pub js: Vec<i32>,
    pub ks: Vec<i32>,
    pub thetas: Vec<f64>,
    /// `ratios[t][a][b]` = `‖φ_j(√H_θ) φ_k(√H₀)‖ · 2^{2j-2k}` for `j = js[a]`, `k = ks[b]`.
    pub ratios: Vec<Vec<Vec<f64>>>,
    /// Smallest `C` with every measured norm below `C 2^{-2j+2k}`.
    pub fitted_c: f64,
    /// Max over cells over min over cells of the θ-maximal ratio.
    pub cell_spread: f64,
}

/// Cross-block norms over a `(j, k)` window for each `V_θ`.
pub fn cross_block_scan(
    grid: &RadialGrid,
    v: &PotentialSpec,
    js: &[i32],
    ks: &[i32],
    thetas: &[f64],
) -> Result<CrossBlockScan> {
    let h0 = DiscreteHamiltonian::free(grid)?;
    let ratios = thetas
        .iter()
        .map(|&theta| {
            let ht = DiscreteHamiltonian::assemble(grid, &v.scaled(theta))?;
            Ok(js
                .par_iter()
                .map(|&j| {
                    ks.iter()
                        .map(|&k| cross_block_norm(&ht, &h0, j, k) * 2f64.powi(2 * j - 2 * k))
                        .collect()
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<Vec<f64>>>>>()?;
    let mut cell_max = Vec::new();
    for a in 0..js.len() {
        for b in 0..ks.len() {
            cell_max.push(ratios.iter().map(|r| r[a][b]).fold(0.0, f64::max));
        }
    }
    let fitted_c = cell_max.iter().copied().fold(0.0, f64::max);
    let lowest = cell_max.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CrossBlockScan {
        js: js.to_vec(),
        ks: ks.to_vec(),
        thetas: thetas.to_vec(),
        ratios,
        fitted_c,
        cell_spread: if lowest > 0.0 { fitted_c / lowest } else { f64::INFINITY },
    })
}
