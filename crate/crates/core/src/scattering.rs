//! Inversion of `I + R₀(z)V`, resonance scans, perturbed resolvents and
//! spectral measures.
//!
//! `R₀V` only has nonzero columns on the support `S` of `V`, so
//! `I + R₀V = [[I + M_SS, 0], [M_NS, I]]` and every solve reduces to the
//! `S × S` block.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{LabError, Result};
use crate::potential::PotentialSpec;
use crate::quad::{median, nonneg_linear_fit};
use crate::resolvent::{
    assemble_r0, assemble_r0_squared, lambda_max, potential_samples, spectral_measure_free, AnyGrid, KernelOperator,
    NormTag, SpectralPoint,
};

/// Default absolute threshold on `1/condition` for near-singular warnings.
pub const DEFAULT_TAU: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Neumann,
    Squared,
    Fredholm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionCertificate {
    pub point: SpectralPoint,
    /// `‖R₀V‖_{L^∞→L^∞}`.
    pub neumann_norm: f64,
    pub neumann_applicable: bool,
    /// `‖(R₀V)²‖_{L^∞→L^∞}`.
    pub squared_bound: f64,
    pub route: Route,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `σ_max / σ_min` of the weighted support block.
    pub condition: f64,
    /// `‖(I + R₀V)^{-1}‖_{L^∞→L^∞}`.
    pub inverse_norm: f64,
    pub near_singular: bool,
}

/// `R₀(z)`, `V` samples and the support of `V`, shared by all solves.
struct Setup {
    r0: KernelOperator,
    v: Vec<f64>,
    support: Vec<usize>,
}

impl Setup {
    fn new(grid: AnyGrid, v: &PotentialSpec, z: &SpectralPoint) -> Result<Self> {
        let r0 = assemble_r0(grid, z)?;
        let v = potential_samples(grid, v)?;
        let support = (0..v.len()).filter(|&j| v[j] != 0.0).collect();
        Ok(Self { r0, v, support })
    }

    fn n(&self) -> usize {
        self.v.len()
    }

    /// `I + M_SS` with `M = R₀V`.
    fn block(&self) -> DMatrix<Complex64> {
        let s = &self.support;
        DMatrix::from_fn(s.len(), s.len(), |a, b| {
            let m = self.r0.matrix[(s[a], s[b])] * self.v[s[b]];
            if a == b {
                m + 1.0
            } else {
                m
            }
        })
    }

    /// `I + V_S R₀_SS`, the support block of `I + VR₀`.
    fn dual_block(&self) -> DMatrix<Complex64> {
        let s = &self.support;
        DMatrix::from_fn(s.len(), s.len(), |a, b| {
            let m = self.r0.matrix[(s[a], s[b])] * self.v[s[a]];
            if a == b {
                m + 1.0
            } else {
                m
            }
        })
    }

    /// `(I + R₀V)^{-1} X` for a full `n × k` right-hand side.
    fn solve_left(&self, inv_block: &DMatrix<Complex64>, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let s = &self.support;
        let k = x.ncols();
        let xs = DMatrix::from_fn(s.len(), k, |a, c| x[(s[a], c)]);
        let ys = inv_block * xs;
        // rows outside S: x_N - M_NS y_S
        let mns = DMatrix::from_fn(self.n(), s.len(), |i, b| self.r0.matrix[(i, s[b])] * self.v[s[b]]);
        let correction = &mns * &ys;
        let mut out = x - correction;
        for (a, &i) in s.iter().enumerate() {
            for c in 0..k {
                out[(i, c)] = ys[(a, c)];
            }
        }
        out
    }

    /// `X (I + VR₀)^{-1}` for a full `k × n` left factor.
    fn solve_right(&self, inv_dual: &DMatrix<Complex64>, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        // (I+VR₀)^{-1} = [[D, -D V_S R₀_SN], [0, I]] with D = inv_dual
        let s = &self.support;
        let k = x.nrows();
        let xs = DMatrix::from_fn(k, s.len(), |c, a| x[(c, s[a])]);
        let ys = &xs * inv_dual;
        let vr = DMatrix::from_fn(s.len(), self.n(), |a, j| self.r0.matrix[(s[a], j)] * self.v[s[a]]);
        let mut out = x - &ys * &vr;
        for (a, &j) in s.iter().enumerate() {
            for c in 0..k {
                out[(c, j)] = ys[(c, a)];
            }
        }
        out
    }

    fn weights_support(&self) -> Vec<f64> {
        self.support.iter().map(|&j| self.r0.weights[j]).collect()
    }
}

fn invert_block(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    m.clone().lu().try_inverse().ok_or(LabError::SingularMatrix)
}

/// Extreme singular values of `W^{1/2} B W^{-1/2}` (the `L²` form of `B`).
fn singular_extremes(block: &DMatrix<Complex64>, w: &[f64]) -> (f64, f64) {
    if block.nrows() == 0 {
        return (1.0, 1.0);
    }
    let sym = DMatrix::from_fn(block.nrows(), block.ncols(), |a, b| {
        block[(a, b)] * (w[a] / w[b]).sqrt()
    });
    let sv = sym.singular_values();
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sv.iter().copied().fold(0.0, f64::max);
    (lo, hi)
}

fn row_sum_norm(m: &DMatrix<Complex64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Certificate quantities and the inverse support block.
fn certify(setup: &Setup, z: &SpectralPoint, tau: f64) -> Result<(DMatrix<Complex64>, InversionCertificate)> {
    let s = &setup.support;
    let n = setup.n();
    let block = setup.block();
    let m_cols = DMatrix::from_fn(n, s.len(), |i, b| setup.r0.matrix[(i, s[b])] * setup.v[s[b]]);
    let neumann_norm = row_sum_norm(&m_cols);
    // (R₀V)² = M_{:,S} M_{S,S}
    let mss = DMatrix::from_fn(s.len(), s.len(), |a, b| setup.r0.matrix[(s[a], s[b])] * setup.v[s[b]]);
    let squared_bound = row_sum_norm(&(&m_cols * &mss));
    let (sigma_min, sigma_max) = singular_extremes(&block, &setup.weights_support());
    let condition = if sigma_min > 0.0 {
        sigma_max / sigma_min
    } else {
        f64::INFINITY
    };
    let inv = invert_block(&block)?;
    // inverse rows: S rows are inv, N rows are e_i - M_NS inv
    let mut inverse_norm: f64 = if s.len() == n { 0.0 } else { 1.0 };
    for a in 0..s.len() {
        inverse_norm = inverse_norm.max(inv.row(a).iter().map(|c| c.norm()).sum());
    }
    if s.len() < n {
        let mns_inv = &m_cols * &inv;
        let in_support: std::collections::HashSet<usize> = s.iter().copied().collect();
        for i in 0..n {
            if !in_support.contains(&i) {
                let row: f64 = 1.0 + mns_inv.row(i).iter().map(|c| c.norm()).sum::<f64>();
                inverse_norm = inverse_norm.max(row);
            }
        }
    }
    let route = if neumann_norm < 1.0 {
        Route::Neumann
    } else if squared_bound < 1.0 {
        Route::Squared
    } else {
        Route::Fredholm
    };
    let near_singular = condition > 1.0 / tau;
    if near_singular {
        log::warn!(
            "I + R0 V nearly singular at lambda = {}, eps = {}: condition {:.3e}",
            z.lambda,
            z.eps,
            condition
        );
    }
    Ok((
        inv,
        InversionCertificate {
            point: *z,
            neumann_norm,
            neumann_applicable: neumann_norm < 1.0,
            squared_bound,
            route,
            sigma_min,
            sigma_max,
            condition,
            inverse_norm,
            near_singular,
        },
    ))
}

/// Dense solve of `(I + R₀(z)V) X = I` with its certificate.
pub fn invert<'a>(
    grid: impl Into<AnyGrid<'a>>,
    v: &PotentialSpec,
    z: &SpectralPoint,
    tau: f64,
) -> Result<(KernelOperator, InversionCertificate)> {
    let setup = Setup::new(grid.into(), v, z)?;
    let (inv, cert) = certify(&setup, z, tau)?;
    let n = setup.n();
    let identity = DMatrix::<Complex64>::identity(n, n);
    let full = setup.solve_left(&inv, &identity);
    let op = KernelOperator::new(
        full,
        setup.r0.weights.clone(),
        NormTag::SupToSup,
        Some(*z),
        setup.r0.grid_kind,
        "(I+R0V)^-1",
    );
    Ok((op, cert))
}

/// Certificate only, without forming the full inverse.
pub fn certificate<'a>(
    grid: impl Into<AnyGrid<'a>>,
    v: &PotentialSpec,
    z: &SpectralPoint,
    tau: f64,
) -> Result<InversionCertificate> {
    let setup = Setup::new(grid.into(), v, z)?;
    certify(&setup, z, tau).map(|(_, c)| c)
}

/// `det(I + R₀(z)V)` from the support block.
pub fn fredholm_determinant<'a>(
    grid: impl Into<AnyGrid<'a>>,
    v: &PotentialSpec,
    z: &SpectralPoint,
) -> Result<Complex64> {
    let setup = Setup::new(grid.into(), v, z)?;
    let block = setup.block();
    if block.nrows() == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    Ok(block.lu().determinant())
}

/// Smallest weighted singular value of `I + R₀(z)V`.
pub fn sigma_min<'a>(grid: impl Into<AnyGrid<'a>>, v: &PotentialSpec, z: &SpectralPoint) -> Result<f64> {
    let setup = Setup::new(grid.into(), v, z)?;
    Ok(singular_extremes(&setup.block(), &setup.weights_support()).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dip {
    pub lambda: f64,
    pub sigma: f64,
    /// Coarse grid value before refinement.
    pub coarse_sigma: f64,
    /// Refinement stalled at a floor instead of decreasing.
    pub floor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceScan {
    pub lambdas: Vec<f64>,
    pub sigma_min: Vec<f64>,
    pub condition: Vec<f64>,
    pub neumann_norm: Vec<f64>,
    pub tau: f64,
    pub minima: Vec<Dip>,
    /// Scan points dropped above the resolution cap.
    pub truncated: bool,
    pub lambda_cap: f64,
}

/// `σ_min(I + R₀(λ+i0)V)` over `lambdas` (0 is always added). Dips below
/// `τ = tau_rel · median(σ_min)` are refined by golden-section search.
pub fn resonance_scan(
    grid: &crate::grid::RadialGrid,
    v: &PotentialSpec,
    lambdas: &[f64],
    tau_rel: f64,
) -> Result<ResonanceScan> {
    if lambdas.iter().any(|&l| l < 0.0) {
        return Err(LabError::InvalidArgument("resonance scan needs lambda >= 0".into()));
    }
    let cap = lambda_max(grid.spacing());
    let mut ls: Vec<f64> = lambdas.iter().copied().filter(|&l| l <= cap).collect();
    let truncated = ls.len() < lambdas.len();
    if truncated {
        log::warn!("resonance scan truncated at lambda_max = {cap:.4e}");
    }
    ls.push(0.0);
    ls.sort_by(|a, b| a.total_cmp(b));
    ls.dedup();
    let rows: Vec<InversionCertificate> = ls
        .par_iter()
        .map(|&l| certificate(grid, v, &SpectralPoint::plus(l, 0.0), DEFAULT_TAU))
        .collect::<Result<_>>()?;
    let sigma: Vec<f64> = rows.iter().map(|c| c.sigma_min).collect();
    let tau = tau_rel * median(&sigma);
    let mut minima = Vec::new();
    for k in 0..ls.len() {
        let left = if k == 0 { f64::INFINITY } else { sigma[k - 1] };
        let right = sigma.get(k + 1).copied().unwrap_or(f64::INFINITY);
        if sigma[k] < tau && sigma[k] <= left && sigma[k] <= right {
            let lo = if k == 0 { 0.0 } else { ls[k - 1] };
            let hi = ls.get(k + 1).copied().unwrap_or(ls[k]);
            let f = |l: f64| sigma_min(grid, v, &SpectralPoint::plus(l, 0.0)).unwrap_or(f64::INFINITY);
            let (lambda, s) = golden_section(f, lo, hi, ls[k], sigma[k], 40);
            minima.push(Dip {
                lambda,
                sigma: s,
                coarse_sigma: sigma[k],
                floor: s >= sigma[k] * (1.0 - 1e-9),
            });
        }
    }
    Ok(ResonanceScan {
        lambdas: ls,
        sigma_min: sigma,
        condition: rows.iter().map(|c| c.condition).collect(),
        neumann_norm: rows.iter().map(|c| c.neumann_norm).collect(),
        tau,
        minima,
        truncated,
        lambda_cap: cap,
    })
}

/// Golden-section minimization on `[lo, hi]`, never returning worse than
/// the starting sample `(x0, f0)`.
pub fn golden_section(f: impl Fn(f64) -> f64, lo: f64, hi: f64, x0: f64, f0: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut best = (x0, f0);
    if b <= a {
        return best;
    }
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < best.1 {
            best = (c, fc);
        }
        if fd < best.1 {
            best = (d, fd);
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    for (x, y) in [(c, fc), (d, fd), (a, f(a)), (b, f(b))] {
        if y < best.1 {
            best = (x, y);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct PerturbedResolvent {
    pub operator: KernelOperator,
    /// Largest entrywise gap between `(I+R₀V)^{-1}R₀` and `R₀(I+VR₀)^{-1}`,
    /// relative to the largest entry.
    pub duality_gap: f64,
    pub certificate: InversionCertificate,
}

/// `R_V(z) = (I + R₀V)^{-1} R₀(z)`, cross-checked against `R₀(I + VR₀)^{-1}`.
pub fn perturbed_resolvent<'a>(
    grid: impl Into<AnyGrid<'a>>,
    v: &PotentialSpec,
    z: &SpectralPoint,
) -> Result<PerturbedResolvent> {
    let setup = Setup::new(grid.into(), v, z)?;
    let (inv, certificate) = certify(&setup, z, DEFAULT_TAU)?;
    let left = setup.solve_left(&inv, &setup.r0.matrix);
    let inv_dual = invert_block(&setup.dual_block())?;
    let right = setup.solve_right(&inv_dual, &setup.r0.matrix);
    let scale = left.iter().fold(0.0f64, |m, c| m.max(c.norm())).max(f64::MIN_POSITIVE);
    let duality_gap = left
        .iter()
        .zip(right.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()))
        / scale;
    let operator = KernelOperator::new(
        left,
        setup.r0.weights.clone(),
        NormTag::SupToSup,
        Some(*z),
        setup.r0.grid_kind,
        "R_V",
    );
    Ok(PerturbedResolvent {
        operator,
        duality_gap,
        certificate,
    })
}

/// `(I + R₀(λ-iε)V)^{-1} [R₀(λ+iε) - R₀(λ-iε)] (I + VR₀(λ+iε))^{-1}`.
pub fn spectral_measure_perturbed<'a>(
    grid: impl Into<AnyGrid<'a>> + Copy,
    v: &PotentialSpec,
    lambda: f64,
    eps: f64,
) -> Result<KernelOperator> {
    let zp = SpectralPoint::plus(lambda, eps);
    let zm = SpectralPoint::minus(lambda, eps);
    let free = spectral_measure_free(grid, lambda, eps)?;
    let minus = Setup::new(grid.into(), v, &zm)?;
    let plus = Setup::new(grid.into(), v, &zp)?;
    let inv_minus = invert_block(&minus.block())?;
    let inv_plus_dual = invert_block(&plus.dual_block())?;
    let tmp = minus.solve_left(&inv_minus, &free.matrix);
    let out = plus.solve_right(&inv_plus_dual, &tmp);
    Ok(KernelOperator::new(
        out,
        free.weights.clone(),
        NormTag::L1ToSup,
        Some(zp),
        free.grid_kind,
        "dR_V",
    ))
}

/// `(I + R₀V)^{-1} R₀(z)² (I + VR₀)^{-1}`, the kernel of `R_V(z)²`.
pub fn perturbed_resolvent_squared<'a>(
    grid: impl Into<AnyGrid<'a>> + Copy,
    v: &PotentialSpec,
    z: &SpectralPoint,
) -> Result<KernelOperator> {
    let sq = assemble_r0_squared(grid, z)?;
    let setup = Setup::new(grid.into(), v, z)?;
    let inv = invert_block(&setup.block())?;
    let inv_dual = invert_block(&setup.dual_block())?;
    let tmp = setup.solve_left(&inv, &sq.matrix);
    let out = setup.solve_right(&inv_dual, &tmp);
    Ok(KernelOperator::new(
        out,
        sq.weights.clone(),
        NormTag::L1ToSup,
        Some(*z),
        sq.grid_kind,
        "R_V^2",
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquaredEnvelope {
    pub lambdas: Vec<f64>,
    pub norms: Vec<f64>,
    pub delta: f64,
    pub c_delta: f64,
    /// First `λ` where the fitted envelope drops below 1/2.
    pub lambda_delta: Option<f64>,
}

/// `‖(R₀(λ+i0)V)²‖_{L^∞→L^∞}` over positive `lambdas`, fitted to
/// `δ + C_δ/√λ`.
pub fn squared_envelope(grid: &crate::grid::RadialGrid, v: &PotentialSpec, lambdas: &[f64]) -> Result<SquaredEnvelope> {
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(LabError::InvalidArgument("envelope scan needs lambda > 0".into()));
    }
    let norms: Vec<f64> = lambdas
        .par_iter()
        .map(|&l| certificate(grid, v, &SpectralPoint::plus(l, 0.0), DEFAULT_TAU).map(|c| c.squared_bound))
        .collect::<Result<_>>()?;
    let x: Vec<f64> = lambdas.iter().map(|l| 1.0 / l.sqrt()).collect();
    let (delta, c_delta) = nonneg_linear_fit(&x, &norms);
    let lambda_delta = if delta < 0.5 {
        Some((c_delta / (0.5 - delta)).powi(2))
    } else {
        None
    };
    Ok(SquaredEnvelope {
        lambdas: lambdas.to_vec(),
        norms,
        delta,
        c_delta,
        lambda_delta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub c0: f64,
    pub budget: f64,
    pub lambdas: Vec<f64>,
    pub inverse_norms: Vec<f64>,
}

/// `ε(V₁) = 4π / C₀` with `C₀ = max_{λ ∈ [0, λ_δ]} ‖(I + R₀(λ+i0)V₁)^{-1}‖`.
pub fn perturbation_budget(
    grid: &crate::grid::RadialGrid,
    v1: &PotentialSpec,
    lambda_delta: f64,
    samples: usize,
) -> Result<Budget> {
    let samples_v = potential_samples(grid, v1)?;
    if samples_v.iter().any(|&x| x < 0.0) {
        return Err(LabError::Hypothesis("budget needs a nonnegative V1".into()));
    }
    if !(v1.decay_exponent() > 3.0) {
        return Err(LabError::Hypothesis(
            "budget needs V1 decaying faster than |x|^-3".into(),
        ));
    }
    let cap = lambda_max(grid.spacing());
    let top = lambda_delta.min(cap).max(0.0);
    let lambdas = crate::quad::linspace(0.0, top, samples.max(2));
    let certs: Vec<InversionCertificate> = lambdas
        .par_iter()
        .map(|&l| certificate(grid, v1, &SpectralPoint::plus(l, 0.0), DEFAULT_TAU))
        .collect::<Result<_>>()?;
    let sig: Vec<f64> = certs.iter().map(|c| c.sigma_min).collect();
    let tau = 1e-3 * median(&sig);
    if let Some(c) = certs.iter().find(|c| c.sigma_min < tau) {
        return Err(LabError::Resonance {
            lambda: c.point.lambda,
            sigma: c.sigma_min,
        });
    }
    let inverse_norms: Vec<f64> = certs.iter().map(|c| c.inverse_norm).collect();
    let c0 = inverse_norms.iter().copied().fold(1.0, f64::max);
    Ok(Budget {
        c0,
        budget: 4.0 * PI / c0,
        lambdas,
        inverse_norms,
    })
}
