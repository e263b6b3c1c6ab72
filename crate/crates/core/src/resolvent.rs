//! Free resolvent `R₀(z) = (-Δ - z)^{-1}` in ℝ³ and its discretizations.
//!
//! On radial grids every operator is the s-wave reduction: the kernel is
//! averaged over the sphere `|y| = s` in closed form and integrated exactly
//! (Gauss–Legendre, split at the kink `s = r`) over each shell. Matrix entries
//! are therefore "kernel × weight" and act directly on nodal values.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{LabError, Result};
use crate::grid::{dist3, CartesianGrid, RadialGrid};
use crate::potential::PotentialSpec;
use crate::quad::{exprel, exprel2, gauss_legendre, linear_fit, nonneg_linear_fit};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Largest Cartesian node count accepted for dense assembly.
pub const MAX_CARTESIAN_NODES: usize = 41 * 41 * 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
}

/// `λ ± iε` with the square-root determination `Im √z ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub lambda: f64,
    pub eps: f64,
    pub branch: Branch,
}

/// `λ_ε = (λ + √(λ² + ε²)) / 2`.
pub fn lambda_eps(lambda: f64, eps: f64) -> f64 {
    let root = lambda.hypot(eps);
    if lambda >= 0.0 {
        0.5 * (lambda + root)
    } else {
        // cancellation-free form of the same expression
        0.5 * eps * eps / (root - lambda)
    }
}

impl SpectralPoint {
    pub fn new(lambda: f64, eps: f64, branch: Branch) -> Result<Self> {
        if !(eps >= 0.0) || !lambda.is_finite() || !eps.is_finite() {
            return Err(LabError::InvalidArgument(format!(
                "spectral point needs finite lambda and eps >= 0 (got {lambda}, {eps})"
            )));
        }
        Ok(Self { lambda, eps, branch })
    }

    pub fn plus(lambda: f64, eps: f64) -> Self {
        Self {
            lambda,
            eps: eps.max(0.0),
            branch: Branch::Plus,
        }
    }

    pub fn minus(lambda: f64, eps: f64) -> Self {
        Self {
            lambda,
            eps: eps.max(0.0),
            branch: Branch::Minus,
        }
    }

    /// The point on the other side of the real axis.
    pub fn conj(&self) -> Self {
        Self {
            branch: match self.branch {
                Branch::Plus => Branch::Minus,
                Branch::Minus => Branch::Plus,
            },
            ..*self
        }
    }

    pub fn lambda_eps(&self) -> f64 {
        lambda_eps(self.lambda, self.eps)
    }

    pub fn z(&self) -> Complex64 {
        match self.branch {
            Branch::Plus => Complex64::new(self.lambda, self.eps),
            Branch::Minus => Complex64::new(self.lambda, -self.eps),
        }
    }

    /// `κ` with `κ² = z`, `Im κ ≥ 0`; boundary values from the chosen side.
    pub fn kappa(&self) -> Complex64 {
        let sign = match self.branch {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        };
        if self.eps == 0.0 {
            if self.lambda >= 0.0 {
                Complex64::new(sign * self.lambda.sqrt(), 0.0)
            } else {
                Complex64::new(0.0, (-self.lambda).sqrt())
            }
        } else {
            let a = self.lambda_eps().sqrt();
            let b = 0.5 * self.eps / a;
            Complex64::new(sign * a, b)
        }
    }

    pub fn is_origin(&self) -> bool {
        self.lambda == 0.0 && self.eps == 0.0
    }
}

/// Free resolvent kernel `e^{iκ|x-y|} / (4π|x-y|)`.
pub fn free_kernel(x: [f64; 3], y: [f64; 3], z: &SpectralPoint) -> Result<Complex64> {
    let rho = dist3(x, y);
    if rho == 0.0 {
        return Err(LabError::SingularPoint);
    }
    Ok((I * z.kappa() * rho).exp() / (4.0 * PI * rho))
}

/// Kernel of `R₀(z)²`, `i e^{iκ|x-y|} / (8πκ)`; finite on the diagonal.
pub fn free_kernel_squared(rho: f64, z: &SpectralPoint) -> Result<Complex64> {
    if z.is_origin() {
        return Err(LabError::ZeroSpectralPoint);
    }
    let k = z.kappa();
    Ok(I * (I * k * rho).exp() / (8.0 * PI * k))
}

/// Kernel of `R₀(λ+iε) - R₀(λ-iε)`, `(i/2π) sin(√λ_ε ρ) e^{-ερ/(2√λ_ε)} / ρ`.
pub fn spectral_kernel(rho: f64, lambda: f64, eps: f64) -> Complex64 {
    let le = lambda_eps(lambda, eps);
    if le <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let a = le.sqrt();
    let damping = (-0.5 * eps * rho / a).exp();
    let sinc = if rho * a < 1e-8 { a } else { (a * rho).sin() / rho };
    Complex64::new(0.0, sinc * damping / (2.0 * PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormTag {
    SupToSup,
    L1ToL1,
    L1ToSup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Radial,
    Cartesian,
}

/// Dense discretized integral operator; entry `(i, j)` is the kernel
/// integrated against the shell (or cell) of node `j`.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    pub matrix: DMatrix<Complex64>,
    /// Quadrature weights of the column nodes.
    pub weights: Vec<f64>,
    pub norm_tag: NormTag,
    pub point: Option<SpectralPoint>,
    pub grid_kind: GridKind,
    pub label: String,
}

#[derive(Debug, Clone, Serialize)]
struct Sidecar<'a> {
    label: &'a str,
    rows: usize,
    cols: usize,
    grid_kind: GridKind,
    weights: &'a [f64],
    norm_tag: NormTag,
    spectral_point: Option<SpectralPoint>,
    layout: &'static str,
}

impl KernelOperator {
    pub fn new(
        matrix: DMatrix<Complex64>,
        weights: Vec<f64>,
        norm_tag: NormTag,
        point: Option<SpectralPoint>,
        grid_kind: GridKind,
        label: impl Into<String>,
    ) -> Self {
        Self {
            matrix,
            weights,
            norm_tag,
            point,
            grid_kind,
            label: label.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `L^∞ → L^∞` norm: the largest absolute row sum.
    pub fn opnorm_linf(&self) -> f64 {
        (0..self.matrix.nrows())
            .map(|i| self.matrix.row(i).iter().map(|c| c.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `L¹ → L¹` norm: largest weighted column sum `Σ_i w_i |M_ij| / w_j`.
    pub fn opnorm_l1(&self) -> f64 {
        (0..self.matrix.ncols())
            .map(|j| {
                self.matrix
                    .column(j)
                    .iter()
                    .zip(&self.weights)
                    .map(|(c, w)| w * c.norm())
                    .sum::<f64>()
                    / self.weights[j]
            })
            .fold(0.0, f64::max)
    }

    /// `L¹ → L^∞` norm: the supremum of the kernel, `max |M_ij| / w_j`.
    pub fn opnorm_l1_linf(&self) -> f64 {
        let mut best: f64 = 0.0;
        for j in 0..self.matrix.ncols() {
            for i in 0..self.matrix.nrows() {
                best = best.max(self.matrix[(i, j)].norm() / self.weights[j]);
            }
        }
        best
    }

    /// Norm selected by `norm_tag`.
    pub fn opnorm(&self) -> f64 {
        match self.norm_tag {
            NormTag::SupToSup => self.opnorm_linf(),
            NormTag::L1ToL1 => self.opnorm_l1(),
            NormTag::L1ToSup => self.opnorm_l1_linf(),
        }
    }

    pub fn apply(&self, f: &[f64]) -> Vec<Complex64> {
        let v = nalgebra::DVector::from_iterator(f.len(), f.iter().map(|&x| Complex64::new(x, 0.0)));
        (&self.matrix * v).iter().copied().collect()
    }

    pub fn apply_complex(&self, f: &[Complex64]) -> Vec<Complex64> {
        let v = nalgebra::DVector::from_column_slice(f);
        (&self.matrix * v).iter().copied().collect()
    }

    /// Composition `self ∘ other` on the same grid.
    pub fn compose(&self, other: &KernelOperator, label: impl Into<String>) -> KernelOperator {
        KernelOperator {
            matrix: &self.matrix * &other.matrix,
            weights: self.weights.clone(),
            norm_tag: self.norm_tag,
            point: self.point,
            grid_kind: self.grid_kind,
            label: label.into(),
        }
    }

    /// Row-major little-endian `(re, im)` pairs to `<stem>.bin` and a JSON
    /// sidecar to `<stem>.json`.
    pub fn export(&self, stem: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(16 * self.matrix.len());
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                let c = self.matrix[(i, j)];
                bytes.extend_from_slice(&c.re.to_le_bytes());
                bytes.extend_from_slice(&c.im.to_le_bytes());
            }
        }
        let bin = stem.with_extension("bin");
        std::fs::File::create(&bin)?.write_all(&bytes)?;
        let sidecar = Sidecar {
            label: &self.label,
            rows: self.matrix.nrows(),
            cols: self.matrix.ncols(),
            grid_kind: self.grid_kind,
            weights: &self.weights,
            norm_tag: self.norm_tag,
            spectral_point: self.point,
            layout: "row-major complex128 (re, im) little-endian",
        };
        std::fs::write(stem.with_extension("json"), serde_json::to_vec_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Reads back a matrix written by [`KernelOperator::export`].
    pub fn import_matrix(stem: &Path) -> Result<DMatrix<Complex64>> {
        let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(stem.with_extension("json"))?)?;
        let rows = meta["rows"].as_u64().unwrap_or(0) as usize;
        let cols = meta["cols"].as_u64().unwrap_or(0) as usize;
        let bytes = std::fs::read(stem.with_extension("bin"))?;
        if bytes.len() != 16 * rows * cols {
            return Err(LabError::InvalidArgument("matrix dump size mismatch".into()));
        }
        let f = |k: usize| f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
        Ok(DMatrix::from_fn(rows, cols, |i, j| {
            let k = 2 * (i * cols + j);
            Complex64::new(f(k), f(k + 1))
        }))
    }
}

/// Spacing needed to resolve the oscillation at `z`: ten nodes per wavelength.
pub fn required_spacing(z: &SpectralPoint) -> f64 {
    let le = z.lambda_eps();
    if le > 0.0 {
        2.0 * PI / (10.0 * le.sqrt())
    } else {
        f64::INFINITY
    }
}

/// Largest `λ` a grid of spacing `h` resolves.
pub fn lambda_max(h: f64) -> f64 {
    (2.0 * PI / (10.0 * h)).powi(2)
}

fn check_resolution(h: f64, z: &SpectralPoint) -> Result<()> {
    let required = required_spacing(z);
    if h > required * (1.0 + 1e-12) {
        Err(LabError::Unresolved { spacing: h, required })
    } else {
        Ok(())
    }
}

/// Spherical averages of the two kernel families used on radial grids.
#[derive(Debug, Clone, Copy)]
enum RadialKernel {
    /// `c e^{iκρ} / ρ`
    Coulomb { c: Complex64, kappa: Complex64 },
    /// `c e^{iκρ}`
    Plain { c: Complex64, kappa: Complex64 },
    /// `c sin(aρ) e^{-bρ} / ρ`
    Sine { c: Complex64, a: f64, b: f64 },
}

impl RadialKernel {
    /// Average over the sphere `|y| = s` for `|x| = r`.
    fn average(&self, r: f64, s: f64) -> Complex64 {
        let (lo, hi) = if r < s { (r, s) } else { (s, r) };
        let a = hi - lo;
        match *self {
            RadialKernel::Coulomb { c, kappa } => c * (I * kappa * a).exp() * exprel(2.0 * I * kappa * lo) / hi,
            RadialKernel::Plain { c, kappa } => {
                let z = 2.0 * I * kappa * lo;
                c * (I * kappa * a).exp() * (a * exprel(z) / hi + 2.0 * (lo / hi) * exprel2(z))
            }
            RadialKernel::Sine { c, a: k, b } => {
                // sin(kρ) e^{-bρ} = Im e^{(ik - b)ρ}; average of e^{qρ}/ρ
                let q = Complex64::new(-b, k);
                let avg = (q * a).exp() * exprel(2.0 * q * lo) / hi;
                c * avg.im
            }
        }
    }
}

/// `∫_{cell j} K̄(r_i, s) 4π s² ds` for every pair, split at the kink.
fn radial_matrix(grid: &RadialGrid, kernel: RadialKernel) -> DMatrix<Complex64> {
    let n = grid.len();
    let (gx, gw) = gauss_legendre(4);
    let edges = grid.edges();
    let nodes = grid.nodes();
    let cell = |r: f64, lo: f64, hi: f64| -> Complex64 {
        let half = 0.5 * (hi - lo);
        let mid = lo + half;
        gx.iter()
            .zip(&gw)
            .map(|(x, w)| {
                let s = mid + half * x;
                kernel.average(r, s) * (w * 4.0 * PI * s * s)
            })
            .sum::<Complex64>()
            * half
    };
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let r = nodes[i];
            (0..n)
                .map(|j| {
                    if i == j {
                        cell(r, edges[j], r) + cell(r, r, edges[j + 1])
                    } else {
                        cell(r, edges[j], edges[j + 1])
                    }
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Shell means of `V` on the radial grid, `∫_cell V s² ds / ∫_cell s² ds`.
pub fn cell_means(grid: &RadialGrid, v: &PotentialSpec) -> Result<Vec<f64>> {
    if !v.is_radial() {
        return Err(LabError::InvalidArgument(
            "radial assembly needs a radial potential".into(),
        ));
    }
    let edges = grid.edges();
    edges
        .windows(2)
        .map(|e| {
            let num = v
                .radial_integral(e[0], e[1], false, &|s| s * s)
                .map_err(|(coarse, fine)| LabError::KatoDivergent { coarse, fine })?;
            Ok(3.0 * num / (e[1].powi(3) - e[0].powi(3)))
        })
        .collect()
}

fn free_radial(grid: &RadialGrid, z: &SpectralPoint) -> Result<KernelOperator> {
    check_resolution(grid.spacing(), z)?;
    let kernel = RadialKernel::Coulomb {
        c: Complex64::new(1.0 / (4.0 * PI), 0.0),
        kappa: z.kappa(),
    };
    Ok(KernelOperator::new(
        radial_matrix(grid, kernel),
        grid.weights().to_vec(),
        NormTag::SupToSup,
        Some(*z),
        GridKind::Radial,
        "R0",
    ))
}

fn free_cartesian(grid: &CartesianGrid, z: &SpectralPoint) -> Result<KernelOperator> {
    check_resolution(grid.spacing(), z)?;
    let n = grid.len();
    if n > MAX_CARTESIAN_NODES {
        return Err(LabError::InvalidArgument(format!(
            "dense Cartesian assembly capped at {MAX_CARTESIAN_NODES} nodes, got {n}"
        )));
    }
    let h = grid.spacing();
    let vol = grid.cell_volume();
    let kappa = z.kappa();
    let diag = (h * h * crate::potential::unit_cube_newton_integral() + I * kappa * vol) / (4.0 * PI);
    let points: Vec<[f64; 3]> = grid.points().collect();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        diag
                    } else {
                        let rho = dist3(points[i], points[j]);
                        (I * kappa * rho).exp() / (4.0 * PI * rho) * vol
                    }
                })
                .collect()
        })
        .collect();
    Ok(KernelOperator::new(
        DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        vec![vol; n],
        NormTag::SupToSup,
        Some(*z),
        GridKind::Cartesian,
        "R0",
    ))
}

/// Discretized `R₀(z)`.
pub fn assemble_r0<'a>(grid: impl Into<AnyGrid<'a>>, z: &SpectralPoint) -> Result<KernelOperator> {
    match grid.into() {
        AnyGrid::Radial(g) => free_radial(g, z),
        AnyGrid::Cartesian(g) => free_cartesian(g, z),
    }
}

/// Node values of `V` matching the assembly of the grid.
pub fn potential_samples<'a>(grid: impl Into<AnyGrid<'a>>, v: &PotentialSpec) -> Result<Vec<f64>> {
    match grid.into() {
        AnyGrid::Radial(g) => cell_means(g, v),
        AnyGrid::Cartesian(g) => Ok(g.points().map(|p| v.eval(p)).collect()),
    }
}

/// Discretized `R₀(z)V`.
pub fn assemble_r0v<'a>(
    grid: impl Into<AnyGrid<'a>> + Copy,
    v: &PotentialSpec,
    z: &SpectralPoint,
) -> Result<KernelOperator> {
    let vs = potential_samples(grid, v)?;
    let mut op = assemble_r0(grid, z)?;
    for (j, vj) in vs.iter().enumerate() {
        op.matrix.column_mut(j).scale_mut(*vj);
    }
    op.label = "R0V".into();
    Ok(op)
}

/// Discretized `VR₀(z)`; natural norm `L¹ → L¹`.
pub fn assemble_vr0<'a>(
    grid: impl Into<AnyGrid<'a>> + Copy,
    v: &PotentialSpec,
    z: &SpectralPoint,
) -> Result<KernelOperator> {
    let vs = potential_samples(grid, v)?;
    let mut op = assemble_r0(grid, z)?;
    for (i, vi) in vs.iter().enumerate() {
        op.matrix.row_mut(i).scale_mut(*vi);
    }
    op.norm_tag = NormTag::L1ToL1;
    op.label = "VR0".into();
    Ok(op)
}

/// Discretized `R₀(z)²`; natural norm `L¹ → L^∞`.
pub fn assemble_r0_squared<'a>(grid: impl Into<AnyGrid<'a>>, z: &SpectralPoint) -> Result<KernelOperator> {
    if z.is_origin() {
        return Err(LabError::ZeroSpectralPoint);
    }
    let kappa = z.kappa();
    let c = I / (8.0 * PI * kappa);
    match grid.into() {
        AnyGrid::Radial(g) => {
            check_resolution(g.spacing(), z)?;
            Ok(KernelOperator::new(
                radial_matrix(g, RadialKernel::Plain { c, kappa }),
                g.weights().to_vec(),
                NormTag::L1ToSup,
                Some(*z),
                GridKind::Radial,
                "R0^2",
            ))
        }
        AnyGrid::Cartesian(g) => {
            check_resolution(g.spacing(), z)?;
            let vol = g.cell_volume();
            let points: Vec<[f64; 3]> = g.points().collect();
            let n = points.len();
            let m = DMatrix::from_fn(n, n, |i, j| c * (I * kappa * dist3(points[i], points[j])).exp() * vol);
            Ok(KernelOperator::new(
                m,
                vec![vol; n],
                NormTag::L1ToSup,
                Some(*z),
                GridKind::Cartesian,
                "R0^2",
            ))
        }
    }
}

/// Discretized `R₀(λ+iε) - R₀(λ-iε)`; natural norm `L¹ → L^∞`.
pub fn spectral_measure_free<'a>(grid: impl Into<AnyGrid<'a>>, lambda: f64, eps: f64) -> Result<KernelOperator> {
    if !(eps >= 0.0) {
        return Err(LabError::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    let z = SpectralPoint::plus(lambda, eps);
    let le = z.lambda_eps();
    match grid.into() {
        AnyGrid::Radial(g) => {
            check_resolution(g.spacing(), &z)?;
            let m = if le > 0.0 {
                let a = le.sqrt();
                let kernel = RadialKernel::Sine {
                    c: Complex64::new(0.0, 1.0 / (2.0 * PI)),
                    a,
                    b: 0.5 * eps / a,
                };
                radial_matrix(g, kernel)
            } else {
                DMatrix::zeros(g.len(), g.len())
            };
            Ok(KernelOperator::new(
                m,
                g.weights().to_vec(),
                NormTag::L1ToSup,
                Some(z),
                GridKind::Radial,
                "dR0",
            ))
        }
        AnyGrid::Cartesian(g) => {
            check_resolution(g.spacing(), &z)?;
            let vol = g.cell_volume();
            let points: Vec<[f64; 3]> = g.points().collect();
            let n = points.len();
            let m = DMatrix::from_fn(n, n, |i, j| {
                spectral_kernel(dist3(points[i], points[j]), lambda, eps) * vol
            });
            Ok(KernelOperator::new(
                m,
                vec![vol; n],
                NormTag::L1ToSup,
                Some(z),
                GridKind::Cartesian,
                "dR0",
            ))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum AnyGrid<'a> {
    Radial(&'a RadialGrid),
    Cartesian(&'a CartesianGrid),
}

impl<'a> From<&'a RadialGrid> for AnyGrid<'a> {
    fn from(g: &'a RadialGrid) -> Self {
        AnyGrid::Radial(g)
    }
}

impl<'a> From<&'a CartesianGrid> for AnyGrid<'a> {
    fn from(g: &'a CartesianGrid) -> Self {
        AnyGrid::Cartesian(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeAxisFit {
    pub lambdas: Vec<f64>,
    pub norms: Vec<f64>,
    pub delta: f64,
    pub c_delta: f64,
    /// Smallest `M₀` on the scan with `‖R₀(λ)V‖ < 1` for all `λ ≤ -M₀`.
    pub m0: Option<f64>,
}

/// `‖R₀(λ)V‖_{L^∞→L^∞}` on a negative-λ scan, fitted to `δ + C_δ/√|λ|`.
pub fn negative_axis_diagnostic(grid: &RadialGrid, v: &PotentialSpec, lambdas: &[f64]) -> Result<NegativeAxisFit> {
    if lambdas.iter().any(|&l| !(l < 0.0)) {
        return Err(LabError::InvalidArgument("negative-axis scan needs lambda < 0".into()));
    }
    let mut lambdas = lambdas.to_vec();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let norms: Vec<f64> = lambdas
        .iter()
        .map(|&l| assemble_r0v(grid, v, &SpectralPoint::plus(l, 0.0)).map(|op| op.opnorm_linf()))
        .collect::<Result<_>>()?;
    let x: Vec<f64> = lambdas.iter().map(|l| 1.0 / (-l).sqrt()).collect();
    let (delta, c_delta) = nonneg_linear_fit(&x, &norms);
    // lambdas descend towards -∞
    let mut m0 = None;
    for k in (0..lambdas.len()).rev() {
        if norms[k] < 1.0 {
            m0 = Some(-lambdas[k]);
        } else {
            break;
        }
    }
    Ok(NegativeAxisFit {
        lambdas,
        norms,
        delta,
        c_delta,
        m0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedResolventScan {
    pub lambdas: Vec<f64>,
    pub norms: Vec<f64>,
    /// `max √λ · norm` over the scan.
    pub envelope_c: f64,
    /// Slope of `log norm` against `log λ`.
    pub slope: f64,
}

/// `‖⟨x⟩^{-s} R₀(λ±iε) ⟨x⟩^{-s}‖_{L²→L²}` restricted to radial functions.
pub fn weighted_resolvent_norm(grid: &RadialGrid, lambda: f64, eps: f64, s: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(s > 0.5) {
        return Err(LabError::InvalidArgument(
            "weighted resolvent needs lambda > 0 and s > 1/2".into(),
        ));
    }
    let op = assemble_r0(grid, &SpectralPoint::plus(lambda, eps))?;
    let w = grid.weights();
    let bracket: Vec<f64> = grid.nodes().iter().map(|r| (1.0 + r * r).powf(-0.5 * s)).collect();
    let n = grid.len();
    // unitary change to the Euclidean ℓ² pairing: W^{1/2} D M D W^{-1/2}
    let m = DMatrix::from_fn(n, n, |i, j| {
        op.matrix[(i, j)] * (bracket[i] * bracket[j] * (w[i] / w[j]).sqrt())
    });
    let svd = m.svd(false, false);
    Ok(svd.singular_values.iter().copied().fold(0.0, f64::max))
}

pub fn weighted_resolvent_diagnostic(
    grid: &RadialGrid,
    lambdas: &[f64],
    eps: f64,
    s: f64,
) -> Result<WeightedResolventScan> {
    let norms: Vec<f64> = lambdas
        .iter()
        .map(|&l| weighted_resolvent_norm(grid, l, eps, s))
        .collect::<Result<_>>()?;
    let envelope_c = lambdas
        .iter()
        .zip(&norms)
        .map(|(l, n)| l.sqrt() * n)
        .fold(0.0, f64::max);
    let lx: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let ly: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
    let (_, slope) = linear_fit(&lx, &ly);
    Ok(WeightedResolventScan {
        lambdas: lambdas.to_vec(),
        norms,
        envelope_c,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    #[test]
    fn lambda_eps_examples() {
        assert_eq!(lambda_eps(3.0, 4.0), 4.0);
        assert_eq!(lambda_eps(2.5, 0.0), 2.5);
        assert_eq!(lambda_eps(-4.0, 0.0), 0.0);
        // cancellation-free branch agrees with the direct formula
        let direct = 0.5 * (-3.0 + (9.0f64 + 0.01).sqrt());
        assert!((lambda_eps(-3.0, 0.1) - direct).abs() < 1e-15);
    }

    #[test]
    fn kappa_squares_to_z() {
        for &(l, e) in &[(1.0, 0.0), (4.0, 0.3), (-2.0, 0.0), (-2.0, 0.5), (0.0, 1.0)] {
            for z in [SpectralPoint::plus(l, e), SpectralPoint::minus(l, e)] {
                let k = z.kappa();
                assert!((k * k - z.z()).norm() < 1e-12, "{z:?}");
                assert!(k.im >= 0.0);
            }
        }
    }

    #[test]
    fn free_kernel_examples() {
        let o = [0.0; 3];
        let k = free_kernel(o, [PI, 0.0, 0.0], &SpectralPoint::plus(1.0, 0.0)).unwrap();
        assert!((k - Complex64::new(-1.0 / (4.0 * PI * PI), 0.0)).norm() < 1e-15);
        let k = free_kernel(o, [1.0, 0.0, 0.0], &SpectralPoint::plus(-1.0, 0.0)).unwrap();
        assert!((k.re - (-1.0f64).exp() / (4.0 * PI)).abs() < 1e-15 && k.im == 0.0);
        let k = free_kernel(o, [0.0, 2.0, 0.0], &SpectralPoint::plus(0.0, 0.0)).unwrap();
        assert!((k.re - 1.0 / (8.0 * PI)).abs() < 1e-15);
        assert!(matches!(
            free_kernel(o, o, &SpectralPoint::plus(1.0, 0.0)),
            Err(LabError::SingularPoint)
        ));
    }

    #[test]
    fn squared_kernel_examples() {
        let k = free_kernel_squared(0.0, &SpectralPoint::plus(1.0, 0.0)).unwrap();
        assert!((k.norm() - 1.0 / (8.0 * PI)).abs() < 1e-15);
        let z = SpectralPoint::plus(2.0, 0.5);
        assert!(free_kernel_squared(3.0, &z).unwrap().norm() < free_kernel_squared(1.0, &z).unwrap().norm());
        assert!(matches!(
            free_kernel_squared(1.0, &SpectralPoint::plus(0.0, 0.0)),
            Err(LabError::ZeroSpectralPoint)
        ));
    }

    #[test]
    fn squared_kernel_is_resolvent_derivative() {
        // d/dz of the free kernel along the negative axis
        let rho = 1.3;
        let z0 = -2.0;
        let d = 1e-5;
        let f = |l: f64| free_kernel([0.0; 3], [rho, 0.0, 0.0], &SpectralPoint::plus(l, 0.0)).unwrap();
        let fd = (f(z0 + d) - f(z0 - d)) / (2.0 * d);
        let exact = free_kernel_squared(rho, &SpectralPoint::plus(z0, 0.0)).unwrap();
        assert!((fd - exact).norm() < 1e-8 * exact.norm());
    }

    #[test]
    fn spectral_kernel_is_resolvent_jump() {
        for &(l, e, rho) in &[(1.0, 0.0, 0.7), (4.0, 0.1, 2.0), (16.0, 0.3, 0.05)] {
            let p = free_kernel([0.0; 3], [rho, 0.0, 0.0], &SpectralPoint::plus(l, e)).unwrap();
            let m = free_kernel([0.0; 3], [rho, 0.0, 0.0], &SpectralPoint::minus(l, e)).unwrap();
            assert!((p - m - spectral_kernel(rho, l, e)).norm() < 1e-13);
        }
        assert_eq!(spectral_kernel(1.0, 0.0, 0.0).norm(), 0.0);
        assert_eq!(spectral_kernel(1.0, -3.0, 0.0).norm(), 0.0);
    }

    /// `∫ k(|x - y|) g(|y|) dy` at `|x| = r` by brute-force quadrature in
    /// spherical coordinates centred at the origin.
    fn angular_oracle(k: impl Fn(f64) -> Complex64, g: impl Fn(f64) -> f64, r: f64, r_max: f64) -> Complex64 {
        let (mx, mw) = gauss_legendre(64);
        let radial = |s: f64| -> Complex64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (mu, w) in mx.iter().zip(&mw) {
                let rho = (r * r + s * s - 2.0 * r * s * mu).max(0.0).sqrt();
                acc += k(rho) * *w;
            }
            acc * (2.0 * PI * s * s * g(s))
        };
        // split at s = r where the angular integrand peaks
        let mut total = Complex64::new(0.0, 0.0);
        for (a, b) in [(0.0, r), (r, r_max)] {
            let re = integrate(|s| radial(s).re, a, b, 16, 200);
            let im = integrate(|s| radial(s).im, a, b, 16, 200);
            total += Complex64::new(re, im);
        }
        total
    }

    #[test]
    fn radial_reduction_matches_angular_quadrature() {
        let g = RadialGrid::uniform(400, 4.0).unwrap();
        let datum = |s: f64| (-s * s).exp();
        let f = g.sample(datum);
        for z in [
            SpectralPoint::plus(4.0, 0.0),
            SpectralPoint::minus(1.0, 0.2),
            SpectralPoint::plus(-1.0, 0.0),
        ] {
            let op = assemble_r0(&g, &z).unwrap();
            let u = op.apply(&f);
            for &i in &[0usize, 50, 200] {
                let r = g.nodes()[i];
                let oracle = angular_oracle(
                    |rho| (I * z.kappa() * rho).exp() / (4.0 * PI * rho.max(1e-300)),
                    datum,
                    r,
                    4.0,
                );
                assert!(
                    (u[i] - oracle).norm() < 1e-3 * oracle.norm(),
                    "{z:?} r={r}: {} vs {oracle}",
                    u[i]
                );
            }
        }
    }

    #[test]
    fn r0v_of_ball_at_origin_is_one_half() {
        let g = RadialGrid::uniform(1000, 2.0).unwrap();
        let op = assemble_r0v(&g, &PotentialSpec::ball_indicator(1.0), &SpectralPoint::plus(0.0, 0.0)).unwrap();
        let u = op.apply(&vec![1.0; g.len()]);
        // (R₀V1)(r) = 1/2 - r²/6 inside the ball
        let r0 = g.nodes()[0];
        assert!((u[0].re - (0.5 - r0 * r0 / 6.0)).abs() < 1e-9);
        assert!(u[0].im.abs() < 1e-15);
        assert!(assemble_r0v(&g, &PotentialSpec::Zero, &SpectralPoint::plus(1.0, 0.0))
            .unwrap()
            .matrix
            .iter()
            .all(|c| c.norm() == 0.0));
    }

    #[test]
    fn r0v_norm_within_kato_bound() {
        let g = RadialGrid::uniform(600, 3.0).unwrap();
        let depth = 0.9;
        let v = PotentialSpec::ball_well(1.0, depth);
        for &l in &[0.0, 1.0, 4.0, 25.0] {
            for e in [0.0, 0.1] {
                for z in [SpectralPoint::plus(l, e), SpectralPoint::minus(l, e)] {
                    let n = assemble_r0v(&g, &v, &z).unwrap().opnorm_linf();
                    assert!(n <= depth / 2.0 * (1.0 + 1e-9), "{z:?}: {n}");
                }
            }
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let g = RadialGrid::uniform(60, 3.0).unwrap();
        let a = assemble_r0(&g, &SpectralPoint::plus(2.0, 0.3)).unwrap();
        let b = assemble_r0(&g, &SpectralPoint::minus(2.0, 0.3)).unwrap();
        for (x, y) in a.matrix.iter().zip(b.matrix.iter()) {
            assert!((x - y.conj()).norm() <= 1e-15 * x.norm().max(1.0));
        }
    }

    #[test]
    fn resolvent_identity_on_smooth_data() {
        let g = RadialGrid::uniform(500, 20.0).unwrap();
        let z1 = SpectralPoint::plus(-1.0, 1.0);
        let z2 = SpectralPoint::plus(-2.0, 0.5);
        let a = assemble_r0(&g, &z1).unwrap();
        let b = assemble_r0(&g, &z2).unwrap();
        let f = g.sample(|r| (-r * r).exp());
        let lhs: Vec<Complex64> = a.apply(&f).iter().zip(b.apply(&f)).map(|(x, y)| x - y).collect();
        let bf = b.apply(&f);
        let abf = a.apply_complex(&bf);
        let dz = z1.z() - z2.z();
        let scale = lhs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        for i in 0..60 {
            assert!((lhs[i] - dz * abf[i]).norm() < 1e-4 * scale, "node {i}");
        }
    }

    #[test]
    fn spectral_measure_sup_norm() {
        let g = RadialGrid::uniform(2000, 4.0).unwrap();
        for &l in &[1.0, 4.0, 16.0] {
            for &e in &[0.0, 0.1] {
                let op = spectral_measure_free(&g, l, e).unwrap();
                let expected = lambda_eps(l, e).sqrt() / (2.0 * PI);
                assert!((op.opnorm_l1_linf() / expected - 1.0).abs() < 5e-3);
            }
        }
        assert!(spectral_measure_free(&g, 0.0, 0.0)
            .unwrap()
            .matrix
            .iter()
            .all(|c| c.norm() == 0.0));
        assert!(spectral_measure_free(&g, -2.0, 0.0)
            .unwrap()
            .matrix
            .iter()
            .all(|c| c.norm() == 0.0));
    }

    #[test]
    fn spectral_measure_is_difference_of_resolvents() {
        let g = RadialGrid::uniform(80, 4.0).unwrap();
        let d = spectral_measure_free(&g, 3.0, 0.2).unwrap();
        let p = assemble_r0(&g, &SpectralPoint::plus(3.0, 0.2)).unwrap();
        let m = assemble_r0(&g, &SpectralPoint::minus(3.0, 0.2)).unwrap();
        let diff = &p.matrix - &m.matrix;
        assert!((diff - &d.matrix).norm() < 1e-12 * d.matrix.norm());
    }

    #[test]
    fn r0_squared_sup_norm() {
        let g = RadialGrid::uniform(1500, 3.0).unwrap();
        for &l in &[1.0, 4.0] {
            let op = assemble_r0_squared(&g, &SpectralPoint::plus(l, 0.0)).unwrap();
            let expected = 1.0 / (8.0 * PI * l.sqrt());
            let measured = op.opnorm_l1_linf();
            assert!(measured <= expected * (1.0 + 1e-9));
            assert!(measured >= expected * (1.0 - 5e-3), "{measured} vs {expected}");
        }
        assert!(assemble_r0_squared(&g, &SpectralPoint::plus(0.0, 0.0)).is_err());
    }

    #[test]
    fn r0_squared_is_derivative_of_r0_matrix() {
        let g = RadialGrid::uniform(100, 5.0).unwrap();
        let l = -1.5;
        let d = 1e-5;
        let a = assemble_r0(&g, &SpectralPoint::plus(l + d, 0.0)).unwrap();
        let b = assemble_r0(&g, &SpectralPoint::plus(l - d, 0.0)).unwrap();
        let fd = (&a.matrix - &b.matrix) / Complex64::new(2.0 * d, 0.0);
        let sq = assemble_r0_squared(&g, &SpectralPoint::plus(l, 0.0)).unwrap();
        assert!((fd - &sq.matrix).norm() < 1e-6 * sq.matrix.norm());
    }

    #[test]
    fn resolution_rule_is_enforced() {
        let g = RadialGrid::uniform(10, 10.0).unwrap();
        match assemble_r0(&g, &SpectralPoint::plus(100.0, 0.0)) {
            Err(LabError::Unresolved { spacing, required }) => assert!(spacing > required),
            other => panic!("expected refusal, got {:?}", other.map(|o| o.dim())),
        }
        assert!(assemble_r0(&g, &SpectralPoint::plus(-100.0, 0.0)).is_ok());
        assert!((lambda_max(0.01) - (2.0 * PI * 10.0).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn cartesian_assembly_matches_radial_on_ball() {
        let cg = CartesianGrid::new(13, 1.5).unwrap();
        let v = PotentialSpec::ball_indicator(1.0);
        let op = assemble_r0v(&cg, &v, &SpectralPoint::plus(0.0, 0.0)).unwrap();
        let u = op.apply(&vec![1.0; cg.len()]);
        let centre = cg.index(6, 6, 6);
        // exact value 1/2 at the centre; coarse cube discretization of the sphere
        assert!((u[centre].re - 0.5).abs() < 0.05, "{}", u[centre].re);
        assert!(op.opnorm_linf() <= 0.5 * 1.1);
    }

    #[test]
    fn export_roundtrip() {
        let g = RadialGrid::uniform(7, 1.0).unwrap();
        let op = assemble_r0(&g, &SpectralPoint::plus(1.0, 0.1)).unwrap();
        let dir = std::env::temp_dir().join(format!("katolab-export-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let stem = dir.join("r0");
        op.export(&stem).unwrap();
        let back = KernelOperator::import_matrix(&stem).unwrap();
        assert_eq!(back, op.matrix);
        let meta: serde_json::Value =
            serde_json::from_slice(&std::fs::read(stem.with_extension("json")).unwrap()).unwrap();
        assert_eq!(meta["norm_tag"], "sup_to_sup");
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn negative_axis_decay() {
        let g = RadialGrid::uniform(300, 3.0).unwrap();
        let lambdas: Vec<f64> = crate::quad::logspace(0.1, 1e4, 12).iter().map(|x| -x).collect();
        let zero = negative_axis_diagnostic(&g, &PotentialSpec::Zero, &lambdas).unwrap();
        assert!(zero.norms.iter().all(|&n| n == 0.0));
        let fit = negative_axis_diagnostic(&g, &PotentialSpec::ball_well(1.0, 2.0), &lambdas).unwrap();
        for w in fit.norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(fit.norms.last().unwrap() < &0.05);
        assert!(fit.c_delta.is_finite() && fit.c_delta >= 0.0 && fit.delta >= 0.0);
        assert!(fit.m0.is_some());
    }

    #[test]
    fn weighted_resolvent_envelope() {
        let g = RadialGrid::uniform(400, 12.0).unwrap();
        let lambdas = [1.0, 4.0, 16.0];
        let scan = weighted_resolvent_diagnostic(&g, &lambdas, 0.0, 1.0).unwrap();
        let c = scan.envelope_c;
        for (l, n) in scan.lambdas.iter().zip(&scan.norms) {
            assert!(*n <= c / l.sqrt() * (1.0 + 1e-12));
        }
        // damping lowers the norm
        let damped = weighted_resolvent_norm(&g, 4.0, 0.5, 1.0).unwrap();
        assert!(damped < scan.norms[1]);
        // refinement stability
        let fine = RadialGrid::uniform(800, 12.0).unwrap();
        let a = weighted_resolvent_norm(&g, 1.0, 0.0, 1.0).unwrap();
        let b = weighted_resolvent_norm(&fine, 1.0, 0.0, 1.0).unwrap();
        assert!((a - b).abs() < 0.05 * b);
    }
}
