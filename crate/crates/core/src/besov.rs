//! Littlewood–Paley blocks `φ_j(√H)` on the discrete spectrum and the
//! associated `B^s_{1,q}` norms.
//!
//! The mother profile `ψ` equals 1 on `[0, 1]` and 0 on `[2, ∞)`, and
//! `φ₀(r) = ψ(r) - ψ(2r)` is supported in `[1/2, 2]`, so that
//! `Σ_{j=a}^{b} φ_j = ψ(2^{-b} r) - ψ(2^{1-a} r)` equals 1 on `[2^a, 2^b]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::RadialGrid;
use crate::potential::{heat_threshold, kato_norm, PotentialSpec};
use crate::semigroup::{sqrt_spectrum, DiscreteHamiltonian};

fn glue(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth cutoff: 1 for `r ≤ 1`, 0 for `r ≥ 2`.
pub fn psi(r: f64) -> f64 {
    let r = r.abs();
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let a = glue(2.0 - r);
    a / (a + glue(r - 1.0))
}

/// Derivative of [`psi`] for `r ≥ 0`.
pub fn psi_prime(r: f64) -> f64 {
    if r <= 1.0 || r >= 2.0 {
        return 0.0;
    }
    let (x, y) = (2.0 - r, r - 1.0);
    let (a, b) = (glue(x), glue(y));
    let da = -a / (x * x);
    let db = b / (y * y);
    (da * b - a * db) / ((a + b) * (a + b))
}

/// `ψ(r) - ψ(2r)`, supported in `[1/2, 2]`.
pub fn phi0(r: f64) -> f64 {
    psi(r) - psi(2.0 * r)
}

/// `φ_j(r) = φ₀(2^{-j} r)`.
pub fn phi_j(j: i32, r: f64) -> f64 {
    phi0(r * 2f64.powi(-j))
}

/// Low-frequency block of the non-homogeneous partition, `1 - Σ_{j≥0} φ_j = ψ(2r)`.
pub fn psi0(r: f64) -> f64 {
    psi(2.0 * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicPartition {
    pub j_min: i32,
    pub j_max: i32,
}

impl DyadicPartition {
    pub fn phi(&self, j: i32, r: f64) -> f64 {
        phi_j(j, r)
    }

    /// `φ̃_j = φ_{j-1} + φ_j + φ_{j+1}`.
    pub fn tilde(&self, j: i32, r: f64) -> f64 {
        phi_j(j - 1, r) + phi_j(j, r) + phi_j(j + 1, r)
    }

    pub fn sum(&self, r: f64) -> f64 {
        (self.j_min..=self.j_max).map(|j| phi_j(j, r)).sum()
    }

    /// Everything below the range, `ψ(2^{1-j_min} r)`.
    pub fn low(&self, r: f64) -> f64 {
        psi(r * 2f64.powi(1 - self.j_min))
    }

    /// Everything above the range, `1 - ψ(2^{-j_max} r)`.
    pub fn high(&self, r: f64) -> f64 {
        1.0 - psi(r * 2f64.powi(-self.j_max))
    }

    /// Interval on which the blocks sum to one.
    pub fn unity_interval(&self) -> (f64, f64) {
        (2f64.powi(self.j_min), 2f64.powi(self.j_max))
    }

    /// Largest `|Σ φ_j(r) - 1|` over `samples` log-spaced points of the unity interval.
    pub fn unity_defect(&self, samples: usize) -> f64 {
        let (a, b) = self.unity_interval();
        let (la, lb) = (a.ln(), b.ln());
        (0..samples)
            .map(|k| {
                let r = (la + (lb - la) * k as f64 / (samples.max(2) - 1) as f64).exp();
                (self.sum(r) - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn build_partition(j_min: i32, j_max: i32) -> Result<DyadicPartition> {
    if j_min >= j_max {
        return Err(LabError::InvalidArgument(format!(
            "partition needs j_min < j_max (got {j_min}, {j_max})"
        )));
    }
    let p = DyadicPartition { j_min, j_max };
    let defect = p.unity_defect(2001);
    if defect > 1e-12 {
        return Err(LabError::InvalidArgument(format!(
            "partition of unity defect {defect:.3e}"
        )));
    }
    Ok(p)
}

/// Blocks resolved by `grid`: `j_max = ⌊log₂(π/h)⌋ - 1`, `j_min = ⌈log₂(π/r_max)⌉`.
pub fn j_range_for(grid: &RadialGrid) -> (i32, i32) {
    let pi = std::f64::consts::PI;
    let j_max = (pi / grid.spacing()).log2().floor() as i32 - 1;
    let j_min = (pi / grid.r_max()).log2().ceil() as i32;
    (j_min, j_max.max(j_min + 1))
}

/// Range covering the whole nonnegative discrete spectrum of `h`.
fn spectral_range(h: &DiscreteHamiltonian) -> (i32, i32) {
    let positive = h.eigenvalues.iter().copied().filter(|&mu| mu > 0.0);
    let lo = positive.clone().fold(f64::INFINITY, f64::min).sqrt();
    let hi = positive.fold(0.0, f64::max).sqrt();
    if !lo.is_finite() || hi <= 0.0 {
        return (0, 1);
    }
    let j_min = lo.log2().floor() as i32;
    let j_max = (hi.log2().ceil() as i32).max(j_min + 1);
    (j_min, j_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Free,
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BesovKind {
    Homogeneous,
    Inhomogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesovProfile {
    pub kind: BesovKind,
    pub which: Which,
    /// `(j, ‖φ_j(√H) f‖_{L¹})`.
    pub coefficients: Vec<(i32, f64)>,
    /// `‖ψ₀(√H) f‖_{L¹}` for the non-homogeneous norm.
    pub low_block: Option<f64>,
    /// `L¹` norms of the parts of `f` below and above the block range.
    pub low_tail: f64,
    pub high_tail: f64,
    /// Range was widened beyond the grid default.
    pub widened: bool,
    /// Edge blocks still carry more than 1% after widening.
    pub flagged: bool,
}

fn lq_sum(terms: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        terms.fold(0.0, f64::max)
    } else {
        terms.map(|t| t.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

impl BesovProfile {
    /// `(Σ_j (2^{js} c_j)^q)^{1/q}`, plus the `ψ₀` block when non-homogeneous.
    pub fn norm(&self, s: f64, q: f64) -> f64 {
        let blocks = self.coefficients.iter().map(|&(j, c)| 2f64.powf(j as f64 * s) * c);
        lq_sum(blocks.chain(self.low_block), q)
    }

    /// Weighted size of the tails outside the block range.
    pub fn tail_estimate(&self, s: f64) -> f64 {
        let (a, b) = match (self.coefficients.first(), self.coefficients.last()) {
            (Some(&(a, _)), Some(&(b, _))) => (a, b),
            _ => return self.low_tail + self.high_tail,
        };
        let low = if self.low_block.is_some() {
            0.0
        } else {
            self.low_tail * 2f64.powf((a - 1) as f64 * s)
        };
        low + self.high_tail * 2f64.powf((b + 1) as f64 * s)
    }
}

fn which_of(h: &DiscreteHamiltonian) -> Which {
    if h.potential().iter().all(|&v| v == 0.0) {
        Which::Free
    } else {
        Which::Perturbed
    }
}

/// Block profile of `f` with respect to `√H` over an explicit range.
pub fn besov_profile_in(
    h: &DiscreteHamiltonian,
    f: &[f64],
    kind: BesovKind,
    j_min: i32,
    j_max: i32,
) -> Result<BesovProfile> {
    if f.len() != h.len() {
        return Err(LabError::InvalidArgument(format!(
            "datum has {} samples, grid has {}",
            f.len(),
            h.len()
        )));
    }
    let grid = h.grid();
    let c = h.coefficients(f);
    let mu: Vec<f64> = h.eigenvalues.iter().map(|&m| sqrt_spectrum(m)).collect();
    let block_norm = |g: &(dyn Fn(f64) -> f64 + Sync)| -> f64 {
        let ck: Vec<f64> = c.iter().zip(&mu).map(|(c, &m)| c * g(m)).collect();
        grid.l1_norm(&h.synthesize(&ck))
    };
    let j_lo = match kind {
        BesovKind::Homogeneous => j_min,
        BesovKind::Inhomogeneous => 0,
    };
    let coefficients: Vec<(i32, f64)> = (j_lo..=j_max)
        .into_par_iter()
        .map(|j| (j, block_norm(&move |m| phi_j(j, m))))
        .collect();
    let p = DyadicPartition { j_min: j_lo, j_max };
    let (low_block, low_tail) = match kind {
        BesovKind::Homogeneous => (None, block_norm(&|m| p.low(m))),
        BesovKind::Inhomogeneous => (Some(block_norm(&psi0)), 0.0),
    };
    let high_tail = block_norm(&|m| p.high(m));
    Ok(BesovProfile {
        kind,
        which: which_of(h),
        coefficients,
        low_block,
        low_tail,
        high_tail,
        widened: false,
        flagged: false,
    })
}

/// Block profile of `f` on the grid range, widened to the full spectrum when
/// the edges carry more than 1% of `‖f‖_{L¹}`.
pub fn besov_norm(h: &DiscreteHamiltonian, f: &[f64], kind: BesovKind) -> Result<BesovProfile> {
    let (a, b) = j_range_for(h.grid());
    let profile = besov_profile_in(h, f, kind, a, b)?;
    let scale = h.grid().l1_norm(f).max(f64::MIN_POSITIVE);
    if profile.low_tail + profile.high_tail <= 0.01 * scale {
        return Ok(profile);
    }
    let (sa, sb) = spectral_range(h);
    let mut wide = besov_profile_in(h, f, kind, a.min(sa), b.max(sb))?;
    wide.widened = true;
    wide.flagged = wide.low_tail + wide.high_tail > 0.01 * scale;
    if wide.flagged {
        log::warn!("Besov blocks miss {:.3e} of the datum", wide.low_tail + wide.high_tail);
    }
    Ok(wide)
}

/// Profile over the whole discrete spectrum.
pub fn besov_norm_full(h: &DiscreteHamiltonian, f: &[f64], kind: BesovKind) -> Result<BesovProfile> {
    let (a, b) = spectral_range(h);
    besov_profile_in(h, f, kind, a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub s: f64,
    pub q: f64,
    pub kind: BesovKind,
    pub thetas: Vec<f64>,
    /// `ratios[t][f]` = `‖f‖_{B(V_θ)} / ‖f‖_{B}`.
    pub ratios: Vec<Vec<f64>>,
    pub c_low: f64,
    pub c_high: f64,
    /// Reason the scan was not run.
    pub skipped: Option<String>,
}

impl EquivalenceReport {
    pub fn spread(&self) -> f64 {
        self.c_high / self.c_low
    }
}

/// Ratio of perturbed to free Besov norms over a datum set and the
/// rescaled potentials `V_θ(x) = θ V(√θ x)`.
pub fn equivalence_ratio(
    grid: &RadialGrid,
    fs: &[Vec<f64>],
    s: f64,
    q: f64,
    v: &PotentialSpec,
    thetas: &[f64],
    kind: BesovKind,
) -> Result<EquivalenceReport> {
    let mut report = EquivalenceReport {
        s,
        q,
        kind,
        thetas: thetas.to_vec(),
        ratios: Vec::new(),
        c_low: f64::NAN,
        c_high: f64::NAN,
        skipped: None,
    };
    let neg = kato_norm(&v.negative_part(), grid)?;
    if neg >= heat_threshold() {
        report.skipped = Some(format!("‖V-‖_K = {neg:.4} is not below π"));
        return Ok(report);
    }
    let free = DiscreteHamiltonian::free(grid)?;
    let free_norms = fs
        .iter()
        .map(|f| besov_norm_full(&free, f, kind).map(|p| p.norm(s, q)))
        .collect::<Result<Vec<_>>>()?;
    let ratios = thetas
        .par_iter()
        .map(|&theta| {
            let h = DiscreteHamiltonian::assemble(grid, &v.scaled(theta))?;
            fs.iter()
                .zip(&free_norms)
                .map(|(f, nf)| besov_norm_full(&h, f, kind).map(|p| p.norm(s, q) / nf))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let all = ratios.iter().flatten().copied();
    report.c_low = all.clone().fold(f64::INFINITY, f64::min);
    report.c_high = all.fold(0.0, f64::max);
    report.ratios = ratios;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleReport {
    pub k: i32,
    /// `‖S_λ f‖_{Ḃ(V)}`.
    pub lhs: f64,
    /// `λ^{s-3} ‖f‖_{Ḃ(V_{λ^{-2}})}`.
    pub rhs: f64,
    pub residual: f64,
    pub under_resolved: bool,
}

/// Dyadic rescaling identity for `S_λ f = f(λ ·)`, `λ = 2^k`, on one grid.
pub fn rescale_check(
    grid: &RadialGrid,
    v: &PotentialSpec,
    f: impl Fn(f64) -> f64,
    s: f64,
    q: f64,
    k: i32,
) -> Result<RescaleReport> {
    let lambda = 2f64.powi(k);
    let h = DiscreteHamiltonian::assemble(grid, v)?;
    let sf = grid.sample(|r| f(lambda * r));
    let lhs_profile = besov_norm_full(&h, &sf, BesovKind::Homogeneous)?;
    let lhs = lhs_profile.norm(s, q);
    let rhs = if k == 0 {
        lhs
    } else {
        let h2 = DiscreteHamiltonian::assemble(grid, &v.scaled(lambda.powi(-2)))?;
        let ff = grid.sample(&f);
        lambda.powf(s - 3.0) * besov_norm_full(&h2, &ff, BesovKind::Homogeneous)?.norm(s, q)
    };
    let scale = grid.l1_norm(&sf).max(f64::MIN_POSITIVE);
    let under_resolved = lhs_profile.coefficients.last().is_some_and(|&(_, c)| c > 0.01 * scale);
    if under_resolved {
        log::warn!("rescaled datum reaches the top block at k = {k}");
    }
    Ok(RescaleReport {
        k,
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE),
        under_resolved,
    })
}
