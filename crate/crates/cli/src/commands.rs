use anyhow::Result;
use katolab::besov::{equivalence_ratio, psi, BesovKind};
use katolab::grid::RadialGrid;
use katolab::potential::{
    c_n, check_hypotheses, heat_threshold, kato_report, lorentz_321_norm, self_adjoint_threshold, Margin,
};
use katolab::resolvent::{lambda_eps, lambda_max, spectral_measure_free};
use katolab::scattering::{resonance_scan, spectral_measure_perturbed};
use katolab::semigroup::{
    cross_block_scan, feynman_kac_mc, functional_calculus, kernel_bound_check, lplq_check, qt_and_khasminskii,
    DiscreteHamiltonian, PathEnsemble,
};
use katolab::wavelab::dispersive_ratio;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::{num, RunWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Kato norm, modulus of continuity and Lorentz L^{3/2,1} norm.
    KatoNorm,
    /// Margins of the decay theorem hypotheses.
    Hypotheses,
    /// Smallest singular value of I + R0(λ+i0)V over the λ scan.
    ResonanceScan,
    /// L1 -> L∞ norms of the free and perturbed spectral measures.
    SpectralMeasure,
    /// Pointwise heat kernel bound and L^p -> L^q norms.
    HeatCheck,
    /// Feynman-Kac and Khasminskii Monte Carlo checks.
    FkMc,
    /// Besov norm equivalence, functional calculus and cross-block scans.
    BesovEquiv,
    /// t ‖u(t)‖∞ / ‖f‖_B over the time scan.
    DispersiveRun,
    /// Every command above into one run directory.
    All,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::KatoNorm,
        Command::Hypotheses,
        Command::ResonanceScan,
        Command::SpectralMeasure,
        Command::HeatCheck,
        Command::FkMc,
        Command::BesovEquiv,
        Command::DispersiveRun,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::KatoNorm => "kato-norm",
            Command::Hypotheses => "hypotheses",
            Command::ResonanceScan => "resonance-scan",
            Command::SpectralMeasure => "spectral-measure",
            Command::HeatCheck => "heat-check",
            Command::FkMc => "fk-mc",
            Command::BesovEquiv => "besov-equiv",
            Command::DispersiveRun => "dispersive-run",
            Command::All => "all",
        }
    }
}

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub grid: RadialGrid,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        Ok(Self {
            cfg,
            grid: RadialGrid::uniform(cfg.grid.nodes, cfg.grid.r_max)?,
        })
    }

    fn split_radius(&self) -> f64 {
        self.cfg
            .split_radius
            .or_else(|| self.cfg.potential.support_radius())
            .unwrap_or(1.0)
            .min(self.grid.r_max())
    }

    fn data(&self) -> Vec<Vec<f64>> {
        self.cfg
            .besov
            .widths
            .iter()
            .map(|&w| self.grid.sample(|r| (-(r / w).powi(2)).exp()))
            .collect()
    }
}

/// One-line summary printed to stdout after the command.
pub fn run(cmd: Command, ctx: &Context, out: &mut RunWriter) -> Result<String> {
    match cmd {
        Command::KatoNorm => kato(ctx, out),
        Command::Hypotheses => hypotheses(ctx, out),
        Command::ResonanceScan => resonance(ctx, out),
        Command::SpectralMeasure => spectral(ctx, out),
        Command::HeatCheck => heat(ctx, out),
        Command::FkMc => fk(ctx, out),
        Command::BesovEquiv => besov(ctx, out),
        Command::DispersiveRun => dispersive(ctx, out),
        Command::All => {
            let mut lines = Vec::new();
            for c in Command::ALL {
                lines.push(format!("{}: {}", c.name(), run(c, ctx, out)?));
            }
            Ok(lines.join("\n"))
        }
    }
}

#[derive(Serialize)]
struct KatoOutput {
    kato_norm: f64,
    tail_bound: f64,
    class_verdict: bool,
    lorentz_321: f64,
    lorentz_tail_bound: f64,
    lorentz_truncated: bool,
    c3: f64,
    self_adjoint_threshold: f64,
    heat_threshold: f64,
}

fn kato(ctx: &Context, out: &mut RunWriter) -> Result<String> {
    let v = &ctx.cfg.potential;
    let h = ctx.grid.spacing();
    let radii: Vec<f64> = (0..12)
        .map(|k| 2.0 * h * 2f64.powi(k))
        .take_while(|&r| r <= 0.5 * ctx.grid.r_max())
        .collect();
    let rep = kato_report(v, &ctx.grid, &radii, ctx.cfg.tolerances.kato_class)?;
    let lor = lorentz_321_norm(v, &ctx.grid, ctx.cfg.tolerances.lorentz)?;
    out.csv(
        "kato_modulus.csv",
        &["r", "eta"],
        rep.modulus_samples.iter().map(|&(r, e)| vec![num(r), num(e)]).collect(),
    )?;
    let summary = KatoOutput {
        kato_norm: rep.kato_norm,
        tail_bound: rep.tail_bound,
        class_verdict: rep.class_verdict,
        lorentz_321: lor.value,
        lorentz_tail_bound: lor.tail_bound,
        lorentz_truncated: lor.truncated,
        c3: c_n(3)?,
        self_adjoint_threshold: self_adjoint_threshold(),
        heat_threshold: heat_threshold(),
    };
    out.json("kato_norm.json", "kato-norm", &summary)?;
    Ok(format!(
        "‖V‖_K = {:.6}, Kato class {}, ‖V‖_(3/2,1) = {:.6}",
        summary.kato_norm, summary.class_verdict, summary.lorentz_321
    ))
}

fn hypotheses(ctx: &Context, out: &mut RunWriter) -> Result<String> {
    let rep = check_hypotheses(&ctx.cfg.potential, ctx.split_radius(), &ctx.grid)?;
    let margin = |name: &str, m: &Margin| vec![name.to_string(), num(m.value), num(m.threshold), m.ok.to_string()];
    let rows = vec![
        margin("selfadjoint", &rep.selfadjoint),
        vec![
            "main_i".into(),
            String::new(),
            String::new(),
            rep.thm_main_i.to_string(),
        ],
        margin("main_ii", &rep.thm_main_ii),
        margin("main_iii", &rep.thm_main_iii),
        vec![
            "decay_exponent".into(),
            num(ctx.cfg.potential.decay_exponent()),
            "2".into(),
            rep.decay_exponent_check.to_string(),
        ],
        margin("heat", &rep.heat_ok),
        margin("heat_full", &rep.heat_full),
    ];
    out.csv("hypotheses.csv", &["condition", "value", "threshold", "ok"], rows)?;
    out.json("hypotheses.json", "hypotheses", &rep)?;
    Ok(format!(
        "main hypotheses {}, heat {}",
        if rep.main_ok() { "pass" } else { "fail" },
        if rep.heat_ok.ok { "pass" } else { "fail" }
    ))
}

#[derive(Serialize)]
struct ResonanceOutput {
    tau: f64,
    lambda_cap: f64,
    truncated: bool,
    dip_flag: bool,
    minima: Vec<katolab::scattering::Dip>,
}

fn resonance(ctx: &Context, out: &mut RunWriter) -> Result<String> {
    let scan = resonance_scan(
        &ctx.grid,
        &ctx.cfg.potential,
        &ctx.cfg.scan.lambda.values(),
        ctx.cfg.tolerances.resonance_tau,
    )?;
    let rows = (0..scan.lambdas.len())
        .map(|k| {
            vec![
                num(scan.lambdas[k]),
                num(scan.sigma_min[k]),
                num(scan.condition[k]),
                num(scan.neumann_norm[k]),
            ]
        })
        .collect();
    out.csv(
        "resonance_scan.csv",
        &["lambda", "sigma_min", "condition", "neumann_norm"],
        rows,
    )?;
    out.csv(
        "resonance_dips.csv",
        &["lambda", "sigma_min", "coarse_sigma_min", "floor"],
        scan.minima
            .iter()
            .map(|d| vec![num(d.lambda), num(d.sigma), num(d.coarse_sigma), d.floor.to_string()])
            .collect(),
    )?;
    let res = ResonanceOutput {
        tau: scan.tau,
        lambda_cap: scan.lambda_cap,
        truncated: scan.truncated,
        dip_flag: !scan.minima.is_empty(),
        minima: scan.minima,
    };
    out.json("resonance.json", "resonance-scan", &res)?;
    Ok(match res.minima.first() {
        Some(d) => format!("dip at lambda = {:.4e}, sigma_min = {:.3e}", d.lambda, d.sigma),
        None => "no dip below tau".into(),
    })
}

#[derive(Serialize)]
struct SpectralOutput {
    points: usize,
    skipped: Vec<f64>,
    c_min: f64,
    c_max: f64,
    free_max_rel_error: f64,
}

fn spectral(ctx: &Context, out: &mut RunWriter) -> Result<String> {
    let cap = lambda_max(ctx.grid.spacing());
    let (lambdas, skipped): (Vec<f64>, Vec<f64>) = ctx
        .cfg
        .scan
        .lambda
        .values()
        .into_iter()
        .partition(|&l| l > 0.0 && l <= cap);
    let mut rows = Vec::new();
    let (mut c_min, mut c_max, mut worst) = (f64::INFINITY, 0.0f64, 0.0f64);
    for &eps in &ctx.cfg.scan.eps {
        for &l in &lambdas {
            let le = lambda_eps(l, eps);
            let oracle = le.sqrt() / (2.0 * std::f64::consts::PI);
            let free = spectral_measure_free(&ctx.grid, l, eps)?.opnorm_l1_linf();
            let pert = spectral_measure_perturbed(&ctx.grid, &ctx.cfg.potential, l, eps)?.opnorm_l1_linf();
            let c = pert / le.sqrt();
            c_min = c_min.min(c);
            c_max = c_max.max(c);
            worst = worst.max((free - oracle).abs() / oracle);
            rows.push(vec![
                num(l),
                num(eps),
                num(le),
                num(free),
                num(oracle),
                num(pert),
                num(c),
            ]);
        }
    }
    out.csv(
        "spectral_measure.csv",
        &[
            "lambda",
            "eps",
            "lambda_eps",
            "free_norm",
            "free_oracle",
            "perturbed_norm",
            "c_fit",
        ],
        rows,
    )?;
    let res = SpectralOutput {
        points: lambdas.len() * ctx.cfg.scan.eps.len(),
        skipped,
        c_min,
        c_max,
        free_max_rel_error: worst,
    };
    out.json("spectral_measure.json", "spectral-measure", &res)?;
    Ok(format!("C in [{c_min:.4}, {c_max:.4}], free error {worst:.2e}"))
}

#[derive(Serialize)]
struct HeatOutput {
    negative_kato_norm: f64,
    kernel: Vec<katolab::semigroup::HeatKernelCheck>,
    lplq: Vec<katolab::semigroup::LpLqCheck>,
}

fn heat(ctx: &Context, out: &mut RunWriter) -> Result<String> {
    let h = DiscreteHamiltonian::assemble(&ctx.grid, &ctx.cfg.potential)?;
    let mut kernel = Vec::new();
    let mut lplq = Vec::new();
    for &t in &ctx.cfg.scan.heat_t {
        kernel.push(kernel_bound_check(&h, t)?);
        for (p, q) in [(1.0, f64::INFINITY), (2.0, 2.0), (1.0, 2.0), (2.0, f64::INFINITY)] {
            lplq.push(lplq_check(&h, t, p, q)?);
        }
    }
    out.csv(
        "heat_kernel.csv",
        &[
            "t",
            "max_violation",
            "max_ratio",
            "constant",
            "interior_nodes",
            "passed",
            "skipped",
        ],
        kernel
            .iter()
            .map(|k| {
                vec![
                    num(k.t),
                    num(k.max_violation),
                    num(k.max_ratio),
                    num(k.constant),
                    k.interior_nodes.to_string(),
                    k.passed.to_string(),
                    k.skipped.clone().unwrap_or_default(),
                ]
            })
            .collect(),
    )?;
    out.csv(
        "heat_lplq.csv",
        &["t", "p", "q", "measured", "bound", "passed"],
        lplq.iter()
            .map(|c| {
                vec![
                    num(c.t),
                    num(c.p),
                    num(c.q),
                    num(c.measured),
                    num(c.bound),
                    c.passed.to_string(),
                ]
            })
            .collect(),
    )?;
    let passed = kernel.iter().all(|k| k.passed) && lplq.iter().all(|c| c.passed);
    out.json(
        "heat_check.json",
        "heat-check",
        &HeatOutput {
            negative_kato_norm: h.negative_kato_norm,
            kernel,
            lplq,
        },
    )?;
    Ok(format!(
        "bounds {}",
        if passed { "hold" } else { "violated or skipped" }
    ))
}

#[derive(Serialize)]
struct FkOutput {
    khasminskii: katolab::semigroup::KhasminskiiReport,
    feynman_kac: Vec<katolab::semigroup::McEstimate>,
    grid_values: Vec<f64>,
    agree: bool,
}

fn fk(ctx: &Context, out: &mut RunWriter) -> Result<String> {
    let cfg = ctx.cfg;
    let v = &cfg.potential;
    let t = cfg.mc.horizon;
    let probes = &cfg.mc.probes;
    let kh = qt_and_khasminskii(&v.negative_part(), t, probes, &ctx.grid, cfg.mc.paths, cfg.seed)?;
    let h = DiscreteHamiltonian::assemble(&ctx.grid, v)?;
    let semigroup = h.heat_apply(t, &vec![1.0; ctx.grid.len()])?;
    let ensemble = PathEnsemble::new(cfg.mc.paths, t, cfg.seed);
    let mut fk = Vec::new();
    let mut grid_values = Vec::new();
    let mut rows = Vec::new();
    let mut agree = true;
    for (k, &r) in probes.iter().enumerate() {
        let mc = feynman_kac_mc(v, [r, 0.0, 0.0], &ensemble, None, cfg.tolerances.mc_stderr)?;
        let g = ctx.grid.interpolate(&semigroup, r);
        let ok = (mc.estimate - g).abs() <= 3.0 * mc.stderr + cfg.tolerances.mc_stderr;
        agree &= ok;
        let (qr, q) = kh.q_values[k];
        let i = kh.mc_integrals[k];
        let e = kh.mc_exponentials[k];
        rows.push(vec![
            num(qr),
            num(q),
            num(i.estimate),
            num(i.stderr),
            num(e.estimate),
            num(e.stderr),
            num(kh.bound),
            num(mc.estimate),
            num(mc.stderr),
            num(g),
            ok.to_string(),
        ]);
        fk.push(mc);
        grid_values.push(g);
    }
    out.csv(
        "fk_mc.csv",
        &[
            "r",
            "q_t",
            "mc_integral",
            "mc_integral_stderr",
            "mc_exponential",
            "mc_exponential_stderr",
            "khasminskii_bound",
            "feynman_kac",
            "feynman_kac_stderr",
            "grid_semigroup",
            "agree",
        ],
        rows,
    )?;
    let line = format!(
        "alpha = {:.4}, bound = {:.4}, MC vs grid {}",
        kh.alpha,
        kh.bound,
        if agree { "agree" } else { "disagree" }
    );
    out.json(
        "fk_mc.json",
        "fk-mc",
        &FkOutput {
            khasminskii: kh,
            feynman_kac: fk,
            grid_values,
            agree,
        },
    )?;
    Ok(line)
}

#[derive(Serialize)]
struct BesovOutput {
    equivalence: katolab::besov::EquivalenceReport,
    equivalence_spread: f64,
    calculus_norms: Vec<(f64, f64)>,
    calculus_spread: f64,
    cross_blocks: Option<katolab::semigroup::CrossBlockScan>,
}

fn besov(ctx: &Context, out: &mut RunWriter) -> Result<String> {
    let cfg = ctx.cfg;
    let v = &cfg.potential;
    let thetas = cfg.scan.theta.values();
    let fs = ctx.data();
    let eq = equivalence_ratio(
        &ctx.grid,
        &fs,
        cfg.besov.s,
        cfg.besov.q,
        v,
        &thetas,
        BesovKind::Homogeneous,
    )?;
    let mut rows = Vec::new();
    for (t, theta) in eq.thetas.iter().enumerate() {
        for (f, w) in cfg.besov.widths.iter().enumerate() {
            rows.push(vec![num(*theta), num(*w), num(eq.ratios[t][f])]);
        }
    }
    out.csv("besov_equivalence.csv", &["theta", "width", "ratio"], rows)?;
    let h = DiscreteHamiltonian::assemble(&ctx.grid, v)?;
    let calculus_norms: Vec<(f64, f64)> = thetas
        .iter()
        .map(|&theta| (theta, functional_calculus(&h, psi, theta).l1_norm(&ctx.grid)))
        .collect();
    let hi = calculus_norms.iter().map(|c| c.1).fold(0.0, f64::max);
    let lo = calculus_norms.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    out.csv(
        "functional_calculus.csv",
        &["theta", "l1_norm"],
        calculus_norms.iter().map(|&(t, n)| vec![num(t), num(n)]).collect(),
    )?;
    let js: Vec<i32> = (cfg.scan.j[0]..=cfg.scan.j[1]).collect();
    let cross = if eq.skipped.is_none() {
        let scan = cross_block_scan(&ctx.grid, v, &js, &js, &thetas)?;
        let mut rows = Vec::new();
        for (t, theta) in scan.thetas.iter().enumerate() {
            for (a, j) in scan.js.iter().enumerate() {
                for (b, k) in scan.ks.iter().enumerate() {
                    rows.push(vec![
                        num(*theta),
                        j.to_string(),
                        k.to_string(),
                        num(scan.ratios[t][a][b]),
                    ]);
                }
            }
        }
        out.csv("cross_blocks.csv", &["theta", "j", "k", "ratio"], rows)?;
        Some(scan)
    } else {
        None
    };
    let spread = if eq.skipped.is_none() { eq.spread() } else { f64::NAN };
    let line = match &eq.skipped {
        Some(reason) => format!("equivalence skipped: {reason}"),
        None => format!(
            "equivalence spread {:.4}, calculus spread {:.4}, cross-block C {:.4}",
            spread,
            hi / lo,
            cross.as_ref().map_or(f64::NAN, |c| c.fitted_c)
        ),
    };
    out.json(
        "besov_equiv.json",
        "besov-equiv",
        &BesovOutput {
            equivalence: eq,
            equivalence_spread: spread,
            calculus_norms,
            calculus_spread: hi / lo,
            cross_blocks: cross,
        },
    )?;
    Ok(line)
}

fn dispersive(ctx: &Context, out: &mut RunWriter) -> Result<String> {
    let cfg = ctx.cfg;
    let v = &cfg.potential;
    let h = DiscreteHamiltonian::assemble(&ctx.grid, v)?;
    let dip = if matches!(v, katolab::potential::PotentialSpec::Zero) {
        false
    } else {
        !resonance_scan(&ctx.grid, v, &cfg.scan.lambda.values(), cfg.tolerances.resonance_tau)?
            .minima
            .is_empty()
    };
    let times = cfg.scan.t.values();
    let rep = dispersive_ratio(&h, v, &ctx.data(), &times, dip)?;
    let mut rows = Vec::new();
    for (f, w) in cfg.besov.widths.iter().enumerate() {
        for (k, t) in rep.times.iter().enumerate() {
            rows.push(vec![
                num(*w),
                num(*t),
                num(rep.sup_norms[f][k]),
                num(rep.sup_norms_raw[f][k]),
                num(rep.besov_norms[f]),
                num(rep.ratios[f][k]),
            ]);
        }
    }
    out.csv(
        "dispersive.csv",
        &["width", "t", "sup_norm", "sup_norm_raw", "besov_norm", "ratio"],
        rows,
    )?;
    let flat = rep.flatness.iter().copied().fold(0.0, f64::max);
    let line = format!(
        "C* = {:.4}, flatness {:.4}{}",
        rep.c_star,
        flat,
        if rep.outside_theorem {
            ", outside the theorem"
        } else {
            ""
        }
    );
    out.json("dispersive.json", "dispersive-run", &rep)?;
    Ok(line)
}
