use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use katolab::potential::PotentialSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nodes: usize,
    pub r_max: f64,
}

/// `count` points from `start` to `stop`, geometric when `log` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub log: bool,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.start];
        }
        let n = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| {
                let x = k as f64 / n;
                if self.log {
                    self.start * (self.stop / self.start).powf(x)
                } else {
                    self.start + (self.stop - self.start) * x
                }
            })
            .collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !self.start.is_finite() || !self.stop.is_finite() || self.count == 0 {
            bail!("scan.{name}: start and stop must be finite and count positive");
        }
        if self.log && !(self.start > 0.0 && self.stop > 0.0) {
            bail!("scan.{name}: a log range needs positive endpoints");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub lambda: Range,
    pub t: Range,
    /// Inclusive `[j_min, j_max]`.
    pub j: [i32; 2],
    pub theta: Range,
    pub eps: Vec<f64>,
    /// Heat-kernel times.
    #[serde(default = "default_heat_t")]
    pub heat_t: Vec<f64>,
}

fn default_heat_t() -> Vec<f64> {
    vec![0.1, 0.5, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Kato-class verdict: `η(r_min) ≤ kato_class · max(‖V‖_K, 1)`.
    pub kato_class: f64,
    pub lorentz: f64,
    /// Dip threshold relative to the median `σ_min`.
    pub resonance_tau: f64,
    pub mc_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub paths: usize,
    pub horizon: f64,
    pub probes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesovConfig {
    pub s: f64,
    pub q: f64,
    /// Gaussian widths of the test data.
    pub widths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    /// Split radius for the hypothesis check, the support radius when absent.
    #[serde(default)]
    pub split_radius: Option<f64>,
    pub grid: GridConfig,
    pub scan: ScanConfig,
    pub tolerances: Tolerances,
    pub mc: McConfig,
    pub besov: BesovConfig,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ToleranceProfile {
    Fast,
    Strict,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("malformed config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.nodes < 8 || !(self.grid.r_max > 0.0) {
            bail!("grid: need at least 8 nodes and r_max > 0");
        }
        self.scan.lambda.validate("lambda")?;
        self.scan.t.validate("t")?;
        self.scan.theta.validate("theta")?;
        if self.scan.j[0] > self.scan.j[1] {
            bail!("scan.j: j_min exceeds j_max");
        }
        if self.scan.eps.iter().any(|&e| !(e >= 0.0)) {
            bail!("scan.eps: entries must be >= 0");
        }
        if self.scan.heat_t.iter().any(|&t| !(t > 0.0)) {
            bail!("scan.heat_t: entries must be > 0");
        }
        if self.mc.paths < 2 || !(self.mc.horizon > 0.0) {
            bail!("mc: need at least 2 paths and a positive horizon");
        }
        if self.besov.widths.iter().any(|&w| !(w > 0.0)) || self.besov.widths.is_empty() {
            bail!("besov.widths: need positive widths");
        }
        Ok(())
    }

    /// Coarser grid, fewer scan points and paths under `Fast`.
    pub fn with_profile(mut self, profile: ToleranceProfile) -> Self {
        if profile == ToleranceProfile::Fast {
            let n = self.grid.nodes.min(200);
            self.grid.r_max *= n as f64 / self.grid.nodes as f64;
            self.grid.nodes = n;
            for r in [&mut self.scan.lambda, &mut self.scan.t, &mut self.scan.theta] {
                r.count = r.count.div_ceil(2);
            }
            self.mc.paths = (self.mc.paths / 10).max(1000);
            self.tolerances.mc_stderr *= 10f64.sqrt();
        }
        self
    }

    /// SHA-256 of the canonical JSON form, without `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        // serde_json::Value keeps object keys sorted
        let value = serde_json::to_value(&c).expect("config serializes");
        let text = serde_json::to_string(&value).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn example() -> Self {
        Self {
            potential: PotentialSpec::ball_well(1.0, 0.4),
            split_radius: None,
            grid: GridConfig {
                nodes: 400,
                r_max: 16.0,
            },
            scan: ScanConfig {
                lambda: Range {
                    start: 0.25,
                    stop: 16.0,
                    count: 13,
                    log: true,
                },
                t: Range {
                    start: 1.0,
                    stop: 8.0,
                    count: 13,
                    log: true,
                },
                j: [-2, 2],
                theta: Range {
                    start: 0.0625,
                    stop: 16.0,
                    count: 9,
                    log: true,
                },
                eps: vec![0.0, 0.1],
                heat_t: default_heat_t(),
            },
            tolerances: Tolerances {
                kato_class: 0.05,
                lorentz: 1e-2,
                resonance_tau: 1e-2,
                mc_stderr: 1e-2,
            },
            mc: McConfig {
                paths: 20000,
                horizon: 0.5,
                probes: vec![0.0, 0.5, 1.5],
            },
            besov: BesovConfig {
                s: 1.0,
                q: 1.0,
                widths: vec![0.25, 0.35, 0.5],
            },
            seed: 7,
            output_dir: None,
        }
    }
}
