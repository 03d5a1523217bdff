//! Run configuration: a JSON file whose values command-line flags override.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::solvers::SolverConfig;
use crate::spectral::ProbeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Deblur,
    Sisr,
    Poisson,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Deblur => "deblur",
            Task::Sisr => "sisr",
            Task::Poisson => "poisson",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deblur" => Ok(Task::Deblur),
            "sisr" => Ok(Task::Sisr),
            "poisson" => Ok(Task::Poisson),
            _ => Err(Error::Parse(format!("unknown task {s:?} (expected deblur, sisr or poisson)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: Task,
    /// Blur kernel file; the 3x3 binomial kernel when absent.
    pub kernel: Option<PathBuf>,
    pub mu: f64,
    /// Super-resolution factor.
    pub scale: usize,
    /// Poisson peak.
    pub peak: f64,
    /// Gaussian noise level (out of 255) added when synthesizing an observation.
    pub noise_sigma: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec { kind: Task::Deblur, kernel: None, mu: 0.04, scale: 2, peak: 20.0, noise_sigma: 12.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageFormat {
    Pgm,
    PfmTxt,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::PfmTxt => "pfm.txt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskSpec,
    pub denoiser: String,
    pub solver: SolverConfig,
    /// Observed image.
    pub input: Option<PathBuf>,
    /// Clean image from which an observation is synthesized.
    pub clean: Option<PathBuf>,
    /// Built-in phantom used as the clean image when no file is given.
    pub phantom: Option<String>,
    pub phantom_size: usize,
    /// Ground truth for PSNR/SSIM when an observation is given directly.
    pub truth: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub output_format: ImageFormat,
    pub seed: u64,
    /// Certify the denoiser before restoring, to feed the hypothesis report.
    pub certify: bool,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskSpec::default(),
            denoiser: "dct-shrink:t=0.05".into(),
            solver: SolverConfig::default(),
            input: None,
            clean: None,
            phantom: None,
            phantom_size: 64,
            truth: None,
            out_dir: PathBuf::from("out"),
            output_format: ImageFormat::PfmTxt,
            seed: 0,
            certify: true,
            probe: ProbeConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a JSON config; errors carry the line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Checks parameters and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.probe.validate()?;
        for (what, p) in [
            ("input", &self.input),
            ("clean", &self.clean),
            ("truth", &self.truth),
            ("kernel", &self.task.kernel),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::InvalidParameter(format!("{what} file {} does not exist", p.display())));
                }
            }
        }
        if self.input.is_none() && self.clean.is_none() && self.phantom.is_none() {
            return Err(Error::param("one of input, clean or phantom is required"));
        }
        if !(self.task.mu > 0.0) {
            return Err(Error::param("mu must be positive"));
        }
        if self.task.scale == 0 {
            return Err(Error::param("scale must be at least 1"));
        }
        if !(self.task.peak > 0.0) {
            return Err(Error::param("peak must be positive"));
        }
        if !(self.task.noise_sigma >= 0.0) {
            return Err(Error::param("noise_sigma must be nonnegative"));
        }
        Ok(())
    }

    /// Hash of every run parameter; the output directory is excluded.
    pub fn hash(&self) -> String {
        config_hash(&RunConfig { out_dir: PathBuf::new(), ..self.clone() })
    }
}

/// SHA-256 of the canonical JSON serialization.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_string(cfg).expect("configs serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Provenance stamped into every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Meta {
    pub fn new<T: Serialize>(cfg: &T, seed: u64) -> Self {
        Self::with_hash(config_hash(cfg), seed)
    }

    pub fn with_hash(config_hash: String, seed: u64) -> Self {
        Meta { config_hash, seed, version: env!("CARGO_PKG_VERSION").to_string() }
    }

    /// One-line form used in image and CSV comments.
    pub fn comment(&self) -> String {
        format!("pnpi {} config_hash={} seed={}", self.version, self.config_hash, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_hash_stability() {
        let cfg = RunConfig { phantom: Some("checkerboard".into()), ..RunConfig::default() };
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let other = RunConfig { seed: 1, ..cfg.clone() };
        assert_ne!(other.hash(), cfg.hash());
        let moved = RunConfig { out_dir: "elsewhere".into(), ..cfg.clone() };
        assert_eq!(moved.hash(), cfg.hash());
    }

    #[test]
    fn parse_errors_report_position() {
        let err = RunConfig::from_json("{\n  \"seed\": 1,\n  \"bogus\": 2\n}").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn validation_requires_a_source_and_existing_files() {
        assert!(RunConfig::default().validate().is_err());
        let cfg = RunConfig { input: Some("/nonexistent/x.pgm".into()), ..RunConfig::default() };
        assert!(cfg.validate().unwrap_err().to_string().contains("does not exist"));
    }
}
