//! Flat TOML run configuration merged with command-line overrides.

use crate::CliError;
use monfer_core::ensemble::{Engine, ProtocolConfig};
use monfer_core::model::{Boundary, ModelParams};
use monfer_core::num_complex::Complex64;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Keys accepted in a run configuration file. Model keys use the CSV column names.
#[derive(Clone, Debug, Default, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "L")]
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[serde(rename = "J1")]
    #[arg(long = "J1")]
    pub j1: Option<f64>,
    #[serde(rename = "J2_re")]
    #[arg(long = "J2-re")]
    pub j2_re: Option<f64>,
    #[serde(rename = "J2_im")]
    #[arg(long = "J2-im")]
    pub j2_im: Option<f64>,
    /// Density-density coupling per unordered nearest-neighbour pair.
    #[serde(rename = "V")]
    #[arg(long = "V")]
    pub v: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub n0: Option<f64>,
    /// open | periodic
    #[arg(long)]
    pub boundary: Option<String>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// gaussian | gaussian-dense | tdhf
    #[arg(long)]
    pub engine: Option<String>,
    /// Comma-separated observable ids (S1, S2, SN:<N>, C2, C4, KL:<q>, covG, mutinfo, Cx, Cq, gq).
    #[arg(long, value_delimiter = ',')]
    pub observables: Option<Vec<String>>,
    /// Output path; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// csv (ensemble summary) | jsonl (per-trajectory log)
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Final time; defaults to 100/gamma.
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub n_resample: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

/// Fully resolved simulation request.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub params: ModelParams,
    pub protocol: ProtocolConfig,
    pub observables: Vec<String>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub run_id: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(self, over: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfig { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(l, j1, j2_re, j2_im, v, gamma, n0, boundary, n_traj, seed, engine, observables, output, format, run_id, t_max, n_resample)
    }

    pub fn resolve(self) -> Result<Resolved, CliError> {
        let d = ModelParams::default();
        let boundary: Boundary = match &self.boundary {
            Some(b) => b.parse().map_err(CliError::Config)?,
            None => d.boundary,
        };
        let params = ModelParams {
            l: self.l.unwrap_or(d.l),
            j1: self.j1.unwrap_or(d.j1),
            j2: Complex64::new(self.j2_re.unwrap_or(0.0), self.j2_im.unwrap_or(0.0)),
            v: self.v.unwrap_or(0.0),
            gamma: self.gamma.unwrap_or(d.gamma),
            n0: self.n0.unwrap_or(d.n0),
            boundary,
        };
        params.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let engine: Engine = match &self.engine {
            Some(e) => e.parse().map_err(|e: monfer_core::Error| CliError::Config(e.to_string()))?,
            None => Engine::Gaussian,
        };
        let mut protocol =
            ProtocolConfig::standard(params.gamma, self.n_traj.unwrap_or(4), self.seed.unwrap_or(0), engine);
        if let Some(t) = self.t_max {
            protocol.t_max = t;
        }
        if let Some(n) = self.n_resample {
            protocol.n_resample = n;
        }
        protocol.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let format = match self.format.as_deref() {
            None | Some("csv") => Format::Csv,
            Some("jsonl") => Format::Jsonl,
            Some(f) => return Err(CliError::Config(format!("unknown format '{f}'"))),
        };
        Ok(Resolved {
            params,
            protocol,
            observables: self.observables.unwrap_or_else(|| vec!["S1".into(), "C2".into()]),
            output: self.output,
            format,
            run_id: self.run_id.unwrap_or_else(|| "run".into()),
        })
    }
}
