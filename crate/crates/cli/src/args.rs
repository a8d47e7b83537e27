//! Command-line flags and their TOML mirror.
//!
//! Every flag is optional at parse time so a `--config` file can supply it;
//! flags given on the command line win over the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "rankcorr", version, about = "Total, between- and within-cluster Spearman correlations")]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "RANKCORR_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the correlations on a clustered CSV file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study on a simulated scenario.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EstimateArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Column holding the cluster id.
    #[arg(long)]
    pub cluster: Option<String>,
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long)]
    pub y: Option<String>,
    /// Ordered levels of an ordinal `x`, lowest first: `low,mid,high`.
    #[arg(long)]
    pub x_levels: Option<String>,
    #[arg(long)]
    pub y_levels: Option<String>,
    #[arg(long, value_parser = ["probit", "logit", "loglog", "cloglog"])]
    pub link: Option<String>,
    /// `cluster` weighs clusters equally, `obs` observations.
    #[arg(long, value_parser = ["cluster", "obs"])]
    pub weights: Option<String>,
    /// `auto` is analytic with bootstrap where no analytic interval exists.
    #[arg(long, value_parser = ["auto", "analytic", "bootstrap", "none"])]
    pub ci: Option<String>,
    #[arg(long)]
    pub boot_reps: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = ["cpm", "nonparametric"])]
    pub psr: Option<String>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with any of the flags above (kebab-case keys).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// I, II, III, negpairs, ordinal5 or ordinal10.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho_b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho_w: Option<f64>,
    /// Number of clusters.
    #[arg(long)]
    pub n: Option<usize>,
    /// Cluster size `k` or uniform range `min:max`.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_parser = ["probit", "logit", "loglog", "cloglog"])]
    pub link: Option<String>,
    #[arg(long, value_parser = ["cluster", "obs"])]
    pub weights: Option<String>,
    #[arg(long, value_parser = ["auto", "analytic", "bootstrap", "none"])]
    pub ci: Option<String>,
    #[arg(long)]
    pub boot_reps: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, value_parser = ["cpm", "nonparametric"])]
    pub psr: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo budget (observations) for truths without a closed form.
    #[arg(long)]
    pub mc_size: Option<usize>,
    /// Latent cluster means `mx,my`.
    #[arg(long, allow_hyphen_values = true)]
    pub mean_u: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

macro_rules! overlay {
    ($flags:expr, $file:expr; $($f:ident),+) => {{
        let (flags, file) = ($flags, $file);
        Self { $($f: flags.$f.or(file.$f),)+ config: flags.config }
    }};
}

impl EstimateArgs {
    /// Fills unset flags from the `--config` file.
    pub fn resolve_config(self) -> Result<Self, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file: Self = read_config(&path)?;
        Ok(overlay!(self, file; input, cluster, x, y, x_levels, y_levels, link, weights, ci, boot_reps, level, seed, psr, out))
    }
}

impl SimulateArgs {
    pub fn resolve_config(self) -> Result<Self, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file: Self = read_config(&path)?;
        Ok(overlay!(self, file; scenario, rho_b, rho_w, n, k, reps, link, weights, ci, boot_reps, level, psr, seed, mc_size, mean_u, out))
    }
}
