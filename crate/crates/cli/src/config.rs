//! Resolved run configuration: defaults, then config-file values, then
//! command-line flags, in that precedence order. The resolved struct is
//! echoed into every output file for provenance.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    DiagnoseBasis,
    Bell,
    Cluster,
    TeleportOne,
    TeleportFull,
    Scan,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::DiagnoseBasis => "diagnose-basis",
            CommandKind::Bell => "bell",
            CommandKind::Cluster => "cluster",
            CommandKind::TeleportOne => "teleport-one",
            CommandKind::TeleportFull => "teleport-full",
            CommandKind::Scan => "scan",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineSel {
    Ideal,
    Cv,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelSel {
    Subspace,
    Heterodyne,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Fully resolved configuration for one invocation.
#[derive(Clone, Debug, Serialize)]
pub struct ScanConfig {
    pub command: CommandKind,
    pub d_list: Vec<usize>,
    /// Coherent amplitudes given as magnitudes; one shared phase below.
    pub alpha_list: Vec<f64>,
    pub alpha_phase_deg: f64,
    pub engine: EngineSel,
    pub model: ModelSel,
    pub trials: usize,
    pub seed: u64,
    pub margin_sigmas: f64,
    pub hard_cap: usize,
    pub tail_tolerance: f64,
    /// Cells whose smallest d-scaled sector weight falls below this are
    /// reported as skipped rather than simulated.
    pub min_sector_weight: f64,
    pub grid_points: usize,
    pub grid_radius_sigmas: f64,
    pub cluster_sites: usize,
    pub cluster_edges: Vec<(usize, usize)>,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

/// Values a TOML config file may supply; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub d: Option<Vec<usize>>,
    pub alpha: Option<Vec<f64>>,
    pub alpha_phase_deg: Option<f64>,
    pub engine: Option<EngineSel>,
    pub model: Option<ModelSel>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub margin_sigmas: Option<f64>,
    pub hard_cap: Option<usize>,
    pub tail_tolerance: Option<f64>,
    pub min_sector_weight: Option<f64>,
    pub grid_points: Option<usize>,
    pub grid_radius_sigmas: Option<f64>,
    pub cluster_sites: Option<usize>,
    pub cluster_edges: Option<Vec<String>>,
    pub output: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

/// Option-valued mirror of the command-line flags.
#[derive(Debug, Default, clap::Args)]
pub struct CommonArgs {
    /// Qudit dimensions, comma separated (e.g. 2,4,8).
    #[arg(long = "d", value_delimiter = ',')]
    pub d: Option<Vec<usize>>,
    /// Coherent amplitude magnitudes, comma separated (e.g. 2,3,4,5).
    #[arg(long = "alpha", value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Phase of alpha in degrees (applies to every magnitude).
    #[arg(long)]
    pub alpha_phase_deg: Option<f64>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineSel>,
    #[arg(long, value_enum)]
    pub model: Option<ModelSel>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Base seed; QUDIT_OPTICS_SEED supplies the default.
    #[arg(long, env = "QUDIT_OPTICS_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub margin_sigmas: Option<f64>,
    #[arg(long)]
    pub hard_cap: Option<usize>,
    #[arg(long)]
    pub tail_tolerance: Option<f64>,
    #[arg(long)]
    pub min_sector_weight: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub grid_radius_sigmas: Option<f64>,
    /// Number of cluster sites (cluster command).
    #[arg(long)]
    pub cluster_sites: Option<usize>,
    /// Cluster edges as pairs like 0-1,1-2 (cluster command).
    #[arg(long, value_delimiter = ',')]
    pub cluster_edges: Option<Vec<String>>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// TOML config file; flags override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_edges(raw: &[String]) -> Result<Vec<(usize, usize)>> {
    raw.iter()
        .map(|s| {
            let (a, b) = s
                .split_once('-')
                .with_context(|| format!("edge '{s}' must look like 0-1"))?;
            Ok((a.trim().parse()?, b.trim().parse()?))
        })
        .collect()
}

/// Merge defaults, file values, and flags into a validated config.
pub fn resolve(command: CommandKind, args: &CommonArgs) -> Result<ScanConfig> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("malformed config file {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let cluster_edges_raw = args
        .cluster_edges
        .clone()
        .or(file.cluster_edges)
        .unwrap_or_else(|| vec!["0-1".into(), "1-2".into()]);
    let cluster_sites = args.cluster_sites.or(file.cluster_sites).unwrap_or(3);

    let cfg = ScanConfig {
        command,
        d_list: args.d.clone().or(file.d).unwrap_or_else(|| vec![4]),
        alpha_list: args.alpha.clone().or(file.alpha).unwrap_or_else(|| vec![5.0]),
        alpha_phase_deg: args.alpha_phase_deg.or(file.alpha_phase_deg).unwrap_or(0.0),
        engine: args.engine.or(file.engine).unwrap_or(EngineSel::Cv),
        model: args.model.or(file.model).unwrap_or(ModelSel::Subspace),
        trials: args.trials.or(file.trials).unwrap_or(100),
        seed: args.seed.or(file.seed).unwrap_or(42),
        margin_sigmas: args.margin_sigmas.or(file.margin_sigmas).unwrap_or(8.0),
        hard_cap: args.hard_cap.or(file.hard_cap).unwrap_or(256),
        tail_tolerance: args.tail_tolerance.or(file.tail_tolerance).unwrap_or(1e-10),
        min_sector_weight: args.min_sector_weight.or(file.min_sector_weight).unwrap_or(0.1),
        grid_points: args.grid_points.or(file.grid_points).unwrap_or(128),
        grid_radius_sigmas: args.grid_radius_sigmas.or(file.grid_radius_sigmas).unwrap_or(8.0),
        cluster_sites,
        cluster_edges: parse_edges(&cluster_edges_raw)?,
        output: args.output.clone().or(file.output),
        format: args.format.or(file.format).unwrap_or(OutputFormat::Csv),
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ScanConfig) -> Result<()> {
    if cfg.d_list.is_empty() {
        bail!("--d list is empty");
    }
    if cfg.alpha_list.is_empty() {
        bail!("--alpha list is empty");
    }
    if cfg.d_list.iter().any(|&d| d < 1) {
        bail!("every d must be >= 1");
    }
    if cfg.alpha_list.iter().any(|&a| !(a >= 0.0)) {
        bail!("every alpha magnitude must be >= 0");
    }
    if cfg.trials < 1 {
        bail!("--trials must be >= 1");
    }
    if !(cfg.min_sector_weight >= 0.0 && cfg.min_sector_weight < 1.0) {
        bail!("--min-sector-weight must be in [0, 1)");
    }
    Ok(())
}

/// FNV-1a over the canonical JSON of the resolved config.
pub fn config_hash(cfg: &ScanConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}
