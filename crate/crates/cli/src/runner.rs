//! Cell execution and output writing. A run is a cartesian scan over
//! (d, alpha, engine, model); each cell is simulated independently with a
//! seed derived from (base seed, cell index), and rows are written in the
//! fixed enumeration order so identical seeds give identical files.

use anyhow::{Context, Result};
use num_complex::Complex64;
use serde::Serialize;
use std::io::Write;
use std::time::Instant;

use qudit_optics::cv::codeword_subspace;
use qudit_optics::fock::{truncation_dim, TruncationPolicy};
use qudit_optics::measurement::{HeterodyneConfig, MeasModel};
use qudit_optics::protocols::{
    bell_pair_ideal, cv_bell_entropy, cv_cluster_fidelity, run_trials, Engine, InputSpec,
    ProtocolConfig, ProtocolDescriptor, ProtocolKind, TeleportRecord,
};
use qudit_optics::qudit::{ClusterGraph, QuditDims};
use qudit_optics::seed::derive_seed;

use crate::config::{config_hash, CommandKind, EngineSel, ModelSel, OutputFormat, ScanConfig};

pub const SCHEMA_VERSION: &str = "1";

/// Superset of per-cell metrics; commands select the columns they emit.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CellRow {
    pub d: usize,
    pub alpha_mag: f64,
    pub alpha_phase_deg: f64,
    pub engine: String,
    pub model: String,
    pub trials: usize,
    pub cell_seed: u64,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defect_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_gap_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_sector_balance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entanglement_entropy_nats: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_deficit_nats: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_fidelity_pre: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_fidelity_pre: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_fidelity_post: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_fidelity_post: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leakage_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leakage_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome_chi_square: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_trials: Option<usize>,
    pub errors: String,
    pub wall_time_ms: u128,
}

fn columns_for(command: CommandKind) -> Vec<&'static str> {
    let mut cols = vec![
        "d",
        "alpha_mag",
        "alpha_phase_deg",
        "engine",
        "model",
        "trials",
        "cell_seed",
        "config_hash",
        "n_max",
    ];
    match command {
        CommandKind::DiagnoseBasis => {
            cols.extend(["defect_max", "phase_gap_max", "min_sector_balance"]);
        }
        CommandKind::Bell => {
            cols.extend(["entanglement_entropy_nats", "entropy_deficit_nats", "leakage_mean"]);
        }
        CommandKind::Cluster => {
            cols.extend(["cluster_fidelity", "leakage_mean"]);
        }
        CommandKind::TeleportOne => {
            cols.extend([
                "mean_fidelity_pre",
                "min_fidelity_pre",
                "leakage_mean",
                "leakage_max",
                "outcome_chi_square",
                "failed_trials",
            ]);
        }
        CommandKind::TeleportFull => {
            cols.extend([
                "mean_fidelity_pre",
                "min_fidelity_pre",
                "mean_fidelity_post",
                "min_fidelity_post",
                "leakage_mean",
                "leakage_max",
                "outcome_chi_square",
                "failed_trials",
            ]);
        }
        CommandKind::Scan => {
            cols.extend([
                "defect_max",
                "phase_gap_max",
                "entanglement_entropy_nats",
                "mean_fidelity_pre",
                "min_fidelity_pre",
                "mean_fidelity_post",
                "min_fidelity_post",
                "leakage_mean",
                "leakage_max",
                "outcome_chi_square",
                "failed_trials",
            ]);
        }
    }
    cols.extend(["errors", "wall_time_ms"]);
    cols
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_value(row: &CellRow, col: &str) -> String {
    match col {
        "d" => row.d.to_string(),
        "alpha_mag" => format!("{}", row.alpha_mag),
        "alpha_phase_deg" => format!("{}", row.alpha_phase_deg),
        "engine" => row.engine.clone(),
        "model" => row.model.clone(),
        "trials" => row.trials.to_string(),
        "cell_seed" => row.cell_seed.to_string(),
        "config_hash" => row.config_hash.clone(),
        "n_max" => opt_usize(row.n_max),
        "defect_max" => opt_f64(row.defect_max),
        "phase_gap_max" => opt_f64(row.phase_gap_max),
        "min_sector_balance" => opt_f64(row.min_sector_balance),
        "entanglement_entropy_nats" => opt_f64(row.entanglement_entropy_nats),
        "entropy_deficit_nats" => opt_f64(row.entropy_deficit_nats),
        "cluster_fidelity" => opt_f64(row.cluster_fidelity),
        "mean_fidelity_pre" => opt_f64(row.mean_fidelity_pre),
        "min_fidelity_pre" => opt_f64(row.min_fidelity_pre),
        "mean_fidelity_post" => opt_f64(row.mean_fidelity_post),
        "min_fidelity_post" => opt_f64(row.min_fidelity_post),
        "leakage_mean" => opt_f64(row.leakage_mean),
        "leakage_max" => opt_f64(row.leakage_max),
        "outcome_chi_square" => opt_f64(row.outcome_chi_square),
        "failed_trials" => opt_usize(row.failed_trials),
        "errors" => row.errors.replace(',', ";"),
        "wall_time_ms" => row.wall_time_ms.to_string(),
        other => panic!("unknown column {other}"),
    }
}

fn chi_square_uniform(hist: &[u64]) -> f64 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let expected = total as f64 / hist.len() as f64;
    hist.iter()
        .map(|&o| {
            let diff = o as f64 - expected;
            diff * diff / expected
        })
        .sum()
}

struct CellSpec {
    d: usize,
    alpha: Complex64,
    alpha_mag: f64,
    engine: Option<Engine>,
    model: Option<MeasModel>,
    seed: u64,
}

fn engines_of(sel: EngineSel) -> Vec<Engine> {
    match sel {
        EngineSel::Ideal => vec![Engine::Ideal],
        EngineSel::Cv => vec![Engine::Cv],
        EngineSel::Both => vec![Engine::Ideal, Engine::Cv],
    }
}

fn models_of(sel: ModelSel) -> Vec<MeasModel> {
    match sel {
        ModelSel::Subspace => vec![MeasModel::SubspaceProjective],
        ModelSel::Heterodyne => vec![MeasModel::HeterodyneBin],
        ModelSel::Both => vec![MeasModel::SubspaceProjective, MeasModel::HeterodyneBin],
    }
}

fn engine_label(e: Option<Engine>) -> String {
    match e {
        Some(Engine::Ideal) => "ideal".into(),
        Some(Engine::Cv) => "cv".into(),
        None => "cv".into(),
    }
}

fn model_label(m: Option<MeasModel>) -> String {
    match m {
        Some(MeasModel::SubspaceProjective) => "subspace".into(),
        Some(MeasModel::HeterodyneBin) => "heterodyne".into(),
        None => "-".into(),
    }
}

/// Enumerate the cells of a command in their fixed output order.
fn enumerate_cells(cfg: &ScanConfig) -> Vec<CellSpec> {
    let phase = cfg.alpha_phase_deg.to_radians();
    let mut cells = Vec::new();
    let mut index = 0u64;
    let mut push = |cells: &mut Vec<CellSpec>, d, mag: f64, engine, model, index: &mut u64| {
        cells.push(CellSpec {
            d,
            alpha: Complex64::from_polar(mag, phase),
            alpha_mag: mag,
            engine,
            model,
            seed: derive_seed(cfg.seed, *index),
        });
        *index += 1;
    };
    for &d in &cfg.d_list {
        for &mag in &cfg.alpha_list {
            match cfg.command {
                CommandKind::DiagnoseBasis => push(&mut cells, d, mag, None, None, &mut index),
                CommandKind::Bell | CommandKind::Cluster => {
                    for e in engines_of(cfg.engine) {
                        push(&mut cells, d, mag, Some(e), None, &mut index);
                    }
                }
                CommandKind::TeleportOne | CommandKind::TeleportFull | CommandKind::Scan => {
                    for e in engines_of(cfg.engine) {
                        match e {
                            Engine::Ideal => push(&mut cells, d, mag, Some(e), None, &mut index),
                            Engine::Cv => {
                                for m in models_of(cfg.model) {
                                    push(&mut cells, d, mag, Some(e), Some(m), &mut index);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    cells
}

fn policy_of(cfg: &ScanConfig) -> TruncationPolicy {
    TruncationPolicy {
        margin_sigmas: cfg.margin_sigmas,
        hard_cap: cfg.hard_cap,
        tail_tolerance: cfg.tail_tolerance,
    }
}

fn heterodyne_of(cfg: &ScanConfig) -> HeterodyneConfig {
    HeterodyneConfig {
        grid_radius_sigmas: cfg.grid_radius_sigmas,
        grid_points_per_axis: cfg.grid_points,
    }
}

/// Basis diagnostics shared by every CV cell; also the feasibility gate.
fn cv_basis_metrics(cell: &CellSpec, cfg: &ScanConfig, row: &mut CellRow) -> Result<(), String> {
    let dims = QuditDims::new(cell.d).map_err(|e| e.to_string())?;
    let n_max = truncation_dim(cell.alpha, &policy_of(cfg)).map_err(|e| e.to_string())?;
    row.n_max = Some(n_max);
    let basis = codeword_subspace(dims, cell.alpha, n_max).map_err(|e| e.to_string())?;
    row.defect_max = Some(basis.max_defect());
    row.phase_gap_max = Some(basis.max_phase_gap());
    row.min_sector_balance = Some(basis.min_sector_balance());
    if basis.min_sector_balance() < cfg.min_sector_weight {
        return Err(format!(
            "skipped: min sector balance {:.3e} below threshold {}",
            basis.min_sector_balance(),
            cfg.min_sector_weight
        ));
    }
    Ok(())
}

fn run_cell(cell: &CellSpec, cfg: &ScanConfig, records: &mut Vec<TeleportRecord>) -> CellRow {
    let start = Instant::now();
    let mut row = CellRow {
        d: cell.d,
        alpha_mag: cell.alpha_mag,
        alpha_phase_deg: cfg.alpha_phase_deg,
        engine: engine_label(cell.engine),
        model: model_label(cell.model),
        trials: cfg.trials,
        cell_seed: cell.seed,
        config_hash: config_hash(cfg),
        ..CellRow::default()
    };
    if cfg.command == CommandKind::DiagnoseBasis {
        row.engine = "cv".into();
    }
    let outcome = compute_cell(cell, cfg, &mut row, records);
    if let Err(msg) = outcome {
        row.errors = msg;
    }
    row.wall_time_ms = start.elapsed().as_millis();
    row
}

fn compute_cell(
    cell: &CellSpec,
    cfg: &ScanConfig,
    row: &mut CellRow,
    records: &mut Vec<TeleportRecord>,
) -> Result<(), String> {
    let dims = QuditDims::new(cell.d).map_err(|e| e.to_string())?;
    let is_cv = matches!(cell.engine, Some(Engine::Cv) | None);
    match cfg.command {
        CommandKind::DiagnoseBasis => cv_basis_metrics(cell, cfg, row),
        CommandKind::Bell => {
            let max_entropy = (cell.d as f64).ln();
            match cell.engine.unwrap_or(Engine::Cv) {
                Engine::Ideal => {
                    let bell = bell_pair_ideal(dims).map_err(|e| e.to_string())?;
                    let s = bell.entanglement_entropy_nats(1).map_err(|e| e.to_string())?;
                    row.entanglement_entropy_nats = Some(s);
                    row.entropy_deficit_nats = Some(max_entropy - s);
                    row.leakage_mean = Some(0.0);
                    Ok(())
                }
                Engine::Cv => {
                    cv_basis_metrics(cell, cfg, row)?;
                    let (s, leak) =
                        cv_bell_entropy(dims, cell.alpha, &policy_of(cfg)).map_err(|e| e.to_string())?;
                    row.entanglement_entropy_nats = Some(s);
                    row.entropy_deficit_nats = Some(max_entropy - s);
                    row.leakage_mean = Some(leak);
                    Ok(())
                }
            }
        }
        CommandKind::Cluster => {
            let graph = ClusterGraph::new(cfg.cluster_sites, &cfg.cluster_edges)
                .map_err(|e| e.to_string())?;
            match cell.engine.unwrap_or(Engine::Cv) {
                Engine::Ideal => {
                    row.cluster_fidelity = Some(1.0);
                    row.leakage_mean = Some(0.0);
                    Ok(())
                }
                Engine::Cv => {
                    cv_basis_metrics(cell, cfg, row)?;
                    let (fid, leak) = cv_cluster_fidelity(&graph, dims, cell.alpha, &policy_of(cfg))
                        .map_err(|e| e.to_string())?;
                    row.cluster_fidelity = Some(fid);
                    row.leakage_mean = Some(leak);
                    Ok(())
                }
            }
        }
        CommandKind::TeleportOne | CommandKind::TeleportFull | CommandKind::Scan => {
            if is_cv {
                cv_basis_metrics(cell, cfg, row)?;
            }
            if cfg.command == CommandKind::Scan {
                let max_entropy = (cell.d as f64).ln();
                let s = if is_cv {
                    cv_bell_entropy(dims, cell.alpha, &policy_of(cfg))
                        .map_err(|e| e.to_string())?
                        .0
                } else {
                    bell_pair_ideal(dims)
                        .and_then(|b| b.entanglement_entropy_nats(1))
                        .map_err(|e| e.to_string())?
                };
                row.entanglement_entropy_nats = Some(s);
                row.entropy_deficit_nats = Some(max_entropy - s);
            }
            let kind = if cfg.command == CommandKind::TeleportOne {
                ProtocolKind::OneStep
            } else {
                ProtocolKind::FullTeleport
            };
            let engine = cell.engine.unwrap_or(Engine::Cv);
            let protocol_cfg = ProtocolConfig {
                dims,
                alpha: cell.alpha,
                engine,
                meas_model: cell.model.unwrap_or(MeasModel::SubspaceProjective),
                apply_corrections: kind == ProtocolKind::FullTeleport,
                truncation: policy_of(cfg),
                heterodyne: heterodyne_of(cfg),
            };
            let desc = ProtocolDescriptor {
                kind,
                cfg: protocol_cfg,
                input: InputSpec::RandomHaar,
                record_cap: if cfg.format == OutputFormat::Json { 32 } else { 0 },
            };
            let summary = run_trials(&desc, cfg.trials, cell.seed).map_err(|e| e.to_string())?;
            row.mean_fidelity_pre = Some(summary.mean_fidelity_pre);
            row.min_fidelity_pre = Some(summary.min_fidelity_pre);
            row.mean_fidelity_post = summary.mean_fidelity_post;
            row.min_fidelity_post = summary.min_fidelity_post;
            row.leakage_mean = Some(summary.mean_leakage);
            row.leakage_max = Some(summary.max_leakage);
            row.outcome_chi_square = Some(chi_square_uniform(&summary.outcome_histogram));
            row.failed_trials = Some(summary.failed_trials);
            records.extend(summary.records);
            if summary.failed_trials == cfg.trials {
                return Err("all trials failed".into());
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct JsonOutput<'a> {
    schema_version: &'static str,
    tool: &'static str,
    command: &'static str,
    config: &'a ScanConfig,
    config_hash: String,
    columns: Vec<&'static str>,
    rows: &'a [CellRow],
    records: &'a [TeleportRecord],
}

/// Execute the whole run; returns the number of failed cells and the total.
pub fn run(cfg: &ScanConfig) -> Result<(usize, usize)> {
    let cells = enumerate_cells(cfg);
    let mut rows = Vec::with_capacity(cells.len());
    let mut records = Vec::new();
    let mut failed = 0usize;
    for cell in &cells {
        let row = run_cell(cell, cfg, &mut records);
        if !row.errors.is_empty() {
            failed += 1;
        }
        rows.push(row);
    }

    let columns = columns_for(cfg.command);
    let mut out: Box<dyn Write> = match &cfg.output {
        Some(path) => Box::new(
            std::fs::File::create(path)
                .with_context(|| format!("cannot create {}", path.display()))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };
    match cfg.format {
        OutputFormat::Csv => {
            writeln!(out, "# qudit-optics {} schema v{}", cfg.command.name(), SCHEMA_VERSION)?;
            writeln!(out, "# config = {}", serde_json::to_string(cfg)?)?;
            writeln!(out, "# config_hash = {}", config_hash(cfg))?;
            writeln!(out, "{}", columns.join(","))?;
            for row in &rows {
                let fields: Vec<String> = columns.iter().map(|c| csv_value(row, c)).collect();
                writeln!(out, "{}", fields.join(","))?;
            }
        }
        OutputFormat::Json => {
            let doc = JsonOutput {
                schema_version: SCHEMA_VERSION,
                tool: "qudit-optics",
                command: cfg.command.name(),
                config: cfg,
                config_hash: config_hash(cfg),
                columns,
                rows: &rows,
                records: &records,
            };
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok((failed, rows.len()))
}
