//! Monte-Carlo experiment front end: baseline variants, paired sweeps over
//! one scenario parameter, deterministic CSV persistence, and SVG line
//! plots with error bars.
//!
//! Result CSV column order (one row per variant × swept value × seed):
//! `variant, parameter, value, seed, sum_rate_bps_hz, dl_rate_bps_hz,
//! ul_rate_bps_hz, iterations, converged`. Floats are written in the
//! shortest form that parses back to the same bits, so re-ingesting a
//! results file reproduces every aggregate exactly.
//!
//! Sweeps use a paired design: the channel realization for seed index `i`
//! depends only on the sweep's seed base and `i` — never on the variant or
//! the swept value — so every variant (and every value of a
//! realization-neutral parameter) is compared on identical channels.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ao::{self, AoTrace, VariantMask};
use crate::channel::{ChannelSet, PositionSet, ScenarioRealization};
use crate::metrics::{self, OptState, RateReport, StateError};
use crate::scenario::{ConfigError, ScenarioConfig};
use crate::{C64, CVec, RVec};

/// Errors from configuration ingestion, sweep execution and file output.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("sweep has an empty value list")]
    EmptyValues,
    #[error("sweep has an empty variant list; valid variants: {0}")]
    EmptyVariants(String),
    #[error("sweep needs at least one realization")]
    ZeroRealizations,
    #[error("unknown variant {given:?}; valid variants: {valid}")]
    UnknownVariant { given: String, valid: String },
    #[error("unknown swept parameter {given:?}; valid parameters: {valid}")]
    UnknownParameter { given: String, valid: String },
    #[error("unknown preset {given:?}; valid presets: {valid}")]
    UnknownPreset { given: String, valid: String },
    #[error("{parameter} cannot take the value {value}: {reason}")]
    BadValue {
        parameter: &'static str,
        value: f64,
        reason: String,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("snapshot is inconsistent: {0}")]
    SnapshotShape(String),
    #[error("result table is empty")]
    EmptyTable,
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, message: impl ToString) -> HarnessError {
    HarnessError::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Variants
// ---------------------------------------------------------------------------

/// Benchmark variants: movable (`ma`) vs. fixed (`fa`) BS antennas crossed
/// with movable (`me`) vs. fixed (`fe`) surface-element positions, plus
/// half-duplex (`hd`) references. Fixing elements freezes their positions
/// only — phases are optimized in every variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    MaMe,
    FaMe,
    MaFe,
    FaFe,
    MaMeHd,
    FaFeHd,
}

impl Variant {
    /// Every variant, in presentation order.
    pub const ALL: [Variant; 6] = [
        Variant::MaMe,
        Variant::FaMe,
        Variant::MaFe,
        Variant::FaFe,
        Variant::MaMeHd,
        Variant::FaFeHd,
    ];

    /// Stable lowercase name used in CSV and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Variant::MaMe => "ma-me",
            Variant::FaMe => "fa-me",
            Variant::MaFe => "ma-fe",
            Variant::FaFe => "fa-fe",
            Variant::MaMeHd => "ma-me-hd",
            Variant::FaFeHd => "fa-fe-hd",
        }
    }

    /// Which optimization blocks this variant runs.
    pub fn mask(self) -> VariantMask {
        match self {
            Variant::MaMe | Variant::MaMeHd => VariantMask::full(),
            Variant::FaMe => VariantMask::fixed_antennas(),
            Variant::MaFe => VariantMask::fixed_elements(),
            Variant::FaFe | Variant::FaFeHd => VariantMask::fixed_antennas_fixed_elements(),
        }
    }

    /// Half-duplex variants run with the loopback residual forced to zero
    /// and report the orthogonal-slot rate instead of the full-duplex one.
    pub fn half_duplex(self) -> bool {
        matches!(self, Variant::MaMeHd | Variant::FaFeHd)
    }

    /// Comma-separated list of all valid names, for error messages.
    pub fn valid_names() -> String {
        Variant::ALL
            .iter()
            .map(|v| v.name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl FromStr for Variant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| HarnessError::UnknownVariant {
                given: s.to_string(),
                valid: Variant::valid_names(),
            })
    }
}

// ---------------------------------------------------------------------------
// Swept parameters
// ---------------------------------------------------------------------------

/// The scenario parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Number of surface elements N (values must be whole numbers).
    RisElements,
    /// Residual self-interference factor η.
    SiResidual,
    /// BS transmit power budget in dBm.
    PowerBsDbm,
    /// Full- vs. half-duplex comparison: values set η like
    /// [`SweepParameter::SiResidual`], the variant list carries the
    /// duplex split.
    Duplex,
}

impl SweepParameter {
    /// Every parameter, in presentation order.
    pub const ALL: [SweepParameter; 4] = [
        SweepParameter::RisElements,
        SweepParameter::SiResidual,
        SweepParameter::PowerBsDbm,
        SweepParameter::Duplex,
    ];

    /// Stable name used in CSV and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::RisElements => "ris-elements",
            SweepParameter::SiResidual => "si-residual",
            SweepParameter::PowerBsDbm => "power-bs-dbm",
            SweepParameter::Duplex => "duplex",
        }
    }

    /// Human-readable x-axis label.
    pub fn axis_label(self) -> &'static str {
        match self {
            SweepParameter::RisElements => "surface elements N",
            SweepParameter::SiResidual | SweepParameter::Duplex => {
                "residual self-interference factor"
            }
            SweepParameter::PowerBsDbm => "BS power budget (dBm)",
        }
    }

    /// Whether plots should place the values on a log axis.
    pub fn log_axis(self) -> bool {
        matches!(self, SweepParameter::SiResidual | SweepParameter::Duplex)
    }

    /// Comma-separated list of all valid names, for error messages.
    pub fn valid_names() -> String {
        SweepParameter::ALL
            .iter()
            .map(|p| p.name())
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// The base configuration with this parameter set to `value`; the
    /// result is re-validated.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, HarnessError> {
        let mut cfg = base.clone();
        match self {
            SweepParameter::RisElements => {
                if !(value >= 1.0) || value.fract() != 0.0 {
                    return Err(HarnessError::BadValue {
                        parameter: self.name(),
                        value,
                        reason: "element counts must be whole numbers ≥ 1".into(),
                    });
                }
                cfg.ris_elements = value as usize;
            }
            SweepParameter::SiResidual | SweepParameter::Duplex => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(HarnessError::BadValue {
                        parameter: self.name(),
                        value,
                        reason: "the residual factor must lie in [0, 1]".into(),
                    });
                }
                cfg.si_residual = value;
            }
            SweepParameter::PowerBsDbm => {
                cfg.power_bs_max_dbm = value;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepParameter {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepParameter::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| HarnessError::UnknownParameter {
                given: s.to_string(),
                valid: SweepParameter::valid_names(),
            })
    }
}

// ---------------------------------------------------------------------------
// Sweep specification
// ---------------------------------------------------------------------------

/// One Monte-Carlo experiment: which parameter to sweep, over which values,
/// for which variants, with how many paired channel realizations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub variants: Vec<Variant>,
    pub realizations: usize,
    #[serde(default = "ScenarioConfig::desk")]
    pub base: ScenarioConfig,
    #[serde(default)]
    pub seed_base: u64,
}

impl SweepSpec {
    /// Names accepted by [`SweepSpec::preset`].
    pub const PRESET_NAMES: [&'static str; 4] = ["ris-elements", "si-residual", "power-bs", "duplex"];

    /// The stock experiments: a four-variant element-count sweep and
    /// movable-vs-fixed comparisons over the loopback residual, the BS
    /// power budget, and the duplex mode.
    pub fn preset(name: &str, base: ScenarioConfig) -> Result<SweepSpec, HarnessError> {
        let (parameter, values, variants) = match name {
            "ris-elements" => (
                SweepParameter::RisElements,
                vec![8.0, 16.0, 32.0],
                vec![Variant::MaMe, Variant::FaMe, Variant::MaFe, Variant::FaFe],
            ),
            "si-residual" => (
                SweepParameter::SiResidual,
                vec![1e-10, 1e-8, 1e-6],
                vec![Variant::MaMe, Variant::FaFe],
            ),
            "power-bs" => (
                SweepParameter::PowerBsDbm,
                vec![30.0, 34.0, 37.0],
                vec![Variant::MaMe, Variant::FaFe],
            ),
            "duplex" => (
                SweepParameter::Duplex,
                vec![1e-10, 1e-8, 1e-6],
                vec![Variant::MaMe, Variant::MaMeHd],
            ),
            _ => {
                return Err(HarnessError::UnknownPreset {
                    given: name.to_string(),
                    valid: SweepSpec::PRESET_NAMES.join(", "),
                });
            }
        };
        Ok(SweepSpec {
            parameter,
            values,
            variants,
            realizations: 20,
            base,
            seed_base: 1,
        })
    }

    /// Checks list shapes and that every swept value yields a valid
    /// configuration.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.values.is_empty() {
            return Err(HarnessError::EmptyValues);
        }
        if self.variants.is_empty() {
            return Err(HarnessError::EmptyVariants(Variant::valid_names()));
        }
        if self.realizations == 0 {
            return Err(HarnessError::ZeroRealizations);
        }
        self.base.validate()?;
        for &value in &self.values {
            self.parameter.apply(&self.base, value)?;
        }
        Ok(())
    }
}

/// The channel-realization seed for sweep index `index`: a splitmix-style
/// mix of the seed base and the index, deliberately independent of variant
/// and swept value so comparisons are paired.
pub fn realization_seed(seed_base: u64, index: usize) -> u64 {
    let mut z = seed_base ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Single-cell execution
// ---------------------------------------------------------------------------

/// Everything produced by one optimization run.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    /// The configuration actually optimized (η zeroed for half-duplex
    /// variants).
    pub config: ScenarioConfig,
    /// Final operating point.
    pub state: OptState,
    /// Per-iteration history.
    pub trace: AoTrace,
    /// Full-duplex metrics of the final state under `config`.
    pub report: RateReport,
    /// Reported downlink rate: full-duplex for normal variants, the
    /// half-time orthogonal-slot rate for half-duplex ones.
    pub dl_rate_bps_hz: f64,
    /// Reported uplink rate, same convention.
    pub ul_rate_bps_hz: f64,
}

impl CellOutcome {
    /// Reported sum rate.
    pub fn sum_rate_bps_hz(&self) -> f64 {
        self.dl_rate_bps_hz + self.ul_rate_bps_hz
    }
}

/// Runs one (configuration, variant, seed) cell: samples the realization,
/// runs the alternating optimization with the variant's mask, and evaluates
/// the final state. Half-duplex variants optimize with η = 0 and report the
/// orthogonal-slot rates; the realization itself does not depend on η, so
/// they stay paired with their full-duplex siblings.
pub fn run_cell(
    cfg: &ScenarioConfig,
    variant: Variant,
    seed: u64,
) -> Result<CellOutcome, StateError> {
    let mut config = cfg.clone();
    if variant.half_duplex() {
        config.si_residual = 0.0;
    }
    let real = ScenarioRealization::sample(&config, seed);
    let run = ao::run(&config, &real, variant.mask(), seed)?;
    let ch = ChannelSet::build(&config, &real, &run.state.positions);
    let report = metrics::evaluate(&config, &ch, &run.state)?;
    let (dl, ul) = if variant.half_duplex() {
        metrics::half_duplex_rates(&config, &ch, &run.state)?
    } else {
        (report.rate_dl_bps_hz, report.rate_ul_bps_hz)
    };
    Ok(CellOutcome {
        config,
        state: run.state,
        trace: run.trace,
        report,
        dl_rate_bps_hz: dl,
        ul_rate_bps_hz: ul,
    })
}

// ---------------------------------------------------------------------------
// Result table
// ---------------------------------------------------------------------------

/// One completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub variant: Variant,
    pub parameter: SweepParameter,
    pub value: f64,
    pub seed: u64,
    pub sum_rate_bps_hz: f64,
    pub dl_rate_bps_hz: f64,
    pub ul_rate_bps_hz: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One failed run; the sweep records it and continues.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub variant: Variant,
    pub value: f64,
    pub seed: u64,
    pub message: String,
}

/// Per-(variant, value) summary of a result table.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub variant: Variant,
    pub value: f64,
    pub runs: usize,
    pub mean_sum_rate_bps_hz: f64,
    pub stderr_sum_rate_bps_hz: f64,
    pub mean_dl_rate_bps_hz: f64,
    pub mean_ul_rate_bps_hz: f64,
    pub converged_runs: usize,
}

/// All rows of a sweep plus any failures encountered along the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<RunFailure>,
}

/// Column order of the results CSV.
pub const RESULT_CSV_HEADER: [&str; 9] = [
    "variant",
    "parameter",
    "value",
    "seed",
    "sum_rate_bps_hz",
    "dl_rate_bps_hz",
    "ul_rate_bps_hz",
    "iterations",
    "converged",
];

impl ResultTable {
    /// Mean and standard error per (variant, value) cell, in
    /// first-appearance order of the rows. The standard error is the
    /// sample standard deviation over √n, zero for singleton cells.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut order: Vec<(Variant, f64)> = Vec::new();
        for row in &self.rows {
            let key = (row.variant, row.value);
            if !order.iter().any(|&k| k.0 == key.0 && k.1 == key.1) {
                order.push(key);
            }
        }
        order
            .into_iter()
            .map(|(variant, value)| {
                let cell: Vec<&ResultRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.variant == variant && r.value == value)
                    .collect();
                let n = cell.len();
                let mean =
                    |f: fn(&ResultRow) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / n as f64;
                let mean_sum = mean(|r| r.sum_rate_bps_hz);
                let stderr = if n > 1 {
                    let var = cell
                        .iter()
                        .map(|r| (r.sum_rate_bps_hz - mean_sum).powi(2))
                        .sum::<f64>()
                        / (n - 1) as f64;
                    (var / n as f64).sqrt()
                } else {
                    0.0
                };
                AggregateRow {
                    variant,
                    value,
                    runs: n,
                    mean_sum_rate_bps_hz: mean_sum,
                    stderr_sum_rate_bps_hz: stderr,
                    mean_dl_rate_bps_hz: mean(|r| r.dl_rate_bps_hz),
                    mean_ul_rate_bps_hz: mean(|r| r.ul_rate_bps_hz),
                    converged_runs: cell.iter().filter(|r| r.converged).count(),
                }
            })
            .collect()
    }

    /// Writes the rows as CSV in [`RESULT_CSV_HEADER`] order. Floats use
    /// the shortest representation that parses back to identical bits.
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
        w.write_record(RESULT_CSV_HEADER)
            .map_err(|e| parse_err(path, e))?;
        for r in &self.rows {
            w.write_record([
                r.variant.name().to_string(),
                r.parameter.name().to_string(),
                format!("{}", r.value),
                format!("{}", r.seed),
                format!("{}", r.sum_rate_bps_hz),
                format!("{}", r.dl_rate_bps_hz),
                format!("{}", r.ul_rate_bps_hz),
                format!("{}", r.iterations),
                format!("{}", r.converged),
            ])
            .map_err(|e| parse_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }

    /// Reads a results CSV written by [`ResultTable::write_csv`].
    pub fn read_csv(path: &Path) -> Result<ResultTable, HarnessError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| parse_err(path, e))?;
        let headers = reader.headers().map_err(|e| parse_err(path, e))?.clone();
        let expected: Vec<&str> = RESULT_CSV_HEADER.to_vec();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(parse_err(
                path,
                format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
            ));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| parse_err(path, e))?;
            let field = |i: usize| -> Result<&str, HarnessError> {
                record
                    .get(i)
                    .ok_or_else(|| parse_err(path, format!("row too short: {record:?}")))
            };
            let num = |i: usize| -> Result<f64, HarnessError> {
                field(i)?.parse().map_err(|e| parse_err(path, e))
            };
            rows.push(ResultRow {
                variant: field(0)?.parse()?,
                parameter: field(1)?.parse()?,
                value: num(2)?,
                seed: field(3)?.parse().map_err(|e| parse_err(path, e))?,
                sum_rate_bps_hz: num(4)?,
                dl_rate_bps_hz: num(5)?,
                ul_rate_bps_hz: num(6)?,
                iterations: field(7)?.parse().map_err(|e| parse_err(path, e))?,
                converged: field(8)?.parse().map_err(|e| parse_err(path, e))?,
            });
        }
        Ok(ResultTable {
            rows,
            failures: Vec::new(),
        })
    }
}

/// Writes the failure records of a sweep (variant, value, seed, message).
pub fn write_failures_csv(failures: &[RunFailure], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    w.write_record(["variant", "value", "seed", "message"])
        .map_err(|e| parse_err(path, e))?;
    for f in failures {
        w.write_record([
            f.variant.name().to_string(),
            format!("{}", f.value),
            format!("{}", f.seed),
            f.message.clone(),
        ])
        .map_err(|e| parse_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Sweep execution
// ---------------------------------------------------------------------------

/// Runs every (value, variant, realization) cell of the sweep. Cells
/// execute on the rayon pool; assembly order — and therefore every output
/// byte — is independent of scheduling. Individual run failures are
/// recorded and the sweep continues.
pub fn run_sweep(spec: &SweepSpec) -> Result<ResultTable, HarnessError> {
    spec.validate()?;
    let mut cells: Vec<(ScenarioConfig, f64, Variant, u64)> = Vec::new();
    for &value in &spec.values {
        let cfg = spec.parameter.apply(&spec.base, value)?;
        for &variant in &spec.variants {
            for index in 0..spec.realizations {
                cells.push((
                    cfg.clone(),
                    value,
                    variant,
                    realization_seed(spec.seed_base, index),
                ));
            }
        }
    }

    let outcomes: Vec<Result<ResultRow, RunFailure>> = cells
        .par_iter()
        .map(|(cfg, value, variant, seed)| match run_cell(cfg, *variant, *seed) {
            Ok(out) => Ok(ResultRow {
                variant: *variant,
                parameter: spec.parameter,
                value: *value,
                seed: *seed,
                sum_rate_bps_hz: out.sum_rate_bps_hz(),
                dl_rate_bps_hz: out.dl_rate_bps_hz,
                ul_rate_bps_hz: out.ul_rate_bps_hz,
                iterations: out.trace.iterations_run(),
                converged: out.trace.converged,
            }),
            Err(e) => Err(RunFailure {
                variant: *variant,
                value: *value,
                seed: *seed,
                message: e.to_string(),
            }),
        })
        .collect();

    let mut table = ResultTable::default();
    for outcome in outcomes {
        match outcome {
            Ok(row) => table.rows.push(row),
            Err(failure) => table.failures.push(failure),
        }
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Configuration and sweep files
// ---------------------------------------------------------------------------

/// Reads and validates a scenario configuration from a TOML file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let cfg: ScenarioConfig = toml::from_str(&text).map_err(|e| parse_err(path, e))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Writes a scenario configuration as TOML.
pub fn write_config(cfg: &ScenarioConfig, path: &Path) -> Result<(), HarnessError> {
    let text = toml::to_string_pretty(cfg).map_err(|e| parse_err(path, e))?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads and validates a sweep specification from a TOML file. The `base`
/// table is optional and defaults to the desk profile.
pub fn load_sweep(path: &Path) -> Result<SweepSpec, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let spec: SweepSpec = toml::from_str(&text).map_err(|e| parse_err(path, e))?;
    spec.validate()?;
    Ok(spec)
}

// ---------------------------------------------------------------------------
// Trace and snapshot export
// ---------------------------------------------------------------------------

/// Writes the per-iteration optimizer history as CSV: rates, SINRs,
/// feasibility flags, inner-solver statistics and trust radii per row.
pub fn write_trace_csv(trace: &AoTrace, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    w.write_record([
        "iteration",
        "sum_rate_bps_hz",
        "sinr_dl",
        "sinr_ul",
        "feasible",
        "qos_dl_ok",
        "qos_ul_ok",
        "beamformer_qos_ok",
        "power_feasible",
        "srocr_iterations",
        "trust_phase_rad",
        "trust_tx_m",
        "trust_rx_m",
        "trust_ris_m",
        "block_seconds",
    ])
    .map_err(|e| parse_err(path, e))?;
    for (row, seconds) in trace.rows.iter().zip(&trace.block_seconds) {
        w.write_record([
            format!("{}", row.iteration),
            format!("{}", row.sum_rate_bps_hz),
            format!("{}", row.sinr_dl),
            format!("{}", row.sinr_ul),
            format!("{}", row.feasibility.all()),
            format!("{}", row.feasibility.qos_dl_ok),
            format!("{}", row.feasibility.qos_ul_ok),
            format!("{}", row.beamformer_qos_ok),
            format!("{}", row.power_feasible),
            format!("{}", row.srocr_iterations),
            format!("{}", row.trust.phase_rad),
            format!("{}", row.trust.tx_m),
            format!("{}", row.trust.rx_m),
            format!("{}", row.trust.ris_m),
            format!("{}", seconds.iter().sum::<f64>()),
        ])
        .map_err(|e| parse_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// A plain-data image of an operating point for resume/debug, serialized
/// as TOML. Complex vectors are stored as separate real and imaginary
/// arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub ul_power_w: f64,
    pub beamformer_re: Vec<f64>,
    pub beamformer_im: Vec<f64>,
    pub combiner_re: Vec<f64>,
    pub combiner_im: Vec<f64>,
    pub phases_rad: Vec<f64>,
    pub tx_positions_m: Vec<[f64; 2]>,
    pub rx_positions_m: Vec<[f64; 2]>,
    pub ris_positions_m: Vec<[f64; 2]>,
}

impl Snapshot {
    /// Captures an operating point.
    pub fn from_state(st: &OptState) -> Snapshot {
        Snapshot {
            ul_power_w: st.ul_power_w,
            beamformer_re: st.beamformer.iter().map(|z| z.re).collect(),
            beamformer_im: st.beamformer.iter().map(|z| z.im).collect(),
            combiner_re: st.combiner.iter().map(|z| z.re).collect(),
            combiner_im: st.combiner.iter().map(|z| z.im).collect(),
            phases_rad: st.phases_rad.iter().copied().collect(),
            tx_positions_m: st.positions.tx.clone(),
            rx_positions_m: st.positions.rx.clone(),
            ris_positions_m: st.positions.ris.clone(),
        }
    }

    /// Rebuilds the operating point; fails if the paired real/imaginary
    /// arrays disagree in length.
    pub fn into_state(&self) -> Result<OptState, HarnessError> {
        let cvec = |re: &[f64], im: &[f64], name: &str| -> Result<CVec, HarnessError> {
            if re.len() != im.len() {
                return Err(HarnessError::SnapshotShape(format!(
                    "{name} has {} real but {} imaginary entries",
                    re.len(),
                    im.len()
                )));
            }
            Ok(CVec::from_iterator(
                re.len(),
                re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)),
            ))
        };
        Ok(OptState {
            beamformer: cvec(&self.beamformer_re, &self.beamformer_im, "beamformer")?,
            combiner: cvec(&self.combiner_re, &self.combiner_im, "combiner")?,
            ul_power_w: self.ul_power_w,
            phases_rad: RVec::from_vec(self.phases_rad.clone()),
            positions: PositionSet {
                tx: self.tx_positions_m.clone(),
                rx: self.rx_positions_m.clone(),
                ris: self.ris_positions_m.clone(),
            },
        })
    }
}

/// Writes an operating point as a TOML snapshot.
pub fn write_snapshot(st: &OptState, path: &Path) -> Result<(), HarnessError> {
    let text = toml::to_string_pretty(&Snapshot::from_state(st)).map_err(|e| parse_err(path, e))?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads an operating point back from a TOML snapshot.
pub fn read_snapshot(path: &Path) -> Result<OptState, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let snap: Snapshot = toml::from_str(&text).map_err(|e| parse_err(path, e))?;
    snap.into_state()
}

// ---------------------------------------------------------------------------
// SVG plots
// ---------------------------------------------------------------------------

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// Renders a line plot of mean sum rate versus the swept value, one series
/// per variant, with ±1 standard-error bars. The output is deterministic:
/// identical tables render byte-identical SVG.
pub fn render_plot_svg(table: &ResultTable, title: &str) -> Result<String, HarnessError> {
    if table.rows.is_empty() {
        return Err(HarnessError::EmptyTable);
    }
    let parameter = table.rows[0].parameter;
    let aggregates = table.aggregate();

    let mut values: Vec<f64> = Vec::new();
    for a in &aggregates {
        if !values.contains(&a.value) {
            values.push(a.value);
        }
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite swept values"));
    let log_x = parameter.log_axis() && values.iter().all(|&v| v > 0.0);
    let tx = |v: f64| if log_x { v.log10() } else { v };

    let (mut x_lo, mut x_hi) = (tx(values[0]), tx(values[values.len() - 1]));
    if x_hi - x_lo < 1e-12 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for a in &aggregates {
        y_lo = y_lo.min(a.mean_sum_rate_bps_hz - a.stderr_sum_rate_bps_hz);
        y_hi = y_hi.max(a.mean_sum_rate_bps_hz + a.stderr_sum_rate_bps_hz);
    }
    if y_hi - y_lo < 1e-9 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pad = 0.06 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;

    let (w, h) = (760.0, 480.0);
    let (ml, mr, mt, mb) = (72.0, 170.0, 42.0, 58.0);
    let px = |v: f64| ml + (tx(v) - x_lo) / (x_hi - x_lo) * (w - ml - mr);
    let py = |r: f64| h - mb - (r - y_lo) / (y_hi - y_lo) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        ml + (w - ml - mr) / 2.0,
        title
    );

    // Axes and grid.
    let _ = writeln!(
        s,
        r#"<line x1="{ml}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        h - mb,
        w - mr,
        h - mb
    );
    let _ = writeln!(
        s,
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{:.1}" stroke="black"/>"#,
        h - mb
    );
    for i in 0..=4 {
        let r = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let y = py(r);
        let _ = writeln!(
            s,
            r##"<line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
            w - mr
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{:.2}</text>"#,
            ml - 6.0,
            y + 4.0,
            r
        );
    }
    for &v in &values {
        let x = px(v);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#,
            h - mb,
            h - mb + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            h - mb + 18.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        ml + (w - ml - mr) / 2.0,
        h - 14.0,
        parameter.axis_label()
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 18 {:.1})">sum rate (bits/s/Hz)</text>"#,
        mt + (h - mt - mb) / 2.0,
        mt + (h - mt - mb) / 2.0
    );

    // One series per variant, presentation order.
    let mut legend_slot = 0;
    for variant in Variant::ALL {
        let series: Vec<&AggregateRow> = values
            .iter()
            .filter_map(|&v| {
                aggregates
                    .iter()
                    .find(|a| a.variant == variant && a.value == v)
            })
            .collect();
        if series.is_empty() {
            continue;
        }
        let color = PALETTE[legend_slot % PALETTE.len()];
        let points: Vec<String> = series
            .iter()
            .map(|a| format!("{:.2},{:.2}", px(a.value), py(a.mean_sum_rate_bps_hz)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            points.join(" ")
        );
        for a in &series {
            let x = px(a.value);
            let y = py(a.mean_sum_rate_bps_hz);
            if a.stderr_sum_rate_bps_hz > 0.0 {
                let y0 = py(a.mean_sum_rate_bps_hz + a.stderr_sum_rate_bps_hz);
                let y1 = py(a.mean_sum_rate_bps_hz - a.stderr_sum_rate_bps_hz);
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="{color}"/>"#
                );
                for yc in [y0, y1] {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{:.2}" y1="{yc:.2}" x2="{:.2}" y2="{yc:.2}" stroke="{color}"/>"#,
                        x - 4.0,
                        x + 4.0
                    );
                }
            }
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        }
        let ly = mt + 16.0 + 20.0 * legend_slot as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="1.8"/>"#,
            w - mr + 14.0,
            w - mr + 40.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text>"#,
            w - mr + 46.0,
            ly + 4.0,
            variant.name()
        );
        legend_slot += 1;
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

/// Renders the plot and writes it to `path`.
pub fn write_plot_svg(table: &ResultTable, title: &str, path: &Path) -> Result<(), HarnessError> {
    let svg = render_plot_svg(table, title)?;
    fs::write(path, svg).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn quick_base() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::desk();
        cfg.ris_elements = 8;
        cfg.solver.ao_max_iterations = 2;
        cfg
    }

    fn synthetic_table() -> ResultTable {
        let mut rows = Vec::new();
        for (vi, variant) in [Variant::MaMe, Variant::FaMe, Variant::MaFe, Variant::FaFe]
            .into_iter()
            .enumerate()
        {
            for (ni, value) in [8.0, 16.0, 32.0].into_iter().enumerate() {
                for seed in 0..3_u64 {
                    let wobble = ((vi + ni) as f64 + seed as f64 * 0.37).sin();
                    rows.push(ResultRow {
                        variant,
                        parameter: SweepParameter::RisElements,
                        value,
                        seed,
                        sum_rate_bps_hz: 40.0 + vi as f64 + value.ln() + wobble * 0.1 + 0.1 / 3.0,
                        dl_rate_bps_hz: 20.0 + wobble,
                        ul_rate_bps_hz: 20.0 - wobble,
                        iterations: 10 + seed as usize,
                        converged: seed != 2,
                    });
                }
            }
        }
        ResultTable {
            rows,
            failures: Vec::new(),
        }
    }

    #[test]
    fn variant_names_round_trip_and_errors_list_choices() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        let err = "warp-drive".parse::<Variant>().unwrap_err();
        let msg = err.to_string();
        for v in Variant::ALL {
            assert!(msg.contains(v.name()), "{msg} misses {}", v.name());
        }
    }

    #[test]
    fn masks_follow_the_variant_contract() {
        assert!(Variant::MaMe.mask().move_tx && Variant::MaMe.mask().move_ris);
        let fa = Variant::FaMe.mask();
        assert!(!fa.move_tx && !fa.move_rx && fa.move_ris);
        let fe = Variant::MaFe.mask();
        assert!(fe.move_tx && !fe.move_ris && fe.optimize_phases);
        let fafe = Variant::FaFe.mask();
        assert!(!fafe.move_tx && !fafe.move_ris && fafe.optimize_phases);
        assert!(Variant::MaMeHd.half_duplex() && Variant::FaFeHd.half_duplex());
        assert!(!Variant::MaMe.half_duplex());
    }

    #[test]
    fn apply_validates_values() {
        let base = ScenarioConfig::desk();
        assert!(SweepParameter::RisElements.apply(&base, 8.5).is_err());
        assert!(SweepParameter::RisElements.apply(&base, 0.0).is_err());
        // 400 elements cannot fit the desk region at the spacing floor.
        assert!(SweepParameter::RisElements.apply(&base, 400.0).is_err());
        assert!(SweepParameter::SiResidual.apply(&base, 2.0).is_err());
        let cfg = SweepParameter::PowerBsDbm.apply(&base, 30.0).unwrap();
        assert_eq!(cfg.power_bs_max_dbm, 30.0);
    }

    #[test]
    fn sweep_validation_rejects_bad_shapes() {
        let mut spec = SweepSpec::preset("ris-elements", ScenarioConfig::desk()).unwrap();
        spec.values.clear();
        assert!(matches!(spec.validate(), Err(HarnessError::EmptyValues)));
        let mut spec = SweepSpec::preset("duplex", ScenarioConfig::desk()).unwrap();
        spec.variants.clear();
        let msg = spec.validate().unwrap_err().to_string();
        assert!(msg.contains("ma-me-hd"), "{msg}");
        let mut spec = SweepSpec::preset("si-residual", ScenarioConfig::desk()).unwrap();
        spec.realizations = 0;
        assert!(spec.validate().is_err());
        assert!(SweepSpec::preset("bogus", ScenarioConfig::desk()).is_err());
    }

    #[test]
    fn tiny_sweep_yields_one_row_per_cell_with_paired_seeds() {
        let spec = SweepSpec {
            parameter: SweepParameter::RisElements,
            values: vec![8.0],
            variants: vec![Variant::MaMe, Variant::FaFe],
            realizations: 2,
            base: quick_base(),
            seed_base: 3,
        };
        let table = run_sweep(&spec).unwrap();
        assert_eq!(table.rows.len(), 4);
        assert!(table.failures.is_empty(), "{:?}", table.failures);
        let seeds = |v: Variant| -> Vec<u64> {
            table
                .rows
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| r.seed)
                .collect()
        };
        assert_eq!(seeds(Variant::MaMe), seeds(Variant::FaFe));
        for row in &table.rows {
            assert!(row.sum_rate_bps_hz.is_finite() && row.sum_rate_bps_hz > 0.0);
        }
    }

    #[test]
    fn half_duplex_cell_reports_orthogonal_slot_rates() {
        let cfg = quick_base();
        let seed = realization_seed(3, 0);
        let fd = run_cell(&cfg, Variant::MaMe, seed).unwrap();
        let hd = run_cell(&cfg, Variant::MaMeHd, seed).unwrap();
        assert_eq!(hd.config.si_residual, 0.0);
        // The reported HD rate is the orthogonal-slot metric of its state.
        let ch = ChannelSet::build(&hd.config, &ScenarioRealization::sample(&hd.config, seed), &hd.state.positions);
        let (dl, ul) = metrics::half_duplex_rates(&hd.config, &ch, &hd.state).unwrap();
        assert_eq!(hd.dl_rate_bps_hz, dl);
        assert_eq!(hd.ul_rate_bps_hz, ul);
        // Full-duplex reports the full-time rates.
        assert_eq!(fd.sum_rate_bps_hz(), fd.report.sum_rate_bps_hz);
    }

    #[test]
    fn csv_round_trip_is_bitwise_and_aggregates_match() {
        let mut table = synthetic_table();
        // Values a lossy float formatter would mangle.
        table.rows[0].sum_rate_bps_hz = 0.1 + 0.2;
        table.rows[1].sum_rate_bps_hz = 1.0 / 3.0;
        table.rows[2].sum_rate_bps_hz = 6.02214076e23;
        let dir = tempdir().unwrap();
        let path = dir.path().join("table.csv");
        table.write_csv(&path).unwrap();
        let again = ResultTable::read_csv(&path).unwrap();
        assert_eq!(table.rows, again.rows);
        assert_eq!(table.aggregate(), again.aggregate());
    }

    #[test]
    fn aggregate_matches_hand_computation() {
        let rows = vec![
            ResultRow {
                variant: Variant::MaMe,
                parameter: SweepParameter::SiResidual,
                value: 1e-8,
                seed: 0,
                sum_rate_bps_hz: 10.0,
                dl_rate_bps_hz: 6.0,
                ul_rate_bps_hz: 4.0,
                iterations: 5,
                converged: true,
            },
            ResultRow {
                variant: Variant::MaMe,
                parameter: SweepParameter::SiResidual,
                value: 1e-8,
                seed: 1,
                sum_rate_bps_hz: 14.0,
                dl_rate_bps_hz: 7.0,
                ul_rate_bps_hz: 7.0,
                iterations: 6,
                converged: false,
            },
        ];
        let table = ResultTable {
            rows,
            failures: Vec::new(),
        };
        let agg = table.aggregate();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].runs, 2);
        assert_eq!(agg[0].mean_sum_rate_bps_hz, 12.0);
        // Sample std dev = √8, standard error = √8/√2 = 2.
        assert!((agg[0].stderr_sum_rate_bps_hz - 2.0).abs() < 1e-12);
        assert_eq!(agg[0].converged_runs, 1);
    }

    #[test]
    fn four_variant_table_renders_four_series() {
        let table = synthetic_table();
        let svg = render_plot_svg(&table, "element sweep").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        // Error bars exist (stderr > 0 in the synthetic data).
        assert!(svg.matches("<line").count() > 10);
        assert!(svg.contains("surface elements N"));
        let again = render_plot_svg(&table, "element sweep").unwrap();
        assert_eq!(svg, again);
    }

    #[test]
    fn empty_table_refuses_to_plot() {
        let table = ResultTable::default();
        assert!(matches!(
            render_plot_svg(&table, "x"),
            Err(HarnessError::EmptyTable)
        ));
    }

    #[test]
    fn config_and_sweep_files_round_trip() {
        let dir = tempdir().unwrap();
        let cfg_path = dir.path().join("scenario.toml");
        let cfg = ScenarioConfig::paper();
        write_config(&cfg, &cfg_path).unwrap();
        let again = load_config(&cfg_path).unwrap();
        assert_eq!(cfg, again);

        let sweep_path = dir.path().join("sweep.toml");
        fs::write(
            &sweep_path,
            "parameter = \"si-residual\"\nvalues = [1e-10, 1e-8]\n\
             variants = [\"ma-me\", \"fa-fe\"]\nrealizations = 4\nseed_base = 9\n",
        )
        .unwrap();
        let spec = load_sweep(&sweep_path).unwrap();
        assert_eq!(spec.parameter, SweepParameter::SiResidual);
        assert_eq!(spec.values, vec![1e-10, 1e-8]);
        assert_eq!(spec.variants, vec![Variant::MaMe, Variant::FaFe]);
        assert_eq!(spec.realizations, 4);
        assert_eq!(spec.seed_base, 9);
        assert_eq!(spec.base, ScenarioConfig::desk());
    }

    #[test]
    fn snapshot_round_trip_preserves_every_bit() {
        let cfg = ScenarioConfig::desk();
        let st = crate::oracle::random_state(&cfg, 42);
        let dir = tempdir().unwrap();
        let path = dir.path().join("state.toml");
        write_snapshot(&st, &path).unwrap();
        let again = read_snapshot(&path).unwrap();
        assert_eq!(st, again);
    }

    #[test]
    fn snapshot_shape_errors_are_reported() {
        let cfg = ScenarioConfig::desk();
        let mut snap = Snapshot::from_state(&crate::oracle::random_state(&cfg, 1));
        snap.combiner_im.pop();
        let err = snap.into_state().unwrap_err().to_string();
        assert!(err.contains("combiner"), "{err}");
    }

    #[test]
    fn trace_csv_has_one_row_per_iteration() {
        let cfg = quick_base();
        let out = run_cell(&cfg, Variant::FaFe, 5).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&out.trace, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), out.trace.rows.len() + 1);
        assert!(text.starts_with("iteration,sum_rate_bps_hz"));
    }

    #[test]
    fn realization_seed_ignores_variant_and_value_by_construction() {
        // Distinct indices produce distinct seeds; repeated calls agree.
        let a: Vec<u64> = (0..50).map(|i| realization_seed(7, i)).collect();
        let b: Vec<u64> = (0..50).map(|i| realization_seed(7, i)).collect();
        assert_eq!(a, b);
        let mut dedup = a.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), a.len());
    }
}
