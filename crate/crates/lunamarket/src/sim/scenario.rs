//! Scenario files: TOML with a fixed schema, unknown keys rejected.
//!
//! Exactly one of `[tiling]` / `[distance_matrix]` selects the distance
//! model. Every omitted optional field takes the documented default and
//! the loaded config carries the effective values.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::Micro;
use crate::selenography::LUNAR_RADIUS_M;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Coordinated,
    Baseline,
    Both,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario field `{field}`: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    seed: Option<u64>,
    #[serde(default = "default_mode")]
    mode: Mode,
    #[serde(default = "default_duration")]
    duration_ms: u64,
    #[serde(default = "default_block_time")]
    block_time_ms: u64,
    #[serde(default = "default_commission")]
    commission_rate_bp: u32,
    #[serde(default = "default_rep_floor")]
    reputation_floor_millis: u32,
    #[serde(default = "default_genesis")]
    genesis_supply_micro: Micro,
    tiling: Option<RawTiling>,
    distance_matrix: Option<RawMatrix>,
    #[serde(default)]
    network: RawNetwork,
    #[serde(default)]
    robots: Vec<RawRobot>,
    #[serde(default)]
    clients: Vec<RawClient>,
}

fn default_mode() -> Mode {
    Mode::Coordinated
}
fn default_duration() -> u64 {
    1_800_000
}
fn default_block_time() -> u64 {
    4_000
}
fn default_commission() -> u32 {
    500
}
fn default_rep_floor() -> u32 {
    200
}
fn default_genesis() -> Micro {
    1_000_000_000_000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTiling {
    frequency: u32,
    #[serde(default = "default_radius")]
    radius_m: f64,
}

fn default_radius() -> f64 {
    LUNAR_RADIUS_M
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrix {
    meters: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    #[serde(default)]
    jitter_ms: u64,
    #[serde(default)]
    drop_prob: f64,
    bandwidth_bytes_per_sec: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobot {
    id: String,
    #[serde(default)]
    initial_balance_micro: Micro,
    home_cell: u32,
    #[serde(default = "default_speed")]
    speed_m_per_s: f64,
    #[serde(default = "default_cost_rate")]
    cost_rate_micro_per_m: Micro,
    #[serde(default)]
    initial_markup_bp: u32,
    #[serde(default = "default_undercut")]
    undercut_step_micro: Micro,
    #[serde(default = "default_sensors")]
    sensors: Vec<String>,
    #[serde(default = "default_resolution")]
    resolution_m_per_px: f64,
    #[serde(default = "default_algorithm")]
    algorithm: String,
    #[serde(default = "default_mapping_rate")]
    mapping_rate_ms_per_cell: u64,
    #[serde(default = "default_blob_bytes")]
    blob_bytes_per_cell: u64,
}

fn default_speed() -> f64 {
    0.1
}
fn default_cost_rate() -> Micro {
    crate::agents::DEFAULT_COST_RATE_MICRO_PER_M
}
fn default_undercut() -> Micro {
    1_000_000
}
fn default_sensors() -> Vec<String> {
    vec!["camera".to_string()]
}
fn default_resolution() -> f64 {
    0.5
}
fn default_algorithm() -> String {
    "occupancy-grid".to_string()
}
fn default_mapping_rate() -> u64 {
    20_000
}
fn default_blob_bytes() -> u64 {
    crate::agents::DEFAULT_BLOB_BYTES_PER_CELL
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClient {
    id: String,
    #[serde(default)]
    initial_balance_micro: Micro,
    #[serde(default)]
    jobs: Vec<RawJob>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJob {
    #[serde(default)]
    post_at_ms: u64,
    cells: Option<Vec<u32>>,
    #[serde(default)]
    all_cells: bool,
    max_price_micro: Micro,
    #[serde(default = "default_bidding_window")]
    bidding_window_ms: u64,
    #[serde(default = "default_execution_window")]
    execution_window_ms: u64,
    #[serde(default = "default_resolution_req")]
    min_resolution_m_per_px: f64,
    #[serde(default)]
    required_sensors: Vec<String>,
    #[serde(default)]
    allowed_algorithms: Vec<String>,
    /// Standing order: post one job per target cell and let the
    /// sequencer re-auction expired or failed ones until every cell is
    /// covered by a settled map.
    #[serde(default)]
    repeat_until_covered: bool,
}

fn default_bidding_window() -> u64 {
    2_000
}
fn default_execution_window() -> u64 {
    120_000
}
fn default_resolution_req() -> f64 {
    1.0
}

// ---- validated configuration ----

#[derive(Clone, Debug)]
pub enum GridConfig {
    Tiling { frequency: u32, radius_m: f64 },
    Matrix { meters: Vec<Vec<f64>> },
}

impl GridConfig {
    pub fn cell_count(&self) -> usize {
        match self {
            GridConfig::Tiling { frequency, .. } => (10 * frequency * frequency + 2) as usize,
            GridConfig::Matrix { meters } => meters.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NetworkConfig {
    pub jitter_ms: u64,
    pub drop_prob: f64,
    pub bandwidth_bytes_per_sec: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct RobotConfig {
    pub id: String,
    pub initial_balance_micro: Micro,
    pub home_cell: u32,
    pub speed_m_per_s: f64,
    pub cost_rate_micro_per_m: Micro,
    pub initial_markup_bp: u32,
    pub undercut_step_micro: Micro,
    pub sensors: BTreeSet<String>,
    pub resolution_m_per_px: f64,
    pub algorithm: String,
    pub mapping_rate_ms_per_cell: u64,
    pub blob_bytes_per_cell: u64,
}

#[derive(Clone, Debug)]
pub struct JobTemplateConfig {
    pub post_at_ms: u64,
    /// None means every cell of the grid.
    pub cells: Option<BTreeSet<u32>>,
    pub max_price_micro: Micro,
    pub bidding_window_ms: u64,
    pub execution_window_ms: u64,
    pub min_resolution_m_per_px: f64,
    pub required_sensors: BTreeSet<String>,
    pub allowed_algorithms: BTreeSet<String>,
    pub repeat_until_covered: bool,
}

#[derive(Clone, Debug)]
pub struct ClientConfig {
    pub id: String,
    pub initial_balance_micro: Micro,
    pub jobs: Vec<JobTemplateConfig>,
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub mode: Mode,
    pub duration_ms: u64,
    pub block_time_ms: u64,
    pub commission_rate_bp: u32,
    pub reputation_floor_millis: u32,
    pub genesis_supply_micro: Micro,
    pub grid: GridConfig,
    pub network: NetworkConfig,
    pub robots: Vec<RobotConfig>,
    pub clients: Vec<ClientConfig>,
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    validate(raw)
}

fn validate(raw: RawScenario) -> Result<ScenarioConfig, ScenarioError> {
    let seed = raw
        .seed
        .ok_or_else(|| invalid("seed", "missing required field"))?;
    if raw.duration_ms == 0 {
        return Err(invalid("duration_ms", "must be positive"));
    }
    if raw.block_time_ms == 0 {
        return Err(invalid("block_time_ms", "must be positive"));
    }
    if raw.commission_rate_bp > 10_000 {
        return Err(invalid("commission_rate_bp", "must be at most 10000"));
    }
    if !(0.0..=1.0).contains(&raw.network.drop_prob) {
        return Err(invalid("network.drop_prob", "must be within [0, 1]"));
    }

    let grid = match (raw.tiling, raw.distance_matrix) {
        (Some(_), Some(_)) => {
            return Err(invalid(
                "tiling/distance_matrix",
                "exactly one distance model must be given, not both",
            ))
        }
        (None, None) => {
            return Err(invalid(
                "tiling/distance_matrix",
                "exactly one distance model must be given",
            ))
        }
        (Some(t), None) => {
            if t.frequency < 1 {
                return Err(invalid("tiling.frequency", "must be at least 1"));
            }
            if !(t.radius_m > 0.0) {
                return Err(invalid("tiling.radius_m", "must be positive"));
            }
            GridConfig::Tiling {
                frequency: t.frequency,
                radius_m: t.radius_m,
            }
        }
        (None, Some(m)) => {
            let n = m.meters.len();
            if n == 0 {
                return Err(invalid("distance_matrix.meters", "must be non-empty"));
            }
            for (i, row) in m.meters.iter().enumerate() {
                if row.len() != n {
                    return Err(invalid("distance_matrix.meters", "must be square"));
                }
                if m.meters[i][i] != 0.0 {
                    return Err(invalid("distance_matrix.meters", "diagonal must be zero"));
                }
                for (j, &v) in row.iter().enumerate() {
                    if !(v >= 0.0) {
                        return Err(invalid(
                            "distance_matrix.meters",
                            "entries must be non-negative",
                        ));
                    }
                    if m.meters[j][i] != v {
                        return Err(invalid("distance_matrix.meters", "must be symmetric"));
                    }
                }
            }
            GridConfig::Matrix { meters: m.meters }
        }
    };
    let cell_count = grid.cell_count() as u32;

    if raw.robots.is_empty() {
        return Err(invalid("robots", "at least one robot is required"));
    }
    // "sequencer" is the reserved mesh name of the template contract host
    let mut seen: BTreeSet<String> = ["sequencer".to_string()].into_iter().collect();
    let mut robots = Vec::new();
    for (i, r) in raw.robots.into_iter().enumerate() {
        let field = format!("robots[{i}]");
        if !seen.insert(r.id.clone()) {
            return Err(invalid(&field, format!("duplicate id `{}`", r.id)));
        }
        if !(r.speed_m_per_s > 0.0) {
            return Err(invalid(
                &format!("{field}.speed_m_per_s"),
                "must be positive",
            ));
        }
        if r.undercut_step_micro == 0 {
            return Err(invalid(
                &format!("{field}.undercut_step_micro"),
                "must be at least 1",
            ));
        }
        if r.home_cell >= cell_count {
            return Err(invalid(
                &format!("{field}.home_cell"),
                format!(
                    "cell {} out of range (grid has {cell_count} cells)",
                    r.home_cell
                ),
            ));
        }
        robots.push(RobotConfig {
            id: r.id,
            initial_balance_micro: r.initial_balance_micro,
            home_cell: r.home_cell,
            speed_m_per_s: r.speed_m_per_s,
            cost_rate_micro_per_m: r.cost_rate_micro_per_m,
            initial_markup_bp: r.initial_markup_bp,
            undercut_step_micro: r.undercut_step_micro,
            sensors: r.sensors.into_iter().collect(),
            resolution_m_per_px: r.resolution_m_per_px,
            algorithm: r.algorithm,
            mapping_rate_ms_per_cell: r.mapping_rate_ms_per_cell,
            blob_bytes_per_cell: r.blob_bytes_per_cell,
        });
    }

    let mut clients = Vec::new();
    for (ci, c) in raw.clients.into_iter().enumerate() {
        let cfield = format!("clients[{ci}]");
        if !seen.insert(c.id.clone()) {
            return Err(invalid(&cfield, format!("duplicate id `{}`", c.id)));
        }
        let mut jobs = Vec::new();
        for (ji, j) in c.jobs.into_iter().enumerate() {
            let jfield = format!("{cfield}.jobs[{ji}]");
            let cells = match (j.cells, j.all_cells) {
                (Some(_), true) => {
                    return Err(invalid(
                        &jfield,
                        "give either `cells` or `all_cells = true`, not both",
                    ))
                }
                (None, false) => {
                    return Err(invalid(&jfield, "needs `cells` or `all_cells = true`"))
                }
                (None, true) => None,
                (Some(cells), false) => {
                    if cells.is_empty() {
                        return Err(invalid(&format!("{jfield}.cells"), "must be non-empty"));
                    }
                    for &c in &cells {
                        if c >= cell_count {
                            return Err(invalid(
                                &format!("{jfield}.cells"),
                                format!("cell {c} out of range (grid has {cell_count} cells)"),
                            ));
                        }
                    }
                    Some(cells.into_iter().collect())
                }
            };
            if j.max_price_micro == 0 {
                return Err(invalid(
                    &format!("{jfield}.max_price_micro"),
                    "must be positive",
                ));
            }
            if j.bidding_window_ms == 0 || j.execution_window_ms == 0 {
                return Err(invalid(
                    &jfield,
                    "bidding and execution windows must be positive",
                ));
            }
            jobs.push(JobTemplateConfig {
                post_at_ms: j.post_at_ms,
                cells,
                max_price_micro: j.max_price_micro,
                bidding_window_ms: j.bidding_window_ms,
                execution_window_ms: j.execution_window_ms,
                min_resolution_m_per_px: j.min_resolution_m_per_px,
                required_sensors: j.required_sensors.into_iter().collect(),
                allowed_algorithms: j.allowed_algorithms.into_iter().collect(),
                repeat_until_covered: j.repeat_until_covered,
            });
        }
        clients.push(ClientConfig {
            id: c.id,
            initial_balance_micro: c.initial_balance_micro,
            jobs,
        });
    }
    if matches!(raw.mode, Mode::Coordinated | Mode::Both)
        && clients.iter().all(|c| c.jobs.is_empty())
    {
        return Err(invalid(
            "clients",
            "coordinated mode needs at least one client job",
        ));
    }

    Ok(ScenarioConfig {
        seed,
        mode: raw.mode,
        duration_ms: raw.duration_ms,
        block_time_ms: raw.block_time_ms,
        commission_rate_bp: raw.commission_rate_bp,
        reputation_floor_millis: raw.reputation_floor_millis,
        genesis_supply_micro: raw.genesis_supply_micro,
        grid,
        network: NetworkConfig {
            jitter_ms: raw.network.jitter_ms,
            drop_prob: raw.network.drop_prob,
            bandwidth_bytes_per_sec: raw.network.bandwidth_bytes_per_sec,
        },
        robots,
        clients,
    })
}
