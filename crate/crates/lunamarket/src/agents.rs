//! Decision policies for service-provider robots and ordering clients,
//! plus the independent-robots baseline used for efficiency comparisons.
//!
//! A robot's cost model is deliberately plain: cost rate (microcredits
//! per meter, $2/m by default) times center-to-center travel distance,
//! with multi-cell jobs toured greedily nearest-first. Bids start at the
//! cost floor plus a configurable markup and undercut the standing low
//! by a fixed step, never going below the floor.

use std::collections::BTreeSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contentstore::Blob;
use crate::digest::{digest_tagged, Enc};
use crate::ledger::{AccountId, Micro};
use crate::marketplace::{ContractId, JobContract, JobRequest, MapMetadata};
use crate::selenography::{CellId, GridError, Tiling};

/// Default cost rate: $2 per meter, in microcredits.
pub const DEFAULT_COST_RATE_MICRO_PER_M: Micro = 2_000_000;
/// Default synthetic map payload per cell.
pub const DEFAULT_BLOB_BYTES_PER_CELL: u64 = 262_144;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("mapping would complete at {completes_at_ms} ms, after the deadline {deadline_ms} ms")]
    DeadlineExceeded {
        completes_at_ms: u64,
        deadline_ms: u64,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Distance source: a constructed tiling, or an explicit symmetric
/// matrix for toy scenarios whose distances are not lunar-scale.
/// Matrix cells use frequency 0.
#[derive(Debug, Clone)]
pub enum DistanceModel {
    Tiling(Tiling),
    Matrix { meters: Vec<Vec<f64>> },
}

impl DistanceModel {
    pub fn cell_count(&self) -> usize {
        match self {
            DistanceModel::Tiling(t) => t.cell_count(),
            DistanceModel::Matrix { meters } => meters.len(),
        }
    }

    pub fn frequency(&self) -> u32 {
        match self {
            DistanceModel::Tiling(t) => t.frequency(),
            DistanceModel::Matrix { .. } => 0,
        }
    }

    pub fn cell(&self, index: u32) -> CellId {
        CellId::new(self.frequency(), index)
    }

    pub fn cells(&self) -> Vec<CellId> {
        (0..self.cell_count() as u32)
            .map(|i| self.cell(i))
            .collect()
    }

    pub fn distance_m(&self, a: CellId, b: CellId) -> Result<f64, GridError> {
        match self {
            DistanceModel::Tiling(t) => t.surface_distance_m(a, b),
            DistanceModel::Matrix { meters } => {
                for c in [a, b] {
                    if c.frequency != 0 {
                        return Err(GridError::FrequencyMismatch {
                            expected: 0,
                            got: c.frequency,
                        });
                    }
                    if c.index as usize >= meters.len() {
                        return Err(GridError::IndexOutOfRange {
                            frequency: 0,
                            index: c.index,
                        });
                    }
                }
                Ok(meters[a.index as usize][b.index as usize])
            }
        }
    }
}

/// Round a distance to whole millimeters; keeps downstream integer cost
/// and timing arithmetic stable against last-ULP float noise.
pub fn distance_mm(d_m: f64) -> u64 {
    (d_m * 1000.0).round().max(0.0) as u64
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MarginPolicy {
    /// First bid = cost floor * (1 + markup), capped by the job price.
    pub initial_markup_bp: u32,
    /// Minimum undercut against the standing low.
    pub undercut_step_micro: Micro,
}

impl Default for MarginPolicy {
    fn default() -> MarginPolicy {
        MarginPolicy {
            initial_markup_bp: 0,
            undercut_step_micro: 1_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RobotSpec {
    /// Mesh node name.
    pub name: String,
    pub account: AccountId,
    pub home_cell: CellId,
    pub current_cell: CellId,
    pub speed_m_per_s: f64,
    pub cost_rate_micro_per_m: Micro,
    pub margin: MarginPolicy,
    pub sensor_suite: BTreeSet<String>,
    pub map_resolution_m_per_px: f64,
    pub mapping_rate_ms_per_cell: u64,
    pub algorithm: String,
    pub blob_bytes_per_cell: u64,
}

/// Greedy nearest-first tour over the target cells; ties break to the
/// lowest cell index. Returns (total meters, visit order).
pub fn tour_distance(
    model: &DistanceModel,
    start: CellId,
    targets: &BTreeSet<CellId>,
) -> Result<(f64, Vec<CellId>), GridError> {
    let mut remaining: BTreeSet<CellId> = targets.clone();
    let mut at = start;
    let mut total = 0.0f64;
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        // compare in whole millimeters so exact geometric ties stay
        // ties and break to the lowest index
        let mut best: Option<(u64, CellId, f64)> = None;
        for c in &remaining {
            let d = model.distance_m(at, *c)?;
            let mm = distance_mm(d);
            let better = match best {
                None => true,
                Some((bmm, bc, _)) => mm < bmm || (mm == bmm && *c < bc),
            };
            if better {
                best = Some((mm, *c, d));
            }
        }
        let (_, next, d) = best.unwrap();
        total += d;
        order.push(next);
        remaining.remove(&next);
        at = next;
    }
    Ok((total, order))
}

/// The robot's cost floor for a job from its current position.
pub fn cost_floor_micro(
    robot: &RobotSpec,
    job: &JobRequest,
    model: &DistanceModel,
) -> Result<Micro, GridError> {
    let (dist_m, _) = tour_distance(model, robot.current_cell, &job.target_cells)?;
    let mm = distance_mm(dist_m);
    Ok((robot.cost_rate_micro_per_m as u128 * mm as u128 / 1000) as Micro)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbstainReason {
    /// Required sensors not in the robot's suite.
    SensorsUnsatisfiable,
    /// Robot cannot map at the required resolution.
    ResolutionUnsatisfiable,
    /// Robot's algorithm is not in the allowed set.
    AlgorithmUnsatisfiable,
    /// The standing low already at or under the robot's cost floor.
    StandingAtOrBelowCost,
    /// The client's cap is under the robot's cost floor.
    CapBelowCost,
}

impl AbstainReason {
    pub fn label(self) -> &'static str {
        match self {
            AbstainReason::SensorsUnsatisfiable => "sensors_unsatisfiable",
            AbstainReason::ResolutionUnsatisfiable => "resolution_unsatisfiable",
            AbstainReason::AlgorithmUnsatisfiable => "algorithm_unsatisfiable",
            AbstainReason::StandingAtOrBelowCost => "standing_at_or_below_cost",
            AbstainReason::CapBelowCost => "cap_below_cost",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BidDecision {
    Bid {
        price_micro: Micro,
        cost_floor_micro: Micro,
    },
    Abstain {
        reason: AbstainReason,
        cost_floor_micro: Option<Micro>,
    },
}

/// Decide whether and what to bid on an open auction. Never prices
/// below the cost floor; always strictly undercuts the standing low or
/// abstains.
pub fn decide_bid(
    robot: &RobotSpec,
    job: &JobRequest,
    standing_low_micro: Option<Micro>,
    model: &DistanceModel,
) -> Result<BidDecision, GridError> {
    let req = &job.requirements;
    if !req.required_sensors.is_subset(&robot.sensor_suite) {
        return Ok(BidDecision::Abstain {
            reason: AbstainReason::SensorsUnsatisfiable,
            cost_floor_micro: None,
        });
    }
    if robot.map_resolution_m_per_px > req.min_resolution_m_per_px {
        return Ok(BidDecision::Abstain {
            reason: AbstainReason::ResolutionUnsatisfiable,
            cost_floor_micro: None,
        });
    }
    if !req.allowed_algorithms.is_empty() && !req.allowed_algorithms.contains(&robot.algorithm) {
        return Ok(BidDecision::Abstain {
            reason: AbstainReason::AlgorithmUnsatisfiable,
            cost_floor_micro: None,
        });
    }
    let floor = cost_floor_micro(robot, job, model)?;
    match standing_low_micro {
        Some(low) => {
            if low <= floor {
                return Ok(BidDecision::Abstain {
                    reason: AbstainReason::StandingAtOrBelowCost,
                    cost_floor_micro: Some(floor),
                });
            }
            let price = floor.max(low.saturating_sub(robot.margin.undercut_step_micro));
            Ok(BidDecision::Bid {
                price_micro: price.max(1),
                cost_floor_micro: floor,
            })
        }
        None => {
            if floor > job.max_price_micro {
                return Ok(BidDecision::Abstain {
                    reason: AbstainReason::CapBelowCost,
                    cost_floor_micro: Some(floor),
                });
            }
            let marked = (floor as u128 * (10_000 + robot.margin.initial_markup_bp as u128)
                / 10_000) as Micro;
            Ok(BidDecision::Bid {
                price_micro: marked.min(job.max_price_micro).max(1),
                cost_floor_micro: floor,
            })
        }
    }
}

#[derive(Clone, Debug)]
pub struct MapArtifact {
    pub blob: Blob,
    pub metadata: MapMetadata,
}

#[derive(Clone, Debug)]
pub struct MappingRun {
    pub artifact: MapArtifact,
    pub travel_ms: u64,
    pub mapping_ms: u64,
    pub completes_at_ms: u64,
    pub distance_m: f64,
    pub visit_order: Vec<CellId>,
}

/// Deterministic synthetic map payload for (seed, cells, resolution).
pub fn synthetic_blob(
    world_seed: u64,
    cells: &BTreeSet<CellId>,
    resolution_m_per_px: f64,
    bytes_per_cell: u64,
) -> Blob {
    let mut e = Enc::new();
    e.put_u64(world_seed);
    e.put_u32(cells.len() as u32);
    for c in cells {
        e.put_u32(c.frequency);
        e.put_u32(c.index);
    }
    e.put_f64(resolution_m_per_px);
    let seed = digest_tagged("lunamarket.blob.v1", e.as_slice());
    let mut rng = ChaCha8Rng::from_seed(seed.0);
    let mut bytes = vec![0u8; (bytes_per_cell * cells.len().max(1) as u64) as usize];
    rng.fill_bytes(&mut bytes);
    Blob::new(bytes)
}

/// Simulate the mapping run for a won contract: travel at the robot's
/// speed over the greedy tour, map each cell at the robot's rate, and
/// produce the deliverable. Moves the robot to the last toured cell.
pub fn execute_mapping(
    robot: &mut RobotSpec,
    job: &JobRequest,
    contract: &JobContract,
    model: &DistanceModel,
    start_ms: u64,
    world_seed: u64,
    unclaimed_targets: &BTreeSet<CellId>,
) -> Result<MappingRun, AgentError> {
    let (dist_m, order) = tour_distance(model, robot.current_cell, &job.target_cells)?;
    let mm = distance_mm(dist_m);
    let travel_ms = (mm as f64 / robot.speed_m_per_s).ceil() as u64;
    let mapping_ms = robot.mapping_rate_ms_per_cell * job.target_cells.len() as u64;
    let completes_at_ms = start_ms + travel_ms + mapping_ms;
    if completes_at_ms > job.execution_deadline_ms {
        return Err(AgentError::DeadlineExceeded {
            completes_at_ms,
            deadline_ms: job.execution_deadline_ms,
        });
    }

    let blob = synthetic_blob(
        world_seed,
        &job.target_cells,
        robot.map_resolution_m_per_px,
        robot.blob_bytes_per_cell,
    );
    let bounding_coords = match model {
        DistanceModel::Tiling(t) => job
            .target_cells
            .iter()
            .map(|c| t.cell_center(*c))
            .collect::<Result<Vec<_>, _>>()?,
        DistanceModel::Matrix { .. } => Vec::new(),
    };
    let metadata = MapMetadata {
        cells: job.target_cells.clone(),
        bounding_coords,
        resolution_m_per_px: robot.map_resolution_m_per_px,
        sensors: robot.sensor_suite.clone(),
        algorithm: robot.algorithm.clone(),
        price_micro: contract.price_micro,
        content_hash: blob.content_hash(),
        explorer: robot.account,
        pioneer_of: job
            .target_cells
            .intersection(unclaimed_targets)
            .copied()
            .collect(),
    };
    if let Some(last) = order.last() {
        robot.current_cell = *last;
    }
    Ok(MappingRun {
        artifact: MapArtifact { blob, metadata },
        travel_ms,
        mapping_ms,
        completes_at_ms,
        distance_m: mm as f64 / 1000.0,
        visit_order: order,
    })
}

/// A finalized auction awaiting the client's decision.
#[derive(Clone, Copy, Debug)]
pub struct FinalizedOffer {
    pub contract_id: ContractId,
    pub price_micro: Micro,
    pub max_price_micro: Micro,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClientAction {
    PostJob { template_index: usize },
    AcceptContract(ContractId),
    DeclineContract(ContractId),
}

/// The client policy: post whatever is due, accept any finalized price
/// at or under its cap. The decline arm exists for policy extensions;
/// over-cap bids are already rejected at submission.
pub fn client_step(due_templates: &[usize], offers: &[FinalizedOffer]) -> Vec<ClientAction> {
    let mut actions: Vec<ClientAction> = due_templates
        .iter()
        .map(|&i| ClientAction::PostJob { template_index: i })
        .collect();
    for offer in offers {
        if offer.price_micro <= offer.max_price_micro {
            actions.push(ClientAction::AcceptContract(offer.contract_id));
        } else {
            actions.push(ClientAction::DeclineContract(offer.contract_id));
        }
    }
    actions
}

/// Baseline robot: no market, no shared claims, only its own memory of
/// what it has mapped.
#[derive(Clone, Debug)]
pub struct BaselineRobot {
    pub spec: RobotSpec,
    pub known_mapped: BTreeSet<CellId>,
    pub busy_until_ms: u64,
    /// A move has been issued whose arrival the caller has not yet
    /// acknowledged; the robot cannot be stepped again until then.
    pub pending_arrival: bool,
    pub total_distance_m: f64,
}

impl BaselineRobot {
    pub fn new(spec: RobotSpec) -> BaselineRobot {
        BaselineRobot {
            spec,
            known_mapped: BTreeSet::new(),
            busy_until_ms: 0,
            pending_arrival: false,
            total_distance_m: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BaselineMove {
    pub robot_index: usize,
    pub from: CellId,
    pub to: CellId,
    pub distance_m: f64,
    pub travel_ms: u64,
    pub mapping_ms: u64,
    pub completes_at_ms: u64,
}

/// One baseline decision round: every idle robot targets its nearest
/// cell not yet in its own knowledge (ties to the lowest index).
/// Duplicated targets across robots are possible by design. Robots with
/// complete knowledge make no movements.
pub fn independent_baseline_step(
    robots: &mut [BaselineRobot],
    model: &DistanceModel,
    now_ms: u64,
) -> Result<Vec<BaselineMove>, GridError> {
    let all: Vec<CellId> = model.cells();
    let mut moves = Vec::new();
    for (i, robot) in robots.iter_mut().enumerate() {
        if robot.pending_arrival || robot.busy_until_ms > now_ms {
            continue;
        }
        let mut best: Option<(u64, CellId)> = None;
        for c in &all {
            if robot.known_mapped.contains(c) {
                continue;
            }
            let mm = distance_mm(model.distance_m(robot.spec.current_cell, *c)?);
            let better = match best {
                None => true,
                Some((bmm, bc)) => mm < bmm || (mm == bmm && *c < bc),
            };
            if better {
                best = Some((mm, *c));
            }
        }
        let Some((mm, target)) = best else {
            continue; // everything it knows of is mapped
        };
        let travel_ms = (mm as f64 / robot.spec.speed_m_per_s).ceil() as u64;
        let mapping_ms = robot.spec.mapping_rate_ms_per_cell;
        let from = robot.spec.current_cell;
        robot.spec.current_cell = target;
        robot.known_mapped.insert(target);
        robot.busy_until_ms = now_ms + travel_ms + mapping_ms;
        robot.pending_arrival = true;
        robot.total_distance_m += mm as f64 / 1000.0;
        moves.push(BaselineMove {
            robot_index: i,
            from,
            to: target,
            distance_m: mm as f64 / 1000.0,
            travel_ms,
            mapping_ms,
            completes_at_ms: now_ms + travel_ms + mapping_ms,
        });
    }
    Ok(moves)
}
