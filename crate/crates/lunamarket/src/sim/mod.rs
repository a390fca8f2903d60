//! Scenario runner: the master event loop binding the ledger,
//! marketplace, agents and network into one deterministic simulation.
//!
//! Time is integer milliseconds shared by every module. The loop
//! advances to the earliest of the next network delivery or timer,
//! processes all deliveries at that instant (in delivery order), then
//! all timers due (in schedule order). With a fixed seed the whole run
//! is a pure function of the scenario file.
//!
//! The lifecycle per job: a client posts over the Earth link, the
//! sequencer opens the contract and broadcasts it to the mesh, idle
//! robots bid (undercutting via standing-low broadcasts), the auction
//! finalizes at its time limit, the client accepts (escrow + rekey),
//! the winner travels and maps, uploads the deliverable, the contract
//! settles atomically, and coverage advances.

pub mod metrics;
pub mod scenario;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::agents::{
    self, decide_bid, execute_mapping, independent_baseline_step, BaselineRobot, BidDecision,
    DistanceModel, MapArtifact, MarginPolicy, RobotSpec,
};
use crate::digest::digest_tagged;
use crate::ledger::{AccountId, Micro};
use crate::marketplace::{
    ContractId, ContractState, JobParams, JobRequest, MarketError, World, WorldConfig,
};
use crate::netsim::{
    ContractMsg, DeliveryEvent, Destination, Envelope, JobRequestMsg, LedgerTxMsg, NetError,
    Network, NodeId, NodeRole, NodeSpec, Payload, TopologySpec,
};
use crate::selenography::{CellId, GridError, Tiling};

pub use metrics::{compute_metrics, series_stats, MetricsSummary, SeriesStats};
pub use scenario::{
    load_scenario, parse_scenario, GridConfig, Mode, ScenarioConfig, ScenarioError,
};

pub const SEQUENCER_NODE: &str = "sequencer";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario mode `both` runs through compare, not run")]
    ModeNeedsCompare,
    #[error("compare needs mode `both`, got {0:?}")]
    CompareNeedsBoth(Mode),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything a finished run yields; the world carries the event log
/// and the ledger for export.
pub struct RunOutput {
    pub mode: Mode,
    pub world: World,
    pub metrics: MetricsSummary,
}

impl RunOutput {
    pub fn events(&self) -> &crate::events::EventLog {
        &self.world.events
    }

    /// Write events.jsonl, metrics.json, ledger.jsonl and coverage.csv.
    pub fn write_to_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut events = std::fs::File::create(dir.join("events.jsonl"))?;
        self.world.events.write_jsonl(&mut events)?;
        let metrics = serde_json::to_string_pretty(&self.metrics)?;
        std::fs::write(dir.join("metrics.json"), metrics + "\n")?;
        let mut ledger = std::fs::File::create(dir.join("ledger.jsonl"))?;
        self.world.ledger.write_jsonl(&mut ledger)?;
        let mut coverage = std::fs::File::create(dir.join("coverage.csv"))?;
        writeln!(coverage, "time_ms,fraction_mapped")?;
        for (t, f) in &self.metrics.coverage_curve {
            writeln!(coverage, "{t},{f}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ModeSummary {
    pub total_distance_m: f64,
    pub time_to_full_coverage_ms: Option<u64>,
    pub settled_contracts: usize,
    pub total_distance_by_robot: BTreeMap<String, f64>,
}

fn mode_summary(m: &MetricsSummary) -> ModeSummary {
    ModeSummary {
        total_distance_m: m.total_distance_m,
        time_to_full_coverage_ms: m.time_to_full_coverage_ms,
        settled_contracts: m.settled_contracts,
        total_distance_by_robot: m.total_distance_by_robot.clone(),
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonReport {
    pub seed: u64,
    pub coordinated: ModeSummary,
    pub baseline: ModeSummary,
    /// baseline minus coordinated; positive means coordination traveled
    /// less.
    pub distance_saved_m: f64,
    /// baseline minus coordinated; positive means coordination finished
    /// earlier. None when either mode failed to reach full coverage.
    pub coverage_time_saved_ms: Option<i64>,
}

pub struct CompareOutput {
    pub report: ComparisonReport,
    pub coordinated: RunOutput,
    pub baseline: RunOutput,
}

/// Run both modes on identical seed/topology/robots and compare.
pub fn compare_baseline(cfg: &ScenarioConfig) -> Result<CompareOutput, SimError> {
    if cfg.mode != Mode::Both {
        return Err(SimError::CompareNeedsBoth(cfg.mode));
    }
    let mut coordinated_cfg = cfg.clone();
    coordinated_cfg.mode = Mode::Coordinated;
    let coordinated = run_scenario(&coordinated_cfg)?;
    let mut baseline_cfg = cfg.clone();
    baseline_cfg.mode = Mode::Baseline;
    let baseline = run_scenario(&baseline_cfg)?;

    let c = mode_summary(&coordinated.metrics);
    let b = mode_summary(&baseline.metrics);
    let coverage_time_saved_ms = match (b.time_to_full_coverage_ms, c.time_to_full_coverage_ms) {
        (Some(b), Some(c)) => Some(b as i64 - c as i64),
        _ => None,
    };
    Ok(CompareOutput {
        report: ComparisonReport {
            seed: cfg.seed,
            distance_saved_m: b.total_distance_m - c.total_distance_m,
            coverage_time_saved_ms,
            coordinated: c,
            baseline: b,
        },
        coordinated,
        baseline,
    })
}

/// Run one scenario to its configured duration. Mode must be
/// `coordinated` or `baseline`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, SimError> {
    run_scenario_with_faults(cfg, &[])
}

/// A network fault injected at a fixed simulation time.
#[derive(Clone, Debug)]
pub struct ScheduledFault {
    pub at_ms: u64,
    pub fault: crate::netsim::Fault,
}

/// Run a scenario with scripted network faults (partitions, drop-rate
/// changes, node crashes and restores).
pub fn run_scenario_with_faults(
    cfg: &ScenarioConfig,
    faults: &[ScheduledFault],
) -> Result<RunOutput, SimError> {
    match cfg.mode {
        Mode::Both => Err(SimError::ModeNeedsCompare),
        Mode::Coordinated | Mode::Baseline => {
            let mut runner = Runner::new(cfg)?;
            for (i, f) in faults.iter().enumerate() {
                runner.schedule(f.at_ms, TimerKind::InjectFault { index: i });
            }
            runner.faults = faults.to_vec();
            runner.run()
        }
    }
}

// ---- internals ----

#[derive(Debug)]
struct Timer {
    at: u64,
    seq: u64,
    kind: TimerKind,
}

impl PartialEq for Timer {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Timer {}
impl PartialOrd for Timer {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Timer {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

#[derive(Debug)]
enum TimerKind {
    CommitTick,
    InjectFault { index: usize },
    ClientWave { client: usize, template: usize },
    Finalize { contract: ContractId },
    ExecutionDeadline { contract: ContractId },
    MappingComplete { robot: usize },
    BaselineArrive { robot: usize },
}

#[derive(Clone, Debug)]
struct AuctionView {
    job: JobRequest,
    standing: Option<(Micro, AccountId)>,
}

struct RobotRt {
    spec: RobotSpec,
    node: NodeId,
    busy: bool,
    engaged: Option<ContractId>,
    /// Price of this robot's latest sent bid on the engaged contract;
    /// guards against rebidding over its own in-flight bid.
    outstanding_bid: Option<Micro>,
    auctions: BTreeMap<ContractId, AuctionView>,
    pending_run: Option<PendingRun>,
}

struct PendingRun {
    contract: ContractId,
    artifact: MapArtifact,
    from_cell: CellId,
    to_cell: CellId,
    distance_m: f64,
}

struct ClientRt {
    account: AccountId,
    node: NodeId,
    /// Own contracts' price caps, learned from the announce broadcast.
    caps: BTreeMap<ContractId, Micro>,
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    model: DistanceModel,
    world: World,
    net: Network,
    now: u64,
    timers: BinaryHeap<Reverse<Timer>>,
    timer_seq: u64,
    sequencer: NodeId,
    robots: Vec<RobotRt>,
    clients: Vec<ClientRt>,
    baseline: Vec<BaselineRobot>,
    baseline_pending: BTreeMap<usize, agents::BaselineMove>,
    robot_by_node: BTreeMap<NodeId, usize>,
    robot_by_account: BTreeMap<AccountId, usize>,
    client_by_node: BTreeMap<NodeId, usize>,
    covered: BTreeSet<CellId>,
    total_cells: usize,
    faults: Vec<ScheduledFault>,
    /// Standing orders: contracts the sequencer re-auctions on expiry
    /// or failure until their cells are covered. Values are
    /// (client index, template index).
    standing: BTreeMap<ContractId, (usize, usize)>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Runner<'a>, SimError> {
        let model = match &cfg.grid {
            GridConfig::Tiling {
                frequency,
                radius_m,
            } => DistanceModel::Tiling(Tiling::build(*frequency, *radius_m)?),
            GridConfig::Matrix { meters } => DistanceModel::Matrix {
                meters: meters.clone(),
            },
        };
        let total_cells = model.cell_count();

        let mut world = World::new(WorldConfig {
            genesis_supply_micro: cfg.genesis_supply_micro,
            commission_rate_bp: cfg.commission_rate_bp,
            reputation_floor_millis: cfg.reputation_floor_millis,
        });

        // deterministic account order: clients then robots, scenario order
        let mut clients = Vec::new();
        for c in &cfg.clients {
            let account = world
                .ledger
                .create_account(c.initial_balance_micro)
                .expect("faucet covers configured client balances");
            clients.push(ClientRt {
                account,
                node: NodeId::new(&c.id),
                caps: BTreeMap::new(),
            });
        }
        let mut robots = Vec::new();
        for r in &cfg.robots {
            let account = world
                .ledger
                .create_account(r.initial_balance_micro)
                .expect("faucet covers configured robot balances");
            let home = model.cell(r.home_cell);
            robots.push(RobotRt {
                spec: RobotSpec {
                    name: r.id.clone(),
                    account,
                    home_cell: home,
                    current_cell: home,
                    speed_m_per_s: r.speed_m_per_s,
                    cost_rate_micro_per_m: r.cost_rate_micro_per_m,
                    margin: MarginPolicy {
                        initial_markup_bp: r.initial_markup_bp,
                        undercut_step_micro: r.undercut_step_micro,
                    },
                    sensor_suite: r.sensors.clone(),
                    map_resolution_m_per_px: r.resolution_m_per_px,
                    mapping_rate_ms_per_cell: r.mapping_rate_ms_per_cell,
                    algorithm: r.algorithm.clone(),
                    blob_bytes_per_cell: r.blob_bytes_per_cell,
                },
                node: NodeId::new(&r.id),
                busy: false,
                engaged: None,
                outstanding_bid: None,
                auctions: BTreeMap::new(),
                pending_run: None,
            });
        }

        let mut nodes = vec![NodeSpec {
            id: NodeId::new(SEQUENCER_NODE),
            role: NodeRole::Sequencer,
        }];
        nodes.extend(clients.iter().map(|c| NodeSpec {
            id: c.node.clone(),
            role: NodeRole::EarthStation,
        }));
        nodes.extend(robots.iter().map(|r| NodeSpec {
            id: r.node.clone(),
            role: NodeRole::Robot,
        }));
        let topology = TopologySpec {
            nodes,
            links: Vec::new(),
            defaults: crate::netsim::LinkDefaults {
                jitter_ms: cfg.network.jitter_ms,
                drop_prob: cfg.network.drop_prob,
                bandwidth_bytes_per_sec: cfg.network.bandwidth_bytes_per_sec,
            },
        };
        let net_seed = {
            let d = digest_tagged("lunamarket.netseed.v1", &cfg.seed.to_be_bytes());
            u64::from_be_bytes(d.0[..8].try_into().unwrap())
        };
        let net = Network::build(&topology, net_seed)?;

        let robot_by_node = robots
            .iter()
            .enumerate()
            .map(|(i, r)| (r.node.clone(), i))
            .collect();
        let robot_by_account = robots
            .iter()
            .enumerate()
            .map(|(i, r)| (r.spec.account, i))
            .collect();
        let client_by_node = clients
            .iter()
            .enumerate()
            .map(|(i, c)| (c.node.clone(), i))
            .collect();
        let baseline = robots
            .iter()
            .map(|r| BaselineRobot::new(r.spec.clone()))
            .collect();

        Ok(Runner {
            cfg,
            model,
            world,
            net,
            now: 0,
            timers: BinaryHeap::new(),
            timer_seq: 0,
            sequencer: NodeId::new(SEQUENCER_NODE),
            robots,
            clients,
            baseline,
            baseline_pending: BTreeMap::new(),
            robot_by_node,
            robot_by_account,
            client_by_node,
            covered: BTreeSet::new(),
            total_cells,
            faults: Vec::new(),
            standing: BTreeMap::new(),
        })
    }

    /// The repeat template (if any) a posted job falls under.
    fn standing_policy_for(&self, job: &JobRequest) -> Option<(usize, usize)> {
        for (ci, client) in self.cfg.clients.iter().enumerate() {
            if self.clients[ci].account != job.client {
                continue;
            }
            for (ti, template) in client.jobs.iter().enumerate() {
                if !template.repeat_until_covered {
                    continue;
                }
                let cells = self.template_cells(ci, ti);
                if job.target_cells.is_subset(&cells) {
                    return Some((ci, ti));
                }
            }
        }
        None
    }

    fn schedule(&mut self, at: u64, kind: TimerKind) {
        let seq = self.timer_seq;
        self.timer_seq += 1;
        self.timers.push(Reverse(Timer { at, seq, kind }));
    }

    fn send(&mut self, src: NodeId, dst: Destination, payload: Payload) {
        let env = Envelope {
            src,
            dst,
            payload,
            send_time_ms: self.now,
        };
        // scheduling errors only arise from unknown nodes, which the
        // runner constructs itself
        self.net.send(env).expect("runner nodes are registered");
    }

    fn run(mut self) -> Result<RunOutput, SimError> {
        let cells_label = match &self.cfg.grid {
            GridConfig::Tiling {
                frequency,
                radius_m,
            } => {
                format!("gp{frequency} ({} cells, r={radius_m} m)", self.total_cells)
            }
            GridConfig::Matrix { .. } => format!("matrix ({} cells)", self.total_cells),
        };
        self.world.events.emit(
            0,
            "scenario_loaded",
            [
                ("seed", json!(self.cfg.seed)),
                ("mode", json!(format!("{:?}", self.cfg.mode).to_lowercase())),
                ("durationMs", json!(self.cfg.duration_ms)),
                ("grid", json!(cells_label)),
                ("robots", json!(self.robots.len())),
                ("clients", json!(self.clients.len())),
                ("blockTimeMs", json!(self.cfg.block_time_ms)),
                ("commissionRateBp", json!(self.cfg.commission_rate_bp)),
                (
                    "reputationFloorMillis",
                    json!(self.cfg.reputation_floor_millis),
                ),
            ],
        );

        match self.cfg.mode {
            Mode::Coordinated => {
                self.schedule(self.cfg.block_time_ms, TimerKind::CommitTick);
                for (ci, client) in self.cfg.clients.iter().enumerate() {
                    for (ti, t) in client.jobs.iter().enumerate() {
                        self.schedule(
                            t.post_at_ms,
                            TimerKind::ClientWave {
                                client: ci,
                                template: ti,
                            },
                        );
                    }
                }
            }
            Mode::Baseline => {
                for i in 0..self.baseline.len() {
                    self.schedule(0, TimerKind::BaselineArrive { robot: i });
                }
            }
            Mode::Both => unreachable!("dispatched in run_scenario"),
        }

        let duration = self.cfg.duration_ms;
        loop {
            let t_net = self.net.peek_next_time();
            let t_timer = self.timers.peek().map(|Reverse(t)| t.at);
            let next = match (t_net, t_timer) {
                (None, None) => break,
                (a, b) => a.unwrap_or(u64::MAX).min(b.unwrap_or(u64::MAX)),
            };
            if next > duration {
                break;
            }
            self.now = next;
            // deliveries first, then timers due at the same instant
            loop {
                let deliveries = self.net.step(self.now)?;
                if deliveries.is_empty() {
                    break;
                }
                for ev in deliveries {
                    self.handle_delivery(ev);
                }
            }
            while let Some(Reverse(t)) = self.timers.peek() {
                if t.at > self.now {
                    break;
                }
                let Reverse(t) = self.timers.pop().unwrap();
                self.handle_timer(t.kind);
            }
        }

        self.now = duration;
        if self.world.ledger.pending_len() > 0 {
            let _ = self.world.forced_commit(duration, "end of run");
        }
        let chain_ok = self.world.ledger.verify_chain();
        self.world.events.emit(
            duration,
            "run_complete",
            [
                ("coveredCells", json!(self.covered.len())),
                ("totalCells", json!(self.total_cells)),
                ("ledgerVerified", json!(chain_ok)),
                ("blocks", json!(self.world.ledger.blocks().len())),
            ],
        );
        assert!(chain_ok, "ledger chain must verify at end of run");

        let mut metrics = compute_metrics(&self.world.events, self.total_cells);
        for ((a, b), stats) in self.net.link_stats() {
            metrics.link_counters.insert(format!("{a}<->{b}"), *stats);
        }
        Ok(RunOutput {
            mode: self.cfg.mode,
            world: self.world,
            metrics,
        })
    }

    fn handle_delivery(&mut self, ev: DeliveryEvent) {
        let mut fields = vec![
            ("src", json!(ev.src.0)),
            ("dst", json!(ev.dst.0)),
            ("payloadKind", json!(ev.payload.kind_label())),
            ("sizeBytes", json!(ev.size_bytes)),
            ("sentAtMs", json!(ev.sent_at_ms)),
            ("latencyMs", json!(ev.deliver_at_ms - ev.sent_at_ms)),
        ];
        if let Some(cid) = ev.payload.contract_id() {
            fields.push(("contractId", json!(cid.0)));
        }
        self.world
            .events
            .emit(self.now, "message_delivered", fields);

        let at_sequencer = ev.dst == self.sequencer;
        match ev.payload {
            Payload::JobRequest(JobRequestMsg::Post(params)) if at_sequencer => {
                self.sequencer_post(params)
            }
            Payload::JobRequest(JobRequestMsg::Announce { contract_id, job }) => {
                if let Some(&ri) = self.robot_by_node.get(&ev.dst) {
                    if job.bidding_deadline_ms > self.now {
                        self.robots[ri].auctions.insert(
                            contract_id,
                            AuctionView {
                                job,
                                standing: None,
                            },
                        );
                        self.robot_consider(ri);
                    }
                } else if let Some(&ci) = self.client_by_node.get(&ev.dst) {
                    let client = &mut self.clients[ci];
                    if job.client == client.account {
                        client.caps.insert(contract_id, job.max_price_micro);
                    }
                }
            }
            Payload::Bid(bid) if at_sequencer => {
                match self
                    .world
                    .submit_bid(bid.contract_id, bid.bidder, bid.price_micro, self.now)
                {
                    Ok(outcome) => {
                        self.send(
                            self.sequencer.clone(),
                            Destination::Broadcast,
                            Payload::Contract(ContractMsg::StandingLow {
                                contract_id: outcome.contract_id,
                                price_micro: outcome.standing_low_micro,
                                bidder: outcome.standing_bidder,
                            }),
                        );
                    }
                    Err(_) => {
                        // rejection already logged as bid_rejected; the
                        // bidder rechecks its options on the next
                        // standing-low or finalize broadcast
                    }
                }
            }
            Payload::Contract(msg) => self.handle_contract_msg(ev.dst, msg),
            Payload::LedgerTx(LedgerTxMsg {
                contract_id,
                accept,
            }) if at_sequencer => self.sequencer_accept(contract_id, accept),
            Payload::Deliverable(d) if at_sequencer => {
                self.sequencer_deliverable(d.contract_id, d.blob, d.metadata)
            }
            // everything else is cross-traffic visible to a node that
            // has no action to take (e.g. a robot seeing a post)
            _ => {}
        }
    }

    fn sequencer_post(&mut self, params: JobParams) {
        match self.world.post_job_request(params, self.now) {
            Ok((_, contract_id)) => {
                let job = self
                    .world
                    .job(self.world.contract(contract_id).unwrap().job_id)
                    .unwrap()
                    .clone();
                if let Some(policy) = self.standing_policy_for(&job) {
                    self.standing.insert(contract_id, policy);
                }
                self.schedule(
                    job.bidding_deadline_ms,
                    TimerKind::Finalize {
                        contract: contract_id,
                    },
                );
                self.schedule(
                    job.execution_deadline_ms + 1,
                    TimerKind::ExecutionDeadline {
                        contract: contract_id,
                    },
                );
                self.send(
                    self.sequencer.clone(),
                    Destination::Broadcast,
                    Payload::JobRequest(JobRequestMsg::Announce { contract_id, job }),
                );
            }
            Err(e) => {
                self.world.events.emit(
                    self.now,
                    "job_post_rejected",
                    [("detail", json!(e.to_string()))],
                );
            }
        }
    }

    fn sequencer_accept(&mut self, contract_id: ContractId, accept: bool) {
        if !accept {
            if let Err(e) = self.world.decline_contract(contract_id, self.now) {
                self.warn("decline", &e);
            }
            self.send(
                self.sequencer.clone(),
                Destination::Broadcast,
                Payload::Contract(ContractMsg::Expired { contract_id }),
            );
            self.maybe_reauction(contract_id);
            return;
        }
        match self.world.accept_and_escrow(contract_id, self.now) {
            Ok(contract) => {
                let winner = contract.winner.expect("accepted contract has winner");
                let ri = self.robot_by_account[&winner];
                let node = self.robots[ri].node.clone();
                self.send(
                    self.sequencer.clone(),
                    Destination::Node(node),
                    Payload::Contract(ContractMsg::ExecutionOrder { contract_id }),
                );
            }
            Err(MarketError::InsolventClient { .. }) => {
                // no re-auction: the client cannot fund this job anyway
                self.standing.remove(&contract_id);
                self.send(
                    self.sequencer.clone(),
                    Destination::Broadcast,
                    Payload::Contract(ContractMsg::Failed {
                        contract_id,
                        reason: "client insolvent at escrow time".to_string(),
                    }),
                );
            }
            Err(e) => self.warn("accept_and_escrow", &e),
        }
    }

    fn sequencer_deliverable(
        &mut self,
        contract_id: ContractId,
        blob: crate::contentstore::Blob,
        metadata: crate::marketplace::MapMetadata,
    ) {
        match self
            .world
            .submit_deliverable(contract_id, &blob, metadata, self.now)
        {
            Ok(report) if report.passed => match self.world.settle(contract_id, self.now) {
                Ok(record) => {
                    let cells: Vec<CellId> = self
                        .world
                        .job(record.job_id)
                        .map(|j| j.target_cells.iter().copied().collect())
                        .unwrap_or_default();
                    for cell in cells {
                        self.mark_covered(cell, Some(contract_id));
                    }
                    self.send(
                        self.sequencer.clone(),
                        Destination::Broadcast,
                        Payload::Contract(ContractMsg::Settled {
                            contract_id,
                            winner: record.winner,
                            price_micro: record.price_micro,
                        }),
                    );
                }
                Err(e) => self.warn("settle", &e),
            },
            Ok(_) => {
                // plausibility failure already failed the contract
                self.send(
                    self.sequencer.clone(),
                    Destination::Broadcast,
                    Payload::Contract(ContractMsg::Failed {
                        contract_id,
                        reason: "plausibility check failed".to_string(),
                    }),
                );
                self.maybe_reauction(contract_id);
            }
            Err(MarketError::DeadlineExceeded { .. }) => {
                self.send(
                    self.sequencer.clone(),
                    Destination::Broadcast,
                    Payload::Contract(ContractMsg::Failed {
                        contract_id,
                        reason: "execution deadline exceeded".to_string(),
                    }),
                );
                self.maybe_reauction(contract_id);
            }
            Err(e) => self.warn("submit_deliverable", &e),
        }
    }

    fn handle_contract_msg(&mut self, dst: NodeId, msg: ContractMsg) {
        if let Some(&ri) = self.robot_by_node.get(&dst) {
            match msg {
                ContractMsg::StandingLow {
                    contract_id,
                    price_micro,
                    bidder,
                } => {
                    if let Some(view) = self.robots[ri].auctions.get_mut(&contract_id) {
                        view.standing = Some((price_micro, bidder));
                    }
                    let me = self.robots[ri].spec.account;
                    if self.robots[ri].engaged == Some(contract_id) && bidder != me {
                        // a standing price above this robot's own latest
                        // bid means that bid is still in flight or
                        // already ahead; only react when undercut
                        let mine = self.robots[ri].outstanding_bid;
                        if mine.map(|m| price_micro <= m).unwrap_or(true) {
                            self.robot_rebid_or_release(ri, contract_id);
                        }
                    }
                }
                ContractMsg::Finalized {
                    contract_id,
                    winner,
                    ..
                } => {
                    self.robots[ri].auctions.remove(&contract_id);
                    let me = self.robots[ri].spec.account;
                    if self.robots[ri].engaged == Some(contract_id) {
                        self.robots[ri].outstanding_bid = None;
                        if winner == me {
                            self.robots[ri].busy = true; // awaiting execution order
                        } else {
                            self.robots[ri].engaged = None;
                            self.robot_consider(ri);
                        }
                    }
                }
                ContractMsg::Expired { contract_id } | ContractMsg::Failed { contract_id, .. } => {
                    self.robots[ri].auctions.remove(&contract_id);
                    if self.robots[ri].engaged == Some(contract_id) {
                        self.robots[ri].engaged = None;
                        self.robots[ri].outstanding_bid = None;
                        self.robots[ri].busy = false;
                        self.robot_consider(ri);
                    }
                }
                ContractMsg::ExecutionOrder { contract_id } => self.robot_execute(ri, contract_id),
                ContractMsg::Settled {
                    contract_id,
                    winner,
                    ..
                } => {
                    if self.robots[ri].spec.account == winner
                        && self.robots[ri].engaged == Some(contract_id)
                    {
                        self.robots[ri].engaged = None;
                        self.robots[ri].outstanding_bid = None;
                        self.robots[ri].busy = false;
                        self.robot_consider(ri);
                    }
                }
            }
        } else if let Some(&ci) = self.client_by_node.get(&dst) {
            match msg {
                ContractMsg::Finalized {
                    contract_id,
                    price_micro,
                    ..
                } => {
                    let client = &mut self.clients[ci];
                    if let Some(&cap) = client.caps.get(&contract_id) {
                        let offer = agents::FinalizedOffer {
                            contract_id,
                            price_micro,
                            max_price_micro: cap,
                        };
                        for action in agents::client_step(&[], &[offer]) {
                            match action {
                                agents::ClientAction::AcceptContract(cid) => {
                                    let node = self.clients[ci].node.clone();
                                    self.send(
                                        node,
                                        Destination::Node(self.sequencer.clone()),
                                        Payload::LedgerTx(LedgerTxMsg {
                                            contract_id: cid,
                                            accept: true,
                                        }),
                                    );
                                }
                                agents::ClientAction::DeclineContract(cid) => {
                                    let node = self.clients[ci].node.clone();
                                    self.send(
                                        node,
                                        Destination::Node(self.sequencer.clone()),
                                        Payload::LedgerTx(LedgerTxMsg {
                                            contract_id: cid,
                                            accept: false,
                                        }),
                                    );
                                }
                                agents::ClientAction::PostJob { .. } => {}
                            }
                        }
                    }
                }
                ContractMsg::Expired { contract_id }
                | ContractMsg::Failed { contract_id, .. }
                | ContractMsg::Settled { contract_id, .. } => {
                    self.clients[ci].caps.remove(&contract_id);
                }
                _ => {}
            }
        }
    }

    fn handle_timer(&mut self, kind: TimerKind) {
        match kind {
            TimerKind::InjectFault { index } => {
                let fault = self.faults[index].fault.clone();
                self.world.events.emit(
                    self.now,
                    "fault_injected",
                    [("detail", json!(format!("{fault:?}")))],
                );
                if let Err(e) = self.net.inject_fault(fault) {
                    self.warn("inject_fault", &e);
                }
            }
            TimerKind::CommitTick => {
                if self.world.ledger.pending_len() > 0 {
                    if let Err(e) = self.world.forced_commit(self.now, "block interval") {
                        self.warn("commit_tick", &e);
                    }
                }
                self.schedule(self.now + self.cfg.block_time_ms, TimerKind::CommitTick);
            }
            TimerKind::ClientWave { client, template } => self.client_wave(client, template),
            TimerKind::Finalize { contract } => {
                match self.world.finalize_auction(contract, self.now) {
                    Ok(c) => {
                        let expired = c.state != ContractState::BiddingClosed;
                        let msg = match (c.state, c.winner) {
                            (ContractState::BiddingClosed, Some(winner)) => {
                                ContractMsg::Finalized {
                                    contract_id: contract,
                                    winner,
                                    price_micro: c.price_micro,
                                }
                            }
                            _ => ContractMsg::Expired {
                                contract_id: contract,
                            },
                        };
                        self.send(
                            self.sequencer.clone(),
                            Destination::Broadcast,
                            Payload::Contract(msg),
                        );
                        if expired {
                            self.maybe_reauction(contract);
                        }
                    }
                    Err(e) => self.warn("finalize", &e),
                }
            }
            TimerKind::ExecutionDeadline { contract } => {
                match self.world.fail_if_overdue(contract, self.now) {
                    Ok(true) => {
                        self.send(
                            self.sequencer.clone(),
                            Destination::Broadcast,
                            Payload::Contract(ContractMsg::Failed {
                                contract_id: contract,
                                reason: "execution deadline exceeded".to_string(),
                            }),
                        );
                        self.maybe_reauction(contract);
                    }
                    Ok(false) => {}
                    Err(e) => self.warn("execution_deadline", &e),
                }
            }
            TimerKind::MappingComplete { robot } => self.robot_upload(robot),
            TimerKind::BaselineArrive { robot } => self.baseline_arrive(robot),
        }
    }

    fn template_cells(&self, ci: usize, ti: usize) -> BTreeSet<CellId> {
        match &self.cfg.clients[ci].jobs[ti].cells {
            Some(cells) => cells.iter().map(|&i| self.model.cell(i)).collect(),
            None => self.model.cells().into_iter().collect(),
        }
    }

    fn template_requirements(&self, ci: usize, ti: usize) -> crate::marketplace::JobRequirements {
        let template = &self.cfg.clients[ci].jobs[ti];
        crate::marketplace::JobRequirements {
            min_resolution_m_per_px: template.min_resolution_m_per_px,
            required_sensors: template.required_sensors.clone(),
            allowed_algorithms: template.allowed_algorithms.clone(),
        }
    }

    /// The client's one-time posting of a job template over the Earth
    /// link: a single job for one-shot templates, one job per cell for
    /// standing repeat-until-covered orders.
    fn client_wave(&mut self, ci: usize, ti: usize) {
        let template = &self.cfg.clients[ci].jobs[ti];
        let account = self.clients[ci].account;
        let node = self.clients[ci].node.clone();
        let earth_latency = self
            .net
            .link_latency_ms(&node, &self.sequencer)
            .unwrap_or(crate::netsim::DEFAULT_EARTH_LATENCY_MS);
        let bidding_deadline = self.now + earth_latency + template.bidding_window_ms;
        let execution_deadline = bidding_deadline + template.execution_window_ms;
        let repeat = template.repeat_until_covered;
        let max_price = template.max_price_micro;
        let all_cells = self.template_cells(ci, ti);
        let requirements = self.template_requirements(ci, ti);

        let jobs: Vec<BTreeSet<CellId>> = if repeat {
            all_cells
                .iter()
                .map(|c| [*c].into_iter().collect())
                .collect()
        } else {
            vec![all_cells]
        };
        for target_cells in jobs {
            let params = JobParams {
                client: account,
                target_cells,
                max_price_micro: max_price,
                bidding_deadline_ms: bidding_deadline,
                execution_deadline_ms: execution_deadline,
                requirements: requirements.clone(),
            };
            self.send(
                node.clone(),
                Destination::Node(self.sequencer.clone()),
                Payload::JobRequest(JobRequestMsg::Post(params)),
            );
        }
    }

    /// Re-auction the cells of a dead contract under its standing
    /// order, sequencer-side and immediately, unless they are covered
    /// by now.
    fn maybe_reauction(&mut self, contract_id: ContractId) {
        let Some((ci, ti)) = self.standing.remove(&contract_id) else {
            return;
        };
        let cells: BTreeSet<CellId> = match self.world.contract(contract_id) {
            Ok(c) => match self.world.job(c.job_id) {
                Some(j) => j.target_cells.clone(),
                None => return,
            },
            Err(_) => return,
        };
        if cells.iter().all(|c| self.covered.contains(c)) {
            return;
        }
        let template = &self.cfg.clients[ci].jobs[ti];
        let params = JobParams {
            client: self.clients[ci].account,
            target_cells: cells,
            max_price_micro: template.max_price_micro,
            bidding_deadline_ms: self.now + template.bidding_window_ms,
            execution_deadline_ms: self.now
                + template.bidding_window_ms
                + template.execution_window_ms,
            requirements: self.template_requirements(ci, ti),
        };
        self.sequencer_post(params);
    }

    /// Pick the cheapest-to-serve open auction and bid on it. Robots
    /// keep at most one live bid so they can never win two contracts at
    /// once.
    fn robot_consider(&mut self, ri: usize) {
        if self.robots[ri].busy || self.robots[ri].engaged.is_some() {
            return;
        }
        let now = self.now;
        self.robots[ri]
            .auctions
            .retain(|_, v| v.job.bidding_deadline_ms > now);
        let views: Vec<(ContractId, JobRequest, Option<Micro>)> = self.robots[ri]
            .auctions
            .iter()
            .map(|(cid, v)| (*cid, v.job.clone(), v.standing.map(|(p, _)| p)))
            .collect();
        if views.is_empty() {
            return;
        }
        // order candidates by cost floor, then lowest target cell so
        // exact ties resolve the same way the baseline greedy does,
        // then contract id
        let mut best: Option<(Micro, CellId, ContractId, Micro)> = None;
        let mut first_abstain: Option<(&'static str, ContractId)> = None;
        for (cid, job, standing) in &views {
            match decide_bid(&self.robots[ri].spec, job, *standing, &self.model) {
                Ok(BidDecision::Bid {
                    price_micro,
                    cost_floor_micro,
                }) => {
                    let cell = *job.target_cells.iter().next().expect("jobs have cells");
                    let candidate = (cost_floor_micro, cell, *cid, price_micro);
                    if best
                        .map(|b| (candidate.0, candidate.1, candidate.2) < (b.0, b.1, b.2))
                        .unwrap_or(true)
                    {
                        best = Some(candidate);
                    }
                }
                Ok(BidDecision::Abstain { reason, .. }) => {
                    if first_abstain.is_none() {
                        first_abstain = Some((reason.label(), *cid));
                    }
                }
                Err(e) => self.warn("decide_bid", &e),
            }
        }
        match best {
            Some((floor, _, contract_id, price)) => {
                self.world.events.emit(
                    self.now,
                    "bid_decision",
                    [
                        ("robot", json!(self.robots[ri].spec.name)),
                        ("contractId", json!(contract_id.0)),
                        ("costFloorMicro", json!(floor)),
                        ("priceMicro", json!(price)),
                        ("detail", json!("bid")),
                    ],
                );
                self.robots[ri].engaged = Some(contract_id);
                self.robots[ri].outstanding_bid = Some(price);
                let node = self.robots[ri].node.clone();
                let bidder = self.robots[ri].spec.account;
                self.send(
                    node,
                    Destination::Node(self.sequencer.clone()),
                    Payload::Bid(crate::netsim::BidMsg {
                        contract_id,
                        bidder,
                        price_micro: price,
                    }),
                );
            }
            None => {
                if let Some((reason, cid)) = first_abstain {
                    self.world.events.emit(
                        self.now,
                        "bid_decision",
                        [
                            ("robot", json!(self.robots[ri].spec.name)),
                            ("contractId", json!(cid.0)),
                            ("detail", json!(reason)),
                        ],
                    );
                }
            }
        }
    }

    /// Standing low moved under this robot's bid: undercut again or let
    /// the auction go.
    fn robot_rebid_or_release(&mut self, ri: usize, contract_id: ContractId) {
        let Some(view) = self.robots[ri].auctions.get(&contract_id).cloned() else {
            self.robots[ri].engaged = None;
            self.robots[ri].outstanding_bid = None;
            self.robot_consider(ri);
            return;
        };
        let standing = view.standing.map(|(p, _)| p);
        match decide_bid(&self.robots[ri].spec, &view.job, standing, &self.model) {
            Ok(BidDecision::Bid {
                price_micro,
                cost_floor_micro,
            }) => {
                self.world.events.emit(
                    self.now,
                    "bid_decision",
                    [
                        ("robot", json!(self.robots[ri].spec.name)),
                        ("contractId", json!(contract_id.0)),
                        ("costFloorMicro", json!(cost_floor_micro)),
                        ("priceMicro", json!(price_micro)),
                        ("detail", json!("rebid")),
                    ],
                );
                self.robots[ri].outstanding_bid = Some(price_micro);
                let node = self.robots[ri].node.clone();
                let bidder = self.robots[ri].spec.account;
                self.send(
                    node,
                    Destination::Node(self.sequencer.clone()),
                    Payload::Bid(crate::netsim::BidMsg {
                        contract_id,
                        bidder,
                        price_micro,
                    }),
                );
            }
            Ok(BidDecision::Abstain { reason, .. }) => {
                self.world.events.emit(
                    self.now,
                    "bid_decision",
                    [
                        ("robot", json!(self.robots[ri].spec.name)),
                        ("contractId", json!(contract_id.0)),
                        ("detail", json!(reason.label())),
                    ],
                );
                self.robots[ri].engaged = None;
                self.robots[ri].outstanding_bid = None;
                self.robot_consider(ri);
            }
            Err(e) => self.warn("rebid", &e),
        }
    }

    /// Execution order arrived: the contract turns Executing and the
    /// robot starts its mapping run.
    fn robot_execute(&mut self, ri: usize, contract_id: ContractId) {
        if let Err(e) = self.world.begin_execution(contract_id, self.now) {
            self.warn("begin_execution", &e);
            return;
        }
        let contract = self.world.contract(contract_id).unwrap().clone();
        let job = self.world.job(contract.job_id).unwrap().clone();
        let unclaimed: BTreeSet<CellId> = job
            .target_cells
            .iter()
            .filter(|c| self.world.market.pioneers.get(**c).is_none())
            .copied()
            .collect();
        let from_cell = self.robots[ri].spec.current_cell;
        let seed = self.cfg.seed;
        match execute_mapping(
            &mut self.robots[ri].spec,
            &job,
            &contract,
            &self.model,
            self.now,
            seed,
            &unclaimed,
        ) {
            Ok(run) => {
                self.robots[ri].busy = true;
                self.robots[ri].pending_run = Some(PendingRun {
                    contract: contract_id,
                    artifact: run.artifact,
                    from_cell,
                    to_cell: self.robots[ri].spec.current_cell,
                    distance_m: run.distance_m,
                });
                self.schedule(
                    run.completes_at_ms,
                    TimerKind::MappingComplete { robot: ri },
                );
            }
            Err(e) => {
                // infeasible deadline: the robot sits it out and the
                // execution-deadline sweep fails the contract
                self.world.events.emit(
                    self.now,
                    "mapping_infeasible",
                    [
                        ("robot", json!(self.robots[ri].spec.name)),
                        ("contractId", json!(contract_id.0)),
                        ("detail", json!(e.to_string())),
                    ],
                );
            }
        }
    }

    /// Mapping finished: log the movement and upload the deliverable to
    /// the sequencer (the big transfer).
    fn robot_upload(&mut self, ri: usize) {
        let Some(run) = self.robots[ri].pending_run.take() else {
            return;
        };
        self.world.events.emit(
            self.now,
            "robot_move",
            [
                ("robot", json!(self.robots[ri].spec.name)),
                ("fromCell", json!(run.from_cell.to_string())),
                ("toCell", json!(run.to_cell.to_string())),
                ("distanceM", json!(run.distance_m)),
                ("contractId", json!(run.contract.0)),
            ],
        );
        let node = self.robots[ri].node.clone();
        self.send(
            node,
            Destination::Node(self.sequencer.clone()),
            Payload::Deliverable(crate::netsim::DeliverableMsg {
                contract_id: run.contract,
                blob: run.artifact.blob,
                metadata: run.artifact.metadata,
            }),
        );
    }

    fn mark_covered(&mut self, cell: CellId, contract: Option<ContractId>) {
        if self.covered.insert(cell) {
            let mut fields = vec![
                ("cell", json!(cell.to_string())),
                (
                    "fractionMapped",
                    json!(self.covered.len() as f64 / self.total_cells.max(1) as f64),
                ),
            ];
            if let Some(cid) = contract {
                fields.push(("contractId", json!(cid.0)));
            }
            self.world.events.emit(self.now, "cell_mapped", fields);
        } else {
            self.world.events.emit(
                self.now,
                "cell_remapped",
                [("cell", json!(cell.to_string()))],
            );
        }
    }

    /// Baseline: a robot finished its current cell (or is waking for the
    /// first time); record it and pick the next nearest unknown cell.
    fn baseline_arrive(&mut self, ri: usize) {
        self.baseline[ri].pending_arrival = false;
        if let Some(done) = self.baseline_pending.remove(&ri) {
            self.world.events.emit(
                self.now,
                "robot_move",
                [
                    ("robot", json!(self.baseline[ri].spec.name)),
                    ("fromCell", json!(done.from.to_string())),
                    ("toCell", json!(done.to.to_string())),
                    ("distanceM", json!(done.distance_m)),
                ],
            );
            self.mark_covered(done.to, None);
        }
        let moves = independent_baseline_step(&mut self.baseline, &self.model, self.now)
            .expect("baseline cells come from the model");
        for mv in moves {
            self.schedule(
                mv.completes_at_ms,
                TimerKind::BaselineArrive {
                    robot: mv.robot_index,
                },
            );
            self.baseline_pending.insert(mv.robot_index, mv);
        }
    }

    fn warn(&mut self, site: &str, err: &dyn std::fmt::Display) {
        self.world.events.emit(
            self.now,
            "sim_warning",
            [("site", json!(site)), ("detail", json!(err.to_string()))],
        );
    }
}
