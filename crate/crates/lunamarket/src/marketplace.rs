//! Job marketplace: posting, descending-price bidding, escrow, the
//! deliverable plausibility check, atomic settlement, pioneer
//! recognition and resale commissions.
//!
//! The auction is an open-cry reverse auction with a hard deadline:
//! every accepted bid must strictly undercut the standing low (first bid
//! must only respect the client's price cap), and the lowest bid at the
//! deadline wins. Escrow is an ordinary ledger account created per
//! contract and rekeyed to the template principal when the client
//! accepts, so the platform can pay out or refund without further
//! client signatures.
//!
//! Multi-transaction steps (escrow, settlement, resale) are submitted
//! against a ledger checkpoint and committed as one forced block; any
//! failure rolls the queue back to the checkpoint, so partial state is
//! never observable.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::contentstore::{Blob, ContentHash, ContentStore, StoreError};
use crate::digest::Enc;
use crate::events::EventLog;
use crate::ledger::{
    AccountId, AssetId, Ledger, LedgerError, Micro, Reputation, Transaction, TxKind,
};
use crate::selenography::{CellId, SelenographicCoord};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct JobRequestId(pub u64);

impl fmt::Display for JobRequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "job-{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct ContractId(pub u64);

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "contract-{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JobRequirements {
    /// Coarsest acceptable resolution, meters per pixel.
    pub min_resolution_m_per_px: f64,
    pub required_sensors: BTreeSet<String>,
    /// Empty means any algorithm is acceptable.
    pub allowed_algorithms: BTreeSet<String>,
}

/// What a client submits; ids are assigned by the marketplace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JobParams {
    pub client: AccountId,
    pub target_cells: BTreeSet<CellId>,
    pub max_price_micro: Micro,
    pub bidding_deadline_ms: u64,
    pub execution_deadline_ms: u64,
    pub requirements: JobRequirements,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JobRequest {
    pub id: JobRequestId,
    pub client: AccountId,
    pub target_cells: BTreeSet<CellId>,
    pub max_price_micro: Micro,
    pub bidding_deadline_ms: u64,
    pub execution_deadline_ms: u64,
    pub requirements: JobRequirements,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Bid {
    pub job_id: JobRequestId,
    pub contract_id: ContractId,
    pub bidder: AccountId,
    pub price_micro: Micro,
    pub time_ms: u64,
    pub bidder_reputation: Reputation,
}

#[derive(Clone, Debug)]
pub struct BidOutcome {
    pub contract_id: ContractId,
    pub standing_low_micro: Micro,
    pub standing_bidder: AccountId,
    pub accepted_count: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ContractState {
    Open,
    BiddingClosed,
    Accepted,
    Executing,
    Delivered,
    Settled,
    Expired,
    Failed,
}

impl ContractState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            ContractState::Settled | ContractState::Expired | ContractState::Failed
        )
    }
}

impl fmt::Display for ContractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Rank bids best-first: lowest price, then earliest time, then
/// lexicographic bidder id.
pub fn rank_bids(bids: &[Bid]) -> Vec<Bid> {
    let mut ranked = bids.to_vec();
    ranked.sort_by(|a, b| {
        a.price_micro
            .cmp(&b.price_micro)
            .then(a.time_ms.cmp(&b.time_ms))
            .then(a.bidder.to_hex().cmp(&b.bidder.to_hex()))
    });
    ranked
}

/// Legal state-machine edges. `BiddingClosed -> Failed` covers the
/// client turning out insolvent at escrow time.
pub fn transition_allowed(from: ContractState, to: ContractState) -> bool {
    use ContractState::*;
    matches!(
        (from, to),
        (Open, BiddingClosed)
            | (Open, Expired)
            | (BiddingClosed, Accepted)
            | (BiddingClosed, Expired)
            | (BiddingClosed, Failed)
            | (Accepted, Executing)
            | (Accepted, Failed)
            | (Executing, Delivered)
            | (Executing, Failed)
            | (Delivered, Settled)
            | (Delivered, Failed)
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JobContract {
    pub id: ContractId,
    pub job_id: JobRequestId,
    pub state: ContractState,
    pub winner: Option<AccountId>,
    pub price_micro: Micro,
    pub escrow_held_micro: Micro,
    pub escrow_account: AccountId,
    pub deliverable: Option<(ContentHash, AssetId)>,
    /// Bidding time limit (the spam guard from the auction design).
    pub time_limit_ms: u64,
}

/// On-chain descriptive record of a map asset. Only `price_micro` is
/// mutable after mint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MapMetadata {
    pub cells: BTreeSet<CellId>,
    pub bounding_coords: Vec<SelenographicCoord>,
    pub resolution_m_per_px: f64,
    pub sensors: BTreeSet<String>,
    pub algorithm: String,
    pub price_micro: Micro,
    pub content_hash: ContentHash,
    pub explorer: AccountId,
    pub pioneer_of: BTreeSet<CellId>,
}

impl MapMetadata {
    /// Canonical encoding for transaction hashing.
    pub fn encode(&self, e: &mut Enc) {
        e.put_u32(self.cells.len() as u32);
        for c in &self.cells {
            e.put_u32(c.frequency);
            e.put_u32(c.index);
        }
        e.put_u32(self.bounding_coords.len() as u32);
        for c in &self.bounding_coords {
            e.put_f64(c.lat_deg);
            e.put_f64(c.lon_deg);
        }
        e.put_f64(self.resolution_m_per_px);
        e.put_u32(self.sensors.len() as u32);
        for s in &self.sensors {
            e.put_str(s);
        }
        e.put_str(&self.algorithm);
        e.put_u64(self.price_micro);
        e.put_raw(&self.content_hash.0 .0);
        e.put_raw(&self.explorer.0 .0);
        e.put_u32(self.pioneer_of.len() as u32);
        for c in &self.pioneer_of {
            e.put_u32(c.frequency);
            e.put_u32(c.index);
        }
    }

    /// Equality over everything except the mutable price field.
    pub fn descriptive_eq(&self, other: &MapMetadata) -> bool {
        self.cells == other.cells
            && self.bounding_coords == other.bounding_coords
            && self.resolution_m_per_px == other.resolution_m_per_px
            && self.sensors == other.sensors
            && self.algorithm == other.algorithm
            && self.content_hash == other.content_hash
            && self.explorer == other.explorer
            && self.pioneer_of == other.pioneer_of
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PioneerEntry {
    pub pioneer_client: AccountId,
    pub explorer_robot: AccountId,
    pub asset_id: AssetId,
    pub settled_at_ms: u64,
}

/// Write-once registry of cell pioneers.
#[derive(Clone, Debug, Default)]
pub struct PioneerRegistry {
    entries: BTreeMap<CellId, PioneerEntry>,
}

impl PioneerRegistry {
    /// Record the pioneer of a cell; returns false (and changes nothing)
    /// if the cell already has one.
    pub fn claim(&mut self, cell: CellId, entry: PioneerEntry) -> bool {
        if self.entries.contains_key(&cell) {
            return false;
        }
        self.entries.insert(cell, entry);
        true
    }

    pub fn get(&self, cell: CellId) -> Option<&PioneerEntry> {
        self.entries.get(&cell)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellId, &PioneerEntry)> {
        self.entries.iter()
    }
}

/// Resale commission rate in basis points of the sale price.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CommissionPolicy {
    pub rate_bp: u32,
}

impl CommissionPolicy {
    pub fn commission_micro(&self, sale_price: Micro) -> Micro {
        (sale_price as u128 * self.rate_bp as u128 / 10_000) as Micro
    }
}

impl Default for CommissionPolicy {
    fn default() -> CommissionPolicy {
        CommissionPolicy { rate_bp: 500 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReputationEvent {
    /// Contract settled successfully: +0.05
    Settled,
    /// Won the auction but failed to deliver: -0.20
    FailedAfterWin,
    /// Withdrew a standing bid: -0.10
    BidWithdrawn,
}

impl ReputationEvent {
    pub fn delta_millis(self) -> i32 {
        match self {
            ReputationEvent::Settled => 50,
            ReputationEvent::FailedAfterWin => -200,
            ReputationEvent::BidWithdrawn => -100,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ReputationEvent::Settled => "settled",
            ReputationEvent::FailedAfterWin => "failed_after_win",
            ReputationEvent::BidWithdrawn => "bid_withdrawn",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlausibilityFailure {
    /// (a) metadata content hash does not match the stored blob
    HashMismatch,
    /// (b) claimed cells do not cover the requested target cells
    MissingCells,
    /// (c) resolution coarser than required
    ResolutionTooCoarse,
    /// (d) required sensors missing from the metadata
    MissingSensors,
    /// (e) algorithm not among the allowed set
    AlgorithmNotAllowed,
    /// (f) descriptive metadata differs from what was minted
    MetadataMutated,
}

#[derive(Clone, Debug)]
pub struct PlausibilityReport {
    pub contract_id: ContractId,
    pub passed: bool,
    pub failures: Vec<PlausibilityFailure>,
    pub content_hash: ContentHash,
    pub asset_id: AssetId,
}

#[derive(Clone, Debug)]
pub struct SettlementRecord {
    pub contract_id: ContractId,
    pub job_id: JobRequestId,
    pub client: AccountId,
    pub winner: AccountId,
    pub price_micro: Micro,
    pub asset_id: AssetId,
    pub content_hash: ContentHash,
    /// Cells newly claimed for the client in the pioneer registry.
    pub pioneered_cells: Vec<CellId>,
    pub block_height: u64,
    pub time_ms: u64,
}

#[derive(Clone, Debug)]
pub struct SaleRecord {
    pub asset_id: AssetId,
    pub seller: AccountId,
    pub buyer: AccountId,
    pub sale_price_micro: Micro,
    /// Total commission actually distributed to pioneers.
    pub commission_micro: Micro,
    pub pioneer_payouts: Vec<(AccountId, Micro)>,
    pub time_ms: u64,
}

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("client {client} cannot cover {needed} (has {available})")]
    InsolventClient {
        client: AccountId,
        needed: Micro,
        available: Micro,
    },
    #[error("job has no target cells")]
    EmptyTargets,
    #[error("max price must be positive")]
    InvalidPrice,
    #[error("bidding deadline {bidding} must precede execution deadline {execution}")]
    InvalidDeadlines { bidding: u64, execution: u64 },
    #[error("unknown contract {0}")]
    UnknownContract(ContractId),
    #[error("auction for {0} is closed")]
    AuctionClosed(ContractId),
    #[error("bid {bid} does not undercut the standing low {standing}")]
    NotLower { bid: Micro, standing: Micro },
    #[error("bid {bid} exceeds the client's maximum price {max}")]
    OverMaxPrice { bid: Micro, max: Micro },
    #[error("bidder reputation {got} below the floor {floor}")]
    ReputationTooLow { got: u32, floor: u32 },
    #[error("auction not due until {deadline} (now {now})")]
    NotYetDue { now: u64, deadline: u64 },
    #[error("{contract} is {actual}, expected {expected}")]
    WrongState {
        contract: ContractId,
        actual: ContractState,
        expected: ContractState,
    },
    #[error("execution deadline {deadline} exceeded at {now}")]
    DeadlineExceeded { now: u64, deadline: u64 },
    #[error("{account} does not hold {asset}")]
    NotHolder { account: AccountId, asset: AssetId },
    #[error("buyer {buyer} cannot cover {needed} (has {available})")]
    InsolventBuyer {
        buyer: AccountId,
        needed: Micro,
        available: Micro,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Marketplace-side state, kept apart from ledger balances.
#[derive(Debug)]
pub struct MarketState {
    pub template_principal: AccountId,
    pub commission: CommissionPolicy,
    pub reputation_floor: Reputation,
    next_job: u64,
    next_contract: u64,
    jobs: BTreeMap<JobRequestId, JobRequest>,
    contracts: BTreeMap<ContractId, JobContract>,
    accepted_bids: BTreeMap<ContractId, Vec<Bid>>,
    pub pioneers: PioneerRegistry,
}

#[derive(Clone, Copy, Debug)]
pub struct WorldConfig {
    pub genesis_supply_micro: Micro,
    pub commission_rate_bp: u32,
    pub reputation_floor_millis: u32,
}

impl Default for WorldConfig {
    fn default() -> WorldConfig {
        WorldConfig {
            genesis_supply_micro: 1_000_000_000_000,
            commission_rate_bp: 500,
            reputation_floor_millis: 200,
        }
    }
}

/// One self-contained simulation world: ledger, content store,
/// marketplace state and the event log. Owned and mutated by a single
/// event loop; distinct worlds may run on parallel threads.
#[derive(Debug)]
pub struct World {
    pub ledger: Ledger,
    pub store: ContentStore,
    pub market: MarketState,
    pub events: EventLog,
}

impl World {
    pub fn new(cfg: WorldConfig) -> World {
        let mut ledger = Ledger::new(cfg.genesis_supply_micro);
        let template_principal = ledger
            .create_account(0)
            .expect("zero-balance template account");
        World {
            ledger,
            store: ContentStore::in_memory(),
            market: MarketState {
                template_principal,
                commission: CommissionPolicy {
                    rate_bp: cfg.commission_rate_bp,
                },
                reputation_floor: Reputation::from_millis(cfg.reputation_floor_millis),
                next_job: 0,
                next_contract: 0,
                jobs: BTreeMap::new(),
                contracts: BTreeMap::new(),
                accepted_bids: BTreeMap::new(),
                pioneers: PioneerRegistry::default(),
            },
            events: EventLog::new(),
        }
    }

    pub fn contract(&self, id: ContractId) -> Result<&JobContract, MarketError> {
        self.market
            .contracts
            .get(&id)
            .ok_or(MarketError::UnknownContract(id))
    }

    pub fn job(&self, id: JobRequestId) -> Option<&JobRequest> {
        self.market.jobs.get(&id)
    }

    pub fn contracts(&self) -> impl Iterator<Item = &JobContract> {
        self.market.contracts.values()
    }

    /// Accepted bids for a contract, in acceptance order (strictly
    /// descending prices).
    pub fn accepted_bids(&self, id: ContractId) -> &[Bid] {
        self.market
            .accepted_bids
            .get(&id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn next_signed(&mut self, actor: AccountId, kind: TxKind) -> Result<Transaction, MarketError> {
        let acting = kind.acting_account(actor);
        let signer = self.ledger.authority_of(acting)?;
        let nonce = self.ledger.next_nonce_for(acting)?;
        Ok(Transaction::new(signer, nonce, kind))
    }

    /// Commit everything pending as one block, bumping the timestamp if
    /// a block was already committed in this millisecond.
    pub fn forced_commit(&mut self, now_ms: u64, reason: &str) -> Result<u64, MarketError> {
        let ts = match self.ledger.last_block_time() {
            Some(last) => now_ms.max(last + 1),
            None => now_ms,
        };
        let (height, tx_count, hash) = {
            let block = self.ledger.commit_block(ts)?;
            (block.height, block.txs.len(), block.hash)
        };
        self.events.emit(
            now_ms,
            "block_committed",
            [
                ("height", json!(height)),
                ("txCount", json!(tx_count)),
                ("blockHash", json!(hash.to_hex())),
                ("detail", json!(reason)),
            ],
        );
        Ok(height)
    }

    fn transition(
        &mut self,
        contract_id: ContractId,
        to: ContractState,
        now_ms: u64,
        actor: AccountId,
        detail: &str,
    ) {
        self.transition_with(contract_id, to, now_ms, actor, detail, []);
    }

    fn transition_with(
        &mut self,
        contract_id: ContractId,
        to: ContractState,
        now_ms: u64,
        actor: AccountId,
        detail: &str,
        extra: impl IntoIterator<Item = (&'static str, Value)>,
    ) {
        let contract = self
            .market
            .contracts
            .get_mut(&contract_id)
            .expect("transition on known contract");
        let from = contract.state;
        assert!(
            transition_allowed(from, to),
            "illegal contract transition {from} -> {to}"
        );
        contract.state = to;
        let job_id = contract.job_id;
        let kind = match to {
            ContractState::BiddingClosed => "bidding_closed",
            ContractState::Accepted => "contract_accepted",
            ContractState::Executing => "execution_started",
            ContractState::Delivered => "contract_delivered",
            ContractState::Settled => "contract_settled",
            ContractState::Expired => "contract_expired",
            ContractState::Failed => "contract_failed",
            ContractState::Open => unreachable!("contracts are created Open"),
        };
        let mut fields = vec![
            ("contractId", json!(contract_id.0)),
            ("jobId", json!(job_id.0)),
            ("actor", json!(actor.to_hex())),
            ("detail", json!(detail)),
            ("from", json!(from.to_string())),
            ("to", json!(to.to_string())),
        ];
        fields.extend(extra);
        self.events.emit(now_ms, kind, fields);
    }

    /// Post a job request: records it on the ledger, opens a contract
    /// with a fresh escrow account, and leaves broadcasting to the
    /// caller's network layer.
    pub fn post_job_request(
        &mut self,
        params: JobParams,
        now_ms: u64,
    ) -> Result<(JobRequestId, ContractId), MarketError> {
        if params.target_cells.is_empty() {
            return Err(MarketError::EmptyTargets);
        }
        if params.max_price_micro == 0 {
            return Err(MarketError::InvalidPrice);
        }
        if params.bidding_deadline_ms >= params.execution_deadline_ms {
            return Err(MarketError::InvalidDeadlines {
                bidding: params.bidding_deadline_ms,
                execution: params.execution_deadline_ms,
            });
        }
        let available = self.ledger.pending_balance_of(params.client)?;
        if available < params.max_price_micro {
            return Err(MarketError::InsolventClient {
                client: params.client,
                needed: params.max_price_micro,
                available,
            });
        }

        let job_id = JobRequestId(self.market.next_job);
        self.market.next_job += 1;
        let contract_id = ContractId(self.market.next_contract);
        self.market.next_contract += 1;
        let escrow_account = self.ledger.create_account(0)?;

        let job = JobRequest {
            id: job_id,
            client: params.client,
            target_cells: params.target_cells,
            max_price_micro: params.max_price_micro,
            bidding_deadline_ms: params.bidding_deadline_ms,
            execution_deadline_ms: params.execution_deadline_ms,
            requirements: params.requirements,
        };

        let payload = serde_json::to_vec(&json!({
            "action": "post_job",
            "jobId": job_id.0,
            "contractId": contract_id.0,
            "maxPriceMicro": job.max_price_micro,
            "cells": job.target_cells.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        }))
        .expect("job payload serializes");
        let tx = self.next_signed(
            job.client,
            TxKind::AppCall {
                contract_id: contract_id.0,
                payload,
            },
        )?;
        self.ledger.submit(tx)?;

        self.market.contracts.insert(
            contract_id,
            JobContract {
                id: contract_id,
                job_id,
                state: ContractState::Open,
                winner: None,
                price_micro: 0,
                escrow_held_micro: 0,
                escrow_account,
                deliverable: None,
                time_limit_ms: job.bidding_deadline_ms,
            },
        );
        self.events.emit(
            now_ms,
            "job_posted",
            [
                ("contractId", json!(contract_id.0)),
                ("jobId", json!(job_id.0)),
                ("actor", json!(job.client.to_hex())),
                ("detail", json!("open for bids")),
                ("maxPriceMicro", json!(job.max_price_micro)),
                ("biddingDeadlineMs", json!(job.bidding_deadline_ms)),
                ("executionDeadlineMs", json!(job.execution_deadline_ms)),
                (
                    "cells",
                    json!(job
                        .target_cells
                        .iter()
                        .map(|c| c.to_string())
                        .collect::<Vec<_>>()),
                ),
            ],
        );
        self.market.jobs.insert(job_id, job);
        Ok((job_id, contract_id))
    }

    /// Accept a bid iff it strictly undercuts the standing low (or is
    /// the first bid at or under the cap), the auction is open, and the
    /// bidder clears the reputation floor.
    pub fn submit_bid(
        &mut self,
        contract_id: ContractId,
        bidder: AccountId,
        price_micro: Micro,
        now_ms: u64,
    ) -> Result<BidOutcome, MarketError> {
        let contract = self.contract(contract_id)?;
        let job = self.market.jobs[&contract.job_id].clone();
        if contract.state != ContractState::Open || now_ms >= job.bidding_deadline_ms {
            self.emit_bid_rejected(contract_id, job.id, bidder, price_micro, now_ms, "closed");
            return Err(MarketError::AuctionClosed(contract_id));
        }
        let reputation = self.ledger.reputation_of(bidder)?;
        if reputation < self.market.reputation_floor {
            self.emit_bid_rejected(
                contract_id,
                job.id,
                bidder,
                price_micro,
                now_ms,
                "reputation_too_low",
            );
            return Err(MarketError::ReputationTooLow {
                got: reputation.millis(),
                floor: self.market.reputation_floor.millis(),
            });
        }
        if price_micro == 0 {
            return Err(MarketError::InvalidPrice);
        }
        if price_micro > job.max_price_micro {
            self.emit_bid_rejected(
                contract_id,
                job.id,
                bidder,
                price_micro,
                now_ms,
                "over_max_price",
            );
            return Err(MarketError::OverMaxPrice {
                bid: price_micro,
                max: job.max_price_micro,
            });
        }
        if let Some(standing) = self
            .market
            .accepted_bids
            .get(&contract_id)
            .and_then(|b| b.last())
        {
            if price_micro >= standing.price_micro {
                let standing = standing.price_micro;
                self.emit_bid_rejected(
                    contract_id,
                    job.id,
                    bidder,
                    price_micro,
                    now_ms,
                    "not_lower",
                );
                return Err(MarketError::NotLower {
                    bid: price_micro,
                    standing,
                });
            }
        }

        let payload = serde_json::to_vec(&json!({
            "action": "bid",
            "contractId": contract_id.0,
            "priceMicro": price_micro,
        }))
        .expect("bid payload serializes");
        let tx = self.next_signed(
            bidder,
            TxKind::AppCall {
                contract_id: contract_id.0,
                payload,
            },
        )?;
        self.ledger.submit(tx)?;

        let bid = Bid {
            job_id: job.id,
            contract_id,
            bidder,
            price_micro,
            time_ms: now_ms,
            bidder_reputation: reputation,
        };
        let bids = self.market.accepted_bids.entry(contract_id).or_default();
        bids.push(bid);
        let count = bids.len();
        self.events.emit(
            now_ms,
            "bid_accepted",
            [
                ("contractId", json!(contract_id.0)),
                ("jobId", json!(job.id.0)),
                ("actor", json!(bidder.to_hex())),
                ("detail", json!("standing low")),
                ("priceMicro", json!(price_micro)),
                ("rank", json!(count)),
            ],
        );
        Ok(BidOutcome {
            contract_id,
            standing_low_micro: price_micro,
            standing_bidder: bidder,
            accepted_count: count,
        })
    }

    fn emit_bid_rejected(
        &mut self,
        contract_id: ContractId,
        job_id: JobRequestId,
        bidder: AccountId,
        price_micro: Micro,
        now_ms: u64,
        reason: &str,
    ) {
        self.events.emit(
            now_ms,
            "bid_rejected",
            [
                ("contractId", json!(contract_id.0)),
                ("jobId", json!(job_id.0)),
                ("actor", json!(bidder.to_hex())),
                ("detail", json!(reason)),
                ("priceMicro", json!(price_micro)),
            ],
        );
    }

    /// Close the auction at or after its deadline: lowest accepted bid
    /// wins (ties break to earliest time, then lexicographic bidder id);
    /// no bids means the contract expires.
    pub fn finalize_auction(
        &mut self,
        contract_id: ContractId,
        now_ms: u64,
    ) -> Result<JobContract, MarketError> {
        let contract = self.contract(contract_id)?;
        if contract.state != ContractState::Open {
            return Err(MarketError::WrongState {
                contract: contract_id,
                actual: contract.state,
                expected: ContractState::Open,
            });
        }
        let job = self.market.jobs[&contract.job_id].clone();
        if now_ms < job.bidding_deadline_ms {
            return Err(MarketError::NotYetDue {
                now: now_ms,
                deadline: job.bidding_deadline_ms,
            });
        }
        let ranked = rank_bids(
            self.market
                .accepted_bids
                .get(&contract_id)
                .map(Vec::as_slice)
                .unwrap_or(&[]),
        );
        self.events.emit(
            now_ms,
            "auction_ranked",
            [
                ("contractId", json!(contract_id.0)),
                ("jobId", json!(job.id.0)),
                ("actor", json!(self.market.template_principal.to_hex())),
                ("detail", json!("ranked proposals at time limit")),
                (
                    "ranking",
                    Value::Array(
                        ranked
                            .iter()
                            .map(|b| {
                                json!({
                                    "bidder": b.bidder.to_hex(),
                                    "priceMicro": b.price_micro,
                                    "timeMs": b.time_ms,
                                })
                            })
                            .collect(),
                    ),
                ),
            ],
        );
        match ranked.first() {
            None => {
                self.transition(
                    contract_id,
                    ContractState::Expired,
                    now_ms,
                    self.market.template_principal,
                    "no bids before the time limit",
                );
            }
            Some(winner) => {
                let (w, p) = (winner.bidder, winner.price_micro);
                {
                    let c = self.market.contracts.get_mut(&contract_id).unwrap();
                    c.winner = Some(w);
                    c.price_micro = p;
                }
                self.transition(
                    contract_id,
                    ContractState::BiddingClosed,
                    now_ms,
                    w,
                    "lowest bid wins",
                );
            }
        }
        Ok(self.market.contracts[&contract_id].clone())
    }

    /// Move the winning price into escrow and hand the escrow account to
    /// the template principal (rekey), all in one block.
    pub fn accept_and_escrow(
        &mut self,
        contract_id: ContractId,
        now_ms: u64,
    ) -> Result<JobContract, MarketError> {
        let contract = self.contract(contract_id)?.clone();
        if contract.state != ContractState::BiddingClosed {
            return Err(MarketError::WrongState {
                contract: contract_id,
                actual: contract.state,
                expected: ContractState::BiddingClosed,
            });
        }
        let job = self.market.jobs[&contract.job_id].clone();
        let price = contract.price_micro;
        let available = self.ledger.pending_balance_of(job.client)?;
        if available < price {
            self.transition(
                contract_id,
                ContractState::Failed,
                now_ms,
                job.client,
                "client insolvent at escrow time",
            );
            return Err(MarketError::InsolventClient {
                client: job.client,
                needed: price,
                available,
            });
        }

        let checkpoint = self.ledger.pending_len();
        let result: Result<(), MarketError> = (|| {
            let pay = self.next_signed(
                job.client,
                TxKind::Payment {
                    from: job.client,
                    to: contract.escrow_account,
                    amount: price,
                },
            )?;
            self.ledger.submit(pay)?;
            let rekey = self.next_signed(
                contract.escrow_account,
                TxKind::Rekey {
                    account: contract.escrow_account,
                    new_authority: self.market.template_principal,
                },
            )?;
            self.ledger.submit(rekey)?;
            self.forced_commit(now_ms, "escrow")?;
            Ok(())
        })();
        if let Err(e) = result {
            self.ledger.truncate_pending(checkpoint);
            return Err(e);
        }

        self.market
            .contracts
            .get_mut(&contract_id)
            .unwrap()
            .escrow_held_micro = price;
        self.transition(
            contract_id,
            ContractState::Accepted,
            now_ms,
            job.client,
            "escrow funded and rekeyed to the template principal",
        );
        Ok(self.market.contracts[&contract_id].clone())
    }

    /// Client turned the finalized contract down; it expires without
    /// escrow having moved.
    pub fn decline_contract(
        &mut self,
        contract_id: ContractId,
        now_ms: u64,
    ) -> Result<(), MarketError> {
        let contract = self.contract(contract_id)?;
        if contract.state != ContractState::BiddingClosed {
            return Err(MarketError::WrongState {
                contract: contract_id,
                actual: contract.state,
                expected: ContractState::BiddingClosed,
            });
        }
        let client = self.market.jobs[&contract.job_id].client;
        self.transition(
            contract_id,
            ContractState::Expired,
            now_ms,
            client,
            "client declined the finalized contract",
        );
        Ok(())
    }

    /// Mark the winner notified and executing.
    pub fn begin_execution(
        &mut self,
        contract_id: ContractId,
        now_ms: u64,
    ) -> Result<(), MarketError> {
        let contract = self.contract(contract_id)?;
        if contract.state != ContractState::Accepted {
            return Err(MarketError::WrongState {
                contract: contract_id,
                actual: contract.state,
                expected: ContractState::Accepted,
            });
        }
        let winner = contract.winner.expect("accepted contract has a winner");
        self.transition(
            contract_id,
            ContractState::Executing,
            now_ms,
            winner,
            "winner notified",
        );
        Ok(())
    }

    /// Store the deliverable, mint its asset and run the plausibility
    /// check. Pass moves the contract to Delivered; fail refunds the
    /// escrow and fails the contract.
    pub fn submit_deliverable(
        &mut self,
        contract_id: ContractId,
        blob: &Blob,
        metadata: MapMetadata,
        now_ms: u64,
    ) -> Result<PlausibilityReport, MarketError> {
        let contract = self.contract(contract_id)?.clone();
        if contract.state != ContractState::Executing {
            return Err(MarketError::WrongState {
                contract: contract_id,
                actual: contract.state,
                expected: ContractState::Executing,
            });
        }
        let job = self.market.jobs[&contract.job_id].clone();
        if now_ms > job.execution_deadline_ms {
            self.fail_contract(contract_id, now_ms, "execution deadline exceeded", true)?;
            return Err(MarketError::DeadlineExceeded {
                now: now_ms,
                deadline: job.execution_deadline_ms,
            });
        }
        let winner = contract.winner.expect("executing contract has a winner");

        let stored_hash = self.store.put(blob)?;

        let checkpoint = self.ledger.pending_len();
        let minted: Result<AssetId, MarketError> = (|| {
            let mint = self.next_signed(
                winner,
                TxKind::AssetCreate {
                    creator: winner,
                    manager: Some(self.market.template_principal),
                    freeze_authority: Some(self.market.template_principal),
                    clawback_authority: Some(self.market.template_principal),
                    metadata: metadata.clone(),
                },
            )?;
            let receipt = self.ledger.submit(mint)?;
            Ok(receipt.created_asset.expect("AssetCreate returns an id"))
        })();
        let asset_id = match minted {
            Ok(id) => id,
            Err(e) => {
                self.ledger.truncate_pending(checkpoint);
                return Err(e);
            }
        };

        let mut failures = Vec::new();
        if metadata.content_hash != stored_hash {
            failures.push(PlausibilityFailure::HashMismatch);
        }
        if !job.target_cells.is_subset(&metadata.cells) {
            failures.push(PlausibilityFailure::MissingCells);
        }
        if metadata.resolution_m_per_px > job.requirements.min_resolution_m_per_px {
            failures.push(PlausibilityFailure::ResolutionTooCoarse);
        }
        if !job
            .requirements
            .required_sensors
            .is_subset(&metadata.sensors)
        {
            failures.push(PlausibilityFailure::MissingSensors);
        }
        if !job.requirements.allowed_algorithms.is_empty()
            && !job
                .requirements
                .allowed_algorithms
                .contains(&metadata.algorithm)
        {
            failures.push(PlausibilityFailure::AlgorithmNotAllowed);
        }
        let minted_meta = &self.ledger.asset(asset_id)?.metadata;
        if !minted_meta.descriptive_eq(&metadata) {
            failures.push(PlausibilityFailure::MetadataMutated);
        }

        let passed = failures.is_empty();
        if let Err(e) = self.forced_commit(now_ms, "deliverable minted") {
            self.ledger.truncate_pending(checkpoint);
            return Err(e);
        }
        self.events.emit(
            now_ms,
            "plausibility_report",
            [
                ("contractId", json!(contract_id.0)),
                ("jobId", json!(job.id.0)),
                ("actor", json!(winner.to_hex())),
                ("detail", json!(if passed { "pass" } else { "fail" })),
                ("passed", json!(passed)),
                (
                    "failures",
                    json!(failures
                        .iter()
                        .map(|f| format!("{f:?}"))
                        .collect::<Vec<_>>()),
                ),
                ("assetId", json!(asset_id.0)),
                ("contentHash", json!(stored_hash.to_hex())),
                ("sizeBytes", json!(blob.size_bytes())),
            ],
        );

        if passed {
            self.market
                .contracts
                .get_mut(&contract_id)
                .unwrap()
                .deliverable = Some((stored_hash, asset_id));
            self.transition(
                contract_id,
                ContractState::Delivered,
                now_ms,
                winner,
                "plausibility check passed",
            );
        } else {
            self.fail_contract(contract_id, now_ms, "plausibility check failed", true)?;
        }
        Ok(PlausibilityReport {
            contract_id,
            passed,
            failures,
            content_hash: stored_hash,
            asset_id,
        })
    }

    /// Fail a non-terminal contract past its execution deadline.
    /// Refunds escrow and penalizes the winner. No-op if the contract is
    /// not in an executing-side state.
    pub fn fail_if_overdue(
        &mut self,
        contract_id: ContractId,
        now_ms: u64,
    ) -> Result<bool, MarketError> {
        let contract = self.contract(contract_id)?;
        let state = contract.state;
        let job = &self.market.jobs[&contract.job_id];
        if now_ms <= job.execution_deadline_ms {
            return Ok(false);
        }
        match state {
            ContractState::Accepted | ContractState::Executing => {
                self.fail_contract(contract_id, now_ms, "execution deadline exceeded", true)?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    /// Move a contract to Failed, refunding any escrow to the client in
    /// its own block.
    fn fail_contract(
        &mut self,
        contract_id: ContractId,
        now_ms: u64,
        reason: &str,
        penalize_winner: bool,
    ) -> Result<(), MarketError> {
        let contract = self.contract(contract_id)?.clone();
        let job = self.market.jobs[&contract.job_id].clone();
        if contract.escrow_held_micro > 0 {
            let checkpoint = self.ledger.pending_len();
            let refund: Result<(), MarketError> = (|| {
                let tx = self.next_signed(
                    contract.escrow_account,
                    TxKind::Payment {
                        from: contract.escrow_account,
                        to: job.client,
                        amount: contract.escrow_held_micro,
                    },
                )?;
                self.ledger.submit(tx)?;
                self.forced_commit(now_ms, "escrow refund")?;
                Ok(())
            })();
            if let Err(e) = refund {
                self.ledger.truncate_pending(checkpoint);
                return Err(e);
            }
            self.events.emit(
                now_ms,
                "escrow_refunded",
                [
                    ("contractId", json!(contract_id.0)),
                    ("jobId", json!(job.id.0)),
                    ("actor", json!(self.market.template_principal.to_hex())),
                    ("detail", json!(reason)),
                    ("amountMicro", json!(contract.escrow_held_micro)),
                ],
            );
            self.market
                .contracts
                .get_mut(&contract_id)
                .unwrap()
                .escrow_held_micro = 0;
        }
        let actor = contract.winner.unwrap_or(job.client);
        self.transition(contract_id, ContractState::Failed, now_ms, actor, reason);
        if penalize_winner {
            if let Some(winner) = contract.winner {
                self.update_reputation(winner, ReputationEvent::FailedAfterWin, now_ms)?;
            }
        }
        Ok(())
    }

    /// Pay the winner from escrow and transfer the map asset to the
    /// client, atomically in one block, then record pioneers.
    pub fn settle(
        &mut self,
        contract_id: ContractId,
        now_ms: u64,
    ) -> Result<SettlementRecord, MarketError> {
        let contract = self.contract(contract_id)?.clone();
        if contract.state != ContractState::Delivered {
            return Err(MarketError::WrongState {
                contract: contract_id,
                actual: contract.state,
                expected: ContractState::Delivered,
            });
        }
        let job = self.market.jobs[&contract.job_id].clone();
        let winner = contract.winner.expect("delivered contract has a winner");
        let (content_hash, asset_id) = contract
            .deliverable
            .expect("delivered contract has a deliverable");

        let checkpoint = self.ledger.pending_len();
        let committed: Result<u64, MarketError> = (|| {
            let pay = self.next_signed(
                contract.escrow_account,
                TxKind::Payment {
                    from: contract.escrow_account,
                    to: winner,
                    amount: contract.escrow_held_micro,
                },
            )?;
            self.ledger.submit(pay)?;
            let transfer = self.next_signed(
                winner,
                TxKind::AssetTransfer {
                    from: winner,
                    to: job.client,
                    asset_id,
                },
            )?;
            self.ledger.submit(transfer)?;
            self.forced_commit(now_ms, "settlement")
        })();
        let block_height = match committed {
            Ok(h) => h,
            Err(e) => {
                self.ledger.truncate_pending(checkpoint);
                return Err(e);
            }
        };

        // pioneer recognition: write-once per cell
        let mut pioneered = Vec::new();
        for cell in &job.target_cells {
            let claimed = self.market.pioneers.claim(
                *cell,
                PioneerEntry {
                    pioneer_client: job.client,
                    explorer_robot: winner,
                    asset_id,
                    settled_at_ms: now_ms,
                },
            );
            if claimed {
                pioneered.push(*cell);
                self.events.emit(
                    now_ms,
                    "pioneer_claimed",
                    [
                        ("contractId", json!(contract_id.0)),
                        ("jobId", json!(job.id.0)),
                        ("actor", json!(job.client.to_hex())),
                        ("detail", json!("first settled map of this cell")),
                        ("cell", json!(cell.to_string())),
                        ("explorer", json!(winner.to_hex())),
                        ("assetId", json!(asset_id.0)),
                    ],
                );
            }
        }

        self.market
            .contracts
            .get_mut(&contract_id)
            .unwrap()
            .escrow_held_micro = 0;
        self.transition_with(
            contract_id,
            ContractState::Settled,
            now_ms,
            winner,
            "escrow paid out and asset transferred",
            [
                ("priceMicro", json!(contract.price_micro)),
                ("client", json!(job.client.to_hex())),
                ("assetId", json!(asset_id.0)),
                ("blockHeight", json!(block_height)),
            ],
        );
        self.update_reputation(winner, ReputationEvent::Settled, now_ms)?;

        Ok(SettlementRecord {
            contract_id,
            job_id: job.id,
            client: job.client,
            winner,
            price_micro: contract.price_micro,
            asset_id,
            content_hash,
            pioneered_cells: pioneered,
            block_height,
            time_ms: now_ms,
        })
    }

    /// Secondary-market sale with pioneer commission: the commission is
    /// split equally across the distinct pioneers of the asset's
    /// pioneered cells; any rounding remainder stays with the seller.
    pub fn resell_asset(
        &mut self,
        asset_id: AssetId,
        seller: AccountId,
        buyer: AccountId,
        sale_price_micro: Micro,
        now_ms: u64,
    ) -> Result<SaleRecord, MarketError> {
        if sale_price_micro == 0 {
            return Err(MarketError::InvalidPrice);
        }
        let params = self.ledger.asset(asset_id)?.clone();
        if self.ledger.holder_of(asset_id) != Some(seller) {
            return Err(MarketError::NotHolder {
                account: seller,
                asset: asset_id,
            });
        }
        let available = self.ledger.pending_balance_of(buyer)?;
        if available < sale_price_micro {
            return Err(MarketError::InsolventBuyer {
                buyer,
                needed: sale_price_micro,
                available,
            });
        }

        let pioneers: BTreeSet<AccountId> = params
            .metadata
            .pioneer_of
            .iter()
            .filter_map(|cell| self.market.pioneers.get(*cell))
            .map(|e| e.pioneer_client)
            .collect();
        let commission = self.market.commission.commission_micro(sale_price_micro);
        let n = pioneers.len() as Micro;
        let share = if n > 0 { commission / n } else { 0 };
        let distributed = share * n;

        let checkpoint = self.ledger.pending_len();
        let result: Result<(), MarketError> = (|| {
            let pay_seller = self.next_signed(
                buyer,
                TxKind::Payment {
                    from: buyer,
                    to: seller,
                    amount: sale_price_micro - distributed,
                },
            )?;
            self.ledger.submit(pay_seller)?;
            for pioneer in &pioneers {
                if share > 0 {
                    let pay = self.next_signed(
                        buyer,
                        TxKind::Payment {
                            from: buyer,
                            to: *pioneer,
                            amount: share,
                        },
                    )?;
                    self.ledger.submit(pay)?;
                }
            }
            let transfer = self.next_signed(
                seller,
                TxKind::AssetTransfer {
                    from: seller,
                    to: buyer,
                    asset_id,
                },
            )?;
            self.ledger.submit(transfer)?;
            if params.manager == Some(self.market.template_principal) {
                let reprice = self.next_signed(
                    self.market.template_principal,
                    TxKind::AssetReconfigure {
                        manager: self.market.template_principal,
                        asset_id,
                        new_price_micro: sale_price_micro,
                    },
                )?;
                self.ledger.submit(reprice)?;
            }
            self.forced_commit(now_ms, "resale")?;
            Ok(())
        })();
        if let Err(e) = result {
            self.ledger.truncate_pending(checkpoint);
            return Err(e);
        }

        let payouts: Vec<(AccountId, Micro)> = if share > 0 {
            pioneers.iter().map(|p| (*p, share)).collect()
        } else {
            Vec::new()
        };
        self.events.emit(
            now_ms,
            "asset_resold",
            [
                ("actor", json!(seller.to_hex())),
                ("detail", json!("secondary sale with pioneer commission")),
                ("assetId", json!(asset_id.0)),
                ("buyer", json!(buyer.to_hex())),
                ("salePriceMicro", json!(sale_price_micro)),
                ("commissionMicro", json!(distributed)),
                (
                    "pioneerPayouts",
                    Value::Array(
                        payouts
                            .iter()
                            .map(|(a, m)| json!({"account": a.to_hex(), "amountMicro": m}))
                            .collect(),
                    ),
                ),
            ],
        );
        Ok(SaleRecord {
            asset_id,
            seller,
            buyer,
            sale_price_micro,
            commission_micro: distributed,
            pioneer_payouts: payouts,
            time_ms: now_ms,
        })
    }

    /// Apply a reputation delta, clamped to [0, 1].
    pub fn update_reputation(
        &mut self,
        account: AccountId,
        event: ReputationEvent,
        now_ms: u64,
    ) -> Result<Reputation, MarketError> {
        let old = self.ledger.reputation_of(account)?;
        let new = old.apply_delta(event.delta_millis());
        self.ledger.set_reputation(account, new);
        self.events.emit(
            now_ms,
            "reputation_updated",
            [
                ("actor", json!(account.to_hex())),
                ("detail", json!(event.label())),
                ("fromMillis", json!(old.millis())),
                ("toMillis", json!(new.millis())),
            ],
        );
        Ok(new)
    }
}
