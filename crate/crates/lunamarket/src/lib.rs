//! Deterministic simulator of a ledger-coordinated, coopetitive
//! multi-robot mapping marketplace.
//!
//! Robots on a simulated lunar surface bid in descending-price reverse
//! auctions for mapping jobs posted from Earth, deliver content-addressed
//! map blobs minted as managed assets, and settle atomically on a
//! single-sequencer hash-linked ledger, all under interplanetary latency
//! (one Earth-Moon traversal never takes less than five seconds).
//!
//! The crate is a library first. Each major capability has a runnable
//! example:
//!
//! ```text
//! examples/
//! ├── ledger_basics.rs              # accounts, payments, blocks, tamper detection
//! ├── managed_assets.rs             # mint, freeze, clawback, reconfigure, destroy, rekey
//! ├── content_store.rs              # content addressing and corruption detection
//! ├── moon_grid.rs                  # Goldberg tiling, locate, distances
//! ├── mesh_latency.rs               # topology, latency, partitions, crashes
//! ├── table1_auction.rs             # the two-bidder auction scenario end to end
//! ├── resale_commission.rs          # secondary sale with pioneer commission
//! └── coordinated_vs_independent.rs # efficiency comparison on the reference scenario
//! ```
//!
//! ```bash
//! cargo run -p lunamarket --example table1_auction
//! cargo run -p lunamarket --example coordinated_vs_independent
//! ```
//!
//! A thin `lunamarket` binary wraps the same library for batch use:
//! `run`, `compare`, `verify` and `grid` subcommands (see the README).
//!
//! # Module map
//!
//! - [`ledger`]: accounts, fungible microcredits, managed assets with
//!   authority-gated mutations, hash-linked blocks, chain verification.
//! - [`contentstore`]: content-addressed blob store; only hashes go on
//!   chain.
//! - [`selenography`]: Goldberg polyhedron GP(m,0) tiling of the sphere
//!   and the cell registry.
//! - [`netsim`]: deterministic discrete-event message network with
//!   latency, jitter, bandwidth, drops, partitions and crashes.
//! - [`marketplace`]: job posting, descending-price bidding, rekey-based
//!   escrow, plausibility checks, atomic settlement, pioneer registry,
//!   resale commissions.
//! - [`agents`]: robot bid/execution policies, client policy and the
//!   independent-robots baseline.
//! - [`sim`]: scenario files, the master event loop, metrics and the
//!   baseline comparison.
//!
//! # Determinism
//!
//! A run is a pure function of its scenario (including the seed): all
//! randomness flows from seeded ChaCha8 streams, collections iterate in
//! key order, money is integer microcredits, the clock is integer
//! milliseconds, and hashing is SHA-256 over a canonical big-endian
//! encoding. Two runs of the same scenario produce byte-identical event
//! logs.

pub mod agents;
pub mod contentstore;
pub mod digest;
pub mod events;
pub mod ledger;
pub mod marketplace;
pub mod netsim;
pub mod selenography;
pub mod sim;

pub use contentstore::{Blob, ContentHash, ContentStore};
pub use ledger::{AccountId, AssetId, Ledger, Micro, Reputation, MICRO_PER_CREDIT};
pub use marketplace::{ContractId, ContractState, JobRequestId, World, WorldConfig};
pub use selenography::{CellId, SelenographicCoord, Tiling};
pub use sim::{compare_baseline, load_scenario, run_scenario, Mode, ScenarioConfig};
