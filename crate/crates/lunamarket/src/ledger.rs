//! Single-sequencer simulated ledger.
//!
//! Accounts hold a fixed-supply fungible credit token (integer
//! microcredits) and managed non-fungible assets with authority-gated
//! mutations (freeze, clawback, reconfigure, destroy, rekey). Committed
//! transactions live in append-only hash-linked blocks; `verify_chain`
//! recomputes every digest from the canonical encoding.
//!
//! Submission validates against a speculative state (committed state
//! plus pending transactions) so multi-transaction flows inside one
//! block cannot double-spend. Commit re-applies the pending list onto a
//! copy of the committed state and swaps it in atomically: a failure at
//! any point leaves the committed state untouched and the pending list
//! intact for retry.
//!
//! There is deliberately no consensus protocol and no real signature
//! scheme; "signing" is an authority check against the acting account.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{digest_tagged, Digest, Enc};
use crate::marketplace::MapMetadata;

pub type Micro = u64;

/// 1 credit = 1_000_000 microcredits. Scenario prices like "$10" are
/// 10_000_000 microcredits.
pub const MICRO_PER_CREDIT: Micro = 1_000_000;

const TX_TAG: &str = "lunamarket.tx.v1";
const BLOCK_TAG: &str = "lunamarket.block.v1";
const ACCOUNT_TAG: &str = "lunamarket.account.v1";

/// Opaque 32-byte account identifier with a canonical lowercase-hex
/// rendering. Stable across a run: derived from the creation index.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccountId(pub Digest);

impl AccountId {
    fn from_index(index: u64) -> AccountId {
        AccountId(digest_tagged(ACCOUNT_TAG, &index.to_be_bytes()))
    }

    pub fn to_hex(self) -> String {
        self.0.to_hex()
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AccountId({}..)", &self.to_hex()[..12])
    }
}

/// Monotone counter identifying a managed asset.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct AssetId(pub u64);

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "asset-{}", self.0)
    }
}

/// Identifier of a committed or pending transaction: the tagged digest
/// of its canonical encoding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct TxId(pub Digest);

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Reputation score, a rational in the unit interval held in exact
/// thousandths.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Reputation(u32);

impl Reputation {
    pub const SCALE: u32 = 1000;

    pub fn from_millis(millis: u32) -> Reputation {
        Reputation(millis.min(Self::SCALE))
    }

    pub fn millis(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }

    /// Add a signed delta in thousandths, clamping to [0, 1].
    pub fn apply_delta(self, delta_millis: i32) -> Reputation {
        let v = self.0 as i32 + delta_millis;
        Reputation(v.clamp(0, Self::SCALE as i32) as u32)
    }
}

impl Default for Reputation {
    fn default() -> Reputation {
        Reputation(500)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Account {
    pub id: AccountId,
    /// Signing authority; equals `id` until rekeyed.
    pub authority: AccountId,
    pub balance: Micro,
    /// Non-fungible holdings; quantity is always 1 per held asset.
    pub holdings: BTreeMap<AssetId, u64>,
    pub reputation: Reputation,
    /// Highest nonce accepted so far for this account.
    pub last_nonce: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AssetParams {
    pub id: AssetId,
    pub creator: AccountId,
    pub manager: Option<AccountId>,
    pub freeze_authority: Option<AccountId>,
    pub clawback_authority: Option<AccountId>,
    pub metadata: MapMetadata,
    pub frozen_holders: BTreeSet<AccountId>,
    pub destroyed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum TxKind {
    Payment {
        from: AccountId,
        to: AccountId,
        amount: Micro,
    },
    AssetCreate {
        creator: AccountId,
        manager: Option<AccountId>,
        freeze_authority: Option<AccountId>,
        clawback_authority: Option<AccountId>,
        metadata: MapMetadata,
    },
    AssetTransfer {
        from: AccountId,
        to: AccountId,
        asset_id: AssetId,
    },
    AssetFreeze {
        authority: AccountId,
        target: AccountId,
        asset_id: AssetId,
        frozen: bool,
    },
    AssetClawback {
        authority: AccountId,
        from_holder: AccountId,
        to: AccountId,
        asset_id: AssetId,
    },
    /// Only the metadata price is reconfigurable; descriptive fields are
    /// immutable after mint so the plausibility check stays meaningful.
    AssetReconfigure {
        manager: AccountId,
        asset_id: AssetId,
        new_price_micro: Micro,
    },
    AssetDestroy {
        manager: AccountId,
        asset_id: AssetId,
    },
    Rekey {
        account: AccountId,
        new_authority: AccountId,
    },
    /// Application-level record (job postings, bids, contract notes).
    AppCall { contract_id: u64, payload: Vec<u8> },
}

impl TxKind {
    /// The account this transaction acts for; the signer must be that
    /// account's current authority.
    pub fn acting_account(&self, signer: AccountId) -> AccountId {
        match self {
            TxKind::Payment { from, .. } => *from,
            TxKind::AssetCreate { creator, .. } => *creator,
            TxKind::AssetTransfer { from, .. } => *from,
            TxKind::AssetFreeze { authority, .. } => *authority,
            TxKind::AssetClawback { authority, .. } => *authority,
            TxKind::AssetReconfigure { manager, .. } => *manager,
            TxKind::AssetDestroy { manager, .. } => *manager,
            TxKind::Rekey { account, .. } => *account,
            TxKind::AppCall { .. } => signer,
        }
    }

    fn encode(&self, e: &mut Enc) {
        let put_opt = |e: &mut Enc, v: &Option<AccountId>| match v {
            Some(a) => {
                e.put_u8(1);
                e.put_raw(&a.0 .0);
            }
            None => e.put_u8(0),
        };
        match self {
            TxKind::Payment { from, to, amount } => {
                e.put_u8(1);
                e.put_raw(&from.0 .0);
                e.put_raw(&to.0 .0);
                e.put_u64(*amount);
            }
            TxKind::AssetCreate {
                creator,
                manager,
                freeze_authority,
                clawback_authority,
                metadata,
            } => {
                e.put_u8(2);
                e.put_raw(&creator.0 .0);
                put_opt(e, manager);
                put_opt(e, freeze_authority);
                put_opt(e, clawback_authority);
                metadata.encode(e);
            }
            TxKind::AssetTransfer { from, to, asset_id } => {
                e.put_u8(3);
                e.put_raw(&from.0 .0);
                e.put_raw(&to.0 .0);
                e.put_u64(asset_id.0);
            }
            TxKind::AssetFreeze {
                authority,
                target,
                asset_id,
                frozen,
            } => {
                e.put_u8(4);
                e.put_raw(&authority.0 .0);
                e.put_raw(&target.0 .0);
                e.put_u64(asset_id.0);
                e.put_bool(*frozen);
            }
            TxKind::AssetClawback {
                authority,
                from_holder,
                to,
                asset_id,
            } => {
                e.put_u8(5);
                e.put_raw(&authority.0 .0);
                e.put_raw(&from_holder.0 .0);
                e.put_raw(&to.0 .0);
                e.put_u64(asset_id.0);
            }
            TxKind::AssetReconfigure {
                manager,
                asset_id,
                new_price_micro,
            } => {
                e.put_u8(6);
                e.put_raw(&manager.0 .0);
                e.put_u64(asset_id.0);
                e.put_u64(*new_price_micro);
            }
            TxKind::AssetDestroy { manager, asset_id } => {
                e.put_u8(7);
                e.put_raw(&manager.0 .0);
                e.put_u64(asset_id.0);
            }
            TxKind::Rekey {
                account,
                new_authority,
            } => {
                e.put_u8(8);
                e.put_raw(&account.0 .0);
                e.put_raw(&new_authority.0 .0);
            }
            TxKind::AppCall {
                contract_id,
                payload,
            } => {
                e.put_u8(9);
                e.put_u64(*contract_id);
                e.put_bytes(payload);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transaction {
    pub signer: AccountId,
    pub nonce: u64,
    pub size_bytes: u64,
    pub kind: TxKind,
}

impl Transaction {
    pub fn new(signer: AccountId, nonce: u64, kind: TxKind) -> Transaction {
        let mut tx = Transaction {
            signer,
            nonce,
            size_bytes: 0,
            kind,
        };
        tx.size_bytes = tx.canonical_encoding().len() as u64;
        tx
    }

    /// Canonical bytes: signer, nonce, then the tagged kind. The derived
    /// `size_bytes` field is excluded (it is the length of these bytes).
    pub fn canonical_encoding(&self) -> Vec<u8> {
        let mut e = Enc::new();
        e.put_raw(&self.signer.0 .0);
        e.put_u64(self.nonce);
        self.kind.encode(&mut e);
        e.finish()
    }

    pub fn id(&self) -> TxId {
        TxId(digest_tagged(TX_TAG, &self.canonical_encoding()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub timestamp_ms: u64,
    pub txs: Vec<Transaction>,
    pub hash: Digest,
}

impl Block {
    pub fn compute_hash(
        height: u64,
        prev_hash: Digest,
        timestamp_ms: u64,
        txs: &[Transaction],
    ) -> Digest {
        let mut e = Enc::new();
        e.put_u64(height);
        e.put_raw(&prev_hash.0);
        e.put_u64(timestamp_ms);
        e.put_u32(txs.len() as u32);
        for tx in txs {
            e.put_bytes(&tx.canonical_encoding());
        }
        digest_tagged(BLOCK_TAG, e.as_slice())
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("unknown asset {0}")]
    UnknownAsset(AssetId),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("bad nonce for {account}: got {got}, last accepted {last}")]
    BadNonce {
        account: AccountId,
        got: u64,
        last: u64,
    },
    #[error("insufficient funds in {account}: need {needed}, have {available}")]
    InsufficientFunds {
        account: AccountId,
        needed: Micro,
        available: Micro,
    },
    #[error("holding of {asset} by {account} is frozen")]
    FrozenHolding { account: AccountId, asset: AssetId },
    #[error("{0} is destroyed and accepts no further transactions")]
    AssetDestroyed(AssetId),
    #[error("{account} does not hold {asset}")]
    MissingHolding { account: AccountId, asset: AssetId },
    #[error("faucet exhausted: requested {requested}, remaining {remaining}")]
    FaucetExhausted { requested: Micro, remaining: Micro },
    #[error("block timestamp {t} not after previous {last}")]
    NonMonotoneTimestamp { t: u64, last: u64 },
    #[error("not found")]
    NotFound,
    #[error("injected fault")]
    Injected,
}

/// Balances, assets and nonces at one point in history.
#[derive(Clone, Debug, Default)]
pub struct LedgerState {
    pub accounts: BTreeMap<AccountId, Account>,
    pub assets: BTreeMap<AssetId, AssetParams>,
    next_asset: u64,
    faucet_micro: Micro,
}

impl LedgerState {
    fn account(&self, id: AccountId) -> Result<&Account, LedgerError> {
        self.accounts
            .get(&id)
            .ok_or(LedgerError::UnknownAccount(id))
    }

    fn asset(&self, id: AssetId) -> Result<&AssetParams, LedgerError> {
        self.assets.get(&id).ok_or(LedgerError::UnknownAsset(id))
    }

    fn require_live_asset(&self, id: AssetId) -> Result<&AssetParams, LedgerError> {
        let a = self.asset(id)?;
        if a.destroyed {
            return Err(LedgerError::AssetDestroyed(id));
        }
        Ok(a)
    }

    fn move_holding(
        &mut self,
        from: AccountId,
        to: AccountId,
        asset: AssetId,
    ) -> Result<(), LedgerError> {
        let sender = self
            .accounts
            .get_mut(&from)
            .ok_or(LedgerError::UnknownAccount(from))?;
        match sender.holdings.remove(&asset) {
            Some(q) if q > 0 => {}
            _ => {
                return Err(LedgerError::MissingHolding {
                    account: from,
                    asset,
                })
            }
        }
        self.accounts
            .get_mut(&to)
            .expect("receiver checked before move")
            .holdings
            .insert(asset, 1);
        Ok(())
    }

    /// Validate and apply one transaction. All checks run before any
    /// mutation so a failed transaction leaves the state untouched.
    fn apply(&mut self, tx: &Transaction) -> Result<Option<AssetId>, LedgerError> {
        let acting = tx.kind.acting_account(tx.signer);
        let acct = self.account(acting)?;
        if acct.authority != tx.signer {
            return Err(LedgerError::Unauthorized(format!(
                "signer {} is not the authority of {}",
                tx.signer, acting
            )));
        }
        if tx.nonce <= acct.last_nonce {
            return Err(LedgerError::BadNonce {
                account: acting,
                got: tx.nonce,
                last: acct.last_nonce,
            });
        }

        let mut created: Option<AssetId> = None;
        match &tx.kind {
            TxKind::Payment { from, to, amount } => {
                self.account(*to)?;
                let available = self.account(*from)?.balance;
                if available < *amount {
                    return Err(LedgerError::InsufficientFunds {
                        account: *from,
                        needed: *amount,
                        available,
                    });
                }
                self.accounts.get_mut(from).unwrap().balance -= amount;
                self.accounts.get_mut(to).unwrap().balance += amount;
            }
            TxKind::AssetCreate {
                creator,
                manager,
                freeze_authority,
                clawback_authority,
                metadata,
            } => {
                for auth in [manager, freeze_authority, clawback_authority]
                    .into_iter()
                    .flatten()
                {
                    self.account(*auth)?;
                }
                let id = AssetId(self.next_asset);
                self.next_asset += 1;
                self.assets.insert(
                    id,
                    AssetParams {
                        id,
                        creator: *creator,
                        manager: *manager,
                        freeze_authority: *freeze_authority,
                        clawback_authority: *clawback_authority,
                        metadata: metadata.clone(),
                        frozen_holders: BTreeSet::new(),
                        destroyed: false,
                    },
                );
                self.accounts
                    .get_mut(creator)
                    .unwrap()
                    .holdings
                    .insert(id, 1);
                created = Some(id);
            }
            TxKind::AssetTransfer { from, to, asset_id } => {
                let params = self.require_live_asset(*asset_id)?;
                if params.frozen_holders.contains(from) {
                    return Err(LedgerError::FrozenHolding {
                        account: *from,
                        asset: *asset_id,
                    });
                }
                self.account(*to)?;
                self.move_holding(*from, *to, *asset_id)?;
            }
            TxKind::AssetFreeze {
                authority,
                target,
                asset_id,
                frozen,
            } => {
                let params = self.require_live_asset(*asset_id)?;
                if params.freeze_authority != Some(*authority) {
                    return Err(LedgerError::Unauthorized(format!(
                        "{authority} is not the freeze authority of {asset_id}"
                    )));
                }
                self.account(*target)?;
                let params = self.assets.get_mut(asset_id).unwrap();
                if *frozen {
                    params.frozen_holders.insert(*target);
                } else {
                    params.frozen_holders.remove(target);
                }
            }
            TxKind::AssetClawback {
                authority,
                from_holder,
                to,
                asset_id,
            } => {
                let params = self.require_live_asset(*asset_id)?;
                if params.clawback_authority != Some(*authority) {
                    return Err(LedgerError::Unauthorized(format!(
                        "{authority} is not the clawback authority of {asset_id}"
                    )));
                }
                self.account(*to)?;
                // clawback moves the holding regardless of freezes or
                // holder consent
                self.move_holding(*from_holder, *to, *asset_id)?;
            }
            TxKind::AssetReconfigure {
                manager,
                asset_id,
                new_price_micro,
            } => {
                let params = self.require_live_asset(*asset_id)?;
                if params.manager != Some(*manager) {
                    return Err(LedgerError::Unauthorized(format!(
                        "{manager} is not the manager of {asset_id}"
                    )));
                }
                self.assets.get_mut(asset_id).unwrap().metadata.price_micro = *new_price_micro;
            }
            TxKind::AssetDestroy { manager, asset_id } => {
                let params = self.require_live_asset(*asset_id)?;
                if params.manager != Some(*manager) {
                    return Err(LedgerError::Unauthorized(format!(
                        "{manager} is not the manager of {asset_id}"
                    )));
                }
                self.assets.get_mut(asset_id).unwrap().destroyed = true;
            }
            TxKind::Rekey {
                account,
                new_authority,
            } => {
                self.account(*new_authority)?;
                self.accounts.get_mut(account).unwrap().authority = *new_authority;
            }
            TxKind::AppCall { .. } => {
                // recorded on chain; no balance or asset effects
            }
        }
        self.accounts.get_mut(&acting).unwrap().last_nonce = tx.nonce;
        Ok(created)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SubmitReceipt {
    pub tx_id: TxId,
    /// Asset id assigned to an `AssetCreate`, when applicable.
    pub created_asset: Option<AssetId>,
}

#[derive(Debug, Clone)]
pub enum Query {
    Balance(AccountId),
    Holdings(AccountId),
    Asset(AssetId),
    BlockByHeight(u64),
    TxById(TxId),
}

#[derive(Debug, Clone)]
pub enum QueryResult {
    Balance(Micro),
    Holdings(BTreeMap<AssetId, u64>),
    Asset(AssetParams),
    Block(Block),
    Tx(Transaction),
}

/// The ledger world: committed chain, speculative head, pending block.
#[derive(Debug)]
pub struct Ledger {
    genesis_supply: Micro,
    committed: LedgerState,
    speculative: LedgerState,
    pending: Vec<Transaction>,
    blocks: Vec<Block>,
    next_account_index: u64,
    tx_index: BTreeMap<TxId, (u64, u32)>,
    fail_submit_in: Option<u32>,
    fail_commit_after: Option<usize>,
}

impl Ledger {
    pub fn new(genesis_supply: Micro) -> Ledger {
        let state = LedgerState {
            faucet_micro: genesis_supply,
            ..Default::default()
        };
        Ledger {
            genesis_supply,
            speculative: state.clone(),
            committed: state,
            pending: Vec::new(),
            blocks: Vec::new(),
            next_account_index: 0,
            tx_index: BTreeMap::new(),
            fail_submit_in: None,
            fail_commit_after: None,
        }
    }

    pub fn genesis_supply(&self) -> Micro {
        self.genesis_supply
    }

    pub fn faucet_remaining(&self) -> Micro {
        self.committed.faucet_micro
    }

    /// Create an account funded from the genesis faucet pool. Total
    /// supply is unchanged; the faucet shrinks by the initial balance.
    pub fn create_account(&mut self, initial_balance: Micro) -> Result<AccountId, LedgerError> {
        if initial_balance > self.committed.faucet_micro {
            return Err(LedgerError::FaucetExhausted {
                requested: initial_balance,
                remaining: self.committed.faucet_micro,
            });
        }
        let id = AccountId::from_index(self.next_account_index);
        self.next_account_index += 1;
        for state in [&mut self.committed, &mut self.speculative] {
            state.faucet_micro -= initial_balance;
            state.accounts.insert(
                id,
                Account {
                    id,
                    authority: id,
                    balance: initial_balance,
                    holdings: BTreeMap::new(),
                    reputation: Reputation::default(),
                    last_nonce: 0,
                },
            );
        }
        Ok(id)
    }

    /// Platform-level reputation write; not a ledger transaction.
    pub fn set_reputation(&mut self, account: AccountId, rep: Reputation) {
        for state in [&mut self.committed, &mut self.speculative] {
            if let Some(a) = state.accounts.get_mut(&account) {
                a.reputation = rep;
            }
        }
    }

    pub fn reputation_of(&self, account: AccountId) -> Result<Reputation, LedgerError> {
        Ok(self.committed.account(account)?.reputation)
    }

    /// Next usable nonce for the acting account, seen against the
    /// speculative head (pending transactions included).
    pub fn next_nonce_for(&self, account: AccountId) -> Result<u64, LedgerError> {
        Ok(self.speculative.account(account)?.last_nonce + 1)
    }

    pub fn authority_of(&self, account: AccountId) -> Result<AccountId, LedgerError> {
        Ok(self.speculative.account(account)?.authority)
    }

    /// Committed balance (query surface).
    pub fn balance_of(&self, account: AccountId) -> Result<Micro, LedgerError> {
        Ok(self.committed.account(account)?.balance)
    }

    /// Balance at the speculative head; what a new transaction would see.
    pub fn pending_balance_of(&self, account: AccountId) -> Result<Micro, LedgerError> {
        Ok(self.speculative.account(account)?.balance)
    }

    pub fn holder_of(&self, asset: AssetId) -> Option<AccountId> {
        self.speculative
            .accounts
            .values()
            .find(|a| a.holdings.get(&asset).copied().unwrap_or(0) > 0)
            .map(|a| a.id)
    }

    pub fn asset(&self, id: AssetId) -> Result<&AssetParams, LedgerError> {
        self.speculative.asset(id)
    }

    /// Validate a transaction against the speculative head and queue it
    /// for the next block.
    pub fn submit(&mut self, tx: Transaction) -> Result<SubmitReceipt, LedgerError> {
        match self.fail_submit_in {
            Some(0) => {
                self.fail_submit_in = None;
                return Err(LedgerError::Injected);
            }
            Some(n) => self.fail_submit_in = Some(n - 1),
            None => {}
        }
        let created_asset = self.speculative.apply(&tx)?;
        let tx_id = tx.id();
        self.pending.push(tx);
        Ok(SubmitReceipt {
            tx_id,
            created_asset,
        })
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Drop queued transactions beyond `len` (a checkpoint taken with
    /// `pending_len`) and rebuild the speculative head.
    pub fn truncate_pending(&mut self, len: usize) {
        if len >= self.pending.len() {
            return;
        }
        self.pending.truncate(len);
        self.speculative = self.committed.clone();
        for tx in &self.pending {
            self.speculative
                .apply(tx)
                .expect("previously validated pending tx must re-apply");
        }
    }

    /// Commit all pending transactions as one block. Application is
    /// all-or-nothing: on any failure the committed state and the
    /// pending queue are left untouched.
    pub fn commit_block(&mut self, timestamp_ms: u64) -> Result<&Block, LedgerError> {
        if let Some(last) = self.blocks.last() {
            if timestamp_ms <= last.timestamp_ms {
                return Err(LedgerError::NonMonotoneTimestamp {
                    t: timestamp_ms,
                    last: last.timestamp_ms,
                });
            }
        }
        let mut next = self.committed.clone();
        for (i, tx) in self.pending.iter().enumerate() {
            if self.fail_commit_after == Some(i) {
                self.fail_commit_after = None;
                return Err(LedgerError::Injected);
            }
            next.apply(tx)?;
        }
        let height = self.blocks.len() as u64;
        let prev_hash = self.blocks.last().map(|b| b.hash).unwrap_or(Digest::ZERO);
        let txs = std::mem::take(&mut self.pending);
        let hash = Block::compute_hash(height, prev_hash, timestamp_ms, &txs);
        for (i, tx) in txs.iter().enumerate() {
            self.tx_index.insert(tx.id(), (height, i as u32));
        }
        self.blocks.push(Block {
            height,
            prev_hash,
            timestamp_ms,
            txs,
            hash,
        });
        self.committed = next;
        self.speculative = self.committed.clone();
        Ok(self.blocks.last().unwrap())
    }

    /// True iff every stored block hash recomputes from its contents and
    /// every `prev_hash` links to its predecessor. The empty chain
    /// verifies true by convention.
    pub fn verify_chain(&self) -> bool {
        verify_blocks(&self.blocks)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Test hook: mutable access for tamper experiments.
    pub fn blocks_mut(&mut self) -> &mut Vec<Block> {
        &mut self.blocks
    }

    pub fn last_block_time(&self) -> Option<u64> {
        self.blocks.last().map(|b| b.timestamp_ms)
    }

    /// Fail the nth subsequent `submit` (0 = the next one). One-shot.
    pub fn inject_submit_failure(&mut self, nth: u32) {
        self.fail_submit_in = Some(nth);
    }

    /// Fail the next commit after applying `n` transactions. One-shot.
    pub fn inject_commit_failure(&mut self, after_applies: usize) {
        self.fail_commit_after = Some(after_applies);
    }

    pub fn clear_injected_faults(&mut self) {
        self.fail_submit_in = None;
        self.fail_commit_after = None;
    }

    /// Sum of all committed balances plus the remaining faucet pool
    /// equals the genesis supply. Holds after every commit.
    pub fn conservation_holds(&self) -> bool {
        let total: Micro = self
            .committed
            .accounts
            .values()
            .map(|a| a.balance)
            .sum::<Micro>()
            + self.committed.faucet_micro;
        total == self.genesis_supply
    }

    pub fn query(&self, q: Query) -> Result<QueryResult, LedgerError> {
        match q {
            Query::Balance(a) => Ok(QueryResult::Balance(
                self.committed
                    .account(a)
                    .map_err(|_| LedgerError::NotFound)?
                    .balance,
            )),
            Query::Holdings(a) => Ok(QueryResult::Holdings(
                self.committed
                    .account(a)
                    .map_err(|_| LedgerError::NotFound)?
                    .holdings
                    .clone(),
            )),
            Query::Asset(id) => Ok(QueryResult::Asset(
                self.committed
                    .asset(id)
                    .map_err(|_| LedgerError::NotFound)?
                    .clone(),
            )),
            Query::BlockByHeight(h) => self
                .blocks
                .get(h as usize)
                .cloned()
                .map(QueryResult::Block)
                .ok_or(LedgerError::NotFound),
            Query::TxById(id) => {
                let (h, i) = self.tx_index.get(&id).ok_or(LedgerError::NotFound)?;
                Ok(QueryResult::Tx(
                    self.blocks[*h as usize].txs[*i as usize].clone(),
                ))
            }
        }
    }

    /// Write the chain as JSON Lines, one block per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for block in &self.blocks {
            serde_json::to_writer(&mut w, block)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Structural verification over a block sequence: sequential heights,
/// genesis prev of all zeros, linked prev hashes, recomputed digests and
/// consistent transaction sizes.
pub fn verify_blocks(blocks: &[Block]) -> bool {
    let mut prev = Digest::ZERO;
    let mut last_ts: Option<u64> = None;
    for (i, b) in blocks.iter().enumerate() {
        if b.height != i as u64 || b.prev_hash != prev {
            return false;
        }
        if let Some(t) = last_ts {
            if b.timestamp_ms <= t {
                return false;
            }
        }
        if b.txs
            .iter()
            .any(|tx| tx.size_bytes != tx.canonical_encoding().len() as u64)
        {
            return false;
        }
        let expect = Block::compute_hash(b.height, b.prev_hash, b.timestamp_ms, &b.txs);
        if b.hash != expect {
            return false;
        }
        prev = b.hash;
        last_ts = Some(b.timestamp_ms);
    }
    true
}

/// Verify a JSON Lines ledger export. `Ok(false)` means well-formed but
/// corrupt; `Err` means unreadable.
pub fn verify_jsonl<R: BufRead>(r: R) -> Result<bool, serde_json::Error> {
    let mut blocks = Vec::new();
    for line in r.lines() {
        let line = match line {
            Ok(l) => l,
            Err(_) => return Ok(false),
        };
        if line.trim().is_empty() {
            continue;
        }
        blocks.push(serde_json::from_str::<Block>(&line)?);
    }
    Ok(verify_blocks(&blocks))
}
