//! Property tests over module invariants.

use proptest::prelude::*;

use lunamarket::contentstore::{Blob, ContentStore};
use lunamarket::ledger::{AccountId, Ledger, Micro, Reputation, Transaction, TxKind};
use lunamarket::marketplace::{rank_bids, Bid, ContractId, JobRequestId};
use lunamarket::selenography::{SelenographicCoord, Tiling};

proptest! {
    /// Conservation: any sequence of payments (valid or bounced) leaves
    /// total supply = balances + faucet untouched after every commit.
    #[test]
    fn conservation_under_arbitrary_payments(
        ops in prop::collection::vec((0usize..4, 0usize..4, 0u64..2_000_000_000), 1..60),
    ) {
        let mut ledger = Ledger::new(4_000_000_000);
        let accounts: Vec<AccountId> = (0..4)
            .map(|_| ledger.create_account(500_000_000).unwrap())
            .collect();
        let mut ts = 0u64;
        for (chunk, window) in ops.chunks(7).enumerate() {
            for &(f, t, amount) in window {
                let tx = Transaction::new(
                    ledger.authority_of(accounts[f]).unwrap(),
                    ledger.next_nonce_for(accounts[f]).unwrap(),
                    TxKind::Payment { from: accounts[f], to: accounts[t], amount },
                );
                let _ = ledger.submit(tx); // overdrafts bounce, that's fine
            }
            ts = (chunk as u64 + 1) * 1_000;
            ledger.commit_block(ts).unwrap();
            prop_assert!(ledger.conservation_holds());
            prop_assert!(ledger.verify_chain());
        }
    }

    /// Reputation never leaves [0, 1] whatever the event stream.
    #[test]
    fn reputation_stays_in_unit_interval(
        start in 0u32..=1000,
        deltas in prop::collection::vec(-400i32..=400, 0..200),
    ) {
        let mut rep = Reputation::from_millis(start);
        for d in deltas {
            rep = rep.apply_delta(d);
            prop_assert!(rep.millis() <= 1000);
        }
    }

    /// Content store round trip: get(put(b)) = b and verify holds, for
    /// arbitrary blobs.
    #[test]
    fn store_roundtrip(bytes in prop::collection::vec(any::<u8>(), 0..2048)) {
        let mut store = ContentStore::in_memory();
        let blob = Blob::new(bytes);
        let hash = store.put(&blob).unwrap();
        prop_assert_eq!(store.get(hash).unwrap(), blob);
        prop_assert!(store.verify(hash));
    }

    /// Bid ranking is a total order honoring (price, time, bidder) with
    /// the winner minimal under it.
    #[test]
    fn bid_ranking_orders_by_price_time_bidder(
        raw in prop::collection::vec((1u64..1000, 0u64..1000, 0u8..6), 0..20),
    ) {
        let bids: Vec<Bid> = raw
            .iter()
            .map(|&(price, time, b)| Bid {
                job_id: JobRequestId(0),
                contract_id: ContractId(0),
                bidder: AccountId(lunamarket::digest::Digest([b; 32])),
                price_micro: price as Micro,
                time_ms: time,
                bidder_reputation: Reputation::default(),
            })
            .collect();
        let ranked = rank_bids(&bids);
        prop_assert_eq!(ranked.len(), bids.len());
        for pair in ranked.windows(2) {
            let a = (pair[0].price_micro, pair[0].time_ms, pair[0].bidder.to_hex());
            let b = (pair[1].price_micro, pair[1].time_ms, pair[1].bidder.to_hex());
            prop_assert!(a <= b);
        }
        if let Some(first) = ranked.first() {
            for b in &bids {
                let fk = (first.price_micro, first.time_ms, first.bidder.to_hex());
                let bk = (b.price_micro, b.time_ms, b.bidder.to_hex());
                prop_assert!(fk <= bk, "winner must be minimal");
            }
        }
    }

    /// Locating any coordinate yields the cell whose center is truly
    /// nearest (brute-force cross-check).
    #[test]
    fn locate_matches_brute_force(lat in -90.0f64..=90.0, lon in -179.999f64..180.0) {
        let tiling = Tiling::build(2, 1000.0).unwrap();
        let coord = SelenographicCoord::new(lat, lon);
        let located = tiling.locate_cell(coord);
        let v = coord.unit_vector();
        let mut best = (f64::NEG_INFINITY, 0u32);
        for cell in tiling.cells() {
            let c = tiling.cell_center_unit(cell).unwrap();
            let dot = c[0] * v[0] + c[1] * v[1] + c[2] * v[2];
            if dot > best.0 {
                best = (dot, cell.index);
            }
        }
        prop_assert_eq!(located.index, best.1);
    }
}
