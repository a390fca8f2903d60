//! Managed-asset lifecycle: mint, transfer, freeze, clawback,
//! reconfigure, destroy, and the rekey handoff.

use std::collections::BTreeSet;

use lunamarket::contentstore::ContentHash;
use lunamarket::ledger::{Ledger, Transaction, TxKind, MICRO_PER_CREDIT};
use lunamarket::marketplace::MapMetadata;
use lunamarket::selenography::CellId;

fn main() {
    let credit = MICRO_PER_CREDIT;
    let mut ledger = Ledger::new(1_000 * credit);
    let operator = ledger.create_account(100 * credit).unwrap();
    let holder = ledger.create_account(100 * credit).unwrap();
    let treasury = ledger.create_account(0).unwrap();

    let tx = |l: &Ledger, actor, kind: TxKind| {
        let acting = kind.acting_account(actor);
        Transaction::new(
            l.authority_of(acting).unwrap(),
            l.next_nonce_for(acting).unwrap(),
            kind,
        )
    };

    // mint a map asset managed by the operator
    let metadata = MapMetadata {
        cells: [CellId::new(2, 17)].into_iter().collect(),
        bounding_coords: vec![],
        resolution_m_per_px: 0.25,
        sensors: ["camera".to_string(), "lidar".to_string()]
            .into_iter()
            .collect(),
        algorithm: "occupancy-grid".to_string(),
        price_micro: 15 * credit,
        content_hash: ContentHash::of(b"survey tile 17"),
        explorer: operator,
        pioneer_of: BTreeSet::new(),
    };
    let mint = tx(
        &ledger,
        operator,
        TxKind::AssetCreate {
            creator: operator,
            manager: Some(operator),
            freeze_authority: Some(operator),
            clawback_authority: Some(operator),
            metadata,
        },
    );
    let asset = ledger.submit(mint).unwrap().created_asset.unwrap();
    println!("minted {asset}");

    // hand it to the holder, freeze them, watch a transfer bounce
    for kind in [
        TxKind::AssetTransfer {
            from: operator,
            to: holder,
            asset_id: asset,
        },
        TxKind::AssetFreeze {
            authority: operator,
            target: holder,
            asset_id: asset,
            frozen: true,
        },
    ] {
        ledger.submit(tx(&ledger, operator, kind)).unwrap();
    }
    let frozen_try = tx(
        &ledger,
        holder,
        TxKind::AssetTransfer {
            from: holder,
            to: treasury,
            asset_id: asset,
        },
    );
    println!(
        "frozen transfer: {}",
        ledger.submit(frozen_try).unwrap_err()
    );

    // clawback ignores the freeze, reconfigure bumps the price
    for kind in [
        TxKind::AssetClawback {
            authority: operator,
            from_holder: holder,
            to: treasury,
            asset_id: asset,
        },
        TxKind::AssetReconfigure {
            manager: operator,
            asset_id: asset,
            new_price_micro: 40 * credit,
        },
    ] {
        ledger.submit(tx(&ledger, operator, kind)).unwrap();
    }
    ledger.commit_block(1_000).unwrap();
    let params = ledger.asset(asset).unwrap();
    println!(
        "holder now {}; price {} credits",
        ledger.holder_of(asset).unwrap(),
        params.metadata.price_micro / credit
    );

    // rekey the operator account to the treasury key: old key stops working
    ledger
        .submit(tx(
            &ledger,
            operator,
            TxKind::Rekey {
                account: operator,
                new_authority: treasury,
            },
        ))
        .unwrap();
    let stale = Transaction::new(
        operator, // the replaced key
        ledger.next_nonce_for(operator).unwrap(),
        TxKind::AssetDestroy {
            manager: operator,
            asset_id: asset,
        },
    );
    println!("stale-key destroy: {}", ledger.submit(stale).unwrap_err());
    let fresh = tx(
        &ledger,
        operator,
        TxKind::AssetDestroy {
            manager: operator,
            asset_id: asset,
        },
    );
    ledger.submit(fresh).unwrap();
    ledger.commit_block(2_000).unwrap();
    println!("destroyed: {}", ledger.asset(asset).unwrap().destroyed);
    println!("chain verifies: {}", ledger.verify_chain());
}
