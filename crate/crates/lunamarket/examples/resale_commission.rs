//! Secondary-market sale of a settled map asset, with the pioneer
//! commission paid out automatically.

use std::collections::BTreeSet;

use lunamarket::contentstore::Blob;
use lunamarket::ledger::MICRO_PER_CREDIT as CREDIT;
use lunamarket::marketplace::{JobParams, JobRequirements, MapMetadata, World, WorldConfig};
use lunamarket::selenography::CellId;

fn main() {
    let mut world = World::new(WorldConfig::default());
    let client = world.ledger.create_account(100 * CREDIT).unwrap();
    let robot = world.ledger.create_account(10 * CREDIT).unwrap();
    let collector = world.ledger.create_account(500 * CREDIT).unwrap();
    let cell = CellId::new(2, 30);

    // run one job to settlement so the client becomes the cell's pioneer
    let (_, contract) = world
        .post_job_request(
            JobParams {
                client,
                target_cells: [cell].into_iter().collect(),
                max_price_micro: 50 * CREDIT,
                bidding_deadline_ms: 5_000,
                execution_deadline_ms: 60_000,
                requirements: JobRequirements {
                    min_resolution_m_per_px: 1.0,
                    required_sensors: BTreeSet::new(),
                    allowed_algorithms: BTreeSet::new(),
                },
            },
            0,
        )
        .unwrap();
    world
        .submit_bid(contract, robot, 10 * CREDIT, 1_000)
        .unwrap();
    world.finalize_auction(contract, 5_000).unwrap();
    world.accept_and_escrow(contract, 6_000).unwrap();
    world.begin_execution(contract, 6_100).unwrap();
    let blob = Blob::new(vec![7u8; 64 * 1024]);
    let metadata = MapMetadata {
        cells: [cell].into_iter().collect(),
        bounding_coords: vec![],
        resolution_m_per_px: 0.5,
        sensors: ["camera".to_string()].into_iter().collect(),
        algorithm: "occupancy-grid".to_string(),
        price_micro: 10 * CREDIT,
        content_hash: blob.content_hash(),
        explorer: robot,
        pioneer_of: [cell].into_iter().collect(),
    };
    world
        .submit_deliverable(contract, &blob, metadata, 20_000)
        .unwrap();
    let settled = world.settle(contract, 21_000).unwrap();
    println!(
        "settled: client owns {} and is the pioneer of {cell}",
        settled.asset_id
    );

    // the collector buys the map for 200 credits at the default 5% rate
    let sale = world
        .resell_asset(settled.asset_id, client, collector, 200 * CREDIT, 30_000)
        .unwrap();
    println!(
        "resale at {} credits: commission {} credits to the pioneer",
        sale.sale_price_micro / CREDIT,
        sale.commission_micro / CREDIT
    );
    for (account, amount) in &sale.pioneer_payouts {
        println!("  pioneer {account} receives {} credits", amount / CREDIT);
    }
    println!(
        "collector now holds the asset: {}",
        world.ledger.holder_of(settled.asset_id) == Some(collector)
    );
    println!(
        "asset price reconfigured to {} credits",
        world
            .ledger
            .asset(settled.asset_id)
            .unwrap()
            .metadata
            .price_micro
            / CREDIT
    );
    println!("money conserved: {}", world.ledger.conservation_holds());
}
