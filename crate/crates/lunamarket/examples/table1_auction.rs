//! The bundled two-bidder scenario end to end: posting over the Earth
//! link, descending bids, finalization, escrow, mapping, delivery and
//! atomic settlement.

use std::path::Path;

use lunamarket::ledger::MICRO_PER_CREDIT;
use lunamarket::sim::{load_scenario, run_scenario};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/table1.scenario");
    let cfg = load_scenario(&path).expect("bundled scenario parses");
    let out = run_scenario(&cfg).expect("run completes");

    println!("--- auction trace ---");
    for r in out.events().records() {
        match r.kind.as_str() {
            "job_posted" => println!(
                "t={:>6} job posted, cap {} credits",
                r.time_ms,
                r.field_u64("maxPriceMicro").unwrap() / MICRO_PER_CREDIT
            ),
            "bid_accepted" => println!(
                "t={:>6} bid accepted at {} credits",
                r.time_ms,
                r.field_u64("priceMicro").unwrap() / MICRO_PER_CREDIT
            ),
            "bidding_closed" => println!(
                "t={:>6} auction closed: {}",
                r.time_ms,
                r.field_str("detail").unwrap()
            ),
            "contract_accepted" => println!("t={:>6} escrow funded", r.time_ms),
            "execution_started" => println!("t={:>6} winner starts mapping", r.time_ms),
            "contract_delivered" => println!(
                "t={:>6} deliverable passed the plausibility check",
                r.time_ms
            ),
            "contract_settled" => println!(
                "t={:>6} settled at {} credits",
                r.time_ms,
                r.field_u64("priceMicro").unwrap() / MICRO_PER_CREDIT
            ),
            "pioneer_claimed" => println!(
                "t={:>6} pioneer recorded for {}",
                r.time_ms,
                r.field_str("cell").unwrap()
            ),
            _ => {}
        }
    }

    println!("--- metrics ---");
    if let Some(s) = &out.metrics.per_tx_bytes {
        println!("upload bytes: median {:.0} B", s.median);
    }
    if let Some(s) = &out.metrics.tx_duration_ms {
        println!("escrow-to-settlement: median {:.1} s", s.median / 1000.0);
    }
    println!("ledger verifies: {}", out.world.ledger.verify_chain());
}
