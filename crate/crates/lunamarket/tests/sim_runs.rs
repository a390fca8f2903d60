//! End-to-end runs of the bundled scenarios through the public API.

use lunamarket::ledger::MICRO_PER_CREDIT as CREDIT;
use lunamarket::marketplace::ContractState;
use lunamarket::sim::{load_scenario, run_scenario};
use std::path::Path;

fn scenario_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

#[test]
fn table1_auction_plays_out() {
    let cfg = load_scenario(&scenario_path("table1.scenario")).unwrap();
    let out = run_scenario(&cfg).unwrap();
    let events = out.events();

    // the auction finalized with a winner at 10 credits
    let closed: Vec<_> = events.iter_kind("bidding_closed").collect();
    assert_eq!(closed.len(), 1, "exactly one auction should close");

    // both bids were accepted, in descending order 20 then 10
    let bids: Vec<u64> = events
        .iter_kind("bid_accepted")
        .filter_map(|r| r.field_u64("priceMicro"))
        .collect();
    assert_eq!(bids, vec![20 * CREDIT, 10 * CREDIT]);

    // settlement happened and the contract ended Settled
    let settled: Vec<_> = events.iter_kind("contract_settled").collect();
    assert_eq!(settled.len(), 1);
    assert_eq!(settled[0].field_u64("priceMicro"), Some(10 * CREDIT));
    for c in out.world.contracts() {
        assert_eq!(c.state, ContractState::Settled);
    }
    assert!(out.world.ledger.verify_chain());
    assert!(out.world.ledger.conservation_holds());
    assert_eq!(out.metrics.settled_contracts, 1);
    assert_eq!(out.metrics.time_to_full_coverage_ms, None); // 1 of 3 cells
}

#[test]
fn table1_is_replay_deterministic() {
    let cfg = load_scenario(&scenario_path("table1.scenario")).unwrap();
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.events().digest(), b.events().digest());
}

#[test]
fn crashed_robot_stops_bidding_and_survivors_win() {
    use lunamarket::netsim::{Fault, NodeId};
    use lunamarket::sim::{run_scenario_with_faults, ScheduledFault};

    let cfg = load_scenario(&scenario_path("table1.scenario")).unwrap();
    // sp-d (the would-be 10-credit winner) goes dark before the job
    // announcement reaches it
    let faults = [ScheduledFault {
        at_ms: 5_040,
        fault: Fault::Crash(NodeId::new("sp-d")),
    }];
    let out = run_scenario_with_faults(&cfg, &faults).unwrap();
    let events = out.events();

    // only sp-c's bid exists, and it wins at 20 credits
    let bids: Vec<u64> = events
        .iter_kind("bid_accepted")
        .filter_map(|r| r.field_u64("priceMicro"))
        .collect();
    assert_eq!(bids, vec![20 * CREDIT]);
    let settled: Vec<_> = events.iter_kind("contract_settled").collect();
    assert_eq!(settled.len(), 1, "auction still settles with survivors");
    assert_eq!(settled[0].field_u64("priceMicro"), Some(20 * CREDIT));
    // no sp-d activity after the crash
    for r in events.iter_kind("bid_decision") {
        if r.time_ms > 5_040 {
            assert_ne!(r.field_str("robot"), Some("sp-d"));
        }
    }
}

/// Replaying the committed chain, every transaction's signer must match
/// the acting account's authority at that point in history (rekeys
/// included).
#[test]
fn authority_invariant_holds_over_the_full_tx_log() {
    use lunamarket::ledger::TxKind;
    use std::collections::BTreeMap;

    let cfg = load_scenario(&scenario_path("table1.scenario")).unwrap();
    let out = run_scenario(&cfg).unwrap();
    let mut authority: BTreeMap<lunamarket::AccountId, lunamarket::AccountId> = BTreeMap::new();
    let mut rekeys = 0;
    for block in out.world.ledger.blocks() {
        for tx in &block.txs {
            let acting = tx.kind.acting_account(tx.signer);
            let expected = authority.get(&acting).copied().unwrap_or(acting);
            assert_eq!(
                tx.signer, expected,
                "tx in block {} signed by a non-authority",
                block.height
            );
            if let TxKind::Rekey {
                account,
                new_authority,
            } = &tx.kind
            {
                authority.insert(*account, *new_authority);
                rekeys += 1;
            }
        }
    }
    assert!(rekeys >= 1, "escrow flow must exercise rekey");
}

#[test]
fn observed_transitions_stay_within_the_allowed_edge_set() {
    use lunamarket::marketplace::transition_allowed;
    use lunamarket::sim::Mode;

    let mut cfg = load_scenario(&scenario_path("reference.scenario")).unwrap();
    cfg.mode = Mode::Coordinated;
    let out = run_scenario(&cfg).unwrap();

    let parse = |s: &str| match s {
        "Open" => ContractState::Open,
        "BiddingClosed" => ContractState::BiddingClosed,
        "Accepted" => ContractState::Accepted,
        "Executing" => ContractState::Executing,
        "Delivered" => ContractState::Delivered,
        "Settled" => ContractState::Settled,
        "Expired" => ContractState::Expired,
        "Failed" => ContractState::Failed,
        other => panic!("unknown state {other}"),
    };
    let mut transitions = 0;
    for r in out.events().records() {
        if let (Some(from), Some(to)) = (r.field_str("from"), r.field_str("to")) {
            assert!(
                transition_allowed(parse(from), parse(to)),
                "illegal observed transition {from} -> {to}"
            );
            transitions += 1;
        }
    }
    assert!(transitions > 100, "expected a busy run, saw {transitions}");

    // end-state soundness: nothing past its execution deadline is still
    // executing at the end of the run
    for c in out.world.contracts() {
        let job = out.world.job(c.job_id).unwrap();
        if job.execution_deadline_ms < cfg.duration_ms {
            assert_ne!(
                c.state,
                ContractState::Executing,
                "{} past its deadline at end of run",
                c.id
            );
            assert_ne!(c.state, ContractState::Accepted);
        }
        // escrow only lives in Accepted..Delivered
        match c.state {
            ContractState::Accepted | ContractState::Executing | ContractState::Delivered => {}
            _ => assert_eq!(c.escrow_held_micro, 0, "{} holds stranded escrow", c.id),
        }
    }

    // rationality: every logged bid prices at or above its cost floor
    let mut priced = 0;
    for r in out.events().iter_kind("bid_decision") {
        if let (Some(floor), Some(price)) =
            (r.field_u64("costFloorMicro"), r.field_u64("priceMicro"))
        {
            assert!(price >= floor, "bid below cost floor");
            priced += 1;
        }
    }
    assert!(priced > 0);

    // coverage fraction never decreases
    let mut last = 0.0;
    for r in out.events().iter_kind("cell_mapped") {
        let f = r.field("fractionMapped").unwrap().as_f64().unwrap();
        assert!(f >= last);
        last = f;
    }
    assert_eq!(last, 1.0, "reference run reaches full coverage");
}

/// With a single robot there is nothing to coordinate: the coordinated
/// and baseline modes visit cells in the same greedy order and travel
/// the same total distance.
#[test]
fn single_robot_covers_in_the_same_order_in_both_modes() {
    use lunamarket::sim::{parse_scenario, Mode};

    let text = r#"
seed = 11
mode = "both"
duration_ms = 1800000
[tiling]
frequency = 1
radius_m = 2.5
[[robots]]
id = "solo"
home_cell = 0
speed_m_per_s = 0.2
mapping_rate_ms_per_cell = 5000
[[clients]]
id = "earth-client"
initial_balance_micro = 10000000000
[[clients.jobs]]
all_cells = true
max_price_micro = 50000000
bidding_window_ms = 2000
execution_window_ms = 120000
repeat_until_covered = true
"#;
    let mut cfg = parse_scenario(text).unwrap();
    let order_of = |out: &lunamarket::sim::RunOutput| -> Vec<String> {
        out.events()
            .iter_kind("cell_mapped")
            .map(|r| r.field_str("cell").unwrap().to_string())
            .collect()
    };
    cfg.mode = Mode::Coordinated;
    let coordinated = run_scenario(&cfg).unwrap();
    cfg.mode = Mode::Baseline;
    let baseline = run_scenario(&cfg).unwrap();

    let co = order_of(&coordinated);
    let bo = order_of(&baseline);
    assert_eq!(co.len(), 12, "coordinated covers the whole gp(1,0) grid");
    assert_eq!(co, bo, "one bidder must reproduce the greedy sweep order");
    assert_eq!(
        coordinated.metrics.total_distance_m, baseline.metrics.total_distance_m,
        "no distance advantage is possible with one robot"
    );
}

/// Artifacts produced by the mapping executor always pass the
/// marketplace plausibility check when the requirements were
/// satisfiable in the first place.
#[test]
fn executed_artifacts_always_pass_plausibility() {
    use lunamarket::agents::{
        decide_bid, execute_mapping, BidDecision, DistanceModel, MarginPolicy, RobotSpec,
    };
    use lunamarket::marketplace::{JobParams, JobRequirements, World, WorldConfig};
    use lunamarket::selenography::{CellId, Tiling};
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeSet;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x90BD);
    let tiling = Tiling::build(2, 2.5).unwrap();
    let model = DistanceModel::Tiling(tiling);

    for round in 0..40 {
        let mut world = World::new(WorldConfig::default());
        let client = world.ledger.create_account(1_000 * CREDIT).unwrap();
        let account = world.ledger.create_account(0).unwrap();
        let mut robot = RobotSpec {
            name: "prop-robot".into(),
            account,
            home_cell: CellId::new(2, rng.random_range(0..42)),
            current_cell: CellId::new(2, rng.random_range(0..42)),
            speed_m_per_s: 0.5,
            cost_rate_micro_per_m: 2_000_000,
            margin: MarginPolicy::default(),
            sensor_suite: ["camera".to_string(), "lidar".to_string()]
                .into_iter()
                .collect(),
            map_resolution_m_per_px: 0.25,
            mapping_rate_ms_per_cell: 1_000,
            algorithm: "occupancy-grid".to_string(),
            blob_bytes_per_cell: 2_048,
        };
        let n_cells = rng.random_range(1..4usize);
        let cells: BTreeSet<CellId> = (0..n_cells)
            .map(|_| CellId::new(2, rng.random_range(0..42)))
            .collect();
        let params = JobParams {
            client,
            target_cells: cells,
            max_price_micro: 200 * CREDIT,
            bidding_deadline_ms: 1_000,
            execution_deadline_ms: 600_000,
            requirements: JobRequirements {
                min_resolution_m_per_px: 0.5,
                required_sensors: ["camera".to_string()].into_iter().collect(),
                allowed_algorithms: ["occupancy-grid".to_string()].into_iter().collect(),
            },
        };
        let (_, contract_id) = world.post_job_request(params, 0).unwrap();
        let job = world
            .job(world.contract(contract_id).unwrap().job_id)
            .unwrap()
            .clone();
        let price = match decide_bid(&robot, &job, None, &model).unwrap() {
            BidDecision::Bid { price_micro, .. } => price_micro,
            BidDecision::Abstain { reason, .. } => panic!("satisfiable job abstained: {reason:?}"),
        };
        world.submit_bid(contract_id, account, price, 500).unwrap();
        world.finalize_auction(contract_id, 1_000).unwrap();
        world.accept_and_escrow(contract_id, 2_000).unwrap();
        world.begin_execution(contract_id, 2_100).unwrap();
        let contract = world.contract(contract_id).unwrap().clone();
        let run = execute_mapping(
            &mut robot,
            &job,
            &contract,
            &model,
            2_100,
            round as u64,
            &job.target_cells,
        )
        .unwrap();
        let report = world
            .submit_deliverable(
                contract_id,
                &run.artifact.blob,
                run.artifact.metadata,
                run.completes_at_ms.max(2_101),
            )
            .unwrap();
        assert!(
            report.passed,
            "round {round}: plausibility failures {:?}",
            report.failures
        );
        world
            .settle(contract_id, run.completes_at_ms.max(2_101) + 1)
            .unwrap();
        assert!(world.ledger.conservation_holds());
    }
}
