//! Run the bundled reference scenario in both modes and print the
//! efficiency comparison.

use std::path::Path;

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/reference.scenario");
    let cfg = lunamarket::sim::load_scenario(&path).expect("bundled scenario parses");
    let out = lunamarket::sim::compare_baseline(&cfg).expect("comparison runs");
    let r = &out.report;
    println!("seed {}", r.seed);
    println!(
        "coordinated: {:8.1} m traveled, full coverage at {:?} ms, {} contracts settled",
        r.coordinated.total_distance_m,
        r.coordinated.time_to_full_coverage_ms,
        r.coordinated.settled_contracts
    );
    println!(
        "baseline:    {:8.1} m traveled, full coverage at {:?} ms",
        r.baseline.total_distance_m, r.baseline.time_to_full_coverage_ms
    );
    println!(
        "saved by coordination: {:.1} m distance, {:?} ms coverage time",
        r.distance_saved_m, r.coverage_time_saved_ms
    );
    for (robot, d) in &r.coordinated.total_distance_by_robot {
        println!("  coordinated {robot}: {d:.1} m");
    }
    for (robot, d) in &r.baseline.total_distance_by_robot {
        println!("  baseline    {robot}: {d:.1} m");
    }
}
