//! Run metrics computed from the event log: bandwidth per transaction,
//! transaction durations, the coverage curve, traveled distances and
//! payment totals. Per-link byte counters come from the network and are
//! attached by the runner.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::events::EventLog;
use crate::netsim::LinkStats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SeriesStats {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub count: usize,
}

/// Mean/median/population-stddev of a series; None when empty (absent,
/// not zero). Median of an even-length series is the midpoint of the
/// two central values.
pub fn series_stats(xs: &[f64]) -> Option<SeriesStats> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let variance = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Some(SeriesStats {
        mean,
        median,
        stddev: variance.sqrt(),
        count: n,
    })
}

#[derive(Clone, Debug, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsSummary {
    /// Upload bytes of the deliverable behind each settled contract.
    pub per_tx_bytes: Option<SeriesStats>,
    /// Escrow-acceptance to settlement, per settled contract.
    pub tx_duration_ms: Option<SeriesStats>,
    /// (timeMs, fraction of cells mapped); nondecreasing.
    pub coverage_curve: Vec<(u64, f64)>,
    pub time_to_full_coverage_ms: Option<u64>,
    pub total_distance_by_robot: BTreeMap<String, f64>,
    pub total_distance_m: f64,
    /// Microcredits received through settlements and resales.
    pub total_payments_by_account: BTreeMap<String, u64>,
    pub settled_contracts: usize,
    pub expired_contracts: usize,
    pub failed_contracts: usize,
    pub link_counters: BTreeMap<String, LinkStats>,
}

pub fn compute_metrics(events: &EventLog, total_cells: usize) -> MetricsSummary {
    let mut summary = MetricsSummary::default();

    // deliverable upload size per contract (last delivery wins; retries
    // overwrite)
    let mut upload_bytes: BTreeMap<u64, f64> = BTreeMap::new();
    for r in events.iter_kind("message_delivered") {
        if r.field_str("payloadKind") == Some("deliverable") {
            if let (Some(cid), Some(size)) = (r.field_u64("contractId"), r.field_u64("sizeBytes")) {
                upload_bytes.insert(cid, size as f64);
            }
        }
    }

    let mut accepted_at: BTreeMap<u64, u64> = BTreeMap::new();
    for r in events.iter_kind("contract_accepted") {
        if let Some(cid) = r.field_u64("contractId") {
            accepted_at.insert(cid, r.time_ms);
        }
    }

    let mut per_tx = Vec::new();
    let mut durations = Vec::new();
    for r in events.iter_kind("contract_settled") {
        summary.settled_contracts += 1;
        let Some(cid) = r.field_u64("contractId") else {
            continue;
        };
        if let Some(bytes) = upload_bytes.get(&cid) {
            per_tx.push(*bytes);
        }
        if let Some(t0) = accepted_at.get(&cid) {
            durations.push((r.time_ms - t0) as f64);
        }
    }
    summary.expired_contracts = events.iter_kind("contract_expired").count();
    summary.failed_contracts = events.iter_kind("contract_failed").count();
    summary.per_tx_bytes = series_stats(&per_tx);
    summary.tx_duration_ms = series_stats(&durations);

    // coverage over distinct mapped cells
    let mut covered: BTreeSet<String> = BTreeSet::new();
    for r in events.iter_kind("cell_mapped") {
        if let Some(cell) = r.field_str("cell") {
            covered.insert(cell.to_string());
            let fraction = covered.len() as f64 / total_cells.max(1) as f64;
            summary.coverage_curve.push((r.time_ms, fraction));
            if covered.len() == total_cells && summary.time_to_full_coverage_ms.is_none() {
                summary.time_to_full_coverage_ms = Some(r.time_ms);
            }
        }
    }

    for r in events.iter_kind("robot_move") {
        let (Some(robot), Some(d)) = (r.field_str("robot"), r.field("distanceM")) else {
            continue;
        };
        let d = d.as_f64().unwrap_or(0.0);
        *summary
            .total_distance_by_robot
            .entry(robot.to_string())
            .or_insert(0.0) += d;
        summary.total_distance_m += d;
    }

    for r in events.iter_kind("contract_settled") {
        let Some(cid) = r.field_u64("contractId") else {
            continue;
        };
        let _ = cid;
        if let (Some(actor), Some(price)) = (r.field_str("actor"), r.field_u64("priceMicro")) {
            *summary
                .total_payments_by_account
                .entry(actor.to_string())
                .or_insert(0) += price;
        }
    }
    for r in events.iter_kind("asset_resold") {
        if let (Some(seller), Some(price), Some(commission)) = (
            r.field_str("actor"),
            r.field_u64("salePriceMicro"),
            r.field_u64("commissionMicro"),
        ) {
            *summary
                .total_payments_by_account
                .entry(seller.to_string())
                .or_insert(0) += price - commission;
        }
        if let Some(payouts) = r.field("pioneerPayouts").and_then(|v| v.as_array()) {
            for p in payouts {
                if let (Some(acct), Some(amount)) = (
                    p.get("account").and_then(|v| v.as_str()),
                    p.get("amountMicro").and_then(|v| v.as_u64()),
                ) {
                    *summary
                        .total_payments_by_account
                        .entry(acct.to_string())
                        .or_insert(0) += amount;
                }
            }
        }
    }

    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn stats_match_hand_computed_oracles() {
        // durations 8, 9, 12 seconds: median 9 s
        let s = series_stats(&[8_000.0, 9_000.0, 12_000.0]).unwrap();
        assert_eq!(s.median, 9_000.0);
        let mean = (8_000.0 + 9_000.0 + 12_000.0) / 3.0;
        assert!((s.mean - mean).abs() < 1e-9);
        // population variance computed by hand
        let var =
            ((8_000.0 - mean).powi(2) + (9_000.0 - mean).powi(2) + (12_000.0 - mean).powi(2)) / 3.0;
        assert!((s.stddev - var.sqrt()).abs() < 1e-9);
        assert_eq!(s.count, 3);
    }

    #[test]
    fn constant_series_has_zero_stddev_and_empty_is_absent() {
        let s = series_stats(&[5.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!(s.stddev, 0.0);
        assert_eq!(s.mean, 5.0);
        assert!(series_stats(&[]).is_none());
    }

    #[test]
    fn even_length_median_is_the_midpoint() {
        let s = series_stats(&[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(s.median, 4.0);
    }

    #[test]
    fn metrics_join_settlements_with_uploads_and_coverage() {
        let mut log = EventLog::new();
        log.emit(1_000, "contract_accepted", [("contractId", json!(7))]);
        log.emit(
            2_000,
            "message_delivered",
            [
                ("payloadKind", json!("deliverable")),
                ("contractId", json!(7)),
                ("sizeBytes", json!(4_700_000)),
            ],
        );
        log.emit(
            3_000,
            "robot_move",
            [("robot", json!("sp-d")), ("distanceM", json!(5.0))],
        );
        log.emit(
            10_000,
            "contract_settled",
            [
                ("contractId", json!(7)),
                ("actor", json!("aa")),
                ("priceMicro", json!(10_000_000)),
            ],
        );
        log.emit(10_000, "cell_mapped", [("cell", json!("gp0-0"))]);
        log.emit(20_000, "cell_mapped", [("cell", json!("gp0-1"))]);
        let m = compute_metrics(&log, 2);
        assert_eq!(m.per_tx_bytes.unwrap().median, 4_700_000.0);
        assert_eq!(m.tx_duration_ms.unwrap().mean, 9_000.0);
        assert_eq!(m.coverage_curve, vec![(10_000, 0.5), (20_000, 1.0)]);
        assert_eq!(m.time_to_full_coverage_ms, Some(20_000));
        assert_eq!(m.total_distance_m, 5.0);
        assert_eq!(m.total_payments_by_account["aa"], 10_000_000);
        assert_eq!(m.settled_contracts, 1);
        // curve never decreases
        for w in m.coverage_curve.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
    }
}
