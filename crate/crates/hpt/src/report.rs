//! Solve reports: objective and bounds, the passenger cost breakdown,
//! operational plans, per-group flows and the iteration trace, with JSON
//! and CSV serialization.

use serde::{Deserialize, Serialize};

use crate::benders::{BendersResult, TraceRow};
use crate::model::{ExtraPlan, TrainPlan};
use crate::preprocess::Prepared;
use crate::pricing::Column;
use crate::solver::SolveStatus;
use crate::tsnet::{ArcKind, NodeKind};
use crate::validate::{PaxPath, Segment};

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct CostBreakdown {
    pub shift: f64,
    pub wait: f64,
    pub in_vehicle: f64,
    pub transfer: f64,
    pub penalty: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.shift + self.wait + self.in_vehicle + self.transfer + self.penalty
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupFlow {
    pub group: u32,
    pub served: f64,
    pub unserved: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RsuUsage {
    pub rsu_type: u32,
    pub services: usize,
    /// Peak number of units simultaneously away from inventories.
    pub peak_units: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: String,
    pub objective: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap: f64,
    pub breakdown: CostBreakdown,
    pub trains: Vec<TrainPlan>,
    pub extras: Vec<ExtraPlan>,
    pub paths: Vec<PaxPath>,
    pub group_flows: Vec<GroupFlow>,
    pub rsu_usage: Vec<RsuUsage>,
    pub columns_generated: usize,
    pub cuts_added: usize,
    pub lp_phase_ms: u128,
    pub ip_phase_ms: u128,
    pub trace: Vec<TraceRow>,
}

pub fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::FeasibleWithGap => "feasible-with-gap",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Unbounded => "unbounded",
        SolveStatus::Limit => "limit",
    }
}

/// Converts a priced column into reportable path terms.
pub fn column_to_path(prep: &Prepared, col: &Column, volume: f64) -> PaxPath {
    let net = &prep.net;
    let inst = &prep.inst;
    let mut segments = Vec::new();
    let mut board = 0;
    let mut alight = 0;
    let mut transfers = 0;
    for &a in &col.arcs {
        let arc = net.arc(a);
        match arc.kind {
            ArcKind::PaxOrigin { .. } => board = net.vertex_time(arc.head),
            ArcKind::PaxDest { .. } => alight = net.vertex_time(arc.tail),
            ArcKind::TransferWalk { .. } => transfers += 1,
            ArcKind::Section { .. } => {
                let from = match net.vertex_kind(arc.tail) {
                    NodeKind::DepStop { station, .. } | NodeKind::DepSkip { station, .. } => station,
                    _ => unreachable!(),
                };
                let to = match net.vertex_kind(arc.head) {
                    NodeKind::ArrStop { station, .. } | NodeKind::ArrSkip { station, .. } => station,
                    _ => unreachable!(),
                };
                segments.push(Segment {
                    from: inst.station(from).id,
                    to: inst.station(to).id,
                    dep: net.vertex_time(arc.tail),
                    arr: net.vertex_time(arc.head),
                });
            }
            _ => {}
        }
    }
    PaxPath {
        group: inst.group(col.group).id,
        volume,
        board,
        alight,
        transfers,
        segments,
    }
}

/// Cost breakdown of a set of flows plus unserved penalties.
pub fn breakdown(prep: &Prepared, flows: &[(Column, f64)], unrouted: &[f64]) -> CostBreakdown {
    let net = &prep.net;
    let inst = &prep.inst;
    let mut b = CostBreakdown::default();
    for (col, volume) in flows {
        let g = inst.group(col.group);
        for &a in &col.arcs {
            let c = net.arc_cost(a, g) * volume;
            match net.arc(a).kind {
                ArcKind::PaxOrigin { .. } => b.shift += c,
                ArcKind::TransferWait { .. } => b.wait += c,
                ArcKind::Section { .. } | ArcKind::Dwell { .. } | ArcKind::Passing { .. } => {
                    b.in_vehicle += c
                }
                ArcKind::TransferWalk { .. } => b.transfer += c,
                _ => {}
            }
        }
    }
    for (r, &q) in unrouted.iter().enumerate() {
        b.penalty += inst.group(r).penalty * q;
    }
    b
}

/// Assembles the full report from a decomposition result.
pub fn assemble(prep: &Prepared, res: &BendersResult) -> SolveReport {
    let inst = &prep.inst;
    let (breakdown_v, trains, extras, paths, group_flows, rsu_usage) = match &res.best {
        Some(best) => {
            let b = breakdown(prep, &best.flows, &best.unrouted);
            let paths: Vec<PaxPath> = best
                .flows
                .iter()
                .map(|(c, v)| column_to_path(prep, c, *v))
                .collect();
            let mut served = vec![0.0; inst.n_groups()];
            for (c, v) in &best.flows {
                served[c.group] += v;
            }
            let flows = (0..inst.n_groups())
                .map(|r| GroupFlow {
                    group: inst.group(r).id,
                    served: served[r],
                    unserved: best.unrouted.get(r).copied().unwrap_or(0.0),
                })
                .collect();
            let usage = rsu_usage_of(prep, &best.decoded.trains, &best.decoded.extras);
            (
                b,
                best.decoded.trains.clone(),
                best.decoded.extras.clone(),
                paths,
                flows,
                usage,
            )
        }
        None => (
            CostBreakdown::default(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
        ),
    };
    SolveReport {
        status: status_name(res.status).into(),
        objective: res.upper_bound,
        lower_bound: res.lower_bound,
        upper_bound: res.upper_bound,
        gap: res.gap,
        breakdown: breakdown_v,
        trains,
        extras,
        paths,
        group_flows,
        rsu_usage,
        columns_generated: res.columns_generated,
        cuts_added: res.cuts.len(),
        lp_phase_ms: res.lp_phase_wall.as_millis(),
        ip_phase_ms: res.ip_phase_wall.as_millis(),
        trace: res.trace.clone(),
    }
}

fn rsu_usage_of(prep: &Prepared, trains: &[TrainPlan], extras: &[ExtraPlan]) -> Vec<RsuUsage> {
    let inst = &prep.inst;
    let conn = inst.data.params.rsu_transition;
    inst.data
        .rsu_types
        .iter()
        .map(|rsu| {
            let mut events: Vec<(crate::Minute, i64)> = Vec::new();
            let mut services = 0usize;
            for plan in trains.iter().filter(|t| t.operated) {
                if plan.rsu_type == Some(rsu.id) {
                    services += 1;
                    events.push((plan.events.first().unwrap().dep, 1));
                    events.push((plan.events.last().unwrap().arr + conn, -1));
                }
            }
            for plan in extras.iter().filter(|e| e.rsu_type == rsu.id) {
                services += 1;
                events.push((plan.events.first().unwrap().dep, 1));
                events.push((plan.events.last().unwrap().arr + conn, -1));
            }
            events.sort_by_key(|&(t, d)| (t, d));
            let mut level = 0i64;
            let mut peak = 0i64;
            for (_, d) in events {
                level += d;
                peak = peak.max(level);
            }
            RsuUsage {
                rsu_type: rsu.id,
                services,
                peak_units: peak.max(0) as u32,
            }
        })
        .collect()
}

/// CSV serialization of the iteration trace.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("phase,iteration,lb,ub,gap,alpha,cut_kind,columns_added,wall_ms\n");
    for row in trace {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.phase,
            row.iteration,
            row.lb,
            row.ub,
            row.gap,
            row.alpha,
            row.cut_kind,
            row.columns_added,
            row.wall_ms
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benders::{run_algorithm1, BendersConfig};
    use crate::instance::generate_micro;
    use crate::preprocess::{prepare, PrepOptions};
    use crate::solver::HighsBackend;

    #[test]
    fn breakdown_sums_to_objective_and_report_round_trips() {
        let inst = generate_micro(12);
        let prep = prepare(inst, &PrepOptions::default(), &HighsBackend).unwrap();
        let cfg = BendersConfig {
            gap: 0.0,
            ..BendersConfig::default()
        };
        let res = run_algorithm1(&prep, &HighsBackend, &cfg).unwrap();
        let report = assemble(&prep, &res);
        assert!(
            (report.breakdown.total() - report.objective).abs()
                <= 1e-6 * report.objective.max(1.0),
            "{} vs {}",
            report.breakdown.total(),
            report.objective
        );
        for gf in &report.group_flows {
            let g = prep.inst.group(prep.inst.group_pos(gf.group));
            assert!((gf.served + gf.unserved - g.size as f64).abs() < 1e-6);
        }
        let text = serde_json::to_string_pretty(&report).unwrap();
        let back: SolveReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.trains, report.trains);
        assert_eq!(back.paths, report.paths);
        assert_eq!(back.breakdown, report.breakdown);
        let csv = trace_csv(&report.trace);
        assert!(csv.lines().count() == report.trace.len() + 1);
    }
}
