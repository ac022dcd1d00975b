//! Column generation machinery for the capacitated passenger routing
//! subproblem: per-group pricing DAGs, a label-correcting resource-
//! constrained shortest path (transfers are the resource), partial
//! pricing, column copying across periods, and the hybrid two-phase
//! column generation loop.

use std::collections::{HashMap, HashSet};

use crate::instance::Instance;
use crate::solver::{Backend, LinearModel, RowSense, Sense, SolveParams, SolverError};
use crate::tsnet::{ArcId, ArcKind, NodeKind, Subnetwork, TimeSpaceNetwork, VertexId};
use crate::Minute;

/// Reduced costs below this threshold count as improving.
pub const RC_TOL: f64 = 1e-6;

/// Dual prices of the routing LP: `lambda` per capacity-constrained train
/// travel arc (nonpositive), `mu` per passenger group demand row.
#[derive(Debug, Clone)]
pub struct DualPrices {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

/// One passenger path column: its arcs in traversal order, the original
/// (dual-free) cost and the number of transfers used.
#[derive(Debug, Clone)]
pub struct Column {
    pub group: usize,
    pub arcs: Vec<ArcId>,
    pub cost: f64,
    pub transfers: u32,
}

impl Column {
    fn key(&self) -> (usize, Vec<ArcId>) {
        let mut sorted = self.arcs.clone();
        sorted.sort_unstable();
        (self.group, sorted)
    }
}

#[derive(Debug, Clone)]
pub struct PricingOutcome {
    pub group: usize,
    pub column: Option<Column>,
    pub reduced_cost: f64,
}

/// A per-group pricing graph in topological order. The arc topology is
/// fixed per group; only the dual-modified costs change between calls.
#[derive(Debug, Clone)]
pub struct GroupDag {
    pub group: usize,
    /// Original vertex ids in topological order.
    pub vertices: Vec<VertexId>,
    /// Original arc ids, sorted by topological tail position.
    pub arcs: Vec<ArcId>,
    pub tails: Vec<u32>,
    pub heads: Vec<u32>,
    pub is_transfer: Vec<bool>,
    /// Group-resolved base cost per arc (origin shift included).
    pub base_cost: Vec<f64>,
    /// Position in the shared capacity arc list, for train travel arcs.
    pub cap_index: Vec<Option<u32>>,
    pub source: u32,
    pub sink: u32,
}

impl GroupDag {
    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }
}

/// Shared context for pricing: the capacity-constrained arc list (all
/// train travel arcs usable by trains or appearing in any passenger
/// subnetwork) and the per-group DAGs.
pub struct PricingContext {
    /// Capacity-constrained arcs, ascending. The leading part usable by
    /// trains is what Benders cuts range over.
    pub cap_arcs: Vec<ArcId>,
    pub cap_index: HashMap<ArcId, u32>,
    /// True if the arc is in the extra-train subnetwork (extra-eligible).
    pub extra_eligible: Vec<bool>,
    /// True if some original or extra train can traverse the arc.
    pub train_usable: Vec<bool>,
    pub dags: Vec<GroupDag>,
    /// Group period (from the preferred window start and the cycle time).
    pub period_of: Vec<u32>,
    /// Same-OD groups by (origin, destination), ascending period.
    pub od_groups: HashMap<(u32, u32), Vec<usize>>,
}

/// Topological sort key: od origins first, od destinations last, and
/// within a minute the node kinds in arc-flow order (arrivals before
/// transfer/inventory before departures).
fn topo_key(net: &TimeSpaceNetwork, v: VertexId) -> (Minute, u8, u32) {
    let kind = net.vertex_kind(v);
    match kind {
        NodeKind::PaxOrigin { .. } => (Minute::MIN, 0, v),
        NodeKind::PaxDest { .. } => (Minute::MAX, 5, v),
        _ => {
            let rank = match kind {
                NodeKind::ArrStop { .. } | NodeKind::ArrSkip { .. } => 1,
                NodeKind::Transfer { .. } => 2,
                NodeKind::Inventory { .. } => 3,
                NodeKind::DepStop { .. } | NodeKind::DepSkip { .. } => 4,
                _ => unreachable!(),
            };
            (net.vertex_time(v), rank, v)
        }
    }
}

pub fn build_pricing_context(
    net: &TimeSpaceNetwork,
    inst: &Instance,
    train_subs: &[Subnetwork],
    extra_sub: &Subnetwork,
    pax_subs: &[Subnetwork],
) -> PricingContext {
    // Capacity arcs: train travel arcs reachable by trains, plus train
    // travel arcs inside passenger subnetworks (these have zero provided
    // capacity unless some train covers them).
    let mut usable: HashSet<ArcId> = HashSet::new();
    for sub in train_subs {
        usable.extend(sub.non_virtual());
    }
    usable.extend(extra_sub.non_virtual());
    let mut cap_set: HashSet<ArcId> = usable.clone();
    for sub in pax_subs {
        for &a in &sub.arcs {
            if net.arc(a).kind.is_train_travel() {
                cap_set.insert(a);
            }
        }
    }
    let mut cap_arcs: Vec<ArcId> = cap_set.into_iter().collect();
    cap_arcs.sort_unstable();
    let cap_index: HashMap<ArcId, u32> = cap_arcs
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, i as u32))
        .collect();
    let extra_eligible: Vec<bool> = cap_arcs.iter().map(|a| extra_sub.contains(*a)).collect();
    let train_usable: Vec<bool> = cap_arcs.iter().map(|a| usable.contains(a)).collect();

    let dags = pax_subs
        .iter()
        .enumerate()
        .map(|(r, sub)| build_group_dag(net, r, sub, inst, &cap_index))
        .collect();

    let cycle = inst.data.params.cycle;
    let period_of: Vec<u32> = (0..inst.n_groups())
        .map(|r| {
            let g = inst.group(r);
            (g.pref_from.max(0) / cycle) as u32
        })
        .collect();
    let mut od_groups: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for r in 0..inst.n_groups() {
        let g = inst.group(r);
        od_groups
            .entry((g.origin, g.destination))
            .or_default()
            .push(r);
    }
    for groups in od_groups.values_mut() {
        groups.sort_by_key(|&r| (period_of[r], r));
    }

    PricingContext {
        cap_arcs,
        cap_index,
        extra_eligible,
        train_usable,
        dags,
        period_of,
        od_groups,
    }
}

fn build_group_dag(
    net: &TimeSpaceNetwork,
    r: usize,
    sub: &Subnetwork,
    inst: &Instance,
    cap_index: &HashMap<ArcId, u32>,
) -> GroupDag {
    if sub.is_empty() {
        return GroupDag {
            group: r,
            vertices: Vec::new(),
            arcs: Vec::new(),
            tails: Vec::new(),
            heads: Vec::new(),
            is_transfer: Vec::new(),
            base_cost: Vec::new(),
            cap_index: Vec::new(),
            source: 0,
            sink: 0,
        };
    }
    let group = inst.group(r);
    let mut vertex_set: HashSet<VertexId> = HashSet::new();
    for &a in &sub.arcs {
        vertex_set.insert(net.arc(a).tail);
        vertex_set.insert(net.arc(a).head);
    }
    let mut vertices: Vec<VertexId> = vertex_set.into_iter().collect();
    vertices.sort_by_key(|&v| topo_key(net, v));
    let v_index: HashMap<VertexId, u32> = vertices
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i as u32))
        .collect();

    let mut arcs = sub.arcs.clone();
    arcs.sort_by_key(|&a| (v_index[&net.arc(a).tail], a));
    let tails: Vec<u32> = arcs.iter().map(|&a| v_index[&net.arc(a).tail]).collect();
    let heads: Vec<u32> = arcs.iter().map(|&a| v_index[&net.arc(a).head]).collect();
    let is_transfer: Vec<bool> = arcs
        .iter()
        .map(|&a| matches!(net.arc(a).kind, ArcKind::TransferWalk { .. }))
        .collect();
    let base_cost: Vec<f64> = arcs.iter().map(|&a| net.arc_cost(a, group)).collect();
    let cap: Vec<Option<u32>> = arcs.iter().map(|&a| cap_index.get(&a).copied()).collect();

    let o_node = net.node_id(NodeKind::PaxOrigin { group: r }).unwrap();
    let d_node = net.node_id(NodeKind::PaxDest { group: r }).unwrap();
    let source = v_index[&net.vertex(o_node, 0).unwrap()];
    let sink = v_index[&net.vertex(d_node, 0).unwrap()];

    GroupDag {
        group: r,
        vertices,
        arcs,
        tails,
        heads,
        is_transfer,
        base_cost,
        cap_index: cap,
        source,
        sink,
    }
}

/// Enumerates every source-sink path of a group DAG with the transfer
/// cap, up to `limit` paths; `None` when the limit is exceeded. Intended
/// for the monolithic path formulation on small instances and for test
/// oracles.
pub fn enumerate_group_columns(dag: &GroupDag, max_transfers: u32, limit: usize) -> Option<Vec<Column>> {
    if dag.is_empty() {
        return Some(Vec::new());
    }
    let mut out_arcs: Vec<Vec<usize>> = vec![Vec::new(); dag.vertices.len()];
    for (i, &t) in dag.tails.iter().enumerate() {
        out_arcs[t as usize].push(i);
    }
    let mut columns = Vec::new();
    // Iterative DFS carrying (vertex, next-arc cursor) frames.
    let mut stack: Vec<(usize, usize)> = vec![(dag.source as usize, 0)];
    let mut chosen: Vec<usize> = Vec::new();
    let mut transfers = 0u32;
    while let Some((v, cursor)) = stack.last_mut() {
        if *v == dag.sink as usize {
            let arcs: Vec<ArcId> = chosen.iter().map(|&i| dag.arcs[i]).collect();
            let cost = chosen.iter().map(|&i| dag.base_cost[i]).sum();
            columns.push(Column {
                group: dag.group,
                arcs,
                cost,
                transfers,
            });
            if columns.len() > limit {
                return None;
            }
            stack.pop();
            if let Some(&i) = chosen.last() {
                transfers -= dag.is_transfer[i] as u32;
                chosen.pop();
            }
            continue;
        }
        let next = out_arcs[*v].get(*cursor).copied();
        *cursor += 1;
        match next {
            Some(i) => {
                let t = transfers + dag.is_transfer[i] as u32;
                if t > max_transfers {
                    continue;
                }
                transfers = t;
                chosen.push(i);
                stack.push((dag.heads[i] as usize, 0));
            }
            None => {
                stack.pop();
                if let Some(&i) = chosen.last() {
                    transfers -= dag.is_transfer[i] as u32;
                    chosen.pop();
                }
            }
        }
    }
    Some(columns)
}

/// Label-correcting pass over a topologically ordered DAG. Keeps, per
/// vertex, the cheapest label for each transfer count up to the cap; a
/// label is dominated iff another has no higher cost and no more
/// transfers. Returns the cheapest source-sink path (cost, arcs as local
/// indices, transfers), breaking cost ties toward fewer transfers.
pub fn solve_rcsp(
    dag: &GroupDag,
    costs: &[f64],
    max_transfers: u32,
) -> Option<(f64, Vec<usize>, u32)> {
    if dag.is_empty() {
        return None;
    }
    let nv = dag.vertices.len();
    let k = max_transfers as usize + 1;
    let mut cost = vec![f64::INFINITY; nv * k];
    let mut pred: Vec<i32> = vec![-1; nv * k];
    cost[dag.source as usize * k] = 0.0;

    // Arcs are sorted by topological tail position, so one sweep settles
    // every label.
    for (i, (&t, &h)) in dag.tails.iter().zip(dag.heads.iter()).enumerate() {
        let transfer = dag.is_transfer[i] as usize;
        for r in 0..k {
            let c = cost[t as usize * k + r];
            if !c.is_finite() {
                continue;
            }
            let nr = r + transfer;
            if nr >= k {
                continue;
            }
            let cand = c + costs[i];
            let slot = h as usize * k + nr;
            if cand < cost[slot] {
                cost[slot] = cand;
                pred[slot] = i as i32;
            }
        }
    }

    let sink = dag.sink as usize;
    let mut best: Option<(f64, usize)> = None;
    for r in 0..k {
        let c = cost[sink * k + r];
        if c.is_finite() {
            match best {
                Some((bc, _)) if bc <= c => {}
                _ => best = Some((c, r)),
            }
        }
    }
    let (total, mut r) = best?;
    let mut arcs_rev = Vec::new();
    let mut v = sink;
    while v != dag.source as usize || r != 0 {
        let p = pred[v * k + r];
        if p < 0 {
            debug_assert!(v == dag.source as usize && r == 0);
            break;
        }
        let i = p as usize;
        arcs_rev.push(i);
        v = dag.tails[i] as usize;
        r -= dag.is_transfer[i] as usize;
    }
    arcs_rev.reverse();
    let transfers = arcs_rev.iter().filter(|&&i| dag.is_transfer[i]).count() as u32;
    Some((total, arcs_rev, transfers))
}

/// Dual-modified arc costs for pricing: `c - lambda` on capacity arcs.
fn modified_costs(dag: &GroupDag, lambda: &[f64], forbidden: Option<&[bool]>) -> Vec<f64> {
    dag.arcs
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let mut c = dag.base_cost[i];
            if let Some(cap) = dag.cap_index[i] {
                c -= lambda[cap as usize];
                if let Some(f) = forbidden {
                    if f[cap as usize] {
                        c = f64::INFINITY;
                    }
                }
            }
            c
        })
        .collect()
}

/// Prices one group against a dual snapshot: the minimum-reduced-cost
/// path. `forbidden` masks capacity arcs that pricing may not use (the
/// simplified closed-arc mode of the Open-Close strengthening).
pub fn price_group(
    dag: &GroupDag,
    duals: &DualPrices,
    max_transfers: u32,
    forbidden: Option<&[bool]>,
) -> PricingOutcome {
    let costs = modified_costs(dag, &duals.lambda, forbidden);
    match solve_rcsp(dag, &costs, max_transfers) {
        Some((mod_cost, local_arcs, transfers)) if mod_cost.is_finite() => {
            let rc = mod_cost - duals.mu[dag.group];
            let cost: f64 = local_arcs.iter().map(|&i| dag.base_cost[i]).sum();
            let arcs: Vec<ArcId> = local_arcs.iter().map(|&i| dag.arcs[i]).collect();
            PricingOutcome {
                group: dag.group,
                column: Some(Column {
                    group: dag.group,
                    arcs,
                    cost,
                    transfers,
                }),
                reduced_cost: rc,
            }
        }
        _ => PricingOutcome {
            group: dag.group,
            column: None,
            reduced_cost: f64::INFINITY,
        },
    }
}

/// Shifts a column of one group onto same-OD groups of later periods,
/// additionally trying every deviation offset within the original-train
/// deviation window. A copy is emitted only if every shifted arc exists
/// in the target group's subnetwork.
pub fn copy_columns(
    net: &TimeSpaceNetwork,
    ctx: &PricingContext,
    inst: &Instance,
    column: &Column,
) -> Vec<Column> {
    let g = inst.group(column.group);
    let cycle = inst.data.params.cycle;
    let tau = inst.data.params.deviation;
    let step = inst.data.params.step;
    let my_period = ctx.period_of[column.group];
    let targets = match ctx.od_groups.get(&(g.origin, g.destination)) {
        Some(t) => t,
        None => return Vec::new(),
    };
    let mut out = Vec::new();
    for &r2 in targets {
        if ctx.period_of[r2] <= my_period || r2 == column.group {
            continue;
        }
        let period_shift = (ctx.period_of[r2] - my_period) as Minute * cycle;
        let mut offset = -tau;
        while offset <= tau {
            if let Some(col) = shift_column(net, ctx, inst, column, r2, period_shift + offset) {
                out.push(col);
            }
            offset += step.max(1);
        }
    }
    out
}

fn shift_column(
    net: &TimeSpaceNetwork,
    ctx: &PricingContext,
    inst: &Instance,
    column: &Column,
    target: usize,
    shift: Minute,
) -> Option<Column> {
    let dag = &ctx.dags[target];
    if dag.is_empty() {
        return None;
    }
    let target_group = inst.group(target);
    let o_node = net.node_id(NodeKind::PaxOrigin { group: target }).unwrap();
    let d_node = net.node_id(NodeKind::PaxDest { group: target }).unwrap();
    let membership: HashSet<ArcId> = dag.arcs.iter().copied().collect();

    let mut arcs = Vec::with_capacity(column.arcs.len());
    let mut cost = 0.0;
    let mut transfers = 0u32;
    for &a in &column.arcs {
        let arc = net.arc(a);
        let shifted = match arc.kind {
            ArcKind::PaxOrigin { .. } => {
                let t = net.vertex_time(arc.head) + shift;
                let dep = net.vertex(net.vertex_node(arc.head), t)?;
                net.find_arc(net.vertex(o_node, 0).unwrap(), dep)?
            }
            ArcKind::PaxDest { .. } => {
                let t = net.vertex_time(arc.tail) + shift;
                let tail = net.vertex(net.vertex_node(arc.tail), t)?;
                net.find_arc(tail, net.vertex(d_node, 0).unwrap())?
            }
            _ => {
                let tt = net.vertex_time(arc.tail) + shift;
                let ht = net.vertex_time(arc.head) + shift;
                let tail = net.vertex(net.vertex_node(arc.tail), tt)?;
                let head = net.vertex(net.vertex_node(arc.head), ht)?;
                net.find_arc(tail, head)?
            }
        };
        if !membership.contains(&shifted) {
            return None;
        }
        if matches!(net.arc(shifted).kind, ArcKind::TransferWalk { .. }) {
            transfers += 1;
        }
        cost += net.arc_cost(shifted, target_group);
        arcs.push(shifted);
    }
    Some(Column {
        group: target,
        arcs,
        cost,
        transfers,
    })
}

/// The growing set of priced columns, deduplicated by (group, arc set).
#[derive(Default)]
pub struct ColumnPool {
    pub columns: Vec<Column>,
    seen: HashSet<(usize, Vec<ArcId>)>,
    pub by_group: Vec<Vec<usize>>,
    /// Total accepted columns, for acceleration statistics.
    pub generated: usize,
}

impl ColumnPool {
    pub fn new(n_groups: usize) -> Self {
        ColumnPool {
            columns: Vec::new(),
            seen: HashSet::new(),
            by_group: vec![Vec::new(); n_groups],
            generated: 0,
        }
    }

    pub fn insert(&mut self, col: Column) -> bool {
        let key = col.key();
        if !self.seen.insert(key) {
            return false;
        }
        self.by_group[col.group].push(self.columns.len());
        self.columns.push(col);
        self.generated += 1;
        true
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgMode {
    /// Full pricing of every group each iteration.
    Standard,
    /// Partial pricing: stop a pass after `s` improving columns.
    Pp,
    /// Column copying in a first phase, then standard pricing.
    Cc,
    /// Column copying first, then partial pricing (the hybrid scheme).
    CcPp,
}

impl std::str::FromStr for CgMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(CgMode::Standard),
            "pp" => Ok(CgMode::Pp),
            "cc" => Ok(CgMode::Cc),
            "cc+pp" => Ok(CgMode::CcPp),
            other => Err(format!("unknown cg mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgConfig {
    pub mode: CgMode,
    /// Partial pricing threshold; defaults to ceil(|R| / 10).
    pub s: Option<usize>,
    /// Phase-1 stops once the Lagrangian bound reaches this fraction of
    /// the restricted master objective.
    pub phase1_ratio: f64,
    pub max_iterations: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            mode: CgMode::Standard,
            s: None,
            phase1_ratio: 0.9,
            max_iterations: 100_000,
        }
    }
}

/// Extra column for the Magnanti-Wong auxiliary problem: objective
/// coefficient, per-capacity-arc coefficients and the demand coefficient
/// (the group size) are all attached to the single free variable.
pub struct KappaSpec {
    pub obj: f64,
    pub cap_coeffs: Vec<f64>,
}

pub struct RoutingOutcome {
    pub objective: f64,
    /// Capacity duals, dense over the context's capacity arcs (zero for
    /// rows that never materialized in the restricted master).
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub kappa: f64,
    /// Flow per pool column index.
    pub flows: Vec<(usize, f64)>,
    /// Unrouted volume per group.
    pub unrouted: Vec<f64>,
    pub cg_iterations: usize,
    pub columns_added: usize,
}

/// Cyclic partial-pricing cursor, persisted across calls so successive
/// passes resume where the previous one stopped.
#[derive(Debug, Default, Clone)]
pub struct PricingCursor {
    pub resume: usize,
}

/// Solves a capacitated routing LP (the Benders subproblem, or its
/// Magnanti-Wong auxiliary variant when `kappa` is given) by column
/// generation over the pool. Capacities are per context capacity arc.
/// Convergence is proven by a full pricing pass without improving
/// columns. Returns duals padded with zeros for rowless arcs.
#[allow(clippy::too_many_arguments)]
pub fn solve_routing_cg(
    backend: &dyn Backend,
    net: &TimeSpaceNetwork,
    inst: &Instance,
    ctx: &PricingContext,
    caps: &[f64],
    pool: &mut ColumnPool,
    cfg: &CgConfig,
    kappa: Option<&KappaSpec>,
    forbidden: Option<&[bool]>,
    active: Option<&[bool]>,
    cursor: &mut PricingCursor,
) -> Result<RoutingOutcome, SolverError> {
    let n_groups = inst.n_groups();
    let is_active = |r: usize| active.is_none_or(|m| m[r]);
    let s = cfg.s.unwrap_or_else(|| n_groups.div_ceil(10)).max(1);
    let max_transfers = inst.data.params.weights.max_transfers;
    let columns_before = pool.generated;

    // Column copying phase applies only to modes that request it.
    let copying = matches!(cfg.mode, CgMode::Cc | CgMode::CcPp);
    let mut phase1 = copying;
    let mut iterations = 0usize;
    let mut prev_objective = f64::INFINITY;

    loop {
        iterations += 1;
        if iterations > cfg.max_iterations {
            return Err(SolverError::Failed(
                "column generation exceeded the iteration limit".into(),
            ));
        }
        let (outcome, duals) = solve_restricted(backend, inst, ctx, caps, pool, kappa, active)?;
        debug_assert!(
            outcome.objective <= prev_objective + 1e-6 * prev_objective.abs().max(1.0),
            "restricted master objective must not increase: {} -> {}",
            prev_objective,
            outcome.objective
        );
        prev_objective = outcome.objective;

        // Pricing pass.
        let mut added = 0usize;
        let mut min_rc = vec![0.0f64; n_groups];
        let mut priced = vec![false; n_groups];
        let groups_in_phase: Vec<usize> = if phase1 {
            (0..n_groups)
                .filter(|&r| is_active(r) && ctx.period_of[r] == 0)
                .collect()
        } else {
            (0..n_groups).filter(|&r| is_active(r)).collect()
        };
        let partial = match cfg.mode {
            CgMode::Pp => true,
            CgMode::CcPp => !phase1,
            _ => false,
        };

        let order: Vec<usize> = if partial {
            let start = cursor.resume % groups_in_phase.len().max(1);
            (0..groups_in_phase.len())
                .map(|i| groups_in_phase[(start + i) % groups_in_phase.len()])
                .collect()
        } else {
            groups_in_phase.clone()
        };

        let mut scanned = 0usize;
        for &r in &order {
            scanned += 1;
            let out = price_group(&ctx.dags[r], &duals, max_transfers, forbidden);
            priced[r] = true;
            min_rc[r] = out.reduced_cost.min(0.0);
            if out.reduced_cost < -RC_TOL {
                if let Some(col) = out.column {
                    let copies = if phase1 && copying {
                        copy_columns(net, ctx, inst, &col)
                    } else {
                        Vec::new()
                    };
                    if pool.insert(col) {
                        added += 1;
                    }
                    for c in copies {
                        if is_active(c.group) {
                            pool.insert(c);
                        }
                    }
                }
            }
            if partial && added >= s {
                break;
            }
        }
        if partial {
            cursor.resume = (cursor.resume + scanned) % groups_in_phase.len().max(1);
        }

        if phase1 {
            // Lagrangian lower bound; unpriced groups contribute the
            // conservative -f_r stand-in.
            let mut lb = outcome.objective;
            for r in (0..n_groups).filter(|&r| is_active(r)) {
                let g = inst.group(r);
                let term = if priced[r] { min_rc[r] } else { -g.penalty };
                lb += g.size as f64 * term;
            }
            if added == 0 || lb >= cfg.phase1_ratio * outcome.objective {
                phase1 = false;
            }
            continue;
        }

        if added == 0 {
            let mut result = outcome;
            result.cg_iterations = iterations;
            result.columns_added = pool.generated - columns_before;
            return Ok(result);
        }
    }
}

/// Builds and solves the restricted routing LP over the current pool.
fn solve_restricted(
    backend: &dyn Backend,
    inst: &Instance,
    ctx: &PricingContext,
    caps: &[f64],
    pool: &ColumnPool,
    kappa: Option<&KappaSpec>,
    active: Option<&[bool]>,
) -> Result<(RoutingOutcome, DualPrices), SolverError> {
    let n_groups = inst.n_groups();
    let is_active = |r: usize| active.is_none_or(|m| m[r]);
    let n_cap = ctx.cap_arcs.len();

    // Capacity rows materialize for arcs used by pool columns, or carrying
    // a positive kappa coefficient (their constraint is active even with
    // no columns).
    let mut row_of_cap: Vec<i32> = vec![-1; n_cap];
    let mut cap_rows: Vec<u32> = Vec::new();
    let mark = |idx: u32, row_of_cap: &mut Vec<i32>, cap_rows: &mut Vec<u32>| {
        if row_of_cap[idx as usize] < 0 {
            row_of_cap[idx as usize] = cap_rows.len() as i32;
            cap_rows.push(idx);
        }
    };
    for col in pool.columns.iter().filter(|c| is_active(c.group)) {
        for &a in &col.arcs {
            if let Some(&idx) = ctx.cap_index.get(&a) {
                mark(idx, &mut row_of_cap, &mut cap_rows);
            }
        }
    }
    if let Some(ks) = kappa {
        for (idx, &c) in ks.cap_coeffs.iter().enumerate() {
            if c > 0.0 {
                mark(idx as u32, &mut row_of_cap, &mut cap_rows);
            }
        }
    }

    let mut m = LinearModel::new("routing-rmp", Sense::Minimize);
    // Columns of inactive groups stay in the pool but out of this LP
    // (their variables are pinned to zero).
    let z_vars: Vec<_> = pool
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let ub = if is_active(c.group) { f64::INFINITY } else { 0.0 };
            m.add_var(format!("z{i}"), 0.0, ub, false, c.cost)
        })
        .collect();
    let q_vars: Vec<_> = (0..n_groups)
        .map(|r| {
            let ub = if is_active(r) { f64::INFINITY } else { 0.0 };
            m.add_var(format!("q{r}"), 0.0, ub, false, inst.group(r).penalty)
        })
        .collect();
    let kappa_var = kappa.map(|ks| {
        m.add_var("kappa", f64::NEG_INFINITY, f64::INFINITY, false, ks.obj)
    });

    // Capacity rows.
    let mut row_coeffs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cap_rows.len()];
    for (ci, col) in pool.columns.iter().enumerate() {
        for &a in &col.arcs {
            if let Some(&idx) = ctx.cap_index.get(&a) {
                row_coeffs[row_of_cap[idx as usize] as usize].push((z_vars[ci], 1.0));
            }
        }
    }
    let mut cap_row_ids = Vec::with_capacity(cap_rows.len());
    for (ri, &idx) in cap_rows.iter().enumerate() {
        let mut coeffs = std::mem::take(&mut row_coeffs[ri]);
        if let (Some(kv), Some(ks)) = (kappa_var, kappa) {
            if ks.cap_coeffs[idx as usize] != 0.0 {
                coeffs.push((kv, ks.cap_coeffs[idx as usize]));
            }
        }
        cap_row_ids.push(m.add_row(
            format!("cap{idx}"),
            RowSense::Le,
            caps[idx as usize],
            coeffs,
        ));
    }

    // Demand rows (active groups only).
    let mut demand_rows: Vec<Option<usize>> = vec![None; n_groups];
    for r in (0..n_groups).filter(|&r| is_active(r)) {
        let mut coeffs: Vec<(usize, f64)> = pool.by_group[r]
            .iter()
            .map(|&ci| (z_vars[ci], 1.0))
            .collect();
        coeffs.push((q_vars[r], 1.0));
        let g = inst.group(r).size as f64;
        if let Some(kv) = kappa_var {
            coeffs.push((kv, g));
        }
        demand_rows[r] = Some(m.add_row(format!("dem{r}"), RowSense::Eq, g, coeffs));
    }

    let out = backend.solve(&m, &SolveParams::default())?;
    if out.status != crate::solver::SolveStatus::Optimal {
        return Err(SolverError::Failed(format!(
            "routing restricted master not optimal: {:?}",
            out.status
        )));
    }
    let duals_raw = out
        .duals
        .as_ref()
        .ok_or_else(|| SolverError::Failed("routing LP returned no duals".into()))?;

    let mut lambda = vec![0.0f64; n_cap];
    for (ri, &idx) in cap_rows.iter().enumerate() {
        lambda[idx as usize] = duals_raw[cap_row_ids[ri]].min(0.0);
    }
    let mu: Vec<f64> = demand_rows
        .iter()
        .map(|&r| r.map_or(0.0, |row| duals_raw[row]))
        .collect();

    let flows: Vec<(usize, f64)> = z_vars
        .iter()
        .enumerate()
        .filter(|&(_, &v)| out.primal[v] > 1e-9)
        .map(|(ci, &v)| (ci, out.primal[v]))
        .collect();
    let unrouted: Vec<f64> = q_vars.iter().map(|&v| out.primal[v]).collect();
    let kappa_value = kappa_var.map(|v| out.primal[v]).unwrap_or(0.0);

    Ok((
        RoutingOutcome {
            objective: out.objective,
            lambda: lambda.clone(),
            mu: mu.clone(),
            kappa: kappa_value,
            flows,
            unrouted,
            cg_iterations: 0,
            columns_added: 0,
        },
        DualPrices { lambda, mu },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_micro, generate_toy, GenOptions};
    use crate::solver::HighsBackend;
    use crate::tsnet::{build_extra_subnetwork, build_network, build_passenger_subnetworks, build_train_subnetworks};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn context(inst: &Instance) -> (TimeSpaceNetwork, PricingContext) {
        let net = build_network(inst).unwrap();
        let trains = build_train_subnetworks(&net, inst);
        let extra = build_extra_subnetwork(&net, inst);
        let pax = build_passenger_subnetworks(&net, inst);
        let ctx = build_pricing_context(&net, inst, &trains, &extra, &pax);
        (net, ctx)
    }

    /// Random DAG for oracle comparisons: vertices 0..n topologically
    /// ordered, forward arcs only.
    fn random_dag(rng: &mut ChaCha8Rng, n: usize) -> GroupDag {
        let mut tails = Vec::new();
        let mut heads = Vec::new();
        let mut is_transfer = Vec::new();
        let mut base_cost = Vec::new();
        for t in 0..n - 1 {
            for h in t + 1..n {
                if rng.gen_bool(0.35) || h == t + 1 {
                    tails.push(t as u32);
                    heads.push(h as u32);
                    is_transfer.push(rng.gen_bool(0.3));
                    base_cost.push((rng.gen_range(0..200) as f64) / 10.0);
                }
            }
        }
        // Sort by tail for the sweep invariant.
        let mut order: Vec<usize> = (0..tails.len()).collect();
        order.sort_by_key(|&i| tails[i]);
        GroupDag {
            group: 0,
            vertices: (0..n as u32).collect(),
            arcs: (0..tails.len() as u32).collect(),
            tails: order.iter().map(|&i| tails[i]).collect(),
            heads: order.iter().map(|&i| heads[i]).collect(),
            is_transfer: order.iter().map(|&i| is_transfer[i]).collect(),
            base_cost: order.iter().map(|&i| base_cost[i]).collect(),
            cap_index: vec![None; tails.len()],
            source: 0,
            sink: n as u32 - 1,
        }
    }

    /// DFS enumeration of all source-sink paths with at most `max_t`
    /// transfers.
    fn enumerate_best(dag: &GroupDag, costs: &[f64], max_t: u32) -> Option<f64> {
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); dag.vertices.len()];
        for (i, &t) in dag.tails.iter().enumerate() {
            out[t as usize].push(i);
        }
        let mut best: Option<f64> = None;
        let mut stack = vec![(dag.source as usize, 0.0f64, 0u32)];
        while let Some((v, c, k)) = stack.pop() {
            if v == dag.sink as usize {
                best = Some(best.map_or(c, |b: f64| b.min(c)));
                continue;
            }
            for &i in &out[v] {
                let nk = k + dag.is_transfer[i] as u32;
                if nk <= max_t {
                    stack.push((dag.heads[i] as usize, c + costs[i], nk));
                }
            }
        }
        best
    }

    #[test]
    fn rcsp_matches_enumeration_on_random_dags() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..60 {
            let n = rng.gen_range(5..=12);
            let dag = random_dag(&mut rng, n);
            for max_t in 0..=2u32 {
                let expect = enumerate_best(&dag, &dag.base_cost, max_t);
                let got = solve_rcsp(&dag, &dag.base_cost, max_t).map(|(c, _, _)| c);
                match (expect, got) {
                    (None, None) => {}
                    (Some(e), Some(g)) => {
                        assert!((e - g).abs() < 1e-9, "case {case} max_t {max_t}: {e} vs {g}")
                    }
                    other => panic!("case {case} max_t {max_t}: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn rcsp_single_path_dag() {
        let dag = GroupDag {
            group: 0,
            vertices: vec![0, 1, 2],
            arcs: vec![0, 1],
            tails: vec![0, 1],
            heads: vec![1, 2],
            is_transfer: vec![false, true],
            base_cost: vec![1.5, 2.5],
            cap_index: vec![None, None],
            source: 0,
            sink: 2,
        };
        let (c, path, transfers) = solve_rcsp(&dag, &dag.base_cost, 1).unwrap();
        assert_eq!(path, vec![0, 1]);
        assert_eq!(transfers, 1);
        assert!((c - 4.0).abs() < 1e-12);
        assert!(solve_rcsp(&dag, &dag.base_cost, 0).is_none());
    }

    #[test]
    fn rcsp_scaling_costs_preserves_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dag = random_dag(&mut rng, 10);
        let doubled: Vec<f64> = dag.base_cost.iter().map(|c| c * 2.0).collect();
        let (c1, p1, _) = solve_rcsp(&dag, &dag.base_cost, 2).unwrap();
        let (c2, p2, _) = solve_rcsp(&dag, &doubled, 2).unwrap();
        assert_eq!(p1, p2);
        assert!((c2 - 2.0 * c1).abs() < 1e-9);
    }

    #[test]
    fn zero_duals_price_the_plain_cheapest_path() {
        let inst = generate_micro(2);
        let (_, ctx) = context(&inst);
        let duals = DualPrices {
            lambda: vec![0.0; ctx.cap_arcs.len()],
            mu: vec![0.0; inst.n_groups()],
        };
        for dag in &ctx.dags {
            if dag.is_empty() {
                continue;
            }
            let out = price_group(dag, &duals, 2, None);
            if let Some(col) = &out.column {
                assert!((out.reduced_cost - col.cost).abs() < 1e-9);
                assert!(col.cost >= 0.0);
            }
        }
    }

    #[test]
    fn positive_mu_flips_reduced_cost_sign() {
        let inst = generate_micro(2);
        let (_, ctx) = context(&inst);
        let dag = ctx.dags.iter().find(|d| !d.is_empty()).unwrap();
        let zero = DualPrices {
            lambda: vec![0.0; ctx.cap_arcs.len()],
            mu: vec![0.0; inst.n_groups()],
        };
        let base = price_group(dag, &zero, 2, None);
        let cheapest = base.column.as_ref().unwrap().cost;
        let mut mu = vec![0.0; inst.n_groups()];
        mu[dag.group] = cheapest + 1.0;
        let duals = DualPrices {
            lambda: vec![0.0; ctx.cap_arcs.len()],
            mu,
        };
        let out = price_group(dag, &duals, 2, None);
        assert!(out.reduced_cost < -RC_TOL);
    }

    #[test]
    fn pricing_matches_dfs_enumeration_on_group_networks() {
        let inst = generate_micro(4);
        let (_, ctx) = context(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dag in ctx.dags.iter().filter(|d| !d.is_empty() && d.arcs.len() <= 4000) {
            let lambda: Vec<f64> = (0..ctx.cap_arcs.len())
                .map(|_| -(rng.gen_range(0..100) as f64) / 25.0)
                .collect();
            let duals = DualPrices {
                lambda,
                mu: vec![0.0; inst.n_groups()],
            };
            let costs = modified_costs(dag, &duals.lambda, None);
            for max_t in 0..=2u32 {
                let expect = enumerate_best(dag, &costs, max_t);
                let got = solve_rcsp(dag, &costs, max_t).map(|(c, _, _)| c);
                match (expect, got) {
                    (None, None) => {}
                    (Some(e), Some(g)) => assert!((e - g).abs() < 1e-6, "{e} vs {g}"),
                    other => panic!("{other:?}"),
                }
            }
        }
    }

    #[test]
    fn copied_columns_revalidate_against_fresh_pricing_membership() {
        let inst = generate_toy(5, 1.0, &GenOptions::default());
        let (net, ctx) = context(&inst);
        let duals = DualPrices {
            lambda: vec![0.0; ctx.cap_arcs.len()],
            mu: vec![0.0; inst.n_groups()],
        };
        let mut copied_any = false;
        for r in (0..inst.n_groups()).filter(|&r| ctx.period_of[r] == 0).take(12) {
            let dag = &ctx.dags[r];
            if dag.is_empty() {
                continue;
            }
            let out = price_group(dag, &duals, 2, None);
            let col = match out.column {
                Some(c) => c,
                None => continue,
            };
            for copy in copy_columns(&net, &ctx, &inst, &col) {
                copied_any = true;
                // Oracle: every arc of the copy is a member of the target
                // group's subnetwork and forms a connected o-d path there.
                let dag2 = &ctx.dags[copy.group];
                let members: HashSet<ArcId> = dag2.arcs.iter().copied().collect();
                assert!(copy.arcs.iter().all(|a| members.contains(a)));
                for w in copy.arcs.windows(2) {
                    assert_eq!(net.arc(w[0]).head, net.arc(w[1]).tail);
                }
                assert_eq!(copy.transfers, col.transfers);
            }
        }
        assert!(copied_any, "expected at least one valid copy on the toy instance");
    }

    #[test]
    fn shift_by_zero_reproduces_the_column() {
        let inst = generate_toy(5, 1.0, &GenOptions::default());
        let (net, ctx) = context(&inst);
        let duals = DualPrices {
            lambda: vec![0.0; ctx.cap_arcs.len()],
            mu: vec![0.0; inst.n_groups()],
        };
        let r = (0..inst.n_groups())
            .find(|&r| ctx.period_of[r] == 0 && !ctx.dags[r].is_empty())
            .unwrap();
        let col = price_group(&ctx.dags[r], &duals, 2, None).column.unwrap();
        let same = shift_column(&net, &ctx, &inst, &col, r, 0).unwrap();
        assert_eq!(same.arcs, col.arcs);
        // Shifting past the horizon is rejected.
        assert!(shift_column(&net, &ctx, &inst, &col, r, 10_000).is_none());
    }

    #[test]
    fn cg_converges_and_is_capacity_feasible() {
        let inst = generate_micro(1);
        let (net, ctx) = context(&inst);
        // Ample capacity on train-usable arcs, zero elsewhere.
        let caps: Vec<f64> = ctx
            .train_usable
            .iter()
            .map(|&u| if u { 1e6 } else { 0.0 })
            .collect();
        let mut pool = ColumnPool::new(inst.n_groups());
        let mut cursor = PricingCursor::default();
        let out = solve_routing_cg(
            &HighsBackend,
            &net,
            &inst,
            &ctx,
            &caps,
            &mut pool,
            &CgConfig::default(),
            None,
            None,
            None,
            &mut cursor,
        )
        .unwrap();
        // With ample capacity on usable arcs the optimum is the sum of
        // cheapest usable paths (or the penalty when no such path exists).
        let duals = DualPrices {
            lambda: vec![0.0; ctx.cap_arcs.len()],
            mu: vec![0.0; inst.n_groups()],
        };
        let closed: Vec<bool> = caps.iter().map(|&c| c == 0.0).collect();
        let mut expect = 0.0;
        for r in 0..inst.n_groups() {
            let g = inst.group(r);
            let dag = &ctx.dags[r];
            let best = if dag.is_empty() {
                None
            } else {
                price_group(dag, &duals, inst.data.params.weights.max_transfers, Some(&closed))
                    .column
            };
            expect += match best {
                Some(c) => (c.cost * g.size as f64).min(g.penalty * g.size as f64),
                None => g.penalty * g.size as f64,
            };
        }
        assert!(
            (out.objective - expect).abs() < 1e-6 * expect.max(1.0),
            "{} vs {}",
            out.objective,
            expect
        );
        for (idx, &cap) in caps.iter().enumerate() {
            if cap == 0.0 {
                assert!(out.lambda[idx] <= 1e-12);
            }
        }
    }

    #[test]
    fn partial_pricing_with_full_s_equals_standard() {
        let inst = generate_micro(6);
        let (net, ctx) = context(&inst);
        let caps: Vec<f64> = ctx
            .train_usable
            .iter()
            .map(|&u| if u { 40.0 } else { 0.0 })
            .collect();
        let run = |mode: CgMode, s: Option<usize>| {
            let mut pool = ColumnPool::new(inst.n_groups());
            let mut cursor = PricingCursor::default();
            let cfg = CgConfig {
                mode,
                s,
                ..CgConfig::default()
            };
            solve_routing_cg(
                &HighsBackend,
                &net,
                &inst,
                &ctx,
                &caps,
                &mut pool,
                &cfg,
                None,
                None,
                None,
                &mut cursor,
            )
            .unwrap()
            .objective
        };
        let std_obj = run(CgMode::Standard, None);
        let pp_full = run(CgMode::Pp, Some(inst.n_groups()));
        let pp_one = run(CgMode::Pp, Some(1));
        assert!((std_obj - pp_full).abs() < 1e-6 * std_obj.max(1.0));
        assert!((std_obj - pp_one).abs() < 1e-6 * std_obj.max(1.0));
    }
}
