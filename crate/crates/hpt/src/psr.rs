//! Passenger-subset-routing variant: the smallest groups that own a
//! direct original train are fixed to that train through a service flag,
//! their seat consumption is deducted from the train's capacity, and only
//! the remaining groups are routed in the Benders subproblem. A
//! post-optimization pass re-routes every group on the fixed timetable.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use crate::benders::{
    adaptive_aog, group_sizes, make_standard_cut, BendersConfig, BendersResult, BestSolution,
    OptimalityCut, TraceRow, CUT_TOL,
};
use crate::model::{build_master_skeleton, decode_master, MasterModel};
use crate::preprocess::Prepared;
use crate::pricing::{CgConfig, ColumnPool, PricingCursor, RoutingOutcome};
use crate::solver::{Backend, RowSense, SolveParams, SolveStatus, SolverError, VarId};
use crate::tsnet::{ArcId, ArcKind, NodeKind};
use crate::Minute;

/// One fixed passenger group: its assigned direct train and the qualified
/// first/last section arcs whose selection makes the assignment servable.
#[derive(Debug, Clone)]
pub struct FixedAssignment {
    pub group: usize,
    pub train: usize,
    pub qualified_origin: Vec<ArcId>,
    pub qualified_destination: Vec<ArcId>,
    /// Arcs of the assigned train that lie in the group's subnetwork,
    /// with the group's cost on each.
    pub ride_arcs: Vec<(ArcId, f64)>,
}

/// Picks the `n` smallest eligible groups (direct original train within
/// their windows), assigning the cheapest direct train, earliest
/// departure on ties. Returns fewer when not enough groups qualify.
pub fn select_fixed_groups(prep: &Prepared, n: usize) -> Vec<FixedAssignment> {
    let inst = &prep.inst;
    let net = &prep.net;
    let mut candidates: Vec<(u32, usize, FixedAssignment)> = Vec::new();
    for r in 0..inst.n_groups() {
        let g = inst.group(r);
        if prep.pax_subs[r].is_empty() {
            continue;
        }
        let org = inst.station_pos(g.origin);
        let des = inst.station_pos(g.destination);
        let mut best: Option<(f64, Minute, usize)> = None;
        for k in 0..inst.n_trains() {
            let route = inst.train_route(k);
            let stops = inst.train_stops(k);
            let (io, id_) = match (
                route.iter().position(|&m| m == org),
                route.iter().position(|&m| m == des),
            ) {
                (Some(a), Some(b)) if a < b && stops[a] && stops[b] => (a, b),
                _ => continue,
            };
            let sched = &inst.train(k).schedule;
            let dep = sched[io].dep;
            let arr = sched[id_].arr;
            if dep < g.allow_from || dep > g.allow_to || arr > g.latest_arrival {
                continue;
            }
            let shift = if dep > g.pref_to {
                net.weights.shift * (dep - g.pref_to) as f64
            } else if dep < g.pref_from {
                net.weights.shift * (g.pref_from - dep) as f64
            } else {
                0.0
            };
            let cost = shift + net.weights.in_vehicle * (arr - dep) as f64;
            match best {
                Some((bc, bd, _)) if (bc, bd) <= (cost, dep) => {}
                _ => best = Some((cost, dep, k)),
            }
        }
        let Some((_, _, k)) = best else { continue };
        let assignment = qualify(prep, r, k);
        if assignment.qualified_origin.is_empty() || assignment.qualified_destination.is_empty() {
            continue;
        }
        candidates.push((g.size, r, assignment));
    }
    candidates.sort_by_key(|&(size, r, _)| (size, r));
    if candidates.len() < n {
        log::warn!(
            "only {} of {n} requested groups are eligible for fixing",
            candidates.len()
        );
    }
    candidates
        .into_iter()
        .take(n)
        .map(|(_, _, a)| a)
        .collect()
}

fn qualify(prep: &Prepared, r: usize, k: usize) -> FixedAssignment {
    let inst = &prep.inst;
    let net = &prep.net;
    let g = inst.group(r);
    let org = inst.station_pos(g.origin);
    let des = inst.station_pos(g.destination);
    let pax: HashSet<ArcId> = prep.pax_subs[r].arcs.iter().copied().collect();
    let mut qualified_origin = Vec::new();
    let mut qualified_destination = Vec::new();
    let mut ride_arcs = Vec::new();
    for &a in &prep.train_subs[k].arcs {
        if !net.arc(a).kind.is_train_travel() || !pax.contains(&a) {
            continue;
        }
        ride_arcs.push((a, net.arc_cost(a, g)));
        let arc = net.arc(a);
        if let NodeKind::DepStop { station, .. } = net.vertex_kind(arc.tail) {
            let t = net.vertex_time(arc.tail);
            if station == org && t >= g.allow_from && t <= g.allow_to {
                qualified_origin.push(a);
            }
        }
        if let NodeKind::ArrStop { station, .. } = net.vertex_kind(arc.head) {
            if station == des && net.vertex_time(arc.head) <= g.latest_arrival {
                qualified_destination.push(a);
            }
        }
    }
    FixedAssignment {
        group: r,
        train: k,
        qualified_origin,
        qualified_destination,
        ride_arcs,
    }
}

pub struct PsrMaster {
    pub master: MasterModel,
    pub chi: Vec<VarId>,
    /// Linearization variable per (fixed index, arc, rsu type) for the
    /// product chi_r * x_a^{k_r, u}.
    pub products: HashMap<(usize, ArcId, usize), VarId>,
    pub fixed: Vec<FixedAssignment>,
}

/// The PSR master: skeleton plus service flags, consistency rows tying
/// each flag to the assigned train's qualified first/last section arcs,
/// and per-product auxiliary binaries linearizing chi * x in both the
/// objective and the capacity-deducted optimality cuts.
pub fn build_psr_master(prep: &Prepared, fixed: &[FixedAssignment]) -> PsrMaster {
    let inst = &prep.inst;
    let mut master = build_master_skeleton(&prep.master_inputs(), true);
    let n_types = inst.n_rsu_types();

    let mut chi = Vec::with_capacity(fixed.len());
    let mut products = HashMap::new();
    let mut offset = 0.0;
    for (fi, fa) in fixed.iter().enumerate() {
        let g = inst.group(fa.group);
        let gr = g.size as f64;
        offset += g.penalty * gr;
        let c = master
            .model
            .add_var(format!("chi_f{fi}"), 0.0, 1.0, true, -g.penalty * gr);
        chi.push(c);
        for &(a, cost) in &fa.ride_arcs {
            for u in 0..n_types {
                let v = master.model.add_var(
                    format!("v_f{fi}_a{a}_u{u}"),
                    0.0,
                    1.0,
                    true,
                    cost * gr,
                );
                products.insert((fi, a, u), v);
                let x = master.x[&(fa.train, u, a)];
                master
                    .model
                    .add_row(format!("v_le_chi_f{fi}_a{a}_u{u}"), RowSense::Le, 0.0, vec![(v, 1.0), (c, -1.0)]);
                master
                    .model
                    .add_row(format!("v_le_x_f{fi}_a{a}_u{u}"), RowSense::Le, 0.0, vec![(v, 1.0), (x, -1.0)]);
                master.model.add_row(
                    format!("v_ge_f{fi}_a{a}_u{u}"),
                    RowSense::Ge,
                    -1.0,
                    vec![(v, 1.0), (c, -1.0), (x, -1.0)],
                );
            }
        }
        // Service consistency with the qualified first/last section arcs.
        let mut coeffs = vec![(c, 1.0)];
        for &a in &fa.qualified_origin {
            for u in 0..n_types {
                coeffs.push((master.x[&(fa.train, u, a)], -1.0));
            }
        }
        master
            .model
            .add_row(format!("chi_ori_f{fi}"), RowSense::Le, 0.0, coeffs);
        let mut coeffs = vec![(c, 1.0)];
        for &a in &fa.qualified_destination {
            for u in 0..n_types {
                coeffs.push((master.x[&(fa.train, u, a)], -1.0));
            }
        }
        master
            .model
            .add_row(format!("chi_des_f{fi}"), RowSense::Le, 0.0, coeffs);
    }
    master.model.obj_offset += offset;

    PsrMaster {
        master,
        chi,
        products,
        fixed: fixed.to_vec(),
    }
}

impl PsrMaster {
    /// Capacities available to the unfixed groups: master-provided seats
    /// minus the volumes of served fixed groups on their qualified arcs.
    pub fn residual_capacities(&self, prep: &Prepared, primal: &[f64]) -> Vec<f64> {
        let mut caps = self.master.capacities(primal);
        for (fi, fa) in self.fixed.iter().enumerate() {
            let gr = prep.inst.group(fa.group).size as f64;
            for &(a, _) in &fa.ride_arcs {
                if let Some(&ci) = prep.ctx.cap_index.get(&a) {
                    for u in 0..prep.inst.n_rsu_types() {
                        caps[ci as usize] -= gr * primal[self.products[&(fi, a, u)]];
                    }
                }
            }
        }
        for c in &mut caps {
            *c = c.max(0.0);
        }
        caps
    }

    /// Fixed-passenger part of the objective at a primal point.
    pub fn fixed_cost_at(&self, prep: &Prepared, primal: &[f64]) -> f64 {
        let mut total = 0.0;
        for (fi, fa) in self.fixed.iter().enumerate() {
            let g = prep.inst.group(fa.group);
            let gr = g.size as f64;
            total += g.penalty * gr * (1.0 - primal[self.chi[fi]]);
            for &(a, cost) in &fa.ride_arcs {
                for u in 0..prep.inst.n_rsu_types() {
                    total += cost * gr * primal[self.products[&(fi, a, u)]];
                }
            }
        }
        total
    }

    /// Optimality cut with capacity deductions: eta >= sum_a lambda_a
    /// (sum_u p_u x - sum_fixed g chi x) + ... encoded through the
    /// linearization variables.
    pub fn add_cut_row(&mut self, prep: &Prepared, cut: &OptimalityCut, tag: usize) {
        let inst = &prep.inst;
        let eta = self.master.eta.expect("psr master carries eta");
        let mut coeffs = vec![(eta, 1.0)];
        for (i, &l) in cut.lambda.iter().enumerate() {
            if l == 0.0 {
                continue;
            }
            for &(v, p) in &self.master.cap_terms[i] {
                coeffs.push((v, -l * p));
            }
            let a = prep.ctx.cap_arcs[i];
            for (fi, fa) in self.fixed.iter().enumerate() {
                if fa.ride_arcs.iter().any(|&(ra, _)| ra == a) {
                    let gr = inst.group(fa.group).size as f64;
                    for u in 0..inst.n_rsu_types() {
                        coeffs.push((self.products[&(fi, a, u)], l * gr));
                    }
                }
            }
        }
        let rhs: f64 = cut
            .mu
            .iter()
            .enumerate()
            .map(|(r, &m)| m * inst.group(r).size as f64)
            .sum();
        self.master
            .model
            .add_row(format!("psr_cut{tag}"), RowSense::Ge, rhs, coeffs);
    }
}

/// Routing subproblem over the unfixed groups at residual capacities.
pub fn solve_pbsp_psr(
    backend: &dyn Backend,
    prep: &Prepared,
    caps: &[f64],
    fixed: &[FixedAssignment],
    pool: &mut ColumnPool,
    cg: &CgConfig,
    cursor: &mut PricingCursor,
) -> Result<RoutingOutcome, SolverError> {
    let mut active = vec![true; prep.inst.n_groups()];
    for fa in fixed {
        active[fa.group] = false;
    }
    crate::pricing::solve_routing_cg(
        backend,
        &prep.net,
        &prep.inst,
        &prep.ctx,
        caps,
        pool,
        cg,
        None,
        None,
        Some(&active),
        cursor,
    )
}

pub struct PsrResult {
    pub benders: BendersResult,
    pub fixed: Vec<FixedAssignment>,
    /// chi per fixed assignment in the best solution.
    pub served_fixed: Vec<bool>,
}

/// Benders decomposition for the PSR model: the master carries the fixed
/// groups' cost and service flags; cuts deduct served fixed volumes from
/// train capacities through the linearization variables.
pub fn run_psr(
    prep: &Prepared,
    backend: &dyn Backend,
    cfg: &BendersConfig,
    n_fixed: usize,
) -> Result<PsrResult, SolverError> {
    let started = Instant::now();
    let deadline = cfg.time_limit.map(|tl| started + tl);
    let fixed = select_fixed_groups(prep, n_fixed);
    let mut psr = build_psr_master(prep, &fixed);

    let mut pool = ColumnPool::new(prep.inst.n_groups());
    let mut cursor = PricingCursor::default();
    let mut cuts: Vec<OptimalityCut> = Vec::new();
    let mut trace: Vec<TraceRow> = Vec::new();

    let mut lb = 0.0f64;
    let mut ub = f64::INFINITY;
    let mut rho = 1.0f64;
    let mut alpha = cfg.alpha0;
    let mut best: Option<BestSolution> = None;
    let mut served_best: Vec<bool> = vec![false; fixed.len()];
    let mut status = SolveStatus::Limit;
    let mut iter = 0usize;

    while iter < cfg.max_iterations {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        iter += 1;
        let iter_started = Instant::now();
        alpha = adaptive_aog(rho, alpha, cfg.alpha_bar, cfg.eps);
        let params = SolveParams {
            gap_tol: alpha.max(0.0),
            time_limit: deadline.map(|d| d.saturating_duration_since(Instant::now())),
            threads: cfg.threads,
            seed: cfg.seed,
        };
        let sol = backend.solve(&psr.master.model, &params)?;
        match sol.status {
            SolveStatus::Infeasible => {
                return Ok(PsrResult {
                    benders: BendersResult {
                        status: SolveStatus::Infeasible,
                        lower_bound: f64::NAN,
                        upper_bound: f64::NAN,
                        gap: f64::INFINITY,
                        best: None,
                        cuts,
                        trace,
                        columns_generated: pool.generated,
                        lp_phase_wall: Duration::ZERO,
                        ip_phase_wall: started.elapsed(),
                    },
                    fixed,
                    served_fixed: served_best,
                });
            }
            SolveStatus::Optimal | SolveStatus::FeasibleWithGap => {}
            _ => break,
        }
        lb = lb.max(sol.best_bound);
        let caps = psr.residual_capacities(prep, &sol.primal);
        let outcome = solve_pbsp_psr(backend, prep, &caps, &fixed, &mut pool, &cfg.cg, &mut cursor)?;
        let fixed_cost = psr.fixed_cost_at(prep, &sol.primal);
        let ub_k = fixed_cost + outcome.objective;
        if ub_k < ub - 1e-12 {
            ub = ub_k;
            let decoded = decode_master(
                &psr.master,
                &prep.inst,
                &prep.net,
                &prep.train_subs,
                &prep.extra_sub,
                &sol.primal,
            )
            .map_err(|e| SolverError::Failed(format!("psr decode failed: {e}")))?;
            served_best = psr
                .chi
                .iter()
                .map(|&c| sol.primal[c] > 0.5)
                .collect();
            best = Some(BestSolution {
                master_primal: sol.primal.clone(),
                decoded,
                routing_objective: ub_k,
                flows: outcome
                    .flows
                    .iter()
                    .map(|&(ci, v)| (pool.columns[ci].clone(), v))
                    .collect(),
                unrouted: outcome.unrouted.clone(),
            });
        }
        let cut = make_standard_cut(&outcome);
        psr.add_cut_row(prep, &cut, cuts.len());
        cuts.push(cut);
        rho = crate::benders::relative_gap(ub, lb);
        trace.push(TraceRow {
            phase: "psr".into(),
            iteration: iter,
            lb,
            ub,
            gap: rho,
            alpha,
            cut_kind: "standard".into(),
            columns_added: outcome.columns_added,
            wall_ms: iter_started.elapsed().as_millis(),
        });
        if rho <= cfg.gap + 1e-9 {
            status = if rho <= 1e-9 {
                SolveStatus::Optimal
            } else {
                SolveStatus::FeasibleWithGap
            };
            break;
        }
    }

    Ok(PsrResult {
        benders: BendersResult {
            status,
            lower_bound: lb,
            upper_bound: ub,
            gap: rho,
            best,
            cuts,
            trace,
            columns_generated: pool.generated,
            lp_phase_wall: Duration::ZERO,
            ip_phase_wall: started.elapsed(),
        },
        fixed,
        served_fixed: served_best,
    })
}

/// Re-solves the full problem with the timetable frozen to the given
/// decoded solution: train operation states, served arcs and extra-train
/// arcs are fixed, RSU types and all passenger routing re-optimize.
pub fn post_optimize(
    prep: &Prepared,
    backend: &dyn Backend,
    cfg: &BendersConfig,
    decoded: &crate::model::DecodedMaster,
) -> Result<BendersResult, SolverError> {
    let inst = &prep.inst;
    let n_types = inst.n_rsu_types();
    let mut master = build_master_skeleton(&prep.master_inputs(), true);

    // Selected arc sets by train; virtual arcs are re-derived from events.
    for (k, plan) in decoded.trains.iter().enumerate() {
        if !plan.operated {
            for u in 0..n_types {
                master.model.var_mut(master.theta[k][u]).ub = 0.0;
            }
            continue;
        }
        let chosen: HashSet<ArcId> = selected_arcs_of_train(prep, k, plan);
        for &a in &prep.train_subs[k].arcs {
            if chosen.contains(&a) {
                let coeffs = (0..n_types).map(|u| (master.x[&(k, u, a)], 1.0)).collect();
                master
                    .model
                    .add_row(format!("fix_k{k}_a{a}"), RowSense::Eq, 1.0, coeffs);
            } else {
                for u in 0..n_types {
                    master.model.var_mut(master.x[&(k, u, a)]).ub = 0.0;
                }
            }
        }
    }
    // Extra trains: the selected arc set is frozen per type union; no new
    // extra trains may appear.
    let selected_extra: HashSet<ArcId> = decoded
        .extra_arcs
        .iter()
        .flatten()
        .copied()
        .collect();
    let mut extra_virtual: HashSet<ArcId> = HashSet::new();
    for plan in &decoded.extras {
        if let (Some(first), Some(last)) = (plan.events.first(), plan.events.last()) {
            for &a in &prep.extra_sub.virtual_arcs {
                let arc = prep.net.arc(a);
                match arc.kind {
                    ArcKind::TrainSource { station }
                        if inst.station(station).id == first.station
                            && prep.net.vertex_time(arc.tail) == first.dep =>
                    {
                        extra_virtual.insert(a);
                    }
                    ArcKind::TrainSink { station }
                        if inst.station(station).id == last.station
                            && prep.net.vertex_time(arc.tail) == last.arr =>
                    {
                        extra_virtual.insert(a);
                    }
                    _ => {}
                }
            }
        }
    }
    for &a in &prep.extra_sub.arcs {
        if selected_extra.contains(&a) || extra_virtual.contains(&a) {
            let coeffs = (0..n_types).map(|u| (master.y[&(a, u)], 1.0)).collect();
            master
                .model
                .add_row(format!("fix_ex_a{a}"), RowSense::Eq, 1.0, coeffs);
        } else {
            for u in 0..n_types {
                master.model.var_mut(master.y[&(a, u)]).ub = 0.0;
            }
        }
    }

    // Run the cut loop on the frozen master: only type choices and
    // rolling stock remain, so few iterations suffice.
    run_frozen_benders(prep, backend, cfg, master)
}

pub(crate) fn selected_arcs_of_train(
    prep: &Prepared,
    k: usize,
    plan: &crate::model::TrainPlan,
) -> HashSet<ArcId> {
    // Rebuild the arc chain from events (station ids and times).
    let inst = &prep.inst;
    let net = &prep.net;
    let route = inst.train_route(k);
    let stops = inst.train_stops(k);
    let mut chosen = HashSet::new();
    let ev = &plan.events;
    for j in 0..route.len() - 1 {
        let dep_node = if stops[j] {
            net.node_id(NodeKind::DepStop { station: route[j], toward: route[j + 1] })
        } else {
            net.node_id(NodeKind::DepSkip { station: route[j], toward: route[j + 1] })
        }
        .unwrap();
        let arr_node = if stops[j + 1] {
            net.node_id(NodeKind::ArrStop { station: route[j + 1], from: route[j] })
        } else {
            net.node_id(NodeKind::ArrSkip { station: route[j + 1], from: route[j] })
        }
        .unwrap();
        let tail = net.vertex(dep_node, ev[j].dep).unwrap();
        let head = net.vertex(arr_node, ev[j + 1].arr).unwrap();
        chosen.insert(net.find_arc(tail, head).expect("decoded section arc exists"));
        if j > 0 {
            // Interior dwell or passing arc into this departure.
            let in_node = if stops[j] {
                net.node_id(NodeKind::ArrStop { station: route[j], from: route[j - 1] })
            } else {
                net.node_id(NodeKind::ArrSkip { station: route[j], from: route[j - 1] })
            }
            .unwrap();
            let t_in = net.vertex(in_node, ev[j].arr).unwrap();
            let t_out = net.vertex(dep_node, ev[j].dep).unwrap();
            chosen.insert(net.find_arc(t_in, t_out).expect("decoded interior arc exists"));
        }
    }
    // Virtual source/sink at the decoded boundary times.
    let inv_o = net
        .node_id(NodeKind::Inventory { station: route[0] })
        .unwrap();
    let dep0 = net
        .node_id(NodeKind::DepStop { station: route[0], toward: route[1] })
        .unwrap();
    let v0 = net.vertex(inv_o, ev[0].dep).unwrap();
    let v1 = net.vertex(dep0, ev[0].dep).unwrap();
    chosen.insert(net.find_arc(v0, v1).unwrap());
    let last = route.len() - 1;
    let arr_last = net
        .node_id(NodeKind::ArrStop { station: route[last], from: route[last - 1] })
        .unwrap();
    let inv_d = net
        .node_id(NodeKind::Inventory { station: route[last] })
        .unwrap();
    let va = net.vertex(arr_last, ev[last].arr).unwrap();
    let vb = net
        .vertex(inv_d, ev[last].arr + inst.data.params.rsu_transition)
        .unwrap();
    chosen.insert(net.find_arc(va, vb).unwrap());
    chosen
}

/// Routes every group of the (full) instance on a fixed timetable given
/// by decoded plans: capacities follow the plans' arc selections and RSU
/// types; one subproblem solve yields the rerouted objective.
pub fn evaluate_timetable(
    prep: &Prepared,
    backend: &dyn Backend,
    cg: &CgConfig,
    trains: &[crate::model::TrainPlan],
    extras: &[crate::model::ExtraPlan],
) -> Result<(RoutingOutcome, Vec<(crate::pricing::Column, f64)>), SolverError> {
    let inst = &prep.inst;
    let mut caps = vec![0.0f64; prep.ctx.cap_arcs.len()];
    for plan in trains.iter().filter(|t| t.operated) {
        let k = inst.train_pos(plan.train_id);
        let u = inst
            .data
            .rsu_types
            .iter()
            .position(|r| Some(r.id) == plan.rsu_type)
            .expect("operated train carries a known type");
        let seats = inst.rsu(u).seats as f64;
        for a in selected_arcs_of_train(prep, k, plan) {
            if let Some(&ci) = prep.ctx.cap_index.get(&a) {
                caps[ci as usize] += seats;
            }
        }
    }
    for plan in extras {
        let u = inst
            .data
            .rsu_types
            .iter()
            .position(|r| r.id == plan.rsu_type)
            .unwrap();
        let seats = inst.rsu(u).seats as f64;
        // Section arcs between consecutive events plus interior arcs.
        for w in plan.events.windows(2) {
            let from = inst.station_pos(w[0].station);
            let to = inst.station_pos(w[1].station);
            let (dn, an) = (
                if w[0].stops {
                    NodeKind::DepStop { station: from, toward: to }
                } else {
                    NodeKind::DepSkip { station: from, toward: to }
                },
                if w[1].stops {
                    NodeKind::ArrStop { station: to, from }
                } else {
                    NodeKind::ArrSkip { station: to, from }
                },
            );
            let tail = prep
                .net
                .vertex(prep.net.node_id(dn).unwrap(), w[0].dep)
                .unwrap();
            let head = prep
                .net
                .vertex(prep.net.node_id(an).unwrap(), w[1].arr)
                .unwrap();
            if let Some(a) = prep.net.find_arc(tail, head) {
                if let Some(&ci) = prep.ctx.cap_index.get(&a) {
                    caps[ci as usize] += seats;
                }
            }
        }
        for j in 1..plan.events.len().saturating_sub(1) {
            let m = inst.station_pos(plan.events[j].station);
            let prev = inst.station_pos(plan.events[j - 1].station);
            let next = inst.station_pos(plan.events[j + 1].station);
            let (inn, outn) = if plan.events[j].stops {
                (
                    NodeKind::ArrStop { station: m, from: prev },
                    NodeKind::DepStop { station: m, toward: next },
                )
            } else {
                (
                    NodeKind::ArrSkip { station: m, from: prev },
                    NodeKind::DepSkip { station: m, toward: next },
                )
            };
            let tail = prep
                .net
                .vertex(prep.net.node_id(inn).unwrap(), plan.events[j].arr)
                .unwrap();
            let head = prep
                .net
                .vertex(prep.net.node_id(outn).unwrap(), plan.events[j].dep)
                .unwrap();
            if let Some(a) = prep.net.find_arc(tail, head) {
                if let Some(&ci) = prep.ctx.cap_index.get(&a) {
                    caps[ci as usize] += seats;
                }
            }
        }
    }
    let mut pool = ColumnPool::new(inst.n_groups());
    let mut cursor = PricingCursor::default();
    let outcome =
        crate::benders::solve_pbsp(backend, prep, &caps, &mut pool, cg, &mut cursor, false)?;
    let flows = outcome
        .flows
        .iter()
        .map(|&(ci, v)| (pool.columns[ci].clone(), v))
        .collect();
    Ok((outcome, flows))
}

fn run_frozen_benders(
    prep: &Prepared,
    backend: &dyn Backend,
    cfg: &BendersConfig,
    mut master: MasterModel,
) -> Result<BendersResult, SolverError> {
    let started = Instant::now();
    let sizes = group_sizes(prep);
    let mut pool = ColumnPool::new(prep.inst.n_groups());
    let mut cursor = PricingCursor::default();
    let mut cuts: Vec<OptimalityCut> = Vec::new();
    let mut trace = Vec::new();
    let mut lb = 0.0f64;
    let mut ub = f64::INFINITY;
    let mut best = None;
    let mut rho = 1.0;
    let mut status = SolveStatus::Limit;

    for iter in 1..=cfg.max_iterations {
        let params = SolveParams {
            gap_tol: 0.0,
            time_limit: cfg.time_limit,
            threads: cfg.threads,
            seed: cfg.seed,
        };
        let sol = backend.solve(&master.model, &params)?;
        if sol.status == SolveStatus::Infeasible {
            status = SolveStatus::Infeasible;
            break;
        }
        if !matches!(sol.status, SolveStatus::Optimal | SolveStatus::FeasibleWithGap) {
            break;
        }
        lb = lb.max(sol.best_bound);
        let caps = master.capacities(&sol.primal);
        let outcome = crate::benders::solve_pbsp(
            backend,
            prep,
            &caps,
            &mut pool,
            &cfg.cg,
            &mut cursor,
            false,
        )?;
        if outcome.objective < ub - 1e-12 {
            ub = outcome.objective;
            let decoded = decode_master(
                &master,
                &prep.inst,
                &prep.net,
                &prep.train_subs,
                &prep.extra_sub,
                &sol.primal,
            )
            .map_err(|e| SolverError::Failed(format!("decode failed: {e}")))?;
            best = Some(BestSolution {
                master_primal: sol.primal.clone(),
                decoded,
                routing_objective: outcome.objective,
                flows: outcome
                    .flows
                    .iter()
                    .map(|&(ci, v)| (pool.columns[ci].clone(), v))
                    .collect(),
                unrouted: outcome.unrouted.clone(),
            });
        }
        let cut = make_standard_cut(&outcome);
        let violated = cut.value_at(&caps, &sizes) > sol.primal[master.eta.unwrap()] + CUT_TOL;
        crate::benders::add_cut_row(&mut master, &cut, &sizes, cuts.len());
        cuts.push(cut);
        rho = crate::benders::relative_gap(ub, lb);
        trace.push(TraceRow {
            phase: "post".into(),
            iteration: iter,
            lb,
            ub,
            gap: rho,
            alpha: 0.0,
            cut_kind: "standard".into(),
            columns_added: outcome.columns_added,
            wall_ms: 0,
        });
        if !violated || rho <= 1e-9 {
            status = SolveStatus::Optimal;
            rho = 0.0;
            lb = ub;
            break;
        }
    }

    Ok(BendersResult {
        status,
        lower_bound: lb,
        upper_bound: ub,
        gap: rho,
        best,
        cuts,
        trace,
        columns_generated: pool.generated,
        lp_phase_wall: Duration::ZERO,
        ip_phase_wall: started.elapsed(),
    })
}
