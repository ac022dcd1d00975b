//! Assembly of the mixed-integer timetabling master (train arc selection,
//! RSU type choice, rolling-stock balance, headway and budget rows), the
//! path-based routing attachment, and the monolithic arc-based model used
//! as a correctness oracle.

use std::collections::HashMap;

use crate::instance::Instance;
use crate::pricing::{Column, PricingContext};
use crate::solver::{LinearModel, RowSense, Sense, VarId};
use crate::tsnet::{ArcId, ArcKind, IncompatibleSets, NodeKind, Subnetwork, TimeSpaceNetwork, VertexId};
use crate::Minute;

/// Integrality tolerance when decoding mixed-integer solutions.
pub const INT_TOL: f64 = 1e-6;

pub struct MasterModel {
    pub model: LinearModel,
    /// x variable per (train, rsu type, arc of the train's subnetwork).
    pub x: HashMap<(usize, usize, ArcId), VarId>,
    pub theta: Vec<Vec<VarId>>,
    pub y: HashMap<(ArcId, usize), VarId>,
    pub w: HashMap<(ArcId, usize), VarId>,
    pub eta: Option<VarId>,
    /// Seat-capacity terms per capacity arc index: (variable, seats).
    pub cap_terms: Vec<Vec<(VarId, f64)>>,
    /// Inventory arcs in declaration order.
    pub inventory_arcs: Vec<ArcId>,
}

impl MasterModel {
    /// Provided seat capacity per capacity arc at a primal point.
    pub fn capacities(&self, primal: &[f64]) -> Vec<f64> {
        self.cap_terms
            .iter()
            .map(|terms| terms.iter().map(|&(v, p)| p * primal[v]).sum::<f64>().max(0.0))
            .collect()
    }
}

pub struct MasterInputs<'a> {
    pub inst: &'a Instance,
    pub net: &'a TimeSpaceNetwork,
    pub train_subs: &'a [Subnetwork],
    pub extra_sub: &'a Subnetwork,
    pub phi: &'a IncompatibleSets,
    pub ctx: &'a PricingContext,
    /// Upper bounds for inventory variables per (inventory arc, type);
    /// fleet size is used where absent.
    pub inventory_bounds: Option<&'a HashMap<(ArcId, usize), u32>>,
}

/// Builds the timetabling skeleton: objective-free variables plus the
/// coupling, periodicity, flow-balance, track-capacity, budget and
/// inventory constraints. With `with_eta` an epigraph variable becomes
/// the (minimization) objective, as the Benders master requires.
pub fn build_master_skeleton(inp: &MasterInputs, with_eta: bool) -> MasterModel {
    let inst = inp.inst;
    let net = inp.net;
    let n_types = inst.n_rsu_types();
    let mut model = LinearModel::new("master", Sense::Minimize);

    let mut x = HashMap::new();
    let mut theta = vec![Vec::with_capacity(n_types); inst.n_trains()];
    let mut y = HashMap::new();
    let mut w = HashMap::new();
    let mut cap_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); inp.ctx.cap_arcs.len()];
    // Unit-coefficient terms per arc for the headway rows.
    let mut unit_terms: HashMap<ArcId, Vec<VarId>> = HashMap::new();

    for k in 0..inst.n_trains() {
        for u in 0..n_types {
            let seats = inst.rsu(u).seats as f64;
            for &a in &inp.train_subs[k].arcs {
                let v = model.add_var(format!("x_k{k}_u{u}_a{a}"), 0.0, 1.0, true, 0.0);
                x.insert((k, u, a), v);
                if let Some(&ci) = inp.ctx.cap_index.get(&a) {
                    cap_terms[ci as usize].push((v, seats));
                }
                unit_terms.entry(a).or_default().push(v);
            }
        }
    }
    for k in 0..inst.n_trains() {
        for u in 0..n_types {
            theta[k].push(model.add_var(format!("theta_k{k}_u{u}"), 0.0, 1.0, true, 0.0));
        }
    }
    for u in 0..n_types {
        let seats = inst.rsu(u).seats as f64;
        for &a in &inp.extra_sub.arcs {
            let v = model.add_var(format!("y_a{a}_u{u}"), 0.0, 1.0, true, 0.0);
            y.insert((a, u), v);
            if let Some(&ci) = inp.ctx.cap_index.get(&a) {
                cap_terms[ci as usize].push((v, seats));
            }
            unit_terms.entry(a).or_default().push(v);
        }
    }
    let inventory_arcs: Vec<ArcId> = net
        .arcs
        .iter()
        .enumerate()
        .filter(|(_, a)| matches!(a.kind, ArcKind::Inventory { .. }))
        .map(|(i, _)| i as ArcId)
        .collect();
    for &a in &inventory_arcs {
        for u in 0..n_types {
            let cap = inp
                .inventory_bounds
                .and_then(|b| b.get(&(a, u)).copied())
                .unwrap_or_else(|| inst.fleet_size(u));
            let v = model.add_var(format!("w_a{a}_u{u}"), 0.0, cap as f64, true, 0.0);
            w.insert((a, u), v);
        }
    }
    let eta = with_eta.then(|| model.add_var("eta", 0.0, f64::INFINITY, false, 1.0));

    // Type coupling: theta equals the sum of selected source arcs.
    for k in 0..inst.n_trains() {
        let sources: Vec<ArcId> = inp.train_subs[k]
            .virtual_arcs
            .iter()
            .copied()
            .filter(|&a| matches!(net.arc(a).kind, ArcKind::TrainSource { .. }))
            .collect();
        for u in 0..n_types {
            let mut coeffs = vec![(theta[k][u], 1.0)];
            for &a in &sources {
                coeffs.push((x[&(k, u, a)], -1.0));
            }
            model.add_row(format!("theta_src_k{k}_u{u}"), RowSense::Eq, 0.0, coeffs);
        }
    }

    // At most one RSU type per train.
    for k in 0..inst.n_trains() {
        let coeffs = (0..n_types).map(|u| (theta[k][u], 1.0)).collect();
        model.add_row(format!("one_type_k{k}"), RowSense::Le, 1.0, coeffs);
    }

    // Periodicity floor per line.
    for l in 0..inst.data.lines.len() {
        let trains = inst.trains_of_line(l);
        let rhs = inst.data.params.periodicity * trains.len() as f64;
        let coeffs = trains
            .iter()
            .flat_map(|&k| theta[k].iter().map(|&v| (v, 1.0)))
            .collect();
        model.add_row(format!("periodicity_l{l}"), RowSense::Ge, rhs, coeffs);
    }

    // Original train flow balance at non-inventory vertices.
    for k in 0..inst.n_trains() {
        let sub = &inp.train_subs[k];
        let mut touch: HashMap<VertexId, (Vec<ArcId>, Vec<ArcId>)> = HashMap::new();
        for &a in &sub.arcs {
            let arc = net.arc(a);
            touch.entry(arc.tail).or_default().0.push(a);
            touch.entry(arc.head).or_default().1.push(a);
        }
        let mut vertices: Vec<VertexId> = touch.keys().copied().collect();
        vertices.sort_unstable();
        for v in vertices {
            if matches!(net.vertex_kind(v), NodeKind::Inventory { .. }) {
                continue;
            }
            let (outs, ins) = &touch[&v];
            for u in 0..n_types {
                let mut coeffs: Vec<(VarId, f64)> =
                    outs.iter().map(|&a| (x[&(k, u, a)], 1.0)).collect();
                coeffs.extend(ins.iter().map(|&a| (x[&(k, u, a)], -1.0)));
                model.add_row(format!("bal_k{k}_u{u}_v{v}"), RowSense::Eq, 0.0, coeffs);
            }
        }
    }

    // Extra train flow balance.
    {
        let sub = inp.extra_sub;
        let mut touch: HashMap<VertexId, (Vec<ArcId>, Vec<ArcId>)> = HashMap::new();
        for &a in &sub.arcs {
            let arc = net.arc(a);
            touch.entry(arc.tail).or_default().0.push(a);
            touch.entry(arc.head).or_default().1.push(a);
        }
        let mut vertices: Vec<VertexId> = touch.keys().copied().collect();
        vertices.sort_unstable();
        for v in vertices {
            if matches!(net.vertex_kind(v), NodeKind::Inventory { .. }) {
                continue;
            }
            let (outs, ins) = &touch[&v];
            for u in 0..n_types {
                let mut coeffs: Vec<(VarId, f64)> =
                    outs.iter().map(|&a| (y[&(a, u)], 1.0)).collect();
                coeffs.extend(ins.iter().map(|&a| (y[&(a, u)], -1.0)));
                model.add_row(format!("bal_ex_u{u}_v{v}"), RowSense::Eq, 0.0, coeffs);
            }
        }
    }

    // Track capacity: at most one selection per incompatible set. A set
    // with a single arc still needs a row when several trains could pick
    // that arc.
    for (&v, arcs) in &inp.phi.by_vertex {
        let mut coeffs = Vec::new();
        for a in arcs {
            if let Some(vars) = unit_terms.get(a) {
                coeffs.extend(vars.iter().map(|&var| (var, 1.0)));
            }
        }
        if coeffs.len() >= 2 {
            model.add_row(format!("track_v{v}"), RowSense::Le, 1.0, coeffs);
        }
    }

    // Operating budget in seat-kilometers.
    {
        let mut coeffs = Vec::new();
        for u in 0..n_types {
            let seats = inst.rsu(u).seats as f64;
            for k in 0..inst.n_trains() {
                coeffs.push((theta[k][u], seats * inst.train_km(k)));
            }
            for &a in &inp.extra_sub.arcs {
                let arc = net.arc(a);
                if arc.km > 0.0 {
                    coeffs.push((y[&(a, u)], seats * arc.km));
                }
            }
        }
        model.add_row("budget", RowSense::Le, inst.data.params.budget_seat_km, coeffs);
    }

    // Inventory coupling: initial stock at time zero, flow balance at
    // later inventory vertices (the final vertex accumulates freely).
    let mut inv_out: HashMap<(VertexId, usize), Vec<VarId>> = HashMap::new();
    let mut inv_in: HashMap<(VertexId, usize), Vec<VarId>> = HashMap::new();
    for &a in &inventory_arcs {
        let arc = net.arc(a);
        for u in 0..n_types {
            inv_out.entry((arc.tail, u)).or_default().push(w[&(a, u)]);
            inv_in.entry((arc.head, u)).or_default().push(w[&(a, u)]);
        }
    }
    for k in 0..inst.n_trains() {
        for &a in &inp.train_subs[k].virtual_arcs {
            let arc = net.arc(a);
            match arc.kind {
                ArcKind::TrainSource { .. } => {
                    for u in 0..n_types {
                        inv_out.entry((arc.tail, u)).or_default().push(x[&(k, u, a)]);
                    }
                }
                ArcKind::TrainSink { .. } => {
                    for u in 0..n_types {
                        inv_in.entry((arc.head, u)).or_default().push(x[&(k, u, a)]);
                    }
                }
                _ => {}
            }
        }
    }
    for &a in &inp.extra_sub.virtual_arcs {
        let arc = net.arc(a);
        match arc.kind {
            ArcKind::TrainSource { .. } => {
                for u in 0..n_types {
                    inv_out.entry((arc.tail, u)).or_default().push(y[&(a, u)]);
                }
            }
            ArcKind::TrainSink { .. } => {
                for u in 0..n_types {
                    inv_in.entry((arc.head, u)).or_default().push(y[&(a, u)]);
                }
            }
            _ => {}
        }
    }
    let grid = net.grid;
    for &m in inst.terminals() {
        let inv_node = net.node_id(NodeKind::Inventory { station: m }).unwrap();
        for u in 0..n_types {
            let stock = inst
                .rsu(u)
                .initial
                .get(&inst.station(m).id)
                .copied()
                .unwrap_or(0) as f64;
            let v0 = net.vertex(inv_node, 0).unwrap();
            let coeffs: Vec<(VarId, f64)> = inv_out
                .get(&(v0, u))
                .map(|vars| vars.iter().map(|&v| (v, 1.0)).collect())
                .unwrap_or_default();
            model.add_row(format!("inv0_m{m}_u{u}"), RowSense::Eq, stock, coeffs);
            let mut t = grid.step;
            while t < grid.inv_end {
                let v = net.vertex(inv_node, t).unwrap();
                let mut coeffs: Vec<(VarId, f64)> = Vec::new();
                if let Some(vars) = inv_in.get(&(v, u)) {
                    coeffs.extend(vars.iter().map(|&var| (var, 1.0)));
                }
                if let Some(vars) = inv_out.get(&(v, u)) {
                    coeffs.extend(vars.iter().map(|&var| (var, -1.0)));
                }
                if !coeffs.is_empty() {
                    model.add_row(format!("inv_m{m}_u{u}_t{t}"), RowSense::Eq, 0.0, coeffs);
                }
                t += grid.step;
            }
        }
    }

    MasterModel {
        model,
        x,
        theta,
        y,
        w,
        eta,
        cap_terms,
        inventory_arcs,
    }
}

/// Handles of the routing variables attached to a master model.
pub struct RoutingVars {
    pub z: Vec<VarId>,
    pub q: Vec<VarId>,
}

/// Attaches explicit path columns to a master model: the passenger cost
/// objective, seat capacity rows over every capacity arc and per-group
/// demand rows. Used for the monolithic path formulation and restricted
/// re-solves; column generation builds its own restricted LPs instead.
pub fn attach_routing(
    master: &mut MasterModel,
    inst: &Instance,
    ctx: &PricingContext,
    columns: &[Column],
) -> RoutingVars {
    let model = &mut master.model;
    let z: Vec<VarId> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| model.add_var(format!("z{i}"), 0.0, f64::INFINITY, false, c.cost))
        .collect();
    let q: Vec<VarId> = (0..inst.n_groups())
        .map(|r| model.add_var(format!("q{r}"), 0.0, f64::INFINITY, false, inst.group(r).penalty))
        .collect();

    let mut by_cap: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); ctx.cap_arcs.len()];
    for (i, col) in columns.iter().enumerate() {
        for &a in &col.arcs {
            if let Some(&ci) = ctx.cap_index.get(&a) {
                by_cap[ci as usize].push((z[i], 1.0));
            }
        }
    }
    for (ci, mut coeffs) in by_cap.into_iter().enumerate() {
        coeffs.extend(
            master.cap_terms[ci]
                .iter()
                .map(|&(v, p)| (v, -p)),
        );
        model.add_row(format!("seatcap_c{ci}"), RowSense::Le, 0.0, coeffs);
    }
    for r in 0..inst.n_groups() {
        let mut coeffs: Vec<(VarId, f64)> = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.group == r)
            .map(|(i, _)| (z[i], 1.0))
            .collect();
        coeffs.push((q[r], 1.0));
        model.add_row(
            format!("demand_r{r}"),
            RowSense::Eq,
            inst.group(r).size as f64,
            coeffs,
        );
    }
    RoutingVars { z, q }
}

/// Arc-based passenger variables attached to a master skeleton: the
/// monolithic oracle model. Transfer counts cannot be restricted here.
pub struct ArcRouting {
    pub z: HashMap<(usize, ArcId), VarId>,
    pub q: Vec<VarId>,
}

pub fn attach_arc_routing(
    master: &mut MasterModel,
    inst: &Instance,
    net: &TimeSpaceNetwork,
    ctx: &PricingContext,
    pax_subs: &[Subnetwork],
) -> ArcRouting {
    let model = &mut master.model;
    let mut z = HashMap::new();
    for (r, sub) in pax_subs.iter().enumerate() {
        for &a in &sub.arcs {
            let v = model.add_var(format!("pz_r{r}_a{a}"), 0.0, f64::INFINITY, false, {
                net.arc_cost(a, inst.group(r))
            });
            z.insert((r, a), v);
        }
    }
    let q: Vec<VarId> = (0..inst.n_groups())
        .map(|r| model.add_var(format!("q{r}"), 0.0, f64::INFINITY, false, inst.group(r).penalty))
        .collect();

    // Flow balance per group at interior vertices, demand at the origin.
    for (r, sub) in pax_subs.iter().enumerate() {
        let g = inst.group(r);
        let o_node = net.node_id(NodeKind::PaxOrigin { group: r }).unwrap();
        let d_node = net.node_id(NodeKind::PaxDest { group: r }).unwrap();
        let o_vertex = net.vertex(o_node, 0).unwrap();
        let d_vertex = net.vertex(d_node, 0).unwrap();
        let mut touch: HashMap<VertexId, (Vec<ArcId>, Vec<ArcId>)> = HashMap::new();
        for &a in &sub.arcs {
            let arc = net.arc(a);
            touch.entry(arc.tail).or_default().0.push(a);
            touch.entry(arc.head).or_default().1.push(a);
        }
        let mut vertices: Vec<VertexId> = touch.keys().copied().collect();
        vertices.sort_unstable();
        for v in vertices {
            if v == o_vertex || v == d_vertex {
                continue;
            }
            let (outs, ins) = &touch[&v];
            let mut coeffs: Vec<(VarId, f64)> =
                outs.iter().map(|&a| (z[&(r, a)], 1.0)).collect();
            coeffs.extend(ins.iter().map(|&a| (z[&(r, a)], -1.0)));
            model.add_row(format!("pbal_r{r}_v{v}"), RowSense::Eq, 0.0, coeffs);
        }
        let mut coeffs: Vec<(VarId, f64)> = touch
            .get(&o_vertex)
            .map(|(outs, _)| outs.iter().map(|&a| (z[&(r, a)], 1.0)).collect())
            .unwrap_or_default();
        coeffs.push((q[r], 1.0));
        model.add_row(format!("pdem_r{r}"), RowSense::Eq, g.size as f64, coeffs);
    }

    // Seat capacities shared across groups.
    let mut by_cap: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); ctx.cap_arcs.len()];
    for (r, sub) in pax_subs.iter().enumerate() {
        for &a in &sub.arcs {
            if let Some(&ci) = ctx.cap_index.get(&a) {
                by_cap[ci as usize].push((z[&(r, a)], 1.0));
            }
        }
    }
    for (ci, mut coeffs) in by_cap.into_iter().enumerate() {
        if coeffs.is_empty() {
            continue;
        }
        coeffs.extend(master.cap_terms[ci].iter().map(|&(v, p)| (v, -p)));
        model.add_row(format!("seatcap_c{ci}"), RowSense::Le, 0.0, coeffs);
    }
    ArcRouting { z, q }
}

/// Decomposes per-arc passenger flows into path columns (smallest arc id
/// first), for reporting and validation of arc-based solves.
pub fn decompose_arc_flows(
    net: &TimeSpaceNetwork,
    inst: &Instance,
    pax_subs: &[Subnetwork],
    routing: &ArcRouting,
    primal: &[f64],
) -> (Vec<(Column, f64)>, Vec<f64>) {
    let mut flows = Vec::new();
    let mut unrouted = vec![0.0; inst.n_groups()];
    for (r, q) in routing.q.iter().enumerate() {
        unrouted[r] = primal[*q].max(0.0);
    }
    for (r, sub) in pax_subs.iter().enumerate() {
        let g = inst.group(r);
        let mut residual: HashMap<ArcId, f64> = HashMap::new();
        let mut out: HashMap<VertexId, Vec<ArcId>> = HashMap::new();
        for &a in &sub.arcs {
            let v = primal[routing.z[&(r, a)]];
            if v > 1e-9 {
                residual.insert(a, v);
                out.entry(net.arc(a).tail).or_default().push(a);
            }
        }
        for arcs in out.values_mut() {
            arcs.sort_unstable();
        }
        let o_node = net.node_id(NodeKind::PaxOrigin { group: r }).unwrap();
        let o_vertex = net.vertex(o_node, 0).unwrap();
        let d_node = net.node_id(NodeKind::PaxDest { group: r }).unwrap();
        let d_vertex = net.vertex(d_node, 0).unwrap();
        loop {
            // Extract one path carrying the minimum residual along it.
            let mut path = Vec::new();
            let mut v = o_vertex;
            let mut bottleneck = f64::INFINITY;
            while v != d_vertex {
                let Some(candidates) = out.get(&v) else { break };
                let Some(&a) = candidates
                    .iter()
                    .find(|&&a| residual.get(&a).copied().unwrap_or(0.0) > 1e-9)
                else {
                    break;
                };
                bottleneck = bottleneck.min(residual[&a]);
                path.push(a);
                v = net.arc(a).head;
            }
            if v != d_vertex || path.is_empty() {
                break;
            }
            for &a in &path {
                *residual.get_mut(&a).unwrap() -= bottleneck;
            }
            let cost: f64 = path.iter().map(|&a| net.arc_cost(a, g)).sum();
            let transfers = path
                .iter()
                .filter(|&&a| matches!(net.arc(a).kind, ArcKind::TransferWalk { .. }))
                .count() as u32;
            flows.push((
                Column {
                    group: r,
                    arcs: path,
                    cost,
                    transfers,
                },
                bottleneck,
            ));
        }
    }
    (flows, unrouted)
}

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("variable {0} = {1} is fractional beyond the integrality tolerance")]
    Fractional(String, f64),
    #[error("selected arcs of train {0} do not form a path")]
    BrokenChain(usize),
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct PlanEvent {
    pub station: u32,
    pub arr: Minute,
    pub dep: Minute,
    pub stops: bool,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct TrainPlan {
    pub train_id: u32,
    pub operated: bool,
    pub rsu_type: Option<u32>,
    pub events: Vec<PlanEvent>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct ExtraPlan {
    pub rsu_type: u32,
    pub events: Vec<PlanEvent>,
}

/// Integral master solution decoded into operational terms.
#[derive(Debug, Clone)]
pub struct DecodedMaster {
    pub trains: Vec<TrainPlan>,
    pub extras: Vec<ExtraPlan>,
    /// Selected non-virtual arcs per train (operated trains only).
    pub train_arcs: Vec<Vec<ArcId>>,
    /// Selected extra arcs per rsu type (non-virtual).
    pub extra_arcs: Vec<Vec<ArcId>>,
    /// Inventory variable values per (arc, type).
    pub w: HashMap<(ArcId, usize), f64>,
}

pub fn decode_master(
    master: &MasterModel,
    inst: &Instance,
    net: &TimeSpaceNetwork,
    train_subs: &[Subnetwork],
    extra_sub: &Subnetwork,
    primal: &[f64],
) -> Result<DecodedMaster, DecodeError> {
    let round = |name: &str, v: f64| -> Result<f64, DecodeError> {
        let r = v.round();
        if (v - r).abs() > INT_TOL {
            return Err(DecodeError::Fractional(name.into(), v));
        }
        Ok(r)
    };

    let n_types = inst.n_rsu_types();
    let mut trains = Vec::with_capacity(inst.n_trains());
    let mut train_arcs = vec![Vec::new(); inst.n_trains()];
    for k in 0..inst.n_trains() {
        let mut rsu = None;
        for u in 0..n_types {
            if round("theta", primal[master.theta[k][u]])? > 0.5 {
                rsu = Some(u);
            }
        }
        let operated = rsu.is_some();
        let mut events = Vec::new();
        if let Some(u) = rsu {
            let mut selected: Vec<ArcId> = Vec::new();
            for &a in &train_subs[k].arcs {
                let v = master.x[&(k, u, a)];
                if round("x", primal[v])? > 0.5 {
                    selected.push(a);
                }
            }
            let chain = order_chain(net, &selected).ok_or(DecodeError::BrokenChain(k))?;
            events = chain_events(net, inst, &chain);
            train_arcs[k] = chain
                .into_iter()
                .filter(|&a| net.arc(a).kind.is_train_travel())
                .collect();
        }
        trains.push(TrainPlan {
            train_id: inst.train(k).id,
            operated,
            rsu_type: rsu.map(|u| inst.rsu(u).id),
            events,
        });
    }

    let mut extras = Vec::new();
    let mut extra_arcs = vec![Vec::new(); n_types];
    for u in 0..n_types {
        let mut selected: Vec<ArcId> = Vec::new();
        for &a in &extra_sub.arcs {
            if round("y", primal[master.y[&(a, u)]])? > 0.5 {
                selected.push(a);
            }
        }
        extra_arcs[u] = selected
            .iter()
            .copied()
            .filter(|&a| net.arc(a).kind.is_train_travel())
            .collect();
        // Decompose into unit chains, earliest source first.
        let mut remaining: Vec<ArcId> = selected;
        while let Some(pos) = remaining
            .iter()
            .position(|&a| matches!(net.arc(a).kind, ArcKind::TrainSource { .. }))
        {
            let mut chain = vec![remaining.swap_remove(pos)];
            loop {
                let tip = net.arc(*chain.last().unwrap()).head;
                if matches!(net.vertex_kind(tip), NodeKind::Inventory { .. }) {
                    break;
                }
                let next = remaining
                    .iter()
                    .position(|&a| net.arc(a).tail == tip)
                    .expect("extra flow must continue to a sink");
                chain.push(remaining.swap_remove(next));
            }
            extras.push(ExtraPlan {
                rsu_type: inst.rsu(u).id,
                events: chain_events(net, inst, &chain),
            });
        }
    }
    extras.sort_by_key(|e| e.events.first().map(|ev| ev.dep).unwrap_or(0));

    let mut w = HashMap::new();
    for (&(a, u), &v) in &master.w {
        w.insert((a, u), round("w", primal[v])?);
    }

    Ok(DecodedMaster {
        trains,
        extras,
        train_arcs,
        extra_arcs,
        w,
    })
}

/// Orders selected arcs into a single source-to-sink chain.
fn order_chain(net: &TimeSpaceNetwork, selected: &[ArcId]) -> Option<Vec<ArcId>> {
    if selected.is_empty() {
        return None;
    }
    let start = *selected
        .iter()
        .find(|&&a| matches!(net.arc(a).kind, ArcKind::TrainSource { .. }))?;
    let mut remaining: Vec<ArcId> = selected.iter().copied().filter(|&a| a != start).collect();
    let mut chain = vec![start];
    loop {
        let tip = net.arc(*chain.last().unwrap()).head;
        if matches!(net.vertex_kind(tip), NodeKind::Inventory { .. }) {
            break;
        }
        let pos = remaining.iter().position(|&a| net.arc(a).tail == tip)?;
        chain.push(remaining.swap_remove(pos));
    }
    remaining.is_empty().then_some(chain)
}

/// Station events along an ordered arc chain.
fn chain_events(net: &TimeSpaceNetwork, inst: &Instance, chain: &[ArcId]) -> Vec<PlanEvent> {
    let mut events: Vec<PlanEvent> = Vec::new();
    for &a in chain {
        let arc = net.arc(a);
        match arc.kind {
            ArcKind::TrainSource { station } => {
                let t = net.vertex_time(arc.head);
                events.push(PlanEvent {
                    station: inst.station(station).id,
                    arr: t,
                    dep: t,
                    stops: true,
                });
            }
            ArcKind::Section { .. } => {
                let (station, stops) = match net.vertex_kind(arc.head) {
                    NodeKind::ArrStop { station, .. } => (station, true),
                    NodeKind::ArrSkip { station, .. } => (station, false),
                    _ => unreachable!(),
                };
                let t = net.vertex_time(arc.head);
                events.push(PlanEvent {
                    station: inst.station(station).id,
                    arr: t,
                    dep: t,
                    stops,
                });
            }
            ArcKind::Dwell { .. } | ArcKind::Passing { .. } => {
                let t = net.vertex_time(arc.head);
                if let Some(last) = events.last_mut() {
                    last.dep = t;
                }
            }
            ArcKind::TrainSink { .. } => {}
            _ => {}
        }
    }
    events
}
