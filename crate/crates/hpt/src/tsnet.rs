//! The directed acyclic time-space network: vertices are (physical node,
//! minute) pairs, arcs encode train movements, rolling-stock inventory and
//! passenger activities. Also builds the per-train, extra-train and
//! per-passenger-group subnetworks and the incompatible (headway) arc sets.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::instance::{CostWeights, ExtraStopMode, Group, Headways, Instance, TimeGrid};
use crate::Minute;

pub type NodeId = u32;
pub type ArcId = u32;
pub type VertexId = u32;

/// Flat (space-dimension) node kinds. Departure/arrival nodes are split by
/// the adjacent station they face and by the stop/skip decision, which is
/// what lets arc selection encode stop plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    DepStop { station: usize, toward: usize },
    DepSkip { station: usize, toward: usize },
    ArrStop { station: usize, from: usize },
    ArrSkip { station: usize, from: usize },
    Transfer { station: usize },
    Inventory { station: usize },
    PaxOrigin { group: usize },
    PaxDest { group: usize },
}

impl NodeKind {
    pub fn station(&self) -> Option<usize> {
        match *self {
            NodeKind::DepStop { station, .. }
            | NodeKind::DepSkip { station, .. }
            | NodeKind::ArrStop { station, .. }
            | NodeKind::ArrSkip { station, .. }
            | NodeKind::Transfer { station }
            | NodeKind::Inventory { station } => Some(station),
            _ => None,
        }
    }

    /// Departure- or arrival-side boundary node (headway resource).
    pub fn is_boundary(&self) -> bool {
        matches!(
            self,
            NodeKind::DepStop { .. }
                | NodeKind::DepSkip { .. }
                | NodeKind::ArrStop { .. }
                | NodeKind::ArrSkip { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArcKind {
    /// Train movement through one track section; the flags give the stop
    /// pattern at the two section ends, which fixes the running time.
    Section {
        section: usize,
        dep_stop: bool,
        arr_stop: bool,
    },
    Dwell { station: usize },
    Passing { station: usize },
    Inventory { station: usize },
    TrainSource { station: usize },
    TrainSink { station: usize },
    TransferWalk { station: usize },
    TransferWait { station: usize },
    Boarding { station: usize },
    PaxOrigin { group: usize },
    PaxDest { group: usize },
}

impl ArcKind {
    /// Section, dwell or passing: the arcs passengers ride on board.
    pub fn is_train_travel(&self) -> bool {
        matches!(
            self,
            ArcKind::Section { .. } | ArcKind::Dwell { .. } | ArcKind::Passing { .. }
        )
    }

    /// Arcs passengers may traverse at all.
    pub fn is_passenger_usable(&self) -> bool {
        matches!(
            self,
            ArcKind::Section { .. }
                | ArcKind::Dwell { .. }
                | ArcKind::Passing { .. }
                | ArcKind::TransferWalk { .. }
                | ArcKind::TransferWait { .. }
                | ArcKind::Boarding { .. }
                | ArcKind::PaxOrigin { .. }
                | ArcKind::PaxDest { .. }
        )
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ArcKind::Section { .. } => "section",
            ArcKind::Dwell { .. } => "dwell",
            ArcKind::Passing { .. } => "passing",
            ArcKind::Inventory { .. } => "inventory",
            ArcKind::TrainSource { .. } => "train_source",
            ArcKind::TrainSink { .. } => "train_sink",
            ArcKind::TransferWalk { .. } => "transfer_walk",
            ArcKind::TransferWait { .. } => "transfer_wait",
            ArcKind::Boarding { .. } => "boarding",
            ArcKind::PaxOrigin { .. } => "pax_origin",
            ArcKind::PaxDest { .. } => "pax_dest",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Arc {
    pub kind: ArcKind,
    pub tail: VertexId,
    pub head: VertexId,
    /// Declared duration; equals head time minus tail time except for
    /// passenger origin/destination arcs whose od endpoint is static.
    pub dur: Minute,
    /// Kilometers covered (section arcs only).
    pub km: f64,
    /// Group-independent cost. Origin arcs are the one group-dependent
    /// family; their cost is computed on demand from the group's windows.
    pub base_cost: f64,
}

/// The complete time-space network over a validated instance.
pub struct TimeSpaceNetwork {
    pub grid: TimeGrid,
    pub weights: CostWeights,
    pub nodes: Vec<NodeKind>,
    pub arcs: Vec<Arc>,
    node_lookup: HashMap<NodeKind, NodeId>,
    /// First vertex id per node; vertices of a node are consecutive ticks.
    node_vertex_base: Vec<VertexId>,
    node_vertex_start: Vec<Minute>,
    vertex_node: Vec<NodeId>,
    vertex_time: Vec<Minute>,
    arc_by_endpoints: HashMap<(VertexId, VertexId), ArcId>,
    out_start: Vec<u32>,
    out_arcs: Vec<ArcId>,
    in_start: Vec<u32>,
    in_arcs: Vec<ArcId>,
}

impl TimeSpaceNetwork {
    pub fn n_vertices(&self) -> usize {
        self.vertex_node.len()
    }

    pub fn node_id(&self, kind: NodeKind) -> Option<NodeId> {
        self.node_lookup.get(&kind).copied()
    }

    /// Vertex of a node at a grid minute, if it exists.
    pub fn vertex(&self, node: NodeId, t: Minute) -> Option<VertexId> {
        let start = self.node_vertex_start[node as usize];
        if t < start || (t - start) % self.grid.step != 0 {
            return None;
        }
        let idx = ((t - start) / self.grid.step) as u32;
        let base = self.node_vertex_base[node as usize];
        let end = self
            .node_vertex_base
            .get(node as usize + 1)
            .copied()
            .unwrap_or(self.vertex_node.len() as u32);
        let v = base + idx;
        (v < end).then_some(v)
    }

    pub fn vertex_node(&self, v: VertexId) -> NodeId {
        self.vertex_node[v as usize]
    }

    pub fn vertex_kind(&self, v: VertexId) -> NodeKind {
        self.nodes[self.vertex_node[v as usize] as usize]
    }

    pub fn vertex_time(&self, v: VertexId) -> Minute {
        self.vertex_time[v as usize]
    }

    pub fn arc(&self, a: ArcId) -> &Arc {
        &self.arcs[a as usize]
    }

    pub fn find_arc(&self, tail: VertexId, head: VertexId) -> Option<ArcId> {
        self.arc_by_endpoints.get(&(tail, head)).copied()
    }

    pub fn out_arcs(&self, v: VertexId) -> &[ArcId] {
        let s = self.out_start[v as usize] as usize;
        let e = self.out_start[v as usize + 1] as usize;
        &self.out_arcs[s..e]
    }

    pub fn in_arcs(&self, v: VertexId) -> &[ArcId] {
        let s = self.in_start[v as usize] as usize;
        let e = self.in_start[v as usize + 1] as usize;
        &self.in_arcs[s..e]
    }

    /// Cost of an arc for a specific group. Only origin arcs depend on the
    /// group: departing outside the preferred window costs the weighted
    /// shift distance to the nearer window edge.
    pub fn arc_cost(&self, a: ArcId, group: &Group) -> f64 {
        let arc = &self.arcs[a as usize];
        match arc.kind {
            ArcKind::PaxOrigin { .. } => {
                let t = self.vertex_time[arc.head as usize];
                if t > group.pref_to {
                    self.weights.shift * (t - group.pref_to) as f64
                } else if t < group.pref_from {
                    self.weights.shift * (group.pref_from - t) as f64
                } else {
                    0.0
                }
            }
            _ => arc.base_cost,
        }
    }

    /// Arc counts per family, in construction order of the families.
    pub fn family_counts(&self) -> Vec<(&'static str, usize)> {
        let order = [
            "section",
            "dwell",
            "passing",
            "inventory",
            "train_source",
            "train_sink",
            "transfer_walk",
            "transfer_wait",
            "boarding",
            "pax_origin",
            "pax_dest",
        ];
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for a in &self.arcs {
            *counts.entry(a.kind.family_name()).or_default() += 1;
        }
        order
            .iter()
            .map(|&k| (k, counts.get(k).copied().unwrap_or(0)))
            .collect()
    }
}

/// Owner of a subnetwork: one original train, the shared extra-train
/// network, or one passenger group (positions into the instance tables).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Train(usize),
    Extra,
    Group(usize),
}

#[derive(Debug, Clone)]
pub struct Subnetwork {
    pub owner: Owner,
    /// All member arcs, ascending; includes the virtual ones.
    pub arcs: Vec<ArcId>,
    /// Train source/sink arcs among `arcs` (empty for passenger owners).
    pub virtual_arcs: Vec<ArcId>,
}

impl Subnetwork {
    pub fn non_virtual(&self) -> impl Iterator<Item = ArcId> + '_ {
        // Both lists are sorted; the virtual subset is tiny.
        self.arcs
            .iter()
            .copied()
            .filter(move |a| self.virtual_arcs.binary_search(a).is_err())
    }

    pub fn contains(&self, a: ArcId) -> bool {
        self.arcs.binary_search(&a).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }
}

/// Incompatible section arc sets per boundary vertex: selecting two arcs
/// from one set violates a minimum headway.
#[derive(Debug, Clone, Default)]
pub struct IncompatibleSets {
    pub by_vertex: BTreeMap<VertexId, Vec<ArcId>>,
}

impl IncompatibleSets {
    /// Vertices whose sets actually couple two or more arcs; only these
    /// need a track-capacity row.
    pub fn coupling(&self) -> impl Iterator<Item = (VertexId, &Vec<ArcId>)> {
        self.by_vertex
            .iter()
            .filter(|(_, arcs)| arcs.len() >= 2)
            .map(|(&v, arcs)| (v, arcs))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("horizon too short: section ({from}, {to}) cannot be traversed within the grid")]
    HorizonTooShort { from: u32, to: u32 },
}

/// Builds the complete network with all ten arc families.
pub fn build_network(inst: &Instance) -> Result<TimeSpaceNetwork, NetworkError> {
    let grid = inst.grid();
    let d = &inst.data;

    // Flat nodes in a fixed order: per station its boundary nodes (per
    // adjacent station: dep stop/skip, arr stop/skip), then transfer
    // nodes, inventory nodes and passenger od nodes.
    let mut nodes = Vec::new();
    let mut node_lookup = HashMap::new();
    let push_node = |nodes: &mut Vec<NodeKind>,
                         lookup: &mut HashMap<NodeKind, NodeId>,
                         kind: NodeKind| {
        let id = nodes.len() as NodeId;
        nodes.push(kind);
        lookup.insert(kind, id);
    };
    for m in 0..inst.n_stations() {
        for &m2 in inst.adjacent(m) {
            push_node(&mut nodes, &mut node_lookup, NodeKind::DepStop { station: m, toward: m2 });
            push_node(&mut nodes, &mut node_lookup, NodeKind::DepSkip { station: m, toward: m2 });
            push_node(&mut nodes, &mut node_lookup, NodeKind::ArrStop { station: m, from: m2 });
            push_node(&mut nodes, &mut node_lookup, NodeKind::ArrSkip { station: m, from: m2 });
        }
    }
    for m in 0..inst.n_stations() {
        push_node(&mut nodes, &mut node_lookup, NodeKind::Transfer { station: m });
    }
    for &m in inst.terminals() {
        push_node(&mut nodes, &mut node_lookup, NodeKind::Inventory { station: m });
    }
    for r in 0..inst.n_groups() {
        push_node(&mut nodes, &mut node_lookup, NodeKind::PaxOrigin { group: r });
        push_node(&mut nodes, &mut node_lookup, NodeKind::PaxDest { group: r });
    }

    // Vertices: inventory nodes extend over the inventory horizon,
    // passenger od nodes are static (one vertex at time 0), all other
    // nodes range over the timetable horizon.
    let mut node_vertex_base = Vec::with_capacity(nodes.len());
    let mut node_vertex_start = Vec::with_capacity(nodes.len());
    let mut vertex_node = Vec::new();
    let mut vertex_time = Vec::new();
    for (n, kind) in nodes.iter().enumerate() {
        node_vertex_base.push(vertex_node.len() as VertexId);
        node_vertex_start.push(0);
        let times: Vec<Minute> = match kind {
            NodeKind::Inventory { .. } => grid.iter_inv().collect(),
            NodeKind::PaxOrigin { .. } | NodeKind::PaxDest { .. } => vec![0],
            _ => grid.iter().collect(),
        };
        for t in times {
            vertex_node.push(n as NodeId);
            vertex_time.push(t);
        }
    }

    let mut net = TimeSpaceNetwork {
        grid,
        weights: d.params.weights,
        nodes,
        arcs: Vec::new(),
        node_lookup,
        node_vertex_base,
        node_vertex_start,
        vertex_node,
        vertex_time,
        arc_by_endpoints: HashMap::new(),
        out_start: Vec::new(),
        out_arcs: Vec::new(),
        in_start: Vec::new(),
        in_arcs: Vec::new(),
    };

    let node = |net: &TimeSpaceNetwork, kind: NodeKind| net.node_lookup[&kind];
    let push_arc = |net: &mut TimeSpaceNetwork, kind: ArcKind, tail: VertexId, head: VertexId, dur: Minute, km: f64, base_cost: f64| {
        let id = net.arcs.len() as ArcId;
        net.arcs.push(Arc {
            kind,
            tail,
            head,
            dur,
            km,
            base_cost,
        });
        net.arc_by_endpoints.insert((tail, head), id);
        id
    };

    let w = d.params.weights;

    // Section arcs: four stop-pattern variants per directed section.
    for (s, sec) in d.sections.iter().enumerate() {
        let from = inst.station_pos(sec.from);
        let to = inst.station_pos(sec.to);
        let mut any = false;
        for (dep_stop, arr_stop) in [(false, false), (true, false), (false, true), (true, true)] {
            let mut dur = sec.run_min;
            if dep_stop {
                dur += sec.acc_min;
            }
            if arr_stop {
                dur += sec.dec_min;
            }
            let dep_node = if dep_stop {
                node(&net, NodeKind::DepStop { station: from, toward: to })
            } else {
                node(&net, NodeKind::DepSkip { station: from, toward: to })
            };
            let arr_node = if arr_stop {
                node(&net, NodeKind::ArrStop { station: to, from })
            } else {
                node(&net, NodeKind::ArrSkip { station: to, from })
            };
            for t in grid.iter() {
                if !grid.contains(t + dur) {
                    continue;
                }
                any = true;
                let tail = net.vertex(dep_node, t).unwrap();
                let head = net.vertex(arr_node, t + dur).unwrap();
                push_arc(
                    &mut net,
                    ArcKind::Section { section: s, dep_stop, arr_stop },
                    tail,
                    head,
                    dur,
                    sec.length_km,
                    w.in_vehicle * dur as f64,
                );
            }
        }
        if !any {
            return Err(NetworkError::HorizonTooShort {
                from: sec.from,
                to: sec.to,
            });
        }
    }

    // Dwell arcs: arrival stop to departure stop toward a different
    // adjacent station (no turnover along a route), durations on the grid
    // within the station's dwell bounds.
    for m in 0..inst.n_stations() {
        let st = inst.station(m);
        for &m1 in inst.adjacent(m) {
            for &m2 in inst.adjacent(m) {
                if m1 == m2 {
                    continue;
                }
                let a_node = node(&net, NodeKind::ArrStop { station: m, from: m1 });
                let d_node = node(&net, NodeKind::DepStop { station: m, toward: m2 });
                let mut dur = st.dwell_min + (grid.step - st.dwell_min.rem_euclid(grid.step)) % grid.step;
                while dur <= st.dwell_max {
                    for t in grid.iter() {
                        if grid.contains(t + dur) {
                            let tail = net.vertex(a_node, t).unwrap();
                            let head = net.vertex(d_node, t + dur).unwrap();
                            push_arc(
                                &mut net,
                                ArcKind::Dwell { station: m },
                                tail,
                                head,
                                dur,
                                0.0,
                                w.in_vehicle * dur as f64,
                            );
                        }
                    }
                    dur += grid.step;
                }
            }
        }
    }

    // Passing arcs: zero duration between skip arrival and skip departure.
    for m in 0..inst.n_stations() {
        for &m1 in inst.adjacent(m) {
            for &m2 in inst.adjacent(m) {
                if m1 == m2 {
                    continue;
                }
                let a_node = node(&net, NodeKind::ArrSkip { station: m, from: m1 });
                let d_node = node(&net, NodeKind::DepSkip { station: m, toward: m2 });
                for t in grid.iter() {
                    let tail = net.vertex(a_node, t).unwrap();
                    let head = net.vertex(d_node, t).unwrap();
                    push_arc(&mut net, ArcKind::Passing { station: m }, tail, head, 0, 0.0, 0.0);
                }
            }
        }
    }

    // Inventory waiting arcs over the extended horizon.
    for &m in inst.terminals() {
        let inv = node(&net, NodeKind::Inventory { station: m });
        let mut t = 0;
        while t + grid.step <= grid.inv_end {
            let tail = net.vertex(inv, t).unwrap();
            let head = net.vertex(inv, t + grid.step).unwrap();
            push_arc(&mut net, ArcKind::Inventory { station: m }, tail, head, grid.step, 0.0, 0.0);
            t += grid.step;
        }
    }

    // Train source (sign-on) and sink (sign-off) arcs.
    for &m in inst.terminals() {
        let inv = node(&net, NodeKind::Inventory { station: m });
        for &m2 in inst.adjacent(m) {
            let dep = node(&net, NodeKind::DepStop { station: m, toward: m2 });
            for t in grid.iter() {
                let tail = net.vertex(inv, t).unwrap();
                let head = net.vertex(dep, t).unwrap();
                push_arc(&mut net, ArcKind::TrainSource { station: m }, tail, head, 0, 0.0, 0.0);
            }
        }
    }
    let conn = d.params.rsu_transition;
    for &m in inst.terminals() {
        let inv = node(&net, NodeKind::Inventory { station: m });
        for &m2 in inst.adjacent(m) {
            let arr = node(&net, NodeKind::ArrStop { station: m, from: m2 });
            for t in grid.iter() {
                let tail = net.vertex(arr, t).unwrap();
                let head = net.vertex(inv, t + conn).unwrap();
                push_arc(&mut net, ArcKind::TrainSink { station: m }, tail, head, conn, 0.0, 0.0);
            }
        }
    }

    // Transfer walking, waiting and boarding arcs.
    for m in 0..inst.n_stations() {
        let walk = inst.station(m).transfer_walk_min;
        let trans = node(&net, NodeKind::Transfer { station: m });
        for &m2 in inst.adjacent(m) {
            let arr = node(&net, NodeKind::ArrStop { station: m, from: m2 });
            for t in grid.iter() {
                if grid.contains(t + walk) {
                    let tail = net.vertex(arr, t).unwrap();
                    let head = net.vertex(trans, t + walk).unwrap();
                    push_arc(
                        &mut net,
                        ArcKind::TransferWalk { station: m },
                        tail,
                        head,
                        walk,
                        0.0,
                        w.transfer * walk as f64,
                    );
                }
            }
        }
    }
    for m in 0..inst.n_stations() {
        let trans = node(&net, NodeKind::Transfer { station: m });
        for t in grid.iter() {
            if grid.contains(t + grid.step) {
                let tail = net.vertex(trans, t).unwrap();
                let head = net.vertex(trans, t + grid.step).unwrap();
                push_arc(
                    &mut net,
                    ArcKind::TransferWait { station: m },
                    tail,
                    head,
                    grid.step,
                    0.0,
                    w.wait * grid.step as f64,
                );
            }
        }
    }
    for m in 0..inst.n_stations() {
        let trans = node(&net, NodeKind::Transfer { station: m });
        for &m2 in inst.adjacent(m) {
            let dep = node(&net, NodeKind::DepStop { station: m, toward: m2 });
            for t in grid.iter() {
                let tail = net.vertex(trans, t).unwrap();
                let head = net.vertex(dep, t).unwrap();
                push_arc(&mut net, ArcKind::Boarding { station: m }, tail, head, 0, 0.0, 0.0);
            }
        }
    }

    // Passenger origin and destination arcs. Origin arc costs depend on
    // the group's preferred window and are computed lazily; see arc_cost.
    for (r, g) in d.groups.iter().enumerate() {
        let org = inst.station_pos(g.origin);
        let o_node = node(&net, NodeKind::PaxOrigin { group: r });
        let o_vertex = net.vertex(o_node, 0).unwrap();
        for &m2 in inst.adjacent(org) {
            let dep = node(&net, NodeKind::DepStop { station: org, toward: m2 });
            for t in grid.iter() {
                if t >= g.allow_from && t <= g.allow_to {
                    let head = net.vertex(dep, t).unwrap();
                    push_arc(&mut net, ArcKind::PaxOrigin { group: r }, o_vertex, head, 0, 0.0, 0.0);
                }
            }
        }
    }
    for (r, g) in d.groups.iter().enumerate() {
        let des = inst.station_pos(g.destination);
        let d_node = node(&net, NodeKind::PaxDest { group: r });
        let d_vertex = net.vertex(d_node, 0).unwrap();
        for &m2 in inst.adjacent(des) {
            let arr = node(&net, NodeKind::ArrStop { station: des, from: m2 });
            for t in grid.iter() {
                if t <= g.latest_arrival {
                    let tail = net.vertex(arr, t).unwrap();
                    push_arc(&mut net, ArcKind::PaxDest { group: r }, tail, d_vertex, 0, 0.0, 0.0);
                }
            }
        }
    }

    net.build_adjacency();
    Ok(net)
}

impl TimeSpaceNetwork {
    fn build_adjacency(&mut self) {
        let nv = self.n_vertices();
        let mut out_count = vec![0u32; nv + 1];
        let mut in_count = vec![0u32; nv + 1];
        for a in &self.arcs {
            out_count[a.tail as usize + 1] += 1;
            in_count[a.head as usize + 1] += 1;
        }
        for i in 0..nv {
            out_count[i + 1] += out_count[i];
            in_count[i + 1] += in_count[i];
        }
        let mut out_arcs = vec![0 as ArcId; self.arcs.len()];
        let mut in_arcs = vec![0 as ArcId; self.arcs.len()];
        let mut out_fill = out_count.clone();
        let mut in_fill = in_count.clone();
        for (id, a) in self.arcs.iter().enumerate() {
            out_arcs[out_fill[a.tail as usize] as usize] = id as ArcId;
            out_fill[a.tail as usize] += 1;
            in_arcs[in_fill[a.head as usize] as usize] = id as ArcId;
            in_fill[a.head as usize] += 1;
        }
        self.out_start = out_count;
        self.out_arcs = out_arcs;
        self.in_start = in_count;
        self.in_arcs = in_arcs;
    }
}

/// Per original train: every arc of its fixed route and stop plan whose
/// event times deviate at most `params.deviation` from the published
/// schedule, plus the incident source and sink arcs.
pub fn build_train_subnetworks(net: &TimeSpaceNetwork, inst: &Instance) -> Vec<Subnetwork> {
    (0..inst.n_trains())
        .map(|k| build_one_train(net, inst, k))
        .collect()
}

fn window(grid: &TimeGrid, t: Minute, tau: Minute) -> impl Iterator<Item = Minute> + '_ {
    let lo = (t - tau).max(0);
    let hi = (t + tau).min(grid.end);
    let step = grid.step;
    let first = lo + (step - lo.rem_euclid(step)) % step;
    (0..)
        .map(move |i| first + i * step)
        .take_while(move |&x| x <= hi)
}

fn build_one_train(net: &TimeSpaceNetwork, inst: &Instance, k: usize) -> Subnetwork {
    let grid = net.grid;
    let tau = inst.data.params.deviation;
    let route = inst.train_route(k);
    let stops = inst.train_stops(k).to_vec();
    let schedule = &inst.train(k).schedule;
    let mut arcs = Vec::new();
    let mut virtual_arcs = Vec::new();

    let node = |kind: NodeKind| net.node_id(kind).expect("node must exist");

    // Section legs.
    for j in 0..route.len() - 1 {
        let sec = inst.section_between(route[j], route[j + 1]).unwrap();
        let dep_stop = stops[j];
        let arr_stop = stops[j + 1];
        let dep_node = if dep_stop {
            node(NodeKind::DepStop { station: route[j], toward: route[j + 1] })
        } else {
            node(NodeKind::DepSkip { station: route[j], toward: route[j + 1] })
        };
        let sec_data = inst.section(sec);
        let mut dur = sec_data.run_min;
        if dep_stop {
            dur += sec_data.acc_min;
        }
        if arr_stop {
            dur += sec_data.dec_min;
        }
        for t in window(&grid, schedule[j].dep, tau) {
            if !grid.contains(t + dur) {
                continue;
            }
            let tail = net.vertex(dep_node, t).unwrap();
            let arr_node = if arr_stop {
                node(NodeKind::ArrStop { station: route[j + 1], from: route[j] })
            } else {
                node(NodeKind::ArrSkip { station: route[j + 1], from: route[j] })
            };
            let head = net.vertex(arr_node, t + dur).unwrap();
            arcs.push(net.find_arc(tail, head).expect("section arc must exist"));
        }
    }

    // Interior dwell or passing.
    for j in 1..route.len() - 1 {
        let m = route[j];
        let st = inst.station(m);
        if stops[j] {
            let a_node = node(NodeKind::ArrStop { station: m, from: route[j - 1] });
            let d_node = node(NodeKind::DepStop { station: m, toward: route[j + 1] });
            for ta in window(&grid, schedule[j].arr, tau) {
                for td in window(&grid, schedule[j].dep, tau) {
                    let dwell = td - ta;
                    if dwell < st.dwell_min || dwell > st.dwell_max {
                        continue;
                    }
                    let tail = net.vertex(a_node, ta).unwrap();
                    let head = net.vertex(d_node, td).unwrap();
                    if let Some(a) = net.find_arc(tail, head) {
                        arcs.push(a);
                    }
                }
            }
        } else {
            let a_node = node(NodeKind::ArrSkip { station: m, from: route[j - 1] });
            let d_node = node(NodeKind::DepSkip { station: m, toward: route[j + 1] });
            for t in window(&grid, schedule[j].arr, tau) {
                let tail = net.vertex(a_node, t).unwrap();
                let head = net.vertex(d_node, t).unwrap();
                arcs.push(net.find_arc(tail, head).expect("passing arc must exist"));
            }
        }
    }

    // Virtual source/sink arcs at the route endpoints.
    let org = route[0];
    let des = *route.last().unwrap();
    let inv_org = node(NodeKind::Inventory { station: org });
    let dep0 = node(NodeKind::DepStop { station: org, toward: route[1] });
    for t in window(&grid, schedule[0].dep, tau) {
        let tail = net.vertex(inv_org, t).unwrap();
        let head = net.vertex(dep0, t).unwrap();
        let a = net.find_arc(tail, head).expect("source arc must exist");
        arcs.push(a);
        virtual_arcs.push(a);
    }
    let inv_des = node(NodeKind::Inventory { station: des });
    let arr_last = node(NodeKind::ArrStop { station: des, from: route[route.len() - 2] });
    let conn = inst.data.params.rsu_transition;
    for t in window(&grid, schedule.last().unwrap().arr, tau) {
        let tail = net.vertex(arr_last, t).unwrap();
        let head = net.vertex(inv_des, t + conn).unwrap();
        let a = net.find_arc(tail, head).expect("sink arc must exist");
        arcs.push(a);
        virtual_arcs.push(a);
    }

    arcs.sort_unstable();
    arcs.dedup();
    virtual_arcs.sort_unstable();
    virtual_arcs.dedup();
    Subnetwork {
        owner: Owner::Train(k),
        arcs,
        virtual_arcs,
    }
}

/// The single shared extra-train subnetwork. Node time windows come from
/// propagating the earliest window edge with the fastest admissible
/// pattern (all-skip, or all-stop with minimum dwell when skipping is
/// disabled) and the latest edge with all-stop and maximum dwell; arcs
/// with both endpoints inside their windows are included.
pub fn build_extra_subnetwork(net: &TimeSpaceNetwork, inst: &Instance) -> Subnetwork {
    let grid = net.grid;
    let mut arcs: Vec<ArcId> = Vec::new();
    let mut virtual_arcs: Vec<ArcId> = Vec::new();
    let all_stop = inst.data.params.extra_stop_mode == ExtraStopMode::AllStop;
    let node = |kind: NodeKind| net.node_id(kind).expect("node must exist");

    for ep in &inst.data.params.extra_paths {
        let route: Vec<usize> = ep.route.iter().map(|&id| inst.station_pos(id)).collect();
        let n = route.len();
        for &(lo, hi) in &ep.windows {
            // Earliest departure/arrival per path position (all skip).
            let mut e_dep = vec![Minute::MAX; n];
            let mut e_arr = vec![Minute::MAX; n];
            let mut l_dep = vec![Minute::MIN; n];
            let mut l_arr = vec![Minute::MIN; n];
            e_dep[0] = lo;
            l_dep[0] = hi;
            e_arr[0] = lo;
            l_arr[0] = hi;
            for j in 1..n {
                let sec = inst.section(inst.section_between(route[j - 1], route[j]).unwrap());
                let first = j == 1;
                let last = j == n - 1;
                let mut e_dur = sec.run_min;
                if first || all_stop {
                    e_dur += sec.acc_min; // origin is always a stop
                }
                if last || all_stop {
                    e_dur += sec.dec_min; // destination is always a stop
                }
                e_arr[j] = e_dep[j - 1] + e_dur;
                let l_dur = sec.run_min + sec.acc_min + sec.dec_min;
                l_arr[j] = l_dep[j - 1] + l_dur;
                if !last {
                    let st = inst.station(route[j]);
                    // Passing takes no time; in all-stop mode the minimum
                    // dwell applies instead.
                    e_dep[j] = e_arr[j] + if all_stop { st.dwell_min } else { 0 };
                    l_dep[j] = l_arr[j] + st.dwell_max;
                } else {
                    e_dep[j] = e_arr[j];
                    l_dep[j] = l_arr[j];
                }
            }

            let in_window = |t: Minute, lo: Minute, hi: Minute| t >= lo && t <= hi && grid.contains(t);

            // Section arcs per leg, all admissible stop patterns.
            for j in 0..n - 1 {
                let sec_pos = inst.section_between(route[j], route[j + 1]).unwrap();
                let sec = inst.section(sec_pos);
                let dep_patterns: &[bool] = if j == 0 || all_stop { &[true] } else { &[true, false] };
                let arr_patterns: &[bool] =
                    if j + 1 == n - 1 || all_stop { &[true] } else { &[true, false] };
                for &dep_stop in dep_patterns {
                    for &arr_stop in arr_patterns {
                        let mut dur = sec.run_min;
                        if dep_stop {
                            dur += sec.acc_min;
                        }
                        if arr_stop {
                            dur += sec.dec_min;
                        }
                        let dep_node = if dep_stop {
                            node(NodeKind::DepStop { station: route[j], toward: route[j + 1] })
                        } else {
                            node(NodeKind::DepSkip { station: route[j], toward: route[j + 1] })
                        };
                        let arr_node = if arr_stop {
                            node(NodeKind::ArrStop { station: route[j + 1], from: route[j] })
                        } else {
                            node(NodeKind::ArrSkip { station: route[j + 1], from: route[j] })
                        };
                        let mut t = e_dep[j];
                        while t <= l_dep[j] {
                            if in_window(t, e_dep[j], l_dep[j])
                                && in_window(t + dur, e_arr[j + 1], l_arr[j + 1])
                            {
                                let tail = net.vertex(dep_node, t).unwrap();
                                let head = net.vertex(arr_node, t + dur).unwrap();
                                if let Some(a) = net.find_arc(tail, head) {
                                    arcs.push(a);
                                }
                            }
                            t += grid.step;
                        }
                    }
                }
            }

            // Interior dwell/passing arcs.
            for j in 1..n - 1 {
                let m = route[j];
                let st = inst.station(m);
                let a_stop = node(NodeKind::ArrStop { station: m, from: route[j - 1] });
                let d_stop = node(NodeKind::DepStop { station: m, toward: route[j + 1] });
                let mut ta = e_arr[j];
                while ta <= l_arr[j] {
                    if in_window(ta, e_arr[j], l_arr[j]) {
                        let mut dwell = st.dwell_min;
                        while dwell <= st.dwell_max {
                            let td = ta + dwell;
                            if in_window(td, e_dep[j], l_dep[j]) {
                                if let (Some(tail), Some(head)) =
                                    (net.vertex(a_stop, ta), net.vertex(d_stop, td))
                                {
                                    if let Some(a) = net.find_arc(tail, head) {
                                        arcs.push(a);
                                    }
                                }
                            }
                            dwell += grid.step;
                        }
                    }
                    ta += grid.step;
                }
                if !all_stop {
                    let a_skip = node(NodeKind::ArrSkip { station: m, from: route[j - 1] });
                    let d_skip = node(NodeKind::DepSkip { station: m, toward: route[j + 1] });
                    let mut t = e_arr[j];
                    while t <= l_arr[j] {
                        if in_window(t, e_arr[j], l_arr[j]) && in_window(t, e_dep[j], l_dep[j]) {
                            let tail = net.vertex(a_skip, t).unwrap();
                            let head = net.vertex(d_skip, t).unwrap();
                            if let Some(a) = net.find_arc(tail, head) {
                                arcs.push(a);
                            }
                        }
                        t += grid.step;
                    }
                }
            }

            // Source and sink arcs at the path endpoints.
            let inv_org = node(NodeKind::Inventory { station: route[0] });
            let dep0 = node(NodeKind::DepStop { station: route[0], toward: route[1] });
            let mut t = lo;
            while t <= hi {
                if grid.contains(t) {
                    let tail = net.vertex(inv_org, t).unwrap();
                    let head = net.vertex(dep0, t).unwrap();
                    if let Some(a) = net.find_arc(tail, head) {
                        arcs.push(a);
                        virtual_arcs.push(a);
                    }
                }
                t += grid.step;
            }
            let inv_des = node(NodeKind::Inventory { station: route[n - 1] });
            let arr_last = node(NodeKind::ArrStop { station: route[n - 1], from: route[n - 2] });
            let conn = inst.data.params.rsu_transition;
            let mut t = e_arr[n - 1];
            while t <= l_arr[n - 1] {
                if grid.contains(t) {
                    if let Some(tail) = net.vertex(arr_last, t) {
                        let head = net.vertex(inv_des, t + conn).unwrap();
                        if let Some(a) = net.find_arc(tail, head) {
                            arcs.push(a);
                            virtual_arcs.push(a);
                        }
                    }
                }
                t += grid.step;
            }
        }
    }

    arcs.sort_unstable();
    arcs.dedup();
    virtual_arcs.sort_unstable();
    virtual_arcs.dedup();
    Subnetwork {
        owner: Owner::Extra,
        arcs,
        virtual_arcs,
    }
}

/// Per passenger group: a forward earliest-time sweep from the origin over
/// passenger-usable arcs, then keep arcs whose tail is no earlier than the
/// tail node's earliest reachable time and whose head is not past the
/// group's latest arrival.
pub fn build_passenger_subnetworks(net: &TimeSpaceNetwork, inst: &Instance) -> Vec<Subnetwork> {
    (0..inst.n_groups())
        .map(|r| build_one_group(net, inst, r))
        .collect()
}

fn build_one_group(net: &TimeSpaceNetwork, inst: &Instance, r: usize) -> Subnetwork {
    let g = inst.group(r);
    let o_node = net.node_id(NodeKind::PaxOrigin { group: r }).unwrap();
    let o_vertex = net.vertex(o_node, 0).unwrap();
    let d_node = net.node_id(NodeKind::PaxDest { group: r }).unwrap();

    // Earliest reachable time per flat node via BFS over vertices.
    let mut earliest: Vec<Minute> = vec![Minute::MAX; net.nodes.len()];
    let mut seen = vec![false; net.n_vertices()];
    let mut queue = VecDeque::new();
    seen[o_vertex as usize] = true;
    queue.push_back(o_vertex);
    while let Some(v) = queue.pop_front() {
        for &a in net.out_arcs(v) {
            let arc = net.arc(a);
            let usable = match arc.kind {
                ArcKind::PaxOrigin { group } | ArcKind::PaxDest { group } => group == r,
                k => k.is_passenger_usable(),
            };
            if !usable {
                continue;
            }
            let head = arc.head;
            let ht = net.vertex_time(head);
            let head_is_od = matches!(net.vertex_kind(head), NodeKind::PaxDest { .. });
            if !head_is_od && ht > g.latest_arrival {
                continue;
            }
            if !seen[head as usize] {
                seen[head as usize] = true;
                let n = net.vertex_node(head) as usize;
                if !head_is_od {
                    earliest[n] = earliest[n].min(ht);
                }
                queue.push_back(head);
            }
        }
    }

    // Unreachable destination: the group cannot be routed at all.
    let d_vertex = net.vertex(d_node, 0).unwrap();
    if !seen[d_vertex as usize] {
        return Subnetwork {
            owner: Owner::Group(r),
            arcs: Vec::new(),
            virtual_arcs: Vec::new(),
        };
    }

    let mut arcs = Vec::new();
    for (id, arc) in net.arcs.iter().enumerate() {
        match arc.kind {
            ArcKind::PaxOrigin { group } if group == r => {
                arcs.push(id as ArcId);
            }
            ArcKind::PaxDest { group } if group == r => {
                let t = net.vertex_time(arc.tail);
                let n = net.vertex_node(arc.tail) as usize;
                if t <= g.latest_arrival && t >= earliest[n] {
                    arcs.push(id as ArcId);
                }
            }
            k if k.is_train_travel()
                || matches!(
                    k,
                    ArcKind::TransferWalk { .. }
                        | ArcKind::TransferWait { .. }
                        | ArcKind::Boarding { .. }
                ) =>
            {
                let tn = net.vertex_node(arc.tail) as usize;
                let tt = net.vertex_time(arc.tail);
                let ht = net.vertex_time(arc.head);
                if tt >= earliest[tn] && ht <= g.latest_arrival {
                    arcs.push(id as ArcId);
                }
            }
            _ => {}
        }
    }
    Subnetwork {
        owner: Owner::Group(r),
        arcs,
        virtual_arcs: Vec::new(),
    }
}

/// Builds the incompatible arc sets over the given section arcs. A section
/// arc departing at `t` with pattern P occupies the departure stop node
/// over `[t, t + h_{P,stop} - 1]` and the departure skip node over
/// `[t, t + h_{P,skip} - 1]`; symmetrically on the arrival side.
pub fn build_incompatible_sets<I>(
    net: &TimeSpaceNetwork,
    headways: &Headways,
    section_arcs: I,
) -> IncompatibleSets
where
    I: IntoIterator<Item = ArcId>,
{
    let mut sets: BTreeMap<VertexId, Vec<ArcId>> = BTreeMap::new();
    let grid = net.grid;
    for a in section_arcs {
        let arc = net.arc(a);
        let (dep_stop, arr_stop) = match arc.kind {
            ArcKind::Section { dep_stop, arr_stop, .. } => (dep_stop, arr_stop),
            _ => continue,
        };
        let (dm, dm2, am, am2) = match (net.vertex_kind(arc.tail), net.vertex_kind(arc.head)) {
            (
                NodeKind::DepStop { station: dm, toward: dm2 }
                | NodeKind::DepSkip { station: dm, toward: dm2 },
                NodeKind::ArrStop { station: am, from: am2 }
                | NodeKind::ArrSkip { station: am, from: am2 },
            ) => (dm, dm2, am, am2),
            _ => unreachable!("section arcs connect boundary nodes"),
        };
        let t_dep = net.vertex_time(arc.tail);
        let t_arr = net.vertex_time(arc.head);

        let mut occupy = |node: NodeId, from: Minute, len: Minute| {
            let mut t = from.max(0);
            let rem = t.rem_euclid(grid.step);
            if rem != 0 {
                t += grid.step - rem;
            }
            while t < from + len && t <= grid.end {
                let v = net.vertex(node, t).unwrap();
                sets.entry(v).or_default().push(a);
                t += grid.step;
            }
        };

        let dep_stop_node = net.node_id(NodeKind::DepStop { station: dm, toward: dm2 }).unwrap();
        let dep_skip_node = net.node_id(NodeKind::DepSkip { station: dm, toward: dm2 }).unwrap();
        // Departure side: h_dd/h_dp for a dwell departure, h_pd/h_pp for a
        // passing departure.
        let (h_on_stop, h_on_skip) = if dep_stop {
            (headways.dd, headways.dp)
        } else {
            (headways.pd, headways.pp)
        };
        occupy(dep_stop_node, t_dep, h_on_stop);
        occupy(dep_skip_node, t_dep, h_on_skip);

        let arr_stop_node = net.node_id(NodeKind::ArrStop { station: am, from: am2 }).unwrap();
        let arr_skip_node = net.node_id(NodeKind::ArrSkip { station: am, from: am2 }).unwrap();
        let (h_on_stop, h_on_skip) = if arr_stop {
            (headways.aa, headways.ap)
        } else {
            (headways.pa, headways.pp)
        };
        occupy(arr_stop_node, t_arr, h_on_stop);
        occupy(arr_skip_node, t_arr, h_on_skip);
    }
    for arcs in sets.values_mut() {
        arcs.sort_unstable();
        arcs.dedup();
    }
    IncompatibleSets { by_vertex: sets }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_micro, generate_toy, GenOptions};

    fn toy() -> (Instance, TimeSpaceNetwork) {
        let inst = generate_toy(1, 1.0, &GenOptions::default());
        let net = build_network(&inst).unwrap();
        (inst, net)
    }

    #[test]
    fn stop_stop_section_arcs_take_run_plus_both_penalties() {
        let (inst, net) = toy();
        for arc in &net.arcs {
            if let ArcKind::Section { section, dep_stop: true, arr_stop: true } = arc.kind {
                let sec = inst.section(section);
                assert_eq!(arc.dur, sec.run_min + sec.acc_min + sec.dec_min);
            }
        }
    }

    #[test]
    fn arc_durations_match_vertex_times() {
        let (_, net) = toy();
        for arc in &net.arcs {
            match arc.kind {
                ArcKind::PaxOrigin { .. } | ArcKind::PaxDest { .. } => {}
                _ => {
                    let dt = net.vertex_time(arc.head) - net.vertex_time(arc.tail);
                    assert_eq!(dt, arc.dur, "{:?}", arc.kind);
                }
            }
        }
    }

    #[test]
    fn origin_arc_cost_is_weighted_shift_outside_preferred_window() {
        let (inst, net) = toy();
        let r = 0;
        let g = inst.group(r);
        let w = inst.data.params.weights.shift;
        for (id, arc) in net.arcs.iter().enumerate() {
            match arc.kind {
                ArcKind::PaxOrigin { group } if group == r => {
                    let t = net.vertex_time(arc.head);
                    let expect = if t > g.pref_to {
                        w * (t - g.pref_to) as f64
                    } else if t < g.pref_from {
                        w * (g.pref_from - t) as f64
                    } else {
                        0.0
                    };
                    assert_eq!(net.arc_cost(id as ArcId, g), expect);
                }
                ArcKind::PaxDest { group } if group == r => {
                    assert_eq!(net.arc_cost(id as ArcId, g), 0.0);
                }
                _ => {}
            }
        }
    }

    #[test]
    fn network_is_acyclic() {
        let (_, net) = toy();
        // Kahn's algorithm over all vertices.
        let nv = net.n_vertices();
        let mut indeg = vec![0u32; nv];
        for a in &net.arcs {
            indeg[a.head as usize] += 1;
        }
        let mut queue: Vec<u32> = (0..nv as u32).filter(|&v| indeg[v as usize] == 0).collect();
        let mut visited = 0usize;
        while let Some(v) = queue.pop() {
            visited += 1;
            for &a in net.out_arcs(v) {
                let h = net.arc(a).head as usize;
                indeg[h] -= 1;
                if indeg[h] == 0 {
                    queue.push(h as u32);
                }
            }
        }
        assert_eq!(visited, nv, "time-space network must be a DAG");
    }

    #[test]
    fn zero_deviation_train_subnetwork_is_the_schedule_chain() {
        let (inst, net) = toy();
        assert_eq!(inst.data.params.deviation, 0);
        let subs = build_train_subnetworks(&net, &inst);
        for (k, sub) in subs.iter().enumerate() {
            let route = inst.train_route(k);
            // Two section arcs + one dwell + one source + one sink.
            assert_eq!(route.len(), 3);
            assert_eq!(sub.arcs.len(), 5, "train {k}");
            assert_eq!(sub.virtual_arcs.len(), 2);
            // The chain is connected from the origin inventory vertex.
            let n_sec = sub
                .non_virtual()
                .filter(|&a| matches!(net.arc(a).kind, ArcKind::Section { .. }))
                .count();
            assert_eq!(n_sec, 2);
        }
    }

    #[test]
    fn deviation_window_expands_each_event_to_at_most_five_ticks() {
        let mut opts = GenOptions::default();
        opts.deviation = 4;
        let inst = generate_toy(1, 1.0, &opts);
        let net = build_network(&inst).unwrap();
        let subs = build_train_subnetworks(&net, &inst);
        for (k, sub) in subs.iter().enumerate() {
            // Source arcs = candidate first departures: tau=4, step=2 gives
            // at most 5 ticks, fewer when clipped at the horizon edge.
            let n_src = sub
                .arcs
                .iter()
                .filter(|&&a| matches!(net.arc(a).kind, ArcKind::TrainSource { .. }))
                .count();
            assert!((3..=5).contains(&n_src), "train {k}: {n_src}");
        }
        // A first-period train starting at minute 0 is clipped to 3 ticks.
        let first = &subs[0];
        let n_src = first
            .arcs
            .iter()
            .filter(|&&a| matches!(net.arc(a).kind, ArcKind::TrainSource { .. }))
            .count();
        assert_eq!(n_src, 3);
    }

    #[test]
    fn empty_extra_path_list_gives_empty_subnetwork() {
        let mut opts = GenOptions::default();
        opts.with_extras = false;
        let inst = generate_toy(1, 1.0, &opts);
        let net = build_network(&inst).unwrap();
        let sub = build_extra_subnetwork(&net, &inst);
        assert!(sub.is_empty());
    }

    #[test]
    fn zero_width_window_all_stop_extra_is_a_unique_chain_per_path() {
        let mut opts = GenOptions::default();
        opts.extra_window_halfwidth = 0;
        opts.extra_stop_mode = ExtraStopMode::AllStop;
        let mut data = generate_toy(1, 1.0, &opts).data;
        data.params.extra_paths.truncate(1);
        // With max dwell = min dwell, the all-stop chain is unique.
        for s in &mut data.stations {
            s.dwell_max = s.dwell_min;
        }
        let inst = Instance::from_data(data).unwrap();
        let net = build_network(&inst).unwrap();
        let sub = build_extra_subnetwork(&net, &inst);
        // Path 1-3-6-7: 3 sections + 2 dwells + source + sink = 7 arcs.
        assert_eq!(sub.arcs.len(), 7);
        assert_eq!(sub.virtual_arcs.len(), 2);
    }

    #[test]
    fn extra_subnetwork_matches_window_enumeration() {
        // Brute-force oracle: enumerate every arc of the full network and
        // keep those inside the propagated node windows of the path.
        let mut opts = GenOptions::default();
        opts.extra_window_halfwidth = 2;
        let mut data = generate_toy(1, 1.0, &opts).data;
        data.params.extra_paths.truncate(1);
        let inst = Instance::from_data(data).unwrap();
        let net = build_network(&inst).unwrap();
        let sub = build_extra_subnetwork(&net, &inst);

        let ep = &inst.data.params.extra_paths[0];
        let route: Vec<usize> = ep.route.iter().map(|&id| inst.station_pos(id)).collect();
        let (lo, hi) = ep.windows[0];
        // Node windows, computed independently (same rules, direct arithmetic).
        let mut e = vec![(0, 0); route.len()]; // (arr, dep) earliest
        let mut l = vec![(0, 0); route.len()];
        e[0] = (lo, lo);
        l[0] = (hi, hi);
        for j in 1..route.len() {
            let sec = inst.section(inst.section_between(route[j - 1], route[j]).unwrap());
            let e_dur = sec.run_min
                + if j == 1 { sec.acc_min } else { 0 }
                + if j == route.len() - 1 { sec.dec_min } else { 0 };
            let l_dur = sec.run_min + sec.acc_min + sec.dec_min;
            e[j].0 = e[j - 1].1 + e_dur;
            l[j].0 = l[j - 1].1 + l_dur;
            e[j].1 = e[j].0;
            l[j].1 = l[j].0
                + if j < route.len() - 1 {
                    inst.station(route[j]).dwell_max
                } else {
                    0
                };
        }
        let mut expected = 0usize;
        for (id, arc) in net.arcs.iter().enumerate() {
            let ok = match arc.kind {
                ArcKind::Section { section, dep_stop, arr_stop } => {
                    (0..route.len() - 1).any(|j| {
                        inst.section_between(route[j], route[j + 1]) == Some(section)
                            && (dep_stop || j > 0)
                            && (arr_stop || j + 1 < route.len() - 1)
                            && net.vertex_time(arc.tail) >= e[j].1
                            && net.vertex_time(arc.tail) <= l[j].1
                            && net.vertex_time(arc.head) >= e[j + 1].0
                            && net.vertex_time(arc.head) <= l[j + 1].0
                    })
                }
                ArcKind::Dwell { station } | ArcKind::Passing { station } => {
                    (1..route.len() - 1).any(|j| {
                        route[j] == station
                            && net.vertex_time(arc.tail) >= e[j].0
                            && net.vertex_time(arc.tail) <= l[j].0
                            && net.vertex_time(arc.head) >= e[j].1
                            && net.vertex_time(arc.head) <= l[j].1
                            && match (net.vertex_kind(arc.tail), net.vertex_kind(arc.head)) {
                                (NodeKind::ArrStop { from, .. }, NodeKind::DepStop { toward, .. })
                                | (NodeKind::ArrSkip { from, .. }, NodeKind::DepSkip { toward, .. }) => {
                                    from == route[j - 1] && toward == route[j + 1]
                                }
                                _ => false,
                            }
                    })
                }
                ArcKind::TrainSource { station } => {
                    station == route[0] && {
                        let t = net.vertex_time(arc.tail);
                        t >= lo
                            && t <= hi
                            && matches!(net.vertex_kind(arc.head), NodeKind::DepStop { toward, .. } if toward == route[1])
                    }
                }
                ArcKind::TrainSink { station } => {
                    station == *route.last().unwrap() && {
                        let t = net.vertex_time(arc.tail);
                        let last = route.len() - 1;
                        t >= e[last].0
                            && t <= l[last].0
                            && matches!(net.vertex_kind(arc.tail), NodeKind::ArrStop { from, .. } if from == route[last - 1])
                    }
                }
                _ => false,
            };
            if ok {
                expected += 1;
                assert!(sub.contains(id as ArcId), "missing arc {id} {:?}", arc.kind);
            }
        }
        assert_eq!(sub.arcs.len(), expected);
    }

    #[test]
    fn passenger_subnetwork_matches_bfs_oracle() {
        let inst = generate_micro(11);
        let net = build_network(&inst).unwrap();
        let subs = build_passenger_subnetworks(&net, &inst);
        for r in 0..inst.n_groups() {
            let g = inst.group(r);
            // Independent oracle: reachability over usable arcs, then the
            // same tail/head filter.
            let mut reach = vec![false; net.n_vertices()];
            let o = net
                .vertex(net.node_id(NodeKind::PaxOrigin { group: r }).unwrap(), 0)
                .unwrap();
            reach[o as usize] = true;
            let mut frontier = vec![o];
            while let Some(v) = frontier.pop() {
                for &a in net.out_arcs(v) {
                    let arc = net.arc(a);
                    let usable = match arc.kind {
                        ArcKind::PaxOrigin { group } | ArcKind::PaxDest { group } => group == r,
                        k => k.is_passenger_usable(),
                    };
                    let head_is_dest = matches!(net.vertex_kind(arc.head), NodeKind::PaxDest { .. });
                    if usable
                        && (head_is_dest || net.vertex_time(arc.head) <= g.latest_arrival)
                        && !reach[arc.head as usize]
                    {
                        reach[arc.head as usize] = true;
                        frontier.push(arc.head);
                    }
                }
            }
            let mut earliest = vec![Minute::MAX; net.nodes.len()];
            for v in 0..net.n_vertices() {
                if reach[v] && !matches!(net.vertex_kind(v as VertexId), NodeKind::PaxDest { .. }) {
                    let n = net.vertex_node(v as VertexId) as usize;
                    earliest[n] = earliest[n].min(net.vertex_time(v as VertexId));
                }
            }
            let d = net
                .vertex(net.node_id(NodeKind::PaxDest { group: r }).unwrap(), 0)
                .unwrap();
            let expected: Vec<ArcId> = if !reach[d as usize] {
                Vec::new()
            } else {
                net.arcs
                    .iter()
                    .enumerate()
                    .filter(|(_, arc)| {
                        let pax = match arc.kind {
                            ArcKind::PaxOrigin { group } => return group == r,
                            ArcKind::PaxDest { group } => {
                                return group == r
                                    && net.vertex_time(arc.tail) <= g.latest_arrival
                                    && net.vertex_time(arc.tail)
                                        >= earliest[net.vertex_node(arc.tail) as usize]
                            }
                            k => {
                                k.is_train_travel()
                                    || matches!(
                                        k,
                                        ArcKind::TransferWalk { .. }
                                            | ArcKind::TransferWait { .. }
                                            | ArcKind::Boarding { .. }
                                    )
                            }
                        };
                        pax && net.vertex_time(arc.tail) >= earliest[net.vertex_node(arc.tail) as usize]
                            && net.vertex_time(arc.head) <= g.latest_arrival
                    })
                    .map(|(id, _)| id as ArcId)
                    .collect()
            };
            assert_eq!(subs[r].arcs, expected, "group {r}");
        }
    }

    #[test]
    fn unreachable_group_gets_empty_subnetwork() {
        let mut data = generate_micro(3).data;
        // Make one group's latest arrival so tight that no train arc fits,
        // while still passing the free-flow load check.
        let ff = {
            let inst = Instance::from_data(data.clone()).unwrap();
            let g = inst.group(0);
            inst.free_flow_min(inst.station_pos(g.origin), inst.station_pos(g.destination))
                .unwrap()
        };
        let g = &mut data.groups[0];
        g.allow_from = 0;
        g.allow_to = 0;
        g.pref_from = 0;
        g.pref_to = 0;
        g.latest_arrival = ff; // free-flow feasible, train-network infeasible
        let inst = Instance::from_data(data).unwrap();
        let net = build_network(&inst).unwrap();
        let subs = build_passenger_subnetworks(&net, &inst);
        assert!(subs[0].is_empty());
    }

    #[test]
    fn incompatible_sets_follow_headway_windows() {
        let (inst, net) = toy();
        let h = inst.data.params.headways;
        assert_eq!(h.pp, 4);
        let all_sections: Vec<ArcId> = net
            .arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| matches!(a.kind, ArcKind::Section { .. }))
            .map(|(i, _)| i as ArcId)
            .collect();
        let sets = build_incompatible_sets(&net, &h, all_sections.iter().copied());
        // A skip departure at minute t occupies the skip node at t and t+2
        // (grid ticks t and t+1) because h_pp = 4 spans [t, t+3].
        let a = all_sections
            .iter()
            .copied()
            .find(|&a| {
                matches!(net.arc(a).kind, ArcKind::Section { dep_stop: false, .. })
                    && net.vertex_time(net.arc(a).tail) == 10
            })
            .unwrap();
        let dep_skip = net.vertex_node(net.arc(a).tail);
        let mut member_ticks = Vec::new();
        for t in net.grid.iter() {
            if let Some(v) = net.vertex(dep_skip, t) {
                if sets.by_vertex.get(&v).is_some_and(|s| s.contains(&a)) {
                    member_ticks.push(t);
                }
            }
        }
        assert_eq!(member_ticks, vec![10, 12]);
    }

    #[test]
    fn unit_headway_sets_are_singleton_occupations() {
        let (inst, net) = toy();
        let h = Headways {
            dd: 2,
            dp: 2,
            pd: 2,
            pp: 2,
            aa: 2,
            ap: 2,
            pa: 2,
        };
        assert_eq!(inst.data.params.step, 2);
        let all_sections: Vec<ArcId> = net
            .arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| matches!(a.kind, ArcKind::Section { .. }))
            .map(|(i, _)| i as ArcId)
            .collect();
        let sets = build_incompatible_sets(&net, &h, all_sections.iter().copied());
        // With h equal to one step, every arc occupies exactly one vertex
        // per side node (4 memberships total).
        let mut membership: HashMap<ArcId, usize> = HashMap::new();
        for arcs in sets.by_vertex.values() {
            for &a in arcs {
                *membership.entry(a).or_default() += 1;
            }
        }
        for &a in &all_sections {
            assert_eq!(membership[&a], 4, "arc {a}");
        }
    }

    #[test]
    fn close_stop_departures_share_a_set() {
        let (inst, net) = toy();
        let h = inst.data.params.headways;
        // Two synthetic stop-departures 2 minutes apart on the same section
        // must fall into a common incompatible set under h_dd = 4.
        let mut picked = Vec::new();
        for (id, arc) in net.arcs.iter().enumerate() {
            if let ArcKind::Section { section: 0, dep_stop: true, arr_stop: true } = arc.kind {
                let t = net.vertex_time(arc.tail);
                if t == 10 || t == 12 {
                    picked.push(id as ArcId);
                }
            }
        }
        assert_eq!(picked.len(), 2);
        let sets = build_incompatible_sets(&net, &h, picked.iter().copied());
        assert!(
            sets.by_vertex
                .values()
                .any(|s| s.contains(&picked[0]) && s.contains(&picked[1])),
            "overlapping departures must share a vertex set"
        );
    }

    #[test]
    fn pairwise_headway_conflicts_are_covered_by_some_set() {
        // Exhaustive micro check: any two section arcs on the same directed
        // section whose boundary occupations overlap per the seven headway
        // constants must share at least one incompatible set.
        let inst = generate_micro(5);
        let net = build_network(&inst).unwrap();
        let h = inst.data.params.headways;
        let sections: Vec<ArcId> = net
            .arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| matches!(a.kind, ArcKind::Section { section: 0, .. }))
            .map(|(i, _)| i as ArcId)
            .collect();
        let sets = build_incompatible_sets(&net, &h, sections.iter().copied());
        let occupied = |stop: bool, on_stop_node: bool, dep_side: bool| -> Minute {
            match (dep_side, stop, on_stop_node) {
                (true, true, true) => h.dd,
                (true, true, false) => h.dp,
                (true, false, true) => h.pd,
                (true, false, false) => h.pp,
                (false, true, true) => h.aa,
                (false, true, false) => h.ap,
                (false, false, true) => h.pa,
                (false, false, false) => h.pp,
            }
        };
        for (i, &a) in sections.iter().enumerate() {
            for &b in sections.iter().skip(i + 1) {
                let (sa, sb) = (net.arc(a), net.arc(b));
                let (da, aa_) = match sa.kind {
                    ArcKind::Section { dep_stop, arr_stop, .. } => (dep_stop, arr_stop),
                    _ => unreachable!(),
                };
                let (db, ab) = match sb.kind {
                    ArcKind::Section { dep_stop, arr_stop, .. } => (dep_stop, arr_stop),
                    _ => unreachable!(),
                };
                let overlap = |t1: Minute, l1: Minute, t2: Minute, l2: Minute| {
                    let (lo, hi) = (t1.max(t2), (t1 + l1 - 1).min(t2 + l2 - 1));
                    // Intersection must contain a grid point.
                    lo <= hi && (lo..=hi).any(|t| t % net.grid.step == 0)
                };
                let t1 = net.vertex_time(sa.tail);
                let t2 = net.vertex_time(sb.tail);
                let u1 = net.vertex_time(sa.head);
                let u2 = net.vertex_time(sb.head);
                let conflict =
                    overlap(t1, occupied(da, true, true), t2, occupied(db, true, true))
                        || overlap(t1, occupied(da, false, true), t2, occupied(db, false, true))
                        || overlap(u1, occupied(aa_, true, false), u2, occupied(ab, true, false))
                        || overlap(u1, occupied(aa_, false, false), u2, occupied(ab, false, false));
                let shared = sets
                    .by_vertex
                    .values()
                    .any(|s| s.contains(&a) && s.contains(&b));
                if conflict {
                    assert!(shared, "conflicting arcs {a} {b} share no set");
                }
            }
        }
    }
}
