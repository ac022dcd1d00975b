//! Problem data model: railway network, lines, original trains, rolling
//! stock, passenger groups and global parameters, together with JSON
//! ingestion, validation and seeded instance generators.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Minute;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("validation error: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> InstanceError {
    InstanceError::Validation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: u32,
    #[serde(default)]
    pub name: String,
    pub is_terminal: bool,
    /// Minimum passenger transfer walking time at this station (minutes).
    pub transfer_walk_min: Minute,
    pub dwell_min: Minute,
    pub dwell_max: Minute,
}

/// One directed track section between adjacent stations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub from: u32,
    pub to: u32,
    pub length_km: f64,
    /// Minimum running time with no stop at either end (minutes).
    pub run_min: Minute,
    /// Additional running time when the train stops at the departure end.
    pub acc_min: Minute,
    /// Additional running time when the train stops at the arrival end.
    pub dec_min: Minute,
}

/// The seven minimum headway times, keyed by the stop patterns of the two
/// adjacent trains ("d"/"a" = departure/arrival after or before a dwell,
/// "p" = passing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Headways {
    pub dd: Minute,
    pub dp: Minute,
    pub pd: Minute,
    pub pp: Minute,
    pub aa: Minute,
    pub ap: Minute,
    pub pa: Minute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: u32,
    /// Ordered station ids from origin terminal to destination terminal.
    pub route: Vec<u32>,
    /// Stop (true) or skip (false) per route station; endpoints must stop.
    pub stops: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopTime {
    pub arr: Minute,
    pub dep: Minute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Train {
    pub id: u32,
    pub line: u32,
    /// Arrival/departure minutes per route station of the line. At the
    /// origin `arr == dep`, at the destination `dep == arr`, and at
    /// skipped stations the two coincide (instantaneous passing).
    pub schedule: Vec<StopTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsuType {
    pub id: u32,
    pub seats: u32,
    /// Initial unit count per terminal station id.
    pub initial: BTreeMap<u32, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub id: u32,
    pub origin: u32,
    pub destination: u32,
    pub size: u32,
    /// Allowable departure window (inclusive minutes).
    pub allow_from: Minute,
    pub allow_to: Minute,
    /// Preferred departure window, inside the allowable one.
    pub pref_from: Minute,
    pub pref_to: Minute,
    pub latest_arrival: Minute,
    /// Penalty per passenger that is not transported.
    pub penalty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub shift: f64,
    pub wait: f64,
    pub in_vehicle: f64,
    pub transfer: f64,
    /// Maximum number of transfers in a passenger route.
    pub max_transfers: u32,
}

/// Stop policy for extra (aperiodic) trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtraStopMode {
    /// Extra trains stop at every station of their path.
    AllStop,
    /// Extra trains may skip intermediate stations.
    StopSkip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraPath {
    pub route: Vec<u32>,
    /// Departure windows (inclusive minutes) at the path origin.
    pub windows: Vec<(Minute, Minute)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Time discretization step in minutes; every timetable event lies on
    /// the grid {0, step, ..., horizon_end}.
    pub step: Minute,
    pub horizon_end: Minute,
    /// Cycle time of the periodic timetable (minutes).
    pub cycle: Minute,
    pub periods: u32,
    /// Operating budget in seat-kilometers.
    pub budget_seat_km: f64,
    /// Minimum fraction of trains that must be operated per line.
    pub periodicity: f64,
    /// Allowed deviation of original train event times (minutes).
    pub deviation: Minute,
    /// Minimum turnaround time of a rolling-stock unit (minutes).
    pub rsu_transition: Minute,
    pub headways: Headways,
    pub weights: CostWeights,
    #[serde(default)]
    pub extra_paths: Vec<ExtraPath>,
    pub extra_stop_mode: ExtraStopMode,
}

/// The raw, serializable instance contents. `Instance` wraps this with
/// derived lookup tables after validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceData {
    pub stations: Vec<Station>,
    pub sections: Vec<Section>,
    pub lines: Vec<Line>,
    pub trains: Vec<Train>,
    pub rsu_types: Vec<RsuType>,
    pub groups: Vec<Group>,
    pub params: Params,
}

/// A validated problem instance. Immutable after construction and safe to
/// share across worker threads.
#[derive(Debug, Clone)]
pub struct Instance {
    pub data: InstanceData,
    station_pos: HashMap<u32, usize>,
    section_pos: HashMap<(u32, u32), usize>,
    line_pos: HashMap<u32, usize>,
    train_pos: HashMap<u32, usize>,
    group_pos: HashMap<u32, usize>,
    /// Adjacent station positions per station position, ascending.
    adjacency: Vec<Vec<usize>>,
    /// Train positions per line position.
    line_trains: Vec<Vec<usize>>,
    /// Route distance per train position (sum of section lengths).
    train_km: Vec<f64>,
    terminals: Vec<usize>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

/// The discretized planning horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    pub step: Minute,
    pub end: Minute,
    /// End of the inventory horizon (`end + rsu_transition`).
    pub inv_end: Minute,
}

impl TimeGrid {
    pub fn contains(&self, t: Minute) -> bool {
        t >= 0 && t <= self.end && t % self.step == 0
    }

    pub fn inv_contains(&self, t: Minute) -> bool {
        t >= 0 && t <= self.inv_end && t % self.step == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Minute> {
        let step = self.step;
        (0..=self.end / step).map(move |i| i * step)
    }

    pub fn iter_inv(&self) -> impl Iterator<Item = Minute> {
        let step = self.step;
        (0..=self.inv_end / step).map(move |i| i * step)
    }

    /// Number of grid points in the timetable horizon.
    pub fn len(&self) -> usize {
        (self.end / self.step + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of a grid point, for dense vertex numbering.
    pub fn index_of(&self, t: Minute) -> usize {
        debug_assert!(self.inv_contains(t));
        (t / self.step) as usize
    }
}

impl Instance {
    pub fn load(path: impl AsRef<Path>) -> Result<Instance, InstanceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Instance, InstanceError> {
        let data: InstanceData = serde_json::from_str(text)?;
        Self::from_data(data)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.data).expect("instance serialization cannot fail")
    }

    pub fn from_data(data: InstanceData) -> Result<Instance, InstanceError> {
        let mut inst = Instance {
            station_pos: HashMap::new(),
            section_pos: HashMap::new(),
            line_pos: HashMap::new(),
            train_pos: HashMap::new(),
            group_pos: HashMap::new(),
            adjacency: Vec::new(),
            line_trains: Vec::new(),
            train_km: Vec::new(),
            terminals: Vec::new(),
            data,
        };
        inst.index_and_validate()?;
        Ok(inst)
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            step: self.data.params.step,
            end: self.data.params.horizon_end,
            inv_end: self.data.params.horizon_end + self.data.params.rsu_transition,
        }
    }

    pub fn n_stations(&self) -> usize {
        self.data.stations.len()
    }

    pub fn n_trains(&self) -> usize {
        self.data.trains.len()
    }

    pub fn n_groups(&self) -> usize {
        self.data.groups.len()
    }

    pub fn station(&self, pos: usize) -> &Station {
        &self.data.stations[pos]
    }

    pub fn station_pos(&self, id: u32) -> usize {
        self.station_pos[&id]
    }

    pub fn section(&self, pos: usize) -> &Section {
        &self.data.sections[pos]
    }

    /// Section position for a directed station pair, by position.
    pub fn section_between(&self, from_pos: usize, to_pos: usize) -> Option<usize> {
        let from = self.data.stations[from_pos].id;
        let to = self.data.stations[to_pos].id;
        self.section_pos.get(&(from, to)).copied()
    }

    pub fn adjacent(&self, station_pos: usize) -> &[usize] {
        &self.adjacency[station_pos]
    }

    pub fn terminals(&self) -> &[usize] {
        &self.terminals
    }

    pub fn line(&self, pos: usize) -> &Line {
        &self.data.lines[pos]
    }

    pub fn line_pos(&self, id: u32) -> usize {
        self.line_pos[&id]
    }

    /// Trains of a line, by position.
    pub fn trains_of_line(&self, line_pos: usize) -> &[usize] {
        &self.line_trains[line_pos]
    }

    pub fn train(&self, pos: usize) -> &Train {
        &self.data.trains[pos]
    }

    pub fn train_pos(&self, id: u32) -> usize {
        self.train_pos[&id]
    }

    /// Line position of a train, by train position.
    pub fn train_line(&self, train_pos: usize) -> usize {
        self.line_pos[&self.data.trains[train_pos].line]
    }

    /// Route stations (positions) traversed by a train.
    pub fn train_route(&self, train_pos: usize) -> Vec<usize> {
        let line = &self.data.lines[self.train_line(train_pos)];
        line.route.iter().map(|id| self.station_pos[id]).collect()
    }

    /// Stop flags along a train's route.
    pub fn train_stops(&self, train_pos: usize) -> &[bool] {
        &self.data.lines[self.train_line(train_pos)].stops
    }

    /// Route distance of a train in kilometers.
    pub fn train_km(&self, train_pos: usize) -> f64 {
        self.train_km[train_pos]
    }

    pub fn group(&self, pos: usize) -> &Group {
        &self.data.groups[pos]
    }

    pub fn group_pos(&self, id: u32) -> usize {
        self.group_pos[&id]
    }

    pub fn rsu(&self, pos: usize) -> &RsuType {
        &self.data.rsu_types[pos]
    }

    pub fn n_rsu_types(&self) -> usize {
        self.data.rsu_types.len()
    }

    /// Total fleet size of an RSU type.
    pub fn fleet_size(&self, rsu_pos: usize) -> u32 {
        self.data.rsu_types[rsu_pos].initial.values().sum()
    }

    /// Free-flow travel time between two stations: shortest path over the
    /// section graph using bare running times. `None` if disconnected.
    pub fn free_flow_min(&self, from_pos: usize, to_pos: usize) -> Option<Minute> {
        // Dijkstra over at most a few dozen stations; no need for a heap.
        let n = self.n_stations();
        let mut dist = vec![Minute::MAX; n];
        let mut done = vec![false; n];
        dist[from_pos] = 0;
        for _ in 0..n {
            let u = (0..n)
                .filter(|&i| !done[i] && dist[i] < Minute::MAX)
                .min_by_key(|&i| dist[i])?;
            if u == to_pos {
                return Some(dist[u]);
            }
            done[u] = true;
            for &v in &self.adjacency[u] {
                if let Some(sec) = self.section_between(u, v) {
                    let cand = dist[u] + self.data.sections[sec].run_min;
                    if cand < dist[v] {
                        dist[v] = cand;
                    }
                }
            }
        }
        None
    }

    fn index_and_validate(&mut self) -> Result<(), InstanceError> {
        let d = &self.data;
        if d.stations.is_empty() {
            return Err(invalid("station list is empty"));
        }
        let p = &d.params;
        if p.step < 1 {
            return Err(invalid("params.step must be at least 1 minute"));
        }
        for (what, v) in [
            ("horizon_end", p.horizon_end),
            ("cycle", p.cycle),
            ("rsu_transition", p.rsu_transition),
        ] {
            if v <= 0 || v % p.step != 0 {
                return Err(invalid(format!(
                    "params.{what} = {v} must be a positive multiple of step {}",
                    p.step
                )));
            }
        }
        if p.deviation < 0 {
            return Err(invalid("params.deviation must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&p.periodicity) {
            return Err(invalid("params.periodicity must lie in [0, 1]"));
        }
        if p.budget_seat_km < 0.0 {
            return Err(invalid("params.budget_seat_km must be nonnegative"));
        }
        let h = p.headways;
        for (name, v) in [
            ("dd", h.dd),
            ("dp", h.dp),
            ("pd", h.pd),
            ("pp", h.pp),
            ("aa", h.aa),
            ("ap", h.ap),
            ("pa", h.pa),
        ] {
            if v < p.step {
                return Err(invalid(format!(
                    "headway {name} = {v} is below one time step ({})",
                    p.step
                )));
            }
        }
        let w = p.weights;
        if w.shift < 0.0 || w.wait < 0.0 || w.in_vehicle < 0.0 || w.transfer < 0.0 {
            return Err(invalid("cost weights must be nonnegative"));
        }

        // Stations.
        for (i, s) in d.stations.iter().enumerate() {
            if self.station_pos.insert(s.id, i).is_some() {
                return Err(invalid(format!("duplicate station id {}", s.id)));
            }
            if s.dwell_min <= 0 || s.dwell_min > s.dwell_max {
                return Err(invalid(format!(
                    "station {}: dwell bounds must satisfy 0 < dwell_min <= dwell_max",
                    s.id
                )));
            }
            if s.transfer_walk_min < 0 || s.transfer_walk_min % p.step != 0 {
                return Err(invalid(format!(
                    "station {}: transfer_walk_min must be a nonnegative multiple of step",
                    s.id
                )));
            }
        }
        self.terminals = d
            .stations
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_terminal)
            .map(|(i, _)| i)
            .collect();
        if self.terminals.is_empty() {
            return Err(invalid("at least one terminal station is required"));
        }

        // Sections and adjacency.
        self.adjacency = vec![Vec::new(); d.stations.len()];
        for (i, sec) in d.sections.iter().enumerate() {
            let from = *self
                .station_pos
                .get(&sec.from)
                .ok_or_else(|| invalid(format!("section references unknown station {}", sec.from)))?;
            let to = *self
                .station_pos
                .get(&sec.to)
                .ok_or_else(|| invalid(format!("section references unknown station {}", sec.to)))?;
            if from == to {
                return Err(invalid(format!("section ({}, {}) is a self-loop", sec.from, sec.to)));
            }
            if self.section_pos.insert((sec.from, sec.to), i).is_some() {
                return Err(invalid(format!(
                    "duplicate section ({}, {})",
                    sec.from, sec.to
                )));
            }
            if sec.run_min <= 0 {
                return Err(invalid(format!(
                    "section ({}, {}): run_min must be positive",
                    sec.from, sec.to
                )));
            }
            if sec.acc_min < 0 || sec.dec_min < 0 {
                return Err(invalid(format!(
                    "section ({}, {}): stop penalties must be nonnegative",
                    sec.from, sec.to
                )));
            }
            for (what, v) in [
                ("run_min", sec.run_min),
                ("acc_min", sec.acc_min),
                ("dec_min", sec.dec_min),
            ] {
                if v % p.step != 0 {
                    return Err(invalid(format!(
                        "section ({}, {}): {what} must be a multiple of step",
                        sec.from, sec.to
                    )));
                }
            }
            if sec.length_km < 0.0 {
                return Err(invalid(format!(
                    "section ({}, {}): length_km must be nonnegative",
                    sec.from, sec.to
                )));
            }
            self.adjacency[from].push(to);
        }
        for adj in &mut self.adjacency {
            adj.sort_unstable();
        }
        // Both directed sections must exist per adjacent pair.
        for sec in &d.sections {
            if !self.section_pos.contains_key(&(sec.to, sec.from)) {
                return Err(invalid(format!(
                    "section ({}, {}) has no reverse direction ({}, {})",
                    sec.from, sec.to, sec.to, sec.from
                )));
            }
        }

        // Lines.
        for (i, line) in d.lines.iter().enumerate() {
            if self.line_pos.insert(line.id, i).is_some() {
                return Err(invalid(format!("duplicate line id {}", line.id)));
            }
            if line.route.len() < 2 {
                return Err(invalid(format!("line {}: route needs >= 2 stations", line.id)));
            }
            if line.stops.len() != line.route.len() {
                return Err(invalid(format!(
                    "line {}: stops length must match route length",
                    line.id
                )));
            }
            if !line.stops[0] || !line.stops[line.stops.len() - 1] {
                return Err(invalid(format!(
                    "line {}: trains must stop at both route endpoints",
                    line.id
                )));
            }
            for (j, id) in line.route.iter().enumerate() {
                let pos = *self
                    .station_pos
                    .get(id)
                    .ok_or_else(|| invalid(format!("line {}: unknown station {id}", line.id)))?;
                if (j == 0 || j == line.route.len() - 1)
                    && !d.stations[pos].is_terminal {
                        return Err(invalid(format!(
                            "line {}: route endpoint {id} is not a terminal station",
                            line.id
                        )));
                    }
                if j > 0 && !self.section_pos.contains_key(&(line.route[j - 1], *id)) {
                    return Err(invalid(format!(
                        "line {}: no section between consecutive stations {} and {id}",
                        line.id,
                        line.route[j - 1]
                    )));
                }
            }
            if line.route[0] == line.route[line.route.len() - 1] {
                return Err(invalid(format!(
                    "line {}: origin and destination terminals must differ",
                    line.id
                )));
            }
        }

        // Trains.
        self.line_trains = vec![Vec::new(); d.lines.len()];
        for (i, train) in d.trains.iter().enumerate() {
            if self.train_pos.insert(train.id, i).is_some() {
                return Err(invalid(format!("duplicate train id {}", train.id)));
            }
            let line_pos = *self
                .line_pos
                .get(&train.line)
                .ok_or_else(|| invalid(format!("train {}: unknown line {}", train.id, train.line)))?;
            self.line_trains[line_pos].push(i);
            let line = &d.lines[line_pos];
            if train.schedule.len() != line.route.len() {
                return Err(invalid(format!(
                    "train {}: schedule length must match line route length",
                    train.id
                )));
            }
            self.validate_schedule(train, line)?;
        }
        for (line, trains) in d.lines.iter().zip(&self.line_trains) {
            if trains.is_empty() {
                return Err(invalid(format!("line {} has no trains", line.id)));
            }
        }
        self.train_km = (0..d.trains.len())
            .map(|t| {
                let route = self.train_route(t);
                route
                    .windows(2)
                    .map(|w| self.data.sections[self.section_between(w[0], w[1]).unwrap()].length_km)
                    .sum()
            })
            .collect();

        // Rolling stock.
        if d.rsu_types.is_empty() {
            return Err(invalid("at least one RSU type is required"));
        }
        let mut rsu_ids = HashSet::new();
        for rsu in &d.rsu_types {
            if !rsu_ids.insert(rsu.id) {
                return Err(invalid(format!("duplicate RSU type id {}", rsu.id)));
            }
            if rsu.seats == 0 {
                return Err(invalid(format!("RSU type {}: seats must be positive", rsu.id)));
            }
            for station_id in rsu.initial.keys() {
                let pos = *self.station_pos.get(station_id).ok_or_else(|| {
                    invalid(format!("RSU type {}: unknown station {station_id}", rsu.id))
                })?;
                if !d.stations[pos].is_terminal {
                    return Err(invalid(format!(
                        "RSU type {}: initial inventory at non-terminal station {station_id}",
                        rsu.id
                    )));
                }
            }
        }

        // Passenger groups.
        for (i, g) in d.groups.iter().enumerate() {
            if self.group_pos.insert(g.id, i).is_some() {
                return Err(invalid(format!("duplicate group id {}", g.id)));
            }
            let org = *self
                .station_pos
                .get(&g.origin)
                .ok_or_else(|| invalid(format!("group {}: unknown origin {}", g.id, g.origin)))?;
            let des = *self.station_pos.get(&g.destination).ok_or_else(|| {
                invalid(format!("group {}: unknown destination {}", g.id, g.destination))
            })?;
            if org == des {
                return Err(invalid(format!("group {}: origin equals destination", g.id)));
            }
            if g.size == 0 {
                return Err(invalid(format!("group {}: size must be positive", g.id)));
            }
            if g.penalty < 0.0 {
                return Err(invalid(format!("group {}: penalty must be nonnegative", g.id)));
            }
            if g.allow_from > g.allow_to || g.pref_from > g.pref_to {
                return Err(invalid(format!("group {}: empty time window", g.id)));
            }
            if g.pref_from < g.allow_from || g.pref_to > g.allow_to {
                return Err(invalid(format!(
                    "group {}: preferred window must lie inside the allowable window",
                    g.id
                )));
            }
            if g.latest_arrival <= g.allow_to {
                return Err(invalid(format!(
                    "group {}: latest_arrival must exceed the allowable window end",
                    g.id
                )));
            }
            match self.free_flow_min(org, des) {
                Some(ff) if g.allow_from + ff <= g.latest_arrival => {}
                Some(_) => {
                    return Err(invalid(format!(
                        "group {}: unroutable, free-flow arrival exceeds latest_arrival",
                        g.id
                    )))
                }
                None => {
                    return Err(invalid(format!(
                        "group {}: unroutable, no section path from {} to {}",
                        g.id, g.origin, g.destination
                    )))
                }
            }
        }

        // Extra train paths.
        for (i, ep) in d.params.extra_paths.iter().enumerate() {
            if ep.route.len() < 2 {
                return Err(invalid(format!("extra path {i}: route needs >= 2 stations")));
            }
            for (j, id) in ep.route.iter().enumerate() {
                let pos = *self
                    .station_pos
                    .get(id)
                    .ok_or_else(|| invalid(format!("extra path {i}: unknown station {id}")))?;
                if (j == 0 || j == ep.route.len() - 1) && !d.stations[pos].is_terminal {
                    return Err(invalid(format!(
                        "extra path {i}: endpoint {id} is not a terminal station"
                    )));
                }
                if j > 0 && !self.section_pos.contains_key(&(ep.route[j - 1], *id)) {
                    return Err(invalid(format!(
                        "extra path {i}: no section between {} and {id}",
                        ep.route[j - 1]
                    )));
                }
            }
            if ep.route[0] == ep.route[ep.route.len() - 1] {
                return Err(invalid(format!("extra path {i}: endpoints must differ")));
            }
            if ep.windows.is_empty() {
                return Err(invalid(format!("extra path {i}: needs at least one window")));
            }
            for &(lo, hi) in &ep.windows {
                if lo > hi || lo < 0 || hi > d.params.horizon_end {
                    return Err(invalid(format!(
                        "extra path {i}: window ({lo}, {hi}) outside horizon"
                    )));
                }
            }
        }
        Ok(())
    }

    fn validate_schedule(&self, train: &Train, line: &Line) -> Result<(), InstanceError> {
        let d = &self.data;
        let grid = TimeGrid {
            step: d.params.step,
            end: d.params.horizon_end,
            inv_end: d.params.horizon_end + d.params.rsu_transition,
        };
        let n = line.route.len();
        for (j, st) in train.schedule.iter().enumerate() {
            if !grid.contains(st.arr) || !grid.contains(st.dep) {
                return Err(invalid(format!(
                    "train {}: event off the time grid at route index {j}",
                    train.id
                )));
            }
            if st.arr > st.dep {
                return Err(invalid(format!(
                    "train {}: arrival after departure at route index {j}",
                    train.id
                )));
            }
            let station = &d.stations[self.station_pos[&line.route[j]]];
            let interior = j > 0 && j + 1 < n;
            if interior {
                if line.stops[j] {
                    let dwell = st.dep - st.arr;
                    if dwell < station.dwell_min || dwell > station.dwell_max {
                        return Err(invalid(format!(
                            "train {}: dwell {dwell} outside [{}, {}] at station {}",
                            train.id, station.dwell_min, station.dwell_max, station.id
                        )));
                    }
                } else if st.arr != st.dep {
                    return Err(invalid(format!(
                        "train {}: nonzero passing time at skipped station {}",
                        train.id, station.id
                    )));
                }
            } else if st.arr != st.dep {
                // Endpoint events are single timestamps.
                return Err(invalid(format!(
                    "train {}: endpoint event must have arr == dep (route index {j})",
                    train.id
                )));
            }
            if j > 0 {
                let prev = &train.schedule[j - 1];
                let sec_pos = self.section_pos[&(line.route[j - 1], line.route[j])];
                let sec = &d.sections[sec_pos];
                let mut dur = sec.run_min;
                if line.stops[j - 1] {
                    dur += sec.acc_min;
                }
                if line.stops[j] {
                    dur += sec.dec_min;
                }
                if st.arr - prev.dep != dur {
                    return Err(invalid(format!(
                        "train {}: section ({}, {}) takes {} but schedule allots {}",
                        train.id,
                        line.route[j - 1],
                        line.route[j],
                        dur,
                        st.arr - prev.dep
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Replicates a one-period timetable over `periods` cycles, shifting every
/// event by whole cycle lengths. Copy `k` of train `id` gets id
/// `id + k * stride` where `stride` is one more than the largest input id.
pub fn expand_periodic(
    trains: &[Train],
    periods: u32,
    cycle: Minute,
    horizon_end: Minute,
) -> Result<Vec<Train>, InstanceError> {
    for t in trains {
        for st in &t.schedule {
            if st.arr < 0 || st.dep > cycle {
                return Err(invalid(format!(
                    "train {}: one-period event outside [0, cycle]",
                    t.id
                )));
            }
        }
    }
    let stride = trains.iter().map(|t| t.id).max().unwrap_or(0) + 1;
    let mut out = Vec::with_capacity(trains.len() * periods as usize);
    for k in 0..periods {
        let shift = k as Minute * cycle;
        for t in trains {
            let schedule: Vec<StopTime> = t
                .schedule
                .iter()
                .map(|st| StopTime {
                    arr: st.arr + shift,
                    dep: st.dep + shift,
                })
                .collect();
            if let Some(last) = schedule.last() {
                if last.dep > horizon_end {
                    return Err(invalid(format!(
                        "train {} period {k}: shifted event {} exceeds horizon {horizon_end}",
                        t.id, last.dep
                    )));
                }
            }
            out.push(Train {
                id: t.id + k * stride,
                line: t.line,
                schedule,
            });
        }
    }
    Ok(out)
}

/// Options steering the seeded generators. Defaults mirror the small
/// reference case; individual fields can be overridden before generating.
#[derive(Debug, Clone)]
pub struct GenOptions {
    pub periodicity: f64,
    pub deviation: Minute,
    pub budget_seat_km: f64,
    pub max_transfers: u32,
    pub with_extras: bool,
    pub extra_window_halfwidth: Minute,
    pub extra_stop_mode: ExtraStopMode,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            periodicity: 1.0,
            deviation: 0,
            budget_seat_km: 400_000.0,
            max_transfers: 2,
            with_extras: true,
            extra_window_halfwidth: 6,
            extra_stop_mode: ExtraStopMode::StopSkip,
        }
    }
}

/// Builds the small 8-station reference instance: two interchange hubs,
/// six terminals, a 20-minute cycle replicated over four periods, a
/// 2-minute grid, skip-departure headway of 2 minutes (all others 4),
/// 50 km sections and 168 time-dependent passenger groups (56 OD pairs
/// over the first three periods). Demand volumes are sampled from `seed`
/// and multiplied by `scale`; the second period is the peak with doubled
/// volumes.
pub fn generate_toy(seed: u64, scale: f64, opts: &GenOptions) -> Instance {
    assert!(scale >= 1.0, "scale must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 2;
    let cycle = 20;
    let periods = 4u32;
    let horizon_end = cycle * periods as Minute;

    let terminals = [1u32, 2, 4, 5, 7, 8];
    let stations: Vec<Station> = (1..=8)
        .map(|id| Station {
            id,
            name: format!("S{id}"),
            is_terminal: terminals.contains(&id),
            transfer_walk_min: 4,
            dwell_min: 2,
            dwell_max: 4,
        })
        .collect();

    let undirected = [(1u32, 3u32), (2, 3), (4, 3), (3, 6), (5, 6), (7, 6), (8, 6)];
    let mut sections = Vec::new();
    for &(a, b) in &undirected {
        for (from, to) in [(a, b), (b, a)] {
            sections.push(Section {
                from,
                to,
                length_km: 50.0,
                run_min: 2,
                acc_min: 2,
                dec_min: 2,
            });
        }
    }

    // Eight directional lines, two per terminal pairing, staggered so that
    // shared boundary nodes see 4-minute spacing.
    let line_defs: [(u32, [u32; 3], Minute); 8] = [
        (1, [1, 3, 4], 0),
        (2, [4, 3, 1], 0),
        (3, [2, 3, 4], 4),
        (4, [4, 3, 2], 4),
        (5, [5, 6, 7], 0),
        (6, [7, 6, 5], 0),
        (7, [8, 6, 7], 4),
        (8, [7, 6, 8], 4),
    ];
    let mut lines = Vec::new();
    let mut period0 = Vec::new();
    for &(id, route, dep0) in &line_defs {
        lines.push(Line {
            id,
            route: route.to_vec(),
            stops: vec![true, true, true],
        });
        // run 2 + acc 2 + dec 2 per section, dwell 2 at the hub.
        let arr1 = dep0 + 6;
        let dep1 = arr1 + 2;
        let arr2 = dep1 + 6;
        period0.push(Train {
            id,
            line: id,
            schedule: vec![
                StopTime { arr: dep0, dep: dep0 },
                StopTime { arr: arr1, dep: dep1 },
                StopTime { arr: arr2, dep: arr2 },
            ],
        });
    }
    let trains = expand_periodic(&period0, periods, cycle, horizon_end).unwrap();

    let rsu_types = vec![
        RsuType {
            id: 0,
            seats: 100,
            initial: terminals.iter().map(|&m| (m, 2)).collect(),
        },
        RsuType {
            id: 1,
            seats: 150,
            initial: terminals.iter().map(|&m| (m, 1)).collect(),
        },
    ];

    let mut groups = Vec::new();
    let mut gid = 0;
    for period in 0..3i64 {
        for org in 1..=8u32 {
            for des in 1..=8u32 {
                if org == des {
                    continue;
                }
                let pref_from = period * cycle;
                let pref_to = pref_from + cycle;
                let allow_from = (pref_from - cycle / 2).max(0);
                let allow_to = (pref_to + cycle / 2).min(horizon_end - cycle);
                let latest_arrival = (pref_to + 50).min(horizon_end);
                let base: u32 = rng.gen_range(5..=30);
                let peak = if period == 1 { 2 } else { 1 };
                groups.push(Group {
                    id: gid,
                    origin: org,
                    destination: des,
                    size: ((base * peak) as f64 * scale).round() as u32,
                    allow_from,
                    allow_to,
                    pref_from,
                    pref_to,
                    latest_arrival,
                    penalty: 200.0,
                });
                gid += 1;
            }
        }
    }

    let extra_paths = if opts.with_extras {
        let center = cycle + cycle / 2; // middle of the peak (second) period
        let w = opts.extra_window_halfwidth;
        vec![
            ExtraPath {
                route: vec![1, 3, 6, 7],
                windows: vec![(center - w, center + w)],
            },
            ExtraPath {
                route: vec![7, 6, 3, 1],
                windows: vec![(center - w, center + w)],
            },
        ]
    } else {
        Vec::new()
    };

    let data = InstanceData {
        stations,
        sections,
        lines,
        trains,
        rsu_types,
        groups,
        params: Params {
            step,
            horizon_end,
            cycle,
            periods,
            budget_seat_km: opts.budget_seat_km,
            periodicity: opts.periodicity,
            deviation: opts.deviation,
            rsu_transition: 6,
            headways: Headways {
                dd: 4,
                dp: 4,
                pd: 2,
                pp: 4,
                aa: 4,
                ap: 4,
                pa: 4,
            },
            weights: CostWeights {
                shift: 2.0,
                wait: 1.0,
                in_vehicle: 1.0,
                transfer: 2.0,
                max_transfers: opts.max_transfers,
            },
            extra_paths,
            extra_stop_mode: opts.extra_stop_mode,
        },
    };
    Instance::from_data(data).expect("generated toy instance must validate")
}

/// Shape of a generated micro instance, reported for test logging.
#[derive(Debug, Clone, Copy)]
pub struct MicroShape {
    pub stations: usize,
    pub periods: u32,
    pub trains: usize,
    pub groups: usize,
}

/// Generates a tiny line-shaped instance (3-4 stations, 1-2 periods, at
/// most 6 trains and 12 groups) small enough for exhaustive oracles.
/// Deterministic per seed; every generated instance validates and admits
/// the all-operated timetable as a feasible solution.
pub fn generate_micro(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d69_6372);
    let step: Minute = 2;
    let n_st = rng.gen_range(3..=4usize);
    let periods = rng.gen_range(1..=2u32);
    let cycle: Minute = 40;
    let horizon_end = cycle * periods as Minute + 10;

    let stations: Vec<Station> = (0..n_st)
        .map(|i| Station {
            id: i as u32 + 1,
            name: format!("S{}", i + 1),
            is_terminal: i == 0 || i == n_st - 1,
            transfer_walk_min: 2,
            dwell_min: 2,
            dwell_max: 4,
        })
        .collect();
    let mut sections = Vec::new();
    for i in 0..n_st - 1 {
        let run: Minute = 2 * rng.gen_range(1..=2i64);
        for (from, to) in [(i, i + 1), (i + 1, i)] {
            sections.push(Section {
                from: from as u32 + 1,
                to: to as u32 + 1,
                length_km: 10.0 * run as f64,
                run_min: run,
                acc_min: 2,
                dec_min: 2,
            });
        }
    }

    let forward: Vec<u32> = (1..=n_st as u32).collect();
    let backward: Vec<u32> = forward.iter().rev().copied().collect();
    let mut stops_fw = vec![true; n_st];
    let mut stops_bw = vec![true; n_st];
    for j in 1..n_st - 1 {
        stops_fw[j] = rng.gen_bool(0.7);
        stops_bw[j] = rng.gen_bool(0.7);
    }
    let lines = vec![
        Line {
            id: 1,
            route: forward.clone(),
            stops: stops_fw,
        },
        Line {
            id: 2,
            route: backward,
            stops: stops_bw,
        },
    ];

    let section_between = |from: u32, to: u32| -> &Section {
        sections.iter().find(|s| s.from == from && s.to == to).unwrap()
    };
    let mut period0 = Vec::new();
    for line in &lines {
        let dep0: Minute = 2 * rng.gen_range(0..=2i64);
        let mut schedule = vec![StopTime { arr: dep0, dep: dep0 }];
        for j in 1..line.route.len() {
            let sec = section_between(line.route[j - 1], line.route[j]);
            let mut dur = sec.run_min;
            if line.stops[j - 1] {
                dur += sec.acc_min;
            }
            if line.stops[j] {
                dur += sec.dec_min;
            }
            let arr = schedule[j - 1].dep + dur;
            let dep = if j + 1 == line.route.len() {
                arr
            } else if line.stops[j] {
                arr + 2
            } else {
                arr
            };
            schedule.push(StopTime { arr, dep });
        }
        period0.push(Train {
            id: line.id,
            line: line.id,
            schedule,
        });
    }
    let trains = expand_periodic(&period0, periods, cycle, horizon_end).unwrap();

    let n_types = rng.gen_range(1..=2usize);
    let term_ids = [1u32, n_st as u32];
    let rsu_types: Vec<RsuType> = (0..n_types)
        .map(|u| RsuType {
            id: u as u32,
            seats: [30, 50][u],
            initial: term_ids.iter().map(|&m| (m, 2)).collect(),
        })
        .collect();

    // Budget floor: everything operated with the small type, plus slack.
    let train_km: f64 = trains
        .iter()
        .map(|t| {
            let line = lines.iter().find(|l| l.id == t.line).unwrap();
            line.route
                .windows(2)
                .map(|w| section_between(w[0], w[1]).length_km)
                .sum::<f64>()
        })
        .sum();
    let floor = train_km * rsu_types[0].seats as f64;
    let budget = floor * rng.gen_range(1.05..1.6);

    let n_groups = rng.gen_range(4..=12usize);
    let mut groups = Vec::new();
    for gid in 0..n_groups {
        let org = rng.gen_range(1..=n_st as u32);
        let mut des = rng.gen_range(1..=n_st as u32);
        while des == org {
            des = rng.gen_range(1..=n_st as u32);
        }
        let period = rng.gen_range(0..periods) as Minute;
        let pref_from = period * cycle;
        let pref_to = pref_from + cycle / 2;
        let allow_from = (pref_from - 10).max(0);
        let allow_to = (pref_to + 10).min(horizon_end - 10);
        groups.push(Group {
            id: gid as u32,
            origin: org,
            destination: des,
            size: rng.gen_range(5..=30),
            allow_from,
            allow_to: allow_to.max(allow_from),
            pref_from,
            pref_to: pref_to.min(allow_to.max(allow_from)).max(pref_from),
            latest_arrival: horizon_end,
            penalty: rng.gen_range(150.0..300.0),
        });
    }

    let with_extra = rng.gen_bool(0.5);
    let extra_paths = if with_extra {
        let lo = 2 * rng.gen_range(0..=cycle / 4);
        vec![ExtraPath {
            route: forward,
            windows: vec![(lo, lo + 8)],
        }]
    } else {
        Vec::new()
    };

    let data = InstanceData {
        stations,
        sections,
        lines,
        trains,
        rsu_types,
        groups,
        params: Params {
            step,
            horizon_end,
            cycle,
            periods,
            budget_seat_km: budget,
            periodicity: if rng.gen_bool(0.5) { 1.0 } else { 0.5 },
            deviation: 2 * rng.gen_range(0..=2i64),
            rsu_transition: 4,
            headways: Headways {
                dd: 4,
                dp: 4,
                pd: 2,
                pp: 4,
                aa: 4,
                ap: 4,
                pa: 4,
            },
            weights: CostWeights {
                shift: 2.0,
                wait: 1.0,
                in_vehicle: 1.0,
                transfer: 2.0,
                max_transfers: 2,
            },
            extra_paths,
            extra_stop_mode: ExtraStopMode::StopSkip,
        },
    };
    Instance::from_data(data).expect("generated micro instance must validate")
}

impl Instance {
    /// Shape summary, mostly for logging in tests.
    pub fn shape(&self) -> MicroShape {
        MicroShape {
            stations: self.n_stations(),
            periods: self.data.params.periods,
            trains: self.n_trains(),
            groups: self.n_groups(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_matches_reference_parameters() {
        let inst = generate_toy(1, 1.0, &GenOptions::default());
        assert_eq!(inst.n_stations(), 8);
        assert_eq!(inst.terminals().len(), 6);
        assert_eq!(inst.n_groups(), 168);
        assert_eq!(inst.data.params.cycle, 20);
        assert_eq!(inst.data.params.periods, 4);
        assert_eq!(inst.data.params.step, 2);
        let h = inst.data.params.headways;
        assert_eq!(h.pd, 2);
        for v in [h.dd, h.dp, h.pp, h.aa, h.ap, h.pa] {
            assert_eq!(v, 4);
        }
        assert_eq!(inst.data.params.rsu_transition, 6);
        assert!(inst.data.sections.iter().all(|s| s.length_km == 50.0));
        assert!(inst
            .data
            .sections
            .iter()
            .all(|s| s.acc_min == 2 && s.dec_min == 2));
        assert_eq!(inst.n_trains(), 32);
    }

    #[test]
    fn toy_generation_is_deterministic() {
        let a = generate_toy(1, 1.0, &GenOptions::default());
        let b = generate_toy(1, 1.0, &GenOptions::default());
        assert_eq!(a, b);
        let c = generate_toy(2, 1.0, &GenOptions::default());
        let da: Vec<u32> = a.data.groups.iter().map(|g| g.size).collect();
        let dc: Vec<u32> = c.data.groups.iter().map(|g| g.size).collect();
        assert_ne!(da, dc, "different seeds must sample different demand");
    }

    #[test]
    fn json_round_trip_preserves_instance() {
        let inst = generate_toy(3, 1.0, &GenOptions::default());
        let text = inst.to_json();
        let back = Instance::from_json(&text).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn dwell_bound_violation_is_rejected() {
        let mut data = generate_toy(1, 1.0, &GenOptions::default()).data;
        data.stations[0].dwell_min = 6;
        data.stations[0].dwell_max = 4;
        let err = Instance::from_data(data).unwrap_err();
        assert!(err.to_string().contains("dwell"));
    }

    #[test]
    fn empty_station_list_is_rejected() {
        let mut data = generate_toy(1, 1.0, &GenOptions::default()).data;
        data.stations.clear();
        assert!(Instance::from_data(data).is_err());
    }

    #[test]
    fn missing_reverse_section_is_rejected() {
        let mut data = generate_toy(1, 1.0, &GenOptions::default()).data;
        data.sections.retain(|s| !(s.from == 3 && s.to == 1));
        let err = Instance::from_data(data).unwrap_err();
        assert!(err.to_string().contains("reverse"));
    }

    #[test]
    fn unroutable_group_is_rejected_at_load() {
        let mut data = generate_toy(1, 1.0, &GenOptions::default()).data;
        let g = &mut data.groups[0];
        // Free-flow travel needs at least one section run time; a latest
        // arrival one minute after the only allowed departure is hopeless.
        g.allow_from = 0;
        g.allow_to = 0;
        g.pref_from = 0;
        g.pref_to = 0;
        g.latest_arrival = 1;
        let err = Instance::from_data(data).unwrap_err();
        assert!(err.to_string().contains("unroutable"), "{err}");
    }

    #[test]
    fn expand_periodic_shifts_by_whole_cycles() {
        let base = Train {
            id: 7,
            line: 1,
            schedule: vec![StopTime { arr: 0, dep: 0 }, StopTime { arr: 8, dep: 8 }],
        };
        let out = expand_periodic(std::slice::from_ref(&base), 4, 20, 80).unwrap();
        assert_eq!(out.len(), 4);
        for (k, t) in out.iter().enumerate() {
            assert_eq!(t.line, 1);
            assert_eq!(t.schedule[1].dep, 8 + 20 * k as Minute);
            let d0 = t.schedule[1].arr - t.schedule[0].dep;
            assert_eq!(d0, 8, "durations are shift invariant");
        }
    }

    #[test]
    fn expand_periodic_identity_for_single_period() {
        let base = Train {
            id: 7,
            line: 1,
            schedule: vec![StopTime { arr: 0, dep: 0 }, StopTime { arr: 8, dep: 8 }],
        };
        let out = expand_periodic(std::slice::from_ref(&base), 1, 20, 80).unwrap();
        assert_eq!(out, vec![base]);
    }

    #[test]
    fn expand_periodic_boundary_event_is_accepted() {
        // Event at minute 19 with cycle 20 over 4 periods ends at 79 <= 80.
        let base = Train {
            id: 1,
            line: 1,
            schedule: vec![StopTime { arr: 11, dep: 11 }, StopTime { arr: 19, dep: 19 }],
        };
        let out = expand_periodic(&[base], 4, 20, 80).unwrap();
        assert_eq!(out.last().unwrap().schedule[1].dep, 79);
        let base2 = Train {
            id: 1,
            line: 1,
            schedule: vec![StopTime { arr: 11, dep: 11 }, StopTime { arr: 21, dep: 21 }],
        };
        assert!(expand_periodic(&[base2], 4, 20, 80).is_err());
    }

    #[test]
    fn micro_instances_validate_for_many_seeds() {
        for seed in 0..50 {
            let inst = generate_micro(seed);
            let s = inst.shape();
            assert!(s.stations <= 4 && s.trains <= 6 && s.groups <= 12 && s.periods <= 2);
        }
    }

    #[test]
    fn free_flow_uses_shortest_section_path() {
        let inst = generate_toy(1, 1.0, &GenOptions::default());
        // 1 -> 3 -> 6 -> 7 at 2 minutes per section.
        let ff = inst
            .free_flow_min(inst.station_pos(1), inst.station_pos(7))
            .unwrap();
        assert_eq!(ff, 6);
    }
}
