//! Benders decomposition: the timetabling master with an epigraph
//! variable, the capacitated-routing subproblem solved by column
//! generation, optimality cuts (standard, Pareto-optimal via a core-point
//! auxiliary problem, and Open-Close strengthened), the adaptive
//! acceptable-optimality-gap schedule and the two-phase LP/IP loop.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use crate::model::{build_master_skeleton, decode_master, DecodedMaster, MasterModel};
use crate::preprocess::Prepared;
use crate::pricing::{
    price_group, CgConfig, Column, ColumnPool, DualPrices, KappaSpec, PricingCursor,
    RoutingOutcome, RC_TOL,
};
use crate::solver::{
    Backend, LinearModel, RowSense, SolveParams, SolveStatus, SolverError, VarId,
};

pub const CUT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutKind {
    Standard,
    Pareto,
    OpenClose,
}

impl CutKind {
    pub fn name(&self) -> &'static str {
        match self {
            CutKind::Standard => "standard",
            CutKind::Pareto => "pareto",
            CutKind::OpenClose => "open-close",
        }
    }
}

/// One optimality cut: eta >= sum_a lambda_a * capacity_a(x, y)
/// + sum_r g_r mu_r, with lambda indexed like the pricing context's
/// capacity arcs.
#[derive(Debug, Clone)]
pub struct OptimalityCut {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub kind: CutKind,
}

impl OptimalityCut {
    /// Right-hand value of the cut at given capacities.
    pub fn value_at(&self, caps: &[f64], group_sizes: &[f64]) -> f64 {
        let cap_part: f64 = self
            .lambda
            .iter()
            .zip(caps)
            .map(|(&l, &c)| l * c)
            .sum();
        let mu_part: f64 = self
            .mu
            .iter()
            .zip(group_sizes)
            .map(|(&m, &g)| m * g)
            .sum();
        cap_part + mu_part
    }

    /// Dedup key: quantized support of lambda plus quantized mu.
    fn key(&self) -> Vec<(u32, i64)> {
        let q = |x: f64| (x * 1e9).round() as i64;
        let mut k: Vec<(u32, i64)> = self
            .lambda
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0.0)
            .map(|(i, &l)| (i as u32, q(l)))
            .collect();
        k.push((u32::MAX, 0));
        k.extend(
            self.mu
                .iter()
                .enumerate()
                .map(|(i, &m)| (i as u32, q(m))),
        );
        k
    }
}

pub fn relative_gap(ub: f64, lb: f64) -> f64 {
    if !ub.is_finite() {
        return 1.0;
    }
    let diff = (ub - lb).max(0.0);
    if diff <= 1e-9 * ub.abs().max(1.0) {
        0.0
    } else if ub.abs() > 1e-12 {
        diff / ub.abs()
    } else {
        1.0
    }
}

/// Acceptable-optimality-gap update: geometric decay toward the target
/// while the global gap is large, then half the global gap.
pub fn adaptive_aog(rho: f64, alpha_prev: f64, alpha_bar: f64, eps: f64) -> f64 {
    if rho >= 2.0 * alpha_bar {
        alpha_bar.max(alpha_prev * (1.0 - eps))
    } else {
        0.5 * rho
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BendersMode {
    /// Single phase, standard cuts.
    Standard,
    /// Two-phase, standard cuts.
    Lp,
    /// Two-phase, Pareto-optimal cuts only.
    LpPareto,
    /// Two-phase, standard and Pareto cuts each iteration.
    LpPareto2,
    /// Two-phase, Open-Close cuts only (simplified subproblem).
    LpOc,
    /// Two-phase, standard and Open-Close cuts each iteration.
    LpOc2,
}

impl std::str::FromStr for BendersMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(BendersMode::Standard),
            "lp" => Ok(BendersMode::Lp),
            "lp-pareto" => Ok(BendersMode::LpPareto),
            "lp-pareto-2" => Ok(BendersMode::LpPareto2),
            "lp-oc" => Ok(BendersMode::LpOc),
            "lp-oc-2" => Ok(BendersMode::LpOc2),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BendersConfig {
    pub mode: BendersMode,
    /// Maximum LP-phase iterations.
    pub k_lp: usize,
    /// LP phase stops early once its own gap falls below this.
    pub lp_gap: f64,
    /// Target optimality gap of the overall algorithm.
    pub gap: f64,
    pub alpha0: f64,
    pub alpha_bar: f64,
    pub eps: f64,
    pub time_limit: Option<Duration>,
    pub max_iterations: usize,
    pub cg: CgConfig,
    pub threads: u32,
    pub seed: i32,
}

impl Default for BendersConfig {
    fn default() -> Self {
        BendersConfig {
            mode: BendersMode::LpPareto,
            k_lp: 30,
            lp_gap: 0.01,
            gap: 0.01,
            alpha0: 0.04,
            alpha_bar: 0.01,
            eps: 0.05,
            time_limit: None,
            max_iterations: 10_000,
            cg: CgConfig::default(),
            threads: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TraceRow {
    pub phase: String,
    pub iteration: usize,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    pub alpha: f64,
    pub cut_kind: String,
    pub columns_added: usize,
    pub wall_ms: u128,
}

pub struct BestSolution {
    pub master_primal: Vec<f64>,
    pub decoded: DecodedMaster,
    pub routing_objective: f64,
    pub flows: Vec<(Column, f64)>,
    pub unrouted: Vec<f64>,
}

pub struct BendersResult {
    pub status: SolveStatus,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap: f64,
    pub best: Option<BestSolution>,
    pub cuts: Vec<OptimalityCut>,
    pub trace: Vec<TraceRow>,
    pub columns_generated: usize,
    pub lp_phase_wall: Duration,
    pub ip_phase_wall: Duration,
}

/// Primal Benders subproblem: capacitated routing at fixed capacities.
/// In simplified mode (Open-Close single-cut), pricing may not enter
/// currently closed arcs; the optimum is unchanged because closed arcs
/// carry no capacity anyway.
#[allow(clippy::too_many_arguments)]
pub fn solve_pbsp(
    backend: &dyn Backend,
    prep: &Prepared,
    caps: &[f64],
    pool: &mut ColumnPool,
    cg: &CgConfig,
    cursor: &mut PricingCursor,
    simplified_closed: bool,
) -> Result<RoutingOutcome, SolverError> {
    let forbidden: Option<Vec<bool>> =
        simplified_closed.then(|| caps.iter().map(|&c| c <= CUT_TOL).collect());
    crate::pricing::solve_routing_cg(
        backend,
        &prep.net,
        &prep.inst,
        &prep.ctx,
        caps,
        pool,
        cg,
        None,
        forbidden.as_deref(),
        None,
        cursor,
    )
}

pub fn make_standard_cut(outcome: &RoutingOutcome) -> OptimalityCut {
    OptimalityCut {
        lambda: outcome.lambda.clone(),
        mu: outcome.mu.clone(),
        kind: CutKind::Standard,
    }
}

/// Magnanti-Wong cut: solves the auxiliary routing problem whose
/// capacities come from the core point and whose extra free column prices
/// the optimality-restriction at the current point.
#[allow(clippy::too_many_arguments)]
pub fn make_pareto_cut(
    backend: &dyn Backend,
    prep: &Prepared,
    pool: &mut ColumnPool,
    cg: &CgConfig,
    cursor: &mut PricingCursor,
    core_caps: &[f64],
    current_caps: &[f64],
    q_star: f64,
) -> Result<OptimalityCut, SolverError> {
    let kappa = KappaSpec {
        obj: q_star,
        cap_coeffs: current_caps.to_vec(),
    };
    let out = crate::pricing::solve_routing_cg(
        backend,
        &prep.net,
        &prep.inst,
        &prep.ctx,
        core_caps,
        pool,
        cg,
        Some(&kappa),
        None,
        None,
        cursor,
    )?;
    Ok(OptimalityCut {
        lambda: out.lambda,
        mu: out.mu,
        kind: CutKind::Pareto,
    })
}

/// Open-Close strengthening: keeps the subproblem duals on open arcs and
/// lifts the duals on closed (zero-capacity, train-usable) arcs by a
/// packing problem solved with the same pricing machinery. With an
/// `anchor` (the subproblem's own lambda), lifted values never fall below
/// it, which makes the strengthened cut dominate the standard cut
/// pointwise over the master's binary vectors.
pub fn make_open_close_cut(
    backend: &dyn Backend,
    prep: &Prepared,
    caps: &[f64],
    lambda_star: &[f64],
    mu_star: &[f64],
    anchor: bool,
) -> Result<OptimalityCut, SolverError> {
    let n_cap = prep.ctx.cap_arcs.len();
    let closed: Vec<usize> = (0..n_cap)
        .filter(|&i| prep.ctx.train_usable[i] && caps[i] <= CUT_TOL)
        .collect();
    if closed.is_empty() {
        return Ok(OptimalityCut {
            lambda: lambda_star.to_vec(),
            mu: mu_star.to_vec(),
            kind: CutKind::OpenClose,
        });
    }
    let closed_set: HashSet<usize> = closed.iter().copied().collect();
    let max_transfers = prep.inst.data.params.weights.max_transfers;

    // Current lambda on closed arcs in delta form: lifted = base + delta,
    // delta >= 0 (anchored) or lifted directly with lambda <= 0.
    let base: Vec<f64> = if anchor {
        closed.iter().map(|&i| lambda_star[i]).collect()
    } else {
        vec![f64::NEG_INFINITY; closed.len()]
    };
    let mut lifted: Vec<f64> = if anchor {
        base.clone()
    } else {
        vec![0.0; closed.len()]
    };

    // Packing columns: (group, per-closed-arc usage counts, objective
    // coefficient = path cost minus open-arc duals minus mu).
    let mut columns: Vec<(usize, Vec<(usize, f64)>, f64)> = Vec::new();
    let mut seen: HashSet<(usize, Vec<crate::tsnet::ArcId>)> = HashSet::new();
    let mut lambda_work = lambda_star.to_vec();

    loop {
        // Solve the packing restricted master over current columns.
        let mut m = LinearModel::new("oc-strengthen", crate::solver::Sense::Minimize);
        let z: Vec<VarId> = columns
            .iter()
            .enumerate()
            .map(|(i, (_, _, obj))| m.add_var(format!("z{i}"), 0.0, f64::INFINITY, false, *obj))
            .collect();
        // Slack columns in anchored mode pay the anchor value.
        let mut rows = Vec::with_capacity(closed.len());
        for (ci, &cap_idx) in closed.iter().enumerate() {
            let mut coeffs: Vec<(VarId, f64)> = Vec::new();
            for (zi, (_, usage, _)) in columns.iter().enumerate() {
                if let Some(&(_, d)) = usage.iter().find(|&&(c, _)| c == ci) {
                    coeffs.push((z[zi], d));
                }
            }
            if anchor {
                let s = m.add_var(
                    format!("s{ci}"),
                    0.0,
                    f64::INFINITY,
                    false,
                    -lambda_star[cap_idx],
                );
                coeffs.push((s, 1.0));
                rows.push(m.add_row(format!("c{ci}"), RowSense::Ge, 1.0, coeffs));
            } else {
                rows.push(m.add_row(format!("c{ci}"), RowSense::Le, 1.0, coeffs));
            }
        }
        let out = backend.solve(&m, &SolveParams::default())?;
        if out.status != SolveStatus::Optimal {
            return Err(SolverError::Failed(format!(
                "open-close strengthening LP: {:?}",
                out.status
            )));
        }
        let duals = out.duals.as_ref().unwrap();
        for (ci, &cap_idx) in closed.iter().enumerate() {
            let d = duals[rows[ci]];
            lifted[ci] = if anchor {
                lambda_star[cap_idx] + d.max(0.0)
            } else {
                d.min(0.0)
            };
            lambda_work[cap_idx] = lifted[ci];
        }

        // Price: minimum of path cost with open duals fixed and lifted
        // closed duals, minus mu; only paths through closed arcs can be
        // negative.
        let duals_now = DualPrices {
            lambda: lambda_work.clone(),
            mu: mu_star.to_vec(),
        };
        let mut added = 0;
        for dag in prep.ctx.dags.iter().filter(|d| !d.is_empty()) {
            let outp = price_group(dag, &duals_now, max_transfers, None);
            if outp.reduced_cost < -RC_TOL {
                if let Some(col) = outp.column {
                    let mut usage: Vec<(usize, f64)> = Vec::new();
                    let mut open_part = 0.0;
                    let mut anchor_part = 0.0;
                    for &a in &col.arcs {
                        if let Some(&ci) = prep.ctx.cap_index.get(&a) {
                            let ci = ci as usize;
                            if closed_set.contains(&ci) {
                                let local = closed.iter().position(|&c| c == ci).unwrap();
                                match usage.iter_mut().find(|(c, _)| *c == local) {
                                    Some((_, d)) => *d += 1.0,
                                    None => usage.push((local, 1.0)),
                                }
                                if anchor {
                                    anchor_part += lambda_star[ci];
                                }
                            } else {
                                open_part += lambda_star[ci];
                            }
                        }
                    }
                    if usage.is_empty() {
                        continue;
                    }
                    let key = {
                        let mut s = col.arcs.clone();
                        s.sort_unstable();
                        (col.group, s)
                    };
                    if seen.insert(key) {
                        // In the anchored (delta) form the column prices the
                        // full reduced cost at (lambda*, mu*); that value is
                        // nonnegative up to the pricing tolerance, and the
                        // clamp keeps the packing LP bounded.
                        let mut obj = col.cost - open_part - anchor_part - mu_star[col.group];
                        if anchor {
                            obj = obj.max(0.0);
                        }
                        columns.push((col.group, usage, obj));
                        added += 1;
                    }
                }
            }
        }
        if added == 0 {
            break;
        }
    }

    Ok(OptimalityCut {
        lambda: lambda_work,
        mu: mu_star.to_vec(),
        kind: CutKind::OpenClose,
    })
}

/// Appends a cut row to a master model carrying an eta variable.
pub fn add_cut_row(master: &mut MasterModel, cut: &OptimalityCut, group_sizes: &[f64], tag: usize) {
    let eta = master.eta.expect("cut rows need the epigraph variable");
    let mut coeffs = vec![(eta, 1.0)];
    for (i, &l) in cut.lambda.iter().enumerate() {
        if l != 0.0 {
            for &(v, p) in &master.cap_terms[i] {
                coeffs.push((v, -l * p));
            }
        }
    }
    let rhs: f64 = cut
        .mu
        .iter()
        .zip(group_sizes)
        .map(|(&m, &g)| m * g)
        .sum();
    master
        .model
        .add_row(format!("cut{tag}"), RowSense::Ge, rhs, coeffs);
}

/// Draws a random feasible master point by optimizing a seeded random
/// objective over the skeleton; used by validity spot checks.
pub fn random_feasible_master(
    prep: &Prepared,
    backend: &dyn Backend,
    seed: u64,
) -> Result<Option<Vec<f64>>, SolverError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut master = build_master_skeleton(&prep.master_inputs(), false);
    for v in 0..master.model.n_vars() {
        master.model.var_mut(v).obj = rng.gen_range(-1.0..1.0);
    }
    let out = backend.solve(&master.model, &SolveParams::default())?;
    if out.status != SolveStatus::Optimal {
        return Ok(None);
    }
    Ok(Some(out.primal))
}

pub fn group_sizes(prep: &Prepared) -> Vec<f64> {
    (0..prep.inst.n_groups())
        .map(|r| prep.inst.group(r).size as f64)
        .collect()
}

/// The full decomposition loop: an optional LP phase generating cuts at
/// LP-relaxed master optima, then the integer phase solving the master to
/// an adaptively tightened acceptable gap, routing passengers at each
/// incumbent and cutting until the global gap closes.
pub fn run_algorithm1(
    prep: &Prepared,
    backend: &dyn Backend,
    cfg: &BendersConfig,
) -> Result<BendersResult, SolverError> {
    let started = Instant::now();
    let deadline = cfg.time_limit.map(|tl| started + tl);
    let sizes = group_sizes(prep);
    let _n_cap = prep.ctx.cap_arcs.len();

    let mut pool = ColumnPool::new(prep.inst.n_groups());
    let mut cursor = PricingCursor::default();
    let mut cuts: Vec<OptimalityCut> = Vec::new();
    let mut cut_keys: HashSet<Vec<(u32, i64)>> = HashSet::new();
    let mut trace: Vec<TraceRow> = Vec::new();

    let mut core_caps: Option<Vec<f64>> = None;
    let mut core_count = 0usize;
    let update_core = |core_caps: &mut Option<Vec<f64>>, core_count: &mut usize, caps: &[f64]| {
        *core_count += 1;
        match core_caps {
            None => *core_caps = Some(caps.to_vec()),
            Some(core) => {
                let i = *core_count as f64;
                for (c, &x) in core.iter_mut().zip(caps) {
                    *c = ((i - 1.0) * *c + x) / i;
                }
            }
        }
    };

    let time_left = |deadline: Option<Instant>| -> Option<Duration> {
        deadline.map(|d| d.saturating_duration_since(Instant::now()))
    };
    let out_of_time =
        |deadline: Option<Instant>| deadline.is_some_and(|d| Instant::now() >= d);

    // Produces the one or two cuts of the configured mode at the current
    // master point and routing outcome.
    #[allow(clippy::too_many_arguments)]
    fn generate_cuts(
        cfg: &BendersConfig,
        backend: &dyn Backend,
        prep: &Prepared,
        pool: &mut ColumnPool,
        cursor: &mut PricingCursor,
        caps: &[f64],
        outcome: &RoutingOutcome,
        core_caps: &[f64],
    ) -> Result<Vec<OptimalityCut>, SolverError> {
        let mut out = Vec::new();
        match cfg.mode {
            BendersMode::Standard | BendersMode::Lp => {
                out.push(make_standard_cut(outcome));
            }
            BendersMode::LpPareto | BendersMode::LpPareto2 => {
                if cfg.mode == BendersMode::LpPareto2 {
                    out.push(make_standard_cut(outcome));
                }
                match make_pareto_cut(
                    backend,
                    prep,
                    pool,
                    &cfg.cg,
                    cursor,
                    core_caps,
                    caps,
                    outcome.objective,
                ) {
                    Ok(cut) => out.push(cut),
                    Err(e) => {
                        log::warn!("pareto auxiliary failed, falling back to standard: {e}");
                        out.push(make_standard_cut(outcome));
                    }
                }
            }
            BendersMode::LpOc | BendersMode::LpOc2 => {
                let anchored = cfg.mode == BendersMode::LpOc2;
                if anchored {
                    out.push(make_standard_cut(outcome));
                }
                out.push(make_open_close_cut(
                    backend,
                    prep,
                    caps,
                    &outcome.lambda,
                    &outcome.mu,
                    anchored,
                )?);
            }
        }
        Ok(out)
    }

    let simplified = cfg.mode == BendersMode::LpOc;

    // ---------------- LP phase ----------------
    let lp_started = Instant::now();
    let two_phase = cfg.mode != BendersMode::Standard;
    let mut lp_master = {
        let mut m = build_master_skeleton(&prep.master_inputs(), true);
        m.model = m.model.relaxed();
        m
    };
    let mut lp_iter = 0usize;
    if two_phase {
        while lp_iter < cfg.k_lp && !out_of_time(deadline) {
            lp_iter += 1;
            let iter_started = Instant::now();
            let params = SolveParams {
                gap_tol: 0.0,
                time_limit: time_left(deadline),
                threads: cfg.threads,
                seed: cfg.seed,
            };
            let sol = backend.solve(&lp_master.model, &params)?;
            if sol.status == SolveStatus::Infeasible {
                return Ok(infeasible_result(trace, cuts, pool.generated));
            }
            if sol.status != SolveStatus::Optimal {
                break;
            }
            let eta_val = sol.primal[lp_master.eta.unwrap()];
            let caps = lp_master.capacities(&sol.primal);
            update_core(&mut core_caps, &mut core_count, &caps);
            let outcome = solve_pbsp(backend, prep, &caps, &mut pool, &cfg.cg, &mut cursor, simplified)?;
            let new_cuts = generate_cuts(
                cfg,
                backend,
                prep,
                &mut pool,
                &mut cursor,
                &caps,
                &outcome,
                core_caps.as_ref().unwrap(),
            )?;
            let mut kinds = Vec::new();
            for cut in new_cuts {
                if cut_keys.insert(cut.key()) {
                    add_cut_row(&mut lp_master, &cut, &sizes, cuts.len());
                    kinds.push(cut.kind.name());
                    cuts.push(cut);
                }
            }
            let lp_gap = if outcome.objective.abs() > 1e-12 {
                (outcome.objective - eta_val) / outcome.objective.abs()
            } else {
                0.0
            };
            trace.push(TraceRow {
                phase: "lp".into(),
                iteration: lp_iter,
                lb: eta_val,
                ub: outcome.objective,
                gap: lp_gap,
                alpha: 0.0,
                cut_kind: kinds.join("+"),
                columns_added: outcome.columns_added,
                wall_ms: iter_started.elapsed().as_millis(),
            });
            if lp_gap <= cfg.lp_gap + 1e-12 {
                break;
            }
        }
    }
    let lp_phase_wall = lp_started.elapsed();

    // ---------------- IP phase ----------------
    let ip_started = Instant::now();
    let mut master = build_master_skeleton(&prep.master_inputs(), true);
    for (i, cut) in cuts.iter().enumerate() {
        add_cut_row(&mut master, cut, &sizes, i);
    }

    let mut lb: f64 = 0.0;
    let mut ub = f64::INFINITY;
    let mut rho = 1.0f64;
    let mut alpha = cfg.alpha0;
    let mut best: Option<BestSolution> = None;
    let mut status = SolveStatus::Limit;
    let mut iter = 0usize;

    while iter < cfg.max_iterations {
        if out_of_time(deadline) {
            status = SolveStatus::Limit;
            break;
        }
        iter += 1;
        let iter_started = Instant::now();
        alpha = adaptive_aog(rho, alpha, cfg.alpha_bar, cfg.eps);
        let params = SolveParams {
            gap_tol: alpha.max(0.0),
            time_limit: time_left(deadline),
            threads: cfg.threads,
            seed: cfg.seed,
        };
        let sol = backend.solve(&master.model, &params)?;
        match sol.status {
            SolveStatus::Infeasible => {
                return Ok(infeasible_result(trace, cuts, pool.generated));
            }
            SolveStatus::Optimal | SolveStatus::FeasibleWithGap => {}
            _ => {
                status = SolveStatus::Limit;
                break;
            }
        }
        lb = lb.max(sol.best_bound);
        let caps = master.capacities(&sol.primal);
        update_core(&mut core_caps, &mut core_count, &caps);
        let outcome = solve_pbsp(backend, prep, &caps, &mut pool, &cfg.cg, &mut cursor, simplified)?;
        let ub_k = outcome.objective;
        if ub_k < ub - 1e-12 {
            ub = ub_k;
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
        let new_cuts = generate_cuts(
            cfg,
            backend,
            prep,
            &mut pool,
            &mut cursor,
            &caps,
            &outcome,
            core_caps.as_ref().unwrap(),
        )?;
        let mut kinds = Vec::new();
        for cut in new_cuts {
            if cut_keys.insert(cut.key()) {
                add_cut_row(&mut master, &cut, &sizes, cuts.len());
                kinds.push(cut.kind.name());
                cuts.push(cut);
            }
        }
        rho = relative_gap(ub, lb);
        trace.push(TraceRow {
            phase: "ip".into(),
            iteration: iter,
            lb,
            ub,
            gap: rho,
            alpha,
            cut_kind: kinds.join("+"),
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
        if kinds.is_empty() {
            // No new cut and gap still open: the master will not change;
            // tighten alpha to zero and re-solve once before giving up.
            if alpha <= 1e-12 {
                status = SolveStatus::FeasibleWithGap;
                break;
            }
            alpha = 0.0;
        }
    }
    if ub.is_finite() && rho <= cfg.gap + 1e-9 && status == SolveStatus::Limit {
        status = SolveStatus::FeasibleWithGap;
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
        lp_phase_wall,
        ip_phase_wall: ip_started.elapsed(),
    })
}

fn infeasible_result(
    trace: Vec<TraceRow>,
    cuts: Vec<OptimalityCut>,
    columns: usize,
) -> BendersResult {
    BendersResult {
        status: SolveStatus::Infeasible,
        lower_bound: f64::NAN,
        upper_bound: f64::NAN,
        gap: f64::INFINITY,
        best: None,
        cuts,
        trace,
        columns_generated: columns,
        lp_phase_wall: Duration::ZERO,
        ip_phase_wall: Duration::ZERO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_micro;
    use crate::preprocess::{prepare, PrepOptions};
    use crate::solver::HighsBackend;

    #[test]
    fn aog_schedule_matches_the_recurrence() {
        // alpha0 = 4%, eps = 5%, rho = 50% -> 3.8%.
        let a1 = adaptive_aog(0.5, 0.04, 0.01, 0.05);
        assert!((a1 - 0.038).abs() < 1e-12);
        // At the branch boundary rho = 2 alpha_bar - delta, the half rule
        // applies and yields less than alpha_bar.
        let rho = 2.0 * 0.01 - 1e-6;
        let a = adaptive_aog(rho, 0.04, 0.01, 0.05);
        assert!((a - rho / 2.0).abs() < 1e-15);
        assert!(a < 0.01);
        // rho -> 0 drives alpha -> 0.
        assert_eq!(adaptive_aog(0.0, 0.04, 0.01, 0.05), 0.0);
        // Decay floors at alpha_bar while rho is large.
        let mut a = 0.04;
        for _ in 0..200 {
            a = adaptive_aog(0.9, a, 0.01, 0.05);
        }
        assert!((a - 0.01).abs() < 1e-12);
    }

    #[test]
    fn micro_benders_converges_to_zero_gap() {
        let inst = generate_micro(12);
        let prep = prepare(inst, &PrepOptions::default(), &HighsBackend).unwrap();
        let cfg = BendersConfig {
            gap: 0.0,
            ..BendersConfig::default()
        };
        let res = run_algorithm1(&prep, &HighsBackend, &cfg).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal, "gap {}", res.gap);
        assert!(res.gap <= 1e-9);
        let best = res.best.as_ref().unwrap();
        assert!((best.routing_objective - res.upper_bound).abs() < 1e-9);
        // Bound traces are monotone.
        let ip_rows: Vec<&TraceRow> = res.trace.iter().filter(|r| r.phase == "ip").collect();
        for w in ip_rows.windows(2) {
            assert!(w[1].lb >= w[0].lb - 1e-9);
            assert!(w[1].ub <= w[0].ub + 1e-9);
        }
    }

    #[test]
    fn standard_cut_reproduces_subproblem_value_at_the_point() {
        let inst = generate_micro(3);
        let prep = prepare(inst, &PrepOptions::default(), &HighsBackend).unwrap();
        let primal = random_feasible_master(&prep, &HighsBackend, 1)
            .unwrap()
            .expect("feasible master");
        let master = build_master_skeleton(&prep.master_inputs(), false);
        let caps = master.capacities(&primal);
        let mut pool = ColumnPool::new(prep.inst.n_groups());
        let mut cursor = PricingCursor::default();
        let out = solve_pbsp(
            &HighsBackend,
            &prep,
            &caps,
            &mut pool,
            &CgConfig::default(),
            &mut cursor,
            false,
        )
        .unwrap();
        let cut = make_standard_cut(&out);
        let sizes = group_sizes(&prep);
        let v = cut.value_at(&caps, &sizes);
        assert!(
            (v - out.objective).abs() <= 1e-6 * out.objective.abs().max(1.0),
            "cut value {v} vs subproblem {}",
            out.objective
        );
    }

    #[test]
    fn cuts_are_valid_at_other_feasible_masters() {
        let inst = generate_micro(8);
        let prep = prepare(inst, &PrepOptions::default(), &HighsBackend).unwrap();
        let sizes = group_sizes(&prep);
        let master = build_master_skeleton(&prep.master_inputs(), false);
        let mut pool = ColumnPool::new(prep.inst.n_groups());
        let mut cursor = PricingCursor::default();
        // A cut made at one master point...
        let p1 = random_feasible_master(&prep, &HighsBackend, 5).unwrap().unwrap();
        let caps1 = master.capacities(&p1);
        let out1 = solve_pbsp(&HighsBackend, &prep, &caps1, &mut pool, &CgConfig::default(), &mut cursor, false).unwrap();
        let cut = make_standard_cut(&out1);
        // ...never exceeds the true subproblem value elsewhere.
        for seed in 10..14 {
            if let Some(p2) = random_feasible_master(&prep, &HighsBackend, seed).unwrap() {
                let caps2 = master.capacities(&p2);
                let out2 = solve_pbsp(&HighsBackend, &prep, &caps2, &mut pool, &CgConfig::default(), &mut cursor, false).unwrap();
                let v = cut.value_at(&caps2, &sizes);
                assert!(
                    v <= out2.objective + 1e-6 * out2.objective.abs().max(1.0),
                    "cut {v} violates subproblem {} at seed {seed}",
                    out2.objective
                );
            }
        }
    }
}
