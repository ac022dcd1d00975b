//! Command line front end: instance generation, network statistics,
//! preprocessing, solving (arc / path / benders / psr with the delete and
//! none-routed baselines), independent validation and report emission.

mod diagram;

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hpt::benders::{run_algorithm1, BendersConfig, BendersMode, BendersResult, BestSolution};
use hpt::instance::{generate_micro, generate_toy, ExtraStopMode, GenOptions, Instance};
use hpt::model::{
    attach_arc_routing, attach_routing, build_master_skeleton, decode_master, decompose_arc_flows,
};
use hpt::preprocess::{prepare, PrepOptions, Prepared};
use hpt::pricing::{enumerate_group_columns, CgConfig, CgMode, Column};
use hpt::psr::{evaluate_timetable, post_optimize, run_psr};
use hpt::report::{assemble, status_name, trace_csv, SolveReport};
use hpt::solver::{backend_from_env, Backend, SolveParams};
use hpt::validate::{validate, SolutionCheck};

#[derive(Parser)]
#[command(name = "hpt", version, about = "Hybrid periodic train timetabling solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem instance file.
    Gen(GenArgs),
    /// Network inspection commands.
    Net(NetArgs),
    /// Run the preprocessing reductions and print their effect.
    Prep(PrepArgs),
    /// Solve an instance.
    Solve(SolveArgs),
    /// Independently validate a solve report against its instance.
    Validate(ValidateArgs),
    /// Re-emit artifacts (trace CSV, diagram SVG) from a report.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Instance family: the 8-station reference case or a random micro
    /// instance.
    #[arg(long, value_enum, default_value = "toy")]
    kind: GenKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Demand scale factor (toy only).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Periodicity floor (fraction of trains per line that must run).
    #[arg(long)]
    xi: Option<f64>,
    /// Allowed schedule deviation in minutes.
    #[arg(long)]
    tau: Option<i64>,
    /// Operating budget in seat-kilometers.
    #[arg(long)]
    budget: Option<f64>,
    /// Maximum transfers per passenger route.
    #[arg(long)]
    max_transfers: Option<u32>,
    /// Drop the extra-train paths from the instance.
    #[arg(long)]
    no_extras: bool,
    /// Half width of the extra-train departure windows (minutes).
    #[arg(long)]
    extra_window: Option<i64>,
    /// Stop policy for extra trains.
    #[arg(long, value_enum)]
    extra_stop_mode: Option<StopModeArg>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Toy,
    Micro,
}

#[derive(Clone, Copy, ValueEnum)]
enum StopModeArg {
    AllStop,
    StopSkip,
}

#[derive(Args)]
struct NetArgs {
    #[command(subcommand)]
    command: NetCommand,
}

#[derive(Subcommand)]
enum NetCommand {
    /// Print vertex and arc counts per family, and subnetwork sizes.
    Stats {
        #[arg(long)]
        instance: PathBuf,
        /// Apply the preprocessing reductions before counting.
        #[arg(long, value_delimiter = ',')]
        prep: Vec<String>,
    },
}

#[derive(Args)]
struct PrepArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Reductions to run: trains, pax, bounds.
    #[arg(long, value_delimiter = ',', default_value = "trains,pax")]
    prep: Vec<String>,
    /// Solve the inventory bounding model as an LP.
    #[arg(long)]
    bounds_lp: bool,
    /// Solver backend command (defaults to in-process HiGHS, or
    /// HPT_SOLVER_CMD).
    #[arg(long)]
    solver: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "benders")]
    formulation: Formulation,
    /// Benders implementation strategy.
    #[arg(long, default_value = "lp-pareto")]
    mode: String,
    /// Maximum LP-phase iterations.
    #[arg(long, default_value_t = 30)]
    klp: usize,
    /// LP-phase stopping gap.
    #[arg(long, default_value_t = 0.01)]
    lp_gap: f64,
    /// Target optimality gap.
    #[arg(long, default_value_t = 0.01)]
    gap: f64,
    #[arg(long, default_value_t = 0.04)]
    alpha0: f64,
    #[arg(long, default_value_t = 0.01)]
    alphabar: f64,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    timelimit: Option<f64>,
    #[arg(long, default_value_t = 1)]
    threads: u32,
    #[arg(long, default_value_t = 0)]
    seed: i32,
    /// Column generation acceleration: standard, pp, cc, cc+pp.
    #[arg(long, default_value = "standard")]
    cg: String,
    /// Partial pricing column threshold (defaults to |R|/10).
    #[arg(long)]
    cg_s: Option<usize>,
    /// Reductions to apply before solving.
    #[arg(long, value_delimiter = ',', default_value = "trains,pax")]
    prep: Vec<String>,
    /// Fix the n smallest groups to direct trains (psr formulation).
    #[arg(long, default_value_t = 0)]
    psr_fix: usize,
    /// Delete the n smallest groups before solving, then reroute all
    /// groups on the resulting timetable.
    #[arg(long)]
    psr_delete: Option<usize>,
    /// Delete every group before solving (the None-Routed baseline).
    #[arg(long)]
    none_routed: bool,
    /// Cap on enumerated paths for the monolithic path formulation.
    #[arg(long, default_value_t = 200_000)]
    path_limit: usize,
    /// Solver backend command.
    #[arg(long)]
    solver: Option<String>,
    /// Write the final master model in LP format.
    #[arg(long)]
    write_lp: Option<PathBuf>,
    /// Report JSON output path.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Iteration trace CSV output path.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Time-distance diagram SVG output path.
    #[arg(long)]
    diagram: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Formulation {
    Arc,
    Path,
    Benders,
    Psr,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Disable the transfer-cap check (arc-based reports).
    #[arg(long)]
    no_transfer_cap: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    diagram: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Net(args) => cmd_net(args),
        Command::Prep(args) => cmd_prep(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn cmd_gen(args: GenArgs) -> Result<i32> {
    let mut opts = GenOptions::default();
    if let Some(xi) = args.xi {
        opts.periodicity = xi;
    }
    if let Some(tau) = args.tau {
        opts.deviation = tau;
    }
    if let Some(b) = args.budget {
        opts.budget_seat_km = b;
    }
    if let Some(m) = args.max_transfers {
        opts.max_transfers = m;
    }
    if args.no_extras {
        opts.with_extras = false;
    }
    if let Some(w) = args.extra_window {
        opts.extra_window_halfwidth = w;
    }
    if let Some(m) = args.extra_stop_mode {
        opts.extra_stop_mode = match m {
            StopModeArg::AllStop => ExtraStopMode::AllStop,
            StopModeArg::StopSkip => ExtraStopMode::StopSkip,
        };
    }
    let inst = match args.kind {
        GenKind::Toy => generate_toy(args.seed, args.scale, &opts),
        GenKind::Micro => generate_micro(args.seed),
    };
    std::fs::write(&args.out, inst.to_json())
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} ({} stations, {} trains, {} groups)",
        args.out.display(),
        inst.n_stations(),
        inst.n_trains(),
        inst.n_groups()
    );
    Ok(0)
}

fn parse_prep(items: &[String]) -> Result<PrepOptions> {
    let mut opts = PrepOptions {
        trains: false,
        pax: false,
        bounds: false,
        bounds_lp: false,
    };
    for item in items.iter().filter(|s| !s.is_empty()) {
        match item.as_str() {
            "trains" => opts.trains = true,
            "pax" => opts.pax = true,
            "bounds" => opts.bounds = true,
            "none" => {}
            other => bail!("unknown reduction {other:?} (expected trains, pax, bounds)"),
        }
    }
    Ok(opts)
}

fn cmd_net(args: NetArgs) -> Result<i32> {
    match args.command {
        NetCommand::Stats { instance, prep } => {
            let inst = Instance::load(&instance)?;
            let backend = backend_from_env(None);
            let opts = parse_prep(&prep)?;
            let prepared = prepare(inst, &opts, backend.as_ref())?;
            println!("vertices: {}", prepared.net.n_vertices());
            println!("arcs:     {}", prepared.net.arcs.len());
            for (family, count) in prepared.net.family_counts() {
                println!("  {family:<14} {count}");
            }
            let train_arcs: usize = prepared
                .train_subs
                .iter()
                .map(|s| s.non_virtual().count())
                .sum::<usize>()
                + prepared.extra_sub.non_virtual().count();
            let pax_arcs: usize = prepared.pax_subs.iter().map(|s| s.arcs.len()).sum();
            println!("train arcs (subnetworks): {train_arcs}");
            println!("pax arcs (subnetworks):   {pax_arcs}");
            println!("capacity arcs:            {}", prepared.ctx.cap_arcs.len());
            println!(
                "headway coupling sets:    {}",
                prepared.phi.coupling().count()
            );
            Ok(0)
        }
    }
}

fn cmd_prep(args: PrepArgs) -> Result<i32> {
    let inst = Instance::load(&args.instance)?;
    let backend = backend_from_env(args.solver.as_deref());
    let mut opts = parse_prep(&args.prep)?;
    opts.bounds_lp = args.bounds_lp;
    let prepared = prepare(inst, &opts, backend.as_ref())?;
    let rep = &prepared.report;
    println!("reduction            effect");
    println!("train arcs removed   {}", rep.train_arcs_removed);
    println!("pax arcs (time)      {}", rep.pax_arcs_removed_time);
    println!("pax arcs (inactive)  {}", rep.pax_arcs_removed_inactive);
    if opts.bounds {
        println!("inventory bounds     {} entries ({} solves)", rep.inventory_bounds.len(), rep.bound_solves);
    }
    Ok(0)
}

struct Emission<'a> {
    args: &'a SolveArgs,
    prep: &'a Prepared,
}

impl Emission<'_> {
    /// Validation gate, then report artifacts. Returns the exit code.
    fn finish(&self, report: &SolveReport, enforce_transfer_cap: bool) -> Result<i32> {
        if !report.trains.is_empty() {
            let unrouted: Vec<f64> = {
                let inst = &self.prep.inst;
                let mut v = vec![0.0; inst.n_groups()];
                for gf in &report.group_flows {
                    v[inst.group_pos(gf.group)] = gf.unserved;
                }
                v
            };
            let verdict = validate(&SolutionCheck {
                inst: &self.prep.inst,
                trains: &report.trains,
                extras: &report.extras,
                paths: &report.paths,
                unrouted: Some(&unrouted),
                enforce_transfer_cap,
            });
            if !verdict.pass() {
                for v in &verdict.violations {
                    eprintln!("validation {}: {}", v.family, v.message);
                }
                bail!("solution failed independent validation; no report written");
            }
        }
        if let Some(path) = &self.args.out {
            std::fs::write(path, serde_json::to_string_pretty(report)?)?;
            println!("report: {}", path.display());
        }
        if let Some(path) = &self.args.trace {
            std::fs::write(path, trace_csv(&report.trace))?;
            println!("trace: {}", path.display());
        }
        if let Some(path) = &self.args.diagram {
            let svg = diagram::time_distance_svg(&self.prep.inst, &report.trains, &report.extras);
            std::fs::write(path, svg)?;
            println!("diagram: {}", path.display());
        }
        println!(
            "status {}  objective {}  bounds [{}, {}]  gap {:.4}%",
            report.status,
            report.objective,
            report.lower_bound,
            report.upper_bound,
            report.gap * 100.0
        );
        Ok(match report.status.as_str() {
            "optimal" => 0,
            "feasible-with-gap" => 2,
            "infeasible" => 3,
            "limit" => 4,
            _ => 1,
        })
    }
}

fn benders_config(args: &SolveArgs) -> Result<BendersConfig> {
    let mode: BendersMode = args.mode.parse().map_err(anyhow::Error::msg)?;
    let cg_mode: CgMode = args.cg.parse().map_err(anyhow::Error::msg)?;
    Ok(BendersConfig {
        mode,
        k_lp: args.klp,
        lp_gap: args.lp_gap,
        gap: args.gap,
        alpha0: args.alpha0,
        alpha_bar: args.alphabar,
        eps: args.eps,
        time_limit: args.timelimit.map(Duration::from_secs_f64),
        cg: CgConfig {
            mode: cg_mode,
            s: args.cg_s,
            ..CgConfig::default()
        },
        threads: args.threads,
        seed: args.seed,
        ..BendersConfig::default()
    })
}

fn cmd_solve(args: SolveArgs) -> Result<i32> {
    let inst = Instance::load(&args.instance)?;
    let backend = backend_from_env(args.solver.as_deref());
    let prep_opts = parse_prep(&args.prep)?;
    let cfg = benders_config(&args)?;

    if args.none_routed || args.psr_delete.is_some() {
        return solve_delete_baseline(&args, inst, backend.as_ref(), &cfg, &prep_opts);
    }

    let prep = prepare(inst, &prep_opts, backend.as_ref())?;
    let emission = Emission { args: &args, prep: &prep };

    match args.formulation {
        Formulation::Benders => {
            let res = run_algorithm1(&prep, backend.as_ref(), &cfg)?;
            let report = assemble(&prep, &res);
            emission.finish(&report, true)
        }
        Formulation::Psr => {
            let psr = run_psr(&prep, backend.as_ref(), &cfg, args.psr_fix)?;
            let Some(best) = &psr.benders.best else {
                let report = assemble(&prep, &psr.benders);
                return emission.finish(&report, true);
            };
            let post = post_optimize(&prep, backend.as_ref(), &cfg, &best.decoded)?;
            let mut report = assemble(&prep, &post);
            // The PSR master bound stays the meaningful lower bound.
            report.lower_bound = psr.benders.lower_bound;
            report.gap = if report.upper_bound.abs() > 1e-12 {
                ((report.upper_bound - report.lower_bound) / report.upper_bound.abs()).max(0.0)
            } else {
                0.0
            };
            report.status = status_name(psr.benders.status).into();
            emission.finish(&report, true)
        }
        Formulation::Arc => {
            let (report, lp) = solve_arc(&prep, backend.as_ref(), &cfg)?;
            if let Some(path) = &args.write_lp {
                std::fs::write(path, lp)?;
            }
            emission.finish(&report, false)
        }
        Formulation::Path => {
            let (report, lp) = solve_path(&prep, backend.as_ref(), &cfg, args.path_limit)?;
            if let Some(path) = &args.write_lp {
                std::fs::write(path, lp)?;
            }
            emission.finish(&report, true)
        }
    }
}

/// Monolithic arc-based model solved directly by the MIP backend.
fn solve_arc(
    prep: &Prepared,
    backend: &dyn Backend,
    cfg: &BendersConfig,
) -> Result<(SolveReport, String)> {
    let mut master = build_master_skeleton(&prep.master_inputs(), false);
    let routing = attach_arc_routing(&mut master, &prep.inst, &prep.net, &prep.ctx, &prep.pax_subs);
    let lp = master.model.write_lp();
    let out = backend.solve(
        &master.model,
        &SolveParams {
            gap_tol: cfg.gap,
            time_limit: cfg.time_limit,
            threads: cfg.threads,
            seed: cfg.seed,
        },
    )?;
    let res = package_monolithic(prep, &master, out, |primal| {
        decompose_arc_flows(&prep.net, &prep.inst, &prep.pax_subs, &routing, primal)
    })?;
    Ok((assemble(prep, &res), lp))
}

/// Monolithic path model over exhaustively enumerated columns.
fn solve_path(
    prep: &Prepared,
    backend: &dyn Backend,
    cfg: &BendersConfig,
    limit: usize,
) -> Result<(SolveReport, String)> {
    let max_transfers = prep.inst.data.params.weights.max_transfers;
    let mut columns: Vec<Column> = Vec::new();
    for dag in &prep.ctx.dags {
        let cols = enumerate_group_columns(dag, max_transfers, limit.saturating_sub(columns.len()))
            .context("path enumeration exceeded --path-limit; use --formulation benders")?;
        columns.extend(cols);
    }
    let mut master = build_master_skeleton(&prep.master_inputs(), false);
    let routing = attach_routing(&mut master, &prep.inst, &prep.ctx, &columns);
    let lp = master.model.write_lp();
    let out = backend.solve(
        &master.model,
        &SolveParams {
            gap_tol: cfg.gap,
            time_limit: cfg.time_limit,
            threads: cfg.threads,
            seed: cfg.seed,
        },
    )?;
    let res = package_monolithic(prep, &master, out, |primal| {
        let flows: Vec<(Column, f64)> = routing
            .z
            .iter()
            .enumerate()
            .filter(|&(_, &v)| primal[v] > 1e-9)
            .map(|(ci, &v)| (columns[ci].clone(), primal[v]))
            .collect();
        let unrouted: Vec<f64> = routing.q.iter().map(|&v| primal[v].max(0.0)).collect();
        (flows, unrouted)
    })?;
    Ok((assemble(prep, &res), lp))
}

fn package_monolithic(
    prep: &Prepared,
    master: &hpt::model::MasterModel,
    out: hpt::solver::SolveOutcome,
    flows_of: impl FnOnce(&[f64]) -> (Vec<(Column, f64)>, Vec<f64>),
) -> Result<BendersResult> {
    let status = out.status;
    if !out.has_solution() {
        return Ok(BendersResult {
            status,
            lower_bound: out.best_bound,
            upper_bound: f64::INFINITY,
            gap: f64::INFINITY,
            best: None,
            cuts: Vec::new(),
            trace: Vec::new(),
            columns_generated: 0,
            lp_phase_wall: Duration::ZERO,
            ip_phase_wall: out.wall,
        });
    }
    let decoded = decode_master(
        master,
        &prep.inst,
        &prep.net,
        &prep.train_subs,
        &prep.extra_sub,
        &out.primal,
    )?;
    let (flows, unrouted) = flows_of(&out.primal);
    Ok(BendersResult {
        status,
        lower_bound: out.best_bound,
        upper_bound: out.objective,
        gap: out.gap,
        best: Some(BestSolution {
            master_primal: out.primal,
            decoded,
            routing_objective: out.objective,
            flows,
            unrouted,
        }),
        cuts: Vec::new(),
        trace: Vec::new(),
        columns_generated: 0,
        lp_phase_wall: Duration::ZERO,
        ip_phase_wall: out.wall,
    })
}

/// The delete/none-routed baseline: remove the n smallest groups, solve,
/// then reroute every group of the full instance on the fixed timetable.
fn solve_delete_baseline(
    args: &SolveArgs,
    inst: Instance,
    backend: &dyn Backend,
    cfg: &BendersConfig,
    prep_opts: &PrepOptions,
) -> Result<i32> {
    let mut data = inst.data.clone();
    let drop_ids: HashSet<u32> = if args.none_routed {
        data.groups.iter().map(|g| g.id).collect()
    } else {
        let n = args.psr_delete.unwrap_or(0);
        let mut by_size: Vec<(u32, u32)> = data.groups.iter().map(|g| (g.size, g.id)).collect();
        by_size.sort_unstable();
        by_size.iter().take(n).map(|&(_, id)| id).collect()
    };
    data.groups.retain(|g| !drop_ids.contains(&g.id));
    let reduced = Instance::from_data(data)?;
    let prep_reduced = prepare(reduced, prep_opts, backend)?;
    let res = run_algorithm1(&prep_reduced, backend, cfg)?;
    let Some(best) = &res.best else {
        let report = assemble(&prep_reduced, &res);
        let prep_full = prepare(inst, prep_opts, backend)?;
        return Emission { args, prep: &prep_full }.finish(&report, true);
    };

    // Reroute all groups on the obtained timetable.
    let prep_full = prepare(inst, prep_opts, backend)?;
    let (outcome, flows) = evaluate_timetable(
        &prep_full,
        backend,
        &cfg.cg,
        &best.decoded.trains,
        &best.decoded.extras,
    )?;
    // Costs are nonnegative, so zero stays a valid if weak lower bound
    // for the rerouted objective of this heuristic.
    let full_res = BendersResult {
        status: res.status,
        lower_bound: 0.0,
        upper_bound: outcome.objective,
        gap: 1.0,
        best: Some(BestSolution {
            master_primal: best.master_primal.clone(),
            decoded: best.decoded.clone(),
            routing_objective: outcome.objective,
            flows,
            unrouted: outcome.unrouted.clone(),
        }),
        cuts: Vec::new(),
        trace: res.trace.clone(),
        columns_generated: res.columns_generated,
        lp_phase_wall: res.lp_phase_wall,
        ip_phase_wall: res.ip_phase_wall,
    };
    let report = assemble(&prep_full, &full_res);
    Emission { args, prep: &prep_full }.finish(&report, true)
}

fn cmd_validate(args: ValidateArgs) -> Result<i32> {
    let inst = Instance::load(&args.instance)?;
    let text = std::fs::read_to_string(&args.report)?;
    let report: SolveReport = serde_json::from_str(&text)?;
    let mut unrouted = vec![0.0; inst.n_groups()];
    for gf in &report.group_flows {
        unrouted[inst.group_pos(gf.group)] = gf.unserved;
    }
    let verdict = validate(&SolutionCheck {
        inst: &inst,
        trains: &report.trains,
        extras: &report.extras,
        paths: &report.paths,
        unrouted: Some(&unrouted),
        enforce_transfer_cap: !args.no_transfer_cap,
    });
    if verdict.pass() {
        println!("PASS");
        Ok(0)
    } else {
        for v in &verdict.violations {
            println!("FAIL {}: {}", v.family, v.message);
        }
        Ok(1)
    }
}

fn cmd_report(args: ReportArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.report)?;
    let report: SolveReport = serde_json::from_str(&text)?;
    if let Some(path) = &args.trace {
        std::fs::write(path, trace_csv(&report.trace))?;
        println!("trace: {}", path.display());
    }
    if let Some(path) = &args.diagram {
        let instance = args
            .instance
            .as_ref()
            .context("--diagram needs --instance")?;
        let inst = Instance::load(instance)?;
        std::fs::write(
            path,
            diagram::time_distance_svg(&inst, &report.trains, &report.extras),
        )?;
        println!("diagram: {}", path.display());
    }
    if let Some(path) = &args.out_json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
        println!("report: {}", path.display());
    }
    Ok(0)
}
