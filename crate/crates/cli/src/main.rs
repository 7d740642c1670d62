//! Command-line front end: config ingestion, single-config evaluation,
//! configuration search, scenario sweeps, and plot-data emission.
//!
//! Exit codes: 0 success, 1 input error (unparseable documents, bad flags),
//! 2 infeasible or invalid configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spanopt_core::explore::{explore, recommend_network, SearchBudget};
use spanopt_core::fixtures;
use spanopt_core::model::{validate_config, ModelSpec, Placement, Schedule};
use spanopt_core::reconstruct::{bubble_fraction, reconstruct, timeline_csv};
use spanopt_core::report::EvalConfig;
use spanopt_core::schedule::build_full;
use spanopt_core::volume;
use spanopt_core::{Assumptions, DpScheme, Error, ParallelismConfig, Topology};

#[derive(Parser)]
#[command(
    name = "spanopt",
    version,
    about = "Iteration-time model and configuration search for LLM training across buildings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// RNG seed fixing every randomized estimate and the search trajectory.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// JSON document overriding the default model assumptions (path or
    /// bundled fixture name).
    #[arg(long, global = true)]
    assumptions_file: Option<String>,

    /// Override cross-building latency with a uniform physical distance
    /// (one-way fibre propagation).
    #[arg(long, global = true)]
    distance_km: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Search for the fastest configuration and write report.json/report.csv.
    Explore(ExploreArgs),
    /// Evaluate one fully specified configuration; write timeline.csv and
    /// metrics.json.
    Eval(EvalArgs),
    /// Evaluate a configuration across an axis of scenario values; write
    /// sweep.csv.
    Sweep(SweepArgs),
    /// Print the communication volume accounting for a configuration.
    Volumes(EvalArgs),
    /// Emit the kernel DAG (schedule.json) and per-rank timeline CSV.
    DumpSchedule(EvalArgs),
    /// Print network-layer recommendations for a topology.
    RecommendNet(RecommendArgs),
}

#[derive(Args)]
struct ExploreArgs {
    /// Model spec JSON (path or bundled fixture name).
    #[arg(long)]
    model: String,
    /// Topology JSON (path or bundled fixture name).
    #[arg(long)]
    topo: String,
    /// Global batch size in sequences.
    #[arg(long)]
    gbs: u64,
    #[arg(long, default_value_t = 1000)]
    top_k: usize,
    #[arg(long, default_value_t = 100)]
    perturbations: usize,
    #[arg(long, default_value_t = 100)]
    chunk_configs: usize,
    #[arg(long, default_value_t = 16)]
    exploration_partitions: usize,
    /// Wall-clock budget in seconds; best-so-far results on expiry.
    #[arg(long)]
    max_wall_time: Option<f64>,
    /// TP degrees to explore (default: accelerators per server).
    #[arg(long, value_delimiter = ',')]
    tp: Option<Vec<u64>>,
    #[arg(long, default_value_t = 64)]
    max_mbs: u64,
    #[arg(long, default_value_t = 50)]
    max_report_entries: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    topo: String,
    /// Evaluation config JSON: {"batch": ..., "parallelism": ...}.
    #[arg(long)]
    config: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SweepAxis {
    Oversub,
    LatencyUs,
    DistanceKm,
    Experts,
    Batch,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    base: EvalArgs,
    #[arg(long, value_enum)]
    axis: SweepAxis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    topo: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidConfig { .. } | Error::NoFeasibleConfig { .. } => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

/// Read a document from a path, falling back to the bundled fixture of the
/// same name.
fn read_input(name: &str) -> Result<String, Error> {
    let path = Path::new(name);
    if path.exists() {
        return std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())));
    }
    if let Some(bundled) = fixtures::bundled(name) {
        return Ok(bundled.to_string());
    }
    Err(Error::Parse(format!(
        "{name}: no such file and no bundled fixture with that name"
    )))
}

fn load_assumptions(name: &Option<String>) -> Result<Assumptions, Error> {
    match name {
        None => Ok(Assumptions::default()),
        Some(n) => {
            let text = read_input(n)?;
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("assumptions: {e}")))
        }
    }
}

fn load_topology(
    name: &str,
    distance_km: Option<f64>,
    assumptions: &Assumptions,
) -> Result<Topology, Error> {
    let mut topo = Topology::from_json(&read_input(name)?)?;
    if let Some(km) = distance_km {
        topo.set_uniform_cross_distance_km(km, assumptions.us_per_km);
        topo.validate()?;
    }
    Ok(topo)
}

/// Print to stdout, ignoring a closed pipe (e.g. `spanopt ... | head`).
fn emit(args: std::fmt::Arguments) {
    use std::io::Write;
    let _ = std::io::stdout().write_fmt(args);
    let _ = std::io::stdout().write_all(b"\n");
}

macro_rules! say {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Parse(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn run(cli: Cli) -> Result<(), Error> {
    let assumptions = load_assumptions(&cli.assumptions_file)?;
    match cli.command {
        Command::Explore(ref args) => cmd_explore(&cli, &assumptions, args),
        Command::Eval(ref args) => cmd_eval(&cli, &assumptions, args),
        Command::Sweep(ref args) => cmd_sweep(&cli, &assumptions, args),
        Command::Volumes(ref args) => cmd_volumes(&cli, &assumptions, args),
        Command::DumpSchedule(ref args) => cmd_dump_schedule(&cli, &assumptions, args),
        Command::RecommendNet(ref args) => cmd_recommend(&cli, &assumptions, args),
    }
}

fn cmd_explore(cli: &Cli, assumptions: &Assumptions, args: &ExploreArgs) -> Result<(), Error> {
    let model = ModelSpec::from_json(&read_input(&args.model)?)?;
    let topo = load_topology(&args.topo, cli.distance_km, assumptions)?;
    let budget = SearchBudget {
        top_k: args.top_k,
        perturbations_m: args.perturbations,
        chunk_configs_per_partition: args.chunk_configs,
        exploration_partitions: args.exploration_partitions,
        max_wall_time_s: args.max_wall_time,
        seed: cli.seed,
        tp_candidates: args.tp.clone(),
        max_microbatch_size: args.max_mbs,
        max_report_entries: args.max_report_entries,
    };
    let report = explore(&model, args.gbs, &topo, assumptions, &budget)?;
    let json_path = write_out(&cli.out_dir, "report.json", &report.to_json())?;
    let csv_path = write_out(&cli.out_dir, "report.csv", &report.to_csv())?;
    let best = report.best();
    say!(
        "best: {} {} {} {}-{}-{}-{}-{} mbs {} -> {:.6} s/iter",
        best.placement,
        best.parallelism.schedule,
        best.parallelism.dp_scheme,
        best.parallelism.tp,
        best.parallelism.cp,
        best.parallelism.ep,
        best.parallelism.pp,
        best.parallelism.dp,
        best.batch.microbatch_size,
        best.iteration_time_s
    );
    say!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn load_eval_inputs(
    cli: &Cli,
    assumptions: &Assumptions,
    args: &EvalArgs,
) -> Result<(ModelSpec, Topology, EvalConfig), Error> {
    let model = ModelSpec::from_json(&read_input(&args.model)?)?;
    let topo = load_topology(&args.topo, cli.distance_km, assumptions)?;
    let config = EvalConfig::from_json(&read_input(&args.config)?)?;
    Ok((model, topo, config))
}

fn cmd_eval(cli: &Cli, assumptions: &Assumptions, args: &EvalArgs) -> Result<(), Error> {
    let (model, topo, cfg) = load_eval_inputs(cli, assumptions, args)?;
    let violations = validate_config(&model, &cfg.batch, &cfg.parallelism, &topo, assumptions);
    if !violations.is_empty() {
        return Err(Error::InvalidConfig { violations });
    }
    let dag = build_full(&model, &cfg.batch, &cfg.parallelism, &topo, assumptions, cli.seed)?;
    let timeline = reconstruct(&dag)?;
    let (best_placement, best_time) = timeline.best();
    let bubbles: Vec<f64> = (0..cfg.parallelism.pp as usize)
        .map(|r| bubble_fraction(&timeline, r, best_placement))
        .collect();
    let metrics = serde_json::json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "seed": cli.seed,
        "config": cfg,
        "t_dp_out_s": timeline.t_dp_out,
        "t_pp_out_s": timeline.t_pp_out,
        "best_placement": best_placement,
        "best_iteration_time_s": best_time,
        "bubble_fraction_per_rank": bubbles,
        "cross_building_bytes_dp_out": timeline.cross_building_bytes_dp_out,
        "cross_building_bytes_pp_out": timeline.cross_building_bytes_pp_out,
        "assumptions": assumptions,
    });
    let metrics_path = write_out(
        &cli.out_dir,
        "metrics.json",
        &serde_json::to_string_pretty(&metrics).expect("metrics"),
    )?;
    let csv_path = write_out(&cli.out_dir, "timeline.csv", &timeline_csv(&dag, &timeline))?;
    say!(
        "t_dp_out {:.6} s, t_pp_out {:.6} s, best {} ({:.6} s)",
        timeline.t_dp_out, timeline.t_pp_out, best_placement, best_time
    );
    say!("wrote {} and {}", metrics_path.display(), csv_path.display());
    Ok(())
}

fn cmd_volumes(cli: &Cli, assumptions: &Assumptions, args: &EvalArgs) -> Result<(), Error> {
    let (model, topo, cfg) = load_eval_inputs(cli, assumptions, args)?;
    let violations = validate_config(&model, &cfg.batch, &cfg.parallelism, &topo, assumptions);
    if !violations.is_empty() {
        return Err(Error::InvalidConfig { violations });
    }
    let p = &cfg.parallelism;
    let mut dp_out = p.clone();
    dp_out.placement = Placement::DpOut;
    let mut pp_out = p.clone();
    pp_out.placement = Placement::PpOut;
    let out = serde_json::json!({
        "pp_p2p_elements_per_transfer": volume::pp_p2p_elements(&model, &cfg.batch, p),
        "pp_p2p_transfers_per_boundary": volume::pp_p2p_count(&cfg.batch, p),
        "dp_layer_elements_per_direction": volume::dp_layer_elements(&model, p),
        "cross_building_bytes_dp_out":
            volume::cross_building_bytes(&model, &cfg.batch, &dp_out, &topo),
        "cross_building_bytes_pp_out":
            volume::cross_building_bytes(&model, &cfg.batch, &pp_out, &topo),
        "bytes_per_element": model.bytes_per_element,
    });
    say!("{}", serde_json::to_string_pretty(&out).expect("volumes"));
    Ok(())
}

fn cmd_dump_schedule(cli: &Cli, assumptions: &Assumptions, args: &EvalArgs) -> Result<(), Error> {
    let (model, topo, cfg) = load_eval_inputs(cli, assumptions, args)?;
    let dag = build_full(&model, &cfg.batch, &cfg.parallelism, &topo, assumptions, cli.seed)?;
    let timeline = reconstruct(&dag)?;
    let schedule_path = write_out(
        &cli.out_dir,
        "schedule.json",
        &serde_json::to_string_pretty(&dag).expect("dag"),
    )?;
    let csv_path = write_out(&cli.out_dir, "timeline.csv", &timeline_csv(&dag, &timeline))?;
    say!(
        "{} kernels, {} microbatches; wrote {} and {}",
        dag.len(),
        dag.meta.num_microbatches,
        schedule_path.display(),
        csv_path.display()
    );
    Ok(())
}

fn cmd_recommend(cli: &Cli, assumptions: &Assumptions, args: &RecommendArgs) -> Result<(), Error> {
    let topo = load_topology(&args.topo, cli.distance_km, assumptions)?;
    let rec = recommend_network(&topo, assumptions);
    say!("{}", serde_json::to_string_pretty(&rec).expect("recommendation"));
    Ok(())
}

/// Variants evaluated per sweep point: both placements, every schedule that
/// accepts the configuration's layer count, and FSDP plus one hierarchical
/// scheme when the DP degree allows it.
fn sweep_variants(p: &ParallelismConfig, num_layers: u64) -> Vec<ParallelismConfig> {
    let mut out = Vec::new();
    for placement in [Placement::DpOut, Placement::PpOut] {
        for schedule in [Schedule::OneFOneB, Schedule::DoraPP, Schedule::InterleavedZbv] {
            let chunks = match schedule {
                Schedule::OneFOneB => p.pp,
                Schedule::DoraPP => {
                    let c = p.num_chunks() as u64;
                    if c.is_multiple_of(p.pp) {
                        c
                    } else {
                        p.pp
                    }
                }
                Schedule::InterleavedZbv => {
                    let c = p.num_chunks() as u64;
                    if c.is_multiple_of(2 * p.pp) {
                        c
                    } else {
                        2 * p.pp
                    }
                }
            };
            if chunks > num_layers {
                continue;
            }
            let mut schemes = vec![DpScheme::Fsdp];
            if p.dp.is_multiple_of(2) && p.dp > 2 {
                schemes.push(DpScheme::Hsdp { replica_groups: 2 });
            }
            for scheme in schemes {
                let mut v = p.clone();
                v.placement = placement;
                v.schedule = schedule;
                v.dp_scheme = scheme;
                let base = num_layers / chunks;
                let extra = (num_layers % chunks) as usize;
                v.chunk_partition = (0..chunks as usize)
                    .map(|i| if i < extra { base + 1 } else { base })
                    .collect();
                out.push(v);
            }
        }
    }
    out
}

fn cmd_sweep(cli: &Cli, assumptions: &Assumptions, args: &SweepArgs) -> Result<(), Error> {
    if args.values.is_empty() {
        return Err(Error::Parse("sweep: empty axis value list".to_string()));
    }
    let (base_model, base_topo, cfg) = load_eval_inputs(cli, assumptions, &args.base)?;
    let mut csv = String::from(
        "axis,value,placement,schedule,dp_scheme,iteration_time_s,\
         cross_building_bytes,num_microbatches\n",
    );
    let axis_name = match args.axis {
        SweepAxis::Oversub => "oversub",
        SweepAxis::LatencyUs => "latency_us",
        SweepAxis::DistanceKm => "distance_km",
        SweepAxis::Experts => "experts",
        SweepAxis::Batch => "batch",
    };
    for &value in &args.values {
        let mut model = base_model.clone();
        let mut topo = base_topo.clone();
        let mut batch = cfg.batch;
        match args.axis {
            SweepAxis::Oversub => {
                topo.link_classes.cross_building.oversubscription = value;
            }
            SweepAxis::LatencyUs => {
                topo.set_uniform_cross_distance_km(
                    value / assumptions.us_per_km,
                    assumptions.us_per_km,
                );
            }
            SweepAxis::DistanceKm => {
                topo.set_uniform_cross_distance_km(value, assumptions.us_per_km);
            }
            SweepAxis::Experts => {
                model.num_experts = value as u64;
                model.validate()?;
            }
            SweepAxis::Batch => {
                batch.global_batch_size = value as u64;
            }
        }
        topo.validate()?;
        for variant in sweep_variants(&cfg.parallelism, model.num_layers) {
            let violations = validate_config(&model, &batch, &variant, &topo, assumptions);
            if !violations.is_empty() {
                continue;
            }
            let dag = build_full(&model, &batch, &variant, &topo, assumptions, cli.seed)?;
            let t = reconstruct(&dag)?;
            let time = t.iteration_time(variant.placement);
            let cross = match variant.placement {
                Placement::DpOut => t.cross_building_bytes_dp_out,
                Placement::PpOut => t.cross_building_bytes_pp_out,
            };
            csv.push_str(&format!(
                "{},{},{},{},{},{:.9},{},{}\n",
                axis_name,
                value,
                variant.placement,
                variant.schedule,
                variant.dp_scheme,
                time,
                cross,
                dag.meta.num_microbatches,
            ));
        }
    }
    let path = write_out(&cli.out_dir, "sweep.csv", &csv)?;
    say!("wrote {}", path.display());
    Ok(())
}
