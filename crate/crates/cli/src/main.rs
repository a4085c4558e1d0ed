use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use institution_core::analysis::{
    calibrate_graph, calibrate_sanction, find_threshold_gaming, find_under_monitored_states, find_zero_cost_cycles,
    prescribed_profile, sanction_sweep, verification_cost_report, verify_incentive_compatibility, LoopholeFinding,
};
use institution_core::engine::log::audit_verify_jsonl;
use institution_core::graph::{has_errors, validate_graph, Finding, GovernanceGraph, Topology, TopologyParams};
use institution_core::manifest::{compile, parse_manifest, parse_manifest_with_constants, BoundInstitution};
use institution_core::simulator::{metrics_csv, rlinf_export, rlinf_jsonl, run, summary_json, SimConfig, SimError};

const LOG_ENV: &str = "INSTITUTION_ENGINE_LOG_LEVEL";

#[derive(Parser)]
#[command(name = "institution-engine", version, about = "Runtime institutional governance for multi-agent games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a manifest and graph, validate the graph and compile the pair.
    Validate(ValidateArgs),
    /// Run a configured simulation and write metrics, summary and event log.
    Simulate(RunArgs),
    /// Report the largest deviation gain and the sanction that removes it.
    Calibrate(GainArgs),
    /// Run the configuration across a grid of sanctions.
    Sweep(SweepArgs),
    /// Search the institution for loopholes and report verification cost.
    Analyze(GainArgs),
    /// Run a simulation and export compliant trajectories.
    ExportRlinf(RunArgs),
    /// Check the hash chain of an event log.
    VerifyLog {
        log: PathBuf,
    },
    /// Print a canonical graph as an editable document.
    EmitCanonical {
        #[arg(long)]
        topology: Topology,
        /// Write `<topology>.toml` into this directory instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args)]
struct ValidateArgs {
    /// Experiment config; supplies the manifest, graph and game constants.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, conflicts_with = "topology")]
    graph: Option<PathBuf>,
    #[arg(long)]
    topology: Option<Topology>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated sanctions; defaults to the config's sanction grid.
    #[arg(long, value_delimiter = ',')]
    sanction_grid: Option<Vec<f64>>,
}

#[derive(Args)]
struct GainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Per-tick gain an agent earns while violating; defaults to the
    /// largest deviation gain from the prescribed profile.
    #[arg(long)]
    gain: Option<f64>,
}

/// Failure carrying the process exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn domain(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

fn env(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io { .. } | SimError::Config(_) | SimError::Agent(_) => env(e),
            _ => domain(e),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Validate(a) => cmd_validate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::ExportRlinf(a) => cmd_export_rlinf(a),
        Command::VerifyLog { log } => cmd_verify_log(&log),
        Command::EmitCanonical { topology, out, force } => cmd_emit_canonical(topology, out, force),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(env)
}

fn load_config(args: &RunArgs) -> Result<SimConfig, Failure> {
    let mut cfg = SimConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed_override {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Collects outputs and refuses to replace existing files unless forced.
struct Outputs {
    dir: Option<PathBuf>,
    force: bool,
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    fn new(dir: Option<PathBuf>, force: bool) -> Self {
        Self { dir, force, files: Vec::new() }
    }

    fn add(&mut self, name: &str, contents: String) {
        if let Some(dir) = &self.dir {
            self.files.push((dir.join(name), contents));
        }
    }

    /// Checks every target before writing any of them.
    fn write(self) -> CmdResult {
        let Some(dir) = &self.dir else { return Ok(()) };
        if !self.force {
            if let Some((p, _)) = self.files.iter().find(|(p, _)| p.exists()) {
                return Err(env(anyhow!("{} exists; pass --force to overwrite", p.display())));
            }
        }
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(env)?;
        for (path, contents) in self.files {
            fs::write(&path, contents)
                .with_context(|| format!("cannot write {}", path.display()))
                .map_err(env)?;
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn print_findings(findings: &[Finding]) {
    for f in findings {
        println!("{f}");
    }
}

fn cmd_validate(a: ValidateArgs) -> CmdResult {
    let cfg = a.config.as_deref().map(SimConfig::from_file).transpose()?;
    let constants = cfg.as_ref().map(|c| c.game.benchmarks()).unwrap_or_default();
    let manifest_path = match (&a.manifest, &cfg) {
        (Some(p), _) => p.clone(),
        (None, Some(c)) => c.resolve(
            c.institution
                .manifest
                .as_deref()
                .ok_or_else(|| env(anyhow!("config has no manifest")))?,
        ),
        (None, None) => return Err(env(anyhow!("pass --manifest or --config"))),
    };
    let text = read(&manifest_path)?;
    let manifest = if constants.is_empty() {
        parse_manifest(&text)
    } else {
        parse_manifest_with_constants(&text, &constants)
    }
    .map_err(|e| domain(anyhow!("{}: {e}", manifest_path.display())))?;

    let graph = match (&a.graph, a.topology, &cfg) {
        (Some(p), _, _) => {
            let text = read(p)?;
            GovernanceGraph::from_toml(&text).map_err(|e| domain(anyhow!("{}: {e}", p.display())))?
        }
        (None, Some(t), _) => t.build(&TopologyParams::default()),
        (None, None, Some(c)) => match c.institution()? {
            Some(bound) => bound.graph,
            None => return Err(env(anyhow!("config has no enabled institution"))),
        },
        (None, None, None) => return Err(env(anyhow!("pass --graph, --topology or --config"))),
    };

    let graph_findings = validate_graph(&graph);
    print_findings(&graph_findings);
    if has_errors(&graph_findings) {
        return Err(domain(anyhow!("graph is invalid")));
    }
    match compile(&manifest, &graph) {
        Ok(bound) => {
            print_findings(&bound.warnings);
            println!(
                "ok: {} statements bound to {} transitions over {} states",
                manifest.statements.len(),
                graph.transitions.len(),
                graph.states.len()
            );
            Ok(())
        }
        Err(findings) => {
            print_findings(&findings);
            Err(domain(anyhow!("manifest does not compile against the graph")))
        }
    }
}

fn cmd_simulate(a: RunArgs) -> CmdResult {
    let cfg = load_config(&a)?;
    let out = run(&cfg)?;
    let m = &out.metrics;
    let ci = m.mean_collusion_index.map_or("n/a".to_string(), |c| format!("{c:.6}"));
    println!(
        "compliance_rate={:.6} mean_collusion_index={ci} total_sanctions={:.6} transitions={} events={}",
        m.compliance_rate,
        m.total_sanctions,
        m.transitions,
        out.log.len()
    );
    let mut files = Outputs::new(a.out, a.force);
    files.add("metrics.csv", metrics_csv(m));
    files.add("summary.json", summary_json(m));
    files.add("events.jsonl", out.log.to_jsonl());
    files.write()
}

fn cmd_calibrate(a: GainArgs) -> CmdResult {
    let cfg = load_config(&a.run)?;
    let prescribed = prescribed_profile(&cfg).map_err(domain)?;
    let margin = cfg.analysis.calibration_margin;
    let c = calibrate_sanction(&cfg.game, &prescribed, cfg.grid_resolution, margin).map_err(domain)?;
    let ic = verify_incentive_compatibility(&cfg.game, &prescribed, c.recommended_sanction, cfg.grid_resolution)
        .map_err(domain)?;
    println!("prescribed={:?}", prescribed.actions());
    println!("max_deviation_gain={}", c.max_deviation_gain);
    println!("recommended_sanction={} (margin {margin})", c.recommended_sanction);
    println!("incentive_compatible={ic}");
    let mut files = Outputs::new(a.run.out, a.run.force);
    files.add("calibration.json", pretty(&c));
    if let Some(bound) = cfg.institution()? {
        let gain = a.gain.unwrap_or(c.max_deviation_gain);
        let graph = calibrate_graph(&bound, gain, margin);
        for t in &graph.transitions {
            println!("transition {} sanction={}", t.id, t.sanction);
        }
        files.add("calibrated_graph.toml", graph.to_toml());
    }
    files.write()
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let cfg = load_config(&a.run)?;
    if !cfg.institution.enabled {
        return Err(env(anyhow!("a sanction sweep needs an enabled institution")));
    }
    let grid = a
        .sanction_grid
        .or_else(|| cfg.analysis.sanction_grid.clone())
        .ok_or_else(|| env(anyhow!("no sanction grid: pass --sanction-grid or set analysis.sanction_grid")))?;
    let points = sanction_sweep(&cfg, &grid, cfg.analysis.seeds_per_point)?;
    println!("{:>12} {:>6} {:>12} {:>12} {:>12}", "sanction", "runs", "compliance", "collusion", "welfare");
    for p in &points {
        let ci = p.collusion_index_mean.map_or("n/a".to_string(), |c| format!("{c:.6}"));
        println!(
            "{:>12} {:>6} {:>12.6} {:>12} {:>12.4}",
            p.sanction, p.runs, p.compliance_mean, ci, p.welfare_mean
        );
    }
    let mut files = Outputs::new(a.run.out, a.run.force);
    files.add("sweep.json", pretty(&points));
    files.write()
}

fn cmd_analyze(a: GainArgs) -> CmdResult {
    let cfg = load_config(&a.run)?;
    let bound: BoundInstitution = cfg
        .institution()?
        .ok_or_else(|| env(anyhow!("analysis needs an enabled institution")))?;
    let prescribed = prescribed_profile(&cfg).map_err(domain)?;
    let gain = match a.gain {
        Some(g) => g,
        None => {
            calibrate_sanction(&cfg.game, &prescribed, cfg.grid_resolution, 0.0)
                .map_err(domain)?
                .max_deviation_gain
        }
    };
    let mut findings: Vec<LoopholeFinding> = find_zero_cost_cycles(&bound, gain);
    findings.extend(
        find_under_monitored_states(&bound, &cfg.game, &prescribed, cfg.grid_resolution).map_err(domain)?,
    );
    findings.extend(
        find_threshold_gaming(
            &bound,
            &cfg.game,
            &prescribed,
            cfg.grid_resolution,
            cfg.analysis.epsilon_margin,
        )
        .map_err(domain)?,
    );
    println!("per_tick_gain={gain}");
    for f in &findings {
        println!("{:?} [{}] margin={} {}", f.kind, f.location.join(" -> "), f.margin, f.explanation);
    }
    println!("{} loophole finding(s)", findings.len());
    let costs: Vec<_> = cfg
        .analysis
        .populations
        .iter()
        .map(|&n| verification_cost_report(&bound.graph, cfg.analysis.params_per_transition, n, cfg.analysis.nominal_d))
        .collect();
    println!("{:>8} {:>12} {:>12} {:>12} {:>10}", "N", "graph", "monitoring", "agent_space", "crossover");
    for c in &costs {
        println!(
            "{:>8} {:>12} {:>12} {:>12} {:>10}",
            c.population, c.graph_cost, c.monitoring_cost, c.agent_space_cost, c.crossover_n
        );
    }
    let mut files = Outputs::new(a.run.out, a.run.force);
    files.add("loopholes.json", pretty(&findings));
    files.add("verification_cost.json", pretty(&costs));
    files.write()
}

fn cmd_export_rlinf(a: RunArgs) -> CmdResult {
    let cfg = load_config(&a)?;
    let out = run(&cfg)?;
    let records = rlinf_export(&out.metrics, cfg.analysis.rlinf_k);
    println!("{} records (k={})", records.len(), cfg.analysis.rlinf_k);
    let mut files = Outputs::new(a.out, a.force);
    files.add("rlinf.jsonl", rlinf_jsonl(&records));
    files.write()
}

fn cmd_verify_log(path: &Path) -> CmdResult {
    let bytes = fs::read(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(env)?;
    let report = audit_verify_jsonl(&bytes);
    if report.valid {
        println!("valid: {} events", report.events);
        Ok(())
    } else {
        let at = report.first_broken.map_or("header".to_string(), |i| i.to_string());
        println!("broken at event {at}");
        Err(domain(anyhow!("{}: hash chain broken at event {at}", path.display())))
    }
}

fn cmd_emit_canonical(topology: Topology, out: Option<PathBuf>, force: bool) -> CmdResult {
    let doc = topology.build(&TopologyParams::default()).to_toml();
    match out {
        None => {
            print!("{doc}");
            Ok(())
        }
        Some(dir) => {
            let mut files = Outputs::new(Some(dir), force);
            files.add(&format!("{}.toml", topology_name(topology)), doc);
            files.write()
        }
    }
}

fn topology_name(t: Topology) -> &'static str {
    match t {
        Topology::TwoState => "two_state",
        Topology::ThreeState => "three_state",
        Topology::FourState => "four_state",
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}
