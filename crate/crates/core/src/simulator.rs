//! Seeded simulation loop coupling a game, agents and an institution, with
//! metrics, CSV/JSON reports and compliant-trajectory export.
//!
//! Each tick runs in a fixed order: agents act, capability masks clamp,
//! base payoffs are computed, signals enter the evidence window, the oracle
//! and controller run, modified payoffs are formed, learners update, and
//! metrics are recorded. Ticks are numbered from 1 and keep counting across
//! episodes; institutional standings and the evidence window reset at every
//! episode boundary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::AnalysisConfig;
use crate::agents::{build_policy, ActContext, AgentError, AgentSpec, Experience, InstitutionView, Observation, Policy};
use crate::engine::log::{EventDraft, EventKind, EventLog};
use crate::engine::window::{EvidenceWindow, SignalRecord};
use crate::engine::{modified_payoff, EngineError, GovernanceEngine};
use crate::game::{CournotMarket, Game, GameError, WelfareStandard, DEFAULT_GRID_RESOLUTION};
use crate::graph::{Direction, Finding, GovernanceGraph, GraphError, StateId, Tick, Topology, TopologyParams};
use crate::manifest::{compile, parse_manifest_with_constants, BoundInstitution, ManifestError};

/// State label used for every agent when the institution is disabled.
pub const UNGOVERNED_STATE: &str = "ungoverned";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: ManifestError,
    },
    #[error("{path}: {source}")]
    Graph {
        path: PathBuf,
        #[source]
        source: GraphError,
    },
    #[error("manifest does not compile against the graph: {}", join_findings(.0))]
    Compile(Vec<Finding>),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("collusion index undefined: cartel and Nash prices coincide")]
    DegenerateMarket,
}

fn join_findings(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn default_true() -> bool {
    true
}

fn default_one() -> u64 {
    1
}

fn default_p_detect() -> f64 {
    1.0
}

fn default_grid() -> usize {
    DEFAULT_GRID_RESOLUTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstitutionConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// Manifest document, relative to the config file.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    /// Graph document, relative to the config file. Mutually exclusive with
    /// `topology`.
    #[serde(default)]
    pub graph: Option<PathBuf>,
    #[serde(default)]
    pub topology: Option<Topology>,
    #[serde(default)]
    pub topology_params: TopologyParams,
    /// Replaces the sanction of a canonical topology, or of every escalation
    /// in a graph document.
    #[serde(default)]
    pub sanction_override: Option<f64>,
    #[serde(default = "default_p_detect")]
    pub p_detect: f64,
    /// Evidence window capacity in ticks; defaults to the manifest's
    /// longest window.
    #[serde(default)]
    pub window: Option<usize>,
}

impl Default for InstitutionConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            manifest: None,
            graph: None,
            topology: None,
            topology_params: TopologyParams::default(),
            sanction_override: None,
            p_detect: 1.0,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub game: Game,
    #[serde(default = "default_welfare")]
    pub welfare: WelfareStandard,
    #[serde(default)]
    pub institution: InstitutionConfig,
    pub agents: Vec<AgentSpec>,
    pub ticks: u64,
    #[serde(default = "default_one")]
    pub episodes: u64,
    #[serde(default)]
    pub seed: u64,
    /// Action grid resolution for agents that search a grid.
    #[serde(default = "default_grid")]
    pub grid_resolution: usize,
    /// Keep learned values across episodes.
    #[serde(default = "default_true")]
    pub carry_learning: bool,
    /// Ticks at the start of each episode excluded from the mean collusion
    /// index.
    #[serde(default)]
    pub burn_in: u64,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_welfare() -> WelfareStandard {
    WelfareStandard::PlayerSum
}

impl SimConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, SimError> {
        let mut cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = read(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, dir).map_err(|e| match e {
            SimError::Config(m) => SimError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        if relative.is_absolute() {
            relative.to_path_buf()
        } else {
            self.base_dir.join(relative)
        }
    }

    pub fn agent_ids(&self) -> Vec<String> {
        self.agents.iter().map(|a| a.id.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.game.validate()?;
        let cfg = |m: String| Err(SimError::Config(m));
        if self.ticks == 0 {
            return cfg("ticks must be at least 1".into());
        }
        if self.episodes == 0 {
            return cfg("episodes must be at least 1".into());
        }
        if self.agents.len() != self.game.players() {
            return cfg(format!(
                "{} agents configured for a {}-player game",
                self.agents.len(),
                self.game.players()
            ));
        }
        let mut ids: Vec<&str> = self.agents.iter().map(|a| a.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return cfg(format!("duplicate agent id `{}`", w[0]));
        }
        if let Some(bad) = self.agents.iter().find(|a| !valid_agent_id(&a.id)) {
            return cfg(format!("agent id `{}` must be alphanumeric, `_` or `-`", bad.id));
        }
        let inst = &self.institution;
        if !(0.0..=1.0).contains(&inst.p_detect) {
            return cfg(format!("p_detect {} outside [0, 1]", inst.p_detect));
        }
        if inst.enabled {
            if inst.manifest.is_none() {
                return cfg("an enabled institution needs a manifest".into());
            }
            if inst.graph.is_some() == inst.topology.is_some() {
                return cfg("set exactly one of institution.graph and institution.topology".into());
            }
            if inst.sanction_override.is_some_and(|s| !(s >= 0.0)) {
                return cfg("sanction_override must be non-negative".into());
            }
        }
        Ok(())
    }

    /// Loads and compiles the institution, if enabled.
    pub fn institution(&self) -> Result<Option<BoundInstitution>, SimError> {
        let inst = &self.institution;
        if !inst.enabled {
            return Ok(None);
        }
        let manifest_path = self.resolve(inst.manifest.as_deref().expect("validated"));
        let manifest = parse_manifest_with_constants(&read(&manifest_path)?, &self.game.benchmarks())
            .map_err(|source| SimError::Manifest {
                path: manifest_path.clone(),
                source,
            })?;
        let graph = match (&inst.graph, inst.topology) {
            (Some(p), _) => {
                let path = self.resolve(p);
                let mut g = GovernanceGraph::from_toml(&read(&path)?)
                    .map_err(|source| SimError::Graph { path, source })?;
                if let Some(s) = inst.sanction_override {
                    for t in g.transitions.iter_mut().filter(|t| t.direction == Direction::Escalation) {
                        t.sanction = s;
                    }
                }
                g
            }
            (None, Some(topology)) => {
                let mut params = inst.topology_params.clone();
                if let Some(s) = inst.sanction_override {
                    params.sanction = s;
                }
                topology.build(&params)
            }
            (None, None) => return Err(SimError::Config("no graph configured".into())),
        };
        let bound = compile(&manifest, &graph).map_err(SimError::Compile)?;
        for w in &bound.warnings {
            log::warn!("{w}");
        }
        Ok(Some(bound))
    }
}

fn valid_agent_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn read(path: &Path) -> Result<String, SimError> {
    std::fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Everything recorded about one tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickMetrics {
    pub tick: Tick,
    pub episode: u64,
    pub proposed: Vec<f64>,
    pub actions: Vec<f64>,
    pub aggregate: f64,
    pub payoffs: Vec<f64>,
    pub modified_payoffs: Vec<f64>,
    pub levies: Vec<f64>,
    pub sanctions: Vec<f64>,
    /// State each agent acted from.
    pub states_before: Vec<StateId>,
    /// State after this tick's enforcement.
    pub states_after: Vec<StateId>,
    pub welfare_player_sum: f64,
    pub welfare_total_surplus: Option<f64>,
    pub collusion_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub agent_ids: Vec<String>,
    pub initial_state: StateId,
    pub manifest_version: Option<String>,
    pub welfare_standard: WelfareStandard,
    pub ticks: Vec<TickMetrics>,
    pub violation_counts: BTreeMap<String, u64>,
    /// Agent → state → fraction of that agent's ticks spent there after
    /// enforcement.
    pub occupancy: BTreeMap<String, BTreeMap<StateId, f64>>,
    pub compliance_rate: f64,
    pub total_sanctions: f64,
    pub transitions: u64,
    pub restorations: u64,
    pub mean_collusion_index: Option<f64>,
    pub mean_welfare: f64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub metrics: MetricsReport,
    pub log: EventLog,
}

/// `(P − P_nash) / (P_cartel − P_nash)` clamped to `[−1, 2]`.
pub fn collusion_index(prices: &[f64], market: &CournotMarket) -> Result<Vec<f64>, SimError> {
    let cf = market.closed_forms();
    let span = cf.cartel_price - cf.nash_price;
    if span.abs() < f64::EPSILON {
        return Err(SimError::DegenerateMarket);
    }
    Ok(prices
        .iter()
        .map(|p| ((p - cf.nash_price) / span).clamp(-1.0, 2.0))
        .collect())
}

fn clamp_to_game(game: &Game, player: usize, action: f64) -> f64 {
    let (lo, hi) = game.action_bounds(player);
    let a = if action.is_finite() { action.clamp(lo, hi) } else { lo };
    if game.is_finite() {
        a.round()
    } else {
        a
    }
}

/// Runs a configured simulation.
pub fn run(config: &SimConfig) -> Result<RunOutput, SimError> {
    config.validate()?;
    let bound = config.institution()?;
    run_with(config, bound)
}

/// Runs with an already compiled institution (or none).
pub fn run_with(config: &SimConfig, bound: Option<BoundInstitution>) -> Result<RunOutput, SimError> {
    config.validate()?;
    let game = &config.game;
    let ids = config.agent_ids();
    let n = ids.len();
    let constants = match &bound {
        Some(b) => b.manifest.constants.clone(),
        None => game.benchmarks(),
    };
    let window_capacity = match &bound {
        Some(b) => {
            let needed = b.manifest.max_evidence_depth();
            match config.institution.window {
                Some(w) if w < needed => {
                    return Err(SimError::Config(format!(
                        "evidence window {w} is shorter than the manifest's longest window {needed}"
                    )))
                }
                Some(w) => w,
                None => needed,
            }
        }
        None => 1,
    };
    let initial_state = bound
        .as_ref()
        .map_or(UNGOVERNED_STATE.to_string(), |b| b.graph.initial_state().id.clone());
    let manifest_version = bound.as_ref().map(|b| b.manifest.version.clone());

    let agents: Vec<(String, Option<String>)> = config.agents.iter().map(|a| (a.id.clone(), a.role.clone())).collect();
    let mut engine = bound
        .map(|b| GovernanceEngine::new(b, &agents, config.institution.p_detect, config.seed));
    let mut policies: Vec<Box<dyn Policy>> = config
        .agents
        .iter()
        .enumerate()
        .map(|(i, spec)| build_policy(spec, game, i, config.grid_resolution, config.seed))
        .collect::<Result<_, _>>()?;
    let market = match game {
        Game::Cournot(m) => Some(m),
        _ => None,
    };

    let mut log = EventLog::new();
    let mut ticks = Vec::with_capacity((config.ticks * config.episodes) as usize);
    let mut tick: Tick = 0;

    for episode in 0..config.episodes {
        let mut window = EvidenceWindow::new(window_capacity);
        if episode > 0 {
            if let Some(e) = engine.as_mut() {
                e.reset_standings();
            }
            if !config.carry_learning {
                policies.iter_mut().for_each(|p| p.reset_learning());
            }
        }
        policies.iter_mut().for_each(|p| p.start_episode());
        let zeros = vec![0.0; n];
        let mut signals = SignalRecord::for_tick(game, tick, &ids, &zeros, &zeros);
        let mut last_modified = vec![0.0; n];

        for _ in 0..config.ticks {
            tick += 1;
            let observations: Vec<Observation> = (0..n)
                .map(|i| observation(engine.as_ref(), &ids, i, tick, &initial_state, last_modified[i], &signals, &constants))
                .collect();

            let roles = engine.as_ref().map(|e| e.roles().clone()).unwrap_or_default();
            let ctx = ActContext {
                game,
                institution: engine.as_ref().map(|e| InstitutionView {
                    bound: e.bound(),
                    roles: &roles,
                    p_detect: e.p_detect(),
                    window: &window,
                    agent_ids: &ids,
                }),
            };
            let mut proposed = Vec::with_capacity(n);
            for (i, p) in policies.iter_mut().enumerate() {
                let raw = p.act(&observations[i], &ctx);
                let a = clamp_to_game(game, i, raw);
                if a != raw {
                    log::debug!("agent `{}` proposed {raw} outside the game's range; using {a}", ids[i]);
                }
                if p.take_missed_deadline() {
                    log.append(EventDraft::new(tick, ids[i].clone(), EventKind::AdvisoryMatch))
                        .map_err(EngineError::from)?;
                }
                proposed.push(a);
            }

            let mut effective = proposed.clone();
            if let Some(e) = engine.as_ref() {
                for i in 0..n {
                    let standing = e.standing(&ids[i]).expect("every agent has a standing");
                    let state = e.bound().graph.state(&standing.current_state).expect("standing state exists");
                    let (a, clamped) = crate::graph::apply_capability_mask(state, proposed[i])
                        .map_err(EngineError::from)?;
                    if clamped {
                        effective[i] = a;
                        log.append(
                            EventDraft::new(tick, ids[i].clone(), EventKind::CapabilityClamp)
                                .amount(proposed[i] - a),
                        )
                        .map_err(EngineError::from)?;
                    }
                }
            }

            let payoffs = game.payoffs_unchecked(&effective);
            let records = SignalRecord::for_tick(game, tick, &ids, &proposed, &effective);
            window.push_tick(tick, records);

            let (levies, sanctions, states_before, states_after) = match engine.as_mut() {
                Some(e) => {
                    let out = e.step(&mut window, tick, &mut log)?;
                    let levies: Vec<f64> = ids.iter().map(|id| out.levies[id]).collect();
                    let sanctions: Vec<f64> = ids.iter().map(|id| out.sanctions.get(id).copied().unwrap_or(0.0)).collect();
                    let before: Vec<StateId> = ids.iter().map(|id| out.acted_from[id].clone()).collect();
                    let after: Vec<StateId> = ids.iter().map(|id| e.standing(id).expect("standing").current_state.clone()).collect();
                    (levies, sanctions, before, after)
                }
                None => (zeros.clone(), zeros.clone(), vec![initial_state.clone(); n], vec![initial_state.clone(); n]),
            };
            let modified: Vec<f64> = (0..n).map(|i| modified_payoff(payoffs[i], levies[i], sanctions[i])).collect();

            signals = ids
                .iter()
                .map(|id| window.latest_for(id).expect("just pushed").clone())
                .collect();
            let next: Vec<Observation> = (0..n)
                .map(|i| observation(engine.as_ref(), &ids, i, tick + 1, &initial_state, modified[i], &signals, &constants))
                .collect();
            for (i, p) in policies.iter_mut().enumerate() {
                p.update(&Experience {
                    observation: &observations[i],
                    action: effective[i],
                    modified_payoff: modified[i],
                    next_observation: &next[i],
                });
                p.reward(tick, payoffs[i], modified[i]);
            }
            last_modified = modified.clone();

            let aggregate = game.aggregate(&effective);
            let welfare_player_sum = payoffs.iter().sum();
            let welfare_total_surplus = market.map(|m| {
                let q = effective.iter().sum::<f64>().min(m.intercept / m.slope);
                welfare_player_sum + 0.5 * m.slope * q * q
            });
            let collusion = match market {
                Some(m) => Some(collusion_index(&[aggregate], m)?[0]),
                None => None,
            };
            ticks.push(TickMetrics {
                tick,
                episode,
                proposed,
                actions: effective,
                aggregate,
                payoffs,
                modified_payoffs: modified,
                levies,
                sanctions,
                states_before,
                states_after,
                welfare_player_sum,
                welfare_total_surplus,
                collusion_index: collusion,
            });
        }
    }

    let metrics = summarise(config, ids, initial_state, manifest_version, ticks, &log);
    Ok(RunOutput { metrics, log })
}

#[allow(clippy::too_many_arguments)]
fn observation(
    engine: Option<&GovernanceEngine>,
    ids: &[String],
    player: usize,
    tick: Tick,
    initial_state: &str,
    last_payoff: f64,
    signals: &[SignalRecord],
    constants: &BTreeMap<String, f64>,
) -> Observation {
    let standing = engine.and_then(|e| e.standing(&ids[player]).cloned());
    Observation {
        tick,
        agent_id: ids[player].clone(),
        player,
        own_state: standing
            .as_ref()
            .map_or(initial_state.to_string(), |s| s.current_state.clone()),
        own_standing: standing,
        own_last_payoff: last_payoff,
        public_signals: signals.to_vec(),
        constants: constants.clone(),
    }
}

fn summarise(
    config: &SimConfig,
    agent_ids: Vec<String>,
    initial_state: StateId,
    manifest_version: Option<String>,
    ticks: Vec<TickMetrics>,
    log: &EventLog,
) -> MetricsReport {
    let n = agent_ids.len();
    let total = ticks.len() as f64;
    let mut occupancy: BTreeMap<String, BTreeMap<StateId, f64>> = BTreeMap::new();
    let mut compliant = 0usize;
    for t in &ticks {
        for (i, s) in t.states_after.iter().enumerate() {
            *occupancy.entry(agent_ids[i].clone()).or_default().entry(s.clone()).or_default() += 1.0;
            if *s == initial_state {
                compliant += 1;
            }
        }
    }
    for states in occupancy.values_mut() {
        for v in states.values_mut() {
            *v /= total;
        }
    }
    let mut violation_counts = BTreeMap::new();
    for e in log.entries().iter().filter(|e| e.kind == EventKind::ViolationDetected) {
        if let Some(s) = &e.statement {
            *violation_counts.entry(s.clone()).or_insert(0u64) += 1;
        }
    }
    let total_sanctions = ticks.iter().flat_map(|t| t.sanctions.iter()).sum();
    let ci: Vec<f64> = ticks
        .iter()
        .filter(|t| t.tick - t.episode * config.ticks > config.burn_in)
        .filter_map(|t| t.collusion_index)
        .collect();
    let mean_collusion_index = (!ci.is_empty()).then(|| ci.iter().sum::<f64>() / ci.len() as f64);
    let mean_welfare = ticks
        .iter()
        .map(|t| match config.welfare {
            WelfareStandard::TotalSurplus => t.welfare_total_surplus.unwrap_or(t.welfare_player_sum),
            WelfareStandard::PlayerSum => t.welfare_player_sum,
        })
        .sum::<f64>()
        / total;
    MetricsReport {
        agent_ids,
        initial_state,
        manifest_version,
        welfare_standard: config.welfare,
        compliance_rate: compliant as f64 / (total * n as f64),
        transitions: log.count(EventKind::Transition) as u64,
        restorations: log.count(EventKind::Restoration) as u64,
        ticks,
        violation_counts,
        occupancy,
        total_sanctions,
        mean_collusion_index,
        mean_welfare,
    }
}

/// Column order of [`metrics_csv`]: `tick, episode, aggregate,
/// welfare_player_sum, welfare_total_surplus, collusion_index`, then for
/// each agent `<id>_proposed, <id>_action, <id>_payoff,
/// <id>_modified_payoff, <id>_levy, <id>_sanction, <id>_state_before,
/// <id>_state_after`. Missing values are empty.
pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "tick",
        "episode",
        "aggregate",
        "welfare_player_sum",
        "welfare_total_surplus",
        "collusion_index",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for id in &report.agent_ids {
        for col in [
            "proposed",
            "action",
            "payoff",
            "modified_payoff",
            "levy",
            "sanction",
            "state_before",
            "state_after",
        ] {
            header.push(format!("{id}_{col}"));
        }
    }
    w.write_record(&header).expect("in-memory write");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in &report.ticks {
        let mut row = vec![
            t.tick.to_string(),
            t.episode.to_string(),
            t.aggregate.to_string(),
            t.welfare_player_sum.to_string(),
            opt(t.welfare_total_surplus),
            opt(t.collusion_index),
        ];
        for i in 0..report.agent_ids.len() {
            row.extend([
                t.proposed[i].to_string(),
                t.actions[i].to_string(),
                t.payoffs[i].to_string(),
                t.modified_payoffs[i].to_string(),
                t.levies[i].to_string(),
                t.sanctions[i].to_string(),
                t.states_before[i].clone(),
                t.states_after[i].clone(),
            ]);
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary<'a> {
    pub agents: &'a [String],
    pub ticks: usize,
    pub manifest_version: Option<&'a str>,
    pub compliance_rate: f64,
    pub mean_collusion_index: Option<f64>,
    pub mean_welfare: f64,
    pub welfare_standard: WelfareStandard,
    pub total_sanctions: f64,
    pub transitions: u64,
    pub restorations: u64,
    pub violation_counts: &'a BTreeMap<String, u64>,
    pub occupancy: &'a BTreeMap<String, BTreeMap<StateId, f64>>,
}

pub fn summary(report: &MetricsReport) -> Summary<'_> {
    Summary {
        agents: &report.agent_ids,
        ticks: report.ticks.len(),
        manifest_version: report.manifest_version.as_deref(),
        compliance_rate: report.compliance_rate,
        mean_collusion_index: report.mean_collusion_index,
        mean_welfare: report.mean_welfare,
        welfare_standard: report.welfare_standard,
        total_sanctions: report.total_sanctions,
        transitions: report.transitions,
        restorations: report.restorations,
        violation_counts: &report.violation_counts,
        occupancy: &report.occupancy,
    }
}

pub fn summary_json(report: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(&summary(report)).expect("summary serializes");
    s.push('\n');
    s
}

/// What the agent knew when it acted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSnapshot {
    pub own_last_payoff: f64,
    /// Previous tick's effective actions in player order; zeros at the
    /// start of an episode.
    pub last_actions: Vec<f64>,
    pub last_aggregate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstitutionalContext {
    pub state: StateId,
    pub manifest_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlinfRecord {
    pub episode: u64,
    pub tick: Tick,
    pub agent: String,
    pub observation: ObservationSnapshot,
    pub context: InstitutionalContext,
    pub action: f64,
}

/// Agent-ticks from compliant spans: runs of consecutive ticks within an
/// episode that end in the initial state. The first `k − 1` ticks of every
/// span are warm-up and are not exported.
pub fn rlinf_export(report: &MetricsReport, k: usize) -> Vec<RlinfRecord> {
    let k = k.max(1);
    let n = report.agent_ids.len();
    let mut out = Vec::new();
    let mut run = vec![0usize; n];
    let mut prev: Option<&TickMetrics> = None;
    for t in &report.ticks {
        let same_episode = prev.is_some_and(|p| p.episode == t.episode);
        if !same_episode {
            run.iter_mut().for_each(|r| *r = 0);
        }
        for i in 0..n {
            if t.states_after[i] != report.initial_state {
                run[i] = 0;
                continue;
            }
            run[i] += 1;
            if run[i] < k {
                continue;
            }
            let observation = match prev.filter(|_| same_episode) {
                Some(p) => ObservationSnapshot {
                    own_last_payoff: p.modified_payoffs[i],
                    last_actions: p.actions.clone(),
                    last_aggregate: p.aggregate,
                },
                None => ObservationSnapshot {
                    own_last_payoff: 0.0,
                    last_actions: vec![0.0; n],
                    last_aggregate: 0.0,
                },
            };
            out.push(RlinfRecord {
                episode: t.episode,
                tick: t.tick,
                agent: report.agent_ids[i].clone(),
                observation,
                context: InstitutionalContext {
                    state: t.states_before[i].clone(),
                    manifest_version: report.manifest_version.clone(),
                },
                action: t.actions[i],
            });
        }
        prev = Some(t);
    }
    out
}

pub fn rlinf_jsonl(records: &[RlinfRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market() -> CournotMarket {
        CournotMarket::new(100.0, 1.0, 10.0, 90.0, 2).unwrap()
    }

    #[test]
    fn collusion_index_examples() {
        let ci = collusion_index(&[40.0, 55.0, 47.5, 100.0, 0.0], &market()).unwrap();
        assert_eq!(ci, vec![0.0, 1.0, 0.5, 2.0, -1.0]);
    }

    #[test]
    fn degenerate_market_has_no_index() {
        let m = CournotMarket {
            intercept: 10.0,
            slope: 1.0,
            marginal_cost: 10.0,
            capacity: 10.0,
            players: 2,
        };
        assert!(matches!(collusion_index(&[10.0], &m), Err(SimError::DegenerateMarket)));
    }

    fn ungoverned(policy: &str, ticks: u64) -> SimConfig {
        SimConfig::from_toml(
            &format!(
                r#"
ticks = {ticks}
seed = 3
[game]
kind = "cournot"
intercept = 100.0
slope = 1.0
marginal_cost = 10.0
capacity = 90.0
players = 2
[[agents]]
id = "firm_0"
policy = {policy}
[[agents]]
id = "firm_1"
policy = {policy}
"#
            ),
            ".",
        )
        .unwrap()
    }

    #[test]
    fn best_response_dynamics_converge_to_nash() {
        let out = run(&ungoverned(r#"{ kind = "best_response" }"#, 100)).unwrap();
        let first = out
            .metrics
            .ticks
            .iter()
            .position(|t| t.actions.iter().all(|q| (q - 30.0).abs() < 1e-6))
            .expect("converges");
        assert!(first < 100);
        assert_eq!(out.metrics.ticks[0].actions, vec![45.0, 45.0]);
        assert_eq!(out.metrics.ticks[1].actions, vec![22.5, 22.5]);
    }

    #[test]
    fn ungoverned_runs_are_fully_compliant() {
        let out = run(&ungoverned(r#"{ kind = "collusive" }"#, 20)).unwrap();
        assert_eq!(out.metrics.compliance_rate, 1.0);
        assert!(out.log.is_empty());
        for t in &out.metrics.ticks {
            assert_eq!(t.payoffs, t.modified_payoffs);
            assert_eq!(t.collusion_index, Some(1.0));
        }
        assert_eq!(rlinf_export(&out.metrics, 10).len(), 2 * 11);
    }

    #[test]
    fn rlinf_spans_reset_between_episodes() {
        let mut cfg = ungoverned(r#"{ kind = "collusive" }"#, 5);
        cfg.episodes = 3;
        let out = run(&cfg).unwrap();
        let recs = rlinf_export(&out.metrics, 5);
        assert_eq!(recs.len(), 2 * 3);
        assert!(recs.iter().all(|r| r.tick % 5 == 0));
        assert_eq!(rlinf_export(&out.metrics, 1).len(), 30);
        assert_eq!(rlinf_export(&out.metrics, 6).len(), 0);
    }

    #[test]
    fn csv_has_one_row_per_tick() {
        let out = run(&ungoverned(r#"{ kind = "collusive" }"#, 4)).unwrap();
        let csv = metrics_csv(&out.metrics);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("tick,episode,aggregate,"));
        assert!(csv.lines().nth(1).unwrap().starts_with("1,0,55,"));
    }

    #[test]
    fn config_errors() {
        let mut cfg = ungoverned(r#"{ kind = "collusive" }"#, 4);
        cfg.agents.pop();
        assert!(matches!(run(&cfg), Err(SimError::Config(_))));
        let mut cfg = ungoverned(r#"{ kind = "collusive" }"#, 4);
        cfg.ticks = 0;
        assert!(matches!(run(&cfg), Err(SimError::Config(_))));
        let mut cfg = ungoverned(r#"{ kind = "collusive" }"#, 4);
        cfg.institution.enabled = true;
        assert!(matches!(run(&cfg), Err(SimError::Config(_))));
    }
}
