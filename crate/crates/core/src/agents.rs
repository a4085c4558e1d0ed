//! Agent policies: institution-aware best responders, tabular Q-learners,
//! scripted and fixed-strategy agents, and a bridge to external processes.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::engine::window::{EvidenceWindow, SignalRecord};
use crate::engine::{observe, state_levy};
use crate::game::{Game, NASH_TOLERANCE};
use crate::graph::{step_standing, AgentStanding, StateId, Tick};
use crate::manifest::BoundInstitution;
use crate::engine::fired_statements;
use crate::seed::stream_rng;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent `{agent}`: {message}")]
    InvalidParams { agent: String, message: String },
    #[error("agent `{agent}`: could not reach external policy: {source}")]
    Connect {
        agent: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(agent: &str, message: impl Into<String>) -> AgentError {
    AgentError::InvalidParams {
        agent: agent.to_string(),
        message: message.into(),
    }
}

/// What an agent sees before acting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub tick: Tick,
    pub agent_id: String,
    /// The agent's player index in the game.
    pub player: usize,
    pub own_state: StateId,
    /// Full standing when an institution is active.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub own_standing: Option<AgentStanding>,
    pub own_last_payoff: f64,
    /// Last tick's records for every agent, in player order. Before the
    /// first tick these are zero-action placeholders.
    pub public_signals: Vec<SignalRecord>,
    pub constants: BTreeMap<String, f64>,
}

impl Observation {
    /// Last observed effective actions in player order.
    pub fn last_actions(&self) -> Vec<f64> {
        self.public_signals.iter().map(|r| r.action).collect()
    }

    pub fn last_aggregate(&self) -> f64 {
        self.public_signals.first().map_or(0.0, |r| r.aggregate)
    }
}

/// Everything the institution exposes to agents that model it.
#[derive(Debug, Clone, Copy)]
pub struct InstitutionView<'a> {
    pub bound: &'a BoundInstitution,
    pub roles: &'a BTreeMap<String, String>,
    pub p_detect: f64,
    pub window: &'a EvidenceWindow,
    /// Agent ids in player order.
    pub agent_ids: &'a [String],
}

#[derive(Debug, Clone, Copy)]
pub struct ActContext<'a> {
    pub game: &'a Game,
    pub institution: Option<InstitutionView<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experience<'a> {
    pub observation: &'a Observation,
    pub action: f64,
    pub modified_payoff: f64,
    pub next_observation: &'a Observation,
}

pub trait Policy: Send {
    fn act(&mut self, observation: &Observation, ctx: &ActContext<'_>) -> f64;

    fn update(&mut self, _experience: &Experience<'_>) {}

    /// Clears per-episode position such as a script cursor.
    fn start_episode(&mut self) {}

    /// Forgets everything learned.
    fn reset_learning(&mut self) {}

    /// True if the last `act` fell back to a default because the policy
    /// did not answer in time. Reading clears the flag.
    fn take_missed_deadline(&mut self) -> bool {
        false
    }

    /// Forwards the realised payoff to policies that live elsewhere.
    fn reward(&mut self, _tick: Tick, _payoff: f64, _modified_payoff: f64) {}
}

/// Candidate actions sorted ascending with duplicates removed.
fn sorted_candidates(mut values: Vec<f64>) -> Vec<f64> {
    values.retain(|v| v.is_finite());
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

/// Index of the best value; ties within a relative tolerance go to the
/// earliest entry.
fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        let tol = NASH_TOLERANCE * values[best].abs().max(1.0);
        if v > values[best] + tol {
            best = i;
        }
    }
    best
}

/// Chooses the action maximising expected modified payoff, holding others at
/// their last observed actions.
#[derive(Debug, Clone)]
pub struct BestResponder {
    grid_resolution: usize,
    /// When false, ignores sanctions and levies (myopic defector).
    institution_aware: bool,
}

impl BestResponder {
    pub fn new(grid_resolution: usize, institution_aware: bool) -> Self {
        Self {
            grid_resolution: grid_resolution.max(2),
            institution_aware,
        }
    }

    /// Expected modified payoff of each candidate, with candidates.
    pub fn evaluate(&self, obs: &Observation, ctx: &ActContext<'_>) -> Vec<(f64, f64)> {
        let game = ctx.game;
        let player = obs.player;
        let others = obs.last_actions();
        let mut candidates = game.action_grid(player, self.grid_resolution);
        if let Some(h) = game.best_response_hint(player, &others) {
            candidates.push(h);
        }
        let mut candidates = sorted_candidates(candidates);

        let institution = ctx.institution.filter(|_| self.institution_aware);
        let standing = obs.own_standing.as_ref();
        if let (Some(inst), Some(st)) = (institution, standing) {
            if let Some(state) = inst.bound.graph.state(&st.current_state) {
                candidates = sorted_candidates(
                    candidates.iter().map(|&c| state.capability.project(c)).collect(),
                );
            }
        }

        candidates
            .into_iter()
            .map(|c| {
                let mut actions = others.clone();
                actions[player] = c;
                let base = game.payoff_unchecked(player, &actions);
                let cost = match (institution, standing) {
                    (Some(inst), Some(st)) => expected_institutional_cost(game, inst, st, obs.tick, &actions),
                    _ => 0.0,
                };
                (c, base - cost)
            })
            .collect()
    }
}

/// Levy of the current state plus the detection-weighted sanction of the
/// transition the hypothetical profile would trigger this tick.
fn expected_institutional_cost(
    game: &Game,
    inst: InstitutionView<'_>,
    standing: &AgentStanding,
    tick: Tick,
    actions: &[f64],
) -> f64 {
    let graph = &inst.bound.graph;
    let levy = state_levy(graph, standing);
    let mut window = inst.window.clone();
    if window.latest_tick().is_some_and(|t| t >= tick) {
        return levy;
    }
    window.push_tick(tick, SignalRecord::for_tick(game, tick, inst.agent_ids, actions, actions));
    let Ok(fired) = observe(inst.bound, &window, tick, inst.roles) else {
        return levy;
    };
    let statements = fired
        .get(&standing.agent_id)
        .map(|f| fired_statements(f))
        .unwrap_or_default();
    let sanction = match step_standing(graph, standing, &statements, tick) {
        Ok((_, Some(ev))) => ev.sanction,
        _ => 0.0,
    };
    levy + inst.p_detect * sanction
}

impl Policy for BestResponder {
    fn act(&mut self, obs: &Observation, ctx: &ActContext<'_>) -> f64 {
        let scored = self.evaluate(obs, ctx);
        let values: Vec<f64> = scored.iter().map(|(_, v)| *v).collect();
        scored[argmax_lowest(&values)].0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QLearningParams {
    #[serde(default = "QLearningParams::default_alpha")]
    pub alpha: f64,
    #[serde(default = "QLearningParams::default_gamma")]
    pub gamma: f64,
    #[serde(default = "QLearningParams::default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "QLearningParams::default_epsilon_decay")]
    pub epsilon_decay: f64,
    #[serde(default)]
    pub epsilon_min: f64,
    #[serde(default = "QLearningParams::default_bins")]
    pub aggregate_bins: usize,
    /// Explicit action set; otherwise a uniform grid over the action range.
    #[serde(default)]
    pub actions: Option<Vec<f64>>,
    #[serde(default)]
    pub grid_resolution: Option<usize>,
}

impl QLearningParams {
    fn default_alpha() -> f64 {
        0.1
    }
    fn default_gamma() -> f64 {
        0.95
    }
    fn default_epsilon() -> f64 {
        0.3
    }
    fn default_epsilon_decay() -> f64 {
        0.999
    }
    fn default_bins() -> usize {
        10
    }
}

impl Default for QLearningParams {
    fn default() -> Self {
        Self {
            alpha: Self::default_alpha(),
            gamma: Self::default_gamma(),
            epsilon: Self::default_epsilon(),
            epsilon_decay: Self::default_epsilon_decay(),
            epsilon_min: 0.0,
            aggregate_bins: Self::default_bins(),
            actions: None,
            grid_resolution: None,
        }
    }
}

/// One temporal-difference step toward `reward + γ·max_next`.
pub fn td_update(value: f64, reward: f64, max_next: f64, alpha: f64, gamma: f64) -> f64 {
    value + alpha * (reward + gamma * max_next - value)
}

type QKey = (StateId, usize);

/// Tabular ε-greedy Q-learner over (institutional state, aggregate bin).
#[derive(Debug, Clone)]
pub struct QLearner {
    params: QLearningParams,
    actions: Vec<f64>,
    aggregate_range: (f64, f64),
    epsilon: f64,
    table: BTreeMap<QKey, Vec<f64>>,
    rng: ChaCha8Rng,
    last_choice: Option<(QKey, usize)>,
}

impl QLearner {
    pub fn new(params: QLearningParams, actions: Vec<f64>, aggregate_range: (f64, f64), rng: ChaCha8Rng) -> Self {
        Self {
            epsilon: params.epsilon,
            params,
            actions,
            aggregate_range,
            table: BTreeMap::new(),
            rng,
            last_choice: None,
        }
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn value(&self, state: &str, bin: usize, action_index: usize) -> f64 {
        self.table
            .get(&(state.to_string(), bin))
            .map_or(0.0, |row| row[action_index])
    }

    pub fn set_value(&mut self, state: &str, bin: usize, action_index: usize, value: f64) {
        let n = self.actions.len();
        self.table.entry((state.to_string(), bin)).or_insert_with(|| vec![0.0; n])[action_index] = value;
    }

    pub fn bin(&self, aggregate: f64) -> usize {
        let bins = self.params.aggregate_bins.max(1);
        let (lo, hi) = self.aggregate_range;
        if hi <= lo {
            return 0;
        }
        let x = ((aggregate - lo) / (hi - lo)).clamp(0.0, 1.0);
        ((x * bins as f64) as usize).min(bins - 1)
    }

    fn key(&self, obs: &Observation) -> QKey {
        (obs.own_state.clone(), self.bin(obs.last_aggregate()))
    }

    fn row(&self, key: &QKey) -> Vec<f64> {
        self.table
            .get(key)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.actions.len()])
    }
}

impl Policy for QLearner {
    fn act(&mut self, obs: &Observation, _ctx: &ActContext<'_>) -> f64 {
        let key = self.key(obs);
        let explore = self.rng.random::<f64>() < self.epsilon;
        let index = if explore {
            self.rng.random_range(0..self.actions.len())
        } else {
            argmax_lowest(&self.row(&key))
        };
        self.epsilon = (self.epsilon * self.params.epsilon_decay).max(self.params.epsilon_min);
        self.last_choice = Some((key, index));
        self.actions[index]
    }

    fn update(&mut self, exp: &Experience<'_>) {
        let Some((key, index)) = self.last_choice.take() else {
            return;
        };
        let next = self.key(exp.next_observation);
        let max_next = self.row(&next).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let n = self.actions.len();
        let cell = &mut self.table.entry(key).or_insert_with(|| vec![0.0; n])[index];
        *cell = td_update(*cell, exp.modified_payoff, max_next, self.params.alpha, self.params.gamma);
    }

    fn reset_learning(&mut self) {
        self.table.clear();
        self.epsilon = self.params.epsilon;
        self.last_choice = None;
    }
}

/// Plays a fixed sequence; repeats the last entry once exhausted. A
/// one-entry script is a constant and never warns.
#[derive(Debug, Clone)]
pub struct Scripted {
    agent_id: String,
    script: Vec<f64>,
    cursor: usize,
    warned: bool,
}

impl Scripted {
    pub fn new(agent_id: impl Into<String>, script: Vec<f64>) -> Self {
        assert!(!script.is_empty(), "script must not be empty");
        Self {
            agent_id: agent_id.into(),
            script,
            cursor: 0,
            warned: false,
        }
    }
}

impl Policy for Scripted {
    fn act(&mut self, _obs: &Observation, _ctx: &ActContext<'_>) -> f64 {
        let i = self.cursor.min(self.script.len() - 1);
        if self.cursor >= self.script.len() && self.script.len() > 1 && !self.warned {
            log::warn!(
                "agent `{}` exhausted its {}-entry script; repeating the last entry",
                self.agent_id,
                self.script.len()
            );
            self.warned = true;
        }
        self.cursor += 1;
        self.script[i]
    }

    fn start_episode(&mut self) {
        self.cursor = 0;
    }
}

/// Always plays the same action.
#[derive(Debug, Clone)]
pub struct Constant(pub f64);

impl Policy for Constant {
    fn act(&mut self, _obs: &Observation, _ctx: &ActContext<'_>) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Endpoint {
    /// Child process speaking on stdin/stdout.
    Command { program: String, #[serde(default)] args: Vec<String> },
    /// TCP peer at `host:port`.
    Tcp { address: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalParams {
    pub endpoint: Endpoint,
    #[serde(default = "ExternalParams::default_deadline")]
    pub deadline_ms: u64,
    #[serde(default)]
    pub default_action: f64,
}

impl ExternalParams {
    fn default_deadline() -> u64 {
        1000
    }
}

/// Policy living in another process, reached over newline-delimited JSON.
///
/// Engine to agent: `{"type":"observe","tick":t,"observation":{..}}` and
/// `{"type":"reward","tick":t,"payoff":u,"modified_payoff":v}`. Agent to
/// engine: `{"type":"act","action":x}`, optionally with the `tick` it
/// answers so stale replies can be discarded.
pub struct ExternalAgent {
    agent_id: String,
    writer: Box<dyn Write + Send>,
    replies: Receiver<serde_json::Value>,
    deadline: Duration,
    default_action: f64,
    missed: bool,
    child: Option<Child>,
}

impl std::fmt::Debug for ExternalAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalAgent")
            .field("agent_id", &self.agent_id)
            .field("deadline", &self.deadline)
            .finish_non_exhaustive()
    }
}

impl ExternalAgent {
    pub fn connect(agent_id: &str, params: &ExternalParams) -> Result<Self, AgentError> {
        let connect_err = |source| AgentError::Connect {
            agent: agent_id.to_string(),
            source,
        };
        let (writer, reader, child): (Box<dyn Write + Send>, Box<dyn BufRead + Send>, Option<Child>) =
            match &params.endpoint {
                Endpoint::Command { program, args } => {
                    let mut child = Command::new(program)
                        .args(args)
                        .stdin(Stdio::piped())
                        .stdout(Stdio::piped())
                        .stderr(Stdio::inherit())
                        .spawn()
                        .map_err(connect_err)?;
                    let stdin = child.stdin.take().expect("stdin is piped");
                    let stdout = child.stdout.take().expect("stdout is piped");
                    (Box::new(stdin), Box::new(BufReader::new(stdout)), Some(child))
                }
                Endpoint::Tcp { address } => {
                    let stream = TcpStream::connect(address).map_err(connect_err)?;
                    let read_half = stream.try_clone().map_err(connect_err)?;
                    (Box::new(stream), Box::new(BufReader::new(read_half)), None)
                }
            };
        let (tx, rx) = mpsc::channel();
        let id = agent_id.to_string();
        thread::spawn(move || {
            for line in reader.lines() {
                let Ok(line) = line else { break };
                match serde_json::from_str::<serde_json::Value>(&line) {
                    Ok(v) => {
                        if tx.send(v).is_err() {
                            break;
                        }
                    }
                    Err(e) => log::warn!("agent `{id}` sent malformed message: {e}"),
                }
            }
        });
        Ok(Self {
            agent_id: agent_id.to_string(),
            writer,
            replies: rx,
            deadline: Duration::from_millis(params.deadline_ms),
            default_action: params.default_action,
            missed: false,
            child,
        })
    }

    fn send(&mut self, message: &serde_json::Value) -> bool {
        let ok = serde_json::to_writer(&mut self.writer, message).is_ok()
            && self.writer.write_all(b"\n").is_ok()
            && self.writer.flush().is_ok();
        if !ok {
            log::warn!("agent `{}`: write to external policy failed", self.agent_id);
        }
        ok
    }

    fn await_action(&mut self, tick: Tick) -> Option<f64> {
        let until = Instant::now() + self.deadline;
        loop {
            let remaining = until.checked_duration_since(Instant::now())?;
            match self.replies.recv_timeout(remaining) {
                Ok(v) => {
                    if v.get("type").and_then(|t| t.as_str()) != Some("act") {
                        continue;
                    }
                    if v.get("tick").and_then(|t| t.as_u64()).is_some_and(|t| t != tick) {
                        continue;
                    }
                    if let Some(a) = v.get("action").and_then(|a| a.as_f64()) {
                        return Some(a);
                    }
                }
                Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => return None,
            }
        }
    }
}

impl Policy for ExternalAgent {
    fn act(&mut self, obs: &Observation, _ctx: &ActContext<'_>) -> f64 {
        let sent = self.send(&json!({"type": "observe", "tick": obs.tick, "observation": obs}));
        match sent.then(|| self.await_action(obs.tick)).flatten() {
            Some(a) if a.is_finite() => a,
            _ => {
                log::warn!(
                    "agent `{}` missed the {} ms deadline at tick {}; using default action",
                    self.agent_id,
                    self.deadline.as_millis(),
                    obs.tick
                );
                self.missed = true;
                self.default_action
            }
        }
    }

    fn take_missed_deadline(&mut self) -> bool {
        std::mem::take(&mut self.missed)
    }

    fn reward(&mut self, tick: Tick, payoff: f64, modified_payoff: f64) {
        self.send(&json!({"type": "reward", "tick": tick, "payoff": payoff, "modified_payoff": modified_payoff}));
    }
}

impl Drop for ExternalAgent {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    BestResponse {
        #[serde(default = "default_true")]
        institution_aware: bool,
        #[serde(default)]
        grid_resolution: Option<usize>,
    },
    QLearning(QLearningParams),
    Scripted {
        script: Vec<f64>,
    },
    /// Plays the per-player cartel quantity, or `action` when given.
    Collusive {
        #[serde(default)]
        action: Option<f64>,
    },
    /// Myopic best response that ignores the institution.
    Defector {
        #[serde(default)]
        grid_resolution: Option<usize>,
    },
    External(ExternalParams),
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    #[serde(default)]
    pub role: Option<String>,
    pub policy: PolicySpec,
}

/// Randomness stream for agent `player`; the engine uses a separate one.
const AGENT_STREAM_BASE: u64 = 0xA6E7_0000;

/// Instantiates a policy for `spec` playing as `player`.
pub fn build_policy(
    spec: &AgentSpec,
    game: &Game,
    player: usize,
    default_grid_resolution: usize,
    seed: u64,
) -> Result<Box<dyn Policy>, AgentError> {
    let id = spec.id.as_str();
    let (lo, hi) = game.action_bounds(player);
    let in_range = |a: f64| a.is_finite() && a >= lo && a <= hi;
    Ok(match &spec.policy {
        PolicySpec::BestResponse {
            institution_aware,
            grid_resolution,
        } => Box::new(BestResponder::new(
            grid_resolution.unwrap_or(default_grid_resolution),
            *institution_aware,
        )),
        PolicySpec::Defector { grid_resolution } => Box::new(BestResponder::new(
            grid_resolution.unwrap_or(default_grid_resolution),
            false,
        )),
        PolicySpec::QLearning(p) => {
            if !(0.0..=1.0).contains(&p.alpha) {
                return Err(invalid(id, format!("alpha {} outside [0, 1]", p.alpha)));
            }
            if !(0.0..=1.0).contains(&p.gamma) {
                return Err(invalid(id, format!("gamma {} outside [0, 1]", p.gamma)));
            }
            if !(0.0..=1.0).contains(&p.epsilon) || !(0.0..=1.0).contains(&p.epsilon_decay) {
                return Err(invalid(id, "epsilon and epsilon_decay must lie in [0, 1]"));
            }
            if p.aggregate_bins == 0 {
                return Err(invalid(id, "aggregate_bins must be at least 1"));
            }
            let actions = match &p.actions {
                Some(a) if a.is_empty() => return Err(invalid(id, "action set is empty")),
                Some(a) => {
                    if let Some(bad) = a.iter().find(|x| !in_range(**x)) {
                        return Err(invalid(id, format!("action {bad} outside [{lo}, {hi}]")));
                    }
                    a.clone()
                }
                None => game.action_grid(player, p.grid_resolution.unwrap_or(default_grid_resolution)),
            };
            Box::new(QLearner::new(
                p.clone(),
                actions,
                game.aggregate_range(),
                stream_rng(seed, AGENT_STREAM_BASE + player as u64),
            ))
        }
        PolicySpec::Scripted { script } => {
            if script.is_empty() {
                return Err(invalid(id, "script is empty"));
            }
            if let Some(bad) = script.iter().find(|x| !in_range(**x)) {
                return Err(invalid(id, format!("script entry {bad} outside [{lo}, {hi}]")));
            }
            Box::new(Scripted::new(id, script.clone()))
        }
        PolicySpec::Collusive { action } => {
            let a = match action {
                Some(a) => *a,
                None => *game
                    .benchmarks()
                    .get("CARTEL_Q")
                    .ok_or_else(|| invalid(id, "collusive agents need `action` outside markets"))?,
            };
            if !in_range(a) {
                return Err(invalid(id, format!("action {a} outside [{lo}, {hi}]")));
            }
            Box::new(Constant(a))
        }
        PolicySpec::External(p) => {
            if !in_range(p.default_action) {
                return Err(invalid(id, format!("default action {} outside [{lo}, {hi}]", p.default_action)));
            }
            Box::new(ExternalAgent::connect(id, p)?)
        }
    })
}
