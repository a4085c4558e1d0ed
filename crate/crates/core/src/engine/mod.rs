//! The governance engine: an oracle that detects rule firings from public
//! signals, a controller that moves agents through the graph and applies
//! sanctions, and the audit log both write to.

pub mod log;
pub mod window;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{step_standing, AgentStanding, Direction, GovernanceGraph, GraphError, StateId, Tick, TransitionEvent};
use crate::manifest::{evaluate_condition, BoundInstitution, Deontic, EvalError, Statement, StatementKind};
use crate::seed::stream_rng;

use self::log::{sha256_hex, EventDraft, EventKind, EventLog, LogError};
use self::window::{EvidenceWindow, SignalRecord};

/// Extras field set to 1 on ticks where the agent was flagged for a
/// prohibitive rule and 0 otherwise. Restoration rules read it.
pub const VIOLATION_FIELD: &str = "violation";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("no standing for agent `{0}`")]
    UnknownAgent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    /// A `must` / `must_not` rule was broken.
    Violation,
    /// A `may` rule's aim was observed.
    Permission,
}

/// One statement fired for one agent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Flag {
    pub statement: String,
    pub kind: FlagKind,
    /// SHA-256 over the records that triggered the flag.
    pub evidence: String,
}

/// Agent id → flags, each list sorted by statement id.
pub type FiredMap = BTreeMap<String, Vec<Flag>>;

/// A norm or strategy that matched. Advisory only; never enforced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Advisory {
    pub agent_id: String,
    pub statement: String,
    pub evidence: String,
}

pub fn fired_statements(flags: &[Flag]) -> BTreeSet<String> {
    flags.iter().map(|f| f.statement.clone()).collect()
}

fn selects(statement: &Statement, agent_id: &str, roles: &BTreeMap<String, String>) -> bool {
    statement
        .attribute
        .selects(agent_id, roles.get(agent_id).map(String::as_str))
}

fn evidence_digest(statement: &Statement, window: &EvidenceWindow, agent_id: &str) -> String {
    let k = statement.evidence_depth();
    let slice: Vec<&SignalRecord> = if statement.quantifies_all_agents() {
        window.recent(k)
    } else {
        window.recent_for(agent_id, k)
    };
    sha256_hex(&serde_json::to_vec(&slice).expect("records serialize"))
}

/// Whether `statement`'s aim and condition hold for the agent. Statements
/// whose evidence depth exceeds the window's history never hold.
fn aim_and_condition(
    bound: &BoundInstitution,
    statement: &Statement,
    window: &EvidenceWindow,
    agent_id: &str,
) -> Result<Option<(bool, bool)>, EvalError> {
    if window.len() < statement.evidence_depth() {
        return Ok(None);
    }
    let constants = &bound.manifest.constants;
    let condition = evaluate_condition(&statement.condition, window, agent_id, constants)?;
    if !condition {
        return Ok(Some((false, false)));
    }
    let aim = evaluate_condition(&statement.aim, window, agent_id, constants)?;
    Ok(Some((true, aim)))
}

fn breaks(deontic: Option<Deontic>, condition: bool, aim: bool) -> bool {
    match deontic {
        Some(Deontic::MustNot) => condition && aim,
        Some(Deontic::Must) => condition && !aim,
        Some(Deontic::May) | None => false,
    }
}

fn latest_agents(window: &EvidenceWindow, tick: Tick) -> Vec<String> {
    if window.latest_tick() != Some(tick) {
        return Vec::new();
    }
    window.latest().iter().map(|r| r.agent_id.clone()).collect()
}

/// Prohibitive-rule violations at `tick`.
pub fn detect_violations(
    bound: &BoundInstitution,
    window: &EvidenceWindow,
    tick: Tick,
    roles: &BTreeMap<String, String>,
) -> Result<FiredMap, EvalError> {
    let mut out = FiredMap::new();
    for agent in latest_agents(window, tick) {
        for s in bound.prohibitive_rules() {
            if !selects(s, &agent, roles) {
                continue;
            }
            if let Some((c, a)) = aim_and_condition(bound, s, window, &agent)? {
                if breaks(s.deontic, c, a) {
                    out.entry(agent.clone()).or_default().push(Flag {
                        statement: s.id.clone(),
                        kind: FlagKind::Violation,
                        evidence: evidence_digest(s, window, &agent),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Permission-rule matches at `tick`. Reads the violation field, so call
/// after [`annotate_violations`].
pub fn detect_permissions(
    bound: &BoundInstitution,
    window: &EvidenceWindow,
    tick: Tick,
    roles: &BTreeMap<String, String>,
) -> Result<FiredMap, EvalError> {
    let mut out = FiredMap::new();
    for agent in latest_agents(window, tick) {
        for s in bound.permissive_rules() {
            if !selects(s, &agent, roles) {
                continue;
            }
            if let Some((true, true)) = aim_and_condition(bound, s, window, &agent)? {
                out.entry(agent.clone()).or_default().push(Flag {
                    statement: s.id.clone(),
                    kind: FlagKind::Permission,
                    evidence: evidence_digest(s, window, &agent),
                });
            }
        }
    }
    Ok(out)
}

/// Violated norms and matching strategies at `tick`.
pub fn detect_advisories(
    bound: &BoundInstitution,
    window: &EvidenceWindow,
    tick: Tick,
    roles: &BTreeMap<String, String>,
) -> Result<Vec<Advisory>, EvalError> {
    let mut out = Vec::new();
    for agent in latest_agents(window, tick) {
        for s in bound.advisory_statements() {
            if !selects(s, &agent, roles) {
                continue;
            }
            let Some((c, a)) = aim_and_condition(bound, s, window, &agent)? else {
                continue;
            };
            let matched = match s.kind() {
                StatementKind::Norm => match s.deontic {
                    Some(Deontic::May) => c && a,
                    d => breaks(d, c, a),
                },
                _ => c && a,
            };
            if matched {
                out.push(Advisory {
                    agent_id: agent.clone(),
                    statement: s.id.clone(),
                    evidence: evidence_digest(s, window, &agent),
                });
            }
        }
    }
    Ok(out)
}

/// Writes the violation field for every agent at the latest tick.
pub fn annotate_violations(window: &mut EvidenceWindow, violations: &FiredMap) {
    let Some(tick) = window.latest_tick() else {
        return;
    };
    for agent in latest_agents(window, tick) {
        let flagged = violations.get(&agent).is_some_and(|f| !f.is_empty());
        window.annotate(tick, &agent, VIOLATION_FIELD, if flagged { 1.0 } else { 0.0 });
    }
}

fn merge(mut a: FiredMap, b: FiredMap) -> FiredMap {
    for (agent, flags) in b {
        a.entry(agent).or_default().extend(flags);
    }
    for flags in a.values_mut() {
        flags.sort();
    }
    a
}

/// Oracle with perfect detection: violations, then permissions evaluated
/// against the window annotated with those violations. Pure in its inputs.
pub fn observe(
    bound: &BoundInstitution,
    window: &EvidenceWindow,
    tick: Tick,
    roles: &BTreeMap<String, String>,
) -> Result<FiredMap, EvalError> {
    let violations = detect_violations(bound, window, tick, roles)?;
    let mut annotated = window.clone();
    annotate_violations(&mut annotated, &violations);
    let permissions = detect_permissions(bound, &annotated, tick, roles)?;
    Ok(merge(violations, permissions))
}

/// Drops each violation independently with probability `1 − p_detect`.
/// Consumes no randomness when `p_detect ≥ 1`.
pub fn thin_violations(violations: FiredMap, p_detect: f64, rng: &mut ChaCha8Rng) -> FiredMap {
    if p_detect >= 1.0 {
        return violations;
    }
    violations
        .into_iter()
        .filter_map(|(agent, flags)| {
            let kept: Vec<Flag> = flags.into_iter().filter(|_| rng.random::<f64>() < p_detect).collect();
            (!kept.is_empty()).then_some((agent, kept))
        })
        .collect()
}

/// Outcome of enforcement for one tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Enforcement {
    pub standings: BTreeMap<String, AgentStanding>,
    /// One-time sanctions, only for agents actually sanctioned.
    pub sanctions: BTreeMap<String, f64>,
    pub transitions: Vec<TransitionEvent>,
}

/// Controller: logs violations, fires at most one transition per agent and
/// applies its sanction. Agents are processed in ascending id order.
pub fn enforce(
    graph: &GovernanceGraph,
    standings: &BTreeMap<String, AgentStanding>,
    fired: &FiredMap,
    tick: Tick,
    log: &mut EventLog,
) -> Result<Enforcement, EngineError> {
    for agent in fired.keys() {
        if !standings.contains_key(agent) {
            return Err(EngineError::UnknownAgent(agent.clone()));
        }
    }
    let mut out = Enforcement {
        standings: standings.clone(),
        ..Enforcement::default()
    };
    for (agent, standing) in standings {
        let Some(flags) = fired.get(agent).filter(|f| !f.is_empty()) else {
            continue;
        };
        for f in flags.iter().filter(|f| f.kind == FlagKind::Violation) {
            log.append(
                EventDraft::new(tick, agent.clone(), EventKind::ViolationDetected)
                    .statement(f.statement.clone())
                    .evidence(f.evidence.clone()),
            )?;
        }
        let (next, event) = step_standing(graph, standing, &fired_statements(flags), tick)?;
        if let Some(ev) = event {
            let evidence = flags
                .iter()
                .find(|f| f.statement == ev.statement)
                .map(|f| f.evidence.clone())
                .unwrap_or_default();
            let kind = match ev.direction {
                Direction::Escalation => EventKind::Transition,
                Direction::Restorative => EventKind::Restoration,
            };
            log.append(
                EventDraft::new(tick, agent.clone(), kind)
                    .statement(ev.statement.clone())
                    .transition(ev.transition_id.clone())
                    .evidence(evidence.clone()),
            )?;
            if ev.sanction > 0.0 {
                log.append(
                    EventDraft::new(tick, agent.clone(), EventKind::SanctionApplied)
                        .statement(ev.statement.clone())
                        .transition(ev.transition_id.clone())
                        .amount(ev.sanction)
                        .evidence(evidence),
                )?;
                out.sanctions.insert(agent.clone(), ev.sanction);
            }
            out.transitions.push(ev);
        }
        out.standings.insert(agent.clone(), next);
    }
    Ok(out)
}

/// Payoff under the institution: base minus the levy of the state the agent
/// acted from minus this tick's one-time sanction.
pub fn modified_payoff(base_payoff: f64, levy: f64, one_time_sanction: f64) -> f64 {
    base_payoff - levy - one_time_sanction
}

/// Levy charged to an agent acting from `standing`.
pub fn state_levy(graph: &GovernanceGraph, standing: &AgentStanding) -> f64 {
    graph.state(&standing.current_state).map_or(0.0, |s| s.levy)
}

/// Per-tick report from [`GovernanceEngine::step`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickOutcome {
    /// State each agent acted from.
    pub acted_from: BTreeMap<String, StateId>,
    pub levies: BTreeMap<String, f64>,
    pub sanctions: BTreeMap<String, f64>,
    pub violations: FiredMap,
    pub transitions: Vec<TransitionEvent>,
    pub advisories: Vec<Advisory>,
}

/// Oracle and controller bound to one run.
#[derive(Debug, Clone)]
pub struct GovernanceEngine {
    bound: BoundInstitution,
    roles: BTreeMap<String, String>,
    p_detect: f64,
    rng: ChaCha8Rng,
    standings: BTreeMap<String, AgentStanding>,
}

/// Randomness stream reserved for detection thinning.
const DETECTION_STREAM: u64 = 0xD7EC;

impl GovernanceEngine {
    pub fn new(
        bound: BoundInstitution,
        agents: &[(String, Option<String>)],
        p_detect: f64,
        seed: u64,
    ) -> Self {
        let roles = agents
            .iter()
            .filter_map(|(id, role)| role.clone().map(|r| (id.clone(), r)))
            .collect();
        let standings = agents
            .iter()
            .map(|(id, _)| (id.clone(), AgentStanding::new(id.clone(), &bound.graph)))
            .collect();
        Self {
            bound,
            roles,
            p_detect: p_detect.clamp(0.0, 1.0),
            rng: stream_rng(seed, DETECTION_STREAM),
            standings,
        }
    }

    pub fn bound(&self) -> &BoundInstitution {
        &self.bound
    }

    pub fn roles(&self) -> &BTreeMap<String, String> {
        &self.roles
    }

    pub fn p_detect(&self) -> f64 {
        self.p_detect
    }

    pub fn standings(&self) -> &BTreeMap<String, AgentStanding> {
        &self.standings
    }

    pub fn standing(&self, agent_id: &str) -> Option<&AgentStanding> {
        self.standings.get(agent_id)
    }

    /// Returns every agent to the initial state with no history.
    pub fn reset_standings(&mut self) {
        for (id, s) in self.standings.iter_mut() {
            *s = AgentStanding::new(id.clone(), &self.bound.graph);
        }
    }

    /// Runs the oracle and controller on the window's latest tick. Writes the
    /// violation field into the window and appends every event to `log`.
    pub fn step(&mut self, window: &mut EvidenceWindow, tick: Tick, log: &mut EventLog) -> Result<TickOutcome, EngineError> {
        let graph = &self.bound.graph;
        let acted_from: BTreeMap<String, StateId> = self
            .standings
            .iter()
            .map(|(id, s)| (id.clone(), s.current_state.clone()))
            .collect();
        let levies = self
            .standings
            .iter()
            .map(|(id, s)| (id.clone(), state_levy(graph, s)))
            .collect();

        let detected = detect_violations(&self.bound, window, tick, &self.roles)?;
        let violations = thin_violations(detected, self.p_detect, &mut self.rng);
        annotate_violations(window, &violations);
        let permissions = detect_permissions(&self.bound, window, tick, &self.roles)?;
        let advisories = detect_advisories(&self.bound, window, tick, &self.roles)?;
        let fired = merge(violations.clone(), permissions);

        let enforcement = enforce(graph, &self.standings, &fired, tick, log)?;
        for a in &advisories {
            log.append(
                EventDraft::new(tick, a.agent_id.clone(), EventKind::AdvisoryMatch)
                    .statement(a.statement.clone())
                    .evidence(a.evidence.clone()),
            )?;
        }
        self.standings = enforcement.standings;
        Ok(TickOutcome {
            acted_from,
            levies,
            sanctions: enforcement.sanctions,
            violations,
            transitions: enforcement.transitions,
            advisories,
        })
    }
}
