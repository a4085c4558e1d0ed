//! Governance graph: institutional states, sanctioned transitions and the
//! per-agent standing that traverses them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type StateId = String;
pub type TransitionId = String;
pub type Tick = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown state `{0}`")]
    UnknownState(StateId),
    #[error("state `{0}` allows no action (empty capability interval)")]
    EmptyCapability(StateId),
    #[error("graph document: {0}")]
    Document(String),
    #[error("unknown topology `{0}` (expected two_state, three_state or four_state)")]
    UnknownTopology(String),
}

/// Actions available in a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CapabilityMask {
    #[default]
    All,
    Interval { min: f64, max: f64 },
}

impl CapabilityMask {
    pub fn allows(&self, action: f64) -> bool {
        match *self {
            CapabilityMask::All => true,
            CapabilityMask::Interval { min, max } => action >= min && action <= max,
        }
    }

    pub fn is_empty(&self) -> bool {
        match *self {
            CapabilityMask::All => false,
            CapabilityMask::Interval { min, max } => !(min <= max),
        }
    }

    /// Nearest allowed action.
    pub fn project(&self, action: f64) -> f64 {
        match *self {
            CapabilityMask::All => action,
            CapabilityMask::Interval { min, max } => action.clamp(min, max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstitutionalState {
    pub id: StateId,
    pub name: String,
    #[serde(default)]
    pub capability: CapabilityMask,
    /// Payoff deducted every tick an agent acts from this state.
    #[serde(default)]
    pub levy: f64,
    #[serde(default)]
    pub initial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Escalation,
    Restorative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub id: TransitionId,
    pub from: StateId,
    pub to: StateId,
    /// Manifest statement whose firing triggers this transition.
    pub statement: String,
    /// One-time payoff sanction applied when the transition fires.
    #[serde(default)]
    pub sanction: f64,
    /// Minimum ticks between two fires of this transition for one agent.
    #[serde(default)]
    pub cooldown: Tick,
    pub direction: Direction,
    /// Lower numbers win among simultaneously eligible transitions.
    #[serde(default)]
    pub priority: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernanceGraph {
    pub states: Vec<InstitutionalState>,
    #[serde(default)]
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

/// A validation or compilation finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

impl Finding {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn warning(code: &str, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}[{}]: {}", self.code, self.message)
    }
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(Finding::is_error)
}

impl GovernanceGraph {
    pub fn state(&self, id: &str) -> Option<&InstitutionalState> {
        self.states.iter().find(|s| s.id == id)
    }

    pub fn transition(&self, id: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.id == id)
    }

    /// The unique initial state. Panics on graphs that failed validation.
    pub fn initial_state(&self) -> &InstitutionalState {
        self.states
            .iter()
            .find(|s| s.initial)
            .expect("validated graph has an initial state")
    }

    /// Outgoing transitions of `state`, ordered by priority.
    pub fn outgoing(&self, state: &str) -> Vec<&Transition> {
        let mut out: Vec<&Transition> = self.transitions.iter().filter(|t| t.from == state).collect();
        out.sort_by(|a, b| a.priority.cmp(&b.priority).then_with(|| a.id.cmp(&b.id)));
        out
    }

    pub fn from_toml(text: &str) -> Result<Self, GraphError> {
        toml::from_str(text).map_err(|e| GraphError::Document(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("graphs always serialize")
    }
}

/// Structural checks: errors make the graph unusable, warnings flag
/// suspicious but legal structure.
pub fn validate_graph(graph: &GovernanceGraph) -> Vec<Finding> {
    let mut findings = Vec::new();

    let initials: Vec<&str> = graph
        .states
        .iter()
        .filter(|s| s.initial)
        .map(|s| s.id.as_str())
        .collect();
    match initials.len() {
        0 => findings.push(Finding::error("no_initial_state", "graph has no initial state")),
        1 => {}
        _ => findings.push(Finding::error(
            "duplicate_initial_state",
            format!("multiple initial states: {}", initials.join(", ")),
        )),
    }

    let mut seen = BTreeSet::new();
    for s in &graph.states {
        if !seen.insert(s.id.as_str()) {
            findings.push(Finding::error(
                "duplicate_state",
                format!("state `{}` declared twice", s.id),
            ));
        }
        if s.capability.is_empty() {
            findings.push(Finding::error(
                "empty_capability",
                format!("state `{}` has an empty capability interval", s.id),
            ));
        }
        if !(s.levy >= 0.0 && s.levy.is_finite()) {
            findings.push(Finding::error(
                "negative_levy",
                format!("state `{}` has levy {}", s.id, s.levy),
            ));
        }
    }

    let mut seen_t = BTreeSet::new();
    let mut priorities: BTreeMap<(&str, i64), &str> = BTreeMap::new();
    for t in &graph.transitions {
        if !seen_t.insert(t.id.as_str()) {
            findings.push(Finding::error(
                "duplicate_transition",
                format!("transition `{}` declared twice", t.id),
            ));
        }
        for end in [&t.from, &t.to] {
            if graph.state(end).is_none() {
                findings.push(Finding::error(
                    "dangling_endpoint",
                    format!("transition `{}` references unknown state `{}`", t.id, end),
                ));
            }
        }
        if !(t.sanction >= 0.0 && t.sanction.is_finite()) {
            findings.push(Finding::error(
                "negative_sanction",
                format!("transition `{}` has sanction {}", t.id, t.sanction),
            ));
        }
        if let Some(other) = priorities.insert((t.from.as_str(), t.priority), t.id.as_str()) {
            findings.push(Finding::error(
                "nondeterministic_priority",
                format!(
                    "transitions `{}` and `{}` leave `{}` with equal priority {}",
                    other, t.id, t.from, t.priority
                ),
            ));
        }
    }

    if let [initial] = initials.as_slice() {
        let reachable = reachable_from(graph, initial);
        for s in &graph.states {
            if !reachable.contains(s.id.as_str()) {
                findings.push(Finding::warning(
                    "unreachable_state",
                    format!("state `{}` is unreachable from `{}`", s.id, initial),
                ));
            }
        }
        let restorable = restorable_to(graph, initial);
        for s in &graph.states {
            if s.id != *initial && !restorable.contains(s.id.as_str()) {
                findings.push(Finding::warning(
                    "no_restorative_path",
                    format!("penalized state `{}` has no restorative path to `{}`", s.id, initial),
                ));
            }
        }
    }
    findings
}

fn reachable_from<'a>(graph: &'a GovernanceGraph, start: &'a str) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for t in graph.transitions.iter().filter(|t| t.from == s) {
            if seen.insert(t.to.as_str()) {
                queue.push_back(t.to.as_str());
            }
        }
    }
    seen
}

/// States with a path of restorative transitions into `target`.
fn restorable_to<'a>(graph: &'a GovernanceGraph, target: &'a str) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::from([target]);
    let mut queue = VecDeque::from([target]);
    while let Some(s) = queue.pop_front() {
        for t in graph
            .transitions
            .iter()
            .filter(|t| t.to == s && t.direction == Direction::Restorative)
        {
            if seen.insert(t.from.as_str()) {
                queue.push_back(t.from.as_str());
            }
        }
    }
    seen
}

/// An agent's position in the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStanding {
    pub agent_id: String,
    pub current_state: StateId,
    pub last_fire_tick: BTreeMap<TransitionId, Tick>,
    pub cumulative_sanctions: f64,
    pub entered_at: Tick,
}

impl AgentStanding {
    /// Fresh standing in the graph's initial state.
    pub fn new(agent_id: impl Into<String>, graph: &GovernanceGraph) -> Self {
        Self {
            agent_id: agent_id.into(),
            current_state: graph.initial_state().id.clone(),
            last_fire_tick: BTreeMap::new(),
            cumulative_sanctions: 0.0,
            entered_at: 0,
        }
    }
}

/// A fired transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub agent_id: String,
    pub tick: Tick,
    pub transition_id: TransitionId,
    pub statement: String,
    pub from: StateId,
    pub to: StateId,
    pub direction: Direction,
    pub sanction: f64,
}

/// The transition that would fire for `standing` given the fired statements,
/// if any: lowest priority among outgoing transitions whose statement fired
/// and whose cooldown has elapsed.
pub fn eligible_transition<'g>(
    graph: &'g GovernanceGraph,
    standing: &AgentStanding,
    fired_statements: &BTreeSet<String>,
    tick: Tick,
) -> Result<Option<&'g Transition>, GraphError> {
    if graph.state(&standing.current_state).is_none() {
        return Err(GraphError::UnknownState(standing.current_state.clone()));
    }
    Ok(graph
        .outgoing(&standing.current_state)
        .into_iter()
        .filter(|t| fired_statements.contains(&t.statement))
        .find(|t| match standing.last_fire_tick.get(&t.id) {
            Some(&last) => tick.saturating_sub(last) >= t.cooldown,
            None => true,
        }))
}

/// Advances one agent by at most one transition.
pub fn step_standing(
    graph: &GovernanceGraph,
    standing: &AgentStanding,
    fired_statements: &BTreeSet<String>,
    tick: Tick,
) -> Result<(AgentStanding, Option<TransitionEvent>), GraphError> {
    let Some(t) = eligible_transition(graph, standing, fired_statements, tick)? else {
        return Ok((standing.clone(), None));
    };
    let mut next = standing.clone();
    next.current_state = t.to.clone();
    next.last_fire_tick.insert(t.id.clone(), tick);
    next.cumulative_sanctions += t.sanction;
    next.entered_at = tick;
    let event = TransitionEvent {
        agent_id: standing.agent_id.clone(),
        tick,
        transition_id: t.id.clone(),
        statement: t.statement.clone(),
        from: t.from.clone(),
        to: t.to.clone(),
        direction: t.direction,
        sanction: t.sanction,
    };
    Ok((next, Some(event)))
}

/// Projects a proposed action onto the state's capability set. Returns the
/// effective action and whether it was clamped.
pub fn apply_capability_mask(
    state: &InstitutionalState,
    proposed_action: f64,
) -> Result<(f64, bool), GraphError> {
    if state.capability.is_empty() {
        return Err(GraphError::EmptyCapability(state.id.clone()));
    }
    if state.capability.allows(proposed_action) {
        Ok((proposed_action, false))
    } else {
        Ok((state.capability.project(proposed_action), true))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    TwoState,
    ThreeState,
    FourState,
}

impl FromStr for Topology {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, GraphError> {
        match s {
            "two_state" => Ok(Topology::TwoState),
            "three_state" => Ok(Topology::ThreeState),
            "four_state" => Ok(Topology::FourState),
            other => Err(GraphError::UnknownTopology(other.to_string())),
        }
    }
}

/// Parameters for the canonical topologies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyParams {
    /// Statement triggering ordinary escalations.
    pub violation_statement: String,
    /// Statement triggering the final escalation into suspension (four-state only).
    pub suspension_statement: String,
    /// Statement triggering every restorative transition.
    pub restoration_statement: String,
    /// One-time sanction on escalations past the first warning.
    pub sanction: f64,
    pub fined_levy: f64,
    pub cooldown: Tick,
    pub suspended_capability: CapabilityMask,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            violation_statement: "collusion_rule".into(),
            suspension_statement: "suspension_rule".into(),
            restoration_statement: "restoration_rule".into(),
            sanction: 1.0,
            fined_levy: 0.0,
            cooldown: 1,
            suspended_capability: CapabilityMask::Interval { min: 0.0, max: 0.0 },
        }
    }
}

impl Topology {
    pub fn build(self, params: &TopologyParams) -> GovernanceGraph {
        match self {
            Topology::TwoState => canonical_two_state(params),
            Topology::ThreeState => canonical_three_state(params),
            Topology::FourState => canonical_four_state(params),
        }
    }
}

fn state(id: &str, name: &str, capability: CapabilityMask, levy: f64) -> InstitutionalState {
    InstitutionalState {
        id: id.into(),
        name: name.into(),
        capability,
        levy,
        initial: id == "active",
    }
}

fn edge(
    id: &str,
    from: &str,
    to: &str,
    statement: &str,
    sanction: f64,
    params: &TopologyParams,
    direction: Direction,
    priority: i64,
) -> Transition {
    Transition {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        statement: statement.into(),
        sanction,
        cooldown: params.cooldown,
        direction,
        priority,
    }
}

/// Active ⇄ Suspended.
pub fn canonical_two_state(p: &TopologyParams) -> GovernanceGraph {
    use Direction::*;
    GovernanceGraph {
        states: vec![
            state("active", "Active", CapabilityMask::All, 0.0),
            state("suspended", "Suspended", p.suspended_capability.clone(), 0.0),
        ],
        transitions: vec![
            edge("suspend", "active", "suspended", &p.violation_statement, p.sanction, p, Escalation, 0),
            edge("restore", "suspended", "active", &p.restoration_statement, 0.0, p, Restorative, 0),
        ],
    }
}

/// Active → Warning → Suspended with restorative edges back to Active.
pub fn canonical_three_state(p: &TopologyParams) -> GovernanceGraph {
    use Direction::*;
    GovernanceGraph {
        states: vec![
            state("active", "Active", CapabilityMask::All, 0.0),
            state("warning", "Warning", CapabilityMask::All, 0.0),
            state("suspended", "Suspended", p.suspended_capability.clone(), 0.0),
        ],
        transitions: vec![
            edge("warn", "active", "warning", &p.violation_statement, 0.0, p, Escalation, 0),
            edge("suspend", "warning", "suspended", &p.violation_statement, p.sanction, p, Escalation, 0),
            edge("rehab", "warning", "active", &p.restoration_statement, 0.0, p, Restorative, 1),
            edge("restore", "suspended", "active", &p.restoration_statement, 0.0, p, Restorative, 0),
        ],
    }
}

/// Active → Warning → Fined → Suspended with rehab/credit/restore edges back
/// to Active.
pub fn canonical_four_state(p: &TopologyParams) -> GovernanceGraph {
    use Direction::*;
    GovernanceGraph {
        states: vec![
            state("active", "Active", CapabilityMask::All, 0.0),
            state("warning", "Warning", CapabilityMask::All, 0.0),
            state("fined", "Fined", CapabilityMask::All, p.fined_levy),
            state("suspended", "Suspended", p.suspended_capability.clone(), 0.0),
        ],
        transitions: vec![
            edge("warn", "active", "warning", &p.violation_statement, 0.0, p, Escalation, 0),
            edge("fine", "warning", "fined", &p.violation_statement, p.sanction, p, Escalation, 0),
            edge("suspend", "fined", "suspended", &p.suspension_statement, p.sanction, p, Escalation, 0),
            edge("rehab", "warning", "active", &p.restoration_statement, 0.0, p, Restorative, 1),
            edge("credit", "fined", "active", &p.restoration_statement, 0.0, p, Restorative, 1),
            edge("restore", "suspended", "active", &p.restoration_statement, 0.0, p, Restorative, 0),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four() -> GovernanceGraph {
        canonical_four_state(&TopologyParams::default())
    }

    fn fired(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn canonical_graphs_are_clean() {
        for t in [Topology::TwoState, Topology::ThreeState, Topology::FourState] {
            let findings = validate_graph(&t.build(&TopologyParams::default()));
            assert!(findings.is_empty(), "{t:?}: {findings:?}");
        }
    }

    #[test]
    fn canonical_shapes() {
        let p = TopologyParams::default();
        let count = |g: &GovernanceGraph, d| g.transitions.iter().filter(|t| t.direction == d).count();
        let g2 = canonical_two_state(&p);
        assert_eq!((g2.states.len(), g2.transitions.len()), (2, 2));
        let g3 = canonical_three_state(&p);
        assert_eq!((g3.states.len(), g3.transitions.len()), (3, 4));
        assert_eq!(count(&g3, Direction::Escalation), 2);
        assert_eq!(count(&g3, Direction::Restorative), 2);
        let g4 = canonical_four_state(&p);
        assert_eq!((g4.states.len(), g4.transitions.len()), (4, 6));
        assert_eq!(count(&g4, Direction::Escalation), 3);
        assert_eq!(count(&g4, Direction::Restorative), 3);
    }

    #[test]
    fn disconnected_graph_warns_unreachable() {
        let g = GovernanceGraph {
            states: vec![
                state("active", "Active", CapabilityMask::All, 0.0),
                state("suspended", "Suspended", CapabilityMask::All, 0.0),
            ],
            transitions: vec![],
        };
        let findings = validate_graph(&g);
        assert!(!has_errors(&findings));
        assert!(findings.iter().any(|f| f.code == "unreachable_state"));
    }

    #[test]
    fn equal_priorities_are_an_error() {
        let mut g = four();
        g.transitions.push(Transition {
            id: "shortcut".into(),
            from: "active".into(),
            to: "fined".into(),
            statement: "collusion_rule".into(),
            sanction: 0.0,
            cooldown: 0,
            direction: Direction::Escalation,
            priority: 0,
        });
        let findings = validate_graph(&g);
        assert!(findings
            .iter()
            .any(|f| f.is_error() && f.code == "nondeterministic_priority"));
    }

    #[test]
    fn structural_errors() {
        let mut g = four();
        g.states[1].initial = true;
        g.transitions[0].to = "nowhere".into();
        g.transitions[1].sanction = -1.0;
        g.states[2].capability = CapabilityMask::Interval { min: 1.0, max: 0.0 };
        let codes: BTreeSet<String> = validate_graph(&g).into_iter().map(|f| f.code).collect();
        for c in ["duplicate_initial_state", "dangling_endpoint", "negative_sanction", "empty_capability"] {
            assert!(codes.contains(c), "missing {c}");
        }
        let g = GovernanceGraph { states: vec![], transitions: vec![] };
        assert_eq!(validate_graph(&g)[0].code, "no_initial_state");
    }

    #[test]
    fn first_escalation_to_warning() {
        let g = four();
        let s = AgentStanding::new("a", &g);
        let (next, ev) = step_standing(&g, &s, &fired(&["collusion_rule"]), 3).unwrap();
        assert_eq!(next.current_state, "warning");
        let ev = ev.unwrap();
        assert_eq!(ev.direction, Direction::Escalation);
        assert_eq!(ev.sanction, 0.0);
        assert_eq!(next.entered_at, 3);
    }

    #[test]
    fn no_trigger_no_move() {
        let g = four();
        let mut s = AgentStanding::new("a", &g);
        s.current_state = "warning".into();
        let (next, ev) = step_standing(&g, &s, &BTreeSet::new(), 9).unwrap();
        assert_eq!(next, s);
        assert!(ev.is_none());
    }

    #[test]
    fn cooldown_blocks_refire() {
        let p = TopologyParams {
            cooldown: 5,
            ..TopologyParams::default()
        };
        let g = canonical_four_state(&p);
        let mut s = AgentStanding::new("a", &g);
        s.current_state = "warning".into();
        s.last_fire_tick.insert("fine".into(), 8);
        let (next, ev) = step_standing(&g, &s, &fired(&["collusion_rule"]), 10).unwrap();
        assert_eq!(next.current_state, "warning");
        assert!(ev.is_none());
        let (next, _) = step_standing(&g, &s, &fired(&["collusion_rule"]), 13).unwrap();
        assert_eq!(next.current_state, "fined");
    }

    #[test]
    fn priority_breaks_ties() {
        let mut g = four();
        g.transitions.push(Transition {
            id: "fast_track".into(),
            from: "warning".into(),
            to: "suspended".into(),
            statement: "collusion_rule".into(),
            sanction: 7.0,
            cooldown: 0,
            direction: Direction::Escalation,
            priority: -1,
        });
        let mut s = AgentStanding::new("a", &g);
        s.current_state = "warning".into();
        let (next, ev) = step_standing(&g, &s, &fired(&["collusion_rule"]), 1).unwrap();
        assert_eq!(next.current_state, "suspended");
        assert_eq!(ev.unwrap().transition_id, "fast_track");
        assert_eq!(next.cumulative_sanctions, 7.0);
    }

    #[test]
    fn unknown_state_errors() {
        let g = four();
        let mut s = AgentStanding::new("a", &g);
        s.current_state = "limbo".into();
        assert_eq!(
            step_standing(&g, &s, &BTreeSet::new(), 1).unwrap_err(),
            GraphError::UnknownState("limbo".into())
        );
    }

    #[test]
    fn escalation_only_walk_visits_chain_in_order() {
        let g = four();
        let mut s = AgentStanding::new("a", &g);
        let all = fired(&["collusion_rule", "suspension_rule"]);
        let mut visited = vec![];
        for tick in 1..=5 {
            let (next, ev) = step_standing(&g, &s, &all, tick).unwrap();
            if ev.is_some() {
                visited.push(next.current_state.clone());
            }
            s = next;
        }
        assert_eq!(visited, ["warning", "fined", "suspended"]);
    }

    #[test]
    fn capability_masks() {
        let p = TopologyParams::default();
        let g = canonical_four_state(&p);
        assert_eq!(apply_capability_mask(g.state("suspended").unwrap(), 30.0).unwrap(), (0.0, true));
        assert_eq!(apply_capability_mask(g.state("active").unwrap(), 30.0).unwrap(), (30.0, false));
        let fined = state("fined", "Fined", CapabilityMask::Interval { min: 0.0, max: 40.0 }, 0.0);
        assert_eq!(apply_capability_mask(&fined, 55.0).unwrap(), (40.0, true));
        let broken = state("x", "X", CapabilityMask::Interval { min: 2.0, max: 1.0 }, 0.0);
        assert!(apply_capability_mask(&broken, 1.5).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let g = four();
        let text = g.to_toml();
        assert_eq!(GovernanceGraph::from_toml(&text).unwrap(), g);
    }
}
