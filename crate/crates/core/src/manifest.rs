//! Institutional statements in the Attribute / Deontic / aIm / Condition /
//! Or-else grammar, their document format, and compilation against a
//! governance graph.
//!
//! Manifests are TOML documents:
//!
//! ```toml
//! version = "1"
//!
//! [constants]
//! NASH_Q = 30.0
//!
//! [[statements]]
//! id = "collusion_rule"
//! attribute = "all"            # or "role:<name>" / "agent:<id>"
//! deontic = "must_not"         # may | must | must_not; omit for strategies
//! or_else = "warn"             # transition id; omit for norms
//! aim = { all_agents = { window = { agg = "max", field = "quantity", k = 3, cmp = "<", value = { constant = "NASH_Q", scale = 0.9 } } } }
//! ```
//!
//! `condition` defaults to `"always"`. Operands are a number, a constant
//! name, or `{ constant, scale }`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::window::EvidenceWindow;
use crate::graph::{validate_graph, Direction, Finding, GovernanceGraph, Severity};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifestError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate statement id `{0}`")]
    DuplicateId(String),
    #[error("invalid statement id `{0}` (expected lowercase snake_case)")]
    InvalidId(String),
    #[error("statement `{statement}` references undefined constant `{constant}`")]
    UnresolvedConstant { statement: String, constant: String },
    #[error("statement `{0}` has an or-else but no deontic")]
    OrElseWithoutDeontic(String),
    #[error("statement `{0}` has a window of length 0")]
    EmptyWindow(String),
    #[error("constant `{0}` is not a finite number")]
    NonFiniteConstant(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unknown signal field `{0}`")]
    UnknownField(String),
    #[error("undefined constant `{0}`")]
    UnknownConstant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deontic {
    May,
    Must,
    MustNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

/// Absolute tolerance for `=` comparisons.
const EQ_TOLERANCE: f64 = 1e-9;

impl Comparator {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Eq => (lhs - rhs).abs() <= EQ_TOLERANCE,
            Comparator::Ge => lhs >= rhs,
            Comparator::Gt => lhs > rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Number(f64),
    Constant(String),
    Scaled { constant: String, scale: f64 },
}

impl Operand {
    pub fn resolve(&self, constants: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
        match self {
            Operand::Number(v) => Ok(*v),
            Operand::Constant(name) => constants
                .get(name)
                .copied()
                .ok_or_else(|| EvalError::UnknownConstant(name.clone())),
            Operand::Scaled { constant, scale } => constants
                .get(constant)
                .map(|v| v * scale)
                .ok_or_else(|| EvalError::UnknownConstant(constant.clone())),
        }
    }

    fn constant_name(&self) -> Option<&str> {
        match self {
            Operand::Number(_) => None,
            Operand::Constant(name) | Operand::Scaled { constant: name, .. } => Some(name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Mean,
    Min,
    Max,
    /// Number of ticks on which the field is non-zero.
    Count,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub field: String,
    pub cmp: Comparator,
    pub value: Operand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAtom {
    pub agg: Aggregate,
    pub field: String,
    pub k: usize,
    pub cmp: Comparator,
    pub value: Operand,
}

/// Predicate over public signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConditionExpr {
    #[default]
    Always,
    /// Compares the agent's latest value of a field.
    Atom(Atom),
    /// Compares an aggregate over the agent's last `k` ticks.
    Window(WindowAtom),
    /// Holds when the sub-expression holds for every agent.
    AllAgents(Box<ConditionExpr>),
    And(Vec<ConditionExpr>),
    Or(Vec<ConditionExpr>),
    Not(Box<ConditionExpr>),
}

/// A threshold comparison found inside an expression.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdAtom<'a> {
    pub field: &'a str,
    pub cmp: Comparator,
    pub value: &'a Operand,
    pub aggregate: Option<Aggregate>,
    /// True when the atom sits under an odd number of negations.
    pub negated: bool,
}

impl ConditionExpr {
    pub fn is_always(&self) -> bool {
        matches!(self, ConditionExpr::Always)
    }

    /// Ticks of history needed before the expression can hold.
    pub fn evidence_depth(&self) -> usize {
        match self {
            ConditionExpr::Always | ConditionExpr::Atom(_) => 1,
            ConditionExpr::Window(w) => w.k.max(1),
            ConditionExpr::AllAgents(e) | ConditionExpr::Not(e) => e.evidence_depth(),
            ConditionExpr::And(es) | ConditionExpr::Or(es) => {
                es.iter().map(Self::evidence_depth).max().unwrap_or(1)
            }
        }
    }

    pub fn quantifies_all_agents(&self) -> bool {
        match self {
            ConditionExpr::AllAgents(_) => true,
            ConditionExpr::Not(e) => e.quantifies_all_agents(),
            ConditionExpr::And(es) | ConditionExpr::Or(es) => es.iter().any(Self::quantifies_all_agents),
            _ => false,
        }
    }

    pub fn threshold_atoms(&self) -> Vec<ThresholdAtom<'_>> {
        let mut out = Vec::new();
        self.collect_atoms(false, &mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, negated: bool, out: &mut Vec<ThresholdAtom<'a>>) {
        match self {
            ConditionExpr::Always => {}
            ConditionExpr::Atom(a) => out.push(ThresholdAtom {
                field: &a.field,
                cmp: a.cmp,
                value: &a.value,
                aggregate: None,
                negated,
            }),
            ConditionExpr::Window(w) => out.push(ThresholdAtom {
                field: &w.field,
                cmp: w.cmp,
                value: &w.value,
                aggregate: Some(w.agg),
                negated,
            }),
            ConditionExpr::AllAgents(e) => e.collect_atoms(negated, out),
            ConditionExpr::Not(e) => e.collect_atoms(!negated, out),
            ConditionExpr::And(es) | ConditionExpr::Or(es) => {
                for e in es {
                    e.collect_atoms(negated, out);
                }
            }
        }
    }

    fn visit_operands<'a>(&'a self, f: &mut impl FnMut(&'a Operand)) {
        match self {
            ConditionExpr::Always => {}
            ConditionExpr::Atom(a) => f(&a.value),
            ConditionExpr::Window(w) => f(&w.value),
            ConditionExpr::AllAgents(e) | ConditionExpr::Not(e) => e.visit_operands(f),
            ConditionExpr::And(es) | ConditionExpr::Or(es) => {
                for e in es {
                    e.visit_operands(f);
                }
            }
        }
    }

    fn visit_fields<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            ConditionExpr::Always => {}
            ConditionExpr::Atom(a) => {
                out.insert(&a.field);
            }
            ConditionExpr::Window(w) => {
                out.insert(&w.field);
            }
            ConditionExpr::AllAgents(e) | ConditionExpr::Not(e) => e.visit_fields(out),
            ConditionExpr::And(es) | ConditionExpr::Or(es) => {
                for e in es {
                    e.visit_fields(out);
                }
            }
        }
    }

    fn has_empty_window(&self) -> bool {
        match self {
            ConditionExpr::Window(w) => w.k == 0,
            ConditionExpr::AllAgents(e) | ConditionExpr::Not(e) => e.has_empty_window(),
            ConditionExpr::And(es) | ConditionExpr::Or(es) => es.iter().any(Self::has_empty_window),
            _ => false,
        }
    }
}

/// Who a statement governs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Attribute {
    #[default]
    All,
    Role(String),
    Agent(String),
}

impl Attribute {
    pub fn selects(&self, agent_id: &str, role: Option<&str>) -> bool {
        match self {
            Attribute::All => true,
            Attribute::Role(r) => role == Some(r.as_str()),
            Attribute::Agent(a) => a == agent_id,
        }
    }
}

impl TryFrom<String> for Attribute {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        if s == "all" {
            Ok(Attribute::All)
        } else if let Some(r) = s.strip_prefix("role:").filter(|r| !r.is_empty()) {
            Ok(Attribute::Role(r.to_string()))
        } else if let Some(a) = s.strip_prefix("agent:").filter(|a| !a.is_empty()) {
            Ok(Attribute::Agent(a.to_string()))
        } else {
            Err(format!(
                "attribute `{s}` must be `all`, `role:<name>` or `agent:<id>`"
            ))
        }
    }
}

impl From<Attribute> for String {
    fn from(a: Attribute) -> String {
        a.to_string()
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attribute::All => f.write_str("all"),
            Attribute::Role(r) => write!(f, "role:{r}"),
            Attribute::Agent(a) => write!(f, "agent:{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub id: String,
    #[serde(default)]
    pub attribute: Attribute,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deontic: Option<Deontic>,
    /// Predicate over the governed agent's own signals.
    pub aim: ConditionExpr,
    /// Predicate over shared context; defaults to always.
    #[serde(default, skip_serializing_if = "ConditionExpr::is_always")]
    pub condition: ConditionExpr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub or_else: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementKind {
    Strategy,
    Norm,
    Rule,
}

/// Strategy, norm or rule by component presence.
pub fn classify_statement(statement: &Statement) -> StatementKind {
    match (statement.deontic, &statement.or_else) {
        (Some(_), Some(_)) => StatementKind::Rule,
        (Some(_), None) => StatementKind::Norm,
        (None, _) => StatementKind::Strategy,
    }
}

impl Statement {
    pub fn kind(&self) -> StatementKind {
        classify_statement(self)
    }

    /// Ticks of history needed before the statement can be evaluated.
    pub fn evidence_depth(&self) -> usize {
        self.aim.evidence_depth().max(self.condition.evidence_depth())
    }

    pub fn quantifies_all_agents(&self) -> bool {
        self.aim.quantifies_all_agents() || self.condition.quantifies_all_agents()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub statements: Vec<Statement>,
}

impl Manifest {
    pub fn statement(&self, id: &str) -> Option<&Statement> {
        self.statements.iter().find(|s| s.id == id)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifests always serialize")
    }

    /// Every signal field named by any statement.
    pub fn referenced_fields(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for s in &self.statements {
            s.aim.visit_fields(&mut out);
            s.condition.visit_fields(&mut out);
        }
        out
    }

    /// Longest history any statement needs.
    pub fn max_evidence_depth(&self) -> usize {
        self.statements
            .iter()
            .map(Statement::evidence_depth)
            .max()
            .unwrap_or(1)
    }

    fn check(&self) -> Result<(), ManifestError> {
        for (name, v) in &self.constants {
            if !v.is_finite() {
                return Err(ManifestError::NonFiniteConstant(name.clone()));
            }
        }
        let mut ids = BTreeSet::new();
        for s in &self.statements {
            if !is_snake_identifier(&s.id) {
                return Err(ManifestError::InvalidId(s.id.clone()));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(ManifestError::DuplicateId(s.id.clone()));
            }
            if s.or_else.is_some() && s.deontic.is_none() {
                return Err(ManifestError::OrElseWithoutDeontic(s.id.clone()));
            }
            if s.aim.has_empty_window() || s.condition.has_empty_window() {
                return Err(ManifestError::EmptyWindow(s.id.clone()));
            }
            let mut missing = None;
            let mut check = |op: &Operand| {
                if let Some(name) = op.constant_name() {
                    if missing.is_none() && !self.constants.contains_key(name) {
                        missing = Some(name.to_string());
                    }
                }
            };
            s.aim.visit_operands(&mut check);
            s.condition.visit_operands(&mut check);
            if let Some(constant) = missing {
                return Err(ManifestError::UnresolvedConstant {
                    statement: s.id.clone(),
                    constant,
                });
            }
        }
        Ok(())
    }
}

pub fn is_snake_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Parses and checks a manifest document.
pub fn parse_manifest(text: &str) -> Result<Manifest, ManifestError> {
    parse_manifest_with_constants(text, &BTreeMap::new())
}

/// Like [`parse_manifest`], with externally supplied benchmark constants.
/// Supplied values override same-named constants declared in the document.
pub fn parse_manifest_with_constants(
    text: &str,
    injected: &BTreeMap<String, f64>,
) -> Result<Manifest, ManifestError> {
    let mut manifest: Manifest = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|span| line_column(text, span.start))
            .unwrap_or((0, 0));
        ManifestError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    for (k, v) in injected {
        manifest.constants.insert(k.clone(), *v);
    }
    manifest.check()?;
    Ok(manifest)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Evaluates `expr` for `agent_id` against the window. Windowed aggregates
/// with fewer than `k` ticks of history are false.
pub fn evaluate_condition(
    expr: &ConditionExpr,
    window: &EvidenceWindow,
    agent_id: &str,
    constants: &BTreeMap<String, f64>,
) -> Result<bool, EvalError> {
    match expr {
        ConditionExpr::Always => Ok(true),
        ConditionExpr::Atom(a) => {
            let Some(rec) = window.latest_for(agent_id) else {
                return Ok(false);
            };
            let lhs = rec
                .field(&a.field)
                .ok_or_else(|| EvalError::UnknownField(a.field.clone()))?;
            Ok(a.cmp.holds(lhs, a.value.resolve(constants)?))
        }
        ConditionExpr::Window(w) => {
            let recs = window.recent_for(agent_id, w.k);
            let rhs = w.value.resolve(constants)?;
            let values = recs
                .iter()
                .map(|r| r.field(&w.field).ok_or_else(|| EvalError::UnknownField(w.field.clone())))
                .collect::<Result<Vec<f64>, _>>()?;
            if values.len() < w.k {
                return Ok(false);
            }
            let lhs = match w.agg {
                Aggregate::Mean => values.iter().sum::<f64>() / values.len() as f64,
                Aggregate::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
                Aggregate::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Aggregate::Count => values.iter().filter(|v| **v != 0.0).count() as f64,
            };
            Ok(w.cmp.holds(lhs, rhs))
        }
        ConditionExpr::AllAgents(sub) => {
            let agents = window.latest();
            if agents.is_empty() {
                return Ok(false);
            }
            for r in agents {
                if !evaluate_condition(sub, window, &r.agent_id, constants)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ConditionExpr::And(es) => {
            for e in es {
                if !evaluate_condition(e, window, agent_id, constants)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ConditionExpr::Or(es) => {
            for e in es {
                if evaluate_condition(e, window, agent_id, constants)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        ConditionExpr::Not(e) => Ok(!evaluate_condition(e, window, agent_id, constants)?),
    }
}

/// A manifest compiled against a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInstitution {
    pub manifest: Manifest,
    pub graph: GovernanceGraph,
    /// Rule id → transitions it triggers.
    pub bindings: BTreeMap<String, Vec<String>>,
    pub warnings: Vec<Finding>,
}

impl BoundInstitution {
    pub fn statement_count(&self) -> usize {
        self.manifest.statements.len()
    }

    /// Rules that escalate on violation (`must` / `must_not`).
    pub fn prohibitive_rules(&self) -> impl Iterator<Item = &Statement> {
        self.manifest.statements.iter().filter(|s| {
            s.kind() == StatementKind::Rule && matches!(s.deontic, Some(Deontic::Must | Deontic::MustNot))
        })
    }

    /// Rules that fire when the permitted behaviour is observed (`may`).
    pub fn permissive_rules(&self) -> impl Iterator<Item = &Statement> {
        self.manifest
            .statements
            .iter()
            .filter(|s| s.kind() == StatementKind::Rule && s.deontic == Some(Deontic::May))
    }

    pub fn advisory_statements(&self) -> impl Iterator<Item = &Statement> {
        self.manifest
            .statements
            .iter()
            .filter(|s| s.kind() != StatementKind::Rule)
    }
}

/// Binds rules to transitions. On failure returns every finding, errors
/// included.
pub fn compile(manifest: &Manifest, graph: &GovernanceGraph) -> Result<BoundInstitution, Vec<Finding>> {
    let mut findings: Vec<Finding> = validate_graph(graph)
        .into_iter()
        .filter(Finding::is_error)
        .collect();

    for s in manifest.statements.iter().filter(|s| s.kind() == StatementKind::Rule) {
        let target = s.or_else.as_deref().unwrap_or_default();
        match graph.transition(target) {
            None => findings.push(Finding::error(
                "dangling_or_else",
                format!("rule `{}` binds missing transition `{}`", s.id, target),
            )),
            Some(t) if t.statement != s.id => findings.push(Finding::error(
                "or_else_mismatch",
                format!(
                    "rule `{}` binds transition `{}`, which is triggered by `{}`",
                    s.id, t.id, t.statement
                ),
            )),
            Some(_) => {}
        }
    }

    let mut bindings: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for t in &graph.transitions {
        let Some(s) = manifest.statement(&t.statement) else {
            findings.push(Finding::error(
                "unknown_statement",
                format!("transition `{}` references unknown statement `{}`", t.id, t.statement),
            ));
            continue;
        };
        if s.kind() != StatementKind::Rule {
            findings.push(Finding::error(
                "transition_bound_to_non_rule",
                format!(
                    "transition `{}` is bound to `{}`, a {:?} without an or-else",
                    t.id,
                    s.id,
                    s.kind()
                ),
            ));
            continue;
        }
        let permissive = s.deontic == Some(Deontic::May);
        match (t.direction, permissive) {
            (Direction::Escalation, true) => findings.push(Finding::error(
                "direction_mismatch",
                format!("escalation `{}` is bound to permission `{}`", t.id, s.id),
            )),
            (Direction::Restorative, false) => findings.push(Finding::error(
                "direction_mismatch",
                format!("restorative `{}` is bound to prohibition `{}`", t.id, s.id),
            )),
            _ => {}
        }
        if permissive && t.sanction > 0.0 {
            findings.push(Finding::error(
                "sanctioned_permission",
                format!("permission `{}` cannot carry the sanction of `{}`", s.id, t.id),
            ));
        }
        bindings.entry(s.id.clone()).or_default().push(t.id.clone());
    }

    for s in manifest.statements.iter().filter(|s| s.kind() == StatementKind::Rule) {
        if !bindings.contains_key(&s.id) {
            findings.push(Finding::warning(
                "unused_rule",
                format!("rule `{}` triggers no transition", s.id),
            ));
        }
    }

    if findings.iter().any(Finding::is_error) {
        findings.sort_by_key(|f| std::cmp::Reverse(f.severity));
        return Err(findings);
    }
    Ok(BoundInstitution {
        manifest: manifest.clone(),
        graph: graph.clone(),
        bindings,
        warnings: findings
            .into_iter()
            .filter(|f| f.severity == Severity::Warning)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::window::SignalRecord;
    use crate::graph::{canonical_four_state, TopologyParams};

    const MINIMAL: &str = r#"
version = "1"

[[statements]]
id = "no_negative"
attribute = "all"
aim = { atom = { field = "quantity", cmp = "<", value = 0 } }
"#;

    fn record(tick: u64, agent: &str, quantity: f64, price: f64) -> SignalRecord {
        SignalRecord {
            tick,
            agent_id: agent.into(),
            action: quantity,
            proposed_action: quantity,
            aggregate: price,
            extras: BTreeMap::from([("quantity".into(), quantity), ("price".into(), price)]),
        }
    }

    fn stmt(id: &str, deontic: Option<Deontic>, or_else: Option<&str>) -> Statement {
        Statement {
            id: id.into(),
            attribute: Attribute::All,
            deontic,
            aim: ConditionExpr::Always,
            condition: ConditionExpr::Always,
            or_else: or_else.map(str::to_string),
            object: None,
        }
    }

    #[test]
    fn parses_minimal_document() {
        let m = parse_manifest(MINIMAL).unwrap();
        assert_eq!(m.statements.len(), 1);
        assert_eq!(m.statements[0].kind(), StatementKind::Strategy);
    }

    #[test]
    fn undefined_constant_is_named() {
        let text = MINIMAL.replace("value = 0", "value = \"P_COMP\"");
        let err = parse_manifest(&text).unwrap_err();
        assert!(err.to_string().contains("P_COMP"), "{err}");
        let injected = BTreeMap::from([("P_COMP".to_string(), 10.0)]);
        assert!(parse_manifest_with_constants(&text, &injected).is_ok());
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_manifest("version = \"1\"\n[[statements]\n").unwrap_err();
        match err {
            ManifestError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        let dup = format!("{MINIMAL}\n{}", &MINIMAL[MINIMAL.find("[[").unwrap()..]);
        assert_eq!(parse_manifest(&dup).unwrap_err(), ManifestError::DuplicateId("no_negative".into()));
        let bad_id = MINIMAL.replace("no_negative", "NoNegative");
        assert!(matches!(parse_manifest(&bad_id), Err(ManifestError::InvalidId(_))));
        let or_else = MINIMAL.replace("attribute = \"all\"", "or_else = \"t1\"");
        assert!(matches!(parse_manifest(&or_else), Err(ManifestError::OrElseWithoutDeontic(_))));
    }

    #[test]
    fn classification() {
        assert_eq!(classify_statement(&stmt("s", None, None)), StatementKind::Strategy);
        assert_eq!(classify_statement(&stmt("n", Some(Deontic::Must), None)), StatementKind::Norm);
        assert_eq!(
            classify_statement(&stmt("r", Some(Deontic::MustNot), Some("t"))),
            StatementKind::Rule
        );
    }

    #[test]
    fn atom_and_window_evaluation() {
        let consts = BTreeMap::new();
        let mut w = EvidenceWindow::new(10);
        for t in 1..=3 {
            w.push_tick(t, vec![record(t, "a", 33.75, 43.75), record(t, "b", 22.5, 43.75)]);
        }
        let atom = ConditionExpr::Atom(Atom {
            field: "price".into(),
            cmp: Comparator::Gt,
            value: Operand::Number(40.0),
        });
        assert!(evaluate_condition(&atom, &w, "a", &consts).unwrap());

        let mean5 = ConditionExpr::Window(WindowAtom {
            agg: Aggregate::Mean,
            field: "price".into(),
            k: 5,
            cmp: Comparator::Gt,
            value: Operand::Number(40.0),
        });
        assert!(!evaluate_condition(&mean5, &w, "a", &consts).unwrap());

        let unknown = ConditionExpr::Atom(Atom {
            field: "volume".into(),
            cmp: Comparator::Gt,
            value: Operand::Number(0.0),
        });
        assert_eq!(
            evaluate_condition(&unknown, &w, "a", &consts),
            Err(EvalError::UnknownField("volume".into()))
        );
    }

    #[test]
    fn all_agents_quantifier() {
        let consts = BTreeMap::new();
        let mut w = EvidenceWindow::new(10);
        w.push_tick(1, vec![record(1, "a", 22.5, 55.0), record(1, "b", 22.5, 55.0)]);
        let cartel = ConditionExpr::AllAgents(Box::new(ConditionExpr::Atom(Atom {
            field: "quantity".into(),
            cmp: Comparator::Lt,
            value: Operand::Number(25.0),
        })));
        assert!(evaluate_condition(&cartel, &w, "a", &consts).unwrap());
        w.push_tick(2, vec![record(2, "a", 22.5, 47.5), record(2, "b", 30.0, 47.5)]);
        assert!(!evaluate_condition(&cartel, &w, "a", &consts).unwrap());
        assert!(!evaluate_condition(&cartel, &EvidenceWindow::new(3), "a", &consts).unwrap());
    }

    #[test]
    fn scaled_constants_resolve() {
        let consts = BTreeMap::from([("NASH_Q".to_string(), 30.0)]);
        let op = Operand::Scaled {
            constant: "NASH_Q".into(),
            scale: 0.9,
        };
        assert_eq!(op.resolve(&consts).unwrap(), 27.0);
    }

    fn toy_rules() -> Manifest {
        Manifest {
            version: "1".into(),
            constants: BTreeMap::new(),
            statements: vec![
                stmt("collusion_rule", Some(Deontic::MustNot), Some("warn")),
                stmt("suspension_rule", Some(Deontic::MustNot), Some("suspend")),
                stmt("restoration_rule", Some(Deontic::May), Some("restore")),
            ],
        }
    }

    #[test]
    fn compiles_against_four_state() {
        let g = canonical_four_state(&TopologyParams::default());
        let bound = compile(&toy_rules(), &g).unwrap();
        assert_eq!(bound.statement_count(), 3);
        assert_eq!(bound.bindings["collusion_rule"], vec!["warn", "fine"]);
        assert!(bound.warnings.is_empty());
    }

    #[test]
    fn dangling_or_else_is_named() {
        let g = canonical_four_state(&TopologyParams::default());
        let mut m = toy_rules();
        m.statements[0].or_else = Some("t99".into());
        let findings = compile(&m, &g).unwrap_err();
        assert!(findings.iter().any(|f| f.code == "dangling_or_else" && f.message.contains("t99")));
    }

    #[test]
    fn norm_bound_to_transition_is_rejected() {
        let g = canonical_four_state(&TopologyParams::default());
        let m = Manifest {
            version: "1".into(),
            constants: BTreeMap::new(),
            statements: vec![stmt("collusion_rule", Some(Deontic::MustNot), None)],
        };
        let findings = compile(&m, &g).unwrap_err();
        assert!(findings.iter().any(|f| f.code == "transition_bound_to_non_rule"));
    }

    #[test]
    fn permission_cannot_escalate() {
        let g = canonical_four_state(&TopologyParams::default());
        let mut m = toy_rules();
        m.statements[0].deontic = Some(Deontic::May);
        let findings = compile(&m, &g).unwrap_err();
        assert!(findings.iter().any(|f| f.code == "direction_mismatch"));
    }

    #[test]
    fn unused_rule_warns() {
        let g = canonical_four_state(&TopologyParams::default());
        let mut m = toy_rules();
        let mut extra = stmt("spare_rule", Some(Deontic::Must), Some("warn"));
        extra.or_else = Some("warn".into());
        m.statements.push(extra);
        // `warn` is triggered by collusion_rule, so the spare rule is a mismatch.
        assert!(compile(&m, &g).is_err());
        m.statements.pop();
        let g2 = crate::graph::canonical_two_state(&TopologyParams::default());
        let m2 = Manifest {
            statements: vec![
                stmt("collusion_rule", Some(Deontic::MustNot), Some("suspend")),
                stmt("restoration_rule", Some(Deontic::May), Some("restore")),
                stmt("idle_rule", Some(Deontic::Must), Some("suspend")),
            ],
            ..m
        };
        let err = compile(&m2, &g2).unwrap_err();
        assert!(err.iter().any(|f| f.code == "or_else_mismatch"));
    }

    #[test]
    fn manifest_round_trip_through_toml() {
        let mut m = toy_rules();
        m.constants.insert("NASH_Q".into(), 30.0);
        m.statements[0].aim = ConditionExpr::AllAgents(Box::new(ConditionExpr::Window(WindowAtom {
            agg: Aggregate::Max,
            field: "quantity".into(),
            k: 3,
            cmp: Comparator::Lt,
            value: Operand::Scaled {
                constant: "NASH_Q".into(),
                scale: 0.9,
            },
        })));
        m.statements[1].condition = ConditionExpr::And(vec![
            ConditionExpr::Not(Box::new(ConditionExpr::Always)),
            ConditionExpr::Atom(Atom {
                field: "price".into(),
                cmp: Comparator::Ge,
                value: Operand::Constant("NASH_Q".into()),
            }),
        ]);
        m.statements[2].attribute = Attribute::Role("seller".into());
        m.statements[2].object = Some("market".into());
        let text = m.to_toml();
        assert_eq!(parse_manifest(&text).unwrap(), m, "{text}");
    }
}
