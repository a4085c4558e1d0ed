//! Test support: fixture paths and a random generator of well-formed
//! manifest statements.

use std::collections::BTreeMap;
use std::path::PathBuf;

use institution_core::manifest::{
    Aggregate, Atom, Attribute, Comparator, ConditionExpr, Deontic, Manifest, Operand, Statement, StatementKind,
    WindowAtom,
};
use rand::Rng;

pub fn fixture(relative: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(relative)
}

pub const CONSTANTS: [&str; 3] = ["NASH_Q", "CARTEL_Q", "LIMIT"];
const FIELDS: [&str; 4] = ["quantity", "contribution", "choice", "violation"];
const COMPARATORS: [Comparator; 5] = [
    Comparator::Lt,
    Comparator::Le,
    Comparator::Eq,
    Comparator::Ge,
    Comparator::Gt,
];
const AGGREGATES: [Aggregate; 4] = [Aggregate::Mean, Aggregate::Min, Aggregate::Max, Aggregate::Count];
const DEONTICS: [Deontic; 3] = [Deontic::May, Deontic::Must, Deontic::MustNot];

fn pick<T: Clone>(rng: &mut impl Rng, xs: &[T]) -> T {
    xs[rng.random_range(0..xs.len())].clone()
}

/// Finite value that survives text serialization: a multiple of 1/64.
fn number(rng: &mut impl Rng) -> f64 {
    rng.random_range(-6400..=6400) as f64 / 64.0
}

fn operand(rng: &mut impl Rng) -> Operand {
    match rng.random_range(0..3) {
        0 => Operand::Number(number(rng)),
        1 => Operand::Constant(pick(rng, &CONSTANTS).to_string()),
        _ => Operand::Scaled {
            constant: pick(rng, &CONSTANTS).to_string(),
            scale: rng.random_range(1..=200) as f64 / 100.0,
        },
    }
}

pub fn condition(rng: &mut impl Rng, depth: u32) -> ConditionExpr {
    let leaf = depth == 0 || rng.random_bool(0.4);
    if leaf {
        return match rng.random_range(0..3) {
            0 => ConditionExpr::Always,
            1 => ConditionExpr::Atom(Atom {
                field: pick(rng, &FIELDS).to_string(),
                cmp: pick(rng, &COMPARATORS),
                value: operand(rng),
            }),
            _ => ConditionExpr::Window(WindowAtom {
                agg: pick(rng, &AGGREGATES),
                field: pick(rng, &FIELDS).to_string(),
                k: rng.random_range(1..=12),
                cmp: pick(rng, &COMPARATORS),
                value: operand(rng),
            }),
        };
    }
    match rng.random_range(0..4) {
        0 => ConditionExpr::AllAgents(Box::new(condition(rng, depth - 1))),
        1 => ConditionExpr::Not(Box::new(condition(rng, depth - 1))),
        2 => ConditionExpr::And((0..rng.random_range(1..=3)).map(|_| condition(rng, depth - 1)).collect()),
        _ => ConditionExpr::Or((0..rng.random_range(1..=3)).map(|_| condition(rng, depth - 1)).collect()),
    }
}

/// A random statement built to be of `kind`.
pub fn statement(rng: &mut impl Rng, index: usize, kind: StatementKind) -> Statement {
    let attribute = match rng.random_range(0..3) {
        0 => Attribute::All,
        1 => Attribute::Role(format!("role_{}", rng.random_range(0..5))),
        _ => Attribute::Agent(format!("firm_{}", rng.random_range(0..5))),
    };
    let deontic = (kind != StatementKind::Strategy).then(|| pick(rng, &DEONTICS));
    let or_else = (kind == StatementKind::Rule).then(|| format!("edge_{}", rng.random_range(0..8)));
    Statement {
        id: format!("statement_{index}"),
        attribute,
        deontic,
        aim: condition(rng, 3),
        condition: if rng.random_bool(0.5) { ConditionExpr::Always } else { condition(rng, 2) },
        or_else,
        object: rng.random_bool(0.5).then(|| "market".to_string()),
    }
}

pub fn random_kind(rng: &mut impl Rng) -> StatementKind {
    pick(rng, &[StatementKind::Strategy, StatementKind::Norm, StatementKind::Rule])
}

pub fn manifest_of(statements: Vec<Statement>) -> Manifest {
    let constants: BTreeMap<String, f64> = CONSTANTS
        .iter()
        .zip([30.0, 22.5, 27.0])
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Manifest {
        version: "1".into(),
        constants,
        statements,
    }
}
