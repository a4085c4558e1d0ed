//! Sanction calibration, incentive-compatibility checks, sanction sweeps,
//! loophole detection and verification-cost accounting.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::detect_violations;
use crate::engine::window::{EvidenceWindow, SignalRecord};
use crate::game::{deviation_gain, social_optimum, ActionProfile, Game, GameError, NASH_TOLERANCE};
use crate::graph::{Direction, GovernanceGraph, StateId, Transition};
use crate::manifest::{Aggregate, BoundInstitution, Comparator, Deontic, StatementKind};
use crate::simulator::{run, SimConfig, SimError};

/// Default relative margin added on top of the largest deviation gain.
pub const DEFAULT_CALIBRATION_MARGIN: f64 = 0.01;

/// Analysis settings carried in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Profile the institution prescribes. Defaults to the symmetric Nash
    /// profile in markets and the social optimum elsewhere.
    pub prescribed: Option<Vec<f64>>,
    pub calibration_margin: f64,
    /// Distance kept inside the legal side when probing thresholds.
    pub epsilon_margin: f64,
    pub params_per_transition: u64,
    pub nominal_d: u64,
    pub populations: Vec<u64>,
    pub sanction_grid: Option<Vec<f64>>,
    pub seeds_per_point: usize,
    /// Minimum compliant span for trajectory export.
    pub rlinf_k: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            prescribed: None,
            calibration_margin: DEFAULT_CALIBRATION_MARGIN,
            epsilon_margin: 0.0,
            params_per_transition: DEFAULT_PARAMS_PER_TRANSITION,
            nominal_d: 10,
            populations: vec![1, 10, 100],
            sanction_grid: None,
            seeds_per_point: 20,
            rlinf_k: 10,
        }
    }
}

/// The configured prescribed profile, or the default described on
/// [`AnalysisConfig::prescribed`].
pub fn prescribed_profile(config: &SimConfig) -> Result<ActionProfile, GameError> {
    let game = &config.game;
    let profile = match (&config.analysis.prescribed, game) {
        (Some(p), _) => ActionProfile::new(p.clone()),
        (None, Game::Cournot(m)) => ActionProfile::symmetric(m.closed_forms().nash_q, m.players),
        (None, _) => social_optimum(game, config.welfare, config.grid_resolution)?.profile,
    };
    game.validate_profile(&profile)?;
    Ok(profile)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub prescribed_profile: ActionProfile,
    pub max_deviation_gain: f64,
    pub recommended_sanction: f64,
    pub per_player_gains: Vec<f64>,
}

/// Recommends `max_i Δu_i × (1 + margin)`.
pub fn calibrate_sanction(
    game: &Game,
    prescribed: &ActionProfile,
    grid_resolution: usize,
    margin: f64,
) -> Result<CalibrationResult, GameError> {
    let per_player_gains = (0..game.players())
        .map(|i| deviation_gain(game, i, prescribed, grid_resolution))
        .collect::<Result<Vec<_>, _>>()?;
    let max = per_player_gains.iter().copied().fold(0.0, f64::max);
    Ok(CalibrationResult {
        prescribed_profile: prescribed.clone(),
        max_deviation_gain: max,
        recommended_sanction: max * (1.0 + margin),
        per_player_gains,
    })
}

/// True iff no player strictly gains by a unilateral grid deviation from
/// `prescribed` when every deviation costs `sanction`.
pub fn verify_incentive_compatibility(
    game: &Game,
    prescribed: &ActionProfile,
    sanction: f64,
    grid_resolution: usize,
) -> Result<bool, GameError> {
    game.validate_profile(prescribed)?;
    let base = game.payoffs_unchecked(prescribed.actions());
    for (i, &u0) in base.iter().enumerate() {
        let own = prescribed.actions()[i];
        for a in game.action_grid(i, grid_resolution) {
            if (a - own).abs() <= NASH_TOLERANCE {
                continue;
            }
            let dev = prescribed.with_action(i, a);
            if game.payoff_unchecked(i, dev.actions()) - sanction > u0 + NASH_TOLERANCE {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub sanction: f64,
    pub runs: usize,
    pub compliance_mean: f64,
    pub compliance_std: f64,
    pub collusion_index_mean: Option<f64>,
    pub collusion_index_std: Option<f64>,
    pub welfare_mean: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Runs `seeds_per_point` simulations per sanction in parallel. Run `r`
/// (numbered across the whole sweep) uses seed `config.seed + r`; results
/// come back in grid order.
pub fn sanction_sweep(config: &SimConfig, sanctions: &[f64], seeds_per_point: usize) -> Result<Vec<SweepPoint>, SimError> {
    let seeds = seeds_per_point.max(1);
    let jobs: Vec<(usize, u64)> = (0..sanctions.len())
        .flat_map(|p| (0..seeds).map(move |s| (p, (p * seeds + s) as u64)))
        .collect();
    let results: Vec<(f64, Option<f64>, f64)> = jobs
        .par_iter()
        .map(|&(p, r)| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(r);
            cfg.institution.sanction_override = Some(sanctions[p]);
            let m = run(&cfg)?.metrics;
            Ok((m.compliance_rate, m.mean_collusion_index, m.mean_welfare))
        })
        .collect::<Result<_, SimError>>()?;
    Ok(sanctions
        .iter()
        .enumerate()
        .map(|(p, &s)| {
            let chunk = &results[p * seeds..(p + 1) * seeds];
            let compliance: Vec<f64> = chunk.iter().map(|r| r.0).collect();
            let ci: Vec<f64> = chunk.iter().filter_map(|r| r.1).collect();
            let welfare: Vec<f64> = chunk.iter().map(|r| r.2).collect();
            let (compliance_mean, compliance_std) = mean_std(&compliance);
            let ci_stats = (!ci.is_empty()).then(|| mean_std(&ci));
            SweepPoint {
                sanction: s,
                runs: seeds,
                compliance_mean,
                compliance_std,
                collusion_index_mean: ci_stats.map(|c| c.0),
                collusion_index_std: ci_stats.map(|c| c.1),
                welfare_mean: mean_std(&welfare).0,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopholeKind {
    ZeroCostCycle,
    UnderMonitoredState,
    ThresholdGaming,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopholeFinding {
    pub kind: LoopholeKind,
    /// State ids, transition ids or statement ids locating the exploit.
    pub location: Vec<String>,
    /// Payoff advantage of the exploit; always positive.
    pub margin: f64,
    pub explanation: String,
}

/// Minimum ticks an agent spends crossing `t`: one for an escalation, the
/// longest window of the statement triggering a restoration.
fn dwell(bound: &BoundInstitution, t: &Transition) -> u64 {
    match t.direction {
        Direction::Escalation => 1,
        Direction::Restorative => bound
            .manifest
            .statement(&t.statement)
            .map_or(1, |s| s.evidence_depth() as u64),
    }
}

fn simple_cycles_through<'g>(graph: &'g GovernanceGraph, start: &str) -> Vec<Vec<&'g Transition>> {
    fn walk<'g>(
        graph: &'g GovernanceGraph,
        start: &str,
        at: &str,
        visited: &mut BTreeSet<StateId>,
        path: &mut Vec<&'g Transition>,
        out: &mut Vec<Vec<&'g Transition>>,
    ) {
        for t in graph.outgoing(at) {
            if t.to == start {
                path.push(t);
                out.push(path.clone());
                path.pop();
            } else if !visited.contains(&t.to) && graph.state(&t.to).is_some() {
                visited.insert(t.to.clone());
                path.push(t);
                walk(graph, start, &t.to, visited, path, out);
                path.pop();
                visited.remove(&t.to);
            }
        }
    }
    let mut out = Vec::new();
    let mut visited = BTreeSet::from([start.to_string()]);
    walk(graph, start, start, &mut visited, &mut Vec::new(), &mut out);
    out
}

/// Flags simple cycles through the initial state that an agent gaining
/// `per_tick_gain` every tick can traverse at a profit. A cycle lasts the
/// sum of its edge dwell times, and at least its longest cooldown; it costs
/// its sanctions plus the levy of each source state over that edge's dwell.
pub fn find_zero_cost_cycles(bound: &BoundInstitution, per_tick_gain: f64) -> Vec<LoopholeFinding> {
    let graph = &bound.graph;
    let initial = graph.initial_state().id.clone();
    let mut out = Vec::new();
    for cycle in simple_cycles_through(graph, &initial) {
        let dwell_ticks: u64 = cycle.iter().map(|t| dwell(bound, t)).sum();
        let cooldown = cycle.iter().map(|t| t.cooldown).max().unwrap_or(0);
        let ticks = dwell_ticks.max(cooldown);
        let sanctions: f64 = cycle.iter().map(|t| t.sanction).sum();
        let levies: f64 = cycle
            .iter()
            .map(|t| graph.state(&t.from).map_or(0.0, |s| s.levy) * dwell(bound, t) as f64)
            .sum();
        let margin = per_tick_gain * ticks as f64 - sanctions - levies;
        if margin > NASH_TOLERANCE {
            let ids: Vec<String> = cycle.iter().map(|t| t.id.clone()).collect();
            out.push(LoopholeFinding {
                kind: LoopholeKind::ZeroCostCycle,
                explanation: format!(
                    "cycle {} takes {ticks} ticks; gaining {per_tick_gain} per tick outweighs sanctions {sanctions} and levies {levies}",
                    ids.join(" -> ")
                ),
                location: ids,
                margin,
            });
        }
    }
    out
}

/// Sets every escalation's sanction high enough that no simple cycle
/// through the initial state profits an agent gaining `per_tick_gain` per
/// tick.
pub fn calibrate_graph(bound: &BoundInstitution, per_tick_gain: f64, margin: f64) -> GovernanceGraph {
    let longest_restoration = bound
        .graph
        .transitions
        .iter()
        .filter(|t| t.direction == Direction::Restorative)
        .map(|t| dwell(bound, t).max(t.cooldown))
        .max()
        .unwrap_or(0);
    let sanction = per_tick_gain * (1.0 + longest_restoration as f64) * (1.0 + margin);
    let mut g = bound.graph.clone();
    for t in g.transitions.iter_mut().filter(|t| t.direction == Direction::Escalation) {
        t.sanction = t.sanction.max(sanction);
    }
    g
}

/// A window holding `depth` ticks of constant play of `actions`.
fn constant_play_window(game: &Game, ids: &[String], actions: &[f64], depth: usize) -> EvidenceWindow {
    let mut w = EvidenceWindow::new(depth);
    for t in 1..=depth as u64 {
        w.push_tick(t, SignalRecord::for_tick(game, t, ids, actions, actions));
    }
    w
}

fn player_ids(game: &Game) -> Vec<String> {
    (0..game.players()).map(|i| format!("player_{i}")).collect()
}

/// Flags states where some action permitted by the state's capability
/// fires none of the state's escalation rules yet beats the prescribed
/// payoff, judged under sustained unilateral deviation.
pub fn find_under_monitored_states(
    bound: &BoundInstitution,
    game: &Game,
    prescribed: &ActionProfile,
    grid_resolution: usize,
) -> Result<Vec<LoopholeFinding>, GameError> {
    game.validate_profile(prescribed)?;
    let ids = player_ids(game);
    let depth = bound.manifest.max_evidence_depth();
    let base = game.payoffs_unchecked(prescribed.actions());
    let roles = Default::default();
    let mut out = Vec::new();
    for state in &bound.graph.states {
        let guarded: BTreeSet<&str> = bound
            .graph
            .outgoing(&state.id)
            .into_iter()
            .filter(|t| t.direction == Direction::Escalation)
            .map(|t| t.statement.as_str())
            .collect();
        let mut best: Option<(f64, usize, f64)> = None;
        for i in 0..game.players() {
            let mut candidates: Vec<f64> = game
                .action_grid(i, grid_resolution)
                .into_iter()
                .map(|a| state.capability.project(a))
                .collect();
            candidates.sort_by(f64::total_cmp);
            candidates.dedup();
            for a in candidates {
                let dev = prescribed.with_action(i, a);
                let w = constant_play_window(game, &ids, dev.actions(), depth);
                let fired = detect_violations(bound, &w, depth as u64, &roles).unwrap_or_default();
                let caught = fired
                    .get(&ids[i])
                    .is_some_and(|f| f.iter().any(|x| guarded.contains(x.statement.as_str())));
                if caught {
                    continue;
                }
                let gain = game.payoff_unchecked(i, dev.actions()) - base[i];
                if best.is_none_or(|(g, _, _)| gain > g + NASH_TOLERANCE) {
                    best = Some((gain, i, a));
                }
            }
        }
        if let Some((gain, player, action)) = best.filter(|(g, _, _)| *g > NASH_TOLERANCE) {
            out.push(LoopholeFinding {
                kind: LoopholeKind::UnderMonitoredState,
                location: vec![state.id.clone()],
                margin: gain,
                explanation: format!(
                    "in `{}`, player {player} can play {action}, which no escalation rule of the state catches, and gain {gain} over the prescribed profile",
                    state.id
                ),
            });
        }
    }
    Ok(out)
}

fn monitored_value(game: &Game, field: &str, actions: &[f64]) -> Option<f64> {
    let (action_alias, aggregate_alias) = game.signal_aliases();
    if field == "action" || field == "proposed" || field == "proposed_action" || field == action_alias {
        Some(actions[0])
    } else if field == "aggregate" || Some(field) == aggregate_alias {
        Some(game.aggregate(actions))
    } else {
        None
    }
}

/// Flags threshold atoms of prohibitive rules whose legal boundary can be
/// exploited: the best symmetric payoff with the monitored value kept
/// `epsilon` inside the legal side beats the prescribed payoff. Equality
/// atoms and counts have no side and are skipped.
pub fn find_threshold_gaming(
    bound: &BoundInstitution,
    game: &Game,
    prescribed: &ActionProfile,
    grid_resolution: usize,
    epsilon: f64,
) -> Result<Vec<LoopholeFinding>, GameError> {
    game.validate_profile(prescribed)?;
    let n = game.players();
    let reference = game.payoff_unchecked(0, prescribed.actions());
    let constants = &bound.manifest.constants;
    let mut out = Vec::new();
    for s in bound.manifest.statements.iter().filter(|s| s.kind() == StatementKind::Rule) {
        let atom_must_hold = match s.deontic {
            Some(Deontic::MustNot) => false,
            Some(Deontic::Must) => true,
            _ => continue,
        };
        for atom in s.aim.threshold_atoms() {
            if atom.cmp == Comparator::Eq || atom.aggregate == Some(Aggregate::Count) {
                continue;
            }
            let Ok(threshold) = atom.value.resolve(constants) else {
                continue;
            };
            // The atom is legal when it evaluates to `legal_truth`.
            let legal_truth = atom_must_hold != atom.negated;
            let legal = |v: f64| atom.cmp.holds(v, threshold) == legal_truth;

            let mut candidates = game.action_grid(0, grid_resolution);
            let (lo, hi) = game.action_bounds(0);
            if monitored_value(game, atom.field, &vec![threshold; n]) == Some(threshold) {
                let strict_inside = epsilon.max(NASH_TOLERANCE * threshold.abs().max(1.0));
                for v in [threshold - epsilon, threshold + epsilon, threshold - strict_inside, threshold + strict_inside] {
                    if (lo..=hi).contains(&v) {
                        candidates.push(v);
                    }
                }
            }
            let mut best: Option<(f64, f64)> = None;
            for a in candidates {
                let profile = vec![a; n];
                let Some(v) = monitored_value(game, atom.field, &profile) else {
                    continue;
                };
                if !legal(v) {
                    continue;
                }
                if (v - threshold).abs() + NASH_TOLERANCE < epsilon {
                    continue;
                }
                let u = game.payoff_unchecked(0, &profile);
                if best.is_none_or(|(bu, _)| u > bu + NASH_TOLERANCE) {
                    best = Some((u, a));
                }
            }
            if let Some((u, a)) = best {
                let margin = u - reference;
                if margin > NASH_TOLERANCE {
                    out.push(LoopholeFinding {
                        kind: LoopholeKind::ThresholdGaming,
                        location: vec![s.id.clone(), atom.field.to_string()],
                        margin,
                        explanation: format!(
                            "`{}` tests {} {} {threshold}; symmetric play at {a} stays legal and pays {u} per player against {reference} at the prescribed profile",
                            s.id,
                            atom.field,
                            atom.cmp.symbol()
                        ),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Parameters counted per transition by default: trigger, sanction,
/// cooldown and direction.
pub const DEFAULT_PARAMS_PER_TRANSITION: u64 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationCostReport {
    pub states: u64,
    pub params_per_transition: u64,
    pub population: u64,
    pub nominal_d: u64,
    /// `|Q|² · P`, independent of population.
    pub graph_cost: u64,
    /// One unit per agent.
    pub monitoring_cost: u64,
    /// `N·d + N(N−1)/2`.
    pub agent_space_cost: u64,
    /// Smallest `N` with `graph_cost + N < agent_space_cost`.
    pub crossover_n: u64,
}

fn agent_space_cost(n: u64, d: u64) -> u64 {
    n * d + n * n.saturating_sub(1) / 2
}

pub fn verification_cost_report(
    graph: &GovernanceGraph,
    params_per_transition: u64,
    population: u64,
    nominal_d: u64,
) -> VerificationCostReport {
    let q = graph.states.len() as u64;
    let graph_cost = q * q * params_per_transition;
    let crossover_n = (1..)
        .find(|&n| graph_cost + n < agent_space_cost(n, nominal_d))
        .expect("quadratic cost eventually dominates");
    VerificationCostReport {
        states: q,
        params_per_transition,
        population,
        nominal_d,
        graph_cost,
        monitoring_cost: population,
        agent_space_cost: agent_space_cost(population, nominal_d),
        crossover_n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{CournotMarket, MatrixGame, PublicGoodsGame};
    use crate::graph::{canonical_four_state, canonical_three_state, canonical_two_state, TopologyParams};
    use crate::manifest::{compile, parse_manifest_with_constants};

    fn public_goods() -> Game {
        Game::PublicGoods(PublicGoodsGame::new(10.0, 2.0, 4).unwrap())
    }

    fn duopoly() -> Game {
        Game::Cournot(CournotMarket::new(100.0, 1.0, 10.0, 90.0, 2).unwrap())
    }

    fn pd() -> Game {
        Game::Matrix(MatrixGame::prisoners_dilemma(3.0, 5.0, 0.0, 1.0))
    }

    #[test]
    fn calibration_examples() {
        let c = calibrate_sanction(&public_goods(), &ActionProfile::symmetric(10.0, 4), 11, 0.01).unwrap();
        assert_eq!(c.max_deviation_gain, 5.0);
        assert!((c.recommended_sanction - 5.05).abs() < 1e-12);
        let c = calibrate_sanction(&pd(), &vec![0.0, 0.0].into(), 2, 0.01).unwrap();
        assert_eq!(c.max_deviation_gain, 2.0);
        assert!((c.recommended_sanction - 2.02).abs() < 1e-12);
        let c = calibrate_sanction(&duopoly(), &vec![30.0, 30.0].into(), 91, 0.01).unwrap();
        assert!(c.max_deviation_gain <= NASH_TOLERANCE);
    }

    #[test]
    fn incentive_compatibility_flips_at_max_gain() {
        let all_ten = ActionProfile::symmetric(10.0, 4);
        assert!(verify_incentive_compatibility(&public_goods(), &all_ten, 5.01, 11).unwrap());
        assert!(!verify_incentive_compatibility(&public_goods(), &all_ten, 4.99, 11).unwrap());
        assert!(verify_incentive_compatibility(&duopoly(), &vec![30.0, 30.0].into(), 0.0, 91).unwrap());
    }

    const RULES: &str = r#"
version = "1"
[[statements]]
id = "collusion_rule"
deontic = "must_not"
or_else = "suspend"
aim = { atom = { field = "quantity", cmp = "<", value = { constant = "NASH_Q", scale = 0.9 } } }
[[statements]]
id = "restoration_rule"
deontic = "may"
or_else = "restore"
aim = { window = { agg = "max", field = "violation", k = 1, cmp = "<", value = 0.5 } }
"#;

    fn two_state(sanction: f64) -> BoundInstitution {
        let m = parse_manifest_with_constants(RULES, &duopoly().benchmarks()).unwrap();
        compile(
            &m,
            &canonical_two_state(&TopologyParams {
                sanction,
                ..TopologyParams::default()
            }),
        )
        .unwrap()
    }

    #[test]
    fn zero_cost_two_state_cycle() {
        let f = find_zero_cost_cycles(&two_state(0.0), 5.0);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].margin, 10.0);
        assert_eq!(f[0].location, vec!["suspend", "restore"]);
        assert!(find_zero_cost_cycles(&two_state(0.0), 0.0).is_empty());
        assert!(find_zero_cost_cycles(&two_state(10.0), 5.0).is_empty());
    }

    #[test]
    fn calibrated_graph_closes_every_cycle() {
        let text = RULES.replace("or_else = \"suspend\"", "or_else = \"warn\"").replace("k = 1,", "k = 10,");
        let text = format!(
            "{text}\n[[statements]]\nid = \"suspension_rule\"\ndeontic = \"must_not\"\nor_else = \"suspend\"\naim = {{ atom = {{ field = \"quantity\", cmp = \"<\", value = 1.0 }} }}\n"
        );
        let m = parse_manifest_with_constants(&text, &duopoly().benchmarks()).unwrap();
        let bound = compile(&m, &canonical_four_state(&TopologyParams::default())).unwrap();
        assert!(!find_zero_cost_cycles(&bound, 126.5625).is_empty());
        let calibrated = compile(&m, &calibrate_graph(&bound, 126.5625, 0.01)).unwrap();
        assert!(find_zero_cost_cycles(&calibrated, 126.5625).is_empty());
    }

    #[test]
    fn threshold_gaming_examples() {
        let nash = ActionProfile::from(vec![30.0, 30.0]);
        let f = find_threshold_gaming(&two_state(1.0), &duopoly(), &nash, 91, 0.0).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].margin, 72.0);

        let at_nash = RULES.replace("scale = 0.9", "scale = 1.0");
        let m = parse_manifest_with_constants(&at_nash, &duopoly().benchmarks()).unwrap();
        let b = compile(&m, &canonical_two_state(&TopologyParams::default())).unwrap();
        assert!(find_threshold_gaming(&b, &duopoly(), &nash, 91, 0.0).unwrap().is_empty());

        let eq = RULES.replace("cmp = \"<\", value = { constant", "cmp = \"=\", value = { constant");
        let m = parse_manifest_with_constants(&eq, &duopoly().benchmarks()).unwrap();
        let b = compile(&m, &canonical_two_state(&TopologyParams::default())).unwrap();
        assert!(find_threshold_gaming(&b, &duopoly(), &nash, 91, 0.0).unwrap().is_empty());
    }

    const PG_RULES: &str = r#"
version = "1"
[[statements]]
id = "collusion_rule"
deontic = "must_not"
or_else = "warn"
aim = { atom = { field = "contribution", cmp = "<", value = "FULL_CONTRIBUTION" } }
[[statements]]
id = "restoration_rule"
deontic = "may"
or_else = "restore"
aim = { window = { agg = "max", field = "violation", k = 2, cmp = "<", value = 0.5 } }
"#;

    #[test]
    fn under_monitored_warning_state() {
        let game = public_goods();
        let all_ten = ActionProfile::symmetric(10.0, 4);
        let m = parse_manifest_with_constants(PG_RULES, &game.benchmarks()).unwrap();
        let mut g = canonical_three_state(&TopologyParams {
            suspended_capability: crate::graph::CapabilityMask::Interval { min: 10.0, max: 10.0 },
            ..TopologyParams::default()
        });
        let covered = compile(&m, &g).unwrap();
        assert!(find_under_monitored_states(&covered, &game, &all_ten, 11).unwrap().is_empty());

        g.transitions.retain(|t| t.id != "suspend");
        let bound = compile(&m, &g).unwrap();
        let f = find_under_monitored_states(&bound, &game, &all_ten, 11).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].location, vec!["warning"]);
        assert_eq!(f[0].margin, 5.0);
    }

    #[test]
    fn forced_zero_action_is_never_profitable_in_cournot() {
        let bound = two_state(1.0);
        let f = find_under_monitored_states(&bound, &duopoly(), &vec![30.0, 30.0].into(), 91).unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn verification_cost_formulas() {
        let g = canonical_four_state(&TopologyParams::default());
        for (n, agent) in [(1, 10), (10, 145), (100, 5950)] {
            let r = verification_cost_report(&g, 4, n, 10);
            assert_eq!(r.graph_cost, 64);
            assert_eq!(r.monitoring_cost, n);
            assert_eq!(r.agent_space_cost, agent);
        }
        // 64 + 6 = 70 < 6·10 + 15 = 75, while 64 + 5 = 69 ≥ 60.
        assert_eq!(verification_cost_report(&g, 4, 1, 10).crossover_n, 6);
    }
}
