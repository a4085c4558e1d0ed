use std::collections::BTreeMap;
use std::path::PathBuf;

use institution_core::analysis::{calibrate_sanction, verify_incentive_compatibility};
use institution_core::engine::log::{audit_verify, audit_verify_jsonl, EventDraft, EventKind, EventLog};
use institution_core::game::{ActionProfile, Game, MatrixGame, PublicGoodsGame};
use institution_core::manifest::{
    parse_manifest, Aggregate, Atom, Attribute, Comparator, ConditionExpr, Deontic, Manifest, Operand, Statement,
    StatementKind, WindowAtom,
};
use institution_core::simulator::{rlinf_export, run, SimConfig};
use proptest::prelude::*;

fn fixture_config(name: &str) -> SimConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/configs").join(name);
    SimConfig::from_file(&path).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn public_goods_sanction_threshold_is_the_free_riding_gain(
        e in 1u32..=20,
        n in 2usize..=6,
        r_quarters in 5u32..=23,
    ) {
        let r = r_quarters as f64 / 4.0;
        prop_assume!(r < n as f64);
        let e = e as f64;
        let game = Game::PublicGoods(PublicGoodsGame::new(e, r, n).unwrap());
        let full = ActionProfile::symmetric(e, n);
        let grid = e as usize + 1;
        let oracle = e * (1.0 - r / n as f64);
        let gain = calibrate_sanction(&game, &full, grid, 0.0).unwrap().max_deviation_gain;
        prop_assert!((gain - oracle).abs() < 1e-9, "gain {} oracle {}", gain, oracle);
        prop_assert!(verify_incentive_compatibility(&game, &full, oracle + 0.01, grid).unwrap());
        prop_assert!(!verify_incentive_compatibility(&game, &full, oracle - 0.01, grid).unwrap());
    }

    #[test]
    fn dilemma_sanction_threshold_is_temptation_minus_reward(
        p in -10i32..10,
        dr in 1i32..10,
        dt in 1i32..10,
        ds in 1i32..10,
    ) {
        let (punishment, reward) = (p as f64, (p + dr) as f64);
        let (temptation, sucker) = (reward + dt as f64, punishment - ds as f64);
        let game = Game::Matrix(MatrixGame::prisoners_dilemma(reward, temptation, sucker, punishment));
        let cooperate = ActionProfile::new(vec![0.0, 0.0]);
        let gain = temptation - reward;
        prop_assert_eq!(calibrate_sanction(&game, &cooperate, 2, 0.0).unwrap().max_deviation_gain, gain);
        prop_assert!(verify_incentive_compatibility(&game, &cooperate, gain + 0.01, 2).unwrap());
        prop_assert!(!verify_incentive_compatibility(&game, &cooperate, gain - 0.01, 2).unwrap());
    }
}

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![proptest::num::f64::NORMAL | proptest::num::f64::ZERO, (-1000i32..1000).prop_map(|v| v as f64 / 8.0)]
}

fn operand() -> impl Strategy<Value = Operand> {
    let constant = prop::sample::select(vec!["NASH_Q", "LIMIT"]).prop_map(str::to_string);
    prop_oneof![
        number().prop_map(Operand::Number),
        constant.clone().prop_map(Operand::Constant),
        (constant, number()).prop_map(|(constant, scale)| Operand::Scaled { constant, scale }),
    ]
}

fn comparator() -> impl Strategy<Value = Comparator> {
    prop::sample::select(vec![Comparator::Lt, Comparator::Le, Comparator::Eq, Comparator::Ge, Comparator::Gt])
}

fn field() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["quantity", "contribution", "violation", "price_signal"]).prop_map(str::to_string)
}

fn condition() -> impl Strategy<Value = ConditionExpr> {
    let aggregate = prop::sample::select(vec![Aggregate::Mean, Aggregate::Min, Aggregate::Max, Aggregate::Count]);
    let leaf = prop_oneof![
        Just(ConditionExpr::Always),
        (field(), comparator(), operand()).prop_map(|(field, cmp, value)| ConditionExpr::Atom(Atom { field, cmp, value })),
        (aggregate, field(), 1usize..50, comparator(), operand())
            .prop_map(|(agg, field, k, cmp, value)| ConditionExpr::Window(WindowAtom { agg, field, k, cmp, value })),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| ConditionExpr::AllAgents(Box::new(e))),
            inner.clone().prop_map(|e| ConditionExpr::Not(Box::new(e))),
            prop::collection::vec(inner.clone(), 0..3).prop_map(ConditionExpr::And),
            prop::collection::vec(inner, 0..3).prop_map(ConditionExpr::Or),
        ]
    })
}

fn statement() -> impl Strategy<Value = (Statement, StatementKind)> {
    let attribute = prop_oneof![
        Just(Attribute::All),
        "[a-z][a-z0-9_]{0,8}".prop_map(Attribute::Role),
        "[A-Za-z0-9_-]{1,8}".prop_map(Attribute::Agent),
    ];
    let kind = prop::sample::select(vec![StatementKind::Strategy, StatementKind::Norm, StatementKind::Rule]);
    let deontic = prop::sample::select(vec![Deontic::May, Deontic::Must, Deontic::MustNot]);
    (
        "[a-z][a-z0-9_]{0,12}",
        attribute,
        kind,
        deontic,
        condition(),
        condition(),
        "[a-z][a-z_]{0,8}",
        prop::option::of("[a-z]{1,8}"),
    )
        .prop_map(|(id, attribute, kind, deontic, aim, condition, or_else, object)| {
            let statement = Statement {
                id,
                attribute,
                deontic: (kind != StatementKind::Strategy).then_some(deontic),
                aim,
                condition,
                or_else: (kind == StatementKind::Rule).then_some(or_else),
                object,
            };
            (statement, kind)
        })
}

fn manifest_of(statements: Vec<Statement>) -> Manifest {
    Manifest {
        version: "1".into(),
        constants: BTreeMap::from([("NASH_Q".into(), 30.0), ("LIMIT".into(), 27.0)]),
        statements,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn manifests_round_trip_and_classify((s, kind) in statement()) {
        prop_assert_eq!(s.kind(), kind);
        let m = manifest_of(vec![s]);
        let parsed = parse_manifest(&m.to_toml()).unwrap();
        prop_assert_eq!(parsed.statements[0].kind(), kind);
        prop_assert_eq!(parsed, m);
    }

    #[test]
    fn any_byte_flip_breaks_the_chain(
        drafts in prop::collection::vec((1u64..100, 0usize..3, 0usize..6, 0.0f64..1e4), 1..20),
        pick in any::<prop::sample::Index>(),
        mask in 1u8..=255,
    ) {
        let kinds = [
            EventKind::ViolationDetected,
            EventKind::Transition,
            EventKind::SanctionApplied,
            EventKind::CapabilityClamp,
            EventKind::Restoration,
            EventKind::AdvisoryMatch,
        ];
        let mut log = EventLog::new();
        for (tick, agent, kind, amount) in drafts {
            log.append(EventDraft::new(tick, format!("agent_{agent}"), kinds[kind]).statement("rule").amount(amount))
                .unwrap();
        }
        prop_assert!(audit_verify(log.entries()).valid);
        let text = log.to_jsonl();
        prop_assert!(audit_verify_jsonl(text.as_bytes()).valid);
        let header = text.find('\n').unwrap() + 1;
        let mut bytes = text.into_bytes();
        let pos = header + pick.index(bytes.len() - header);
        bytes[pos] ^= mask;
        prop_assert!(!audit_verify_jsonl(&bytes).valid, "flip at {} accepted", pos);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn run_accounting_invariants(
        seed in any::<u64>(),
        sanction in prop_oneof![Just(0.0), 0.0f64..3000.0],
        p_detect in prop_oneof![Just(1.0), 0.0f64..=1.0],
        learners in any::<bool>(),
    ) {
        let mut cfg = if learners {
            let mut c = fixture_config("cournot_q_learning.toml");
            c.ticks = 300;
            c
        } else {
            fixture_config("cournot_collusive.toml")
        };
        cfg.seed = seed;
        cfg.institution.sanction_override = Some(sanction);
        cfg.institution.p_detect = p_detect;
        let out = run(&cfg).unwrap();
        let m = &out.metrics;

        for (agent, states) in &m.occupancy {
            let total: f64 = states.values().sum();
            prop_assert!((total - 1.0).abs() < 1e-9, "{} occupancy sums to {}", agent, total);
        }
        for t in &m.ticks {
            for i in 0..m.agent_ids.len() {
                prop_assert_eq!(t.modified_payoffs[i], t.payoffs[i] - t.levies[i] - t.sanctions[i]);
            }
        }
        let violations = out.log.count(EventKind::ViolationDetected);
        let paid = out
            .log
            .entries()
            .iter()
            .filter(|e| e.kind == EventKind::SanctionApplied && e.amount > 0.0)
            .count();
        prop_assert!(out.log.count(EventKind::Transition) <= violations);
        prop_assert!(paid <= out.log.count(EventKind::Transition));
        prop_assert_eq!(m.transitions, out.log.count(EventKind::Transition) as u64);
        prop_assert_eq!(m.restorations, out.log.count(EventKind::Restoration) as u64);
        let logged: f64 = out
            .log
            .entries()
            .iter()
            .filter(|e| e.kind == EventKind::SanctionApplied)
            .map(|e| e.amount)
            .sum();
        let charged: f64 = m.ticks.iter().flat_map(|t| t.sanctions.iter()).sum();
        prop_assert!((logged - charged).abs() <= 1e-9 * logged.max(1.0));
        prop_assert!((m.total_sanctions - charged).abs() <= 1e-9 * charged.max(1.0));
        prop_assert!(audit_verify_jsonl(out.log.to_jsonl().as_bytes()).valid);

        let k = 5;
        for r in rlinf_export(m, k) {
            let i = m.agent_ids.iter().position(|a| *a == r.agent).unwrap();
            let at = m.ticks.iter().position(|t| t.tick == r.tick).unwrap();
            prop_assert!(at + 1 >= k);
            for t in &m.ticks[at + 1 - k..=at] {
                prop_assert_eq!(t.episode, r.episode);
                prop_assert_eq!(&t.states_after[i], &m.initial_state);
            }
        }

        cfg.institution.enabled = false;
        let ungoverned = run(&cfg).unwrap();
        prop_assert!(ungoverned.log.is_empty());
        for t in &ungoverned.metrics.ticks {
            prop_assert_eq!(&t.modified_payoffs, &t.payoffs);
        }
    }
}
