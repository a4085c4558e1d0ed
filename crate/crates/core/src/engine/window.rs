//! Public observables and the bounded evidence window the oracle reads.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::game::Game;
use crate::graph::Tick;

use super::VIOLATION_FIELD;

/// One agent's public signal for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub tick: Tick,
    pub agent_id: String,
    /// Effective action after capability clamping.
    pub action: f64,
    pub proposed_action: f64,
    /// Game-level aggregate such as the market price.
    pub aggregate: f64,
    #[serde(default)]
    pub extras: BTreeMap<String, f64>,
}

impl SignalRecord {
    /// Value of a named signal field. `action`, `proposed` and `aggregate`
    /// are built in; everything else lives in `extras`.
    pub fn field(&self, name: &str) -> Option<f64> {
        match name {
            "action" => Some(self.action),
            "proposed" | "proposed_action" => Some(self.proposed_action),
            "aggregate" => Some(self.aggregate),
            other => self.extras.get(other).copied(),
        }
    }

    /// One record per agent for a tick of `game`. Extras carry the game's
    /// alias fields and a cleared violation flag.
    pub fn for_tick(
        game: &Game,
        tick: Tick,
        agent_ids: &[String],
        proposed: &[f64],
        effective: &[f64],
    ) -> Vec<SignalRecord> {
        let aggregate = game.aggregate(effective);
        let (action_alias, aggregate_alias) = game.signal_aliases();
        agent_ids
            .iter()
            .zip(proposed.iter().zip(effective))
            .map(|(id, (&p, &a))| {
                let mut extras = BTreeMap::from([
                    (action_alias.to_string(), a),
                    (VIOLATION_FIELD.to_string(), 0.0),
                ]);
                if let Some(alias) = aggregate_alias {
                    extras.insert(alias.to_string(), aggregate);
                }
                SignalRecord {
                    tick,
                    agent_id: id.clone(),
                    action: a,
                    proposed_action: p,
                    aggregate,
                    extras,
                }
            })
            .collect()
    }
}

/// Ring buffer holding the records of the last `capacity` ticks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvidenceWindow {
    capacity: usize,
    ticks: VecDeque<(Tick, Vec<SignalRecord>)>,
}

impl EvidenceWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            ticks: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of ticks currently held.
    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    /// Appends a tick's records, evicting the oldest tick when full. Ticks
    /// must arrive in increasing order.
    pub fn push_tick(&mut self, tick: Tick, mut records: Vec<SignalRecord>) {
        if let Some((last, _)) = self.ticks.back() {
            assert!(tick > *last, "evidence ticks must increase ({tick} after {last})");
        }
        records.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
        self.ticks.push_back((tick, records));
        while self.ticks.len() > self.capacity {
            self.ticks.pop_front();
        }
    }

    pub fn latest_tick(&self) -> Option<Tick> {
        self.ticks.back().map(|(t, _)| *t)
    }

    /// Records of the most recent tick, ordered by agent id.
    pub fn latest(&self) -> &[SignalRecord] {
        self.ticks.back().map(|(_, r)| r.as_slice()).unwrap_or(&[])
    }

    pub fn latest_for(&self, agent_id: &str) -> Option<&SignalRecord> {
        self.latest().iter().find(|r| r.agent_id == agent_id)
    }

    /// The agent's records from the last `k` ticks, oldest first. Returns
    /// fewer than `k` records when history is short.
    pub fn recent_for(&self, agent_id: &str, k: usize) -> Vec<&SignalRecord> {
        let Some(latest) = self.latest_tick() else {
            return Vec::new();
        };
        let oldest = latest.saturating_sub(k.saturating_sub(1) as Tick);
        self.ticks
            .iter()
            .filter(|(t, _)| *t >= oldest)
            .filter_map(|(_, recs)| recs.iter().find(|r| r.agent_id == agent_id))
            .collect()
    }

    /// Every record from the last `k` ticks, oldest first.
    pub fn recent(&self, k: usize) -> Vec<&SignalRecord> {
        let Some(latest) = self.latest_tick() else {
            return Vec::new();
        };
        let oldest = latest.saturating_sub(k.saturating_sub(1) as Tick);
        self.ticks
            .iter()
            .filter(|(t, _)| *t >= oldest)
            .flat_map(|(_, recs)| recs.iter())
            .collect()
    }

    /// Sets an extra field on an already stored record.
    pub fn annotate(&mut self, tick: Tick, agent_id: &str, field: &str, value: f64) -> bool {
        for (t, recs) in self.ticks.iter_mut() {
            if *t == tick {
                if let Some(r) = recs.iter_mut().find(|r| r.agent_id == agent_id) {
                    r.extras.insert(field.to_string(), value);
                    return true;
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(tick: Tick, agent: &str, action: f64) -> SignalRecord {
        SignalRecord {
            tick,
            agent_id: agent.into(),
            action,
            proposed_action: action,
            aggregate: 0.0,
            extras: BTreeMap::new(),
        }
    }

    #[test]
    fn evicts_oldest_ticks() {
        let mut w = EvidenceWindow::new(2);
        for t in 1..=3 {
            w.push_tick(t, vec![rec(t, "b", t as f64), rec(t, "a", 0.0)]);
        }
        assert_eq!(w.len(), 2);
        assert_eq!(w.latest_tick(), Some(3));
        assert_eq!(w.latest()[0].agent_id, "a");
        let hist: Vec<f64> = w.recent_for("b", 5).iter().map(|r| r.action).collect();
        assert_eq!(hist, vec![2.0, 3.0]);
        assert_eq!(w.recent(1).len(), 2);
    }

    #[test]
    fn annotate_sets_extra() {
        let mut w = EvidenceWindow::new(3);
        w.push_tick(1, vec![rec(1, "a", 1.0)]);
        assert!(w.annotate(1, "a", "violation", 1.0));
        assert!(!w.annotate(2, "a", "violation", 1.0));
        assert_eq!(w.latest_for("a").unwrap().field("violation"), Some(1.0));
        assert_eq!(w.latest_for("a").unwrap().field("nope"), None);
    }

    #[test]
    #[should_panic]
    fn rejects_out_of_order_ticks() {
        let mut w = EvidenceWindow::new(3);
        w.push_tick(2, vec![]);
        w.push_tick(1, vec![]);
    }
}
