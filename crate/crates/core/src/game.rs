//! Mixed-motive games: payoffs, welfare, grid equilibria and deviation gains.
//!
//! Continuous action spaces are discretised to a uniform grid over
//! `[0, upper]`; every equilibrium and deviation computation in this module is
//! exact on that grid (up to floating rounding, absorbed by
//! [`NASH_TOLERANCE`]).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Payoff tolerance for "no profitable deviation" checks on a grid.
pub const NASH_TOLERANCE: f64 = 1e-9;

/// Default number of grid points for continuous action spaces.
pub const DEFAULT_GRID_RESOLUTION: usize = 101;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("profile has {got} actions but the game has {expected} players")]
    ProfileLength { expected: usize, got: usize },
    #[error("action {value} of player {player} is outside [{lo}, {hi}]")]
    ActionOutOfRange {
        player: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("action {value} of player {player} is not a strategy index")]
    NotAnIndex { player: usize, value: f64 },
    #[error("invalid game parameters: {0}")]
    InvalidParameters(String),
    #[error("total surplus is only defined for market games")]
    NotAMarket,
    #[error("player {player} out of range for a {players}-player game")]
    NoSuchPlayer { player: usize, players: usize },
}

/// One action per player, in the payoff model's units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionProfile(pub Vec<f64>);

impl ActionProfile {
    pub fn new(actions: Vec<f64>) -> Self {
        Self(actions)
    }

    pub fn symmetric(action: f64, players: usize) -> Self {
        Self(vec![action; players])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn actions(&self) -> &[f64] {
        &self.0
    }

    /// Copy of the profile with `player`'s action replaced.
    pub fn with_action(&self, player: usize, action: f64) -> Self {
        let mut next = self.0.clone();
        next[player] = action;
        Self(next)
    }
}

impl From<Vec<f64>> for ActionProfile {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Linear inverse-demand Cournot market with identical constant marginal cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CournotMarket {
    pub intercept: f64,
    pub slope: f64,
    pub marginal_cost: f64,
    pub capacity: f64,
    pub players: usize,
}

/// Textbook benchmarks of a symmetric linear Cournot market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CournotClosedForms {
    /// Per-firm Nash quantity.
    pub nash_q: f64,
    pub cartel_q_total: f64,
    pub competitive_q_total: f64,
    pub nash_price: f64,
    pub cartel_price: f64,
}

impl CournotMarket {
    pub fn new(
        intercept: f64,
        slope: f64,
        marginal_cost: f64,
        capacity: f64,
        players: usize,
    ) -> Result<Self, GameError> {
        let market = Self {
            intercept,
            slope,
            marginal_cost,
            capacity,
            players,
        };
        market.validate()?;
        Ok(market)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let all_finite = [self.intercept, self.slope, self.marginal_cost, self.capacity]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(GameError::InvalidParameters(
                "market parameters must be finite".into(),
            ));
        }
        if !(self.marginal_cost >= 0.0 && self.intercept > self.marginal_cost) {
            return Err(GameError::InvalidParameters(format!(
                "need intercept > marginal_cost >= 0, got a={} c={}",
                self.intercept, self.marginal_cost
            )));
        }
        if self.slope <= 0.0 {
            return Err(GameError::InvalidParameters("slope must be positive".into()));
        }
        let competitive = (self.intercept - self.marginal_cost) / self.slope;
        if self.capacity < competitive {
            return Err(GameError::InvalidParameters(format!(
                "capacity {} is below the competitive quantity {}",
                self.capacity, competitive
            )));
        }
        if self.players < 2 {
            return Err(GameError::InvalidParameters(
                "a market needs at least two firms".into(),
            ));
        }
        Ok(())
    }

    /// Inverse demand, clamped at zero.
    pub fn price(&self, total_quantity: f64) -> f64 {
        (self.intercept - self.slope * total_quantity).max(0.0)
    }

    pub fn closed_forms(&self) -> CournotClosedForms {
        let surplus = (self.intercept - self.marginal_cost).max(0.0);
        let n = self.players as f64;
        let nash_q = surplus / (self.slope * (n + 1.0));
        let cartel_q_total = surplus / (2.0 * self.slope);
        let competitive_q_total = surplus / self.slope;
        CournotClosedForms {
            nash_q,
            cartel_q_total,
            competitive_q_total,
            nash_price: self.price(nash_q * n),
            cartel_price: self.price(cartel_q_total),
        }
    }

    /// Myopic best response to the rivals' total output, clamped to capacity.
    pub fn best_response(&self, rivals_total: f64) -> f64 {
        let q = (self.intercept - self.marginal_cost - self.slope * rivals_total)
            / (2.0 * self.slope);
        q.clamp(0.0, self.capacity)
    }
}

/// Linear public-goods game: contributions are multiplied by `multiplier` and
/// shared equally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicGoodsGame {
    pub endowment: f64,
    pub multiplier: f64,
    pub players: usize,
}

impl PublicGoodsGame {
    pub fn new(endowment: f64, multiplier: f64, players: usize) -> Result<Self, GameError> {
        let game = Self {
            endowment,
            multiplier,
            players,
        };
        game.validate()?;
        Ok(game)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if !(self.endowment.is_finite() && self.endowment > 0.0) {
            return Err(GameError::InvalidParameters(
                "endowment must be positive".into(),
            ));
        }
        if !(self.multiplier > 1.0 && self.multiplier < self.players as f64) {
            return Err(GameError::InvalidParameters(format!(
                "need 1 < multiplier < players, got r={} n={}",
                self.multiplier, self.players
            )));
        }
        Ok(())
    }
}

/// Finite normal-form game. `payoffs[k][i]` is player `i`'s payoff at the
/// joint pure profile with row-major flat index `k` (player 0 most
/// significant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixGame {
    pub action_counts: Vec<usize>,
    pub payoffs: Vec<Vec<f64>>,
}

impl MatrixGame {
    pub fn new(action_counts: Vec<usize>, payoffs: Vec<Vec<f64>>) -> Result<Self, GameError> {
        let game = Self {
            action_counts,
            payoffs,
        };
        game.validate()?;
        Ok(game)
    }

    /// Two-player prisoner's dilemma; strategy 0 cooperates, 1 defects.
    pub fn prisoners_dilemma(reward: f64, temptation: f64, sucker: f64, punishment: f64) -> Self {
        Self {
            action_counts: vec![2, 2],
            payoffs: vec![
                vec![reward, reward],
                vec![sucker, temptation],
                vec![temptation, sucker],
                vec![punishment, punishment],
            ],
        }
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.action_counts.is_empty() || self.action_counts.contains(&0) {
            return Err(GameError::InvalidParameters(
                "every player needs at least one strategy".into(),
            ));
        }
        let cells: usize = self.action_counts.iter().product();
        if self.payoffs.len() != cells {
            return Err(GameError::InvalidParameters(format!(
                "payoff tensor has {} cells, expected {}",
                self.payoffs.len(),
                cells
            )));
        }
        for row in &self.payoffs {
            if row.len() != self.action_counts.len() {
                return Err(GameError::InvalidParameters(
                    "each payoff cell needs one entry per player".into(),
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(GameError::InvalidParameters("payoffs must be finite".into()));
            }
        }
        Ok(())
    }

    fn flat_index(&self, actions: &[f64]) -> usize {
        actions
            .iter()
            .zip(&self.action_counts)
            .fold(0, |acc, (a, count)| acc * count + *a as usize)
    }
}

/// Which aggregate defines "welfare".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WelfareStandard {
    /// Sum of player payoffs.
    PlayerSum,
    /// Player payoffs plus consumer surplus (markets only).
    TotalSurplus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    Nash,
    SocialOptimum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub profile: ActionProfile,
    pub kind: EquilibriumKind,
    pub welfare: f64,
    pub per_player_payoffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Game {
    Cournot(CournotMarket),
    PublicGoods(PublicGoodsGame),
    Matrix(MatrixGame),
}

impl Game {
    pub fn validate(&self) -> Result<(), GameError> {
        match self {
            Game::Cournot(m) => m.validate(),
            Game::PublicGoods(g) => g.validate(),
            Game::Matrix(g) => g.validate(),
        }
    }

    pub fn players(&self) -> usize {
        match self {
            Game::Cournot(m) => m.players,
            Game::PublicGoods(g) => g.players,
            Game::Matrix(g) => g.action_counts.len(),
        }
    }

    pub fn is_market(&self) -> bool {
        matches!(self, Game::Cournot(_))
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Game::Matrix(_))
    }

    /// Closed interval of legal actions for `player`.
    pub fn action_bounds(&self, player: usize) -> (f64, f64) {
        match self {
            Game::Cournot(m) => (0.0, m.capacity),
            Game::PublicGoods(g) => (0.0, g.endowment),
            Game::Matrix(g) => (0.0, (g.action_counts[player] - 1) as f64),
        }
    }

    /// The player's action grid: exact strategy indices for finite games,
    /// `resolution` uniform points otherwise.
    pub fn action_grid(&self, player: usize, resolution: usize) -> Vec<f64> {
        match self {
            Game::Matrix(g) => (0..g.action_counts[player]).map(|k| k as f64).collect(),
            _ => {
                let (lo, hi) = self.action_bounds(player);
                uniform_grid(lo, hi, resolution)
            }
        }
    }

    pub fn validate_profile(&self, profile: &ActionProfile) -> Result<(), GameError> {
        let n = self.players();
        if profile.len() != n {
            return Err(GameError::ProfileLength {
                expected: n,
                got: profile.len(),
            });
        }
        for (player, &value) in profile.actions().iter().enumerate() {
            let (lo, hi) = self.action_bounds(player);
            if !value.is_finite() || value < lo - NASH_TOLERANCE || value > hi + NASH_TOLERANCE {
                return Err(GameError::ActionOutOfRange {
                    player,
                    value,
                    lo,
                    hi,
                });
            }
            if self.is_finite() && value.fract() != 0.0 {
                return Err(GameError::NotAnIndex { player, value });
            }
        }
        Ok(())
    }

    pub fn payoffs(&self, profile: &ActionProfile) -> Result<Vec<f64>, GameError> {
        self.validate_profile(profile)?;
        Ok(self.payoffs_unchecked(profile.actions()))
    }

    /// Payoffs without bounds checks; `actions` must be a valid profile.
    pub fn payoffs_unchecked(&self, actions: &[f64]) -> Vec<f64> {
        (0..actions.len())
            .map(|i| self.payoff_unchecked(i, actions))
            .collect()
    }

    /// One player's payoff without bounds checks.
    pub fn payoff_unchecked(&self, player: usize, actions: &[f64]) -> f64 {
        match self {
            Game::Cournot(m) => {
                let total: f64 = actions.iter().sum();
                (m.price(total) - m.marginal_cost) * actions[player]
            }
            Game::PublicGoods(g) => {
                let total: f64 = actions.iter().sum();
                g.endowment - actions[player] + g.multiplier / g.players as f64 * total
            }
            Game::Matrix(g) => g.payoffs[g.flat_index(actions)][player],
        }
    }

    pub fn welfare(
        &self,
        profile: &ActionProfile,
        standard: WelfareStandard,
    ) -> Result<f64, GameError> {
        if standard == WelfareStandard::TotalSurplus && !self.is_market() {
            return Err(GameError::NotAMarket);
        }
        self.validate_profile(profile)?;
        Ok(self.welfare_unchecked(profile.actions(), standard))
    }

    fn welfare_unchecked(&self, actions: &[f64], standard: WelfareStandard) -> f64 {
        let player_sum: f64 = self.payoffs_unchecked(actions).iter().sum();
        match (standard, self) {
            (WelfareStandard::TotalSurplus, Game::Cournot(m)) => {
                // Units beyond the demand intercept have zero value to buyers.
                let q = actions.iter().sum::<f64>().min(m.intercept / m.slope);
                player_sum + 0.5 * m.slope * q * q
            }
            _ => player_sum,
        }
    }

    /// Publicly observed aggregate of a profile: market price, total
    /// contribution, or zero for matrix games.
    pub fn aggregate(&self, actions: &[f64]) -> f64 {
        match self {
            Game::Cournot(m) => m.price(actions.iter().sum()),
            Game::PublicGoods(_) => actions.iter().sum(),
            Game::Matrix(_) => 0.0,
        }
    }

    /// Range the aggregate can take, used for discretising it.
    pub fn aggregate_range(&self) -> (f64, f64) {
        match self {
            Game::Cournot(m) => (0.0, m.intercept),
            Game::PublicGoods(g) => (0.0, g.endowment * g.players as f64),
            Game::Matrix(_) => (0.0, 1.0),
        }
    }

    /// Domain names under which the action and aggregate are exposed to
    /// manifest predicates, in addition to `action` and `aggregate`.
    pub fn signal_aliases(&self) -> (&'static str, Option<&'static str>) {
        match self {
            Game::Cournot(_) => ("quantity", Some("price")),
            Game::PublicGoods(_) => ("contribution", Some("total_contribution")),
            Game::Matrix(_) => ("choice", None),
        }
    }

    /// Analytic best response against the other players' actions, when the
    /// game has one. Used to complement grid search.
    pub fn best_response_hint(&self, player: usize, actions: &[f64]) -> Option<f64> {
        match self {
            Game::Cournot(m) => {
                let rivals: f64 = actions
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != player)
                    .map(|(_, q)| q)
                    .sum();
                Some(m.best_response(rivals))
            }
            _ => None,
        }
    }

    /// Named benchmarks injected into manifests as constants.
    pub fn benchmarks(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        match self {
            Game::Cournot(m) => {
                let cf = m.closed_forms();
                out.insert("NASH_Q".into(), cf.nash_q);
                out.insert("NASH_PRICE".into(), cf.nash_price);
                out.insert("CARTEL_Q".into(), cf.cartel_q_total / m.players as f64);
                out.insert("CARTEL_Q_TOTAL".into(), cf.cartel_q_total);
                out.insert("CARTEL_PRICE".into(), cf.cartel_price);
                out.insert("COMPETITIVE_Q_TOTAL".into(), cf.competitive_q_total);
                out.insert("P_COMP".into(), m.price(cf.competitive_q_total));
            }
            Game::PublicGoods(g) => {
                out.insert("ENDOWMENT".into(), g.endowment);
                out.insert("FULL_CONTRIBUTION".into(), g.endowment);
                out.insert("NASH_CONTRIBUTION".into(), 0.0);
            }
            Game::Matrix(_) => {}
        }
        out
    }

    fn check_player(&self, player: usize) -> Result<(), GameError> {
        if player >= self.players() {
            return Err(GameError::NoSuchPlayer {
                player,
                players: self.players(),
            });
        }
        Ok(())
    }
}

/// `points` evenly spaced values from `lo` to `hi` inclusive (at least two).
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    let last = (points - 1) as f64;
    (0..points)
        .map(|k| {
            if k == points - 1 {
                hi
            } else {
                lo + (hi - lo) * k as f64 / last
            }
        })
        .collect()
}

/// Grid resolution giving spacing `step` over `[0, upper]`.
pub fn resolution_for_step(upper: f64, step: f64) -> usize {
    (upper / step).round() as usize + 1
}

/// Iterates every joint grid profile in lexicographic order.
struct ProfileGrid<'a> {
    grids: &'a [Vec<f64>],
    digits: Vec<usize>,
    done: bool,
}

impl<'a> ProfileGrid<'a> {
    fn new(grids: &'a [Vec<f64>]) -> Self {
        let done = grids.iter().any(|g| g.is_empty());
        Self {
            grids,
            digits: vec![0; grids.len()],
            done,
        }
    }
}

impl Iterator for ProfileGrid<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let current = self.digits.clone();
        let mut pos = self.digits.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.digits[pos] += 1;
            if self.digits[pos] < self.grids[pos].len() {
                break;
            }
            self.digits[pos] = 0;
        }
        Some(current)
    }
}

fn grids_for(game: &Game, resolution: usize) -> Vec<Vec<f64>> {
    (0..game.players())
        .map(|i| game.action_grid(i, resolution))
        .collect()
}

/// Every grid profile at which no player gains more than [`NASH_TOLERANCE`]
/// from a unilateral grid deviation.
pub fn brute_force_nash(game: &Game, grid_resolution: usize) -> Vec<EquilibriumResult> {
    let grids = grids_for(game, grid_resolution);
    let n = grids.len();
    // Best attainable payoff for player i given the others' grid indices.
    let mut best_cache: Vec<HashMap<Vec<usize>, f64>> = vec![HashMap::new(); n];
    let mut found = Vec::new();

    for digits in ProfileGrid::new(&grids) {
        let actions: Vec<f64> = digits.iter().enumerate().map(|(i, &d)| grids[i][d]).collect();
        let payoffs = game.payoffs_unchecked(&actions);
        let mut stable = true;
        for i in 0..n {
            let mut key = digits.clone();
            key[i] = usize::MAX;
            let best = *best_cache[i].entry(key).or_insert_with(|| {
                let mut trial = actions.clone();
                grids[i]
                    .iter()
                    .map(|&a| {
                        trial[i] = a;
                        game.payoff_unchecked(i, &trial)
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            });
            if best - payoffs[i] > NASH_TOLERANCE {
                stable = false;
                break;
            }
        }
        if stable {
            found.push(EquilibriumResult {
                welfare: payoffs.iter().sum(),
                profile: ActionProfile(actions),
                kind: EquilibriumKind::Nash,
                per_player_payoffs: payoffs,
            });
        }
    }
    found
}

/// Grid argmax of welfare; ties resolve to the lexicographically smallest
/// profile.
pub fn social_optimum(
    game: &Game,
    standard: WelfareStandard,
    grid_resolution: usize,
) -> Result<EquilibriumResult, GameError> {
    if standard == WelfareStandard::TotalSurplus && !game.is_market() {
        return Err(GameError::NotAMarket);
    }
    let grids = grids_for(game, grid_resolution);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for digits in ProfileGrid::new(&grids) {
        let actions: Vec<f64> = digits.iter().enumerate().map(|(i, &d)| grids[i][d]).collect();
        let w = game.welfare_unchecked(&actions, standard);
        let better = match &best {
            None => true,
            Some((bw, _)) => w > bw + NASH_TOLERANCE,
        };
        if better {
            best = Some((w, actions));
        }
    }
    let (welfare, actions) = best.expect("action grids are never empty");
    Ok(EquilibriumResult {
        per_player_payoffs: game.payoffs_unchecked(&actions),
        profile: ActionProfile(actions),
        kind: EquilibriumKind::SocialOptimum,
        welfare,
    })
}

/// `max_{a'} u_i(a', a_{-i}) - u_i(a)` over the player's grid, floored at 0.
pub fn deviation_gain(
    game: &Game,
    player: usize,
    profile: &ActionProfile,
    grid_resolution: usize,
) -> Result<f64, GameError> {
    game.check_player(player)?;
    game.validate_profile(profile)?;
    let base = game.payoff_unchecked(player, profile.actions());
    let mut trial = profile.actions().to_vec();
    let best = game
        .action_grid(player, grid_resolution)
        .into_iter()
        .map(|a| {
            trial[player] = a;
            game.payoff_unchecked(player, &trial)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((best - base).max(0.0))
}

/// Closed forms for a market; equivalent to [`CournotMarket::closed_forms`].
pub fn cournot_closed_forms(market: &CournotMarket) -> CournotClosedForms {
    market.closed_forms()
}
