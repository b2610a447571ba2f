//! Sequential first- and second-price item auctions.
//!
//! Items are sold over ordered rounds. The solver walks the game tree
//! bottom-up: each singleton round, given the solved continuations,
//! induces a single-item auction with externalities whose equilibrium is
//! taken from [`crate::stage`]. Histories are keyed by what each player's
//! valuation can still distinguish about its bundle ([`Holding`]), which
//! collapses large symmetric games to a tractable state space.
//!
//! Strategy profiles supplied from outside (needed for the second-price
//! pathologies, which signal through bids) are verified against one-shot
//! deviations at every node reachable through deviations, with explicit
//! caps: running out of budget is reported as inconclusive, never as a
//! pass.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::money::Money;
use crate::stage::{
    stage_outcome, AuctionFormat, Bid, ExternalityMatrix, StageError, StageOutcome,
};
use crate::valuations::{
    optimal_welfare, Allocation, Holding, ItemSet, Valuation, ValuationError,
};

#[derive(Debug, thiserror::Error)]
pub enum SeqError {
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error("invalid rounds: {0}")]
    BadRounds(String),
    #[error("round {0} sells multiple items; use the grid stage solver")]
    MultiItemRound(usize),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("verification ran out of budget after {visited} nodes (inconclusive, not a pass)")]
    Inconclusive { visited: usize },
    #[error("price of anarchy undefined: equilibrium welfare is zero while the optimum is positive")]
    ZeroWelfare,
    #[error("strategy profile returned a malformed bid matrix at round {0}")]
    BadProfileBids(usize),
    #[error("internal: missing solved stage for the requested state")]
    MissingStage,
}

/// A sequential auction: players, named items, ordered rounds of item
/// indices (singletons unless a round is explicitly simultaneous), and
/// the payment rule.
#[derive(Clone, Debug)]
pub struct AuctionInstance {
    pub players: Vec<Valuation>,
    pub items: Vec<String>,
    pub rounds: Vec<Vec<usize>>,
    pub format: AuctionFormat,
}

impl AuctionInstance {
    pub fn new(
        players: Vec<Valuation>,
        items: Vec<String>,
        rounds: Vec<Vec<usize>>,
        format: AuctionFormat,
    ) -> Result<Self, SeqError> {
        let m = items.len();
        let mut seen = vec![false; m];
        for round in &rounds {
            for &i in round {
                if i >= m {
                    return Err(SeqError::BadRounds(format!(
                        "round references item {i} but only {m} items exist"
                    )));
                }
                if seen[i] {
                    return Err(SeqError::BadRounds(format!(
                        "item {} sold twice",
                        items[i]
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(SeqError::BadRounds(
                "rounds do not cover every item".into(),
            ));
        }
        if players.is_empty() {
            return Err(SeqError::BadRounds("no players".into()));
        }
        for (p, v) in players.iter().enumerate() {
            if v.universe() != m {
                return Err(SeqError::BadRounds(format!(
                    "player {p} values {} items but the instance has {m}",
                    v.universe()
                )));
            }
        }
        Ok(AuctionInstance {
            players,
            items,
            rounds,
            format,
        })
    }

    /// Fully sequential instance: one item per round, in item order.
    pub fn sequential(
        players: Vec<Valuation>,
        items: Vec<String>,
        format: AuctionFormat,
    ) -> Result<Self, SeqError> {
        let rounds = (0..items.len()).map(|i| vec![i]).collect();
        AuctionInstance::new(players, items, rounds, format)
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn m(&self) -> usize {
        self.items.len()
    }

    pub fn all_items(&self) -> ItemSet {
        ItemSet::full(self.m())
    }

    pub fn singleton_rounds(&self) -> bool {
        self.rounds.iter().all(|r| r.len() == 1)
    }

    /// The solver's state abstraction: what each valuation remembers
    /// about its bundle.
    pub fn holdings(&self, bundles: &[ItemSet]) -> Vec<Holding> {
        self.players
            .iter()
            .zip(bundles)
            .map(|(v, &b)| v.holding(b))
            .collect()
    }
}

/// Winners of all items sold in completed rounds, in sale order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HistoryState {
    pub winners: Vec<usize>,
}

impl HistoryState {
    pub fn root() -> Self {
        HistoryState {
            winners: Vec::new(),
        }
    }

    /// Item-to-winner map over the sold prefix of the sale order.
    pub fn as_map(&self, instance: &AuctionInstance) -> Allocation {
        instance
            .rounds
            .iter()
            .flatten()
            .copied()
            .zip(self.winners.iter().copied())
            .collect()
    }

    pub fn bundles(&self, instance: &AuctionInstance) -> Vec<ItemSet> {
        let mut bundles = vec![ItemSet::EMPTY; instance.n()];
        for (&item, &winner) in instance
            .rounds
            .iter()
            .flatten()
            .zip(self.winners.iter())
        {
            bundles[winner] = bundles[winner].with(item);
        }
        bundles
    }
}

/// Key for a solved subgame: round index plus what every valuation still
/// remembers of its holdings.
pub type StateKey = (usize, Vec<Holding>);

/// One solved stage: the induced externality matrix, the equilibrium bid
/// profile chosen there, its outcome, and the players' continuation
/// utilities from this state on.
#[derive(Clone, Debug)]
pub struct SolvedStage {
    /// `None` only in the degenerate single-player game.
    pub matrix: Option<ExternalityMatrix>,
    pub bids: Vec<Bid>,
    pub outcome: StageOutcome,
    pub utilities: Vec<Money>,
}

/// A subgame perfect equilibrium in stored-stage form.
#[derive(Clone, Debug)]
pub struct SpeSolution {
    pub policy: String,
    pub stages: BTreeMap<StateKey, SolvedStage>,
}

/// How the play of a solution or profile went.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameReport {
    /// Item index to winner.
    pub allocation: Allocation,
    /// Item index to sale price.
    pub prices: BTreeMap<usize, Money>,
    pub welfare: Money,
    pub optimum: Money,
    pub poa: Money,
    pub utilities: Vec<Money>,
}

/// Externality matrix induced at a singleton round: winning yields the
/// item's marginal value plus the continuation where you won; losing
/// yields the continuation where the winner took it.
pub fn continuation_matrix(
    players: &[Valuation],
    bundles: &[ItemSet],
    item: usize,
    child_utilities: &[Vec<Money>],
) -> Result<ExternalityMatrix, SeqError> {
    let n = players.len();
    let mut v = vec![vec![Money::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut val = child_utilities[j][i].clone();
            if i == j {
                val += players[i].marginal(bundles[i], item)?;
            }
            v[i][j] = val;
        }
    }
    Ok(ExternalityMatrix::new(v)?)
}

struct Solver<'a> {
    instance: &'a AuctionInstance,
    stages: BTreeMap<StateKey, SolvedStage>,
}

impl<'a> Solver<'a> {
    fn new(instance: &'a AuctionInstance) -> Self {
        Solver {
            instance,
            stages: BTreeMap::new(),
        }
    }

    fn solve(&mut self, round: usize, bundles: &[ItemSet]) -> Result<Vec<Money>, SeqError> {
        let n = self.instance.n();
        if round == self.instance.rounds.len() {
            return Ok(vec![Money::zero(); n]);
        }
        let key = (round, self.instance.holdings(bundles));
        if let Some(stage) = self.stages.get(&key) {
            return Ok(stage.utilities.clone());
        }
        let items = &self.instance.rounds[round];
        if items.len() != 1 {
            return Err(SeqError::MultiItemRound(round));
        }
        let item = items[0];

        if n == 1 {
            let marg = self.instance.players[0].marginal(bundles[0], item)?;
            let next = vec![bundles[0].with(item)];
            let mut utilities = self.solve(round + 1, &next)?;
            utilities[0] += marg;
            let bids = vec![Bid::zero()];
            let outcome = stage_outcome(&bids, self.instance.format);
            self.stages.insert(
                key,
                SolvedStage {
                    matrix: None,
                    bids,
                    outcome,
                    utilities: utilities.clone(),
                },
            );
            return Ok(utilities);
        }

        let mut child_utilities = Vec::with_capacity(n);
        for j in 0..n {
            let mut next = bundles.to_vec();
            next[j] = next[j].with(item);
            child_utilities.push(self.solve(round + 1, &next)?);
        }
        let matrix =
            continuation_matrix(&self.instance.players, bundles, item, &child_utilities)?;
        let (bids, outcome) = matrix.canonical_equilibrium(self.instance.format);
        let utilities: Vec<Money> = (0..n)
            .map(|i| {
                let mut u = matrix.v[i][outcome.winner].clone();
                if i == outcome.winner {
                    u -= outcome.price.clone();
                }
                u
            })
            .collect();
        self.stages.insert(
            key,
            SolvedStage {
                matrix: Some(matrix),
                bids,
                outcome,
                utilities: utilities.clone(),
            },
        );
        Ok(utilities)
    }
}

/// Backward-induction subgame perfect equilibrium with the canonical
/// stage selection at every node.
pub fn solve_spe(instance: &AuctionInstance) -> Result<SpeSolution, SeqError> {
    if !instance.singleton_rounds() {
        let bad = instance
            .rounds
            .iter()
            .position(|r| r.len() != 1)
            .expect("some round is not a singleton");
        return Err(SeqError::MultiItemRound(bad));
    }
    let mut solver = Solver::new(instance);
    let bundles = vec![ItemSet::EMPTY; instance.n()];
    solver.solve(0, &bundles)?;
    Ok(SpeSolution {
        policy: "canonical".into(),
        stages: solver.stages,
    })
}

/// Solve the subgame starting at `round` with the given bundles already
/// allocated, by canonical backward induction. Returns the solved stages
/// and the players' continuation utilities at the entry state. Rounds
/// from `round` on must be singletons.
pub fn solve_continuation(
    instance: &AuctionInstance,
    round: usize,
    bundles: &[ItemSet],
) -> Result<(SpeSolution, Vec<Money>), SeqError> {
    let mut solver = Solver::new(instance);
    let utilities = solver.solve(round, bundles)?;
    Ok((
        SpeSolution {
            policy: "canonical".into(),
            stages: solver.stages,
        },
        utilities,
    ))
}

/// Budget for the enumerate-all policy.
#[derive(Clone, Copy, Debug)]
pub struct EnumLimits {
    /// Distinct candidate solutions kept per state.
    pub per_state: usize,
    /// Child-solution combinations expanded per state.
    pub combos_per_state: usize,
}

impl Default for EnumLimits {
    fn default() -> Self {
        EnumLimits {
            per_state: 24,
            combos_per_state: 2048,
        }
    }
}

#[derive(Clone)]
struct Candidate {
    utilities: Vec<Money>,
    stages: BTreeMap<StateKey, SolvedStage>,
}

/// Enumerate subgame perfect equilibria by expanding, at every state,
/// every elimination-compatible stage outcome at both ends of its price
/// interval, over every combination of child selections. Bounded by
/// `limits`; the canonical solution is always among the results.
pub fn solve_spe_all(
    instance: &AuctionInstance,
    limits: EnumLimits,
) -> Result<Vec<SpeSolution>, SeqError> {
    if !instance.singleton_rounds() {
        return Err(SeqError::MultiItemRound(0));
    }
    if instance.n() == 1 {
        return Ok(vec![solve_spe(instance)?]);
    }
    let bundles = vec![ItemSet::EMPTY; instance.n()];
    let mut memo: BTreeMap<StateKey, Vec<Candidate>> = BTreeMap::new();
    let candidates = enum_state(instance, 0, &bundles, &limits, &mut memo)?;
    Ok(candidates
        .into_iter()
        .map(|c| SpeSolution {
            policy: "enumerate-all".into(),
            stages: c.stages,
        })
        .collect())
}

fn enum_state(
    instance: &AuctionInstance,
    round: usize,
    bundles: &[ItemSet],
    limits: &EnumLimits,
    memo: &mut BTreeMap<StateKey, Vec<Candidate>>,
) -> Result<Vec<Candidate>, SeqError> {
    let n = instance.n();
    if round == instance.rounds.len() {
        return Ok(vec![Candidate {
            utilities: vec![Money::zero(); n],
            stages: BTreeMap::new(),
        }]);
    }
    let key = (round, instance.holdings(bundles));
    if let Some(cands) = memo.get(&key) {
        return Ok(cands.clone());
    }
    let item = instance.rounds[round][0];

    // Children that lead to the same abstract state must share one
    // selected continuation, so group them by key first.
    let mut child_keys = Vec::with_capacity(n);
    let mut distinct: Vec<(StateKey, Vec<ItemSet>)> = Vec::new();
    for j in 0..n {
        let mut next = bundles.to_vec();
        next[j] = next[j].with(item);
        let ck = (round + 1, instance.holdings(&next));
        if !distinct.iter().any(|(k, _)| *k == ck) {
            distinct.push((ck.clone(), next));
        }
        child_keys.push(ck);
    }
    let mut child_cands = Vec::with_capacity(distinct.len());
    for (_, next) in &distinct {
        child_cands.push(enum_state(instance, round + 1, next, limits, memo)?);
    }

    let mut out: Vec<Candidate> = Vec::new();
    let mut seen: BTreeSet<(Vec<Money>, usize, Money)> = BTreeSet::new();
    let mut combo = vec![0usize; distinct.len()];
    let mut combos_done = 0usize;
    'combos: loop {
        combos_done += 1;
        // Assemble the per-winner continuation utilities for this combo.
        let pick = |j: usize| -> &Candidate {
            let pos = distinct
                .iter()
                .position(|(k, _)| *k == child_keys[j])
                .expect("child key present");
            &child_cands[pos][combo[pos]]
        };
        let child_utilities: Vec<Vec<Money>> =
            (0..n).map(|j| pick(j).utilities.clone()).collect();
        let matrix =
            continuation_matrix(&instance.players, bundles, item, &child_utilities)?;

        let mut stage_choices: Vec<(usize, Money, Vec<Bid>)> = Vec::new();
        if matrix.is_toxic() {
            if let Some(bids) = matrix.supported_profile(0, &Money::zero()) {
                stage_choices.push((0, Money::zero(), bids));
            }
        } else {
            for c in matrix.enumerate_compatible_outcomes() {
                for price in
                    std::iter::once(&c.low).chain((c.high != c.low).then_some(&c.high))
                {
                    if let Some(bids) = matrix.supported_profile(c.winner, price) {
                        stage_choices.push((c.winner, price.clone(), bids));
                    }
                }
            }
        }
        // Every endpoint can be tie-break-unrealizable at price zero; the
        // canonical construction then repairs the threat with a positive
        // supported price, so fall back to it to keep the state solvable.
        if stage_choices.is_empty() {
            let (bids, outcome) = matrix.canonical_equilibrium(instance.format);
            stage_choices.push((outcome.winner, outcome.price, bids));
        }
        for (winner, price, bids) in stage_choices {
            let utilities: Vec<Money> = (0..n)
                .map(|i| {
                    let mut u = matrix.v[i][winner].clone();
                    if i == winner {
                        u -= price.clone();
                    }
                    u
                })
                .collect();
            let sig = (utilities.clone(), winner, price.clone());
            if !seen.insert(sig) {
                continue;
            }
            let mut stages = BTreeMap::new();
            for cand in (0..distinct.len()).map(|p| &child_cands[p][combo[p]]) {
                stages.extend(
                    cand.stages
                        .iter()
                        .map(|(k, v)| (k.clone(), v.clone())),
                );
            }
            let outcome = StageOutcome {
                winner,
                price: price.clone(),
                bids: bids.clone(),
            };
            stages.insert(
                key.clone(),
                SolvedStage {
                    matrix: Some(matrix.clone()),
                    bids,
                    outcome,
                    utilities: utilities.clone(),
                },
            );
            out.push(Candidate { utilities, stages });
            if out.len() >= limits.per_state {
                break 'combos;
            }
        }
        if combos_done >= limits.combos_per_state {
            break;
        }
        // Advance the combination odometer.
        let mut pos = 0;
        loop {
            if pos == distinct.len() {
                break 'combos;
            }
            combo[pos] += 1;
            if combo[pos] < child_cands[pos].len() {
                break;
            }
            combo[pos] = 0;
            pos += 1;
        }
    }
    memo.insert(key, out.clone());
    Ok(out)
}

impl SpeSolution {
    /// Walk the equilibrium path and assemble the full report.
    pub fn play(&self, instance: &AuctionInstance) -> Result<GameReport, SeqError> {
        let n = instance.n();
        let mut bundles = vec![ItemSet::EMPTY; n];
        let mut payments = vec![Money::zero(); n];
        let mut allocation = Allocation::new();
        let mut prices = BTreeMap::new();
        for (round, items) in instance.rounds.iter().enumerate() {
            let key = (round, instance.holdings(&bundles));
            let stage = self.stages.get(&key).ok_or(SeqError::MissingStage)?;
            let item = items[0];
            let winner = stage.outcome.winner;
            bundles[winner] = bundles[winner].with(item);
            payments[winner] += stage.outcome.price.clone();
            allocation.insert(item, winner);
            prices.insert(item, stage.outcome.price.clone());
        }
        finish_report(instance, bundles, payments, allocation, prices, None)
    }
}

fn finish_report(
    instance: &AuctionInstance,
    bundles: Vec<ItemSet>,
    payments: Vec<Money>,
    allocation: Allocation,
    prices: BTreeMap<usize, Money>,
    known_optimum: Option<Money>,
) -> Result<GameReport, SeqError> {
    let mut welfare = Money::zero();
    let mut utilities = Vec::with_capacity(instance.n());
    for (p, v) in instance.players.iter().enumerate() {
        let value = v.value(bundles[p])?;
        welfare += value.clone();
        utilities.push(value - payments[p].clone());
    }
    let optimum = match known_optimum {
        Some(w) => w,
        None => optimal_welfare(&instance.players, instance.all_items())?,
    };
    let poa = if welfare.is_zero() {
        if optimum.is_zero() {
            Money::from_int(1)
        } else {
            return Err(SeqError::ZeroWelfare);
        }
    } else {
        &optimum / &welfare
    };
    Ok(GameReport {
        allocation,
        prices,
        welfare,
        optimum,
        poa,
        utilities,
    })
}

/// Record of one played round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundRecord {
    pub round: usize,
    /// Bids as submitted, indexed `[player][item-in-round]`.
    pub bids: Vec<Vec<Bid>>,
    /// Winner per item in the round.
    pub winners: Vec<usize>,
    /// Price per item in the round.
    pub prices: Vec<Money>,
}

/// Resolve one round of simultaneous single-item auctions.
pub fn play_round(
    instance: &AuctionInstance,
    round: usize,
    bids: Vec<Vec<Bid>>,
) -> Result<RoundRecord, SeqError> {
    let items = &instance.rounds[round];
    if bids.len() != instance.n() || bids.iter().any(|b| b.len() != items.len()) {
        return Err(SeqError::BadProfileBids(round));
    }
    let mut winners = Vec::with_capacity(items.len());
    let mut prices = Vec::with_capacity(items.len());
    for slot in 0..items.len() {
        let item_bids: Vec<Bid> = bids.iter().map(|b| b[slot].clone()).collect();
        let outcome = stage_outcome(&item_bids, instance.format);
        winners.push(outcome.winner);
        prices.push(outcome.price);
    }
    Ok(RoundRecord {
        round,
        bids,
        winners,
        prices,
    })
}

/// Opaque profile state: a profile-defined summary of the bid history.
pub type ProfileState = Vec<i64>;

/// A strategy profile for the whole sequential game, expressed as a
/// finite-state machine over bid histories.
///
/// Contract: the state returned by [`advance`](Self::advance), together
/// with the players' holdings, must determine all future prescribed bids
/// and payoff-relevant structure. The verifier memoizes on (round,
/// state, holdings) and explores one representative history per class.
pub trait StrategyProfile {
    fn initial_state(&self) -> ProfileState;

    /// Prescribed bids for `round`, indexed `[player][item-in-round]`.
    fn round_bids(&self, round: usize, state: &ProfileState) -> Vec<Vec<Bid>>;

    /// Observe the resolved round and update the profile state.
    fn advance(&self, round: usize, state: &ProfileState, record: &RoundRecord)
        -> ProfileState;

    /// Bid amounts, beyond the bids prescribed at the node, at which
    /// `advance` can change behavior. The verifier probes one grid step
    /// around each.
    fn signal_breakpoints(&self, _round: usize, _state: &ProfileState) -> Vec<Money> {
        Vec::new()
    }
}

/// Exploration budget for [`verify_spe`].
#[derive(Clone, Debug)]
pub struct VerifyCaps {
    pub max_nodes: usize,
    /// Grid step used to probe around signal breakpoints.
    pub dev_step: Money,
}

impl Default for VerifyCaps {
    fn default() -> Self {
        VerifyCaps {
            max_nodes: 500_000,
            dev_step: Money::from_int(1),
        }
    }
}

/// A profitable one-shot deviation found by the verifier.
#[derive(Clone, Debug)]
pub struct Violation {
    pub round: usize,
    pub state: ProfileState,
    pub player: usize,
    pub deviation: Vec<Bid>,
    pub prescribed_utility: Money,
    pub deviation_utility: Money,
}

#[derive(Clone, Debug)]
pub enum SpeVerdict {
    Verified,
    Violated(Box<Violation>),
}

impl SpeVerdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, SpeVerdict::Verified)
    }
}

/// A per-player verification node: prescribed bids depend only on
/// (round, state), so a player's incentives at a node depend only on
/// their own holding, never on the full joint allocation. Keying nodes
/// per player keeps the reachable set linear in the holding spaces
/// instead of exponential in their product.
type NodeKey = (usize, ProfileState, usize, Holding);

struct Verifier<'a> {
    instance: &'a AuctionInstance,
    profile: &'a dyn StrategyProfile,
    caps: &'a VerifyCaps,
    /// Prescribed-round resolution per (round, state).
    resolve_memo: BTreeMap<(usize, ProfileState), (RoundRecord, ProfileState)>,
    /// Round resolution with one player's bids replaced.
    event_memo: BTreeMap<(usize, ProfileState, usize, Vec<Bid>), (RoundRecord, ProfileState)>,
    /// One player's continuation utility under pure profile play.
    cont_memo: BTreeMap<NodeKey, Money>,
    /// Nodes enqueued for checking (deduplicated at enqueue).
    seen: BTreeSet<NodeKey>,
    visited: usize,
}

impl Verifier<'_> {
    fn resolve(
        &mut self,
        round: usize,
        state: &ProfileState,
    ) -> Result<(RoundRecord, ProfileState), SeqError> {
        let key = (round, state.clone());
        if let Some(hit) = self.resolve_memo.get(&key) {
            return Ok(hit.clone());
        }
        let bids = self.profile.round_bids(round, state);
        if bids.len() != self.instance.n() {
            return Err(SeqError::BadProfileBids(round));
        }
        let record = play_round(self.instance, round, bids)?;
        let next_state = self.profile.advance(round, state, &record);
        self.resolve_memo
            .insert(key, (record.clone(), next_state.clone()));
        Ok((record, next_state))
    }

    fn resolve_event(
        &mut self,
        round: usize,
        state: &ProfileState,
        deviator: usize,
        dev: &[Bid],
    ) -> Result<(RoundRecord, ProfileState), SeqError> {
        let key = (round, state.clone(), deviator, dev.to_vec());
        if let Some(hit) = self.event_memo.get(&key) {
            return Ok(hit.clone());
        }
        let mut bids = self.profile.round_bids(round, state);
        bids[deviator] = dev.to_vec();
        let record = play_round(self.instance, round, bids)?;
        let next_state = self.profile.advance(round, state, &record);
        self.event_memo
            .insert(key, (record.clone(), next_state.clone()));
        Ok((record, next_state))
    }

    /// Player x's utility gain in one resolved round and their bundle
    /// afterwards.
    fn player_step(
        &self,
        record: &RoundRecord,
        x: usize,
        bundle: ItemSet,
    ) -> Result<(Money, ItemSet), SeqError> {
        let items = &self.instance.rounds[record.round];
        let mut gain = Money::zero();
        let mut next = bundle;
        for (slot, &item) in items.iter().enumerate() {
            if record.winners[slot] == x {
                gain += self.instance.players[x].marginal(next, item)?;
                gain -= record.prices[slot].clone();
                next = next.with(item);
            }
        }
        Ok((gain, next))
    }

    /// Player x's continuation utility when everyone follows the
    /// profile from this node on.
    fn cont_x(
        &mut self,
        round: usize,
        state: &ProfileState,
        x: usize,
        bundle: ItemSet,
    ) -> Result<Money, SeqError> {
        if round == self.instance.rounds.len() {
            return Ok(Money::zero());
        }
        let key = (
            round,
            state.clone(),
            x,
            self.instance.players[x].holding(bundle),
        );
        if let Some(u) = self.cont_memo.get(&key) {
            return Ok(u.clone());
        }
        let (record, next_state) = self.resolve(round, state)?;
        let (gain, next_bundle) = self.player_step(&record, x, bundle)?;
        let u = &gain + &self.cont_x(round + 1, &next_state, x, next_bundle)?;
        self.cont_memo.insert(key, u.clone());
        Ok(u)
    }

    fn deviation_candidates(
        &self,
        round: usize,
        state: &ProfileState,
        prescribed: &[Vec<Bid>],
    ) -> Vec<Bid> {
        let mut amounts: BTreeSet<Money> = BTreeSet::new();
        amounts.insert(Money::zero());
        for player_bids in prescribed {
            for b in player_bids {
                amounts.insert(b.amount.clone());
            }
        }
        for bp in self.profile.signal_breakpoints(round, state) {
            amounts.insert((&bp - &self.caps.dev_step).clamp_nonneg());
            amounts.insert(bp.clone());
            amounts.insert(&bp + &self.caps.dev_step);
        }
        let mut out = Vec::new();
        for a in amounts {
            out.push(Bid::plain(a.clone()));
            out.push(Bid::plus(a));
        }
        out
    }

    /// Breadth-first sweep over per-player nodes reachable through
    /// any chain of single-round deviations, testing every one-shot
    /// deviation at each.
    fn check_all(&mut self) -> Result<Option<Violation>, SeqError> {
        let n = self.instance.n();
        let init = self.profile.initial_state();
        let mut queue: VecDeque<(usize, ProfileState, usize, ItemSet)> = VecDeque::new();
        for x in 0..n {
            let key = (
                0,
                init.clone(),
                x,
                self.instance.players[x].holding(ItemSet::EMPTY),
            );
            self.seen.insert(key);
            queue.push_back((0, init.clone(), x, ItemSet::EMPTY));
        }

        while let Some((round, state, x, bundle)) = queue.pop_front() {
            self.visited += 1;
            if self.visited > self.caps.max_nodes {
                return Err(SeqError::Inconclusive {
                    visited: self.visited,
                });
            }
            let enqueue =
                |verifier: &mut Self,
                 queue: &mut VecDeque<(usize, ProfileState, usize, ItemSet)>,
                 round: usize,
                 state: ProfileState,
                 bundle: ItemSet| {
                    if round == verifier.instance.rounds.len() {
                        return;
                    }
                    let key = (
                        round,
                        state.clone(),
                        x,
                        verifier.instance.players[x].holding(bundle),
                    );
                    if verifier.seen.insert(key) {
                        queue.push_back((round, state, x, bundle));
                    }
                };

            let (record, next_state) = self.resolve(round, &state)?;
            let prescribed = record.bids.clone();
            let (base_gain, base_bundle) = self.player_step(&record, x, bundle)?;
            let base = &base_gain + &self.cont_x(round + 1, &next_state, x, base_bundle)?;
            enqueue(self, &mut queue, round + 1, next_state, base_bundle);

            let slots = self.instance.rounds[round].len();
            let candidates = self.deviation_candidates(round, &state, &prescribed);
            if candidates.len().pow(slots as u32) > 4096 {
                return Err(SeqError::TooLarge(format!(
                    "deviation space at round {round} exceeds the probe budget"
                )));
            }

            for y in 0..n {
                let mut dev_idx = vec![0usize; slots];
                'devs: loop {
                    let dev: Vec<Bid> =
                        dev_idx.iter().map(|&i| candidates[i].clone()).collect();
                    if dev != prescribed[y] {
                        let (rec, ns) = self.resolve_event(round, &state, y, &dev)?;
                        let (gain, nb) = self.player_step(&rec, x, bundle)?;
                        if y == x {
                            let u = &gain + &self.cont_x(round + 1, &ns, x, nb)?;
                            if u > base {
                                return Ok(Some(Violation {
                                    round,
                                    state: state.clone(),
                                    player: x,
                                    deviation: dev,
                                    prescribed_utility: base.clone(),
                                    deviation_utility: u,
                                }));
                            }
                        }
                        enqueue(self, &mut queue, round + 1, ns, nb);
                    }
                    let mut pos = 0;
                    loop {
                        if pos == slots {
                            break 'devs;
                        }
                        dev_idx[pos] += 1;
                        if dev_idx[pos] < candidates.len() {
                            break;
                        }
                        dev_idx[pos] = 0;
                        pos += 1;
                    }
                }
            }
        }
        Ok(None)
    }
}

/// Check a strategy profile for subgame perfection by the one-shot
/// deviation principle, over every node reachable through deviations
/// (abstracted by profile state and holdings), within `caps`.
pub fn verify_spe(
    instance: &AuctionInstance,
    profile: &dyn StrategyProfile,
    caps: &VerifyCaps,
) -> Result<SpeVerdict, SeqError> {
    let mut verifier = Verifier {
        instance,
        profile,
        caps,
        resolve_memo: BTreeMap::new(),
        event_memo: BTreeMap::new(),
        cont_memo: BTreeMap::new(),
        seen: BTreeSet::new(),
        visited: 0,
    };
    match verifier.check_all()? {
        None => Ok(SpeVerdict::Verified),
        Some(v) => Ok(SpeVerdict::Violated(Box::new(v))),
    }
}

/// Play a strategy profile straight through (no deviations) and report.
/// `known_optimum` substitutes for the brute-force optimum on instances
/// too large to enumerate.
pub fn play_profile(
    instance: &AuctionInstance,
    profile: &dyn StrategyProfile,
    known_optimum: Option<Money>,
) -> Result<GameReport, SeqError> {
    let n = instance.n();
    let mut bundles = vec![ItemSet::EMPTY; n];
    let mut payments = vec![Money::zero(); n];
    let mut allocation = Allocation::new();
    let mut prices = BTreeMap::new();
    let mut state = profile.initial_state();
    for round in 0..instance.rounds.len() {
        let bids = profile.round_bids(round, &state);
        let record = play_round(instance, round, bids)?;
        for (slot, &item) in instance.rounds[round].iter().enumerate() {
            let w = record.winners[slot];
            bundles[w] = bundles[w].with(item);
            payments[w] += record.prices[slot].clone();
            allocation.insert(item, w);
            prices.insert(item, record.prices[slot].clone());
        }
        state = profile.advance(round, &state, &record);
    }
    finish_report(instance, bundles, payments, allocation, prices, known_optimum)
}

/// Outcome of a simultaneous multi-item round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiRoundOutcome {
    pub bids: Vec<Vec<Bid>>,
    pub winners: Vec<usize>,
    pub prices: Vec<Money>,
}

#[derive(Clone, Debug)]
pub enum GridStageResult {
    Equilibrium(MultiRoundOutcome),
    /// No pure equilibrium on the grid; the witness is a best-response
    /// cycle (evidence of instability, not a proof of non-existence).
    NoPureEquilibrium { cycle: Vec<MultiRoundOutcome> },
}

/// Search budget and discretization for the multi-item grid solver.
#[derive(Clone, Debug)]
pub struct GridStageConfig {
    pub step: Money,
    /// Per-player maximum bid amount per item. Players whose cap is zero
    /// effectively sit out (their only strategy is bidding zero).
    pub caps: Vec<Money>,
    /// Per-player explicit amount lists replacing the step/cap grid. Zero
    /// is always included. Lets a caller focus the search on windows
    /// where best responses can live instead of the full grid.
    pub amounts_override: Option<Vec<Vec<Money>>>,
    pub include_plus: bool,
    pub max_profiles: u64,
}

/// Exhaustive pure-Nash search for one simultaneous multi-item round,
/// with continuation values for every joint allocation solved by the
/// canonical backward induction on the remaining rounds.
pub fn grid_stage_equilibrium(
    instance: &AuctionInstance,
    round: usize,
    start_bundles: &[ItemSet],
    config: &GridStageConfig,
) -> Result<GridStageResult, SeqError> {
    let n = instance.n();
    let items = instance.rounds[round].clone();
    let slots = items.len();

    // Continuation utilities per joint winner assignment.
    let mut solver = Solver::new(instance);
    let mut assignments: BTreeMap<Vec<usize>, Vec<Money>> = BTreeMap::new();
    let mut assign = vec![0usize; slots];
    loop {
        let mut bundles = start_bundles.to_vec();
        for (slot, &w) in assign.iter().enumerate() {
            bundles[w] = bundles[w].with(items[slot]);
        }
        let u = solver.solve(round + 1, &bundles)?;
        assignments.insert(assign.clone(), u);
        let mut pos = 0;
        loop {
            if pos == slots {
                break;
            }
            assign[pos] += 1;
            if assign[pos] < n {
                break;
            }
            assign[pos] = 0;
            pos += 1;
        }
        if assign.iter().all(|&w| w == 0) {
            break;
        }
    }

    // Per-player strategy sets: all per-item bid vectors on the grid.
    let mut per_player: Vec<Vec<Vec<Bid>>> = Vec::with_capacity(n);
    for p in 0..n {
        let mut amounts = vec![Money::zero()];
        match &config.amounts_override {
            Some(lists) => {
                for a in &lists[p] {
                    if !a.is_zero() && !amounts.contains(a) {
                        amounts.push(a.clone());
                    }
                }
            }
            None => {
                let mut a = config.step.clone();
                while a <= config.caps[p] {
                    amounts.push(a.clone());
                    a = &a + &config.step;
                }
            }
        }
        let mut options: Vec<Bid> = Vec::new();
        for a in &amounts {
            options.push(Bid::plain(a.clone()));
            if config.include_plus {
                options.push(Bid::plus(a.clone()));
            }
        }
        let mut strategies: Vec<Vec<Bid>> = vec![Vec::new()];
        for _ in 0..slots {
            strategies = strategies
                .into_iter()
                .flat_map(|s| {
                    options.iter().map(move |o| {
                        let mut s = s.clone();
                        s.push(o.clone());
                        s
                    })
                })
                .collect();
        }
        per_player.push(strategies);
    }
    let total: u64 = per_player
        .iter()
        .map(|s| s.len() as u64)
        .try_fold(1u64, |a, b| a.checked_mul(b))
        .unwrap_or(u64::MAX);
    if total > config.max_profiles {
        return Err(SeqError::TooLarge(format!(
            "{total} joint grid profiles exceed the cap of {}",
            config.max_profiles
        )));
    }

    let payoff = |profile: &[usize]| -> Result<Vec<Money>, SeqError> {
        let bids: Vec<Vec<Bid>> = profile
            .iter()
            .enumerate()
            .map(|(p, &s)| per_player[p][s].clone())
            .collect();
        let record = play_round(instance, round, bids)?;
        let cont = assignments
            .get(&record.winners)
            .ok_or(SeqError::MissingStage)?;
        let mut u = cont.clone();
        let mut bundles = start_bundles.to_vec();
        for (slot, &item) in items.iter().enumerate() {
            let w = record.winners[slot];
            u[w] += instance.players[w].marginal(bundles[w], item)?;
            u[w] -= record.prices[slot].clone();
            bundles[w] = bundles[w].with(item);
        }
        Ok(u)
    };

    let best_response = |profile: &[usize], x: usize| -> Result<(usize, Money), SeqError> {
        let mut best = (profile[x], payoff(profile)?[x].clone());
        let mut trial = profile.to_vec();
        for s in 0..per_player[x].len() {
            if s == profile[x] {
                continue;
            }
            trial[x] = s;
            let u = payoff(&trial)?[x].clone();
            if u > best.1 {
                best = (s, u);
            }
        }
        Ok(best)
    };

    let to_outcome = |profile: &[usize]| -> Result<MultiRoundOutcome, SeqError> {
        let bids: Vec<Vec<Bid>> = profile
            .iter()
            .enumerate()
            .map(|(p, &s)| per_player[p][s].clone())
            .collect();
        let record = play_round(instance, round, bids.clone())?;
        Ok(MultiRoundOutcome {
            bids,
            winners: record.winners,
            prices: record.prices,
        })
    };

    // Exhaustive scan for a pure equilibrium.
    let mut profile = vec![0usize; n];
    'profiles: loop {
        let mut is_nash = true;
        for x in 0..n {
            let (s, u) = best_response(&profile, x)?;
            if s != profile[x] && u > payoff(&profile)?[x] {
                is_nash = false;
                break;
            }
        }
        if is_nash {
            return Ok(GridStageResult::Equilibrium(to_outcome(&profile)?));
        }
        let mut pos = 0;
        loop {
            if pos == n {
                break 'profiles;
            }
            profile[pos] += 1;
            if profile[pos] < per_player[pos].len() {
                break;
            }
            profile[pos] = 0;
            pos += 1;
        }
    }

    // No equilibrium: exhibit a best-response cycle starting from zero.
    let mut profile = vec![0usize; n];
    let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut path: Vec<Vec<usize>> = Vec::new();
    loop {
        if let Some(&at) = seen.get(&profile) {
            let cycle = path[at..]
                .iter()
                .map(|p| to_outcome(p))
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(GridStageResult::NoPureEquilibrium { cycle });
        }
        seen.insert(profile.clone(), path.len());
        path.push(profile.clone());
        let mut moved = false;
        for x in 0..n {
            let current = payoff(&profile)?[x].clone();
            let (s, u) = best_response(&profile, x)?;
            if u > current {
                profile[x] = s;
                moved = true;
                break;
            }
        }
        debug_assert!(moved, "a profile with no improving move is an equilibrium");
        if !moved {
            return Ok(GridStageResult::Equilibrium(to_outcome(&profile)?));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money;

    fn intro_instance(format: AuctionFormat) -> AuctionInstance {
        AuctionInstance::sequential(
            vec![
                Valuation::additive(vec![money!(5), money!(5)]).unwrap(),
                Valuation::unit_demand(vec![money!(4), money!(4)]).unwrap(),
            ],
            vec!["1".into(), "2".into()],
            format,
        )
        .unwrap()
    }

    #[test]
    fn intro_continuation_matrix() {
        let instance = intro_instance(AuctionFormat::First);
        let mut solver = Solver::new(&instance);
        let u_if_0 = solver
            .solve(1, &[ItemSet::singleton(0), ItemSet::EMPTY])
            .unwrap();
        let u_if_1 = solver
            .solve(1, &[ItemSet::EMPTY, ItemSet::singleton(0)])
            .unwrap();
        let m = continuation_matrix(
            &instance.players,
            &[ItemSet::EMPTY, ItemSet::EMPTY],
            0,
            &[u_if_0, u_if_1],
        )
        .unwrap();
        assert_eq!(
            m,
            ExternalityMatrix::from_ints(&[&[6, 5], &[0, 4]])
        );
    }

    #[test]
    fn intro_spe_path_and_report() {
        let instance = intro_instance(AuctionFormat::First);
        let solution = solve_spe(&instance).unwrap();
        let report = solution.play(&instance).unwrap();
        assert_eq!(report.allocation, Allocation::from([(0, 1), (1, 0)]));
        assert_eq!(
            report.prices,
            BTreeMap::from([(0, money!(1)), (1, money!(0))])
        );
        assert_eq!(report.welfare, money!(9));
        assert_eq!(report.optimum, money!(10));
        assert_eq!(report.poa, money!(10, 9));
        assert_eq!(report.utilities, vec![money!(5), money!(3)]);
    }

    #[test]
    fn single_item_reduces_to_stage() {
        let instance = AuctionInstance::sequential(
            vec![
                Valuation::additive(vec![money!(5)]).unwrap(),
                Valuation::additive(vec![money!(3)]).unwrap(),
            ],
            vec!["A".into()],
            AuctionFormat::First,
        )
        .unwrap();
        let report = solve_spe(&instance).unwrap().play(&instance).unwrap();
        assert_eq!(report.allocation, Allocation::from([(0, 0)]));
        assert_eq!(report.prices[&0], money!(3));
        assert_eq!(report.poa, money!(1));
    }

    #[test]
    fn single_player_gets_everything_free() {
        let instance = AuctionInstance::sequential(
            vec![Valuation::additive(vec![money!(2), money!(3)]).unwrap()],
            vec!["A".into(), "B".into()],
            AuctionFormat::First,
        )
        .unwrap();
        let report = solve_spe(&instance).unwrap().play(&instance).unwrap();
        assert!(report.prices.values().all(|p| p.is_zero()));
        assert_eq!(report.welfare, money!(5));
        assert_eq!(report.poa, money!(1));
    }

    #[test]
    fn kuhn_property_every_stage_is_stage_nash() {
        let instance = intro_instance(AuctionFormat::First);
        let solution = solve_spe(&instance).unwrap();
        for stage in solution.stages.values() {
            let m = stage.matrix.as_ref().unwrap();
            assert!(m
                .verify_stage_nash(&stage.bids, AuctionFormat::First)
                .unwrap());
        }
    }

    #[test]
    fn enumerate_all_contains_canonical() {
        let instance = intro_instance(AuctionFormat::First);
        let all = solve_spe_all(&instance, EnumLimits::default()).unwrap();
        assert!(!all.is_empty());
        let canonical = solve_spe(&instance).unwrap().play(&instance).unwrap();
        let welfares: Vec<Money> = all
            .iter()
            .map(|s| s.play(&instance).unwrap().welfare)
            .collect();
        assert!(welfares.contains(&canonical.welfare));
    }

    #[test]
    fn instance_validation() {
        let v = Valuation::additive(vec![money!(1), money!(1)]).unwrap();
        assert!(AuctionInstance::new(
            vec![v.clone(), v.clone()],
            vec!["A".into(), "B".into()],
            vec![vec![0], vec![0]],
            AuctionFormat::First,
        )
        .is_err());
        assert!(AuctionInstance::new(
            vec![v.clone(), v.clone()],
            vec!["A".into(), "B".into()],
            vec![vec![0]],
            AuctionFormat::First,
        )
        .is_err());
        assert!(AuctionInstance::new(
            vec![v],
            vec!["A".into()],
            vec![vec![0]],
            AuctionFormat::First,
        )
        .is_err());
    }

    /// Profile prescribing the canonical solution's path bids at every
    /// state it solved, used to cross-check verify_spe on a known SPE.
    struct SolvedProfile<'a> {
        instance: &'a AuctionInstance,
        solution: &'a SpeSolution,
    }

    impl SolvedProfile<'_> {
        fn bundles_of(&self, state: &ProfileState) -> Vec<ItemSet> {
            let mut bundles = vec![ItemSet::EMPTY; self.instance.n()];
            for (round, &w) in state.iter().enumerate() {
                let item = self.instance.rounds[round][0];
                bundles[w as usize] = bundles[w as usize].with(item);
            }
            bundles
        }
    }

    impl StrategyProfile for SolvedProfile<'_> {
        fn initial_state(&self) -> ProfileState {
            Vec::new()
        }

        fn round_bids(&self, round: usize, state: &ProfileState) -> Vec<Vec<Bid>> {
            let bundles = self.bundles_of(state);
            let key = (round, self.instance.holdings(&bundles));
            let stage = self.solution.stages.get(&key).expect("state solved");
            stage.bids.iter().map(|b| vec![b.clone()]).collect()
        }

        fn advance(
            &self,
            _round: usize,
            state: &ProfileState,
            record: &RoundRecord,
        ) -> ProfileState {
            let mut s = state.clone();
            s.push(record.winners[0] as i64);
            s
        }
    }

    #[test]
    fn verify_accepts_solved_spe_and_rejects_tampering() {
        let instance = intro_instance(AuctionFormat::First);
        let solution = solve_spe(&instance).unwrap();
        let profile = SolvedProfile {
            instance: &instance,
            solution: &solution,
        };
        let verdict = verify_spe(&instance, &profile, &VerifyCaps::default()).unwrap();
        assert!(verdict.is_verified());

        // A profile where player 0 burns money in round 0 is not an SPE.
        struct Overbidder;
        impl StrategyProfile for Overbidder {
            fn initial_state(&self) -> ProfileState {
                Vec::new()
            }
            fn round_bids(&self, _round: usize, _state: &ProfileState) -> Vec<Vec<Bid>> {
                vec![vec![Bid::plain(money!(50))], vec![Bid::zero()]]
            }
            fn advance(
                &self,
                _round: usize,
                state: &ProfileState,
                record: &RoundRecord,
            ) -> ProfileState {
                let mut s = state.clone();
                s.push(record.winners[0] as i64);
                s
            }
        }
        let verdict = verify_spe(&instance, &Overbidder, &VerifyCaps::default()).unwrap();
        match verdict {
            SpeVerdict::Violated(v) => assert_eq!(v.player, 0),
            SpeVerdict::Verified => panic!("overbidding profile must fail"),
        }
    }

    #[test]
    fn grid_stage_finds_walrasian_equilibrium_when_one_exists() {
        // Two items sold simultaneously to two additive bidders with
        // distinct values: a pure equilibrium exists on the grid.
        let instance = AuctionInstance::new(
            vec![
                Valuation::additive(vec![money!(4), money!(1)]).unwrap(),
                Valuation::additive(vec![money!(1), money!(3)]).unwrap(),
            ],
            vec!["A".into(), "B".into()],
            vec![vec![0, 1]],
            AuctionFormat::First,
        )
        .unwrap();
        let config = GridStageConfig {
            step: money!(1),
            caps: vec![money!(4), money!(4)],
            amounts_override: None,
            include_plus: true,
            max_profiles: 2_000_000,
        };
        let result = grid_stage_equilibrium(
            &instance,
            0,
            &[ItemSet::EMPTY, ItemSet::EMPTY],
            &config,
        )
        .unwrap();
        match result {
            GridStageResult::Equilibrium(o) => {
                assert_eq!(o.winners, vec![0, 1]);
            }
            GridStageResult::NoPureEquilibrium { .. } => {
                panic!("additive simultaneous sale has a pure equilibrium")
            }
        }
    }

    #[test]
    fn grid_stage_rejects_oversized_search() {
        let instance = intro_instance(AuctionFormat::First);
        let config = GridStageConfig {
            step: money!(1, 100),
            caps: vec![money!(10), money!(10)],
            amounts_override: None,
            include_plus: true,
            max_profiles: 100,
        };
        assert!(matches!(
            grid_stage_equilibrium(&instance, 0, &[ItemSet::EMPTY; 2], &config),
            Err(SeqError::TooLarge(_))
        ));
    }
}
