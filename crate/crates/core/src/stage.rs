//! Single-item first- and second-price auctions with externalities.
//!
//! Each of the `n` players holds a value vector: `v[i][j]` is what player
//! `i` receives when player `j` wins the item. The module computes the
//! per-player bid thresholds that survive iterated elimination of
//! dominated strategies, constructs equilibrium bid profiles (directly
//! from the thresholds and via an ascending price process), enumerates
//! every winner/price pair consistent with elimination, and verifies
//! Nash equilibria exactly.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::money::Money;

/// Auction payment rule: winner pays own bid, or the second-highest bid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuctionFormat {
    First,
    Second,
}

/// A bid amount, optionally flagged as "infinitesimally above" the amount.
///
/// The flag only influences who wins; the price actually paid is always
/// the plain amount. Bids are totally ordered by amount, then flag.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bid {
    pub amount: Money,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub plus: bool,
}

impl Bid {
    pub fn plain(amount: Money) -> Self {
        Bid {
            amount,
            plus: false,
        }
    }

    pub fn plus(amount: Money) -> Self {
        Bid { amount, plus: true }
    }

    pub fn zero() -> Self {
        Bid::plain(Money::zero())
    }
}

impl fmt::Display for Bid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.amount, if self.plus { "+" } else { "" })
    }
}

impl fmt::Debug for Bid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// The `n x n` table `v[i][j]`: player `i`'s value when `j` wins.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalityMatrix {
    pub v: Vec<Vec<Money>>,
}

/// Who won, what they paid, and the full bid profile.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub winner: usize,
    pub price: Money,
    pub bids: Vec<Bid>,
}

/// Directed overbidding relation at a fixed price.
///
/// An edge `i -> j` means player `j` strictly prefers winning at the
/// current price over letting `i` win: `v[j][j] - p > v[j][i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverbiddingGraph {
    pub price: Money,
    pub edges: Vec<(usize, usize)>,
}

impl OverbiddingGraph {
    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }
}

/// A player becoming safe to win: at `price`, nobody left wants to outbid
/// `player`, while `supporter` can still credibly hold the price there.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutDegreeZeroEvent {
    pub player: usize,
    pub price: Money,
    pub supporter: usize,
}

/// Result of the iterated-elimination sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TauReport {
    /// Per-player removal threshold: bids in `[0, tau_i)` survive every
    /// elimination order, and the closure `[0, tau_i]` bounds equilibria.
    pub tau: Vec<Money>,
    /// Players in the order the sweep removed them.
    pub removal_order: Vec<usize>,
    /// Per-player best winning surplus `max_j (v_i^i - v_i^j)`, clamped
    /// at zero; an upper bound for `tau_i`.
    pub gamma: Vec<Money>,
    /// Sorted log of (player, price, supporter) points where a player's
    /// out-degree hits zero with a live supporter, i.e. where that
    /// player first becomes a possible equilibrium winner.
    pub events: Vec<OutDegreeZeroEvent>,
}

/// One step of the ascending price process: `winner` currently holds the
/// item at `price`, with `price_setter` as the bidder being displaced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AscendingState {
    pub winner: usize,
    pub price_setter: usize,
    pub price: Money,
}

/// A winner together with the closed interval of equilibrium prices
/// consistent with iterated elimination.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatibleOutcome {
    pub winner: usize,
    pub low: Money,
    pub high: Money,
}

impl CompatibleOutcome {
    pub fn contains(&self, p: &Money) -> bool {
        &self.low <= p && p <= &self.high
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error("matrix must be square with at least 2 players, got {0} rows")]
    BadShape(usize),
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(Money),
    #[error("bid profile has {got} bids for {want} players")]
    BidCountMismatch { got: usize, want: usize },
    #[error("bid profile is not a second-price Nash equilibrium")]
    NotSecondPriceNash,
}

impl ExternalityMatrix {
    pub fn new(v: Vec<Vec<Money>>) -> Result<Self, StageError> {
        let n = v.len();
        if n < 2 || v.iter().any(|row| row.len() != n) {
            return Err(StageError::BadShape(n));
        }
        Ok(ExternalityMatrix { v })
    }

    pub fn from_ints(rows: &[&[i64]]) -> Self {
        let v = rows
            .iter()
            .map(|r| r.iter().map(|&x| Money::from_int(x)).collect())
            .collect();
        ExternalityMatrix::new(v).expect("integer fixture must be square")
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    /// Shift each row so its minimum is zero. Within-row differences, and
    /// therefore every solver output, are unchanged.
    pub fn normalize(&self) -> ExternalityMatrix {
        let v = self
            .v
            .iter()
            .map(|row| {
                let min = row.iter().min().expect("row is non-empty").clone();
                row.iter().map(|x| x - &min).collect()
            })
            .collect();
        ExternalityMatrix { v }
    }

    /// True when every player strictly prefers any opponent winning over
    /// winning themselves. The item then sells for nothing: all-zero bids
    /// with player 0 taking it by tie-break.
    pub fn is_toxic(&self) -> bool {
        (0..self.n()).all(|i| {
            (0..self.n()).all(|j| i == j || self.v[i][i] < self.v[i][j])
        })
    }

    /// Best winning surplus per player, clamped at zero: a player with no
    /// opponent they would pay to displace never bids above zero.
    pub fn gamma(&self) -> Vec<Money> {
        (0..self.n())
            .map(|i| {
                (0..self.n())
                    .filter(|&j| j != i)
                    .map(|j| &self.v[i][i] - &self.v[i][j])
                    .max()
                    .expect("n >= 2")
                    .clamp_nonneg()
            })
            .collect()
    }

    pub fn overbidding_graph(&self, price: &Money) -> OverbiddingGraph {
        let mut edges = Vec::new();
        for i in 0..self.n() {
            for j in 0..self.n() {
                if i != j && &self.v[j][j] - price > self.v[j][i] {
                    edges.push((i, j));
                }
            }
        }
        OverbiddingGraph {
            price: price.clone(),
            edges,
        }
    }

    /// All prices at which the overbidding graph can change: the positive
    /// within-row surpluses `v[j][j] - v[j][i]`, plus zero.
    fn breakpoints(&self) -> Vec<Money> {
        let mut set = BTreeSet::new();
        set.insert(Money::zero());
        for j in 0..self.n() {
            for i in 0..self.n() {
                if i != j {
                    let d = &self.v[j][j] - &self.v[j][i];
                    if !d.is_negative() && !d.is_zero() {
                        set.insert(d);
                    }
                }
            }
        }
        set.into_iter().collect()
    }

    /// Iterated elimination of dominated bids, run as an exact sweep over
    /// the finitely many breakpoint prices instead of epsilon stepping.
    ///
    /// At price `p`, a surviving player with no surviving in-neighbor in
    /// the overbidding graph never wants to outbid anyone, so every bid
    /// above `p` is dominated and the player is removed with `tau = p`.
    /// When several players are removable at once the lowest index goes
    /// first; this affects only the logged order, never the thresholds.
    pub fn tau_thresholds(&self) -> TauReport {
        let n = self.n();
        let gamma = self.gamma();
        let breakpoints = self.breakpoints();
        let mut alive = vec![true; n];
        let mut tau = vec![Money::zero(); n];
        let mut removal_order = Vec::with_capacity(n);

        // In-degree zero for i at price p: no surviving x with
        // v[i][i] - p > v[i][x], i.e. i would not outbid any survivor.
        let removable = |i: usize, p: &Money, alive: &[bool]| {
            alive[i]
                && (0..n).all(|x| {
                    x == i || !alive[x] || !(&self.v[i][i] - p > self.v[i][x])
                })
        };

        for p in &breakpoints {
            loop {
                let Some(i) = (0..n).find(|&i| removable(i, p, &alive)) else {
                    break;
                };
                alive[i] = false;
                tau[i] = p.clone();
                removal_order.push(i);
            }
            if removal_order.len() == n {
                break;
            }
        }
        debug_assert_eq!(removal_order.len(), n, "sweep must remove everyone");

        let mut events: Vec<OutDegreeZeroEvent> = self
            .compatible_outcomes_with(&tau)
            .into_iter()
            .filter_map(|(c, supporter)| {
                supporter.map(|s| OutDegreeZeroEvent {
                    player: c.winner,
                    price: c.low,
                    supporter: s,
                })
            })
            .collect();
        events.sort_by(|a, b| (&a.price, a.player).cmp(&(&b.price, b.player)));

        TauReport {
            tau,
            removal_order,
            gamma,
            events,
        }
    }

    /// Compatible outcomes plus, for each, the lowest-index supporter
    /// valid at the interval's low end. Toxic matrices yield the
    /// degenerate zero-price outcome for every player, with no supporter.
    fn compatible_outcomes_with(
        &self,
        tau: &[Money],
    ) -> Vec<(CompatibleOutcome, Option<usize>)> {
        let n = self.n();
        if self.is_toxic() {
            return (0..n)
                .map(|i| {
                    (
                        CompatibleOutcome {
                            winner: i,
                            low: Money::zero(),
                            high: Money::zero(),
                        },
                        None,
                    )
                })
                .collect();
        }
        let mut out = Vec::new();
        for i in 0..n {
            // Price must be high enough that nobody wants to outbid i...
            let low = (0..n)
                .filter(|&x| x != i)
                .map(|x| &self.v[x][x] - &self.v[x][i])
                .max()
                .expect("n >= 2")
                .clamp_nonneg();
            // ...and low enough that i still tolerates paying it while some
            // supporter j could credibly have bid it (tau_j >= p) with i
            // preferring the win over j's (v_i^i - v_i^j >= p).
            let support = (0..n)
                .filter(|&j| j != i)
                .map(|j| tau[j].clone().min(&self.v[i][i] - &self.v[i][j]))
                .max()
                .expect("n >= 2");
            let high = tau[i].clone().min(support);
            if low <= high {
                let supporter = (0..n).find(|&j| {
                    j != i
                        && tau[j].clone().min(&self.v[i][i] - &self.v[i][j]) >= low
                });
                out.push((
                    CompatibleOutcome {
                        winner: i,
                        low,
                        high,
                    },
                    supporter,
                ));
            }
        }
        out.sort_by(|a, b| (&a.0.low, a.0.winner).cmp(&(&b.0.low, b.0.winner)));
        out
    }

    /// All winner/price pairs an equilibrium surviving iterated
    /// elimination can produce, as closed price intervals per winner.
    pub fn enumerate_compatible_outcomes(&self) -> Vec<CompatibleOutcome> {
        let tau = self.tau_thresholds().tau;
        self.compatible_outcomes_with(&tau)
            .into_iter()
            .map(|(c, _)| c)
            .collect()
    }

    /// Bid profile realizing `winner` at `price`, when that pair is
    /// compatible with iterated elimination: the winner bids just above
    /// the price, the lowest-index valid supporter bids exactly it.
    /// Toxic matrices only realize player 0 winning at zero. Returns
    /// `None` when the pair is incompatible or when no bid profile makes
    /// the supporting threat land under lowest-index tie-breaking.
    pub fn supported_profile(&self, winner: usize, price: &Money) -> Option<Vec<Bid>> {
        let n = self.n();
        if self.is_toxic() {
            return (winner == 0 && price.is_zero()).then(|| vec![Bid::zero(); n]);
        }
        let tau = self.tau_thresholds().tau;
        let ok = self
            .compatible_outcomes_with(&tau)
            .iter()
            .any(|(c, _)| c.winner == winner && c.contains(price));
        if !ok {
            return None;
        }
        let supporter = (0..n).find(|&j| {
            j != winner
                && tau[j].clone().min(&self.v[winner][winner] - &self.v[winner][j])
                    >= *price
        })?;
        self.realizing_bids(winner, supporter, price, AuctionFormat::First)
    }

    /// Bid profiles that put `winner` on top at `price` with a standing
    /// threat behind them, tried in order until one is an exact Nash
    /// equilibrium. The standard shape is a flagged bid at the price over
    /// the supporter's plain bid at the same amount. At price zero the
    /// supporter's plain bid ties every other zero and the lowest index
    /// wins the tie, so the dropout threat can land on a player the
    /// winner would rather lose to; a flagged zero from a higher-indexed
    /// tolerated player repairs the threat, and when the winner tolerates
    /// the lowest-indexed loser the bare profile already works.
    fn realizing_bids(
        &self,
        winner: usize,
        supporter: usize,
        price: &Money,
        format: AuctionFormat,
    ) -> Option<Vec<Bid>> {
        let n = self.n();
        let mut base = vec![Bid::zero(); n];
        base[winner] = Bid::plus(price.clone());
        let mut attempts = Vec::new();
        let mut standard = base.clone();
        standard[supporter] = Bid::plain(price.clone());
        attempts.push(standard);
        if price.is_zero() {
            for t in winner + 1..n {
                if self.v[winner][winner] >= self.v[winner][t] {
                    let mut alt = base.clone();
                    alt[t] = Bid::plus(Money::zero());
                    attempts.push(alt);
                }
            }
            attempts.push(base);
        }
        attempts.into_iter().find(|bids| {
            self.verify_stage_nash(bids, format)
                .expect("profile sized to matrix")
        })
    }

    /// Equilibrium built straight from the elimination thresholds: the
    /// winner is the first player to become safe (lowest compatible
    /// price, ties to the lowest index); they bid just above that price
    /// while the supporter bids exactly it.
    pub fn canonical_equilibrium(
        &self,
        format: AuctionFormat,
    ) -> (Vec<Bid>, StageOutcome) {
        let n = self.n();
        if self.is_toxic() {
            let bids = vec![Bid::zero(); n];
            let outcome = stage_outcome(&bids, format);
            return (bids, outcome);
        }
        let tau = self.tau_thresholds().tau;
        for (c, sup) in self.compatible_outcomes_with(&tau) {
            let Some(j) = sup else { continue };
            if let Some(bids) = self.realizing_bids(c.winner, j, &c.low, format) {
                let outcome = stage_outcome(&bids, format);
                return (bids, outcome);
            }
            // A zero-price dropout threat can be undeliverable under the
            // tie-break while a positive price in the same interval works:
            // the supporter's bid then outbids the other zeros outright.
            if c.low.is_zero() && c.high > Money::zero() {
                for s in (0..n).filter(|&s| s != c.winner) {
                    let tol = &self.v[c.winner][c.winner] - &self.v[c.winner][s];
                    let p = tol.min(c.high.clone());
                    if p <= Money::zero() {
                        continue;
                    }
                    if let Some(bids) = self.realizing_bids(c.winner, s, &p, format)
                    {
                        let outcome = stage_outcome(&bids, format);
                        return (bids, outcome);
                    }
                }
            }
        }
        // When every compatible outcome needs a dropout threat the
        // tie-break cannot deliver, the all-zero profile can still be an
        // equilibrium: the lowest index wins and cannot decline.
        let zeros = vec![Bid::zero(); n];
        if self
            .verify_stage_nash(&zeros, format)
            .expect("profile sized to matrix")
        {
            let outcome = stage_outcome(&zeros, format);
            return (zeros, outcome);
        }
        // No compatible outcome should exist only for toxic matrices, but
        // the ascending process still terminates at an equilibrium.
        let (bids, outcome, _) = self
            .ascending_equilibrium(&Money::from_int(1))
            .expect("positive epsilon");
        (bids, outcome)
    }

    /// The ascending price process: the current holder is repeatedly
    /// displaced by the lowest-index player still willing to pay more,
    /// with the price rising by `eps` each time a state repeats. Stops
    /// when nobody wants to displace the holder.
    pub fn ascending_equilibrium(
        &self,
        eps: &Money,
    ) -> Result<(Vec<Bid>, StageOutcome, Vec<AscendingState>), StageError> {
        if eps <= &Money::zero() {
            return Err(StageError::NonPositiveEpsilon(eps.clone()));
        }
        let n = self.n();
        if self.is_toxic() {
            let bids = vec![Bid::zero(); n];
            let outcome = stage_outcome(&bids, AuctionFormat::First);
            return Ok((bids, outcome, Vec::new()));
        }
        let (i0, j0) = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .find(|&(i, j)| self.v[i][i] >= self.v[i][j])
            .expect("non-toxic matrix has a start pair");

        let mut state = AscendingState {
            winner: i0,
            price_setter: j0,
            price: Money::zero(),
        };
        let mut trace = vec![state.clone()];
        let mut seen = BTreeSet::new();
        seen.insert((state.winner, state.price_setter, state.price.clone()));

        loop {
            let challenger = (0..n).find(|&k| {
                k != state.winner
                    && &self.v[k][k] - &state.price > self.v[k][state.winner]
            });
            let Some(k) = challenger else {
                let bids = self
                    .realizing_bids(
                        state.winner,
                        state.price_setter,
                        &state.price,
                        AuctionFormat::First,
                    )
                    .or_else(|| {
                        // Undeliverable zero-price threat: raise the
                        // supporting bid to the winner's tolerance so the
                        // dropout win lands on the supporter outright.
                        (0..n).filter(|&s| s != state.winner).find_map(|s| {
                            let p = &self.v[state.winner][state.winner]
                                - &self.v[state.winner][s];
                            if p <= Money::zero() {
                                return None;
                            }
                            self.realizing_bids(
                                state.winner,
                                s,
                                &p,
                                AuctionFormat::First,
                            )
                        })
                    })
                    .or_else(|| {
                        // Unrealizable dropout threat: fall back to the
                        // forced all-zero equilibrium when it checks out.
                        let zeros = vec![Bid::zero(); n];
                        self.verify_stage_nash(&zeros, AuctionFormat::First)
                            .expect("profile sized to matrix")
                            .then_some(zeros)
                    })
                    .unwrap_or_else(|| {
                        let mut bids = vec![Bid::zero(); n];
                        bids[state.winner] = Bid::plus(state.price.clone());
                        bids[state.price_setter] =
                            Bid::plain(state.price.clone());
                        bids
                    });
                let outcome = stage_outcome(&bids, AuctionFormat::First);
                return Ok((bids, outcome, trace));
            };
            let mut next = AscendingState {
                winner: k,
                price_setter: state.winner,
                price: state.price.clone(),
            };
            if !seen.insert((k, next.price_setter, next.price.clone())) {
                next.price = &next.price + eps;
                seen.insert((k, next.price_setter, next.price.clone()));
            }
            trace.push(next.clone());
            state = next;
        }
    }

    /// Exact Nash check against every real or infinitesimal deviation.
    ///
    /// A deviation's payoff depends only on whether the deviator wins and
    /// at what price. Given the others' bids, the deviator's options
    /// collapse to two: win at (or just above) the others' highest
    /// amount, or lose to the others' highest bidder. Comparing those two
    /// payoffs against the current one therefore covers the whole
    /// continuum of deviations.
    pub fn verify_stage_nash(
        &self,
        bids: &[Bid],
        format: AuctionFormat,
    ) -> Result<bool, StageError> {
        let n = self.n();
        if bids.len() != n {
            return Err(StageError::BidCountMismatch {
                got: bids.len(),
                want: n,
            });
        }
        let outcome = stage_outcome(bids, format);
        for x in 0..n {
            let u_x = self.utility(x, &outcome);
            let (rival, rival_bid) = (0..n)
                .filter(|&j| j != x)
                .map(|j| (j, &bids[j]))
                .max_by(|a, b| (a.1, std::cmp::Reverse(a.0)).cmp(&(b.1, std::cmp::Reverse(b.0))))
                .expect("n >= 2");
            // Winning deviation: the best achievable winning payoff is
            // (arbitrarily close to) v_x^x minus the rivals' top amount.
            if &self.v[x][x] - &rival_bid.amount > u_x {
                return Ok(false);
            }
            // Losing deviation: bid zero and let the top rival win. Not
            // available when the rivals' top bid is a plain zero held by a
            // higher index: the tie-break then forces x to win regardless.
            let can_lose = !(*rival_bid == Bid::zero() && rival > x);
            if can_lose && self.v[x][rival] > u_x {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Envy-freeness of a second-price equilibrium: no loser would rather
    /// take the item at the price the winner actually pays.
    pub fn is_envy_free_second_price(&self, bids: &[Bid]) -> Result<bool, StageError> {
        if !self.verify_stage_nash(bids, AuctionFormat::Second)? {
            return Err(StageError::NotSecondPriceNash);
        }
        let outcome = stage_outcome(bids, AuctionFormat::Second);
        Ok((0..self.n()).all(|k| {
            k == outcome.winner
                || !(&self.v[k][k] - &outcome.price > self.v[k][outcome.winner])
        }))
    }

    fn utility(&self, player: usize, outcome: &StageOutcome) -> Money {
        if player == outcome.winner {
            &self.v[player][player] - &outcome.price
        } else {
            self.v[player][outcome.winner].clone()
        }
    }

    /// Exhaustive pure-Nash search over a finite bid grid: every profile
    /// with amounts in `{0, step, 2*step, ..., cap}`, each optionally
    /// flagged. Used as an independent oracle against the closed-form
    /// equilibrium constructions.
    pub fn exhaustive_grid_equilibria(
        &self,
        step: &Money,
        cap: &Money,
        format: AuctionFormat,
    ) -> Vec<StageOutcome> {
        let n = self.n();
        let mut amounts = Vec::new();
        let mut a = Money::zero();
        while &a <= cap {
            amounts.push(a.clone());
            a = &a + step;
        }
        let mut strategies = Vec::new();
        for a in &amounts {
            strategies.push(Bid::plain(a.clone()));
            strategies.push(Bid::plus(a.clone()));
        }
        let mut found = Vec::new();
        let mut idx = vec![0usize; n];
        loop {
            let bids: Vec<Bid> =
                idx.iter().map(|&s| strategies[s].clone()).collect();
            if self
                .verify_stage_nash(&bids, format)
                .expect("profile sized to matrix")
            {
                found.push(stage_outcome(&bids, format));
            }
            let mut carry = 0;
            loop {
                idx[carry] += 1;
                if idx[carry] < strategies.len() {
                    break;
                }
                idx[carry] = 0;
                carry += 1;
                if carry == n {
                    return found;
                }
            }
        }
    }
}

/// Resolve a bid profile: highest bid wins, ties to the lowest index; the
/// price is the winner's amount (first price) or the highest rival
/// amount (second price).
pub fn stage_outcome(bids: &[Bid], format: AuctionFormat) -> StageOutcome {
    let winner = (0..bids.len())
        .max_by(|&a, &b| {
            (&bids[a], std::cmp::Reverse(a)).cmp(&(&bids[b], std::cmp::Reverse(b)))
        })
        .expect("at least one bid");
    let price = match format {
        AuctionFormat::First => bids[winner].amount.clone(),
        AuctionFormat::Second => (0..bids.len())
            .filter(|&j| j != winner)
            .map(|j| bids[j].amount.clone())
            .max()
            .unwrap_or_else(Money::zero),
    };
    StageOutcome {
        winner,
        price,
        bids: bids.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money;

    pub(crate) fn fix_a() -> ExternalityMatrix {
        ExternalityMatrix::from_ints(&[&[5, 0, 0], &[0, 3, 0], &[0, 0, 2]])
    }

    pub(crate) fn fix_b() -> ExternalityMatrix {
        ExternalityMatrix::from_ints(&[&[6, 5], &[0, 4]])
    }

    pub(crate) fn fix_c() -> ExternalityMatrix {
        ExternalityMatrix::from_ints(&[&[0, 5], &[5, 0]])
    }

    #[test]
    fn bid_total_order() {
        assert!(Bid::plain(money!(1)) < Bid::plus(money!(1)));
        assert!(Bid::plus(money!(1)) < Bid::plain(money!(2)));
        assert!(Bid::zero() < Bid::plus(money!(0)));
    }

    #[test]
    fn normalize_shifts_rows_to_zero_min() {
        assert_eq!(fix_a().normalize(), fix_a());
        assert_eq!(
            fix_b().normalize(),
            ExternalityMatrix::from_ints(&[&[1, 0], &[0, 4]])
        );
        let constant = ExternalityMatrix::from_ints(&[&[7, 7], &[1, 2]]);
        assert_eq!(
            constant.normalize(),
            ExternalityMatrix::from_ints(&[&[0, 0], &[0, 1]])
        );
    }

    #[test]
    fn toxicity() {
        assert!(fix_c().is_toxic());
        assert!(!fix_a().is_toxic());
        assert!(!fix_b().is_toxic());
    }

    #[test]
    fn overbidding_graph_edges() {
        let g0 = fix_b().overbidding_graph(&money!(0));
        assert_eq!(g0.edges, vec![(0, 1), (1, 0)]);
        let g1 = fix_b().overbidding_graph(&money!(1));
        assert_eq!(g1.edges, vec![(0, 1)]);
        let g5 = fix_a().overbidding_graph(&money!(5));
        assert!(g5.edges.is_empty());
    }

    #[test]
    fn tau_fixtures() {
        assert_eq!(fix_a().tau_thresholds().tau, vec![money!(3), money!(3), money!(2)]);
        assert_eq!(fix_b().tau_thresholds().tau, vec![money!(1), money!(1)]);
        assert_eq!(fix_c().tau_thresholds().tau, vec![money!(0), money!(0)]);
    }

    #[test]
    fn tau_report_details() {
        let report = fix_a().tau_thresholds();
        assert_eq!(report.gamma, vec![money!(5), money!(3), money!(2)]);
        assert_eq!(report.removal_order, vec![2, 1, 0]);
        assert_eq!(
            report.events,
            vec![OutDegreeZeroEvent {
                player: 0,
                price: money!(3),
                supporter: 1,
            }]
        );
    }

    #[test]
    fn canonical_fixtures() {
        let (bids, outcome) = fix_a().canonical_equilibrium(AuctionFormat::First);
        assert_eq!(outcome.winner, 0);
        assert_eq!(outcome.price, money!(3));
        assert_eq!(bids, vec![Bid::plus(money!(3)), Bid::plain(money!(3)), Bid::zero()]);

        let (_, outcome) = fix_b().canonical_equilibrium(AuctionFormat::First);
        assert_eq!((outcome.winner, outcome.price), (1, money!(1)));

        let (bids, outcome) = fix_c().canonical_equilibrium(AuctionFormat::First);
        assert_eq!((outcome.winner, outcome.price), (0, money!(0)));
        assert!(bids.iter().all(|b| *b == Bid::zero()));
    }

    #[test]
    fn ascending_trace_matches_hand_simulation() {
        let (_, outcome, trace) = fix_b()
            .ascending_equilibrium(&money!(1, 2))
            .unwrap();
        let expect: Vec<(usize, usize, Money)> = vec![
            (0, 1, money!(0)),
            (1, 0, money!(0)),
            (0, 1, money!(1, 2)),
            (1, 0, money!(1, 2)),
            (0, 1, money!(1)),
            (1, 0, money!(1)),
        ];
        let got: Vec<(usize, usize, Money)> = trace
            .iter()
            .map(|s| (s.winner, s.price_setter, s.price.clone()))
            .collect();
        assert_eq!(got, expect);
        assert_eq!((outcome.winner, outcome.price), (1, money!(1)));
    }

    #[test]
    fn ascending_toxic_and_validation() {
        let (_, outcome, trace) = fix_c().ascending_equilibrium(&money!(1)).unwrap();
        assert_eq!((outcome.winner, outcome.price), (0, money!(0)));
        assert!(trace.is_empty());
        assert!(fix_b().ascending_equilibrium(&money!(0)).is_err());
        assert!(fix_b().ascending_equilibrium(&money!(-1)).is_err());
    }

    #[test]
    fn ascending_fix_a_verifies() {
        let m = fix_a();
        let (bids, outcome, _) = m.ascending_equilibrium(&money!(1)).unwrap();
        assert_eq!(outcome.winner, 0);
        assert!(outcome.price <= money!(5));
        assert!(m.verify_stage_nash(&bids, AuctionFormat::First).unwrap());
        assert!(m.verify_stage_nash(&bids, AuctionFormat::Second).unwrap());
    }

    #[test]
    fn verify_nash_examples() {
        let m = fix_a();
        let good = vec![Bid::plus(money!(3)), Bid::plain(money!(3)), Bid::zero()];
        assert!(m.verify_stage_nash(&good, AuctionFormat::First).unwrap());
        let all_zero = vec![Bid::zero(); 3];
        assert!(!m.verify_stage_nash(&all_zero, AuctionFormat::First).unwrap());
        let (bids, _) = fix_b().canonical_equilibrium(AuctionFormat::First);
        assert!(fix_b().verify_stage_nash(&bids, AuctionFormat::First).unwrap());
    }

    #[test]
    fn enumerate_fixtures() {
        let outs = fix_a().enumerate_compatible_outcomes();
        assert_eq!(
            outs,
            vec![CompatibleOutcome {
                winner: 0,
                low: money!(3),
                high: money!(3),
            }]
        );
        let outs = fix_b().enumerate_compatible_outcomes();
        assert_eq!(
            outs,
            vec![CompatibleOutcome {
                winner: 1,
                low: money!(1),
                high: money!(1),
            }]
        );
        let outs = fix_c().enumerate_compatible_outcomes();
        assert_eq!(outs.len(), 2);
        assert!(outs
            .iter()
            .all(|c| c.low == money!(0) && c.high == money!(0)));
    }

    #[test]
    fn envy_free_examples() {
        let m = fix_a();
        let canonical = vec![Bid::plus(money!(3)), Bid::plain(money!(3)), Bid::zero()];
        assert!(m.is_envy_free_second_price(&canonical).unwrap());
        // Winner pays 0 under second price: still Nash, but player 1 envies.
        let cheap = vec![Bid::plain(money!(5)), Bid::zero(), Bid::zero()];
        assert!(m.verify_stage_nash(&cheap, AuctionFormat::Second).unwrap());
        assert!(!m.is_envy_free_second_price(&cheap).unwrap());
        let toxic_zero = vec![Bid::zero(), Bid::zero()];
        assert!(fix_c().is_envy_free_second_price(&toxic_zero).unwrap());
    }

    #[test]
    fn envy_free_rejects_non_equilibria() {
        let m = fix_a();
        let not_nash = vec![Bid::zero(), Bid::zero(), Bid::zero()];
        assert!(matches!(
            m.is_envy_free_second_price(&not_nash),
            Err(StageError::NotSecondPriceNash)
        ));
    }

    #[test]
    fn grid_oracle_agrees_on_fix_a() {
        let m = fix_a();
        let nash = m.exhaustive_grid_equilibria(
            &money!(1, 2),
            &money!(5),
            AuctionFormat::First,
        );
        assert!(!nash.is_empty());
        let tau = m.tau_thresholds().tau;
        let compatible = m.enumerate_compatible_outcomes();
        // Under no overbidding, grid equilibria land exactly inside the
        // compatible intervals.
        let mut seen_canonical = false;
        for o in &nash {
            let no_overbid =
                o.bids.iter().zip(&tau).all(|(b, t)| &b.amount <= t);
            if no_overbid {
                assert!(compatible
                    .iter()
                    .any(|c| c.winner == o.winner && c.contains(&o.price)));
                seen_canonical |= o.winner == 0 && o.price == money!(3);
            }
        }
        assert!(seen_canonical);
    }

    #[test]
    fn bad_shapes_rejected() {
        assert!(ExternalityMatrix::new(vec![vec![money!(1)]]).is_err());
        assert!(ExternalityMatrix::new(vec![
            vec![money!(1), money!(2)],
            vec![money!(1)],
        ])
        .is_err());
    }
}
