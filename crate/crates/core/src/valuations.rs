//! Combinatorial valuations over item sets, plus the brute-force welfare
//! oracles the solvers are checked against.
//!
//! Items are small indices into an instance's item list; sets of items
//! are bitmasks. Four valuation kinds cover everything the solvers need:
//! additive, unit-demand, uniform submodular (marginals that depend only
//! on how many items are held), and explicit tables completed by free
//! disposal.

use std::collections::BTreeMap;
use std::fmt;

use crate::money::Money;

/// A set of item indices, stored as a bitmask. Instances stay far below
/// 64 items, so a single word suffices.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ItemSet(pub u64);

impl ItemSet {
    pub const EMPTY: ItemSet = ItemSet(0);

    pub fn singleton(item: usize) -> Self {
        ItemSet(1 << item)
    }

    pub fn full(m: usize) -> Self {
        assert!(m < 64, "item universe too large for a bitmask");
        ItemSet((1u64 << m) - 1)
    }

    pub fn from_indices(items: &[usize]) -> Self {
        items.iter().fold(ItemSet::EMPTY, |s, &i| s.with(i))
    }

    pub fn contains(self, item: usize) -> bool {
        self.0 >> item & 1 == 1
    }

    pub fn with(self, item: usize) -> Self {
        ItemSet(self.0 | 1 << item)
    }

    pub fn without(self, item: usize) -> Self {
        ItemSet(self.0 & !(1 << item))
    }

    pub fn union(self, other: ItemSet) -> Self {
        ItemSet(self.0 | other.0)
    }

    pub fn minus(self, other: ItemSet) -> Self {
        ItemSet(self.0 & !other.0)
    }

    pub fn intersect(self, other: ItemSet) -> Self {
        ItemSet(self.0 & other.0)
    }

    pub fn is_subset_of(self, other: ItemSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&i| self.contains(i))
    }

    /// All subsets of this set, smallest mask first.
    pub fn subsets(self) -> impl Iterator<Item = ItemSet> {
        let full = self.0;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full {
                None
            } else {
                Some(cur.wrapping_sub(full) & full)
            };
            Some(ItemSet(cur))
        })
    }
}

impl fmt::Debug for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for ItemSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        iter.into_iter().fold(ItemSet::EMPTY, |s, i| s.with(i))
    }
}

/// Item index to winning player, for every auctioned item.
pub type Allocation = BTreeMap<usize, usize>;

#[derive(Debug, thiserror::Error)]
pub enum ValuationError {
    #[error("item {0} outside the valuation's universe of {1} items")]
    UnknownItem(usize, usize),
    #[error("marginal of item {0} requested for a set already containing it")]
    ItemAlreadyInSet(usize),
    #[error("valuation values must be nonnegative, got {0}")]
    NegativeValue(Money),
    #[error("uniform submodular marginals must be non-increasing")]
    IncreasingMarginals,
    #[error("instance too large for exhaustive scan: {0}")]
    TooLarge(String),
}

/// A monotone combinatorial valuation over a fixed item universe.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Valuation {
    /// Bundle value is the sum of per-item values.
    Additive(Vec<Money>),
    /// Bundle value is the best single item in the bundle.
    UnitDemand(Vec<Money>),
    /// Value depends only on the bundle size, through non-increasing
    /// marginals for the 1st, 2nd, ... item held.
    UniformSubmodular { marginals: Vec<Money>, items: usize },
    /// Explicit bundle values, completed by free disposal: a bundle is
    /// worth the best recorded subset it contains.
    Table {
        items: usize,
        entries: Vec<(ItemSet, Money)>,
    },
    /// A table that only sees how many items the bundle holds from each
    /// category: the succinct form of a table symmetric within item
    /// groups. A bundle is worth the best entry whose count vector it
    /// dominates componentwise.
    CategoryTable {
        items: usize,
        categories: Vec<ItemSet>,
        entries: Vec<(Vec<usize>, Money)>,
    },
}

impl Valuation {
    pub fn additive(values: Vec<Money>) -> Result<Self, ValuationError> {
        require_nonneg(&values)?;
        Ok(Valuation::Additive(values))
    }

    pub fn unit_demand(values: Vec<Money>) -> Result<Self, ValuationError> {
        require_nonneg(&values)?;
        Ok(Valuation::UnitDemand(values))
    }

    pub fn uniform_submodular(
        marginals: Vec<Money>,
        items: usize,
    ) -> Result<Self, ValuationError> {
        require_nonneg(&marginals)?;
        if marginals.windows(2).any(|w| w[0] < w[1]) {
            return Err(ValuationError::IncreasingMarginals);
        }
        Ok(Valuation::UniformSubmodular { marginals, items })
    }

    pub fn table(
        items: usize,
        entries: Vec<(ItemSet, Money)>,
    ) -> Result<Self, ValuationError> {
        for (set, value) in &entries {
            if let Some(bad) = set.iter().find(|&i| i >= items) {
                return Err(ValuationError::UnknownItem(bad, items));
            }
            if value.is_negative() {
                return Err(ValuationError::NegativeValue(value.clone()));
            }
        }
        Ok(Valuation::Table { items, entries })
    }

    pub fn category_table(
        items: usize,
        categories: Vec<ItemSet>,
        entries: Vec<(Vec<usize>, Money)>,
    ) -> Result<Self, ValuationError> {
        for cat in &categories {
            if let Some(bad) = cat.iter().find(|&i| i >= items) {
                return Err(ValuationError::UnknownItem(bad, items));
            }
        }
        for (counts, value) in &entries {
            if counts.len() != categories.len()
                || counts.iter().zip(&categories).any(|(&c, cat)| c > cat.len())
            {
                return Err(ValuationError::TooLarge(
                    "category count entry does not fit the categories".into(),
                ));
            }
            if value.is_negative() {
                return Err(ValuationError::NegativeValue(value.clone()));
            }
        }
        Ok(Valuation::CategoryTable {
            items,
            categories,
            entries,
        })
    }

    /// Number of items in the valuation's universe.
    pub fn universe(&self) -> usize {
        match self {
            Valuation::Additive(v) | Valuation::UnitDemand(v) => v.len(),
            Valuation::UniformSubmodular { items, .. } => *items,
            Valuation::Table { items, .. } => *items,
            Valuation::CategoryTable { items, .. } => *items,
        }
    }

    /// Exact value of a bundle.
    pub fn value(&self, s: ItemSet) -> Result<Money, ValuationError> {
        let m = self.universe();
        if let Some(bad) = s.iter().find(|&i| i >= m) {
            return Err(ValuationError::UnknownItem(bad, m));
        }
        Ok(match self {
            Valuation::Additive(v) => s.iter().map(|i| v[i].clone()).sum(),
            Valuation::UnitDemand(v) => s
                .iter()
                .map(|i| v[i].clone())
                .max()
                .unwrap_or_else(Money::zero),
            Valuation::UniformSubmodular { marginals, .. } => marginals
                .iter()
                .take(s.len())
                .cloned()
                .sum(),
            Valuation::Table { entries, .. } => entries
                .iter()
                .filter(|(set, _)| set.is_subset_of(s))
                .map(|(_, value)| value.clone())
                .max()
                .unwrap_or_else(Money::zero),
            Valuation::CategoryTable {
                categories,
                entries,
                ..
            } => {
                let have: Vec<usize> =
                    categories.iter().map(|c| c.intersect(s).len()).collect();
                entries
                    .iter()
                    .filter(|(need, _)| {
                        need.iter().zip(&have).all(|(n, h)| n <= h)
                    })
                    .map(|(_, value)| value.clone())
                    .max()
                    .unwrap_or_else(Money::zero)
            }
        })
    }

    /// Value added by item `j` on top of bundle `s`.
    pub fn marginal(&self, s: ItemSet, j: usize) -> Result<Money, ValuationError> {
        if s.contains(j) {
            return Err(ValuationError::ItemAlreadyInSet(j));
        }
        Ok(self.value(s.with(j))? - self.value(s)?)
    }

    /// Exhaustively confirm the valuation never loses value by gaining
    /// items.
    pub fn check_monotone(&self, m: usize) -> Result<bool, ValuationError> {
        guard_scan(m)?;
        for s in ItemSet::full(m).subsets() {
            for j in s.iter() {
                if self.value(s)? < self.value(s.without(j))? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Exhaustively confirm decreasing marginals: adding an item helps
    /// less once another item has already been added.
    pub fn check_submodular(&self, m: usize) -> Result<bool, ValuationError> {
        guard_scan(m)?;
        for s in ItemSet::full(m).subsets() {
            for j in 0..m {
                if s.contains(j) {
                    continue;
                }
                for k in 0..m {
                    if k == j || s.contains(k) {
                        continue;
                    }
                    if self.marginal(s.with(k), j)? > self.marginal(s, j)? {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// Best single-item value, used when projecting to a matching market.
    pub fn best_item_value(&self, items: ItemSet) -> Result<Money, ValuationError> {
        items
            .iter()
            .map(|j| self.value(ItemSet::singleton(j)))
            .try_fold(Money::zero(), |acc, v| Ok(acc.max(v?)))
    }
}

/// What a valuation remembers about a bundle: the smallest summary that
/// still determines `value(bundle + T) - value(bundle)` for every future
/// set `T`. Sequential solvers key their state on this instead of the
/// raw bundle, collapsing histories that can no longer be told apart.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Holding {
    /// Additive values: past acquisitions never matter.
    Inert,
    /// Unit demand: only the best item held so far matters.
    Best(Money),
    /// Uniform submodular: only how many items are held matters.
    Count(usize),
    /// Category table: the per-category counts.
    Counts(Vec<usize>),
    /// General tables: the exact bundle.
    Set(ItemSet),
}

impl Valuation {
    pub fn holding(&self, bundle: ItemSet) -> Holding {
        match self {
            Valuation::Additive(_) => Holding::Inert,
            Valuation::UnitDemand(v) => Holding::Best(
                bundle
                    .iter()
                    .map(|i| v[i].clone())
                    .max()
                    .unwrap_or_else(Money::zero),
            ),
            Valuation::UniformSubmodular { .. } => Holding::Count(bundle.len()),
            Valuation::CategoryTable { categories, .. } => Holding::Counts(
                categories
                    .iter()
                    .map(|c| c.intersect(bundle).len())
                    .collect(),
            ),
            Valuation::Table { .. } => Holding::Set(bundle),
        }
    }
}

fn require_nonneg(values: &[Money]) -> Result<(), ValuationError> {
    match values.iter().find(|v| v.is_negative()) {
        Some(v) => Err(ValuationError::NegativeValue(v.clone())),
        None => Ok(()),
    }
}

fn guard_scan(m: usize) -> Result<(), ValuationError> {
    if m > 15 {
        Err(ValuationError::TooLarge(format!(
            "2^{m} subsets exceed the exhaustive-scan budget"
        )))
    } else {
        Ok(())
    }
}

/// Welfare-maximizing assignment of every item in `items` to a player,
/// by exhausting all n^|items| assignments. Ties break lexicographically
/// on the assignment vector (items ascending, players ascending).
pub fn brute_force_optimal_allocation(
    players: &[Valuation],
    items: ItemSet,
) -> Result<(Allocation, Money), ValuationError> {
    let n = players.len();
    let item_list: Vec<usize> = items.iter().collect();
    let m = item_list.len();
    if (n as f64).powi(m as i32) > 1e7 {
        return Err(ValuationError::TooLarge(format!(
            "{n}^{m} assignments exceed the enumeration budget"
        )));
    }
    let mut best: Option<(Vec<usize>, Money)> = None;
    let mut assign = vec![0usize; m];
    loop {
        let mut bundles = vec![ItemSet::EMPTY; n];
        for (slot, &p) in assign.iter().enumerate() {
            bundles[p] = bundles[p].with(item_list[slot]);
        }
        let mut welfare = Money::zero();
        for (p, v) in players.iter().enumerate() {
            welfare += v.value(bundles[p])?;
        }
        if best.as_ref().is_none_or(|(_, w)| &welfare > w) {
            best = Some((assign.clone(), welfare));
        }
        let mut carry = m;
        loop {
            if carry == 0 {
                let (assign, welfare) = best.expect("at least one assignment");
                let allocation = item_list
                    .iter()
                    .zip(&assign)
                    .map(|(&item, &p)| (item, p))
                    .collect();
                return Ok((allocation, welfare));
            }
            carry -= 1;
            assign[carry] += 1;
            if assign[carry] < n {
                break;
            }
            assign[carry] = 0;
        }
    }
}

/// Optimal welfare, using structure where it is exact and cheap: an
/// all-additive market assigns each item to whoever values it most, an
/// all-unit-demand market is a maximum-weight matching, and anything
/// else falls back to exhaustive assignment enumeration.
pub fn optimal_welfare(
    players: &[Valuation],
    items: ItemSet,
) -> Result<Money, ValuationError> {
    if players.iter().all(|v| matches!(v, Valuation::Additive(_))) {
        let mut total = Money::zero();
        for j in items.iter() {
            let best = players
                .iter()
                .map(|v| v.value(ItemSet::singleton(j)))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .max()
                .unwrap_or_else(Money::zero);
            total += best;
        }
        return Ok(total);
    }
    if players.iter().all(|v| matches!(v, Valuation::UnitDemand(_))) {
        return optimal_matching_value(players, items);
    }
    brute_force_optimal_allocation(players, items).map(|(_, w)| w)
}

/// Maximum-weight matching value when every player wants at most one
/// item, each valued at that player's best-single-item price.
pub fn optimal_matching_value(
    players: &[Valuation],
    items: ItemSet,
) -> Result<Money, ValuationError> {
    let item_list: Vec<usize> = items.iter().collect();
    let weights: Vec<Vec<Money>> = players
        .iter()
        .map(|v| {
            item_list
                .iter()
                .map(|&j| v.value(ItemSet::singleton(j)))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    // dp over players with a bitmask of used items.
    let m = item_list.len();
    if m > 20 {
        return Err(ValuationError::TooLarge(format!(
            "{m} items exceed the matching DP budget"
        )));
    }
    let mut dp = vec![Money::zero(); 1 << m];
    for row in &weights {
        let mut next = dp.clone();
        for mask in 0..1usize << m {
            for (slot, w) in row.iter().enumerate() {
                if mask >> slot & 1 == 0 {
                    let cand = &dp[mask] + w;
                    let target = &mut next[mask | 1 << slot];
                    if cand > *target {
                        *target = cand;
                    }
                }
            }
        }
        dp = next;
    }
    Ok(dp.into_iter().max().expect("non-empty dp"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money;

    fn intro_additive() -> Valuation {
        Valuation::additive(vec![money!(5), money!(5)]).unwrap()
    }

    fn intro_unit_demand() -> Valuation {
        Valuation::unit_demand(vec![money!(4), money!(4)]).unwrap()
    }

    #[test]
    fn values_match_kind_formulas() {
        let both = ItemSet::from_indices(&[0, 1]);
        assert_eq!(intro_additive().value(both).unwrap(), money!(10));
        assert_eq!(intro_unit_demand().value(both).unwrap(), money!(4));
        assert_eq!(intro_additive().value(ItemSet::EMPTY).unwrap(), money!(0));
        assert_eq!(intro_unit_demand().value(ItemSet::EMPTY).unwrap(), money!(0));
    }

    #[test]
    fn marginals() {
        let a = ItemSet::singleton(0);
        assert_eq!(intro_unit_demand().marginal(a, 1).unwrap(), money!(0));
        assert_eq!(intro_additive().marginal(a, 1).unwrap(), money!(5));
        let us =
            Valuation::uniform_submodular(vec![money!(3), money!(1)], 2).unwrap();
        assert_eq!(us.marginal(a, 1).unwrap(), money!(1));
        assert!(intro_additive().marginal(a, 0).is_err());
    }

    #[test]
    fn monotonicity_checks() {
        assert!(intro_additive().check_monotone(2).unwrap());
        assert!(intro_unit_demand().check_monotone(2).unwrap());
        let shrinking = Valuation::table(
            2,
            vec![
                (ItemSet::singleton(0), money!(2)),
                (ItemSet::from_indices(&[0, 1]), money!(1)),
            ],
        )
        .unwrap();
        // Free disposal completes the table: {0,1} is worth the better of
        // its recorded subsets, so the valuation stays monotone.
        assert!(shrinking.check_monotone(2).unwrap());
        assert_eq!(
            shrinking.value(ItemSet::from_indices(&[0, 1])).unwrap(),
            money!(2)
        );
    }

    #[test]
    fn submodularity_checks() {
        assert!(intro_additive().check_submodular(2).unwrap());
        assert!(intro_unit_demand().check_submodular(2).unwrap());
        let complementary = Valuation::table(
            2,
            vec![
                (ItemSet::singleton(0), money!(1)),
                (ItemSet::singleton(1), money!(1)),
                (ItemSet::from_indices(&[0, 1]), money!(3)),
            ],
        )
        .unwrap();
        assert!(!complementary.check_submodular(2).unwrap());
    }

    #[test]
    fn construction_validation() {
        assert!(Valuation::additive(vec![money!(-1)]).is_err());
        assert!(
            Valuation::uniform_submodular(vec![money!(1), money!(2)], 2).is_err()
        );
        assert!(Valuation::table(1, vec![(ItemSet::singleton(3), money!(1))]).is_err());
        assert!(intro_additive().value(ItemSet::singleton(5)).is_err());
        assert!(intro_additive().check_monotone(16).is_err());
    }

    #[test]
    fn brute_force_intro_instance() {
        let players = vec![intro_additive(), intro_unit_demand()];
        let (alloc, welfare) =
            brute_force_optimal_allocation(&players, ItemSet::full(2)).unwrap();
        assert_eq!(welfare, money!(10));
        assert_eq!(alloc, BTreeMap::from([(0, 0), (1, 0)]));
    }

    #[test]
    fn brute_force_single_player() {
        let players = vec![intro_additive()];
        let (alloc, welfare) =
            brute_force_optimal_allocation(&players, ItemSet::full(2)).unwrap();
        assert_eq!(welfare, money!(10));
        assert!(alloc.values().all(|&p| p == 0));
    }

    #[test]
    fn matching_value_examples() {
        let players = vec![
            Valuation::unit_demand(vec![money!(5), money!(3)]).unwrap(),
            Valuation::unit_demand(vec![money!(4), money!(1)]).unwrap(),
        ];
        assert_eq!(
            optimal_matching_value(&players, ItemSet::full(2)).unwrap(),
            money!(7)
        );
        let one_item = vec![
            Valuation::unit_demand(vec![money!(5)]).unwrap(),
            Valuation::unit_demand(vec![money!(3)]).unwrap(),
        ];
        assert_eq!(
            optimal_matching_value(&one_item, ItemSet::full(1)).unwrap(),
            money!(5)
        );
    }

    #[test]
    fn matching_agrees_with_brute_force_on_unit_demand() {
        let players = vec![
            Valuation::unit_demand(vec![money!(2), money!(7), money!(1)]).unwrap(),
            Valuation::unit_demand(vec![money!(6), money!(6), money!(3)]).unwrap(),
            Valuation::unit_demand(vec![money!(4), money!(5), money!(5)]).unwrap(),
        ];
        let (_, brute) =
            brute_force_optimal_allocation(&players, ItemSet::full(3)).unwrap();
        assert_eq!(
            optimal_matching_value(&players, ItemSet::full(3)).unwrap(),
            brute
        );
    }

    #[test]
    fn category_table_counts_items_per_group() {
        // Two interchangeable items {0,1} and a special item 2.
        let v = Valuation::category_table(
            3,
            vec![ItemSet::from_indices(&[0, 1]), ItemSet::singleton(2)],
            vec![
                (vec![1, 0], money!(2)),
                (vec![2, 0], money!(3)),
                (vec![0, 1], money!(4)),
                (vec![2, 1], money!(8)),
            ],
        )
        .unwrap();
        assert_eq!(v.value(ItemSet::singleton(0)).unwrap(), money!(2));
        assert_eq!(v.value(ItemSet::singleton(1)).unwrap(), money!(2));
        assert_eq!(v.value(ItemSet::from_indices(&[0, 1])).unwrap(), money!(3));
        assert_eq!(v.value(ItemSet::singleton(2)).unwrap(), money!(4));
        assert_eq!(v.value(ItemSet::full(3)).unwrap(), money!(8));
        assert!(v.check_monotone(3).unwrap());
        assert_eq!(
            v.holding(ItemSet::from_indices(&[1, 2])),
            Holding::Counts(vec![1, 1])
        );
    }

    #[test]
    fn holdings_summarize_bundles() {
        assert_eq!(intro_additive().holding(ItemSet::singleton(0)), Holding::Inert);
        let ud = Valuation::unit_demand(vec![money!(4), money!(7)]).unwrap();
        assert_eq!(
            ud.holding(ItemSet::from_indices(&[0, 1])),
            Holding::Best(money!(7))
        );
        assert_eq!(ud.holding(ItemSet::EMPTY), Holding::Best(money!(0)));
        let us = Valuation::uniform_submodular(vec![money!(2), money!(1)], 2).unwrap();
        assert_eq!(us.holding(ItemSet::singleton(1)), Holding::Count(1));
    }

    #[test]
    fn optimal_welfare_fast_paths_agree_with_brute_force() {
        let additive = vec![
            Valuation::additive(vec![money!(3), money!(1)]).unwrap(),
            Valuation::additive(vec![money!(2), money!(5)]).unwrap(),
        ];
        let (_, brute) =
            brute_force_optimal_allocation(&additive, ItemSet::full(2)).unwrap();
        assert_eq!(optimal_welfare(&additive, ItemSet::full(2)).unwrap(), brute);
        assert_eq!(brute, money!(8));

        let unit = vec![
            Valuation::unit_demand(vec![money!(3), money!(1)]).unwrap(),
            Valuation::unit_demand(vec![money!(2), money!(5)]).unwrap(),
        ];
        let (_, brute) =
            brute_force_optimal_allocation(&unit, ItemSet::full(2)).unwrap();
        assert_eq!(optimal_welfare(&unit, ItemSet::full(2)).unwrap(), brute);
    }

    #[test]
    fn subset_iteration_covers_powerset() {
        let subsets: Vec<ItemSet> = ItemSet::full(3).subsets().collect();
        assert_eq!(subsets.len(), 8);
        assert_eq!(subsets[0], ItemSet::EMPTY);
        assert_eq!(subsets[7], ItemSet::full(3));
    }
}
