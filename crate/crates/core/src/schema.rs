//! JSON schemas shared by the command-line front end and the Python
//! bindings: valuations, sequential instances, strategy profiles, and
//! scenario construction from string parameters. All rationals are
//! serialized as "p/q" strings; plain integers are accepted on input.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::money::Money;
use crate::scenarios::{
    dominated_strategy_spe, figure1, multi_item_nonexistence, second_price_additive,
    second_price_unit_demand, submodular_unbounded, Scenario, StaticBidProfile,
};
use crate::seq::{AuctionInstance, GameReport, MultiRoundOutcome, StrategyProfile};
use crate::stage::{AuctionFormat, Bid};
use crate::valuations::{ItemSet, Valuation};

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct SchemaError(pub String);

impl SchemaError {
    fn new(msg: impl Into<String>) -> Self {
        SchemaError(msg.into())
    }
}

/// JSON form of an externality matrix: {"v": [[...]]}.
#[derive(Serialize, Deserialize)]
pub struct MatrixInput {
    pub v: Vec<Vec<Money>>,
}

/// JSON form of a valuation: {"kind": "...", ...params}. Bundles are
/// item index lists.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValuationSpec {
    Additive {
        values: Vec<Money>,
    },
    UnitDemand {
        values: Vec<Money>,
    },
    UniformSubmodular {
        marginals: Vec<Money>,
        items: usize,
    },
    Table {
        items: usize,
        entries: Vec<(Vec<usize>, Money)>,
    },
    CategoryTable {
        items: usize,
        categories: Vec<Vec<usize>>,
        entries: Vec<(Vec<usize>, Money)>,
    },
}

impl ValuationSpec {
    pub fn build(self) -> Result<Valuation, SchemaError> {
        let v = match self {
            ValuationSpec::Additive { values } => Valuation::additive(values),
            ValuationSpec::UnitDemand { values } => Valuation::unit_demand(values),
            ValuationSpec::UniformSubmodular { marginals, items } => {
                Valuation::uniform_submodular(marginals, items)
            }
            ValuationSpec::Table { items, entries } => Valuation::table(
                items,
                entries
                    .into_iter()
                    .map(|(s, val)| (ItemSet::from_indices(&s), val))
                    .collect(),
            ),
            ValuationSpec::CategoryTable {
                items,
                categories,
                entries,
            } => Valuation::category_table(
                items,
                categories
                    .iter()
                    .map(|c| ItemSet::from_indices(c))
                    .collect(),
                entries,
            ),
        };
        v.map_err(|e| SchemaError::new(format!("bad valuation: {e}")))
    }

    pub fn encode(v: &Valuation) -> ValuationSpec {
        match v {
            Valuation::Additive(values) => ValuationSpec::Additive {
                values: values.clone(),
            },
            Valuation::UnitDemand(values) => ValuationSpec::UnitDemand {
                values: values.clone(),
            },
            Valuation::UniformSubmodular { marginals, items } => {
                ValuationSpec::UniformSubmodular {
                    marginals: marginals.clone(),
                    items: *items,
                }
            }
            Valuation::Table { items, entries } => ValuationSpec::Table {
                items: *items,
                entries: entries
                    .iter()
                    .map(|(s, val)| (s.iter().collect(), val.clone()))
                    .collect(),
            },
            Valuation::CategoryTable {
                items,
                categories,
                entries,
            } => ValuationSpec::CategoryTable {
                items: *items,
                categories: categories.iter().map(|c| c.iter().collect()).collect(),
                entries: entries.clone(),
            },
        }
    }
}

/// JSON form of a sequential instance. Items are named; the item index
/// order is the order of first appearance across rounds.
#[derive(Serialize, Deserialize)]
pub struct InstanceSpec {
    pub players: Vec<ValuationSpec>,
    pub rounds: Vec<Vec<String>>,
    pub format: String,
}

impl InstanceSpec {
    pub fn build(self) -> Result<AuctionInstance, SchemaError> {
        let mut items: Vec<String> = Vec::new();
        let mut rounds: Vec<Vec<usize>> = Vec::new();
        for round in &self.rounds {
            let mut idxs = Vec::new();
            for name in round {
                let idx = match items.iter().position(|i| i == name) {
                    Some(i) => i,
                    None => {
                        items.push(name.clone());
                        items.len() - 1
                    }
                };
                idxs.push(idx);
            }
            rounds.push(idxs);
        }
        let players = self
            .players
            .into_iter()
            .map(ValuationSpec::build)
            .collect::<Result<Vec<_>, _>>()?;
        let format = parse_format(&self.format)?;
        AuctionInstance::new(players, items, rounds, format)
            .map_err(|e| SchemaError::new(format!("bad instance: {e}")))
    }

    pub fn encode(instance: &AuctionInstance) -> InstanceSpec {
        InstanceSpec {
            players: instance.players.iter().map(ValuationSpec::encode).collect(),
            rounds: instance
                .rounds
                .iter()
                .map(|r| r.iter().map(|&i| instance.items[i].clone()).collect())
                .collect(),
            format: match instance.format {
                AuctionFormat::First => "first".into(),
                AuctionFormat::Second => "second".into(),
            },
        }
    }
}

/// JSON form of a strategy profile: explicit per-round bids, or a named
/// scenario whose reference profile is rebuilt from its parameters.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    Static {
        /// Bids indexed [round][player][item-in-round].
        rounds: Vec<Vec<Vec<Bid>>>,
    },
    Scenario {
        name: String,
        params: BTreeMap<String, String>,
    },
}

impl ProfileSpec {
    pub fn build(self) -> Result<Box<dyn StrategyProfile + Send + Sync>, SchemaError> {
        match self {
            ProfileSpec::Static { rounds } => Ok(Box::new(StaticBidProfile { rounds })),
            ProfileSpec::Scenario { name, params } => {
                let scenario = build_scenario(&name, &params)?;
                scenario.profile.ok_or_else(|| {
                    SchemaError::new(format!("scenario {name} has no reference profile"))
                })
            }
        }
    }
}

pub fn parse_format(s: &str) -> Result<AuctionFormat, SchemaError> {
    match s {
        "first" => Ok(AuctionFormat::First),
        "second" => Ok(AuctionFormat::Second),
        other => Err(SchemaError::new(format!(
            "format must be \"first\" or \"second\", got {other:?}"
        ))),
    }
}

pub fn parse_money(s: &str, what: &str) -> Result<Money, SchemaError> {
    Money::from_str(s).map_err(|e| SchemaError::new(format!("bad {what} {s:?}: {e}")))
}

pub fn param_money(
    params: &BTreeMap<String, String>,
    key: &str,
    default: Money,
) -> Result<Money, SchemaError> {
    match params.get(key) {
        Some(s) => parse_money(s, key),
        None => Ok(default),
    }
}

pub fn param_usize(
    params: &BTreeMap<String, String>,
    key: &str,
    default: usize,
) -> Result<usize, SchemaError> {
    match params.get(key) {
        Some(s) => s
            .parse()
            .map_err(|e| SchemaError::new(format!("bad {key} {s:?}: {e}"))),
        None => Ok(default),
    }
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("serializable")
}

/// Encode a game report with items referred to by name.
pub fn game_report_json(r: &GameReport, instance: &AuctionInstance) -> Value {
    let named = |map: &BTreeMap<usize, Money>| -> Value {
        Value::Object(
            map.iter()
                .map(|(i, v)| (instance.items[*i].clone(), to_value(v)))
                .collect(),
        )
    };
    json!({
        "allocation": Value::Object(
            r.allocation
                .iter()
                .map(|(i, w)| (instance.items[*i].clone(), json!(w)))
                .collect(),
        ),
        "prices": named(&r.prices),
        "welfare": to_value(&r.welfare),
        "optimum": to_value(&r.optimum),
        "poa": to_value(&r.poa),
        "utilities": to_value(&r.utilities),
    })
}

/// Encode the bids, winners, and prices of one multi-item round.
pub fn outcome_json(o: &MultiRoundOutcome) -> Value {
    json!({
        "bids": to_value(&o.bids),
        "winners": o.winners,
        "prices": to_value(&o.prices),
    })
}

/// Named scenario lookup with per-scenario parameter defaults.
pub fn build_scenario(
    name: &str,
    params: &BTreeMap<String, String>,
) -> Result<Scenario, SchemaError> {
    let r = |n: i64, d: i64| Money::ratio(n, d);
    let scenario = match name {
        "figure1" => figure1(
            param_money(params, "alpha", r(1, 1))?,
            param_money(params, "eps", r(1, 100))?,
        ),
        "submodular_unbounded" => submodular_unbounded(
            param_usize(params, "k", 20)?,
            param_money(params, "delta", r(1, 1000))?,
            param_money(params, "eps", r(1, 1000))?,
        ),
        "second_price_additive" => second_price_additive(
            param_usize(params, "t", 20)?,
            param_money(params, "eps", r(1, 1_000_000))?,
            param_money(params, "delta", r(1, 1000))?,
        ),
        "second_price_unit_demand" => second_price_unit_demand(
            param_usize(params, "k", 10)?,
            param_money(params, "eps", r(1, 10))?,
            param_money(params, "delta", r(1, 100))?,
        ),
        "multi_item_nonexistence" => multi_item_nonexistence(
            param_money(params, "v", r(1, 1))?,
            param_money(params, "delta", r(1, 100))?,
            param_money(params, "eps", r(1, 1000))?,
        ),
        "dominated_strategy_spe" => dominated_strategy_spe(),
        other => {
            return Err(SchemaError::new(format!("unknown scenario {other:?}")));
        }
    };
    scenario.map_err(|e| SchemaError::new(format!("scenario {name}: {e}")))
}
