//! Exact-arithmetic solvers for sequential auctions with externalities.
//!
//! The crate is organized around three solver layers plus supporting
//! machinery:
//!
//! - [`stage`]: the single-item auction with externalities — iterated
//!   elimination thresholds, equilibrium construction, outcome
//!   enumeration, and exact Nash verification.
//! - [`seq`]: sequential item auctions — backward-induction subgame
//!   perfect equilibria, strategy-profile verification, and price of
//!   anarchy reporting.
//! - [`matroid`]: matroid oracles and the sequential co-circuit auction
//!   that emulates VCG outcomes.
//!
//! [`valuations`] supplies combinatorial valuations and brute-force
//! welfare oracles, [`scenarios`] builds the named benchmark instances,
//! and [`money`] provides the exact rational numbers everything runs on.
//!
//! All computation is exact; no solver path uses floating point. Mixed
//! strategies are out of scope throughout: the solvers compute and check
//! pure equilibria only, so bounds that hold only for mixed equilibria
//! are deliberately not reproduced here.

pub mod matroid;
pub mod money;
pub mod scenarios;
pub mod schema;
pub mod seq;
pub mod stage;
pub mod valuations;
