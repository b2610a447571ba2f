//! Acceptance suite: one test per acceptance criterion, each printing a
//! single PASS line with the measured evidence. Every check is exact
//! rational arithmetic; nothing here is weakened to tolerances except
//! where a criterion itself asks for one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqauct::matroid::{
    participation_matching, run_sequential_basis_auction, CocircuitPolicy, Matroid,
    Mode, VcgPrice, WeightedMatroidInstance,
};
use seqauct::money::Money;
use seqauct::scenarios::{
    check_walrasian, figure1, multi_item_nonexistence, random_additive,
    random_graphical_matroid, random_unit_demand, second_price_additive,
    submodular_unbounded, walrasian_witness,
};
use seqauct::seq::{
    grid_stage_equilibrium, solve_spe, solve_spe_all, AuctionInstance, EnumLimits,
    GridStageResult,
};
use seqauct::stage::{stage_outcome, AuctionFormat, Bid, ExternalityMatrix};
use seqauct::valuations::ItemSet;

fn m(n: i64, d: i64) -> Money {
    Money::ratio(n, d)
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> ExternalityMatrix {
    let v = (0..n)
        .map(|_| (0..n).map(|_| Money::ratio(rng.gen_range(0..=12), 2)).collect())
        .collect();
    ExternalityMatrix::new(v).expect("square matrix")
}

#[test]
fn criterion_01_stage_equilibrium_existence() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut checked = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=5);
        let matrix = random_matrix(&mut rng, n);
        for format in [AuctionFormat::First, AuctionFormat::Second] {
            let (bids, _) = matrix.canonical_equilibrium(format);
            assert!(
                matrix.verify_stage_nash(&bids, format).unwrap(),
                "canonical profile fails under {format:?} on {matrix:?}"
            );
            let (abids, _, _) = matrix.ascending_equilibrium(&m(1, 2)).unwrap();
            assert!(
                matrix.verify_stage_nash(&abids, format).unwrap(),
                "ascending profile fails under {format:?} on {matrix:?}"
            );
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10 s");
    println!(
        "criterion 1: PASS - {checked} equilibrium constructions verified \
         exactly in {elapsed:?}"
    );
}

#[test]
fn criterion_02_elimination_characterizes_grid_nash() {
    // Exhaustive over 2-player integer matrices with entries 0..=3,
    // plus seeded integer samples at n = 3 and n = 4.
    let mut matrices: Vec<ExternalityMatrix> = Vec::new();
    for code in 0..4096u32 {
        let e = |k: u32| Money::from_int(((code >> (2 * k)) & 3) as i64);
        matrices.push(
            ExternalityMatrix::new(vec![vec![e(0), e(1)], vec![e(2), e(3)]]).unwrap(),
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..250 {
        let v = (0..3)
            .map(|_| (0..3).map(|_| Money::from_int(rng.gen_range(0..=3))).collect())
            .collect();
        matrices.push(ExternalityMatrix::new(v).unwrap());
    }
    for _ in 0..60 {
        let v = (0..4)
            .map(|_| (0..4).map(|_| Money::from_int(rng.gen_range(0..=2))).collect())
            .collect();
        matrices.push(ExternalityMatrix::new(v).unwrap());
    }

    let mut grid_outcomes = 0usize;
    let mut unrealizable = 0usize;
    for matrix in &matrices {
        let cap = matrix
            .v
            .iter()
            .flatten()
            .max()
            .unwrap()
            .clone()
            + Money::from_int(1);
        let tau = matrix.tau_thresholds().tau;
        let compatible = matrix.enumerate_compatible_outcomes();
        let nash =
            matrix.exhaustive_grid_equilibria(&Money::from_int(1), &cap, AuctionFormat::First);

        // Forward: every no-overbidding grid equilibrium lands in a
        // compatible winner/price interval. Forced wins are excluded:
        // when every rival bid is a plain zero from a higher index, the
        // lowest-index tie-break makes the winner win no matter what they
        // bid, so such outcomes are equilibria only because the winner
        // cannot decline, not because anyone chose them.
        for o in &nash {
            let no_overbid = o.bids.iter().zip(&tau).all(|(b, t)| &b.amount <= t);
            let forced = {
                let mut b = o.bids.clone();
                b[o.winner] = Bid::zero();
                stage_outcome(&b, AuctionFormat::First).winner == o.winner
            };
            if no_overbid && !forced {
                assert!(
                    compatible
                        .iter()
                        .any(|c| c.winner == o.winner && c.contains(&o.price)),
                    "grid outcome {o:?} outside compatible set of {matrix:?}"
                );
                grid_outcomes += 1;
            }
        }

        // Backward: every integer point of every compatible interval is
        // realized by a no-overbidding grid equilibrium, except the rare
        // zero-price points whose supporting dropout threat cannot be
        // delivered under lowest-index tie-breaking (supported_profile
        // reports those as unrealizable).
        for c in &compatible {
            let mut p = c.low.clone();
            while p <= c.high && p <= cap {
                if matrix.supported_profile(c.winner, &p).is_some() {
                    assert!(
                        nash.iter().any(|o| {
                            o.winner == c.winner
                                && o.price == p
                                && o.bids.iter().zip(&tau).all(|(b, t)| &b.amount <= t)
                        }),
                        "compatible point ({}, {p}) missing from grid Nash of {matrix:?}",
                        c.winner
                    );
                } else {
                    unrealizable += 1;
                }
                p = &p + &Money::from_int(1);
            }
        }
    }
    println!(
        "criterion 2: PASS - {} matrices, {grid_outcomes} no-overbidding grid \
         equilibria all inside the compatible intervals, every realizable \
         integer compatible point found on the grid ({unrealizable} \
         tie-break-unrealizable zero-price points skipped)",
        matrices.len()
    );
}

#[test]
fn criterion_03_warmup_fixture() {
    let matrix = ExternalityMatrix::new(vec![
        vec![m(5, 1), m(0, 1), m(0, 1)],
        vec![m(0, 1), m(3, 1), m(0, 1)],
        vec![m(0, 1), m(0, 1), m(2, 1)],
    ])
    .unwrap();
    let tau = matrix.tau_thresholds().tau;
    assert_eq!(tau, vec![m(3, 1), m(3, 1), m(2, 1)]);
    let outcomes = matrix.enumerate_compatible_outcomes();
    assert_eq!(outcomes.len(), 1);
    assert_eq!(outcomes[0].winner, 0);
    assert_eq!(outcomes[0].low, m(3, 1));
    assert_eq!(outcomes[0].high, m(3, 1));
    println!(
        "criterion 3: PASS - warm-up matrix gives tau (3, 3, 2) and the unique \
         outcome winner 0 at price 3"
    );
}

#[test]
fn criterion_04_additive_always_efficient() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for i in 0..500 {
        let n = rng.gen_range(2..=4);
        let mm = rng.gen_range(2..=4);
        let instance = random_additive(n, mm, 40_000 + i).unwrap();
        let report = solve_spe(&instance).unwrap().play(&instance).unwrap();
        assert_eq!(
            report.welfare, report.optimum,
            "additive instance seed {i} inefficient"
        );
    }
    println!(
        "criterion 4: PASS - 500 random additive instances, equilibrium \
         welfare equals the optimum exactly in every one"
    );
}

#[test]
fn criterion_05_unit_demand_ratio_at_most_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = Money::from_int(1);
    for i in 0..1000 {
        let n = rng.gen_range(2..=4);
        let mm = rng.gen_range(2..=4);
        let instance = random_unit_demand(n, mm, 50_000 + i).unwrap();
        // n^m <= 4^4 = 256 throughout, so the enumerate-all policy
        // applies to every instance.
        let solutions = solve_spe_all(&instance, EnumLimits::default()).unwrap();
        assert!(!solutions.is_empty());
        for s in &solutions {
            let r = s.play(&instance).unwrap();
            assert!(
                r.poa <= Money::from_int(2),
                "unit-demand ratio above 2 at seed {i}: {}",
                r.poa
            );
            if r.poa > worst {
                worst = r.poa;
            }
        }
    }

    let fig = figure1(m(1, 1), m(1, 100)).unwrap();
    assert_eq!(fig.expected.as_ref().unwrap().poa, m(299, 201));

    let fig_small = figure1(m(1, 1), m(1, 10_000)).unwrap();
    let gap = (&fig_small.expected.as_ref().unwrap().poa - &m(3, 2)).abs();
    assert!(gap < m(1, 1000), "ratio {gap} away from 3/2");

    println!(
        "criterion 5: PASS - 1000 unit-demand instances enumerated, worst \
         ratio {worst} <= 2; figure1 ratio 299/201 exactly and within 1/1000 \
         of 3/2 at eps = 1/10000"
    );
}

#[test]
fn criterion_06_submodular_inefficiency_unbounded() {
    let delta = m(1, 1000);
    let s = submodular_unbounded(20, delta.clone(), delta.clone()).unwrap();
    assert!(
        s.verify().unwrap().is_verified(),
        "reference profile must be subgame perfect at k = 20"
    );
    let poa20 = s.expected.as_ref().unwrap().poa.clone();
    assert!(poa20 > Money::from_int(3), "poa {poa20} not above 3");

    let mut last = Money::zero();
    for k in [1usize, 5, 10, 20] {
        let sk = submodular_unbounded(k, delta.clone(), delta.clone()).unwrap();
        let poa = sk.expected.unwrap().poa;
        assert!(poa > last, "poa not increasing at k = {k}");
        last = poa;
    }
    println!(
        "criterion 6: PASS - k = 20 reference profile verified, poa {poa20} > 3, \
         and poa increases over k in {{1, 5, 10, 20}}"
    );
}

#[test]
fn criterion_07_second_price_concession() {
    let t = 20;
    let delta = m(1, 1000);
    // The threat profile is an equilibrium only when t*eps <= delta.
    let eps = m(1, 1_000_000);
    let s = second_price_additive(t, eps, delta).unwrap();
    assert!(s.verify().unwrap().is_verified());
    let poa = s.expected.as_ref().unwrap().poa.clone();
    assert_eq!(poa, m(22_000, 2_020)); // (t+2)/(2+t*delta) = 22/(202/100)
    assert!(poa >= Money::from_int(10));

    let mut twin = s.instance.clone();
    twin.format = AuctionFormat::First;
    let twin_report = solve_spe(&twin).unwrap().play(&twin).unwrap();
    assert_eq!(twin_report.poa, Money::from_int(1));
    println!(
        "criterion 7: PASS - second-price profile verified at t = 20, \
         poa {poa} >= 10; the first-price twin solves to poa 1"
    );
}

struct MatroidFleet {
    instances: Vec<WeightedMatroidInstance>,
}

fn matroid_fleet() -> MatroidFleet {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut instances = Vec::new();
    for i in 0..200 {
        let vertices = rng.gen_range(2..=6);
        let extra = rng.gen_range(0..=3);
        let inst = random_graphical_matroid(vertices, extra, 80_000 + i).unwrap();
        assert!(inst.has_distinct_weights());
        instances.push(inst);
    }
    MatroidFleet { instances }
}

fn vcg_of(inst: &WeightedMatroidInstance, e: usize) -> VcgPrice {
    inst.vcg_price(e).unwrap()
}

#[test]
fn criterion_08_cocircuit_auction_emulates_vcg() {
    let start = std::time::Instant::now();
    let fleet = matroid_fleet();
    let mut traces = 0;
    for (i, inst) in fleet.instances.iter().enumerate() {
        let (opt, _) = inst.brute_force_opt();
        for policy in [
            CocircuitPolicy::Lexicographic,
            CocircuitPolicy::Seeded(9000 + i as u64),
            CocircuitPolicy::AdversarialLongest,
        ] {
            let trace = run_sequential_basis_auction(inst, policy).unwrap();
            assert_eq!(trace.basis, opt, "allocation differs from OPT at {i}");
            for (&e, p) in &trace.prices {
                assert_eq!(
                    vcg_of(inst, e).finite(),
                    Some(p),
                    "price differs from VCG at instance {i}, element {e}"
                );
            }
            traces += 1;
        }
    }

    // Triangle fixture: weights (5, 3, 2); both winners pay 2.
    let tri = WeightedMatroidInstance::new(
        Matroid::graphical(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap(),
        vec!["e1".into(), "e2".into(), "e3".into()],
        vec![m(5, 1), m(3, 1), m(2, 1)],
        Mode::Direct,
    )
    .unwrap();
    let trace = run_sequential_basis_auction(&tri, CocircuitPolicy::Lexicographic).unwrap();
    assert_eq!(trace.basis, ItemSet::from_indices(&[0, 1]));
    let prices: Vec<Money> = trace.prices.values().cloned().collect();
    assert_eq!(prices, vec![m(2, 1), m(2, 1)]);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}, budget 30 s");
    println!(
        "criterion 8: PASS - {traces} auction traces match the brute-force \
         optimal basis and VCG prices exactly in {elapsed:?}; triangle fixture \
         prices (2, 2)"
    );
}

#[test]
fn criterion_09_contraction_raises_vcg_prices() {
    let fleet = matroid_fleet();
    let mut pairs = 0;
    for inst in &fleet.instances {
        let (opt, _) = inst.brute_force_opt();
        let trace =
            run_sequential_basis_auction(inst, CocircuitPolicy::Lexicographic).unwrap();
        for winner in trace.basis.iter() {
            let before = vcg_of(inst, winner);
            for k in inst.matroid.ground().iter() {
                if k == winner {
                    continue;
                }
                let mut contracted = inst.clone();
                contracted.matroid =
                    inst.matroid.contract(ItemSet::singleton(k)).unwrap();
                let after = contracted.vcg_price(winner).unwrap();
                match (before.finite(), after.finite()) {
                    (Some(b), Some(a)) => {
                        assert!(a >= b, "vcg dropped after contracting {k}");
                        if opt.contains(k) {
                            assert_eq!(a, b, "vcg changed after contracting optimal {k}");
                        }
                    }
                    (Some(_), None) => {} // price rose to the unbounded sentinel
                    (None, _) => panic!("trace winner priced unbounded"),
                }
                pairs += 1;
            }
        }
    }
    println!(
        "criterion 9: PASS - {pairs} (winner, contraction) pairs: VCG prices \
         never drop, and stay equal when the contracted element is optimal"
    );
}

#[test]
fn criterion_10_participation_matching_exists() {
    let fleet = matroid_fleet();
    let mut matchings = 0;
    for inst in &fleet.instances {
        let trace =
            run_sequential_basis_auction(inst, CocircuitPolicy::Lexicographic).unwrap();
        if inst.matroid.ground().len() <= 8 {
            for basis in inst.matroid.bases() {
                assert!(
                    participation_matching(&trace, basis).is_ok(),
                    "Hall violation for basis {basis:?}"
                );
                matchings += 1;
            }
        } else {
            assert!(participation_matching(&trace, trace.basis).is_ok());
            matchings += 1;
        }
    }
    println!(
        "criterion 10: PASS - {matchings} (trace, basis) pairs all admit a \
         participation matching"
    );
}

#[test]
fn criterion_11_no_pure_equilibrium_but_walrasian_exists() {
    let v = m(1, 1);
    let delta = m(1, 100);
    let s = multi_item_nonexistence(v.clone(), delta.clone(), m(1, 1000)).unwrap();
    let grid = s.grid.as_ref().unwrap();
    assert_eq!(grid.step, &delta / &Money::from_int(4));
    let start = vec![ItemSet::EMPTY; s.instance.n()];
    let cycle_len = match grid_stage_equilibrium(&s.instance, 0, &start, grid).unwrap() {
        GridStageResult::NoPureEquilibrium { cycle } => {
            assert!(cycle.len() >= 2);
            cycle.len()
        }
        GridStageResult::Equilibrium(o) => {
            panic!("unexpected pure grid equilibrium: {o:?}")
        }
    };
    let (alloc, prices) = walrasian_witness(&v, &delta);
    assert!(check_walrasian(&s.instance.players, &alloc, &prices).unwrap());
    println!(
        "criterion 11: PASS - grid search at step delta/4 finds no pure \
         equilibrium (best-response cycle of length {cycle_len}); the quoted \
         Walrasian allocation and prices check out"
    );
}

#[test]
fn criterion_12_mixed_strategy_bounds_out_of_scope() {
    // The crate documentation states that mixed-strategy equilibria and
    // their bounds are out of scope, and this suite asserts nothing
    // about them.
    let docs = include_str!("../src/lib.rs");
    assert!(
        docs.contains("Mixed") && docs.contains("deliberately not reproduced"),
        "library docs must state the mixed-strategy scope exclusion"
    );
    println!(
        "criterion 12: PASS - docs state that mixed-strategy bounds are not \
         reproduced, and no test asserts them"
    );
}

#[test]
fn cli_round_trips_emitted_instances() {
    // Supporting invariant for the CLI: an emitted scenario instance
    // re-parses to an identical in-memory instance.
    let dir = std::env::temp_dir().join("seqauct-acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let inst_path = dir.join("instance.json");
    let prof_path = dir.join("profile.json");
    let bin = env!("CARGO_BIN_EXE_seqauct");

    let status = std::process::Command::new(bin)
        .args([
            "scenario",
            "second_price_additive",
            "--t",
            "3",
            "--eps",
            "1/1000000",
            "--delta",
            "1/1000",
            "--check",
            "--emit",
        ])
        .arg(&inst_path)
        .arg(&prof_path)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());

    let verify = std::process::Command::new(bin)
        .arg("verify")
        .arg(&inst_path)
        .arg(&prof_path)
        .args(["--dev-step", "1/4000"])
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(verify.success(), "emitted files fail to verify");

    let text = std::fs::read_to_string(&inst_path).unwrap();
    let reparsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    let first = AuctionInstance::sequential(
        second_price_additive(3, m(1, 1_000_000), m(1, 1000))
            .unwrap()
            .instance
            .players
            .clone(),
        vec!["A1".into(), "A2".into(), "A3".into(), "B".into(), "C".into()],
        AuctionFormat::Second,
    )
    .unwrap();
    assert_eq!(reparsed["format"], "second");
    assert_eq!(reparsed["players"].as_array().unwrap().len(), first.n());
    println!("round-trip: PASS - emitted instance re-parses and verifies");
}
