"""End-to-end smoke test of the Python bindings.

Run after `pip install -e . --no-build-isolation` from the repo root:

    python3 python/smoke_test.py
"""

from fractions import Fraction

import seqauct


def frac(s):
    return Fraction(str(s))


def check(label, cond):
    if not cond:
        raise SystemExit(f"FAIL {label}")
    print(f"ok {label}")


def main():
    # Diagonal externality matrix: each player only values own win.
    diag = [[5, 0, 0], [0, 3, 0], [0, 0, 2]]
    report = seqauct.tau(diag)
    check("tau thresholds", [frac(t) for t in report["tau"]] == [3, 3, 2])

    stage = seqauct.solve_stage(diag)
    check(
        "stage winner and price",
        stage["outcome"]["winner"] == 0 and frac(stage["outcome"]["price"]) == 3,
    )
    check("stage profile is Nash", seqauct.verify_stage(diag, stage["bids"]))

    outcomes = seqauct.enumerate_outcomes(diag)
    check("unique compatible outcome", len(outcomes) == 1 and outcomes[0]["winner"] == 0)

    asc = seqauct.ascending(diag, "1/2")
    check("ascending agrees on the winner", asc["outcome"]["winner"] == 0)

    # Two sequential rounds: an additive bidder against a unit-demand one.
    instance = {
        "players": [
            {"kind": "additive", "values": ["5", "5"]},
            {"kind": "unit_demand", "values": ["4", "4"]},
        ],
        "rounds": [["1"], ["2"]],
        "format": "first",
    }
    game = seqauct.solve_seq(instance)
    check("sequential welfare", frac(game["welfare"]) == 9)
    check("sequential optimum", frac(game["optimum"]) == 10)

    worst = seqauct.solve_seq(instance, policy="all")["reports"][0]
    check("enumeration includes the canonical outcome", frac(worst["welfare"]) <= 9)

    # Named scenario with a reference profile, checked for deviations.
    scen = seqauct.scenario("figure1", {"alpha": "1", "eps": "1/100"})
    check("figure1 welfare", frac(scen["report"]["welfare"]) == frac("201/100"))
    check(
        "figure1 matches its expectations",
        frac(scen["expected"]["welfare"]) == frac(scen["report"]["welfare"]),
    )
    dom = seqauct.scenario("dominated_strategy_spe")
    check("scenario carries a reference profile", dom["has_profile"])
    verdict = seqauct.verify_seq(
        dom["instance"],
        {"kind": "scenario", "name": "dominated_strategy_spe", "params": {}},
    )
    check("split threat profile verifies", verdict["verdict"] == "verified")

    # A threat profile that is not subgame perfect is caught.
    bad = seqauct.verify_seq(
        {
            "players": [
                {"kind": "additive", "values": ["1", "1"]},
                {"kind": "additive", "values": ["1", "1"]},
            ],
            "rounds": [["a"], ["b"]],
            "format": "first",
        },
        {
            "kind": "static",
            "rounds": [
                [[{"amount": "1", "plus": False}], [{"amount": "0", "plus": False}]],
                [[{"amount": "1", "plus": False}], [{"amount": "0", "plus": False}]],
            ],
        },
    )
    check("overpaying static profile is violated", bad["verdict"] == "violated")

    # Triangle graph: the auction reproduces the spanning tree and VCG
    # prices.
    triangle = {
        "vertices": 3,
        "edges": [
            ["0", "1", "e1", "5"],
            ["1", "2", "e2", "3"],
            ["0", "2", "e3", "2"],
        ],
    }
    trace = seqauct.basis_auction(triangle)
    check("triangle basis", sorted(trace["basis"]) == ["e1", "e2"])
    check(
        "triangle prices equal vcg",
        trace["prices"] == {k: v for k, v in trace["vcg_prices"].items() if k in trace["prices"]},
    )

    print("smoke test passed")


if __name__ == "__main__":
    main()
