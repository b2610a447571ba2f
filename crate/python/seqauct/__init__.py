"""Exact solvers for single-item auctions with externalities and
sequential item auctions.

Thin wrappers over the Rust extension module. Structured arguments are
plain dicts and lists using the same JSON schemas as the command-line
tool; rationals are "p/q" strings (integers are accepted on input) and
come back as strings.
"""

import json

from . import _seqauct

__all__ = [
    "tau",
    "solve_stage",
    "ascending",
    "enumerate_outcomes",
    "verify_stage",
    "solve_seq",
    "play",
    "verify_seq",
    "grid_round",
    "scenario",
    "basis_auction",
]


def _matrix(v):
    return json.dumps({"v": [[str(x) for x in row] for row in v]})


def tau(v):
    """Iterated-elimination thresholds for an externality matrix."""
    return json.loads(_seqauct.tau(_matrix(v)))


def solve_stage(v, format="first"):
    """Canonical stage equilibrium: bids and the resulting outcome."""
    return json.loads(_seqauct.solve_stage(_matrix(v), format))


def ascending(v, eps):
    """Ascending price process: final profile, outcome, and trace."""
    return json.loads(_seqauct.ascending(_matrix(v), str(eps)))


def enumerate_outcomes(v):
    """Winner/price-interval pairs compatible with elimination."""
    return json.loads(_seqauct.enumerate_outcomes(_matrix(v)))


def verify_stage(v, bids, format="first"):
    """Exact Nash check of a full bid profile."""
    return _seqauct.verify_stage(_matrix(v), json.dumps(bids), format)


def solve_seq(instance, policy="canonical"):
    """Backward-induction equilibrium report(s) for an instance dict."""
    return json.loads(_seqauct.solve_seq(json.dumps(instance), policy))


def play(instance, profile):
    """Play a strategy profile and report allocation, prices, welfare."""
    return json.loads(_seqauct.play(json.dumps(instance), json.dumps(profile)))


def verify_seq(instance, profile, max_nodes=500_000, dev_step="1"):
    """One-shot deviation check; returns a verdict dict."""
    return json.loads(
        _seqauct.verify_seq(
            json.dumps(instance), json.dumps(profile), max_nodes, str(dev_step)
        )
    )


def grid_round(instance, step, include_plus=False, max_profiles=1_000_000):
    """Grid best-response search on an opening simultaneous round."""
    return json.loads(
        _seqauct.grid_round(json.dumps(instance), str(step), include_plus, max_profiles)
    )


def scenario(name, params=None):
    """Build and play a named benchmark market."""
    params = {k: str(v) for k, v in (params or {}).items()}
    return json.loads(_seqauct.scenario(name, params))


def basis_auction(graph, mode="direct", policy="lex", seed=0):
    """Sequential co-circuit auction on a weighted graph."""
    return json.loads(_seqauct.basis_auction(json.dumps(graph), mode, policy, seed))
