"""Python bindings for the agealign engine."""
import json as _json

from . import _core
from ._core import (
    AgeAlignError,
    chi2_independence,
    coarsen_k,
    energy_distance,
    estimate_human_mean,
    extract_answer_wc,
    hoeffding_bound,
)

__all__ = [
    "AgeAlignError",
    "age_equivalent",
    "age_test",
    "build_wc",
    "chi2_independence",
    "coarsen_k",
    "energy_distance",
    "estimate_human_mean",
    "extract_answer_wc",
    "hoeffding_bound",
    "means_test",
    "td_test",
]


def means_test(correct, n, mu, alpha=0.05):
    return _json.loads(_core.means_test(correct, n, mu, alpha))


def td_test(disagreements, n, gamma, alpha=0.05):
    return _json.loads(_core.td_test(disagreements, n, gamma, alpha))


def age_test(items, mode="exact", test="means", mu=0.0, gamma=None, alpha=0.05, ages=()):
    """items: iterable of (aoa, h_lm) or (aoa, h_lm, h_human)."""
    rows = [(float(it[0]), int(it[1]), it[2] if len(it) > 2 else None) for it in items]
    return _json.loads(_core.age_test(rows, mode, test, mu, gamma, alpha, list(ages)))


def build_wc(wax, aoa, seed, overlap_filter=True):
    return _json.loads(_core.build_wc(str(wax), str(aoa), seed, overlap_filter))


def age_equivalent(norms, subtest, raw_score):
    return _json.loads(_core.age_equivalent(str(norms), subtest, raw_score))
