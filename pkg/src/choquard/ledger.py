"""Exponent bookkeeping for the local boundedness bootstrap.

Everything is done in exact rationals when mu is rational, so that the strict
open-interval gates are never decided by rounding. Float mu falls back to
float arithmetic and the report says so.

The smallness threshold epsilon(n, mu, q) of the integrability boosting step
has no explicit formula; it is recorded as an opaque symbol and never checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .params import ProblemParams, _num_json

MU_LT = "mu_lt_n_minus_2"
MU_EQ = "mu_eq_n_minus_2"
MU_GT = "mu_gt_n_minus_2"

MAX_N = 100_000
EPSILON_SYMBOL = "epsilon(n, mu, q) > 0 (opaque, not computed)"


class LedgerNotApplicable(ValueError):
    """The requested quantity is only defined for mu in (0, n - 2)."""


class LedgerInconsistency(ArithmeticError):
    """An interval that should be nonempty came out empty."""


@dataclass(frozen=True)
class CaseInfo:
    tag: str
    target: str
    exponent: Optional[object] = None

    def to_dict(self) -> dict:
        return {"tag": self.tag, "target": self.target,
                "exponent": None if self.exponent is None else _num_json(self.exponent)}


@dataclass
class LedgerReport:
    n: int
    mu: object
    case_tag: str
    N: int
    q_sequence: list
    checks: dict
    H_values: list = field(default_factory=list)
    q1_interval: tuple = ()
    exact: bool = True
    epsilon: str = EPSILON_SYMBOL

    @property
    def valid(self) -> bool:
        return all(self.checks.values()) and all(q > 0 for q in self.q_sequence)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mu": _num_json(self.mu),
            "case_tag": self.case_tag,
            "N": self.N,
            "q_sequence": [_num_json(q) for q in self.q_sequence],
            "inverse_q_sequence": [_num_json(1 / q) for q in self.q_sequence],
            "q_sequence_float": [float(q) for q in self.q_sequence],
            "checks": dict(self.checks),
            "H_values": [_num_json(h) for h in self.H_values],
            "q1_interval": [_num_json(x) for x in self.q1_interval],
            "exact": self.exact,
            "epsilon": self.epsilon,
            "valid": self.valid,
        }


def _one(params: ProblemParams):
    return Fraction(1) if params.exact else 1.0


def _base(params: ProblemParams):
    """2*_mu - 1, the growth factor of the recursion."""
    return params.two_star_mu - 1


def lower_bound(params: ProblemParams):
    """1/2* - mu/(2n), the left end of every admissible window."""
    return 1 / params.two_star - params.mu / (2 * params.n)


def case1_upper(params: ProblemParams):
    """((n - mu)/n) / 2*_mu."""
    return (params.n - params.mu) / params.n / params.two_star_mu


def classify_case(params: ProblemParams) -> CaseInfo:
    n, mu = params.n, params.mu
    if mu < n - 2:
        return CaseInfo(MU_LT, "L^{2n/(n-2-mu)}", 2 * n / (n - 2 - mu) if not params.exact
                        else Fraction(2 * n) / (n - 2 - mu))
    if mu == n - 2:
        return CaseInfo(MU_EQ, "L^q for every q in (2*, inf)")
    return CaseInfo(MU_GT, "L^inf")


def _require_case2(params: ProblemParams) -> None:
    if not 0 < params.mu < params.n - 2:
        raise LedgerNotApplicable(f"defined for mu in (0, n-2); got n={params.n}, mu={params.mu}")


def partial_sum(params: ProblemParams, m: int):
    """(2/n) sum_{k=1}^m (2*_mu - 1)^{-k}."""
    r = 1 / _base(params)
    total = 0 * _one(params)
    term = _one(params)
    for _ in range(m):
        term = term * r
        total = total + term
    return Fraction(2, params.n) * total if params.exact else 2 / params.n * total


def compute_N(params: ProblemParams) -> int:
    _require_case2(params)
    target = lower_bound(params)
    r = 1 / _base(params)
    scale = Fraction(2, params.n) if params.exact else 2 / params.n
    total = 0 * _one(params)
    term = _one(params)
    for m in range(1, MAX_N + 1):
        term = term * r
        total = total + term
        if scale * total > target:
            return m
    raise LedgerInconsistency(f"no N <= {MAX_N} found for n={params.n}, mu={params.mu}")


def H_ell(params: ProblemParams, ell: int):
    _require_case2(params)
    if ell < 1:
        raise ValueError("ell must be >= 1")
    r = 1 / _base(params)
    if ell == 1:
        return r
    return r**ell + partial_sum(params, ell - 1)


def boost_constraint_check(params: ProblemParams, q) -> bool:
    """1/2* - mu/(2n) < 1/q < 1/2*; ``q = inf`` (float) gives False."""
    if isinstance(q, float) and q == float("inf"):
        inv = 0
    else:
        q = Fraction(q) if params.exact and not isinstance(q, float) else q
        if not q > 0:
            raise ValueError("q must be positive")
        inv = 1 / q
    return bool(lower_bound(params) < inv < 1 / params.two_star)


def case1_interval(params: ProblemParams) -> tuple:
    lo, hi = lower_bound(params), case1_upper(params)
    return lo, hi


def case1_interval_nonempty(params: ProblemParams) -> bool:
    """1/2* - mu/(2n) < ((n - mu)/n)/2*_mu < 1/2*, valid for every mu in (0, n)."""
    lo, hi = case1_interval(params)
    return bool(lo < hi < 1 / params.two_star)


def necessary_H_gate(params: ProblemParams) -> bool:
    """min_{1<=l<=N-1} H_l > 1/2* - mu/(2n); vacuous when N = 1."""
    N = compute_N(params)
    if N == 1:
        return True
    return min(H_ell(params, l) for l in range(1, N)) > lower_bound(params)


def _midpoint(lo, hi):
    return (lo + hi) / 2


def _case1_report(params: ProblemParams, tag: str) -> LedgerReport:
    lo, hi = case1_interval(params)
    if not lo < hi:
        raise LedgerInconsistency(f"empty exponent window ({lo}, {hi})")
    # for mu > n - 2 the left end is negative; 1/q must also be positive
    inv_q = _midpoint(max(lo, 0 * lo), hi)
    gate = Fraction(2, params.n) / _base(params) if params.exact else 2 / params.n / _base(params)
    checks = {
        "case1_q": bool(lo < inv_q < hi and inv_q > 0),
        "case1_interval_nonempty": case1_interval_nonempty(params),
        "case1_q_large": bool(inv_q < gate),
        "dual_q_range": bool(lo < inv_q < 1 / params.two_star),
    }
    return LedgerReport(params.n, params.mu, tag, 1, [1 / inv_q], checks, [], (lo, hi), params.exact)


def build_q_sequence(params: ProblemParams) -> LedgerReport:
    """Exponent ladder q_1, ..., q_N with every gate evaluated.

    For mu >= n - 2 a single exponent from the direct window is returned
    (N = 1). Otherwise 1/q_1 is the midpoint of the admissible window and
    1/q_{k+1} = (2*_mu - 1)/q_k - 2/n.
    """
    info = classify_case(params)
    if info.tag != MU_LT:
        return _case1_report(params, info.tag)
    N = compute_N(params)
    lo = lower_bound(params)
    H = [H_ell(params, l) for l in range(1, N)]
    uppers = [partial_sum(params, N), case1_upper(params)] + H
    hi = min(uppers)
    if not lo < hi:
        raise LedgerInconsistency(f"empty window for 1/q_1: ({lo}, {hi})")
    base = _base(params)
    two_n = Fraction(2, params.n) if params.exact else 2 / params.n
    gate = two_n / base
    inv = [_midpoint(lo, hi)]
    for _ in range(N - 1):
        inv.append(base * inv[-1] - two_n)
    checks = {
        "q1_window": bool(lo < inv[0] < hi),
        "necessary_Hl": necessary_H_gate(params),
        "qN_large": bool(inv[-1] < gate),
        "qk_small": all(x > gate for x in inv[:-1]),
        "admissible_exponent": all(two_n < base * x < 1 for x in inv[:-1]),
        "positive_finite": all(0 < x < 1 for x in inv),
        "case1_interval_nonempty": case1_interval_nonempty(params),
    }
    return LedgerReport(params.n, params.mu, info.tag, N, [1 / x for x in inv], checks, H, (lo, hi),
                        params.exact)


def rational_sweep(ns=(3, 5, 6, 10), steps: int = 10, extended: bool = False) -> list[ProblemParams]:
    """mu = k (n - 2)/steps for k = 1..steps-1; ``extended`` adds a grid of [n - 2, n)."""
    out = []
    for n in ns:
        for k in range(1, steps):
            out.append(ProblemParams(n, Fraction(k * (n - 2), steps)))
        if extended:
            for k in range(steps):
                out.append(ProblemParams(n, n - 2 + Fraction(2 * k, steps)))
    return out
