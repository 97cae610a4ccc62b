from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from choquard.ledger import (MU_EQ, MU_GT, MU_LT, H_ell, LedgerNotApplicable, boost_constraint_check,
                             build_q_sequence, case1_interval_nonempty, classify_case, compute_N,
                             necessary_H_gate, rational_sweep)
from choquard.params import make_params


def _lower(n, mu):
    # independent restatement of the window's left end: 1/2* - mu/(2n)
    return Fraction(n - 2, 2 * n) - Fraction(mu) / (2 * n)


def test_classify_examples():
    info = classify_case(make_params(5, 1))
    assert info.tag == MU_LT and info.exponent == 5
    assert classify_case(make_params(5, 3)).tag == MU_EQ
    info = classify_case(make_params(5, 4))
    assert info.tag == MU_GT and "inf" in info.target


def test_N_examples():
    assert compute_N(make_params(5, 1)) == 2
    n10 = compute_N(make_params(10, 1))
    assert n10 == 4
    with pytest.raises(LedgerNotApplicable):
        compute_N(make_params(5, 3))


def test_N_is_least_m():
    # brute force in exact rationals, written independently of the module
    for n in (3, 5, 6, 10, 17):
        for k in range(1, 10):
            mu = Fraction(k * (n - 2), 10)
            base = Fraction(2 * n) / (n - 2) - mu / (n - 2) - 1
            target = _lower(n, mu)
            m, s = 0, Fraction(0)
            while not Fraction(2, n) * s > target:
                m += 1
                s += base ** (-m)
            assert compute_N(make_params(n, mu)) == m


def test_H_examples():
    p = make_params(5, 1)
    assert H_ell(p, 1) == Fraction(1, 2)
    assert H_ell(p, 2) == Fraction(9, 20)
    with pytest.raises(ValueError):
        H_ell(p, 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(3, 30), st.fractions(0, 1).filter(lambda t: 0 < t < 1), st.integers(1, 12))
def test_H_difference_identity(n, t, ell):
    mu = t * (n - 2)
    p = make_params(n, mu)
    diff = H_ell(p, ell + 1) - H_ell(p, ell)
    assert isinstance(diff, Fraction)
    assert diff == (mu - 2) / (n * (p.two_star_mu - 1) ** (ell + 1))


@settings(max_examples=100, deadline=None)
@given(st.integers(5, 30), st.fractions(0, 1).filter(lambda t: 0 < t < 1))
def test_H_monotonicity_switch(n, t):
    mu = t * (n - 2)
    p = make_params(n, mu)
    h = [H_ell(p, l) for l in range(1, 8)]
    steps = [b - a for a, b in zip(h, h[1:])]
    if mu < 2:
        assert all(s < 0 for s in steps)
    else:
        assert all(s >= 0 for s in steps)


def test_q_sequence_n5_mu1():
    rep = build_q_sequence(make_params(5, 1))
    assert rep.valid and rep.N == 2 and rep.exact
    assert rep.q1_interval == (Fraction(1, 5), Fraction(4, 15))
    assert [1 / q for q in rep.q_sequence] == [Fraction(7, 30), Fraction(1, 15)]
    assert all(isinstance(q, Fraction) for q in rep.q_sequence)
    assert rep.H_values == [Fraction(1, 2)]
    assert "opaque" in rep.epsilon
    d = rep.to_dict()
    assert d["q_sequence"] == ["30/7", "15"] and d["valid"] is True


def test_rational_sweep_all_valid():
    sweep = rational_sweep()
    assert len(sweep) == 36
    for p in sweep:
        assert p.exact
        assert necessary_H_gate(p)
        rep = build_q_sequence(p)
        assert rep.valid, (p.n, p.mu, rep.checks)
        # recursion reproduced independently
        inv = [1 / q for q in rep.q_sequence]
        base = p.two_star_mu - 1
        for a, b in zip(inv, inv[1:]):
            assert b == base * a - Fraction(2, p.n)


def test_case1_interval_over_extended_sweep():
    sweep = rational_sweep(extended=True)
    assert any(p.mu >= p.n - 2 for p in sweep)
    for p in sweep:
        assert case1_interval_nonempty(p)
        lo, hi, top = _lower(p.n, p.mu), (p.n - p.mu) / Fraction(p.n) / p.two_star_mu, Fraction(p.n - 2, 2 * p.n)
        assert lo < hi < top
        rep = build_q_sequence(p)
        assert rep.valid
        if p.mu >= p.n - 2:
            assert rep.N == 1 and rep.case_tag in (MU_EQ, MU_GT)


def test_boost_constraint():
    p = make_params(5, 1)
    assert boost_constraint_check(p, 4)
    assert not boost_constraint_check(p, Fraction(10, 3))
    assert not boost_constraint_check(p, float("inf"))
    assert not boost_constraint_check(p, 100)
    with pytest.raises(ValueError):
        boost_constraint_check(p, 0)


def test_float_mu_falls_back():
    rep = build_q_sequence(make_params(5, 0.9))
    assert not rep.exact and rep.valid
