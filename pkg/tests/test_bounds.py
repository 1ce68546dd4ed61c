import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyntl import bounds as bd
from dyntl.errors import ConfigError, DataError


def uniform_instance(N, K, f_src, f_tgt, H):
    p = np.full(K, 1.0 / K)
    return bd.DiscreteInstance([p] * N, f_src, [p] * (N + 1), f_tgt, H)


def test_exact_errors_hand_values():
    inst = bd.DiscreteInstance([[0.2, 0.3, 0.5]], [[0, 1, 1]], [[0.2, 0.3, 0.5]] * 2,
                               [[0, 1, 1], [1, 1, 1]], [[0, 1, 0]])
    src, tgt = bd.exact_errors(inst, [0, 1, 0])
    assert src[0] == pytest.approx(0.5)
    assert tgt[0] == pytest.approx(0.5) and tgt[1] == pytest.approx(0.7)
    assert bd.exact_errors(inst, [0, 1, 1])[0][0] == 0.0
    assert bd.task_error([0.1, 0.9], [1, 1], [0, 0]) == 1.0


def test_identical_link_contributes_nothing():
    # the corollary variants need the labeling function inside H to reach 0
    inst = uniform_instance(2, 3, [[0, 1, 0]] * 2, [[0, 1, 0]] * 3, [[0, 0, 0], [0, 1, 0]])
    for kind in ("l1", "f_js", "c_div", "mmd"):
        ch = bd.chain_divergences(inst, kind)
        assert ch.d_max == 0.0 and ch.lambda_max == 0.0


def test_chain_counts_and_hand_link():
    inst = bd.DiscreteInstance([[1.0, 0.0], [0.5, 0.5]], [[0, 0], [0, 0]],
                               [[0.5, 0.5]] * 3, [[0, 0]] * 3, [[0, 0]])
    ch = bd.chain_divergences(inst, "l1")
    assert (len(ch.source_chain), len(ch.target_chain)) == (1, 2)
    assert ch.source_chain[0] == pytest.approx(1.0)
    disjoint = bd.DiscreteInstance([[1.0, 0.0]], [[0, 0]], [[0.0, 1.0]] * 2, [[0, 0]] * 2, [[0, 0]])
    assert bd.chain_divergences(disjoint, "l1").cross == 2.0


def test_lambda_variants_hand_values():
    # link with labels differing on symbol 1 only
    a = (np.array([0.5, 0.5]), np.array([0, 0]))
    b = (np.array([0.2, 0.8]), np.array([0, 1]))
    H = [np.array([0, 0]), np.array([1, 1])]
    assert bd.link_lambda(a, b, H, "theorem") == pytest.approx(0.5)
    # h=00: 0 + 0.8, h=11: 1 + 0.2
    assert bd.link_lambda(a, b, H, "corollary") == pytest.approx(0.8)
    # h*_A = 00 (err 0), h*_B = 11 (err 0.2), disagreement under B = 1
    assert bd.link_lambda(a, b, H, "disc") == pytest.approx(1.2)
    assert bd.link_lambda(a, b, H, "zero") == 0.0


def test_c_div_uses_joint_distribution():
    a = (np.array([0.5, 0.5]), np.array([0, 0]))
    b = (np.array([0.5, 0.5]), np.array([0, 1]))
    assert bd.link_divergence(a, b, "l1") == 0.0
    assert bd.link_divergence(a, b, "c_div") == pytest.approx(1.0)


def test_concentration_isolated():
    ch = bd.ChainDivergences("l1", "theorem", [], 0.0, [0.0], [], 0.0, [0.0])
    rep = bd.compute_bound(([0.0], [0.0]), ch, 0.0, 1.0, math.exp(-2), 1, 1)
    assert rep.total == pytest.approx(1.0, abs=1e-12)


def test_drift_term_arithmetic():
    ch = bd.ChainDivergences("l1", "theorem", [0.4], 0.1, [0.2, 0.3], [0.1], 0.0, [0.05, 0.1])
    rep = bd.compute_bound(([0, 0], [0, 0]), ch, 0.0, 1.0, 0.5, 10, 2)
    assert (rep.d_tilde, rep.lambda_tilde) == (0.4, 0.1)
    assert rep.drift_term == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["l1", "f_js", "c_div", "mmd"]))
def test_total_is_sum_of_terms(seed, kind):
    inst = bd.random_instance(seed)
    ch = bd.chain_divergences(inst, kind)
    src, tgt = bd.exact_errors(inst, inst.H[0])
    rep = bd.compute_bound((src, tgt), ch, 0.07, 1.0, 0.1, 50, inst.N)
    mean_err = (src.sum() + tgt[:inst.N].sum()) / (2 * inst.N)
    drift = (inst.N + 2) / 2 * (rep.d_tilde + rep.lambda_tilde)
    conc = (1 / inst.N) * math.sqrt(math.log(10) / 100)
    assert rep.total == pytest.approx(mean_err + drift + 0.07 + conc, abs=1e-12)
    assert abs(rep.total - sum(rep.terms.values())) <= 1e-12
    assert all(v >= 0 for v in rep.terms.values())


def test_delta_only_moves_concentration():
    inst = bd.random_instance(3)
    ch = bd.chain_divergences(inst)
    errs = bd.exact_errors(inst, inst.H[0])
    a = bd.compute_bound(errs, ch, 0.0, 1.0, 0.1, 20, inst.N)
    b = bd.compute_bound(errs, ch, 0.0, 1.0, 0.05, 20, inst.N)
    assert b.concentration > a.concentration
    assert (a.mean_empirical_error, a.drift_term) == (b.mean_empirical_error, b.drift_term)


def test_bound_flags_and_validation():
    ch = bd.ChainDivergences("f_js", "corollary", [], 0.1, [0.1], [], 0.0, [0.0])
    rep = bd.compute_bound(([0.1], [0.1]), ch, None, delta=0.5, m_tilde=5)
    assert "reported without complexity term" in rep.flags
    assert any("JS" in f for f in rep.flags)
    with pytest.raises(ConfigError):
        bd.compute_bound(([0.1], [0.1]), ch, 0.0, delta=1.0, m_tilde=5)
    with pytest.raises(ConfigError):
        bd.compute_bound(([0.1], [0.1]), ch, 0.0, m_tilde=0)


def test_rademacher_zero_loss_class():
    x = np.array([0, 1, 2, 1])
    assert bd.rademacher_mc([[0, 0, 0]], (x, np.zeros(4)), 50, 0) == 0.0


def test_rademacher_single_hypothesis_direct():
    x = np.array([0, 1, 2, 2, 1])
    y = np.array([1, 1, 0, 1, 0])
    h = np.array([0, 1, 1])
    est = bd.rademacher_mc([h], (x, y), 200, 9)
    loss = (h[x] != y).astype(float)
    sigma = np.random.default_rng(9).choice(np.array([-1.0, 1.0]), size=(200, 5))
    assert est == pytest.approx(np.mean((2 / 5) * sigma @ loss), abs=1e-15)


def test_rademacher_monotone_in_h():
    rng = np.random.default_rng(0)
    x, y = rng.integers(0, 4, 20), rng.integers(0, 2, 20)
    H = rng.integers(0, 2, (6, 4))
    vals = [bd.rademacher_mc(H[:k], (x, y), 300, 1) for k in range(1, 7)]
    assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ConfigError):
        bd.rademacher_mc(np.zeros((0, 4)), (x, y), 10, 0)


def test_rademacher_spread_shrinks():
    rng = np.random.default_rng(2)
    x, y = rng.integers(0, 6, 50), rng.integers(0, 2, 50)
    H = rng.integers(0, 2, (32, 6))
    ests = [bd.rademacher_mc(H, (x, y), 1000, s) for s in range(10)]
    assert max(ests) - min(ests) < 0.05


def test_collapse_when_all_tasks_identical():
    inst = uniform_instance(2, 3, [[0, 1, 1]] * 2, [[0, 1, 1]] * 3, [[0, 0, 0], [0, 1, 0]])
    chk = bd.verify_chain_inequality(inst)
    assert np.allclose(chk.slack, 0.0) and chk.all_hold


def test_maximal_flip_hand_slack():
    # sources labeled 0, targets labeled 1: lambda on the cross link is 1, d = 0
    inst = uniform_instance(1, 2, [[0, 0]], [[1, 1], [1, 1]], [[0, 0], [1, 1]])
    chk = bd.verify_chain_inequality(inst)
    # rhs = 0.5 + 1.5 * 1 for both; lhs = 1 for h = 0, 0 for h = 1
    assert np.allclose(chk.rhs, [2.0, 2.0])
    assert np.allclose(chk.slack, [1.0, 2.0])


def counterexample():
    """Each link flips one of four equally likely symbols."""
    return uniform_instance(2, 4, [[1, 0, 0, 0], [0, 0, 0, 0]],
                            [[1, 1, 0, 0], [1, 1, 1, 0], [1, 1, 1, 1]], [[0, 0, 0, 0]])


def test_stated_coefficient_can_be_exceeded():
    # a monotone label drift accumulates faster than (N+2)/2 links' worth
    stated = bd.verify_chain_inequality(counterexample(), "stated")
    assert stated.lhs[0] == pytest.approx(1.0)
    assert stated.rhs[0] == pytest.approx(0.875)
    assert not stated.all_hold


def test_corrected_coefficient_covers_counterexample():
    corrected = bd.verify_chain_inequality(counterexample(), "corrected")
    assert corrected.rhs[0] == pytest.approx(1.0) and corrected.all_hold


def test_corrected_coefficient_on_drifting_instances():
    rep = bd.oracle_sweep(200, seed=11, coefficient="corrected", generator="drift")
    assert rep["held"] == 200


def test_instance_validation():
    with pytest.raises(DataError):
        bd.DiscreteInstance([[0.5, 0.6]], [[0, 1]], [[0.5, 0.5]] * 2, [[0, 1]] * 2, [[0, 1]])
    with pytest.raises(DataError):
        bd.DiscreteInstance([[0.5, 0.5]], [[0, 2]], [[0.5, 0.5]] * 2, [[0, 1]] * 2, [[0, 1]])
    inst = bd.random_instance(5)
    again = bd.DiscreteInstance.from_dict(inst.to_dict())
    assert np.array_equal(again.H, inst.H)
