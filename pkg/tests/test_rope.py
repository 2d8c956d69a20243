import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from wiregraph.graph import Graph, laplacian, path_graph
from wiregraph.rng import Rng
from wiregraph.rope import (
    InitScheme,
    WireFrequencies,
    angles,
    apply_rope_block,
    apply_rope_fast,
    init_frequencies,
    relative_angle_property,
    swap_pairs,
    theorem2_mc_check,
)
from wiregraph.spectral import effective_resistance

finite = st.floats(-1e3, 1e3, allow_nan=False)


def loop_angles(omega, r):
    return np.array([sum(omega[n, c] * r[c] for c in range(len(r))) for n in range(len(omega))])


def test_angles_examples():
    f = WireFrequencies(np.eye(3))
    assert np.array_equal(angles(f, np.zeros(3)), np.zeros(3))
    assert np.array_equal(angles(f, [1.0, 0, 0]), [1.0, 0, 0])
    rng = np.random.default_rng(0)
    om, r = rng.normal(size=(5, 4)), rng.normal(size=4)
    assert np.allclose(angles(WireFrequencies(om), r), loop_angles(om, r), atol=1e-14, rtol=0)
    with pytest.raises(ValueError):
        angles(f, np.zeros(2))


def test_frequencies_validation():
    with pytest.raises(ValueError):
        WireFrequencies(np.ones(3))
    with pytest.raises(ValueError):
        WireFrequencies(np.array([[np.inf]]))
    assert WireFrequencies(np.zeros((4, 2))).d == 8


def test_block_examples():
    z = np.arange(6.0)
    assert np.array_equal(apply_rope_block(z, np.zeros(3)), z)
    assert np.allclose(apply_rope_block(np.array([1.0, 0]), np.array([np.pi / 2])), [0, 1], atol=1e-15)
    with pytest.raises(ValueError):
        apply_rope_block(np.ones(3), np.ones(1))


def test_fast_examples():
    out = apply_rope_fast(np.array([1.0, 0, 0, 1]), np.array([np.pi, np.pi / 2]))
    assert np.allclose(out, [-1, 0, -1, 0], atol=1e-15)
    z = np.random.default_rng(1).normal(size=8)
    assert np.array_equal(apply_rope_fast(z, np.zeros(4)), z)
    with pytest.raises(ValueError):
        apply_rope_fast(np.ones(5), np.ones(2))


def test_swap_pairs():
    assert swap_pairs(np.arange(6)).tolist() == [1, 0, 3, 2, 5, 4]


@pytest.mark.parametrize("d", [2, 4, 8, 32])
def test_fast_equals_block_fuzz(d):
    rng = np.random.default_rng(d)
    worst = 0.0
    for _ in range(2500):
        z = rng.normal(size=d)
        th = rng.normal(size=d // 2) * 10 ** rng.uniform(-2, 2)
        worst = max(worst, np.max(np.abs(apply_rope_fast(z, th) - apply_rope_block(z, th))))
    assert worst <= 1e-12


def test_fast_batched_matches_rows():
    rng = np.random.default_rng(3)
    Z, T = rng.normal(size=(5, 6)), rng.normal(size=(5, 3))
    out = apply_rope_fast(Z, T)
    for i in range(5):
        assert np.allclose(out[i], apply_rope_block(Z[i], T[i]), atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 16).flatmap(lambda h: st.tuples(arrays(np.float64, 2 * h, elements=finite),
                                                       arrays(np.float64, h, elements=finite),
                                                       arrays(np.float64, h, elements=finite))))
def test_norm_and_composition(args):
    z, a, b = args
    out = apply_rope_fast(z, a)
    assert abs(np.linalg.norm(out) - np.linalg.norm(z)) <= 1e-12 * max(1, np.linalg.norm(z))
    assert np.allclose(apply_rope_fast(out, b), apply_rope_fast(z, a + b), atol=1e-10 * max(1, np.abs(z).max()))


def test_relative_angle_property():
    rng = np.random.default_rng(4)
    f = WireFrequencies(rng.normal(size=(4, 3)))
    q, k = rng.normal(size=8), rng.normal(size=8)
    r_i, r_j = rng.normal(size=3), rng.normal(size=3)
    lhs, rhs = relative_angle_property(f, r_i, r_j, q, k)
    assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))
    same, _ = relative_angle_property(f, r_i, r_i, q, k)
    assert abs(same - q @ k) <= 1e-12 * (1 + abs(q @ k))
    c = rng.normal(size=3) * 5
    shifted, _ = relative_angle_property(f, r_i + c, r_j + c, q, k)
    assert abs(shifted - lhs) <= 1e-10 * (1 + abs(lhs))


# initialization

def test_init_zero_is_identity():
    f = init_frequencies(8, 3, InitScheme.ZERO)
    z = np.arange(8.0)
    assert np.array_equal(apply_rope_fast(z, angles(f, np.ones(3))), z)


def test_init_exponential_table():
    f = init_frequencies(4, 2, "exponential", base=10000, axis=0)
    assert np.allclose(f.omega[:, 0], [1.0, 10000 ** -0.5])
    assert np.all(f.omega[:, 1] == 0)
    with pytest.raises(ValueError):
        init_frequencies(4, 2, "exponential", axis=2)


def test_init_gaussian_moment():
    scale, m = 0.7, 3
    f = init_frequencies(2 * 100_000, m, "gaussian", Rng(0), scale=scale)
    row_sq = np.sum(f.omega ** 2, axis=1)
    assert abs(row_sq.mean() - scale ** 2 * m) < 5 * row_sq.std() / np.sqrt(len(row_sq))


def test_init_default_scale_and_errors():
    f = init_frequencies(2 * 50_000, 4, "gaussian", Rng(1))
    assert abs(f.omega.std() - 0.5) < 0.01
    with pytest.raises(ValueError):
        init_frequencies(5, 2)
    with pytest.raises(ValueError):
        init_frequencies(4, 2, "gaussian", scale=-1.0)


# theorem 2 machinery

def test_theorem2_trivial_cases():
    g = path_graph(3)
    q = np.array([1.0, 2, 3, 4])
    r0 = theorem2_mc_check(g, q, q, 0, 2, 0.0, 100, Rng(0))
    assert r0.mc_mean == r0.predicted == q @ q
    rs = theorem2_mc_check(g, q, q, 1, 1, 0.3, 100, Rng(0))
    assert rs.mc_mean == q @ q and rs.resistance == 0


def test_theorem2_needs_connected_graph():
    with pytest.raises(ValueError):
        theorem2_mc_check(Graph(3, [[0, 1]]), np.ones(2), np.ones(2), 0, 1, 0.1, 10, Rng(0))


def test_theorem2_path3_consistent_with_fourth_order():
    g = path_graph(3)
    assert np.isclose(effective_resistance(laplacian(g), 0, 2), 2.0)
    rng = np.random.default_rng(5)
    q = rng.normal(size=16)
    k = q + 0.1 * rng.normal(size=16)
    w = 0.05
    res = theorem2_mc_check(g, q, k, 0, 2, w, 100_000, Rng(1))
    assert res.resistance == pytest.approx(2.0)
    # the exact Gaussian expectation differs from the prediction by O(w^4)
    fourth = abs(res.exact_expectation - res.predicted)
    assert fourth <= abs(q @ k) * (w ** 2 * 2) ** 2 / 8 * 1.01
    assert abs(res.mc_mean - res.predicted) <= 4 * res.mc_stderr + fourth


def test_theorem2_mc_matches_exact_expectation():
    # closed form E[cos(x)] = exp(-var/2) for Gaussian x is an independent oracle
    g = Graph(4, [[0, 1], [1, 2], [2, 3], [0, 2]])
    q = np.random.default_rng(6).normal(size=8)
    res = theorem2_mc_check(g, q, q, 0, 3, 0.8, 200_000, Rng(2))
    assert abs(res.mc_mean - res.exact_expectation) <= 4 * res.mc_stderr
    assert abs(res.exact_expectation - res.predicted) > 10 * res.mc_stderr
