"""Configuration dynamic program and simulator.

The cross-check here is a second, independent oracle that tracks the
ordered particle vectors directly from the sampling description, with no
occupation-count shortcut.  At N = 2 on two- and three-state models the
labeled path space is small enough to enumerate outright.
"""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from fkforest import (
    CapExceeded,
    Caps,
    FKModel,
    InvalidParameter,
    bundled_model,
    config_count,
    estimators,
    exact_config_distribution,
    exact_EN_oracle,
    exact_eta_tensor_oracle,
    exact_PN_oracle,
    exact_QN_dot_oracle,
    exact_QN_oracle,
    flow,
    function_from_vector,
    gamma_measure,
    mc_gamma_mean,
    simulate,
)
from fkforest.combinatorics import falling_factorial
from fkforest.fk_core import TensorFunction
from fkforest.particle import (
    block_tensor_moment,
    config_paths,
    dot_moment,
    tensor_moment,
    trajectory_config,
)


# ---------------------------------------------------------------------------
# labeled-vector oracle


def labeled_paths(model, N, horizon):
    """Joint law of the ordered particle vectors, straight from the
    sampling rules: iid start, then independent draws from the empirical
    selection-mutation mixture."""
    out = {}
    for x0 in itertools.product(range(model.size(0)), repeat=N):
        w = Fraction(1)
        for i in x0:
            w *= model.eta0[i]
        if w:
            out[(x0,)] = w
    for k in range(1, horizon + 1):
        gk = model.G[k - 1]
        mk = model.M[k - 1]
        nxt = {}
        for path, w in out.items():
            x = path[-1]
            tot = sum(gk[i] for i in x)
            mix = [sum(gk[i] * mk[i][y] for i in x) / tot
                   for y in range(model.size(k))]
            for x2 in itertools.product(range(model.size(k)), repeat=N):
                w2 = w
                for y in x2:
                    w2 *= mix[y]
                if w2:
                    key = path + (x2,)
                    nxt[key] = nxt.get(key, Fraction(0)) + w2
        out = nxt
    return out


def labeled_mass(model, path, upto):
    """Product of empirical potential means strictly before level upto."""
    N = len(path[0])
    m = Fraction(1)
    for k in range(upto):
        m *= Fraction(sum(model.G[k][i] for i in path[k]), N)
    return m


def labeled_block_moment(path, F):
    """Average of F over all coordinate assignments, one level each."""
    N = len(path[0])
    total = Fraction(0)
    for picks in itertools.product(range(N), repeat=F.arity):
        point = tuple(path[F.levels[pos]][i] for pos, i in enumerate(picks))
        total += F.value(point)
    return total / Fraction(N ** F.arity)


def labeled_dot_moment(x, F):
    N = len(x)
    q = F.arity
    total = Fraction(0)
    for picks in itertools.permutations(range(N), q):
        total += F.value(tuple(x[i] for i in picks))
    return total / Fraction(falling_factorial(N, q))


@pytest.mark.parametrize("name,n", [("drift2", 2), ("cycle3", 1),
                                    ("skew2", 2)])
def test_config_distribution_matches_labeled_law(name, n):
    m = bundled_model(name)
    N = 2
    law = labeled_paths(m, N, n)
    dp = exact_config_distribution(m, N, n)
    for k in range(n + 1):
        proj = {}
        for path, w in law.items():
            cfg = tuple(sum(1 for i in path[k] if i == y)
                        for y in range(m.size(k)))
            proj[cfg] = proj.get(cfg, Fraction(0)) + w
        assert proj == dp[k]
        assert sum(dp[k].values()) == 1
        assert len(dp[k]) <= config_count(m.size(k), N)


@pytest.mark.parametrize("name,n,q", [("drift2", 1, 2), ("drift2", 2, 2),
                                      ("cycle3", 1, 2), ("skew2", 1, 1)])
def test_scalar_oracles_match_labeled_law(name, n, q):
    m = bundled_model(name)
    N = 2
    law = labeled_paths(m, N, n)
    size = m.size(n)
    data = [Fraction(3 * i - 2, i + 1) for i in range(size ** q)]
    F = TensorFunction(m, (n,) * q, data)

    want_Q = sum(w * labeled_mass(m, path, n) ** q
                 * labeled_block_moment(path, F)
                 for path, w in law.items())
    assert exact_QN_oracle(m, N, q, F, n=n) == want_Q

    want_eta = sum(w * labeled_block_moment(path, F)
                   for path, w in law.items())
    assert exact_eta_tensor_oracle(m, N, n, q, F) == want_eta

    if q <= N:
        want_P = sum(w * labeled_dot_moment(path[n], F)
                     for path, w in law.items())
        assert exact_PN_oracle(m, N, n, q, F) == want_P
        want_dot = sum(w * labeled_mass(m, path, n) ** q
                       * labeled_dot_moment(path[n], F)
                       for path, w in law.items())
        assert exact_QN_dot_oracle(m, N, n, q, F) == want_dot


def test_mass_defect_moments_match_labeled_law(drift2):
    N, n = 2, 2
    law = labeled_paths(drift2, N, n)
    fl = flow(drift2)
    gG = sum(g * v for g, v in zip(fl.gamma_vec[n], drift2.G[n]))
    for q in range(4):
        want = Fraction(0)
        for path, w in law.items():
            emp = Fraction(sum(drift2.G[n][i] for i in path[n]), N)
            v = 1 - labeled_mass(drift2, path, n) * emp / gG
            want += w * v ** q
        assert exact_EN_oracle(drift2, N, n, q) == want
    assert exact_EN_oracle(drift2, N, n, 0) == 1
    assert exact_EN_oracle(drift2, N, n, 1) == 0


def test_path_block_oracle_matches_labeled_law(drift2):
    N = 2
    qvec = (1, 1)
    law = labeled_paths(drift2, N, 1)
    data = [Fraction(i + 1, 2) for i in range(4)]
    F = TensorFunction(drift2, (0, 1), data)
    want = Fraction(0)
    for path, w in law.items():
        mass = Fraction(sum(drift2.G[0][i] for i in path[0]), N)
        want += w * mass * labeled_block_moment(path, F)
    assert exact_QN_oracle(drift2, N, qvec, F) == want


def test_level_zero_distribution_is_multinomial(cycle3):
    for N in (1, 2, 3):
        dist = exact_config_distribution(cycle3, N, 0)[0]
        for cfg, w in dist.items():
            coeff = math.factorial(N)
            for c in cfg:
                coeff //= math.factorial(c)
            want = Fraction(coeff)
            for c, p in zip(cfg, cycle3.eta0):
                want *= p ** c
            assert w == want


def test_unnormalized_single_estimator_is_unbiased(drift2, cycle3):
    for m in (drift2, cycle3):
        for n in range(3):
            f = function_from_vector(m, n, list(range(1, m.size(n) + 1)))
            truth = gamma_measure(m, n).pair(f)
            for N in (1, 2, 3):
                assert exact_QN_oracle(m, N, 1, f, n=n) == truth


def test_normalized_estimator_is_biased_for_skew2(skew2):
    fl = flow(skew2)
    f = function_from_vector(skew2, 1, [1, 0])
    gap = exact_eta_tensor_oracle(skew2, 2, 1, 1, f) - fl.eta_vec[1][0]
    assert gap < 0


# ---------------------------------------------------------------------------
# per-configuration values


def test_tensor_moment_factorizes_on_product_functions(drift2):
    f = function_from_vector(drift2, 1, ["1/2", 3])
    q = 3
    F = f
    for _ in range(q - 1):
        F = F.tensor(f)
    for cfg in ((0, 4), (2, 2), (3, 1)):
        N = sum(cfg)
        assert tensor_moment(cfg, F, N) == tensor_moment(cfg, f, N) ** q


def test_dot_moment_matches_permutation_sum(drift2):
    data = [Fraction(2 - i) for i in range(4)]
    F = TensorFunction(drift2, (1, 1), data)
    for cfg in ((1, 3), (2, 2), (0, 2)):
        N = sum(cfg)
        atoms = [x for x, c in enumerate(cfg) for _ in range(c)]
        want = sum(F.value((atoms[i], atoms[j]))
                   for i in range(N) for j in range(N) if i != j)
        assert dot_moment(cfg, F, N) == Fraction(want, N * (N - 1))
    with pytest.raises(InvalidParameter):
        dot_moment((1, 0), F, 1)


def test_block_moment_is_a_product_across_levels(drift2):
    f0 = function_from_vector(drift2, 0, [1, 2])
    f1 = function_from_vector(drift2, 1, [3, "1/5"])
    F = f0.tensor(f1)
    path = ((2, 0), (1, 1))
    N = 2
    assert block_tensor_moment(path, F, N) == \
        tensor_moment(path[0], f0, N) * tensor_moment(path[1], f1, N)


# ---------------------------------------------------------------------------
# caps and argument checking


def test_oracle_caps_report_predicted_sizes(blend3):
    small = Caps(configs=5)
    with pytest.raises(CapExceeded) as err:
        exact_config_distribution(blend3, 4, 1, caps=small)
    assert err.value.predicted == config_count(3, 4)
    with pytest.raises(CapExceeded) as err:
        list(config_paths(blend3, 3, 2, caps=small))
    assert err.value.predicted > 5


def test_oracle_argument_validation(drift2):
    f = function_from_vector(drift2, 1, [1, 0])
    with pytest.raises(InvalidParameter):
        exact_config_distribution(drift2, 0, 1)
    with pytest.raises(InvalidParameter):
        exact_config_distribution(drift2, 2, 9)
    with pytest.raises(InvalidParameter):
        exact_PN_oracle(drift2, 1, 1, 2, f.tensor(f))
    with pytest.raises(InvalidParameter):
        exact_eta_tensor_oracle(drift2, 2, 2, 1, f)
    with pytest.raises(InvalidParameter):
        exact_QN_oracle(drift2, 2, 2, f.tensor(f), n=2)
    with pytest.raises(InvalidParameter):
        exact_QN_oracle(drift2, 2, 1, f.tensor(function_from_vector(
            drift2, 2, [1, 1])))


# ---------------------------------------------------------------------------
# simulator


def test_simulation_is_seed_and_replica_keyed(drift2):
    a = simulate(drift2, 30, seed=5, replica=0)
    b = simulate(drift2, 30, seed=5, replica=0)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    c = simulate(drift2, 30, seed=5, replica=1)
    assert any(not np.array_equal(x, y) for x, y in zip(a, c))
    d = simulate(drift2, 30, seed=6, replica=0)
    assert any(not np.array_equal(x, y) for x, y in zip(a, d))
    short = simulate(drift2, 30, seed=5, horizon=1)
    assert len(short) == 2
    assert np.array_equal(short[0], a[0])


def test_single_state_chain_is_deterministic():
    m = FKModel(states=[["a"], ["b"]], eta0=[1], M=[[[1]]], G=[[2], [1]])
    traj = simulate(m, 10, seed=0)
    assert all((lvl == 0).all() for lvl in traj)
    est = estimators(m, traj, 1, f=function_from_vector(m, 1, [5]))
    assert est["gamma_norm"] == 2
    assert est["gamma"] == 10


def test_estimators_report_exact_rationals(drift2):
    traj = simulate(drift2, 7, seed=9, horizon=2)
    f = function_from_vector(drift2, 2, [1, 0])
    F = f.tensor(f)
    est = estimators(drift2, traj, 2, f=f, F=F)
    cfg = trajectory_config(traj, drift2, 2)
    assert est["eta"] == Fraction(cfg[0], 7)
    assert est["gamma"] == est["gamma_norm"] * est["eta"]
    assert est["eta_tensor"] == est["eta"] ** 2
    assert est["gamma_tensor"] == est["gamma_norm"] ** 2 * est["eta_tensor"]
    assert est["eta_dot"] == dot_moment(cfg, F, 7)
    big = estimators(drift2, traj, 2, F=F, q=2)
    assert "eta" not in big
    with pytest.raises(InvalidParameter):
        estimators(drift2, traj, 2, f=function_from_vector(drift2, 1, [1, 0]))


def test_mc_mean_is_exact_when_potentials_are_flat(flat2):
    f = function_from_vector(flat2, 2, [1, 1])
    mean, se = mc_gamma_mean(flat2, 20, seed=3, replicas=50, n=2, f=f)
    assert mean == 1.0
    assert se == 0.0


def test_mc_mean_tracks_the_flow(drift2):
    f = function_from_vector(drift2, 1, [1, 1])
    truth = float(flow(drift2).gnorm[1])
    mean, se = mc_gamma_mean(drift2, 50, seed=11, replicas=400, n=1, f=f)
    assert se > 0
    assert abs(mean - truth) < 6 * se
