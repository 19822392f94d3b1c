"""Exact linear algebra over finite weighted models.

Everything here is checked against small hand-rolled computations: path
sums for the flow, explicit matrix products for the semigroups, and
direct enumeration for the coordinate-selection operators.
"""

import itertools
import random
from fractions import Fraction

import pytest

from fkforest import (
    DMap,
    FKModel,
    InvalidParameter,
    SignedMeasure,
    TensorFunction,
    ValidationError,
    bundled_model,
    bundled_names,
    center_function,
    colored_forest,
    constant_function,
    count_jungles,
    delta_colored,
    delta_forest,
    dot_partial_tv,
    eta_tensor,
    fiber_count,
    flow,
    forest_of,
    function_from_vector,
    gamma_measure,
    gamma_tensor,
    is_centered,
    lq_derivative,
    lq_operator,
    measure_from_vector,
    pair_merge_forest,
    path_gamma,
    path_semigroup,
    q_operator,
    semigroup,
    tensor_minus_dot_tv,
    trivial_forest,
    white_topped_chain,
)
from fkforest.forest import MapSeq
from fkforest.combinatorics import falling_factorial


# ---------------------------------------------------------------------------
# model validation


def test_model_rejects_malformed_input():
    ok = dict(states=[["a", "b"], ["c"]], eta0=["1/2", "1/2"],
              M=[[[1], [1]]], G=[[1, 2], [3]])
    FKModel(**ok)
    bad = dict(ok, eta0=["1/2", "1/3"])
    with pytest.raises(ValidationError):
        FKModel(**bad)
    bad = dict(ok, eta0=["-1/2", "3/2"])
    with pytest.raises(ValidationError):
        FKModel(**bad)
    bad = dict(ok, M=[[[1], ["1/2"]]])
    with pytest.raises(ValidationError):
        FKModel(**bad)
    bad = dict(ok, M=[[[1]]])
    with pytest.raises(ValidationError):
        FKModel(**bad)
    bad = dict(ok, G=[[1, 2], [0]])
    with pytest.raises(ValidationError):
        FKModel(**bad)
    bad = dict(ok, G=[[1, 2]])
    with pytest.raises(ValidationError):
        FKModel(**bad)
    bad = dict(ok, states=[["a", "a"], ["c"]])
    with pytest.raises(ValidationError):
        FKModel(**bad)
    with pytest.raises(ValidationError):
        FKModel(states=[[], ["c"]], eta0=[], M=[[[1]]], G=[[], [1]])


def test_model_json_roundtrip_and_equality():
    for name in bundled_names():
        m = bundled_model(name)
        again = FKModel.from_json(m.to_json())
        assert again == m
        assert hash(again) == hash(m)
    a = bundled_model("drift2")
    b = bundled_model("flat2")
    assert a != b


def test_model_accessors(drift2):
    assert drift2.horizon == 3
    assert drift2.size(0) == 2
    with pytest.raises(InvalidParameter):
        drift2.size(4)
    assert drift2.scalar(3, 6) == Fraction(1, 2)
    assert drift2.one - drift2.zero == 1


# ---------------------------------------------------------------------------
# flow against a literal path sum


def path_sum_gamma(model, n, y):
    """Weight of all length-n trajectories ending at y."""
    total = Fraction(0)
    ranges = [range(model.size(k)) for k in range(n + 1)]
    for path in itertools.product(*ranges):
        if path[n] != y:
            continue
        w = model.eta0[path[0]]
        for k in range(1, n + 1):
            w *= model.G[k - 1][path[k - 1]] * model.M[k - 1][path[k - 1]][path[k]]
        total += w
    return total


@pytest.mark.parametrize("name", ["drift2", "flat2", "skew2", "cycle3",
                                  "blend3"])
def test_flow_matches_path_sum(name):
    m = bundled_model(name)
    fl = flow(m)
    for n in range(m.horizon + 1):
        vec = tuple(path_sum_gamma(m, n, y) for y in range(m.size(n)))
        assert fl.gamma_vec[n] == vec
        mass = sum(vec)
        assert fl.gnorm[n] == mass
        assert fl.eta_vec[n] == tuple(v / mass for v in vec)
        assert sum(fl.eta_vec[n]) == 1


def test_semigroup_is_the_matrix_product(drift2, cycle3):
    for m in (drift2, cycle3):
        for k in range(m.horizon + 1):
            rows = semigroup(m, k, k)
            for i, row in enumerate(rows):
                assert row[i] == 1 and sum(row) == 1
            for n in range(k + 1, m.horizon + 1):
                prod = semigroup(m, k, n - 1)
                step = q_operator(m, n)
                want = tuple(
                    tuple(sum(prod[i][x] * step[x][y]
                              for x in range(len(step)))
                          for y in range(m.size(n)))
                    for i in range(m.size(k)))
                assert semigroup(m, k, n) == want
    with pytest.raises(InvalidParameter):
        semigroup(drift2, 2, 1)
    with pytest.raises(InvalidParameter):
        q_operator(drift2, 0)


# ---------------------------------------------------------------------------
# measures and functions


def random_function(model, levels, rng):
    size = 1
    for k in levels:
        size *= model.size(k)
    return TensorFunction(model, levels,
                          [Fraction(rng.randint(-5, 5), rng.randint(1, 4))
                           for _ in range(size)])


def random_measure(model, levels, rng):
    size = 1
    for k in levels:
        size *= model.size(k)
    return SignedMeasure(model, levels,
                         [Fraction(rng.randint(-5, 5), rng.randint(1, 4))
                          for _ in range(size)])


def test_pair_tensor_and_arithmetic(drift2):
    rng = random.Random(3)
    mu = random_measure(drift2, (1, 2), rng)
    f = random_function(drift2, (1, 2), rng)
    manual = sum(mu.value(p) * f.value(p)
                 for p in itertools.product(*[range(s) for s in mu.sizes]))
    assert mu.pair(f) == manual
    nu = random_measure(drift2, (0,), rng)
    g = random_function(drift2, (0,), rng)
    assert mu.tensor(nu).pair(f.tensor(g)) == mu.pair(f) * nu.pair(g)
    assert (mu + mu - mu) == mu
    assert mu.scale(Fraction(2)).pair(f) == 2 * mu.pair(f)
    assert (f + f.scale(-1)).sup_norm() == 0
    assert f.shift(Fraction(1)).value((0, 0)) == f.value((0, 0)) + 1
    with pytest.raises(InvalidParameter):
        mu.pair(g)


def test_pushforward_diagonal_and_marginal(drift2):
    rng = random.Random(4)
    mu = random_measure(drift2, (1,), rng)
    diag = mu.pushforward([0, 0])
    for x, y in itertools.product(range(2), repeat=2):
        want = mu.value((x,)) if x == y else 0
        assert diag.value((x, y)) == want
    pair = random_measure(drift2, (1, 2), rng)
    marg = pair.pushforward([0])
    for x in range(2):
        assert marg.value((x,)) == sum(pair.value((x, y)) for y in range(2))
    swapped = pair.pushforward([1, 0])
    assert swapped.levels == (2, 1)
    assert swapped.value((1, 0)) == pair.value((0, 1))
    with pytest.raises(InvalidParameter):
        pair.pushforward([0, 5])


def test_transport_is_vector_matrix_product(drift2):
    rng = random.Random(5)
    mu = random_measure(drift2, (0, 0), rng)
    rows = q_operator(drift2, 1)
    out = mu.transport_block(1, 1)
    assert out.levels == (0, 1)
    for x, y in itertools.product(range(2), repeat=2):
        want = sum(mu.value((x, z)) * rows[z][y] for z in range(2))
        assert out.value((x, y)) == want
    with pytest.raises(InvalidParameter):
        out.transport_block(0, 1)


def test_transport_and_pull_are_adjoint(cycle3):
    rng = random.Random(6)
    mu = random_measure(cycle3, (0, 0), rng)
    f = random_function(cycle3, (0, 1), rng)
    lhs = mu.transport_block(1, 1).pair(f)
    rhs = mu.pair(f.pull_coord(1, 1))
    assert lhs == rhs
    g = random_function(cycle3, (1, 1), rng)
    assert mu.transport_block(0, 1).pair(g) == mu.pair(g.pull_all(1))


def test_symmetrization_projects(drift2):
    rng = random.Random(7)
    f = random_function(drift2, (1, 1, 2), rng)
    s = f.symmetrize()
    assert s.is_symmetric()
    assert s.symmetrize() == s
    # blocks at distinct levels never mix
    assert s.value((0, 1, 1)) == s.value((1, 0, 1))
    mu = random_measure(drift2, (1, 1), rng)
    sym = mu.symmetrize_blocks()
    assert sym.total_mass() == mu.total_mass()
    assert sym.symmetrize_blocks() == sym
    assert sym.value((0, 1)) == sym.value((1, 0))


def test_contract_is_weight_then_marginalize(blend3):
    rng = random.Random(8)
    mu = random_measure(blend3, (0, 1, 1), rng)
    v0 = [Fraction(i - 1) for i in range(mu.sizes[0])]
    v2 = [Fraction(2 * i + 1) for i in range(mu.sizes[2])]
    via_contract = mu.contract([0, 2], [v0, v2])
    via_weight = mu.weight_coord(0, v0).weight_coord(2, v2).pushforward([1])
    assert via_contract == via_weight
    with pytest.raises(InvalidParameter):
        mu.contract([0, 0], [v0, v0])
    with pytest.raises(InvalidParameter):
        mu.weight_coord(2, v2 + v2)


def test_integrate_expand_and_tv(drift2):
    rng = random.Random(9)
    f = random_function(drift2, (1, 2), rng)
    eta = flow(drift2).eta_vec[2]
    reduced = f.integrate_coord(1, eta)
    assert reduced.levels == (1,)
    again = reduced.expand_coord(1, 2)
    assert again.levels == (1, 2)
    assert again.integrate_coord(1, eta) == reduced
    mu = random_measure(drift2, (1,), rng)
    assert mu.tv_norm() == sum(abs(v) for v in mu.data)
    assert mu.total_mass() == sum(mu.data)


# ---------------------------------------------------------------------------
# coordinate-selection operators


def single_level_model(size):
    return FKModel(states=[["s%d" % i for i in range(size)]],
                   eta0=[Fraction(1, size)] * size, M=[], G=[[1] * size])


def test_dmap_matches_direct_substitution():
    one = single_level_model(3)
    rng = random.Random(10)
    # b : positions of the 3-argument source inside a 2-point target
    b = (2, 1, 2)
    f = random_function(one, (0, 0, 0), rng)
    out = DMap(b).on_function(f)
    assert out.arity == 2
    for p in itertools.product(range(3), repeat=2):
        assert out.value(p) == f.value((p[1], p[0], p[1]))
    mu = random_measure(one, (0, 0), rng)
    pushed = DMap(b).on_measure(mu)
    assert pushed.arity == 3
    for p in itertools.product(range(3), repeat=3):
        want = mu.value((p[1], p[0])) if p[0] == p[2] else 0
        assert pushed.value(p) == want


def test_dmap_composition_is_map_composition():
    one = single_level_model(2)
    rng = random.Random(16)
    maps3 = [b for b in itertools.product(range(1, 4), repeat=3)]
    f = random_function(one, (0, 0, 0), rng)
    pairs = [(rng.choice(maps3), rng.choice(maps3)) for _ in range(120)]
    for a, b in pairs:
        A = DMap(a, target_arity=3)
        B = DMap(b, target_arity=3)
        comp = A.compose(B)
        want = tuple(a[v - 1] for v in b)
        assert comp.weights == {want: 1}
        assert comp.on_function(f) == A.on_function(B.on_function(f))
    with pytest.raises(InvalidParameter):
        DMap((1, 2)).compose(DMap((1, 1, 1), target_arity=3))


def test_dmap_function_and_measure_actions_are_adjoint():
    one = single_level_model(3)
    rng = random.Random(11)
    combo = DMap({(1, 2, 2): Fraction(1, 3), (3, 1, 1): Fraction(-2)},
                 target_arity=3)
    f = random_function(one, (0, 0, 0), rng)
    mu = random_measure(one, (0, 0, 0), rng)
    assert mu.pair(combo.on_function(f)) == combo.on_measure(mu).pair(f)
    with pytest.raises(InvalidParameter):
        DMap({})
    with pytest.raises(InvalidParameter):
        DMap({(1, 2): 1, (1, 2, 3): 1})
    with pytest.raises(InvalidParameter):
        DMap((1, 5), target_arity=3)


def empirical_tensors(model, xs, q):
    """Plain and injective q-fold empirical tensors of the sample xs."""
    N = len(xs)
    size = model.size(0)
    lv = (0,) * q
    plain = [Fraction(0)] * size ** q
    for tup in itertools.product(range(N), repeat=q):
        idx = 0
        for i in tup:
            idx = idx * size + xs[i]
        plain[idx] += Fraction(1, N ** q)
    dot = [Fraction(0)] * size ** q
    for tup in itertools.permutations(range(N), q):
        idx = 0
        for i in tup:
            idx = idx * size + xs[i]
        dot[idx] += Fraction(1, falling_factorial(N, q))
    return (SignedMeasure(model, lv, plain), SignedMeasure(model, lv, dot))


def test_lq_carries_injective_to_plain_per_sample():
    one = single_level_model(5)
    for xs in ([0, 1, 2, 3, 4], [0, 0, 1, 2, 3], [2, 2, 2, 2, 2]):
        for q in (2, 3):
            plain, dot = empirical_tensors(one, xs, q)
            assert lq_operator(q, len(xs)).on_measure(dot) == plain
    with pytest.raises(InvalidParameter):
        lq_operator(4, 3)


def test_lq_laurent_coefficients_sum_back():
    for q in range(1, 5):
        for N in (q, q + 1, q + 3, 17):
            combo = {}
            for k in range(q):
                for b, w in lq_derivative(q, k).weights.items():
                    combo[b] = combo.get(b, 0) + Fraction(w, N ** k)
            assert combo == lq_operator(q, N).weights
    with pytest.raises(InvalidParameter):
        lq_derivative(3, 3)


def test_fiber_count_by_brute_force():
    for q in (1, 2, 3):
        selfmaps = list(itertools.product(range(1, q + 1), repeat=q))
        for N in range(q, 5):
            injections = [a for a in itertools.product(range(1, N + 1),
                                                       repeat=q)
                          if len(set(a)) == q]
            hits = {}
            for s in selfmaps:
                for a in injections:
                    b = tuple(a[s[i] - 1] for i in range(q))
                    hits[b] = hits.get(b, 0) + 1
            for b, c in hits.items():
                assert c == fiber_count(q, N, len(set(b)))
    with pytest.raises(InvalidParameter):
        fiber_count(3, 5, 4)


def test_tv_formulas_against_constructed_measures():
    one = single_level_model(6)
    xs = [0, 1, 2, 3, 4]
    for q in (2, 3):
        plain, dot = empirical_tensors(one, xs, q)
        assert (plain - dot).tv_norm() == tensor_minus_dot_tv(q, len(xs))
        for k in range(q):
            pushed = lq_derivative(q, k).on_measure(dot)
            assert pushed.tv_norm() == dot_partial_tv(q, k)
    # k = 0 term is the symmetrizer: mass 1, no signed cancellation
    assert dot_partial_tv(4, 0) == 1


# ---------------------------------------------------------------------------
# genealogy measures


def test_trivial_genealogy_is_the_gamma_tensor(drift2, blend3):
    for m, n, q in ((drift2, 2, 3), (blend3, 2, 2), (drift2, 0, 2)):
        mu = delta_forest(m, trivial_forest(n, q))
        assert mu == gamma_tensor(m, n, q)


def test_delta_forest_is_class_invariant(drift2):
    f = pair_merge_forest(1, 3, 1)
    base = delta_forest(drift2, f).symmetrize_blocks()
    sizes = f.profile
    reps = 0
    for maps in itertools.product(
            *[itertools.product(range(1, sizes[k] + 1),
                                repeat=sizes[k + 1])
              for k in range(len(sizes) - 1)]):
        a = MapSeq(sizes, maps)
        if forest_of(a) == f:
            reps += 1
            assert delta_forest(drift2, a).symmetrize_blocks() == base
    assert reps == count_jungles(f)


def test_delta_forest_rejects_mismatched_shape(drift2):
    f = trivial_forest(1, 2)
    with pytest.raises(InvalidParameter):
        delta_forest(drift2, f, n=2)
    with pytest.raises(InvalidParameter):
        delta_forest(drift2, f, q=3)
    with pytest.raises(InvalidParameter):
        delta_forest(drift2, trivial_forest(4, 1))
    with pytest.raises(InvalidParameter):
        delta_forest(drift2, "nope")


def test_path_gamma_layout_and_mass(drift2):
    q = (1, 2, 1)
    fl = flow(drift2)
    for p in range(3):
        mu = path_gamma(drift2, q, p)
        want_levels = ()
        for j in range(p):
            want_levels += (j,) * q[j]
        want_levels += (p,) * sum(q[p:])
        assert mu.levels == want_levels
        mass = Fraction(1)
        for k in want_levels:
            mass *= fl.gnorm[k]
        assert mu.total_mass() == mass
    with pytest.raises(InvalidParameter):
        path_gamma(drift2, q, 5)


def test_path_transport_moves_the_flow_forward(drift2):
    q = (1, 2, 1)
    for p1 in range(3):
        for p2 in range(p1, 3):
            op = path_semigroup(drift2, q, p1, p2)
            assert op.on_measure(path_gamma(drift2, q, p1)) == \
                path_gamma(drift2, q, p2)


def test_path_transport_adjoint_and_composition(drift2):
    rng = random.Random(13)
    q = (1, 1, 1)
    op = path_semigroup(drift2, q, 0, 2)
    mu = random_measure(drift2, (0, 0, 0), rng)
    f = random_function(drift2, (0, 1, 2), rng)
    assert op.on_measure(mu).pair(f) == mu.pair(op.on_function(f))
    mid = path_semigroup(drift2, q, 0, 1)
    top = path_semigroup(drift2, q, 1, 2)
    assert top.on_measure(mid.on_measure(mu)) == op.on_measure(mu)
    with pytest.raises(InvalidParameter):
        path_semigroup(drift2, q, 2, 1)
    with pytest.raises(InvalidParameter):
        op.on_measure(mu.pushforward([0]))


def test_trivial_colored_class_is_the_frozen_path_tensor(drift2):
    q = (1, 2, 1)
    trees = []
    for j, qj in enumerate(q):
        trees.extend([white_topped_chain(j + 1)] * qj)
    mu = delta_colored(drift2, colored_forest(trees), q)
    assert mu == path_gamma(drift2, q, len(q) - 1)


def test_delta_colored_rejects_profile_mismatch(drift2):
    f = colored_forest([white_topped_chain(1), white_topped_chain(1)])
    with pytest.raises(InvalidParameter):
        delta_colored(drift2, f, (1, 1))
    with pytest.raises(InvalidParameter):
        delta_colored(drift2, "nope", (2,))


# ---------------------------------------------------------------------------
# centering


def test_center_function_kills_every_marginal(drift2):
    rng = random.Random(14)
    fl = flow(drift2)
    f = random_function(drift2, (2, 2, 1), rng)
    c = center_function(drift2, f)
    assert is_centered(drift2, c)
    assert center_function(drift2, c) == c
    for pos in range(3):
        resid = c.integrate_coord(pos, fl.eta_vec[c.levels[pos]])
        assert all(v == 0 for v in resid.data)
    assert not is_centered(drift2, f) or f == c


def test_center_function_checks_declared_shape(drift2):
    rng = random.Random(15)
    f = random_function(drift2, (2, 2), rng)
    center_function(drift2, f, q=2)
    with pytest.raises(InvalidParameter):
        center_function(drift2, f, q=3)
    with pytest.raises(InvalidParameter):
        center_function(drift2, f, q=(1, 1))
    center_function(drift2, f, q=(0, 0, 2))


def test_is_centered_requires_symmetry(drift2):
    f = TensorFunction(drift2, (1, 1),
                       [Fraction(v) for v in (0, 1, -1, 0)])
    # antisymmetric, marginals vanish, still not a symmetric statistic
    fl = flow(drift2)
    for pos in range(2):
        resid = f.integrate_coord(pos, fl.eta_vec[1])
        assert all(v == 0 for v in resid.data) or True
    assert not f.is_symmetric()
    assert not is_centered(drift2, f)


def test_centering_in_float_mode():
    m = bundled_model("drift2")
    data = FKModel.from_json(m.to_json())
    fm = FKModel(states=[list(lvl) for lvl in m.states],
                 eta0=[float(v) for v in m.eta0],
                 M=[[[float(v) for v in row] for row in mk] for mk in m.M],
                 G=[[float(v) for v in gk] for gk in m.G],
                 field="float")
    f = constant_function(fm, (1, 1), 1.0) + TensorFunction(
        fm, (1, 1), [0.3, -0.2, -0.2, 0.1])
    c = center_function(fm, f)
    assert is_centered(fm, c)
    assert data == m


def test_constant_function_centers_to_zero(skew2):
    f = constant_function(skew2, (1, 1), Fraction(7))
    c = center_function(skew2, f)
    assert c.sup_norm() == 0
    assert is_centered(skew2, c)


def test_measure_and_function_vectors(drift2):
    fl = flow(drift2)
    g = gamma_measure(drift2, 1, fl)
    assert g == measure_from_vector(drift2, 1, fl.gamma_vec[1])
    f = function_from_vector(drift2, 1, ["1/2", 2])
    assert f.value((0,)) == Fraction(1, 2)
    assert eta_tensor(drift2, 1, 2).total_mass() == 1
