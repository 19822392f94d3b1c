"""Scratch: compute documented flow values for the bundled models.

Two independent routes must agree before any value is frozen:
  (a) the flow recursion in fk_core,
  (b) a direct sum over all state paths of eta0 * prod M * prod G.
"""
import sys
from fractions import Fraction
from itertools import product

sys.path.insert(0, "src")

from fkforest.fk_core import FKModel, flow, function_from_vector
from fkforest.particle import exact_eta_tensor_oracle

DEFS = {
    "drift2": dict(
        states=[["a", "b"]] * 4,
        eta0=["1/3", "2/3"],
        M=[[["1/2", "1/2"], ["1/4", "3/4"]],
           [["2/3", "1/3"], ["1/5", "4/5"]],
           [["3/7", "4/7"], ["1/2", "1/2"]]],
        G=[["2", "1/2"], ["1", "3"], ["1/2", "5/2"], ["1", "2"]],
    ),
    "flat2": dict(
        states=[["a", "b"]] * 3,
        eta0=["1/2", "1/2"],
        M=[[["1/3", "2/3"], ["3/5", "2/5"]],
           [["1/4", "3/4"], ["1/2", "1/2"]]],
        G=[["1", "1"], ["1", "1"], ["1", "1"]],
    ),
    "skew2": dict(
        states=[["a", "b"]] * 3,
        eta0=["1/4", "3/4"],
        M=[[["4/5", "1/5"], ["1/10", "9/10"]],
           [["1/2", "1/2"], ["2/7", "5/7"]]],
        G=[["3", "1/3"], ["1/5", "5"], ["2", "1"]],
    ),
    "cycle3": dict(
        states=[["a", "b", "c"]] * 3,
        eta0=["1/2", "1/3", "1/6"],
        M=[[["1/6", "2/3", "1/6"], ["1/6", "1/6", "2/3"],
            ["2/3", "1/6", "1/6"]],
           [["1/10", "4/5", "1/10"], ["1/10", "1/10", "4/5"],
            ["4/5", "1/10", "1/10"]]],
        G=[["1", "2", "1/2"], ["3/2", "1", "2"], ["2", "1/2", "1"]],
    ),
    "blend3": dict(
        states=[["a", "b", "c"]] * 3,
        eta0=["2/5", "2/5", "1/5"],
        M=[[["1/3", "1/3", "1/3"], ["1/2", "1/4", "1/4"],
            ["1/5", "2/5", "2/5"]],
           [["1/4", "1/4", "1/2"], ["1/3", "1/2", "1/6"],
            ["3/8", "3/8", "1/4"]]],
        G=[["1", "3/2", "1/2"], ["2", "1", "1"], ["1/2", "1", "3"]],
    ),
}


def path_gamma_vec(model, n):
    """gamma_n per state by brute-force path enumeration (independent)."""
    sizes = [model.size(k) for k in range(n + 1)]
    out = [Fraction(0)] * sizes[n]
    for path in product(*[range(s) for s in sizes]):
        w = model.eta0[path[0]]
        for k in range(1, n + 1):
            w = w * model.M[k - 1][path[k - 1]][path[k]]
        for p in range(n):
            w = w * model.G[p][path[p]]
        out[path[n]] += w
    return tuple(out)


def fmt(v):
    return "%d/%d" % (v.numerator, v.denominator)


for name, d in DEFS.items():
    m = FKModel(**d)
    fl = flow(m)
    for k in range(m.horizon + 1):
        bf = path_gamma_vec(m, k)
        assert bf == fl.gamma_vec[k], (name, k, bf, fl.gamma_vec[k])
        s = sum(bf)
        assert s == fl.gnorm[k]
        assert tuple(v / s for v in bf) == fl.eta_vec[k]
    print('    "%s": {' % name)
    print('        "gamma_mass": (%s),'
          % ", ".join('"%s"' % fmt(v) for v in fl.gnorm)
          + ("" if m.horizon else ","))
    print('        "eta": (')
    for vec in fl.eta_vec:
        print('            (%s),' % ", ".join('"%s"' % fmt(v) for v in vec))
    print('        ),')
    print('    },')

# bias witness: skew2 normalized estimator is biased at n=1 already
m = FKModel(**DEFS["skew2"])
fl = flow(m)
f = function_from_vector(m, 1, [m.scalar(1), m.scalar(0)])
for N in (2, 3):
    got = exact_eta_tensor_oracle(m, N, 1, 1, f)
    exact = fl.eta_vec[1][0]
    print("skew2 N=%d E eta^N(1_a) = %s vs eta = %s gap = %s"
          % (N, got, exact, got - exact))
