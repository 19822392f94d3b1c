"""Two realizations of the N-particle mean-field model.

The oracle side evolves the exact law of the unordered particle system:
configurations are occupation-count tuples, transitions are multinomial
draws from the selection-mutation mixture, and every expectation is a
finite sum.  Exchangeability makes configurations sufficient for all the
symmetric functionals handled here.

The Monte Carlo side samples the same dynamics with a counter-based
generator; replica r of seed s uses the key (s, r), so replica sets are
order-independent.  Simulation is always float; the oracles respect the
model's scalar field.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from math import comb, fsum
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .combinatorics import falling_factorial
from .config import Caps, DEFAULT_CAPS
from .errors import CapExceeded, InvalidParameter
from .fk_core import FKModel, Scalar, TensorFunction, flow

Config = Tuple[int, ...]
ConfigDistribution = Dict[Config, Scalar]


def _configs(n_states: int, N: int) -> Iterator[Config]:
    if n_states == 1:
        yield (N,)
        return
    for head in range(N + 1):
        for rest in _configs(n_states - 1, N - head):
            yield (head,) + rest


def config_count(n_states: int, N: int) -> int:
    return comb(N + n_states - 1, N)


def _multinomial_weight(cfg: Config, probs: Sequence[Scalar],
                        one: Scalar) -> Scalar:
    N = sum(cfg)
    coeff = 1
    rem = N
    for c in cfg:
        coeff *= comb(rem, c)
        rem -= c
    w = one * coeff
    for c, p in zip(cfg, probs):
        if c:
            w = w * p ** c
    return w


def _mixture(model: FKModel, k: int, cfg: Config) -> Tuple[Scalar, ...]:
    """Selection-mutation distribution on level k given the level k-1
    configuration."""
    gk = model.G[k - 1]
    mk = model.M[k - 1]
    weights = [cfg[x] * gk[x] for x in range(len(cfg))]
    total = sum(weights)
    return tuple(
        sum(weights[x] * mk[x][y] for x in range(len(cfg))) / total
        for y in range(model.size(k)))


def exact_config_distribution(model: FKModel, N: int, horizon: int,
                              caps: Caps = DEFAULT_CAPS
                              ) -> List[ConfigDistribution]:
    """Exact law of the occupation counts at levels 0..horizon."""
    if N < 1:
        raise InvalidParameter("N must be >= 1")
    if not 0 <= horizon <= model.horizon:
        raise InvalidParameter("horizon outside the model range")
    for k in range(horizon + 1):
        cnt = config_count(model.size(k), N)
        if cnt > caps.configs:
            raise CapExceeded("configuration space too large at level %d" % k,
                              predicted=cnt, cap=caps.configs)
    dist: ConfigDistribution = {}
    for cfg in _configs(model.size(0), N):
        w = _multinomial_weight(cfg, model.eta0, model.one)
        if w:
            dist[cfg] = w
    out = [dist]
    for k in range(1, horizon + 1):
        nxt: ConfigDistribution = {}
        for cfg, w in out[-1].items():
            mix = _mixture(model, k, cfg)
            for cfg2 in _configs(model.size(k), N):
                w2 = _multinomial_weight(cfg2, mix, model.one)
                if w2:
                    nxt[cfg2] = nxt.get(cfg2, model.zero) + w * w2
        out.append(nxt)
    return out


def config_paths(model: FKModel, N: int, horizon: int,
                 caps: Caps = DEFAULT_CAPS
                 ) -> Iterator[Tuple[Tuple[Config, ...], Scalar]]:
    """All configuration paths with their exact probabilities."""
    if N < 1:
        raise InvalidParameter("N must be >= 1")
    if not 0 <= horizon <= model.horizon:
        raise InvalidParameter("horizon outside the model range")
    predicted = 1
    for k in range(horizon + 1):
        predicted *= config_count(model.size(k), N)
        if predicted > caps.configs:
            raise CapExceeded("configuration path count too large",
                              predicted=predicted, cap=caps.configs)

    def rec(k: int, prefix: Tuple[Config, ...], w: Scalar):
        if not w:
            return
        if k > horizon:
            yield prefix, w
            return
        if k == 0:
            for cfg in _configs(model.size(0), N):
                w2 = _multinomial_weight(cfg, model.eta0, model.one)
                yield from rec(1, (cfg,), w * w2)
        else:
            mix = _mixture(model, k, prefix[-1])
            for cfg in _configs(model.size(k), N):
                w2 = _multinomial_weight(cfg, mix, model.one)
                yield from rec(k + 1, prefix + (cfg,), w * w2)

    yield from rec(0, (), model.one)


# ---------------------------------------------------------------------------
# per-configuration estimator values


def _gamma_norms(model: FKModel, path: Sequence[Config],
                 N: int) -> List[Scalar]:
    """Running unnormalized masses along a configuration path: entry k is
    the product of empirical potential means before level k."""
    out = [model.one]
    for k in range(1, len(path)):
        cfg = path[k - 1]
        gmean = sum(c * g for c, g in zip(cfg, model.G[k - 1]))
        out.append(out[-1] * gmean / (N if model.field == "float"
                                      else Fraction(N)))
    return out


def tensor_moment(cfg: Config, F: TensorFunction, N: int) -> Scalar:
    """Plain q-fold empirical tensor of one configuration against F."""
    q = F.arity
    total = F.model.zero
    for point in itertools.product(*[range(s) for s in F.sizes]):
        w = 1
        for x in point:
            w *= cfg[x]
        if w:
            total = total + F.value(point) * w
    return total / N ** q if F.model.field == "float" \
        else total * Fraction(1, N ** q)


def dot_moment(cfg: Config, F: TensorFunction, N: int) -> Scalar:
    """Injective q-fold empirical tensor of one configuration against F."""
    q = F.arity
    if q > N:
        raise InvalidParameter("injective tensor needs q <= N")
    total = F.model.zero
    for point in itertools.product(*[range(s) for s in F.sizes]):
        mult: Dict[int, int] = {}
        for x in point:
            mult[x] = mult.get(x, 0) + 1
        w = 1
        for x, m in mult.items():
            w *= falling_factorial(cfg[x], m)
        if w:
            total = total + F.value(point) * w
    return total / falling_factorial(N, q) if F.model.field == "float" \
        else total * Fraction(1, falling_factorial(N, q))


def block_tensor_moment(path: Sequence[Config], F: TensorFunction,
                        N: int) -> Scalar:
    """Product-across-levels empirical tensor: coordinate i of F reads the
    configuration at its own level."""
    total = F.model.zero
    sizes = F.sizes
    for point in itertools.product(*[range(s) for s in sizes]):
        w = 1
        for pos, x in enumerate(point):
            w *= path[F.levels[pos]][x]
        if w:
            total = total + F.value(point) * w
    return total / N ** F.arity if F.model.field == "float" \
        else total * Fraction(1, N ** F.arity)


# ---------------------------------------------------------------------------
# oracles


def exact_QN_oracle(model: FKModel, N: int,
                    q: Union[int, Sequence[int]],
                    F: TensorFunction,
                    n: Optional[int] = None,
                    caps: Caps = DEFAULT_CAPS) -> Scalar:
    """Exact expectation of the unnormalized empirical tensor moment.

    With integer q the moment is the q-fold tensor at level n; with a
    block-size sequence q the coordinates of F read one level per block in
    time order and the weight multiplies the per-level masses."""
    if isinstance(q, int):
        if n is None:
            if len(set(F.levels)) != 1:
                raise InvalidParameter("n needed for a multi-level F")
            n = F.levels[0]
        qvec = (0,) * n + (q,)
    else:
        qvec = tuple(int(v) for v in q)
        n = len(qvec) - 1
    want: Tuple[int, ...] = ()
    for lvl, cnt in enumerate(qvec):
        want += (lvl,) * cnt
    if F.levels != want:
        raise InvalidParameter("F domain %r does not match blocks %r"
                               % (F.levels, want))
    total = model.zero
    for path, w in config_paths(model, N, n, caps):
        norms = _gamma_norms(model, path, N)
        factor = model.one
        for lvl, cnt in enumerate(qvec):
            if cnt:
                factor = factor * norms[lvl] ** cnt
        total = total + w * factor * block_tensor_moment(path, F, N)
    return total


def exact_QN_dot_oracle(model: FKModel, N: int, n: int, q: int,
                        F: TensorFunction,
                        caps: Caps = DEFAULT_CAPS) -> Scalar:
    """Exact expectation of the injective unnormalized moment at level n."""
    if F.levels != (n,) * q:
        raise InvalidParameter("F must live on the q-fold level-n space")
    total = model.zero
    for path, w in config_paths(model, N, n, caps):
        norms = _gamma_norms(model, path, N)
        total = total + w * norms[n] ** q * dot_moment(path[n], F, N)
    return total


def exact_PN_oracle(model: FKModel, N: int, n: int, q: int,
                    F: TensorFunction,
                    caps: Caps = DEFAULT_CAPS) -> Scalar:
    """Exact law of a q-particle block: expectation of the injective
    normalized moment, which equals the joint law of q distinct particles."""
    if F.levels != (n,) * q:
        raise InvalidParameter("F must live on the q-fold level-n space")
    if q > N:
        raise InvalidParameter("needs q <= N")
    dist = exact_config_distribution(model, N, n, caps)[n]
    total = model.zero
    for cfg, w in dist.items():
        total = total + w * dot_moment(cfg, F, N)
    return total


def exact_eta_tensor_oracle(model: FKModel, N: int, n: int, q: int,
                            F: TensorFunction,
                            caps: Caps = DEFAULT_CAPS) -> Scalar:
    """Exact expectation of the plain normalized moment at level n."""
    if F.levels != (n,) * q:
        raise InvalidParameter("F must live on the q-fold level-n space")
    dist = exact_config_distribution(model, N, n, caps)[n]
    total = model.zero
    for cfg, w in dist.items():
        total = total + w * tensor_moment(cfg, F, N)
    return total


def exact_EN_oracle(model: FKModel, N: int, n: int, q: int,
                    caps: Caps = DEFAULT_CAPS) -> Scalar:
    """Exact q-th centered moment of the relative mass defect at level n."""
    if q < 0:
        raise InvalidParameter("q must be >= 0")
    fl = flow(model)
    gG = sum(g * v for g, v in zip(fl.gamma_vec[n], model.G[n]))
    total = model.zero
    for path, w in config_paths(model, N, n, caps):
        norms = _gamma_norms(model, path, N)
        cfg = path[n]
        emp = sum(c * g for c, g in zip(cfg, model.G[n]))
        emp = emp / N if model.field == "float" else emp * Fraction(1, N)
        v = 1 - norms[n] * emp / gG
        total = total + w * v ** q
    return total


# ---------------------------------------------------------------------------
# Monte Carlo simulator


def simulate(model: FKModel, N: int, seed: int,
             horizon: Optional[int] = None,
             replica: int = 0) -> List[np.ndarray]:
    """One replica of the particle system; returns per-level index arrays.

    Streams are keyed by (seed, replica): replicas can run in any order or
    in parallel and still reproduce byte for byte.
    """
    if N < 1:
        raise InvalidParameter("N must be >= 1")
    hz = model.horizon if horizon is None else horizon
    if not 0 <= hz <= model.horizon:
        raise InvalidParameter("horizon outside the model range")
    rng = np.random.Generator(np.random.Philox(
        key=np.array([seed % 2 ** 64, replica % 2 ** 64], dtype=np.uint64)))
    p0 = np.array([float(v) for v in model.eta0], dtype=np.float64)
    p0 = p0 / p0.sum()
    levels = [rng.choice(model.size(0), size=N, p=p0)]
    for k in range(1, hz + 1):
        counts = np.bincount(levels[-1], minlength=model.size(k - 1))
        g = np.array([float(v) for v in model.G[k - 1]])
        mk = np.array([[float(v) for v in row] for row in model.M[k - 1]])
        weights = counts * g
        mix = weights @ mk
        mix = mix / mix.sum()
        levels.append(rng.choice(model.size(k), size=N, p=mix))
    return levels


def trajectory_config(traj: Sequence[np.ndarray], model: FKModel,
                      k: int) -> Config:
    return tuple(int(v) for v in
                 np.bincount(traj[k], minlength=model.size(k)))


def estimators(model: FKModel, traj: Sequence[np.ndarray], n: int,
               f: Optional[TensorFunction] = None,
               F: Optional[TensorFunction] = None,
               q: Optional[int] = None) -> Dict[str, Scalar]:
    """Empirical estimators of one trajectory at level n.

    Occupation counts are integers, so every estimator value is exact in
    rational mode even though the trajectory itself was sampled in floats.
    """
    N = len(traj[0])
    path = tuple(trajectory_config(traj, model, k) for k in range(n + 1))
    norms = _gamma_norms(model, path, N)
    out: Dict[str, Scalar] = {"gamma_norm": norms[n]}
    if f is not None:
        if f.levels != (n,):
            raise InvalidParameter("f must be a single-coordinate function")
        eta_f = tensor_moment(path[n], f, N)
        out["eta"] = eta_f
        out["gamma"] = norms[n] * eta_f
    if F is not None:
        if q is None:
            q = F.arity
        if F.levels != (n,) * q:
            raise InvalidParameter("F must live on the q-fold level-n space")
        out["eta_tensor"] = tensor_moment(path[n], F, N)
        out["gamma_tensor"] = norms[n] ** q * out["eta_tensor"]
        if q <= N:
            out["eta_dot"] = dot_moment(path[n], F, N)
            out["gamma_dot"] = norms[n] ** q * out["eta_dot"]
    return out


def mc_gamma_mean(model: FKModel, N: int, seed: int, replicas: int,
                  n: int, f: TensorFunction) -> Tuple[float, float]:
    """Replica mean and standard error of the unnormalized estimator."""
    vals: List[float] = []
    for r in range(replicas):
        traj = simulate(model, N, seed, horizon=n, replica=r)
        est = estimators(model, traj, n, f=f)
        vals.append(float(est["gamma"]))
    mean = fsum(vals) / replicas
    var = fsum((v - mean) ** 2 for v in vals) / (replicas - 1)
    return mean, (var / replicas) ** 0.5
