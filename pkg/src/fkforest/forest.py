"""Rooted trees, forests, and labeled ancestry map sequences.

A forest here is a finite multiset of rooted trees graded by level: roots
sit at level 0, a vertex at level k has its children at level k+1.  The
labeled counterpart is a map sequence: level sizes ``p_0..p_{h}`` plus, for
each k, a parent map from ``[p_{k+1}]`` onto ``[p_k]`` (1-based).  Products
of symmetric groups act on map sequences by relabeling every level; forests
are exactly the orbits.  This module provides both directions of that
correspondence, the orbit size formula, canonical planar representatives,
and enumeration of all forests with a given level profile.

Trees are interned: building the same shape twice returns the same object,
so equality is pointer equality and encodings are computed once.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from math import factorial
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .config import Caps, DEFAULT_CAPS
from .errors import CapExceeded, InvalidParameter
from .genfunc import count_forests

_POOL: Dict[Tuple["Tree", ...], "Tree"] = {}


class Tree:
    """Immutable rooted tree; obtain instances through :func:`tree`."""

    __slots__ = ("children", "encoding", "profile", "internal", "coal")

    def __init__(self, children: Tuple["Tree", ...], _token=None):
        if _token is not _POOL:
            raise InvalidParameter("use tree() to build trees")
        self.children = children
        self.encoding = "(" + "".join(c.encoding for c in children) + ")"
        depth = 1 + max((len(c.profile) for c in children), default=0)
        prof = [0] * depth
        inter = [0] * depth
        prof[0] = 1
        inter[0] = 1 if children else 0
        for c in children:
            for lvl, v in enumerate(c.profile):
                prof[lvl + 1] += v
            for lvl, v in enumerate(c.internal):
                inter[lvl + 1] += v
        self.profile = tuple(prof)
        self.internal = tuple(inter)
        self.coal = tuple(prof[k + 1] - inter[k] for k in range(depth - 1))

    @property
    def height(self) -> int:
        return len(self.profile) - 1

    @property
    def coal_degree(self) -> int:
        return sum(self.coal)

    def __repr__(self) -> str:
        return "Tree(%s)" % self.encoding

    # interned: identity semantics are correct and cheap
    def __hash__(self):
        return object.__hash__(self)


def tree(children: Iterable[Tree]) -> Tree:
    kids = tuple(sorted(children, key=lambda t: t.encoding))
    for k in kids:
        if not isinstance(k, Tree):
            raise InvalidParameter("children must be Tree instances")
    cached = _POOL.get(kids)
    if cached is None:
        cached = Tree(kids, _token=_POOL)
        _POOL[kids] = cached
    return cached


LEAF = tree(())


def chain_tree(height: int) -> Tree:
    """Bare chain: one vertex per level 0..height."""
    if height < 0:
        raise InvalidParameter("height must be >= 0")
    t = LEAF
    for _ in range(height):
        t = tree((t,))
    return t


def _wrap(t: Tree, levels: int) -> Tree:
    for _ in range(levels):
        t = tree((t,))
    return t


class Forest:
    """Multiset of trees in normal form, ordered by encoding."""

    __slots__ = ("items", "encoding", "profile", "internal", "coal")

    def __init__(self, items: Tuple[Tuple[Tree, int], ...]):
        self.items = items
        self.encoding = "".join(t.encoding * m for t, m in items)
        depth = max((len(t.profile) for t, _ in items), default=0)
        prof = [0] * depth
        inter = [0] * depth
        for t, m in items:
            for lvl, v in enumerate(t.profile):
                prof[lvl] += m * v
            for lvl, v in enumerate(t.internal):
                inter[lvl] += m * v
        self.profile = tuple(prof)
        self.internal = tuple(inter)
        self.coal = tuple(prof[k + 1] - inter[k] for k in range(depth - 1))

    @property
    def height(self) -> int:
        return len(self.profile) - 1

    @property
    def coal_degree(self) -> int:
        return sum(self.coal)

    @property
    def n_trees(self) -> int:
        return sum(m for _, m in self.items)

    def trees(self) -> Iterable[Tree]:
        for t, m in self.items:
            for _ in range(m):
                yield t

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Forest):
            return NotImplemented
        return self.items == other.items

    def __hash__(self):
        return hash(self.items)

    def __repr__(self) -> str:
        return "Forest(%s)" % (self.encoding or "empty")


def forest(trees_in: Iterable[Tree]) -> Forest:
    counts: Dict[Tree, int] = {}
    for t in trees_in:
        if not isinstance(t, Tree):
            raise InvalidParameter("forest members must be Tree instances")
        counts[t] = counts.get(t, 0) + 1
    items = tuple(sorted(counts.items(), key=lambda kv: kv[0].encoding))
    return Forest(items)


EMPTY_FOREST = forest(())


class MapSeq:
    """Labeled ancestry: level sizes plus 1-based parent maps.

    ``maps[k][j-1]`` is the parent (level-k index) of vertex j at level
    k+1.  The root level size cannot be recovered from the maps alone, so
    it is stored explicitly.
    """

    __slots__ = ("sizes", "maps")

    def __init__(self, sizes: Sequence[int], maps: Sequence[Sequence[int]]):
        sizes = tuple(int(v) for v in sizes)
        maps = tuple(tuple(int(x) for x in m) for m in maps)
        if not sizes or any(v <= 0 for v in sizes):
            raise InvalidParameter("level sizes must be positive")
        if len(maps) != len(sizes) - 1:
            raise InvalidParameter("need one parent map per non-root level")
        for k, m in enumerate(maps):
            if len(m) != sizes[k + 1]:
                raise InvalidParameter(
                    "map %d must list a parent for each of %d vertices"
                    % (k, sizes[k + 1]))
            if any(x < 1 or x > sizes[k] for x in m):
                raise InvalidParameter(
                    "map %d has parents outside 1..%d" % (k, sizes[k]))
        self.sizes = sizes
        self.maps = maps

    @property
    def image_sizes(self) -> Tuple[int, ...]:
        return tuple(len(set(m)) for m in self.maps)

    @property
    def coal(self) -> Tuple[int, ...]:
        return tuple(self.sizes[k + 1] - len(set(m))
                     for k, m in enumerate(self.maps))

    @property
    def coal_degree(self) -> int:
        return sum(self.coal)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MapSeq):
            return NotImplemented
        return self.sizes == other.sizes and self.maps == other.maps

    def __hash__(self):
        return hash((self.sizes, self.maps))

    def __repr__(self) -> str:
        return "MapSeq(sizes=%r, maps=%r)" % (self.sizes, self.maps)


def forest_of(a: MapSeq) -> Forest:
    """Unlabel a map sequence: group vertices into trees, forget indices."""
    top = len(a.sizes) - 1
    reps: List[List[Tree]] = [[LEAF] * a.sizes[top]]
    for k in range(top - 1, -1, -1):
        below = reps[0]
        kids: List[List[Tree]] = [[] for _ in range(a.sizes[k])]
        for child_idx, parent in enumerate(a.maps[k]):
            kids[parent - 1].append(below[child_idx])
        reps.insert(0, [tree(ch) for ch in kids])
    return forest(reps[0])


def planar_mapseq(f: Forest) -> MapSeq:
    """Canonical labeled representative of a forest.

    Trees are laid out in encoding order (repetitions adjacent); inside a
    tree, children keep their stored order.  Levels are then numbered left
    to right, which makes every parent map weakly increasing.
    """
    if f.n_trees == 0:
        raise InvalidParameter("the empty forest has no labeled form")
    height = f.height
    levels: List[List[Tree]] = [list(f.trees())]
    maps: List[List[int]] = []
    for k in range(height):
        row = levels[k]
        nxt: List[Tree] = []
        parent_of: List[int] = []
        for idx, node in enumerate(row, start=1):
            for c in node.children:
                nxt.append(c)
                parent_of.append(idx)
        levels.append(nxt)
        maps.append(parent_of)
    sizes = tuple(len(row) for row in levels)
    if sizes != f.profile:
        raise AssertionError("planar layout does not match profile")
    return MapSeq(sizes, maps)


def remove_roots(f: Forest) -> Forest:
    out: List[Tree] = []
    for t, m in f.items:
        for c in t.children:
            out.extend([c] * m)
    return forest(out)


def root_multiplicities(f: Forest) -> Tuple[int, ...]:
    """Multiplicities of the distinct trees, sorted ascending."""
    return tuple(sorted(m for _, m in f.items))


def symmetry_multiset(f: Forest) -> Tuple[int, ...]:
    """Child multiplicities of every root, all trees pooled, sorted.

    Each occurrence of a tree contributes the multiset of multiplicities
    of its distinct children; a leaf contributes nothing.
    """
    out: List[int] = []
    for t, m in f.items:
        local: Dict[Tree, int] = {}
        for c in t.children:
            local[c] = local.get(c, 0) + 1
        out.extend(sorted(local.values()) * m)
    return tuple(sorted(out))


def count_jungles(f: Forest) -> int:
    """Number of labeled map sequences whose forest is ``f``.

    Orbit size under levelwise relabeling: the product of level factorials
    divided by the stabilizer, which factors into the root-multiset
    symmetries of the forest and of each of its root-removals.
    """
    if f.n_trees == 0:
        raise InvalidParameter("empty forest has no labelings")
    num = 1
    for v in f.profile:
        num *= factorial(v)
    den = 1
    for m in root_multiplicities(f):
        den *= factorial(m)
    g = f
    for _ in range(f.height):
        for m in symmetry_multiset(g):
            den *= factorial(m)
        g = remove_roots(g)
    if num % den:
        raise AssertionError(
            "stabilizer size does not divide the group order for %r" % f)
    return num // den


def brute_force_stabilizer_size(a: MapSeq, caps: Caps = DEFAULT_CAPS) -> int:
    """Count levelwise relabelings fixing ``a`` by full group sweep."""
    group = 1
    for v in a.sizes:
        group *= factorial(v)
    if group > caps.group:
        raise CapExceeded("relabeling group too large",
                          predicted=group, cap=caps.group)
    perms_per_level = [list(itertools.permutations(range(1, v + 1)))
                       for v in a.sizes]
    hits = 0
    for combo in itertools.product(*perms_per_level):
        ok = True
        for k, m in enumerate(a.maps):
            s_up, s_dn = combo[k], combo[k + 1]
            inv_dn = [0] * len(s_dn)
            for i, x in enumerate(s_dn, start=1):
                inv_dn[x - 1] = i
            moved = tuple(s_up[m[inv_dn[j - 1] - 1] - 1]
                          for j in range(1, len(m) + 1))
            if moved != m:
                ok = False
                break
        if ok:
            hits += 1
    return hits


def brute_force_orbit_count(a: MapSeq, caps: Caps = DEFAULT_CAPS) -> int:
    group = 1
    for v in a.sizes:
        group *= factorial(v)
    stab = brute_force_stabilizer_size(a, caps)
    if group % stab:
        raise AssertionError("stabilizer does not divide group order")
    return group // stab


@lru_cache(maxsize=None)
def enumerate_trees(profile: Tuple[int, ...]) -> Tuple[Tree, ...]:
    """All trees with the given per-level vertex counts, sorted."""
    p = tuple(int(v) for v in profile)
    if not p or p[0] != 1 or any(v <= 0 for v in p):
        raise InvalidParameter(
            "a tree profile starts with 1 and stays positive, got %r"
            % (profile,))
    if len(p) == 1:
        return (LEAF,)
    out = [tree(g.trees()) for g in _enumerate_forests_rec(p[1:], None)]
    out.sort(key=lambda t: t.encoding)
    return tuple(out)


def _tree_candidates(tail: Tuple[int, ...]) -> List[Tuple[int, ...]]:
    """Tree profiles (1, body) that can fit into a forest with this tail."""
    cands: List[Tuple[int, ...]] = [(1,)]
    for length in range(1, len(tail) + 1):
        bodies = [()]
        for i in range(length):
            bodies = [b + (v,) for b in bodies
                      for v in range(1, tail[i] + 1)]
        cands.extend((1,) + b for b in bodies)
    cands.sort(key=lambda r: (-len(r), r))
    return cands


def _enumerate_forests_rec(profile: Tuple[int, ...],
                           max_coal: Optional[int],
                           cap: Optional[int] = None) -> List[Forest]:
    if not profile:
        return [EMPTY_FOREST]
    tail = profile[1:]
    candidates = _tree_candidates(tail)
    results: List[Forest] = []

    def lower_bound(roots: int, rem: Tuple[int, ...]) -> int:
        # merges that no placement can avoid: a level cannot host more
        # parents than it has vertices
        total = 0
        prev = roots
        for v in rem:
            if v > prev:
                total += v - prev
            prev = v
        return total

    def rec(idx: int, roots: int, rem: Tuple[int, ...], budget,
            chosen: List[Tree]):
        if budget is not None and lower_bound(roots, rem) > budget:
            return
        if roots == 0:
            if all(v == 0 for v in rem):
                results.append(forest(chosen))
                if cap is not None and len(results) > cap:
                    raise CapExceeded(
                        "budgeted enumeration exceeded the forest cap",
                        predicted=len(results), cap=cap)
            return
        if idx == len(candidates):
            return
        shape = candidates[idx]
        body = shape[1:]
        limit = roots
        for i, need in enumerate(body):
            limit = min(limit, rem[i] // need)
        shapes = enumerate_trees(shape)
        if budget is not None:
            shapes = tuple(t for t in shapes if t.coal_degree <= budget)
        for k in range(limit + 1):
            nxt = list(rem)
            for i, need in enumerate(body):
                nxt[i] -= k * need
            if k == 0:
                rec(idx + 1, roots, tuple(nxt), budget, chosen)
                continue
            if not shapes:
                break
            for picks in itertools.combinations_with_replacement(shapes, k):
                cost = sum(t.coal_degree for t in picks)
                if budget is not None and cost > budget:
                    continue
                rec(idx + 1, roots - k, tuple(nxt),
                    None if budget is None else budget - cost,
                    chosen + list(picks))

    rec(0, profile[0], tail, max_coal, [])
    return results


def enumerate_forests(profile: Sequence[int],
                      max_coal: Optional[int] = None,
                      caps: Caps = DEFAULT_CAPS) -> List[Forest]:
    """All forests with the given profile, optionally merge-budgeted.

    Without a budget the output size is predicted exactly up front and the
    call refuses early when it would exceed ``caps.forests``.  With a
    budget there is no cheap exact predictor, so the cap is enforced while
    generating instead.
    """
    p = tuple(int(v) for v in profile)
    if any(v <= 0 for v in p):
        raise InvalidParameter("profile entries must be positive")
    if max_coal is None:
        predicted = count_forests(p)
        if predicted > caps.forests:
            raise CapExceeded("enumeration would produce too many forests",
                              predicted=predicted, cap=caps.forests)
        out = _enumerate_forests_rec(p, None)
    else:
        out = _enumerate_forests_rec(p, max_coal, cap=caps.forests)
    out.sort(key=lambda g: g.encoding)
    return out


def enumerate_orbits(n: int, q: int, max_coal: Optional[int] = None,
                     caps: Caps = DEFAULT_CAPS
                     ) -> List[Tuple[Forest, int]]:
    """Forests with q vertices on each of the n+2 levels, with orbit sizes."""
    if n < 0 or q < 1:
        raise InvalidParameter("need n >= 0 and q >= 1")
    profile = (q,) * (n + 2)
    return [(f, count_jungles(f))
            for f in enumerate_forests(profile, max_coal, caps)]


# ---------------------------------------------------------------------------
# named forest shapes used by the low-order closed forms


def trivial_forest(n: int, q: int) -> Forest:
    """q bare chains spanning all levels: the no-interaction class."""
    if n < 0 or q < 1:
        raise InvalidParameter("need n >= 0 and q >= 1")
    return forest([chain_tree(n + 1)] * q)


def pair_merge_forest(n: int, q: int, k: int) -> Forest:
    """One binary merge at level k, everything else untouched."""
    if not 0 <= k <= n:
        raise InvalidParameter("merge level out of range")
    if q < 2:
        raise InvalidParameter("needs q >= 2")
    split = _wrap(tree((chain_tree(n - k), chain_tree(n - k))), k)
    return forest([split] + [chain_tree(n + 1)] * (q - 2)
                  + [chain_tree(k)])


def triple_merge_forest(n: int, q: int, k: int) -> Forest:
    """One ternary merge at level k."""
    if not 0 <= k <= n:
        raise InvalidParameter("merge level out of range")
    if q < 3:
        raise InvalidParameter("needs q >= 3")
    split = _wrap(tree((chain_tree(n - k),) * 3), k)
    return forest([split] + [chain_tree(n + 1)] * (q - 3)
                  + [chain_tree(k)] * 2)


def double_pair_forest(n: int, q: int, k: int) -> Forest:
    """Two disjoint binary merges at the same level k."""
    if not 0 <= k <= n:
        raise InvalidParameter("merge level out of range")
    if q < 4:
        raise InvalidParameter("needs q >= 4")
    split = _wrap(tree((chain_tree(n - k), chain_tree(n - k))), k)
    return forest([split] * 2 + [chain_tree(n + 1)] * (q - 4)
                  + [chain_tree(k)] * 2)


def nested_merge_forest(n: int, q: int, k: int, l: int) -> Forest:
    """Merge at level k whose offspring merges again at level l > k."""
    if not 0 <= k < l <= n:
        raise InvalidParameter("need 0 <= k < l <= n")
    if q < 3:
        raise InvalidParameter("needs q >= 3")
    inner = _wrap(tree((chain_tree(n - l), chain_tree(n - l))), l - k - 1)
    split = _wrap(tree((inner, chain_tree(n - k))), k)
    return forest([split] + [chain_tree(n + 1)] * (q - 3)
                  + [chain_tree(k), chain_tree(l)])


def cut_branch_forest(n: int, q: int, k: int, l: int) -> Forest:
    """Merge at level k; the sibling line stops at level l, forcing a
    second merge there inside the same tree."""
    if not 0 <= k < l <= n:
        raise InvalidParameter("need 0 <= k < l <= n")
    if q < 2:
        raise InvalidParameter("needs q >= 2")
    inner = _wrap(tree((chain_tree(n - l), chain_tree(n - l))), l - k - 1)
    split = _wrap(tree((inner, chain_tree(l - k - 1))), k)
    return forest([split] + [chain_tree(n + 1)] * (q - 2)
                  + [chain_tree(k)])


def two_tree_merge_forest(n: int, q: int, k: int, l: int) -> Forest:
    """Independent binary merges at levels k and l in different trees."""
    if not 0 <= k < l <= n:
        raise InvalidParameter("need 0 <= k < l <= n")
    if q < 4:
        raise InvalidParameter("needs q >= 4")
    split_k = _wrap(tree((chain_tree(n - k), chain_tree(n - k))), k)
    split_l = _wrap(tree((chain_tree(n - l), chain_tree(n - l))), l)
    return forest([split_k, split_l] + [chain_tree(n + 1)] * (q - 4)
                  + [chain_tree(k), chain_tree(l)])


def staggered_merge_forest(n: int, q: int, k: int, l: int) -> Forest:
    """Merge at level k with one line stopping at level l, plus an
    independent binary merge at level l in another tree."""
    if not 0 <= k < l <= n:
        raise InvalidParameter("need 0 <= k < l <= n")
    if q < 3:
        raise InvalidParameter("needs q >= 3")
    stop_at_l = _wrap(tree((chain_tree(l - k - 1), chain_tree(n - k))), k)
    split_l = _wrap(tree((chain_tree(n - l), chain_tree(n - l))), l)
    return forest([stop_at_l, split_l] + [chain_tree(n + 1)] * (q - 3)
                  + [chain_tree(k)])


def wick_pair_forest(n: int, q: int, r: Sequence[int]) -> Forest:
    """Pure pairing shape: r_k binary merges at level k, matching stubs,
    and no untouched full chain.  Needs sum(r) == q/2."""
    r = tuple(int(v) for v in r)
    if len(r) != n + 1 or any(v < 0 for v in r):
        raise InvalidParameter("r must give a count per level 0..n")
    if q % 2 or 2 * sum(r) != q:
        raise InvalidParameter("needs even q with sum(r) == q/2")
    out: List[Tree] = []
    for k, mult in enumerate(r):
        split = _wrap(tree((chain_tree(n - k), chain_tree(n - k))), k)
        out.extend([split] * mult)
        out.extend([chain_tree(k)] * mult)
    return forest(out)
