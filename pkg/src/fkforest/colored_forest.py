"""Two-colored trees and forests for tensor products across several times.

White vertices are frozen sample points: they never have children.  Black
vertices carry the genealogy forward, so every parent is black.  A colored
map sequence records, per level, two 1-based parent maps (one for the white
vertices of the level below, one for the black ones), both into the black
vertices above.  Products of per-color symmetric groups act by relabeling;
colored forests are the orbits, exactly as in the uncolored case.
"""

from __future__ import annotations

import itertools
from math import factorial
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .config import Caps, DEFAULT_CAPS
from .errors import CapExceeded, InvalidParameter

_CPOOL: Dict[Tuple[bool, Tuple["ColoredTree", ...]], "ColoredTree"] = {}

PairProfile = Tuple[Tuple[int, int], ...]


class ColoredTree:
    """Immutable colored tree; build through :func:`black` / :func:`white`."""

    __slots__ = ("children", "is_white", "encoding", "wprofile", "bprofile",
                 "internal", "coal")

    def __init__(self, is_white: bool, children: Tuple["ColoredTree", ...],
                 _token=None):
        if _token is not _CPOOL:
            raise InvalidParameter("use black()/white() to build")
        if is_white and children:
            raise InvalidParameter("white vertices are always leaves")
        self.is_white = is_white
        self.children = children
        inner = "".join(c.encoding for c in children)
        self.encoding = ("w()" if is_white else "b(" + inner + ")")
        depth = 1 + max((len(c.wprofile) for c in children), default=0)
        wp = [0] * depth
        bp = [0] * depth
        inter = [0] * depth
        if is_white:
            wp[0] = 1
        else:
            bp[0] = 1
            inter[0] = 1 if children else 0
        for c in children:
            for lvl in range(len(c.wprofile)):
                wp[lvl + 1] += c.wprofile[lvl]
                bp[lvl + 1] += c.bprofile[lvl]
                inter[lvl + 1] += c.internal[lvl]
        self.wprofile = tuple(wp)
        self.bprofile = tuple(bp)
        self.internal = tuple(inter)
        self.coal = tuple(wp[k + 1] + bp[k + 1] - inter[k]
                          for k in range(depth - 1))

    @property
    def height(self) -> int:
        return len(self.wprofile) - 1

    @property
    def coal_degree(self) -> int:
        return sum(self.coal)

    def __repr__(self) -> str:
        return "ColoredTree(%s)" % self.encoding

    def __hash__(self):
        return object.__hash__(self)


def black(children: Iterable[ColoredTree]) -> ColoredTree:
    kids = tuple(sorted(children, key=lambda t: t.encoding))
    key = (False, kids)
    cached = _CPOOL.get(key)
    if cached is None:
        cached = ColoredTree(False, kids, _token=_CPOOL)
        _CPOOL[key] = cached
    return cached


def white() -> ColoredTree:
    key = (True, ())
    cached = _CPOOL.get(key)
    if cached is None:
        cached = ColoredTree(True, (), _token=_CPOOL)
        _CPOOL[key] = cached
    return cached


WHITE = white()


def black_chain(height: int) -> ColoredTree:
    """All-black bare chain; its top vertex is a black leaf."""
    if height < 0:
        raise InvalidParameter("height must be >= 0")
    t = black(())
    for _ in range(height):
        t = black((t,))
    return t


def white_topped_chain(height: int) -> ColoredTree:
    """Chain of height blacks carrying one white leaf on top."""
    if height < 0:
        raise InvalidParameter("height must be >= 0")
    t = WHITE
    for _ in range(height):
        t = black((t,))
    return t


class ColoredForest:
    __slots__ = ("items", "encoding", "wprofile", "bprofile", "internal",
                 "coal")

    def __init__(self, items: Tuple[Tuple[ColoredTree, int], ...]):
        self.items = items
        self.encoding = "".join(t.encoding * m for t, m in items)
        depth = max((len(t.wprofile) for t, _ in items), default=0)
        wp = [0] * depth
        bp = [0] * depth
        inter = [0] * depth
        for t, m in items:
            for lvl in range(len(t.wprofile)):
                wp[lvl] += m * t.wprofile[lvl]
                bp[lvl] += m * t.bprofile[lvl]
                inter[lvl] += m * t.internal[lvl]
        self.wprofile = tuple(wp)
        self.bprofile = tuple(bp)
        self.internal = tuple(inter)
        self.coal = tuple(wp[k + 1] + bp[k + 1] - inter[k]
                          for k in range(depth - 1))

    @property
    def pair_profile(self) -> PairProfile:
        return tuple(zip(self.wprofile, self.bprofile))

    @property
    def height(self) -> int:
        return len(self.wprofile) - 1

    @property
    def coal_degree(self) -> int:
        return sum(self.coal)

    @property
    def n_trees(self) -> int:
        return sum(m for _, m in self.items)

    def trees(self) -> Iterable[ColoredTree]:
        for t, m in self.items:
            for _ in range(m):
                yield t

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ColoredForest):
            return NotImplemented
        return self.items == other.items

    def __hash__(self):
        return hash(self.items)

    def __repr__(self) -> str:
        return "ColoredForest(%s)" % (self.encoding or "empty")


def colored_forest(trees_in: Iterable[ColoredTree]) -> ColoredForest:
    counts: Dict[ColoredTree, int] = {}
    for t in trees_in:
        if not isinstance(t, ColoredTree):
            raise InvalidParameter("members must be ColoredTree instances")
        counts[t] = counts.get(t, 0) + 1
    items = tuple(sorted(counts.items(), key=lambda kv: kv[0].encoding))
    return ColoredForest(items)


class ColoredMapSeq:
    """Level sizes by color plus parent maps into the black vertices.

    ``maps[k] = (white_part, black_part)``: 1-based parents (black index at
    level k) for the whites, then the blacks, of level k+1.
    """

    __slots__ = ("white_sizes", "black_sizes", "maps")

    def __init__(self, white_sizes: Sequence[int],
                 black_sizes: Sequence[int],
                 maps: Sequence[Tuple[Sequence[int], Sequence[int]]]):
        ws = tuple(int(v) for v in white_sizes)
        bs = tuple(int(v) for v in black_sizes)
        if len(ws) != len(bs) or not ws:
            raise InvalidParameter("need matching per-level color counts")
        if any(v < 0 for v in ws + bs):
            raise InvalidParameter("level sizes must be >= 0")
        if any(ws[k] + bs[k] == 0 for k in range(len(ws))):
            raise InvalidParameter("every level must hold a vertex")
        if any(bs[k] == 0 for k in range(len(ws) - 1)):
            raise InvalidParameter("levels below the top need black vertices")
        mm = tuple((tuple(int(x) for x in w), tuple(int(x) for x in b))
                   for (w, b) in maps)
        if len(mm) != len(ws) - 1:
            raise InvalidParameter("need one map pair per non-root level")
        for k, (w, b) in enumerate(mm):
            if len(w) != ws[k + 1] or len(b) != bs[k + 1]:
                raise InvalidParameter("map %d arity mismatch" % k)
            if any(x < 1 or x > bs[k] for x in w + b):
                raise InvalidParameter(
                    "map %d has parents outside 1..%d" % (k, bs[k]))
        self.white_sizes = ws
        self.black_sizes = bs
        self.maps = mm

    def combined(self, k: int) -> Tuple[int, ...]:
        w, b = self.maps[k]
        return w + b

    @property
    def image_sizes(self) -> Tuple[int, ...]:
        return tuple(len(set(self.combined(k)))
                     for k in range(len(self.maps)))

    @property
    def coal(self) -> Tuple[int, ...]:
        return tuple(self.white_sizes[k + 1] + self.black_sizes[k + 1]
                     - len(set(self.combined(k)))
                     for k in range(len(self.maps)))

    @property
    def coal_degree(self) -> int:
        return sum(self.coal)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ColoredMapSeq):
            return NotImplemented
        return (self.white_sizes == other.white_sizes
                and self.black_sizes == other.black_sizes
                and self.maps == other.maps)

    def __hash__(self):
        return hash((self.white_sizes, self.black_sizes, self.maps))

    def __repr__(self) -> str:
        return ("ColoredMapSeq(white=%r, black=%r, maps=%r)"
                % (self.white_sizes, self.black_sizes, self.maps))


def colored_forest_of(a: ColoredMapSeq) -> ColoredForest:
    top = len(a.white_sizes) - 1
    whites = [WHITE] * a.white_sizes[top]
    blacks = [black(())] * a.black_sizes[top]
    for k in range(top - 1, -1, -1):
        wmap, bmap = a.maps[k]
        kids: List[List[ColoredTree]] = [[] for _ in range(a.black_sizes[k])]
        for idx, parent in enumerate(wmap):
            kids[parent - 1].append(whites[idx])
        for idx, parent in enumerate(bmap):
            kids[parent - 1].append(blacks[idx])
        whites = [WHITE] * a.white_sizes[k]
        blacks = [black(ch) for ch in kids]
    return colored_forest(whites + blacks)


def colored_planar_mapseq(f: ColoredForest) -> ColoredMapSeq:
    """Canonical labeling: encoding order, whites before blacks per level."""
    if f.n_trees == 0:
        raise InvalidParameter("the empty forest has no labeled form")
    height = f.height
    wrows: List[List[ColoredTree]] = []
    brows: List[List[ColoredTree]] = []
    row = list(f.trees())
    maps: List[Tuple[Tuple[int, ...], Tuple[int, ...]]] = []
    for k in range(height + 1):
        wrows.append([t for t in row if t.is_white])
        brows.append([t for t in row if not t.is_white])
        if k == height:
            break
        nxt: List[ColoredTree] = []
        wparents: List[int] = []
        bparents: List[int] = []
        for idx, node in enumerate(brows[k], start=1):
            for c in node.children:
                nxt.append(c)
                if c.is_white:
                    wparents.append(idx)
                else:
                    bparents.append(idx)
        # planar layout lists whites first, so split the row by color but
        # keep each color in visit order
        row = [c for c in nxt if c.is_white] + [c for c in nxt
                                                if not c.is_white]
        maps.append((tuple(wparents), tuple(bparents)))
    ws = tuple(len(r) for r in wrows)
    bs = tuple(len(r) for r in brows)
    if ws != f.wprofile or bs != f.bprofile:
        raise AssertionError("planar layout does not match profile")
    return ColoredMapSeq(ws, bs, maps)


def colored_remove_roots(f: ColoredForest) -> ColoredForest:
    out: List[ColoredTree] = []
    for t, m in f.items:
        for c in t.children:
            out.extend([c] * m)
    return colored_forest(out)


def colored_symmetry_multiset(f: ColoredForest) -> Tuple[int, ...]:
    out: List[int] = []
    for t, m in f.items:
        local: Dict[ColoredTree, int] = {}
        for c in t.children:
            local[c] = local.get(c, 0) + 1
        out.extend(sorted(local.values()) * m)
    return tuple(sorted(out))


def count_colored_jungles(f: ColoredForest) -> int:
    """Orbit size of the colored forest under per-color relabelings."""
    if f.n_trees == 0:
        raise InvalidParameter("empty forest has no labelings")
    num = 1
    for w, b in zip(f.wprofile, f.bprofile):
        num *= factorial(w) * factorial(b)
    den = 1
    for m in sorted(m for _, m in f.items):
        den *= factorial(m)
    g = f
    for _ in range(f.height):
        for m in colored_symmetry_multiset(g):
            den *= factorial(m)
        g = colored_remove_roots(g)
    if num % den:
        raise AssertionError(
            "stabilizer size does not divide the group order for %r" % f)
    return num // den


def brute_force_colored_orbit_count(a: ColoredMapSeq,
                                    caps: Caps = DEFAULT_CAPS) -> int:
    group = 1
    for w, b in zip(a.white_sizes, a.black_sizes):
        group *= factorial(w) * factorial(b)
    if group > caps.group:
        raise CapExceeded("relabeling group too large",
                          predicted=group, cap=caps.group)
    wperms = [list(itertools.permutations(range(1, v + 1)))
              for v in a.white_sizes]
    bperms = [list(itertools.permutations(range(1, v + 1)))
              for v in a.black_sizes]
    levels = len(a.white_sizes)
    hits = 0
    for combo in itertools.product(*(wperms + bperms)):
        wperm = combo[:levels]
        bperm = combo[levels:]
        ok = True
        for k, (wm, bm) in enumerate(a.maps):
            up = bperm[k]
            inv_w = _invert(wperm[k + 1])
            inv_b = _invert(bperm[k + 1])
            moved_w = tuple(up[wm[inv_w[j]] - 1] for j in range(len(wm)))
            moved_b = tuple(up[bm[inv_b[j]] - 1] for j in range(len(bm)))
            if moved_w != wm or moved_b != bm:
                ok = False
                break
        if ok:
            hits += 1
    if group % hits:
        raise AssertionError("stabilizer does not divide group order")
    return group // hits


def _invert(perm: Tuple[int, ...]) -> Tuple[int, ...]:
    inv = [0] * len(perm)
    for i, x in enumerate(perm):
        inv[x - 1] = i
    return tuple(inv)


# ---------------------------------------------------------------------------
# profiles derived from per-time block sizes


def normalize_path_profile(q: Sequence[int]) -> Tuple[int, ...]:
    qq = tuple(int(v) for v in q)
    if any(v < 0 for v in qq):
        raise InvalidParameter("block sizes must be >= 0")
    while qq and qq[-1] == 0:
        qq = qq[:-1]
    if not qq:
        raise InvalidParameter("at least one positive block size required")
    return qq


def path_profile_bar(q: Sequence[int]) -> PairProfile:
    """Colored level profile of the classes entering a per-time tensor
    product with block sizes q = (q_0..q_n): level j holds q_{j-1} whites
    (frozen at time j-1) and sum(q_j..q_n) blacks still moving."""
    qq = normalize_path_profile(q)
    n = len(qq) - 1
    pairs = []
    for j in range(n + 2):
        wj = qq[j - 1] if j >= 1 else 0
        bj = sum(qq[j:])
        pairs.append((wj, bj))
    return tuple(pairs)


def enumerate_colored_forests(pairs: PairProfile,
                              max_coal: Optional[int] = None,
                              caps: Caps = DEFAULT_CAPS
                              ) -> List[ColoredForest]:
    """All colored forests with the given per-level color counts.

    No closed-form size predictor is available for the colored census, so
    the cap is always enforced while generating.
    """
    pp = tuple((int(w), int(b)) for (w, b) in pairs)
    if any(w < 0 or b < 0 or (w + b) == 0 for w, b in pp):
        raise InvalidParameter("levels need nonnegative counts, not empty")
    if any(b == 0 for _, b in pp[:-1]) and len(pp) > 1:
        raise InvalidParameter("levels below the top need black vertices")
    results = _enum_colored_rec(pp, max_coal, caps.forests)
    results.sort(key=lambda g: g.encoding)
    return results


_CTREE_CACHE: Dict[PairProfile, Tuple[ColoredTree, ...]] = {}


def _enumerate_colored_trees(pairs: PairProfile) -> Tuple[ColoredTree, ...]:
    cached = _CTREE_CACHE.get(pairs)
    if cached is not None:
        return cached
    (w0, b0) = pairs[0]
    if (w0, b0) == (1, 0):
        out = (WHITE,) if len(pairs) == 1 else ()
    elif (w0, b0) == (0, 1):
        if len(pairs) == 1:
            out = (black(()),)
        else:
            out = tuple(sorted(
                (black(tuple(g.trees()))
                 for g in _enum_colored_rec(pairs[1:], None, None)),
                key=lambda t: t.encoding))
    else:
        raise InvalidParameter("a tree has exactly one root")
    _CTREE_CACHE[pairs] = out
    return out


def _colored_candidates(tail: PairProfile) -> List[PairProfile]:
    cands: List[PairProfile] = [((1, 0),), ((0, 1),)]
    for length in range(1, len(tail) + 1):
        bodies: List[PairProfile] = [()]
        for i in range(length):
            wmax, bmax = tail[i]
            grown = []
            for body in bodies:
                need_black = i < length - 1
                for w in range(wmax + 1):
                    for b in range((1 if need_black else 0), bmax + 1):
                        if w + b >= 1:
                            grown.append(body + ((w, b),))
            bodies = grown
        cands.extend(((0, 1),) + b for b in bodies)
    cands.sort(key=lambda r: (-len(r), r))
    return cands


def _enum_colored_rec(pairs: PairProfile, max_coal: Optional[int],
                      cap: Optional[int]) -> List[ColoredForest]:
    if not pairs:
        return [colored_forest(())]
    tail = pairs[1:]
    candidates = _colored_candidates(tail)
    results: List[ColoredForest] = []

    def lower_bound(roots: int, rem: PairProfile) -> int:
        total = 0
        prev = roots
        for w, b in rem:
            if w + b > prev:
                total += w + b - prev
            prev = b
        return total

    def rec(idx: int, wroots: int, broots: int, rem: PairProfile, budget,
            chosen: List[ColoredTree]):
        if budget is not None and lower_bound(broots, rem) > budget:
            return
        if wroots == 0 and broots == 0:
            if all(w == 0 and b == 0 for w, b in rem):
                results.append(colored_forest(chosen))
                if cap is not None and len(results) > cap:
                    raise CapExceeded(
                        "colored enumeration exceeded the forest cap",
                        predicted=len(results), cap=cap)
            return
        if idx == len(candidates):
            return
        shape = candidates[idx]
        rw, rb = shape[0]
        body = shape[1:]
        if rw:
            limit = wroots
        else:
            limit = broots
        for i, (w, b) in enumerate(body):
            if w:
                limit = min(limit, rem[i][0] // w)
            if b:
                limit = min(limit, rem[i][1] // b)
        shapes = _enumerate_colored_trees(shape)
        if budget is not None:
            shapes = tuple(t for t in shapes if t.coal_degree <= budget)
        for k in range(limit + 1):
            nxt = [(w - k * bw, b - k * bb) for (w, b), (bw, bb)
                   in zip(rem, body + ((0, 0),) * (len(rem) - len(body)))]
            if any(w < 0 or b < 0 for w, b in nxt):
                break
            if k == 0:
                rec(idx + 1, wroots, broots, tuple(nxt), budget, chosen)
                continue
            if not shapes:
                break
            nw = wroots - k * rw
            nb = broots - k * rb
            if nw < 0 or nb < 0:
                break
            for picks in itertools.combinations_with_replacement(shapes, k):
                cost = sum(t.coal_degree for t in picks)
                if budget is not None and cost > budget:
                    continue
                rec(idx + 1, nw, nb, tuple(nxt),
                    None if budget is None else budget - cost,
                    chosen + list(picks))

    (w0, b0) = pairs[0]
    rec(0, w0, b0, tail, max_coal, [])
    return results


def enumerate_colored_orbits(q: Sequence[int],
                             max_coal: Optional[int] = None,
                             caps: Caps = DEFAULT_CAPS
                             ) -> List[Tuple[ColoredForest, int]]:
    """Colored classes for per-time block sizes q, with orbit sizes."""
    pairs = path_profile_bar(q)
    return [(f, count_colored_jungles(f))
            for f in enumerate_colored_forests(pairs, max_coal, caps)]


# ---------------------------------------------------------------------------
# named colored shapes


def wick_colored_tree(k: int, l: int, m: int) -> ColoredTree:
    """Single merge at level k, white tips frozen at levels l+1 and m+1."""
    if not 0 <= k <= l <= m:
        raise InvalidParameter("need 0 <= k <= l <= m")
    split = black((white_topped_chain(l - k), white_topped_chain(m - k)))
    for _ in range(k):
        split = black((split,))
    return split


def build_wick_forest(t: Dict[Tuple[int, int, int], int]) -> ColoredForest:
    """Pairing shape for the path-level census: one merge tree per entry
    (k,l,m) with multiplicity, plus one black stub per merge at its level."""
    out: List[ColoredTree] = []
    stubs: Dict[int, int] = {}
    for (k, l, m), mult in sorted(t.items()):
        if mult < 0:
            raise InvalidParameter("multiplicities must be >= 0")
        if mult == 0:
            continue
        out.extend([wick_colored_tree(k, l, m)] * mult)
        stubs[k] = stubs.get(k, 0) + mult
    for k, mult in stubs.items():
        out.extend([black_chain(k)] * mult)
    if not out:
        raise InvalidParameter("empty pairing")
    return colored_forest(out)


def first_order_path_forest(n: int, q: int, k: int, m: int) -> ColoredForest:
    """Colored class driving the first-order block-distribution term: one
    merge at level k feeding a white frozen at level m+1, q whites on top,
    and the matching black stub."""
    if not 0 <= k <= m <= n:
        raise InvalidParameter("need 0 <= k <= m <= n")
    if q < 1:
        raise InvalidParameter("needs q >= 1")
    return colored_forest([black_chain(k), wick_colored_tree(k, m, n)]
                          + [white_topped_chain(n + 1)] * (q - 1))
