"""Size caps guarding enumerations and dense tables.

All exact computations in this package are desk scale by design; the caps
exist so that a typo in a profile or a horizon fails fast with a structured
error instead of grinding through an astronomically large enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Caps:
    """Hard limits for the combinatorial and tensor layers.

    forests:  largest forest/orbit enumeration accepted (predicted count).
    group:    largest permutation-group size accepted by brute-force orbit walks.
    tensor:   largest dense tensor table (number of entries).
    configs:  largest particle-configuration state space per level.
    series:   largest number of retained terms in a truncated power series.
    """

    forests: int = 100_000
    group: int = 1_000_000
    tensor: int = 1_000_000
    configs: int = 100_000
    series: int = 1_000_000


DEFAULT_CAPS = Caps()
