"""Fidelity, fidelity susceptibility and entanglement entropy.

Every function accepts ground states from either backend: an
:class:`~spinchain.exact.ExactResult` / :class:`~spinchain.exact.DenseState`
or a :class:`~spinchain.dmrg.GroundStateResult` /
:class:`~spinchain.mps.MatrixProductState`. Mixing representations is an
error; nothing is densified behind the caller's back.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .exact import DenseState, exact_entropy, exact_overlap
from .mps import MatrixProductState, overlap, schmidt_spectrum


@dataclass(frozen=True)
class FidelityPoint:
    delta_f: float
    delta: float
    fidelity_value: float
    susceptibility: float
    n_sites: int


@dataclass(frozen=True)
class EntropyPoint:
    delta_f: Optional[float]
    l_sites: int
    entropy_bits: float
    n_sites: int


def _unwrap(gs):
    state = getattr(gs, "state", gs)
    if not isinstance(state, (DenseState, MatrixProductState)):
        raise TypeError(f"not a ground state: {type(gs).__name__}")
    return state


def fidelity(gs_a, gs_b) -> float:
    """``|<a|b>|``, clipped to ``[0, 1]``."""
    a, b = _unwrap(gs_a), _unwrap(gs_b)
    if type(a) is not type(b):
        raise TypeError(f"cannot compare {type(a).__name__} with {type(b).__name__}")
    if a.n_sites != b.n_sites:
        raise ValueError(f"site counts differ: {a.n_sites} vs {b.n_sites}")
    value = exact_overlap(a, b) if isinstance(a, DenseState) else overlap(a, b)
    return min(value, 1.0)


def fidelity_susceptibility(f: float, n_sites: int, delta: float) -> float:
    """Average fidelity susceptibility ``2 (1 - F) / (N delta^2)``."""
    if delta == 0:
        raise ValueError("delta must be nonzero")
    if not 0.0 <= f <= 1.0 + 1e-10:
        raise ValueError(f"fidelity {f} outside [0, 1]")
    return 2.0 * (1.0 - f) / (n_sites * delta**2)


def fidelity_point(gs_a, gs_b, delta_f: float, delta: float) -> FidelityPoint:
    f = fidelity(gs_a, gs_b)
    n = _unwrap(gs_a).n_sites
    return FidelityPoint(delta_f, delta, f, fidelity_susceptibility(f, n, delta), n)


def default_block(n_sites: int) -> int:
    return n_sites // 2 - 1


def entanglement_entropy(gs, l_sites: Optional[int] = None, delta_f: Optional[float] = None) -> EntropyPoint:
    """Entropy in bits of the right-hand ``l_sites`` block (default ``N/2 - 1``)."""
    state = _unwrap(gs)
    n = state.n_sites
    if l_sites is None:
        l_sites = default_block(n)
    if not 1 <= l_sites <= n - 1:
        raise ValueError(f"l_sites must lie in [1, {n - 1}], got {l_sites}")
    if isinstance(state, DenseState):
        value = exact_entropy(state, l_sites)
    else:
        value = schmidt_spectrum(state, n - l_sites).entropy()
    return EntropyPoint(delta_f, l_sites, value, n)
