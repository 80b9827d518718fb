"""Exact diagonalization in a fixed total-Sz sector.

Configurations are encoded so that the integer equals the Kronecker-product
index of the full space: site ``k`` (1-based) sits on bit ``N - k`` and a set
bit means spin down. Sorted sector states can therefore be scattered straight
into a dense ``2**N`` vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Optional, Tuple

import numpy as np

from .lanczos import LanczosError, lowest_eigenpair
from .model import ModelParams, build_bond_terms

MAX_SITES = 20
DENSE_MAX_DIM = 4096


@dataclass(frozen=True)
class SectorBasis:
    n_sites: int
    total_sz: float
    states: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.states)

    def index_of(self, configs) -> np.ndarray:
        """Ordinal of each configuration; -1 where it is not in the sector."""
        configs = np.asarray(configs, dtype=np.int64)
        idx = np.searchsorted(self.states, configs)
        idx = np.minimum(idx, len(self.states) - 1)
        return np.where(self.states[idx] == configs, idx, -1)

    @property
    def index_lookup(self) -> dict:
        return {int(s): i for i, s in enumerate(self.states)}


@dataclass(frozen=True)
class DenseState:
    basis: SectorBasis
    amplitudes: np.ndarray
    residual: float = field(default=0.0, compare=False)
    converged: bool = field(default=True, compare=False)

    @property
    def n_sites(self) -> int:
        return self.basis.n_sites

    def to_full(self) -> np.ndarray:
        full = np.zeros(2**self.basis.n_sites)
        full[self.basis.states] = self.amplitudes
        return full


@dataclass
class ExactResult:
    """Ground state from the exact backend, shaped like a DMRG result."""

    energy: float
    state: DenseState
    converged: bool = True
    max_discarded_weight: float = 0.0

    @property
    def n_sites(self) -> int:
        return self.state.n_sites


def solve_exact(
    params: ModelParams,
    basis: Optional[SectorBasis] = None,
    previous: Optional[DenseState] = None,
    tol: float = 1e-12,
    seed: int = 12345,
) -> ExactResult:
    """Sector ground state, optionally starting Lanczos from ``previous``."""
    if basis is None:
        basis = sector_basis(params.n_sites, 0.0)
    v0 = None if previous is None else previous.amplitudes
    energy, state = ground_state_lanczos(params, basis, tol=tol, seed=seed, v0=v0)
    return ExactResult(energy, state, state.converged)


def sector_basis(n_sites: int, total_sz: float = 0.0, max_sites: int = MAX_SITES) -> SectorBasis:
    if n_sites > max_sites:
        raise ValueError(f"n_sites={n_sites} exceeds the exact-diagonalization cap {max_sites}")
    n_up = n_sites / 2 + total_sz
    if n_up != int(n_up) or not 0 <= n_up <= n_sites:
        raise ValueError(f"total_sz={total_sz} not reachable with {n_sites} sites")
    n_down = n_sites - int(n_up)
    states = np.fromiter(
        (sum(1 << b for b in bits) for bits in combinations(range(n_sites), n_down)),
        dtype=np.int64,
        count=comb(n_sites, n_down),
    )
    states.sort()
    return SectorBasis(n_sites, float(total_sz), states)


def _site_bits(n_sites: int, site: int) -> int:
    return n_sites - site


def apply_hamiltonian(params: ModelParams, basis: SectorBasis, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (len(basis),):
        raise ValueError(f"vector length {v.shape} does not match sector size {len(basis)}")
    if params.n_sites != basis.n_sites:
        raise ValueError("basis and params disagree on n_sites")
    states = basis.states
    out = np.zeros_like(v)
    diag = np.zeros_like(v)
    for bond in build_bond_terms(params):
        b1 = _site_bits(params.n_sites, bond.left_site)
        b2 = _site_bits(params.n_sites, bond.right_site)
        s1 = (states >> b1) & 1
        s2 = (states >> b2) & 1
        aligned = s1 == s2
        diag += np.where(aligned, 0.25, -0.25) * (bond.coupling * bond.anisotropy)
        if bond.coupling != 0.0:
            src = np.nonzero(~aligned)[0]
            dst = basis.index_of(states[src] ^ ((1 << b1) | (1 << b2)))
            out[dst] += 0.5 * bond.coupling * v[src]
    out += diag * v
    return out


def sector_matrix(params: ModelParams, basis: SectorBasis) -> np.ndarray:
    """Dense sector Hamiltonian built column by column; oracle use only."""
    if len(basis) > DENSE_MAX_DIM:
        raise ValueError(f"sector dimension {len(basis)} exceeds dense cap {DENSE_MAX_DIM}")
    eye = np.eye(len(basis))
    return np.column_stack([apply_hamiltonian(params, basis, e) for e in eye])


def ground_state_dense(params: ModelParams, basis: SectorBasis) -> Tuple[float, DenseState]:
    w, v = np.linalg.eigh(sector_matrix(params, basis))
    return float(w[0]), DenseState(basis, _fix_sign(v[:, 0]))


def ground_state_lanczos(
    params: ModelParams,
    basis: SectorBasis,
    tol: float = 1e-12,
    max_iter: int = 500,
    seed: int = 12345,
    v0: Optional[np.ndarray] = None,
    strict: bool = False,
) -> Tuple[float, DenseState]:
    """Sector ground state. ``v0`` replaces the seeded random start vector.

    Non-convergence is reported through ``state.converged`` and
    ``state.residual``; with ``strict=True`` it raises :class:`LanczosError`.
    """
    if len(basis) == 0:
        raise ValueError("empty basis")
    if v0 is None:
        v0 = np.random.default_rng(seed).standard_normal(len(basis))
    res = lowest_eigenpair(
        lambda x: apply_hamiltonian(params, basis, x),
        v0,
        tol=tol,
        max_iter=max_iter,
        krylov_dim=min(80, len(basis)),
    )
    if strict and not res.converged:
        raise LanczosError("exact Lanczos did not converge", res.n_iter, res.residual)
    return res.energy, DenseState(basis, _fix_sign(res.vector), res.residual, res.converged)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def exact_entropy(state: DenseState, l_sites: int) -> float:
    """Von Neumann entropy (bits) of the right-hand ``l_sites`` block."""
    n = state.n_sites
    if not 1 <= l_sites <= n - 1:
        raise ValueError(f"l_sites must lie in [1, {n - 1}], got {l_sites}")
    probs = schmidt_probabilities(state, l_sites)
    return entropy_bits(probs)


def schmidt_probabilities(state: DenseState, l_sites: int) -> np.ndarray:
    """Eigenvalues of the reduced density matrix of the right-hand block, descending."""
    n = state.n_sites
    states = state.basis.states
    low = states & ((1 << l_sites) - 1)
    high = states >> l_sites
    # the block structure by down-spin count on the right keeps SVDs small
    right_count = _popcount(low)
    values = []
    for c in np.unique(right_count):
        sel = right_count == c
        rows, r_inv = np.unique(high[sel], return_inverse=True)
        cols, c_inv = np.unique(low[sel], return_inverse=True)
        m = np.zeros((len(rows), len(cols)))
        m[r_inv, c_inv] = state.amplitudes[sel]
        values.append(np.linalg.svd(m, compute_uv=False))
    s = np.sort(np.concatenate(values))[::-1]
    return s**2


def entropy_bits(probs: np.ndarray) -> float:
    p = np.asarray(probs, dtype=float)
    p = p[p > 0.0]
    return float(-(p * np.log2(p)).sum())


def _popcount(x: np.ndarray) -> np.ndarray:
    count = np.zeros_like(x)
    y = x.copy()
    while np.any(y):
        count += y & 1
        y >>= 1
    return count


def exact_overlap(a: DenseState, b: DenseState) -> float:
    if a.basis.n_sites != b.basis.n_sites or not np.array_equal(a.basis.states, b.basis.states):
        raise ValueError("states live in different sector bases")
    return float(abs(a.amplitudes @ b.amplitudes))
