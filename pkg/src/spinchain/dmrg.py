"""Finite-system two-site DMRG."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .lanczos import lowest_eigenpair
from .model import ModelParams, build_mpo
from .mps import (
    MatrixProductState,
    TruncationRecord,
    canonicalize,
    neel_mps,
    normalize,
    svd_truncate,
)

log = logging.getLogger("spinchain.dmrg")

FIDELITY_M = 128
ENTROPY_M = 64


@dataclass(frozen=True)
class DmrgConfig:
    max_kept_m: int = FIDELITY_M
    n_sweeps_max: int = 20
    energy_tol: float = 1e-10
    local_solver_tol: float = 1e-11
    seed: int = 12345
    warm_start: Optional[MatrixProductState] = field(default=None, compare=False, repr=False)
    degeneracy_tol: float = 1e-12
    min_sweeps: int = 2

    def __post_init__(self):
        if self.max_kept_m < 2:
            raise ValueError("max_kept_m must be >= 2")
        if self.energy_tol <= 0:
            raise ValueError("energy_tol must be positive")
        if self.n_sweeps_max < 1:
            raise ValueError("n_sweeps_max must be >= 1")


@dataclass
class GroundStateResult:
    energy: float
    state: MatrixProductState
    max_discarded_weight: float
    sweep_energies: List[float]
    converged: bool
    truncations: List[TruncationRecord] = field(default_factory=list, repr=False)

    @property
    def n_sites(self) -> int:
        return self.state.n_sites


def _grow_left(env: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    # env (bra, w, ket) -> (bra', w', ket')
    t = np.tensordot(env, a, axes=(2, 0))
    t = np.tensordot(t, w, axes=([1, 2], [0, 2]))
    t = np.tensordot(a, t, axes=([0, 1], [0, 2]))
    return t.transpose(0, 2, 1)


def _grow_right(env: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    t = np.tensordot(a, env, axes=(2, 2))  # (ket, i, bra', w')
    t = np.tensordot(t, w, axes=([1, 3], [2, 3]))  # (ket, bra', w, o)
    t = np.tensordot(a, t, axes=([1, 2], [3, 1]))  # (bra, ket, w)
    return t.transpose(0, 2, 1)


def effective_matvec(left, w1, w2, right):
    """Closure applying the two-site effective Hamiltonian to a flat tensor."""
    shape = (left.shape[2], w1.shape[2], w2.shape[2], right.shape[2])

    def apply(x: np.ndarray) -> np.ndarray:
        t = np.tensordot(left, x.reshape(shape), axes=(2, 0))  # (a, w, s1, s2, b)
        t = np.tensordot(t, w1, axes=([1, 2], [0, 2]))  # (a, s2, b, o1, x)
        t = np.tensordot(t, w2, axes=([4, 1], [0, 2]))  # (a, b, o1, o2, y)
        t = np.tensordot(t, right, axes=([1, 4], [2, 1]))  # (a, o1, o2, a')
        return t.ravel()

    return apply, shape


def solve_effective(
    two_site_tensor: np.ndarray,
    environments: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    tol: float = 1e-11,
    seed: int = 12345,
    max_iter: int = 400,
) -> Tuple[float, np.ndarray]:
    """Lowest eigenpair of the effective two-site problem.

    ``environments`` is ``(left_block, mpo_left, mpo_right, right_block)``.
    The current tensor is the Lanczos start vector unless it vanishes.
    """
    left, w1, w2, right = environments
    apply, shape = effective_matvec(left, w1, w2, right)
    if two_site_tensor is not None and tuple(two_site_tensor.shape) != shape:
        raise ValueError(f"tensor shape {two_site_tensor.shape} != environment shape {shape}")
    v0 = None if two_site_tensor is None else two_site_tensor.ravel()
    if v0 is None or not np.any(v0):
        v0 = np.random.default_rng(seed).standard_normal(int(np.prod(shape)))
    res = lowest_eigenpair(apply, v0, tol=tol, max_iter=max_iter, krylov_dim=40)
    solve_effective.last = res
    return res.energy, res.vector.reshape(shape)


solve_effective.last = None


class _Sweeper:
    def __init__(self, params: ModelParams, state: MatrixProductState, config: DmrgConfig):
        self.config = config
        self.mpo = build_mpo(params).site_tensors
        # gauge is rebuilt from scratch so checkpointed and in-memory warm starts agree bitwise
        state = normalize(canonicalize(MatrixProductState(state.site_tensors, None), 0))
        self.tensors = list(state.site_tensors)
        n = len(self.tensors)
        self.left: list = [None] * n
        self.right: list = [None] * n
        self.left[0] = np.ones((1, 1, 1))
        self.right[n - 1] = np.ones((1, 1, 1))
        for k in range(n - 1, 0, -1):
            self.right[k - 1] = _grow_right(self.right[k], self.tensors[k], self.mpo[k])
        self.unconverged_local = 0

    def _optimize(self, k: int, move_right: bool) -> Tuple[float, TruncationRecord]:
        a, b = self.tensors[k], self.tensors[k + 1]
        theta = np.tensordot(a, b, axes=(2, 0))
        env = (self.left[k], self.mpo[k], self.mpo[k + 1], self.right[k + 1])
        energy, theta = solve_effective(theta, env, self.config.local_solver_tol, self.config.seed)
        if not solve_effective.last.converged:
            self.unconverged_local += 1
        dl, _, _, dr = theta.shape
        u, s, vh, discarded = svd_truncate(
            theta.reshape(dl * 2, 2 * dr), self.config.max_kept_m, self.config.degeneracy_tol
        )
        kept = len(s)
        if move_right:
            self.tensors[k] = u.reshape(dl, 2, kept)
            self.tensors[k + 1] = (s[:, None] * vh).reshape(kept, 2, dr)
            self.left[k + 1] = _grow_left(self.left[k], self.tensors[k], self.mpo[k])
        else:
            self.tensors[k] = (u * s).reshape(dl, 2, kept)
            self.tensors[k + 1] = vh.reshape(kept, 2, dr)
            self.right[k] = _grow_right(self.right[k + 1], self.tensors[k + 1], self.mpo[k + 1])
        return energy, TruncationRecord(k + 1, kept, discarded)

    def sweep(self) -> Tuple[float, List[TruncationRecord]]:
        n = len(self.tensors)
        records = []
        energy = float("nan")
        for k in range(n - 1):
            # the last pair keeps the center on its left site so the return pass can start
            energy, rec = self._optimize(k, move_right=k < n - 2)
            records.append(rec)
        for k in range(n - 3, -1, -1):
            energy, rec = self._optimize(k, move_right=False)
            records.append(rec)
        return energy, records

    def state(self) -> MatrixProductState:
        return MatrixProductState(tuple(self.tensors), 0)


def run_dmrg(params: ModelParams, config: DmrgConfig = DmrgConfig()) -> GroundStateResult:
    if config.warm_start is not None:
        if config.warm_start.n_sites != params.n_sites:
            raise ValueError("warm start has the wrong number of sites")
        start = config.warm_start
    else:
        start = neel_mps(params.n_sites)
    sweeper = _Sweeper(params, start, config)
    energies: List[float] = []
    records: List[TruncationRecord] = []
    converged = False
    for sweep in range(1, config.n_sweeps_max + 1):
        sweeper.unconverged_local = 0
        energy, records = sweeper.sweep()
        energies.append(energy)
        max_dw = max((r.discarded_weight for r in records), default=0.0)
        log.info(
            "sweep=%d energy=%.15g max_discarded_weight=%.3e max_bond=%d",
            sweep,
            energy,
            max_dw,
            max((r.kept for r in records), default=1),
            extra={"sweep": sweep, "energy": energy, "max_discarded_weight": max_dw},
        )
        if (
            len(energies) >= max(2, config.min_sweeps)
            and abs(energies[-1] - energies[-2]) < config.energy_tol
            and sweeper.unconverged_local == 0
        ):
            converged = True
            break
    state = normalize(sweeper.state())
    return GroundStateResult(
        energy=energies[-1],
        state=state,
        max_discarded_weight=max((r.discarded_weight for r in records), default=0.0),
        sweep_energies=energies,
        converged=converged,
        truncations=records,
    )


def continue_in_delta(
    params: ModelParams,
    previous: GroundStateResult,
    new_delta_f: float,
    config: DmrgConfig = DmrgConfig(),
) -> GroundStateResult:
    if previous.state.n_sites != params.n_sites:
        raise ValueError("previous state has the wrong number of sites")
    from dataclasses import replace

    return run_dmrg(params.with_delta_f(new_delta_f), replace(config, warm_start=previous.state))
