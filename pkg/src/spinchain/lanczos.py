"""Restarted Lanczos with full reorthogonalization for the lowest eigenpair."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class LanczosError(RuntimeError):
    def __init__(self, message: str, n_iter: int, residual: float):
        super().__init__(f"{message} (iterations={n_iter}, residual={residual:.3e})")
        self.n_iter = n_iter
        self.residual = residual


@dataclass
class LanczosResult:
    energy: float
    vector: np.ndarray
    n_iter: int
    residual: float
    converged: bool


def lowest_eigenpair(
    matvec: Callable[[np.ndarray], np.ndarray],
    v0: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 500,
    krylov_dim: int = 60,
) -> LanczosResult:
    """Lowest eigenpair of the symmetric operator ``matvec``.

    ``tol`` bounds the true residual ``|Hv - Ev|`` relative to ``max(1, |E|)``.
    Each restart begins from the current Ritz vector, so its residual is always
    measured with an explicit product rather than the Lanczos estimate.
    ``n_iter`` counts operator applications.
    """
    v = np.array(v0, dtype=float).ravel()
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("start vector is zero")
    v /= norm
    n_iter = 0
    best = None
    while True:
        w = matvec(v)
        n_iter += 1
        energy = float(v @ w)
        r = w - energy * v
        residual = float(np.linalg.norm(r))
        scale = max(1.0, abs(energy))
        if best is None or residual < best.residual:
            best = LanczosResult(energy, v, n_iter, residual, False)
        if residual <= tol * scale:
            return LanczosResult(energy, v, n_iter, residual, True)
        if n_iter >= max_iter:
            best.n_iter = n_iter
            return best

        basis = [v]
        alphas = [energy]
        betas = []
        beta = residual
        q = r / beta
        dim_cap = min(krylov_dim, v.size)
        while True:
            # two passes of classical Gram-Schmidt keep the basis orthonormal to rounding
            vs = np.array(basis)
            for _ in range(2):
                q -= vs.T @ (vs @ q)
            qn = np.linalg.norm(q)
            if qn < 1e-12:
                break
            q /= qn
            basis.append(q)
            betas.append(beta)
            w = matvec(q)
            n_iter += 1
            alpha = float(q @ w)
            alphas.append(alpha)
            w = w - alpha * q - beta * basis[-2]
            beta = float(np.linalg.norm(w))
            evals, evecs = _tridiag_eig(alphas, betas)
            estimate = beta * abs(evecs[-1, 0])
            if (
                estimate <= 0.1 * tol * max(1.0, abs(evals[0]))
                or len(basis) >= dim_cap
                or n_iter >= max_iter
                or beta < 1e-14 * scale
            ):
                break
            q = w / beta
        evals, evecs = _tridiag_eig(alphas, betas)
        v = np.array(basis).T @ evecs[:, 0]
        v /= np.linalg.norm(v)


def _tridiag_eig(alphas, betas):
    t = np.diag(alphas)
    if betas:
        off = np.array(betas)
        t += np.diag(off, 1) + np.diag(off, -1)
    return np.linalg.eigh(t)
