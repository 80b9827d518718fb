"""Alternating antiferromagnetic/ferromagnetic XXZ chain.

Sites are 1-based in the public API. Bond ``(2i-1, 2i)`` carries the
antiferromagnetic coupling, bond ``(2i, 2i+1)`` the ferromagnetic one.
Local basis ordering is ``(up, down)`` with ``Sz|up> = +1/2 |up>``; two-site
matrices use ``(uu, ud, du, dd)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import List

import numpy as np

SZ = np.array([[0.5, 0.0], [0.0, -0.5]])
SP = np.array([[0.0, 1.0], [0.0, 0.0]])
SM = SP.T.copy()
ID2 = np.eye(2)


class Boundary(str, Enum):
    OPEN = "open"


class BondKind(str, Enum):
    AF = "AF"
    F = "F"


@dataclass(frozen=True)
class ModelParams:
    n_sites: int
    j_af: float = 1.0
    j_f: float = -1.0
    delta_af: float = 1.0
    delta_f: float = 1.0
    boundary: Boundary = Boundary.OPEN

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise ValueError(f"n_sites must be an integer >= 2, got {self.n_sites}")
        if self.n_sites % 2:
            raise ValueError(f"n_sites must be even (complete AF dimers), got {self.n_sites}")
        if Boundary(self.boundary) is not Boundary.OPEN:
            raise ValueError("only open boundaries are supported")
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    def with_delta_f(self, delta_f: float) -> "ModelParams":
        return replace(self, delta_f=float(delta_f))


@dataclass(frozen=True)
class BondTerm:
    left_site: int
    right_site: int
    coupling: float
    anisotropy: float
    kind: BondKind


@dataclass(frozen=True)
class MatrixProductOperator:
    """Site tensors indexed ``(left, phys_out, phys_in, right)``."""

    site_tensors: tuple
    bond_dimension: int

    @property
    def n_sites(self) -> int:
        return len(self.site_tensors)

    def to_dense(self) -> np.ndarray:
        """Contract the whole MPO into a ``2**N x 2**N`` matrix."""
        acc = self.site_tensors[0][0]  # (out, in, right)
        for w in self.site_tensors[1:]:
            # acc: (O, I, a), w: (a, o, i, b) -> (O, o, I, i, b)
            acc = np.einsum("xya,aoib->xoyib", acc, w)
            dim = acc.shape[0] * acc.shape[1]
            acc = acc.reshape(dim, dim, acc.shape[-1])
        return acc[:, :, 0]


def build_bond_terms(params: ModelParams) -> List[BondTerm]:
    bonds = []
    for left in range(1, params.n_sites):
        if left % 2 == 1:
            bonds.append(BondTerm(left, left + 1, params.j_af, params.delta_af, BondKind.AF))
        else:
            bonds.append(BondTerm(left, left + 1, params.j_f, params.delta_f, BondKind.F))
    return bonds


def bond_matrix(coupling: float, anisotropy: float) -> np.ndarray:
    """``J (SxSx + SySy + Delta SzSz)`` on two spin-1/2 sites."""
    flip = 0.5 * (np.kron(SP, SM) + np.kron(SM, SP))
    return coupling * (flip + anisotropy * np.kron(SZ, SZ))


def dense_hamiltonian(params: ModelParams) -> np.ndarray:
    """Kronecker-product assembly of the full Hamiltonian; small chains only."""
    n = params.n_sites
    if n > 14:
        raise ValueError("dense Hamiltonian limited to n_sites <= 14")
    h = np.zeros((2**n, 2**n))
    for bond in build_bond_terms(params):
        left = np.eye(2 ** (bond.left_site - 1))
        right = np.eye(2 ** (n - bond.right_site))
        h += np.kron(np.kron(left, bond_matrix(bond.coupling, bond.anisotropy)), right)
    return h


def build_mpo(params: ModelParams) -> MatrixProductOperator:
    # Lower-triangular W: row 4 is the "start" channel, column 0 the "done" channel.
    n = params.n_sites
    bonds = build_bond_terms(params)
    tensors = []
    for site in range(1, n + 1):
        w = np.zeros((5, 2, 2, 5))
        w[0, :, :, 0] = ID2
        w[1, :, :, 0] = SP
        w[2, :, :, 0] = SM
        w[3, :, :, 0] = SZ
        w[4, :, :, 4] = ID2
        if site < n:
            bond = bonds[site - 1]
            w[4, :, :, 1] = 0.5 * bond.coupling * SM
            w[4, :, :, 2] = 0.5 * bond.coupling * SP
            w[4, :, :, 3] = bond.coupling * bond.anisotropy * SZ
        if site == 1:
            w = w[4:5]
        if site == n:
            w = w[:, :, :, 0:1]
        tensors.append(w)
    return MatrixProductOperator(tuple(tensors), 5)
