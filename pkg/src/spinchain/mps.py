"""Open-boundary matrix product states with real tensors.

Site tensors are indexed ``(left, physical, right)`` with physical index 0 for
spin up. ``canonical_center`` is a 0-based position into ``site_tensors``;
bond cuts are counted by the number of sites on their left (``1..N-1``).
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .exact import entropy_bits

NOISE_FLOOR = 1e-14
DENSE_MAX_SITES = 16
CHECKPOINT_MAGIC = b"MPS1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MatrixProductState:
    site_tensors: Tuple[np.ndarray, ...]
    canonical_center: Optional[int] = None

    def __post_init__(self):
        tensors = tuple(np.asarray(t, dtype=float) for t in self.site_tensors)
        if not tensors:
            raise ValueError("an MPS needs at least one site")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for a, b in zip(tensors, tensors[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError(f"bond mismatch {a.shape} -> {b.shape}")
        object.__setattr__(self, "site_tensors", tensors)

    @property
    def n_sites(self) -> int:
        return len(self.site_tensors)

    @property
    def bond_dims(self) -> List[int]:
        return [t.shape[2] for t in self.site_tensors[:-1]]

    @property
    def max_bond_dim(self) -> int:
        return max(self.bond_dims, default=1)


@dataclass(frozen=True)
class SchmidtSpectrum:
    cut_bond: int
    values: np.ndarray

    def entropy(self) -> float:
        return entropy_bits(self.values**2)


@dataclass(frozen=True)
class TruncationRecord:
    bond: int
    kept: int
    discarded_weight: float


_SPIN = {"up": 0, "u": 0, "+": 0, 0: 0, "down": 1, "d": 1, "-": 1, 1: 1}


def product_mps(n_sites: int, configuration: Sequence) -> MatrixProductState:
    if len(configuration) != n_sites:
        raise ValueError(f"configuration has {len(configuration)} entries for {n_sites} sites")
    tensors = []
    for spin in configuration:
        key = spin.lower() if isinstance(spin, str) else int(spin)
        if key not in _SPIN:
            raise ValueError(f"unknown spin label {spin!r}")
        t = np.zeros((1, 2, 1))
        t[0, _SPIN[key], 0] = 1.0
        tensors.append(t)
    return MatrixProductState(tuple(tensors), 0)


def neel_mps(n_sites: int) -> MatrixProductState:
    return product_mps(n_sites, ["up" if k % 2 == 0 else "down" for k in range(n_sites)])


def random_mps(n_sites: int, bond_dim: int, rng: np.random.Generator) -> MatrixProductState:
    """Random normalized state with bond dimensions capped by ``bond_dim``."""
    dims = [1] + [min(bond_dim, 2**k, 2 ** (n_sites - k)) for k in range(1, n_sites)] + [1]
    tensors = tuple(rng.standard_normal((dims[k], 2, dims[k + 1])) for k in range(n_sites))
    state = canonicalize(MatrixProductState(tensors), 0)
    return normalize(state)


def _sign_fix(u: np.ndarray, vh: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of each left singular vector made positive
    rows = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[rows, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, vh * signs[:, None]


def _qr_pos(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, r * signs[:, None]


def svd_truncate(
    matrix: np.ndarray,
    max_kept: int,
    degeneracy_tol: float = 1e-12,
    noise_floor: float = NOISE_FLOOR,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Truncated SVD ``U S Vh`` of ``matrix``; returns ``(U, S, Vh, discarded_weight)``.

    ``S`` is renormalized to unit 2-norm. Singular values within
    ``degeneracy_tol`` of the last kept one are also kept, up to
    ``2 * max_kept`` values in total.
    """
    if max_kept < 1:
        raise ValueError("max_kept must be >= 1")
    try:
        u, s, vh = np.linalg.svd(matrix, full_matrices=False)
    except np.linalg.LinAlgError:
        import scipy.linalg

        u, s, vh = scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesvd")
    total = float(np.sum(s**2))
    if total == 0.0:
        raise ValueError("cannot truncate a zero tensor")
    alive = max(1, int(np.count_nonzero(s > noise_floor * s[0])))
    keep = min(max_kept, alive)
    cap = min(2 * max_kept, alive)
    cut_value = s[keep - 1]
    while keep < cap and cut_value - s[keep] <= degeneracy_tol:
        keep += 1
    discarded = float(np.sum(s[keep:] ** 2)) / total
    u, vh = _sign_fix(u[:, :keep], vh[:keep])
    s = s[:keep] / np.linalg.norm(s[:keep])
    return u, s, vh, discarded


def _move_center_right(tensors: list, k: int) -> None:
    a = tensors[k]
    dl, d, dr = a.shape
    q, r = _qr_pos(a.reshape(dl * d, dr))
    tensors[k] = q.reshape(dl, d, q.shape[1])
    tensors[k + 1] = np.tensordot(r, tensors[k + 1], axes=(1, 0))


def _move_center_left(tensors: list, k: int) -> None:
    a = tensors[k]
    dl, d, dr = a.shape
    q, r = _qr_pos(a.reshape(dl, d * dr).T)
    tensors[k] = q.T.reshape(q.shape[1], d, dr)
    tensors[k - 1] = np.tensordot(tensors[k - 1], r.T, axes=(2, 0))


def canonicalize(state: MatrixProductState, center: int) -> MatrixProductState:
    n = state.n_sites
    if not 0 <= center < n:
        raise ValueError(f"center {center} outside [0, {n - 1}]")
    tensors = list(state.site_tensors)
    old = state.canonical_center
    if old is None:
        lo, hi = 0, n - 1
    else:
        lo = hi = old
    for k in range(lo, center):
        _move_center_right(tensors, k)
    for k in range(hi, center, -1):
        _move_center_left(tensors, k)
    return MatrixProductState(tuple(tensors), center)


def normalize(state: MatrixProductState) -> MatrixProductState:
    if state.canonical_center is None:
        state = canonicalize(state, 0)
    tensors = list(state.site_tensors)
    c = state.canonical_center
    tensors[c] = tensors[c] / np.linalg.norm(tensors[c])
    return MatrixProductState(tuple(tensors), c)


def inner(a: MatrixProductState, b: MatrixProductState) -> float:
    """Signed ``<a|b>`` by left-to-right transfer contraction."""
    if a.n_sites != b.n_sites:
        raise ValueError(f"site counts differ: {a.n_sites} vs {b.n_sites}")
    env = np.ones((1, 1))
    for x, y in zip(a.site_tensors, b.site_tensors):
        env = np.tensordot(env, y, axes=(1, 0))  # (xa, s, yb)
        env = np.tensordot(x, env, axes=([0, 1], [0, 1]))  # (xr, yb)
    return float(env[0, 0])


def overlap(a: MatrixProductState, b: MatrixProductState) -> float:
    return abs(inner(a, b))


def norm(state: MatrixProductState) -> float:
    return float(np.sqrt(max(inner(state, state), 0.0)))


def schmidt_spectrum(state: MatrixProductState, cut_bond: int) -> SchmidtSpectrum:
    n = state.n_sites
    if not 1 <= cut_bond <= n - 1:
        raise ValueError(f"cut_bond must lie in [1, {n - 1}], got {cut_bond}")
    centered = canonicalize(state, cut_bond - 1)
    a = centered.site_tensors[cut_bond - 1]
    s = np.linalg.svd(a.reshape(-1, a.shape[2]), compute_uv=False)
    s = s / np.linalg.norm(s)
    return SchmidtSpectrum(cut_bond, s[s > NOISE_FLOOR])


def truncate_bond(
    state: MatrixProductState,
    bond: int,
    max_kept: int,
    degeneracy_tol: float = 1e-12,
) -> Tuple[MatrixProductState, TruncationRecord]:
    """Truncate the bond between sites ``bond`` and ``bond + 1`` (1-based)."""
    if max_kept < 1:
        raise ValueError("max_kept must be >= 1")
    n = state.n_sites
    if not 1 <= bond <= n - 1:
        raise ValueError(f"bond must lie in [1, {n - 1}], got {bond}")
    c = state.canonical_center
    left, right = bond - 1, bond
    if c not in (left, right):
        raise ValueError(f"canonical center {c} is not adjacent to bond {bond}")
    tensors = list(state.site_tensors)
    a, b = tensors[left], tensors[right]
    theta = np.tensordot(a, b, axes=(2, 0))
    dl, _, _, dr = theta.shape
    u, s, vh, discarded = svd_truncate(theta.reshape(dl * 2, 2 * dr), max_kept, degeneracy_tol)
    if c == left:
        tensors[left] = (u * s).reshape(dl, 2, len(s))
        tensors[right] = vh.reshape(len(s), 2, dr)
    else:
        tensors[left] = u.reshape(dl, 2, len(s))
        tensors[right] = (s[:, None] * vh).reshape(len(s), 2, dr)
    record = TruncationRecord(bond, len(s), discarded)
    return MatrixProductState(tuple(tensors), c), record


def mps_to_dense(state: MatrixProductState) -> np.ndarray:
    if state.n_sites > DENSE_MAX_SITES:
        raise ValueError(f"dense conversion limited to {DENSE_MAX_SITES} sites")
    acc = state.site_tensors[0].reshape(2, -1)
    for t in state.site_tensors[1:]:
        acc = np.tensordot(acc, t, axes=(1, 0)).reshape(-1, t.shape[2])
    return acc[:, 0].copy()


def mpo_expectation(state: MatrixProductState, mpo) -> float:
    """``<psi|W|psi>`` for an MPO with ``(left, out, in, right)`` site tensors."""
    env = np.ones((1, 1, 1))
    for a, w in zip(state.site_tensors, mpo.site_tensors):
        env = np.tensordot(env, a, axes=(2, 0))  # (bra, w, i, ket')
        env = np.tensordot(env, w, axes=([1, 2], [0, 2]))  # (bra, ket', o, w')
        env = np.tensordot(a, env, axes=([0, 1], [0, 2]))  # (bra', ket', w')
        env = env.transpose(0, 2, 1)
    return float(env[0, 0, 0])


def total_sz(state: MatrixProductState) -> float:
    from .model import ID2, SZ, MatrixProductOperator

    n = state.n_sites
    tensors = []
    for k in range(n):
        w = np.zeros((2, 2, 2, 2))
        w[0, :, :, 0] = ID2
        w[1, :, :, 0] = SZ
        w[1, :, :, 1] = ID2
        if k == 0:
            w = w[1:2]
        if k == n - 1:
            w = w[:, :, :, 0:1]
        tensors.append(w)
    return mpo_expectation(state, MatrixProductOperator(tuple(tensors), 2))


def save_checkpoint(state: MatrixProductState, path) -> None:
    """Write ``state`` in the ``MPS1`` binary format, atomically."""
    payload = bytearray()
    for t in state.site_tensors:
        payload += struct.pack("<3I", *t.shape)
        payload += np.ascontiguousarray(t, dtype="<f8").tobytes()
    digest = hashlib.blake2b(bytes(payload), digest_size=8).digest()
    header = CHECKPOINT_MAGIC + struct.pack("<BI", CHECKPOINT_VERSION, state.n_sites)
    from .io import atomic_write_bytes

    atomic_write_bytes(Path(path), header + bytes(payload) + digest)


def load_checkpoint(path) -> MatrixProductState:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an MPS1 checkpoint")
    version, n_sites = struct.unpack_from("<BI", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    payload = data[9:-8]
    if hashlib.blake2b(payload, digest_size=8).digest() != data[-8:]:
        raise ValueError(f"{path}: checksum mismatch")
    tensors = []
    offset = 0
    for _ in range(n_sites):
        shape = struct.unpack_from("<3I", payload, offset)
        offset += 12
        count = shape[0] * shape[1] * shape[2]
        t = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += 8 * count
        tensors.append(t.astype(float))
    if offset != len(payload):
        raise ValueError(f"{path}: trailing bytes in payload")
    return MatrixProductState(tuple(tensors), None)
