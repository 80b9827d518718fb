"""Delta_F scans at fixed chain length, peak location and 1/N extrapolation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dmrg import DmrgConfig, GroundStateResult, run_dmrg
from .exact import MAX_SITES, ExactResult, sector_basis, solve_exact
from .model import ModelParams
from .observables import default_block, entanglement_entropy, fidelity, fidelity_susceptibility

log = logging.getLogger("spinchain.scan")

AUTO_ED_MAX_SITES = 16
MAX_FLAGGED_FRACTION = 0.2


class Observable(str, Enum):
    SUSCEPTIBILITY = "susceptibility"
    ENTROPY = "entropy"
    BOTH = "both"

    @property
    def wants_fidelity(self) -> bool:
        return self is not Observable.ENTROPY

    @property
    def wants_entropy(self) -> bool:
        return self is not Observable.SUSCEPTIBILITY


class Backend(str, Enum):
    ED = "ed"
    DMRG = "dmrg"
    AUTO = "auto"

    def resolve(self, n_sites: int) -> "Backend":
        if self is Backend.AUTO:
            return Backend.ED if n_sites <= AUTO_ED_MAX_SITES else Backend.DMRG
        return self


class PeakError(ValueError):
    """The sampled maximum is not bracketed by the grid."""


class ScanAborted(RuntimeError):
    pass


def uniform_grid(start: float, stop: float, step: float) -> Tuple[float, ...]:
    count = int(round((stop - start) / step)) + 1
    return tuple(float(round(start + k * step, 12)) for k in range(count))


DEFAULT_GRID = uniform_grid(1.6, 3.0, 0.05)
# Default chain lengths per observable. Entropy sizes keep the N/2 - 1 cut on
# an AF bond; the susceptibility family is a choice, not a derived set.
SUSCEPTIBILITY_SIZES = (26, 38, 54, 78)
ENTROPY_SIZES = (20, 40, 60, 80, 100)


@dataclass(frozen=True)
class ScanConfig:
    n_sites: int
    delta_f_grid: Tuple[float, ...] = DEFAULT_GRID
    delta_step: float = 1e-3
    observable: Observable = Observable.BOTH
    dmrg: DmrgConfig = DmrgConfig()
    refine: bool = False
    refine_width: float = 0.2
    refine_points: int = 21
    backend: Backend = Backend.AUTO
    model: Optional[ModelParams] = None
    l_sites: Optional[int] = None
    allow_f_cut: bool = False
    cold_pairing: bool = False

    def __post_init__(self):
        grid = tuple(float(x) for x in self.delta_f_grid)
        object.__setattr__(self, "delta_f_grid", grid)
        object.__setattr__(self, "observable", Observable(self.observable))
        object.__setattr__(self, "backend", Backend(self.backend))
        if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("delta_f_grid must be strictly ascending with at least 3 points")
        if self.delta_step <= 0:
            raise ValueError("delta_step must be positive")
        if self.refine and self.refine_points < 5:
            raise ValueError("refine_points must be >= 5")
        params = self.params()
        block = self.block()
        if not 1 <= block <= params.n_sites - 1:
            raise ValueError(f"l_sites={block} invalid for {params.n_sites} sites")
        if self.observable.wants_entropy and not self.allow_f_cut and self.cut_crosses_f_bond():
            raise ValueError(
                f"the entropy cut for N={self.n_sites}, L={block} crosses a ferromagnetic bond; "
                "use N divisible by 4 or set allow_f_cut"
            )
        if self.backend.resolve(self.n_sites) is Backend.ED and self.n_sites > MAX_SITES:
            raise ValueError(f"ED backend limited to {MAX_SITES} sites")

    def params(self, delta_f: Optional[float] = None) -> ModelParams:
        base = self.model if self.model is not None else ModelParams(self.n_sites)
        if base.n_sites != self.n_sites:
            base = replace(base, n_sites=self.n_sites)
        return base if delta_f is None else base.with_delta_f(delta_f)

    def block(self) -> int:
        return default_block(self.n_sites) if self.l_sites is None else self.l_sites

    def cut_crosses_f_bond(self) -> bool:
        left_sites = self.n_sites - self.block()
        return left_sites % 2 == 0


@dataclass(frozen=True)
class ScanSample:
    delta_f: float
    energy: float
    fidelity: float
    susceptibility: float
    entropy: float
    max_discarded_weight: float
    converged: bool
    refined: bool = False


@dataclass(frozen=True)
class Peak:
    location: float
    value: float


@dataclass
class ScanResult:
    config: ScanConfig
    samples: List[ScanSample]
    peaks: Dict[Observable, Peak]
    states: Dict[float, tuple] = field(default_factory=dict, repr=False)

    @property
    def primary(self) -> Observable:
        if Observable.SUSCEPTIBILITY in self.peaks:
            return Observable.SUSCEPTIBILITY
        return Observable.ENTROPY

    @property
    def peak_location(self) -> float:
        return self.peaks[self.primary].location

    @property
    def peak_value(self) -> float:
        return self.peaks[self.primary].value


@dataclass(frozen=True)
class ScalingFit:
    points: Tuple[Tuple[float, float], ...]
    slope: float
    intercept: float
    rms_residual: float
    residuals: Tuple[float, ...] = ()


def locate_peak(xs: Sequence[float], ys: Sequence[float], n_fit: int = 5) -> Peak:
    """Argmax refined by a least-squares parabola through the nearest samples.

    Raises :class:`PeakError` when the largest sample sits on either end of
    ``xs``. Falls back to the raw argmax if the local fit is not concave or its
    vertex leaves the fitted window.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) < 3:
        raise PeakError("need at least 3 samples to bracket a maximum")
    order = np.argsort(x)
    x, y = x[order], y[order]
    k = int(np.argmax(y))
    if k == 0 or k == len(x) - 1:
        raise PeakError(f"maximum at grid boundary delta_f={x[k]:g}; widen the grid")
    nearest = np.argsort(np.abs(x - x[k]), kind="stable")[: min(n_fit, len(x))]
    xf, yf = x[nearest], y[nearest]
    shift = x[k]
    a, b, c = np.polyfit(xf - shift, yf, 2)
    if a >= 0:
        return Peak(float(x[k]), float(y[k]))
    vertex = -b / (2 * a)
    if not xf.min() - shift <= vertex <= xf.max() - shift:
        return Peak(float(x[k]), float(y[k]))
    return Peak(float(vertex + shift), float(c - b * b / (4 * a)))


def finite_size_fit(points: Sequence[Tuple[float, float]]) -> ScalingFit:
    """Least-squares line of peak location against ``1/N``; the intercept is the N -> inf limit."""
    grouped: Dict[int, List[float]] = {}
    for n, loc in points:
        grouped.setdefault(int(n), []).append(float(loc))
    if len(grouped) < 2:
        raise ValueError("finite-size fit needs at least 2 distinct chain lengths")
    ns = sorted(grouped)
    inv = np.array([1.0 / n for n in ns])
    loc = np.array([np.mean(grouped[n]) for n in ns])
    slope, intercept = np.polyfit(inv, loc, 1)
    resid = loc - (slope * inv + intercept)
    return ScalingFit(
        points=tuple(zip(inv.tolist(), loc.tolist())),
        slope=float(slope),
        intercept=float(intercept),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
        residuals=tuple(resid.tolist()),
    )


class _Solver:
    """Warm-started ground-state solves for one backend."""

    def __init__(self, config: ScanConfig):
        self.config = config
        self.backend = config.backend.resolve(config.n_sites)
        self.basis = sector_basis(config.n_sites) if self.backend is Backend.ED else None

    def solve(self, delta_f: float, previous=None):
        params = self.config.params(delta_f)
        if self.backend is Backend.ED:
            prev = None if previous is None else previous.state
            return solve_exact(params, self.basis, previous=prev, seed=self.config.dmrg.seed)
        warm = None if previous is None else previous.state
        return run_dmrg(params, replace(self.config.dmrg, warm_start=warm))


def _measure(config: ScanConfig, solver: _Solver, delta_f: float, previous, refined: bool):
    gs = solver.solve(delta_f, previous)
    f = s = e = float("nan")
    shifted = None
    dw = gs.max_discarded_weight
    converged = gs.converged
    if config.observable.wants_fidelity:
        warm = None if config.cold_pairing else gs
        shifted = solver.solve(delta_f + config.delta_step, warm)
        f = fidelity(gs, shifted)
        s = fidelity_susceptibility(f, config.n_sites, config.delta_step)
        dw = max(dw, shifted.max_discarded_weight)
        converged = converged and shifted.converged
    if config.observable.wants_entropy:
        e = entanglement_entropy(gs, config.block()).entropy_bits
    sample = ScanSample(delta_f, gs.energy, f, s, e, dw, converged, refined)
    log.info(
        "N=%d delta_f=%.6f energy=%.12f fidelity=%.15f susceptibility=%.8g entropy=%.10f dw=%.2e converged=%s",
        config.n_sites, delta_f, gs.energy, f, s, e, dw, converged,
    )
    return sample, gs, shifted


def refine_grid(config: ScanConfig, center: float) -> Tuple[float, ...]:
    lo, hi = config.delta_f_grid[0], config.delta_f_grid[-1]
    half = config.refine_width / 2
    pts = np.linspace(center - half, center + half, config.refine_points)
    return tuple(float(round(p, 12)) for p in pts if lo <= p <= hi)


def scan_delta_f(
    config: ScanConfig,
    on_sample: Optional[Callable[[ScanSample, object], None]] = None,
    completed: Sequence[ScanSample] = (),
    resume_state=None,
    keep_states: bool = False,
    require_peak: bool = True,
) -> ScanResult:
    """Walk the grid in ascending order with warm-started continuation.

    ``on_sample(sample, chain_state)`` is called after each point, where
    ``chain_state`` is the ground state the next point starts from.
    ``completed`` and ``resume_state`` resume an interrupted scan: points
    already in ``completed`` are skipped and the chain restarts from
    ``resume_state``. With ``require_peak=False`` an unbracketed maximum is
    left out of ``peaks`` (and skips refinement) instead of raising.
    """
    solver = _Solver(config)
    samples: List[ScanSample] = list(completed)
    states: Dict[float, tuple] = {}
    done = {(s.delta_f, s.refined) for s in samples}

    def walk(grid, refined, start):
        chain = start
        for delta_f in grid:
            if (delta_f, refined) in done:
                continue
            sample, gs, shifted = _measure(config, solver, delta_f, chain, refined)
            chain = gs if shifted is None or config.cold_pairing else shifted
            samples.append(sample)
            done.add((delta_f, refined))
            if keep_states:
                states[delta_f] = (gs, shifted)
            if on_sample is not None:
                on_sample(sample, chain)

    coarse_done = all((x, False) in done for x in config.delta_f_grid)
    walk(config.delta_f_grid, False, None if coarse_done else resume_state)
    _check_flagged(samples, config)

    if config.refine:
        peak_obs = Observable.SUSCEPTIBILITY if config.observable.wants_fidelity else Observable.ENTROPY
        coarse = [s for s in samples if not s.refined]
        try:
            center = _argmax_location(coarse, peak_obs)
        except PeakError:
            if require_peak:
                raise
            center = None
        if center is not None:
            fine = [x for x in refine_grid(config, center) if x not in config.delta_f_grid]
            started = any(s.refined for s in samples)
            # the refinement chain starts cold so resumed and fresh runs agree
            walk(fine, True, resume_state if started else None)
            _check_flagged(samples, config)

    samples.sort(key=lambda s: (s.delta_f, s.refined))
    peaks = {}
    wanted = [
        obs
        for obs, on in ((Observable.SUSCEPTIBILITY, config.observable.wants_fidelity),
                        (Observable.ENTROPY, config.observable.wants_entropy))
        if on
    ]
    for obs in wanted:
        try:
            peaks[obs] = _peak(samples, obs)
        except PeakError:
            if require_peak:
                raise
            log.warning("N=%d: no bracketed %s peak", config.n_sites, obs.value)
    return ScanResult(config, samples, peaks, states)


def _values(samples, obs: Observable):
    good = [s for s in samples if s.converged]
    xs = [s.delta_f for s in good]
    ys = [s.susceptibility if obs is Observable.SUSCEPTIBILITY else s.entropy for s in good]
    return xs, ys


def _argmax_location(samples, obs: Observable) -> float:
    xs, ys = _values(samples, obs)
    if len(xs) < 3:
        raise PeakError("not enough converged samples to locate a peak")
    k = int(np.argmax(ys))
    if k == 0 or k == len(xs) - 1:
        raise PeakError(f"{obs.value} maximum at grid boundary delta_f={xs[k]:g}; widen the grid")
    return xs[k]


def _peak(samples, obs: Observable) -> Peak:
    xs, ys = _values(samples, obs)
    return locate_peak(xs, ys)


def _check_flagged(samples, config: ScanConfig) -> None:
    if not samples:
        return
    flagged = sum(not s.converged for s in samples)
    if flagged > MAX_FLAGGED_FRACTION * len(samples):
        raise ScanAborted(
            f"N={config.n_sites}: {flagged} of {len(samples)} points did not converge"
        )
