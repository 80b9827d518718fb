"""Run configuration files.

The format is INI (``configparser``): sections ``[model]``, ``[run]``,
``[dmrg]`` and ``[scan]``, each holding flat ``key = value`` pairs. Every key
is optional; omitted keys take the defaults below.

``[scan] grid`` accepts either a comma-separated list or ``start:stop:step``.
``[scan] sizes`` lists the chain lengths for ``scan``; it defaults to
``[model] n_sites`` when that is set, and otherwise to the standard family
for the observable (entropy sizes for ``entropy`` and ``both``). An empty ``l_sites`` means ``N/2 - 1``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Tuple

from .dmrg import DmrgConfig
from .model import Boundary, ModelParams
from .scan import DEFAULT_GRID, ENTROPY_SIZES, SUSCEPTIBILITY_SIZES, Backend, Observable, ScanConfig, uniform_grid


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    backend: Backend = Backend.AUTO
    dmrg: DmrgConfig = DmrgConfig()
    scan: Optional[ScanConfig] = None
    sizes: Tuple[int, ...] = ()
    output_dir: Optional[Path] = None
    checkpoint: bool = False

    def scan_for(self, n_sites: int) -> ScanConfig:
        template = self.scan or ScanConfig(n_sites=self.model.n_sites, dmrg=self.dmrg)
        return replace(
            template,
            n_sites=n_sites,
            model=replace(self.model, n_sites=n_sites),
            dmrg=self.dmrg,
            backend=self.backend,
        )

    @property
    def scan_sizes(self) -> Tuple[int, ...]:
        return self.sizes or (self.model.n_sites,)


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _grid(text: str) -> Tuple[float, ...]:
    text = text.strip()
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        return uniform_grid(start, stop, step)
    return tuple(float(x) for x in text.split(",") if x.strip())


_SECTIONS = {
    "model": {"n_sites", "j_af", "j_f", "delta_af", "delta_f", "boundary"},
    "run": {"backend", "output_dir", "checkpoint"},
    "dmrg": {"max_kept_m", "n_sweeps_max", "energy_tol", "local_solver_tol", "seed", "degeneracy_tol", "min_sweeps"},
    "scan": {
        "sizes", "grid", "delta_step", "observable", "refine", "refine_width",
        "refine_points", "l_sites", "allow_f_cut", "cold_pairing",
    },
}


def parse_config(text: str, overrides: Sequence[str] = ()) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, name, value.strip())
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(cp[section]) - _SECTIONS[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")

    def get(section, key, conv, default):
        if cp.has_option(section, key):
            raw = cp.get(section, key)
            try:
                return conv(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
        return default

    try:
        model = ModelParams(
            n_sites=get("model", "n_sites", int, 12),
            j_af=get("model", "j_af", float, 1.0),
            j_f=get("model", "j_f", float, -1.0),
            delta_af=get("model", "delta_af", float, 1.0),
            delta_f=get("model", "delta_f", float, 1.0),
            boundary=get("model", "boundary", lambda s: Boundary(s.strip().lower()), Boundary.OPEN),
        )
        base = DmrgConfig()
        dmrg = DmrgConfig(
            max_kept_m=get("dmrg", "max_kept_m", int, base.max_kept_m),
            n_sweeps_max=get("dmrg", "n_sweeps_max", int, base.n_sweeps_max),
            energy_tol=get("dmrg", "energy_tol", float, base.energy_tol),
            local_solver_tol=get("dmrg", "local_solver_tol", float, base.local_solver_tol),
            seed=get("dmrg", "seed", int, base.seed),
            degeneracy_tol=get("dmrg", "degeneracy_tol", float, base.degeneracy_tol),
            min_sweeps=get("dmrg", "min_sweeps", int, base.min_sweeps),
        )
        backend = get("run", "backend", lambda s: Backend(s.strip().lower()), Backend.AUTO)
        output = get("run", "output_dir", lambda s: Path(s.strip()) if s.strip() else None, None)
        checkpoint = get("run", "checkpoint", _bool, False)
        sizes = get("scan", "sizes", lambda s: tuple(int(x) for x in s.split(",") if x.strip()), ())
        scan = None
        if cp.has_section("scan"):
            observable = get("scan", "observable", lambda s: Observable(s.strip().lower()), Observable.BOTH)
            if not sizes and not cp.has_option("model", "n_sites"):
                sizes = SUSCEPTIBILITY_SIZES if observable is Observable.SUSCEPTIBILITY else ENTROPY_SIZES
            scan = ScanConfig(
                n_sites=(sizes or (model.n_sites,))[0],
                delta_f_grid=get("scan", "grid", _grid, DEFAULT_GRID),
                delta_step=get("scan", "delta_step", float, 1e-3),
                observable=observable,
                dmrg=dmrg,
                refine=get("scan", "refine", _bool, False),
                refine_width=get("scan", "refine_width", float, 0.2),
                refine_points=get("scan", "refine_points", int, 21),
                backend=backend,
                model=replace(model, n_sites=(sizes or (model.n_sites,))[0]),
                l_sites=get("scan", "l_sites", lambda s: int(s) if s.strip() else None, None),
                allow_f_cut=get("scan", "allow_f_cut", _bool, False),
                cold_pairing=get("scan", "cold_pairing", _bool, False),
            )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(model, backend, dmrg, scan, sizes, output, checkpoint)


def load_config(path, overrides: Sequence[str] = ()) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)


def serialize_config(config: RunConfig) -> str:
    m, d = config.model, config.dmrg
    lines = [
        "[model]",
        f"n_sites = {m.n_sites}",
        f"j_af = {m.j_af!r}",
        f"j_f = {m.j_f!r}",
        f"delta_af = {m.delta_af!r}",
        f"delta_f = {m.delta_f!r}",
        f"boundary = {m.boundary.value}",
        "",
        "[run]",
        f"backend = {config.backend.value}",
        f"output_dir = {'' if config.output_dir is None else config.output_dir}",
        f"checkpoint = {str(config.checkpoint).lower()}",
        "",
        "[dmrg]",
        f"max_kept_m = {d.max_kept_m}",
        f"n_sweeps_max = {d.n_sweeps_max}",
        f"energy_tol = {d.energy_tol!r}",
        f"local_solver_tol = {d.local_solver_tol!r}",
        f"seed = {d.seed}",
        f"degeneracy_tol = {d.degeneracy_tol!r}",
        f"min_sweeps = {d.min_sweeps}",
    ]
    if config.scan is not None:
        s = config.scan
        lines += [
            "",
            "[scan]",
            f"sizes = {', '.join(str(n) for n in config.sizes)}",
            f"grid = {', '.join(repr(x) for x in s.delta_f_grid)}",
            f"delta_step = {s.delta_step!r}",
            f"observable = {s.observable.value}",
            f"refine = {str(s.refine).lower()}",
            f"refine_width = {s.refine_width!r}",
            f"refine_points = {s.refine_points}",
            f"l_sites = {'' if s.l_sites is None else s.l_sites}",
            f"allow_f_cut = {str(s.allow_f_cut).lower()}",
            f"cold_pairing = {str(s.cold_pairing).lower()}",
        ]
    return "\n".join(lines) + "\n"
