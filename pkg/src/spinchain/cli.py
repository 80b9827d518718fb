"""Command-line front end.

Exit codes: 0 success, 1 computational non-convergence, 2 usage or
configuration error. ``SPINCHAIN_LOG`` sets the log level (default WARNING).
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import multiprocessing
import os
import queue
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .config import ConfigError, RunConfig, load_config, parse_config
from .dmrg import DmrgConfig, run_dmrg
from .exact import MAX_SITES, solve_exact
from .io import atomic_write_text
from .lanczos import LanczosError
from .mps import load_checkpoint, save_checkpoint
from .observables import default_block, entanglement_entropy
from .scan import (
    Backend,
    Observable,
    PeakError,
    ScanAborted,
    ScanConfig,
    ScanSample,
    finite_size_fit,
    scan_delta_f,
)

log = logging.getLogger("spinchain.cli")

CSV_COLUMNS = (
    "n_sites",
    "delta_f",
    "energy",
    "fidelity",
    "susceptibility",
    "entropy_bits",
    "max_discarded_weight",
    "converged",
)

EXIT_OK, EXIT_NONCONVERGED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class NonConvergence(Exception):
    pass


def fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format(value, ".17g")
    return str(value)


def summary_line(**fields) -> str:
    return " ".join(f"{k}={fmt(v)}" for k, v in fields.items()) + "\n"


def parse_summary(text: str) -> Dict[str, str]:
    out = {}
    for token in text.split():
        key, sep, value = token.partition("=")
        if sep:
            out[key] = value
    return out


def samples_to_csv(n_sites: int, samples: Sequence[ScanSample]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for s in samples:
        writer.writerow(
            [
                n_sites,
                fmt(s.delta_f),
                fmt(s.energy),
                fmt(s.fidelity),
                fmt(s.susceptibility),
                fmt(s.entropy),
                fmt(s.max_discarded_weight),
                fmt(s.converged),
            ]
        )
    return buf.getvalue()


def samples_from_csv(text: str, coarse_grid: Sequence[float]) -> List[ScanSample]:
    grid = set(coarse_grid)
    rows = csv.DictReader(io.StringIO(text))
    samples = []
    for row in rows:
        x = float(row["delta_f"])
        samples.append(
            ScanSample(
                delta_f=x,
                energy=float(row["energy"]),
                fidelity=float(row["fidelity"]),
                susceptibility=float(row["susceptibility"]),
                entropy=float(row["entropy_bits"]),
                max_discarded_weight=float(row["max_discarded_weight"]),
                converged=row["converged"] == "true",
                refined=x not in grid,
            )
        )
    return samples


# ---------------------------------------------------------------- ground


def _solve(config: RunConfig, params):
    backend = config.backend.resolve(params.n_sites)
    if backend is Backend.ED:
        if params.n_sites > MAX_SITES:
            raise UsageError(f"ED backend limited to {MAX_SITES} sites")
        return backend, solve_exact(params, seed=config.dmrg.seed)
    return backend, run_dmrg(params, config.dmrg)


def cmd_ground(config: RunConfig, out: Path) -> int:
    params = config.model
    backend, gs = _solve(config, params)
    block = default_block(params.n_sites) if params.n_sites > 2 else 1
    entropy = entanglement_entropy(gs, block).entropy_bits
    line = summary_line(
        command="ground",
        n_sites=params.n_sites,
        delta_f=params.delta_f,
        backend=backend.value,
        energy=gs.energy,
        entropy_bits=entropy,
        l_sites=block,
        max_discarded_weight=gs.max_discarded_weight,
        converged=gs.converged,
    )
    atomic_write_text(out / f"ground_N{params.n_sites}.summary", line)
    if config.checkpoint and backend is Backend.DMRG:
        save_checkpoint(gs.state, out / f"ground_N{params.n_sites}.mps")
    sys.stdout.write(line)
    return EXIT_OK if gs.converged else EXIT_NONCONVERGED


# ---------------------------------------------------------------- scan


class ScanWriter:
    """Owns every file written by a scan; workers only send it messages."""

    def __init__(self, out: Path, checkpoint: bool):
        self.out = out
        self.checkpoint = checkpoint
        self.progress: Dict[int, List[ScanSample]] = {}

    def partial_paths(self, n: int):
        return self.out / f"scan_N{n}.partial.csv", self.out / f"scan_N{n}.chain.mps"

    def on_sample(self, n: int, sample: ScanSample, chain) -> None:
        self.progress.setdefault(n, []).append(sample)
        if not self.checkpoint:
            return
        csv_path, mps_path = self.partial_paths(n)
        if chain is not None and hasattr(chain.state, "site_tensors"):
            save_checkpoint(chain.state, mps_path)
        rows = sorted(self.progress[n], key=lambda s: s.delta_f)
        atomic_write_text(csv_path, samples_to_csv(n, rows))

    def finish(self, n: int, result) -> str:
        atomic_write_text(self.out / f"scan_N{n}.csv", samples_to_csv(n, result.samples))
        fields = dict(command="scan", n_sites=n, observable=result.config.observable.value)
        for obs in (Observable.SUSCEPTIBILITY, Observable.ENTROPY):
            if obs in result.peaks:
                fields[f"peak_{obs.value}_location"] = result.peaks[obs].location
                fields[f"peak_{obs.value}_value"] = result.peaks[obs].value
        fields["max_discarded_weight"] = max(s.max_discarded_weight for s in result.samples)
        fields["converged"] = all(s.converged for s in result.samples)
        line = summary_line(**fields)
        atomic_write_text(self.out / f"scan_N{n}.summary", line)
        for path in self.partial_paths(n):
            if path.exists():
                path.unlink()
        return line


def _resume_inputs(writer: ScanWriter, scan: ScanConfig, resume: bool):
    if not resume:
        return (), None
    csv_path, mps_path = writer.partial_paths(scan.n_sites)
    if not csv_path.exists():
        return (), None
    completed = samples_from_csv(csv_path.read_text(), scan.delta_f_grid)
    writer.progress[scan.n_sites] = list(completed)
    state = None
    if mps_path.exists():
        from .dmrg import GroundStateResult

        mps = load_checkpoint(mps_path)
        state = GroundStateResult(float("nan"), mps, 0.0, [], True)
    log.info("resuming N=%d after %d completed points", scan.n_sites, len(completed))
    return completed, state


def _scan_job(scan: ScanConfig, completed, resume_state, channel=None):
    def forward(sample, chain):
        if channel is not None:
            channel.put((scan.n_sites, sample, chain))

    return scan_delta_f(
        scan, on_sample=forward, completed=completed, resume_state=resume_state, require_peak=False
    )


def cmd_scan(config: RunConfig, out: Path, workers: int, resume: bool) -> int:
    if config.scan is None:
        raise UsageError("scan needs a [scan] section in the config")
    scans = [config.scan_for(n) for n in config.scan_sizes]
    writer = ScanWriter(out, config.checkpoint or resume)
    jobs = [(s, *_resume_inputs(writer, s, resume)) for s in scans]
    results = {}
    errors = []
    if workers <= 1 or len(jobs) == 1:
        for scan, completed, state in jobs:
            try:
                results[scan.n_sites] = scan_delta_f(
                    scan,
                    on_sample=lambda smp, ch, n=scan.n_sites: writer.on_sample(n, smp, ch),
                    completed=completed,
                    resume_state=state,
                    require_peak=False,
                )
            except (ScanAborted, PeakError) as exc:
                errors.append(exc)
    else:
        with multiprocessing.Manager() as manager:
            channel = manager.Queue()
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {
                    pool.submit(_scan_job, scan, completed, state, channel): scan.n_sites
                    for scan, completed, state in jobs
                }
                pending = set(futures)
                while pending:
                    try:
                        n, sample, chain = channel.get(timeout=0.5)
                        writer.on_sample(n, sample, chain)
                    except queue.Empty:
                        pass
                    for fut in [f for f in pending if f.done()]:
                        pending.discard(fut)
                while True:
                    try:
                        n, sample, chain = channel.get_nowait()
                    except queue.Empty:
                        break
                    writer.on_sample(n, sample, chain)
                for fut, n in futures.items():
                    try:
                        results[n] = fut.result()
                    except (ScanAborted, PeakError) as exc:
                        errors.append(exc)
    for n in sorted(results):
        sys.stdout.write(writer.finish(n, results[n]))
        result = results[n]
        wanted = [o for o in (Observable.SUSCEPTIBILITY, Observable.ENTROPY)
                  if (o is Observable.SUSCEPTIBILITY and result.config.observable.wants_fidelity)
                  or (o is Observable.ENTROPY and result.config.observable.wants_entropy)]
        for obs in wanted:
            if obs not in result.peaks:
                errors.append(PeakError(f"N={n}: {obs.value} maximum not bracketed by the grid"))
    for exc in errors:
        print(f"error: {exc}", file=sys.stderr)
    if any(isinstance(e, ScanAborted) for e in errors):
        return EXIT_NONCONVERGED
    if errors:
        return EXIT_USAGE
    if not all(s.converged for r in results.values() for s in r.samples):
        return EXIT_NONCONVERGED
    return EXIT_OK


# ---------------------------------------------------------------- fit


def cmd_fit(files: Sequence[Path], observable: Observable, out: Path) -> int:
    if len(files) < 2:
        raise UsageError("fit needs at least 2 peak files")
    key = f"peak_{observable.value}_location"
    points = []
    for path in files:
        try:
            record = parse_summary(Path(path).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc}") from exc
        if key not in record or "n_sites" not in record:
            raise UsageError(f"{path} has no {key} record")
        points.append((int(record["n_sites"]), float(record[key])))
    try:
        fit = finite_size_fit(points)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    table = "".join(f"{fmt(x)} {fmt(y)}\n" for x, y in fit.points)
    atomic_write_text(out / f"fit_{observable.value}.dat", "# inverse_n delta_f_max\n" + table)
    line = summary_line(
        command="fit",
        observable=observable.value,
        n_points=len(fit.points),
        slope=fit.slope,
        intercept=fit.intercept,
        rms_residual=fit.rms_residual,
        residuals=",".join(fmt(r) for r in fit.residuals),
    )
    atomic_write_text(out / f"fit_{observable.value}.summary", line)
    sys.stdout.write(line)
    return EXIT_OK


# ---------------------------------------------------------------- entropy profile / validate


def cmd_entropy_profile(config: RunConfig, out: Path) -> int:
    params = config.model
    _, gs = _solve(config, params)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("n_sites", "delta_f", "l_sites", "entropy_bits"))
    for l_sites in range(1, params.n_sites):
        point = entanglement_entropy(gs, l_sites)
        w.writerow((params.n_sites, fmt(params.delta_f), l_sites, fmt(point.entropy_bits)))
    atomic_write_text(out / f"entropy_profile_N{params.n_sites}.csv", buf.getvalue())
    sys.stdout.write(summary_line(command="entropy-profile", n_sites=params.n_sites, converged=gs.converged))
    return EXIT_OK if gs.converged else EXIT_NONCONVERGED


def cmd_validate(config: RunConfig, out: Path) -> int:
    from .validate import ORACLE_DELTAS, ORACLE_SIZES, oracle_suite

    cases = oracle_suite(ORACLE_SIZES, ORACLE_DELTAS, config.dmrg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("n_sites", "delta_f", "energy_error", "entropy_error", "fidelity_error", "variational", "passed"))
    for c in cases:
        w.writerow(
            (c.n_sites, fmt(c.delta_f), fmt(c.energy_error), fmt(c.entropy_error),
             fmt(c.fidelity_error), fmt(c.variational), fmt(c.passed))
        )
    atomic_write_text(out / "validate.csv", buf.getvalue())
    ok = all(c.passed for c in cases)
    line = summary_line(
        command="validate",
        cases=len(cases),
        failed=sum(not c.passed for c in cases),
        max_energy_error=max(c.energy_error for c in cases),
        max_entropy_error=max(c.entropy_error for c in cases),
        max_fidelity_error=max(c.fidelity_error for c in cases),
        passed=ok,
    )
    atomic_write_text(out / "validate.summary", line)
    sys.stdout.write(line)
    return EXIT_OK if ok else EXIT_NONCONVERGED


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinchain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", type=Path, required=needs_config, help="INI run configuration")
        p.add_argument("--out", type=Path, help="output directory (overrides [run] output_dir)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config entry")

    common(sub.add_parser("ground", help="one ground state: energy and diagnostics"))
    p = sub.add_parser("scan", help="Delta_F scan(s): CSV plus peak summary per chain length")
    common(p)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--resume", action="store_true", help="continue from partial checkpoint files")
    p = sub.add_parser("fit", help="linear 1/N extrapolation of scan peak records")
    p.add_argument("peak_files", nargs="*", type=Path)
    p.add_argument("--observable", choices=["susceptibility", "entropy"], default="susceptibility")
    p.add_argument("--out", type=Path, required=False)
    common(sub.add_parser("entropy-profile", help="entropy versus block size at fixed Delta_F"))
    common(sub.add_parser("validate", help="ED vs DMRG oracle suite"), needs_config=False)
    return parser


def _output_dir(config: Optional[RunConfig], flag: Optional[Path]) -> Path:
    out = flag if flag is not None else (config.output_dir if config is not None else None)
    if out is None:
        raise UsageError("no output directory: pass --out or set [run] output_dir")
    if not Path(out).is_dir():
        raise UsageError(f"output directory {out} does not exist")
    return Path(out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("SPINCHAIN_LOG", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "fit":
            return cmd_fit(args.peak_files, Observable(args.observable), _output_dir(None, args.out))
        if args.config is not None:
            config = load_config(args.config, args.set)
        else:
            config = parse_config("", args.set)
        out = _output_dir(config, args.out)
        if args.command == "ground":
            return cmd_ground(config, out)
        if args.command == "scan":
            return cmd_scan(config, out, args.workers, args.resume)
        if args.command == "entropy-profile":
            return cmd_entropy_profile(config, out)
        if args.command == "validate":
            return cmd_validate(config, out)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LanczosError, ScanAborted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
