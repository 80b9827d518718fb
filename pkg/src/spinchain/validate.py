"""Cross-check of the DMRG backend against exact diagonalization."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, List

from .dmrg import ENTROPY_M, DmrgConfig, continue_in_delta, run_dmrg
from .exact import sector_basis, solve_exact
from .model import ModelParams
from .observables import default_block, entanglement_entropy, fidelity

ORACLE_SIZES = (8, 10, 12)
ORACLE_DELTAS = (1.0, 1.8, 2.3, 2.8)
ENERGY_TOL = 1e-8
ENTROPY_TOL = 1e-6
FIDELITY_TOL = 1e-6
VARIATIONAL_SLACK = 1e-10


@dataclass(frozen=True)
class OracleCase:
    n_sites: int
    delta_f: float
    energy_ed: float
    energy_dmrg: float
    entropy_ed: float
    entropy_dmrg: float
    fidelity_ed: float
    fidelity_dmrg: float

    @property
    def energy_error(self) -> float:
        return abs(self.energy_dmrg - self.energy_ed)

    @property
    def entropy_error(self) -> float:
        return abs(self.entropy_dmrg - self.entropy_ed)

    @property
    def fidelity_error(self) -> float:
        return abs(self.fidelity_dmrg - self.fidelity_ed)

    @property
    def variational(self) -> bool:
        return self.energy_dmrg >= self.energy_ed - VARIATIONAL_SLACK

    @property
    def passed(self) -> bool:
        return (
            self.energy_error < ENERGY_TOL
            and self.entropy_error < ENTROPY_TOL
            and self.fidelity_error < FIDELITY_TOL
            and self.variational
        )


def oracle_case(n_sites: int, delta_f: float, delta: float = 1e-3, config: DmrgConfig = None) -> OracleCase:
    config = config or DmrgConfig(max_kept_m=ENTROPY_M)
    params = ModelParams(n_sites, delta_f=delta_f)
    basis = sector_basis(n_sites)
    ed_a = solve_exact(params, basis)
    ed_b = solve_exact(params.with_delta_f(delta_f + delta), basis, previous=ed_a.state)
    dm_a = run_dmrg(params, config)
    dm_b = continue_in_delta(params, dm_a, delta_f + delta, config)
    block = default_block(n_sites)
    return OracleCase(
        n_sites,
        delta_f,
        ed_a.energy,
        dm_a.energy,
        entanglement_entropy(ed_a, block).entropy_bits,
        entanglement_entropy(dm_a, block).entropy_bits,
        fidelity(ed_a, ed_b),
        fidelity(dm_a, dm_b),
    )


def oracle_suite(
    sizes: Iterable[int] = ORACLE_SIZES,
    deltas: Iterable[float] = ORACLE_DELTAS,
    config: DmrgConfig = None,
) -> List[OracleCase]:
    return [oracle_case(n, d, config=config) for n in sizes for d in deltas]
