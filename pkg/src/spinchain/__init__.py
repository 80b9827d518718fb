"""Ground states, fidelity susceptibility and entanglement entropy of the
alternating antiferromagnetic/ferromagnetic XXZ spin-1/2 chain."""

from .dmrg import DmrgConfig, GroundStateResult, continue_in_delta, run_dmrg
from .exact import ExactResult, sector_basis, solve_exact
from .model import ModelParams, build_bond_terms, build_mpo, bond_matrix
from .observables import entanglement_entropy, fidelity, fidelity_susceptibility
from .scan import ScanConfig, finite_size_fit, locate_peak, scan_delta_f

__all__ = [
    "DmrgConfig",
    "ExactResult",
    "GroundStateResult",
    "ModelParams",
    "ScanConfig",
    "bond_matrix",
    "build_bond_terms",
    "build_mpo",
    "continue_in_delta",
    "entanglement_entropy",
    "fidelity",
    "fidelity_susceptibility",
    "finite_size_fit",
    "locate_peak",
    "run_dmrg",
    "scan_delta_f",
    "sector_basis",
    "solve_exact",
]
