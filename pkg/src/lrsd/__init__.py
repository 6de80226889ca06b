"""Low-rank plus sparse matrix decomposition with missing and noisy data."""
from lrsd.admm import AdmmConfig, solve_eadm, solve_iadm
from lrsd.alm import AlmConfig, solve_alm
from lrsd.linalg import ObservationMask, shrink_entries, shrink_singular
from lrsd.problems import Instance, gen_rpcp_missing, gen_spcp, load_instance, save_instance
from lrsd.pspg import PspgConfig, solve_pspg
from lrsd.result import DecompositionResult

__version__ = "0.1.0"

SOLVERS = {"eadm": solve_eadm, "iadm": solve_iadm, "alm": solve_alm, "pspg": solve_pspg}

__all__ = [
    "AdmmConfig", "AlmConfig", "PspgConfig", "DecompositionResult", "Instance",
    "ObservationMask", "SOLVERS", "gen_rpcp_missing", "gen_spcp", "load_instance",
    "save_instance", "shrink_entries", "shrink_singular", "solve_alm", "solve_eadm",
    "solve_iadm", "solve_pspg",
]
