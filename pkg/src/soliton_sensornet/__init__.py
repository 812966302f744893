"""Quantum sensor-network metrology with three coupled bright solitons."""

from .fock import FockBasis3, StateVector, basis_new, state_gaussian, state_noon
from .hamiltonian import (
    TmsjjParams,
    build_hamiltonian,
    detect_lambda_cr,
    ground_state,
    noon_fidelity,
    spectrum,
)
from .loss import qfi_upper_bound, sigma_k, sigma_sweep
from .metrology import chi_qfi_pm, crb_overall, qfi_noon_multi, qfi_numeric

__version__ = "0.1.0"
