from .walk import LatticeScale, WalkSpec, mass_decompose, momentum_symbol, validate_unitarity
from .continuum import BMatrices, b_matrices, hamiltonian_symbol
from .canonical import Handedness, canonicalize, lorentz_trace_test, pauli_decompose, weyl_residual
from .evolve import appendix_a_bound, continuum_data, dispersion, evolve_packet, one_step_norm, scaling_fit
from .spec_io import parse_walk, read_walk, serialize_walk, write_walk
from .exceptions import WalkFileError, WeylWalkError
from .settings import WeylWalkSettings, get_settings
