"""Measurement-based quantum computation on symmetry-protected topological chains:
projective symmetries, MPS tools, model Hamiltonians, dual states and processes,
adaptive MBQC simulation and effective-noise analysis."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .symmetry import (FactorSystem, FiniteAbelianGroup, OnSiteRep, ProjectiveRep, cluster_onsite_rep,  # noqa: F401
                       cluster_rep, factor_system_of, is_maximally_noncommutative, pauli_rep, z2z2)
from .tensors import (FiniteMps, MpsTensor, PfcsSpec, canonical_form, correlation_length,  # noqa: F401
                      entanglement_spectrum, reduced_density, trace_distance, transfer_channel)
from .models import (Layout2D, LocalHamiltonian, SymmetryAction, Term, check_symmetry,  # noqa: F401
                     cluster_chain_hamiltonian, quasi1d_hamiltonian, transverse_field_perturbation)
from .ground_state import (cluster_tensor, exact_ground_state, synthesize_in_phase_tensor,  # noqa: F401
                           variational_mps_ground_state, verify_condition1)
from .spt_dual import (disentangler, dual_hamiltonian, dual_state, extract_protected_decomposition,  # noqa: F401
                       kt_transform)
from .mbqc import (Protocol, chain_protocol, dual_process, gate_basis, map_protocol_to_2d,  # noqa: F401
                   quasi1d_protocol, run_2d, run_adaptive)
from .noise import (Channel, correlation_decay_fit, diamond_distance_bounds, effective_channel,  # noqa: F401
                    factorization_report, noise_part, noisy_circuit_simulate, perturbation_continuity_sweep,
                    theorem1_check)
