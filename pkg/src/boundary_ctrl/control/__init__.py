"""Controllability checks, spectral perturbations, control synthesis and envelopes."""

from .checks import (ControllabilityReport, check_chambrion_conditions, check_normal_system,
                     consecutive_couplings, convergents, rational_witness)
from .envelope import (ControlEnvelope, PiecewiseConstantControl, SmoothEnvelope,
                       assemble_boundary_run, reconstruct_vector_potential, smooth_control)
from .perturbation import (AuxiliarySystem, PerturbationSpec, alpha_sequence, auxiliary_system,
                           build_perturbations, first_primes, nu_sequence)
from .synthesis import SynthesisResult, fidelity, synthesize_control, transfer_fidelity

__all__ = [
    "AuxiliarySystem", "ControlEnvelope", "ControllabilityReport", "PerturbationSpec",
    "PiecewiseConstantControl", "SmoothEnvelope", "SynthesisResult", "alpha_sequence",
    "assemble_boundary_run", "auxiliary_system", "build_perturbations", "check_chambrion_conditions", "check_normal_system",
    "consecutive_couplings", "convergents", "fidelity", "first_primes", "nu_sequence",
    "rational_witness", "reconstruct_vector_potential", "smooth_control", "synthesize_control",
    "transfer_fidelity",
]
