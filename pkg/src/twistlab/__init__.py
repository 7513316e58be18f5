"""twistlab: one-axis-twisting spin metrology toolkit.

Exact Dicke-basis simulation of collective spins, quantum Fisher information
in closed form and from state evolution, twist-untwist interferometry with
method-of-moments error analysis, finite-range Ising rings with analytic
variance formulas, and sphere optimizers plus a CLI for reproducible sweeps.
"""

__version__ = "0.1.0"

from .numerics import (ExtrapolationDivergenceError, IndeterminateRatioError,
                       PHI_LADDER)
from .spin_core import (CollectiveOperator, CollectiveState, Direction, X_AXIS,
                        Y_AXIS, Z_AXIS, coherent_state, collective_operator,
                        expectation, ghz_state, husimi_q, oat_evolve, rotate,
                        variance)
from .optimizer import (FULL_SPHERE, HEMISPHERE, JointMaximum, SphereDomain,
                        SphereMaximum, maximize_joint, maximize_on_sphere)
from .oat_metrology import (ProtocolSpec, ScanRecord, asymptotic_predictor,
                            ghz_parity_error, max_qfi_over_directions,
                            mom_reciprocal_at_zero, mom_reciprocal_error,
                            phase_diagram_scan, protocol_state,
                            qfi_closed_form, qfi_numeric, small_phi_slope,
                            small_phi_variance_rate, time_averaged_qfi)
from .lattice_fr import (LatticeState, LatticeSystem, build_system,
                         dicke_to_lattice, fr_evolve, fr_interpolation_forms,
                         fr_max_qfi, fr_mom_reciprocal, fr_optimal_protocol,
                         fr_protocol_state, fr_variance_analytic,
                         lattice_moments, lattice_rotate, lattice_variance,
                         moment_table, oat_identity_diagnostic, plus_state,
                         qfi_decibels)

__all__ = [name for name in dir() if not name.startswith("_")]
