"""Skew products over expanding circle, baker and solenoid bases: invariant
(multi-)graphs and bones by pullback, Lyapunov exponents, SRB measures and
thermodynamic formalism."""

__version__ = "0.1.0"

from .base_dynamics import (Baker, BaseMeasureSampler, Circle, Solenoid, UnsupportedVariant,  # noqa: E402
                            baker_inverse, baker_step, baker_to_solenoid, circle_step, preorbit,
                            sample_base)
from .fiber_maps import (BumpProfile, CubicPinch, DomainError, PaperPoly, Perturbed,  # noqa: E402
                         bump_eval, eval_map, find_fixed_points, isotopy_eval,
                         validate_s_weak_contractive, validate_weak_pair)
from .skew_system import (SkewSystem, c2_distance, default_system, forward_orbit,  # noqa: E402
                          perturb, validate_system)
from .invariant_graph import (FiberAttractor, MultiGraphSample, graph_value,  # noqa: E402
                              invariance_residual, pullback_fiber, sample_multigraph, usc_probe)
from .ergodic import (EmpiricalMeasure, KingmanEstimate, birkhoff_average,  # noqa: E402
                      graph_lyapunov, graph_measure, kingman_rate, measure_discrepancy,
                      srb_estimate)
from .thermodynamics import (Potential, PressureResult, lift_potential,  # noqa: E402
                             lifted_pressure_check, pressure_separated, pushforward_equilibrium,
                             transfer_pressure, variational_check)
