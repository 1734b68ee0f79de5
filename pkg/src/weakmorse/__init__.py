"""Discrete Morse-index tools for weak-force N-body action functionals."""
from .core import (ClusterIndex, MassSystem, center_basis, center_of_mass,
                   cluster_potentials, grad_potential, hessian_apply,
                   hessian_dense, potential_strong, potential_weak,
                   project_center_of_mass)
from .path import (DiscretePath, PathVariation, eval_at, graded_times, h1_inner,
                   make_path, min_pair_separation, resample, uniform_times)
from .action import (ActionFunctional, ActionValue, action_gradient,
                     action_hessian_form, action_value, assemble_hessian)
from .spectral import (SpectralReport, block_sturm_count, morse_index,
                       negative_count_stability, spectral_report)
from .critical import (BounceContinuation, CriticalPointRecord, DoubleWellFunctional,
                       WeakCriticalSequence, continuation, fit_lambda, minimize,
                       mountain_pass, newton_refine, two_body_loop_seed,
                       verify_index_bound)
from .collision import (CollisionEvent, ThresholdRule, audit_generalized_solution,
                        blow_up, bump, collision_direction, detect_collisions,
                        direction_angle, isolation_check, pair_frame, pair_frame_inverse,
                        restricted_quadform_convergence)
from .limitprob import (IndexReport, LimitOrbit, asymptotic_angle_numeric,
                        asymptotic_angle_theory, index_i, index_i_lambda,
                        integrate_limit_orbit, limit_action_value, parabola_oracle,
                        transverse_count, transverse_index)

__version__ = "0.1.0"
