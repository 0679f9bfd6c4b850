"""Multi-species Boltzmann collision operators, splittings, thresholds and relaxation runs."""

__version__ = "0.1.0"

from .collision import (CollisionOperator, CollisionResult, RadialProfile, SphereRule, a_function,
                        post_collision, q_full, q_ij, q_plus_direct_mc, q_plus_radial_majorant,
                        random_radial_mixture)
from .equilibrium import (DistributionVec, VelocityGrid, conserved_moments, entropy, maxwellian,
                          weighted_sup_norm)
from .linear import (LinearizedOperator, Mollifier, audit_control_A, audit_control_B,
                     audit_control_Q, nu_bounds, nu_floor, nu_ij, split_apply, theta_delta)
from .mixture import (AngularPart, KernelModel, Mixture, Weight, b_l1_sphere, b_sup,
                      grad_cutoff_cb, weight_eval)
from .simulator import RunReport, SimConfig, fit_decay_rate, run
from .thresholds import ThresholdReport, c_b_polynomial, find_k0
