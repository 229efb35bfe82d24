"""Desk-scale certification toolkit for one-dimensional quantum spin chains.

Quantitative objects: decay-function norms, support-independent
Lieb-Robinson bounds, split-property defect estimates, the spectral-flow
generator with its decay envelopes, and the time-reversal index of matrix
product states; each closed-form inequality is certified against brute-force
computation on small chains.
"""

__version__ = "0.1.0"

from .chain import (DensePropagator, LocalOperator, SpectralData, Volume,
                    annulus, assemble_hamiltonian, commutator_norm,
                    conditional_expectation, embed, ground_state,
                    heisenberg_evolve, operator_norm, partial_trace)
from .errors import (AmbiguousWitness, BadGeometry, BadOrder, BetaTooSmall,
                     BoundViolation, ConfigError, DegenerateSplit,
                     DimensionMismatch, DivergentEnvelope, DivergentSum,
                     EmptyInteraction, NonSmooth, NotConverged, NotInjective,
                     NotInvariant, QuadratureFailure, SpincertError,
                     SupportOutsideVolume, VolumeTooLarge)
from .fnorm import (ConvolutionEstimate, FNormReport, FSpec, Interaction,
                    Term, convolution_constant, derivative_f_norm, f_eval,
                    f_norm, restrict)
from .lrcert import (AnnulusGeometry, DisjointGeometry, LRCertificate,
                     LRConstants, certify_lr, lr_bound_annulus,
                     lr_bound_disjoint, lr_constants)
from .specflow import (EnvelopeParams, FlowGenerator, WeightFunction,
                       generator_split_defect, hastings_generator, i_gamma,
                       i_gamma_envelope, omega1, omega2, q_envelope,
                       spectral_flow_unitary, transport_defects,
                       weight_function)
from .splitlab import (ChainState, CorrelationDecayResult, DefectCurve,
                       DefectPoint, correlation_decay_check,
                       decoupling_defect, decoupling_defect_curve,
                       quasi_equivalence_probe, split_product_state,
                       truncation_defect, truncation_defect_curve)
from .z2 import (DegeneracyReport, IndexResult, InvarianceReport, MpsTensor,
                 TimeReversal, apply_time_reversal,
                 check_interaction_invariance, entanglement_degeneracy_probe,
                 gauge_transform, mps_tr_index, right_canonical, stack,
                 stack_time_reversal)
