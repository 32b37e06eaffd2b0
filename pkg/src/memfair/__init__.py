"""Group fairness gaps of classifiers that memorize part of their training population."""

from .errors import (MemfairError, DegenerateError, DegenerateSlice, DegenerateGroup,
                     DegenerateClassGroup, InconsistentMasses, MissingPhi, NumericalBreakdown,
                     ZeroRateDivision, PerfectClassDegenerate, InvalidLambda,
                     RatioConditionFailed, DenominatorVanishes, SolutionNotProbability)
from .gaps import (GapReport, Method, base_gaps, closed_form_gaps, eqodds_gap, eqopp_gap,
                   gaps_by_enumeration, gaps_from_table, scenario_phi, sp_gap)
from .linfeas import (FeasibilityResult, LinearSystem, Status, check_certificate, check_witness,
                      solve_feasibility)
from .population import (BaseClassifier, JointDistribution, LabelGroupJoint, MemorizedComposition,
                         Scenario, Strictness, ValidationReport, derive_phi, joint_table,
                         unmemorized_conditionals, unmemorized_masses, validate, validate_inputs)
from .simulator import (AliasTable, EmpiricalGapReport, MCVerification, SampleCounts,
                        empirical_gaps, expected_counts, mc_verify, sample)
from .zero_bias import (BoundsReport, Mode, Verdict, eqopp_bounds, farkas_sp_check,
                        map_lambda_to_composition, solve_eqodds_zero, solve_eqopp_zero,
                        solve_sp_zero, sp_bounds)

__version__ = "0.1.0"
