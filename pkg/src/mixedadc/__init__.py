"""DOA estimation and Cramer-Rao analysis for uniform linear arrays mixing
one-bit and high-precision ADCs."""
from ._backend import BACKEND
from .array_model import (ArrayConfig, MixedObservation, Placement, SourceScenario, ThresholdMatrix,
                          generate_thresholds, mixed_sample, one_bit_quantize, simulate,
                          steering_matrix, synthesize_snapshots)
from .crb import (asymptotic_crb, crb_lower_bound_doa, exact_crb, fim_mixed, lower_crb,
                  placement_score_S)
from .estimation import (make_grid, mbic, neg_log_likelihood, peak_pick, relax_refine, slim,
                         slim_relax_mbic)
from .placement import (exhaustive_oracle, optimal_edge_placement, performance_efficiency,
                        swap_optimize)

__version__ = "0.1.0"
