"""Cross-band RF/optical modulation: constellation design, detection and analysis."""
from .analysis import (LgcbParams, mi_lgcb, mi_lgcb_expanded, q_function, qam_sep,
                       sep_approx_linear, sep_upper_bound)
from .channel import (LinkSnr, MetricWeights, Received, RngStream, metric_weights,
                      noise_sample, transmit, weights_for)
from .constellation import (Constellation3D, InvalidOrderError, LinearMap, QamGrid,
                            build_cbpam_constellation, build_learned_constellation,
                            build_linear_constellation, build_mcbm_constellation,
                            export_constellation, load_constellation, make_linear_map,
                            make_qam)
from .detection import Detection, PlanePoint, detect_fast, detect_ml, project_to_plane
from .estimate import (ConfigurationError, ConfusionMatrix, ContinuousInputSpec,
                       mi_continuous_nested, mi_discrete, run_confusion, sample_continuous,
                       sep_from_confusion)
from .estimators import CrossBandDetector, CrossBandModulator
from .linopt import LatticePair, P1Solution, lattice_dsq, solve_p1
from .shaping import (LearnedConstellation, MlpParams, ShapingConfig, grad_check,
                      loss_distance, loss_energy, train_shaper)

__version__ = "0.1.0"
