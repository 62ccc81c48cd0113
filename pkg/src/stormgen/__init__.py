"""stormgen: space-time bias correction and stochastic downscaling of daily
temperature fields, with a moment-based coarse-scale correction, a fine-scale
weather generator, an empirical quantile mapping reference, and a
verification suite."""

from .arma import ArmaModel, arma_acf, arma_fit, arma_simulate
from .correction import (CorrectionContext, correct, local_simple_correct,
                         simple_correct)
from .downscale import (DownscaleBundle, assemble_xstar, assemble_xstar_trend,
                        assemble_xstar_trend_var, generate)
from .eqm import TransferTable, eqm_apply, eqm_train
from .errors import (FactorizationError, FitError, IngestionError,
                     PipelineError, StormgenError)
from .evaluation import (EvalReport, acf_aggregated, crps_mean,
                         evaluate_catchment, iqd, iqd_catchment,
                         variogram_compare)
from .grids import (CalendarIndex, Field, GridSpec, OverlapMap, daily_range,
                    load_field, nearest_neighbor_regrid, overlap_from_grids,
                    save_field, upscale)
from .moments import (CovariateNormalizer, MomentCoefficients, MomentSurface,
                      destandardize, fit, predict, standardize)
from .randomfield import gaussian_field_sample
from .residual import ResidualModel, fit_residual_model, simulate_residuals
from .splitnormal import sn_cdf, sn_fit, sn_pdf, sn_quantile, sn_sample
from .synthetic import WorldSpec, generate_world
from .variogram import (EmpiricalVariogram, VariogramParams,
                        empirical_variogram, exponential_covariance,
                        exponential_semivariogram, fit_monthly, smooth_seasonal)

__version__ = "0.1.0"
