"""Monte Carlo simulation and ordering checks for stochastic Volterra equations."""
from .errors import (ConfigError, CouplingError, DimensionError, DomainError, EmptyBatchError,
                     GridMismatchError, InsufficientDataError, NotPSDError, NumericalBlowupError,
                     ParameterError, QuadratureError, VolterraError)
from .grid import TimeGrid
from .kernels import (CallableKernel, ConstantKernel, Kernel, PowerKernel, build_cov_matrices,
                      build_drift_weights, kernel_from_spec, power_regularity)
from .matrixlab import factor_psd, kron, loewner_leq, same_gram, sym_sqrt
from .schemes import (CoefficientSet, GaussianInit, PathBatch, PointMass, UniformInit,
                      VolterraProcess, companion_paths, extend_continuous, simulate,
                      simulate_k_discrete, simulate_k_integrated)
from .models import (ConvexFunctionalFamily, PathFunctional, QuadraticRoughHeston,
                     functional_from_name, qrh_process, vix_premium)
from .ordering import (OrderHypothesisReport, OrderReport, RateResult, TupleSampler,
                       convergence_rate, mc_order_test, theorem_hypotheses)

__version__ = "0.1.0"
