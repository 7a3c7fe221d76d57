"""Forward step-up composite-likelihood tests for two-group differences."""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from . import core, estimation, harness, models, nulldist, selection, testing
from ._kernels import BACKEND
from .core import CompositionRule, GroupSample, ModelSpec, ParamLayout, augment, make_rule, remove
from .errors import (ConditioningError, ConvergenceError, DataFormatError, InvalidArgumentError,
                     NumericDomainError)
from .estimation import bootstrap_cov, delta_mcle, jackknife_cov, known_cov, mcle
from .models import GaussianMeanModel, LatentCategoricalModel, simulate_gaussian, simulate_latent
from .nulldist import (OrderedGammaDensity, fscl_null_density, p_value, permutation_null,
                       simulate_null)
from .selection import cl_bic_two_sample, effective_dof, select_ncl
from .testing import (TestResult, forward_search, fscl_search, lssb_stat, lssbw_stat, uminp_stat,
                      wald_stat)
