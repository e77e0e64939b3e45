"""Grid-structured CRF with CNN unaries, trained by sampling-based
stochastic maximum likelihood (contrastive and persistent contrastive
divergence), with an exact enumeration oracle for small instances."""

from .data import Dataset, Sample, accuracy, generate_synthetic
from .errors import ContractViolation, FormatError, GridCrfError, SizeLimitError
from .model import (GradientBundle, GridCrfModel, GridGeometry, OffsetClass,
                    energy, energy_delta, indicator_error, offsets_from_spec)
from .oracle import (ExactSummary, enumerate_model, exact_conditional,
                     exact_gradient, exact_loglik, exact_sample)
from .sampler import (ChainState, MarginalEstimate, SweepSchedule,
                      estimate_marginals, gibbs_sweep, init_from_unary_marginals,
                      local_conditional, max_marginal_decode)
from .trainer import TrainerConfig, TrainerState, UnaryNet, train, train_step

__version__ = "0.1.0"
