"""Sampling-based stochastic maximum-likelihood training.

Each step draws one training sample, obtains a negative labeling from the
current model (CD-K: K sweeps from the ground truth; PCD: one sweep of a
chain persisted across steps), forms the indicator error between data and
negative labelings, and applies an SGD-with-momentum update to the pairwise
tables and, unless frozen, to the unary network.

The optimizer descends the negative log-likelihood: for a table entry the
descent gradient is the negated indicator error, while on the logits the
indicator error itself is the upstream (the potential is the negated logit,
so the two sign flips cancel).
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import ContractViolation
from .model import GridCrfModel, indicator_error
from .sampler import ChainState, SweepSchedule, gibbs_sweep
from . import net as unary_net
from . import rng


@dataclass
class UnaryNet:
    """Network spec plus its current parameters."""

    spec: unary_net.NetworkSpec
    params: List[unary_net.ConvParams]


@dataclass
class TrainerConfig:
    variant: str = "pcd"  # "cd" or "pcd"
    cd_steps: int = 1  # K for CD-K
    base_rate: float = 0.003
    decay: float = 10000.0
    momentum_coeff: float = 0.9  # network parameters (joint training)
    table_momentum: float = 0.0  # pairwise tables
    max_iterations: int = 12000
    freeze_unaries: bool = False
    seed: int = 0
    # The indicator error sums over all sites, so its scale on the logits is
    # ~num_sites times the per-pixel cross-entropy gradients the net was
    # pretrained with.  The net update therefore uses the per-site mean
    # (0 = auto 1/num_sites); tables keep raw edge counts.
    net_rate_scale: float = 0.0
    eval_interval: int = 0  # 0 disables the periodic accuracy hook
    eval_count: int = 8
    eval_burn_in: int = 20
    eval_samples: int = 50

    def __post_init__(self):
        if self.variant not in ("cd", "pcd"):
            raise ContractViolation(f"unknown trainer variant {self.variant!r}")
        if self.variant == "cd" and self.cd_steps < 1:
            raise ContractViolation("CD needs a positive sweep count")
        if self.base_rate <= 0 or self.decay <= 0:
            raise ContractViolation("base_rate and decay must be positive")
        if not 0 <= self.momentum_coeff < 1 or not 0 <= self.table_momentum < 1:
            raise ContractViolation("momentum coefficients must be in [0, 1)")

    def step_size(self, i: int) -> float:
        """Diminishing schedule: base_rate / (1 + i / decay), i starting at 1."""
        return self.base_rate / (1.0 + i / self.decay)


@dataclass
class TrainerState:
    steps_done: int = 0
    chains: Optional[List[ChainState]] = None  # PCD: one chain per sample
    table_velocity: Optional[list] = None
    net_velocity: Optional[list] = None
    index_rng: Optional[np.random.Generator] = None
    unary_cache: dict = field(default_factory=dict)


def draw_training_index(count: int, gen: np.random.Generator) -> int:
    """Uniform sample index in [0, count)."""
    if count < 1:
        raise ContractViolation("need at least one training sample")
    return int(gen.integers(count))


def init_chains(dataset, config: TrainerConfig) -> List[ChainState]:
    """PCD chains start at the ground-truth labelings."""
    return [
        ChainState(labeling=np.array(s.labels, copy=True),
                   seed=rng.derive_seed(config.seed, 1, d), sweep_count=0)
        for d, s in enumerate(dataset.samples)
    ]


def negative_sample(variant: str, model: GridCrfModel, unaries: np.ndarray,
                    y_data: np.ndarray, chains: Optional[List[ChainState]],
                    d: int, schedule: SweepSchedule, *, cd_steps: int = 1,
                    cd_seed: int = 0) -> np.ndarray:
    """Model-side labeling for the gradient estimate at sample d."""
    if variant == "cd":
        chain = ChainState(labeling=np.array(y_data, copy=True),
                           seed=cd_seed, sweep_count=0)
        for _ in range(cd_steps):
            chain = gibbs_sweep(chain, model, unaries, schedule)
        return chain.labeling
    if variant == "pcd":
        if chains is None:
            raise ContractViolation("PCD requires initialized persistent chains")
        chains[d] = gibbs_sweep(chains[d], model, unaries, schedule)
        return chains[d].labeling
    raise ContractViolation(f"unknown trainer variant {variant!r}")


def _unaries_for(dataset, d: int, model: GridCrfModel, net: Optional[UnaryNet],
                 config: TrainerConfig, state: TrainerState, want_cache: bool):
    """Unary field for sample d, plus forward caches when backprop follows."""
    if net is None:
        if model.fixed_unaries is None:
            raise ContractViolation("model has no unary source (no net, no fixed field)")
        return model.fixed_unaries, None
    if config.freeze_unaries:
        if d not in state.unary_cache:
            logits = unary_net.forward(net.spec, net.params, dataset.samples[d].image)
            state.unary_cache[d] = unary_net.unaries_from_logits(logits)
        return state.unary_cache[d], None
    if not want_cache:
        logits = unary_net.forward(net.spec, net.params, dataset.samples[d].image)
        return unary_net.unaries_from_logits(logits), None
    logits, caches = unary_net.forward(net.spec, net.params,
                                       dataset.samples[d].image, want_cache=True)
    return unary_net.unaries_from_logits(logits), caches


def train_step(i: int, dataset, model: GridCrfModel, net: Optional[UnaryNet],
               config: TrainerConfig, state: TrainerState,
               schedule: SweepSchedule) -> dict:
    """One update (iteration number i, 1-based); mutates model/net/state."""
    d = draw_training_index(len(dataset.samples), state.index_rng)
    y_data = dataset.samples[d].labels
    unaries, caches = _unaries_for(dataset, d, model, net, config, state,
                                   want_cache=True)
    y_neg = negative_sample(config.variant, model, unaries, y_data, state.chains,
                            d, schedule, cd_steps=config.cd_steps,
                            cd_seed=rng.derive_seed(config.seed, 2, i))
    err = indicator_error(model, y_data, y_neg)
    eta = config.step_size(i)

    for c in range(len(model.tables)):
        v = state.table_velocity[c]
        v *= config.table_momentum
        v -= err.tables[c]  # descent gradient of the NLL is -indicator error
        model.tables[c] -= eta * v

    if net is not None and not config.freeze_unaries:
        h, w = model.geometry.height, model.geometry.width
        scale = config.net_rate_scale or 1.0 / model.num_sites
        upstream = scale * unary_net.logit_upstream_from_unary_error(err.unary, h, w)
        grads, _ = unary_net.backward(net.spec, net.params,
                                      dataset.samples[d].image, upstream,
                                      caches=caches)
        for p, g, v in zip(net.params, grads, state.net_velocity):
            v.weight *= config.momentum_coeff
            v.weight += g.weight
            v.bias *= config.momentum_coeff
            v.bias += g.bias
            p.weight -= eta * v.weight
            p.bias -= eta * v.bias

    state.steps_done = i
    return {"iteration": i, "rate": eta, "sample": d}


def _training_accuracy(dataset, model, net, config, state) -> float:
    """Mean foreground accuracy over the first eval_count samples."""
    from .data import accuracy
    from .sampler import estimate_marginals, init_from_unary_marginals, max_marginal_decode

    scores = []
    schedule = SweepSchedule.chromatic(model)
    for d in range(min(config.eval_count, len(dataset.samples))):
        unaries, _ = _unaries_for(dataset, d, model, net, config, state,
                                  want_cache=False)
        seed = rng.derive_seed(config.seed, 4, state.steps_done, d)
        chain = ChainState(labeling=init_from_unary_marginals(unaries, seed),
                           seed=seed, sweep_count=0)
        est = estimate_marginals(chain, model, unaries, config.eval_burn_in,
                                 config.eval_samples, schedule=schedule)
        score = accuracy(max_marginal_decode(est), dataset.samples[d].labels)
        if score is not None:
            scores.append(score)
    return float(np.mean(scores)) if scores else float("nan")


def train(dataset, model: GridCrfModel, net: Optional[UnaryNet],
          config: TrainerConfig, schedule: Optional[SweepSchedule] = None,
          metrics_sink=None):
    """Run max_iterations steps; returns the metrics records.

    The model tables and network parameters are updated in place.  With a
    fixed seed the result is fully deterministic.
    """
    if not dataset.samples:
        raise ContractViolation("dataset is empty")
    for s in dataset.samples:
        if len(s.labels) != model.num_sites:
            raise ContractViolation("sample geometry does not match the model grid")
    if schedule is None:
        schedule = SweepSchedule.chromatic(model)

    state = TrainerState(
        table_velocity=[np.zeros_like(t) for t in model.tables],
        net_velocity=unary_net.zero_like_params(net.params) if net else [],
        index_rng=rng.stream(config.seed, rng.TAG_SAMPLE_INDEX),
    )
    if config.variant == "pcd":
        state.chains = init_chains(dataset, config)

    records = []

    def emit(record):
        records.append(record)
        if metrics_sink is not None:
            metrics_sink(record)

    for i in range(1, config.max_iterations + 1):
        record = train_step(i, dataset, model, net, config, state, schedule)
        if config.eval_interval and i % config.eval_interval == 0:
            record["train_accuracy"] = _training_accuracy(dataset, model, net,
                                                          config, state)
        emit(record)
    return records
