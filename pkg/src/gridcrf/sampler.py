"""Gibbs sampling over the grid CRF.

A sweep resamples every site once from its local conditional.  Two sweep
schedules are supported:

* raster-sequential: sites in raster order, each update visible to the next;
* chromatic-parallel: sites are partitioned into color classes such that no
  two same-color sites share a factor; a class is resampled as a block from
  the pre-class state, which is equivalent to any within-class order and is
  what makes the sweep vectorizable.

Randomness is counter-based: the uniform consumed by site n during sweep s
depends only on (chain seed, s, n), so results do not depend on the order in
which a color class is actually processed.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractViolation
from .model import GridCrfModel
from . import rng


@dataclass
class ChainState:
    """One Gibbs chain: current labeling plus its random-stream position."""

    labeling: np.ndarray
    seed: int
    sweep_count: int = 0


@dataclass
class MarginalEstimate:
    """Per-site label counts over recorded samples."""

    counts: np.ndarray  # (N, L) integer
    samples_used: int


@dataclass
class SweepSchedule:
    """Site visit order for one sweep."""

    kind: str  # "raster" or "chromatic"
    color_classes: Optional[list] = None  # list of int arrays, chromatic only

    @classmethod
    def raster(cls) -> "SweepSchedule":
        return cls(kind="raster")

    @classmethod
    def chromatic(cls, model: GridCrfModel) -> "SweepSchedule":
        """Greedy coloring of the conflict graph induced by the offsets."""
        n = model.num_sites
        colors = np.full(n, -1, dtype=np.int64)
        neighbors = np.concatenate([model.fwd_neighbor, model.bwd_neighbor], axis=0)
        for site in range(n):
            used = set()
            for j in neighbors[:, site]:
                if j >= 0 and colors[j] >= 0:
                    used.add(colors[j])
            color = 0
            while color in used:
                color += 1
            colors[site] = color
        classes = [np.nonzero(colors == c)[0] for c in range(colors.max() + 1)]
        sched = cls(kind="chromatic", color_classes=classes)
        sched.validate(model)
        return sched

    def validate(self, model: GridCrfModel) -> None:
        """Raise unless this schedule is a valid partition for the model."""
        if self.kind == "raster":
            return
        if self.kind != "chromatic":
            raise ContractViolation(f"unknown schedule kind {self.kind!r}")
        if not self.color_classes:
            raise ContractViolation("chromatic schedule has no color classes")
        n = model.num_sites
        seen = np.zeros(n, dtype=np.int64)
        color_of = np.full(n, -1, dtype=np.int64)
        for idx, sites in enumerate(self.color_classes):
            sites = np.asarray(sites)
            if len(sites) and (sites.min() < 0 or sites.max() >= n):
                raise ContractViolation("color class contains out-of-grid site")
            seen[sites] += 1
            color_of[sites] = idx
        if (seen != 1).any():
            raise ContractViolation("color classes must partition the sites exactly once")
        for c in range(len(model.classes)):
            base, end = model.edge_base[c], model.edge_end[c]
            if (color_of[base] == color_of[end]).any():
                raise ContractViolation(
                    f"color class contains both ends of an edge in offset class {c}")


class _SweepPlan:
    """Index structures for one (model geometry, schedule) pair.

    Building the plan validates the schedule once; the per-sweep work is then
    pure gathers and adds.  Plans are cached on the schedule object and keyed
    by model identity, so repeated sweeps (training steps, marginal
    estimation) pay the validation and index setup only once.
    """

    def __init__(self, model: GridCrfModel, schedule: SweepSchedule):
        schedule.validate(model)
        self.kind = schedule.kind
        self.model = model
        if schedule.kind != "chromatic":
            return
        self.blocks = []
        for sites in schedule.color_classes:
            sites = np.asarray(sites, dtype=np.int64)
            terms = []
            for c in range(len(model.classes)):
                j = model.fwd_neighbor[c, sites]
                pos_f, tgt_f = np.nonzero(j >= 0)[0], j[j >= 0]
                j = model.bwd_neighbor[c, sites]
                pos_b, tgt_b = np.nonzero(j >= 0)[0], j[j >= 0]
                terms.append((c, pos_f, tgt_f, pos_b, tgt_b))
            self.blocks.append((sites, terms))

    def sweep(self, y: np.ndarray, unaries: np.ndarray, u: np.ndarray) -> None:
        """One in-place sweep of labeling y using per-site uniforms u."""
        model = self.model
        if self.kind == "raster":
            for site in range(model.num_sites):
                e = _local_energies(model, unaries, y, np.array([site]))
                y[site] = _draw(_softmax_neg(e)[0], u[site])
            return
        tables_t = [t.T for t in model.tables]
        for sites, terms in self.blocks:
            e = unaries[sites].copy()
            for c, pos_f, tgt_f, pos_b, tgt_b in terms:
                if len(pos_f):
                    e[pos_f] += tables_t[c][y[tgt_f]]
                if len(pos_b):
                    e[pos_b] += model.tables[c][y[tgt_b]]
            y[sites] = _draw(_softmax_neg(e), u[sites])


def _plan_for(model: GridCrfModel, schedule: SweepSchedule) -> _SweepPlan:
    plan = getattr(schedule, "_plan", None)
    if plan is None or plan.model is not model:
        plan = _SweepPlan(model, schedule)
        schedule._plan = plan
    return plan


def _local_energies(model: GridCrfModel, unaries: np.ndarray, y: np.ndarray,
                    sites: np.ndarray) -> np.ndarray:
    """(len(sites), L) energies of each candidate label at each site, holding
    the rest of the labeling fixed; only factors containing the site enter."""
    e = unaries[sites].copy()
    for c in range(len(model.classes)):
        t = model.tables[c]
        j = model.fwd_neighbor[c, sites]
        m = j >= 0
        if m.any():
            e[m] += t.T[y[j[m]]]
        j = model.bwd_neighbor[c, sites]
        m = j >= 0
        if m.any():
            e[m] += t[y[j[m]], :]
    return e


def _softmax_neg(e: np.ndarray) -> np.ndarray:
    """Probabilities proportional to exp(-e) along the last axis, stably."""
    z = np.exp(-(e - e.min(axis=-1, keepdims=True)))
    return z / z.sum(axis=-1, keepdims=True)


def _draw(probs: np.ndarray, u) -> np.ndarray:
    """Inverse-CDF draw; probs (..., L), u (...) uniforms in [0, 1)."""
    cdf = np.cumsum(probs, axis=-1)
    idx = (cdf <= np.asarray(u)[..., None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def local_conditional(model: GridCrfModel, unaries: np.ndarray,
                      y: np.ndarray, site: int) -> np.ndarray:
    """p(y_site = l | rest) for every l, from the site's incident factors."""
    y = model.check_labeling(y)
    unaries = model.check_unaries(unaries)
    e = _local_energies(model, unaries, y, np.array([site]))
    return _softmax_neg(e)[0]


def _sweep_uniforms(seed: int, sweep: int, n: int) -> np.ndarray:
    return rng.stream(seed, rng.TAG_GIBBS, counter=sweep).random(n)


def gibbs_sweep(chain: ChainState, model: GridCrfModel, unaries: np.ndarray,
                schedule: SweepSchedule) -> ChainState:
    """Resample every site once; returns a new chain, input left untouched."""
    unaries = model.check_unaries(unaries)
    y = model.check_labeling(chain.labeling).copy()
    plan = _plan_for(model, schedule)
    u = _sweep_uniforms(chain.seed, chain.sweep_count, model.num_sites)
    plan.sweep(y, unaries, u)
    return ChainState(labeling=y, seed=chain.seed, sweep_count=chain.sweep_count + 1)


def init_from_unary_marginals(unaries: np.ndarray, seed: int) -> np.ndarray:
    """Draw each site independently with probability proportional to
    exp(-unary); this is the unary provider's own marginal distribution."""
    unaries = np.asarray(unaries, dtype=np.float64)
    if unaries.ndim != 2:
        raise ContractViolation(f"unary field must be 2-d, got shape {unaries.shape}")
    if not np.isfinite(unaries).all():
        raise ContractViolation("unary field has non-finite entries")
    probs = _softmax_neg(unaries)
    u = rng.stream(seed, rng.TAG_UNARY_INIT).random(len(unaries))
    return _draw(probs, u)


def estimate_marginals(chain: ChainState, model: GridCrfModel, unaries: np.ndarray,
                       burn_in: int, samples: int, thinning: int = 1,
                       schedule: Optional[SweepSchedule] = None) -> MarginalEstimate:
    """Run burn-in, then record the labeling every `thinning` sweeps,
    `samples` times; returns per-site label occurrence counts."""
    if samples < 1 or thinning < 1:
        raise ContractViolation("samples and thinning must be >= 1")
    if schedule is None:
        schedule = SweepSchedule.chromatic(model)
    unaries = model.check_unaries(unaries)
    y = model.check_labeling(chain.labeling).copy()
    plan = _plan_for(model, schedule)
    counts = np.zeros((model.num_sites, model.num_labels), dtype=np.int64)
    sites = np.arange(model.num_sites)
    n = model.num_sites
    source = rng.SweepUniformSource(chain.seed)
    sweep = chain.sweep_count
    for _ in range(burn_in):
        plan.sweep(y, unaries, source.uniforms(sweep, n))
        sweep += 1
    for _ in range(samples):
        for _ in range(thinning):
            plan.sweep(y, unaries, source.uniforms(sweep, n))
            sweep += 1
        counts[sites, y] += 1
    return MarginalEstimate(counts=counts, samples_used=samples)


def max_marginal_decode(estimate: MarginalEstimate) -> np.ndarray:
    """Per-site argmax of the counts; ties go to the lowest label index."""
    if estimate.samples_used < 1:
        raise ContractViolation("estimate holds no samples")
    return np.argmax(estimate.counts, axis=1)
