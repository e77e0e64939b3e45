"""Exact brute-force reference computations on small instances.

Everything here enumerates all L**N labelings directly (with log-domain
accumulation), so it is slow on purpose and guarded by a size limit.  It is
the ground truth the samplers and trainers are tested against.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SizeLimitError
from .model import GradientBundle, GridCrfModel
from . import rng

MAX_STATES = 2 ** 20


@dataclass
class ExactSummary:
    """Exact partition function, site marginals and optional extras."""

    log_z: float
    marginals: np.ndarray  # (N, L), rows sum to 1
    pairwise_marginals: Optional[list] = None  # per class: (E_c, L, L)
    log_likelihood: Optional[float] = None


def _check_size(model: GridCrfModel) -> int:
    states = model.num_labels ** model.num_sites
    if states > MAX_STATES:
        raise SizeLimitError(
            f"{model.num_labels}**{model.num_sites} = {states} states exceeds "
            f"enumeration limit {MAX_STATES}")
    return states


def _all_labelings(model: GridCrfModel) -> np.ndarray:
    """(S, N) array of every labeling, lexicographic in site order."""
    s = _check_size(model)
    codes = np.unravel_index(np.arange(s), (model.num_labels,) * model.num_sites)
    return np.stack(codes, axis=1).astype(np.int32)


def _all_energies(model: GridCrfModel, unaries: np.ndarray,
                  states: np.ndarray) -> np.ndarray:
    # accumulate factor by factor so memory stays O(num states)
    e = np.zeros(len(states))
    for site in range(model.num_sites):
        e += unaries[site, states[:, site]]
    for c in range(len(model.classes)):
        t = model.tables[c]
        for base, end in zip(model.edge_base[c], model.edge_end[c]):
            e += t[states[:, base], states[:, end]]
    return e


def enumerate_model(model: GridCrfModel, unaries: np.ndarray,
                    y_data: Optional[np.ndarray] = None,
                    pairwise: bool = False) -> ExactSummary:
    """Exact summary by summation over every labeling."""
    unaries = model.check_unaries(unaries)
    states = _all_labelings(model)
    energies = _all_energies(model, unaries, states)
    m = (-energies).max()
    log_z = float(m + np.log(np.exp(-energies - m).sum()))
    probs = np.exp(-energies - log_z)

    n, L = model.num_sites, model.num_labels
    marginals = np.zeros((n, L))
    for site in range(n):
        marginals[site] = np.bincount(states[:, site], weights=probs, minlength=L)

    pm = None
    if pairwise:
        pm = []
        for c in range(len(model.classes)):
            base, end = model.edge_base[c], model.edge_end[c]
            tables = np.zeros((len(base), L, L))
            for k in range(len(base)):
                idx = states[:, base[k]] * L + states[:, end[k]]
                tables[k] = np.bincount(idx, weights=probs, minlength=L * L).reshape(L, L)
            pm.append(tables)

    ll = None
    if y_data is not None:
        y_data = model.check_labeling(y_data)
        e_data = float(_all_energies(model, unaries, y_data[None, :])[0])
        ll = -e_data - log_z
    return ExactSummary(log_z=log_z, marginals=marginals,
                        pairwise_marginals=pm, log_likelihood=ll)


def exact_conditional(model: GridCrfModel, unaries: np.ndarray,
                      y: np.ndarray, site: int) -> np.ndarray:
    """p(y_site | all other sites), by summation over the full joint."""
    unaries = model.check_unaries(unaries)
    y = model.check_labeling(y)
    _check_size(model)
    variants = np.repeat(y[None, :], model.num_labels, axis=0)
    variants[:, site] = np.arange(model.num_labels)
    energies = _all_energies(model, unaries, variants)
    m = (-energies).max()
    w = np.exp(-energies - m)
    return w / w.sum()


def exact_gradient(model: GridCrfModel, unaries: np.ndarray,
                   y_data: np.ndarray) -> GradientBundle:
    """Exact log-likelihood gradient per potential entry:
    -[data indicator] + model marginal of that configuration."""
    y_data = model.check_labeling(y_data)
    summary = enumerate_model(model, unaries, pairwise=True)
    n, L = model.num_sites, model.num_labels
    unary = summary.marginals.copy()
    np.add.at(unary, (np.arange(n), y_data), -1.0)
    tables = []
    for c in range(len(model.classes)):
        base, end = model.edge_base[c], model.edge_end[c]
        t = summary.pairwise_marginals[c].sum(axis=0)
        np.add.at(t, (y_data[base], y_data[end]), -1.0)
        tables.append(t)
    return GradientBundle(unary=unary, tables=tables)


def exact_loglik(model: GridCrfModel, unaries: np.ndarray,
                 y_data: np.ndarray) -> float:
    """log p(y_data) = -E(y_data) - log Z."""
    unaries = model.check_unaries(unaries)
    y_data = model.check_labeling(y_data)
    states = _all_labelings(model)
    energies = _all_energies(model, unaries, states)
    m = (-energies).max()
    log_z = float(m + np.log(np.exp(-energies - m).sum()))
    e_data = float(_all_energies(model, unaries, y_data[None, :])[0])
    return -e_data - log_z


def exact_sample(model: GridCrfModel, unaries: np.ndarray,
                 count: int, seed: int) -> np.ndarray:
    """(count, N) labelings drawn i.i.d. from the exact distribution."""
    unaries = model.check_unaries(unaries)
    states = _all_labelings(model)
    energies = _all_energies(model, unaries, states)
    m = (-energies).max()
    w = np.exp(-energies - m)
    cdf = np.cumsum(w / w.sum())
    u = rng.stream(seed, rng.TAG_DATASET).random(count)
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
    return states[idx].copy()
