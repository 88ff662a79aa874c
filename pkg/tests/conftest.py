"""Shared generators for the oracle tests.

Random model draws used by the enumeration oracles live here so every test
file builds chains the same way. Columns of every transition matrix are
independent Dirichlet(1) draws, so the generated matrices are column
stochastic by construction.
"""

import numpy as np

from wavemark.mog import MogChainParams
from wavemark.nhmc import ChainParams


def random_chain(rng, k, L, var_lo=0.05, var_hi=4.0):
    """Random valid ChainParams with ascending variances per scale."""
    initial = rng.dirichlet(np.ones(k))
    transitions = np.empty((L - 1, k, k))
    for t in range(L - 1):
        for i in range(k):
            transitions[t, :, i] = rng.dirichlet(np.ones(k))
    steps = rng.uniform(var_lo, var_hi, size=(L, k))
    variances = np.cumsum(steps, axis=1)
    return ChainParams(initial, transitions, variances)


def random_mog(rng, L, n_components):
    """Random valid binary MogChainParams with n_components large Gaussians."""
    initial = rng.dirichlet(np.ones(2))
    transitions = np.empty((L - 1, 2, 2))
    for t in range(L - 1):
        for i in range(2):
            transitions[t, :, i] = rng.dirichlet(np.ones(2))
    small = rng.uniform(0.005, 0.1, size=L)
    weights = rng.dirichlet(np.ones(n_components), size=L)
    variances = rng.uniform(0.5, 4.0, size=(L, n_components))
    return MogChainParams(initial, transitions, small, weights, variances)


def gaussian_pdf(w, var):
    """Zero-mean Normal density, written out so the oracles do not share
    code with the package."""
    return np.exp(-(np.asarray(w) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)
