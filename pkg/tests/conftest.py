import numpy as np

from seedbank import validate_distribution


def random_simplex(rng, k):
    """A random germination distribution with b0 bounded away from 0."""
    raw = rng.dirichlet(np.ones(k + 1))
    raw[0] = max(raw[0], 0.05)
    raw /= raw.sum()
    return validate_distribution(raw)
