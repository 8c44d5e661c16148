"""Hand-built candidate sets shared by unit and acceptance tests."""

import numpy as np

from seqdpp import diversifier as dv


def separable_instance(T: int = 8):
    """Contexts far from every target; targets ordered rough -> flat.

    Under the default density (mean 1, AR(1)) only the flat contour clears
    the log-density threshold, so quality pressure favours it. Target 0 is the
    roughest so that a lowest-index tie-break would not mask the choice.
    """
    t = np.arange(T)
    flat = np.ones(T)
    medium = 1.0 + 0.6 * np.sin(t)
    rough = 1.0 + 0.9 * (-1.0) ** t
    ctx = [np.full(T, 3.0), np.full(T, -1.0)]
    targets = [rough[:, None], medium[:, None], flat[:, None]]
    return dv.CandidateSet([c[:, None] for c in ctx], targets, None)
