import numpy as np


def random_density(rng, dim=4, rank=None):
    """Random full-rank (or rank ``rank``) density matrix as a plain array."""
    rank = rank or dim
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = a @ a.conj().T
    return m / np.trace(m).real


# one "criterion N: PASS|FAIL ..." line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []
