import math

import numpy as np

# Relative slack absorbed before taking a ceiling, so that quantities which
# are integral in exact arithmetic (e.g. (tau_1b - T_k) * f_k / HW == 1 for
# the straggler) do not round up because of float noise.
CEIL_RTOL = 1e-9


def ceil_tol(x: float) -> int:
    return math.ceil(x - CEIL_RTOL * max(1.0, abs(x)))


def ceil_tol_array(x):
    x = np.asarray(x, dtype=float)
    return np.ceil(x - CEIL_RTOL * np.maximum(1.0, np.abs(x))).astype(np.int64)


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)
