"""Independent reference implementations used to check the kernels.

Everything here deliberately avoids the package's solver code paths:
brute-force enumeration, closed-form low-dimensional parametrizations,
and a generic constrained optimizer.
"""

import itertools

import numpy as np
from scipy.optimize import minimize


def simplex_project_reference(x):
    """Sort-and-threshold projection, scalar loop form."""
    x = np.asarray(x, dtype=float)
    n = x.size
    u = np.sort(x)[::-1]
    css = np.cumsum(u)
    rho = 0
    for k in range(1, n + 1):
        if u[k - 1] - (css[k - 1] - 1.0) / k > 0:
            rho = k
    tau = (css[rho - 1] - 1.0) / rho
    return np.maximum(x - tau, 0.0)


def ds_project_2x2_reference(r):
    """2x2 doubly-stochastic set is {[[a, 1-a], [1-a, a]]}; solve the 1-d
    quadratic in closed form and clip to [0, 1]."""
    r = np.asarray(r, dtype=float)
    # d/da ||P(a) - R||^2 = 0  =>  4a = 2 + r00 + r11 - r01 - r10
    a = (2.0 + r[0, 0] + r[1, 1] - r[0, 1] - r[1, 0]) / 4.0
    a = min(1.0, max(0.0, a))
    return np.array([[a, 1 - a], [1 - a, a]])


def ds_project_small_reference(r):
    """Generic small-matrix projection via SLSQP on the flattened program."""
    r = np.asarray(r, dtype=float)
    m = r.shape[0]

    def objective(p):
        return np.sum((p - r.ravel()) ** 2)

    def grad(p):
        return 2.0 * (p - r.ravel())

    constraints = []
    for i in range(m):
        row = np.zeros(m * m)
        row[i * m:(i + 1) * m] = 1.0
        constraints.append({"type": "eq",
                            "fun": lambda p, row=row: row @ p - 1.0,
                            "jac": lambda p, row=row: row})
        col = np.zeros(m * m)
        col[i::m] = 1.0
        constraints.append({"type": "eq",
                            "fun": lambda p, col=col: col @ p - 1.0,
                            "jac": lambda p, col=col: col})
    x0 = np.full(m * m, 1.0 / m)
    res = minimize(objective, x0, jac=grad, bounds=[(0, 1)] * (m * m),
                   constraints=constraints, method="SLSQP",
                   options={"maxiter": 500, "ftol": 1e-14})
    return res.x.reshape(m, m)


def brute_force_assignment(score):
    """Max-score assignment by enumeration; returns (best value, all argmax
    position vectors, lexicographically smallest argmax)."""
    score = np.asarray(score, dtype=float)
    m = score.shape[0]
    best_val = -np.inf
    argmax = []
    for cols in itertools.permutations(range(m)):
        val = sum(score[j, cols[j]] for j in range(m))
        if val > best_val + 1e-12:
            best_val = val
            argmax = [cols]
        elif abs(val - best_val) <= 1e-12:
            argmax.append(cols)
    positions = [tuple(c + 1 for c in cols) for cols in argmax]
    return best_val, positions, min(positions)


def brute_force_max_utility(relevance, v):
    """Max over permutations of sum_j relevance[j] * v[pi_j - 1]."""
    relevance = np.asarray(relevance, dtype=float)
    m = relevance.size
    best = -np.inf
    for cols in itertools.permutations(range(m)):
        val = sum(relevance[j] * v[cols[j]] for j in range(m))
        best = max(best, val)
    return best


def t_interval_halfwidth_reference(values):
    """95% t half-width with the multiplier hardcoded for small n."""
    t975 = {2: 12.706204736432095, 3: 4.302652729911275, 10: 2.2621571627409915}
    arr = np.asarray(values, dtype=float)
    n = arr.size
    s = arr.std(ddof=1)
    return t975[n] * s / np.sqrt(n)
