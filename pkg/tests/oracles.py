"""Reference implementations that share no code with the package."""

import itertools
import numpy as np


def oracle_path_cost(costs, path, beta):
    c = sum(costs[t, k] for t, k in enumerate(path))
    return c + beta * sum(a != b for a, b in zip(path, path[1:]))


def brute_force_path(costs, beta):
    """Minimum of sum(costs) + beta * switches over all K**T label paths."""
    costs = np.asarray(costs, dtype=float)
    T, K = costs.shape
    return min(oracle_path_cost(costs, path, beta) for path in itertools.product(range(K), repeat=T))


def toeplitz_tie_key(i, j, n):
    """Equivalence-class key of entry (i, j) in an n-channel block-Toeplitz matrix."""
    bi, p = divmod(i, n)
    bj, q = divmod(j, n)
    m = bj - bi
    if m > 0:
        return (m, p, q)
    if m < 0:
        return (-m, q, p)
    return (0, min(p, q), max(p, q))


def tie_groups(n, w):
    groups = {}
    for i in range(n * w):
        for j in range(n * w):
            groups.setdefault(toeplitz_tie_key(i, j, n), []).append((i, j))
    return list(groups.values())


def glasso_reference(S, N, n, w, lam):
    """High-precision block-Toeplitz graphical lasso via an interior-point solver.

    Returns ``(objective, theta)`` for
    -logdet(theta) + tr(S theta) + (1/N) * sum_{i != j} lam |theta_ij|.
    """
    import cvxpy as cp

    groups = tie_groups(n, w)
    z = cp.Variable(len(groups))
    basis, weights = [], []
    for g in groups:
        E = np.zeros((n * w, n * w))
        for i, j in g:
            E[i, j] = 1.0
        basis.append(E)
        weights.append(sum(lam for i, j in g if i != j))
    theta = sum(z[c] * basis[c] for c in range(len(groups)))
    obj = -cp.log_det(theta) + cp.trace(S @ theta) + cp.sum(cp.multiply(np.array(weights), cp.abs(z))) / N
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return float(prob.value), np.asarray(theta.value)


def glasso_value(theta, S, N, lam):
    sign, logdet = np.linalg.slogdet(theta)
    assert sign > 0
    off = np.abs(theta).sum() - np.abs(np.diag(theta)).sum()
    return -logdet + float(np.sum(S * theta)) + lam * off / N


def gaussian_logpdf(x, mu, theta):
    from scipy.stats import multivariate_normal

    return float(multivariate_normal(mean=mu, cov=np.linalg.inv(theta)).logpdf(x))


def random_spd(rng, d, samples=None):
    samples = samples or d + 5
    a = rng.normal(size=(samples, d))
    return a.T @ a / samples
