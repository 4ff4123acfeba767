"""Independent reference computations.

Each oracle avoids the code path it checks: explicit loops instead of
vectorized numpy reductions, inertia counting instead of LAPACK eigensolvers.
"""

import itertools

import numpy as np


def quadratic_form_double_sum(B, psi):
    """sum_jk conj(psi_j) B_jk psi_k, one term at a time."""
    total = 0j
    n = len(psi)
    for j in range(n):
        for k in range(n):
            total += np.conj(psi[j]) * B[j][k] * psi[k]
    return total


def count_eigenvalues_below(B, x):
    """Number of eigenvalues of Hermitian ``B`` below ``x`` (Sylvester inertia of B - xI).

    Unpivoted LDL^H elimination; the signs of the pivots give the inertia.
    """
    A = [[complex(B[i][j]) for j in range(len(B))] for i in range(len(B))]
    n = len(A)
    for i in range(n):
        A[i][i] -= x
    negatives = 0
    for k in range(n):
        d = A[k][k].real
        if d == 0.0:
            d = 1e-300
        if d < 0:
            negatives += 1
        for i in range(k + 1, n):
            f = A[i][k] / d
            for j in range(k + 1, n):
                A[i][j] -= f * A[k][j]
    return negatives


def lambda_min_bisection(B, iterations=200):
    bound = sum(abs(complex(v)) ** 2 for row in B for v in row) ** 0.5 + 1.0
    lo, hi = -bound, bound
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if count_eigenvalues_below(B, mid) >= 1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def matrix_sum(ops):
    dim = len(ops[0])
    total = [[0j] * dim for _ in range(dim)]
    for op in ops:
        for i in range(dim):
            for j in range(dim):
                total[i][j] += op[i][j]
    return np.array(total)


def marginal_by_extension(P, K):
    """Dict a_K -> sum of P's effects over all extensions of a_K, by enumeration."""
    labels = P.space.labels
    keep = [i for i, l in enumerate(labels) if l in set(K)]
    out = {}
    for full in itertools.product(*(f.atoms for f in P.space.factors)):
        key = tuple(full[i] for i in keep)
        out.setdefault(key, []).append(P.effect(full))
    return {k: matrix_sum(v) for k, v in out.items()}


def trace_product(rho, G):
    n = len(rho)
    return sum(rho[j][k] * G[k][j] for j in range(n) for k in range(n))


def event_operator_by_loop(P, atoms):
    return matrix_sum([P.effect(a) for a in atoms]) if atoms else np.zeros((P.dim, P.dim), dtype=complex)
