"""Unbiased rank-one reduction of a sum of outer products.

Given ``A = sum_i v_i ⊗ w_i``, random signs ``nu`` and positive scales ``rho``,
``(sum_i rho_i nu_i v_i) ⊗ (sum_i nu_i w_i / rho_i)`` has expectation ``A``
over the signs. The cross terms carry ``nu_i nu_j`` with ``i != j`` and vanish
on average; ``rho`` only affects the variance.
"""
from __future__ import annotations

import numpy as np

from .core import l2_norm

EPS = 1e-7


def reduce(vs, ws, signs, rho):
    """Rank-one pair ``(v, w)`` for the terms ``(vs[i], ws[i])``.

    ``vs`` is ``k x m`` and ``ws`` is ``k x n`` (one term per row). The dense
    matrix is never formed.
    """
    vs = np.atleast_2d(np.asarray(vs, dtype=np.float64))
    ws = np.atleast_2d(np.asarray(ws, dtype=np.float64))
    signs = np.asarray(signs, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    k = vs.shape[0]
    if ws.shape[0] != k or signs.shape != (k,) or rho.shape != (k,):
        raise ValueError("vs, ws, signs and rho must agree on the number of terms")
    if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        raise ValueError("rho entries must be finite and positive")
    return (rho * signs) @ vs, (signs / rho) @ ws


def variance_min_rho(v, w, eps: float = EPS) -> float:
    """``sqrt(|w| / (|v| + eps)) + eps``; positive even when both vectors vanish."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return float(np.sqrt(l2_norm(w) / (l2_norm(v) + eps)) + eps)


def expected_outer(vs, ws, rho, sign_rows):
    """Average of the reduced outer product over the given sign vectors (test helper)."""
    total = 0.0
    for nu in sign_rows:
        v, w = reduce(vs, ws, nu, rho)
        total = total + np.outer(v, w)
    return total / len(sign_rows)


def expected_sq_error(vs, ws, rho, sign_rows) -> float:
    """``E ||A - Ã||_F^2`` over the given sign vectors (test helper)."""
    vs = np.atleast_2d(vs)
    ws = np.atleast_2d(ws)
    a = vs.T @ ws
    errs = []
    for nu in sign_rows:
        v, w = reduce(vs, ws, nu, rho)
        d = a - np.outer(v, w)
        errs.append(float(np.sum(d * d)))
    return float(np.mean(errs))
