#!/usr/bin/env python3
# Rank-one trick: replace a sum of outer products by one random outer product
# whose average over random signs is exactly the original matrix.

import numpy as np

from uoro.core import enumerate_all_signs
from uoro.rankone import expected_outer, expected_sq_error, reduce, variance_min_rho

rng = np.random.default_rng(0)

# %% a rank-3 matrix given as three (v, w) pairs
vs = rng.normal(size=(3, 4))
ws = 10.0 * rng.normal(size=(3, 5))      # badly scaled on purpose
A = vs.T @ ws
print("A =\n", np.round(A, 3))

# %% one draw of the reduction is a rough guess
rho = np.array([variance_min_rho(v, w) for v, w in zip(vs, ws)])
v, w = reduce(vs, ws, np.array([1.0, -1.0, 1.0]), rho)
print("\none draw, max |A - v w^T| =", np.abs(A - np.outer(v, w)).max())

# %% but averaging over all 2^3 sign vectors recovers A exactly
signs = enumerate_all_signs(3)
print("mean over signs, max error =", np.abs(expected_outer(vs, ws, rho, signs) - A).max())

# %% rho balances the two factors; without it the noise is much larger
print("\nE||A - Ã||^2 with balancing rho :", expected_sq_error(vs, ws, rho, signs))
print("E||A - Ã||^2 with rho = 1       :", expected_sq_error(vs, ws, np.ones(3), signs))
# only the ratios matter: scaling every rho by the same factor changes nothing
for f in (0.5, 2.0):
    bumped = rho * np.array([f, 1.0, 1.0])
    print(f"E||A - Ã||^2 with rho_1 * {f:<4}   :", expected_sq_error(vs, ws, bumped, signs))
