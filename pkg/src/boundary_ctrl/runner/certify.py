"""Seeded coefficient-pair trials for the distance bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..propagator import BoundReport, CoefficientPath, PiecewisePolynomial, certify_distance_bound
from ..spectral import (FourierBasis, build_free_laplacian, build_identity, build_momentum_operator,
                        build_position_operator)


def magnetic_path(basis: FourierBasis, A0: float, A1: float, T: float = 1.0) -> CoefficientPath:
    """Path for the affine potential ``A(t) = A0 + A1 t`` on ``[0, T]``."""
    terms = (build_free_laplacian(basis), build_momentum_operator(basis),
             build_identity(basis), build_position_operator(basis))
    coeffs = (PiecewisePolynomial.constant(1.0, 0.0, T),
              PiecewisePolynomial.polynomial([-2 * A0, -2 * A1], 0.0, T),
              PiecewisePolynomial.polynomial([A0 * A0, 2 * A0 * A1, A1 * A1], 0.0, T),
              PiecewisePolynomial.constant(-A1, 0.0, T))
    return CoefficientPath(terms, coeffs, (0.0, T))


@dataclass(frozen=True, eq=False)
class Trial:
    index: int
    path1: CoefficientPath
    path2: CoefficientPath
    state: np.ndarray


def random_trial(basis: FourierBasis, seed: int, index: int, noise: float = 1e-2,
                 T: float = 1.0) -> Trial:
    """Affine potential pair differing by ``noise``-scale perturbations, and a random state."""
    rng = np.random.default_rng([seed, index])
    A0, A1 = rng.normal(size=2)
    d0, d1 = noise * rng.normal(size=2)
    state = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    state /= np.linalg.norm(state)
    p1 = magnetic_path(basis, A0, A1, T)
    p2 = p1 if noise == 0 else magnetic_path(basis, A0 + d0, A1 + d1, T)
    return Trial(index, p1, p2, state)


def run_trials(basis: FourierBasis, seed: int, n_trials: int, noise: float = 1e-2,
               tol: float = 1e-8) -> list[BoundReport]:
    reports = []
    for i in range(n_trials):
        tr = random_trial(basis, seed, i, noise)
        reports.append(certify_distance_bound(tr.path1, tr.path2, tr.state, tol=tol, strict=False))
    return reports
