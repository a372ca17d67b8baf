"""Small perturbations that make a degenerate spectrum screen-generic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidArgumentError
from ..spectral import (FourierBasis, Spectrum, TruncatedOperator, build_magnetic_laplacian,
                        build_position_operator, eigendecompose)


def first_primes(n: int) -> np.ndarray:
    """The first ``n`` primes."""
    if n <= 0:
        return np.array([], dtype=int)
    limit = max(16, int(n * (np.log(n + 1) + np.log(np.log(n + 2)) + 2)))
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, int(limit ** 0.5) + 1):
        if sieve[p]:
            sieve[p * p::p] = False
    return np.flatnonzero(sieve)[:n]


def nu_sequence(n: int) -> np.ndarray:
    """``nu_k = 2^{-k} / sqrt(p_k)`` for ``k = 1..n``, strictly decreasing and below one."""
    k = np.arange(1, n + 1)
    return 2.0 ** (-k) / np.sqrt(first_primes(n))


def alpha_sequence(n: int, indices) -> np.ndarray:
    """Coupling weights ``alpha_j = 2^{-(j+2)}`` on ``indices``, zero elsewhere."""
    out = np.zeros(n)
    for j in indices:
        if not 0 <= j < n:
            raise InvalidArgumentError(f"coupling index {j} out of range [0, {n})")
        out[j] = 2.0 ** (-(j + 2))
    return out


@dataclass(frozen=True)
class PerturbationSpec:
    """Strengths and coupling-repair indices of the perturbation."""

    mu0: float = 0.0
    mu1: float = 0.0
    coupling_indices: tuple = ()

    def __post_init__(self):
        for name in ("mu0", "mu1"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"{name} must be finite")
        object.__setattr__(self, "coupling_indices", tuple(int(j) for j in self.coupling_indices))


def build_perturbations(spec: Spectrum, pert: PerturbationSpec,
                        basis: FourierBasis | None = None) -> tuple[TruncatedOperator, TruncatedOperator]:
    """Diagonal shift ``mu0 sum nu_k |phi_k><phi_k|`` and ladder coupling.

    The coupling is ``mu1 sum alpha_j (|phi_{j+1}><phi_j| + h.c.)`` so that
    it stays Hermitian. Norms are bounded by ``|mu0|`` and ``2 |mu1|``.
    """
    basis = basis or spec.basis
    if basis is None:
        raise InvalidArgumentError("a basis is required")
    n = spec.dim
    v = spec.eigenvectors
    H0p = (v * (pert.mu0 * nu_sequence(n))) @ v.conj().T
    alpha = alpha_sequence(n - 1, pert.coupling_indices) if n > 1 else np.zeros(0)
    ladder = np.zeros((n, n), dtype=complex)
    for j in np.flatnonzero(alpha):
        ladder += alpha[j] * np.outer(v[:, j + 1], v[:, j].conj())
    H1p = pert.mu1 * (ladder + ladder.conj().T)
    return TruncatedOperator(basis, H0p), TruncatedOperator(basis, H1p)


@dataclass(frozen=True, eq=False)
class AuxiliarySystem:
    """Bilinear system ``H0 + u H1`` with ``H0`` the perturbed magnetic Laplacian.

    The unperturbed drift is the magnetic Laplacian at the base potential
    ``a`` and the control operator is ``-x``; ``H0p`` and ``H1p`` are kept
    separately so the same terms can be appended to a boundary run.
    """

    a: float
    basis: FourierBasis
    H0: TruncatedOperator
    H1: TruncatedOperator
    H0p: TruncatedOperator
    H1p: TruncatedOperator
    spectrum: Spectrum
    perturbation: PerturbationSpec


def auxiliary_system(a: float, basis: FourierBasis,
                     perturbation: PerturbationSpec = PerturbationSpec()) -> AuxiliarySystem:
    drift = build_magnetic_laplacian(a, basis)
    control = build_position_operator(basis).scaled(-1.0)
    H0p, H1p = build_perturbations(eigendecompose(drift), perturbation, basis)
    H0 = drift + H0p
    H1 = control + H1p
    return AuxiliarySystem(a, basis, H0, H1, H0p, H1p, eigendecompose(H0), perturbation)
