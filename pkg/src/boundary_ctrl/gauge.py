"""Gauge map ``T = exp(i A x)`` between the boundary and magnetic pictures.

In the magnetic picture the state ``Phi`` is periodic and evolves under a
magnetic Laplacian. The boundary picture ``Psi = T^{-1} Phi`` evolves under
the free Laplacian with the quasi-periodic condition
``Psi(0) = exp(i A l) Psi(l)``, which is the condition encoded by
``Tbar^{-1} U_periodic Tbar`` with ``Tbar = diag(1, exp(i A l))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import polar

from .exceptions import InvalidArgumentError, TruncationError
from .spectral import FourierBasis, build_free_laplacian, build_magnetic_laplacian

PERIODIC = np.array([[0, 1], [1, 0]], dtype=complex)
MAX_PROJECTION_DEVIATION = 0.1


@dataclass(frozen=True)
class GaugeFunction:
    """``chi(x) = A x + b`` with the integration constant fixed to ``b = 0``."""

    A: float
    b: float = 0.0

    def __post_init__(self):
        if self.b != 0.0:
            raise InvalidArgumentError("only b = 0 is supported")

    def __call__(self, x):
        return self.A * np.asarray(x, dtype=float) + self.b


@dataclass(frozen=True, eq=False)
class BoundaryUnitary:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise InvalidArgumentError("boundary unitary must be 2x2")
        if np.max(np.abs(m.conj().T @ m - np.eye(2))) > 1e-12:
            raise InvalidArgumentError("boundary matrix is not unitary")
        object.__setattr__(self, "matrix", m)

    @property
    def is_periodic(self) -> bool:
        return bool(np.allclose(self.matrix, PERIODIC, atol=1e-12, rtol=0))


def _check_finite(**kw):
    for k, v in kw.items():
        if not np.isfinite(v):
            raise InvalidArgumentError(f"{k} must be finite, got {v!r}")


def boundary_restriction(A: float, l: float) -> np.ndarray:
    """Restriction of ``T`` to the endpoints ``(0, l)``."""
    _check_finite(A=A, l=l)
    return np.diag([1.0, np.exp(1j * A * l)])


def boundary_unitary(A: float, l: float) -> BoundaryUnitary:
    """Quasi-periodic boundary matrix ``[[0, e^{iAl}], [e^{-iAl}, 0]]``."""
    _check_finite(A=A, l=l)
    ph = np.exp(1j * A * l)
    return BoundaryUnitary(np.array([[0, ph], [np.conj(ph), 0]]))


def central_modes(A: float, basis: FourierBasis) -> np.ndarray:
    """Modes far enough from the truncation edge to be unaffected by leakage."""
    cut = math.ceil(abs(A) * basis.l / (2 * np.pi) - 1e-12)
    keep = basis.N - cut
    if keep < 0:
        return np.array([], dtype=int)
    return np.arange(-keep, keep + 1)


@dataclass(frozen=True, eq=False)
class GaugeProjection:
    """Collocated multiplication matrix and its nearest unitary."""

    unitary: np.ndarray
    raw: np.ndarray
    deviation: float


def gauge_collocation(A: float, basis: FourierBasis) -> np.ndarray:
    """Galerkin matrix of multiplication by ``exp(i A x)``, by collocation on ``8 dim`` points."""
    _check_finite(A=A)
    M = 8 * basis.dim
    x = basis.grid(M)
    E = basis.sample_matrix(x)
    return (E.conj().T * np.exp(1j * A * x)) @ E * (basis.l / M)


def gauge_projection(A: float, basis: FourierBasis) -> GaugeProjection:
    raw = gauge_collocation(A, basis)
    idx = central_modes(A, basis) + basis.N
    if len(idx) == 0:
        raise TruncationError(
            f"flux A*l = {A * basis.l:.3g} exceeds the truncation window; increase N")
    gram = (raw.conj().T @ raw - np.eye(basis.dim))[np.ix_(idx, idx)]
    # RMS over the central block; edge columns always leak for non-integer flux
    deviation = float(np.linalg.norm(gram) / np.sqrt(len(idx)))
    if deviation > MAX_PROJECTION_DEVIATION:
        raise TruncationError(
            f"gauge matrix deviates from unitarity by {deviation:.3g} on the central modes; "
            f"increase N (currently {basis.N})", deviation=deviation)
    unitary, _ = polar(raw)
    return GaugeProjection(unitary, raw, deviation)


def gauge_matrix(A: float, basis: FourierBasis) -> np.ndarray:
    return gauge_projection(A, basis).unitary


def _check_state(state, basis):
    state = np.asarray(state, dtype=complex)
    if state.shape != (basis.dim,):
        raise InvalidArgumentError(f"state has shape {state.shape}, expected ({basis.dim},)")
    nrm = np.linalg.norm(state)
    if abs(nrm - 1) > 1e-8:
        raise InvalidArgumentError(f"state must be normalised, ||state|| = {nrm:.12g}")
    return state


def to_boundary_picture(state, A: float, basis: FourierBasis) -> np.ndarray:
    """Apply ``T^{-1}``: magnetic-picture coefficients to boundary-picture ones."""
    state = _check_state(state, basis)
    return gauge_matrix(A, basis).conj().T @ state


def to_magnetic_picture(state, A: float, basis: FourierBasis) -> np.ndarray:
    state = _check_state(state, basis)
    return gauge_matrix(A, basis) @ state


def boundary_wavefunction(phi, A: float, basis: FourierBasis, x) -> np.ndarray:
    """Pointwise ``Psi(x) = exp(-i A x) Phi(x)`` from magnetic coefficients."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.exp(-1j * A * x) * basis.evaluate(phi, x)


def quasi_periodic_residual(state, A: float, basis: FourierBasis, M: int = 1024,
                            picture: str = "boundary") -> float:
    """Scale-free violation ``|Psi(0) - e^{iAl} Psi(l)| / sup|Psi|``.

    With ``picture="boundary"`` the coefficients are those of ``Psi`` itself
    and the wavefunction is the Fourier reconstruction. With
    ``picture="magnetic"`` they describe ``Phi`` and ``Psi`` is evaluated
    pointwise through the gauge factor.
    """
    if M < 2:
        raise InvalidArgumentError("need at least two samples")
    state = np.asarray(state, dtype=complex)
    if not np.any(state):
        raise InvalidArgumentError("zero state has no boundary values")
    x = np.linspace(0.0, basis.l, M)
    if picture == "boundary":
        vals = basis.evaluate(state, x)
    elif picture == "magnetic":
        vals = boundary_wavefunction(state, A, basis, x)
    else:
        raise InvalidArgumentError(f"unknown picture {picture!r}")
    sup = np.max(np.abs(vals))
    return float(abs(vals[0] - np.exp(1j * A * basis.l) * vals[-1]) / sup)


def _chunks(n, size=2048):
    for lo in range(0, n, size):
        yield slice(lo, min(lo + size, n))


def quasi_periodic_residuals(states, A_values, basis: FourierBasis, M: int = 1024,
                             picture: str = "boundary") -> np.ndarray:
    """Row-wise :func:`quasi_periodic_residual` for a stack of states."""
    if M < 2:
        raise InvalidArgumentError("need at least two samples")
    if picture not in ("boundary", "magnetic"):
        raise InvalidArgumentError(f"unknown picture {picture!r}")
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    A_values = np.broadcast_to(np.asarray(A_values, dtype=float), (len(states),))
    x = np.linspace(0.0, basis.l, M)
    E = basis.sample_matrix(x).T
    out = np.empty(len(states))
    for sl in _chunks(len(states)):
        vals = states[sl] @ E
        if not np.all(np.any(vals != 0, axis=1)):
            raise InvalidArgumentError("zero state has no boundary values")
        A = A_values[sl]
        if picture == "magnetic":
            vals = vals * np.exp(-1j * np.outer(A, x))
        sup = np.max(np.abs(vals), axis=1)
        out[sl] = np.abs(vals[:, 0] - np.exp(1j * A * basis.l) * vals[:, -1]) / sup
    return out


def boundary_coefficients(states, A_values, basis: FourierBasis) -> np.ndarray:
    """Row-wise ``gauge_collocation(A)^H phi``: boundary-picture coefficients without projection."""
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    A_values = np.broadcast_to(np.asarray(A_values, dtype=float), (len(states),))
    M = 8 * basis.dim
    x = basis.grid(M)
    E = basis.sample_matrix(x)
    out = np.empty_like(states)
    for sl in _chunks(len(states)):
        vals = (states[sl] @ E.T) * np.exp(-1j * np.outer(A_values[sl], x))
        out[sl] = vals @ E.conj() * (basis.l / M)
    return out


def conjugated_free_spectrum(A: float, basis: FourierBasis) -> np.ndarray:
    """Eigenvalues of ``G^H H_free G`` with ``G = gauge_matrix(A)``."""
    G = gauge_matrix(A, basis)
    h = G.conj().T @ build_free_laplacian(basis).matrix @ G
    return np.linalg.eigvalsh((h + h.conj().T) / 2)


def gauge_covariance_deviation(A: float, basis: FourierBasis) -> float:
    """Largest mismatch between central magnetic eigenvalues and the conjugated spectrum.

    Each central magnetic eigenvalue is paired with a distinct eigenvalue of
    the conjugated free Laplacian (nearest first); the worst pairing distance
    is returned.
    """
    conj = list(conjugated_free_spectrum(A, basis))
    mag = np.real(np.diag(build_magnetic_laplacian(A, basis).matrix))
    central = np.sort(mag[central_modes(A, basis) + basis.N])
    worst = 0.0
    for lam in central:
        j = int(np.argmin([abs(lam - c) for c in conj]))
        worst = max(worst, abs(lam - conj.pop(j)))
    return worst
