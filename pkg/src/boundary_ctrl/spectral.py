"""Truncated Fourier basis on ``[0, l]`` and the operators built on it.

Units are ``hbar = 2m = 1``. A constant vector potential ``A`` carries units
of inverse length, so ``A * l`` is a dimensionless flux phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import InvalidArgumentError, PreconditionError

HERMITIAN_TOL = 1e-12
EIGEN_HERMITIAN_TOL = 1e-9


@dataclass(frozen=True)
class IntervalGeometry:
    l: float

    def __post_init__(self):
        if not np.isfinite(self.l) or self.l <= 0:
            raise InvalidArgumentError(f"interval length must be finite and > 0, got {self.l!r}")


@dataclass(frozen=True)
class FourierBasis:
    """Plane waves ``e_n(x) = exp(2 pi i n x / l) / sqrt(l)`` for ``|n| <= N``."""

    geometry: IntervalGeometry
    N: int

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 1:
            raise InvalidArgumentError(f"truncation N must be an integer >= 1, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))

    @classmethod
    def on_interval(cls, l: float, N: int) -> "FourierBasis":
        return cls(IntervalGeometry(float(l)), N)

    @property
    def l(self) -> float:
        return self.geometry.l

    @property
    def dim(self) -> int:
        return 2 * self.N + 1

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * self.modes / self.l

    def index_of(self, mode: int) -> int:
        if abs(mode) > self.N:
            raise InvalidArgumentError(f"mode {mode} outside truncation window |n| <= {self.N}")
        return int(mode) + self.N

    def mode_vector(self, mode: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index_of(mode)] = 1.0
        return v

    def sample_matrix(self, x) -> np.ndarray:
        """Rows are points, columns are basis functions evaluated there."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.exp(1j * np.outer(x, self.wavenumbers)) / np.sqrt(self.l)

    def evaluate(self, coeffs, x) -> np.ndarray:
        return self.sample_matrix(x) @ np.asarray(coeffs, dtype=complex)

    def grid(self, M: int) -> np.ndarray:
        """``M`` equispaced collocation points on ``[0, l)``."""
        return np.arange(M) * (self.l / M)


@dataclass(frozen=True, eq=False)
class TruncatedOperator:
    """Matrix of an operator in a :class:`FourierBasis`.

    Construction does not enforce Hermiticity so that diagnostics can be run
    on deliberately broken inputs; use :meth:`require_hermitian` where needed.
    """

    basis: FourierBasis
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise InvalidArgumentError(
                f"matrix shape {m.shape} does not match basis dimension {self.basis.dim}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermiticity_error <= tol

    def require_hermitian(self, tol: float = EIGEN_HERMITIAN_TOL) -> None:
        dev = self.hermiticity_error
        if dev > tol:
            raise PreconditionError(
                f"operator is not Hermitian: max |M - M^H| = {dev:.3e} > {tol:.1e}", deviation=dev)

    def __add__(self, other: "TruncatedOperator") -> "TruncatedOperator":
        if other.basis != self.basis:
            raise InvalidArgumentError("operators live in different bases")
        return TruncatedOperator(self.basis, self.matrix + other.matrix)

    def scaled(self, factor: complex) -> "TruncatedOperator":
        return TruncatedOperator(self.basis, factor * self.matrix)


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    basis: FourierBasis | None = field(default=None, compare=False)

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.eigenvalues)

    @property
    def dominant_modes(self) -> np.ndarray:
        idx = np.argmax(np.abs(self.eigenvectors), axis=0)
        if self.basis is None:
            return idx
        return self.basis.modes[idx]

    def eigenstate(self, k: int) -> np.ndarray:
        if not 0 <= k < self.dim:
            raise InvalidArgumentError(f"eigenstate index {k} out of range [0, {self.dim})")
        return self.eigenvectors[:, k].copy()


def _require_finite(name, value):
    if not np.isfinite(value):
        raise InvalidArgumentError(f"{name} must be finite, got {value!r}")


def build_magnetic_laplacian(A: float, basis: FourierBasis) -> TruncatedOperator:
    """``-(d/dx - iA)^2`` with periodic conditions: diagonal ``(2 pi n / l - A)^2``."""
    _require_finite("A", A)
    return TruncatedOperator(basis, np.diag((basis.wavenumbers - A) ** 2).astype(complex))


def build_free_laplacian(basis: FourierBasis) -> TruncatedOperator:
    return build_magnetic_laplacian(0.0, basis)


def build_momentum_operator(basis: FourierBasis) -> TruncatedOperator:
    """``-i d/dx``, diagonal with entries ``2 pi n / l``."""
    return TruncatedOperator(basis, np.diag(basis.wavenumbers).astype(complex))


def build_identity(basis: FourierBasis) -> TruncatedOperator:
    return TruncatedOperator(basis, np.eye(basis.dim, dtype=complex))


def build_position_operator(basis: FourierBasis) -> TruncatedOperator:
    """Multiplication by ``x``.

    ``<e_m, x e_n>`` is ``l/2`` on the diagonal and ``i l / (2 pi (m - n))``
    elsewhere.
    """
    n = basis.modes
    diff = n[:, None] - n[None, :]
    safe = np.where(diff == 0, 1, diff)
    m = np.where(diff == 0, basis.l / 2, 1j * basis.l / (2 * np.pi * safe))
    return TruncatedOperator(basis, m)


def _canonical_cluster(vecs: np.ndarray) -> np.ndarray:
    """Basis of ``span(vecs)`` that does not depend on the input rotation.

    Projects unit vectors onto the subspace in order of decreasing overlap
    (ties by ascending index) and orthonormalises them.
    """
    dim, r = vecs.shape
    proj = vecs @ vecs.conj().T
    weights = np.real(np.diag(proj))
    order = sorted(range(dim), key=lambda i: (-round(weights[i], 12), i))
    out = []
    for i in order:
        v = proj[:, i].copy()
        for u in out:
            v -= u * (u.conj() @ v)
        nrm = np.linalg.norm(v)
        if nrm > 1e-8:
            out.append(v / nrm)
        if len(out) == r:
            break
    return np.column_stack(out)


def eigendecompose(op: TruncatedOperator, cluster_tol: float = 1e-9) -> Spectrum:
    """Ascending spectrum with a deterministic eigenvector choice.

    Within a degenerate cluster the eigenvectors are canonicalised and then
    ordered by the index of their dominant component. Each eigenvector is
    phased so that its dominant component is real and positive.
    """
    op.require_hermitian(EIGEN_HERMITIAN_TOL)
    h = (op.matrix + op.matrix.conj().T) / 2
    w, v = np.linalg.eigh(h)
    v = v.copy()
    start = 0
    while start < len(w):
        stop = start + 1
        while stop < len(w) and w[stop] - w[start] <= cluster_tol * max(1.0, abs(w[start])):
            stop += 1
        if stop - start > 1:
            block = _canonical_cluster(v[:, start:stop])
            dom = np.argmax(np.abs(block) > np.abs(block).max(axis=0) - 1e-12, axis=0)
            v[:, start:stop] = block[:, np.argsort(dom, kind="stable")]
        start = stop
    dom = np.argmax(np.abs(v) > np.abs(v).max(axis=0) - 1e-12, axis=0)
    phases = v[dom, np.arange(v.shape[1])]
    v = v * (np.abs(phases) / phases)
    return Spectrum(w, v, op.basis)


def gap_sequence(spec: Spectrum, count: int) -> np.ndarray:
    if count < 0 or count > spec.dim - 1:
        raise InvalidArgumentError(
            f"gap count {count} exceeds dimension - 1 = {spec.dim - 1}")
    return spec.gaps[:count].copy()


def spectral_residuals(op: TruncatedOperator, spec: Spectrum) -> np.ndarray:
    """``||H v_k - lambda_k v_k||`` for every eigenpair."""
    r = op.matrix @ spec.eigenvectors - spec.eigenvectors * spec.eigenvalues
    return np.linalg.norm(r, axis=0)


def closed_form_eigenvalues(A: float, l: float, modes: Sequence[int]) -> np.ndarray:
    return np.sort((2 * np.pi * np.asarray(modes) / l - A) ** 2)
