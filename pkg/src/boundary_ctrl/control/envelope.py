"""Piecewise-constant controls, the sawtooth vector potential they induce, and its mollification."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from ..exceptions import InvalidArgumentError
from ..propagator import (SUP_SAMPLES, CoefficientPath, FunctionCoefficient, PiecewisePolynomial,
                          sup_norm_difference)
from ..spectral import (FourierBasis, TruncatedOperator, build_free_laplacian, build_identity,
                        build_momentum_operator, build_position_operator)

MIN_WIDTH_FRACTION = 1e-9


@dataclass(frozen=True, eq=False)
class PiecewiseConstantControl:
    """Control ``u(t) = values[j]`` on ``[j tau, (j+1) tau)``.

    With ``strict=True`` every value must lie in the open interval ``(0, c)``;
    test fixtures at the endpoints pass ``strict=False``.
    """

    values: np.ndarray
    tau: float
    c: float
    strict: bool = True

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float)).copy()
        if v.ndim != 1:
            raise InvalidArgumentError("control values must be one-dimensional")
        for name in ("tau", "c"):
            x = getattr(self, name)
            if not np.isfinite(x) or x <= 0:
                raise InvalidArgumentError(f"{name} must be finite and > 0, got {x!r}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("control values must be finite")
        if self.strict and np.any((v <= 0) | (v >= self.c)):
            bad = int(np.flatnonzero((v <= 0) | (v >= self.c))[0])
            raise InvalidArgumentError(f"u[{bad}] = {v[bad]!r} outside the open interval (0, {self.c})")
        if not self.strict and np.any((v < 0) | (v > self.c)):
            raise InvalidArgumentError(f"control values must lie in [0, {self.c}]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "c", float(self.c))

    @property
    def n_windows(self) -> int:
        return len(self.values)

    @property
    def horizon(self) -> float:
        return self.n_windows * self.tau

    @property
    def breakpoints(self) -> np.ndarray:
        return np.arange(self.n_windows + 1) * self.tau

    def as_polynomial(self) -> PiecewisePolynomial:
        return PiecewisePolynomial(self.breakpoints, self.values[:, None])

    def __call__(self, t):
        return self.as_polynomial()(t)


@dataclass(frozen=True, eq=False)
class ControlEnvelope:
    """Sawtooth ``A(t) = a + u_k (t - k tau)`` on window ``k``, reset to ``a`` at each ``k tau``."""

    base: float
    control: PiecewiseConstantControl

    def __post_init__(self):
        if not np.isfinite(self.base):
            raise InvalidArgumentError("base potential must be finite")
        object.__setattr__(self, "base", float(self.base))

    @property
    def horizon(self) -> float:
        return self.control.horizon

    @property
    def pieces(self) -> list:
        """``(start, stop, value at start, slope)`` per window."""
        b = self.control.breakpoints
        return [(b[k], b[k + 1], self.base, u) for k, u in enumerate(self.control.values)]

    def as_polynomial(self) -> PiecewisePolynomial:
        u = self.control.values
        return PiecewisePolynomial(self.control.breakpoints,
                                   np.column_stack([np.full_like(u, self.base), u]))

    def __call__(self, t):
        return self.as_polynomial()(t)

    def derivative(self, t):
        return self.as_polynomial().derivative(t)

    def sup_deviation(self, samples_per_window: int = SUP_SAMPLES) -> float:
        """Sampled ``sup |A - a|`` over the horizon."""
        if self.control.n_windows == 0:
            return 0.0
        base = PiecewisePolynomial.constant(self.base, 0.0, self.horizon)
        return sup_norm_difference(self.as_polynomial(), base, 0.0, self.horizon, samples_per_window)

    def magnetic_coefficients(self) -> tuple:
        """Coefficients of ``(H_free, P, I, x)`` and of an appended control term."""
        if self.control.n_windows == 0:
            a = self.base
            return (_constant(1.0), _constant(-2 * a), _constant(a * a), _constant(0.0)), _constant(0.0)
        b = self.control.breakpoints
        a, u = self.base, self.control.values
        one = PiecewisePolynomial.constant(1.0, b[0], b[-1])
        zeros = np.zeros_like(u)
        momentum = PiecewisePolynomial(b, np.column_stack([np.full_like(u, -2 * a), -2 * u]))
        identity = PiecewisePolynomial(b, np.column_stack([np.full_like(u, a * a), 2 * a * u, u * u]))
        position = PiecewisePolynomial(b, np.column_stack([-u, zeros]))
        control = PiecewisePolynomial(b, np.column_stack([u, zeros]))
        return (one, momentum, identity, position), control


def _constant(value):
    return FunctionCoefficient(lambda t: np.full(np.shape(t), value))


def reconstruct_vector_potential(control: PiecewiseConstantControl, a: float) -> ControlEnvelope:
    return ControlEnvelope(a, control)


def assemble_boundary_run(envelope, basis: FourierBasis,
                          extra: tuple[TruncatedOperator, TruncatedOperator] | None = None) -> CoefficientPath:
    """Magnetic-picture path ``H_free - 2A P + A^2 - A' x`` for an envelope.

    ``envelope`` is a :class:`ControlEnvelope` or :class:`SmoothEnvelope`.
    ``extra = (H0p, H1p)`` appends a drift perturbation with coefficient 1
    and a control perturbation driven by ``u = A'``.
    """
    terms = [build_free_laplacian(basis), build_momentum_operator(basis),
             build_identity(basis), build_position_operator(basis)]
    coeffs, control = envelope.magnetic_coefficients()
    coeffs = list(coeffs)
    if extra is not None:
        H0p, H1p = extra
        terms += [H0p, H1p]
        coeffs += [_constant(1.0), control]
    return CoefficientPath(tuple(terms), tuple(coeffs), (0.0, envelope.horizon))


# --------------------------------------------------------------------------
# mollification


def bump(s):
    """Normalised ``C^inf`` bump supported on ``(-1, 1)``."""
    return _bump_raw(s) / _bump_tables()[2]


def _bump_raw(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _bump_tables(n_cells: int = 4096):
    """Hermite interpolants of the bump's CDF and first moment on ``[-1, 1]``."""
    z = np.linspace(-1.0, 1.0, n_cells + 1)
    xg, wg = np.polynomial.legendre.leggauss(10)
    h = z[1] - z[0]
    nodes = z[:-1, None] + (xg[None, :] + 1) * (h / 2)
    rho = _bump_raw(nodes)
    mass = np.concatenate([[0.0], np.cumsum(rho @ wg * (h / 2))])
    moment = np.concatenate([[0.0], np.cumsum((nodes * rho) @ wg * (h / 2))])
    total = mass[-1]
    mass, moment = mass / total, moment / total
    moment[-1] = 0.0
    dens = _bump_raw(z) / total
    cdf = CubicHermiteSpline(z, mass, dens)
    first = CubicHermiteSpline(z, moment, z * dens)
    return cdf, first, total


def _cdf(z):
    z = np.asarray(z, dtype=float)
    return np.where(z <= -1, 0.0, np.where(z >= 1, 1.0, _bump_tables()[0](np.clip(z, -1, 1))))


def _first_moment(z):
    z = np.asarray(z, dtype=float)
    return np.where(np.abs(z) >= 1, 0.0, _bump_tables()[1](np.clip(z, -1, 1)))


@dataclass(frozen=True, eq=False)
class SmoothEnvelope:
    """Envelope convolved with a bump of half-width ``width``.

    Away from the resets the convolution of an affine piece is the piece
    itself, so only a neighbourhood of each reset is corrected.
    """

    envelope: ControlEnvelope
    width: float
    deviation: float
    derivative_deviation: float

    @property
    def horizon(self) -> float:
        return self.envelope.horizon

    def _corrections(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        val = np.zeros_like(t)
        der = np.zeros_like(t)
        if self.width == 0:
            return t, val, der
        u, tau, w = self.envelope.control.values, self.envelope.control.tau, self.width
        order = np.argsort(t, kind="stable")
        ts = t[order]
        for k in range(1, len(u)):
            tk = k * tau
            lo, hi = np.searchsorted(ts, [tk - w, tk + w])
            if lo == hi:
                continue
            sel = order[lo:hi]
            d = t[sel] - tk
            z = d / w
            step = (d >= 0).astype(float)
            du, jump = u[k] - u[k - 1], u[k - 1] * tau
            cdf = _cdf(z)
            val[sel] += du * (d * cdf - w * _first_moment(z) - d * step) - jump * (cdf - step)
            der[sel] += du * (cdf - step) - jump * bump(z) / w
        return t, val, der

    def __call__(self, t):
        t, val, _ = self._corrections(t)
        return self.envelope(t) + val

    def derivative(self, t):
        t, _, der = self._corrections(t)
        return self.envelope.derivative(t) + der

    def magnetic_coefficients(self) -> tuple:
        coeffs = (_constant(1.0),
                  FunctionCoefficient(lambda t: -2 * self(t)),
                  FunctionCoefficient(lambda t: self(t) ** 2),
                  FunctionCoefficient(lambda t: -self.derivative(t)))
        return coeffs, FunctionCoefficient(self.derivative)


def _is_affine(envelope: ControlEnvelope) -> bool:
    u = envelope.control.values
    return len(u) <= 1 or not np.any(u)


def smooth_control(envelope: ControlEnvelope, delta1: float, delta2: float,
                   samples_per_window: int = SUP_SAMPLES) -> SmoothEnvelope:
    """Mollify the sawtooth so that ``sup|A - A~| <= delta1`` and ``sup|A' - A~'| <= delta2``.

    Widths are tried from the full horizon downwards by halving; the first
    width meeting both targets under dense sampling is returned. A reset of
    height ``J`` forces ``sup|A - A~| >= J/2`` for every width, so small
    ``delta1`` is unattainable when the envelope has jumps.
    """
    for name, d in (("delta1", delta1), ("delta2", delta2)):
        if not np.isfinite(d) or d <= 0:
            raise InvalidArgumentError(f"{name} must be finite and > 0, got {d!r}")
    if _is_affine(envelope):
        return SmoothEnvelope(envelope, 0.0, 0.0, 0.0)
    T, tau = envelope.horizon, envelope.control.tau
    A = envelope.as_polynomial()
    dA = PiecewisePolynomial(A.breakpoints, A.coefficients[:, 1:2])
    best = None
    w = T
    while w >= MIN_WIDTH_FRACTION * tau:
        trial = SmoothEnvelope(envelope, w, 0.0, 0.0)
        smooth = FunctionCoefficient(trial, trial.derivative)
        dev1 = sup_norm_difference(A, smooth, 0.0, T, samples_per_window)
        if dev1 <= delta1:
            dev2 = sup_norm_difference(dA, FunctionCoefficient(trial.derivative), 0.0, T, samples_per_window)
            if dev2 <= delta2:
                return SmoothEnvelope(envelope, w, dev1, dev2)
            best = (w, dev1, dev2)
        w /= 2
    detail = f"; closest width {best[0]:.3g} gave ({best[1]:.3g}, {best[2]:.3g})" if best else ""
    raise InvalidArgumentError(
        f"no mollifier width >= {MIN_WIDTH_FRACTION:g} tau achieves deviations "
        f"({delta1:g}, {delta2:g}){detail}")
