"""Piecewise-constant propagators for ``H(t) = sum_i f_i(t) H_i``.

The interval ``[s, t]`` is split into ``k`` equal steps; on each step the
generator is frozen (at the left endpoint by default) and exponentiated
exactly through its Hermitian eigendecomposition. Factors are composed with
the latest step leftmost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import (
    CertificationError,
    InvalidArgumentError,
    NonConvergenceError,
    PreconditionError,
)
from .spectral import EIGEN_HERMITIAN_TOL, FourierBasis, TruncatedOperator

PROBE_SEED = 0x5EED
SUP_SAMPLES = 10_000
_CHUNK = 2048
RULES = ("left", "midpoint")


# --------------------------------------------------------------------------
# coefficient functions


@dataclass(frozen=True, eq=False)
class PiecewisePolynomial:
    """Real piecewise polynomial of degree <= 2.

    ``coefficients[k] = (c0, c1, c2)`` gives ``c0 + c1 (t - b_k) + c2 (t - b_k)^2``
    on ``[b_k, b_{k+1})``; the last piece also owns the right endpoint.
    """

    breakpoints: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        c = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        if b.ndim != 1 or len(b) < 2 or np.any(np.diff(b) <= 0):
            raise InvalidArgumentError("breakpoints must be strictly increasing with >= 2 entries")
        if c.shape[0] != len(b) - 1:
            raise InvalidArgumentError("need one coefficient row per piece")
        if c.shape[1] > 3:
            raise InvalidArgumentError("polynomial pieces are limited to degree 2")
        if c.shape[1] < 3:
            c = np.hstack([c, np.zeros((c.shape[0], 3 - c.shape[1]))])
        if not np.all(np.isfinite(c)):
            raise InvalidArgumentError("coefficients must be finite")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def constant(cls, value: float, s: float, t: float) -> "PiecewisePolynomial":
        return cls([s, t], [[value, 0.0, 0.0]])

    @classmethod
    def polynomial(cls, coeffs: Sequence[float], s: float, t: float) -> "PiecewisePolynomial":
        """Single piece ``sum_j coeffs[j] (t - s)^j``."""
        return cls([s, t], [list(coeffs)])

    @property
    def n_pieces(self) -> int:
        return len(self.breakpoints) - 1

    def piece_index(self, t) -> np.ndarray:
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        return np.clip(idx, 0, self.n_pieces - 1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = self.piece_index(t)
        d = t - self.breakpoints[k]
        c = self.coefficients[k]
        return c[..., 0] + d * (c[..., 1] + d * c[..., 2])

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        k = self.piece_index(t)
        d = t - self.breakpoints[k]
        c = self.coefficients[k]
        return c[..., 1] + 2 * d * c[..., 2]

    def extremal_points(self) -> np.ndarray:
        """Interior stationary points of each quadratic piece."""
        pts = []
        for k in range(self.n_pieces):
            c2, c1 = self.coefficients[k, 2], self.coefficients[k, 1]
            if c2 != 0:
                d = -c1 / (2 * c2)
                if 0 < d < self.breakpoints[k + 1] - self.breakpoints[k]:
                    pts.append(self.breakpoints[k] + d)
        return np.array(pts)

    def __sub__(self, other):
        if isinstance(other, PiecewisePolynomial):
            b = np.union1d(self.breakpoints, other.breakpoints)
            rows = []
            for lo in b[:-1]:
                rows.append(_local_coeffs(self, lo) - _local_coeffs(other, lo))
            return PiecewisePolynomial(b, rows)
        return NotImplemented


def _local_coeffs(p: PiecewisePolynomial, x0: float) -> np.ndarray:
    """Coefficients of ``p`` re-expanded about ``x0`` (inside one piece)."""
    k = int(p.piece_index(x0))
    c0, c1, c2 = p.coefficients[k]
    d = x0 - p.breakpoints[k]
    return np.array([c0 + c1 * d + c2 * d * d, c1 + 2 * c2 * d, c2])


@dataclass(frozen=True, eq=False)
class FunctionCoefficient:
    """Arbitrary real C^1 coefficient given by vectorised callables."""

    func: Callable
    deriv: Callable | None = None
    breakpoints: tuple = ()

    def __call__(self, t):
        return np.asarray(self.func(np.asarray(t, dtype=float)), dtype=float)

    def derivative(self, t):
        if self.deriv is None:
            raise InvalidArgumentError("no derivative supplied for this coefficient")
        return np.asarray(self.deriv(np.asarray(t, dtype=float)), dtype=float)


def _breaks(c, s, t):
    b = getattr(c, "breakpoints", ())
    return [x for x in np.atleast_1d(b) if s < x < t] if len(b) else []


def sup_norm_difference(f, g, s: float, t: float, samples: int = SUP_SAMPLES) -> float:
    """``sup |f - g|`` on ``[s, t]`` by dense sampling of every merged piece.

    Samples stay a hair inside each piece so one-sided limits at jumps are
    used; for two piecewise polynomials the exact interior extrema are added.
    """
    b = np.unique(np.concatenate([[s, t], _breaks(f, s, t), _breaks(g, s, t)]))
    best = 0.0
    for lo, hi in zip(b[:-1], b[1:]):
        eps = 1e-12 * (hi - lo)
        x = np.linspace(lo + eps, hi - eps, samples)
        best = max(best, float(np.max(np.abs(f(x) - g(x)))))
    if isinstance(f, PiecewisePolynomial) and isinstance(g, PiecewisePolynomial):
        ext = (f - g).extremal_points()
        ext = ext[(ext >= s) & (ext <= t)]
        if len(ext):
            best = max(best, float(np.max(np.abs(f(ext) - g(ext)))))
    return best


# --------------------------------------------------------------------------
# paths and propagators


@dataclass(frozen=True, eq=False)
class CoefficientPath:
    terms: tuple
    coefficients: tuple
    interval: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        coeffs = tuple(self.coefficients)
        if len(terms) == 0 or len(terms) != len(coeffs):
            raise InvalidArgumentError("need one coefficient per term and at least one term")
        dims = {op.dim for op in terms}
        if len(dims) != 1:
            raise InvalidArgumentError(f"terms have mismatched dimensions {sorted(dims)}")
        s, t = (float(v) for v in self.interval)
        if not (np.isfinite(s) and np.isfinite(t)) or t < s:
            raise InvalidArgumentError(f"invalid time window [{s}, {t}]")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "interval", (s, t))
        stack = np.stack([op.matrix for op in terms])
        stack.setflags(write=False)
        object.__setattr__(self, "_stack", stack)

    @property
    def dim(self) -> int:
        return self.terms[0].dim

    @property
    def basis(self) -> FourierBasis:
        return self.terms[0].basis

    @property
    def duration(self) -> float:
        return self.interval[1] - self.interval[0]

    def coefficient_values(self, times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return np.stack([np.broadcast_to(c(times), times.shape) for c in self.coefficients], axis=-1)

    def hamiltonian(self, t: float) -> np.ndarray:
        return np.tensordot(self.coefficient_values([t])[0], self._stack, axes=1)

    def hamiltonians(self, times) -> np.ndarray:
        return np.einsum("ji,iab->jab", self.coefficient_values(times), self._stack)

    def restricted(self, s: float, t: float) -> "CoefficientPath":
        return CoefficientPath(self.terms, self.coefficients, (s, t))


@dataclass(frozen=True, eq=False)
class PiecewisePropagator:
    k: int
    factors: np.ndarray
    window: tuple
    rule: str = "left"
    gap: float | None = None
    _matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            u = np.eye(self.factors.shape[1], dtype=complex)
            for f in self.factors:
                u = f @ u
            object.__setattr__(self, "_matrix", u)
        return self._matrix

    @property
    def times(self) -> np.ndarray:
        s, t = self.window
        return s + (t - s) * np.arange(self.k + 1) / self.k

    def apply(self, state) -> np.ndarray:
        return self.matrix @ np.asarray(state, dtype=complex)

    def states(self, state) -> np.ndarray:
        out = np.empty((self.k + 1, self.factors.shape[1]), dtype=complex)
        out[0] = state
        for j, f in enumerate(self.factors):
            out[j + 1] = f @ out[j]
        return out

    def unitarity_error(self) -> float:
        u = self.matrix
        return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))


def _hermitian_matrix(H) -> np.ndarray:
    if isinstance(H, TruncatedOperator):
        H.require_hermitian(EIGEN_HERMITIAN_TOL)
        m = H.matrix
    else:
        m = np.asarray(H, dtype=complex)
        dev = float(np.max(np.abs(m - m.conj().T)))
        if dev > EIGEN_HERMITIAN_TOL:
            raise PreconditionError(f"generator is not Hermitian (deviation {dev:.3e})", deviation=dev)
    return (m + m.conj().T) / 2


def _exp_from_eig(w, v, dt):
    return (v * np.exp(-1j * dt * w)[..., None, :]) @ np.swapaxes(v, -1, -2).conj()


def step_exponential(H, dt: float) -> np.ndarray:
    """``exp(-i dt H)`` via ``H = V diag(w) V^H``."""
    if not np.isfinite(dt):
        raise InvalidArgumentError(f"time step must be finite, got {dt!r}")
    m = _hermitian_matrix(H)
    if dt == 0:
        return np.eye(m.shape[0], dtype=complex)
    w, v = np.linalg.eigh(m)
    return _exp_from_eig(w, v, dt)


def _check_rule(rule):
    if rule not in RULES:
        raise InvalidArgumentError(f"unknown freezing rule {rule!r}; choose from {RULES}")


def _freeze_times(path: CoefficientPath, k: int, rule: str) -> np.ndarray:
    s, t = path.interval
    j = np.arange(k) + (0.5 if rule == "midpoint" else 0.0)
    return s + (t - s) * j / k


def _step_factors(path: CoefficientPath, times: np.ndarray, dt: float, cache: dict):
    """Exponentials for a block of freeze times, reusing identical generators."""
    coeffs = path.coefficient_values(times)
    out = np.empty((len(times), path.dim, path.dim), dtype=complex)
    todo = []
    for j, row in enumerate(coeffs):
        key = row.tobytes()
        if key in cache:
            out[j] = cache[key]
        else:
            todo.append(j)
    if todo:
        H = np.einsum("ji,iab->jab", coeffs[todo], path._stack)
        H = (H + np.swapaxes(H, -1, -2).conj()) / 2
        w, v = np.linalg.eigh(H)
        facs = _exp_from_eig(w, v, dt)
        for j, f in zip(todo, facs):
            out[j] = f
            if len(cache) < 4096:
                cache[coeffs[j].tobytes()] = f
    return out


def rs_propagator(path: CoefficientPath, k: int, rule: str = "left") -> PiecewisePropagator:
    """Product of ``k`` frozen-generator exponentials over ``path.interval``."""
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise InvalidArgumentError(f"subdivision count must be an integer >= 1, got {k!r}")
    _check_rule(rule)
    k = int(k)
    d = path.dim
    if path.duration == 0:
        return PiecewisePropagator(k, np.broadcast_to(np.eye(d, dtype=complex), (k, d, d)).copy(),
                                   path.interval, rule)
    for op in path.terms:
        _hermitian_matrix(op)
    dt = path.duration / k
    times = _freeze_times(path, k, rule)
    factors = np.empty((k, d, d), dtype=complex)
    cache: dict = {}
    for lo in range(0, k, _CHUNK):
        factors[lo:lo + _CHUNK] = _step_factors(path, times[lo:lo + _CHUNK], dt, cache)
    return PiecewisePropagator(k, factors, path.interval, rule)


def _propagate_vectors(path: CoefficientPath, k: int, vecs: np.ndarray, rule: str = "left") -> np.ndarray:
    """Apply the ``k``-step product to the columns of ``vecs`` without storing factors."""
    out = np.array(vecs, dtype=complex)
    if path.duration == 0:
        return out
    dt = path.duration / k
    times = _freeze_times(path, k, rule)
    cache: dict = {}
    for lo in range(0, k, _CHUNK):
        for f in _step_factors(path, times[lo:lo + _CHUNK], dt, cache):
            out = f @ out
    return out


def probe_states(basis: FourierBasis) -> np.ndarray:
    """Columns ``e_0``, ``e_1`` and one seeded pseudorandom normalised state."""
    rng = np.random.default_rng(PROBE_SEED)
    r = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    r /= np.linalg.norm(r)
    cols = [basis.mode_vector(0), basis.mode_vector(1), r]
    return np.column_stack(cols)


def refine_to_tolerance(path: CoefficientPath, tol: float, rule: str = "left",
                        k0: int = 8, max_k: int = 2 ** 20, probes=None):
    """Double ``k`` until the probe gap ``||(U_2k - U_k) psi||`` is at most ``tol``.

    Returns ``(propagator, k_final)`` where ``k_final`` is the finer count.
    """
    if not tol > 0:
        raise InvalidArgumentError(f"tolerance must be > 0, got {tol!r}")
    _check_rule(rule)
    probes = probe_states(path.basis) if probes is None else np.asarray(probes, dtype=complex)
    k, gap = k0, float("nan")
    prev = _propagate_vectors(path, k, probes, rule)
    while True:
        if 2 * k > max_k:
            raise NonConvergenceError(
                f"refinement exceeded k = {max_k} without reaching tol = {tol:g} "
                f"(last gap {gap:.3e} at k = {k})", k=k, gap=gap)
        nxt = _propagate_vectors(path, 2 * k, probes, rule)
        gap = float(np.max(np.linalg.norm(nxt - prev, axis=0)))
        k *= 2
        if gap <= tol:
            break
        prev = nxt
    prop = rs_propagator(path, k, rule)
    return PiecewisePropagator(prop.k, prop.factors, prop.window, rule, gap), k


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    k: int
    gap: float | None = None

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _check_normalised(state, dim):
    state = np.asarray(state, dtype=complex)
    if state.shape != (dim,):
        raise InvalidArgumentError(f"state has shape {state.shape}, expected ({dim},)")
    if abs(np.linalg.norm(state) - 1) > 1e-8:
        raise InvalidArgumentError("state must be normalised within 1e-8")
    return state


def evolve(path: CoefficientPath, state, tol: float, rule: str = "left",
           max_k: int = 2 ** 20, k: int | None = None) -> Trajectory:
    """Time-stamped states on the refined grid.

    Passing ``k`` skips refinement and uses that subdivision directly.
    """
    state = _check_normalised(state, path.dim)
    if k is None:
        prop, k = refine_to_tolerance(path, tol, rule=rule, max_k=max_k)
    else:
        prop = rs_propagator(path, k, rule)
    return Trajectory(prop.times, prop.states(state), k, prop.gap)


# --------------------------------------------------------------------------
# distance certification


@dataclass(frozen=True)
class BoundReport:
    bound: float
    measured: float
    components: tuple
    k: int = 0

    @property
    def margin(self) -> float:
        return self.bound - self.measured

    @property
    def certified(self) -> bool:
        return self.measured <= self.bound + 1e-8


def distance_bound(path1: CoefficientPath, path2: CoefficientPath, state) -> tuple:
    """Per-term ``(T - s) ||f_i - g_i||_inf ||H_i psi||`` and their sum."""
    if len(path1.terms) != len(path2.terms) or any(
            a is not b and not np.array_equal(a.matrix, b.matrix)
            for a, b in zip(path1.terms, path2.terms)):
        raise InvalidArgumentError("both paths must share the same terms H_i")
    if path1.interval != path2.interval:
        raise InvalidArgumentError("paths must share the same time window")
    s, t = path1.interval
    state = np.asarray(state, dtype=complex)
    comps = []
    for op, f, g in zip(path1.terms, path1.coefficients, path2.coefficients):
        sup = 0.0 if f is g else sup_norm_difference(f, g, s, t)
        comps.append((t - s) * sup * float(np.linalg.norm(op.matrix @ state)))
    return float(sum(comps)), tuple(comps)


def certify_distance_bound(path1: CoefficientPath, path2: CoefficientPath, state,
                           tol: float = 1e-8, rule: str = "midpoint", k0: int = 8,
                           max_k: int = 2 ** 18, strict: bool = True) -> BoundReport:
    """Check ``||U1 psi - U2 psi|| <= (T - s) sum_i ||f_i - g_i||_inf ||H_i psi||``.

    The measured distance is refined on a shared grid until successive
    doublings change the difference vector by at most ``tol``.
    """
    bound, comps = distance_bound(path1, path2, state)
    state = _check_normalised(state, path1.dim)
    both = lambda k: (_propagate_vectors(path1, k, state[:, None], rule)
                      - _propagate_vectors(path2, k, state[:, None], rule))[:, 0]
    k, gap = k0, float("nan")
    prev = both(k)
    while True:
        if 2 * k > max_k:
            raise NonConvergenceError(
                f"distance refinement exceeded k = {max_k} (last gap {gap:.3e})", k=k, gap=gap)
        nxt = both(2 * k)
        gap = float(np.linalg.norm(nxt - prev))
        k *= 2
        prev = nxt
        if gap <= tol:
            break
    measured = float(np.linalg.norm(prev))
    report = BoundReport(bound, measured, comps, k)
    if strict and not report.certified:
        raise CertificationError(
            f"measured distance {measured:.6e} exceeds bound {bound:.6e}",
            bound=bound, measured=measured)
    return report
