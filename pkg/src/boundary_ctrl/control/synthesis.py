"""Search for piecewise-constant controls steering ``psi0`` towards ``psiT``.

Coordinate ascent over window amplitudes with seeded multi-starts; the
number of windows doubles from 16 while the horizon fits in the budget.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from ..exceptions import InvalidArgumentError, PreconditionError
from ..spectral import TruncatedOperator, eigendecompose
from .checks import ControllabilityReport, check_chambrion_conditions
from .envelope import PiecewiseConstantControl

FLOOR = 1e-3
N_STARTS = 8
INITIAL_WINDOWS = 16
SCREEN_Q = 10 ** 4
GRID_POINTS = 9
IDENTITY_FIDELITY = 1 - 1e-9


def worker_count() -> int:
    """Worker cap from ``BOUNDARY_CTRL_THREADS``, defaulting to the CPU count."""
    env = os.environ.get("BOUNDARY_CTRL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InvalidArgumentError(f"BOUNDARY_CTRL_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise InvalidArgumentError("BOUNDARY_CTRL_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def fidelity(target, state) -> float:
    """Projective fidelity ``|<target, state>|^2``."""
    return float(abs(np.vdot(target, state)) ** 2)


@dataclass
class SynthesisResult:
    control: PiecewiseConstantControl
    fidelity: float
    converged: bool
    start: int | None = None
    history: list = field(default_factory=list)
    report: ControllabilityReport | None = None

    def __iter__(self):
        # allows ``control, fid = synthesize_control(...)``
        return iter((self.control, self.fidelity))


class _Problem:
    def __init__(self, H0, H1, psi0, psiT, tau, lo, hi):
        self.h0, self.h1 = H0.matrix, H1.matrix
        self.psi0, self.psiT = psi0, psiT
        self.tau, self.lo, self.hi = tau, lo, hi

    def step(self, u: float) -> np.ndarray:
        w, v = np.linalg.eigh(self.h0 + u * self.h1)
        return (v * np.exp(-1j * self.tau * w)) @ v.conj().T

    def optimise_window(self, phi, chi, u_now):
        """Best amplitude for one window given forward and backward states."""
        def neg(u):
            return -abs(np.vdot(chi, self.step(u) @ phi)) ** 2

        grid = np.linspace(self.lo, self.hi, GRID_POINTS)
        vals = np.array([neg(u) for u in grid])
        i = int(np.argmin(vals))
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, GRID_POINTS - 1)]
        res = minimize_scalar(neg, bounds=(a, b), method="bounded",
                              options={"xatol": 1e-9 * (self.hi - self.lo)})
        cands = [(neg(u_now), u_now), (vals[i], grid[i]), (res.fun, res.x)]
        best = min(cands, key=lambda p: p[0])
        # keep the current value unless strictly improved
        if best[0] < cands[0][0]:
            return best[1], -best[0]
        return u_now, -cands[0][0]

    def ascend(self, values, target, max_sweeps, stall):
        values = np.array(values, dtype=float)
        n = len(values)
        steps = [self.step(u) for u in values]
        fid = fidelity(self.psiT, self._apply(steps))
        trace = [fid]
        for _ in range(max_sweeps):
            back = [None] * n
            chi = self.psiT
            for j in range(n - 1, -1, -1):
                back[j] = chi
                chi = steps[j].conj().T @ chi
            phi = self.psi0
            for j in range(n):
                u, _ = self.optimise_window(phi, back[j], values[j])
                if u != values[j]:
                    values[j] = u
                    steps[j] = self.step(u)
                phi = steps[j] @ phi
            new = fidelity(self.psiT, phi)
            trace.append(new)
            improved = new - fid
            fid = max(fid, new)
            if fid >= target or improved < stall:
                break
        return values, fid, trace

    def _apply(self, steps):
        state = self.psi0
        for U in steps:
            state = U @ state
        return state


def transfer_fidelity(H0: TruncatedOperator, H1: TruncatedOperator,
                      control: PiecewiseConstantControl, psi0, psiT) -> float:
    """Fidelity reached by applying ``control`` to ``psi0`` under ``H0 + u H1``."""
    problem = _Problem(H0, H1, np.asarray(psi0, dtype=complex), np.asarray(psiT, dtype=complex),
                       control.tau, 0.0, control.c)
    return fidelity(problem.psiT, problem._apply([problem.step(u) for u in control.values]))


def _check_state(name, state, dim):
    state = np.asarray(state, dtype=complex)
    if state.shape != (dim,):
        raise InvalidArgumentError(f"{name} has shape {state.shape}, expected ({dim},)")
    if abs(np.linalg.norm(state) - 1) > 1e-8:
        raise InvalidArgumentError(f"{name} must be normalised")
    return state


def synthesize_control(H0: TruncatedOperator, H1: TruncatedOperator, psi0, psiT, c: float,
                       horizon_budget: float, fidelity_target: float, tau: float | None = None,
                       seed: int = 0, n_starts: int = N_STARTS, max_sweeps: int = 15,
                       stall: float = 1e-5, force: bool = False, screen_Q: int = SCREEN_Q,
                       workers: int | None = None) -> SynthesisResult:
    """Best-effort control ``u`` with values in ``[1e-3 c, (1 - 1e-3) c]``.

    ``tau`` defaults to ``horizon_budget / 64``. Unless ``force`` is set the
    gap/coupling screen at denominator bound ``screen_Q`` must pass. The
    result is flagged ``converged`` when the fidelity target is met.
    """
    if H0.dim != H1.dim:
        raise InvalidArgumentError("H0 and H1 dimensions differ")
    psi0 = _check_state("psi0", psi0, H0.dim)
    psiT = _check_state("psiT", psiT, H0.dim)
    if not np.isfinite(c) or c <= 0:
        raise InvalidArgumentError(f"c must be finite and > 0, got {c!r}")
    if not np.isfinite(horizon_budget) or horizon_budget < 0:
        raise InvalidArgumentError(f"horizon budget must be finite and >= 0, got {horizon_budget!r}")
    if not 0 < fidelity_target <= 1:
        raise InvalidArgumentError("fidelity target must lie in (0, 1]")
    lo, hi = FLOOR * c, (1 - FLOOR) * c
    if tau is None:
        tau = horizon_budget / 64 if horizon_budget > 0 else 1.0
    if not np.isfinite(tau) or tau <= 0:
        raise InvalidArgumentError(f"tau must be finite and > 0, got {tau!r}")

    base = fidelity(psiT, psi0)
    empty = PiecewiseConstantControl(np.zeros(0), tau, c)
    if base >= IDENTITY_FIDELITY:
        return SynthesisResult(empty, base, True)

    H0.require_hermitian()
    H1.require_hermitian()
    report = None
    if not force:
        report = check_chambrion_conditions(eigendecompose(H0), H1, screen_Q)
        if not report.passed:
            raise PreconditionError(
                "gap/coupling screening failed; pass force=True to synthesise anyway")

    problem = _Problem(H0, H1, psi0, psiT, tau, lo, hi)
    best = SynthesisResult(empty, base, False, report=report)
    n = INITIAL_WINDOWS
    warm = None
    while n * tau <= horizon_budget * (1 + 1e-12):
        starts = []
        for s in range(n_starts):
            if s == 0:
                starts.append(np.repeat(warm, 2) if warm is not None else np.full(n, 0.5 * c))
            else:
                starts.append(np.random.default_rng([seed, n, s]).uniform(lo, hi, n))

        def run(s):
            return problem.ascend(np.clip(starts[s], lo, hi), fidelity_target, max_sweeps, stall)

        with ThreadPoolExecutor(max_workers=workers or worker_count()) as pool:
            outcomes = list(pool.map(run, range(n_starts)))
        # deterministic reduction: highest fidelity, then lowest start index
        s_best = max(range(n_starts), key=lambda s: (outcomes[s][1], -s))
        values, fid, trace = outcomes[s_best]
        best.history.append({"windows": n, "fidelity": fid, "start": s_best, "sweeps": len(trace) - 1})
        if fid > best.fidelity:
            best.control = PiecewiseConstantControl(values, tau, c)
            best.fidelity = fid
            best.start = s_best
        warm = values
        if best.fidelity >= fidelity_target:
            best.converged = True
            break
        n *= 2
    return best
