"""Hypothesis checks for bilinear systems ``i dPsi/dt = (H0 + u(t) H1) Psi``."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..exceptions import InvalidArgumentError, PreconditionError
from ..spectral import HERMITIAN_TOL, Spectrum, TruncatedOperator, eigendecompose

COUPLING_TOL = 1e-12
RATIO_TOL = 1e-12
MAX_SCREENED_GAPS = 20


@dataclass
class ControllabilityReport:
    """Verdicts of the normality and gap/coupling screens, with witnesses.

    Fields left as ``None`` were not evaluated by the check that produced
    the report.
    """

    a1_self_adjoint: bool | None = None
    a2_eigenbasis: bool | None = None
    a3_domain: bool | None = None
    gaps_independent: bool | None = None
    couplings_nonzero: bool | None = None
    denominator_bound: int | None = None
    n_gaps_screened: int = 0
    degenerate: bool = False
    witnesses: dict = field(default_factory=dict)

    @property
    def normal(self) -> bool | None:
        verdicts = (self.a1_self_adjoint, self.a2_eigenbasis, self.a3_domain)
        if any(v is None for v in verdicts):
            return None
        return all(verdicts)

    @property
    def passed(self) -> bool:
        checks = [self.normal, self.gaps_independent, self.couplings_nonzero]
        return all(c is not False for c in checks) and any(c is not None for c in checks)

    def to_dict(self) -> dict:
        return {
            "normal": self.normal,
            "A1_self_adjoint": self.a1_self_adjoint,
            "A2_eigenbasis": self.a2_eigenbasis,
            "A3_domain": self.a3_domain,
            "gaps_independent": self.gaps_independent,
            "couplings_nonzero": self.couplings_nonzero,
            "denominator_bound": self.denominator_bound,
            "n_gaps_screened": self.n_gaps_screened,
            "degenerate_spectrum": self.degenerate,
            "verdict_kind": "screened",
            "passed": self.passed,
            "witnesses": self.witnesses,
        }


def check_normal_system(H0: TruncatedOperator, H1: TruncatedOperator) -> ControllabilityReport:
    if H0.dim != H1.dim:
        raise InvalidArgumentError(f"dimension mismatch: H0 is {H0.dim}, H1 is {H1.dim}")
    report = ControllabilityReport()
    dev0, dev1 = H0.hermiticity_error, H1.hermiticity_error
    report.a1_self_adjoint = dev0 <= HERMITIAN_TOL and dev1 <= HERMITIAN_TOL
    if not report.a1_self_adjoint:
        report.witnesses["A1"] = {"H0_max_asymmetry": dev0, "H1_max_asymmetry": dev1}
    try:
        spec = eigendecompose(H0)
    except PreconditionError as exc:
        report.a2_eigenbasis = False
        report.witnesses["A2"] = {"error": str(exc), "max_asymmetry": exc.deviation}
    else:
        v = spec.eigenvectors
        err = float(np.max(np.abs(v.conj().T @ v - np.eye(len(v)))))
        report.a2_eigenbasis = err <= 1e-10
        if not report.a2_eigenbasis:
            report.witnesses["A2"] = {"unitarity_error": err}
        report.degenerate = bool(np.any(np.abs(spec.gaps) <= RATIO_TOL * np.maximum(1, np.abs(spec.eigenvalues[1:]))))
    # every vector lies in the domain of a matrix
    report.a3_domain = True
    report.witnesses.setdefault("notes", []).append("A3 holds trivially in finite dimension")
    return report


def convergents(x: Fraction, max_den: int):
    """Continued-fraction convergents ``p/q`` of ``x`` with ``q <= max_den``."""
    p0, q0, p1, q1 = 0, 1, 1, 0
    num, den = x.numerator, x.denominator
    while den:
        a, rem = divmod(num, den)
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        if q1 > max_den:
            return
        yield Fraction(p1, q1)
        num, den = den, rem


def rational_witness(ratio: float, Q: int, rel_tol: float = RATIO_TOL):
    """First convergent within ``rel_tol * max(1, |ratio|)`` of ``ratio``, else ``None``."""
    target = Fraction(ratio)
    tol = Fraction(rel_tol) * max(1, abs(target))
    for c in convergents(target, Q):
        if abs(target - c) <= tol:
            return c
    return None


def check_chambrion_conditions(spec: Spectrum, H1: TruncatedOperator, Q: int = 10 ** 6,
                               n_gaps: int | None = None) -> ControllabilityReport:
    """Screen gap independence and consecutive couplings.

    Each pair of gaps is screened once, as the ratio of the smaller to the
    larger, for continued-fraction approximants with denominator at most
    ``Q``; zero gaps fail outright. A pass is a screening verdict, not a
    proof of irrationality.
    """
    if Q < 1:
        raise InvalidArgumentError(f"denominator bound must be >= 1, got {Q}")
    if H1.dim != spec.dim:
        raise InvalidArgumentError("H1 dimension does not match the spectrum")
    if n_gaps is None:
        N = (spec.dim - 1) // 2
        n_gaps = min(2 * N, MAX_SCREENED_GAPS, spec.dim - 1)
    gaps = spec.gaps[:n_gaps]
    lam = spec.eigenvalues
    report = ControllabilityReport(denominator_bound=int(Q), n_gaps_screened=len(gaps))
    hits = []
    zero = [i for i, g in enumerate(gaps) if abs(g) <= RATIO_TOL * max(1.0, abs(lam[i + 1]))]
    for i in zero:
        hits.append({"kind": "zero_gap", "i": i, "gap": float(gaps[i]),
                     "eigenvalues": [float(lam[i]), float(lam[i + 1])]})
    report.degenerate = bool(zero)
    live = [i for i in range(len(gaps)) if i not in zero]
    # each unordered pair once, oriented so that |ratio| <= 1
    for a, i in enumerate(live):
        for j in live[a + 1:]:
            num, den = (i, j) if abs(gaps[i]) <= abs(gaps[j]) else (j, i)
            ratio = gaps[num] / gaps[den]
            c = rational_witness(ratio, Q)
            if c is not None:
                hits.append({"kind": "rational_ratio", "i": num, "j": den, "p": c.numerator,
                             "q": c.denominator, "ratio": float(ratio)})
    report.gaps_independent = not hits
    if hits:
        report.witnesses["gaps"] = hits
    if Q == 1:
        report.witnesses.setdefault("notes", []).append(
            "Q = 1 screens integer ratios only; passing is close to vacuous")

    coup = np.abs(consecutive_couplings(spec, H1))
    bad = np.flatnonzero(coup <= COUPLING_TOL)
    report.couplings_nonzero = len(bad) == 0
    if len(bad):
        report.witnesses["couplings"] = {"first_failing_index": int(bad[0]),
                                         "modulus": float(coup[bad[0]])}
    report.witnesses["min_coupling"] = float(coup.min()) if len(coup) else None
    return report


def consecutive_couplings(spec: Spectrum, H1: TruncatedOperator) -> np.ndarray:
    """``<phi_{n+1}, H1 phi_n>`` for consecutive eigenpairs."""
    v = spec.eigenvectors
    return np.einsum("ij,ik,kj->j", v[:, 1:].conj(), H1.matrix, v[:, :-1])
