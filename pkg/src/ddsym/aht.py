"""Average-Hamiltonian engine.

The cycle propagator is rewritten in the toggling frame of the ideal pi pulses
as an ordered product of exponentials ``exp(-i W_k)``.  Each ``W_k`` is either a
free-evolution window ``H~_k * tau_k`` or a zero-duration kick carrying the
flip-angle error of one pulse.  Every factor counts as grade 1; the product is
folded with a grade-tracked Baker-Campbell-Hausdorff series, which is exact
through grade 3 when terms up to third degree are kept.

With ``absorb=True`` the half-pulse error terms are instead merged into the
neighbouring delay windows before folding (the classic textbook shortcut).
That drops some grade-2 commutators; it is kept for comparison only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ddsym.model import HamiltonianParts
from ddsym.opcore import (
    PAULI,
    TOL,
    commutator,
    embed_spin_op,
    frob,
    principal_log,
    propagator,
    spin_phi,
)
from ddsym.seq import Delay, Pulse, PulseSequence

MAX_BCH_ORDER = 3


class DegenerateWindowError(ValueError):
    """Error terms would be absorbed into an interior window of zero length."""


@dataclass(frozen=True)
class TogglingSegment:
    """One factor exp(-i * weight) of the toggling-frame product.

    ``weight`` is ``H~ * duration`` for a free-evolution window and a bare
    rotation generator (radians) for a zero-duration error kick.
    """

    weight: np.ndarray
    duration: float

    @property
    def is_kick(self) -> bool:
        return self.duration == 0

    @property
    def H_tilde(self) -> np.ndarray:
        if self.is_kick:
            raise ValueError("a zero-duration kick has no Hamiltonian rate")
        return self.weight / self.duration


@dataclass
class AverageHamiltonian:
    terms: list[np.ndarray]
    cycle_time: float
    truncation_order: int
    frame: np.ndarray = field(repr=False)
    n_sites: int = 1

    def __getitem__(self, n: int) -> np.ndarray:
        return self.terms[n]

    @property
    def total(self) -> np.ndarray:
        return sum(self.terms)

    def report(self, threshold: float = 1e-12) -> str:
        lines = [f"cycle_time = {self.cycle_time:.12g}", f"truncation_order = {self.truncation_order}"]
        for n, term in enumerate(self.terms):
            lines.append(f"H{n}  (|H{n}|_F = {frob(term):.12g})")
            coeffs = pauli_expansion(term, self.n_sites)
            shown = {k: v for k, v in coeffs.items() if abs(v) > threshold}
            if not shown:
                lines.append("  0")
            for label, c in sorted(shown.items(), key=lambda kv: (-abs(kv[1]), kv[0])):
                lines.append(f"  {c:+.12g} {label}")
        return "\n".join(lines) + "\n"


def pauli_expansion(A: np.ndarray, n_sites: int) -> dict[str, float]:
    """Real coefficients c_P of a Hermitian A = sum_P c_P P over Pauli strings.

    Labels list site 0 (the qubit) first, e.g. ``"ZIZ"`` is sigma_z on the qubit
    and on bath spin 2.
    """
    basis = np.stack([np.eye(2, dtype=complex), PAULI["x"], PAULI["y"], PAULI["z"]])
    T = np.asarray(A).reshape((2,) * (2 * n_sites))
    for s in range(n_sites):
        # remaining rows, remaining cols, then the Pauli indices already contracted
        T = np.tensordot(T, basis, axes=([0, n_sites - s], [2, 1]))
    coeffs = T.reshape(-1).real / 2**n_sites
    labels = ("".join(p) for p in product("IXYZ", repeat=n_sites))
    return {lab: float(c) for lab, c in zip(labels, coeffs)}


def error_decompose(
    pulse: Pulse, epsilon: float, t_p: float, n_sites: int = 1
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split exp(-i(1+eps) pi S_phi) into error half, ideal pulse, error half.

    The halves are returned as rotation generators (operator * time); each is
    (eps pi / 2) S_phi whatever the pulse length ``t_p``.
    """
    if not isinstance(pulse, Pulse):
        raise ValueError("error_decompose needs a Pulse, not a Delay")
    if not t_p > 0:
        raise ValueError("pulse length must be positive")
    S_phi = spin_phi(pulse.phase, n_sites)
    H_phi = (epsilon * math.pi / t_p) * S_phi
    half = H_phi * (t_p / 2)
    ideal = propagator(math.pi * S_phi, 1.0)
    return half, ideal, half.copy()


def _ideal_pulse(phase: float, n_sites: int) -> np.ndarray:
    # exp(-i pi S_phi) = -i sigma_phi on the qubit
    c, s = math.cos(phase), math.sin(phase)
    op = -1j * (c * 2 * embed_spin_op(0, "x", n_sites) + s * 2 * embed_spin_op(0, "y", n_sites))
    return op


def _resolve_epsilon(parts: HamiltonianParts, epsilon: float | None) -> float:
    return parts.spec.epsilon if epsilon is None else float(epsilon)


def toggling_frame(
    s: PulseSequence,
    parts: HamiltonianParts,
    epsilon: float | None = None,
    absorb: bool = False,
) -> list[TogglingSegment]:
    if not len(s):
        raise ValueError("empty sequence")
    eps = _resolve_epsilon(parts, epsilon)
    n = parts.n_sites
    H = parts.H_total
    Q = np.eye(parts.dim, dtype=complex)

    def toggle(A):
        return Q.conj().T @ A @ Q

    if not absorb:
        segments = []
        open_window = False  # last segment is a delay with no pulse after it yet
        for el in s.elements:
            if isinstance(el, Delay):
                if el.duration <= 0:
                    continue
                if open_window:
                    last = segments[-1]
                    duration = last.duration + el.duration
                    segments[-1] = TogglingSegment(toggle(H) * duration, duration)
                else:
                    segments.append(TogglingSegment(toggle(H) * el.duration, el.duration))
                    open_window = True
            else:
                open_window = False
                if eps != 0:
                    # both error halves commute with the ideal pulse, so they share a frame
                    segments.append(TogglingSegment(toggle(eps * math.pi * spin_phi(el.phase, n)), 0.0))
                Q = _ideal_pulse(el.phase, n) @ Q
        return segments

    # absorbed form: each window collects H * duration plus the error halves of its flanking pulses
    windows: list[list] = [[0.0, np.zeros_like(H), Q.copy(), False]]
    for el in s.elements:
        win = windows[-1]
        if isinstance(el, Delay):
            win[0] += el.duration
            win[1] = win[1] + H * el.duration
        else:
            half = (eps * math.pi / 2) * spin_phi(el.phase, n)
            win[1] = win[1] + half
            win[3] = win[3] or eps != 0
            Q = _ideal_pulse(el.phase, n) @ Q
            windows.append([0.0, half.copy(), Q.copy(), eps != 0])
    segments = []
    for i, (duration, weight, frame, has_error) in enumerate(windows):
        if duration == 0 and not has_error:
            continue
        if duration == 0 and 0 < i < len(windows) - 1:
            raise DegenerateWindowError(
                f"window {i} has zero length but must absorb pulse-error terms"
            )
        segments.append(TogglingSegment(frame.conj().T @ weight @ frame, duration))
    return segments


def ideal_frame(s: PulseSequence, n_sites: int) -> np.ndarray:
    """Ordered product of the ideal pulses of one cycle."""
    Q = np.eye(2**n_sites, dtype=complex)
    for p in s.pulses:
        Q = _ideal_pulse(p.phase, n_sites) @ Q
    return Q


# --- graded BCH ---------------------------------------------------------------


def bch_truncated(A: np.ndarray, B: np.ndarray, order: int = 3) -> np.ndarray:
    """log(e^A e^B) through total degree ``order`` in (A, B)."""
    if order > MAX_BCH_ORDER:
        raise ValueError(f"BCH order {order} unsupported (max {MAX_BCH_ORDER})")
    if order < 1:
        raise ValueError("BCH order must be >= 1")
    Z = A + B
    if order >= 2:
        AB = commutator(A, B)
        Z = Z + AB / 2
        if order >= 3:
            Z = Z + (commutator(A, AB) + commutator(AB, B)) / 12
    return Z


Graded = dict  # grade -> operator


def _gadd(*terms: tuple[float, Graded]) -> Graded:
    out: Graded = {}
    for coef, g in terms:
        for k, v in g.items():
            out[k] = out[k] + coef * v if k in out else coef * v
    return out


def _gcomm(A: Graded, B: Graded, max_grade: int) -> Graded:
    out: Graded = {}
    for ga, a in A.items():
        for gb, b in B.items():
            g = ga + gb
            if g <= max_grade:
                c = commutator(a, b)
                out[g] = out[g] + c if g in out else c
    return out


def graded_bch(A: Graded, B: Graded, max_grade: int) -> Graded:
    """Graded log(e^A e^B), discarding everything above ``max_grade``."""
    if max_grade > MAX_BCH_ORDER:
        raise ValueError(f"grade {max_grade} needs BCH terms beyond degree {MAX_BCH_ORDER}")
    AB = _gcomm(A, B, max_grade)
    parts = [(1.0, A), (1.0, B), (0.5, AB)]
    if max_grade >= 3:
        parts += [(1 / 12, _gcomm(A, AB, max_grade)), (1 / 12, _gcomm(AB, B, max_grade))]
    return _gadd(*parts)


def fold_exponents(exponents: list[np.ndarray], max_grade: int) -> Graded:
    """log(e^{X_n} ... e^{X_1}) by grade, for time-ordered grade-1 exponents X_1..X_n."""
    if not exponents:
        raise ValueError("nothing to fold")
    Z: Graded = {1: exponents[0]}
    for X in exponents[1:]:
        Z = graded_bch({1: X}, Z, max_grade)
    return Z


def average_hamiltonian(
    s: PulseSequence,
    parts: HamiltonianParts,
    epsilon: float | None = None,
    max_order: int = 2,
    absorb: bool = False,
) -> AverageHamiltonian:
    """Average-Hamiltonian terms H0..H_max_order of one cycle.

    The ideal-pulse product of the cycle (``frame``) is folded out, so the
    result describes ``frame^dagger @ U_cycle``; for XY-n and CDD cycles the
    frame is a global phase.
    """
    if not 0 <= max_order <= MAX_BCH_ORDER - 1:
        raise ValueError(f"max_order must be in 0..{MAX_BCH_ORDER - 1}")
    tc = s.cycle_time
    if tc <= 0:
        raise ValueError("average Hamiltonian needs a positive cycle time")
    segments = toggling_frame(s, parts, epsilon, absorb=absorb)
    Z = fold_exponents([-1j * seg.weight for seg in segments], max_order + 1)
    zero = np.zeros((parts.dim, parts.dim), dtype=complex)
    terms = []
    for n in range(max_order + 1):
        H = (1j / tc) * Z.get(n + 1, zero)
        terms.append((H + H.conj().T) / 2)
    return AverageHamiltonian(
        terms=terms,
        cycle_time=tc,
        truncation_order=max_order,
        frame=ideal_frame(s, parts.n_sites),
        n_sites=parts.n_sites,
    )


def log_average_hamiltonian(
    s: PulseSequence, parts: HamiltonianParts, epsilon: float | None = None
) -> np.ndarray:
    """(i / tau_c) log(frame^dagger U_cycle) from the exact propagator."""
    from ddsym.sim import cycle_propagator

    U = cycle_propagator(s, parts, _resolve_epsilon(parts, epsilon))
    Q = ideal_frame(s, parts.n_sites)
    L = principal_log(Q.conj().T @ U)
    H = (1j / s.cycle_time) * L
    return (H + H.conj().T) / 2


def graded_log_oracle(
    s: PulseSequence,
    parts: HamiltonianParts,
    epsilon: float | None = None,
    max_grade: int = 3,
    lam_max: float = 0.5,
    n_points: int = 16,
    fit_degree: int = 9,
) -> list[np.ndarray]:
    """Average-Hamiltonian terms read off the exact matrix log.

    All couplings and the flip-angle error are scaled by lambda, so the
    grade-g exponent scales as lambda^g; a polynomial fit in lambda over
    +-``lam_max`` recovers each grade.  Independent of the BCH machinery.
    """
    from ddsym.sim import cycle_propagator

    eps = _resolve_epsilon(parts, epsilon)
    Q = ideal_frame(s, parts.n_sites)
    lams = np.linspace(-lam_max, lam_max, n_points)
    lams = lams[lams != 0]
    logs = []
    for lam in lams:
        scaled = parts.scaled(lam)
        U = cycle_propagator(s, scaled, lam * eps)
        logs.append(principal_log(Q.conj().T @ U).reshape(-1))
    V = np.vander(lams, fit_degree + 1, increasing=True)[:, 1:]
    coef, *_ = np.linalg.lstsq(V, np.array(logs), rcond=None)
    tc = s.cycle_time
    out = []
    for g in range(1, max_grade + 1):
        H = (1j / tc) * coef[g - 1].reshape(parts.dim, parts.dim)
        out.append((H + H.conj().T) / 2)
    return out


# --- printed closed forms -------------------------------------------------------

CLOSED_FORM_FAMILIES = ("h0", "xy4_sym_h1", "xy4_asym_h1", "xy8_h2_noHE", "xy8_h2_idealpulses")


def closed_form_reference(
    family: str,
    parts: HamiltonianParts,
    epsilon: float,
    tau: float,
    variant: str = "S",
) -> np.ndarray:
    """Evaluate a reference closed-form average-Hamiltonian term verbatim.

    ``variant`` picks the XY-8 built from symmetric ("S") or asymmetric ("A")
    XY-4 blocks; it is ignored by the XY-4 families.
    """
    if family not in CLOSED_FORM_FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {CLOSED_FORM_FAMILIES}")
    if variant not in ("S", "A"):
        raise ValueError("variant must be 'S' or 'A'")
    K = parts.spec.n_bath
    b = parts.spec.b
    Sx, Sy, Sz = parts.S("x"), parts.S("y"), parts.S("z")
    Iz = [parts.I(k, "z") for k in range(K)]
    HE, HSE = parts.H_E, parts.H_SE
    pi, eps = math.pi, epsilon
    zero = np.zeros((parts.dim, parts.dim), dtype=complex)

    if family == "h0":
        return HE.copy()
    if family == "xy4_sym_h1":
        out = 5 * eps**2 * pi**2 / (16 * tau) * Sz
        for k in range(K):
            out = out - b[k] * (eps * pi / 32) * (Sx + Sy) @ Iz[k]
        return out
    if family == "xy4_asym_h1":
        out = 5 * eps**2 * pi**2 / (16 * tau) * Sz
        for k in range(K):
            out = out - b[k] * (eps * pi / 16) * Sx @ Iz[k]
        inner = sum((b[k] * commutator(Iz[k], HE) for k in range(K)), zero)
        return out + 1j * tau * Sz @ inner
    if family == "xy8_h2_noHE":
        if frob(HE) > TOL.hermitian:
            raise ValueError("xy8_h2_noHE requires H_E = 0")
        out = 13 * eps**3 * pi**3 / (1536 * tau) * (Sx + Sy)
        for k in range(K):
            out = out + (eps**2 * pi**2 * b[k] / 384) * Sz @ Iz[k]
        if variant == "A":
            out = out + sum(eps * b[k] ** 2 * tau / 368 for k in range(K)) * Sy
        return out
    # xy8_h2_idealpulses
    if eps != 0:
        raise ValueError("xy8_h2_idealpulses requires epsilon = 0")
    C = commutator(HE, HSE)
    out = tau**2 / 8 * commutator(C, HE - HSE / 3)
    if variant == "A":
        out = out + tau**2 / 8 * commutator(C, 7 * HE - HSE)
    return out


# --- time symmetry ---------------------------------------------------------------


def _canonical_factors(segments: list[TogglingSegment], tol: float) -> list[TogglingSegment]:
    """Merge neighbouring factors that combine exactly; drop null kicks."""
    out: list[TogglingSegment] = []
    for seg in segments:
        if seg.is_kick and frob(seg.weight) <= tol:
            continue
        if out:
            prev = out[-1]
            if not prev.is_kick and not seg.is_kick:
                same_rate = frob(prev.H_tilde - seg.H_tilde) <= tol * max(1.0, frob(seg.H_tilde))
                if same_rate:
                    out[-1] = TogglingSegment(prev.weight + seg.weight, prev.duration + seg.duration)
                    continue
            elif prev.is_kick and seg.is_kick:
                if frob(commutator(prev.weight, seg.weight)) <= tol * max(1.0, frob(seg.weight)) ** 2:
                    merged = prev.weight + seg.weight
                    out.pop()
                    if frob(merged) > tol:
                        out.append(TogglingSegment(merged, 0.0))
                    continue
        out.append(seg)
    return out


def toggling_time_symmetric(
    s: PulseSequence,
    parts: HamiltonianParts,
    epsilon: float | None = None,
    absorb: bool = False,
    tol: float | None = None,
) -> bool:
    """True iff H~(t) = H~(tau_c - t), error kicks included."""
    tol = TOL.symmetry if tol is None else tol
    factors = _canonical_factors(toggling_frame(s, parts, epsilon, absorb=absorb), tol)
    n = len(factors)
    time_scale = max(s.cycle_time, 1.0)
    for i in range(n // 2):
        a, b = factors[i], factors[n - 1 - i]
        if a.is_kick != b.is_kick:
            return False
        if abs(a.duration - b.duration) > tol * time_scale:
            return False
        scale = max(1.0, frob(a.weight))
        if frob(a.weight - b.weight) > tol * scale:
            return False
    return True
