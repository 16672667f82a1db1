"""Exact propagation of the qubit + bath under a pulse train, and the observables read from it."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from ddsym.model import HamiltonianParts
from ddsym.opcore import PAULI, TOL, Evolver, is_hermitian
from ddsym.seq import Delay, Pulse, PulseSequence

ONE_OVER_E = math.exp(-1)
SAMPLE_MODES = ("cycle_boundaries", "window_centers", "every_pulse", "uniform")

SamplePoints = Union[str, tuple, float]


class NotDecayedError(ValueError):
    def __init__(self, last_value: float):
        super().__init__(f"signal never fell below 1/e (last value {last_value:.6g})")
        self.last_value = last_value


class DegenerateFitError(ValueError):
    """Too little transverse signal to fit a precession rate."""


@dataclass(frozen=True)
class QuantumState:
    rho: np.ndarray

    def __post_init__(self):
        rho = self.rho
        if abs(np.trace(rho) - 1) > 1e-12:
            raise ValueError(f"density matrix trace {np.trace(rho)} != 1")
        if not is_hermitian(rho):
            raise ValueError("density matrix is not Hermitian")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise ValueError("density matrix is not positive semidefinite")

    @property
    def n_sites(self) -> int:
        return int(round(math.log2(self.rho.shape[0])))


def pulse_unitary(phase: float, epsilon: float) -> np.ndarray:
    """2x2 exp(-i (1+eps) pi S_phi)."""
    half = (1 + epsilon) * math.pi / 2
    sigma = math.cos(phase) * PAULI["x"] + math.sin(phase) * PAULI["y"]
    return math.cos(half) * np.eye(2) - 1j * math.sin(half) * sigma


def _qubit_left(u: np.ndarray, M: np.ndarray) -> np.ndarray:
    """(u ⊗ 1) @ M without forming the Kronecker product."""
    d = M.shape[0]
    return np.tensordot(u, M.reshape(2, d // 2, d), axes=(1, 0)).reshape(d, d)


def _apply_pulse(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = _qubit_left(u, rho)
    return _qubit_left(u, out.conj().T).conj().T


def cycle_propagator(
    s: PulseSequence, parts: HamiltonianParts, epsilon: float | None = None
) -> np.ndarray:
    """Time-ordered product of free evolutions and exact imperfect pi pulses."""
    if not len(s):
        raise ValueError("empty sequence")
    eps = parts.spec.epsilon if epsilon is None else float(epsilon)
    evolve_for = Evolver(parts.H_total)
    U = np.eye(parts.dim, dtype=complex)
    for el in s.elements:
        if isinstance(el, Delay):
            if el.duration > 0:
                U = evolve_for(el.duration) @ U
        else:
            U = _qubit_left(pulse_unitary(el.phase, eps), U)
    return U


def prepare_state(parts: HamiltonianParts, direction: str = "y") -> QuantumState:
    """Qubit polarized along ``direction`` with a maximally mixed bath.

    Normalized so the prepared component reads exactly 1 (see ``magnetization``).
    """
    if direction not in ("x", "y", "z"):
        raise ValueError("direction must be x, y or z")
    d = parts.dim
    rho = np.eye(d, dtype=complex) / d + parts.S(direction) / (d // 2)
    return QuantumState(rho)


def magnetization(rho: np.ndarray, n_sites: int) -> tuple[float, float, float]:
    """(Mx, My, Mz) = Tr(rho 2 S_a); 1 for a fully polarized qubit."""
    d = rho.shape[0]
    r = rho.reshape(2, d // 2, 2, d // 2)
    q = np.einsum("ibjb->ij", r)  # reduced qubit state
    return (
        float(2 * q[0, 1].real),
        float(-2 * q[0, 1].imag),
        float((q[0, 0] - q[1, 1]).real),
    )


@dataclass
class Trajectory:
    times: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    mz: np.ndarray
    sample_points: str = "cycle_boundaries"
    cycle_time: float = 0.0
    pulses_per_cycle: int = 0
    label: str = ""
    rho_trace: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.times, self.mx, self.my, self.mz = map(np.asarray, (self.times, self.mx, self.my, self.mz))
        if not len(self.times) == len(self.mx) == len(self.my) == len(self.mz):
            raise ValueError("trajectory arrays differ in length")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.mx**2 + self.my**2 + self.mz**2)

    @property
    def transverse(self) -> np.ndarray:
        return np.hypot(self.mx, self.my)

    def cycle_mask(self) -> np.ndarray:
        if self.cycle_time <= 0:
            return np.zeros(len(self), dtype=bool)
        k = self.times / self.cycle_time
        return np.abs(k - np.round(k)) < 1e-9

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "mx", "my", "mz"])
            for row in zip(self.times, self.mx, self.my, self.mz):
                w.writerow([f"{v:.12g}" for v in row])

    @classmethod
    def from_csv(cls, path: str | Path, **meta) -> Trajectory:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3], **meta)


def _normalize_sampling(sample_points: SamplePoints) -> tuple[str, float]:
    if isinstance(sample_points, (int, float)) and not isinstance(sample_points, bool):
        return "uniform", float(sample_points)
    if isinstance(sample_points, dict) and set(sample_points) == {"uniform"}:
        return "uniform", float(sample_points["uniform"])
    if isinstance(sample_points, (tuple, list)) and len(sample_points) == 2 and sample_points[0] == "uniform":
        return "uniform", float(sample_points[1])
    if sample_points in SAMPLE_MODES and sample_points != "uniform":
        return sample_points, 0.0
    raise ValueError(f"unknown sample_points {sample_points!r}")


def _sample_times(s: PulseSequence, n_cycles: int, mode: str, dt: float) -> np.ndarray:
    tc = s.cycle_time
    if mode == "uniform":
        if not dt > 0:
            raise ValueError("uniform sampling needs dt > 0")
        n = int(math.floor(n_cycles * tc / dt + 1e-9))
        return np.arange(1, n + 1) * dt
    if mode == "window_centers":
        pulse_t = np.concatenate([s.pulse_times() + c * tc for c in range(n_cycles)])
        gaps = np.diff(pulse_t)
        degenerate = gaps <= 1e-12 * max(tc, 1.0)
        if degenerate.any():
            warnings.warn(
                f"{int(degenerate.sum())} zero-length windows between pulses skipped",
                RuntimeWarning,
                stacklevel=3,
            )
        return (pulse_t[:-1] + gaps / 2)[~degenerate]
    return np.array([])


def evolve(
    s: PulseSequence,
    parts: HamiltonianParts,
    epsilon: float | None = None,
    rho0: QuantumState | None = None,
    n_cycles: int = 1,
    sample_points: SamplePoints = "cycle_boundaries",
) -> Trajectory:
    """Propagate ``n_cycles`` repetitions of ``s`` and sample (Mx, My, Mz).

    ``t = 0`` is always the first sample.  A sample that coincides with a
    pulse is taken after that pulse.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    eps = parts.spec.epsilon if epsilon is None else float(epsilon)
    mode, dt = _normalize_sampling(sample_points)
    rho = (rho0 or prepare_state(parts, "y")).rho.copy()
    n = parts.n_sites
    tc = s.cycle_time
    tol = 1e-9 * max(tc, 1.0)

    times = [0.0]
    samples = [magnetization(rho, n)]
    traces = [np.trace(rho).real]

    def record(t):
        times.append(t)
        samples.append(magnetization(rho, n))
        traces.append(np.trace(rho).real)

    if mode == "cycle_boundaries":
        U = cycle_propagator(s, parts, eps)
        Ud = U.conj().T
        for c in range(1, n_cycles + 1):
            rho = U @ rho @ Ud
            record(c * tc)
    else:
        evolve_for = Evolver(parts.H_total)
        pulses = {p.phase: pulse_unitary(p.phase, eps) for p in s.pulses}
        pending = list(_sample_times(s, n_cycles, mode, dt))
        pending.reverse()
        t = 0.0
        for c in range(n_cycles):
            for el in s.elements:
                if isinstance(el, Pulse):
                    rho = _apply_pulse(rho, pulses[el.phase])
                    if mode == "every_pulse":
                        record(t)
                    continue
                end = t + el.duration
                while pending and pending[-1] < end - tol:
                    ts = pending.pop()
                    if ts > t:
                        U = evolve_for(ts - t)
                        rho = U @ rho @ U.conj().T
                        t = ts
                    record(ts)
                if end > t:
                    U = evolve_for(end - t)
                    rho = U @ rho @ U.conj().T
                t = end
            t = (c + 1) * tc
        while pending:
            record(pending.pop())

    mx, my, mz = (np.array(v) for v in zip(*samples))
    return Trajectory(
        times=np.array(times),
        mx=mx,
        my=my,
        mz=mz,
        sample_points=mode if mode != "uniform" else f"uniform({dt:g})",
        cycle_time=tc,
        pulses_per_cycle=s.n_pulses,
        label=s.label,
        rho_trace=np.array(traces),
    )


def decay_time(traj: Trajectory, channel: str = "my") -> float:
    """First 1/e crossing, linearly interpolated between the bracketing samples."""
    if channel == "my":
        signal = traj.my
    elif channel == "total":
        signal = traj.magnitude
    else:
        raise ValueError("channel must be 'my' or 'total'")
    if len(signal) < 2:
        raise ValueError("trajectory too short")
    if abs(signal[0] - 1) > 1e-6:
        raise ValueError(f"signal must start at 1, starts at {signal[0]:.6g}")
    below = np.nonzero(signal < ONE_OVER_E)[0]
    if not below.size:
        raise NotDecayedError(float(signal[-1]))
    i = below[0]
    t0, t1 = traj.times[i - 1], traj.times[i]
    s0, s1 = signal[i - 1], signal[i]
    return float(t0 + (s0 - ONE_OVER_E) * (t1 - t0) / (s0 - s1))


def precession_angle(traj: Trajectory, n_pulses_per_cycle: int | None = None) -> float:
    """Least-squares precession about +z per pulse, from the cycle-boundary samples.

    The angle is atan2(-Mx, My), unwrapped; positive means +y turning towards -x.
    Only the leading run of samples with transverse magnitude above 0.1 is fitted.
    """
    per_cycle = n_pulses_per_cycle or traj.pulses_per_cycle
    if not per_cycle:
        raise ValueError("pulses per cycle unknown")
    mask = traj.cycle_mask()
    t = traj.times[mask]
    mx, my = traj.mx[mask], traj.my[mask]
    strong = np.hypot(mx, my) > 0.1
    n_ok = len(strong) if strong.all() else int(np.argmin(strong))
    if n_ok < 3:
        raise DegenerateFitError(f"only {n_ok} cycle samples with transverse signal above 0.1")
    theta = np.unwrap(np.arctan2(-mx[:n_ok], my[:n_ok]))
    cycles = t[:n_ok] / traj.cycle_time
    slope = np.polyfit(cycles, theta, 1)[0]
    return float(slope / per_cycle)


# --- process tomography ---------------------------------------------------------

_PAULI_BASIS = [np.eye(2, dtype=complex), PAULI["x"], PAULI["y"], PAULI["z"]]


def _partial_trace_bath(M: np.ndarray) -> np.ndarray:
    d = M.shape[0]
    return np.einsum("ibjb->ij", M.reshape(2, d // 2, 2, d // 2))


def _pauli_outputs(U: np.ndarray, bath_dim: int) -> list[np.ndarray]:
    """E(sigma_j) = Tr_B[U (sigma_j ⊗ 1/d_B) U^dagger] for the four Paulis."""
    Ud = U.conj().T
    outs = []
    for sigma in _PAULI_BASIS:
        # (sigma ⊗ 1) @ Ud, then U @ ...
        inner = _qubit_left(sigma, Ud) / bath_dim
        outs.append(_partial_trace_bath(U @ inner))
    return outs


def chi_from_outputs(outputs: list[np.ndarray]) -> np.ndarray:
    """Process matrix chi with E(rho) = sum_mn chi_mn sigma_m rho sigma_n."""
    # superoperator S with vec(E(rho)) = S vec(rho), column-stacking vec
    units = [np.outer(np.eye(2)[a], np.eye(2)[b]) for b in range(2) for a in range(2)]
    S = np.zeros((4, 4), dtype=complex)
    for col, E_ab in enumerate(units):
        # |a><b| = 1/2 sum_j <b|sigma_j|a> sigma_j
        out = sum(0.5 * np.trace(sigma.conj().T @ E_ab) * o for sigma, o in zip(_PAULI_BASIS, outputs))
        S[:, col] = out.reshape(-1, order="F")
    B = np.zeros((16, 16), dtype=complex)
    for m, sm in enumerate(_PAULI_BASIS):
        for n_, sn in enumerate(_PAULI_BASIS):
            B[:, 4 * m + n_] = np.kron(sn.conj(), sm).reshape(-1)
    chi = np.linalg.solve(B, S.reshape(-1)).reshape(4, 4)
    return (chi + chi.conj().T) / 2


def process_matrix(
    s: PulseSequence, parts: HamiltonianParts, epsilon: float | None = None, n_cycles: int = 1
) -> np.ndarray:
    eps = parts.spec.epsilon if epsilon is None else float(epsilon)
    if n_cycles < 0:
        raise ValueError("n_cycles must be >= 0")
    U = np.linalg.matrix_power(cycle_propagator(s, parts, eps), n_cycles)
    return chi_from_outputs(_pauli_outputs(U, parts.dim // 2))


def process_fidelity(
    s: PulseSequence, parts: HamiltonianParts, epsilon: float | None = None, n_cycles: int = 1
) -> float:
    """Tr(chi_ideal chi) against the identity channel, i.e. chi_00."""
    chi = process_matrix(s, parts, epsilon, n_cycles)
    return float(np.clip(chi[0, 0].real, 0.0, 1.0))


def fidelity_series(
    s: PulseSequence, parts: HamiltonianParts, epsilon: float | None = None, n_cycles: int = 1
) -> np.ndarray:
    """Process fidelity after 0, 1, ..., n_cycles cycles."""
    eps = parts.spec.epsilon if epsilon is None else float(epsilon)
    Uc = cycle_propagator(s, parts, eps)
    U = np.eye(parts.dim, dtype=complex)
    out = []
    for c in range(n_cycles + 1):
        chi = chi_from_outputs(_pauli_outputs(U, parts.dim // 2))
        out.append(float(np.clip(chi[0, 0].real, 0.0, 1.0)))
        U = Uc @ U
    return np.array(out)


def write_metrics(path: str | Path, record: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def echo_times(traj: Trajectory, threshold: float = 0.9, prominence: float = 0.05) -> np.ndarray:
    """Times of local My maxima above ``threshold`` that stand out from the neighbouring troughs."""
    my = traj.my
    peaks = []
    for i in range(1, len(my) - 1):
        if my[i] >= threshold and my[i] >= my[i - 1] and my[i] >= my[i + 1]:
            lo = i
            while lo > 0 and my[lo - 1] <= my[lo]:
                lo -= 1
            hi = i
            while hi < len(my) - 1 and my[hi + 1] <= my[hi]:
                hi += 1
            if my[i] - max(my[lo], my[hi]) >= prominence:
                peaks.append(traj.times[i])
    return np.array(peaks)
