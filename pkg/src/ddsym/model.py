"""System + spin-bath Hamiltonian H = H_S + H_SE + H_E."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from ddsym.opcore import ValidationError, embed_spin_op

BATH_MODELS = ("none", "secular_dipolar", "diagonal")
MAX_BATH = 10


@dataclass(frozen=True)
class HamiltonianSpec:
    """Couplings in rad per microsecond; ``d`` is ordered as (0,1), (0,2), ..., (K-2,K-1)."""

    n_bath: int = 0
    omega_S: float = 0.0
    b: tuple[float, ...] = ()
    bath_model: str = "none"
    d: tuple[float, ...] = ()
    epsilon: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        object.__setattr__(self, "d", tuple(float(x) for x in self.d))
        self.validate()

    def validate(self) -> None:
        K = self.n_bath
        if not isinstance(K, (int, np.integer)) or not 0 <= K <= MAX_BATH:
            raise ValidationError(f"n_bath must be an integer in 0..{MAX_BATH}, got {K!r}")
        if self.bath_model not in BATH_MODELS:
            raise ValidationError(f"unknown bath_model {self.bath_model!r}; expected one of {BATH_MODELS}")
        if len(self.b) != K:
            raise ValidationError(f"expected {K} couplings b_k, got {len(self.b)}")
        n_pairs = K * (K - 1) // 2
        if self.bath_model != "none" and len(self.d) != n_pairs:
            raise ValidationError(f"expected {n_pairs} pair couplings d_jk, got {len(self.d)}")
        values = (self.omega_S, self.epsilon, *self.b, *self.d)
        if not all(np.isfinite(v) for v in values):
            raise ValidationError("all couplings must be finite")

    @classmethod
    def random(
        cls,
        n_bath: int,
        scale_b: float,
        scale_d: float,
        seed: int,
        bath_model: str = "secular_dipolar",
        epsilon: float = 0.0,
        omega_S: float = 0.0,
    ) -> HamiltonianSpec:
        b, d = sample_couplings(n_bath, scale_b, scale_d, seed)
        return cls(
            n_bath=n_bath,
            omega_S=omega_S,
            b=b,
            bath_model=bath_model,
            d=d if bath_model != "none" else (),
            epsilon=epsilon,
            seed=seed,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["b"] = list(self.b)
        out["d"] = list(self.d)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> HamiltonianSpec:
        return cls(**data)


@dataclass(frozen=True)
class HamiltonianParts:
    H_S: np.ndarray
    H_SE: np.ndarray
    H_E: np.ndarray
    n_sites: int
    spec: HamiltonianSpec = field(repr=False)

    @property
    def H_total(self) -> np.ndarray:
        return self.H_S + self.H_SE + self.H_E

    @property
    def dim(self) -> int:
        return 2**self.n_sites

    def scaled(self, factor: float) -> HamiltonianParts:
        """Every Hamiltonian part multiplied by ``factor`` (spec left unchanged)."""
        return HamiltonianParts(
            H_S=factor * self.H_S,
            H_SE=factor * self.H_SE,
            H_E=factor * self.H_E,
            n_sites=self.n_sites,
            spec=self.spec,
        )

    def S(self, axis: str) -> np.ndarray:
        return embed_spin_op(0, axis, self.n_sites)

    def I(self, k: int, axis: str) -> np.ndarray:
        """Operator of bath spin ``k`` (0-based)."""
        return embed_spin_op(k + 1, axis, self.n_sites)


def pair_indices(K: int) -> list[tuple[int, int]]:
    return list(combinations(range(K), 2))


def sample_couplings(
    K: int, scale_b: float, scale_d: float, seed: int
) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Draw b_k ~ N(0, scale_b^2) and d_jk ~ N(0, scale_d^2) from a seeded PCG64 stream."""
    if K < 0:
        raise ValueError("K must be non-negative")
    if not (scale_b > 0 and scale_d > 0):
        raise ValueError("coupling scales must be positive")
    rng = np.random.default_rng(seed)
    b = rng.normal(0.0, scale_b, size=K)
    d = rng.normal(0.0, scale_d, size=K * (K - 1) // 2)
    return tuple(b.tolist()), tuple(d.tolist())


def build_hamiltonian(spec: HamiltonianSpec) -> HamiltonianParts:
    spec.validate()
    K = spec.n_bath
    n = K + 1
    dim = 2**n
    Sz = embed_spin_op(0, "z", n)
    H_S = spec.omega_S * Sz
    H_SE = np.zeros((dim, dim), dtype=complex)
    for k, bk in enumerate(spec.b):
        H_SE += bk * (Sz @ embed_spin_op(k + 1, "z", n))
    H_E = np.zeros((dim, dim), dtype=complex)
    if spec.bath_model != "none":
        for (j, k), djk in zip(pair_indices(K), spec.d):
            zz = embed_spin_op(j + 1, "z", n) @ embed_spin_op(k + 1, "z", n)
            if spec.bath_model == "diagonal":
                H_E += djk * zz
            else:
                xx = embed_spin_op(j + 1, "x", n) @ embed_spin_op(k + 1, "x", n)
                yy = embed_spin_op(j + 1, "y", n) @ embed_spin_op(k + 1, "y", n)
                H_E += djk * (2 * zz - xx - yy)
    return HamiltonianParts(H_S=H_S, H_SE=H_SE, H_E=H_E, n_sites=n, spec=spec)
