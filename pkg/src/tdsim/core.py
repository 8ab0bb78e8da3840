"""Physical constants, unit regimes, reference frames, and shared state types.

All quantities are plain SI floats (or natural-unit floats when the
natural constant set is used); there is no unit-tagging layer.  Every type
here is an immutable value object and safe to share across workers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Constants",
    "Frame",
    "GaussianPacket",
    "SuperpositionState",
    "GridState",
    "ScenarioError",
    "NumericalRegimeError",
    "si_constants",
    "natural_constants",
    "packet_overlap",
    "state_norm",
    "normalize",
    "grid_from_superposition",
    "worker_count",
]


class ScenarioError(ValueError):
    """Invalid scenario, configuration, or precondition violation."""


class NumericalRegimeError(RuntimeError):
    """The requested computation left its validated numerical regime."""


@dataclass(frozen=True)
class Constants:
    """Constant set: hbar (J*s), c (m/s), k_B (J/K)."""

    hbar: float
    c: float
    k_B: float

    def __post_init__(self):
        if not (self.hbar > 0 and self.c > 0 and self.k_B > 0):
            raise ScenarioError("constants must be strictly positive")

    @property
    def is_natural(self) -> bool:
        return self.hbar == 1.0 and self.c == 1.0 and self.k_B == 1.0


def si_constants() -> Constants:
    """CODATA SI values (hbar derived from the exact Planck constant)."""
    planck_h = 6.62607015e-34
    return Constants(hbar=planck_h / (2.0 * np.pi), c=2.99792458e8, k_B=1.380649e-23)


def natural_constants() -> Constants:
    """hbar = c = k_B = 1 exactly."""
    return Constants(hbar=1.0, c=1.0, k_B=1.0)


@dataclass(frozen=True)
class Frame:
    """Reference frame: a laboratory at rest in gravity g, or free fall.

    The laboratory branch Hamiltonian carries +M*g*x with x measured
    upward, so packets accelerate toward -x; the free-fall frame is the
    inertial frame in which that potential is absent.
    """

    kind: str  # "laboratory" | "freefall"
    g: float = 0.0

    def __post_init__(self):
        if self.kind not in ("laboratory", "freefall"):
            raise ScenarioError(f"unknown frame kind {self.kind!r}")
        if self.kind == "laboratory" and self.g < 0:
            raise ScenarioError("laboratory frame requires g >= 0")
        if self.kind == "freefall" and self.g != 0.0:
            raise ScenarioError("free-fall frame carries no acceleration parameter")

    @staticmethod
    def laboratory(g: float) -> "Frame":
        return Frame(kind="laboratory", g=g)

    @staticmethod
    def freefall() -> "Frame":
        return Frame(kind="freefall")

    @property
    def is_lab(self) -> bool:
        return self.kind == "laboratory"


@dataclass(frozen=True)
class GaussianPacket:
    """One Gaussian wavepacket of the centre-of-mass wavefunction.

    The position representation is

        psi(x) = amp * exp(i*phase) * (2*pi*sigma^2)^(-1/4) * spread^(-1/2)
                 * exp(-(x - x0)^2 / (4 sigma^2 spread) + i p0 (x - x0) / hbar)

    ``sigma`` is the width of the un-spread envelope; ``spread`` is the
    complex free-spreading factor (1 for a freshly prepared packet), so the
    instantaneous physical width is sigma*|spread|.  With |amp| = 1 the
    packet has unit norm for every value of ``spread``.
    """

    x0: float
    p0: float
    sigma: float
    amp: complex = 1.0 + 0.0j
    phase: float = 0.0
    spread: complex = 1.0 + 0.0j

    def __post_init__(self):
        if not self.sigma > 0:
            raise ScenarioError("packet width sigma must be positive")
        if self.spread.real <= 0:
            raise ScenarioError("spreading factor must stay in the right half-plane")

    @property
    def width(self) -> float:
        """Instantaneous position-space standard deviation."""
        return self.sigma * abs(self.spread)

    def value(self, x, hbar: float):
        """Evaluate psi at x (scalar or array).  Phases are taken literally,
        so this is only meaningful when accumulated phases are resolvable
        in double precision (natural-unit scenarios)."""
        x = np.asarray(x, dtype=float)
        norm = (2.0 * np.pi * self.sigma**2) ** (-0.25) / np.sqrt(complex(self.spread))
        envelope = np.exp(-((x - self.x0) ** 2) / (4.0 * self.sigma**2 * self.spread))
        plane = np.exp(1j * (self.p0 * (x - self.x0) / hbar + self.phase))
        return self.amp * norm * envelope * plane


def packet_overlap(a: GaussianPacket, b: GaussianPacket, hbar: float) -> complex:
    """Closed-form <a|b> including amplitudes, phases, and spreading."""
    ca = 1.0 / (4.0 * a.sigma**2 * np.conj(a.spread))
    cb = 1.0 / (4.0 * b.sigma**2 * b.spread)
    alpha = ca + cb
    beta = 2.0 * ca * a.x0 + 2.0 * cb * b.x0 + 1j * (b.p0 - a.p0) / hbar
    gamma = -ca * a.x0**2 - cb * b.x0**2 + 1j * (a.p0 * a.x0 - b.p0 * b.x0) / hbar
    na = (2.0 * np.pi * a.sigma**2) ** (-0.25) / np.sqrt(complex(a.spread))
    nb = (2.0 * np.pi * b.sigma**2) ** (-0.25) / np.sqrt(complex(b.spread))
    prefactor = np.conj(a.amp * na) * b.amp * nb * np.exp(1j * (b.phase - a.phase))
    return complex(prefactor * np.sqrt(np.pi / alpha) * np.exp(beta**2 / (4.0 * alpha) + gamma))


@dataclass(frozen=True)
class SuperpositionState:
    """Centre-of-mass state as a weighted sum of Gaussian packets."""

    packets: tuple[GaussianPacket, ...]
    mass: float

    def __post_init__(self):
        if len(self.packets) == 0:
            raise ScenarioError("superposition needs at least one packet")
        if not self.mass > 0:
            raise ScenarioError("rest mass must be positive")
        object.__setattr__(self, "packets", tuple(self.packets))


def state_norm(state: SuperpositionState, hbar: float) -> float:
    """Norm including all inter-packet Gaussian overlap terms."""
    total = 0.0 + 0.0j
    for pi in state.packets:
        for pj in state.packets:
            total += packet_overlap(pi, pj, hbar)
    return float(np.sqrt(total.real))


def normalize(state: SuperpositionState, hbar: float) -> SuperpositionState:
    """Rescale packet amplitudes so the total norm is 1.

    Idempotent: a state whose norm is already 1 to within a few ulp is
    returned unchanged.
    """
    n = state_norm(state, hbar)
    if n == 0.0 or not np.isfinite(n):
        raise ScenarioError("cannot normalize a zero-norm state")
    if abs(n - 1.0) < 8.0 * np.finfo(float).eps:
        return state
    packets = tuple(replace(p, amp=p.amp / n) for p in state.packets)
    return SuperpositionState(packets=packets, mass=state.mass)


@dataclass(frozen=True)
class GridState:
    """Complex amplitudes on a uniform grid; the oracle representation.

    n is a power of two (spectral transforms); amplitudes are interpreted
    as samples of a periodic band-limited wavefunction, normalized so that
    sum(|psi|^2) * dx = 1.
    """

    x_min: float
    dx: float
    n: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n <= 0 or (self.n & (self.n - 1)) != 0:
            raise ScenarioError("grid size must be a power of two")
        if not self.dx > 0:
            raise ScenarioError("grid spacing must be positive")
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.n,):
            raise ScenarioError("amplitude array does not match grid size")
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers of the spectral representation."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.dx))

    def value_at(self, x) -> np.ndarray:
        """Trigonometric (band-limited) interpolation of psi at arbitrary x.

        Exact for states resolved by the grid; used to read coherences at
        continuously moving evaluation points.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        coeff = np.fft.fft(self.amplitudes) / self.n
        out = coeff[None, :] * np.exp(1j * np.outer(x - self.x_min, self.k))
        return out.sum(axis=1)


def grid_from_superposition(
    state: SuperpositionState,
    const: Constants,
    span_sigmas: float = 8.0,
    dx_factor: float = 8.0,
    pad: float = 0.0,
    n_min: int = 64,
) -> GridState:
    """Sample a superposition onto a power-of-two grid.

    The grid spans span_sigmas widths beyond every packet center (plus an
    optional extra pad for subsequent motion) with spacing at most
    min(sigma)/dx_factor; this keeps truncation below the 1e-12 norm budget.
    """
    widths = [p.width for p in state.packets]
    lo = min(p.x0 for p in state.packets) - span_sigmas * max(widths) - pad
    hi = max(p.x0 for p in state.packets) + span_sigmas * max(widths) + pad
    dx_max = min(p.sigma for p in state.packets) / dx_factor
    n = n_min
    while (hi - lo) / n > dx_max:
        n *= 2
    dx = (hi - lo) / n
    x = lo + dx * np.arange(n)
    psi = np.zeros(n, dtype=complex)
    for p in state.packets:
        psi += p.value(x, const.hbar)
    return GridState(x_min=lo, dx=dx, n=n, amplitudes=psi)


def worker_count() -> int:
    """Worker cap for branch-parallel maps, from TDSIM_THREADS (default 1)."""
    raw = os.environ.get("TDSIM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ScenarioError(f"TDSIM_THREADS must be an integer, got {raw!r}")
    return max(1, n)
