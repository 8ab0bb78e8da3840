"""Branch evolution of the centre-of-mass state at fixed internal energy.

For an internal eigenvalue E the centre-of-mass sees the effective mass
M(E) = m + E/c^2 and evolves under

    laboratory:  H(E) = p^2 / 2M(E) + M(E) g x   [+ V(x)]
    free fall :  H(E) = p^2 / 2M(E)              [+ V(x)]

with x measured upward (packets accelerate toward -x).  Two independent
routes are provided: exact Gaussian analytics for potential-free branches,
and a spectral split-operator grid propagator that also supports a static
harmonic support potential.  The frame transformation connecting the two
descriptions at time t is

    lab -> free fall:   x -> x + g t^2 / 2,   p -> p + M(E) g t,

together with the compensating phase fixed so that transforming after
laboratory evolution reproduces free-fall evolution exactly (equivalence
principle per branch).  The leftover M(E)-dependent global phase
M g^2 t^3 / (6 hbar) is carried explicitly; it cancels in any reduced
density matrix because the internal state is diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import (
    Constants,
    Frame,
    GaussianPacket,
    GridState,
    NumericalRegimeError,
    ScenarioError,
    SuperpositionState,
)

__all__ = [
    "HarmonicSupport",
    "BranchHamiltonian",
    "PropagationSpec",
    "branch_hamiltonian",
    "propagate_analytic",
    "propagate_grid",
    "frame_transform",
]

LAB_TO_FREEFALL = "lab_to_freefall"
FREEFALL_TO_LAB = "freefall_to_lab"


@dataclass(frozen=True)
class HarmonicSupport:
    """Static support potential V(x) = 0.5 * k * (x - x_c)^2."""

    k: float
    x_c: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise ScenarioError("harmonic support requires k > 0")


@dataclass(frozen=True)
class BranchHamiltonian:
    """Centre-of-mass Hamiltonian for one internal energy branch."""

    mass_eff: float
    frame: Frame
    support: HarmonicSupport | None = None

    def __post_init__(self):
        if not self.mass_eff > 0:
            raise ScenarioError("effective mass must be positive")

    @property
    def force_coefficient(self) -> float:
        """Coefficient F in the linear potential F*x (zero in free fall)."""
        return self.mass_eff * self.frame.g if self.frame.is_lab else 0.0

    def potential(self, x: np.ndarray) -> np.ndarray:
        v = self.force_coefficient * x
        if self.support is not None:
            v = v + 0.5 * self.support.k * (x - self.support.x_c) ** 2
        return v


@dataclass(frozen=True)
class PropagationSpec:
    """Time stepping request for the grid route."""

    dt: float
    n_steps: int
    method: str = "grid_spectral"  # "analytic_gaussian" | "grid_spectral"

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("dt must be positive")
        if self.n_steps < 0:
            raise ScenarioError("n_steps must be non-negative")
        if self.method not in ("analytic_gaussian", "grid_spectral"):
            raise ScenarioError(f"unknown propagation method {self.method!r}")


def branch_hamiltonian(
    m: float,
    E: float,
    frame: Frame,
    c: float,
    support: HarmonicSupport | None = None,
    linearized: bool = False,
) -> BranchHamiltonian:
    """Build H(E) with effective mass M(E) = m + E/c^2.

    ``linearized`` replaces the exact 1/M(E) kinetic coefficient by the
    first-order expansion (1 - E/(m c^2))/m for comparison runs; the two
    differ at O((E/mc^2)^2).
    """
    mass_eff = m + E / c**2
    if not mass_eff > 0:
        raise ScenarioError(f"non-positive effective mass m + E/c^2 = {mass_eff!r}")
    if linearized:
        coeff = (1.0 - E / (m * c**2)) / m
        if not coeff > 0:
            raise ScenarioError("linearized kinetic coefficient is non-positive")
        mass_eff = 1.0 / coeff
    return BranchHamiltonian(mass_eff=mass_eff, frame=frame, support=support)


# -- analytic Gaussian route -------------------------------------------------

def _classical_action(m: float, g: float, x0: float, p0: float, t: float) -> float:
    """Action along the classical path of H = p^2/2m + m g x."""
    return p0**2 * t / (2.0 * m) - p0 * g * t**2 + m * g**2 * t**3 / 3.0 - m * g * x0 * t


def propagate_analytic(
    state: SuperpositionState, h: BranchHamiltonian, t: float, const: Constants
) -> SuperpositionState:
    """Exact branch evolution of every packet (no time stepping).

    Each Gaussian maps to a Gaussian: the center and momentum follow the
    classical trajectory, the complex spreading factor advances by
    i*hbar*t/(2 M sigma^2), and the phase advances by the classical action
    over hbar.  Requires a potential-free branch (support none).
    """
    if h.support is not None:
        raise ScenarioError("analytic propagation requires a potential-free branch")
    if t == 0.0:
        return state
    m_eff = h.mass_eff
    g = h.frame.g if h.frame.is_lab else 0.0
    hbar = const.hbar
    packets = []
    for p in state.packets:
        x_t = p.x0 + (p.p0 / m_eff) * t - 0.5 * g * t**2
        p_t = p.p0 - m_eff * g * t
        phase = p.phase + _classical_action(m_eff, g, p.x0, p.p0, t) / hbar
        spread = p.spread + 1j * hbar * t / (2.0 * m_eff * p.sigma**2)
        packets.append(replace(p, x0=x_t, p0=p_t, phase=phase, spread=spread))
    return SuperpositionState(packets=tuple(packets), mass=state.mass)


# -- spectral grid route -----------------------------------------------------

def _band_edge_occupancy(amplitudes: np.ndarray) -> float:
    """Fraction of spectral weight in the top eighth of |k|."""
    spec = np.abs(np.fft.fft(amplitudes)) ** 2
    n = spec.size
    k_index = np.fft.fftfreq(n) * n  # -n/2 .. n/2-1
    edge = np.abs(k_index) >= (7 * n) // 16
    total = spec.sum()
    return float(spec[edge].sum() / total) if total > 0 else 0.0


def propagate_grid(
    state: GridState, h: BranchHamiltonian, spec: PropagationSpec, const: Constants
) -> GridState:
    """Second-order split-operator evolution on the grid.

    Alternates half potential steps (pointwise) with full kinetic steps
    (spectral).  Unitary by construction: norm is conserved to roundoff.
    For a purely linear potential the splitting error is a global phase,
    so magnitudes and branch coherences are exact at any stable dt.
    """
    if spec.method != "grid_spectral":
        raise ScenarioError("propagate_grid needs a grid_spectral PropagationSpec")
    if spec.n_steps == 0:
        return state
    if _band_edge_occupancy(state.amplitudes) > 1e-10:
        raise ScenarioError(
            "grid too coarse for this state: significant spectral weight at the "
            "band edge; refine dx (rule of thumb: dx <= sigma/8 per packet)"
        )
    hbar = const.hbar
    x = state.x
    k = state.k
    v_phase = np.exp(-0.5j * h.potential(x) * spec.dt / hbar)
    k_phase = np.exp(-0.5j * hbar * k**2 * spec.dt / h.mass_eff)
    psi = state.amplitudes.copy()
    psi *= v_phase
    for _ in range(spec.n_steps - 1):
        psi = np.fft.ifft(np.fft.fft(psi) * k_phase)
        psi *= v_phase * v_phase
    psi = np.fft.ifft(np.fft.fft(psi) * k_phase)
    psi *= v_phase
    return GridState(x_min=state.x_min, dx=state.dx, n=state.n, amplitudes=psi)


# -- frame transformation ----------------------------------------------------

def _transform_packet(
    p: GaussianPacket, m_eff: float, g: float, t: float, sign: int, hbar: float
) -> GaussianPacket:
    a = 0.5 * g * t**2
    q = m_eff * g * t
    theta_g = m_eff * g**2 * t**3 / (6.0 * hbar)
    if sign > 0:  # lab -> free fall
        return replace(
            p,
            x0=p.x0 + a,
            p0=p.p0 + q,
            phase=p.phase + theta_g + q * p.x0 / hbar,
        )
    return replace(
        p,
        x0=p.x0 - a,
        p0=p.p0 - q,
        phase=p.phase - theta_g - q * (p.x0 - a) / hbar,
    )


def _transform_grid(
    s: GridState, m_eff: float, g: float, t: float, sign: int, hbar: float
) -> GridState:
    a = 0.5 * g * t**2
    q = m_eff * g * t
    theta_g = m_eff * g**2 * t**3 / (6.0 * hbar)
    x = s.x
    k = s.k
    if sign > 0:
        psi = s.amplitudes * np.exp(1j * q * x / hbar)
        psi = np.fft.ifft(np.fft.fft(psi) * np.exp(-1j * k * a))
        psi = psi * np.exp(1j * theta_g)
    else:
        psi = np.fft.ifft(np.fft.fft(s.amplitudes) * np.exp(1j * k * a))
        psi = psi * np.exp(-1j * (q * x / hbar + theta_g))
    return GridState(x_min=s.x_min, dx=s.dx, n=s.n, amplitudes=psi)


def frame_transform(state, E: float, m: float, g: float, t: float, direction: str, const: Constants):
    """Map a state between the laboratory and free-fall descriptions at time t.

    lab -> free fall undoes the kinematics of the uniform field: the
    coordinate shifts by +g t^2/2, the momentum by +M(E) g t, and the phase
    by the convention that makes per-branch covariance exact.  The round
    trip is the identity.  Works on SuperpositionState and GridState.
    """
    if direction == LAB_TO_FREEFALL:
        sign = +1
    elif direction == FREEFALL_TO_LAB:
        sign = -1
    else:
        raise ScenarioError(f"unknown transform direction {direction!r}")
    m_eff = m + E / const.c**2
    if not m_eff > 0:
        raise ScenarioError("non-positive effective mass in frame transform")
    if isinstance(state, SuperpositionState):
        packets = tuple(
            _transform_packet(p, m_eff, g, t, sign, const.hbar) for p in state.packets
        )
        return SuperpositionState(packets=packets, mass=state.mass)
    if isinstance(state, GridState):
        return _transform_grid(state, m_eff, g, t, sign, const.hbar)
    raise ScenarioError(f"frame_transform does not handle {type(state).__name__}")
