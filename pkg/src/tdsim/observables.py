"""Reduced centre-of-mass observables over the internal ensemble.

The reduced state is rho_cm(t) = sum_E w_E U_E rho_cm(0) U_E^dagger with
U_E the branch propagator for effective mass M(E).  The observable of
interest is the inter-packet coherence <xbar1| rho_cm(t) |xbar2>, read at
the co-falling points xbar_i = x_i - g t^2/2 in the laboratory frame
(x_i in free fall) and normalized by its t = 0 value.

Phase conditioning: in SI gram-scale scenarios the branch phases reach
~1e22 rad, far beyond double precision.  The phase at the mean effective
mass Mbar = m + Ebar/c^2 is therefore factored out analytically, and only
the residual phase linear in M(E) - Mbar (computed in closed form, never
by differencing large floats) enters the numerics.  The factored-out
piece is exactly the mean-energy phase exp(-i t (m + Ebar/c^2) g dx/hbar)
times preparation phases, which normalization removes anyway.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Constants,
    Frame,
    NumericalRegimeError,
    ScenarioError,
    SuperpositionState,
    grid_from_superposition,
    packet_overlap,
    si_constants,
    worker_count,
)
from .branchdyn import BranchHamiltonian, PropagationSpec, propagate_grid
from .spectra import InternalEnsemble

__all__ = [
    "CoherenceSeries",
    "FringeGeometry",
    "FringeScan",
    "reduced_coherence",
    "decoherence_time",
    "decoherence_prefactor",
    "purity",
    "fringe_pattern",
    "locate_peak",
    "visibility_factor_screen",
    "visibility_factor_gravity",
]


@dataclass(frozen=True)
class CoherenceSeries:
    """|<x1|rho_cm(t)|x2>| (normalized) and its residual phase vs time."""

    times: np.ndarray = field(repr=False)
    magnitude: np.ndarray = field(repr=False)
    phase: np.ndarray = field(repr=False)
    frame: Frame

    def __post_init__(self):
        for name in ("times", "magnitude", "phase"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(self.magnitude < -1e-12) or np.any(self.magnitude > 1.0 + 1e-9):
            raise ScenarioError("coherence magnitude left [0, 1]")


@dataclass(frozen=True)
class FringeGeometry:
    """Two packets at heights x1, x2 flying horizontally to a screen.

    p_h is the common horizontal momentum, L the flight distance, v_scr
    the vertical screen speed relative to the mass, m the total mass.
    """

    p_h: float
    L: float
    x1: float
    x2: float
    v_scr: float
    m: float

    def __post_init__(self):
        if self.p_h == 0.0:
            raise ScenarioError("horizontal momentum must be non-zero")
        if not self.L > 0:
            raise ScenarioError("flight distance must be positive")

    @property
    def arrival_time(self) -> float:
        return self.L * self.m / self.p_h

    def fringe_wavenumber(self, hbar: float) -> float:
        return self.p_h * (self.x1 - self.x2) / (self.L * hbar)

    def shift(self) -> float:
        """Vertical fringe displacement v_scr * L m / p."""
        return self.v_scr * self.arrival_time


@dataclass(frozen=True)
class FringeScan:
    """Sampled screen intensity and its scan-estimated visibility."""

    x_scr: np.ndarray = field(repr=False)
    intensity: np.ndarray = field(repr=False)
    visibility: float

    def __post_init__(self):
        for name in ("x_scr", "intensity"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(self.intensity < 0):
            raise ScenarioError("intensities must be non-negative")


# -- coherence ---------------------------------------------------------------

def _check_two_packet(prep: SuperpositionState):
    if len(prep.packets) != 2:
        raise ScenarioError("coherence extraction needs a two-packet preparation")
    if prep.packets[0].x0 == prep.packets[1].x0:
        raise ScenarioError("the two packets must sit at distinct positions")


def _phase_terms(packet, m_eff, g, t, x, hbar):
    """Split the full evolved-packet phase at point x into
    (coefficient of 1/M, coefficient of M, M-independent rest)."""
    big_x = x - packet.x0 + 0.5 * g * t**2
    alpha = -(packet.p0**2) * t / (2.0 * hbar)
    beta = -(g * t / hbar) * (x + g * t**2 / 6.0)
    rest = packet.phase + packet.p0 * big_x / hbar
    return alpha, beta, rest


def _branch_amplitude_at(packet, m_eff, m_ref, g, t, x, hbar, ref_packet):
    """Evolved packet value at x with the reference phase (the phase of
    ref_packet evolved at the mean mass, at the same point) removed.

    The M-dependence of the phase is handled in closed form:
    theta(M) = rest + alpha/M + beta*M, so theta(M) - theta_ref never
    differences two large floats.
    """
    alpha, beta, rest = _phase_terms(packet, m_eff, g, t, x, hbar)
    alpha_r, beta_r, rest_r = _phase_terms(ref_packet, m_ref, g, t, x, hbar)
    dm = m_eff - m_ref
    delta_theta = (
        (rest - rest_r)
        + (alpha - alpha_r) / m_ref
        - alpha * dm / (m_eff * m_ref)
        + beta * dm
    )
    x_t = packet.x0 + (packet.p0 / m_eff) * t - 0.5 * g * t**2
    spread = packet.spread + 1j * hbar * t / (2.0 * m_eff * packet.sigma**2)
    norm = (2.0 * np.pi * packet.sigma**2) ** (-0.25) / np.sqrt(spread)
    envelope = np.exp(-((x - x_t) ** 2) / (4.0 * packet.sigma**2 * spread))
    return packet.amp * norm * envelope * np.exp(1j * delta_theta)


def _coherence_analytic(ens, prep, frame, times, hbar, c):
    g = frame.g if frame.is_lab else 0.0
    p1, p2 = prep.packets
    m_ref = prep.mass + ens.mean_E / c**2
    masses = prep.mass + ens.levels / c**2
    if np.any(masses <= 0):
        raise ScenarioError("ensemble contains levels with non-positive effective mass")
    out = np.empty(len(times), dtype=complex)
    for j, t in enumerate(times):
        xb1 = p1.x0 - 0.5 * g * t**2
        xb2 = p2.x0 - 0.5 * g * t**2
        acc = 0.0 + 0.0j
        for m_eff, w in zip(masses, ens.weights):
            v1 = sum(
                _branch_amplitude_at(pk, m_eff, m_ref, g, t, xb1, hbar, p1)
                for pk in prep.packets
            )
            v2 = sum(
                _branch_amplitude_at(pk, m_eff, m_ref, g, t, xb2, hbar, p2)
                for pk in prep.packets
            )
            acc += w * v1 * np.conj(v2)
        out[j] = acc
    return out


def _reference_strip_phase(prep, m_ref, g, t, xb1, xb2, hbar):
    """Total reference phase removed by the analytic route, for applying
    the identical convention to grid values."""
    p1, p2 = prep.packets
    a1, b1, r1 = _phase_terms(p1, m_ref, g, t, xb1, hbar)
    a2, b2, r2 = _phase_terms(p2, m_ref, g, t, xb2, hbar)
    theta1 = r1 + a1 / m_ref + b1 * m_ref
    theta2 = r2 + a2 / m_ref + b2 * m_ref
    return theta1 - theta2


def _coherence_grid(ens, prep, frame, times, const, grid_opts):
    if not const.is_natural:
        raise ScenarioError("the grid route runs in natural units only")
    hbar, c = const.hbar, const.c
    g = frame.g if frame.is_lab else 0.0
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] != 0.0:
        raise ScenarioError("grid route needs strictly increasing times starting at 0")
    t_max = times[-1]
    masses = prep.mass + ens.levels / c**2
    if np.any(masses <= 0):
        raise ScenarioError("ensemble contains levels with non-positive effective mass")
    m_ref = prep.mass + ens.mean_E / c**2

    sigma_min = min(p.sigma for p in prep.packets)
    # final widths per slowest-spreading mass bound the needed span
    width_end = max(
        p.sigma * abs(p.spread + 1j * hbar * t_max / (2.0 * masses.min() * p.sigma**2))
        for p in prep.packets
    )
    p_max0 = max(abs(p.p0) for p in prep.packets)
    fall = 0.5 * g * t_max**2
    drift = (p_max0 / masses.min() + g * t_max) * t_max
    pad = fall + drift + 8.0 * width_end
    base = grid_from_superposition(
        prep,
        const,
        span_sigmas=float(grid_opts.get("span_sigmas", 8.0)),
        dx_factor=float(grid_opts.get("dx_factor", 8.0)),
        pad=pad,
        n_min=int(grid_opts.get("n_min", 64)),
    )
    # stability/accuracy budget: bound the per-step phase of occupied modes
    k_occ = 4.5 / sigma_min + (p_max0 + masses.max() * g * t_max) / hbar
    e_kin = hbar**2 * k_occ**2 / (2.0 * masses.min())
    half_span = 0.5 * base.dx * base.n
    e_pot = masses.max() * g * (abs(base.x_min) + half_span + 1.0)
    dt_target = float(grid_opts.get("dt", 0.05 * hbar / max(e_kin + e_pot, 1e-300)))

    def one_branch(idx):
        m_eff = masses[idx]
        h = BranchHamiltonian(mass_eff=m_eff, frame=frame)
        vals = np.empty(len(times), dtype=complex)
        state = base
        for j, t in enumerate(times):
            if j > 0:
                seg = times[j] - times[j - 1]
                n_steps = max(1, int(np.ceil(seg / dt_target)))
                state = propagate_grid(
                    state, h, PropagationSpec(dt=seg / n_steps, n_steps=n_steps), const
                )
            xb1 = prep.packets[0].x0 - 0.5 * g * t**2
            xb2 = prep.packets[1].x0 - 0.5 * g * t**2
            v = state.value_at([xb1, xb2])
            strip = _reference_strip_phase(prep, m_ref, g, t, xb1, xb2, hbar)
            vals[j] = v[0] * np.conj(v[1]) * np.exp(-1j * strip)
        return vals

    n_workers = worker_count()
    if n_workers > 1 and len(masses) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=n_workers) as pool:
            branch_vals = list(pool.map(one_branch, range(len(masses))))
    else:
        branch_vals = [one_branch(i) for i in range(len(masses))]
    out = np.zeros(len(times), dtype=complex)
    for w, vals in zip(ens.weights, branch_vals):  # index-ordered reduction
        out += w * vals
    return out


def reduced_coherence(
    ens: InternalEnsemble,
    prep: SuperpositionState,
    frame: Frame,
    times,
    method: str = "analytic",
    const: Constants | None = None,
    grid_opts: dict | None = None,
) -> CoherenceSeries:
    """Coherence magnitude/phase of the reduced centre-of-mass state.

    Evolves each energy branch (analytically, or on the grid oracle),
    assembles rho_cm(t), and reports <xbar1|rho_cm(t)|xbar2> normalized to
    t = 0, with the mean-energy phase stripped.  In the frozen-kinetics
    regime the magnitude equals |characteristic_function(ens, theta)| with
    theta = t*g*(x1-x2)/(hbar c^2) in the laboratory and stays 1 in free
    fall.
    """
    const = const or si_constants()
    _check_two_packet(prep)
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ScenarioError("need at least one time point")
    if method == "analytic":
        raw = _coherence_analytic(ens, prep, frame, times, const.hbar, const.c)
    elif method == "grid":
        raw = _coherence_grid(ens, prep, frame, times, const, grid_opts or {})
    else:
        raise ScenarioError(f"unknown coherence method {method!r}")
    t0 = raw[0] if times[0] == 0.0 else _coherence_analytic(
        ens, prep, frame, np.array([0.0]), const.hbar, const.c
    )[0]
    if t0 == 0:
        raise ScenarioError("preparation has zero initial coherence")
    series = raw / t0
    return CoherenceSeries(
        times=times,
        magnitude=np.minimum(np.abs(series), 1.0),
        phase=np.angle(series),
        frame=frame,
    )


def decoherence_time(delta_E: float, g: float, dx: float, hbar: float, c: float) -> float:
    """Coherence 1/sqrt(e) time: hbar c^2 / (delta_E * g * |dx|)."""
    if delta_E == 0.0 or g == 0.0 or dx == 0.0:
        raise ScenarioError("no decoherence at this order (delta_E, g, dx must be non-zero)")
    if delta_E < 0 or g < 0:
        raise ScenarioError("delta_E and g must be positive")
    return hbar * c**2 / (delta_E * g * abs(dx))


def decoherence_prefactor(t: float, delta_E: float, g: float, dx: float, hbar: float, c: float) -> float:
    """Gaussian coherence decay factor exp(-(t/tau_dec)^2 / 2), routed
    through the decoherence time (independent arithmetic path from the
    visibility factors)."""
    tau = decoherence_time(delta_E, g, dx, hbar, c)
    return float(np.exp(-0.5 * (t / tau) ** 2))


def purity(
    ens: InternalEnsemble,
    prep: SuperpositionState,
    frame: Frame,
    t: float,
    method: str = "analytic",
    const: Constants | None = None,
) -> float:
    """Tr rho_cm^2 of the two-packet reduced state: (1 + |chi|^2)/2 for a
    balanced, well-separated preparation with normalized coherence chi."""
    const = const or si_constants()
    _check_two_packet(prep)
    p1, p2 = prep.packets
    overlap = packet_overlap(p1, p2, const.hbar)
    n1 = abs(p1.amp) ** 2
    n2 = abs(p2.amp) ** 2
    if abs(overlap) / np.sqrt(n1 * n2) > 1e-6:
        raise ScenarioError("purity needs well-separated packets (overlap > 1e-6)")
    times = [0.0, t] if t != 0.0 else [0.0]
    series = reduced_coherence(ens, prep, frame, times, method=method, const=const)
    chi = series.magnitude[-1]
    w1 = n1 / (n1 + n2)
    w2 = n2 / (n1 + n2)
    return float(w1**2 + w2**2 + 2.0 * w1 * w2 * chi**2)


# -- fringes -----------------------------------------------------------------

def fringe_pattern(
    geom: FringeGeometry, V: float, x_scr_samples, const: Constants | None = None
) -> FringeScan:
    """Screen intensity 1 + V cos[k_f (x_scr - shift)] and its visibility.

    k_f = p (x1-x2) / (L hbar); shift = v_scr L m / p; the overall scale is
    fixed so the pattern maximum is 1 + V.  The stored visibility is the
    (max-min)/(max+min) of the supplied samples.
    """
    if not (0.0 <= V <= 1.0):
        raise ScenarioError("visibility must lie in [0, 1]")
    const = const or si_constants()
    x_scr = np.asarray(x_scr_samples, dtype=float)
    k_f = geom.fringe_wavenumber(const.hbar)
    intensity = 1.0 + V * np.cos(k_f * (x_scr - geom.shift()))
    i_max = float(intensity.max())
    i_min = float(intensity.min())
    vis = (i_max - i_min) / (i_max + i_min) if (i_max + i_min) > 0 else 0.0
    return FringeScan(x_scr=x_scr, intensity=intensity, visibility=vis)


def locate_peak(x: np.ndarray, y: np.ndarray) -> float:
    """Position of the pattern maximum from samples: argmax refined by a
    three-point parabolic fit (interior maxima only)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    i = int(np.argmax(y[1:-1])) + 1
    denom = y[i - 1] - 2.0 * y[i] + y[i + 1]
    if denom == 0.0:
        return float(x[i])
    delta = 0.5 * (y[i - 1] - y[i + 1]) / denom
    return float(x[i] + delta * (x[i + 1] - x[i]))


def visibility_factor_screen(v_scr: float, dx: float, delta_E: float, hbar: float, c: float) -> float:
    """Visibility reduction for a screen moving at v_scr relative to the
    mass: exp(-0.5 (v_scr dx delta_E / (hbar c^2))^2)."""
    arg = v_scr * dx * delta_E / (hbar * c**2)
    return float(np.exp(-0.5 * arg * arg))


def visibility_factor_gravity(t: float, g: float, dx: float, delta_E: float, hbar: float, c: float) -> float:
    """Visibility reduction for a laboratory-supported screen after time t:
    exp(-(t^2/2) (g dx delta_E / (hbar c^2))^2); equals the magnitude of
    the reduced-state coherence pre-factor in the Gaussian regime."""
    arg = g * dx * delta_E / (hbar * c**2)
    return float(np.exp(-0.5 * (t * arg) ** 2))
