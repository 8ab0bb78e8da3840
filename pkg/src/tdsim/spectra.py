"""Internal degrees of freedom as a weighted energy ensemble.

The composite object's internal state enters the reduced centre-of-mass
dynamics only through a diagonal energy distribution: levels E_j with
weights w_j, the mean Ebar, and the fluctuation dE.  The ensemble's
characteristic function sum_j w_j exp(-i theta E_j) is the positional
decoherence pre-factor once theta = t*g*dx/(hbar*c^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ScenarioError

__all__ = [
    "InternalEnsemble",
    "gaussian_thermal",
    "boltzmann_from_levels",
    "ensemble_from_pairs",
    "load_level_file",
    "delta_e_from_heat_capacity",
    "characteristic_function",
]

GH_POINTS_DEFAULT = 21


@dataclass(frozen=True)
class InternalEnsemble:
    """Discrete internal-energy levels with normalized weights.

    Invariants: weights sum to 1 (within 1e-14), are non-negative, and the
    stored (mean_E, delta_E) agree with direct summation over the levels.
    temperature is optional metadata (K).
    """

    levels: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    mean_E: float
    delta_E: float
    temperature: float | None = None

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float).copy()
        weights = np.asarray(self.weights, dtype=float).copy()
        if levels.ndim != 1 or levels.shape != weights.shape or levels.size == 0:
            raise ScenarioError("levels and weights must be matching non-empty 1-d arrays")
        if np.any(weights < 0):
            raise ScenarioError("ensemble weights must be non-negative")
        if abs(weights.sum() - 1.0) > 1e-14:
            raise ScenarioError("ensemble weights must sum to 1 within 1e-14")
        mean = float(np.sum(weights * levels))
        var = float(np.sum(weights * (levels - mean) ** 2))
        scale = max(self.delta_E**2, var, 1e-300)
        if abs(var - self.delta_E**2) > 1e-12 * scale:
            raise ScenarioError("stored delta_E inconsistent with level variance")
        levels.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "weights", weights)

    @property
    def n_levels(self) -> int:
        return int(self.levels.size)

    @property
    def centered_levels(self) -> np.ndarray:
        """Levels relative to the mean; observable coherences depend only
        on these (per-branch global phases cancel in the reduced state)."""
        return self.levels - self.mean_E


def _from_levels_weights(levels, weights, temperature=None) -> InternalEnsemble:
    levels = np.asarray(levels, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if not total > 0:
        raise ScenarioError("ensemble weights must have positive total")
    weights = weights / total
    # kill the rounding residue of the division so the stored sum is exact
    weights = weights / weights.sum()
    mean = float(np.sum(weights * levels))
    var = float(np.sum(weights * (levels - mean) ** 2))
    return InternalEnsemble(
        levels=levels,
        weights=weights,
        mean_E=mean,
        delta_E=float(np.sqrt(max(var, 0.0))),
        temperature=temperature,
    )


def gaussian_thermal(mean_E: float, delta_E: float, n_points: int = GH_POINTS_DEFAULT) -> InternalEnsemble:
    """Gauss-Hermite discretization of a normal energy distribution.

    The returned ensemble reproduces the first two moments (mean_E,
    delta_E^2) to quadrature exactness and matches the Gaussian
    characteristic function exp(-theta^2 dE^2 / 2) * exp(-i theta Ebar) to
    better than 1e-8 for |theta*delta_E| <= 3 at the default node count.
    """
    if n_points < 1:
        raise ScenarioError("n_points must be at least 1")
    if delta_E < 0:
        raise ScenarioError("delta_E must be non-negative")
    if delta_E == 0.0 or n_points == 1:
        return InternalEnsemble(
            levels=np.array([mean_E]), weights=np.array([1.0]), mean_E=mean_E, delta_E=0.0
        )
    nodes, gh_weights = np.polynomial.hermite.hermgauss(n_points)
    levels = mean_E + np.sqrt(2.0) * delta_E * nodes
    return _from_levels_weights(levels, gh_weights / np.sqrt(np.pi))


def boltzmann_from_levels(levels, T: float, k_B: float = 1.380649e-23) -> InternalEnsemble:
    """Thermal weights w_j proportional to exp(-E_j / (k_B T)).

    Energies are shifted by min(E) before exponentiation so deep spectra
    do not underflow; the shift cancels in the normalization.
    """
    levels = np.asarray(levels, dtype=float)
    if levels.size == 0:
        raise ScenarioError("need at least one energy level")
    if not T > 0:
        raise ScenarioError("temperature must be positive")
    shift = levels.min()
    weights = np.exp(-(levels - shift) / (k_B * T))
    return _from_levels_weights(levels, weights, temperature=T)


def ensemble_from_pairs(levels, weights, temperature=None) -> InternalEnsemble:
    """Build an ensemble from explicit (E, weight) pairs; weights are
    renormalized and moments recomputed by direct summation."""
    return _from_levels_weights(levels, weights, temperature=temperature)


def load_level_file(path) -> InternalEnsemble:
    """Read a level file: one "E_joules weight" pair per line, '#' comments."""
    levels, weights = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ScenarioError(f"{path}:{lineno}: expected 'energy weight', got {raw!r}")
            try:
                levels.append(float(parts[0]))
                weights.append(float(parts[1]))
            except ValueError:
                raise ScenarioError(f"{path}:{lineno}: non-numeric entry in {raw!r}")
    if not levels:
        raise ScenarioError(f"{path}: no levels found")
    if any(w < 0 for w in weights):
        raise ScenarioError(f"{path}: negative weight")
    return ensemble_from_pairs(levels, weights)


def delta_e_from_heat_capacity(T: float, dE_dT: float, k_B: float) -> float:
    """Internal-energy fluctuation from the heat capacity:
    delta_E = sqrt(k_B * T^2 * dE/dT)."""
    if not (T > 0 and dE_dT > 0 and k_B > 0):
        raise ScenarioError("heat-capacity route needs positive T, dE/dT, k_B")
    return float(np.sqrt(k_B * T * T * dE_dT))


def characteristic_function(ens: InternalEnsemble, theta):
    """Ensemble average sum_j w_j exp(-i theta E_j).

    |result| <= 1 for every ensemble; the modulus is the coherence decay
    factor of the reduced centre-of-mass state.
    """
    theta = np.asarray(theta, dtype=float)
    phases = np.exp(-1j * np.multiply.outer(theta, ens.levels))
    out = phases @ ens.weights
    if out.ndim == 0:
        return complex(out)
    return out
