"""Air-to-ground channel: LOS classification, antenna gains, fading, SINR."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Topology
from .params import NetworkParams


class LinkType(enum.Enum):
    LOS = "los"
    NLOS = "nlos"


class Direction(enum.Enum):
    DL = "dl"
    UL = "ul"


def link_params(params: NetworkParams, link: LinkType) -> tuple[float, int]:
    """(path-loss exponent, Nakagami m) for a link class."""
    if link is LinkType.LOS:
        return params.alpha_los, params.m_los
    return params.alpha_nlos, params.m_nlos


def los_probability(r, h: float, a: float, b: float):
    """Probability of a line-of-sight link at horizontal distance ``r``.

    Sigmoid in the elevation angle (degrees); ``r = 0`` maps to a 90-degree
    elevation. Vectorized over ``r``.
    """
    if h <= 0:
        raise ValueError("height must be positive")
    if a < 0 or b <= 0:
        raise ValueError("environment constants require a >= 0, b > 0")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("distance must be finite and non-negative")
    elevation_deg = np.degrees(np.arctan2(h, r))
    out = 1.0 / (1.0 + a * np.exp(-b * (elevation_deg - a)))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class GainPattern:
    """Directionality gain distribution of an interfering link.

    Both ends of an interfering link point their main lobes in uniformly
    random directions, so the composite gain takes one of four values (each
    end contributes its main or side lobe) with beamwidth-determined
    probabilities.
    """

    gains: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if self.gains.shape != (4,) or self.probs.shape != (4,):
            raise ValueError("expected exactly four gain/probability entries")
        if not math.isclose(float(self.probs.sum()), 1.0, abs_tol=1e-12):
            raise ValueError("gain probabilities must sum to 1")
        if np.any(self.gains <= 0) or np.any(self.probs < 0):
            raise ValueError("gains must be positive and probabilities non-negative")
        if float(self.gains[0]) < float(self.gains.max()):
            raise ValueError("first entry must be the boresight (maximum) gain")

    @property
    def mean_gain(self) -> float:
        return float(self.gains @ self.probs)


def build_gain_pattern(params: NetworkParams) -> GainPattern:
    """Four-level interferer gain distribution from lobe gains and beamwidths."""
    fu = params.beamwidth_uav / (2.0 * math.pi)
    fd = params.beamwidth_device / (2.0 * math.pi)
    gains = np.array(
        [
            params.gain_main_uav * params.gain_main_device,
            params.gain_main_uav * params.gain_side_device,
            params.gain_side_uav * params.gain_main_device,
            params.gain_side_uav * params.gain_side_device,
        ]
    )
    probs = np.array([fu * fd, fu * (1 - fd), (1 - fu) * fd, (1 - fu) * (1 - fd)])
    return GainPattern(gains=gains, probs=probs)


def sample_nakagami_power(m: int, rng: np.random.Generator, size=None):
    """Unit-mean Nakagami-m power gain: Gamma(shape=m, scale=1/m)."""
    if not isinstance(m, int) or m < 1:
        raise ValueError("Nakagami m must be a positive integer")
    return rng.gamma(shape=m, scale=1.0 / m, size=size)


def gamma_ccdf_exact(m: int, x):
    """P[X > x] for X ~ Gamma(m, 1/m), via the finite Erlang series."""
    if not isinstance(m, int) or m < 1:
        raise ValueError("m must be a positive integer")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    mx = m * x
    term = np.ones_like(mx)
    total = np.ones_like(mx)
    for i in range(1, m):
        term = term * mx / i
        total = total + term
    # The series times exp(-mx) can overshoot 1 by an ulp near x = 0.
    out = np.minimum(np.exp(-mx) * total, 1.0)
    return out if out.ndim else float(out)


def gamma_ccdf_alzer(m: int, eta: float, x):
    """Tight exponential-family bound 1 - (1 - e^(-eta*x))^m for the Gamma CCDF.

    Exact for m = 1 with eta = 1; for larger m it is the approximation whose
    binomial expansion makes the coverage expression tractable.
    """
    if not isinstance(m, int) or m < 1:
        raise ValueError("m must be a positive integer")
    if eta <= 0:
        raise ValueError("eta must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    out = 1.0 - (1.0 - np.exp(-eta * x)) ** m
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LinkBudget:
    """Everything needed to evaluate the received power of one link."""

    tx_power: float
    gain: float
    fading_power: float
    distance_3d_sq: float
    link_type: LinkType
    alpha: float

    def __post_init__(self):
        if min(self.tx_power, self.gain, self.distance_3d_sq, self.alpha) <= 0:
            raise ValueError("tx power, gain, squared distance and alpha must be positive")
        if self.fading_power < 0:
            raise ValueError("fading power must be non-negative")

    @property
    def received_power(self) -> float:
        return (
            self.tx_power
            * self.gain
            * self.fading_power
            * self.distance_3d_sq ** (-self.alpha / 2.0)
        )


def compute_sinr(desired: LinkBudget, interference: float, n0_sq: float) -> float:
    """Linear SINR of the desired link against interference plus noise."""
    if interference < 0 or n0_sq < 0:
        raise ValueError("interference and noise must be non-negative")
    if not (math.isfinite(interference) and math.isfinite(n0_sq)):
        raise ValueError("interference and noise must be finite")
    return desired.received_power / (interference + n0_sq)


def interference_power(
    distances: np.ndarray,
    tx_power: float,
    params: NetworkParams,
    pattern: GainPattern,
    rng: np.random.Generator,
) -> float:
    """Aggregate interference from transmitters at the given horizontal distances.

    Each transmitter independently draws its LOS class (at its own distance),
    a gain level from ``pattern``, and a unit-mean Nakagami power for the
    class it drew.
    """
    n = distances.size
    if n == 0:
        return 0.0
    p_los = los_probability(distances, params.height, params.env_a, params.env_b)
    is_los = rng.random(n) < p_los
    gains = rng.choice(pattern.gains, size=n, p=pattern.probs)
    fading = np.empty(n)
    n_los = int(is_los.sum())
    if n_los:
        fading[is_los] = sample_nakagami_power(params.m_los, rng, size=n_los)
    if n - n_los:
        fading[~is_los] = sample_nakagami_power(params.m_nlos, rng, size=n - n_los)
    alpha = np.where(is_los, params.alpha_los, params.alpha_nlos)
    d3sq = distances**2 + params.height**2
    return float(np.sum(tx_power * gains * fading * d3sq ** (-alpha / 2.0)))


def sample_interference(
    topology: Topology,
    params: NetworkParams,
    direction: Direction,
    rng: np.random.Generator,
) -> float:
    """One interference realization (W) at the typical cluster, per direction.

    Downlink: every interfering cluster head transmits at ``p_uav``. Uplink:
    one active device per interfering cluster (uniformly re-picked) transmits
    at ``p_device``. Distances are measured from the origin.
    """
    pattern = build_gain_pattern(params)
    if topology.n_interferers == 0:
        return 0.0
    if direction is Direction.DL:
        distances = np.linalg.norm(topology.uav_positions[1:], axis=1)
        tx_power = params.p_uav
    else:
        picks = rng.integers(params.n_devices, size=topology.n_interferers)
        points = np.array(
            [topology.clusters[i + 1][picks[i]] for i in range(topology.n_interferers)]
        )
        distances = np.linalg.norm(points, axis=1)
        tx_power = params.p_device
    return interference_power(distances, tx_power, params, pattern, rng)
