"""Monte-Carlo estimation of coverage and per-round channel outcomes.

Serves two roles: a brute-force oracle for the analytic coverage
expressions, and the channel engine that the federated-learning loop uses
to decide which device updates survive each round.

Trials are vectorized in batches; each batch consumes its own child stream
spawned from the caller's generator, so a run split across workers merges
to exactly the sequential result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import Direction, build_gain_pattern, los_probability
from .geometry import Topology
from .params import NetworkParams

__all__ = [
    "CoverageEstimate",
    "RoundChannel",
    "estimate_coverage",
    "laplace_oracle",
    "realize_round",
]

_DEFAULT_BATCH = 2048


def binomial_half_width(p: float, trials: int) -> float:
    """95% normal-approximation half-width of an empirical frequency."""
    return 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / trials)


@dataclass(frozen=True)
class CoverageEstimate:
    """Empirical joint/marginal success frequencies with confidence width."""

    p_joint: float
    p_ul: float
    p_dl: float
    trials: int
    half_width_95: float

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for p in (self.p_joint, self.p_ul, self.p_dl):
            if not 0.0 <= p <= 1.0:
                raise ValueError("estimates must be probabilities")
        lower = max(0.0, self.p_ul + self.p_dl - 1.0)
        upper = min(self.p_ul, self.p_dl)
        if not (lower - 1e-12 <= self.p_joint <= upper + 1e-12):
            raise ValueError("joint frequency violates its Frechet bounds")
        expected = binomial_half_width(self.p_joint, self.trials)
        if abs(self.half_width_95 - expected) > 1e-12:
            raise ValueError("half_width_95 inconsistent with p_joint and trials")

    @property
    def half_width_ul(self) -> float:
        return binomial_half_width(self.p_ul, self.trials)

    @property
    def half_width_dl(self) -> float:
        return binomial_half_width(self.p_dl, self.trials)

    def merge(self, other: "CoverageEstimate") -> "CoverageEstimate":
        """Pool two batches; exact for frequency estimates."""
        total = self.trials + other.trials
        pool = lambda a, b: (self.trials * a + other.trials * b) / total
        p_joint = pool(self.p_joint, other.p_joint)
        return CoverageEstimate(
            p_joint=p_joint,
            p_ul=pool(self.p_ul, other.p_ul),
            p_dl=pool(self.p_dl, other.p_dl),
            trials=total,
            half_width_95=binomial_half_width(p_joint, total),
        )


@dataclass(frozen=True)
class RoundChannel:
    """Per-round link outcomes for the scheduled devices."""

    device_ids: np.ndarray
    dl_success: np.ndarray
    ul_success: np.ndarray
    serving_distances: np.ndarray

    def __post_init__(self):
        n = self.device_ids.size
        if not (
            self.dl_success.shape
            == self.ul_success.shape
            == self.serving_distances.shape
            == (n,)
        ):
            raise ValueError("per-device arrays must align with device_ids")
        if n != np.unique(self.device_ids).size:
            raise ValueError("scheduled device ids must be distinct")

    @property
    def joint_success(self) -> np.ndarray:
        return self.dl_success & self.ul_success


def _interferer_field(
    parent_radii: np.ndarray,
    owner: np.ndarray,
    n_owners: int,
    tx_power: float,
    params: NetworkParams,
    pattern,
    rng: np.random.Generator,
    *,
    device_offset: bool,
) -> np.ndarray:
    """Aggregate interference per owner from one mark realization.

    ``parent_radii`` holds interfering cluster-center distances from the
    origin, flattened across owners (trials or scheduled devices). With
    ``device_offset`` the transmitter is a uniformly placed cluster member
    instead of the center. Every transmitter draws its own LOS class (at
    its own distance), antenna alignment, and Nakagami power.
    """
    n = parent_radii.size
    if n == 0:
        return np.zeros(n_owners)
    if device_offset:
        member = params.cluster_radius * np.sqrt(rng.random(n))
        psi = rng.uniform(0.0, 2.0 * math.pi, n)
        dist_sq = (
            parent_radii**2
            + member**2
            + 2.0 * parent_radii * member * np.cos(psi)
        )
        dist = np.sqrt(np.maximum(dist_sq, 0.0))
    else:
        dist = parent_radii
    p_los = los_probability(dist, params.height, params.env_a, params.env_b)
    is_los = rng.random(n) < p_los
    gains = rng.choice(pattern.gains, size=n, p=pattern.probs)
    fading = np.empty(n)
    n_los = int(is_los.sum())
    if n_los:
        fading[is_los] = rng.gamma(params.m_los, 1.0 / params.m_los, n_los)
    if n - n_los:
        fading[~is_los] = rng.gamma(params.m_nlos, 1.0 / params.m_nlos, n - n_los)
    alpha = np.where(is_los, params.alpha_los, params.alpha_nlos)
    received = tx_power * gains * fading * (dist**2 + params.height**2) ** (-alpha / 2.0)
    return np.bincount(owner, weights=received, minlength=n_owners)


def _parent_radii(
    n_owners: int, params: NetworkParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Interfering-cluster distances for a batch: Poisson counts, uniform disk."""
    window = params.window_radius
    counts = rng.poisson(params.lam * math.pi * window**2, n_owners)
    total = int(counts.sum())
    radii = window * np.sqrt(rng.random(total))
    owner = np.repeat(np.arange(n_owners), counts)
    return radii, owner


def _coverage_batch(
    params: NetworkParams, n_trials: int, rng: np.random.Generator
) -> tuple[int, int, int]:
    """Counts of (joint, dl, ul) successes over one vectorized batch."""
    pattern = build_gain_pattern(params)
    r = params.cluster_radius * np.sqrt(rng.random(n_trials))
    p_los = los_probability(r, params.height, params.env_a, params.env_b)
    serving_los = rng.random(n_trials) < p_los
    alpha = np.where(serving_los, params.alpha_los, params.alpha_nlos)
    m = np.where(serving_los, params.m_los, params.m_nlos)
    path = (r**2 + params.height**2) ** (-alpha / 2.0)

    def desired_fading() -> np.ndarray:
        return rng.standard_gamma(m) / m

    radii, owner = _parent_radii(n_trials, params, rng)
    i_dl = _interferer_field(
        radii, owner, n_trials, params.p_uav, params, pattern, rng,
        device_offset=False,
    )
    i_ul = _interferer_field(
        radii, owner, n_trials, params.p_device, params, pattern, rng,
        device_offset=True,
    )
    sinr_dl = params.p_uav * params.g0 * desired_fading() * path / (
        i_dl + params.noise_power
    )
    sinr_ul = params.p_device * params.g0 * desired_fading() * path / (
        i_ul + params.noise_power
    )
    dl_ok = sinr_dl > params.tau_dl
    ul_ok = sinr_ul > params.tau_ul
    return int((dl_ok & ul_ok).sum()), int(dl_ok.sum()), int(ul_ok.sum())


def estimate_coverage(
    params: NetworkParams,
    trials: int,
    rng: np.random.Generator,
    *,
    batch_size: int = _DEFAULT_BATCH,
) -> CoverageEstimate:
    """Empirical joint/DL/UL success probabilities of the typical device.

    Each trial samples a fresh interference field, places the typical
    device uniformly in its cluster, draws the serving link's LOS class
    once (shared by both directions), and tests both SINR thresholds with
    independent fading and interference per direction.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    n_batches = (trials + batch_size - 1) // batch_size
    streams = rng.spawn(n_batches)
    joint = dl = ul = 0
    for b, stream in enumerate(streams):
        n = min(batch_size, trials - b * batch_size)
        bj, bd, bu = _coverage_batch(params, n, stream)
        joint += bj
        dl += bd
        ul += bu
    return CoverageEstimate(
        p_joint=joint / trials,
        p_ul=ul / trials,
        p_dl=dl / trials,
        trials=trials,
        half_width_95=binomial_half_width(joint / trials, trials),
    )


def laplace_oracle(
    params: NetworkParams,
    direction: Direction,
    s: float,
    trials: int,
    rng: np.random.Generator,
    *,
    batch_size: int = _DEFAULT_BATCH,
) -> tuple[float, float]:
    """Brute-force Laplace transform E[exp(-s I)] of one interference field.

    Returns the sample mean and its 95% half-width. This is the oracle the
    closed-form transforms are validated against.
    """
    direction = Direction(direction)
    if s < 0 or not math.isfinite(s):
        raise ValueError("s must be finite and non-negative")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    pattern = build_gain_pattern(params)
    tx_power = params.p_uav if direction is Direction.DL else params.p_device
    offset = direction is Direction.UL
    n_batches = (trials + batch_size - 1) // batch_size
    streams = rng.spawn(n_batches)
    total = 0.0
    total_sq = 0.0
    for b, stream in enumerate(streams):
        n = min(batch_size, trials - b * batch_size)
        radii, owner = _parent_radii(n, params, stream)
        field = _interferer_field(
            radii, owner, n, tx_power, params, pattern, stream,
            device_offset=offset,
        )
        values = np.exp(-s * field)
        total += float(values.sum())
        total_sq += float((values**2).sum())
    mean = total / trials
    variance = max(total_sq / trials - mean**2, 0.0)
    half_width = 1.96 * math.sqrt(variance / trials)
    return mean, half_width


def realize_round(
    topology: Topology,
    schedule: np.ndarray,
    params: NetworkParams,
    rng: np.random.Generator,
) -> RoundChannel:
    """Fresh per-device link outcomes for one communication round.

    Each scheduled device occupies its own resource block, so interference,
    antenna alignments, and fading are drawn independently per device; the
    serving LOS class is drawn once per device and shared by both
    directions within the round.
    """
    schedule = np.asarray(schedule, dtype=int)
    n = schedule.size
    n_devices = topology.clusters[0].shape[0]
    if n == 0 or np.any(schedule < 0) or np.any(schedule >= n_devices):
        raise ValueError("schedule must index devices of the typical cluster")
    pattern = build_gain_pattern(params)
    r = topology.serving_distances[schedule]
    p_los = los_probability(r, params.height, params.env_a, params.env_b)
    serving_los = rng.random(n) < p_los
    alpha = np.where(serving_los, params.alpha_los, params.alpha_nlos)
    m = np.where(serving_los, params.m_los, params.m_nlos)
    path = (r**2 + params.height**2) ** (-alpha / 2.0)

    interferer_q = np.linalg.norm(topology.uav_positions[1:], axis=1)
    k = interferer_q.size
    radii = np.tile(interferer_q, n)
    owner = np.repeat(np.arange(n), k)
    i_dl = _interferer_field(
        radii, owner, n, params.p_uav, params, pattern, rng,
        device_offset=False,
    )
    i_ul = _interferer_field(
        radii, owner, n, params.p_device, params, pattern, rng,
        device_offset=True,
    )
    fading_dl = rng.standard_gamma(m) / m
    fading_ul = rng.standard_gamma(m) / m
    sinr_dl = params.p_uav * params.g0 * fading_dl * path / (
        i_dl + params.noise_power
    )
    sinr_ul = params.p_device * params.g0 * fading_ul * path / (
        i_ul + params.noise_power
    )
    return RoundChannel(
        device_ids=schedule.copy(),
        dl_success=sinr_dl > params.tau_dl,
        ul_success=sinr_ul > params.tau_ul,
        serving_distances=r.copy(),
    )
