"""Spatial layout of the network: cluster-head PPP and uniform-disk clusters.

The typical cluster head sits at the origin by convention; every statistic
downstream is computed for its cluster, with the PPP sample providing the
interfering clusters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import NetworkParams

#: Tolerance for clamping the arccos argument at the support boundary of the
#: conditional distance density; larger excursions indicate a caller bug.
_ARCCOS_CLAMP = 1e-12


def sample_ppp(lam: float, window_radius: float, rng: np.random.Generator) -> np.ndarray:
    """Sample a homogeneous Poisson point process on a disk at the origin.

    Returns an ``(n, 2)`` array of points; ``n`` is Poisson with mean
    ``lam * pi * window_radius**2`` and points are uniform on the disk.
    """
    if not (math.isfinite(lam) and math.isfinite(window_radius)):
        raise ValueError("density and window radius must be finite")
    if lam <= 0 or window_radius <= 0:
        raise ValueError("density and window radius must be positive")
    n = rng.poisson(lam * math.pi * window_radius**2)
    radii = window_radius * np.sqrt(rng.random(n))
    angles = rng.uniform(0.0, 2.0 * math.pi, n)
    return np.column_stack((radii * np.cos(angles), radii * np.sin(angles)))


def sample_cluster(
    center: np.ndarray, n: int, radius: float, rng: np.random.Generator
) -> np.ndarray:
    """Sample ``n`` points uniform on the disk of ``radius`` about ``center``."""
    if n < 1:
        raise ValueError("cluster size must be >= 1")
    if radius <= 0:
        raise ValueError("cluster radius must be positive")
    radii = radius * np.sqrt(rng.random(n))
    angles = rng.uniform(0.0, 2.0 * math.pi, n)
    offsets = np.column_stack((radii * np.cos(angles), radii * np.sin(angles)))
    return np.asarray(center, dtype=float) + offsets


def serving_distance_pdf(r, R: float):
    """Density 2r/R^2 of the horizontal distance between a device and its UAV."""
    if R <= 0:
        raise ValueError("cluster radius must be positive")
    r = np.asarray(r, dtype=float)
    out = np.where((r >= 0) & (r <= R), 2.0 * r / R**2, 0.0)
    return out if out.ndim else float(out)


def conditional_distance_pdf(g, q: float, R: float):
    """Density of the distance from the origin to a device of a cluster whose
    head is at distance ``q``, for devices uniform on a disk of radius ``R``.

    Piecewise: an arc-length term on ``|R - q| <= g <= R + q`` plus, when the
    origin lies inside the cluster disk (``q < R``), the plain uniform-disk
    term ``2g/R^2`` on ``g < R - q``. Accepts scalar or array ``g``.
    """
    if R <= 0:
        raise ValueError("cluster radius must be positive")
    if q < 0:
        raise ValueError("head distance q must be non-negative")
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise ValueError("distance g must be non-negative")

    out = np.zeros_like(g, dtype=float)

    # Inner piece: full circles of radius g around the origin fit in the disk.
    inner = g < (R - q)
    np.copyto(out, 2.0 * g / R**2, where=inner)

    # Arc piece: circles of radius g intersect the disk boundary.
    arc = (g >= abs(R - q)) & (g <= R + q) & (g > 0) & (q > 0)
    if np.any(arc):
        ga = g[arc] if g.ndim else g
        ratio = (ga**2 + q**2 - R**2) / (2.0 * ga * q)
        bad = np.abs(ratio) > 1.0 + _ARCCOS_CLAMP
        if np.any(bad):
            raise ValueError(
                "arccos argument outside [-1, 1] beyond clamping tolerance; "
                f"worst value {float(np.max(np.abs(ratio))):.17g}"
            )
        ratio = np.clip(ratio, -1.0, 1.0)
        contrib = (2.0 * ga / (math.pi * R**2)) * np.arccos(ratio)
        if g.ndim:
            out[arc] += contrib
        else:
            out = out + contrib
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Topology:
    """One realization of the spatial process.

    ``uav_positions[0]`` is the typical cluster head, pinned to the origin;
    the remaining rows are the interfering heads from the PPP sample.
    ``clusters[i]`` holds the device positions of head ``i`` and
    ``serving_distances`` the horizontal device-to-head distances of the
    typical cluster.
    """

    uav_positions: np.ndarray
    clusters: list[np.ndarray]
    serving_distances: np.ndarray

    def __post_init__(self):
        if self.uav_positions.shape[0] != len(self.clusters):
            raise ValueError("one device cluster required per cluster head")
        if not np.allclose(self.uav_positions[0], 0.0):
            raise ValueError("typical cluster head must sit at the origin")

    @property
    def n_interferers(self) -> int:
        return self.uav_positions.shape[0] - 1


def sample_topology(params: NetworkParams, rng: np.random.Generator) -> Topology:
    """Sample a full network realization on the simulation window.

    The typical head is placed at the origin deterministically; interfering
    heads follow the PPP on the window disk. Every head gets an independent
    uniform-disk cluster of ``params.n_devices`` devices.
    """
    interferers = sample_ppp(params.lam, params.window_radius, rng)
    positions = np.vstack((np.zeros((1, 2)), interferers))
    clusters = [
        sample_cluster(positions[i], params.n_devices, params.cluster_radius, rng)
        for i in range(positions.shape[0])
    ]
    serving = np.linalg.norm(clusters[0], axis=1)
    return Topology(uav_positions=positions, clusters=clusters, serving_distances=serving)
