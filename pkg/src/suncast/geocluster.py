"""Spatial grid reduction: Haversine K-means and the averaged pseudo-grid.

Clustering runs Lloyd iterations on the sphere.  Centroids are updated as
renormalized 3-D Cartesian means (avoids longitude wrap-around); the update
is only accepted when it does not increase the cluster cost, which keeps
the summed squared Haversine objective non-increasing on every iteration.
After convergence each cluster is represented by the member cell closest
to its centroid, ties broken by lowest cell id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .solarpos import GeoCoordinate

EARTH_RADIUS_KM = 6371.0

_MAX_LLOYD_ITERATIONS = 100


def haversine_distance(a: GeoCoordinate, b: GeoCoordinate) -> float:
    """Great-circle distance in kilometers between two coordinates."""
    th_a = math.radians(a.latitude)
    th_b = math.radians(b.latitude)
    d_th = math.radians(b.latitude - a.latitude)
    d_la = math.radians(b.longitude - a.longitude)
    h = math.sin(d_th / 2.0) ** 2 + math.cos(th_a) * math.cos(th_b) * math.sin(d_la / 2.0) ** 2
    return EARTH_RADIUS_KM * 2.0 * math.atan2(math.sqrt(h), math.sqrt(max(0.0, 1.0 - h)))


@dataclass(frozen=True)
class SpatialGrid:
    """Grid cells with stable integer identifiers, kept sorted by id."""

    cells: tuple[tuple[int, GeoCoordinate], ...]

    def __post_init__(self):
        if not self.cells:
            raise ValidationError("grid must contain at least one cell")
        ids = [cid for cid, _ in self.cells]
        if len(set(ids)) != len(ids):
            raise ValidationError("grid cell ids must be unique")
        object.__setattr__(self, "cells", tuple(sorted(self.cells, key=lambda c: c[0])))

    @classmethod
    def from_pairs(cls, pairs) -> "SpatialGrid":
        return cls(tuple((int(cid), coord) for cid, coord in pairs))

    @property
    def ids(self) -> list[int]:
        return [cid for cid, _ in self.cells]

    @property
    def coordinates(self) -> list[GeoCoordinate]:
        return [coord for _, coord in self.cells]

    def __len__(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class GridSelection:
    """Result of grid reduction: either K representatives or the average mode."""

    mode: str  # "average" or "clustered"
    k: int | None
    representatives: tuple[tuple[int, GeoCoordinate], ...]
    assignment: dict[int, int]
    objective: float | None = None
    objective_history: tuple[float, ...] = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "k": self.k,
            "representatives": [
                {"cell_id": cid, "lon": c.longitude, "lat": c.latitude}
                for cid, c in self.representatives
            ],
            "assignment": {str(cid): int(cl) for cid, cl in sorted(self.assignment.items())},
            "objective": self.objective,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSelection":
        return cls(
            mode=d["mode"],
            k=d["k"],
            representatives=tuple(
                (int(r["cell_id"]), GeoCoordinate(r["lon"], r["lat"]))
                for r in d["representatives"]
            ),
            assignment={int(cid): int(cl) for cid, cl in d["assignment"].items()},
            objective=d.get("objective"),
        )


def average_selection(grid: SpatialGrid) -> GridSelection:
    """Single averaged pseudo-location: every cell assigned to cluster 0."""
    return GridSelection(
        mode="average",
        k=None,
        representatives=(),
        assignment={cid: 0 for cid in grid.ids},
        objective=None,
    )


# -- internal geometry ------------------------------------------------------

def _to_unit_xyz(coords: list[GeoCoordinate]) -> np.ndarray:
    lon = np.radians([c.longitude for c in coords])
    lat = np.radians([c.latitude for c in coords])
    return np.column_stack(
        (np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat))
    )


def _xyz_to_coord(v: np.ndarray) -> GeoCoordinate:
    x, y, z = v / np.linalg.norm(v)
    lat = math.degrees(math.asin(max(-1.0, min(1.0, z))))
    lon = math.degrees(math.atan2(y, x))
    if lon <= -180.0:
        lon += 360.0
    return GeoCoordinate(lon, lat)


def _distance_matrix(coords: list[GeoCoordinate], centroids: list[GeoCoordinate]) -> np.ndarray:
    return np.array(
        [[haversine_distance(c, m) for m in centroids] for c in coords]
    )


def _kmeans_once(grid: SpatialGrid, k: int, rng: np.random.Generator):
    coords = grid.coordinates
    n = len(coords)

    # k-means++ seeding under squared Haversine distance.
    centers = [int(rng.integers(n))]
    d2 = np.array([haversine_distance(coords[centers[0]], c) ** 2 for c in coords])
    while len(centers) < k:
        total = d2.sum()
        if total <= 0.0:
            # All remaining mass coincides with chosen centers; pick unused cells.
            unused = [i for i in range(n) if i not in centers]
            centers.append(unused[int(rng.integers(len(unused)))])
        else:
            probs = d2 / total
            centers.append(int(rng.choice(n, p=probs)))
        newd = np.array(
            [haversine_distance(coords[centers[-1]], c) ** 2 for c in coords]
        )
        d2 = np.minimum(d2, newd)

    centroids = [coords[i] for i in centers]
    assignment = np.full(n, -1, dtype=int)
    history: list[float] = []

    for _ in range(_MAX_LLOYD_ITERATIONS):
        dist = _distance_matrix(coords, centroids)
        new_assignment = dist.argmin(axis=1)

        # Reseed empty clusters with the cell farthest from its own centroid.
        for cl in range(k):
            if not np.any(new_assignment == cl):
                assigned_d = dist[np.arange(n), new_assignment]
                far = int(assigned_d.argmax())
                new_assignment[far] = cl
                dist[far, cl] = 0.0

        objective = float((dist[np.arange(n), new_assignment] ** 2).sum())
        if history and objective > history[-1] + 1e-9:
            raise AssertionError("Lloyd objective increased; centroid safeguard failed")
        history.append(objective)

        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment

        xyz = _to_unit_xyz(coords)
        for cl in range(k):
            members = np.where(assignment == cl)[0]
            candidate = _xyz_to_coord(xyz[members].mean(axis=0))
            old_cost = sum(
                haversine_distance(coords[i], centroids[cl]) ** 2 for i in members
            )
            new_cost = sum(
                haversine_distance(coords[i], candidate) ** 2 for i in members
            )
            if new_cost <= old_cost:
                centroids[cl] = candidate

    return assignment, centroids, history


def kmeans_haversine(
    grid: SpatialGrid, k: int, seed: int, restarts: int = 8
) -> GridSelection:
    """Best-of-restarts Lloyd K-means under Haversine distance.

    Returns a clustered GridSelection whose representatives are the member
    cells nearest their cluster centroid.
    """
    n = len(grid)
    if not (1 <= k <= n):
        raise ValidationError(f"k={k} outside [1, {n}]")
    if restarts < 1:
        raise ValidationError("restarts must be positive")

    best = None
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), r]))
        assignment, centroids, history = _kmeans_once(grid, k, rng)
        objective = history[-1]
        if best is None or objective < best[0] - 1e-12:
            best = (objective, assignment, centroids, history)

    objective, assignment, centroids, history = best
    ids = grid.ids
    coords = grid.coordinates

    representatives = []
    for cl in range(k):
        members = [i for i in range(n) if assignment[i] == cl]
        # Nearest member to the centroid; ties broken by lowest cell id.
        best_i = min(
            members,
            key=lambda i: (round(haversine_distance(coords[i], centroids[cl]), 9), ids[i]),
        )
        representatives.append((ids[best_i], coords[best_i]))

    return GridSelection(
        mode="clustered",
        k=k,
        representatives=tuple(representatives),
        assignment={ids[i]: int(assignment[i]) for i in range(n)},
        objective=objective,
        objective_history=tuple(history),
    )
