"""Geography primitives: grid partitioning of a service region and travel times.

The service region is a lat/lon bounding box cut into square cells ("areas")
on an equirectangular projection anchored at the region centroid.  Travel
times between points come either from great-circle distance at a constant
speed or from a per-area matrix loaded from file.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

_EARTH_RADIUS_M = 6371008.8  # mean earth radius
_DEG = math.pi / 180.0

DEFAULT_SPEED_MPS = 8.33  # roughly 30 km/h


class GeoError(ValueError):
    """Raised for invalid geographic inputs (bad bbox, malformed matrix file)."""


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """WGS84 coordinate pair in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0 and -180.0 <= self.lon <= 180.0):
            raise GeoError(f"coordinate out of range: ({self.lat}, {self.lon})")


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters."""
    dlat = (b.lat - a.lat) * _DEG
    dlon = (b.lon - a.lon) * _DEG
    s = math.sin(dlat / 2.0) ** 2 + math.cos(a.lat * _DEG) * math.cos(b.lat * _DEG) * math.sin(dlon / 2.0) ** 2
    return 2.0 * _EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(s)))


@dataclass(frozen=True)
class Grid:
    """Row-major square-cell partition of a bounding box.

    Area ids run 0 .. n_areas-1, row-major from the south-west corner.
    Projection scale factors are frozen at the bbox centroid so that cell
    edges are axis-aligned rectangles in degree space.
    """

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float
    cell_size_m: float
    n_rows: int
    n_cols: int
    m_per_deg_lat: float
    m_per_deg_lon: float

    @property
    def n_areas(self) -> int:
        return self.n_rows * self.n_cols

    # -- projection helpers (meters east/north of the min corner) --

    def to_xy(self, p: GeoPoint) -> tuple[float, float]:
        return ((p.lon - self.min_lon) * self.m_per_deg_lon,
                (p.lat - self.min_lat) * self.m_per_deg_lat)

    def from_xy(self, x: float, y: float) -> GeoPoint:
        return GeoPoint(self.min_lat + y / self.m_per_deg_lat,
                        self.min_lon + x / self.m_per_deg_lon)

    def locate(self, p: GeoPoint) -> int:
        """Area id containing the point; points outside clamp to the nearest cell."""
        x, y = self.to_xy(p)
        col = min(max(int(x // self.cell_size_m), 0), self.n_cols - 1)
        row = min(max(int(y // self.cell_size_m), 0), self.n_rows - 1)
        return row * self.n_cols + col

    def area_center(self, area: int) -> GeoPoint:
        if not 0 <= area < self.n_areas:
            raise GeoError(f"area id {area} outside 0..{self.n_areas - 1}")
        row, col = divmod(area, self.n_cols)
        return self.from_xy((col + 0.5) * self.cell_size_m, (row + 0.5) * self.cell_size_m)

    def area_centers(self) -> list[GeoPoint]:
        return [self.area_center(a) for a in range(self.n_areas)]


def build_grid(min_lat: float, min_lon: float, max_lat: float, max_lon: float,
               cell_size_m: float = 1000.0) -> Grid:
    """Cut the bbox into square cells of ``cell_size_m`` side length.

    The outermost row/column absorbs any remainder, i.e. cell counts are
    ceil(extent / cell_size).  A zero-area or inverted bbox is rejected.
    """
    if cell_size_m <= 0:
        raise GeoError(f"cell size must be positive, got {cell_size_m}")
    if not (max_lat > min_lat and max_lon > min_lon):
        raise GeoError("bounding box must have positive area with min < max corners")
    mid_lat = 0.5 * (min_lat + max_lat)
    m_per_deg_lat = _EARTH_RADIUS_M * _DEG
    m_per_deg_lon = _EARTH_RADIUS_M * _DEG * math.cos(mid_lat * _DEG)
    if m_per_deg_lon <= 0:
        raise GeoError("bounding box too close to a pole for an equirectangular grid")
    height_m = (max_lat - min_lat) * m_per_deg_lat
    width_m = (max_lon - min_lon) * m_per_deg_lon
    n_rows = max(1, math.ceil(height_m / cell_size_m - 1e-9))
    n_cols = max(1, math.ceil(width_m / cell_size_m - 1e-9))
    return Grid(min_lat, min_lon, max_lat, max_lon, cell_size_m,
                n_rows, n_cols, m_per_deg_lat, m_per_deg_lon)


class ConstantSpeedProvider:
    """Travel time = great-circle distance / constant speed."""

    def __init__(self, speed_mps: float = DEFAULT_SPEED_MPS):
        if speed_mps <= 0:
            raise GeoError(f"speed must be positive, got {speed_mps}")
        self.speed_mps = speed_mps

    def travel_time(self, a: GeoPoint, b: GeoPoint) -> float:
        return haversine_m(a, b) / self.speed_mps

    def pairwise_seconds(self, points: list[GeoPoint]) -> np.ndarray:
        """Vectorized all-pairs travel times for matrix construction."""
        lat = np.array([p.lat for p in points]) * _DEG
        lon = np.array([p.lon for p in points]) * _DEG
        dlat = lat[:, None] - lat[None, :]
        dlon = lon[:, None] - lon[None, :]
        s = np.sin(dlat / 2.0) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon / 2.0) ** 2
        dist = 2.0 * _EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(s)))
        np.fill_diagonal(dist, 0.0)
        return dist / self.speed_mps


class MatrixProvider:
    """Travel time looked up from a per-area matrix via each point's area."""

    def __init__(self, grid: Grid, matrix: "TravelTimeMatrix"):
        if matrix.n_areas != grid.n_areas:
            raise GeoError(f"matrix covers {matrix.n_areas} areas, grid has {grid.n_areas}")
        self.grid = grid
        self.matrix = matrix

    def travel_time(self, a: GeoPoint, b: GeoPoint) -> float:
        return float(self.matrix.entries[self.grid.locate(a), self.grid.locate(b)])


class TravelTimeMatrix:
    """Dense area-to-area travel times in seconds.

    Invariants checked on construction: square, finite, non-negative,
    zero diagonal.
    """

    def __init__(self, entries: np.ndarray):
        entries = np.asarray(entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise GeoError(f"travel time matrix must be square, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise GeoError("travel time matrix contains non-finite entries")
        if np.any(entries < 0):
            raise GeoError("travel time matrix contains negative entries")
        if np.any(np.diagonal(entries) != 0):
            raise GeoError("travel time matrix diagonal must be zero")
        entries.setflags(write=False)
        self.entries = entries

    @property
    def n_areas(self) -> int:
        return self.entries.shape[0]

    def between(self, i: int, j: int) -> float:
        return float(self.entries[i, j])


def build_area_matrix(grid: Grid, provider) -> TravelTimeMatrix:
    """All-pairs travel times between area centers under the given provider."""
    centers = grid.area_centers()
    if hasattr(provider, "pairwise_seconds"):
        entries = provider.pairwise_seconds(centers)
    else:
        n = grid.n_areas
        entries = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i != j:
                    entries[i, j] = provider.travel_time(centers[i], centers[j])
    return TravelTimeMatrix(entries)


_MATRIX_HEADER = ["from_area", "to_area", "seconds"]


def load_matrix_csv(path, n_areas: int) -> TravelTimeMatrix:
    """Read a ``from_area,to_area,seconds`` file covering every area pair."""
    entries = np.full((n_areas, n_areas), np.nan)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != _MATRIX_HEADER:
            raise GeoError(f"matrix file must start with header {','.join(_MATRIX_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                i, j, sec = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError) as exc:
                raise GeoError(f"bad matrix row at line {lineno}: {row}") from exc
            if not (0 <= i < n_areas and 0 <= j < n_areas):
                raise GeoError(f"area id out of range at line {lineno}: {row}")
            entries[i, j] = sec
    missing = np.argwhere(np.isnan(entries))
    if len(missing):
        i, j = missing[0]
        raise GeoError(f"matrix file missing entry for pair ({i}, {j})")
    return TravelTimeMatrix(entries)


def save_matrix_csv(path, matrix: TravelTimeMatrix) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_MATRIX_HEADER)
        n = matrix.n_areas
        for i in range(n):
            for j in range(n):
                writer.writerow([i, j, repr(float(matrix.entries[i, j]))])
