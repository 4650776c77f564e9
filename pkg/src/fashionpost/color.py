"""Garment color extraction.

A detector crop is subsampled, clustered in RGB with a small Lloyd loop,
and the dominant clusters are converted to CIELAB and matched against a
named palette. The output is a descriptor with a primary and an optional
secondary color, which downstream prompt assembly treats as ground truth
for the garment's appearance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateInputError
from .fileio import read_text

# ============================================================
# sRGB -> CIELAB
# ============================================================

# observer: 2 degrees, illuminant: D65
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65_WHITE = np.array([0.95047, 1.00000, 1.08883])
_LAB_EPS = 0.008856  # (6/29)^3
_LAB_KAPPA = 903.3


def _rgb_to_lab_array(rgb: np.ndarray) -> np.ndarray:
    """Vectorized sRGB (0..255) to CIELAB conversion, shape (..., 3)."""
    c = np.asarray(rgb, dtype=np.float64) / 255.0
    linear = np.where(c > 0.04045, ((c + 0.055) / 1.055) ** 2.4, c / 12.92)
    xyz = linear @ _SRGB_TO_XYZ.T / _D65_WHITE
    f = np.where(xyz > _LAB_EPS, np.cbrt(xyz), (_LAB_KAPPA * xyz + 16.0) / 116.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def rgb_to_lab(rgb) -> tuple[float, float, float]:
    """Convert one RGB triple (channels 0..255) to an (L, a, b) tuple."""
    lab = _rgb_to_lab_array(np.asarray(rgb, dtype=np.float64))
    return (float(lab[0]), float(lab[1]), float(lab[2]))


# ============================================================
# Palette
# ============================================================


@dataclass(frozen=True)
class PaletteEntry:
    name: str
    lab: tuple[float, float, float]


@dataclass(frozen=True)
class Palette:
    """Named Lab reference colors used to label cluster centroids."""

    entries: tuple[PaletteEntry, ...]

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(names) != len(set(names)):
            raise DataError("palette contains duplicate names")
        if len(self.entries) < 16:
            raise DataError(f"palette needs at least 16 entries, got {len(self.entries)}")
        for required in ("white", "black"):
            if required not in names:
                raise DataError(f"palette is missing required entry {required!r}")


def load_palette(path: str | Path) -> Palette:
    """Read a palette from a tab-separated file: name, L, a, b per line.

    Lines starting with '#' and blank lines are skipped.
    """
    entries = []
    for lineno, raw in enumerate(read_text(path).splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError(f"palette line {lineno}: expected 4 tab-separated fields")
        name = parts[0].strip().lower()
        try:
            lab = tuple(float(p) for p in parts[1:])
        except ValueError as exc:
            raise DataError(f"palette line {lineno}: non-numeric Lab value") from exc
        entries.append(PaletteEntry(name, lab))
    return Palette(tuple(entries))


def default_palette() -> Palette:
    with resources.as_file(resources.files("fashionpost") / "data" / "palette.tsv") as p:
        return load_palette(p)


def name_color(lab, palette: Palette) -> str:
    """Nearest palette entry by Euclidean Lab distance.

    Exact distance ties resolve to the lexicographically smaller name.
    """
    target = np.asarray(lab, dtype=np.float64)
    best_name = None
    best_dist = np.inf
    for entry in palette.entries:
        dist = float(np.sum((target - np.asarray(entry.lab)) ** 2))
        if dist < best_dist or (dist == best_dist and (best_name is None or entry.name < best_name)):
            best_dist = dist
            best_name = entry.name
    assert best_name is not None
    return best_name


# ============================================================
# Sampling and clustering
# ============================================================


@dataclass(frozen=True)
class PixelSample:
    """Subsampled crop pixels, row-major order preserved."""

    pixels: np.ndarray  # (n, 3) uint8
    source_box: tuple[float, float, float, float] | None = None


@dataclass(frozen=True)
class ColorCluster:
    centroid_rgb: tuple[float, float, float]
    centroid_lab: tuple[float, float, float]
    coverage: float  # fraction of sampled pixels assigned to this cluster


@dataclass(frozen=True)
class NamedColor:
    name: str
    cluster: ColorCluster


@dataclass(frozen=True)
class ColorDescriptor:
    """Primary and optional secondary garment color. Never empty."""

    primary: NamedColor
    secondary: NamedColor | None = None


@dataclass
class ColorConfig:
    k: int = 4
    max_samples: int = 10000
    seed: int = 42
    near_white_l: float = 92.0
    near_black_l: float = 10.0
    min_coverage: float = 0.06
    movement_tol: float = 0.5  # RGB units; Lloyd stops below this
    max_iterations: int = 50


def sample_pixels(crop: np.ndarray, max_samples: int = 10000) -> PixelSample:
    """Deterministically subsample a crop to at most max_samples pixels.

    Small crops pass through whole in row-major order; larger ones are
    thinned with a uniform stride so every region of the crop contributes.
    """
    arr = np.asarray(crop)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DegenerateInputError(f"expected an HxWx3 crop, got shape {arr.shape}")
    flat = arr.reshape(-1, 3)
    n = flat.shape[0]
    if n == 0:
        raise DegenerateInputError("empty crop")
    if max_samples < 1:
        raise DegenerateInputError("max_samples must be at least 1")
    if n <= max_samples:
        return PixelSample(pixels=flat.copy())
    idx = (np.arange(max_samples, dtype=np.int64) * n) // max_samples
    return PixelSample(pixels=flat[idx].copy())


@dataclass
class KMeansResult:
    centroids: np.ndarray  # (m, 3) float64, m <= k after empty-cluster drops
    labels: np.ndarray  # (n,) int, indices into centroids
    sse_per_iteration: list[float] = field(default_factory=list)


def _seed_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding. Stops early if every remaining distance is zero."""
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    while len(centers) < k:
        d2 = np.min(
            [np.sum((points - c) ** 2, axis=1) for c in centers], axis=0
        )
        total = float(d2.sum())
        if total <= 0.0:
            break  # fewer distinct points than k
        centers.append(points[rng.choice(n, p=d2 / total)])
    return np.array(centers, dtype=np.float64)


def lloyd(points: np.ndarray, k: int, seed: int = 42, movement_tol: float = 0.5,
          max_iterations: int = 50) -> KMeansResult:
    """Plain Lloyd iterations with k-means++ seeding in RGB space.

    Terminates when the largest centroid movement drops below movement_tol
    (RGB units) or after max_iterations. Clusters that lose all points are
    dropped. The recorded SSE sequence is non-increasing.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DegenerateInputError(f"expected (n, 3) points, got {pts.shape}")
    if pts.shape[0] == 0:
        raise DegenerateInputError("no points to cluster")
    if k < 1:
        raise DegenerateInputError("k must be at least 1")

    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(pts, min(k, pts.shape[0]), rng)
    sse_history: list[float] = []
    labels = np.zeros(pts.shape[0], dtype=np.int64)
    for _ in range(max_iterations):
        d2 = np.sum((pts[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        sse_history.append(float(d2[np.arange(pts.shape[0]), labels].sum()))

        counts = np.bincount(labels, minlength=centroids.shape[0])
        keep = counts > 0
        if not np.all(keep):
            # drop empty clusters and relabel against the survivors
            centroids = centroids[keep]
            d2 = d2[:, keep]
            labels = np.argmin(d2, axis=1)
            counts = np.bincount(labels, minlength=centroids.shape[0])

        new_centroids = np.array(
            [pts[labels == i].mean(axis=0) for i in range(centroids.shape[0])]
        )
        movement = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if movement < movement_tol:
            break

    # final assignment against the settled centroids
    d2 = np.sum((pts[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)
    sse_history.append(float(d2[np.arange(pts.shape[0]), labels].sum()))
    return KMeansResult(centroids=centroids, labels=labels, sse_per_iteration=sse_history)


def kmeans_cluster(sample: PixelSample, k: int = 4, seed: int = 42,
                   movement_tol: float = 0.5, max_iterations: int = 50) -> list[ColorCluster]:
    """Cluster sampled pixels and return coverage-sorted color clusters.

    Sorting is by coverage descending; exact coverage ties fall back to
    lexicographic order on the RGB centroid so results are reproducible.
    """
    result = lloyd(sample.pixels, k, seed=seed, movement_tol=movement_tol,
                   max_iterations=max_iterations)
    n = sample.pixels.shape[0]
    counts = np.bincount(result.labels, minlength=result.centroids.shape[0])
    clusters = []
    for i in range(result.centroids.shape[0]):
        if counts[i] == 0:
            continue
        rgb = tuple(float(v) for v in result.centroids[i])
        clusters.append(
            ColorCluster(
                centroid_rgb=rgb,
                centroid_lab=rgb_to_lab(np.asarray(rgb)),
                coverage=float(counts[i]) / n,
            )
        )
    clusters.sort(key=lambda c: (-c.coverage, c.centroid_rgb))
    return clusters


# ============================================================
# Dominant color selection
# ============================================================


def _is_near_extreme(cluster: ColorCluster, cfg: ColorConfig) -> bool:
    lightness = cluster.centroid_lab[0]
    return lightness > cfg.near_white_l or lightness < cfg.near_black_l


def dominant_colors(crop: np.ndarray, cfg: ColorConfig | None = None,
                    palette: Palette | None = None) -> ColorDescriptor:
    """Extract the primary and optional secondary color of a crop.

    Near-white and near-black clusters under the coverage floor are
    treated as background noise and dropped. The largest survivor becomes
    the primary; the next survivor also needs coverage at or above the
    floor to fill the secondary slot, which keeps sliver clusters out of
    the output. The descriptor is never empty: if everything is filtered,
    the largest adequately covered cluster wins regardless of whiteness.
    """
    cfg = cfg or ColorConfig()
    palette = palette or default_palette()
    sample = sample_pixels(crop, cfg.max_samples)
    clusters = kmeans_cluster(sample, cfg.k, seed=cfg.seed,
                              movement_tol=cfg.movement_tol,
                              max_iterations=cfg.max_iterations)

    survivors = [
        c for c in clusters
        if not (_is_near_extreme(c, cfg) and c.coverage < cfg.min_coverage)
    ]
    if survivors:
        primary_cluster = survivors[0]
        secondary_cluster = next(
            (c for c in survivors[1:] if c.coverage >= cfg.min_coverage), None
        )
    else:
        covered = [c for c in clusters if c.coverage >= cfg.min_coverage]
        primary_cluster = covered[0] if covered else clusters[0]
        secondary_cluster = None

    primary = NamedColor(name_color(primary_cluster.centroid_lab, palette), primary_cluster)
    secondary = None
    if secondary_cluster is not None:
        secondary = NamedColor(name_color(secondary_cluster.centroid_lab, palette),
                               secondary_cluster)
    return ColorDescriptor(primary=primary, secondary=secondary)
