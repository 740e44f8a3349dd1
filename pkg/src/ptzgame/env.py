"""Geometry and photometry of the monitored environment.

Polygons are planar convex regions ``{q : n.q = d, A q <= b}`` carrying a
grayscale texture.  A PTZ sensor sits at a fixed position; each discrete
(pan, tilt, zoom) action fixes its orientation and view cone.  A pixel
images polygon ``j`` when its center ray stays inside the view cone and
``j`` is the nearest polygon the ray hits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

PARALLEL_TOL = 1e-12
INSIDE_TOL = 1e-9
BACKGROUND = 0


def rot_x(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_z(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# camera z axis pointing at world -z (looking down)
MOUNT_DOWN = np.diag([1.0, -1.0, -1.0])


@dataclass
class Polygon:
    """Convex planar polygon with a grayscale texture.

    ``values`` is a 2-D array laid over the polygon's bounding rectangle in
    the in-plane frame ``(u, v)`` anchored at the first vertex; a 1x1
    array means a uniform gray level.
    """

    vertices: np.ndarray
    values: np.ndarray = field(default_factory=lambda: np.array([[128]]))
    ident: int = 0

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 3 or len(V) < 3:
            raise ValueError("need at least three 3-D vertices")
        self.vertices = V
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.int64))
        if self.values.min() < 0 or self.values.max() > 255:
            raise ValueError("gray levels must lie in [0, 255]")
        # Newell normal
        nrm = np.zeros(3)
        for p, q in zip(V, np.roll(V, -1, axis=0)):
            nrm += np.cross(p, q)
        area2 = np.linalg.norm(nrm)
        if area2 < 1e-12:
            raise ValueError("degenerate polygon")
        self.normal = nrm / area2
        self.offset = float(self.normal @ V[0])
        if np.abs(V @ self.normal - self.offset).max() > INSIDE_TOL:
            raise ValueError("vertices are not coplanar")
        rows, bounds = [], []
        centroid = V.mean(axis=0)
        for p, q in zip(V, np.roll(V, -1, axis=0)):
            m = np.cross(q - p, self.normal)
            m /= np.linalg.norm(m)
            if m @ (centroid - p) > 0:
                m = -m
            rows.append(m)
            bounds.append(m @ p)
        self.A_ieq = np.array(rows)
        self.b_ieq = np.array(bounds)
        if np.any(self.A_ieq @ centroid > self.b_ieq + INSIDE_TOL):
            raise ValueError("polygon is not convex")
        self.u_axis = (V[1] - V[0]) / np.linalg.norm(V[1] - V[0])
        self.v_axis = np.cross(self.normal, self.u_axis)
        uv = (V - V[0]) @ np.stack([self.u_axis, self.v_axis], axis=1)
        self._uv_min = uv.min(axis=0)
        self._uv_span = np.maximum(uv.max(axis=0) - self._uv_min, 1e-12)
        self.area = 0.5 * area2

    @classmethod
    def rectangle(cls, origin, u, v, values=128, ident=0) -> "Polygon":
        o, u, v = (np.asarray(x, dtype=float) for x in (origin, u, v))
        return cls(np.array([o, o + u, o + u + v, o + v]), np.atleast_2d(values), ident)

    def contains(self, q: np.ndarray, tol: float = INSIDE_TOL) -> np.ndarray:
        q = np.atleast_2d(q)
        return np.all(q @ self.A_ieq.T <= self.b_ieq + tol, axis=1)

    def normalized_inequalities(self):
        """``(A, ok)`` with rows scaled to ``A q <= 1`` where the bound is positive."""
        ok = self.b_ieq > 0
        return self.A_ieq / np.where(ok, self.b_ieq, 1.0)[:, None], ok

    def texel(self, q: np.ndarray, values: Optional[np.ndarray] = None) -> np.ndarray:
        """Gray level at in-plane points ``q`` (shape (k, 3)), optionally from another texture."""
        values = self.values if values is None else np.atleast_2d(values)
        rel = (np.atleast_2d(q) - self.vertices[0]) @ np.stack([self.u_axis, self.v_axis], axis=1)
        t = (rel - self._uv_min) / self._uv_span
        rows, cols = values.shape
        c = np.clip((t[:, 0] * cols).astype(int), 0, cols - 1)
        r = np.clip((t[:, 1] * rows).astype(int), 0, rows - 1)
        return values[r, c]

    def translated(self, shift) -> "Polygon":
        return Polygon(self.vertices + np.asarray(shift, dtype=float), self.values.copy(), self.ident)


@dataclass
class SensorModel:
    """A PTZ camera with a discrete action table.

    Actions enumerate ``product(pans, tilts, zooms)`` in that order.  Angles
    are radians, focal lengths and sensor size millimetres.
    """

    position: np.ndarray
    pans: Sequence[float]
    tilts: Sequence[float]
    zooms: Sequence[float]
    sensor_size: tuple = (4.8, 3.6)
    pixels: tuple = (32, 24)  # (cols, rows)
    mount: np.ndarray = field(default_factory=lambda: MOUNT_DOWN.copy())

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.pans = tuple(float(x) for x in self.pans)
        self.tilts = tuple(float(x) for x in self.tilts)
        self.zooms = tuple(float(x) for x in self.zooms)
        self.actions = list(itertools.product(range(len(self.pans)), range(len(self.tilts)), range(len(self.zooms))))
        cols, rows = self.pixels
        w, h = self.sensor_size
        xs = ((np.arange(cols) + 0.5) / cols - 0.5) * w
        ys = ((np.arange(rows) + 0.5) / rows - 0.5) * h
        self._grid = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)  # row-major pixels
        self.half_diag = 0.5 * float(np.hypot(w, h))

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_pixels(self) -> int:
        return self.pixels[0] * self.pixels[1]

    def pose(self, a: int) -> tuple:
        p, t, _ = self.actions[a]
        return rot_z(self.pans[p]) @ rot_x(self.tilts[t]) @ self.mount

    def focal(self, a: int) -> float:
        return self.zooms[self.actions[a][2]]

    def half_angle(self, a: int) -> float:
        """Maximal view half-angle; the cone circumscribes the pixel grid."""
        return float(np.arctan(self.half_diag / self.focal(a)))

    def pixel_rays(self, a: int) -> np.ndarray:
        """Unit pixel-center directions in the sensor frame, shape (S, 3)."""
        f = self.focal(a)
        rays = np.column_stack([self._grid, np.full(len(self._grid), f)])
        return rays / np.linalg.norm(rays, axis=1, keepdims=True)

    def translated(self, shift) -> "SensorModel":
        return SensorModel(
            self.position + np.asarray(shift, dtype=float), self.pans, self.tilts, self.zooms,
            self.sensor_size, self.pixels, self.mount.copy(),
        )


def ray_polygon_alpha(position, rotation, ray, polygon: Polygon) -> Optional[float]:
    """Distance ``alpha`` along the world ray ``rotation @ ray`` to ``polygon``, or None."""
    direction = np.asarray(rotation, dtype=float) @ np.asarray(ray, dtype=float)
    denom = float(polygon.normal @ direction)
    if abs(denom) < PARALLEL_TOL:
        return None
    alpha = (polygon.offset - float(polygon.normal @ position)) / denom
    if not 0 < alpha < np.inf:
        return None
    if not polygon.contains(alpha * direction + position)[0]:
        return None
    return alpha


def in_view_cone(rotation, position, points, half_angle) -> np.ndarray:
    b = (np.atleast_2d(points) - position) @ np.asarray(rotation)  # rows are R^T (q - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        ang = np.arctan2(np.hypot(b[:, 0], b[:, 1]), b[:, 2])
    return (b[:, 2] > 0) & (ang <= half_angle + 1e-12)


@dataclass(frozen=True)
class VisibilityMap:
    labels: np.ndarray  # per-pixel polygon index, -1 for no hit
    hits: np.ndarray  # world hit points (nan where no hit)
    n_pixels: int

    def pixels_of(self, j: int) -> np.ndarray:
        return np.nonzero(self.labels == j)[0]

    def counts(self, n_polygons: int) -> np.ndarray:
        ok = self.labels >= 0
        return np.bincount(self.labels[ok], minlength=n_polygons)

    def visible(self) -> frozenset:
        return frozenset(int(j) for j in np.unique(self.labels[self.labels >= 0]))


def build_visibility_map(sensor: SensorModel, a: int, polygons: Sequence[Polygon]) -> VisibilityMap:
    R = sensor.pose(a)
    p = sensor.position
    dirs = sensor.pixel_rays(a) @ R.T
    S = len(dirs)
    best = np.full(S, np.inf)
    labels = np.full(S, -1, dtype=np.int64)
    for j, poly in enumerate(polygons):
        denom = dirs @ poly.normal
        ok = np.abs(denom) >= PARALLEL_TOL
        alpha = np.full(S, np.inf)
        alpha[ok] = (poly.offset - poly.normal @ p) / denom[ok]
        ok &= (alpha > 0) & np.isfinite(alpha)
        if not ok.any():
            continue
        pts = alpha[:, None] * dirs + p
        ok &= poly.contains(np.where(ok[:, None], pts, 0.0)) & (alpha < best)
        best[ok] = alpha[ok]
        labels[ok] = j
    hits = np.where(np.isfinite(best)[:, None], best[:, None] * dirs + p, np.nan)
    cone = np.zeros(S, dtype=bool)
    found = labels >= 0
    if found.any():
        cone[found] = in_view_cone(R, p, hits[found], sensor.half_angle(a))
    labels[~cone] = -1
    return VisibilityMap(labels, hits, S)


@dataclass
class SceneState:
    """Current textures, the stored sample textures, and scheduled changes."""

    polygons: list
    initial: list = None  # y0 textures (the stored sample image)
    events: dict = field(default_factory=dict)  # round -> {polygon index: texture}
    version: int = 0

    def __post_init__(self):
        if self.initial is None:
            self.initial = [p.values.copy() for p in self.polygons]

    def apply(self, changes: dict) -> None:
        for j, tex in changes.items():
            tex = np.atleast_2d(np.asarray(tex, dtype=np.int64))
            if tex.min() < 0 or tex.max() > 255:
                raise ValueError("gray levels must lie in [0, 255]")
            self.polygons[j].values = tex
        self.version += 1

    def apply_round(self, k: int) -> bool:
        if k in self.events:
            self.apply(self.events[k])
            return True
        return False


def render(vis: VisibilityMap, polygons: Sequence[Polygon], textures: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    """Per-pixel gray levels; pixels hitting nothing read ``BACKGROUND``."""
    out = np.full(vis.n_pixels, BACKGROUND, dtype=np.int64)
    for j in np.unique(vis.labels[vis.labels >= 0]):
        idx = vis.labels == j
        out[idx] = polygons[j].texel(vis.hits[idx], None if textures is None else textures[j])
    return out


def write_pgm(path, image: np.ndarray, pixels: tuple) -> None:
    """Dump a rendered image (``render`` output) as a binary PGM for inspection."""
    cols, rows = pixels
    data = np.asarray(image, dtype=np.uint8).reshape(rows, cols)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode())
        fh.write(data.tobytes())


def info_change(vis: VisibilityMap, current: np.ndarray, initial: Optional[np.ndarray], threshold: float, n_polygons: int) -> np.ndarray:
    """Per polygon, the number of its pixels that moved strictly more than ``threshold``."""
    if initial is None:
        raise ValueError("no stored initial image for this action")
    changed = (np.abs(current - initial) > threshold) & (vis.labels >= 0)
    return np.bincount(vis.labels[changed], minlength=n_polygons).astype(float)


def info_entropy(values) -> float:
    """Shannon entropy (bits) of the 256-bin gray-level histogram."""
    values = np.asarray(values, dtype=np.int64).ravel()
    if values.size == 0:
        raise ValueError("entropy of an empty pixel set")
    p = np.bincount(values, minlength=256) / values.size
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum()) + 0.0


def qual_fraction(count: int, total: int, f: Callable[[float], float] = lambda x: x) -> float:
    return float(f(count / total))


def reward_wij(info: float, qual: float, variant: str = "product", gamma: float = 0.015, visible: Optional[bool] = None) -> float:
    """Per-sensor, per-polygon reward.

    ``product`` is ``info * qual``.  ``experiment`` pays ``2 * info`` when
    that exceeds ``gamma``, otherwise ``gamma`` for a visible polygon, and 0
    for an invisible one.  Visibility defaults to ``qual > 0``.
    """
    if info < 0 or qual < 0:
        raise ValueError("information and quality must be nonnegative")
    if visible is None:
        visible = qual > 0
    if variant == "product":
        return info * qual if visible else 0.0
    if variant == "experiment":
        if not visible:
            return 0.0
        return 2.0 * info if 2.0 * info > gamma else gamma
    raise ValueError(f"unknown reward variant {variant!r}")


CONCAVE = {"sqrt": np.sqrt, "log1p": np.log1p, "identity": lambda x: x}


def region_reward(values: Sequence[float], rule: str = "max", h: Callable = np.sqrt) -> float:
    vals = list(values)
    if not vals:
        return 0.0
    if rule == "max":
        return float(max(vals))
    if rule == "concave":
        return float(h(sum(vals)))
    raise ValueError(f"unknown region rule {rule!r}")


@dataclass
class RewardConfig:
    metric: str = "change"  # "change" | "entropy"
    threshold: float = 20.0
    gamma: float = 0.015
    variant: str = "experiment"  # "experiment" | "product"
    rule: str = "max"  # "max" | "concave"
    h: str = "sqrt"
    f_qual: str = "identity"
    normalize_info: bool = False  # divide change counts by the pixel count

    def h_fn(self):
        return CONCAVE[self.h]

    def f_qual_fn(self):
        return CONCAVE[self.f_qual]


class MonitoringEnv:
    """Sensors, scene and reward configuration, with per-action caches.

    ``wij(i, a_i)`` is sensor ``i``'s reward table ``{j: W_ij}`` over its
    visible polygons; it is cached per scene version.  ``scale`` multiplies
    every region reward ``W_j`` so that unilateral gains stay below 1/2.
    """

    def __init__(self, sensors: Sequence[SensorModel], scene: SceneState, reward: Optional[RewardConfig] = None, scale: float = 1.0):
        self.sensors = list(sensors)
        self.scene = scene
        self.reward = reward or RewardConfig()
        self.scale = float(scale)
        self._vis = {}
        self._y0 = {}
        self._wij = {}

    @property
    def polygons(self):
        return self.scene.polygons

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    def visibility(self, i: int, a: int) -> VisibilityMap:
        key = (i, a)
        if key not in self._vis:
            self._vis[key] = build_visibility_map(self.sensors[i], a, self.polygons)
        return self._vis[key]

    def visible(self, i: int, a: int) -> frozenset:
        return self.visibility(i, a).visible()

    def sample_image(self, i: int, a: int) -> np.ndarray:
        key = (i, a)
        if key not in self._y0:
            self._y0[key] = render(self.visibility(i, a), self.polygons, self.scene.initial)
        return self._y0[key]

    def measure(self, i: int, a: int) -> np.ndarray:
        return render(self.visibility(i, a), self.polygons)

    def wij(self, i: int, a: int) -> dict:
        key = (self.scene.version, i, a)
        hit = self._wij.get(key)
        if hit is not None:
            return hit
        cfg = self.reward
        vis = self.visibility(i, a)
        m = len(self.polygons)
        S = self.sensors[i].n_pixels
        counts = vis.counts(m)
        y = self.measure(i, a)
        if cfg.metric == "change":
            info = info_change(vis, y, self.sample_image(i, a), cfg.threshold, m)
            if cfg.normalize_info:
                info = info / S
        elif cfg.metric == "entropy":
            info = np.zeros(m)
            for j in np.nonzero(counts)[0]:
                info[j] = info_entropy(y[vis.labels == j])
        else:
            raise ValueError(f"unknown info metric {cfg.metric!r}")
        f = cfg.f_qual_fn()
        table = {}
        for j in np.nonzero(counts)[0]:
            qual = qual_fraction(int(counts[j]), S, f)
            table[int(j)] = reward_wij(float(info[j]), qual, cfg.variant, cfg.gamma, visible=True)
        self._wij[key] = table
        return table

    def tables(self, joint) -> list:
        return [self.wij(i, a) if a is not None else {} for i, a in enumerate(joint)]

    def objective(self, joint) -> float:
        """Scaled global objective; ``None`` entries view nothing."""
        return global_objective(self.tables(joint), self.reward, self.scale)[0]

    def objective_bound(self) -> float:
        """Upper bound on the (unscaled) objective: sum over polygons of the best single view."""
        best = {}
        for i, s in enumerate(self.sensors):
            for a in range(s.n_actions):
                for j, w in self.wij(i, a).items():
                    best[j] = max(best.get(j, 0.0), w)
        if self.reward.rule == "max":
            return float(sum(best.values()))
        h = self.reward.h_fn()
        total = {}
        for j in best:
            total[j] = sum(max((self.wij(i, a).get(j, 0.0) for a in range(s.n_actions)), default=0.0) for i, s in enumerate(self.sensors))
        return float(sum(h(v) for v in total.values()))

    def utility_bound(self) -> float:
        """Upper bound on any unscaled utility, hence on any unilateral gain.

        ``0 <= U_i <= sum_j W_ij(a_i)`` for the max rule and for concave ``h``
        with ``h(0) = 0``, so the best single-sensor table sum bounds every gain.
        """
        return max(
            (sum(self.wij(i, a).values()) for i, s in enumerate(self.sensors) for a in range(s.n_actions)),
            default=0.0,
        )


def global_objective(tables: Sequence[dict], reward: RewardConfig, scale: float = 1.0):
    """``W = sum_j W_j`` from per-sensor ``{j: W_ij}`` tables; also returns the ``W_j`` breakdown."""
    by_polygon = {}
    for t in tables:
        for j, w in t.items():
            by_polygon.setdefault(j, []).append(w)
    h = reward.h_fn()
    per = {j: scale * region_reward(v, reward.rule, h) for j, v in sorted(by_polygon.items())}
    return float(sum(per.values())), per
