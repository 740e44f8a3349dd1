"""Scenario configuration: YAML loading, validation and object construction.

A scenario file has the sections ``grid``, ``sensors``, ``reward``,
``learner`` and optionally ``events`` and ``certify``.  Angles are given in
degrees, focal lengths and sensor sizes in millimetres, positions in metres.
Validation collects every problem it finds instead of stopping at the first.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .env import CONCAVE, MonitoringEnv, Polygon, RewardConfig, SceneState, SensorModel
from .game import ActionSpace, GameError, compute_D, validate_action_space
from .learner import LearnerParams, kappa_bounds

ANGLE_TOL = 1e-9
CONSTRAINT_RULES = ("neighborhood", "complete")


class ConfigError(ValueError):
    """Raised with the full list of problems found in a scenario file."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


@dataclass
class GridSpec:
    rows: int
    cols: int
    cell_size: float = 0.5
    origin: tuple = (0.0, 0.0, 0.0)
    u: tuple = (1.0, 0.0, 0.0)
    v: tuple = (0.0, 1.0, 0.0)
    initial: Any = 128  # one gray level, a per-cell list, or per-cell 2-D textures

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols


@dataclass
class SensorSpec:
    position: tuple
    pan: list  # degrees
    tilt: list  # degrees
    zoom: list  # mm
    constraint: str = "neighborhood"
    step: float = 5.0  # neighborhood radius in degrees
    sensor_size: tuple = (4.8, 3.6)
    pixels: tuple = (32, 24)


@dataclass
class LearnerSpec:
    mode: str = "constant"
    epsilon: float = 0.015
    kappa: float = 0.12
    rounds: int = 1500
    seed: int = 0
    initial: Optional[list] = None


@dataclass
class CertifySpec:
    sensors: list
    actions: list  # per reduced sensor, the action indices kept
    epsilons: list = field(default_factory=lambda: [0.05, 0.02, 0.01, 0.005])
    round: int = 1  # scene as of this round
    kappa: Optional[float] = None


@dataclass
class ScenarioConfig:
    name: str
    grid: GridSpec
    sensors: list
    reward: RewardConfig
    learner: LearnerSpec
    events: dict = field(default_factory=dict)  # round -> {cell: texture}
    certify: Optional[CertifySpec] = None
    source: Optional[str] = None
    raw: dict = field(default_factory=dict, repr=False)

    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def build_sensors(self) -> list[SensorModel]:
        return [
            SensorModel(
                np.asarray(s.position, dtype=float),
                np.radians(s.pan), np.radians(s.tilt), s.zoom,
                tuple(s.sensor_size), tuple(s.pixels),
            )
            for s in self.sensors
        ]

    def build_scene(self) -> SceneState:
        g = self.grid
        o, u, v = (np.asarray(x, dtype=float) for x in (g.origin, g.u, g.v))
        u, v = u / np.linalg.norm(u) * g.cell_size, v / np.linalg.norm(v) * g.cell_size
        textures = _cell_textures(g.initial, g.n_cells)
        polys = []
        for j in range(g.n_cells):
            r, c = divmod(j, g.cols)
            polys.append(Polygon.rectangle(o + c * u + r * v, u, v, textures[j], j))
        return SceneState(polys, events={k: dict(ch) for k, ch in self.events.items()})

    def build_env(self, scale: float = 1.0) -> MonitoringEnv:
        return MonitoringEnv(self.build_sensors(), self.build_scene(), self.reward, scale)

    def action_space(self) -> ActionSpace:
        return ActionSpace(
            tuple(len(s.pan) * len(s.tilt) * len(s.zoom) for s in self.sensors),
            tuple(_constraints(s) for s in self.sensors),
        )

    def learner_params(self, space: Optional[ActionSpace] = None) -> LearnerParams:
        L = self.learner
        if L.mode == "schedule":
            space = space or self.action_space()
            D, _ = compute_D(space)
            return LearnerParams("schedule", L.epsilon, L.kappa, space.n_players, D)
        return LearnerParams("constant", L.epsilon, L.kappa)


def _cell_textures(initial, n: int) -> list:
    if np.isscalar(initial):
        return [np.array([[int(initial)]])] * n
    if len(initial) != n:
        raise ValueError(f"expected {n} initial cell values, got {len(initial)}")
    return [np.atleast_2d(np.asarray(x, dtype=np.int64)) for x in initial]


def _constraints(s: SensorSpec) -> tuple:
    """Feasible next actions for each action of one sensor.

    ``neighborhood`` allows pan and tilt to move by at most ``step`` degrees
    with free zoom; ``complete`` allows everything.
    """
    combos = list(itertools.product(range(len(s.pan)), range(len(s.tilt)), range(len(s.zoom))))
    if s.constraint == "complete":
        return tuple(frozenset(range(len(combos))) for _ in combos)
    out = []
    for p, t, _ in combos:
        out.append(frozenset(
            b for b, (p2, t2, _) in enumerate(combos)
            if abs(s.pan[p2] - s.pan[p]) <= s.step + ANGLE_TOL and abs(s.tilt[t2] - s.tilt[t]) <= s.step + ANGLE_TOL
        ))
    return tuple(out)


def _texture(value, where: str, problems: list):
    arr = np.atleast_2d(np.asarray(value))
    if arr.dtype.kind not in "iuf" or arr.size == 0:
        problems.append(f"{where}: gray levels must be numbers")
        return None
    if arr.min() < 0 or arr.max() > 255:
        problems.append(f"{where}: gray levels must lie in [0, 255]")
        return None
    return arr.astype(np.int64)


def _get(section: dict, key: str, kind, where: str, problems: list, default=None, required=False):
    if key not in section:
        if required:
            problems.append(f"{where}.{key}: missing")
        return default
    val = section[key]
    try:
        if kind is float:
            return float(val)
        if kind is int:
            if isinstance(val, bool) or int(val) != val:
                raise TypeError
            return int(val)
        if kind is list:
            if not isinstance(val, (list, tuple)):
                raise TypeError
            return list(val)
        return kind(val)
    except (TypeError, ValueError):
        problems.append(f"{where}.{key}: expected {kind.__name__}, got {val!r}")
        return default


def parse_config(doc: dict, source: Optional[str] = None) -> ScenarioConfig:
    """Build and validate a scenario from a parsed YAML mapping."""
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["top level: expected a mapping"])
    known = {"name", "grid", "sensors", "reward", "learner", "events", "certify"}
    for key in sorted(set(doc) - known):
        problems.append(f"{key}: unknown section")

    gdoc = doc.get("grid") or {}
    if not isinstance(gdoc, dict):
        problems.append("grid: expected a mapping")
        gdoc = {}
    rows = _get(gdoc, "rows", int, "grid", problems, 1, required=True)
    cols = _get(gdoc, "cols", int, "grid", problems, 1, required=True)
    if rows < 1 or cols < 1:
        problems.append("grid: rows and cols must be positive")
        rows, cols = max(rows, 1), max(cols, 1)
    grid = GridSpec(
        rows, cols,
        _get(gdoc, "cell_size", float, "grid", problems, 0.5),
        tuple(_get(gdoc, "origin", list, "grid", problems, [0.0, 0.0, 0.0])),
        tuple(_get(gdoc, "u", list, "grid", problems, [1.0, 0.0, 0.0])),
        tuple(_get(gdoc, "v", list, "grid", problems, [0.0, 1.0, 0.0])),
        gdoc.get("initial", 128),
    )
    if grid.cell_size <= 0:
        problems.append("grid.cell_size: must be positive")
    for key in ("origin", "u", "v"):
        if len(getattr(grid, key)) != 3:
            problems.append(f"grid.{key}: expected 3 coordinates")
    if len(grid.u) == 3 and len(grid.v) == 3 and np.linalg.norm(np.cross(grid.u, grid.v)) < 1e-12:
        problems.append("grid: u and v must span a plane")
    init = grid.initial
    if np.isscalar(init):
        _texture(init, "grid.initial", problems)
    elif isinstance(init, list) and len(init) == grid.n_cells:
        grid.initial = [_texture(x, f"grid.initial[{j}]", problems) for j, x in enumerate(init)]
    else:
        problems.append(f"grid.initial: expected one gray level or {grid.n_cells} cell values")

    sensors = []
    sdocs = doc.get("sensors")
    if not isinstance(sdocs, list) or not sdocs:
        problems.append("sensors: expected a non-empty list")
        sdocs = []
    for i, sd in enumerate(sdocs):
        where = f"sensors[{i}]"
        if not isinstance(sd, dict):
            problems.append(f"{where}: expected a mapping")
            continue
        pos = _get(sd, "position", list, where, problems, [0.0, 0.0, 1.0], required=True)
        spec = SensorSpec(
            tuple(pos),
            _axis(sd, "pan", where, problems),
            _axis(sd, "tilt", where, problems),
            _axis(sd, "zoom", where, problems),
            str(sd.get("constraint", "neighborhood")),
            _get(sd, "step", float, where, problems, 5.0),
            tuple(_get(sd, "sensor_size", list, where, problems, [4.8, 3.6])),
            tuple(_get(sd, "pixels", list, where, problems, [32, 24])),
        )
        if len(spec.position) != 3:
            problems.append(f"{where}.position: expected 3 coordinates")
        if spec.constraint not in CONSTRAINT_RULES:
            problems.append(f"{where}.constraint: unknown rule {spec.constraint!r}")
        if any(z <= 0 for z in spec.zoom):
            problems.append(f"{where}.zoom: focal lengths must be positive")
        if len(spec.pixels) != 2 or any(int(p) != p or p < 1 for p in spec.pixels):
            problems.append(f"{where}.pixels: expected two positive integers")
        if len(spec.sensor_size) != 2 or any(x <= 0 for x in spec.sensor_size):
            problems.append(f"{where}.sensor_size: expected two positive sizes")
        sensors.append(spec)

    rdoc = doc.get("reward") or {}
    reward = RewardConfig(
        metric=str(rdoc.get("metric", "change")),
        threshold=_get(rdoc, "threshold", float, "reward", problems, 20.0),
        gamma=_get(rdoc, "gamma", float, "reward", problems, 0.015),
        variant=str(rdoc.get("variant", "experiment")),
        rule=str(rdoc.get("rule", "max")),
        h=str(rdoc.get("h", "sqrt")),
        f_qual=str(rdoc.get("f_qual", "identity")),
        normalize_info=bool(rdoc.get("normalize_info", False)),
    )
    if reward.metric not in ("change", "entropy"):
        problems.append(f"reward.metric: unknown metric {reward.metric!r}")
    if reward.variant not in ("experiment", "product"):
        problems.append(f"reward.variant: unknown variant {reward.variant!r}")
    if reward.rule not in ("max", "concave"):
        problems.append(f"reward.rule: unknown region rule {reward.rule!r}")
    for key in ("h", "f_qual"):
        if getattr(reward, key) not in CONCAVE:
            problems.append(f"reward.{key}: expected one of {sorted(CONCAVE)}")
    if reward.gamma < 0:
        problems.append("reward.gamma: must be nonnegative")

    ldoc = doc.get("learner") or {}
    learner = LearnerSpec(
        str(ldoc.get("mode", "constant")),
        _get(ldoc, "epsilon", float, "learner", problems, 0.015),
        _get(ldoc, "kappa", float, "learner", problems, 0.12),
        _get(ldoc, "rounds", int, "learner", problems, 1500),
        _get(ldoc, "seed", int, "learner", problems, 0),
        ldoc.get("initial"),
    )
    if learner.mode not in ("constant", "schedule"):
        problems.append(f"learner.mode: unknown mode {learner.mode!r}")
    if learner.mode == "constant" and not 0 < learner.epsilon <= 0.5:
        problems.append(f"learner.epsilon: {learner.epsilon} outside (0, 0.5]")
    if not 0 <= learner.kappa <= 0.5:
        problems.append(f"learner.kappa: {learner.kappa} outside [0, 1/2] (irrational-decision gain bounds)")
    if learner.rounds < 2:
        problems.append("learner.rounds: need at least 2")

    events = {}
    edoc = doc.get("events") or []
    if not isinstance(edoc, list):
        problems.append("events: expected a list")
        edoc = []
    for e, ev in enumerate(edoc):
        where = f"events[{e}]"
        if not isinstance(ev, dict) or "round" not in ev or "cells" not in ev:
            problems.append(f"{where}: expected a mapping with 'round' and 'cells'")
            continue
        k = _get(ev, "round", int, where, problems, 0)
        if k < 1:
            problems.append(f"{where}.round: must be >= 1")
        cells = ev["cells"]
        if not isinstance(cells, dict):
            problems.append(f"{where}.cells: expected a mapping cell -> gray level")
            continue
        changes = events.setdefault(k, {})
        for j, val in cells.items():
            if not isinstance(j, int) or not 0 <= j < grid.n_cells:
                problems.append(f"{where}.cells: cell {j!r} outside 0..{grid.n_cells - 1}")
                continue
            tex = _texture(val, f"{where}.cells[{j}]", problems)
            if tex is not None:
                changes[j] = tex

    certify = None
    cdoc = doc.get("certify")
    if cdoc is not None:
        if not isinstance(cdoc, dict):
            problems.append("certify: expected a mapping")
        else:
            certify = CertifySpec(
                _get(cdoc, "sensors", list, "certify", problems, [], required=True),
                _get(cdoc, "actions", list, "certify", problems, [], required=True),
                _get(cdoc, "epsilons", list, "certify", problems, [0.05, 0.02, 0.01, 0.005]),
                _get(cdoc, "round", int, "certify", problems, 1),
                None if cdoc.get("kappa") is None else _get(cdoc, "kappa", float, "certify", problems),
            )
            if len(certify.sensors) != len(certify.actions):
                problems.append("certify: need one action list per reduced sensor")
            for s in certify.sensors:
                if not isinstance(s, int) or not 0 <= s < len(sensors):
                    problems.append(f"certify.sensors: {s!r} is not a sensor index")

    cfg = ScenarioConfig(
        str(doc.get("name", Path(source).stem if source else "scenario")),
        grid, sensors, reward, learner, events, certify, source, doc,
    )
    if not problems:
        problems.extend(validate_scenario(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def _axis(sd: dict, key: str, where: str, problems: list) -> list:
    """An action axis: an explicit list or ``{start, step, count}``."""
    val = sd.get(key)
    if isinstance(val, dict):
        try:
            start, step, count = float(val["start"]), float(val["step"]), int(val["count"])
        except (KeyError, TypeError, ValueError):
            problems.append(f"{where}.{key}: expected start, step and count")
            return [0.0]
        if count < 1:
            problems.append(f"{where}.{key}: count must be positive")
            return [0.0]
        return [start + step * c for c in range(count)]
    if isinstance(val, (list, tuple)) and val:
        try:
            return [float(x) for x in val]
        except (TypeError, ValueError):
            pass
    problems.append(f"{where}.{key}: expected a non-empty list of numbers or a range")
    return [0.0]


def validate_scenario(cfg: ScenarioConfig) -> list[str]:
    """Constraint-set and kappa checks on an otherwise well-formed scenario."""
    problems = []
    space = cfg.action_space()
    for v in validate_action_space(space):
        problems.append(f"sensors[{v.player}]: constraint sets fail the {v.item} requirement: {v.detail}")
    if cfg.learner.mode == "schedule" and not problems:
        try:
            lo, hi = kappa_bounds(space)
            if not lo < cfg.learner.kappa <= hi:
                problems.append(
                    f"learner.kappa: {cfg.learner.kappa} outside the decaying-schedule bounds ({lo:.4g}, {hi:.4g}]"
                )
        except GameError as exc:
            problems.append(f"learner.kappa: {exc}")
    init = cfg.learner.initial
    if init is not None:
        if len(init) != space.n_players or any(not isinstance(x, int) or not 0 <= x < m for x, m in zip(init, space.sizes)):
            problems.append("learner.initial: expected one valid action index per sensor")
    if cfg.certify is not None:
        for s, acts in zip(cfg.certify.sensors, cfg.certify.actions):
            if not isinstance(s, int) or not 0 <= s < space.n_players:
                continue
            if not isinstance(acts, list) or any(not isinstance(a, int) or not 0 <= a < space.sizes[s] for a in acts):
                problems.append(f"certify.actions: invalid action list for sensor {s}")
    return problems


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror})"]) from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError([f"{path}: YAML parse error at {where}: {getattr(exc, 'problem', exc)}"]) from exc
    return parse_config(doc, str(path))


def bundled_config(name: str = "paper-mini") -> Path:
    return Path(__file__).with_name("scenarios") / f"{name}.yaml"
