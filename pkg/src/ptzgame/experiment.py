"""Running scenarios: scaling, learning runs, summaries, certification, replay."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .chain import (
    ChainModel,
    diag_mass,
    potential_maximizers,
    stochastic_potentials,
)
from .comms import EnvOracle, env_comm_graph
from .config import ScenarioConfig, load_config
from .env import MonitoringEnv
from .game import (
    ActionSpace,
    GameError,
    marginal_game,
    max_unilateral_gain,
    scale_factor,
    scale_game,
    table_objective,
    validate_action_space,
)
from .learner import RunLog, kappa_bounds, read_csv, run


EXHAUSTIVE_SCAN = 10**4  # joint actions; above this the scale comes from a utility bound
EXHAUSTIVE_SEARCH = 2 * 10**5
OCCUPANCY_TAIL = 0.1


class CertifyError(RuntimeError):
    pass


def regime_starts(cfg: ScenarioConfig) -> list[int]:
    """First round of each scene regime (round 1 plus every event round inside the run)."""
    return [1] + sorted(k for k in cfg.events if 1 < k < cfg.learner.rounds)


def scene_at(cfg: ScenarioConfig, env: MonitoringEnv, k: int) -> None:
    """Bring ``env``'s scene to its state during round ``k`` (events only move forward)."""
    for r in sorted(cfg.events):
        if r <= k:
            env.scene.apply(cfg.events[r])


def compute_scale(cfg: ScenarioConfig, space: Optional[ActionSpace] = None) -> float:
    """One scale factor valid in every regime.

    Small scenarios are scanned exhaustively for the largest unilateral
    gain; larger ones use the single-sensor utility bound.
    """
    space = space or cfg.action_space()
    gains = []
    for start in regime_starts(cfg):
        env = cfg.build_env()
        scene_at(cfg, env, start)
        if space.n_joint <= EXHAUSTIVE_SCAN:
            gains.append(max_unilateral_gain(marginal_game(space, env.objective)))
        else:
            gains.append(env.utility_bound())
    return scale_factor(max(gains))


@dataclass
class Summary:
    name: str
    seed: int
    scale: float
    rounds: int
    regimes: list  # [(start_round, end_round, mean W)]
    best_W: float
    best_action: tuple
    best_round: int
    tail_occupancy: float
    config_digest: str = ""
    extra: dict = field(default_factory=dict)

    def text(self) -> str:
        lines = [
            f"scenario      {self.name}",
            f"config        {self.config_digest}",
            f"seed          {self.seed}",
            f"scale         {self.scale:.12g}",
            f"rounds        {self.rounds}",
        ]
        for a, b, m in self.regimes:
            lines.append(f"mean W [{a}, {b})  {m:.12g}")
        lines.append(f"best W        {self.best_W:.12g} at round {self.best_round} action {list(self.best_action)}")
        lines.append(f"occupancy of best-W actions in final {int(OCCUPANCY_TAIL * 100)}%  {self.tail_occupancy:.4f}")
        return "\n".join(lines) + "\n"


def summarize(cfg: ScenarioConfig, runlog: RunLog, scale: float, seed: int) -> Summary:
    R = runlog.rounds
    bounds = regime_starts(cfg) + [R]
    regimes = [(a, b, float(runlog.W[a:b].mean())) for a, b in zip(bounds[:-1], bounds[1:])]
    last = bounds[-2]
    r_best = last + int(np.argmax(runlog.W[last:]))
    best = tuple(int(x) for x in runlog.actions[r_best])
    tail = int(np.floor(R * (1 - OCCUPANCY_TAIL)))
    # ties are common (a sensor's move can leave W unchanged), so count any best-W action
    occ = float(np.mean(runlog.W[tail:] >= runlog.W[r_best] - 1e-12))
    return Summary(
        cfg.name, seed, scale, R, regimes, float(runlog.W[r_best]), best, r_best, occ, cfg.digest()
    )


def run_experiment(cfg: ScenarioConfig, seed: Optional[int] = None, message_log: Optional[list] = None):
    """Scale, build the neighbor graph and run the learner; returns ``(RunLog, Summary)``."""
    seed = cfg.learner.seed if seed is None else int(seed)
    space = cfg.action_space()
    scale = compute_scale(cfg, space)
    env = cfg.build_env(scale)
    oracle = EnvOracle(env, env_comm_graph(env), message_log)
    params = cfg.learner_params(space)
    runlog = run(
        oracle, space, params, cfg.learner.rounds, seed,
        initial=cfg.learner.initial, before_round=env.scene.apply_round,
    )
    runlog.meta.update({"scale": scale, "config": cfg.source, "digest": cfg.digest(), "name": cfg.name})
    return runlog, summarize(cfg, runlog, scale, seed)


def export_csv(runlog: RunLog, path) -> None:
    runlog.to_csv(path)


def write_outputs(cfg: ScenarioConfig, runlog: RunLog, summary: Summary, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_csv(runlog, out / "run.csv")
    (out / "summary.txt").write_text(summary.text())
    meta = dict(runlog.meta)
    if meta.get("config"):
        meta["config"] = str(Path(meta["config"]).resolve())
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return out / "run.csv"


def search_optimum(env: MonitoringEnv, space: ActionSpace, seed: int = 0, starts: int = 64, extra=()):
    """Best joint action found for the current scene; ``(W, action, exhaustive)``.

    Exhaustive when the joint space is small, otherwise coordinate ascent
    (each sensor in turn picks its best action, ignoring movement
    constraints) from random starts plus any ``extra`` candidates.
    """
    if space.n_joint <= EXHAUSTIVE_SEARCH:
        best, arg = -np.inf, None
        for a in space.joint_actions():
            w = env.objective(a)
            if w > best:
                best, arg = w, a
        return best, arg, True
    rng = np.random.default_rng(seed)
    cands = [tuple(int(x) for x in a) for a in extra]
    cands += [tuple(int(rng.integers(m)) for m in space.sizes) for _ in range(starts)]
    best, arg = -np.inf, None
    for a in cands:
        a = list(a)
        cur = env.objective(tuple(a))
        improved = True
        while improved:
            improved = False
            for i, m in enumerate(space.sizes):
                for b in range(m):
                    if b == a[i]:
                        continue
                    trial = a[:i] + [b] + a[i + 1 :]
                    w = env.objective(tuple(trial))
                    if w > cur + 1e-15:
                        a, cur, improved = trial, w, True
        if cur > best:
            best, arg = cur, tuple(a)
    return best, arg, False


def regime_optima(cfg: ScenarioConfig, scale: float, seed: int = 0, extra=()) -> list:
    """``(start, W*, action, exhaustive)`` per regime, on the scaled objective."""
    space = cfg.action_space()
    out = []
    for start in regime_starts(cfg):
        env = cfg.build_env(scale)
        scene_at(cfg, env, start)
        w, a, ex = search_optimum(env, space, seed, extra=extra)
        out.append((start, w, a, ex))
    return out


@dataclass
class CertifyReport:
    players: list
    actions: list
    kappa: float
    argmax: set
    stable: set
    contained: bool
    tied: bool
    mass: dict  # eps -> stationary mass on diag(argmax)
    potentials: dict

    def text(self) -> str:
        lines = [
            f"reduced sensors  {self.players}",
            f"kept actions     {self.actions}",
            f"kappa            {self.kappa}",
            f"argmax W         {sorted(self.argmax)}",
            f"stable set       {sorted(self.stable)}",
            f"stable set within argmax: {'yes' if self.contained else 'NO'}",
        ]
        if self.tied:
            lines.append("all stochastic potentials tied")
        for eps, m in self.mass.items():
            lines.append(f"mass on argmax at eps={eps:g}: {m:.6f}")
        return "\n".join(lines) + "\n"


def reduced_game(cfg: ScenarioConfig, env: MonitoringEnv):
    """Marginal-contribution game over the certify section's sensors and actions.

    Other sensors view nothing; each reduced sensor may move between any of
    its kept actions.
    """
    spec = cfg.certify
    n_all = env.n_sensors
    sizes = [len(a) for a in spec.actions]
    table = np.zeros(tuple(m + 1 for m in sizes))
    for idx in np.ndindex(*table.shape):
        joint = [None] * n_all
        for p, s in enumerate(spec.sensors):
            if idx[p] < sizes[p]:
                joint[s] = spec.actions[p][idx[p]]
        table[idx] = env.objective(tuple(joint))
    space = ActionSpace.complete(sizes)
    return marginal_game(space, table_objective(table), f"{cfg.name}-reduced", table)


def certify(cfg: ScenarioConfig, scale: Optional[float] = None) -> CertifyReport:
    spec = cfg.certify
    if spec is None:
        raise CertifyError("scenario has no certify section")
    env = cfg.build_env(1.0)
    scene_at(cfg, env, spec.round)
    game = reduced_game(cfg, env)
    bad = validate_action_space(game.space)
    if bad:
        raise CertifyError("reduced game violates the constraint-set requirements: " + "; ".join(map(str, bad)))
    kappa = cfg.learner.kappa if spec.kappa is None else spec.kappa
    lo, hi = kappa_bounds(game.space)
    if not lo < kappa <= hi:
        raise CertifyError(f"kappa {kappa} outside kappa_bounds ({lo:.4g}, {hi:.4g}] of the reduced game")
    s = scale_factor(max_unilateral_gain(game)) if scale is None else scale
    game = scale_game(game, s)
    try:
        model = ChainModel(game, kappa)
    except GameError as exc:
        raise CertifyError(f"{exc}; shrink the certify section (fewer sensors or actions)") from exc
    best = potential_maximizers(game)
    pots = stochastic_potentials(game, kappa, model)
    stable = pots.stable()
    mass = {}
    for eps in spec.epsilons:
        mu = model.stationary(float(eps))
        mass[float(eps)] = diag_mass(model, mu, best)
    tied = bool(np.ptp(pots.potentials) <= 1e-9)
    return CertifyReport(
        list(spec.sensors), [list(a) for a in spec.actions], kappa, best, stable,
        stable <= best, tied, mass, {a: float(p) for a, p in zip(pots.graph.nodes, pots.potentials)},
    )


def recompute_W(cfg: ScenarioConfig, runlog: RunLog, scale: float) -> np.ndarray:
    """Global objective of each logged joint action, replaying the scene events."""
    env = cfg.build_env(scale)
    out = np.empty(runlog.rounds)
    for r in range(runlog.rounds):
        env.scene.apply_round(max(r, 1))
        out[r] = env.objective(tuple(int(x) for x in runlog.actions[r]))
    return out


def replay(log_path, config_path=None):
    """Re-evaluate a logged run; returns ``(max |W_logged - W_replayed|, rows)``."""
    log_path = Path(log_path)
    meta_path = log_path.with_name("meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    config_path = config_path or meta.get("config")
    if config_path is None:
        raise FileNotFoundError(f"no config given and no meta.json next to {log_path}")
    cfg = load_config(config_path)
    runlog = read_csv(log_path)
    scale = float(meta["scale"]) if "scale" in meta else compute_scale(cfg)
    W = recompute_W(cfg, runlog, scale)
    logged = runlog.W
    # the CSV keeps 12 significant digits
    replayed = np.array([float(format(w, ".12g")) for w in W])
    return float(np.max(np.abs(logged - replayed))), runlog.rounds

