"""Experiment driver: configuration, training data, sweeps and POD comparison."""

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import snapio
from .errors import FireRomError, FormatError, InvalidInputError
from .fom import (DiffOps, FireParams, Grid1D, initial_condition_gaussian,
                  initial_condition_separated)
from .integrate import IntegratorConfig
from .metrics import relative_errors, relative_l2_error
from .model import load_model, save_model
from .pipeline import (SnapshotSet, build_gaussian_model, build_pod_rom,
                       build_separated_model, generate_snapshots)
from .rom import lift, run_pod, run_switched, run_trom

log = logging.getLogger(__name__)

CASES = ("separated_waves", "gaussian")
PRESETS = ("desk", "paper")

__all__ = [
    "ExperimentConfig", "SimResult", "relative_l2_error", "relative_errors", "load_config",
    "generate_training_data", "load_training_data", "build_offline", "run_rom", "sweep",
    "pareto_compare", "write_csv", "summarize",
]


def _sampling_defaults(case, preset):
    if case == "separated_waves":
        return {"p_max": 300.0, "dp": 20 / 3 if preset == "paper" else 8 / 3}
    return {"p_max": 500.0, "dp": 1 / 3 if preset == "paper" else 4 / 3}


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "separated_waves"
    preset: str = "desk"
    grid: Grid1D = field(default_factory=lambda: Grid1D(1000.0, 750))
    fire: FireParams = field(default_factory=FireParams)
    train_betas: tuple = (540.0, 560.0, 580.0)
    test_betas: tuple = tuple(np.linspace(540.0, 580.0, 81).tolist())
    beta_range: tuple = (540.0, 580.0)
    # modes per variable and frame, nonlinearity multiplier, POD counts for the switched case
    n_modes: int = 4
    nonlin_factor: int = 2
    n_pre: int = 14
    n_tail: int = 2
    p_max: float = 300.0
    dp: float = 8 / 3
    interpolate: bool = False
    snapshot_dt: float = 1.0
    t_f: float = 1400.0
    t_switch: float = 100.0
    window_temp: float = 0.65
    window_smf: float = 0.80
    degree: int = 1
    path_fraction: float = 0.985
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    out_dir: str = "runs"
    repeats: int = 3
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.case not in CASES:
            raise InvalidInputError(f"case must be one of {CASES}, got {self.case!r}")
        if self.preset not in PRESETS:
            raise InvalidInputError(f"preset must be one of {PRESETS}, got {self.preset!r}")
        if not self.train_betas:
            raise InvalidInputError("training betas must be nonempty")
        lo, hi = self.beta_range
        bad = [b for b in self.test_betas if not lo - 1e-9 <= b <= hi + 1e-9]
        if bad:
            raise InvalidInputError(f"test betas {bad[:3]} outside the declared range [{lo}, {hi}]")
        if self.repeats < 1 or self.n_modes < 1 or self.nonlin_factor < 1:
            raise InvalidInputError("repeats, n_modes and nonlin_factor must be positive")

    @classmethod
    def for_case(cls, case="separated_waves", preset="desk", **overrides):
        base = dict(case=case, preset=preset,
                    grid=Grid1D(1000.0, 3000 if preset == "paper" else 750),
                    t_f=1400.0 if case == "separated_waves" else 2100.0,
                    n_modes=4,
                    **_sampling_defaults(case, preset))
        base.update(overrides)
        return cls(**base)

    @property
    def out_path(self):
        return Path(self.out_dir)

    def to_dict(self):
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (Grid1D, FireParams, IntegratorConfig)):
                v = asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    def digest(self, keys=None):
        """SHA-256 of the result-relevant settings (run-management keys excluded)."""
        skip = {"out_dir", "workers", "repeats", "seed"}
        d = {k: v for k, v in self.to_dict().items() if k not in skip and (keys is None or k in keys)}
        blob = json.dumps(d, sort_keys=True, default=_json_default).encode()
        return hashlib.sha256(blob).hexdigest()

    def data_digest(self):
        return self.digest({"case", "grid", "fire", "train_betas", "snapshot_dt", "t_f", "integrator"})


def _json_default(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return str(v)


_FIRE_KEYS = {"k": "k", "v": "v", "alpha": "alpha", "beta": "beta", "gamma": "gamma",
              "gamma_s": "gamma_s", "t_ambient": "t_ambient"}


def load_config(path=None, preset="desk", case=None, **overrides):
    """Build an :class:`ExperimentConfig` from preset defaults, a YAML file and overrides.

    Recognised YAML keys (all optional)::

        case, grid.{n_x,length_m}, fire.{k,v,alpha,beta,gamma,gamma_s,t_ambient},
        training.betas, test.betas | test.{start,stop,count}, modes.{per_variable_frame,
        nonlinearity_factor,pod_pre,pod_post}, sampling.{dp,p_max,interpolate},
        snapshots.{dt,t_f}, switching.{t_switch,window_temp,window_smf,degree,path_fraction},
        integrator.{rtol,atol,h_init,h_max,max_steps}, run.{out_dir,repeats,workers,seed}
    """
    raw = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise FormatError(f"{path}: top level must be a mapping")
    case = case or raw.get("case", "separated_waves")
    cfg = ExperimentConfig.for_case(case, preset)
    kw = {}
    g = raw.get("grid", {})
    if g:
        kw["grid"] = Grid1D(float(g.get("length_m", cfg.grid.length_m)), int(g.get("n_x", cfg.grid.n_x)))
    fire = raw.get("fire", {})
    unknown = set(fire) - set(_FIRE_KEYS)
    if unknown:
        raise FormatError(f"unknown fire keys {sorted(unknown)}")
    if fire:
        kw["fire"] = replace(cfg.fire, **{_FIRE_KEYS[k]: float(v) for k, v in fire.items()})
    if "training" in raw:
        kw["train_betas"] = tuple(float(b) for b in raw["training"]["betas"])
    t = raw.get("test", {})
    if "betas" in t:
        kw["test_betas"] = tuple(float(b) for b in t["betas"])
    elif t:
        kw["test_betas"] = tuple(np.linspace(float(t["start"]), float(t["stop"]), int(t["count"])).tolist())
    if "range" in t:
        kw["beta_range"] = tuple(float(b) for b in t["range"])
    m = raw.get("modes", {})
    for src, dst in (("per_variable_frame", "n_modes"), ("nonlinearity_factor", "nonlin_factor"),
                     ("pod_pre", "n_pre"), ("pod_post", "n_tail")):
        if src in m:
            kw[dst] = int(m[src])
    s = raw.get("sampling", {})
    for k in ("dp", "p_max"):
        if k in s:
            kw[k] = float(s[k])
    if "interpolate" in s:
        kw["interpolate"] = bool(s["interpolate"])
    sn = raw.get("snapshots", {})
    if "dt" in sn:
        kw["snapshot_dt"] = float(sn["dt"])
    if "t_f" in sn:
        kw["t_f"] = float(sn["t_f"])
    sw = raw.get("switching", {})
    for k in ("t_switch", "window_temp", "window_smf", "path_fraction"):
        if k in sw:
            kw[k] = float(sw[k])
    if "degree" in sw:
        kw["degree"] = int(sw["degree"])
    if "integrator" in raw:
        kw["integrator"] = replace(cfg.integrator, **{k: float(v) if k != "max_steps" else int(v)
                                                      for k, v in raw["integrator"].items()})
    run = raw.get("run", {})
    for k in ("out_dir", "repeats", "workers", "seed"):
        if k in run:
            kw[k] = run[k]
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return replace(cfg, **kw)


# ---------------------------------------------------------------- training data


def initial_state(cfg):
    if cfg.case == "separated_waves":
        return initial_condition_separated(cfg.fire, cfg.grid, cache_dir=cfg.out_path / "data",
                                           cfg=cfg.integrator).stacked()
    return initial_condition_gaussian(cfg.grid).stacked()


def _data_name(cfg, beta):
    return f"{cfg.case}_nx{cfg.grid.n_x}_beta{beta:.6g}"


def generate_training_data(cfg, reuse=True):
    """FOM runs at every training beta; state and nonlinearity snapshots as SMOR files.

    Returns the manifest dict, also written to ``<out_dir>/data/manifest.json``.
    Integrator failures are recorded per beta and the remaining runs continue.
    With ``reuse`` an existing manifest with the same data digest is returned
    unchanged when all its files exist.
    """
    data_dir = cfg.out_path / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    man_path = data_dir / f"manifest_{cfg.case}_nx{cfg.grid.n_x}.json"
    digest = cfg.data_digest()
    if reuse and man_path.exists():
        man = json.loads(man_path.read_text())
        files = [data_dir / e[k] for e in man["entries"] if e["status"] == "ok" for k in ("states", "nonlin")]
        if man.get("digest") == digest and all(f.exists() for f in files):
            return man
    z0 = initial_state(cfg)
    ops = DiffOps.from_grid(cfg.grid)
    entries = []
    for beta in cfg.train_betas:
        name = _data_name(cfg, beta)
        entry = {"beta": beta, "states": f"{name}.states.smor", "nonlin": f"{name}.nonlin.smor"}
        try:
            snap = generate_snapshots(cfg.grid, cfg.fire.with_beta(beta), z0, cfg.t_f, cfg.snapshot_dt,
                                      cfg.integrator, ops)
        except FireRomError as exc:
            log.error("training run at beta=%g failed: %s", beta, exc)
            entry.update(status="failed", error=str(exc))
            entries.append(entry)
            continue
        snapio.write_matrix(data_dir / entry["states"], snap.states)
        snapio.write_matrix(data_dir / entry["nonlin"], snap.nonlin)
        entry.update(status="ok", n_cols=int(snap.times.size), t_f=cfg.t_f, dt=cfg.snapshot_dt,
                     fom_wall_time_s=snap.wall_time_s)
        entries.append(entry)
    man = {"case": cfg.case, "n_x": cfg.grid.n_x, "digest": digest, "entries": entries}
    man_path.write_text(json.dumps(man, indent=2))
    return man


def load_training_data(cfg, manifest):
    from .pipeline import snapshot_times
    data_dir = cfg.out_path / "data"
    out = []
    for e in manifest["entries"]:
        if e["status"] != "ok":
            continue
        states = snapio.read_matrix(data_dir / e["states"])
        nonlin = snapio.read_matrix(data_dir / e["nonlin"])
        times = snapshot_times(e["t_f"], e["dt"])
        if times.size != states.shape[1]:
            raise FormatError(f"{e['states']}: {states.shape[1]} columns, expected {times.size}")
        out.append(SnapshotSet(e["beta"], times, states, nonlin, e.get("fom_wall_time_s", 0.0)))
    if not out:
        raise FireRomError("no usable training data")
    return out


# ---------------------------------------------------------------- offline / online


def build_offline(cfg, snaps=None, out=None):
    """Offline phase of the configured case; saves the model when ``out`` is given."""
    if snaps is None:
        snaps = load_training_data(cfg, generate_training_data(cfg))
    if cfg.case == "separated_waves":
        model, info = build_separated_model(snaps, cfg.grid, initial_state(cfg), cfg.n_modes,
                                            cfg.nonlin_factor * cfg.n_modes, cfg.p_max, cfg.dp,
                                            workers=cfg.workers)
    else:
        model, info = build_gaussian_model(snaps, cfg.grid, cfg.t_switch, cfg.n_pre, cfg.n_modes, cfg.n_tail,
                                           cfg.window_temp, cfg.window_smf, cfg.degree, cfg.path_fraction,
                                           cfg.p_max, cfg.dp, workers=cfg.workers)
    model = replace(model, meta={**model.meta, "config_digest": cfg.digest()})
    if out is not None:
        save_model(out, model)
    return model, info


def online_dof(model):
    return model.r + model.q


def run_rom(cfg, model, beta, times, z0):
    """One online run; returns ``(states, wall_time_s, extras)``.

    The wall time covers the reduced integration (and the handoff in the
    switched case); lifting to full dimension happens afterwards.
    """
    params = cfg.fire.with_beta(beta)
    if model.switching is not None:
        tr = run_switched(model, params, float(times[-1]), times, z0, cfg.integrator)
        return tr.states, tr.wall_time_s, {"handoff_residual": tr.handoff_residual, "paths": tr.paths,
                                           "n_steps": tr.n_steps}
    tr = run_trom(model, params, (float(times[0]), float(times[-1])), times, cfg.integrator,
                  interpolate=cfg.interpolate)
    return lift(model, tr.coeffs, tr.paths), tr.wall_time_s, {"paths": tr.paths, "n_steps": tr.n_steps}


@dataclass
class SimResult:
    beta: float
    method: str
    dof: int
    err_temp: float
    err_smf: float
    wall_fom_s: float
    wall_rom_s: float
    config_digest: str
    n_steps: int = 0
    handoff_residual: float = float("nan")
    status: str = "ok"

    def __post_init__(self):
        if self.status == "ok":
            if not (self.err_temp >= 0 and self.err_smf >= 0):
                raise InvalidInputError("errors must be nonnegative")
            if not (self.wall_fom_s > 0 and self.wall_rom_s > 0):
                raise InvalidInputError("wall times must be positive")

    @property
    def err_max(self):
        return max(self.err_temp, self.err_smf)

    @property
    def speedup(self):
        return self.wall_fom_s / self.wall_rom_s

    def row(self):
        return {"beta": self.beta, "method": self.method, "dof": self.dof, "err_temp": self.err_temp,
                "err_smf": self.err_smf, "err_max": self.err_max, "handoff_residual": self.handoff_residual,
                "n_steps": self.n_steps, "status": self.status, "config_digest": self.config_digest,
                "wall_fom_s": self.wall_fom_s, "wall_rom_s": self.wall_rom_s, "speedup": self.speedup}


# columns that depend on the machine, excluded from determinism checks
TIMING_COLUMNS = ("wall_fom_s", "wall_rom_s", "speedup")


def _fom_reference(cfg, beta, z0):
    # timed around the integrator call only (solve_ivp measures its own loop)
    return generate_snapshots(cfg.grid, cfg.fire.with_beta(beta), z0, cfg.t_f, cfg.snapshot_dt, cfg.integrator)


def _one_beta(cfg, model, beta, z0):
    ref = _fom_reference(cfg, beta, z0)
    walls = []
    states = extras = None
    for _ in range(cfg.repeats):
        states, wall, extras = run_rom(cfg, model, beta, ref.times, z0)
        walls.append(wall)
    et, es = relative_errors(ref.states, states, ref.times, cfg.grid.n_x)
    return SimResult(beta, "spod_sdeim", online_dof(model), et, es, ref.wall_time_s, float(np.mean(walls)),
                     cfg.digest(), extras["n_steps"],
                     float("nan") if extras.get("handoff_residual") is None else extras["handoff_residual"])


def sweep(cfg, model, betas=None, csv_path=None):
    """Online runs over the test betas against timed FOM references.

    Failed betas are logged, reported with status ``failed`` and left out of
    the summary.  Returns ``(results, summary)``.
    """
    betas = cfg.test_betas if betas is None else betas
    z0 = initial_state(cfg)
    # warm-up so that JIT compilation does not enter the first timing
    run_rom(cfg, model, float(betas[0]), np.linspace(0.0, min(cfg.t_f, cfg.t_switch + 2.0), 3), z0)

    def work(beta):
        try:
            return _one_beta(cfg, model, float(beta), z0)
        except FireRomError as exc:
            log.error("sweep run at beta=%g failed: %s", beta, exc)
            nan = float("nan")
            return SimResult(float(beta), "spod_sdeim", online_dof(model), nan, nan, nan, nan, cfg.digest(),
                             status="failed")

    if cfg.workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(work, betas))
    else:
        results = [work(b) for b in betas]
    summary = summarize(results)
    if csv_path is not None:
        write_csv(csv_path, [r.row() for r in results] + summary_rows(summary))
    return results, summary


def summarize(results):
    ok = [r for r in results if r.status == "ok"]
    out = {"n_ok": len(ok), "n_failed": len(results) - len(ok)}
    for key, get in (("err_temp", lambda r: r.err_temp), ("err_smf", lambda r: r.err_smf),
                     ("err_max", lambda r: r.err_max), ("speedup", lambda r: r.speedup)):
        vals = np.array([get(r) for r in ok]) if ok else np.array([np.nan])
        out[key] = {"min": float(vals.min()), "mean": float(vals.mean()), "max": float(vals.max())}
    return out


def summary_rows(summary):
    rows = []
    for stat in ("min", "mean", "max"):
        rows.append({"beta": stat, "method": "summary", "err_temp": summary["err_temp"][stat],
                     "err_smf": summary["err_smf"][stat], "err_max": summary["err_max"][stat],
                     "speedup": summary["speedup"][stat], "status": f"n_ok={summary['n_ok']};"
                     f"n_failed={summary['n_failed']}"})
    return rows


def pareto_compare(cfg, spod_modes, pod_modes, beta, snaps=None, csv_path=None):
    """Accuracy versus time of shifted ROMs and POD-DEIM ROMs on identical snapshots.

    ``spod_modes`` lists modes per variable and frame, ``pod_modes`` total POD
    state modes (half per variable).  Returns rows of (method, dof, wall
    time, errors).
    """
    if snaps is None:
        snaps = load_training_data(cfg, generate_training_data(cfg))
    z0 = initial_state(cfg)
    ref = _fom_reference(cfg, beta, z0)
    params = cfg.fire.with_beta(beta)
    ops = DiffOps.from_grid(cfg.grid)
    rows = []
    for n in spod_modes:
        model, _ = build_offline(replace(cfg, n_modes=int(n)), snaps)
        run_rom(cfg, model, beta, ref.times[:3], z0)  # JIT warm-up
        walls = []
        for _ in range(cfg.repeats):
            states, wall, _ = run_rom(cfg, model, beta, ref.times, z0)
            walls.append(wall)
        et, es = relative_errors(ref.states, states, ref.times, cfg.grid.n_x)
        label = f"{model.n_frame_modes}+{model.q}"
        rows.append({"method": "spod_sdeim", "label": label, "dof": online_dof(model), "err_temp": et,
                     "err_smf": es, "wall_rom_s": float(np.mean(walls)), "wall_fom_s": ref.wall_time_s})
    for n in pod_modes:
        if n % 2:
            raise InvalidInputError("POD mode counts must be even (half per variable)")
        rom = build_pod_rom(snaps, n // 2, cfg.nonlin_factor * (n // 2), ops)
        walls = []
        status = "ok"
        try:
            for _ in range(cfg.repeats):
                tr = run_pod(rom, params, rom.project(z0), (0.0, cfg.t_f), ref.times, cfg.integrator)
                walls.append(tr.wall_time_s)
            et, es = relative_errors(ref.states, rom.lift(tr.coeffs), ref.times, cfg.grid.n_x)
        except FireRomError as exc:
            log.error("POD-DEIM run with %d modes failed: %s", n, exc)
            et = es = float("nan")
            walls = [float("nan")]
            status = "failed"
        rows.append({"method": "pod_deim", "label": str(n), "dof": int(n), "err_temp": et, "err_smf": es,
                     "wall_rom_s": float(np.mean(walls)), "wall_fom_s": ref.wall_time_s, "status": status})
    if csv_path is not None:
        write_csv(csv_path, rows)
    return rows


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return "" if v is None else str(v)


def write_csv(path, rows):
    """UTF-8 CSV with a header row; floats printed with 17 significant digits."""
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def value_columns(rows):
    """Rows with the timing columns removed (for determinism comparisons)."""
    return [{k: v for k, v in r.items() if k not in TIMING_COLUMNS} for r in rows]


def load_or_build(cfg, model_path=None):
    if model_path is not None and Path(model_path).exists():
        return load_model(model_path)
    model, _ = build_offline(cfg, out=model_path)
    return model


def fom_trajectory(cfg, beta, t_f=None):
    z0 = initial_state(cfg)
    c = cfg if t_f is None else replace(cfg, t_f=float(t_f))
    t = time.perf_counter()
    snap = _fom_reference(c, beta, z0)
    log.info("FOM at beta=%g: %.2f s", beta, time.perf_counter() - t)
    return snap
