"""End-to-end runs: configuration, shared precomputation, classification, sweeps."""

import configparser
import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import diagnostics as D
from . import grid as rg
from . import persist
from .errors import (InvalidArgument, ModulationFailure, SpectralDataInvalid, StageFailure,
                     ThresholdNLSError)
from .evolution import SCHEMES, Controls, Label, SpongeConfig, evolve
from .ground_state import solve_ground_state
from .linearized import assemble_operators, compute_unstable_pair, smooth_random_fields
from .special import build_profiles, special_initial_data

CONFIG_VERSION = 1
OUTCOME_CODES = {None: 0, Label.SCATTER: 1, Label.BLOWUP: 2, Label.CONVERGE: 3, Label.UNDETERMINED: 4}
PROXY_NOTES = {
    Label.SCATTER: "proxy: potential term below threshold for the required windows",
    Label.BLOWUP: "proxy: gradient threshold or grid-scale energy",
    Label.CONVERGE: "proxy: fitted exponential decay of delta",
    Label.UNDETERMINED: "proxy: no criterion met within t_end",
}


# ---------------------------------------------------------------------------
# initial data descriptors

@dataclass(frozen=True)
class GroundStateInit:
    kind: str = field(default="groundstate", init=False)


@dataclass(frozen=True)
class ScaledInit:
    """``lam * Q``: kinetic ratio ``lam``."""
    lam: float
    kind: str = field(default="scaled", init=False)


@dataclass(frozen=True)
class PerturbedInit:
    """``Q + eps * p`` with ``p`` normalised to ``|Q|_{H^1}``; ``profile`` is
    ``gaussian`` or ``random`` (drawn from the run seed)."""
    eps: float
    profile: str = "gaussian"
    kind: str = field(default="perturbed", init=False)


@dataclass(frozen=True)
class SpecialInit:
    """Approximate threshold solution; ``t0 = None`` means ``5 / e0``."""
    A: float = -1.0
    k: int = 5
    t0: float | None = None
    kind: str = field(default="special", init=False)


@dataclass(frozen=True)
class FileInit:
    path: str
    kind: str = field(default="file", init=False)


INIT_KINDS = {"groundstate": GroundStateInit, "scaled": ScaledInit, "perturbed": PerturbedInit,
              "special": SpecialInit, "file": FileInit}


def make_init(kind, **params):
    try:
        cls = INIT_KINDS[kind]
    except KeyError:
        raise InvalidArgument(f"unknown initial-data kind {kind!r}; choose from {sorted(INIT_KINDS)}")
    try:
        return cls(**params)
    except TypeError as exc:
        raise InvalidArgument(f"bad parameters for {kind!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# run configuration

@dataclass(frozen=True)
class RunConfig:
    b: float = 0.1
    n: int = 4096
    r_max: float = 60.0
    init: object = field(default_factory=GroundStateInit)
    direction: int = 1
    t_end: float = 10.0
    dt: float = 1e-3
    scheme: str = "strang"
    sponge: bool = True
    sponge_start: float | None = None
    sponge_strength: float = 5.0
    blowup_threshold: float = 1e3
    scatter_level: float = 1e-3
    scatter_windows: int = 5
    converge_delta: float = 1e-6
    rate_low: float = 0.5
    rate_high: float = 1.5
    rate_window: float = 3.0
    record_every: int = 10
    virial_R: float = 10.0
    csv: str | None = None
    checkpoint: str | None = None
    seed: int = 0

    def __post_init__(self):
        bad = []
        if not 0.0 < self.b < 0.5:
            bad.append("b must lie in (0, 1/2)")
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 8):
            bad.append("n must be an integer >= 8")
        if not self.r_max > 0:
            bad.append("r_max must be positive")
        if self.direction not in (1, -1):
            bad.append("direction must be +1 or -1")
        if not (self.t_end > 0 and np.isfinite(self.t_end)):
            bad.append("t_end must be a positive duration (use direction for backward runs)")
        if not self.dt > 0:
            bad.append("dt must be positive")
        elif self.t_end > 0 and self.dt > self.t_end:
            bad.append("dt exceeds t_end")
        if self.scheme not in SCHEMES:
            bad.append(f"scheme must be one of {SCHEMES}")
        if self.sponge_strength < 0:
            bad.append("sponge_strength must be non-negative")
        if self.sponge_start is not None and not 0 < self.sponge_start < self.r_max:
            bad.append("sponge_start must lie inside (0, r_max)")
        for name in ("blowup_threshold", "scatter_level", "converge_delta", "rate_window", "virial_R"):
            if not getattr(self, name) > 0:
                bad.append(f"{name} must be positive")
        if not 0 < self.rate_low < self.rate_high:
            bad.append("need 0 < rate_low < rate_high")
        if self.scatter_windows < 1 or self.record_every < 1:
            bad.append("scatter_windows and record_every must be positive integers")
        if not isinstance(self.init, tuple(INIT_KINDS.values())):
            bad.append("init must be one of the initial-data descriptors")
        if bad:
            raise InvalidArgument("; ".join(bad))

    def to_dict(self):
        d = asdict(self)
        d["init"] = asdict(self.init)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        init = d.pop("init", None)
        if isinstance(init, dict):
            init = dict(init)
            d["init"] = make_init(init.pop("kind"), **init)
        elif init is not None:
            d["init"] = init
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def hash(self):
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def controls(self, e0):
        sponge = (SpongeConfig(self.sponge_start, self.sponge_strength)
                  if self.sponge and self.sponge_strength > 0 else SpongeConfig.off())
        return Controls(dt=self.dt, sponge=sponge, record_every=self.record_every,
                        blowup_threshold=self.blowup_threshold, scheme=self.scheme,
                        keep_states=self.checkpoint is not None, efold_time=1.0 / e0,
                        scatter_level=self.scatter_level, scatter_windows=self.scatter_windows)


def _coerce(text, typ):
    text = text.strip()
    if text.lower() in ("", "none", "null"):
        return None
    if typ is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise InvalidArgument(f"not a boolean: {text!r}")
    try:
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
    except ValueError as exc:
        raise InvalidArgument(f"cannot parse {text!r} as {typ.__name__}") from exc
    return text


_RUN_TYPES = {"b": float, "n": int, "r_max": float, "direction": int, "t_end": float, "dt": float,
              "scheme": str, "sponge": bool, "sponge_start": float, "sponge_strength": float,
              "blowup_threshold": float, "scatter_level": float, "scatter_windows": int,
              "converge_delta": float, "rate_low": float, "rate_high": float, "rate_window": float,
              "record_every": int, "virial_R": float, "csv": str, "checkpoint": str, "seed": int}
_INIT_TYPES = {"lam": float, "eps": float, "profile": str, "A": float, "k": int, "t0": float, "path": str}


def parse_assignments(pairs):
    """``["b=0.2", "init.kind=special", "init.A=1"]`` -> nested dict."""
    out, init = {}, {}
    for item in pairs:
        if "=" not in item:
            raise InvalidArgument(f"expected key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key.startswith("init."):
            key = key[5:]
            if key == "kind":
                init["kind"] = value
            elif key in _INIT_TYPES:
                init[key] = _coerce(value, _INIT_TYPES[key])
            else:
                raise InvalidArgument(f"unknown init key {key!r}")
        elif key in _RUN_TYPES:
            out[key] = _coerce(value, _RUN_TYPES[key])
        else:
            raise InvalidArgument(f"unknown config key {key!r}")
    if init:
        out["init"] = init
    return out


def read_config(path, overrides=()):
    """Parse an INI-style config.

    ``[run]`` holds ``version`` and the scalar fields, ``[init]`` the data
    descriptor (``kind`` plus its parameters).  ``overrides`` are extra
    ``key=value`` strings applied on top.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        read = cp.read(path)
    except configparser.Error as exc:
        raise InvalidArgument(f"{path}: {exc}") from exc
    if not read:
        raise InvalidArgument(f"cannot read config {path}")
    unknown = set(cp.sections()) - {"run", "init"}
    if unknown:
        raise InvalidArgument(f"{path}: unknown sections {sorted(unknown)}")
    run = dict(cp["run"]) if cp.has_section("run") else {}
    version = run.pop("version", None)
    if version is None or int(version) != CONFIG_VERSION:
        raise InvalidArgument(f"{path}: config version {version!r} unsupported (expected {CONFIG_VERSION})")
    pairs = [f"{k}={v}" for k, v in run.items()]
    if cp.has_section("init"):
        pairs += [f"init.{k}={v}" for k, v in cp["init"].items()]
    return config_from_pairs(list(pairs) + list(overrides))


def config_from_pairs(pairs, base=None):
    d = (base or RunConfig()).to_dict()
    upd = parse_assignments(pairs)
    if "init" in upd:
        new = upd.pop("init")
        if "kind" not in new or new["kind"] == d["init"]["kind"]:
            new = {**d["init"], **new}
        d["init"] = new
    d.update(upd)
    return RunConfig.from_dict(d)


def write_config(cfg, path):
    d = cfg.to_dict()
    init = d.pop("init")
    lines = ["[run]", f"version = {CONFIG_VERSION}"]
    lines += [f"{k} = {'' if v is None else v}" for k, v in d.items()]
    lines += ["", "[init]"] + [f"{k} = {'' if v is None else v}" for k, v in init.items()]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# shared precomputation

@dataclass(frozen=True, eq=False)
class Context:
    gs: object
    ops: object
    spec: object
    _profiles: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def e0(self):
        return self.spec.e0

    def profiles(self, A, k):
        key = (float(A), int(k))
        with self._lock:
            if key not in self._profiles:
                self._profiles[key] = build_profiles(self.gs, self.ops, self.spec, A, k)
            return self._profiles[key]


_CONTEXTS = {}
_CONTEXT_LOCK = threading.Lock()


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageFailure:
        raise
    except (ThresholdNLSError, ArithmeticError, np.linalg.LinAlgError, RuntimeError, OSError) as exc:
        raise StageFailure(name, exc) from exc


def get_context(b, n, r_max):
    """Ground state, operators and spectrum for one grid, built once per process."""
    key = (float(b), int(n), float(r_max))
    with _CONTEXT_LOCK:
        entry = _CONTEXTS.setdefault(key, {"lock": threading.Lock(), "ctx": None})
    with entry["lock"]:
        if entry["ctx"] is None:
            grid = rg.make_grid(int(n), float(r_max))
            gs = _stage("groundstate", solve_ground_state, float(b), grid)
            ops = _stage("spectrum", assemble_operators, gs)
            spec = _stage("spectrum", compute_unstable_pair, ops, gs)
            entry["ctx"] = Context(gs, ops, spec)
        return entry["ctx"]


def context_for(cfg):
    return get_context(cfg.b, cfg.n, cfg.r_max)


def initial_data(cfg, ctx):
    gs, init = ctx.gs, cfg.init
    if isinstance(init, GroundStateInit):
        return gs.Q.astype(complex)
    if isinstance(init, ScaledInit):
        return init.lam * gs.Q.astype(complex)
    if isinstance(init, PerturbedInit):
        g = gs.grid
        if init.profile == "gaussian":
            p = np.exp(-g.r**2).astype(complex)
        elif init.profile == "random":
            p = smooth_random_fields(g, 1, np.random.default_rng(cfg.seed), complex_=True)[0]
        else:
            raise InvalidArgument(f"unknown perturbation profile {init.profile!r}")
        scale = np.sqrt((gs.mass + gs.grad_sq) / rg.h1_norm_sq(g, p))
        return gs.Q + init.eps * scale * p
    if isinstance(init, SpecialInit):
        t0 = 5.0 / ctx.e0 if init.t0 is None else init.t0
        return special_initial_data(ctx.profiles(init.A, init.k), t0)
    if isinstance(init, FileInit):
        b, _, u0 = persist.load_initial_data(init.path, gs.grid)
        if b != gs.b:
            raise InvalidArgument(f"{init.path}: data for b={b}, run has b={gs.b}")
        return u0
    raise InvalidArgument(f"unsupported descriptor {init!r}")


# ---------------------------------------------------------------------------
# per-record diagnostics

class RecordObserver:
    """Computes ``P_R`` and the spectral components at every recorded sample.

    The phase guess is carried between samples so modulation stays on one branch.
    Components are NaN whenever the sample is too far from the orbit.
    """

    def __init__(self, ctx, R):
        self.ctx = ctx
        self.w = rg.virial_weight(ctx.gs.grid, R)
        self.guess = None

    def __call__(self, t, u):
        ctx = self.ctx
        P = D.virial_P(u, self.w, ctx.gs.grid)
        nan = float("nan")
        try:
            frame = D.modulate(u, ctx.gs, self.guess, t)
        except ModulationFailure:
            return P, nan, nan, nan
        if not frame.valid:
            return P, nan, nan, nan
        self.guess = frame.theta
        try:
            c = D.component_track(frame.h, ctx.spec, ctx.ops, ctx.gs, t)
        except SpectralDataInvalid:
            return P, nan, nan, nan
        return P, c.alpha_plus, c.alpha_minus, c.beta


def trajectory_rows(rec, outcome=None):
    a = rec.arrays()
    extra = rec.extra or [(float("nan"),) * 4] * len(a["t"])
    rows = []
    last = len(a["t"]) - 1
    for i in range(len(a["t"])):
        flag = OUTCOME_CODES[outcome.label] if (outcome is not None and i == last) else 0
        rows.append((a["t"][i], a["mass"][i], a["energy"][i], a["delta"][i], a["grad_sq"][i],
                     a["pot"][i], *extra[i], flag))
    return rows


def diagnose_states(times, states, ctx, R=10.0):
    """CSV rows recomputed from stored states."""
    obs = RecordObserver(ctx, R)
    gs = ctx.gs
    rows = []
    for t, u in zip(times, states):
        g = rg.grad_norm_sq(gs.grid, u)
        p = rg.potential_term(gs.grid, u, gs.b)
        rows.append((t, rg.mass(gs.grid, u), 0.5 * g - 0.25 * p, abs(g - gs.grad_sq), g, p, *obs(t, u), 0))
    return rows


# ---------------------------------------------------------------------------
# classification

@dataclass(frozen=True)
class Outcome:
    label: Label
    evidence: dict
    proxy: str

    def to_dict(self):
        return {"label": self.label.value, "proxy": self.proxy, "evidence": self.evidence}


def fit_rate(t, y):
    """Least-squares decay rate of ``log y`` and the fit's coefficient of determination."""
    t, y = np.asarray(t, float), np.asarray(y, float)
    ok = np.isfinite(y) & (y > 0)
    if ok.sum() < 3:
        return float("nan"), float("nan")
    t, ly = t[ok], np.log(y[ok])
    slope, icpt = np.polyfit(t, ly, 1)
    resid = ly - (slope * t + icpt)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else float("nan")
    return float(-slope), float(r2)


def _potential_tag(pot, gs, cfg):
    final = pot[-1] / gs.pot
    if final < cfg.scatter_level:
        return "decayed"
    if abs(final - 1.0) < 0.1:
        return "near-Q"
    return "intermediate"


def classify_record(rec, cfg, ctx):
    gs, e0 = ctx.gs, ctx.e0
    a = rec.arrays()
    t, d = np.abs(a["t"]), a["delta"] / gs.grad_sq
    M0, E0 = a["mass"][0], a["energy"][0]
    evidence = {
        "e0": e0,
        "event_time": rec.event_time,
        "blowup_time": rec.event_time if rec.outcome is Label.BLOWUP else None,
        "final_delta": float(d[-1]),
        "mass_drift": float(abs(a["mass"][-1] - M0) / M0),
        "energy_drift": float(abs(a["energy"][-1] - E0) / abs(E0)) if E0 != 0 else float("nan"),
        "potential_tag": _potential_tag(a["pot"], gs, cfg),
        "delta_rate": None, "delta_rate_over_e0": None, "fit_r2": None, "alpha_plus_rate_over_e0": None,
    }
    if rec.outcome in (Label.BLOWUP, Label.SCATTER):
        return Outcome(rec.outcome, evidence, PROXY_NOTES[rec.outcome])
    window = t >= t[-1] - cfg.rate_window / e0
    rate, r2 = fit_rate(t[window], d[window])
    evidence.update(delta_rate=rate, delta_rate_over_e0=rate / e0, fit_r2=r2)
    in_band = lambda x: np.isfinite(x) and cfg.rate_low <= x <= cfg.rate_high
    converging = in_band(rate / e0) and d[-1] < cfg.converge_delta and r2 > 0.99
    if converging and rec.extra:
        ap = np.abs(np.array([row[1] for row in rec.extra]))
        arate, _ = fit_rate(t[window], ap[window])
        evidence["alpha_plus_rate_over_e0"] = arate / e0
        converging = in_band(arate / e0)
    label = Label.CONVERGE if converging else Label.UNDETERMINED
    return Outcome(label, evidence, PROXY_NOTES[label])


def run(cfg, ctx=None):
    """Evolve one configuration; returns ``(TrajectoryRecord, Context)``."""
    ctx = ctx or context_for(cfg)
    u0 = _stage("construct", initial_data, cfg, ctx)
    obs = RecordObserver(ctx, cfg.virial_R)
    rec = _stage("evolve", evolve, u0, cfg.direction * cfg.t_end, ctx.gs, cfg.controls(ctx.e0), obs)
    return rec, ctx


def classify_run(cfg, ctx=None):
    """Run the pipeline for ``cfg`` and label the result.

    Outputs named in the config (CSV table, final-state checkpoint) are written
    as side effects.  Failures surface as :class:`StageFailure`.
    """
    rec, ctx = run(cfg, ctx)
    outcome = _stage("classify", classify_record, rec, cfg, ctx)
    if cfg.csv:
        _stage("output", write_trajectory_csv, cfg.csv, rec, outcome, cfg)
    if cfg.checkpoint:
        _stage("output", persist.save_trajectory, rec, cfg.checkpoint)
    return outcome, rec


def metadata_lines(cfg, outcome=None):
    lines = [f"config {json.dumps(cfg.to_dict(), sort_keys=True, default=str)}",
             f"delta0_fraction {D.DELTA0_FRACTION}"]
    if outcome is not None:
        lines.append(f"outcome {json.dumps(outcome.to_dict(), sort_keys=True, default=_jsonable)}")
    return lines


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return str(x)


def write_trajectory_csv(path, rec, outcome, cfg):
    persist.write_csv(path, trajectory_rows(rec, outcome), comments=metadata_lines(cfg, outcome))


# ---------------------------------------------------------------------------
# sweeps

SWEEP_HEADER = ("config_hash", "label", "event_time", "delta_rate_over_e0", "final_delta",
                "mass_drift", "energy_drift", "error")


@dataclass(frozen=True)
class ReportRow:
    config_hash: str
    config: RunConfig
    outcome: Outcome | None
    error: str | None

    def cells(self):
        if self.outcome is None:
            return (self.config_hash, "Error", "", "", "", "", "", self.error)
        ev = self.outcome.evidence
        num = lambda x: "" if x is None else persist.fmt(x)
        return (self.config_hash, self.outcome.label.value, num(ev["event_time"]),
                num(ev["delta_rate_over_e0"]), num(ev["final_delta"]), num(ev["mass_drift"]),
                num(ev["energy_drift"]), "")


@dataclass(frozen=True)
class ReportTable:
    rows: tuple

    def to_csv(self):
        lines = [",".join(SWEEP_HEADER)]
        for row in self.rows:
            lines.append(",".join(str(c).replace(",", ";") for c in row.cells()))
        return "\n".join(lines) + "\n"

    def labels(self):
        return {row.config_hash: (row.outcome.label if row.outcome else None) for row in self.rows}


def _safe_classify(cfg):
    try:
        out, _ = classify_run(cfg)
        return ReportRow(cfg.hash(), cfg, out, None)
    except (ThresholdNLSError, ValueError) as exc:
        return ReportRow(cfg.hash(), cfg, None, f"{type(exc).__name__}: {exc}")


def sweep(configs, parallelism=1):
    """Classify every config; rows are ordered by config hash."""
    configs = list(configs)
    if not configs:
        raise InvalidArgument("sweep needs at least one configuration")
    if not (isinstance(parallelism, int) and parallelism >= 1):
        raise InvalidArgument("parallelism must be a positive integer")
    if parallelism == 1:
        rows = [_safe_classify(c) for c in configs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_safe_classify, configs))
    return ReportTable(tuple(sorted(rows, key=lambda r: r.config_hash)))


def canonical_suite(base=None, special_t_end=1.1, dt_special=5e-5, backward_t_end=30.0):
    """The six runs: A = +-1 forward and backward, plus scaled 0.9 and 1.1."""
    base = base or RunConfig()
    fwd = dict(direction=1, t_end=special_t_end, dt=dt_special, scheme="yoshida4",
               record_every=max(1, int(round(0.01 / dt_special))))
    bwd = dict(direction=-1, t_end=backward_t_end, dt=1e-3, scheme="yoshida4")
    out = []
    for A in (-1.0, 1.0):
        out.append(replace(base, init=SpecialInit(A=A), **fwd))
        out.append(replace(base, init=SpecialInit(A=A), **bwd))
    for lam in (0.9, 1.1):
        out.append(replace(base, init=ScaledInit(lam), direction=1, t_end=backward_t_end, dt=1e-3))
    return out
