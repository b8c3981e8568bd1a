"""JSON documents, checkpoints and CSV tables.

Every float is written with 17 significant digits, which round-trips IEEE
doubles exactly; non-finite values use the ``NaN``/``Infinity`` tokens that the
standard library parser accepts.
"""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import grid as rg
from . import ground_state as gsm
from .errors import CheckpointError
from .evolution import EvolutionState
from .linearized import SpectralData

CHECKPOINT_VERSION = 1
DOCUMENT_VERSION = 1
CSV_HEADER = ("t", "mass", "energy", "delta", "grad_sq", "pot", "P_R",
              "alpha_plus", "alpha_minus", "beta", "outcome_flag")


def fmt(x):
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode(obj):
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, np.ndarray):
        return "[" + ", ".join(fmt(x) for x in obj.ravel()) + "]"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot encode {type(obj).__name__}")


def write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_encode(doc) + "\n")


def read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path} is not valid JSON (truncated?): {exc}") from exc


def _grid_doc(grid):
    return {"n": grid.n, "rmax": grid.r_max, "offset": grid.offset}


def _grid_from(doc, path):
    try:
        return rg.make_grid(int(doc["n"]), float(doc["rmax"]), float(doc.get("offset", 0.5)))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad grid description ({exc})") from exc


def _check_grid(found, expected, path):
    if expected is None:
        return
    if (found.n, found.r_max, found.offset) != (expected.n, expected.r_max, expected.offset):
        raise CheckpointError(
            f"{path}: grid mismatch, file has n={found.n}, rmax={found.r_max!r}, "
            f"expected n={expected.n}, rmax={expected.r_max!r}")


def _array(values, n, path, name):
    try:
        a = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: field {name!r} is not numeric") from exc
    if a.shape != (n,):
        raise CheckpointError(f"{path}: field {name!r} has {a.size} samples, expected {n}")
    return a


def _check_version(doc, kind, version, path):
    if not isinstance(doc, dict) or doc.get("kind") != kind:
        raise CheckpointError(f"{path}: not a {kind} document")
    if doc.get("version") != version:
        raise CheckpointError(
            f"{path}: {kind} schema version {doc.get('version')!r} is not supported "
            f"(this build reads version {version})")


# ---------------------------------------------------------------------------
# checkpoints

@dataclass(frozen=True, eq=False)
class Checkpoint:
    b: float
    grid: rg.RadialGrid
    times: tuple
    states: tuple
    dt: float = float("nan")
    step_count: int = 0
    blown_up: bool = False

    @property
    def state(self):
        """The last frame as an :class:`EvolutionState`."""
        return EvolutionState(self.times[-1], self.states[-1], self.dt, self.step_count, self.blown_up)


def _frames_doc(kind, b, grid, times, states, dt, step_count, blown_up):
    return {
        "kind": kind, "version": CHECKPOINT_VERSION, "b": b, "grid": _grid_doc(grid),
        "dt": dt, "step_count": step_count, "blown_up": blown_up,
        "frames": [{"t": t, "re": np.real(u), "im": np.imag(u)} for t, u in zip(times, states)],
    }


def save_checkpoint(state, path, b, grid):
    """Write one :class:`EvolutionState`."""
    grid.check(state.u)
    write_json(path, _frames_doc("checkpoint", b, grid, [state.t], [state.u], state.dt,
                                 state.step_count, state.blown_up))


def save_trajectory(record, path):
    """Write the stored states of a :class:`TrajectoryRecord`."""
    if not record.states:
        raise CheckpointError("trajectory has no stored states")
    f = record.final
    write_json(path, _frames_doc("trajectory", record.b, record.grid, record.state_times, record.states,
                                 f.dt if f else float("nan"), record.steps, bool(f and f.blown_up)))


def _load_frames(path, kind, grid):
    doc = read_json(path)
    _check_version(doc, kind, CHECKPOINT_VERSION, path)
    try:
        g = _grid_from(doc["grid"], path)
        _check_grid(g, grid, path)
        frames = doc["frames"]
        if not frames:
            raise CheckpointError(f"{path}: no frames")
        times, states = [], []
        for i, fr in enumerate(frames):
            re = _array(fr["re"], g.n, path, f"frames[{i}].re")
            im = _array(fr["im"], g.n, path, f"frames[{i}].im")
            times.append(float(fr["t"]))
            states.append(re + 1j * im)
        return Checkpoint(float(doc["b"]), g, tuple(times), tuple(states), float(doc["dt"]),
                          int(doc["step_count"]), bool(doc["blown_up"]))
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: missing or malformed field ({exc})") from exc


def load_checkpoint(path, grid=None):
    """Read a checkpoint; with ``grid`` given, refuse one written on another grid."""
    return _load_frames(path, "checkpoint", grid)


def load_trajectory(path, grid=None):
    return _load_frames(path, "trajectory", grid)


def load_states(path, grid=None):
    """Checkpoint or trajectory, whichever the file holds."""
    doc_kind = read_json(path).get("kind")
    if doc_kind == "trajectory":
        return load_trajectory(path, grid)
    return load_checkpoint(path, grid)


# ---------------------------------------------------------------------------
# ground state, spectrum and constructed data

def ground_state_doc(gs):
    r1, r2 = gsm.pohozaev_residuals(gs)
    return {"kind": "groundstate", "version": DOCUMENT_VERSION,
            "b": gs.b, "n": gs.grid.n, "rmax": gs.grid.r_max, "offset": gs.grid.offset,
            "a_star": gs.a_star, "mass": gs.mass, "energy": gs.energy, "grad_sq": gs.grad_sq,
            "pot": gs.pot, "c_gn": gs.c_gn, "s_c": gs.s_c, "pohozaev_res": [r1, r2],
            "Q": np.asarray(gs.Q), "Qprime": np.asarray(gs.Qprime)}


def ground_state_from_doc(doc, path="<document>"):
    _check_version(doc, "groundstate", DOCUMENT_VERSION, path)
    try:
        grid = _grid_from({"n": doc["n"], "rmax": doc["rmax"], "offset": doc.get("offset", 0.5)}, path)
        Q = _array(doc["Q"], grid.n, path, "Q")
        dQ = _array(doc["Qprime"], grid.n, path, "Qprime")
        b = float(doc["b"])
        Q.flags.writeable = False
        dQ.flags.writeable = False
        return gsm.GroundState(b=b, grid=grid, Q=Q, Qprime=dQ, a_star=float(doc["a_star"]),
                               mass=float(doc["mass"]), energy=float(doc["energy"]),
                               grad_sq=float(doc["grad_sq"]), pot=float(doc["pot"]),
                               c_gn=float(doc["c_gn"]), s_c=float(doc["s_c"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed ground-state document ({exc})") from exc


def load_ground_state(path):
    return ground_state_from_doc(read_json(path), path)


def spectrum_doc(spec, gs):
    return {"kind": "spectrum", "version": DOCUMENT_VERSION, "e0": spec.e0, "b_norm": spec.b_norm,
            "normalized": spec.normalized, "method": spec.method,
            "residuals": {k: float(v) for k, v in spec.residuals.items()},
            "Y1": spec.Y1, "Y2": spec.Y2, "groundstate": ground_state_doc(gs)}


def load_spectrum(path):
    """Returns ``(GroundState, SpectralData)``."""
    doc = read_json(path)
    _check_version(doc, "spectrum", DOCUMENT_VERSION, path)
    try:
        gs = ground_state_from_doc(doc["groundstate"], path)
        n = gs.grid.n
        spec = SpectralData(e0=float(doc["e0"]), Y1=_array(doc["Y1"], n, path, "Y1"),
                            Y2=_array(doc["Y2"], n, path, "Y2"), b_norm=float(doc["b_norm"]),
                            normalized=bool(doc["normalized"]), method=str(doc["method"]),
                            residuals=dict(doc["residuals"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed spectrum document ({exc})") from exc
    return gs, spec


def construct_doc(ps, t0, u0):
    return {"kind": "construct", "version": DOCUMENT_VERSION, "A": ps.A, "k": ps.k, "t0": t0,
            "e0": ps.e0, "b": ps.gs.b, "grid": _grid_doc(ps.gs.grid),
            "residual_norms": list(ps.solve_residuals), "u0_re": np.real(u0), "u0_im": np.imag(u0)}


def load_initial_data(path, grid=None):
    """``(b, grid, u0)`` from a construct document, a checkpoint or a trajectory
    (last frame)."""
    doc = read_json(path)
    if isinstance(doc, dict) and doc.get("kind") == "construct":
        _check_version(doc, "construct", DOCUMENT_VERSION, path)
        try:
            g = _grid_from(doc["grid"], path)
            _check_grid(g, grid, path)
            u0 = _array(doc["u0_re"], g.n, path, "u0_re") + 1j * _array(doc["u0_im"], g.n, path, "u0_im")
            return float(doc["b"]), g, u0
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"{path}: malformed construct document ({exc})") from exc
    ck = load_states(path, grid)
    return ck.b, ck.grid, ck.states[-1]


# ---------------------------------------------------------------------------
# CSV

def write_csv(path, rows, header=CSV_HEADER, comments=()):
    """``rows`` are sequences matching ``header``; floats get 17 digits.

    ``comments`` become leading ``#`` lines (resolved config, metadata).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, int, np.integer)) and not isinstance(v, bool) else fmt(v)
                        for v in row])


def read_csv(path):
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [row for row in reader]
