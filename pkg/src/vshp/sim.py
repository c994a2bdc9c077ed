"""Fixed-step RK4 simulation of timed setpoint scenarios.

Scenario files are ``key = value`` header lines followed by event lines::

    model = euler
    t_end = 200
    dt = 0.001
    P_star = 0.9
    omega_star = 1.0
    t=5.0 set P_star 0.3
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernels as K
from .core import PenstockMode, PlantParams
from .plant import Plant, PlantInputs, TrimResult, assemble, trim
from .turbines import ModelKind, raise_for_code
from .waterway import DelayLine

INPUT_NAMES = ("P_star", "omega_star")
SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    pass


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Event:
    t: float
    input: str
    value: float

    def __post_init__(self):
        if self.input not in INPUT_NAMES:
            raise ScenarioError(f"unknown input {self.input!r}; expected P_star or omega_star")


@dataclass(frozen=True)
class Scenario:
    model: ModelKind
    t_end: float
    dt: float = 1e-3
    P_star: float = 0.6
    omega_star: float = 1.0
    events: tuple[Event, ...] = ()
    penstock_mode: PenstockMode | None = None
    record_every: int = 1
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind.parse(self.model))
        if self.penstock_mode is not None:
            object.__setattr__(self, "penstock_mode", PenstockMode.parse(self.penstock_mode))
        if not self.dt > 0:
            raise ScenarioError("dt must be > 0")
        if not self.t_end > 0:
            raise ScenarioError("t_end must be > 0")
        if self.record_every < 1:
            raise ScenarioError("record_every must be >= 1")
        times = [e.t for e in self.events]
        if times != sorted(times):
            raise ScenarioError("events must be sorted by time")
        for e in self.events:
            if not 0 <= e.t <= self.t_end:
                raise ScenarioError(f"event time {e.t} outside [0, {self.t_end}]")
            _grid_index(e.t, self.dt)
        _grid_index(self.t_end, self.dt)

    @property
    def n_steps(self) -> int:
        return _grid_index(self.t_end, self.dt)


def _grid_index(t: float, dt: float) -> int:
    k = round(t / dt)
    if abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ScenarioError(f"time {t} is not on the dt = {dt} grid")
    return int(k)


_EVENT_RE = re.compile(r"^t\s*=\s*(\S+)\s+set\s+(\w+)\s+(\S+)$")
_HEADER_KEYS = {"model", "t_end", "dt", "P_star", "omega_star", "penstock_mode",
                "record_every", "name"}


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    header: dict[str, str] = {}
    events = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = _EVENT_RE.match(line)
        if m:
            try:
                events.append(Event(float(m.group(1)), m.group(2), float(m.group(3))))
            except ValueError as exc:
                raise ScenarioError(f"{source}:{lineno}: {exc}") from None
            continue
        if "=" not in line:
            raise ScenarioError(f"{source}:{lineno}: cannot parse {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _HEADER_KEYS:
            raise ScenarioError(f"{source}:{lineno}: unknown key {key!r}")
        header[key] = value
    if "model" not in header or "t_end" not in header:
        raise ScenarioError(f"{source}: scenario needs 'model' and 't_end'")
    try:
        kw = dict(
            model=header["model"],
            t_end=float(header["t_end"]),
            events=tuple(events),
            name=header.get("name", Path(source).stem),
        )
        for key in ("dt", "P_star", "omega_star"):
            if key in header:
                kw[key] = float(header[key])
        if "record_every" in header:
            kw["record_every"] = int(header["record_every"])
        if "penstock_mode" in header:
            kw["penstock_mode"] = header["penstock_mode"]
        return Scenario(**kw)
    except ValueError as exc:
        raise ScenarioError(f"{source}: {exc}") from None


def load_scenario(path) -> Scenario:
    """Read a scenario file; a bare name not found locally falls back to the bundled set."""
    path = Path(path)
    if not path.is_file() and path.parent == Path("."):
        shipped = resources.files("vshp.data").joinpath(path.name)
        if shipped.is_file():
            return parse_scenario(shipped.read_text(), source=path.name)
    return parse_scenario(path.read_text(), source=str(path))


# --- trace ------------------------------------------------------------------

@dataclass
class SimTrace:
    t: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    labels: tuple[str, ...]
    events: list[dict]
    metadata: dict = field(default_factory=dict)
    error: str | None = None

    output_names = K.OUTPUT_NAMES

    @property
    def ok(self) -> bool:
        return self.error is None

    def raise_for_status(self) -> None:
        if self.error is not None:
            raise SimulationError(self.error)

    def column(self, name: str) -> np.ndarray:
        if name == "t":
            return self.t
        if name in self.labels:
            return self.states[:, self.labels.index(name)]
        if name in self.output_names:
            return self.outputs[:, self.output_names.index(name)]
        raise KeyError(name)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.column(name)

    def columns(self) -> list[str]:
        """CSV column order: t, states, then outputs not already among the states."""
        outs = [n for n in self.output_names if n not in self.labels]
        return ["t", *self.labels, *outs]

    def to_csv(self, path) -> None:
        cols = self.columns()
        data = np.column_stack([self.column(c) for c in cols])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in data:
                writer.writerow([repr(float(v)) for v in row])

    def events_json(self, path) -> None:
        Path(path).write_text(json.dumps(
            {"schema_version": SCHEMA_VERSION, "events": self.events}, indent=2) + "\n")


# --- integration ------------------------------------------------------------

def rk4_step(f, x, t, dt):
    """One classical Runge-Kutta step of dx/dt = f(t, x)."""
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_step(plant: Plant, state, inputs: PlantInputs, dt: float, *,
                   g_cmd_prev=None, t: float = 0.0, history: DelayLine | None = None):
    """One RK4 step of the plant; returns ``(next_state, g_cmd)``.

    In travelling-wave mode ``history`` supplies the delayed wave at each
    stage time and receives the new sample at t + dt.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    x = np.asarray(state, dtype=float)
    gprev = x[plant.index["g"]] if g_cmd_prev is None else g_cmd_prev
    delay = 2.0 * plant.params.waterway.T_e
    if plant.uses_delay and history is None:
        raise ValueError("travelling-wave penstock needs a delay-line history")

    def y_at(tt):
        return history.value_at(tt - delay) if plant.uses_delay else float("nan")

    def f(tt, xx):
        return plant.derivatives(xx, inputs, g_cmd_prev=gprev, tau=tt - t,
                                 limited=True, y_delay=y_at(tt))

    xn = rk4_step(f, x, t, dt)
    _, out = plant.evaluate(xn, inputs, g_cmd_prev=gprev, tau=dt, limited=True,
                            y_delay=y_at(t + dt))
    if plant.uses_delay:
        history.push(t + dt, out[K.O_WAVE])
    return xn, float(out[K.O_GCMD])


def _input_arrays(scenario: Scenario):
    n = scenario.n_steps
    Ps = np.full(n, scenario.P_star)
    ws = np.full(n, scenario.omega_star)
    applied = []
    for e in scenario.events:
        k = _grid_index(e.t, scenario.dt)
        arr = Ps if e.input == "P_star" else ws
        arr[k:] = e.value
        PlantInputs(float(Ps[min(k, n - 1)]), float(ws[min(k, n - 1)]))
        applied.append({"t": k * scenario.dt, "step": k, "input": e.input, "value": e.value})
    return Ps, ws, applied


def run(scenario: Scenario, params: PlantParams, *, initial: TrimResult | None = None) -> SimTrace:
    """Trim at the initial setpoints, then integrate the scenario.

    A numerical failure mid-run does not raise: the returned trace holds the
    prefix up to the last good record and ``trace.error`` explains the stop.
    """
    if scenario.penstock_mode is not None:
        params = params.replace(**{"plant.penstock_mode": scenario.penstock_mode.value})
    plant = assemble(scenario.model, params)
    tr = initial or trim(plant, scenario.P_star, scenario.omega_star)
    dt = scenario.dt
    Ps, ws, applied = _input_arrays(scenario)
    n = len(Ps)

    if plant.uses_delay:
        span = 2.0 * params.waterway.T_e
        if dt > span:
            raise ScenarioError(f"dt = {dt} exceeds the penstock round-trip time {span:.4g} s")
        n_pre = int(math.ceil(span / dt)) + 2
        hist = np.empty(n_pre + n + 1)
        hist[: n_pre + 1] = tr.outputs["wave"]  # warm-up at the trim value
    else:
        n_pre = 0
        hist = np.zeros(1)

    every = scenario.record_every
    nrec = n // every + 1
    X = np.full((nrec, plant.nx), np.nan)
    Y = np.full((nrec, K.NOUT), np.nan)
    x0 = np.array(tr.state, dtype=float)
    code, k_fail, rows = K.integrate(x0, float(x0[plant.index["g"]]), Ps, ws, dt, every,
                                     plant.P, plant.L, plant.Ap, plant.Bp, plant.Cp,
                                     hist, n_pre, X, Y)
    error = None
    if code != K.OK:
        try:
            raise_for_code(code)
        except Exception as exc:  # message only; the trace is still returned
            error = f"integration stopped at t = {k_fail * dt:.6g} s: {exc}"
    t = np.arange(rows) * every * dt
    meta = {
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario.name,
        "model": plant.kind.value,
        "penstock_mode": params.penstock_mode.value,
        "tanh_order": list(params.tanh_order),
        "dt": dt,
        "t_end": scenario.t_end,
        "record_every": every,
        "T_a": params.turbine.T_a,
        "rotor_law": params.turbine.rotor_law,
        "params_sha256": params.digest(),
        "trim": {"P_star": scenario.P_star, "omega_star": scenario.omega_star,
                 "residual": tr.residual},
    }
    return SimTrace(t=t, states=X[:rows], outputs=Y[:rows], labels=plant.labels,
                    events=applied, metadata=meta, error=error)


def with_dt(scenario: Scenario, dt: float, record_every: int | None = None) -> Scenario:
    return replace(scenario, dt=dt, record_every=record_every or scenario.record_every)
