"""Linearization at trim points, modal analysis and operating-point sweeps."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import PenstockMode, PlantParams
from .plant import Plant, PlantInputs, TrimError, TrimResult, assemble, trim

SCHEMA_VERSION = 1
INPUT_NAMES = ("P_star", "omega_star")
CONDITION_LIMIT = 1e10

P_GRID = tuple(round(0.3 + 0.1 * i, 10) for i in range(7))
W_GRID = tuple(round(0.90 + 0.05 * i, 10) for i in range(5))

# state groups used to name modes
GROUPS = {
    "governor": ("omega", "gov_int", "gov_dfilt", "g"),
    "surge": ("h_st", "q_hr"),
    "turbine": ("q_t", "q", "x"),
    "converter": ("P_g",),
}


def state_group(label: str) -> str:
    if label.startswith("pen"):
        return "penstock"
    for name, members in GROUPS.items():
        if label in members:
            return name
    return "other"


class LinearizationError(ValueError):
    pass


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    labels: tuple[str, ...]
    x0: np.ndarray
    inputs: PlantInputs
    input_names: tuple[str, ...] = INPUT_NAMES
    output_names: tuple[str, ...] = K.OUTPUT_NAMES

    def submatrix(self, states):
        idx = [self.labels.index(s) for s in states]
        return self.A[np.ix_(idx, idx)]


def _inputs_plus(inputs: PlantInputs, j: int, delta: float) -> PlantInputs:
    vals = [inputs.P_star, inputs.omega_star]
    vals[j] += delta
    return PlantInputs(*vals)


def linearize(plant: Plant, state, inputs: PlantInputs, *, rel_step=1e-6,
              abs_step=1e-6, check=True) -> LinearModel:
    """A, B (inputs P*, w*) and output matrices C, D by central differences.

    The step for coordinate i is ``max(abs_step, rel_step*|x_i|)``.
    """
    if plant.uses_delay:
        raise LinearizationError(
            "the travelling-wave penstock has no finite-order linearization; "
            "use the lumped or inelastic penstock mode")
    x0 = np.array(state, dtype=float)
    nx = plant.nx
    f0, y0 = plant.evaluate(x0, inputs)
    if check:
        res = float(np.max(np.abs(f0)))
        if res >= 1e-8:
            raise LinearizationError(f"state is not a trim point (residual {res:.3e})")
        gov = plant.params.governor
        g = x0[plant.index["g"]]
        if not gov.g_min < g < gov.g_max:
            raise LinearizationError(f"governor limit active at trim (g = {g:.6g})")
    A = np.empty((nx, nx))
    C = np.empty((K.NOUT, nx))
    for j in range(nx):
        h = max(abs_step, rel_step * abs(x0[j]))
        xp = x0.copy()
        xm = x0.copy()
        xp[j] += h
        xm[j] -= h
        fp, yp = plant.evaluate(xp, inputs)
        fm, ym = plant.evaluate(xm, inputs)
        A[:, j] = (fp - fm) / (2 * h)
        C[:, j] = (yp - ym) / (2 * h)
    B = np.empty((nx, 2))
    D = np.empty((K.NOUT, 2))
    u0 = (inputs.P_star, inputs.omega_star)
    for j in range(2):
        h = max(abs_step, rel_step * abs(u0[j]))
        lo = -h if j == 1 or u0[0] - h >= 0 else 0.0
        fp, yp = plant.evaluate(x0, _inputs_plus(inputs, j, h))
        fm, ym = plant.evaluate(x0, _inputs_plus(inputs, j, lo))
        B[:, j] = (fp - fm) / (h - lo)
        D[:, j] = (yp - ym) / (h - lo)
    if not np.all(np.isfinite(A)):
        raise LinearizationError("non-finite entries in the state matrix")
    for arr in (A, B, C, D, x0):
        arr.setflags(write=False)
    return LinearModel(A=A, B=B, C=C, D=D, labels=plant.labels, x0=x0, inputs=inputs)


def linearize_trim(tr: TrimResult, **kw) -> LinearModel:
    return linearize(tr.plant, tr.state, tr.inputs, **kw)


# --- modal analysis ---------------------------------------------------------

@dataclass(frozen=True)
class ModalReport:
    eigenvalues: np.ndarray
    frequency: np.ndarray
    damping: np.ndarray
    participation: np.ndarray  # states x modes
    labels: tuple[str, ...]
    ill_conditioned: np.ndarray
    normalization: str = "max"
    metadata: dict = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    def dominant(self, k: int) -> str:
        col = self.participation[:, k]
        if not np.all(np.isfinite(col)):
            return ""
        return self.labels[int(np.argmax(col))]

    def group_share(self, k: int, group) -> float:
        members = [i for i, n in enumerate(self.labels) if state_group(n) == group]
        col = self.participation[:, k]
        total = float(np.sum(col))
        return float(np.sum(col[members]) / total) if total > 0 else float("nan")

    def find_mode(self, group: str):
        """Index of the oscillatory mode (Im > 0 member) most associated with a state group.

        Candidates are modes whose dominant state is in the group; among them
        the one with the largest share of participation in the group wins.
        Returns None when no such mode exists.
        """
        best, best_share = None, -1.0
        for k, lam in enumerate(self.eigenvalues):
            if lam.imag <= 0 or state_group(self.dominant(k)) != group:
                continue
            share = self.group_share(k, group)
            if share > best_share:
                best, best_share = k, share
        return best

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "conventions": {
                "participation": f"|right_ki * left_ik|, per-mode {self.normalization}-normalized",
                "frequency": "|Im(lambda)| / (2 pi) [Hz]",
                "damping": "-Re(lambda) / |lambda|",
            },
            **self.metadata,
            "states": list(self.labels),
            "modes": [
                {
                    "index": k,
                    "real": float(lam.real),
                    "imag": float(lam.imag),
                    "frequency_hz": float(self.frequency[k]),
                    "damping": _json_float(self.damping[k]),
                    "dominant_state": self.dominant(k),
                    "group": state_group(self.dominant(k)) if self.dominant(k) else "",
                    "ill_conditioned": bool(self.ill_conditioned[k]),
                }
                for k, lam in enumerate(self.eigenvalues)
            ],
            "participation": [[_json_float(v) for v in row] for row in self.participation],
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _order(lam: np.ndarray) -> np.ndarray:
    # conjugates adjacent (positive imaginary part first), slow modes first
    return np.array(sorted(range(len(lam)), key=lambda k: (
        round(abs(lam[k].imag), 9), round(lam[k].real, 9), -lam[k].imag)))


def modes(A, labels, normalization: str = "max", metadata: dict | None = None) -> ModalReport:
    """Eigenvalues, frequency, damping and participation factors of A."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if not np.all(np.isfinite(A)):
        raise ValueError("A must be finite")
    if normalization not in ("max", "sum"):
        raise ValueError("normalization must be 'max' or 'sum'")
    lam, V = np.linalg.eig(A)
    order = _order(lam)
    lam, V = lam[order], V[:, order]
    # exact conjugate symmetry for the pairs numpy returns
    for k in range(len(lam) - 1):
        if lam[k].imag > 0 and abs(lam[k + 1] - np.conj(lam[k])) < 1e-8 * max(1.0, abs(lam[k])):
            lam[k + 1] = np.conj(lam[k])
    try:
        W = np.linalg.inv(V)
        cond = np.linalg.norm(W, axis=1) * np.linalg.norm(V, axis=0)
    except np.linalg.LinAlgError:
        W = np.full_like(V, np.nan)
        cond = np.full(len(lam), np.inf)
    bad = ~(cond <= CONDITION_LIMIT)
    Pf = np.abs(V * W.T)
    scale = Pf.max(axis=0) if normalization == "max" else Pf.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        Pf = Pf / scale
    Pf[:, bad] = np.nan
    mag = np.abs(lam)
    with np.errstate(invalid="ignore", divide="ignore"):
        zeta = np.where(mag > 0, -lam.real / mag, np.nan)
    return ModalReport(
        eigenvalues=lam, frequency=np.abs(lam.imag) / (2 * np.pi), damping=zeta,
        participation=Pf, labels=tuple(labels), ill_conditioned=bad,
        normalization=normalization, metadata=dict(metadata or {}))


def modal_report(tr: TrimResult, normalization: str = "max") -> ModalReport:
    lin = linearize_trim(tr)
    p = tr.plant.params
    meta = {
        "model": tr.plant.kind.value,
        "P_star": tr.inputs.P_star,
        "omega_star": tr.inputs.omega_star,
        "penstock_mode": p.penstock_mode.value,
        "tanh_order": list(p.tanh_order),
        "T_a": p.turbine.T_a,
        "rotor_law": p.turbine.rotor_law,
        "params_sha256": p.digest(),
    }
    return modes(lin.A, lin.labels, normalization, meta)


# --- sweeps -------------------------------------------------------------------

SWEEP_COLUMNS = ("point", "P_star", "omega_star", "mode", "real", "imag",
                 "frequency_hz", "damping", "dominant_state", "group",
                 "governor_mode", "surge_mode", "status")


@dataclass
class SweepResult:
    kind: str
    points: list[tuple[float, float]]
    reports: list[ModalReport | None]
    errors: list[str | None]
    metadata: dict = field(default_factory=dict)

    def governor_damping(self) -> np.ndarray:
        return np.array([_mode_damping(r, "governor") for r in self.reports])

    def governor_frequency(self) -> np.ndarray:
        return np.array([_mode_freq(r, "governor") for r in self.reports])

    def rows(self):
        for i, ((P, w), rep, err) in enumerate(zip(self.points, self.reports, self.errors)):
            if rep is None:
                yield dict(point=i, P_star=P, omega_star=w, mode="", real="", imag="",
                           frequency_hz="", damping="", dominant_state="", group="",
                           governor_mode="", surge_mode="", status=err)
                continue
            kg, ks = rep.find_mode("governor"), rep.find_mode("surge")
            for k, lam in enumerate(rep.eigenvalues):
                dom = rep.dominant(k)
                gov = kg is not None and (k == kg or lam == np.conj(rep.eigenvalues[kg]))
                surge = ks is not None and (k == ks or lam == np.conj(rep.eigenvalues[ks]))
                yield dict(point=i, P_star=P, omega_star=w, mode=k,
                           real=repr(float(lam.real)), imag=repr(float(lam.imag)),
                           frequency_hz=repr(float(rep.frequency[k])),
                           damping=repr(float(rep.damping[k])),
                           dominant_state=dom, group=state_group(dom) if dom else "",
                           governor_mode=int(gov), surge_mode=int(surge), status="ok")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            for key, value in self.metadata.items():
                fh.write(f"# {key}: {json.dumps(value)}\n")
            writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            writer.writeheader()
            writer.writerows(self.rows())


def _mode_damping(rep, group):
    if rep is None:
        return float("nan")
    k = rep.find_mode(group)
    return float("nan") if k is None else float(rep.damping[k])


def _mode_freq(rep, group):
    if rep is None:
        return float("nan")
    k = rep.find_mode(group)
    return float("nan") if k is None else float(rep.frequency[k])


def sweep_grid(name: str) -> list[tuple[float, float]]:
    if name == "pstar":
        return [(P, 1.0) for P in P_GRID]
    if name == "wstar":
        return [(0.6, w) for w in W_GRID]
    raise ValueError(f"unknown grid {name!r}; expected 'pstar' or 'wstar'")


def sweep(kind, params: PlantParams, grid, normalization: str = "max") -> SweepResult:
    """Modal reports over a grid of (P*, w*); failing points are recorded, not fatal."""
    if isinstance(grid, str):
        grid_name, points = grid, sweep_grid(grid)
    else:
        grid_name, points = "custom", [tuple(map(float, p)) for p in grid]
    if params.penstock_mode is PenstockMode.DELAY:
        raise LinearizationError("sweeps need the lumped or inelastic penstock mode")
    plant = assemble(kind, params)
    reports, errors = [], []
    for P, w in points:
        try:
            reports.append(modal_report(trim(plant, P, w), normalization))
            errors.append(None)
        except (TrimError, LinearizationError, ValueError) as exc:
            reports.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")
    meta = {
        "schema_version": SCHEMA_VERSION,
        "model": plant.kind.value,
        "grid": grid_name,
        "points": [list(p) for p in points],
        "penstock_mode": params.penstock_mode.value,
        "tanh_order": list(params.tanh_order),
        "T_a": params.turbine.T_a,
        "rotor_law": params.turbine.rotor_law,
        "participation": f"per-mode {normalization}-normalized",
        "params_sha256": params.digest(),
    }
    return SweepResult(kind=plant.kind.value, points=points, reports=reports,
                       errors=errors, metadata=meta)
