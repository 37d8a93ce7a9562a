"""Domain types: panels of decision-making units, technologies, cost weights,
big-M configuration, and max-normalization with exact inversion.

A panel holds K+1 observed DMUs, each consuming I inputs to produce O
outputs.  Rows with any zero input are removed at construction time (zero
outputs are fine).  Panels are immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum

import numpy as np


class PanelError(ValueError):
    """Raised for malformed panel data."""


class Technology(Enum):
    CRS = "crs"
    VRS = "vrs"


class Orientation(Enum):
    INPUT = "input"
    OUTPUT = "output"


@dataclass(frozen=True)
class Panel:
    """Immutable set of observed DMUs spanning the technology."""

    dmu_ids: tuple[str, ...]
    inputs: np.ndarray
    outputs: np.ndarray
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        k = len(self.dmu_ids)
        if k == 0:
            raise PanelError("panel has no DMUs")
        if inputs.shape[0] != k or outputs.shape[0] != k:
            raise PanelError("row count mismatch between ids and data")
        if inputs.shape[1] != len(self.input_names):
            raise PanelError("input name count mismatch")
        if outputs.shape[1] != len(self.output_names):
            raise PanelError("output name count mismatch")
        if len(set(self.dmu_ids)) != k:
            raise PanelError("duplicate DMU ids")
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(outputs))):
            raise PanelError("non-finite value in panel data")
        if np.any(inputs <= 0):
            raise PanelError("inputs must be strictly positive after cleaning")
        if np.any(outputs < 0):
            raise PanelError("outputs must be nonnegative")
        inputs.flags.writeable = False
        outputs.flags.writeable = False

    @property
    def n_dmus(self) -> int:
        return len(self.dmu_ids)

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.outputs.shape[1]

    def index_of(self, dmu_id: str) -> int:
        try:
            return self.dmu_ids.index(dmu_id)
        except ValueError:
            raise KeyError(f"unknown DMU id {dmu_id!r}") from None

    def with_data(self, inputs: np.ndarray, outputs: np.ndarray) -> "Panel":
        return Panel(self.dmu_ids, inputs, outputs, self.input_names, self.output_names)


def build_panel(raw_rows, n_inputs, n_outputs, input_names=None, output_names=None):
    """Construct a cleaned panel from ``(id, values)`` rows.

    ``values`` concatenates the inputs and outputs of one DMU.  Rows with any
    zero input are excluded; their ids are returned alongside the panel.

    Returns:
        (Panel, list of removed DMU ids)
    """
    rows = list(raw_rows)
    if not rows:
        raise PanelError("no rows supplied")
    if n_inputs < 1 or n_outputs < 1:
        raise PanelError("need at least one input and one output")
    input_names = tuple(input_names) if input_names else tuple(f"x{i + 1}" for i in range(n_inputs))
    output_names = tuple(output_names) if output_names else tuple(f"y{o + 1}" for o in range(n_outputs))

    ids: list[str] = []
    removed: list[str] = []
    xs: list[np.ndarray] = []
    ys: list[np.ndarray] = []
    seen = set()
    for rid, values in rows:
        rid = str(rid)
        vals = np.asarray(list(values), dtype=float)
        if vals.size != n_inputs + n_outputs:
            raise PanelError(f"row {rid!r} has {vals.size} values, expected {n_inputs + n_outputs}")
        if not np.all(np.isfinite(vals)):
            raise PanelError(f"row {rid!r} contains a non-finite value")
        if np.any(vals < 0):
            raise PanelError(f"row {rid!r} contains a negative value")
        if rid in seen:
            raise PanelError(f"duplicate DMU id {rid!r}")
        seen.add(rid)
        x, y = vals[:n_inputs], vals[n_inputs:]
        if np.any(x == 0):
            removed.append(rid)
            continue
        ids.append(rid)
        xs.append(x)
        ys.append(y)
    if not ids:
        raise PanelError("every row was removed by the zero-input rule")
    panel = Panel(tuple(ids), np.array(xs), np.array(ys), input_names, output_names)
    return panel, removed


def read_panel_csv(source) -> tuple[Panel, list[str]]:
    """Parse the ``id,in:<name>...,out:<name>...`` CSV schema.

    ``source`` is a path, file object, or CSV text.  Values must be plain
    decimal numbers (no thousands separators); non-finite entries error.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        s = str(source)
        if "\n" in s or "," in s:
            text = s
        else:
            with open(s, "r", encoding="utf-8") as fh:
                text = fh.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise PanelError("empty CSV") from None
    if not header or header[0].strip() != "id":
        raise PanelError("first CSV column must be 'id'")
    in_names: list[str] = []
    out_names: list[str] = []
    for col in header[1:]:
        col = col.strip()
        if col.startswith("in:"):
            if out_names:
                raise PanelError("input columns must precede output columns")
            in_names.append(col[3:])
        elif col.startswith("out:"):
            out_names.append(col[4:])
        else:
            raise PanelError(f"column {col!r} must be prefixed 'in:' or 'out:'")
    if not in_names or not out_names:
        raise PanelError("need at least one 'in:' and one 'out:' column")
    rows = []
    for line in reader:
        if not line or all(not c.strip() for c in line):
            continue
        if len(line) != 1 + len(in_names) + len(out_names):
            raise PanelError(f"row {line[0]!r} has {len(line) - 1} values, "
                             f"expected {len(in_names) + len(out_names)}")
        try:
            vals = [float(v) for v in line[1:]]
        except ValueError as exc:
            raise PanelError(f"row {line[0]!r}: {exc}") from None
        rows.append((line[0].strip(), vals))
    return build_panel(rows, len(in_names), len(out_names), in_names, out_names)


def write_panel_csv(panel: Panel) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id"] + [f"in:{n}" for n in panel.input_names]
               + [f"out:{n}" for n in panel.output_names])
    for i, rid in enumerate(panel.dmu_ids):
        w.writerow([rid] + [repr(float(v)) for v in panel.inputs[i]]
                   + [repr(float(v)) for v in panel.outputs[i]])
    return buf.getvalue()


@dataclass(frozen=True)
class CostWeights:
    """Weights of the change-count, absolute and squared deviation terms."""

    nu0: float = 0.0
    nu1: float = 0.0
    nu2: float = 1.0
    per_feature: np.ndarray | None = None

    def __post_init__(self):
        if min(self.nu0, self.nu1, self.nu2) < 0:
            raise ValueError("cost weights must be nonnegative")
        if max(self.nu0, self.nu1, self.nu2) <= 0:
            raise ValueError("at least one cost weight must be positive")
        if self.per_feature is not None:
            pf = np.asarray(self.per_feature, dtype=float)
            if np.any(pf <= 0):
                raise ValueError("per-feature weights must be strictly positive")
            object.__setattr__(self, "per_feature", pf)

    def feature_weights(self, n: int) -> np.ndarray:
        if self.per_feature is None:
            return np.ones(n)
        if self.per_feature.size != n:
            raise ValueError(f"per-feature weights have size {self.per_feature.size}, expected {n}")
        return self.per_feature


COST_PRESETS = {
    "l2": CostWeights(0.0, 0.0, 1.0),
    "l1": CostWeights(0.0, 1.0, 0.0),
    "l0": CostWeights(1.0, 0.0, 0.0),
    "l0+(l2)": CostWeights(1.0, 0.0, 1e-3),
    "l0+l2": CostWeights(1.0, 0.0, 1.0),
}


@dataclass(frozen=True)
class BigMConfig:
    """Big-M constants for the complementarity and change-indicator rows."""

    m_input: float = 1000.0
    m_output: float = 1000.0
    m_frontier: float = 1000.0
    m_zero: float = 1.0

    def __post_init__(self):
        if min(self.m_input, self.m_output, self.m_frontier, self.m_zero) <= 0:
            raise ValueError("big-M constants must be strictly positive")


@dataclass(frozen=True)
class NormalizationRecord:
    """Per-column scale factors for one side of the panel; inverting after
    applying reproduces the original values to ~1e-12 relative error."""

    side: Orientation
    factors: np.ndarray

    def apply_to_vector(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) / self.factors

    def invert_vector(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) * self.factors

    def invert_panel(self, panel: Panel) -> Panel:
        if self.side is Orientation.INPUT:
            return panel.with_data(panel.inputs * self.factors, panel.outputs)
        return panel.with_data(panel.inputs, panel.outputs * self.factors)


def normalize_max(panel: Panel, side: Orientation = Orientation.INPUT):
    """Divide each column of the chosen side by its maximum.

    Normalized values land in (0, 1] on the input side.  Efficiency scores
    are unaffected (the technology is invariant to per-column rescaling).

    Returns:
        (normalized Panel, NormalizationRecord)
    """
    if side is Orientation.INPUT:
        factors = panel.inputs.max(axis=0)
        norm = panel.with_data(panel.inputs / factors, panel.outputs)
    else:
        factors = panel.outputs.max(axis=0)
        if np.any(factors <= 0):
            raise PanelError("cannot normalize an all-zero output column")
        norm = panel.with_data(panel.inputs, panel.outputs / factors)
    return norm, NormalizationRecord(side, factors)
