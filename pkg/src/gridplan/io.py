"""Text serialization of model arrays and trajectory CSV files.

Model files start with a header line

    gridplan-model v1 kind=<kind> nd=<int> na=<int> nt=<int>

followed by one whitespace-separated row per line, with planes separated by a
blank line. Floats are written with ``repr`` so a save/load cycle is exact.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from gridplan.grid import (
    Trajectory,
    check_belief,
    check_observation,
    check_policy,
    check_transition,
    InvariantError,
)

MAGIC = "gridplan-model"
VERSION = "v1"
KINDS = ("transition", "reward", "observation", "value", "q", "belief", "policy")
PLANE_KINDS = ("transition", "reward", "q")  # stored as (na, side, side)

PathLike = Union[str, Path]


class ModelFormatError(ValueError):
    """Malformed model or trajectory file; the message names the offending line."""


@dataclass
class ModelFile:
    kind: str
    nd: int
    na: int
    nt: int
    data: np.ndarray


def _header_dims(kind: str, data: np.ndarray, nd: int, na: int, nt: int):
    if kind in PLANE_KINDS:
        if data.ndim != 3:
            raise ValueError(f"{kind} data must be 3-D, got shape {data.shape}")
        na = data.shape[0]
        if kind == "transition":
            nt = data.shape[1]
        else:
            nd = data.shape[1]
    else:
        if data.ndim != 2:
            raise ValueError(f"{kind} data must be 2-D, got shape {data.shape}")
        if kind == "observation":
            nt = data.shape[0]
        else:
            nd = data.shape[0]
    return nd, na, nt


def format_model(kind: str, data, nd: int = 0, na: int = 0, nt: int = 0) -> str:
    """Render an array as model-file text; header fields not fixed by the shape come from the arguments."""
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    data = np.asarray(data)
    nd, na, nt = _header_dims(kind, data, nd, na, nt)
    fmt = (lambda x: str(int(x))) if kind == "policy" else (lambda x: repr(float(x)))
    planes = data if data.ndim == 3 else data[None]
    blocks = ["\n".join(" ".join(fmt(x) for x in row) for row in plane) for plane in planes]
    return f"{MAGIC} {VERSION} kind={kind} nd={nd} na={na} nt={nt}\n" + "\n\n".join(blocks) + "\n"


def save_model(path: PathLike, kind: str, data, nd: int = 0, na: int = 0, nt: int = 0) -> None:
    Path(path).write_text(format_model(kind, data, nd, na, nt))


def _parse_header(line: str, source: str) -> dict:
    parts = line.split()
    if len(parts) != 6 or parts[0] != MAGIC:
        raise ModelFormatError(f"{source}:1: expected '{MAGIC} {VERSION} kind=... nd=... na=... nt=...'")
    if parts[1] != VERSION:
        raise ModelFormatError(f"{source}:1: unsupported version {parts[1]!r}")
    fields = {}
    for part, key in zip(parts[2:], ("kind", "nd", "na", "nt")):
        name, sep, value = part.partition("=")
        if name != key or not sep:
            raise ModelFormatError(f"{source}:1: expected field {key}=..., got {part!r}")
        fields[key] = value
    if fields["kind"] not in KINDS:
        raise ModelFormatError(f"{source}:1: unknown kind {fields['kind']!r}")
    for key in ("nd", "na", "nt"):
        try:
            fields[key] = int(fields[key])
        except ValueError:
            raise ModelFormatError(f"{source}:1: {key} must be an integer, got {fields[key]!r}") from None
    return fields


def parse_model(text: str, source: str = "<model>") -> ModelFile:
    """Parse model text, checking layout against the header and the kind's invariants.

    Layout problems raise :class:`ModelFormatError`; value problems (e.g. a
    filter that does not sum to one) raise :class:`InvariantError`.
    """
    lines = text.splitlines()
    if not lines:
        raise ModelFormatError(f"{source}:1: empty file")
    head = _parse_header(lines[0], source)
    kind = head["kind"]
    is_int = kind == "policy"

    planes: List[List[list]] = [[]]
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            if planes[-1]:
                planes.append([])
            continue
        try:
            row = [int(tok) if is_int else float(tok) for tok in line.split()]
        except ValueError:
            raise ModelFormatError(f"{source}:{lineno}: non-numeric value in {line.strip()!r}") from None
        if planes[-1] and len(row) != len(planes[-1][0][1]):
            raise ModelFormatError(
                f"{source}:{lineno}: expected {len(planes[-1][0][1])} values, got {len(row)}"
            )
        planes[-1].append((lineno, row))
    if not planes[-1]:
        planes.pop()
    if not planes:
        raise ModelFormatError(f"{source}:2: no data after the header")

    if kind in PLANE_KINDS:
        side = head["nt"] if kind == "transition" else head["nd"]
        n_planes = head["na"]
    else:
        side = head["nt"] if kind == "observation" else head["nd"]
        n_planes = 1
    if len(planes) != n_planes:
        last = planes[-1][-1][0]
        raise ModelFormatError(f"{source}:{last}: expected {n_planes} blocks, found {len(planes)}")
    for block in planes:
        if len(block) != side or len(block[0][1]) != side:
            lineno = block[min(len(block), side) - 1][0]
            raise ModelFormatError(
                f"{source}:{lineno}: block starting at line {block[0][0]} is "
                f"{len(block)}x{len(block[0][1])}, expected {side}x{side}"
            )
    data = np.array([[row for _, row in block] for block in planes], dtype=np.int64 if is_int else float)
    if n_planes == 1:
        data = data[0]

    try:
        if kind == "transition":
            check_transition(data)
        elif kind == "observation":
            check_observation(data)
        elif kind == "belief":
            check_belief(data)
        elif kind == "policy":
            if head["na"] < 1:
                raise InvariantError("policy file needs na >= 1")
            check_policy(data, head["na"])
        elif not np.all(np.isfinite(data)):
            raise InvariantError(f"{kind} values must be finite")
    except InvariantError as exc:
        raise InvariantError(f"{source}: {exc}") from None
    return ModelFile(kind, head["nd"], head["na"], head["nt"], data)


def load_model(path: PathLike, expect: str = None) -> ModelFile:
    path = Path(path)
    model = parse_model(path.read_text(), str(path))
    if expect is not None and model.kind != expect:
        raise ModelFormatError(f"{path}:1: expected kind={expect}, found kind={model.kind}")
    return model


# -- trajectories ----------------------------------------------------------------

TRAJECTORY_FIELDS = ["t", "action", "obs_i", "obs_j"]


def format_trajectories(trajectories: Sequence[Trajectory]) -> str:
    """CSV text; ``t`` restarts at 0 at the start of each trajectory."""
    with_expert = any(tr.has_expert for tr in trajectories)
    if with_expert and not all(tr.has_expert for tr in trajectories):
        raise ValueError("either every trajectory carries expert actions or none does")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_FIELDS + (["expert_action"] if with_expert else []))
    for tr in trajectories:
        for t in range(len(tr)):
            row = [t, int(tr.actions[t]), int(tr.observations[t, 0]), int(tr.observations[t, 1])]
            if with_expert:
                row.append(int(tr.expert_actions[t]))
            writer.writerow(row)
    return buf.getvalue()


def save_trajectories(path: PathLike, trajectories: Sequence[Trajectory]) -> None:
    Path(path).write_text(format_trajectories(trajectories))


def parse_trajectories(text: str, source: str = "<trajectories>") -> List[Trajectory]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise ModelFormatError(f"{source}:1: empty file")
    if header not in (TRAJECTORY_FIELDS, TRAJECTORY_FIELDS + ["expert_action"]):
        raise ModelFormatError(f"{source}:1: unexpected header {','.join(header)!r}")
    width = len(header)
    out, rows = [], []

    def flush():
        if rows:
            arr = np.array(rows, dtype=np.int64)
            out.append(Trajectory(arr[:, 1], arr[:, 2:4], arr[:, 4] if width == 5 else None))
            rows.clear()

    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != width:
            raise ModelFormatError(f"{source}:{lineno}: expected {width} fields, got {len(rec)}")
        try:
            vals = [int(x) for x in rec]
        except ValueError:
            raise ModelFormatError(f"{source}:{lineno}: non-integer field in {','.join(rec)!r}") from None
        if vals[0] == 0:
            flush()
        elif not rows or vals[0] != len(rows):
            raise ModelFormatError(f"{source}:{lineno}: step index {vals[0]} out of sequence")
        rows.append(vals)
    flush()
    if not out:
        raise ModelFormatError(f"{source}:2: no trajectory records")
    return out


def load_trajectories(path: PathLike) -> List[Trajectory]:
    path = Path(path)
    return parse_trajectories(path.read_text(), str(path))
