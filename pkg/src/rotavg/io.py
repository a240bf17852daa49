"""File formats: g2o ingestion, native graph/rotation files, result output.

g2o ingestion consumes only the rotation part of EDGE_SE3:QUAT lines
(translations and information matrices are discarded; the problem is
unweighted); vertex ids are remapped to contiguous 1..n with the bijection
retained. 2D g2o content is rejected.

Native graph format (plain text, lossless to 1e-15 via 17 significant
digits):

    n <count>
    E <i> <j> <r11> <r12> <r13> <r21> <r22> <r23> <r31> <r32> <r33>

Rotation-stack files use the same header and `R <id> <9 entries>` lines.

Result output is either CSV with the fixed header
`epoch,objective,flips,seconds` or JSON lines (one record object, then one
object per epoch).
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import so3
from .errors import (
    MalformedLineError,
    NonUnitQuaternionError,
    NotARotationError,
)
from .graph import CameraGraph
from .solver import SolveReport

RESULT_CSV_HEADER = "epoch,objective,flips,seconds"


def _lines(stream):
    if isinstance(stream, str):
        return stream.splitlines()
    return stream


def _floats(tokens, line_no):
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise MalformedLineError(line_no, f"non-numeric token ({exc})") from exc


def _int(token, line_no):
    try:
        return int(token)
    except ValueError as exc:
        raise MalformedLineError(line_no, f"non-integer token {token!r}") from exc


@dataclass
class G2oParse:
    """Parsed g2o content: the graph plus ingestion bookkeeping.

    id_map maps contiguous 1..n ids back to the original vertex ids.
    """

    graph: CameraGraph
    id_map: dict
    unknown_lines: int
    duplicate_edges: int


def parse_g2o(stream) -> G2oParse:
    """Parse the rotation part of a g2o text stream.

    EDGE_SE3:QUAT lines become edges (quaternion converted to a rotation);
    VERTEX_SE3:QUAT lines are counted for n with their poses ignored;
    unknown line types are skipped and counted; duplicate edges between a
    pair keep the first occurrence and are counted.

    Raises:
        MalformedLineError: wrong token count, non-numeric tokens, or 2D
            g2o content (EDGE_SE2 / VERTEX_SE2), with the 1-based line.
        NonUnitQuaternionError: quaternion norm off unity by more than 1e-3
            (smaller deviations are renormalised).
    """
    vertex_ids = set()
    edges = []
    seen_pairs = set()
    unknown = 0
    duplicates = 0
    for line_no, raw in enumerate(_lines(stream), 1):
        tokens = raw.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        tag = tokens[0]
        if tag.startswith("EDGE_SE2") or tag.startswith("VERTEX_SE2"):
            raise MalformedLineError(line_no, f"2D g2o ({tag}) is not supported")
        if tag == "VERTEX_SE3:QUAT":
            if len(tokens) != 9:
                raise MalformedLineError(
                    line_no, f"VERTEX_SE3:QUAT expects 9 tokens, got {len(tokens)}"
                )
            vertex_ids.add(_int(tokens[1], line_no))
            _floats(tokens[2:], line_no)
        elif tag == "EDGE_SE3:QUAT":
            if len(tokens) != 30:
                raise MalformedLineError(
                    line_no, f"EDGE_SE3:QUAT expects 30 tokens, got {len(tokens)}"
                )
            i = _int(tokens[1], line_no)
            j = _int(tokens[2], line_no)
            values = _floats(tokens[3:], line_no)
            q = np.array(values[3:7])
            norm = float(np.linalg.norm(q))
            if abs(norm - 1.0) > 1e-3:
                raise NonUnitQuaternionError(
                    f"line {line_no}: quaternion norm {norm:.6f} deviates from 1 "
                    "by more than 1e-3"
                )
            pair = (min(i, j), max(i, j))
            if pair in seen_pairs:
                duplicates += 1
                continue
            seen_pairs.add(pair)
            edges.append((i, j, so3.quat_to_rotation(q)))
        else:
            unknown += 1
    for i, j, _ in edges:
        vertex_ids.add(i)
        vertex_ids.add(j)
    ordered = sorted(vertex_ids)
    to_new = {orig: new for new, orig in enumerate(ordered, 1)}
    graph = CameraGraph(
        len(ordered), [(to_new[i], to_new[j], R) for i, j, R in edges]
    )
    id_map = {new: orig for orig, new in to_new.items()}
    return G2oParse(
        graph=graph, id_map=id_map, unknown_lines=unknown, duplicate_edges=duplicates
    )


def write_native(g: CameraGraph, stream) -> None:
    """Write a camera graph in the native plain-text format."""
    stream.write(f"n {g.n}\n")
    for i, j, R in g.edges():
        entries = " ".join(f"{x:.17g}" for x in R.ravel())
        stream.write(f"E {i} {j} {entries}\n")


def parse_native(stream) -> CameraGraph:
    """Parse the native graph format; round-trips write_native to 1e-15.

    Raises:
        MalformedLineError: structural problems, with the 1-based line.
        NotARotationError: a parsed block violates the rotation invariants.
    """
    n = None
    edges = []
    for line_no, raw in enumerate(_lines(stream), 1):
        tokens = raw.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        if n is None:
            if tokens[0] != "n" or len(tokens) != 2:
                raise MalformedLineError(line_no, "expected header 'n <count>'")
            n = _int(tokens[1], line_no)
            continue
        if tokens[0] != "E":
            raise MalformedLineError(line_no, f"expected an E line, got {tokens[0]!r}")
        if len(tokens) != 12:
            raise MalformedLineError(line_no, f"E line expects 12 tokens, got {len(tokens)}")
        i = _int(tokens[1], line_no)
        j = _int(tokens[2], line_no)
        R = np.array(_floats(tokens[3:], line_no)).reshape(3, 3)
        if not so3.is_rotation(R):
            raise NotARotationError(i, j, f"line {line_no}")
        edges.append((i, j, R))
    if n is None:
        raise MalformedLineError(1, "missing header 'n <count>'")
    return CameraGraph(n, edges)


def write_rotations(R: np.ndarray, stream) -> None:
    """Write an (n, 3, 3) rotation stack, one `R <id> <9 entries>` line each."""
    R = np.asarray(R, float)
    stream.write(f"n {R.shape[0]}\n")
    for idx in range(R.shape[0]):
        entries = " ".join(f"{x:.17g}" for x in R[idx].ravel())
        stream.write(f"R {idx + 1} {entries}\n")


def parse_rotations(stream) -> np.ndarray:
    """Parse a rotation-stack file back into an (n, 3, 3) array.

    Raises MalformedLineError / NotARotationError like parse_native.
    """
    n = None
    out = None
    filled = None
    for line_no, raw in enumerate(_lines(stream), 1):
        tokens = raw.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        if n is None:
            if tokens[0] != "n" or len(tokens) != 2:
                raise MalformedLineError(line_no, "expected header 'n <count>'")
            n = _int(tokens[1], line_no)
            out = np.zeros((n, 3, 3))
            filled = np.zeros(n, dtype=bool)
            continue
        if tokens[0] != "R" or len(tokens) != 11:
            raise MalformedLineError(line_no, "expected 'R <id> <9 entries>'")
        idx = _int(tokens[1], line_no)
        if not 1 <= idx <= n:
            raise MalformedLineError(line_no, f"camera id {idx} outside 1..{n}")
        R = np.array(_floats(tokens[2:], line_no)).reshape(3, 3)
        if not so3.is_rotation(R):
            raise NotARotationError(idx, idx, f"line {line_no}")
        out[idx - 1] = R
        filled[idx - 1] = True
    if n is None:
        raise MalformedLineError(1, "missing header 'n <count>'")
    if not np.all(filled):
        missing = int(np.flatnonzero(~filled)[0]) + 1
        raise MalformedLineError(0, f"camera {missing} has no rotation line")
    return out


def _trace_rows(report: SolveReport):
    flips = [0] + list(report.flips_per_epoch)
    for e, f in enumerate(report.objective_trace):
        yield e, f, flips[e] if e < len(flips) else 0, report.epoch_seconds[e]


def write_results(report: SolveReport, stream, format: str = "csv", id_map=None) -> None:
    """Serialise a solve report.

    csv: the fixed `epoch,objective,flips,seconds` table (row 0 is the
    initial iterate). jsonl: one record object carrying the solver name,
    config echo, per-camera unit quaternions (and the original vertex ids
    when an id_map is given), then one object per trace row. Objectives are
    written with 17 significant digits and re-parse exactly.
    """
    if format == "csv":
        stream.write(RESULT_CSV_HEADER + "\n")
        for e, f, fl, sec in _trace_rows(report):
            stream.write(f"{e},{f:.17g},{fl},{sec:.17g}\n")
        return
    if format != "jsonl":
        raise ValueError(f"unknown result format {format!r}")
    cameras = []
    for idx in range(report.rotations.shape[0]):
        q = so3.rotation_to_quat(report.rotations[idx])
        cam = {
            "id": idx + 1,
            "qx": q[0],
            "qy": q[1],
            "qz": q[2],
            "qw": q[3],
        }
        if id_map is not None:
            cam["original_id"] = id_map[idx + 1]
        cameras.append(cam)
    record = {
        "solver": report.solver,
        "config": asdict(report.config),
        "epochs": report.epochs,
        "iterations": report.iterations,
        "termination": report.termination,
        "wall_time": report.wall_time,
        "block_multiplies": report.block_multiplies,
        "final_objective": report.final_objective,
        "cameras": cameras,
    }
    stream.write(json.dumps(record) + "\n")
    for e, f, fl, sec in _trace_rows(report):
        stream.write(
            json.dumps({"epoch": e, "objective": f, "flips": fl, "seconds": sec}) + "\n"
        )
