"""Reading point tables and writing/reading results as JSON and CSV."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .energy import EnergyBreakdown
from .ensemble import ConsensusFilters, ConsensusGraph, EnsembleMember, GraphEnsemble
from .errors import DataError, SchemaVersionError
from .fitter import PointCloud
from .grammar import PrincipalGraphResult, StepRecord
from .graph import ElasticGraph
from .robust import ForestResult, MazeResult

SCHEMA_VERSION = 1


def load_matrix(path, delimiter: str = ",", header: bool = False,
                weight_column: int | str | None = None) -> PointCloud:
    """Read a rectangular numeric table into a :class:`PointCloud`.

    Rows and columns in error messages are 1-based and count the header line.
    ``weight_column`` (an index, or a name when ``header`` is set) is removed
    from the coordinates and used as point weights.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [(i + 1, r) for i, r in enumerate(csv.reader(text.splitlines(), delimiter=delimiter))
            if r and any(c.strip() for c in r)]
    names = None
    if header and rows:
        names = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0][1])
    values = np.empty((len(rows), width))
    for k, (line, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {line} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                values[k, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell.strip()!r} at row {line}, "
                                f"column {j + 1}") from None
            if not math.isfinite(values[k, j]):
                raise DataError(f"{path}: non-finite cell at row {line}, column {j + 1}")
    w = None
    if weight_column is not None:
        if isinstance(weight_column, str):
            if names is None or weight_column not in names:
                raise DataError(f"{path}: no column named {weight_column!r}")
            weight_column = names.index(weight_column)
        if not 0 <= weight_column < width:
            raise DataError(f"{path}: weight column {weight_column} out of range")
        w = values[:, weight_column]
        values = np.delete(values, weight_column, axis=1)
    return PointCloud(values, w)


# JSON encoding. Non-finite floats are stored as strings so files stay valid JSON.

def _f(v: float):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _unf(v) -> float:
    return float(v)


def _matrix(a) -> list:
    return [[_f(v) for v in row] for row in np.asarray(a, dtype=float)]


def _graph_block(graph: ElasticGraph) -> dict:
    return graph.canonical()


def _graph_from(block: dict) -> ElasticGraph:
    return ElasticGraph(block["n_nodes"], np.array(block["edges"], dtype=np.int64).reshape(-1, 2),
                        np.array(block["lambdas"], dtype=float), np.array(block["mus"], dtype=float))


def _step_block(s: StepRecord) -> dict:
    target = list(s.target) if isinstance(s.target, tuple) else s.target
    return {"phase": s.phase, "kind": s.kind, "target": target, "energy": _f(s.energy),
            "n_nodes": s.n_nodes, "candidate_energies": [_f(e) for e in s.candidate_energies]}


def _step_from(b: dict) -> StepRecord:
    target = tuple(b["target"]) if isinstance(b["target"], list) else b["target"]
    return StepRecord(b["phase"], b["kind"], target, _unf(b["energy"]), b["n_nodes"],
                      tuple(_unf(e) for e in b["candidate_energies"]), None)


def _energy_block(e: EnergyBreakdown) -> dict:
    return {k: (_f(v) if isinstance(v, float) else v) for k, v in e.as_dict().items()}


def _energy_from(b: dict) -> EnergyBreakdown:
    return EnergyBreakdown(_unf(b["mse"]), _unf(b["u_e"]), _unf(b["u_r"]), _unf(b["total"]),
                           int(b["trimmed_count"]))


def result_block(r: PrincipalGraphResult) -> dict:
    return {"graph": _graph_block(r.graph), "positions": _matrix(r.embedding),
            "alpha": _f(r.alpha), "r0": _f(r.r0), "energy": _energy_block(r.energy),
            "history": [_step_block(s) for s in r.history]}


def result_from(b: dict) -> PrincipalGraphResult:
    phi = np.array([[_unf(v) for v in row] for row in b["positions"]], dtype=float)
    return PrincipalGraphResult(_graph_from(b["graph"]), phi, None, _energy_from(b["energy"]),
                                _unf(b["alpha"]), _unf(b["r0"]),
                                [_step_from(s) for s in b["history"]], [])


def to_document(obj) -> dict:
    doc: dict = {"schema_version": SCHEMA_VERSION}
    if isinstance(obj, PrincipalGraphResult):
        doc["type"] = "principal_graph"
        doc.update(result_block(obj))
    elif isinstance(obj, GraphEnsemble):
        doc["type"] = "ensemble"
        doc["manifest"] = obj.manifest()
        doc["members"] = [dict(result_block(m.result), indices_sha256=m.indices_hash)
                          for m in obj.members]
    elif isinstance(obj, ConsensusGraph):
        f = obj.filters
        doc["type"] = "consensus"
        doc.update({
            "positions": _matrix(obj.positions), "edges": obj.edges.tolist(),
            "weights": obj.weights.tolist(), "cluster_of": obj.cluster_of.tolist(),
            "n_clusters": obj.n_clusters, "edge_threshold": obj.edge_threshold,
            "seed": obj.seed, "replicas": obj.replicas,
            "filters": {"min_node_local_density": f.min_node_local_density,
                        "density_radius": f.density_radius, "edge_len_min": f.edge_len_min,
                        "edge_len_max": f.edge_len_max, "drop_unconnected": f.drop_unconnected},
            "pool_positions": _matrix(obj.pool_positions), "pool_edges": obj.pool_edges.tolist(),
        })
    elif isinstance(obj, ForestResult):
        doc["type"] = "forest"
        doc["graphs"] = [result_block(g) for g in obj.graphs]
        doc["labels"] = obj.point_labels.tolist()
    elif isinstance(obj, MazeResult):
        doc["type"] = "maze"
        doc["curves"] = [result_block(g) for g in obj.curves]
        doc["labels"] = obj.labels.tolist()
        doc["captured"] = obj.captured.tolist()
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    return doc


def _array(v, dtype, shape=None):
    a = np.array(v, dtype=dtype)
    return a.reshape(shape) if shape is not None else a


def from_document(doc: dict):
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported schema version {version!r}, "
                                 f"expected {SCHEMA_VERSION}")
    kind = doc.get("type")
    if kind == "principal_graph":
        return result_from(doc)
    if kind == "ensemble":
        m = doc["manifest"]
        members = [EnsembleMember(result_from(b), None, b["indices_sha256"]) for b in doc["members"]]
        return GraphEnsemble(members, m["fraction"], m["replicas"], m["seed"], m["n_points"])
    if kind == "consensus":
        pos = np.array([[_unf(v) for v in row] for row in doc["positions"]], dtype=float)
        pool = np.array([[_unf(v) for v in row] for row in doc["pool_positions"]], dtype=float)
        return ConsensusGraph(pos.reshape(-1, pool.shape[1]), _array(doc["edges"], np.int64, (-1, 2)),
                              _array(doc["weights"], np.int64), _array(doc["cluster_of"], np.int64),
                              doc["n_clusters"], doc["edge_threshold"], doc["seed"],
                              ConsensusFilters(**doc["filters"]), pool,
                              _array(doc["pool_edges"], np.int64, (-1, 2)), doc["replicas"])
    if kind == "forest":
        return ForestResult([result_from(b) for b in doc["graphs"]],
                            _array(doc["labels"], np.int64))
    if kind == "maze":
        return MazeResult([result_from(b) for b in doc["curves"]],
                          _array(doc["labels"], np.int64), _array(doc["captured"], np.int64))
    raise DataError(f"unknown document type {kind!r}")


def save_graph(obj, path) -> None:
    """Write a fitted graph, ensemble, consensus, forest or maze result as JSON."""
    text = json.dumps(to_document(obj), indent=1)
    try:
        Path(path).write_text(text + "\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def load_graph(path):
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc
    return from_document(doc)


# CSV outputs. Floats are written with repr so they read back exactly.

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([_fmt(v) for v in row])


def write_assignments(path, partition, extra: dict | None = None) -> None:
    """One row per point: nearest node (-1 when trimmed) and squared distance, plus extra label columns."""
    extra = extra or {}
    header = ["point_index", "node", "sqdist", *extra]
    cols = [partition.assign, partition.sqdist, *extra.values()]
    write_csv(path, header, ([i, *(c[i] for c in cols)] for i in range(len(partition.assign))))


def write_labels(path, labels, name="label") -> None:
    write_csv(path, ["point_index", name], ((i, int(v)) for i, v in enumerate(labels)))


def write_pseudotime(path, table) -> None:
    write_csv(path, ["point_index", "pseudotime", "on_path", "edge_index", "t"],
              ((i, table.pseudotime[i], table.on_path[i], table.edge[i], table.t[i])
               for i in range(len(table.pseudotime))))


def write_energy_trace(path, result: PrincipalGraphResult) -> None:
    rows = []
    for k, s in enumerate(result.history, start=1):
        target = "-".join(map(str, s.target)) if isinstance(s.target, tuple) else s.target
        rows.append((k, s.kind, target, s.n_nodes, s.energy))
    write_csv(path, ["step", "operation", "target", "n_nodes", "energy"], rows)
