"""JSON documents for instances, run settings and results; CSV writers.

Task and worker indices in documents are 0-based.
"""

from __future__ import annotations

import csv
import json
from dataclasses import fields
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .model import Assignment, Box, Instance, Polytope, ScalingPair, validate_instance
from .sequential import RunTrace, SolverConfig, SubproblemResult


class DocumentError(ValueError):
    """A document is malformed; the message names the offending field or line."""


# -- instances ----------------------------------------------------------------

def instance_to_doc(inst: Instance) -> dict:
    sup = inst.support
    if isinstance(sup, Box):
        support = {"type": "box", "l": sup.lower.tolist(), "u": sup.upper.tolist()}
    else:
        support = {"type": "polytope", "G": sup.G.tolist(), "h": sup.h.tolist()}
    doc = {
        "n_tasks": inst.n_tasks,
        "n_workers": inst.n_workers,
        "rewards": inst.rewards.tolist(),
        "mu": inst.mu.tolist(),
        "support": support,
        "delta": inst.delta,
        "epsilon": inst.epsilon,
    }
    if inst.fixed:
        doc["fixed_assignments"] = [{"task": i, "worker": j} for i, j in inst.fixed]
    if inst.forbidden:
        doc["forbidden"] = [{"task": i, "worker": j} for i, j in inst.forbidden]
    return doc


def _need(doc: dict, key: str, where: str = "") -> Any:
    if not isinstance(doc, dict) or key not in doc:
        raise DocumentError(f"missing field '{where}{key}'")
    return doc[key]


def _array(value, key: str, shape: tuple[int, ...]) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as err:
        raise DocumentError(f"field '{key}' must be numeric: {err}") from None
    if arr.shape != shape:
        raise DocumentError(f"field '{key}' has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise DocumentError(f"field '{key}' contains non-finite values")
    return arr


def _pairs(doc: dict, key: str, n: int, m: int) -> tuple[tuple[int, int], ...]:
    out = []
    for k, item in enumerate(doc.get(key, []) or []):
        where = f"{key}[{k}]."
        i, j = _need(item, "task", where), _need(item, "worker", where)
        if not (isinstance(i, int) and isinstance(j, int) and 0 <= i < n and 0 <= j < m):
            raise DocumentError(f"field '{key}[{k}]' refers to task {i}, worker {j} outside the instance")
        out.append((i, j))
    return tuple(out)


def instance_from_doc(doc: dict, validate: bool = True) -> Instance:
    n = _need(doc, "n_tasks")
    m = _need(doc, "n_workers")
    if not (isinstance(n, int) and isinstance(m, int) and n > 0 and m > 0):
        raise DocumentError("fields 'n_tasks' and 'n_workers' must be positive integers")
    rewards = _array(_need(doc, "rewards"), "rewards", (n, m))
    mu = _array(_need(doc, "mu"), "mu", (n,))
    sup = _need(doc, "support")
    kind = _need(sup, "type", "support.")
    try:
        if kind == "box":
            support = Box(_array(_need(sup, "l", "support."), "support.l", (n,)),
                          _array(_need(sup, "u", "support."), "support.u", (n,)))
        elif kind == "polytope":
            G = np.asarray(_need(sup, "G", "support."), dtype=float)
            if G.ndim != 2 or G.shape[1] != n:
                raise DocumentError(f"field 'support.G' must have {n} columns")
            support = Polytope(G, _array(_need(sup, "h", "support."), "support.h", (G.shape[0],)))
        else:
            raise DocumentError(f"field 'support.type' must be 'box' or 'polytope', got {kind!r}")
    except ValueError as err:
        if isinstance(err, DocumentError):
            raise
        raise DocumentError(f"field 'support': {err}") from None
    try:
        inst = Instance(rewards, mu, support, float(_need(doc, "delta")), float(_need(doc, "epsilon")),
                        fixed=_pairs(doc, "fixed_assignments", n, m), forbidden=_pairs(doc, "forbidden", n, m))
    except (TypeError, ValueError) as err:
        if isinstance(err, DocumentError):
            raise
        raise DocumentError(str(err)) from None
    if validate:
        problems = validate_instance(inst)
        if problems:
            raise DocumentError("invalid instance: " + "; ".join(problems))
    return inst


def parse_json(text: str, source: str = "<string>") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise DocumentError(f"{source}: line {err.lineno}, column {err.colno}: {err.msg}") from None


def read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise DocumentError(f"cannot read {path}: {err.strerror}") from None
    return parse_json(text, str(path))


def write_json(path: str | Path, doc: Any) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def load_instance(path: str | Path) -> Instance:
    return instance_from_doc(read_json(path))


def save_instance(path: str | Path, inst: Instance) -> None:
    write_json(path, instance_to_doc(inst))


# -- run settings ---------------------------------------------------------------

_CONFIG_KEYS = {f.name for f in fields(SolverConfig)}


def config_from_doc(doc: dict) -> SolverConfig:
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise DocumentError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    try:
        return SolverConfig(**doc)
    except (TypeError, ValueError) as err:
        raise DocumentError(f"config: {err}") from None


def run_doc(method: str, cfg: SolverConfig, instance: str | None = None, output: str | None = None,
            seed: int | None = None) -> dict:
    return {"method": method, "config": cfg.to_dict(), "instance": instance, "output": output, "seed": seed}


def run_from_doc(doc: dict) -> tuple[str, SolverConfig, dict]:
    method = _need(doc, "method")
    if method not in ("dro", "mean"):
        raise DocumentError(f"field 'method' must be 'dro' or 'mean', got {method!r}")
    cfg = config_from_doc(doc.get("config", {}) or {})
    return method, cfg, {k: doc.get(k) for k in ("instance", "output", "seed")}


# -- results --------------------------------------------------------------------

def scaling_to_doc(s: ScalingPair) -> dict:
    return {"alpha": s.alpha.tolist(), "beta": s.beta.tolist(), "floor": s.floor}


def trace_to_doc(trace: RunTrace, inst: Instance, cfg: SolverConfig, wall: float) -> dict:
    x = trace.final_assignment
    return {
        "method": "dro",
        "assignment": x.x.tolist(),
        "workers": x.workers.tolist(),
        "reward": x.reward(inst.rewards),
        "g": trace.g,
        "v": trace.v,
        "converged": trace.converged,
        "feasible_for_dro": trace.feasible_for_dro,
        "big_m": trace.big_m,
        "scaling": scaling_to_doc(trace.final_scaling),
        "trace": [{"t": r.t, "g": r.g, "v": r.v, "cvar_value": r.cvar_value, "wall_time": r.wall_time,
                   "nodes": r.nodes} for r in trace.iterations],
        "wall_time_s": wall,
        "config": cfg.to_dict(),
    }


def mean_result_to_doc(res: SubproblemResult, inst: Instance, cfg: SolverConfig, wall: float) -> dict:
    return {
        "method": "mean",
        "assignment": res.x.x.tolist(),
        "workers": res.x.workers.tolist(),
        "reward": res.x.reward(inst.rewards),
        "g": res.g,
        "v": res.v,
        "wall_time_s": wall,
        "config": cfg.to_dict(),
    }


def assignment_from_doc(doc: dict, inst: Instance) -> Assignment:
    x = doc.get("assignment") if isinstance(doc, dict) else None
    if x is None:
        raise DocumentError("missing field 'assignment'")
    arr = np.asarray(x)
    if arr.shape != (inst.n_tasks, inst.n_workers):
        raise DocumentError(f"field 'assignment' has shape {arr.shape}, instance is "
                            f"{(inst.n_tasks, inst.n_workers)}")
    try:
        return Assignment(arr)
    except ValueError as err:
        raise DocumentError(f"field 'assignment': {err}") from None


def write_csv(path: str | Path, header: Iterable[str], rows: Iterable[Iterable[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for row in rows:
            w.writerow(list(row))
