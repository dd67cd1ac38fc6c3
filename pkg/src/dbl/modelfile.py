"""Versioned JSON model files.

Floats are written with 17 significant digits so a loaded model scores
bit-for-bit like the one that was saved.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .combinatorics import build_layout, enumerate_subsets
from .dataset import AttributeMeta, Encoder
from .lbfgs import SolverConfig
from .models import AndeModel, AnjeModel, DblModel, LrModel
from .statistics import CountTable, ProbabilityTables
from .training import AlgoSpec, FittedModel

FORMAT_VERSION = 1


class ModelFileError(ValueError):
    pass


def _dump(obj, indent: int = 0) -> str:
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {_dump(v, indent + 2)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if all(isinstance(v, (int, float, str, bool)) or v is None for v in obj):
            return "[" + ", ".join(_dump(v) for v in obj) + "]"
        return "[\n" + ",\n".join(f"{pad}  {_dump(v, indent + 2)}" for v in obj) + f"\n{pad}]"
    if isinstance(obj, np.ndarray):
        return _dump(obj.tolist(), indent)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            raise ModelFileError("cannot serialise a non-finite value")
        text = format(v, ".17g")
        return text if any(ch in text for ch in ".en") else text + ".0"
    return json.dumps(obj)


def _blocks(layout, vec: np.ndarray) -> list[list[list[float]]]:
    return [
        [layout.block(vec, c, j).tolist() for j in range(len(layout.catalog))]
        for c in range(layout.class_count)
    ]


def _unblock(layout, class_part, blocks, dtype=float) -> np.ndarray:
    vec = np.empty(layout.total_len, dtype=dtype)
    vec[: layout.class_count] = class_part
    for c in range(layout.class_count):
        for j in range(len(layout.catalog)):
            start = layout.offset(c, j)
            block = np.asarray(blocks[c][j], dtype=dtype)
            if block.shape != (layout.block_sizes[j],):
                raise ModelFileError(f"block ({c}, {j}) has {block.size} entries, expected {layout.block_sizes[j]}")
            vec[start:start + layout.block_sizes[j]] = block
    return vec


def model_to_dict(fitted: FittedModel, encoder: Encoder, attribute_meta, class_name: str = "class") -> dict:
    spec, model = fitted.spec, fitted.model
    doc: dict = {
        "format_version": FORMAT_VERSION,
        "algo": spec.algo,
        "n": spec.n,
        "class_name": class_name,
        "class_labels": list(encoder.class_labels),
        "attribute_meta": [m.to_json() for m in attribute_meta],
        "encoder": encoder.to_json(),
        "cuts": {k: list(v) for k, v in encoder.cuts.items()},
        "smoothing_m": spec.m,
    }
    if isinstance(model, AndeModel):
        counts = model.counts
        layout = counts.layout if counts is not None else model.parent_layout
        vec = counts.counts if counts is not None else model.parent_counts
        doc.update(
            cardinalities=list(layout.cardinalities),
            counts={"n": layout.catalog.n, "t": model.t, "class_counts": vec[: layout.class_count].tolist(),
                    "joint": _blocks(layout, vec)},
        )
        return doc
    tables = model.tables if hasattr(model, "tables") else None
    layout = model.layout
    doc["cardinalities"] = list(layout.cardinalities)
    doc["n"] = layout.catalog.n
    if tables is not None:
        doc["log_prior"] = tables.log_prior.tolist()
        doc["log_theta"] = _blocks(layout, tables.log_probs)
    if isinstance(model, DblModel):
        doc["weights"] = model.weights.tolist()
    if isinstance(model, LrModel):
        doc["betas"] = model.beta.tolist()
    if spec.algo in ("dbl", "lr"):
        doc["regularization"] = {"C": spec.C, "center": spec.reg_center}
        if fitted.result is not None:
            doc["optimizer"] = {
                "reason": fitted.result.reason,
                "iterations": fitted.result.iterations,
                "objective": fitted.result.fun,
            }
    return doc


def save_model(path: str | Path, fitted: FittedModel, encoder: Encoder, attribute_meta,
               class_name: str = "class") -> None:
    Path(path).write_text(_dump(model_to_dict(fitted, encoder, attribute_meta, class_name)) + "\n", encoding="utf-8")


def model_from_dict(doc: dict) -> tuple[FittedModel, Encoder, list[AttributeMeta]]:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFileError(f"unsupported model format_version {version!r} (this build reads {FORMAT_VERSION})")
    try:
        algo, n = doc["algo"], int(doc["n"])
        encoder = Encoder.from_json(doc["encoder"])
        meta = [AttributeMeta.from_json(m) for m in doc["attribute_meta"]]
        cards = tuple(int(k) for k in doc["cardinalities"])
        C = len(doc["class_labels"])
        m = float(doc["smoothing_m"])
        reg = doc.get("regularization", {})
        spec = AlgoSpec(algo=algo, n=max(n, 2) if algo == "ande" else n, C=float(reg.get("C", 0.0)),
                        center=reg.get("center"), m=m, solver=SolverConfig(), max_n=max(n, 3))
        if algo == "ande":
            cdoc = doc["counts"]
            layout = build_layout(enumerate_subsets(len(cards), int(cdoc["n"])), cards, C)
            vec = _unblock(layout, cdoc["class_counts"], cdoc["joint"], dtype=np.int64)
            table = CountTable(layout=layout, t=int(cdoc["t"]), counts=vec)
            if int(cdoc["n"]) == spec.n:
                model = AndeModel.from_counts(table, m)
            else:
                model = AndeModel.from_parent_counts(table, m)
            return FittedModel(spec, model), encoder, meta
        layout = build_layout(enumerate_subsets(len(cards), n), cards, C)
        tables = None
        if "log_theta" in doc:
            tables = ProbabilityTables(layout=layout, log_probs=_unblock(layout, doc["log_prior"], doc["log_theta"]), m=m)
        if algo in ("anje", "nb"):
            model = AnjeModel(tables)
        elif algo == "dbl":
            model = DblModel(tables, np.asarray(doc["weights"], dtype=float))
        elif algo == "lr":
            model = LrModel(layout, np.asarray(doc["betas"], dtype=float))
        else:
            raise ModelFileError(f"unknown algo {algo!r}")
    except KeyError as exc:
        raise ModelFileError(f"model file is missing field {exc}") from exc
    return FittedModel(spec, model), encoder, meta


def load_model(path: str | Path) -> tuple[FittedModel, Encoder, list[AttributeMeta]]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model file {path} is not valid JSON: {exc}") from exc
    return model_from_dict(doc)
