"""Model serialization: a canonical, byte-stable JSON document.

Floats are written with 17 significant digits (lossless for float64), keys
keep a fixed order, so loading and re-saving a document is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .dictionary import DictionarySpec
from .simulate import HybridModel
from .subsystems import SubsystemModel
from .transitions import TransitionRule

SCHEMA_VERSION = 1


def canonical_dumps(obj) -> str:
    """Serialize to JSON with fixed float formatting and insertion key order."""
    pieces = []
    _emit(obj, pieces)
    return "".join(pieces)


def _emit(obj, out):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            raise ValueError("cannot serialize non-finite float")
        out.append(f"{x:.17g}")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for k, (key, val) in enumerate(obj.items()):
            if k:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _emit(val, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for k, val in enumerate(obj):
            if k:
                out.append(",")
            _emit(val, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def model_to_document(model: HybridModel, n_outputs: int, n_inputs: int, metadata=None) -> dict:
    """Flatten a HybridModel into the document structure."""
    subs = sorted(model.subsystems, key=lambda s: s.id)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "sample_period": float(model.sample_period),
        "signals": {"outputs": int(n_outputs), "inputs": int(n_inputs)},
        "dictionary": model.dictionary_spec.to_dict(),
        "psi_dictionary": model.psi_spec.to_dict(),
        "terms": list(subs[0].term_names),
        "psi_terms": list(model.rules[0].term_names) if model.rules else [],
        "subsystems": [
            {
                "id": s.id,
                "sample_count": int(len(s.fit_rows)),
                "outputs": [
                    {
                        "output": f"y{o + 1}",
                        "terms": [{"name": nm, "coeff": c} for nm, c in s.active_terms(o)],
                    }
                    for o in range(s.n_outputs)
                ],
            }
            for s in subs
        ],
        "transitions": [
            {
                "from": r.from_mode,
                "to": r.to_mode,
                "terms": [
                    {"name": nm, "coeff": float(c)}
                    for nm, c in zip(r.term_names, r.v)
                    if c != 0.0
                ],
                "accuracy": float(r.training_accuracy),
                "flagged": bool(r.flagged),
            }
            for r in sorted(model.rules, key=lambda r: (r.from_mode, r.to_mode))
        ],
        "metadata": dict(metadata or {}),
    }
    return doc


def document_to_model(doc: dict) -> HybridModel:
    """Rebuild a HybridModel (and its specs) from a parsed document."""
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
    n = int(doc["signals"]["outputs"])
    spec = DictionarySpec.from_dict(doc["dictionary"])
    psi_spec = DictionarySpec.from_dict(doc["psi_dictionary"])
    terms = list(doc["terms"])
    psi_terms = list(doc["psi_terms"])
    index = {nm: k for k, nm in enumerate(terms)}

    subsystems = []
    for s in doc["subsystems"]:
        W = np.zeros((len(terms), n))
        for o, block in enumerate(s["outputs"]):
            for entry in block["terms"]:
                W[index[entry["name"]], o] = entry["coeff"]
        subsystems.append(
            SubsystemModel(
                id=int(s["id"]),
                coefficients=W,
                term_names=terms,
                fit_rows=np.zeros(int(s["sample_count"]), dtype=int),
            )
        )

    psi_index = {nm: k for k, nm in enumerate(psi_terms)}
    rules = []
    for r in doc["transitions"]:
        v = np.zeros(len(psi_terms))
        for entry in r["terms"]:
            v[psi_index[entry["name"]]] = entry["coeff"]
        rules.append(
            TransitionRule(
                from_mode=int(r["from"]),
                to_mode=int(r["to"]),
                v=v,
                term_names=psi_terms,
                training_accuracy=float(r["accuracy"]),
                flagged=bool(r["flagged"]),
                psi_spec=psi_spec,
            )
        )
    return HybridModel(
        subsystems=subsystems,
        rules=rules,
        dictionary_spec=spec,
        psi_spec=psi_spec,
        sample_period=float(doc["sample_period"]),
    )


def save_document(doc: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_dumps(doc))
        fh.write("\n")


def load_document(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
