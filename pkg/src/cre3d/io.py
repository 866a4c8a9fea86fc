"""File formats: JSON-Lines profile and flux datasets, JSON model files.

All numbers are written as decimal JSON floats, which round-trip IEEE
doubles exactly. Writes go through a temp file and an atomic rename.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .column import AtmosphericProfile, FluxSet, PhysConsts, VerticalGrid
from .features import FeatureSchema, Normalization
from .net import MlpModel

MODEL_FORMAT_VERSION = 1


class DatasetError(ValueError):
    """Malformed file content, carrying a file/record locus."""

    def __init__(self, path, record: Optional[int], message: str):
        locus = f"{path}" if record is None else f"{path}:record {record}"
        super().__init__(f"{locus}: {message}")


def atomic_write_text(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path, records: Iterable[dict]) -> None:
    atomic_write_text(path, "".join(json.dumps(r) + "\n" for r in records))


def read_jsonl(path) -> List[dict]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DatasetError(path, lineno, f"invalid JSON ({exc})") from exc
    return records


# ---------------------------------------------------------------------------
# Profiles

_PROFILE_ARRAYS = ("T", "f_c", "q_l", "q_i", "r_l", "r_i")
_PROFILE_SCALARS = ("T_s", "alpha", "mu0")


def profile_to_record(profile: AtmosphericProfile) -> dict:
    record = {
        "id": profile.pid,
        "p_hl": profile.grid.p_hl.tolist(),
        "T_s": profile.T_s,
        "alpha": profile.alpha,
        "mu0": profile.mu0,
    }
    for name in _PROFILE_ARRAYS:
        record[name] = getattr(profile, name).tolist()
    if profile.q is not None:
        record["q"] = profile.q.tolist()
    return record


def profile_from_record(record: dict, path="<memory>", index: Optional[int] = None,
                        ) -> AtmosphericProfile:
    for key in ("p_hl",) + _PROFILE_ARRAYS + _PROFILE_SCALARS:
        if key not in record:
            raise DatasetError(path, index, f"missing field {key!r}")
    try:
        return AtmosphericProfile(
            grid=VerticalGrid(np.asarray(record["p_hl"], dtype=float)),
            T=np.asarray(record["T"], dtype=float),
            f_c=np.asarray(record["f_c"], dtype=float),
            q_l=np.asarray(record["q_l"], dtype=float),
            q_i=np.asarray(record["q_i"], dtype=float),
            r_l=np.asarray(record["r_l"], dtype=float),
            r_i=np.asarray(record["r_i"], dtype=float),
            T_s=float(record["T_s"]),
            alpha=float(record["alpha"]),
            mu0=float(record["mu0"]),
            q=None if record.get("q") is None else np.asarray(record["q"], dtype=float),
            pid=record.get("id"),
        )
    except (TypeError, ValueError) as exc:
        raise DatasetError(path, index, str(exc)) from exc


def write_profiles(path, profiles: Iterable[AtmosphericProfile]) -> None:
    write_jsonl(path, (profile_to_record(p) for p in profiles))


def read_profiles(path) -> List[AtmosphericProfile]:
    return [profile_from_record(r, path, i + 1) for i, r in enumerate(read_jsonl(path))]


# ---------------------------------------------------------------------------
# Flux records


def flux_to_record(pid: Optional[str], flux: FluxSet) -> dict:
    record = {
        "id": pid,
        "up": flux.up.tolist(),
        "down": flux.down.tolist(),
        "heat": flux.heat.tolist(),
    }
    if flux.direct_down is not None:
        record["direct_down"] = flux.direct_down.tolist()
    return record


def flux_from_record(record: dict, path="<memory>", index: Optional[int] = None,
                     ) -> Tuple[Optional[str], FluxSet]:
    for key in ("up", "down"):
        if key not in record:
            raise DatasetError(path, index, f"missing field {key!r}")
    try:
        up = np.asarray(record["up"], dtype=float)
        down = np.asarray(record["down"], dtype=float)
        if "heat" in record:
            heat = np.asarray(record["heat"], dtype=float)
        else:
            raise DatasetError(path, index, "missing field 'heat'")
        direct = record.get("direct_down")
        flux = FluxSet(up=up, down=down, heat=heat,
                       direct_down=None if direct is None else np.asarray(direct, dtype=float))
        return record.get("id"), flux
    except DatasetError:
        raise
    except (TypeError, ValueError) as exc:
        raise DatasetError(path, index, str(exc)) from exc


def write_fluxes(path, records: Iterable[Tuple[Optional[str], FluxSet]]) -> None:
    write_jsonl(path, (flux_to_record(pid, f) for pid, f in records))


def read_fluxes(path) -> List[Tuple[Optional[str], FluxSet]]:
    return [flux_from_record(r, path, i + 1) for i, r in enumerate(read_jsonl(path))]


# ---------------------------------------------------------------------------
# Model files


def _normalization_to_json(norm: Normalization) -> dict:
    return {"mean": norm.mean.tolist(), "scale": norm.scale.tolist()}


def _normalization_from_json(obj: dict) -> Normalization:
    return Normalization(mean=np.asarray(obj["mean"], dtype=float),
                         scale=np.asarray(obj["scale"], dtype=float))


def model_to_json(model: MlpModel, consts: PhysConsts) -> dict:
    if model.schema is None or model.norm_in is None or model.norm_out is None:
        raise ValueError("only fully-fitted models (schema + normalization) can be saved")
    schema = model.schema
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "component": schema.component,
        "schema": {
            "component": schema.component,
            "n_fl_window": schema.n_fl_window,
            "n_hl_window": schema.n_hl_window,
            "include_humidity": schema.include_humidity,
            "include_thickness": schema.include_thickness,
            "input_len": schema.input_len,
            "output_len": schema.output_len,
        },
        "normalization": {
            "in": _normalization_to_json(model.norm_in),
            "out": _normalization_to_json(model.norm_out),
        },
        "layers": [
            {"rows": int(w.shape[0]), "cols": int(w.shape[1]),
             "w_rowmajor": w.ravel().tolist(), "b": b.tolist()}
            for w, b in zip(model.weights, model.biases)
        ],
        "training": dict(model.meta),
        "constants": {"g": consts.g, "c_p": consts.c_p, "rho_l": consts.rho_l,
                      "rho_i": consts.rho_i, "p_trunc": consts.p_trunc},
    }


def model_from_json(obj: dict, path="<model>") -> Tuple[MlpModel, PhysConsts]:
    try:
        if obj.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {obj.get('format_version')!r}")
        s = obj["schema"]
        schema = FeatureSchema(
            component=s["component"],
            n_fl_window=int(s["n_fl_window"]),
            n_hl_window=int(s["n_hl_window"]),
            include_humidity=bool(s.get("include_humidity", False)),
            include_thickness=bool(s.get("include_thickness", False)),
        )
        weights, biases = [], []
        for layer in obj["layers"]:
            w = np.asarray(layer["w_rowmajor"], dtype=float).reshape(
                int(layer["rows"]), int(layer["cols"]))
            weights.append(w)
            biases.append(np.asarray(layer["b"], dtype=float))
        model = MlpModel(
            weights=weights, biases=biases, schema=schema,
            norm_in=_normalization_from_json(obj["normalization"]["in"]),
            norm_out=_normalization_from_json(obj["normalization"]["out"]),
            meta=dict(obj.get("training", {})),
        )
        c = obj["constants"]
        consts = PhysConsts(g=c["g"], c_p=c["c_p"], rho_l=c["rho_l"],
                            rho_i=c["rho_i"], p_trunc=c["p_trunc"])
        return model, consts
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(path, None, f"bad model file: {exc}") from exc


def save_model(path, model: MlpModel, consts: PhysConsts) -> None:
    atomic_write_text(path, json.dumps(model_to_json(model, consts)))


def load_model(path) -> Tuple[MlpModel, PhysConsts]:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(path, None, f"invalid JSON ({exc})") from exc
    return model_from_json(obj, path)
