"""Model files: one JSON document with a format version and a payload checksum.

Floats are written with Python's shortest round-trip repr, so a loaded model
reproduces predictions bit for bit.
"""

import hashlib
import json
import os
import tempfile

import numpy as np

from .baseline import BaselineModel, HarmonicCounts, PeriodSet
from .frame import TimeGrid
from .ggs import SearchReport, _encode_score
from .lowrank import LowRankBlockDiagKernel, PrincipalDirections
from .model import TsarForecaster
from .residual import LaggedCorrelations, Normalizer

__all__ = ["save", "load", "save_file", "load_file", "ModelFormatError", "FORMAT_VERSION"]

FORMAT_NAME = "tsar-model"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Corrupt, foreign, or incompatible model document."""


def _canonical(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def _checksum(payload):
    return "sha256:" + hashlib.sha256(_canonical(payload)).hexdigest()


def _encode_params(params):
    out = dict(params)
    if isinstance(out.get("periods"), PeriodSet):
        out["periods"] = list(out["periods"])
    return out


def _payload(model):
    model._check_fitted()
    return {
        "params": _encode_params(model.get_params()),
        "grid": {"origin": model.grid_.origin, "step": model.grid_.step, "length": model.grid_.length},
        "columns": list(model.columns_),
        "periods": list(model.periods_),
        "baselines": [
            {"counts": b.counts.as_dict(), "coef": b.coef.tolist()} for b in model.baselines_
        ],
        "sigma": model.normalizer_.sigma.tolist(),
        "correlations": {
            "P": model.correlations_.P,
            "F": model.correlations_.F,
            "coef": model.correlations_.coef.tolist(),
        },
        "directions": {
            "vectors": model.directions_.vectors.tolist(),
            "eigenvalues": model.directions_.eigenvalues.tolist(),
        },
        "kernel": {
            "sigma_lr_lags": model.kernel_.sigma_lr_lags.tolist(),
            "d_lags": model.kernel_.d_lags.tolist(),
        },
        "rank": model.rank_,
        "lam": model.lambda_,
        "baseline_reports": {c: r.to_dict() for c, r in model.baseline_reports_.items()},
        "gp_report": None if model.gp_report_ is None else model.gp_report_.to_dict(),
        "test_losses": _encode_losses(model.test_losses_),
    }


def _encode_losses(losses):
    out = {}
    for key, value in losses.items():
        out[key] = _encode_losses(value) if isinstance(value, dict) else _encode_score(value)
    return out


def _decode_losses(losses):
    return {k: _decode_losses(v) if isinstance(v, dict) else float(v) for k, v in losses.items()}


def save(model):
    """Serialize a fitted :class:`TsarForecaster` to bytes."""
    payload = _payload(model)
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "checksum": _checksum(payload),
        "payload": payload,
    }
    return json.dumps(doc, allow_nan=False, indent=1).encode()


def load(data):
    """Rebuild a fitted :class:`TsarForecaster` from :func:`save` output."""
    try:
        doc = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"corrupt payload: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ModelFormatError("not a tsar model document")
    version = doc.get("version")
    if not isinstance(version, int) or version > FORMAT_VERSION or version < 1:
        raise ModelFormatError(
            f"unsupported model format version {version!r} (this build reads up to {FORMAT_VERSION})"
        )
    payload = doc.get("payload")
    if not isinstance(payload, dict) or doc.get("checksum") != _checksum(payload):
        raise ModelFormatError("corrupt payload: checksum mismatch")
    try:
        return _restore(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupt payload: {exc}") from None


def _restore(p):
    params = dict(p["params"])
    if params.get("periods") is not None:
        params["periods"] = tuple(params["periods"])
    model = TsarForecaster(**params)
    periods = PeriodSet(*p["periods"])
    model.grid_ = TimeGrid(**p["grid"])
    model.columns_ = tuple(p["columns"])
    model.periods_ = periods
    model.baselines_ = [
        BaselineModel(HarmonicCounts(**b["counts"]), periods, np.array(b["coef"]))
        for b in p["baselines"]
    ]
    model.counts_ = [b.counts for b in model.baselines_]
    model.normalizer_ = Normalizer(np.array(p["sigma"]))
    corr = p["correlations"]
    model.correlations_ = LaggedCorrelations(corr["P"], corr["F"], np.array(corr["coef"], dtype=np.float64))
    dirs = p["directions"]
    M = len(model.columns_)
    model.directions_ = PrincipalDirections(
        np.array(dirs["vectors"], dtype=np.float64).reshape(-1, M), np.array(dirs["eigenvalues"])
    )
    model.kernel_ = LowRankBlockDiagKernel(
        corr["P"], corr["F"], model.directions_,
        np.array(p["kernel"]["sigma_lr_lags"], dtype=np.float64),
        np.array(p["kernel"]["d_lags"], dtype=np.float64),
    )
    model.rank_ = int(p["rank"])
    model.lambda_ = float(p["lam"])
    model.baseline_reports_ = {c: SearchReport.from_dict(r) for c, r in p["baseline_reports"].items()}
    model.gp_report_ = None if p["gp_report"] is None else SearchReport.from_dict(p["gp_report"])
    model.test_losses_ = _decode_losses(p["test_losses"])
    model.n_features_in_ = M
    return model


def save_file(model, path):
    """Write atomically: a temporary file in the target directory, then rename."""
    data = save(model)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tsar-", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_file(path):
    with open(path, "rb") as fh:
        return load(fh.read())
