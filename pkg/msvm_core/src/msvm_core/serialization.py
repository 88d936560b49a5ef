"""Model files and report documents.

A model file is a YAML document

    format: msvm2/1
    digest: <sha256 of the payload>
    fields: {<key>: <sha256 of payload[key]>, ...}
    payload: {...}

The digest is checked before the payload is read; when it does not match,
the per-field digests name the altered entry.

Floats are written by PyYAML with their shortest round-trip repr, so loading
a saved model reproduces every array bit for bit.
"""
import datetime
import hashlib
from pathlib import Path

import numpy as np
import yaml

from msvm_core.kernels import KernelError, KernelSpec
from msvm_core.model import TrainedModel


FORMAT_VERSION = "msvm2/1"


class ModelFormatError(ValueError):
    """Unreadable model file. `field` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def payload_digest(payload):
    text = yaml.safe_dump(payload, sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def field_digests(payload):
    return {key: payload_digest(value) for key, value in payload.items()}


def _altered_field(document):
    """First payload entry whose digest differs from the recorded one."""
    recorded = document.get("fields", None)
    payload = document["payload"]
    if not isinstance(recorded, dict):
        return "digest"
    for key in sorted(set(recorded) | set(payload)):
        if key not in recorded or key not in payload:
            return key
        if payload_digest(payload[key]) != recorded[key]:
            return key
    return "digest"


def model_to_dict(model):
    return {
        "kernel": model.kernel.to_dict(),
        "C": model.C,
        "categories": list(model.category_map),
        "points": model.points.tolist(),
        "labels": model.labels.tolist(),
        "alpha": model.alpha.tolist(),
        "biases": model.biases.tolist(),
        "tie_tol": model.tie_tol,
        "support_threshold": model.support_threshold,
        "solver": model.solver,
    }


def save_model(model, path):
    payload = model_to_dict(model)
    document = {
        "format": FORMAT_VERSION,
        "digest": payload_digest(payload),
        "fields": field_digests(payload),
        "payload": payload,
    }
    with open(path, "w") as f:
        yaml.safe_dump(document, stream=f, sort_keys=False, default_flow_style=None)


def _array(payload, field, dtype, ndim):
    if field not in payload:
        raise ModelFormatError(field, "missing")
    try:
        a = np.array(payload[field], dtype=dtype)
    except (TypeError, ValueError) as e:
        raise ModelFormatError(field, f"not a numeric array ({e})")
    if a.ndim != ndim:
        raise ModelFormatError(field, f"expected {ndim} dimensions, got {a.ndim}")
    if dtype is float and not np.all(np.isfinite(a)):
        raise ModelFormatError(field, "non-finite entries")
    return a


def model_from_dict(payload):
    if not isinstance(payload, dict):
        raise ModelFormatError("payload", "not a mapping")

    try:
        kernel = KernelSpec.from_dict(payload["kernel"])
    except KeyError:
        raise ModelFormatError("kernel", "missing")
    except (KernelError, TypeError, AttributeError) as e:
        raise ModelFormatError("kernel", str(e))

    C = payload.get("C", None)
    if C is not None and not (isinstance(C, (int, float)) and C > 0):
        raise ModelFormatError("C", f"expected a positive number or null, got {C!r}")

    categories = payload.get("categories", None)
    if not isinstance(categories, list) or len(categories) < 2:
        raise ModelFormatError("categories", "expected a list of at least two labels")
    Q = len(categories)

    points = _array(payload, "points", float, 2)
    m = points.shape[0]
    labels = _array(payload, "labels", int, 1)
    if labels.shape != (m,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= Q:
        raise ModelFormatError("labels", f"expected {m} labels in [0, {Q})")
    alpha = _array(payload, "alpha", float, 2)
    if alpha.shape != (m, Q):
        raise ModelFormatError("alpha", f"expected shape ({m}, {Q}), got {alpha.shape}")
    biases = _array(payload, "biases", float, 1)
    if biases.shape != (Q,):
        raise ModelFormatError("biases", f"expected {Q} entries, got {biases.shape[0]}")

    return TrainedModel(
        kernel=kernel,
        C=C,
        points=points,
        labels=labels,
        alpha=alpha,
        biases=biases,
        category_map=categories,
        solver=payload.get("solver", {}),
        tie_tol=payload.get("tie_tol", 1e-12),
        support_threshold=payload.get("support_threshold", None),
    )


def load_model(path):
    try:
        with open(path) as f:
            document = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ModelFormatError("document", f"truncated or malformed YAML ({e})")

    if not isinstance(document, dict):
        raise ModelFormatError("document", "truncated or empty file")
    version = document.get("format", None)
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            "format",
            f"unsupported version {version!r}; this program reads {FORMAT_VERSION}, "
            "upgrade it to load newer models",
        )
    if "payload" not in document:
        raise ModelFormatError("payload", "missing (truncated file?)")
    if "digest" not in document:
        raise ModelFormatError("digest", "missing")

    payload = document["payload"]
    if not isinstance(payload, dict):
        raise ModelFormatError("payload", "expected a mapping")
    if payload_digest(payload) != document["digest"]:
        raise ModelFormatError(
            _altered_field(document), "altered entry, payload does not match its digest"
        )
    return model_from_dict(payload)


def _fmt(x):
    if x is None:
        return "-"
    if isinstance(x, (int, np.integer)):
        return str(x)
    return f"{x:.6g}"


def _fmt_params(params):
    if not params:
        return "-"
    return ",".join(f"{k}={v:g}" for k, v in sorted(params.items()))


def format_bound_report(report):
    """Human-readable lines of a BoundReport."""
    lines = [
        f"dataset        {report.dataset_digest}",
        f"Q              {report.Q}",
        f"m              {report.m}",
        f"D^2            {_fmt(report.squared_diameter)}",
        f"margin sum     {_fmt(report.margin_sum)}",
        f"bound          {_fmt(report.bound_value)}",
        f"bound (<= m)   {_fmt(report.clamped)}",
        f"bound / Q^2    {_fmt(report.per_q2)}",
        f"alpha sum      {_fmt(report.alpha_sum)}",
        f"bound (alpha)  {_fmt(report.bound_via_alpha)}",
    ]
    if report.margins is not None:
        lines.append("pairs          k l   gap          gamma        d_kl         d_llw_kl")
        m = report.margins
        for p, (k, l) in enumerate(m.pairs):
            lines.append(
                f"               {k} {l}   {m.pair_gap[p]:<12.6g} {m.gamma[p]:<12.6g} "
                f"{m.d_kl[p]:<12.6g} {m.d_llw_kl[p]:<12.6g}".rstrip()
            )
    if report.loo_errors is not None:
        lines.append(f"loo errors     {report.loo_errors}")
        violations = report.error_check_violations()
        lines.append(
            f"alpha checks   {len(report.error_checks) - len(violations)}/{len(report.error_checks)} satisfied"
        )
    return lines


def format_selection_report(result, timing=False):
    """Table with one row per grid point, the selected one marked by '*'."""
    header = f"  {'C':>12} {'params':<20} {'bound':>12} {'bound/Q^2':>12} {'loo':>6}"
    if timing:
        header += f" {'time (s)':>10}"
    lines = [
        f"dataset {result.dataset_digest}",
        f"family {result.family}, Q = {result.Q}, m = {result.m}",
        header,
    ]
    for i, g in enumerate(result.grid):
        mark = "*" if i == result.best else " "
        bound = "failed" if g.failed else _fmt(g.bound)
        per_q2 = "-" if g.failed else _fmt(g.per_q2)
        row = (
            f"{mark} {_fmt(g.C):>12} {_fmt_params(g.params):<20} {bound:>12} "
            f"{per_q2:>12} {_fmt(g.loo_errors):>6}"
        )
        if timing:
            row += f" {g.wall_time:>10.3f}"
        lines.append(row)
    return lines


def header_line(timestamp=None):
    if timestamp is None:
        timestamp = datetime.datetime.now()
    return f"# msvm2 report generated {timestamp.strftime('%Y-%m-%d %H:%M:%S')}"


def mirror_path(path):
    """Path of the structured copy of a text report."""
    return Path(str(path) + ".yaml")


def write_report(path, lines, document, timestamp=None):
    """Write a text report and its YAML mirror.

    Both files start with the same timestamped header line; everything after
    it is deterministic.
    """
    header = header_line(timestamp)
    with open(path, "w") as f:
        f.write("\n".join([header] + list(lines)) + "\n")
    with open(mirror_path(path), "w") as f:
        f.write(header + "\n")
        yaml.safe_dump(document, stream=f, sort_keys=True)
