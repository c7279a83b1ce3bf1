"""Flat sectioned key-value configuration format with matrix tables.

The format is line-oriented and diff-friendly: ``[section]`` headers with
``key = value`` entries, and ``[matrix NAME]`` sections holding one matrix
row per line (whitespace-separated decimals, full round-trip precision).
Parse errors carry the offending line number.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError


class ConfigDocument:
    """Parsed sections (dict of dicts) plus named matrices."""

    def __init__(self, sections=None, matrices=None):
        self.sections = sections or {}
        self.matrices = matrices or {}

    def get(self, section, key, default=None, required=False, cast=str):
        sec = self.sections.get(section, {})
        if key not in sec:
            if required:
                raise ConfigError(f"missing required key '{section}.{key}'", field=f"{section}.{key}")
            return default
        raw = sec[key]
        try:
            if cast is bool:
                low = raw.strip().lower()
                if low in ("true", "yes", "1", "on"):
                    return True
                if low in ("false", "no", "0", "off"):
                    return False
                raise ValueError(raw)
            return cast(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"cannot parse '{raw}' as {cast.__name__}", field=f"{section}.{key}"
            ) from exc

    def matrix(self, name, required=False):
        if name not in self.matrices:
            if required:
                raise ConfigError(f"missing required matrix '{name}'", field=name)
            return None
        return self.matrices[name]


def parse_config(path):
    doc = ConfigDocument()
    current_section = None
    current_matrix = None
    rows = []

    def close_matrix():
        nonlocal current_matrix, rows
        if current_matrix is not None:
            if not rows:
                raise ConfigError(f"matrix '{current_matrix}' has no rows", field=current_matrix)
            widths = {len(r) for r in rows}
            if len(widths) != 1:
                raise ConfigError(
                    f"matrix '{current_matrix}' has ragged rows", field=current_matrix
                )
            doc.matrices[current_matrix] = np.array(rows, dtype=float)
        current_matrix = None
        rows = []

    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].split(";", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                close_matrix()
                header = line[1:-1].strip()
                if header.startswith("matrix "):
                    current_matrix = header[len("matrix ") :].strip()
                    if not current_matrix:
                        raise ConfigError("empty matrix name", line=lineno)
                    current_section = None
                else:
                    current_section = header
                    doc.sections.setdefault(current_section, {})
                continue
            if current_matrix is not None:
                try:
                    rows.append([float(tok) for tok in line.split()])
                except ValueError as exc:
                    raise ConfigError(f"bad matrix row: {line!r}", line=lineno) from exc
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
            if current_section is None:
                raise ConfigError("key/value outside of any [section]", line=lineno)
            key, value = line.split("=", 1)
            doc.sections[current_section][key.strip()] = value.strip()
    close_matrix()
    return doc


def write_config(path, sections, matrices=None):
    lines = []
    for name, entries in sections.items():
        lines.append(f"[{name}]")
        for key, value in entries.items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        lines.append("")
    for name, mat in (matrices or {}).items():
        lines.append(f"[matrix {name}]")
        for row in np.atleast_2d(np.asarray(mat, dtype=float)):
            lines.append(" ".join(repr(float(v)) for v in row))
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


# ---------------------------------------------------------------------------
# Design report serialization
# ---------------------------------------------------------------------------


def write_design_report(report, prefix):
    """Write <prefix>.cfg (gains + certificates) and <prefix>_trace.csv."""
    from ..gains.certificates import LOWER, UPPER  # noqa: F401 (kinds recorded below)

    sections = {
        "design": {
            "mode": report.mode,
            "alpha": float(report.alpha),
            "converged": report.converged,
            "truncated": report.truncated,
            "final_beta": float(report.final_beta),
            "epsilon": float(report.loop.epsilon),
        }
    }
    matrices = {"K": report.loop.K, "L": report.loop.L, "G": report.loop.G}
    if report.detection_certificate is not None:
        sections["detection_certificate"] = {
            "kind": report.detection_certificate.kind,
            "gamma_sq": float(report.detection_certificate.gamma_sq),
        }
        matrices["Q_detection"] = report.detection_certificate.lyapunov
    if report.performance_certificate is not None:
        sections["performance_certificate"] = {
            "kind": report.performance_certificate.kind,
            "gamma_sq": float(report.performance_certificate.gamma_sq),
        }
        matrices["P_performance"] = report.performance_certificate.lyapunov
    write_config(f"{prefix}.cfg", sections, matrices)

    import csv

    with open(f"{prefix}_trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "beta", "margin", "status"])
        for rec in report.iterations:
            writer.writerow([rec.index, repr(rec.beta), repr(rec.margin), rec.solver_status])


def read_design_report(path):
    """Load gains and certificates from a design report .cfg file."""
    from ..gains.certificates import GainCertificate, LoopMatrices

    doc = parse_config(path)
    eps = doc.get("design", "epsilon", default=1e-3, cast=float)
    loop = LoopMatrices(
        K=doc.matrix("K", required=True),
        L=doc.matrix("L", required=True),
        G=doc.matrix("G", required=True),
        epsilon=eps,
    )
    det = perf = None
    if "detection_certificate" in doc.sections:
        det = GainCertificate(
            kind=doc.get("detection_certificate", "kind", required=True),
            lyapunov=doc.matrix("Q_detection", required=True),
            gamma_sq=doc.get("detection_certificate", "gamma_sq", required=True, cast=float),
        )
    if "performance_certificate" in doc.sections:
        perf = GainCertificate(
            kind=doc.get("performance_certificate", "kind", required=True),
            lyapunov=doc.matrix("P_performance", required=True),
            gamma_sq=doc.get("performance_certificate", "gamma_sq", required=True, cast=float),
        )
    meta = dict(doc.sections.get("design", {}))
    return loop, det, perf, meta


def read_trace_betas(path):
    import csv

    betas = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            betas.append(float(row["beta"]))
    return np.array(betas)
