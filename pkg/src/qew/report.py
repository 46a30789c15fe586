"""Verification reports and profile CSV export."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cohomogeneity import Profile, profile_mu
from .errors import DomainError

CSV_HEADER = "r,w,wp,f,fp,R,mu_pointwise"


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tol: float
    passed: bool

    @classmethod
    def below(cls, name: str, residual: float, tol: float) -> "Check":
        """Pass when ``|residual| <= tol``."""
        return cls(name, float(residual), float(tol), bool(abs(residual) <= tol))

    @classmethod
    def margin(cls, name: str, margin: float, tol: float) -> "Check":
        """Pass when ``margin >= -tol``."""
        return cls(name, float(margin), float(tol), bool(margin >= -tol))


@dataclass
class VerificationReport:
    scenario: str
    kind: str = ""
    checks: list[Check] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    timing: float = 0.0

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, checks) -> None:
        self.checks.extend(checks)


def _fmt(x: float) -> str:
    return f"{x:.6e}"


def emit_report(report: VerificationReport, fmt: str = "text") -> bytes:
    """Deterministic serialization; wall-clock timing is deliberately left out."""
    verdict = "PASS" if report.overall else "FAIL"
    if fmt == "text":
        lines = [f"SCENARIO {report.scenario} kind={report.kind or '-'}"]
        lines += [
            f"CHECK {c.name} residual={_fmt(c.value)} tol={_fmt(c.tol)} {'PASS' if c.passed else 'FAIL'}"
            for c in report.checks
        ]
        lines += [f"NOTE {n}" for n in report.notes]
        lines.append(f"OVERALL {verdict}")
        return ("\n".join(lines) + "\n").encode()
    if fmt == "jsonl":
        rows = [{"scenario": report.scenario, "kind": report.kind}]
        rows += [
            {"check": c.name, "residual": _fmt(c.value), "tol": _fmt(c.tol), "verdict": "PASS" if c.passed else "FAIL"}
            for c in report.checks
        ]
        rows += [{"note": n} for n in report.notes]
        rows.append({"overall": verdict})
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows).encode()
    raise ValueError(f"unknown report format {fmt!r}")


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def profile_csv(profile: Profile) -> bytes:
    if len(profile) == 0:
        raise DomainError("cannot export an empty profile")
    mu = profile_mu(profile).pointwise
    cols = np.column_stack([profile.r, profile.w, profile.wp, profile.f, profile.fp,
                            profile.scalar_curvature(), mu])
    lines = [CSV_HEADER]
    lines += [",".join(f"{v:.17g}" for v in row) for row in cols]
    lines.append(f"# classification={profile.classification}")
    return ("\n".join(lines) + "\n").encode()


def emit_csv(profile: Profile, path: str | os.PathLike) -> None:
    atomic_write(path, profile_csv(profile))
