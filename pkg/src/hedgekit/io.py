"""Scored candidate datasets and calibration reports on disk.

Input is UTF-8 JSON Lines, one candidate per line::

    {"prompt_id": "p1", "candidate_id": "c0", "proxy_score": 1.0, "true_score": 0.3}

``true_score`` may be absent or null unless calibration needs it.  Reals are
written with ``repr`` (shortest round-trip form), so a write/read cycle
reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .exceptions import DataError
from .hedgetune import CalibrationResult
from .quantiles import SparsePoolWarning
from .samplers import Candidate, CandidatePool

CURVE_COLUMNS = ("theta", "true_mean", "proxy_mean", "kl")
CALIBRATION_COLUMNS = (
    "method",
    "theta_dagger",
    "regime",
    "converged",
    "bracket_low",
    "bracket_high",
    "mc_samples",
    "seed",
)
CURVES_FILE = "curves.csv"
CALIBRATION_FILE = "calibration.json"


@dataclass(frozen=True)
class DatasetManifest:
    path: str
    pools: int
    candidates_total: int
    truth_present: bool
    checksum: int

    def __post_init__(self):
        if self.pools < 1 or self.candidates_total < self.pools:
            raise DataError("manifest counts are inconsistent")


@dataclass(frozen=True)
class RewardCurvePoint:
    theta: float
    true_mean: float
    proxy_mean: float
    kl: float


def checksum(path: str | Path) -> int:
    """64-bit BLAKE2b digest of the file content."""
    h = hashlib.blake2b(digest_size=8)
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return int.from_bytes(h.digest(), "big")


def _real(value, key: str, lineno: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DataError(f"line {lineno}: {key} must be a number, got {value!r}")
    x = float(value)
    if not math.isfinite(x):
        raise DataError(f"line {lineno}: non-finite {key} {value!r}")
    return x


def _text(value, key: str, lineno: int) -> str:
    if not isinstance(value, str) or not value:
        raise DataError(f"line {lineno}: {key} must be a non-empty string, got {value!r}")
    return value


def load_pools(
    path: str | Path, *, require_truth: bool = False, quantiles: bool = True
) -> tuple[list[CandidatePool], DatasetManifest]:
    """Read a JSON Lines dataset into per-prompt pools.

    Pools appear in order of first occurrence of their ``prompt_id`` and keep
    candidates in file order.  Blank lines are skipped.

    Raises:
        DataError: malformed line, missing field (with its line number),
            duplicate ``(prompt_id, candidate_id)``, non-finite score,
            missing ``true_score`` when ``require_truth``, or no records.
    """
    path = Path(path)
    groups: dict[str, list[Candidate]] = {}
    seen: set[tuple[str, str]] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"line {lineno}: expected an object")
            for key in ("prompt_id", "candidate_id", "proxy_score"):
                if key not in rec:
                    raise DataError(f"line {lineno}: missing field {key!r}")
            pid = _text(rec["prompt_id"], "prompt_id", lineno)
            cid = _text(rec["candidate_id"], "candidate_id", lineno)
            if (pid, cid) in seen:
                raise DataError(f"line {lineno}: duplicate candidate {cid!r} in prompt {pid!r}")
            seen.add((pid, cid))
            proxy = _real(rec["proxy_score"], "proxy_score", lineno)
            truth = rec.get("true_score")
            if truth is None:
                if require_truth:
                    raise DataError(f"line {lineno}: missing field 'true_score'")
            else:
                truth = _real(truth, "true_score", lineno)
            groups.setdefault(pid, []).append(Candidate(cid, proxy, truth))
    if not groups:
        raise DataError(f"{path}: no pools")
    pools = [CandidatePool(pid, tuple(c)) for pid, c in groups.items()]
    if quantiles:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", SparsePoolWarning)
            pools = [p.with_quantiles() for p in pools]
        sparse = sum(issubclass(w.category, SparsePoolWarning) for w in caught)
        if sparse:
            warnings.warn(f"{sparse} pool(s) in {path} have fewer than 16 candidates", SparsePoolWarning, stacklevel=2)
    manifest = DatasetManifest(
        path=str(path),
        pools=len(pools),
        candidates_total=sum(len(p) for p in pools),
        truth_present=all(p.has_truth for p in pools),
        checksum=checksum(path),
    )
    return pools, manifest


def write_pools(path: str | Path, pools: Sequence[CandidatePool]) -> DatasetManifest:
    """Write pools as JSON Lines with a fixed key order."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for pool in pools:
            for c in pool.candidates:
                rec = {"prompt_id": pool.prompt_id, "candidate_id": c.candidate_id, "proxy_score": c.proxy}
                if c.truth is not None:
                    rec["true_score"] = c.truth
                fh.write(json.dumps(rec, allow_nan=False) + "\n")
    return DatasetManifest(
        path=str(path),
        pools=len(pools),
        candidates_total=sum(len(p) for p in pools),
        truth_present=all(p.has_truth for p in pools),
        checksum=checksum(path),
    )


def calibration_row(result: CalibrationResult) -> dict:
    return {
        "method": result.method.value,
        "theta_dagger": float(result.theta_dagger),
        "regime": result.regime.value,
        "converged": bool(result.converged),
        "bracket_low": float(result.bracket[0]),
        "bracket_high": float(result.bracket[1]),
        "mc_samples": int(result.mc_samples),
        "seed": result.seed,
    }


def format_curves(curves: Sequence[RewardCurvePoint]) -> str:
    """Curves CSV text sorted by ``theta``; reals in shortest round-trip form."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for pt in sorted(curves, key=lambda p: p.theta):
        w.writerow([repr(float(getattr(pt, c))) for c in CURVE_COLUMNS])
    return buf.getvalue()


def write_curves(path: str | Path, curves: Sequence[RewardCurvePoint]) -> Path:
    path = Path(path)
    path.write_text(format_curves(curves), encoding="utf-8", newline="")
    return path


def read_curves(path: str | Path) -> list[RewardCurvePoint]:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CURVE_COLUMNS:
        raise DataError(f"{path}: unexpected curves header")
    return [RewardCurvePoint(*(float(x) for x in r)) for r in rows[1:]]


def write_calibrations(path: str | Path, results: Sequence[CalibrationResult]) -> Path:
    path = Path(path)
    doc = {"columns": list(CALIBRATION_COLUMNS), "rows": [calibration_row(r) for r in results]}
    path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def read_calibrations(path: str | Path) -> list[dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("columns") != list(CALIBRATION_COLUMNS):
        raise DataError(f"{path}: unexpected calibration columns")
    return doc["rows"]


def write_report(
    path: str | Path, results: Sequence[CalibrationResult], curves: Sequence[RewardCurvePoint]
) -> dict[str, Path]:
    """Write ``calibration.json`` and ``curves.csv`` into directory ``path``.

    Returns the written files keyed by kind.  I/O failures propagate as
    ``OSError``.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return {
        "calibration": write_calibrations(out / CALIBRATION_FILE, results),
        "curves": write_curves(out / CURVES_FILE, curves),
    }
