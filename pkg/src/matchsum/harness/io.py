"""JSON-lines pair records.

One object per line::

    {"pair_id": "...", "K1": [[...]], "K2": [[...]],
     "matches": [[x1, y1, x2, y2], ...],
     "gt": {"R": [[...]], "t": [...]},        # optional, X2 = R X1 + t
     "gt_matches": [[x1, y1, x2, y2], ...]}   # optional
"""

import json
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ..geometry import CameraIntrinsics, Match, RelativePose


class DataError(Exception):
    """Malformed or unusable input data."""

    def __init__(self, msg, lineno=None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {msg}" if lineno is not None else msg)


class CalibrationRequired(DataError):
    pass


class GroundTruth(NamedTuple):
    R: np.ndarray
    t: np.ndarray

    @property
    def pose(self):
        return RelativePose(self.R, self.t)


@dataclass(frozen=True)
class PairRecord:
    pair_id: str
    K1: Optional[CameraIntrinsics]
    K2: Optional[CameraIntrinsics]
    matches: np.ndarray                    # (N, 4) pixels
    gt: Optional[GroundTruth] = None
    gt_matches: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.matches)

    @property
    def p1(self):
        return self.matches[:, :2]

    @property
    def p2(self):
        return self.matches[:, 2:]

    def calibrated(self):
        """Batched Match with normalized coordinates filled in."""
        if self.K1 is None or self.K2 is None:
            raise CalibrationRequired(f"pair {self.pair_id!r} has no intrinsics")
        return Match(self.p1, self.p2, self.K1.normalize(self.p1), self.K2.normalize(self.p2))

    def to_json(self):
        d = {"pair_id": self.pair_id}
        if self.K1 is not None:
            d["K1"] = self.K1.matrix.tolist()
        if self.K2 is not None:
            d["K2"] = self.K2.matrix.tolist()
        d["matches"] = self.matches.tolist()
        if self.gt is not None:
            d["gt"] = {"R": np.asarray(self.gt.R).tolist(), "t": np.asarray(self.gt.t).tolist()}
        if self.gt_matches is not None:
            d["gt_matches"] = self.gt_matches.tolist()
        return d


def _array(obj, shape, name, lineno):
    try:
        a = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise DataError(f"{name} is not numeric", lineno) from None
    if a.size == 0 and shape[0] is None:
        a = a.reshape(0, shape[1])
    if a.ndim != len(shape) or any(s is not None and s != n for s, n in zip(shape, a.shape)):
        raise DataError(f"{name} has shape {a.shape}, expected {shape}", lineno)
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} contains non-finite values", lineno)
    return a


def parse_record(d, lineno=None):
    if not isinstance(d, dict):
        raise DataError("record is not a JSON object", lineno)
    if "pair_id" not in d or "matches" not in d:
        raise DataError("record needs 'pair_id' and 'matches'", lineno)
    Ks = []
    for key in ("K1", "K2"):
        if d.get(key) is None:
            Ks.append(None)
            continue
        try:
            Ks.append(CameraIntrinsics.from_matrix(_array(d[key], (3, 3), key, lineno)))
        except ValueError as err:
            raise DataError(f"{key}: {err}", lineno) from None
    gt = None
    if d.get("gt") is not None:
        g = d["gt"]
        if not isinstance(g, dict) or "R" not in g or "t" not in g:
            raise DataError("gt needs 'R' and 't'", lineno)
        R = _array(g["R"], (3, 3), "gt.R", lineno)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6):
            raise DataError("gt.R is not orthonormal", lineno)
        gt = GroundTruth(R, _array(g["t"], (3,), "gt.t", lineno))
    gtm = None
    if d.get("gt_matches") is not None:
        gtm = _array(d["gt_matches"], (None, 4), "gt_matches", lineno)
    return PairRecord(str(d["pair_id"]), Ks[0], Ks[1],
                      _array(d["matches"], (None, 4), "matches", lineno), gt, gtm)


def load_pairs(path):
    """Lazily yield PairRecords from a JSON-lines file."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot open {path}: {err.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as err:
                raise DataError(f"invalid JSON ({err.msg})", lineno) from None
            yield parse_record(d, lineno)


def emit_pairs(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json()) + "\n")
