"""Container for averaged survival probabilities versus sequence length."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DecaySeries:
    """Mean survival F(m), its standard error and the sample count per length."""

    m: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    k: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.int64)
        mean = np.asarray(self.mean, dtype=float)
        stderr = np.asarray(self.stderr, dtype=float)
        k = np.broadcast_to(np.asarray(self.k, dtype=np.int64), m.shape).copy()
        if not (m.shape == mean.shape == stderr.shape) or m.ndim != 1:
            raise ValueError("m, mean and stderr must be 1-d arrays of equal length")
        if m.size and np.any(np.diff(m) <= 0):
            raise ValueError("sequence lengths must be strictly increasing")
        if np.any(k < 1):
            raise ValueError("every length needs at least one sample")
        for name, arr in (("m", m), ("mean", mean), ("stderr", stderr), ("k", k)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.m)

    @classmethod
    def from_samples(cls, m, samples, metadata=None) -> "DecaySeries":
        """Build from a list of per-length sample arrays (one value per sequence)."""
        means, errs, ks = [], [], []
        for s in samples:
            s = np.asarray(s, dtype=float)
            means.append(_pairwise_mean(s))
            errs.append(float(np.std(s, ddof=1) / np.sqrt(len(s))) if len(s) > 1 else 0.0)
            ks.append(len(s))
        return cls(np.asarray(m), np.asarray(means), np.asarray(errs), np.asarray(ks),
                   dict(metadata or {}))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "F_mean", "F_stderr", "K"])
        for row in zip(self.m, self.mean, self.stderr, self.k):
            w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), int(row[3])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, metadata=None) -> "DecaySeries":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(np.array([int(r["m"]) for r in rows]),
                   np.array([float(r["F_mean"]) for r in rows]),
                   np.array([float(r["F_stderr"]) for r in rows]),
                   np.array([int(r["K"]) for r in rows]), dict(metadata or {}))

    def metadata_json(self) -> str:
        return json.dumps(self.metadata, indent=2, sort_keys=True, default=_json_default)


def _pairwise_mean(x: np.ndarray) -> float:
    # numpy's add.reduce sums contiguous float arrays pairwise, so the result
    # does not depend on how the samples were produced
    return float(np.add.reduce(np.ascontiguousarray(x, dtype=float)) / len(x))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
