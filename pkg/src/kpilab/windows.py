"""Analysis windows: fixed-size cutouts around flagged samples.

Windows are the unit of classification and labeling.  They serialize to JSON
lines so detector output can be labeled out of process and fed back into the
evaluation pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = ["AnalysisWindow", "write_windows_jsonl", "read_windows_jsonl", "OTHER_LABEL"]

OTHER_LABEL = "other"


@dataclass(frozen=True)
class AnalysisWindow:
    """A 2m-sample cutout centered on a flagged sample.

    ``start`` is the global index of the first sample (negative when the
    window hangs over the series head and had to be padded); ``source_index``
    is the flagged sample the window was anchored on.  ``values`` holds the
    residual-scale samples the classifiers consume; ``raw_values`` optionally
    keeps the same cutout of the unprocessed series for display.
    """

    values: np.ndarray
    source_index: int
    start: int
    series_id: str = "series"
    fold: int = 0
    padded: bool = False
    labels: tuple[str, ...] = ()
    noise_bin: str | None = None
    sigma: float | None = None
    raw_values: np.ndarray | None = None

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("window values must be a non-empty 1-d array")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if self.raw_values is not None:
            raw = np.array(self.raw_values, dtype=float)
            if raw.shape != vals.shape:
                raise ValueError("raw_values must match the window length")
            raw.flags.writeable = False
            object.__setattr__(self, "raw_values", raw)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def end(self) -> int:
        """Exclusive global end index."""
        return self.start + len(self.values)

    def __len__(self) -> int:
        return int(self.values.size)

    def with_labels(self, labels) -> "AnalysisWindow":
        return replace(self, labels=tuple(labels))

    def with_noise_bin(self, noise_bin: str | None, sigma: float | None = None) -> "AnalysisWindow":
        return replace(self, noise_bin=noise_bin, sigma=self.sigma if sigma is None else sigma)

    def to_dict(self) -> dict:
        d = {
            "series_id": self.series_id,
            "fold": self.fold,
            "start_index": self.start,
            "source_index": self.source_index,
            "values": [float(v) for v in self.values],
            "padded": self.padded,
            "labels": list(self.labels),
            "noise_bin": self.noise_bin,
        }
        if self.sigma is not None:
            d["sigma"] = self.sigma
        if self.raw_values is not None:
            d["raw_values"] = [float(v) for v in self.raw_values]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisWindow":
        return cls(
            values=np.asarray(d["values"], dtype=float),
            source_index=int(d["source_index"]),
            start=int(d["start_index"]),
            series_id=str(d.get("series_id", "series")),
            fold=int(d.get("fold", 0)),
            padded=bool(d.get("padded", False)),
            labels=tuple(d.get("labels") or ()),
            noise_bin=d.get("noise_bin"),
            sigma=None if d.get("sigma") is None else float(d["sigma"]),
            raw_values=None if d.get("raw_values") is None else np.asarray(d["raw_values"], dtype=float),
        )


def write_windows_jsonl(windows, path) -> None:
    with open(path, "w") as fh:
        for w in windows:
            fh.write(json.dumps(w.to_dict(), sort_keys=True))
            fh.write("\n")


def read_windows_jsonl(path) -> list[AnalysisWindow]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(AnalysisWindow.from_dict(json.loads(line)))
    return out
