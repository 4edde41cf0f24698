"""Local HTTP service for labeling analysis windows by hand.

Serves the windows of one JSONL file to a browser UI, collects label
assignments, and persists them to a JSON file that the evaluation side can
consume.  The store is guarded by a single lock and every write goes through
an atomic temp-file rename, so labels survive a process kill between
requests and concurrent PUTs to the same window serialize as last-write-wins.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .simulate import SUBCLASSES
from .windows import OTHER_LABEL, AnalysisWindow

__all__ = ["LABEL_VOCABULARY", "LabelStore", "apply_labels", "create_app", "run_service"]

LABEL_VOCABULARY: tuple[str, ...] = SUBCLASSES + (OTHER_LABEL,)


def _canonical(labels) -> list[str]:
    """Dedupe and order labels by vocabulary position; reject unknown ones."""
    unique = set(labels)
    unknown = sorted(unique - set(LABEL_VOCABULARY))
    if unknown:
        raise ValueError(f"labels outside vocabulary: {unknown}")
    return [label for label in LABEL_VOCABULARY if label in unique]


class LabelStore:
    """Label assignments for a fixed window list, persisted as JSON.

    Window ids are positions in the window list, so they are stable for a
    given windows file.  An empty label list clears the assignment but keeps
    the version counter moving forward.
    """

    def __init__(self, windows: list[AnalysisWindow], path: str | Path) -> None:
        self.windows = list(windows)
        self.path = Path(path)
        self._lock = threading.Lock()
        self._assignments: dict[int, dict] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        data = json.loads(self.path.read_text())
        for entry in data.get("windows", []):
            wid = int(entry["id"])
            if 0 <= wid < len(self.windows):
                self._assignments[wid] = {
                    "labels": _canonical(entry["labels"]),
                    "version": int(entry.get("version", 1)),
                }

    def __len__(self) -> int:
        return len(self.windows)

    def labels_of(self, window_id: int) -> list[str]:
        entry = self._assignments.get(window_id)
        return list(entry["labels"]) if entry else []

    def version_of(self, window_id: int) -> int:
        entry = self._assignments.get(window_id)
        return entry["version"] if entry else 0

    def assign(self, window_id: int, labels) -> dict:
        """Set a window's labels, bump its version, and flush to disk."""
        if not 0 <= window_id < len(self.windows):
            raise KeyError(window_id)
        canonical = _canonical(labels)
        with self._lock:
            version = self.version_of(window_id) + 1
            self._assignments[window_id] = {"labels": canonical, "version": version}
            self._flush()
        return {"id": window_id, "labels": canonical, "version": version}

    def export(self) -> dict:
        with self._lock:
            return self._export_unlocked()

    def _export_unlocked(self) -> dict:
        labeled = [
            {"id": wid, "labels": list(entry["labels"]), "version": entry["version"]}
            for wid, entry in sorted(self._assignments.items())
            if entry["labels"]
        ]
        return {"vocabulary": list(LABEL_VOCABULARY), "windows": labeled}

    def _flush(self) -> None:
        # temp file in the same directory so os.replace stays atomic
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_text(json.dumps(self._export_unlocked(), indent=2) + "\n")
        os.replace(tmp, self.path)

    def progress(self) -> dict:
        labeled = [e for e in self._assignments.values() if e["labels"]]
        with_other = sum(1 for e in labeled if OTHER_LABEL in e["labels"])
        return {
            "total": len(self.windows),
            "labeled": len(labeled),
            "other_fraction": with_other / len(labeled) if labeled else 0.0,
        }


def apply_labels(windows: list[AnalysisWindow], export: dict) -> list[AnalysisWindow]:
    """Attach exported labels to their windows; unlabeled windows are dropped."""
    by_id = {}
    for entry in export["windows"]:
        by_id[int(entry["id"])] = _canonical(entry["labels"])
    out = []
    for wid, window in enumerate(windows):
        labels = by_id.pop(wid, None)
        if labels:
            out.append(window.with_labels(tuple(labels)))
    if by_id:
        raise ValueError(f"labels reference unknown window ids: {sorted(by_id)}")
    return out


class _LabelsBody(BaseModel):
    labels: list[str]


def _window_meta(store: LabelStore, window_id: int) -> dict:
    w = store.windows[window_id]
    return {
        "id": window_id,
        "series_id": w.series_id,
        "fold": w.fold,
        "source_index": w.source_index,
        "start": w.start,
        "end": w.end,
        "padded": w.padded,
        "noise_bin": w.noise_bin,
        "sigma": w.sigma,
        "values": w.values.tolist(),
        "raw_values": w.raw_values.tolist() if w.raw_values is not None else None,
        "labels": store.labels_of(window_id),
        "version": store.version_of(window_id),
    }


def create_app(store: LabelStore, static_dir: str | Path | None = None) -> FastAPI:
    """Build the labeling API around one store.

    ``static_dir`` points at the built UI; when given it is mounted at the
    root so the same service hosts both the API and the page that talks to it.
    """
    app = FastAPI(title="kpilab labeler")

    @app.get("/vocabulary")
    def vocabulary() -> list[str]:
        return list(LABEL_VOCABULARY)

    @app.get("/windows")
    def list_windows(status: str = "all", offset: int = 0, limit: int = 50) -> dict:
        if status not in ("all", "labeled", "unlabeled"):
            raise HTTPException(422, detail=f"unknown status filter {status!r}")
        if offset < 0 or limit < 0:
            raise HTTPException(422, detail="offset and limit must be >= 0")
        ids = range(len(store.windows))
        if status == "labeled":
            ids = [i for i in ids if store.labels_of(i)]
        elif status == "unlabeled":
            ids = [i for i in ids if not store.labels_of(i)]
        else:
            ids = list(ids)
        page = ids[offset : offset + limit]
        return {
            "total": len(ids),
            "offset": offset,
            "windows": [_window_meta(store, i) for i in page],
        }

    @app.get("/windows/{window_id}")
    def get_window(window_id: int) -> dict:
        if not 0 <= window_id < len(store.windows):
            raise HTTPException(404, detail=f"no window with id {window_id}")
        return _window_meta(store, window_id)

    @app.put("/windows/{window_id}/labels")
    def put_labels(window_id: int, body: _LabelsBody) -> dict:
        try:
            record = store.assign(window_id, body.labels)
        except KeyError:
            raise HTTPException(404, detail=f"no window with id {window_id}")
        except ValueError as exc:
            raise HTTPException(422, detail=str(exc))
        return record

    @app.get("/progress")
    def progress() -> dict:
        return store.progress()

    @app.get("/export")
    def export() -> dict:
        return store.export()

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def run_service(
    windows: list[AnalysisWindow],
    out_path: str | Path,
    port: int,
    host: str = "127.0.0.1",
    static_dir: str | Path | None = None,
) -> None:
    """Serve the labeling API until interrupted.  Binds locally by default."""
    import uvicorn

    store = LabelStore(windows, out_path)
    app = create_app(store, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
