"""Human verification of detection candidates.

Detections are grouped into one task per positive image. Annotators pull
tasks over an HTTP JSON API, judge every candidate box accept/reject, and
a box counts as a verified camera once a majority of the quorum (default
3 annotators, majority 2) accepts it.

State lives in an append-only journal of sequenced records plus an optional
snapshot; replaying the journal reconstructs the store exactly, so a crash
between any two writes loses nothing. A file lock keeps the store
single-writer; in-process reads and writes serialize through one mutex.
"""

from __future__ import annotations

import fcntl
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

log = logging.getLogger(__name__)


class VerifyError(Exception):
    pass


class TaskNotFound(VerifyError):
    pass


class AnnotatorConflict(VerifyError):
    pass


class StoreLocked(VerifyError):
    pass


@dataclass
class Verdict:
    annotator: str
    decisions: List[bool]
    timestamp: float


@dataclass
class VerificationTask:
    task_id: str
    image_id: str
    city: str
    boxes: List[List[int]]  # x, y, w, h
    verdicts: List[Verdict] = field(default_factory=list)

    def state(self, quorum: int) -> str:
        return "complete" if len(self.verdicts) >= quorum else "open"

    def judged_by(self, annotator: str) -> bool:
        return any(v.annotator == annotator for v in self.verdicts)


@dataclass
class VerifiedDetection:
    image_id: str
    city: str
    box: List[int]
    accepts: int
    verified: bool


@dataclass
class ExportResult:
    counts: Dict[str, int]  # city -> verified detections
    detections: List[VerifiedDetection]
    complete_tasks: int
    incomplete_tasks: int


def majority_of(quorum: int) -> int:
    return quorum // 2 + 1


class VerifyStore:
    """Journaled task store. All public methods are thread-safe."""

    def __init__(self, root, quorum: int = 3, fsync: bool = True):
        if quorum < 1:
            raise ValueError("quorum must be at least 1")
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.quorum = quorum
        self.fsync = fsync
        self.lock = threading.RLock()
        self.images: Dict[str, dict] = {}  # image_id -> {city, path}
        self.tasks: Dict[str, VerificationTask] = {}
        self.seq = 0

        self._lock_fh = open(self.root / ".lock", "a")
        try:
            fcntl.flock(self._lock_fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            self._lock_fh.close()
            raise StoreLocked(f"{self.root}: store is in use by another process")

        self._load()
        self._journal_fh = open(self.journal_path, "a")

    @property
    def journal_path(self) -> Path:
        return self.root / "journal.jsonl"

    @property
    def snapshot_path(self) -> Path:
        return self.root / "snapshot.json"

    # -- persistence ----------------------------------------------------------

    def _load(self) -> None:
        if self.snapshot_path.exists():
            snap = json.loads(self.snapshot_path.read_text())
            self.seq = snap["seq"]
            self.images = snap["images"]
            for t in snap["tasks"]:
                task = VerificationTask(t["task_id"], t["image_id"], t["city"], t["boxes"])
                task.verdicts = [Verdict(v["annotator"], v["decisions"], v["timestamp"]) for v in t["verdicts"]]
                self.tasks[task.task_id] = task
        if not self.journal_path.exists():
            return
        raw = self.journal_path.read_bytes()
        good_end = raw.rfind(b"\n") + 1
        if good_end < len(raw):
            log.warning("%s: dropping torn journal tail (%d bytes)", self.journal_path, len(raw) - good_end)
            with open(self.journal_path, "r+b") as fh:
                fh.truncate(good_end)
            raw = raw[:good_end]
        for line in raw.decode().splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            if event["seq"] <= self.seq:
                continue  # already folded into the snapshot
            if event["seq"] != self.seq + 1:
                raise VerifyError(
                    f"{self.journal_path}: journal sequence jumps from {self.seq} to {event['seq']}"
                )
            self._apply(event)
            self.seq = event["seq"]

    def _append(self, event: dict) -> None:
        """Write-ahead: the event reaches disk before memory."""
        event["seq"] = self.seq + 1
        self._journal_fh.write(json.dumps(event, sort_keys=True) + "\n")
        self._journal_fh.flush()
        if self.fsync:
            os.fsync(self._journal_fh.fileno())
        self._apply(event)
        self.seq = event["seq"]

    def _apply(self, event: dict) -> None:
        op = event["op"]
        if op == "register_image":
            self.images[event["image_id"]] = {"city": event["city"], "path": event["path"]}
        elif op == "create_task":
            self.tasks[event["task_id"]] = VerificationTask(
                event["task_id"], event["image_id"], event["city"], [list(b) for b in event["boxes"]]
            )
        elif op == "verdict":
            task = self.tasks[event["task_id"]]
            task.verdicts.append(Verdict(event["annotator"], list(event["decisions"]), event["timestamp"]))
        else:
            raise VerifyError(f"{self.journal_path}: unknown journal op {op!r}")

    def snapshot(self) -> None:
        """Fold current state into snapshot.json (journal is kept for audit)."""
        with self.lock:
            payload = {
                "seq": self.seq,
                "images": self.images,
                "tasks": [
                    {
                        "task_id": t.task_id,
                        "image_id": t.image_id,
                        "city": t.city,
                        "boxes": t.boxes,
                        "verdicts": [
                            {"annotator": v.annotator, "decisions": v.decisions, "timestamp": v.timestamp}
                            for v in t.verdicts
                        ],
                    }
                    for t in sorted(self.tasks.values(), key=lambda t: t.task_id)
                ],
            }
            tmp = self.snapshot_path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(payload, sort_keys=True))
            os.replace(tmp, self.snapshot_path)

    def close(self) -> None:
        with self.lock:
            self._journal_fh.close()
            fcntl.flock(self._lock_fh.fileno(), fcntl.LOCK_UN)
            self._lock_fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- operations -----------------------------------------------------------

    def register_images(self, records: Sequence) -> int:
        """Make images known to the store; records carry image_id, point_id or
        city, and cache_path. Returns how many were new."""
        added = 0
        with self.lock:
            for r in records:
                image_id = r.image_id
                city = getattr(r, "city", None) or r.point_id.rsplit("-", 1)[0]
                path = r.cache_path
                known = self.images.get(image_id)
                if known is not None:
                    if known["path"] != str(path):
                        log.warning("image %s already registered with a different path; keeping first", image_id)
                    continue
                self._append({"op": "register_image", "image_id": image_id, "city": city, "path": str(path)})
                added += 1
        return added

    def create_tasks(self, detections: Sequence) -> int:
        """One task per positive image; idempotent on re-import."""
        by_image: Dict[str, List[List[int]]] = {}
        for det in detections:
            by_image.setdefault(det.image_id, []).append(list(det.bbox))
        created = 0
        with self.lock:
            for image_id in sorted(by_image):
                if image_id not in self.images:
                    log.warning("detections for unknown image %s rejected", image_id)
                    continue
                if image_id in self.tasks:
                    existing = self.tasks[image_id]
                    if existing.boxes != by_image[image_id]:
                        log.warning(
                            "re-import of %s carries %d boxes but the task has %d; keeping the task",
                            image_id,
                            len(by_image[image_id]),
                            len(existing.boxes),
                        )
                    continue
                self._append(
                    {
                        "op": "create_task",
                        "task_id": image_id,
                        "image_id": image_id,
                        "city": self.images[image_id]["city"],
                        "boxes": by_image[image_id],
                    }
                )
                created += 1
        return created

    def next_task(self, annotator: str) -> Optional[VerificationTask]:
        """Open task this annotator has not judged; fewest verdicts first."""
        if not annotator:
            raise ValueError("annotator id must be non-empty")
        with self.lock:
            best = None
            for task in self.tasks.values():
                if task.state(self.quorum) == "complete" or task.judged_by(annotator):
                    continue
                key = (len(task.verdicts), task.task_id)
                if best is None or key < best[0]:
                    best = (key, task)
            return None if best is None else best[1]

    def submit_verdict(self, task_id: str, annotator: str, decisions: Sequence) -> str:
        if not annotator:
            raise ValueError("annotator id must be non-empty")
        with self.lock:
            task = self.tasks.get(task_id)
            if task is None:
                raise TaskNotFound(f"no task {task_id!r}")
            if task.state(self.quorum) == "complete":
                raise AnnotatorConflict(f"task {task_id} is already complete")
            if task.judged_by(annotator):
                raise AnnotatorConflict(f"annotator {annotator!r} already judged task {task_id}")
            if not isinstance(decisions, (list, tuple)) or len(decisions) != len(task.boxes):
                raise ValueError(f"task {task_id} has {len(task.boxes)} boxes; decisions must cover each one")
            if not all(isinstance(d, bool) for d in decisions):
                raise ValueError("decisions must be true/false per box")
            self._append(
                {
                    "op": "verdict",
                    "task_id": task_id,
                    "annotator": annotator,
                    "decisions": list(decisions),
                    "timestamp": time.time(),
                }
            )
            return task.state(self.quorum)

    def progress(self) -> dict:
        with self.lock:
            complete = sum(1 for t in self.tasks.values() if t.state(self.quorum) == "complete")
            by_annotator: Dict[str, int] = {}
            verdicts = 0
            for t in self.tasks.values():
                for v in t.verdicts:
                    verdicts += 1
                    by_annotator[v.annotator] = by_annotator.get(v.annotator, 0) + 1
            return {
                "tasks": len(self.tasks),
                "complete": complete,
                "open": len(self.tasks) - complete,
                "verdicts": verdicts,
                "quorum": self.quorum,
                "by_annotator": dict(sorted(by_annotator.items())),
            }

    def export_verified(self) -> ExportResult:
        """Per-city verified detection counts over complete tasks.

        A box is verified when at least a majority of the quorum accepted
        it. Incomplete tasks contribute nothing and are reported.
        """
        need = majority_of(self.quorum)
        with self.lock:
            counts: Dict[str, int] = {}
            detections: List[VerifiedDetection] = []
            complete = incomplete = 0
            for task in sorted(self.tasks.values(), key=lambda t: t.task_id):
                if task.state(self.quorum) != "complete":
                    incomplete += 1
                    continue
                complete += 1
                for i, box in enumerate(task.boxes):
                    accepts = sum(1 for v in task.verdicts if v.decisions[i])
                    verified = accepts >= need
                    detections.append(VerifiedDetection(task.image_id, task.city, box, accepts, verified))
                    if verified:
                        counts[task.city] = counts.get(task.city, 0) + 1
            return ExportResult(dict(sorted(counts.items())), detections, complete, incomplete)

    def image_path(self, image_id: str) -> Path:
        with self.lock:
            info = self.images.get(image_id)
        if info is None:
            raise TaskNotFound(f"no image {image_id!r}")
        return Path(info["path"])


# -- HTTP JSON API -------------------------------------------------------------

from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer  # noqa: E402
from urllib.parse import parse_qs, unquote, urlparse  # noqa: E402

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


def task_payload(task: VerificationTask) -> dict:
    """What an annotator is allowed to see: boxes, never others' verdicts."""
    return {
        "task_id": task.task_id,
        "image_id": task.image_id,
        "image_url": f"/api/images/{task.image_id}",
        "boxes": [list(b) for b in task.boxes],
    }


class _ApiHandler(BaseHTTPRequestHandler):
    server: "VerifyService"

    def log_message(self, *args):
        pass

    def _json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _bytes(self, status: int, content_type: str, body: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):  # noqa: N802 (http.server API)
        url = urlparse(self.path)
        store = self.server.store
        if url.path == "/api/tasks/next":
            query = {k: v[0] for k, v in parse_qs(url.query).items()}
            annotator = query.get("annotator", "")
            if not annotator:
                self._json(400, {"error": "annotator query parameter is required"})
                return
            task = store.next_task(annotator)
            progress = store.progress()
            self._json(200, {"task": None if task is None else task_payload(task), "progress": progress})
        elif url.path == "/api/progress":
            self._json(200, store.progress())
        elif url.path == "/api/export/verified":
            result = store.export_verified()
            self._json(
                200,
                {
                    "counts": result.counts,
                    "complete_tasks": result.complete_tasks,
                    "incomplete_tasks": result.incomplete_tasks,
                    "detections": [
                        {
                            "image_id": d.image_id,
                            "city": d.city,
                            "box": d.box,
                            "accepts": d.accepts,
                            "verified": d.verified,
                        }
                        for d in result.detections
                    ],
                },
            )
        elif url.path.startswith("/api/images/"):
            image_id = unquote(url.path[len("/api/images/") :])
            try:
                path = store.image_path(image_id)
                body = path.read_bytes()
            except (TaskNotFound, OSError):
                self._json(404, {"error": f"no image {image_id!r}"})
                return
            self._bytes(200, "image/png", body)
        else:
            self._static(url.path)

    def _static(self, path: str) -> None:
        ui = self.server.ui_dir
        if ui is None:
            self._json(404, {"error": "no such route"})
            return
        name = unquote(path).lstrip("/") or "index.html"
        target = (ui / name).resolve()
        if not str(target).startswith(str(ui.resolve()) + os.sep) and target != ui.resolve():
            self._json(404, {"error": "no such route"})
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._json(404, {"error": "no such route"})
            return
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._bytes(200, ctype, target.read_bytes())

    def do_POST(self):  # noqa: N802 (http.server API)
        url = urlparse(self.path)
        parts = url.path.strip("/").split("/")
        # api / tasks / <task id> / verdict
        if len(parts) != 4 or parts[:2] != ["api", "tasks"] or parts[3] != "verdict":
            self._json(404, {"error": "no such route"})
            return
        task_id = unquote(parts[2])
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length) or b"{}")
            annotator = body["annotator"]
            decisions = body["decisions"]
        except (ValueError, KeyError, TypeError):
            self._json(400, {"error": "body must be JSON with annotator and decisions[]"})
            return
        try:
            state = self.server.store.submit_verdict(task_id, annotator, decisions)
        except TaskNotFound as exc:
            self._json(404, {"error": str(exc)})
            return
        except AnnotatorConflict as exc:
            self._json(409, {"error": str(exc)})
            return
        except ValueError as exc:
            self._json(400, {"error": str(exc)})
            return
        self._json(200, {"task_id": task_id, "state": state})


class VerifyService(ThreadingHTTPServer):
    """Serves a VerifyStore (and optionally the annotation UI) over HTTP."""

    def __init__(self, store: VerifyStore, host: str = "127.0.0.1", port: int = 0, ui_dir=None):
        super().__init__((host, port), _ApiHandler)
        self.store = store
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "VerifyService":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        if self._thread is not None:
            self._thread.join()
        self.server_close()
