"""HTTP review service for human certification.

JSON endpoints consumed by the browser console (and by scripts):

  GET  /api/candidates?status=pending&limit=N   queue summaries
  GET  /api/candidates/{id}                     waveform + analysis detail
  POST /api/candidates/{id}/decision            record a human decision
  GET  /api/progress                            counts by status/source

Static files (the built review console) are served from ``static_dir``.
Decision writes are serialized by the store; reads are lock-free.
"""

from __future__ import annotations

import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from ..data.records import Segment
from ..dsp.rpeaks import detect_r_peaks
from .rules import CertifyThresholds, analyze_segment
from .store import (
    CertificationDecision,
    DecisionStore,
    InvalidDecision,
    Source,
    Verdict,
)


class ReviewService:
    def __init__(self, store: DecisionStore, segments: dict[str, Segment],
                 thresholds: CertifyThresholds | None = None,
                 static_dir: str | Path | None = None):
        self.store = store
        self.segments = segments
        self.thresholds = thresholds or CertifyThresholds()
        self.static_dir = Path(static_dir) if static_dir else None
        self._analysis_cache: dict[str, dict] = {}
        self._cache_lock = threading.Lock()

    # ------------------------------------------------------------- queries

    def _analysis(self, segment_id: str) -> dict:
        with self._cache_lock:
            cached = self._analysis_cache.get(segment_id)
        if cached is not None:
            return cached
        seg = self.segments[segment_id]
        report = analyze_segment(seg, self.thresholds)
        peaks = detect_r_peaks(seg.samples, seg.fs)
        result = {"report": report.to_dict(), "r_peaks": peaks.tolist()}
        with self._cache_lock:
            self._analysis_cache[segment_id] = result
        return result

    def candidates(self, status: str = "pending", limit: int = 50) -> dict:
        wanted = Verdict(status.capitalize()) if status else None
        rows = []
        for sid in sorted(self.segments):
            verdict = self.store.status_of(sid)
            if wanted is not None and verdict is not wanted:
                continue
            rows.append({"id": sid, "status": verdict.value,
                         "label": self.segments[sid].label.value,
                         "source": self.segments[sid].source})
            if len(rows) >= limit:
                break
        total = sum(1 for sid in self.segments
                    if wanted is None or self.store.status_of(sid) is wanted)
        return {"candidates": rows, "total": total}

    def candidate_detail(self, segment_id: str) -> dict:
        seg = self.segments[segment_id]
        analysis = self._analysis(segment_id)
        return {
            "id": seg.id, "fs": seg.fs, "label": seg.label.value,
            "source": seg.source, "samples": np.asarray(seg.samples).tolist(),
            "status": self.store.status_of(segment_id).value,
            "r_peaks": analysis["r_peaks"], "report": analysis["report"],
        }

    def progress(self) -> dict:
        counts = {v.value: 0 for v in Verdict}
        for sid in self.segments:
            counts[self.store.status_of(sid).value] += 1
        by_source = {s.value: 0 for s in Source}
        for d in self.store.effective().values():
            if d.verdict is not Verdict.PENDING:
                by_source[d.source.value] += 1
        return {"total": len(self.segments), "pending": counts["Pending"],
                "certified": counts["Certified"], "rejected": counts["Rejected"],
                "by_source": by_source, "decisions_logged": len(self.store.log)}

    # ------------------------------------------------------------ decisions

    def post_decision(self, segment_id: str, payload: dict) -> tuple[int, dict]:
        if segment_id not in self.segments:
            return 404, {"error": f"unknown segment {segment_id}"}
        current = self.store.status_of(segment_id)
        force = bool(payload.get("force", False))
        nonce = str(payload.get("nonce", ""))
        if nonce:  # a retried request must return the original outcome
            for d in self.store.log:
                if d.segment_id == segment_id and d.nonce == nonce:
                    return 200, {"decision": d.to_json(), "replayed": True}
        if current is not Verdict.PENDING and not force:
            return 409, {"error": f"segment {segment_id} already {current.value}",
                         "current": current.value}
        try:
            decision = CertificationDecision(
                segment_id=segment_id,
                verdict=payload.get("verdict", ""),
                directive=payload.get("directive"),
                source=Source.HUMAN,
                reviewer=str(payload.get("reviewer", "")),
                notes=str(payload.get("notes", "")),
                nonce=nonce,
            )
        except (InvalidDecision, ValueError) as exc:
            return 422, {"error": str(exc)}
        recorded = self.store.append(decision)
        return 200, {"decision": recorded.to_json(), "replayed": False}


class _Handler(BaseHTTPRequestHandler):
    service: ReviewService = None  # assigned by make_server

    def log_message(self, *args):  # quiet by default
        pass

    def _send_json(self, code: int, body: dict):
        raw = json.dumps(body).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(raw)

    def _send_static(self, rel: str):
        root = self.service.static_dir
        if root is None:
            self._send_json(404, {"error": "no static bundle configured"})
            return
        target = (root / rel.lstrip("/")).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._send_json(404, {"error": f"no such file {rel}"})
            return
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        raw = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        if parts[:2] == ["api", "candidates"] and len(parts) == 2:
            q = parse_qs(url.query)
            status = q.get("status", ["pending"])[0]
            limit = int(q.get("limit", ["50"])[0])
            self._send_json(200, self.service.candidates(status, limit))
        elif parts[:2] == ["api", "candidates"] and len(parts) == 3:
            sid = parts[2]
            if sid not in self.service.segments:
                self._send_json(404, {"error": f"unknown segment {sid}"})
            else:
                self._send_json(200, self.service.candidate_detail(sid))
        elif parts == ["api", "progress"]:
            self._send_json(200, self.service.progress())
        elif not parts:
            self._send_static("index.html")
        else:
            self._send_static(url.path)

    def do_POST(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        if len(parts) == 4 and parts[:2] == ["api", "candidates"] \
                and parts[3] == "decision":
            length = int(self.headers.get("Content-Length", "0"))
            try:
                payload = json.loads(self.rfile.read(length) or b"{}")
            except json.JSONDecodeError:
                self._send_json(400, {"error": "invalid JSON body"})
                return
            code, body = self.service.post_decision(parts[2], payload)
            self._send_json(code, body)
        else:
            self._send_json(404, {"error": f"no such endpoint {url.path}"})


def make_server(service: ReviewService, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def run_review_service(store: DecisionStore, segments: dict[str, Segment],
                       host: str = "127.0.0.1", port: int = 8214,
                       thresholds: CertifyThresholds | None = None,
                       static_dir: str | Path | None = None,
                       block: bool = True):
    """Start the review service; returns the server object.

    With ``block=False`` the server runs on a daemon thread (used by
    tests); otherwise this call serves until interrupted.
    """
    service = ReviewService(store, segments, thresholds, static_dir)
    server = make_server(service, host, port)
    if block:
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
    else:
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
    return server
