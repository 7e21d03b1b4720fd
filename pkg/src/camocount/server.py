"""Annotation HTTP service: JSON API plus static hosting for the editor UI.

Endpoints::

    GET  /api/images                  image listing with annotation counts
    GET  /api/images/{id}/file        image bytes (PNG when pillow is
                                      available, raw PPM otherwise)
    GET  /api/annotations/{id}        annotation document (empty doc if the
                                      image has not been annotated yet)
    PUT  /api/annotations/{id}        validate + atomically persist
    GET  /api/stats                   dataset statistics

``{id}`` is the image filename stem. Writes to the same id are serialized
by a per-id lock; reads are lock-free against the last committed file
(writes are temp-file + rename). Validation failures answer 422 with the
offending field path.
"""

from __future__ import annotations

import json
import mimetypes
import threading
from collections import defaultdict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import data as dio
from .data import AnnotationDoc, AnnotationError
from .imageio import image_size, png_bytes, read_image

PORT_ENV = "CAMOCOUNT_PORT"

_FALLBACK_PAGE = b"""<!doctype html>
<html><head><title>camocount annotation service</title></head>
<body><h1>camocount annotation service</h1>
<p>The editor UI is not built. API endpoints:</p>
<ul>
<li>GET /api/images</li>
<li>GET /api/images/{id}/file</li>
<li>GET /api/annotations/{id}</li>
<li>PUT /api/annotations/{id}</li>
<li>GET /api/stats</li>
</ul></body></html>
"""


class DatasetView:
    """Resolves ids to image/annotation paths and caches image sizes."""

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FileNotFoundError(f"dataset directory {root} does not exist")
        self._sizes: dict[str, tuple[int, int]] = {}
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()

    def image_names(self) -> list[str]:
        mpath = dio.manifest_path(self.root)
        if mpath.exists():
            return dio.read_manifest(mpath).all_files()
        return sorted(p.name for p in dio.images_dir(self.root).glob("*")
                      if p.suffix.lower() in (".ppm", ".png"))

    def image_path(self, image_id: str) -> Path | None:
        for name in self.image_names():
            if Path(name).stem == image_id:
                return dio.images_dir(self.root) / name
        return None

    def size(self, path: Path) -> tuple[int, int]:
        key = path.name
        if key not in self._sizes:
            self._sizes[key] = image_size(path)
        return self._sizes[key]

    def lock(self, image_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks[image_id]

    def load_doc(self, image_id: str) -> AnnotationDoc | None:
        img = self.image_path(image_id)
        if img is None:
            return None
        apath = dio.annotation_path(self.root, img.name)
        if apath.exists():
            return dio.read_annotations(apath)
        w, h = self.size(img)
        return AnnotationDoc(image=img.name, width=w, height=h, points=[])

    def store_doc(self, image_id: str, doc: AnnotationDoc) -> None:
        img = self.image_path(image_id)
        if img is None:
            raise KeyError(image_id)
        if doc.image != img.name:
            raise AnnotationError(
                f"document image {doc.image!r} does not match resource "
                f"{img.name!r}", field_path="image")
        w, h = self.size(img)
        if (doc.width, doc.height) != (w, h):
            raise AnnotationError(
                f"document size {doc.width}x{doc.height} does not match "
                f"image size {w}x{h}", field_path="width")
        doc.validate()
        with self.lock(image_id):
            dio.annotations_dir(self.root).mkdir(parents=True, exist_ok=True)
            dio.write_annotations(doc, dio.annotation_path(self.root,
                                                           img.name))


def _try_png(path: Path) -> tuple[bytes, str]:
    if path.suffix.lower() == ".png":
        return path.read_bytes(), "image/png"
    try:
        return png_bytes(read_image(path)), "image/png"
    except RuntimeError:  # pillow not installed; serve the raw PPM
        return path.read_bytes(), "image/x-portable-pixmap"


class AnnotationHandler(BaseHTTPRequestHandler):
    view: DatasetView
    static_dir: Path | None = None

    # -- plumbing -----------------------------------------------------------

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, payload: bytes, ctype: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _json(self, status: int, obj) -> None:
        self._send(status, (json.dumps(obj, indent=2) + "\n").encode("utf-8"),
                   "application/json")

    def _error(self, status: int, message: str,
               field: str | None = None) -> None:
        body = {"error": message}
        if field is not None:
            body["field"] = field
        self._json(status, body)

    # -- routes --------------------------------------------------------------

    def do_GET(self):
        path = self.path.split("?", 1)[0]
        try:
            if path == "/api/images":
                return self._list_images()
            if path.startswith("/api/images/") and path.endswith("/file"):
                return self._image_file(path.split("/")[3])
            if path.startswith("/api/annotations/"):
                return self._get_annotations(path.split("/")[3])
            if path == "/api/stats":
                return self._stats()
            return self._static(path)
        except BrokenPipeError:
            pass
        except Exception as exc:  # surface unexpected errors as JSON
            self._error(500, f"{type(exc).__name__}: {exc}")

    def do_PUT(self):
        path = self.path.split("?", 1)[0]
        if not path.startswith("/api/annotations/"):
            return self._error(404, f"no PUT route for {path}")
        image_id = path.split("/")[3]
        try:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            try:
                body = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                return self._error(400, f"invalid JSON body: {exc}")
            try:
                doc = AnnotationDoc.from_dict(body, source=f"PUT {image_id}")
                self.view.store_doc(image_id, doc)
            except AnnotationError as exc:
                return self._error(422, str(exc), exc.field_path)
            except KeyError:
                return self._error(404, f"unknown image id {image_id!r}")
            self._json(200, doc.to_dict())
        except BrokenPipeError:
            pass
        except Exception as exc:
            self._error(500, f"{type(exc).__name__}: {exc}")

    # -- handlers ------------------------------------------------------------

    def _list_images(self):
        entries = []
        for name in self.view.image_names():
            stem = Path(name).stem
            doc = self.view.load_doc(stem)
            w, h = doc.width, doc.height
            entries.append({"id": stem, "filename": name, "width": w,
                            "height": h, "annotated_count": doc.count})
        self._json(200, entries)

    def _image_file(self, image_id: str):
        path = self.view.image_path(image_id)
        if path is None:
            return self._error(404, f"unknown image id {image_id!r}")
        payload, ctype = _try_png(path)
        self._send(200, payload, ctype)

    def _get_annotations(self, image_id: str):
        doc = self.view.load_doc(image_id)
        if doc is None:
            return self._error(404, f"unknown image id {image_id!r}")
        self._send(200, dio.annotation_bytes(doc), "application/json")

    def _stats(self):
        docs = [self.view.load_doc(Path(n).stem)
                for n in self.view.image_names()]
        docs = [d for d in docs if d is not None]
        if not docs:
            return self._json(200, {"images": 0})
        self._json(200, dio.dataset_stats(docs).to_dict())

    def _static(self, path: str):
        if path == "/":
            path = "/index.html"
        if self.static_dir is not None:
            target = (self.static_dir / path.lstrip("/")).resolve()
            if (target.is_file()
                    and target.is_relative_to(self.static_dir.resolve())):
                ctype = (mimetypes.guess_type(target.name)[0]
                         or "application/octet-stream")
                return self._send(200, target.read_bytes(), ctype)
        if path == "/index.html":
            return self._send(200, _FALLBACK_PAGE, "text/html")
        self._error(404, f"not found: {path}")


def make_server(dataset_dir, port: int = 8008,
                static_dir=None) -> ThreadingHTTPServer:
    view = DatasetView(dataset_dir)
    handler = type("BoundHandler", (AnnotationHandler,), {
        "view": view,
        "static_dir": Path(static_dir) if static_dir else None,
    })
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve(dataset_dir, port: int = 8008, static_dir=None) -> None:
    httpd = make_server(dataset_dir, port, static_dir)
    host, actual_port = httpd.server_address
    print(f"annotation service on http://{host}:{actual_port}/ "
          f"(dataset: {dataset_dir})")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
