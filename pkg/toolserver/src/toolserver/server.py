"""Single-threaded HTTP tool server for image restoration requests.

Wire protocol (shared with the orchestrator's external-tool client):

* ``POST /restore`` with JSON ``{"task": <name>, "image_png_b64": <base64 PNG>,
  "params": {...}}`` returns ``{"image_png_b64": ..., "tool_id": ...}``.
* ``GET /health`` returns ``{"status": "ok"}``.
* Malformed JSON, base64, or PNG payloads get a 400; a task name outside the
  supported vocabulary gets a 422; anything that blows up inside a tool gets a
  500. Error bodies are ``{"error": <message>, "code": <status>}``.

The server deliberately handles one request at a time: it is a correctness
reference and a template for wrapping heavier restoration models, not a
production inference service.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import io
import json
import sys
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
from PIL import Image, UnidentifiedImageError

# The task vocabulary of the orchestrator, by name. Kept as plain strings so
# the server stays importable without the client package installed.
TASK_NAMES = (
    "Denoise",
    "Dehaze",
    "Derain",
    "Deblur",
    "Desnow",
    "LowLightEnhance",
    "CompositeEnhance",
)


class BadRequest(Exception):
    """Request that cannot be parsed up to the image payload (HTTP 400)."""


class UnknownTask(Exception):
    """Well-formed request naming a task this server does not serve (HTTP 422)."""


def decode_image(b64: str) -> np.ndarray:
    """Base64 PNG -> float64 RGB array in [0, 1]; BadRequest on any defect."""
    if not isinstance(b64, str):
        raise BadRequest("image_png_b64 must be a string")
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise BadRequest(f"invalid base64: {exc}") from exc
    try:
        with Image.open(io.BytesIO(raw)) as im:
            if im.format != "PNG":
                raise BadRequest(f"expected PNG, got {im.format}")
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except UnidentifiedImageError as exc:
        raise BadRequest("payload is not a decodable image") from exc
    return arr


def encode_image(arr: np.ndarray) -> str:
    """Float array in [0, 1] -> base64 PNG, rounding half away from zero."""
    u8 = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def echo(arr: np.ndarray, params: dict) -> np.ndarray:
    return arr


def py_gamma_llie(arr: np.ndarray, params: dict) -> np.ndarray:
    """Brighten with the fixed gamma curve v -> v**(1/2.2)."""
    return np.power(arr, 1.0 / 2.2)


def default_tools() -> dict:
    """task name -> (tool_id, callable); echo everywhere except low light."""
    tools = {name: ("echo", echo) for name in TASK_NAMES}
    tools["LowLightEnhance"] = ("py_gamma_llie", py_gamma_llie)
    return tools


def handle_restore(body: bytes, tools: dict) -> dict:
    """Pure request handler; raises BadRequest/UnknownTask for error paths."""
    try:
        obj = json.loads(body)
    except json.JSONDecodeError as exc:
        raise BadRequest(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise BadRequest("request body must be a JSON object")
    for key in ("task", "image_png_b64"):
        if key not in obj:
            raise BadRequest(f"missing field {key!r}")
    task = obj["task"]
    if not isinstance(task, str) or task not in TASK_NAMES:
        raise UnknownTask(f"unknown task {task!r}")
    if task not in tools:
        raise UnknownTask(f"no tool configured for task {task!r}")
    params = obj.get("params") or {}
    if not isinstance(params, dict):
        raise BadRequest("params must be an object")
    arr = decode_image(obj["image_png_b64"])
    tool_id, fn = tools[task]
    out = fn(arr, params)
    return {"image_png_b64": encode_image(out), "tool_id": tool_id}


def make_handler(tools: dict):
    class ToolHandler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _reply(self, status: int, obj: dict) -> None:
            payload = json.dumps(obj).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            # one request per connection: a lingering keep-alive socket would
            # starve every other client of this single-threaded server
            self.send_header("Connection", "close")
            self.end_headers()
            self.wfile.write(payload)
            self.close_connection = True

        def do_GET(self):
            if self.path == "/health":
                self._reply(200, {"status": "ok"})
            else:
                self._reply(404, {"error": "not found", "code": 404})

        def do_POST(self):
            if self.path != "/restore":
                self._reply(404, {"error": "not found", "code": 404})
                return
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            try:
                self._reply(200, handle_restore(body, tools))
            except BadRequest as exc:
                self._reply(400, {"error": str(exc), "code": 400})
            except UnknownTask as exc:
                self._reply(422, {"error": str(exc), "code": 422})
            except Exception as exc:  # tool blew up: report, keep serving
                self._reply(500, {"error": f"internal error: {exc}", "code": 500})

    return ToolHandler


def make_server(port: int, tools: dict | None = None) -> HTTPServer:
    return HTTPServer(("127.0.0.1", port), make_handler(tools or default_tools()))


def serve(port: int, tools: dict | None = None) -> None:
    server = make_server(port, tools)
    try:
        server.serve_forever()
    finally:
        server.server_close()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="toolserver")
    parser.add_argument("--port", type=int, default=8787)
    args = parser.parse_args(argv)
    print(f"serving on 127.0.0.1:{args.port}", file=sys.stderr)
    serve(args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
