"""HTTP/1.1 front end for :class:`~tdcss.csstore.CloudStore` and its client.

Routes::

    PUT  /capsules                  {"dci": <CapsuleId>, "capsule": <DataCapsule>}
    POST /capsules/{dci}/tokens     {"revocation": <RevocationToken>, "download": <DownloadToken>}
    POST /capsules/{dci}/download   {"param": <DownloadParameter>}   -> <DataCapsule>
    POST /admin/sweep               {"now": optional seconds}         -> {"expired": n}
    POST /admin/clock               {"now": seconds}   (manual clock only)

``{dci}`` is the URL-safe base64 of the identifier's canonical bytes.
Errors come back as ``{"error": <class name>, "detail": <text>}``.
"""

from __future__ import annotations

import base64
import json
import logging
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import encoding
from .csstore import CloudStore, dci_key, gt_key
from .errors import STORE_ERRORS, DecodeError, StoreError, TdcssError

log = logging.getLogger(__name__)


def dci_path(dci) -> str:
    return base64.urlsafe_b64encode(dci_key(dci)).decode("ascii").rstrip("=")


def _path_dci(text: str) -> bytes:
    try:
        return base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))
    except ValueError as exc:
        raise DecodeError("bad capsule identifier in path") from exc


class ManualClock:
    """Settable clock for deterministic runs."""

    def __init__(self, now: float = 0.0):
        self.now = float(now)
        self._lock = threading.Lock()

    def __call__(self) -> float:
        return self.now

    def set(self, now: float) -> None:
        with self._lock:
            self.now = float(now)

    def advance(self, seconds: float) -> float:
        with self._lock:
            self.now += seconds
            return self.now


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    store: CloudStore
    manual_clock: ManualClock | None = None

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def _body(self) -> dict:
        n = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(n) if n else b"{}"
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DecodeError("request body is not JSON") from exc

    def _reply(self, status: int, payload: dict) -> None:
        data = json.dumps(payload, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _dispatch(self, method: str) -> None:
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        try:
            body = self._body()
            if method == "PUT" and parts == ["capsules"]:
                dci = encoding.from_envelope(body.get("dci"), "CapsuleId")
                capsule = encoding.from_envelope(body.get("capsule"), "DataCapsule")
                self.store.store_capsule(dci, capsule)
                self._reply(201, {"stored": dci_path(dci)})
            elif method == "POST" and len(parts) == 3 and parts[0] == "capsules" and parts[2] == "tokens":
                self.store.register_tokens(
                    _path_dci(parts[1]),
                    encoding.from_envelope(body.get("revocation"), "RevocationToken"),
                    encoding.from_envelope(body.get("download"), "DownloadToken"))
                self._reply(201, {"registered": True})
            elif method == "POST" and len(parts) == 3 and parts[0] == "capsules" and parts[2] == "download":
                param = body.get("param")
                if isinstance(param, dict):
                    # compared bytewise; no decoding on the hot path
                    raw = encoding.unb64(param.get("body", {}).get("value", ""))
                else:
                    raise DecodeError("missing download parameter")
                capsule = self.store.handle_download(_path_dci(parts[1]), raw)
                self._reply(200, encoding.to_envelope(capsule))
            elif method == "POST" and parts == ["admin", "sweep"]:
                self._reply(200, {"expired": self.store.expire_sweep(body.get("now"))})
            elif method == "POST" and parts == ["admin", "clock"] and self.manual_clock is not None:
                self.manual_clock.set(body["now"])
                self._reply(200, {"now": self.manual_clock.now})
            else:
                self._reply(404, {"error": "NotFound", "detail": self.path})
        except StoreError as exc:
            self._reply(exc.http_status, {"error": type(exc).__name__, "detail": str(exc)})
        except TdcssError as exc:
            self._reply(exc.http_status, {"error": type(exc).__name__, "detail": str(exc)})
        except (KeyError, TypeError, ValueError) as exc:
            self._reply(400, {"error": "DecodeError", "detail": str(exc)})

    def do_PUT(self):
        self._dispatch("PUT")

    def do_POST(self):
        self._dispatch("POST")


def make_server(store: CloudStore, host: str = "127.0.0.1", port: int = 0,
                manual_clock: ManualClock | None = None) -> ThreadingHTTPServer:
    handler = type("StoreHandler", (_Handler,), {"store": store, "manual_clock": manual_clock})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


class StoreClient:
    """Talks to a running service; same methods and exceptions as CloudStore."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _call(self, method: str, path: str, payload: dict) -> dict:
        req = urllib.request.Request(self.base_url + path, data=json.dumps(payload).encode(),
                                     method=method, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read())
        except urllib.error.HTTPError as err:
            try:
                info = json.loads(err.read())
            except json.JSONDecodeError:
                info = {"error": "", "detail": str(err)}
            cls = STORE_ERRORS.get(info.get("error"), TdcssError)
            raise cls(info.get("detail", "")) from None

    def store_capsule(self, dci, capsule) -> None:
        self._call("PUT", "/capsules", {"dci": encoding.to_envelope(dci, "CapsuleId"),
                                        "capsule": encoding.to_envelope(capsule)})

    def register_tokens(self, dci, revocation, download) -> None:
        self._call("POST", f"/capsules/{dci_path(dci)}/tokens",
                   {"revocation": encoding.to_envelope(revocation),
                    "download": encoding.to_envelope(download)})

    def handle_download(self, dci, param):
        env = {"format": encoding.FORMAT, "kind": "DownloadParameter",
               "curve": encoding.groups.CURVE, "body": {"value": encoding.b64(gt_key(param))}}
        reply = self._call("POST", f"/capsules/{dci_path(dci)}/download", {"param": env})
        return encoding.from_envelope(reply, "DataCapsule")

    def expire_sweep(self, now: float | None = None) -> int:
        return self._call("POST", "/admin/sweep", {} if now is None else {"now": now})["expired"]

    def set_clock(self, now: float) -> None:
        self._call("POST", "/admin/clock", {"now": now})
