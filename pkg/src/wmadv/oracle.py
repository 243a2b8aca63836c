"""Classifier oracle: wire protocol, builtin model, and client transports.

The attack treats the classifier as a black box behind a one-shot JSON
protocol. Every request is a single object:

    {"op": "handshake"}
    {"op": "classify", "image": "<base64 PNG>"}
    {"op": "features", "image": "<base64 PNG>", "layer": "<id>"}

and every response is a single object:

    {"labels": [...], "features": [...], "model": "<name>"}   (handshake)
    {"labels": [...], "probs": [...]}                          (classify)
    {"feature": "<base64 PNG>", "layer": "<id>"}               (features)
    {"error": {"code": "...", "message": "..."}}               (failure)

Transports: in-process builtin model, a line-delimited-JSON subprocess
(one object per line over stdin/stdout), or HTTP POST <base>/v1/oracle.
Endpoint strings select the transport:

    builtin                 builtin model, shipped weights
    builtin:<weights-path>  builtin model, custom weights
    subprocess:<cmdline>    spawn cmdline, speak line JSON
    http(s)://host:port     POST to <base>/v1/oracle

falling back to the WMADV_ORACLE environment variable when no endpoint
is given explicitly.

The builtin model is a deterministic softmax over K linear scores
W.T @ phi(img) + b. phi resizes the image to 64x64 and takes 8
statistics, all scaled to roughly [0, 1]: the mean of each of r, g, b
and of the luminance plane (r+g+b)/3, then the RMS of the second-level
wavelet approximation band of those same four planes (divided by 4*255
to undo the band's DC gain). Weights live in a small text format; see
:func:`load_weights`.
"""

from __future__ import annotations

import base64
import binascii
import enum
import json
import os
import shlex
import subprocess
import sys
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources

import numpy as np
import requests

from .errors import (
    CapabilityError,
    ConfigError,
    DecodeError,
    OracleError,
    ProtocolError,
)
from .imaging import ImageTensor, decode, encode_png, encode_png_gray, resize
from .transforms import WaveletPyramid, dwt2, idwt2

__all__ = [
    "ClassProbs",
    "FeatureMap",
    "OracleEndpoint",
    "OracleKind",
    "BuiltinModel",
    "connect",
    "handle_request",
    "load_weights",
    "make_http_server",
    "parse_endpoint",
    "resolve_endpoint",
    "serve_stdio",
    "ENV_ORACLE",
    "FEATURE_NAMES",
]

ENV_ORACLE = "WMADV_ORACLE"
PROB_SUM_TOL = 1e-4
_PROB_RANGE_EPS = 1e-9

FEATURE_NAMES = (
    "mean_r",
    "mean_g",
    "mean_b",
    "mean_lum",
    "ll2_r",
    "ll2_g",
    "ll2_b",
    "ll2_lum",
)

_PHI_SIZE = 64  # canonical input size for the builtin model


@dataclass(frozen=True)
class ClassProbs:
    """A probability vector over a fixed label vocabulary.

    Checked at construction (the oracle boundary): labels unique and
    non-empty, probs the same length, each within [0, 1], sum within
    1e-4 of one.
    """

    labels: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) == 0:
            raise ProtocolError("empty label vocabulary")
        if any(not isinstance(l, str) or not l for l in self.labels):
            raise ProtocolError(f"labels must be non-empty strings: {self.labels!r}")
        if len(set(self.labels)) != len(self.labels):
            raise ProtocolError(f"duplicate labels: {self.labels!r}")
        if len(self.probs) != len(self.labels):
            raise ProtocolError(
                f"{len(self.probs)} probs for {len(self.labels)} labels"
            )
        for p in self.probs:
            if not np.isfinite(p) or p < -_PROB_RANGE_EPS or p > 1.0 + _PROB_RANGE_EPS:
                raise ProtocolError(f"probability out of [0, 1]: {p!r}")
        total = sum(self.probs)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ProtocolError(f"probabilities sum to {total!r}, not 1")

    def prob_of(self, label: str) -> float:
        try:
            return self.probs[self.labels.index(label)]
        except ValueError:
            raise KeyError(f"label {label!r} not in vocabulary {self.labels}") from None

    @property
    def top_label(self) -> str:
        """Argmax label; exact ties resolve to the lexicographically smallest."""
        best = max(self.probs)
        return min(l for l, p in zip(self.labels, self.probs) if p == best)

    @property
    def top_prob(self) -> float:
        return max(self.probs)


@dataclass(frozen=True)
class FeatureMap:
    """An internal-representation image returned by the oracle."""

    layer: str
    image: ImageTensor


class OracleKind(enum.Enum):
    BUILTIN = "builtin"
    SUBPROCESS = "subprocess"
    HTTP = "http"


@dataclass(frozen=True)
class OracleEndpoint:
    kind: OracleKind
    address: str  # weights path, command line, or base URL


def parse_endpoint(spec: str) -> OracleEndpoint:
    spec = spec.strip()
    if spec == "builtin":
        return OracleEndpoint(OracleKind.BUILTIN, "")
    if spec.startswith("builtin:"):
        return OracleEndpoint(OracleKind.BUILTIN, spec[len("builtin:"):])
    if spec.startswith("subprocess:"):
        cmd = spec[len("subprocess:"):].strip()
        if not cmd:
            raise ConfigError("subprocess endpoint needs a command line")
        return OracleEndpoint(OracleKind.SUBPROCESS, cmd)
    if spec.startswith("http://") or spec.startswith("https://"):
        return OracleEndpoint(OracleKind.HTTP, spec)
    raise ConfigError(
        f"unrecognized oracle endpoint {spec!r}; expected 'builtin', "
        "'builtin:<weights>', 'subprocess:<cmd>', or an http(s) URL"
    )


def resolve_endpoint(spec: str | None) -> OracleEndpoint:
    """Parse an explicit endpoint or fall back to $WMADV_ORACLE."""
    if spec is None:
        spec = os.environ.get(ENV_ORACLE)
    if not spec:
        raise ConfigError(f"no oracle endpoint: pass --oracle or set {ENV_ORACLE}")
    return parse_endpoint(spec)


# --- builtin model ---


@dataclass(frozen=True)
class _Weights:
    model: str
    labels: tuple[str, ...]
    matrix: np.ndarray  # (8, K)
    bias: np.ndarray  # (K,)


def load_weights(path: str) -> _Weights:
    """Parse the builtin classifier's text weights format.

    Directives, in order: ``format 1``, ``model <name>``, ``classes K``,
    ``labels <K names>``, one ``feature <name> <K floats>`` line per
    entry of FEATURE_NAMES (in that order), ``bias <K floats>``. Blank
    lines and '#' comments are ignored.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = [ln.strip() for ln in fh]
    except OSError as exc:
        raise ConfigError(f"cannot read weights file {path}: {exc}") from exc
    lines = [ln for ln in raw if ln and not ln.startswith("#")]

    def fail(msg: str):
        raise ConfigError(f"{path}: {msg}")

    idx = 0

    def next_line(key: str) -> list[str]:
        nonlocal idx
        if idx >= len(lines):
            fail(f"missing '{key}' line")
        tokens = lines[idx].split()
        idx += 1
        if tokens[0] != key:
            fail(f"expected '{key}', got {tokens[0]!r}")
        return tokens[1:]

    fmt = next_line("format")
    if fmt != ["1"]:
        fail(f"unsupported format {fmt!r}")
    model_tokens = next_line("model")
    if len(model_tokens) != 1:
        fail("model line needs exactly one name")
    (classes,) = next_line("classes")
    try:
        k = int(classes)
    except ValueError:
        fail(f"classes must be an integer, got {classes!r}")
    if k < 2:
        fail(f"need at least 2 classes, got {k}")
    labels = tuple(next_line("labels"))
    if len(labels) != k:
        fail(f"expected {k} labels, got {len(labels)}")
    if len(set(labels)) != k:
        fail("duplicate labels")
    matrix = np.zeros((len(FEATURE_NAMES), k))
    for row, name in enumerate(FEATURE_NAMES):
        tokens = next_line("feature")
        if not tokens or tokens[0] != name:
            fail(f"feature row {row} must be {name!r}, got {tokens[:1]!r}")
        if len(tokens) != 1 + k:
            fail(f"feature {name} needs {k} weights, got {len(tokens) - 1}")
        try:
            matrix[row] = [float(t) for t in tokens[1:]]
        except ValueError:
            fail(f"non-numeric weight in feature {name}")
    bias_tokens = next_line("bias")
    if len(bias_tokens) != k:
        fail(f"bias needs {k} values, got {len(bias_tokens)}")
    try:
        bias = np.array([float(t) for t in bias_tokens])
    except ValueError:
        fail("non-numeric bias value")
    if idx != len(lines):
        fail(f"unexpected trailing line: {lines[idx]!r}")
    return _Weights(model_tokens[0], labels, matrix, bias)


def default_weights_path() -> str:
    return str(resources.files("wmadv").joinpath("data/builtin_linear_v1.txt"))


class BuiltinModel:
    """Deterministic linear-softmax classifier with two feature layers."""

    FEATURE_LAYERS = ("edge", "dc")

    def __init__(self, weights: _Weights):
        self.weights = weights

    @classmethod
    def load(cls, path: str = "") -> "BuiltinModel":
        return cls(load_weights(path or default_weights_path()))

    @property
    def labels(self) -> tuple[str, ...]:
        return self.weights.labels

    @property
    def name(self) -> str:
        return self.weights.model

    def phi(self, img: ImageTensor) -> np.ndarray:
        """The 8 image statistics the linear model scores."""
        work = resize(img, _PHI_SIZE, _PHI_SIZE)
        lum = (work.r + work.g + work.b) / 3.0
        planes = [work.r, work.g, work.b, lum]
        means = [float(np.mean(p)) / 255.0 for p in planes]
        energies = []
        for p in planes:
            ll2 = dwt2(p, 2).ll
            energies.append(float(np.sqrt(np.mean(ll2 * ll2))) / (4.0 * 255.0))
        return np.array(means + energies)

    def scores(self, img: ImageTensor) -> np.ndarray:
        return self.phi(img) @ self.weights.matrix + self.weights.bias

    def classify(self, img: ImageTensor) -> ClassProbs:
        s = self.scores(img)
        e = np.exp(s - np.max(s))
        p = e / np.sum(e)
        return ClassProbs(self.labels, tuple(float(x) for x in p))

    def feature(self, img: ImageTensor, layer: str) -> np.ndarray:
        """Feature plane for a layer id, min-max rescaled to [0, 255]."""
        if layer == "edge":
            plane = _sobel_magnitude((img.r + img.g + img.b) / 3.0)
        elif layer == "dc":
            plane = _dc_component((img.r + img.g + img.b) / 3.0)
        else:
            raise CapabilityError(
                f"unknown feature layer {layer!r}; available: {list(self.FEATURE_LAYERS)}"
            )
        lo = float(np.min(plane))
        hi = float(np.max(plane))
        if hi - lo < 1e-12:
            return np.zeros_like(plane)
        return (plane - lo) * (255.0 / (hi - lo))


def _sobel_magnitude(plane: np.ndarray) -> np.ndarray:
    padded = np.pad(plane, 1, mode="edge")
    win = {
        (dy, dx): padded[1 + dy : 1 + dy + plane.shape[0], 1 + dx : 1 + dx + plane.shape[1]]
        for dy in (-1, 0, 1)
        for dx in (-1, 0, 1)
    }
    gx = (
        win[(-1, 1)] + 2 * win[(0, 1)] + win[(1, 1)]
        - win[(-1, -1)] - 2 * win[(0, -1)] - win[(1, -1)]
    )
    gy = (
        win[(1, -1)] + 2 * win[(1, 0)] + win[(1, 1)]
        - win[(-1, -1)] - 2 * win[(-1, 0)] - win[(-1, 1)]
    )
    return np.hypot(gx, gy)


def _dc_component(plane: np.ndarray) -> np.ndarray:
    # Keep only the first-level approximation band (local 2x2 averages),
    # reconstructed at full size. Odd trailing rows/cols are cropped.
    h = plane.shape[0] - plane.shape[0] % 2
    w = plane.shape[1] - plane.shape[1] % 2
    if h < 2 or w < 2:
        return np.array(plane, dtype=np.float64, copy=True)
    pyr = dwt2(plane[:h, :w], 1)
    zeros = np.zeros_like(pyr.ll)
    return idwt2(WaveletPyramid(1, pyr.ll, ((zeros, zeros, zeros),)))


# --- protocol handler (shared by the in-process client and the servers) ---


def _error(code: str, message: str, **extra) -> dict:
    err = {"code": code, "message": message}
    err.update(extra)
    return {"error": err}


def handle_request(model: BuiltinModel, req: object) -> dict:
    """Serve one protocol request against a builtin model."""
    if not isinstance(req, dict) or not isinstance(req.get("op"), str):
        return _error("protocol", "request must be an object with a string 'op'")
    op = req["op"]
    if op == "handshake":
        return {
            "labels": list(model.labels),
            "features": list(model.FEATURE_LAYERS),
            "model": model.name,
        }
    if op not in ("classify", "features"):
        return _error("protocol", f"unknown op {op!r}")
    image_b64 = req.get("image")
    if not isinstance(image_b64, str):
        return _error("protocol", f"op {op!r} needs a base64 'image' field")
    try:
        png = base64.b64decode(image_b64, validate=True)
    except (binascii.Error, ValueError):
        return _error("protocol", "image field is not valid base64")
    try:
        img = decode(png)
    except DecodeError as exc:
        return _error("decode", str(exc))
    if op == "classify":
        probs = model.classify(img)
        return {"labels": list(probs.labels), "probs": list(probs.probs)}
    layer = req.get("layer")
    if not isinstance(layer, str):
        return _error("protocol", "op 'features' needs a string 'layer' field")
    try:
        plane = model.feature(img, layer)
    except CapabilityError as exc:
        return _error("capability", str(exc), layers=list(model.FEATURE_LAYERS))
    return {
        "feature": base64.b64encode(encode_png_gray(plane)).decode("ascii"),
        "layer": layer,
    }


# --- servers (wrap the same handler the in-process client uses) ---


def serve_stdio(model: BuiltinModel, fin=None, fout=None) -> None:
    """Answer one JSON object per line until EOF on stdin."""
    fin = fin if fin is not None else sys.stdin
    fout = fout if fout is not None else sys.stdout
    for line in fin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            resp = _error("protocol", "request line is not valid JSON")
        else:
            resp = handle_request(model, req)
        fout.write(json.dumps(resp) + "\n")
        fout.flush()


def make_http_server(model: BuiltinModel, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Build (but don't start) an HTTP server exposing POST /v1/oracle."""

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):  # noqa: N802 (stdlib naming)
            if self.path != "/v1/oracle":
                self.send_error(404, "only POST /v1/oracle is served")
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = self.rfile.read(length)
                req = json.loads(body)
            except (ValueError, OSError):
                resp = _error("protocol", "request body is not valid JSON")
            else:
                resp = handle_request(model, req)
            payload = json.dumps(resp).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):  # keep test output quiet
            pass

    return ThreadingHTTPServer((host, port), Handler)


# --- clients ---


def _excerpt(payload: object, limit: int = 200) -> str:
    text = payload if isinstance(payload, str) else json.dumps(payload, default=repr)
    return text if len(text) <= limit else text[: limit - 3] + "..."


class OracleClient:
    """Common request plumbing over an arbitrary transport."""

    def __init__(self):
        self.labels: tuple[str, ...] = ()
        self.feature_layers: tuple[str, ...] = ()
        self.model_name: str = ""

    def _roundtrip(self, req: dict) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError

    def _request(self, req: dict) -> dict:
        resp = self._roundtrip(req)
        if not isinstance(resp, dict):
            raise ProtocolError(f"oracle response is not an object: {_excerpt(resp)}")
        if "error" in resp:
            err = resp["error"] if isinstance(resp["error"], dict) else {}
            code = err.get("code", "unknown")
            message = err.get("message", _excerpt(resp))
            if code == "capability":
                layers = err.get("layers")
                suffix = f" (available layers: {layers})" if layers else ""
                raise CapabilityError(f"{message}{suffix}")
            if code in ("protocol", "decode"):
                raise ProtocolError(f"oracle rejected request [{code}]: {message}")
            raise OracleError(f"oracle failure [{code}]: {message}")
        return resp

    def handshake(self) -> None:
        resp = self._request({"op": "handshake"})
        labels = resp.get("labels")
        if not isinstance(labels, list) or not labels:
            raise ProtocolError(f"handshake without labels: {_excerpt(resp)}")
        feats = resp.get("features", [])
        if not isinstance(feats, list):
            raise ProtocolError(f"handshake features not a list: {_excerpt(resp)}")
        self.labels = tuple(str(l) for l in labels)
        self.feature_layers = tuple(str(f) for f in feats)
        self.model_name = str(resp.get("model", ""))

    def classify_png(self, png: bytes) -> ClassProbs:
        req = {"op": "classify", "image": base64.b64encode(png).decode("ascii")}
        resp = self._request(req)
        labels = resp.get("labels")
        probs = resp.get("probs")
        if not isinstance(labels, list) or not isinstance(probs, list):
            raise ProtocolError(f"malformed classify response: {_excerpt(resp)}")
        try:
            return ClassProbs(tuple(str(l) for l in labels), tuple(float(p) for p in probs))
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed classify response: {_excerpt(resp)}") from exc

    def classify_image(self, img: ImageTensor) -> ClassProbs:
        return self.classify_png(encode_png(img))

    def feature_map(self, img: ImageTensor, layer: str) -> FeatureMap:
        req = {
            "op": "features",
            "image": base64.b64encode(encode_png(img)).decode("ascii"),
            "layer": layer,
        }
        resp = self._request(req)
        blob = resp.get("feature")
        if not isinstance(blob, str):
            raise ProtocolError(f"malformed features response: {_excerpt(resp)}")
        try:
            png = base64.b64decode(blob, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise ProtocolError("feature field is not valid base64") from exc
        try:
            image = decode(png)
        except DecodeError as exc:
            raise ProtocolError(f"feature payload is not a decodable image: {exc}") from exc
        return FeatureMap(str(resp.get("layer", layer)), image)

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BuiltinClient(OracleClient):
    """In-process client; still goes through the JSON protocol handler."""

    def __init__(self, weights_path: str = ""):
        super().__init__()
        self.model = BuiltinModel.load(weights_path)
        self.handshake()

    def _roundtrip(self, req: dict) -> dict:
        # Serialize through JSON so the in-process path exercises exactly
        # the same payload shapes a remote server would produce.
        return json.loads(json.dumps(handle_request(self.model, req)))


class SubprocessClient(OracleClient):
    """Line-delimited JSON over a child process's stdin/stdout."""

    def __init__(self, cmdline: str):
        super().__init__()
        self.cmdline = cmdline
        try:
            self.proc = subprocess.Popen(
                shlex.split(cmdline),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise OracleError(f"cannot spawn oracle {cmdline!r}: {exc}") from exc
        self._lock = threading.Lock()
        self.handshake()

    def _roundtrip(self, req: dict) -> dict:
        with self._lock:
            if self.proc.poll() is not None:
                raise OracleError(f"oracle process exited with {self.proc.returncode}")
            try:
                self.proc.stdin.write(json.dumps(req) + "\n")
                self.proc.stdin.flush()
                line = self.proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise OracleError(f"oracle pipe failed: {exc}") from exc
        if not line:
            raise OracleError("oracle process closed its stdout")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"oracle wrote invalid JSON: {_excerpt(line)}") from exc

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class HttpClient(OracleClient):
    """POSTs each request to <base>/v1/oracle."""

    def __init__(self, base_url: str, timeout: float = 60.0):
        super().__init__()
        base = base_url.rstrip("/")
        # accept both the bare base URL and the full path the server prints
        self.url = base if base.endswith("/v1/oracle") else base + "/v1/oracle"
        self.timeout = timeout
        self._local = threading.local()
        self.handshake()

    def _session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def _roundtrip(self, req: dict) -> dict:
        try:
            resp = self._session().post(self.url, json=req, timeout=self.timeout)
        except requests.RequestException as exc:
            raise OracleError(f"oracle request failed: {exc}") from exc
        if resp.status_code >= 500:
            raise OracleError(f"oracle server error {resp.status_code}: {_excerpt(resp.text)}")
        if resp.status_code != 200:
            raise ProtocolError(f"oracle HTTP {resp.status_code}: {_excerpt(resp.text)}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(f"oracle wrote invalid JSON: {_excerpt(resp.text)}") from exc


def connect(endpoint: OracleEndpoint) -> OracleClient:
    """Open a client for an endpoint (handshake included)."""
    if endpoint.kind is OracleKind.BUILTIN:
        return BuiltinClient(endpoint.address)
    if endpoint.kind is OracleKind.SUBPROCESS:
        return SubprocessClient(endpoint.address)
    return HttpClient(endpoint.address)
