from __future__ import annotations

import base64
import json
import shlex
import sys
import threading

import numpy as np
import pytest

import oracles
from conftest import rand_image
from wmadv.errors import CapabilityError, ConfigError, ProtocolError
from wmadv.imaging import ImageTensor, encode_png
from wmadv.oracle import (
    ENV_ORACLE,
    FEATURE_NAMES,
    BuiltinClient,
    BuiltinModel,
    ClassProbs,
    HttpClient,
    OracleKind,
    SubprocessClient,
    connect,
    default_weights_path,
    handle_request,
    load_weights,
    make_http_server,
    parse_endpoint,
    resolve_endpoint,
)

CONSTANT = lambda c, n=16: ImageTensor(np.full((3, n, n), float(c)))  # noqa: E731


def solid(r, g, b, n=16) -> ImageTensor:
    planes = np.zeros((3, n, n))
    planes[0], planes[1], planes[2] = r, g, b
    return ImageTensor(planes)


# --- ClassProbs boundary checks ---


def test_class_probs_valid():
    cp = ClassProbs(("a", "b"), (0.25, 0.75))
    assert cp.prob_of("b") == 0.75
    assert cp.top_label == "b"
    assert cp.top_prob == 0.75


def test_class_probs_sum_violation_is_protocol_error():
    with pytest.raises(ProtocolError):
        ClassProbs(("a", "b"), (0.7, 0.4))


def test_class_probs_range_and_labels():
    with pytest.raises(ProtocolError):
        ClassProbs(("a", "b"), (-0.2, 1.2))
    with pytest.raises(ProtocolError):
        ClassProbs(("a", "a"), (0.5, 0.5))
    with pytest.raises(ProtocolError):
        ClassProbs((), ())
    with pytest.raises(ProtocolError):
        ClassProbs(("a", ""), (0.5, 0.5))
    with pytest.raises(ProtocolError):
        ClassProbs(("a", "b", "c"), (0.5, 0.5))


def test_class_probs_sum_tolerance_accepted():
    ClassProbs(("a", "b"), (0.50004, 0.50001))  # within 1e-4


def test_top_label_tie_is_lexicographic():
    assert ClassProbs(("cat", "car"), (0.5, 0.5)).top_label == "car"
    assert ClassProbs(("b", "a", "c"), (0.4, 0.4, 0.2)).top_label == "a"


def test_prob_of_unknown_label():
    with pytest.raises(KeyError):
        ClassProbs(("a", "b"), (0.5, 0.5)).prob_of("zebra")


# --- endpoint parsing ---


def test_parse_endpoint_forms():
    assert parse_endpoint("builtin").kind is OracleKind.BUILTIN
    assert parse_endpoint("builtin:/tmp/w.txt").address == "/tmp/w.txt"
    ep = parse_endpoint("subprocess:python3 -m wmadv.cli oracle-builtin")
    assert ep.kind is OracleKind.SUBPROCESS
    assert parse_endpoint("http://127.0.0.1:9000").kind is OracleKind.HTTP
    assert parse_endpoint("https://example.test").kind is OracleKind.HTTP


def test_parse_endpoint_rejects_unknown():
    with pytest.raises(ConfigError):
        parse_endpoint("carrier-pigeon:coop7")
    with pytest.raises(ConfigError):
        parse_endpoint("subprocess:")


def test_resolve_endpoint_env_fallback(monkeypatch):
    monkeypatch.setenv(ENV_ORACLE, "builtin")
    assert resolve_endpoint(None).kind is OracleKind.BUILTIN
    monkeypatch.delenv(ENV_ORACLE)
    with pytest.raises(ConfigError) as err:
        resolve_endpoint(None)
    assert ENV_ORACLE in str(err.value)


# --- weights file ---


def test_shipped_weights_parse():
    w = load_weights(default_weights_path())
    assert w.labels == ("warm", "cool")
    assert w.matrix.shape == (8, 2)
    assert w.model == "builtin-linear-v1"
    assert w.matrix[0, 0] > 0  # class 0 score rises with red mean


def write_weights(tmp_path, body: str):
    path = tmp_path / "w.txt"
    path.write_text(body)
    return str(path)


GOOD_3CLASS = """
format 1
model toy
classes 3
labels aircraft car other
feature mean_r    5.0 -5.0 0.0
feature mean_g   -5.0  5.0 0.0
feature mean_b    0.0 -2.0 2.0
feature mean_lum  0.0  0.0 0.0
feature ll2_r     0.0  0.0 0.0
feature ll2_g     0.0  0.0 0.0
feature ll2_b     0.0  0.0 0.0
feature ll2_lum   0.0  0.0 0.0
bias 0.0 0.0 0.1
"""


def test_weights_three_class_parse(tmp_path):
    w = load_weights(write_weights(tmp_path, GOOD_3CLASS))
    assert w.labels == ("aircraft", "car", "other")
    assert w.bias[2] == 0.1


@pytest.mark.parametrize(
    "mutation",
    [
        lambda s: s.replace("format 1", "format 9"),
        lambda s: s.replace("classes 3", "classes two"),
        lambda s: s.replace("labels aircraft car other", "labels aircraft car"),
        lambda s: s.replace("feature mean_g", "feature mean_q"),
        lambda s: s.replace("bias 0.0 0.0 0.1", "bias 0.0 0.0"),
        lambda s: s.replace("bias 0.0 0.0 0.1", "bias 0.0 0.0 zero"),
        lambda s: s + "\nextra nonsense\n",
        lambda s: "\n".join(s.splitlines()[:-2]),  # truncated
        lambda s: s.replace("labels aircraft car other", "labels car car other"),
    ],
)
def test_weights_malformed_rejected(tmp_path, mutation):
    with pytest.raises(ConfigError):
        load_weights(write_weights(tmp_path, mutation(GOOD_3CLASS)))


def test_weights_missing_file():
    with pytest.raises(ConfigError):
        load_weights("/nonexistent/weights.txt")


# --- builtin model ---


def test_pure_red_is_class_zero():
    model = BuiltinModel.load()
    probs = model.classify(solid(255, 0, 0))
    assert probs.top_label == "warm"
    assert probs.labels.index("warm") == 0


def test_all_warm_hue_is_confident():
    model = BuiltinModel.load()
    probs = model.classify(solid(230, 60, 40))
    assert probs.prob_of("warm") >= 0.9


def test_red_mean_monotonic_in_class_zero_score():
    model = BuiltinModel.load()
    scores = [model.scores(solid(r, 80, 80))[0] for r in (40, 90, 140, 190, 240)]
    assert all(a < b for a, b in zip(scores, scores[1:]))


def test_phi_constant_image_frozen():
    model = BuiltinModel.load()
    phi = model.phi(CONSTANT(51))
    assert phi.shape == (8,)
    assert np.max(np.abs(phi - 0.2)) < 1e-9  # 51/255 for all 8 statistics
    assert FEATURE_NAMES[0] == "mean_r" and len(FEATURE_NAMES) == 8


def test_classify_probs_sum_to_one(rng):
    model = BuiltinModel.load()
    probs = model.classify(rand_image(rng, 32, 32))
    assert abs(sum(probs.probs) - 1.0) < 1e-12


def test_classify_deterministic(rng):
    model = BuiltinModel.load()
    img = rand_image(rng, 32, 32)
    assert model.classify(img) == model.classify(img)


# --- feature layers ---


def test_edge_feature_of_constant_is_zero_map():
    model = BuiltinModel.load()
    plane = model.feature(CONSTANT(128), "edge")
    assert np.array_equal(plane, np.zeros((16, 16)))


def test_edge_feature_matches_sobel_oracle(rng):
    model = BuiltinModel.load()
    img = rand_image(rng, 12, 12)
    lum = (img.r + img.g + img.b) / 3.0
    raw = oracles.sobel_magnitude_loop(lum)
    want = (raw - raw.min()) * (255.0 / (raw.max() - raw.min()))
    assert np.max(np.abs(model.feature(img, "edge") - want)) < 1e-9


def test_dc_feature_is_block_average_structure():
    model = BuiltinModel.load()
    # four constant 2x2 blocks with means 10, 20, 30, 40
    plane = np.repeat(np.repeat(np.array([[10.0, 20.0], [30.0, 40.0]]), 2, 0), 2, 1)
    img = ImageTensor(np.stack([plane] * 3))
    got = model.feature(img, "dc")
    want = np.repeat(np.repeat(np.array([[0.0, 85.0], [170.0, 255.0]]), 2, 0), 2, 1)
    assert np.max(np.abs(got - want)) < 1e-9


def test_unknown_layer_is_capability_error():
    model = BuiltinModel.load()
    with pytest.raises(CapabilityError) as err:
        model.feature(CONSTANT(1), "conv9")
    assert "edge" in str(err.value) and "dc" in str(err.value)


# --- protocol handler ---


def b64png(img: ImageTensor) -> str:
    return base64.b64encode(encode_png(img)).decode("ascii")


def test_handshake_response_shape():
    model = BuiltinModel.load()
    resp = handle_request(model, {"op": "handshake"})
    assert resp == {"labels": ["warm", "cool"], "features": ["edge", "dc"], "model": "builtin-linear-v1"}


def test_classify_request_response():
    model = BuiltinModel.load()
    resp = handle_request(model, {"op": "classify", "image": b64png(solid(255, 0, 0))})
    assert resp["labels"] == ["warm", "cool"]
    assert abs(sum(resp["probs"]) - 1.0) < 1e-9
    assert resp["probs"][0] > 0.9


def test_handler_identical_bytes_identical_json():
    model = BuiltinModel.load()
    req = {"op": "classify", "image": b64png(solid(10, 200, 90))}
    a = json.dumps(handle_request(model, req), sort_keys=True)
    b = json.dumps(handle_request(model, req), sort_keys=True)
    assert a == b


def test_handler_error_codes():
    model = BuiltinModel.load()
    assert handle_request(model, "nope")["error"]["code"] == "protocol"
    assert handle_request(model, {"op": "dance"})["error"]["code"] == "protocol"
    assert handle_request(model, {"op": "classify"})["error"]["code"] == "protocol"
    assert handle_request(model, {"op": "classify", "image": "!!!"})["error"]["code"] == "protocol"
    garbage = base64.b64encode(b"not a png").decode("ascii")
    assert handle_request(model, {"op": "classify", "image": garbage})["error"]["code"] == "decode"
    resp = handle_request(model, {"op": "features", "image": b64png(CONSTANT(5)), "layer": "conv9"})
    assert resp["error"]["code"] == "capability"
    assert resp["error"]["layers"] == ["edge", "dc"]
    assert handle_request(model, {"op": "features", "image": b64png(CONSTANT(5))})["error"]["code"] == "protocol"


def test_features_response_roundtrip():
    model = BuiltinModel.load()
    resp = handle_request(model, {"op": "features", "image": b64png(CONSTANT(8)), "layer": "edge"})
    assert resp["layer"] == "edge"
    from wmadv.imaging import decode

    fm = decode(base64.b64decode(resp["feature"]))
    assert np.array_equal(fm.r, np.zeros((16, 16)))


# --- clients over each transport ---


def client_exchange_checks(client):
    """Conformance checks shared by all transports (and reused for the
    external model server): handshake fields, classify invariants,
    determinism, feature decode, capability failure."""
    assert client.labels and len(set(client.labels)) == len(client.labels)
    assert client.model_name
    img = solid(240, 50, 30)
    png = encode_png(img)
    first = client.classify_png(png)
    second = client.classify_png(png)
    assert first == second
    assert abs(sum(first.probs) - 1.0) < 1e-4
    assert first.labels == client.labels
    if client.feature_layers:
        fm = client.feature_map(img, client.feature_layers[0])
        assert fm.image.width == img.width and fm.image.height == img.height
        with pytest.raises(CapabilityError):
            client.feature_map(img, "definitely-not-a-layer")


def test_builtin_client_conformance():
    with BuiltinClient() as client:
        assert client.labels == ("warm", "cool")
        assert client.feature_layers == ("edge", "dc")
        assert client.model_name == "builtin-linear-v1"
        client_exchange_checks(client)


SERVER_CMD = (
    f"{shlex.quote(sys.executable)} -c "
    "'import wmadv.oracle as o; o.serve_stdio(o.BuiltinModel.load())'"
)


def test_subprocess_client_conformance():
    with SubprocessClient(SERVER_CMD) as client:
        assert client.labels == ("warm", "cool")
        client_exchange_checks(client)


def test_subprocess_client_thread_safety():
    with SubprocessClient(SERVER_CMD) as client:
        png = encode_png(solid(10, 220, 40))
        results = []

        def worker():
            results.append(client.classify_png(png))

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(set(results)) == 1


def test_subprocess_client_dead_process_is_oracle_error():
    from wmadv.errors import OracleError

    with pytest.raises(OracleError):
        SubprocessClient(f"{shlex.quote(sys.executable)} -c 'pass'")


@pytest.fixture
def http_server():
    server = make_http_server(BuiltinModel.load())
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    thread.join(timeout=5)


def test_http_client_conformance(http_server):
    with HttpClient(http_server) as client:
        assert client.labels == ("warm", "cool")
        client_exchange_checks(client)


def test_http_client_accepts_full_endpoint_path(http_server):
    # users paste the exact URL the server prints, path included
    with HttpClient(http_server + "/v1/oracle") as client:
        assert client.url == http_server + "/v1/oracle"
        assert client.labels == ("warm", "cool")
    with HttpClient(http_server + "/v1/oracle/") as client:
        assert client.url == http_server + "/v1/oracle"


def test_http_client_connection_refused():
    from wmadv.errors import OracleError

    with pytest.raises(OracleError):
        HttpClient("http://127.0.0.1:1")  # nothing listens on port 1


def test_connect_dispatch(http_server):
    assert isinstance(connect(parse_endpoint("builtin")), BuiltinClient)
    client = connect(parse_endpoint(http_server))
    assert isinstance(client, HttpClient)
    client.close()


def test_client_rejects_malformed_probs():
    class BadClient(BuiltinClient):
        def _roundtrip(self, req):
            resp = super()._roundtrip(req)
            if "probs" in resp:
                resp["probs"] = [0.7, 0.4]
            return resp

    client = BadClient()
    with pytest.raises(ProtocolError):
        client.classify_png(encode_png(CONSTANT(9)))
