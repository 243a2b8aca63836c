from __future__ import annotations

import itertools
import logging

import numpy as np
import pytest

from wmadv.errors import ConfigError
from wmadv.imaging import ImageTensor, encode_png
from wmadv.oracle import BuiltinClient, ClassProbs
from wmadv.selection import (
    HostRecord,
    class_second,
    load_manifest,
    rank_watermarks,
    select_hosts,
)


def solid_png(r, g, b, n=16) -> bytes:
    planes = np.zeros((3, n, n))
    planes[0], planes[1], planes[2] = r, g, b
    return encode_png(ImageTensor(planes))


@pytest.fixture(scope="module")
def client():
    return BuiltinClient()


# --- class_second ---


def test_class_second_frozen_examples():
    assert class_second(ClassProbs(("a", "b", "c"), (0.5, 0.25, 0.25))) == "b"
    assert class_second(ClassProbs(("x", "y"), (1.0, 0.0))) == "y"
    assert class_second(ClassProbs(("car", "aircraft", "other"), (0.90, 0.09, 0.01))) == "aircraft"


def argsort_oracle_second(labels, probs) -> str:
    order = sorted(range(len(labels)), key=lambda i: (-probs[i], labels[i]))
    return labels[order[1]]


def test_class_second_exhaustive_4class_permutations():
    labels = ("c0", "c1", "c2", "c3")
    for base in [(0.4, 0.3, 0.2, 0.1), (0.4, 0.2, 0.2, 0.2), (0.3, 0.3, 0.2, 0.2), (0.25, 0.25, 0.25, 0.25)]:
        for perm in set(itertools.permutations(base)):
            got = class_second(ClassProbs(labels, perm))
            assert got == argsort_oracle_second(labels, perm)


def test_class_second_tie_breaks_lexicographic():
    assert class_second(ClassProbs(("b", "a", "z"), (0.5, 0.25, 0.25))) == "a"
    assert class_second(ClassProbs(("b", "a"), (0.5, 0.5))) == "b"  # second slot of canonical order


def test_class_second_needs_two_labels():
    with pytest.raises(ConfigError):
        class_second(ClassProbs(("only",), (1.0,)))


# --- manifest ---


def test_load_manifest_roundtrip(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("image_id,true_class\na.png,warm\nb/c.png,cool\n")
    assert load_manifest(path) == {"a.png": "warm", "b/c.png": "cool"}


@pytest.mark.parametrize(
    "body",
    [
        "id,class\na.png,warm\n",
        "image_id,true_class\n,warm\n",
        "image_id,true_class\na.png,\n",
        "image_id,true_class\na.png,warm\na.png,cool\n",
        "image_id,true_class\n",
    ],
)
def test_load_manifest_rejects_malformed(tmp_path, body):
    path = tmp_path / "labels.csv"
    path.write_text(body)
    with pytest.raises(ConfigError):
        load_manifest(path)


def test_load_manifest_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_manifest(tmp_path / "absent.csv")


# --- select_hosts ---


@pytest.fixture
def dataset(tmp_path):
    root = tmp_path / "data"
    root.mkdir()
    files = {
        "w1.png": (solid_png(230, 50, 40), "warm"),
        "w2.png": (solid_png(210, 70, 60), "warm"),
        "k1.png": (solid_png(40, 200, 70), "cool"),
        "k2.png": (solid_png(60, 180, 90), "cool"),
        "mislabelled.png": (solid_png(40, 200, 70), "warm"),  # oracle will say cool
        "broken.png": (b"not a png", "warm"),
    }
    for name, (blob, _) in files.items():
        (root / name).write_bytes(blob)
    manifest = {name: cls for name, (_, cls) in files.items()}
    return root, manifest


def test_select_hosts_only_correct_and_seeded(dataset, client):
    root, manifest = dataset
    hosts = select_hosts(root, manifest, client, n=4, seed=11)
    assert {h.image_id for h in hosts} == {"w1.png", "w2.png", "k1.png", "k2.png"}
    for h in hosts:
        assert h.probs.top_label == h.true_class
        assert h.class_second == ("cool" if h.true_class == "warm" else "warm")
    again = select_hosts(root, manifest, client, n=4, seed=11)
    assert [h.image_id for h in hosts] == [h.image_id for h in again]


def test_select_hosts_respects_n(dataset, client):
    root, manifest = dataset
    hosts = select_hosts(root, manifest, client, n=2, seed=3)
    assert len(hosts) == 2


def test_select_hosts_partial_with_warning(dataset, client, caplog):
    root, manifest = dataset
    with caplog.at_level(logging.WARNING):
        hosts = select_hosts(root, manifest, client, n=10, seed=0)
    assert len(hosts) == 4
    assert any("exhausted" in rec.message for rec in caplog.records)
    assert any("unreadable" in rec.message for rec in caplog.records)


def test_select_hosts_skips_off_vocabulary_class(tmp_path, client, caplog):
    root = tmp_path / "data"
    root.mkdir()
    (root / "a.png").write_bytes(solid_png(230, 50, 40))
    with caplog.at_level(logging.WARNING):
        hosts = select_hosts(root, {"a.png": "zebra"}, client, n=1, seed=0)
    assert hosts == []
    assert any("vocabulary" in rec.message for rec in caplog.records)


def test_select_hosts_missing_file_skipped(tmp_path, client):
    root = tmp_path / "data"
    root.mkdir()
    (root / "real.png").write_bytes(solid_png(230, 50, 40))
    hosts = select_hosts(root, {"real.png": "warm", "ghost.png": "warm"}, client, n=2, seed=5)
    assert [h.image_id for h in hosts] == ["real.png"]


def test_select_hosts_rejects_bad_n(dataset, client):
    root, manifest = dataset
    with pytest.raises(ConfigError):
        select_hosts(root, manifest, client, n=0, seed=0)


def test_host_record_json_roundtrip(client):
    probs = ClassProbs(("warm", "cool"), (0.8, 0.2))
    rec = HostRecord("x.png", "warm", probs, "cool")
    assert HostRecord.from_dict(rec.to_dict()) == rec


# --- rank_watermarks ---


@pytest.fixture
def wm_dir(tmp_path):
    root = tmp_path / "warm"
    root.mkdir()
    # warm confidence decreasing from very saturated to balanced
    (root / "strong.png").write_bytes(solid_png(250, 20, 20))
    (root / "mid.png").write_bytes(solid_png(200, 90, 80))
    (root / "weak.png").write_bytes(solid_png(150, 120, 120))
    return root


def test_rank_watermarks_orders_by_confidence(wm_dir, client):
    ranking = rank_watermarks(wm_dir, client, "warm", k=10)
    assert ranking.ids == ("strong.png", "mid.png", "weak.png")
    confs = [c for _, c in ranking.entries]
    assert confs == sorted(confs, reverse=True)
    assert ranking.target_class == "warm"


def test_rank_watermarks_k_truncates(wm_dir, client):
    assert len(rank_watermarks(wm_dir, client, "warm", k=2).entries) == 2


def test_rank_watermarks_ties_break_on_id(tmp_path, client):
    root = tmp_path / "pool"
    root.mkdir()
    blob = solid_png(240, 40, 40)
    (root / "zz.png").write_bytes(blob)
    (root / "aa.png").write_bytes(blob)
    ranking = rank_watermarks(root, client, "warm", k=2)
    assert ranking.ids == ("aa.png", "zz.png")


def test_rank_watermarks_confidence_not_argmax(wm_dir, client):
    # ranking by a class the images don't belong to still works: it uses
    # raw confidence in the target class, lowest-warm image first now
    ranking = rank_watermarks(wm_dir, client, "cool", k=3)
    assert ranking.ids == ("weak.png", "mid.png", "strong.png")


def test_rank_watermarks_empty_dir_errors(tmp_path, client):
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ConfigError):
        rank_watermarks(empty, client, "warm")
    with pytest.raises(ConfigError):
        rank_watermarks(tmp_path / "missing", client, "warm")


def test_rank_watermarks_unknown_target(wm_dir, client):
    with pytest.raises(ConfigError):
        rank_watermarks(wm_dir, client, "zebra")


def test_rank_watermarks_bad_k(wm_dir, client):
    with pytest.raises(ConfigError):
        rank_watermarks(wm_dir, client, "warm", k=0)
