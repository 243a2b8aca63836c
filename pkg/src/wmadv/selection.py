"""Host sampling and watermark ranking.

Hosts are drawn uniformly (seeded) from the dataset images the oracle
already classifies correctly; each keeps the label the oracle ranked
strictly second, which names the class whose watermarks will attack it.
Watermark candidates live in one directory per class and are ranked by
the oracle's confidence in the target class, descending, regardless of
the argmax. All ties break on the image id (lexicographic ascending) so
runs are reproducible.
"""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, DecodeError
from .imaging import decode
from .oracle import ClassProbs, OracleClient

__all__ = [
    "HostRecord",
    "WatermarkRanking",
    "class_second",
    "load_manifest",
    "rank_watermarks",
    "select_hosts",
]

log = logging.getLogger(__name__)

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


@dataclass(frozen=True)
class HostRecord:
    """A correctly-classified host image and its attack target class."""

    image_id: str
    true_class: str
    probs: ClassProbs
    class_second: str

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "true_class": self.true_class,
            "class_second": self.class_second,
            "labels": list(self.probs.labels),
            "probs": list(self.probs.probs),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "HostRecord":
        return cls(
            image_id=payload["image_id"],
            true_class=payload["true_class"],
            probs=ClassProbs(tuple(payload["labels"]), tuple(payload["probs"])),
            class_second=payload["class_second"],
        )


@dataclass(frozen=True)
class WatermarkRanking:
    """Watermark ids with target-class confidence, best first."""

    target_class: str
    entries: tuple[tuple[str, float], ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(image_id for image_id, _ in self.entries)


def class_second(probs: ClassProbs) -> str:
    """Label holding the second-largest probability.

    Canonical order sorts by probability descending with label-ascending
    tie-breaks, and the second entry of that order is returned, so exact
    ties are deterministic.
    """
    if len(probs.labels) < 2:
        raise ConfigError("class_second needs a vocabulary of at least 2 labels")
    ranked = sorted(zip(probs.labels, probs.probs), key=lambda lp: (-lp[1], lp[0]))
    return ranked[1][0]


def load_manifest(path: str | Path) -> dict[str, str]:
    """Read an image_id,true_class CSV into a dict."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != [
                "image_id",
                "true_class",
            ]:
                raise ConfigError(
                    f"{path}: expected header 'image_id,true_class', got {reader.fieldnames}"
                )
            mapping: dict[str, str] = {}
            for row in reader:
                image_id = (row["image_id"] or "").strip()
                true_class = (row["true_class"] or "").strip()
                if not image_id or not true_class:
                    raise ConfigError(f"{path}: blank image_id or true_class in row {row}")
                if image_id in mapping:
                    raise ConfigError(f"{path}: duplicate image_id {image_id!r}")
                mapping[image_id] = true_class
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    if not mapping:
        raise ConfigError(f"{path}: manifest has no rows")
    return mapping


def select_hosts(
    dataset_dir: str | Path,
    manifest: dict[str, str],
    client: OracleClient,
    n: int,
    seed: int,
) -> list[HostRecord]:
    """Sample up to n correctly-classified hosts, uniformly, seeded.

    Unreadable files and misclassified images are skipped (logged). If
    the dataset runs out before n hosts are found the partial list is
    returned with a warning.
    """
    if n < 1:
        raise ConfigError(f"host count must be >= 1, got {n}")
    dataset_dir = Path(dataset_dir)
    ordered = sorted(manifest)
    order = random.Random(seed).sample(ordered, len(ordered))
    hosts: list[HostRecord] = []
    for image_id in order:
        if len(hosts) == n:
            break
        path = dataset_dir / image_id
        try:
            img = decode(path.read_bytes())
        except (OSError, DecodeError) as exc:
            log.warning("skipping unreadable host %s: %s", image_id, exc)
            continue
        probs = client.classify_image(img)
        true_class = manifest[image_id]
        if true_class not in probs.labels:
            log.warning(
                "skipping %s: class %r not in oracle vocabulary %s",
                image_id,
                true_class,
                probs.labels,
            )
            continue
        if probs.top_label != true_class:
            continue
        hosts.append(
            HostRecord(
                image_id=image_id,
                true_class=true_class,
                probs=probs,
                class_second=class_second(probs),
            )
        )
    if len(hosts) < n:
        log.warning("dataset exhausted: found %d correctly-classified hosts of %d requested", len(hosts), n)
    return hosts


def rank_watermarks(
    class_dir: str | Path,
    client: OracleClient,
    target_class: str,
    k: int = 10,
) -> WatermarkRanking:
    """Rank a class directory's images by target-class confidence."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if target_class not in client.labels:
        raise ConfigError(
            f"target class {target_class!r} not in oracle vocabulary {client.labels}"
        )
    class_dir = Path(class_dir)
    if not class_dir.is_dir():
        raise ConfigError(f"watermark class directory {class_dir} does not exist")
    files = sorted(
        p for p in class_dir.iterdir() if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not files:
        raise ConfigError(f"watermark class directory {class_dir} has no images")
    scored: list[tuple[str, float]] = []
    for path in files:
        try:
            img = decode(path.read_bytes())
        except (OSError, DecodeError) as exc:
            log.warning("skipping unreadable watermark %s: %s", path.name, exc)
            continue
        probs = client.classify_image(img)
        scored.append((path.name, probs.prob_of(target_class)))
    if not scored:
        raise ConfigError(f"no readable watermark images in {class_dir}")
    scored.sort(key=lambda ic: (-ic[1], ic[0]))
    return WatermarkRanking(target_class=target_class, entries=tuple(scored[:k]))
