"""Attack harness: run embedding rounds against an oracle and account results.

A run takes one host, its ranked watermark pool, one embedding route,
and a repetition schedule, and produces one AttackRecord per (watermark,
repetition) pair. The candidate that gets classified is byte-for-byte
the PNG that was written to disk. Records are kept in canonical order
(watermark rank, then schedule position) regardless of worker count, so
reports are reproducible under --jobs.

Success per candidate: with a two-label vocabulary the attack succeeds
when the true class's probability drops strictly below 0.5; with three
or more labels it succeeds when the argmax moves off the true class
(argmax ties resolve to the lexicographically smallest label). A host
counts as a total success when any of its candidates succeeded; errored
candidates are excluded from every rate denominator and tallied
separately.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .embedder import EmbedAlgo, EmbedParams, embed, perturbation_norms
from .errors import (
    CapabilityError,
    ConfigError,
    DecodeError,
    DimensionError,
    OracleError,
    ProtocolError,
)
from .imaging import ImageTensor, SizePolicy, decode, encode_png, quantize, resize
from .oracle import ClassProbs, OracleClient
from .selection import HostRecord, WatermarkRanking

__all__ = [
    "AttackRecord",
    "AttackSummary",
    "CombinedResult",
    "RoundSchedule",
    "candidate_name",
    "combined_pipeline",
    "emit_report",
    "load_image",
    "parse_records_csv",
    "run_attack",
    "success_rule",
    "summarize",
    "write_records_csv",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "host_id",
    "wm_id",
    "algo",
    "s_r",
    "s_g",
    "s_b",
    "embed_t",
    "true_class",
    "top_class",
    "p_true",
    "p_top",
    "success",
    "l2",
    "linf",
    "error",
)

AGG_ANY = "any-watermark"
AGG_FIRST = "first-watermark-only"


@dataclass(frozen=True)
class RoundSchedule:
    """Strictly increasing repetition counts, one attack round each."""

    times: tuple[int, ...]

    def __post_init__(self):
        if not self.times:
            raise ConfigError("schedule must not be empty")
        if any(not isinstance(t, int) or t < 1 for t in self.times):
            raise ConfigError(f"schedule entries must be integers >= 1: {self.times}")
        if any(a >= b for a, b in zip(self.times, self.times[1:])):
            raise ConfigError(f"schedule must be strictly increasing: {self.times}")


@dataclass(frozen=True)
class AttackRecord:
    """One classified candidate. Mirrors the records.csv columns exactly."""

    host_id: str
    wm_id: str
    algo: str
    s_r: float
    s_g: float
    s_b: float
    embed_t: int
    true_class: str
    top_class: str | None  # None when the oracle call failed
    p_true: float | None
    p_top: float | None
    success: bool
    l2: float
    linf: float
    error: str  # "" when the oracle call succeeded


@dataclass(frozen=True)
class AttackSummary:
    algo: str
    model: str
    aggregation: str
    hosts: int
    per_round: tuple[tuple[int, float], ...]  # (embed_t, success rate)
    total_success_rate: float
    errors: int

    def to_dict(self) -> dict:
        return {
            "algo": self.algo,
            "model": self.model,
            "aggregation": self.aggregation,
            "hosts": self.hosts,
            "per_round": [{"embed_t": t, "success_rate": r} for t, r in self.per_round],
            "total_success_rate": self.total_success_rate,
            "errors": self.errors,
        }


def success_rule(probs: ClassProbs, true_class: str) -> bool:
    """Candidate-level misleading criterion (see module docstring)."""
    if true_class not in probs.labels:
        raise ConfigError(f"true class {true_class!r} not in vocabulary {probs.labels}")
    if len(probs.labels) == 2:
        return probs.prob_of(true_class) < 0.5
    return probs.top_label != true_class


def load_image(path: str | Path) -> ImageTensor:
    try:
        return decode(Path(path).read_bytes())
    except OSError as exc:
        raise DecodeError(f"cannot read image {path}: {exc}") from exc


def _sanitize(image_id: str) -> str:
    flat = image_id.replace("\\", "/").replace("/", "~")
    if "__" in flat or "~" in image_id.replace("\\", "").replace("/", ""):
        raise ConfigError(
            f"image id {image_id!r} may not contain '__' or '~' (reserved by candidate naming)"
        )
    return flat


def _fmt_strength(value: float) -> str:
    return f"{value:g}"


def candidate_name(
    host_id: str, wm_id: str, algo: str, strengths: tuple[float, float, float], embed_t: int
) -> str:
    """Unique on-disk name for a candidate within a run."""
    s = "-".join(_fmt_strength(v) for v in strengths)
    return f"{_sanitize(host_id)}__{_sanitize(wm_id)}__{algo}__s{s}__t{embed_t:02d}.png"


def feature_watermark(client: OracleClient, wm: ImageTensor, layer: str, size: int) -> ImageTensor:
    """Turn a watermark into its oracle feature map, sized for embedding.

    Capability errors from the oracle propagate unchanged.
    """
    return resize(client.feature_map(wm, layer).image, size, size)


def _prepare_watermark(
    wm_path: Path,
    algo: EmbedAlgo,
    policy: SizePolicy,
    client: OracleClient,
    feature_layer: str | None,
) -> ImageTensor:
    raw = load_image(wm_path)
    size = policy.wm_size_dwt if algo is EmbedAlgo.DWT else policy.wm_size_dct
    if feature_layer is not None:
        return feature_watermark(client, raw, feature_layer, size)
    return resize(raw, size, size)


def run_attack(
    host: HostRecord,
    ranking: WatermarkRanking,
    algo: EmbedAlgo,
    params: EmbedParams,
    schedule: RoundSchedule,
    client: OracleClient,
    *,
    dataset_dir: str | Path,
    wm_dir: str | Path,
    policy: SizePolicy = SizePolicy(),
    out_dir: str | Path | None = None,
    jobs: int = 1,
    sequential_quantize: bool = False,
    feature_layer: str | None = None,
    timing_sink: list | None = None,
) -> list[AttackRecord]:
    """Attack one host with every ranked watermark at every schedule step.

    Oracle failures yield records with the error column set; dimension
    failures abort the offending (host, watermark) pair with a logged
    cause. Records come back in canonical order for any `jobs`.
    """
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    host_img = resize(load_image(Path(dataset_dir) / host.image_id), policy.host_size, policy.host_size)
    host_q = quantize(host_img)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    wm_images: dict[str, ImageTensor] = {}
    for wm_id in ranking.ids:
        try:
            wm_images[wm_id] = _prepare_watermark(
                Path(wm_dir) / wm_id, algo, policy, client, feature_layer
            )
        except (DecodeError, DimensionError, CapabilityError) as exc:
            log.error("skipping watermark %s for host %s: %s", wm_id, host.image_id, exc)

    def one(task: tuple[int, int]) -> tuple[tuple[int, int], AttackRecord | None]:
        wm_rank, t_idx = task
        wm_id = ranking.ids[wm_rank]
        embed_t = schedule.times[t_idx]
        wm_img = wm_images.get(wm_id)
        if wm_img is None:
            return task, None
        run_params = EmbedParams(
            params.strength_r,
            params.strength_g,
            params.strength_b,
            times=embed_t,
            sign_convention=params.sign_convention,
        )
        t0 = time.perf_counter()
        try:
            candidate = embed(host_img, wm_img, run_params, algo, sequential_quantize)
        except DimensionError as exc:
            log.error("aborting pair (%s, %s): %s", host.image_id, wm_id, exc)
            return task, None
        png = encode_png(candidate)
        t1 = time.perf_counter()
        if out_path is not None:
            name = candidate_name(host.image_id, wm_id, algo.value, params.strengths, embed_t)
            (out_path / name).write_bytes(png)
        norms = perturbation_norms(host_q, candidate)
        error = ""
        top_class: str | None = None
        p_true: float | None = None
        p_top: float | None = None
        success = False
        try:
            probs = client.classify_png(png)
            success = success_rule(probs, host.true_class)
            top_class = probs.top_label
            p_true = probs.prob_of(host.true_class)
            p_top = probs.top_prob
        except (OracleError, ProtocolError, CapabilityError) as exc:
            error = f"{type(exc).__name__}: {exc}"
            log.warning("oracle failed on %s/%s t=%d: %s", host.image_id, wm_id, embed_t, exc)
        t2 = time.perf_counter()
        if timing_sink is not None:
            timing_sink.append((algo.value, t1 - t0, t2 - t1))
        record = AttackRecord(
            host_id=host.image_id,
            wm_id=wm_id,
            algo=algo.value,
            s_r=params.strength_r,
            s_g=params.strength_g,
            s_b=params.strength_b,
            embed_t=embed_t,
            true_class=host.true_class,
            top_class=top_class,
            p_true=p_true,
            p_top=p_top,
            success=success,
            l2=norms.l2,
            linf=norms.linf,
            error=error,
        )
        return task, record

    tasks = [(w, t) for w in range(len(ranking.ids)) for t in range(len(schedule.times))]
    results: dict[tuple[int, int], AttackRecord | None] = {}
    if jobs == 1:
        for task in tasks:
            key, rec = one(task)
            results[key] = rec
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for key, rec in pool.map(one, tasks):
                results[key] = rec
    ordered = [results[task] for task in tasks]
    return [rec for rec in ordered if rec is not None]


def _first_watermark_filter(records: list[AttackRecord]) -> list[AttackRecord]:
    first_wm: dict[str, str] = {}
    for rec in records:
        first_wm.setdefault(rec.host_id, rec.wm_id)
    return [rec for rec in records if rec.wm_id == first_wm[rec.host_id]]


def summarize(
    records: list[AttackRecord],
    *,
    algo: str,
    model: str,
    first_watermark_only: bool = False,
) -> AttackSummary:
    """Aggregate records into per-round and total success rates.

    Per-round rate at repetition t: fraction of hosts for which any
    watermark succeeded at exactly t. Total: fraction of hosts misled at
    least once anywhere in the run, which can only meet or exceed every
    per-round rate. Errored records never count as successes and drop
    out of denominators.
    """
    errors = sum(1 for r in records if r.error)
    kept = _first_watermark_filter(records) if first_watermark_only else records
    clean = [r for r in kept if not r.error]
    rounds = sorted({r.embed_t for r in kept})
    per_round = []
    for t in rounds:
        at_t = [r for r in clean if r.embed_t == t]
        hosts_at_t = {r.host_id for r in at_t}
        winners = {r.host_id for r in at_t if r.success}
        rate = len(winners) / len(hosts_at_t) if hosts_at_t else 0.0
        per_round.append((t, rate))
    hosts = {r.host_id for r in clean}
    total_winners = {r.host_id for r in clean if r.success}
    total = len(total_winners) / len(hosts) if hosts else 0.0
    return AttackSummary(
        algo=algo,
        model=model,
        aggregation=AGG_FIRST if first_watermark_only else AGG_ANY,
        hosts=len({r.host_id for r in kept}),
        per_round=tuple(per_round),
        total_success_rate=total,
        errors=errors,
    )


@dataclass(frozen=True)
class CombinedResult:
    """Two-stage pipeline outcome: fast route first, fallback for the rest."""

    records: list[AttackRecord]
    dct_summary: AttackSummary
    dwt_summary: AttackSummary
    combined_total_rate: float
    dct_solved: tuple[str, ...]
    dwt_solved: tuple[str, ...]


def combined_pipeline(
    hosts: list[HostRecord],
    rankings: dict[str, WatermarkRanking],
    client: OracleClient,
    *,
    dct_params: EmbedParams,
    dct_schedule: RoundSchedule,
    dwt_params: EmbedParams,
    dwt_schedule: RoundSchedule,
    dataset_dir: str | Path,
    wm_root: str | Path,
    policy: SizePolicy = SizePolicy(),
    out_dir: str | Path | None = None,
    jobs: int = 1,
    sequential_quantize: bool = False,
    first_watermark_only: bool = False,
    timing_sink: list | None = None,
) -> CombinedResult:
    """Try the cheap DCT route on every host; rerun only the unsolved
    hosts through the wavelet route. Hosts solved in stage one are never
    embedded or classified again (verifiable by oracle call counting).
    """
    wm_root = Path(wm_root)

    def stage(host_list, algo, params, schedule):
        stage_records: list[AttackRecord] = []
        for host in host_list:
            ranking = rankings[host.image_id]
            stage_records.extend(
                run_attack(
                    host,
                    ranking,
                    algo,
                    params,
                    schedule,
                    client,
                    dataset_dir=dataset_dir,
                    wm_dir=wm_root / ranking.target_class,
                    policy=policy,
                    out_dir=out_dir,
                    jobs=jobs,
                    sequential_quantize=sequential_quantize,
                    timing_sink=timing_sink,
                )
            )
        return stage_records

    dct_records = stage(hosts, EmbedAlgo.DCT, dct_params, dct_schedule)
    solved = {r.host_id for r in dct_records if r.success and not r.error}
    remaining = [h for h in hosts if h.image_id not in solved]
    dwt_records = stage(remaining, EmbedAlgo.DWT, dwt_params, dwt_schedule)
    dwt_solved = {r.host_id for r in dwt_records if r.success and not r.error}

    model = client.model_name
    dct_summary = summarize(
        dct_records, algo=EmbedAlgo.DCT.value, model=model, first_watermark_only=first_watermark_only
    )
    dwt_summary = summarize(
        dwt_records, algo=EmbedAlgo.DWT.value, model=model, first_watermark_only=first_watermark_only
    )
    union = solved | dwt_solved
    combined_rate = len(union) / len(hosts) if hosts else 0.0
    return CombinedResult(
        records=dct_records + dwt_records,
        dct_summary=dct_summary,
        dwt_summary=dwt_summary,
        combined_total_rate=combined_rate,
        dct_solved=tuple(sorted(solved)),
        dwt_solved=tuple(sorted(dwt_solved)),
    )


# --- reports ---


def _float_cell(value: float | None) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _record_row(rec: AttackRecord) -> list[str]:
    return [
        rec.host_id,
        rec.wm_id,
        rec.algo,
        _float_cell(rec.s_r),
        _float_cell(rec.s_g),
        _float_cell(rec.s_b),
        str(rec.embed_t),
        rec.true_class,
        rec.top_class if rec.top_class is not None else "",
        _float_cell(rec.p_true),
        _float_cell(rec.p_top),
        "true" if rec.success else "false",
        _float_cell(rec.l2),
        _float_cell(rec.linf),
        rec.error,
    ]


def write_records_csv(records: list[AttackRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(_record_row(rec))


def parse_records_csv(path: str | Path) -> list[AttackRecord]:
    """Inverse of write_records_csv; floats round-trip exactly."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ConfigError(f"{path}: unexpected records header {header}")
        records = []
        for row in reader:
            if len(row) != len(CSV_COLUMNS):
                raise ConfigError(f"{path}: row has {len(row)} cells: {row}")
            cells = dict(zip(CSV_COLUMNS, row))
            records.append(
                AttackRecord(
                    host_id=cells["host_id"],
                    wm_id=cells["wm_id"],
                    algo=cells["algo"],
                    s_r=float(cells["s_r"]),
                    s_g=float(cells["s_g"]),
                    s_b=float(cells["s_b"]),
                    embed_t=int(cells["embed_t"]),
                    true_class=cells["true_class"],
                    top_class=cells["top_class"] or None,
                    p_true=float(cells["p_true"]) if cells["p_true"] else None,
                    p_top=float(cells["p_top"]) if cells["p_top"] else None,
                    success={"true": True, "false": False}[cells["success"]],
                    l2=float(cells["l2"]),
                    linf=float(cells["linf"]),
                    error=cells["error"],
                )
            )
    return records


def emit_report(
    records: list[AttackRecord],
    summaries: list[AttackSummary],
    manifest: dict,
    out_dir: str | Path,
    combined_total_rate: float | None = None,
) -> None:
    """Write records.csv, summary.json, plotdata.csv, and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv(records, out / "records.csv")
    summary_payload: dict = {"runs": [s.to_dict() for s in summaries]}
    if combined_total_rate is not None:
        summary_payload["combined_total_rate"] = combined_total_rate
    (out / "summary.json").write_text(json.dumps(summary_payload, indent=2) + "\n", encoding="utf-8")
    with (out / "plotdata.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["algo", "model", "embed_t", "success_rate"])
        for summary in summaries:
            for t, rate in summary.per_round:
                writer.writerow([summary.algo, summary.model, str(t), repr(rate)])
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def summarize_timing(timing_sink: list) -> dict:
    """Mean/max embed and oracle seconds per algo from a timing sink."""
    out: dict = {}
    for algo in sorted({row[0] for row in timing_sink}):
        rows = [row for row in timing_sink if row[0] == algo]
        embeds = [row[1] for row in rows]
        oracle = [row[2] for row in rows]
        out[algo] = {
            "candidates": len(rows),
            "embed_mean_s": math.fsum(embeds) / len(embeds),
            "embed_max_s": max(embeds),
            "oracle_mean_s": math.fsum(oracle) / len(oracle),
            "oracle_max_s": max(oracle),
        }
    return out
