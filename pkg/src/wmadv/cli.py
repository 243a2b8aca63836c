"""Command line front end for the watermark attack toolkit.

Exit codes: 0 on success, 1 when flags or configuration are invalid,
2 when a validated run fails at runtime (oracle transport, undecodable
inputs, IO).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .embedder import (
    DCT_DEFAULT_SCHEDULE,
    DCT_DEFAULT_STRENGTHS,
    DWT_DEFAULT_SCHEDULE,
    DWT_DEFAULT_STRENGTHS,
    ENHANCED_STRENGTHS,
    EmbedAlgo,
    EmbedParams,
    SignConvention,
    embed,
    perturbation_norms,
)
from .errors import (
    CapabilityError,
    ConfigError,
    DecodeError,
    DimensionError,
    OracleError,
    ProtocolError,
)
from .harness import (
    AGG_ANY,
    AGG_FIRST,
    AttackSummary,
    RoundSchedule,
    candidate_name,
    combined_pipeline,
    emit_report,
    load_image,
    parse_records_csv,
    run_attack,
    summarize,
    summarize_timing,
)
from .imaging import SizePolicy, encode_png, quantize, resize
from .oracle import ENV_ORACLE, BuiltinModel, connect, make_http_server, parse_endpoint, serve_stdio
from .selection import load_manifest, rank_watermarks, select_hosts

WAVELET_FAMILY = "haar"
WAVELET_LEVELS = 3

# Manifest key -> flag that overrides it. The report manifest must name
# every one of these, and every flag here must show up in --help; both
# directions are checked by tests.
ATTACK_FLAG_REGISTRY = {
    "algo": "--algo",
    "s_r": "--strengths",
    "s_g": "--strengths",
    "s_b": "--strengths",
    "schedule": "--schedule",
    "host_size": "--host-size",
    "wm_size": "--wm-size",
    "sign_convention": "--sign-convention",
    "oracle": "--oracle",
    "seed": "--seed",
    "out_dir": "--out-dir",
    "aggregation": "--first-watermark-only",
    "sequential_quantize": "--sequential-quantize",
    "jobs": "--jobs",
    "n_hosts": "--n-hosts",
    "k_watermarks": "--top-k",
    "feature_layer": "--feature-layer",
    "save_candidates": "--save-candidates",
    "dataset": "--dataset",
    "manifest": "--manifest",
    "wm_root": "--wm-root",
}

COMBINED_FLAG_REGISTRY = {
    key: flag
    for key, flag in ATTACK_FLAG_REGISTRY.items()
    if key not in ("algo", "s_r", "s_g", "s_b", "schedule")
}
COMBINED_FLAG_REGISTRY.update(
    {
        "dct_s_r": "--dct-strengths",
        "dct_s_g": "--dct-strengths",
        "dct_s_b": "--dct-strengths",
        "dct_schedule": "--dct-schedule",
        "dwt_s_r": "--dwt-strengths",
        "dwt_s_g": "--dwt-strengths",
        "dwt_s_b": "--dwt-strengths",
        "dwt_schedule": "--dwt-schedule",
    }
)

# Recorded in every manifest but not overridable from the command line.
FIXED_MANIFEST_KEYS = ("command", "model", "wavelet", "wavelet_levels")

_EPILOG = (
    "Fixed parameters recorded in the run manifest: wavelet=%s, "
    "wavelet_levels=%d, plus the oracle's reported model id and the "
    "subcommand name." % (WAVELET_FAMILY, WAVELET_LEVELS)
)


def parse_strengths(text: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"strengths must be three comma-separated numbers, got {text!r}")
    try:
        r, g, b = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"strengths must be numeric, got {text!r}") from None
    return (r, g, b)


def parse_schedule(text: str) -> tuple[int, ...]:
    """Parse either '5,10,15' or an inclusive 'start:stop[:step]' range."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                start, stop, step = parts[0], parts[1], 1
            elif len(parts) == 3:
                start, stop, step = parts
            else:
                raise ValueError
            if step < 1:
                raise ValueError
            return tuple(range(start, stop + 1, step))
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(
            f"schedule must be 'start:stop[:step]' or comma-separated ints, got {text!r}"
        ) from None


def _oracle_spec(flag_value: str | None) -> str:
    if flag_value is None:
        flag_value = os.environ.get(ENV_ORACLE)
        if flag_value is None:
            return "builtin"
    if not flag_value.strip():
        raise ConfigError(f"no oracle endpoint: pass --oracle or set {ENV_ORACLE}")
    return flag_value.strip()


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved knobs for an attack or combined run."""

    dataset: str
    manifest: str
    wm_root: str
    out_dir: str
    oracle: str
    seed: int
    n_hosts: int
    k_watermarks: int
    host_size: int
    wm_size: int
    sign_convention: str
    aggregation: str
    sequential_quantize: bool
    jobs: int
    feature_layer: str | None
    save_candidates: bool

    def __post_init__(self):
        if self.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {self.jobs}")
        if self.n_hosts < 1:
            raise ConfigError(f"--n-hosts must be >= 1, got {self.n_hosts}")
        if self.k_watermarks < 1:
            raise ConfigError(f"--top-k must be >= 1, got {self.k_watermarks}")
        if self.feature_layer is not None and not self.feature_layer.strip():
            raise ConfigError("--feature-layer must not be empty")
        self.policy()  # rejects bad size combinations
        SignConvention(self.sign_convention)

    def policy(self) -> SizePolicy:
        return SizePolicy(self.host_size, self.wm_size)

    def base_manifest(self, command: str, model: str) -> dict:
        return {
            "command": command,
            "model": model,
            "wavelet": WAVELET_FAMILY,
            "wavelet_levels": WAVELET_LEVELS,
            "dataset": self.dataset,
            "manifest": self.manifest,
            "wm_root": self.wm_root,
            "out_dir": self.out_dir,
            "oracle": self.oracle,
            "seed": self.seed,
            "n_hosts": self.n_hosts,
            "k_watermarks": self.k_watermarks,
            "host_size": self.host_size,
            "wm_size": self.wm_size,
            "sign_convention": self.sign_convention,
            "aggregation": self.aggregation,
            "sequential_quantize": self.sequential_quantize,
            "jobs": self.jobs,
            "feature_layer": self.feature_layer,
            "save_candidates": self.save_candidates,
        }


def _shared_config(args) -> RunConfig:
    return RunConfig(
        dataset=args.dataset,
        manifest=args.manifest,
        wm_root=args.wm_root,
        out_dir=args.out_dir,
        oracle=_oracle_spec(args.oracle),
        seed=args.seed,
        n_hosts=args.n_hosts,
        k_watermarks=args.top_k,
        host_size=args.host_size,
        wm_size=args.wm_size,
        sign_convention=args.sign_convention,
        aggregation=AGG_FIRST if args.first_watermark_only else AGG_ANY,
        sequential_quantize=args.sequential_quantize,
        jobs=args.jobs,
        feature_layer=args.feature_layer,
        save_candidates=args.save_candidates,
    )


def _stage_defaults(algo: EmbedAlgo, feature_layer: str | None) -> tuple[tuple[float, float, float], tuple[int, ...]]:
    if feature_layer is not None:
        strengths = ENHANCED_STRENGTHS
    elif algo is EmbedAlgo.DWT:
        strengths = DWT_DEFAULT_STRENGTHS
    else:
        strengths = DCT_DEFAULT_STRENGTHS
    schedule = DWT_DEFAULT_SCHEDULE if algo is EmbedAlgo.DWT else DCT_DEFAULT_SCHEDULE
    return strengths, schedule


def _params(strengths: tuple[float, float, float], convention: str) -> EmbedParams:
    return EmbedParams(*strengths, sign_convention=SignConvention(convention))


def _select_and_rank(cfg: RunConfig, client):
    manifest_rows = load_manifest(cfg.manifest)
    hosts = select_hosts(cfg.dataset, manifest_rows, client, cfg.n_hosts, cfg.seed)
    rankings = {}
    for host in hosts:
        cls = host.class_second
        if cls not in rankings:
            rankings[cls] = rank_watermarks(
                Path(cfg.wm_root) / cls, client, cls, cfg.k_watermarks
            )
    return hosts, rankings


def _print_summary(s: AttackSummary) -> None:
    rounds = " ".join(f"t{t}={rate:.4f}" for t, rate in s.per_round)
    print(
        f"[{s.algo}] model={s.model} hosts={s.hosts} errors={s.errors} "
        f"aggregation={s.aggregation} total={s.total_success_rate:.4f}"
    )
    print(f"[{s.algo}] per-round: {rounds}")


def _print_timing(sink: list) -> None:
    for algo, stats in sorted(summarize_timing(sink).items()):
        print(
            f"[timing] {algo}: candidates={stats['candidates']} "
            f"embed mean={stats['embed_mean_s']:.4f}s max={stats['embed_max_s']:.4f}s "
            f"oracle mean={stats['oracle_mean_s']:.4f}s max={stats['oracle_max_s']:.4f}s"
        )


# --- subcommand handlers ---


def cmd_embed(args) -> int:
    algo = EmbedAlgo(args.algo)
    strengths = parse_strengths(args.strengths) if args.strengths else _stage_defaults(algo, None)[0]
    if args.t < 1:
        raise ConfigError(f"--t must be >= 1, got {args.t}")
    policy = SizePolicy(args.host_size, args.wm_size)
    params = EmbedParams(
        *strengths, times=args.t, sign_convention=SignConvention(args.sign_convention)
    )
    host = resize(load_image(args.host), policy.host_size, policy.host_size)
    wm_size = policy.wm_size_dwt if algo is EmbedAlgo.DWT else policy.wm_size_dct
    wm = resize(load_image(args.wm), wm_size, wm_size)
    candidate = quantize(embed(host, wm, params, algo, sequential_quantize=args.sequential_quantize))
    out = args.out or candidate_name(
        Path(args.host).name, Path(args.wm).name, algo.value, strengths, args.t
    )
    Path(out).write_bytes(encode_png(candidate))
    norms = perturbation_norms(quantize(host), candidate)
    print(f"wrote {out}")
    print(f"l2={norms.l2:.4f} linf={norms.linf:.1f} per_pixel_mean={norms.per_pixel_mean:.6f}")
    return 0


def cmd_select_hosts(args) -> int:
    with connect(parse_endpoint(_oracle_spec(args.oracle))) as client:
        manifest_rows = load_manifest(args.manifest)
        hosts = select_hosts(args.dataset, manifest_rows, client, args.n_hosts, args.seed)
    payload = json.dumps([h.to_dict() for h in hosts], indent=2, sort_keys=True)
    if args.out == "-":
        print(payload)
    else:
        Path(args.out).write_text(payload + "\n")
        print(f"selected {len(hosts)} hosts -> {args.out}")
    return 0


def cmd_rank_watermarks(args) -> int:
    with connect(parse_endpoint(_oracle_spec(args.oracle))) as client:
        ranking = rank_watermarks(args.wm_dir, client, args.target_class, args.top_k)
    payload = json.dumps(
        {"target_class": ranking.target_class, "entries": [list(e) for e in ranking.entries]},
        indent=2,
    )
    if args.out == "-":
        print(payload)
    else:
        Path(args.out).write_text(payload + "\n")
        print(f"ranked {len(ranking.entries)} watermarks -> {args.out}")
    return 0


def cmd_attack(args) -> int:
    cfg = _shared_config(args)
    algo = EmbedAlgo(args.algo)
    default_strengths, default_schedule = _stage_defaults(algo, cfg.feature_layer)
    strengths = parse_strengths(args.strengths) if args.strengths else default_strengths
    schedule = RoundSchedule(parse_schedule(args.schedule) if args.schedule else default_schedule)
    params = _params(strengths, cfg.sign_convention)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cand_dir = out_dir / "candidates" if cfg.save_candidates else None
    sink: list | None = [] if args.timing else None
    with connect(parse_endpoint(cfg.oracle)) as client:
        hosts, rankings = _select_and_rank(cfg, client)
        records = []
        for host in hosts:
            records.extend(
                run_attack(
                    host,
                    rankings[host.class_second],
                    algo,
                    params,
                    schedule,
                    client,
                    dataset_dir=cfg.dataset,
                    wm_dir=Path(cfg.wm_root) / host.class_second,
                    policy=cfg.policy(),
                    out_dir=cand_dir,
                    jobs=cfg.jobs,
                    sequential_quantize=cfg.sequential_quantize,
                    feature_layer=cfg.feature_layer,
                    timing_sink=sink,
                )
            )
        first_only = cfg.aggregation == AGG_FIRST
        summary = summarize(
            records, algo=algo.value, model=client.model_name, first_watermark_only=first_only
        )
        manifest = cfg.base_manifest("attack", client.model_name)
        manifest.update(
            {
                "algo": algo.value,
                "s_r": strengths[0],
                "s_g": strengths[1],
                "s_b": strengths[2],
                "schedule": list(schedule.times),
            }
        )
        emit_report(records, [summary], manifest, out_dir)
    _print_summary(summary)
    if sink is not None:
        _print_timing(sink)
    print(f"report written to {out_dir}")
    return 0


def cmd_combined(args) -> int:
    cfg = _shared_config(args)
    dct_strengths = (
        parse_strengths(args.dct_strengths)
        if args.dct_strengths
        else _stage_defaults(EmbedAlgo.DCT, cfg.feature_layer)[0]
    )
    dwt_strengths = (
        parse_strengths(args.dwt_strengths)
        if args.dwt_strengths
        else _stage_defaults(EmbedAlgo.DWT, cfg.feature_layer)[0]
    )
    dct_schedule = RoundSchedule(
        parse_schedule(args.dct_schedule) if args.dct_schedule else DCT_DEFAULT_SCHEDULE
    )
    dwt_schedule = RoundSchedule(
        parse_schedule(args.dwt_schedule) if args.dwt_schedule else DWT_DEFAULT_SCHEDULE
    )
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cand_dir = out_dir / "candidates" if cfg.save_candidates else None
    sink: list | None = [] if args.timing else None
    with connect(parse_endpoint(cfg.oracle)) as client:
        hosts, rankings = _select_and_rank(cfg, client)
        host_rankings = {h.image_id: rankings[h.class_second] for h in hosts}
        result = combined_pipeline(
            hosts,
            host_rankings,
            client,
            dct_params=_params(dct_strengths, cfg.sign_convention),
            dct_schedule=dct_schedule,
            dwt_params=_params(dwt_strengths, cfg.sign_convention),
            dwt_schedule=dwt_schedule,
            dataset_dir=cfg.dataset,
            wm_root=cfg.wm_root,
            policy=cfg.policy(),
            out_dir=cand_dir,
            jobs=cfg.jobs,
            sequential_quantize=cfg.sequential_quantize,
            first_watermark_only=cfg.aggregation == AGG_FIRST,
            timing_sink=sink,
        )
        manifest = cfg.base_manifest("combined", client.model_name)
        manifest.update(
            {
                "dct_s_r": dct_strengths[0],
                "dct_s_g": dct_strengths[1],
                "dct_s_b": dct_strengths[2],
                "dct_schedule": list(dct_schedule.times),
                "dwt_s_r": dwt_strengths[0],
                "dwt_s_g": dwt_strengths[1],
                "dwt_s_b": dwt_strengths[2],
                "dwt_schedule": list(dwt_schedule.times),
            }
        )
        emit_report(
            records := list(result.records),
            [result.dct_summary, result.dwt_summary],
            manifest,
            out_dir,
            combined_total_rate=result.combined_total_rate,
        )
    _print_summary(result.dct_summary)
    _print_summary(result.dwt_summary)
    print(
        f"[combined] dct_solved={len(result.dct_solved)} dwt_solved={len(result.dwt_solved)} "
        f"total={result.combined_total_rate:.4f} records={len(records)}"
    )
    if sink is not None:
        _print_timing(sink)
    print(f"report written to {out_dir}")
    return 0


def cmd_features(args) -> int:
    with connect(parse_endpoint(_oracle_spec(args.oracle))) as client:
        if args.layer is None:
            print("available layers: " + ", ".join(client.feature_layers))
            return 0
        fmap = client.feature_map(load_image(args.image), args.layer)
    Path(args.out).write_bytes(encode_png(fmap.image))
    print(f"wrote {args.out} layer={fmap.layer} size={fmap.image.width}x{fmap.image.height}")
    return 0


def cmd_report(args) -> int:
    records = parse_records_csv(args.records)
    if not records:
        raise ConfigError(f"no records in {args.records}")
    algos = list(dict.fromkeys(r.algo for r in records))
    summaries = [
        summarize(
            [r for r in records if r.algo == a],
            algo=a,
            model=args.model_name,
            first_watermark_only=args.first_watermark_only,
        )
        for a in algos
    ]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": "report",
        "source": str(args.records),
        "model": args.model_name,
        "aggregation": AGG_FIRST if args.first_watermark_only else AGG_ANY,
    }
    emit_report(records, summaries, manifest, out_dir)
    for s in summaries:
        _print_summary(s)
    print(f"report written to {out_dir}")
    return 0


def cmd_oracle_builtin(args) -> int:
    model = BuiltinModel.load(args.weights or "")
    if args.http:
        host, _, port_text = args.http.rpartition(":")
        if not host or not port_text.isdigit():
            raise ConfigError(f"--http expects HOST:PORT, got {args.http!r}")
        server = make_http_server(model, host, int(port_text))
        bound_host, bound_port = server.server_address[:2]
        print(f"listening on http://{bound_host}:{bound_port}/v1/oracle", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
        return 0
    serve_stdio(model)
    return 0


# --- parser assembly ---


def _add_oracle(sp) -> None:
    sp.add_argument(
        "--oracle",
        default=None,
        metavar="ENDPOINT",
        help="classifier endpoint: 'builtin', 'builtin:<weights-file>', "
        f"'subprocess:<cmd>', or an http(s) URL; defaults to ${ENV_ORACLE} "
        "if set, else the builtin model",
    )


def _add_sizes(sp) -> None:
    sp.add_argument("--host-size", type=int, default=256, help="square host size in pixels")
    sp.add_argument(
        "--wm-size", type=int, default=64, help="square watermark size for the dwt route"
    )


def _add_embedding_flags(sp) -> None:
    sp.add_argument(
        "--sign-convention",
        choices=[c.value for c in SignConvention],
        default=SignConvention.G_PLUS_RB_MINUS.value,
        help="per-channel sign pattern for the dwt route",
    )
    sp.add_argument(
        "--sequential-quantize",
        action="store_true",
        help="quantize to 8-bit between embedding repetitions instead of once at the end",
    )


def _add_run_flags(sp) -> None:
    sp.add_argument("--dataset", required=True, help="directory of candidate host images")
    sp.add_argument(
        "--manifest", required=True, help="labels csv with header image_id,true_class"
    )
    sp.add_argument(
        "--wm-root", required=True, help="directory holding one watermark folder per class"
    )
    sp.add_argument("--out-dir", required=True, help="report output directory")
    sp.add_argument("--seed", type=int, default=0, help="host sampling seed")
    sp.add_argument("--n-hosts", type=int, default=12, help="number of hosts to attack")
    sp.add_argument(
        "--top-k", type=int, default=10, help="watermarks kept per class after ranking"
    )
    sp.add_argument(
        "--jobs",
        type=int,
        default=max(1, os.cpu_count() or 1),
        help="parallel candidate evaluations per host",
    )
    sp.add_argument(
        "--first-watermark-only",
        action="store_true",
        help="aggregate per-round rates over the top watermark only instead of any watermark",
    )
    sp.add_argument(
        "--feature-layer",
        default=None,
        metavar="LAYER",
        help="replace each watermark with its oracle feature map from this layer "
        "(strength default becomes 0.08,0.08,0.08)",
    )
    sp.add_argument(
        "--save-candidates",
        action="store_true",
        help="keep every generated candidate png under <out-dir>/candidates",
    )
    sp.add_argument(
        "--timing", action="store_true", help="print per-candidate embed and oracle latency"
    )
    _add_sizes(sp)
    _add_embedding_flags(sp)
    _add_oracle(sp)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wmadv",
        description="Invisible-watermark black-box attack toolkit: embed watermarks, "
        "probe a classifier oracle, and measure per-round success rates.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sp = sub.add_parser(
        "embed",
        help="embed one watermark into one host and write the candidate png",
        description="Embed a watermark into a host image and print perturbation norms. "
        "Default strengths mirror the published parameters: dwt 0.04,0.03,0.08 "
        "and dct 0.04,0.01,0.08.",
    )
    sp.add_argument("--host", required=True, help="host image path")
    sp.add_argument("--wm", required=True, help="watermark image path")
    sp.add_argument("--algo", choices=[a.value for a in EmbedAlgo], required=True)
    sp.add_argument("--t", type=int, default=1, help="embedding repetitions")
    sp.add_argument(
        "--strengths", default=None, metavar="R,G,B", help="per-channel strengths"
    )
    sp.add_argument("--out", default=None, help="output path (default: canonical candidate name)")
    _add_sizes(sp)
    _add_embedding_flags(sp)
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser(
        "select-hosts",
        help="sample correctly classified hosts from a labeled dataset",
        description="Classify a seeded random sample of the dataset and keep images the "
        "oracle already gets right, recording each host's runner-up class.",
    )
    sp.add_argument("--dataset", required=True, help="directory of candidate host images")
    sp.add_argument("--manifest", required=True, help="labels csv with header image_id,true_class")
    sp.add_argument("--n-hosts", type=int, default=12, help="number of hosts to keep")
    sp.add_argument("--seed", type=int, default=0, help="host sampling seed")
    sp.add_argument("--out", default="-", help="output json path or - for stdout")
    _add_oracle(sp)
    sp.set_defaults(func=cmd_select_hosts)

    sp = sub.add_parser(
        "rank-watermarks",
        help="rank a class folder of watermark images by oracle confidence",
        description="Classify every image in a folder and keep the top-k by confidence "
        "in the target class.",
    )
    sp.add_argument("--wm-dir", required=True, help="directory of watermark images")
    sp.add_argument("--target-class", required=True, help="class the watermarks should score high on")
    sp.add_argument("--top-k", type=int, default=10, help="watermarks to keep")
    sp.add_argument("--out", default="-", help="output json path or - for stdout")
    _add_oracle(sp)
    sp.set_defaults(func=cmd_rank_watermarks)

    sp = sub.add_parser(
        "attack",
        help="run one embedding route over selected hosts and emit reports",
        description="Select hosts, rank watermarks from each host's runner-up class, embed "
        "over the repetition schedule, and score candidates against the oracle. "
        "Defaults mirror the published parameters: dwt strengths 0.04,0.03,0.08 with "
        "schedule 5:50:5; dct strengths 0.04,0.01,0.08 with schedule 1:10.",
        epilog=_EPILOG,
    )
    sp.add_argument("--algo", choices=[a.value for a in EmbedAlgo], required=True)
    sp.add_argument(
        "--strengths",
        default=None,
        metavar="R,G,B",
        help="per-channel strengths (default depends on --algo and --feature-layer)",
    )
    sp.add_argument(
        "--schedule",
        default=None,
        metavar="SPEC",
        help="repetition schedule, 'start:stop[:step]' or comma list (default depends on --algo)",
    )
    _add_run_flags(sp)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser(
        "combined",
        help="dct stage first, then the dwt stage on hosts the dct stage missed",
        description="Run the dct route over all hosts, then retry only the unsolved hosts "
        "with the dwt route; the combined total counts a host once if either stage "
        "succeeded.",
        epilog=_EPILOG,
    )
    sp.add_argument("--dct-strengths", default=None, metavar="R,G,B", help="dct stage strengths")
    sp.add_argument("--dwt-strengths", default=None, metavar="R,G,B", help="dwt stage strengths")
    sp.add_argument(
        "--dct-schedule", default=None, metavar="SPEC", help="dct stage repetition schedule"
    )
    sp.add_argument(
        "--dwt-schedule", default=None, metavar="SPEC", help="dwt stage repetition schedule"
    )
    _add_run_flags(sp)
    sp.set_defaults(func=cmd_combined)

    sp = sub.add_parser(
        "features",
        help="fetch an oracle feature map as a png",
        description="Request a middle-layer feature map for an image; without --layer, "
        "list the layers the oracle advertises.",
    )
    sp.add_argument("--image", required=True, help="input image path")
    sp.add_argument("--layer", default=None, help="feature layer id (omit to list layers)")
    sp.add_argument("--out", default="feature.png", help="output png path")
    _add_oracle(sp)
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser(
        "report",
        help="recompute summaries and plot data from an existing records csv",
        description="Parse a records csv produced by attack/combined and regenerate "
        "summary.json and plotdata.csv under a new output directory.",
    )
    sp.add_argument("--records", required=True, help="records.csv path")
    sp.add_argument("--out-dir", required=True, help="report output directory")
    sp.add_argument("--model-name", default="unspecified", help="model id to stamp into outputs")
    sp.add_argument(
        "--first-watermark-only",
        action="store_true",
        help="aggregate per-round rates over the top watermark only instead of any watermark",
    )
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser(
        "oracle-builtin",
        help="serve the builtin linear classifier over stdio or http",
        description="Expose the builtin model through the oracle json protocol: one json "
        "object per line on stdio, or POST /v1/oracle when --http is given.",
    )
    sp.add_argument("--weights", default=None, help="weights file (default: shipped weights)")
    sp.add_argument("--http", default=None, metavar="HOST:PORT", help="serve over http instead of stdio")
    sp.set_defaults(func=cmd_oracle_builtin)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags; fold that into the validation code
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        OracleError,
        ProtocolError,
        CapabilityError,
        DecodeError,
        DimensionError,
        OSError,
    ) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
