"""Command-line entry point.

Subcommands: ``pipeline run``, ``eval run``, ``elo compute``, ``augment text``,
``codec encode|decode``, ``prompt render``. Exit codes: 0 success, 1
config/fatal error, 2 partial failures.

Configuration is a JSON file; adapter command lines may be overridden per role
via ``ADAPTER_<ROLE>_CMD`` environment variables.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import adapters as adapters_mod
from . import corpus, delay_codec, objective, prompting, script, subjective
from .adapters import AdapterFailure, AdapterRole, AdapterSet

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2


@dataclass
class EngineConfig:
    adapter_commands: dict[str, str] = field(default_factory=dict)
    stage: int = 1
    parallelism: int = 1
    seed: int = 0
    paths: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    @classmethod
    def load(cls, path) -> "EngineConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            adapter_commands=doc.get("adapters", {}),
            stage=doc.get("stage", 1),
            parallelism=doc.get("parallelism", 1),
            seed=doc.get("seed", 0),
            paths=doc.get("paths", {}),
        )

    def adapter_set(self, timeout_s: float = adapters_mod.DEFAULT_TIMEOUT_S) -> AdapterSet:
        """Subprocess backends from config, overridable via environment."""
        result = AdapterSet()
        for role in AdapterRole:
            cmd = os.environ.get(
                f"ADAPTER_{role.value.upper()}_CMD",
                self.adapter_commands.get(role.value),
            )
            if cmd:
                result.register(
                    role, adapters_mod.SubprocessBackend(role, cmd, timeout_s)
                )
        return result


def _fatal(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_FATAL


def cmd_pipeline_run(args) -> int:
    try:
        config = EngineConfig.load(args.config) if args.config else EngineConfig()
        stage = corpus.StageConfig.for_stage(args.stage or config.stage)
        seed = args.seed if args.seed is not None else config.seed
        segments = corpus.read_segments_jsonl(args.segments)
        adapter_set = config.adapter_set()
        for role in (AdapterRole.QSCORE, AdapterRole.LANGID, AdapterRole.SRATE):
            if not adapter_set.has(role):
                return _fatal(f"no adapter registered for role {role.value!r}")
    except (OSError, ValueError) as exc:
        return _fatal(str(exc))

    by_recording: dict[str, list[corpus.DiarizationSegment]] = {}
    for seg in segments:
        by_recording.setdefault(seg.recording_id, []).append(seg)

    clips: list[corpus.AudioClipMeta] = []
    rejects: list[dict] = []
    partial = False
    for recording_id in sorted(by_recording):
        merged = corpus.merge_segments(by_recording[recording_id])
        rejects.extend(merged.rejected)

        def annotate_one(clip):
            try:
                return corpus.annotate(clip, adapter_set)
            except AdapterFailure as exc:
                return exc

        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            annotated_batch = list(pool.map(annotate_one, merged.clips))
        for clip, annotated in zip(merged.clips, annotated_batch):
            if isinstance(annotated, AdapterFailure):
                logger.error("%s: %s", clip.clip_id, annotated)
                rejects.append(
                    {
                        "clip_id": clip.clip_id,
                        "reject_reason": f"adapter:{annotated.role.value}",
                    }
                )
                partial = True
                continue
            transcript_language = annotated.language
            if adapter_set.has(AdapterRole.LANGID) and annotated.transcript:
                transcript_language = adapter_set.invoke(
                    AdapterRole.LANGID, {"text": annotated.transcript}
                )["language"]
            decision = corpus.filter_clip(annotated, stage, transcript_language)
            if not decision.keep:
                rejects.append(
                    {"clip_id": clip.clip_id, "reject_reason": decision.reject_reason}
                )
                continue
            if corpus.route_denoise(annotated) and adapter_set.has(AdapterRole.DENOISE):
                artifact = adapter_set.invoke(
                    AdapterRole.DENOISE, {"audio_path": annotated.audio_path}
                )
                annotated.audio_path = artifact["output_path"]
            clips.append(annotated)

    plan = corpus.stage_select(clips, stage, seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus.write_manifest_jsonl(out_dir / "manifest.jsonl", clips)
    corpus.write_rejects_jsonl(out_dir / "rejects.jsonl", rejects)
    (out_dir / "plan.jsonl").write_text(plan.to_jsonl(), encoding="utf-8")
    print(
        f"pipeline: {len(clips)} clips kept, {len(rejects)} rejected, "
        f"stage {stage.stage} plan has {len(plan.entries)} entries"
    )
    return EXIT_PARTIAL if partial else EXIT_OK


def _load_eval_cases(testset_path) -> list[tuple[dict, str]]:
    records = objective.read_testset_jsonl(testset_path)
    base = Path(testset_path).parent
    out = []
    for rec in records:
        script_path = Path(rec["script_path"])
        if not script_path.is_absolute():
            script_path = base / script_path
        out.append((rec, script_path.read_text(encoding="utf-8")))
    return out


def cmd_eval_run(args) -> int:
    try:
        config = EngineConfig.load(args.config) if args.config else EngineConfig()
        if args.replay:
            adapter_set = AdapterSet.replay(args.replay)
        else:
            adapter_set = config.adapter_set()
            if args.record:
                adapter_set = adapter_set.with_recording(args.record)
        for role in (AdapterRole.ALIGNER, AdapterRole.EMBEDDER, AdapterRole.ASR):
            if not adapter_set.has(role):
                return _fatal(f"no adapter registered for role {role.value!r}")
        loaded = _load_eval_cases(args.testset)
    except (OSError, ValueError) as exc:
        return _fatal(str(exc))

    def score_one(item) -> objective.CaseResult:
        rec, raw = item
        case_id = rec["case_id"]
        language = rec.get("language", "en")
        try:
            dlg = script.parse_script(raw, language)
            generated = str(Path(args.outputs) / f"{case_id}.wav")
            missing = [p for p in [generated, *rec["prompt_audio"].values()]
                       if not Path(p).exists()]
            if missing:
                raise FileNotFoundError(f"missing audio: {missing[0]}")
            case = objective.EvalCase(
                case_id=case_id,
                script=dlg,
                generated_audio=generated,
                prompt_audio={
                    script.SpeakerTag.from_label(k): v
                    for k, v in rec["prompt_audio"].items()
                },
                language=language,
            )
            return objective.evaluate_case(case, adapter_set)
        except (OSError, ValueError, AdapterFailure) as exc:
            logger.error("case %s failed: %s", case_id, exc)
            return objective.CaseResult(
                case_id=case_id,
                language=language,
                excluded_from_attribution=True,
                error=str(exc),
            )

    # case order is preserved whatever the pool size, so reports stay
    # deterministic; an interrupt flushes the finished cases as a partial
    # report
    results: list[objective.CaseResult] = []
    interrupted = False
    try:
        if config.parallelism > 1:
            with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
                for result in pool.map(score_one, loaded):
                    results.append(result)
        else:
            for item in loaded:
                results.append(score_one(item))
    except KeyboardInterrupt:
        interrupted = True

    report = objective.build_report(results)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_table() + "\n", encoding="utf-8")
    print(report.to_table())
    failed = sum(1 for r in results if r.error is not None)
    return EXIT_PARTIAL if failed or interrupted else EXIT_OK


def cmd_elo_compute(args) -> int:
    try:
        judgments = subjective.read_judgments_csv(args.judgments)
    except (OSError, ValueError) as exc:
        return _fatal(str(exc))
    dimensions = [args.dimension] if args.dimension else list(subjective.DIMENSIONS)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    wrote_any = False
    tables = []
    for dimension in dimensions:
        try:
            result = subjective.compute_elo(
                judgments, dimension, n_bootstrap=args.n_bootstrap, seed=args.seed
            )
        except subjective.NoJudgments:
            continue
        (out_dir / f"elo_{dimension}.json").write_text(
            result.to_json() + "\n", encoding="utf-8"
        )
        tables.append(result.to_table())
        wrote_any = True
    if not wrote_any:
        return _fatal("no judgments for any requested dimension")
    text = "\n\n".join(tables) + "\n"
    (out_dir / "elo.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_augment_text(args) -> int:
    try:
        raw = Path(args.infile).read_text(encoding="utf-8")
    except OSError as exc:
        return _fatal(str(exc))
    Path(args.outfile).write_text(
        script.augment_punctuation(raw, args.seed), encoding="utf-8"
    )
    return EXIT_OK


def _read_any_grid(path) -> delay_codec.TokenGrid:
    if str(path).endswith(".json"):
        return delay_codec.grid_from_json(Path(path).read_text(encoding="utf-8"))
    return delay_codec.read_grid_file(path)


def cmd_codec(args) -> int:
    try:
        if args.action == "encode":
            grid = _read_any_grid(args.infile)
            delayed = delay_codec.apply_delay(grid, args.pad_token)
            delay_codec.write_grid_file(args.outfile, delayed)
        else:
            delayed = delay_codec.read_delayed_file(args.infile, args.pad_token)
            grid = delay_codec.revert_delay(delayed)
            if str(args.outfile).endswith(".json"):
                Path(args.outfile).write_text(
                    delay_codec.grid_to_json(grid), encoding="utf-8"
                )
            else:
                delay_codec.write_grid_file(args.outfile, grid)
    except (OSError, ValueError) as exc:
        return _fatal(str(exc))
    return EXIT_OK


def cmd_prompt_render(args) -> int:
    try:
        raw = Path(args.script).read_text(encoding="utf-8")
        dlg = script.parse_script(raw, args.language)
        refs = None
        if args.refs:
            doc = json.loads(Path(args.refs).read_text(encoding="utf-8"))
            refs = prompting.ReferenceSet(
                {
                    script.SpeakerTag.from_label(k): prompting.AudioRef(
                        v["handle"], v.get("duration_s", 0.0)
                    )
                    for k, v in doc.items()
                }
            )
        prefix = None
        if args.prefix:
            doc = json.loads(Path(args.prefix).read_text(encoding="utf-8"))
            prefix = prompting.DialoguePrefix(
                transcript=doc["transcript"],
                audio=prompting.AudioRef(
                    doc["audio"]["handle"], doc["audio"].get("duration_s", 0.0)
                ),
            )
        if args.mode == "common_tts":
            rendered = prompting.render_common_tts_prompt(dlg)
        elif args.mode == "voice_clone" and prefix is None and refs is not None:
            rendered = prompting.render_voice_clone_prompt(dlg, refs)
        else:
            rendered = prompting.build_inference_prompt(args.mode, dlg, refs, prefix)
    except (OSError, ValueError) as exc:
        return _fatal(str(exc))
    Path(args.out).write_text(rendered.text, encoding="utf-8")
    if args.map_out:
        Path(args.map_out).write_text(
            rendered.placeholder_map_json() + "\n", encoding="utf-8"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialogkit",
        description="Corpus engineering and evaluation for multi-speaker "
        "spoken-dialogue synthesis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pipeline = sub.add_parser("pipeline", help="corpus construction")
    pipeline_sub = pipeline.add_subparsers(dest="action", required=True)
    run = pipeline_sub.add_parser("run", help="merge, annotate, filter, select")
    run.add_argument("--segments", required=True, help="diarization segments JSONL")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--config", help="engine config JSON")
    run.add_argument("--stage", type=int, choices=(1, 2, 3))
    run.add_argument("--seed", type=int)
    run.set_defaults(func=cmd_pipeline_run)

    ev = sub.add_parser("eval", help="objective evaluation")
    ev_sub = ev.add_subparsers(dest="action", required=True)
    ev_run = ev_sub.add_parser("run", help="score generated audio against scripts")
    ev_run.add_argument("--testset", required=True, help="test-set manifest JSONL")
    ev_run.add_argument("--outputs", required=True,
                        help="directory of generated audio, <case_id>.wav")
    ev_run.add_argument("--out", required=True, help="report output directory")
    ev_run.add_argument("--config", help="engine config JSON")
    ev_run.add_argument("--replay", help="recorded-artifact directory (offline)")
    ev_run.add_argument("--record", help="record adapter artifacts to this directory")
    ev_run.add_argument("--seed", type=int, default=0)
    ev_run.set_defaults(func=cmd_eval_run)

    elo = sub.add_parser("elo", help="subjective analytics")
    elo_sub = elo.add_subparsers(dest="action", required=True)
    elo_c = elo_sub.add_parser("compute", help="Elo ratings from judgments CSV")
    elo_c.add_argument("--judgments", required=True)
    elo_c.add_argument("--out", required=True)
    elo_c.add_argument("--dimension", choices=subjective.DIMENSIONS)
    elo_c.add_argument("--n-bootstrap", type=int, default=subjective.DEFAULT_BOOTSTRAP)
    elo_c.add_argument("--seed", type=int, default=0)
    elo_c.set_defaults(func=cmd_elo_compute)

    augment = sub.add_parser("augment", help="text augmentation")
    augment_sub = augment.add_subparsers(dest="action", required=True)
    augment_t = augment_sub.add_parser("text", help="punctuation diversity rewrite")
    augment_t.add_argument("--in", dest="infile", required=True)
    augment_t.add_argument("--out", dest="outfile", required=True)
    augment_t.add_argument("--seed", type=int, default=0)
    augment_t.set_defaults(func=cmd_augment_text)

    codec = sub.add_parser("codec", help="delay-pattern token codec")
    codec_sub = codec.add_subparsers(dest="action", required=True)
    for action, help_text in (
        ("encode", "apply the delay pattern"),
        ("decode", "revert the delay pattern"),
    ):
        c = codec_sub.add_parser(action, help=help_text)
        c.add_argument("--in", dest="infile", required=True)
        c.add_argument("--out", dest="outfile", required=True)
        c.add_argument("--pad-token", type=int, default=None)
        c.set_defaults(func=cmd_codec)

    prompt = sub.add_parser("prompt", help="chat-template rendering")
    prompt_sub = prompt.add_subparsers(dest="action", required=True)
    render = prompt_sub.add_parser("render", help="render a prompt for a script")
    render.add_argument("--script", required=True, help="tagged script file")
    render.add_argument(
        "--mode",
        default=prompting.DEFAULT_INFERENCE_MODE,
        choices=("common_tts",) + prompting.INFERENCE_MODES,
    )
    render.add_argument("--refs", help="JSON map of speaker label -> audio ref")
    render.add_argument("--prefix", help="JSON dialogue prefix")
    render.add_argument("--language", default="en")
    render.add_argument("--out", required=True)
    render.add_argument("--map-out", help="write the placeholder map JSON here")
    render.set_defaults(func=cmd_prompt_render)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
