"""Regenerate the bundled 5-case offline-eval fixture.

Creates tagged scripts, placeholder WAVs, the test-set manifest, and a
recorded-artifact directory produced by the deterministic mock backends. The
manifest uses paths relative to the fixture directory, so `eval run --replay`
must run with the fixture directory as the working directory.

Run from anywhere: python tests/fixtures/build_replay_fixture.py
"""

import json
import shutil
import sys
import wave
from pathlib import Path

FIXTURE_DIR = Path(__file__).parent / "replay_5case"

CASES = [
    ("case1", "en", "[S1]Hello there. How are you today?[S2]I am fine. Thanks for asking."),
    ("case2", "en", "[S1]Quick update on the build. It works now.[S2]Great news![S3]Ship it today."),
    ("case3", "zh", "[S1]今天天气不错。我们出去走走。[S2]好主意。走吧。"),
    ("case4", "en", "[S1]One two three four five six seven eight."),
    ("case5", "zh", "[S1]第一句话。[S2]第二句话。[S3]第三句话。[S4]第四句话。[S5]第五句话。"),
]

# case4's ASR output carries one substitution so the fixture exercises a
# nonzero WER path; every other transcript matches the script exactly.
ASR_OVERRIDES = {
    "case4": "One two three four five six seven NINE.",
}


def write_silent_wav(path: Path, seconds: float = 0.1, rate: int = 16000) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(b"\x00\x00" * int(seconds * rate))


def main() -> None:
    sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))
    from dialogkit.adapters import mock_adapter_set
    from dialogkit.objective import EvalCase, evaluate_case
    from dialogkit.script import SpeakerTag, parse_script

    if FIXTURE_DIR.exists():
        shutil.rmtree(FIXTURE_DIR)
    (FIXTURE_DIR / "scripts").mkdir(parents=True)

    manifest_lines = []
    transcripts = {}
    eval_cases = []
    for case_id, language, raw in CASES:
        (FIXTURE_DIR / "scripts" / f"{case_id}.txt").write_text(raw, encoding="utf-8")
        generated = f"audio/{case_id}.wav"
        write_silent_wav(FIXTURE_DIR / generated)
        script = parse_script(raw, language)
        prompt_audio = {}
        for tag in script.speakers():
            rel = f"audio/prompt_{case_id}_{tag.label}.wav"
            write_silent_wav(FIXTURE_DIR / rel)
            prompt_audio[tag.label] = rel
        manifest_lines.append(
            json.dumps(
                {
                    "case_id": case_id,
                    "script_path": f"scripts/{case_id}.txt",
                    "prompt_audio": prompt_audio,
                    "language": language,
                },
                ensure_ascii=False,
                sort_keys=True,
            )
        )
        transcripts[generated] = ASR_OVERRIDES.get(case_id, script.render())
        eval_cases.append(
            EvalCase(
                case_id=case_id,
                script=script,
                generated_audio=generated,
                prompt_audio={
                    SpeakerTag.from_label(k): v for k, v in prompt_audio.items()
                },
                language=language,
            )
        )

    (FIXTURE_DIR / "testset.jsonl").write_text(
        "\n".join(manifest_lines) + "\n", encoding="utf-8"
    )

    adapters = mock_adapter_set(transcripts=transcripts).with_recording(
        FIXTURE_DIR / "artifacts"
    )
    for case in eval_cases:
        result = evaluate_case(case, adapters)
        assert result.error is None, (case.case_id, result.error)
    artifact_count = sum(
        1 for _ in (FIXTURE_DIR / "artifacts").rglob("*.json")
    )
    print(f"fixture written to {FIXTURE_DIR} ({artifact_count} artifacts)")


if __name__ == "__main__":
    main()
