import json
import random

import pytest

from dialogkit.adapters import (
    AdapterFailure,
    AdapterRole,
    AdapterSet,
    MockLangid,
    MockQscore,
    MockSrate,
)
from dialogkit.corpus import (
    AudioClipMeta,
    CorpusError,
    DiarizationSegment,
    InsufficientMaterial,
    OverlappingSameSpeaker,
    QualityBelowThreshold,
    SampleRateMismatch,
    StageConfig,
    UnsortedInput,
    annotate,
    build_synthetic_multispeaker,
    filter_clip,
    heuristic_ok,
    heuristic_reject_reason,
    merge_segments,
    read_manifest_jsonl,
    route_denoise,
    stage_select,
    write_manifest_jsonl,
)


def seg(start, end, speaker="spk0", rec="rec1", **kw):
    return DiarizationSegment(rec, speaker, start, end, **kw)


_SANE_TRANSCRIPT = "[S1]" + " ".join(f"word{i}" for i in range(60))


def clip(
    clip_id="c1",
    duration=60.0,
    speakers=2,
    dnsmos=3.5,
    language="en",
    srate=24000,
    transcript=_SANE_TRANSCRIPT,
    **kw,
):
    return AudioClipMeta(
        clip_id=clip_id,
        recording_id="rec1",
        spans=[(0.0, duration)],
        duration_s=duration,
        speaker_count=speakers,
        dnsmos=dnsmos,
        language=language,
        true_sample_rate_hz=srate,
        transcript=transcript,
        **kw,
    )


class TestMergeSegments:
    def test_single_segment_single_clip(self):
        result = merge_segments([seg(0, 5)])
        assert len(result.clips) == 1
        assert result.clips[0].speaker_count == 1
        assert result.clips[0].duration_s == 5

    def test_duration_cap_splits_chain(self):
        segments = [seg(i * 100, i * 100 + 99, speaker=f"s{i % 2}") for i in range(41)]
        # ~4059 s of covered time in 99 s pieces
        result = merge_segments(segments, max_gap_s=10, max_duration_s=3600)
        assert len(result.clips) >= 2
        assert all(c.duration_s <= 3600 for c in result.clips)
        covered = sum(c.duration_s for c in result.clips)
        assert covered == pytest.approx(sum(s.duration_s for s in segments))

    def test_gap_closes_clip(self):
        result = merge_segments([seg(0, 5), seg(20, 25)], max_gap_s=10)
        assert len(result.clips) == 2

    def test_gap_at_boundary_kept(self):
        result = merge_segments([seg(0, 5), seg(15, 20)], max_gap_s=10)
        assert len(result.clips) == 1

    def test_six_speakers_rejected(self):
        segments = [seg(i, i + 0.5, speaker=f"s{i}") for i in range(6)]
        result = merge_segments(segments)
        assert not result.clips
        assert result.rejected[0]["reject_reason"] == "speaker_count"

    def test_five_speakers_kept(self):
        segments = [seg(i, i + 0.5, speaker=f"s{i}") for i in range(5)]
        result = merge_segments(segments)
        assert len(result.clips) == 1
        assert result.clips[0].speaker_count == 5

    def test_unsorted_rejected(self):
        with pytest.raises(UnsortedInput):
            merge_segments([seg(5, 6), seg(0, 1)])

    def test_mixed_recordings_rejected(self):
        with pytest.raises(CorpusError):
            merge_segments([seg(0, 1, rec="a"), seg(2, 3, rec="b")])

    def test_overlap_same_speaker_warns_but_keeps(self):
        with pytest.warns(OverlappingSameSpeaker):
            result = merge_segments([seg(0, 5, "s0"), seg(4, 8, "s0")])
        assert len(result.clips) == 1
        assert result.clips[0].duration_s == 9

    def test_oversized_single_segment_rejected(self):
        result = merge_segments([seg(0, 3700)], max_duration_s=3600)
        assert not result.clips
        assert result.rejected[0]["reject_reason"] == "segment_exceeds_max_duration"

    def test_covered_time_preserved(self):
        rng = random.Random(4)
        t = 0.0
        segments = []
        for i in range(200):
            t += rng.uniform(0, 15)
            d = rng.uniform(0.5, 30)
            segments.append(seg(t, t + d, speaker=f"s{rng.randint(0, 4)}"))
            t += d
        result = merge_segments(segments)
        covered = sum(c.duration_s for c in result.clips)
        assert covered == pytest.approx(sum(s.duration_s for s in segments))
        spans = sum((c.spans for c in result.clips), [])
        assert spans == [(s.start_s, s.end_s) for s in segments]


class TestAnnotate:
    def _adapters(self):
        adapters = AdapterSet()
        adapters.register(AdapterRole.QSCORE, MockQscore(default=3.1))
        adapters.register(AdapterRole.LANGID, MockLangid(default="zh"))
        adapters.register(AdapterRole.SRATE, MockSrate(default=22050))
        return adapters

    def test_fields_populated(self):
        meta = annotate(clip(dnsmos=None, language=None, srate=None,
                             audio_path="a.wav"), self._adapters())
        assert meta.dnsmos == 3.1
        assert meta.language == "zh"
        assert meta.true_sample_rate_hz == 22050

    def test_adapter_failure_carries_role(self):
        adapters = self._adapters()

        def broken(request):
            raise AdapterFailure(AdapterRole.QSCORE, "backend crashed")

        adapters.register(AdapterRole.QSCORE, broken)
        with pytest.raises(AdapterFailure) as exc:
            annotate(clip(audio_path="a.wav"), adapters)
        assert exc.value.role is AdapterRole.QSCORE


class TestHeuristics:
    def test_empty_transcript(self):
        assert heuristic_reject_reason("", 5.0) == "empty_transcript"
        assert heuristic_reject_reason("[S1] [laugh]", 5.0) == "empty_transcript"

    def test_hallucination_loop_rejected(self):
        text = "啊啊啊…" * 50
        assert heuristic_reject_reason(text, 5.0) == "repetition"

    def test_word_loop_rejected(self):
        text = "the " * 30
        assert heuristic_reject_reason(text.strip(), 10.0) == "repetition"

    def test_normal_english_kept(self):
        text = " ".join(f"word{i}" for i in range(25))
        assert heuristic_ok(text, 10.0)

    def test_normal_chinese_kept(self):
        assert heuristic_ok("今天天气很好我们出去走走吧", 5.0)

    def test_rate_bounds_english(self):
        ten_words = " ".join(f"w{i}" for i in range(10))
        assert heuristic_reject_reason(ten_words, 1.0) == "speaking_rate"  # 10 w/s
        assert heuristic_reject_reason(ten_words, 40.0) == "speaking_rate"  # 0.25 w/s
        assert heuristic_ok(ten_words, 5.0)

    def test_rate_bounds_chinese(self):
        text = "今天天气很好我们一起出门散步去公园看看花草树木和小鸟再回家吃饭休息一会儿然后睡觉"  # 40 chars
        assert heuristic_reject_reason(text, 1.0) == "speaking_rate"  # 40 chars/s
        assert heuristic_ok(text, 10.0)

    def test_eight_repeats_allowed_nine_rejected(self):
        base = "xyz"
        assert heuristic_ok("padding words " + base * 8, 4.0)
        assert heuristic_reject_reason("padding words " + base * 9, 4.0) == "repetition"


class TestFilterClip:
    def test_stage1_dnsmos_boundary(self):
        stage = StageConfig.for_stage(1)
        assert not filter_clip(clip(dnsmos=2.79), stage, "en").keep
        assert filter_clip(clip(dnsmos=2.79), stage, "en").reject_reason == "dnsmos"
        assert filter_clip(clip(dnsmos=2.80), stage, "en").keep

    def test_stage2_boundaries(self):
        stage = StageConfig.for_stage(2)
        assert filter_clip(clip(dnsmos=3.39), stage, "en").reject_reason == "dnsmos"
        assert filter_clip(clip(dnsmos=3.40), stage, "en").keep
        assert (
            filter_clip(clip(srate=23999), stage, "en").reject_reason == "sample_rate"
        )
        assert filter_clip(clip(srate=24000), stage, "en").keep

    def test_language_mismatch(self):
        stage = StageConfig.for_stage(1)
        decision = filter_clip(clip(language="en"), stage, "zh")
        assert decision.reject_reason == "language_mismatch"

    def test_heuristic_reason_propagates(self):
        stage = StageConfig.for_stage(1)
        decision = filter_clip(clip(transcript="啊啊啊…" * 50, duration=5.0), stage, "en")
        assert decision.reject_reason == "repetition"

    def test_monotone_in_stage_strictness(self):
        rng = random.Random(8)
        s1, s2 = StageConfig.for_stage(1), StageConfig.for_stage(2)
        for _ in range(300):
            meta = clip(
                dnsmos=round(rng.uniform(1.0, 5.0), 2),
                srate=rng.choice([16000, 22050, 23999, 24000, 44100]),
                language=rng.choice(["en", "zh"]),
            )
            if filter_clip(meta, s2, "en").keep:
                assert filter_clip(meta, s1, "en").keep


class TestStageConfig:
    def test_invariants_enforced(self):
        with pytest.raises(CorpusError):
            StageConfig(1, min_dnsmos=3.0, min_sample_rate_hz=0)
        with pytest.raises(CorpusError):
            StageConfig(2, min_dnsmos=3.4, min_sample_rate_hz=16000)

    def test_canonical_stages(self):
        assert StageConfig.for_stage(1).min_dnsmos == 2.8
        assert StageConfig.for_stage(2).min_sample_rate_hz == 24000
        assert StageConfig.for_stage(3).include_synthetic


class TestRouteDenoise:
    @pytest.mark.parametrize(
        "tag,expected",
        [
            ("movie", True),
            ("tv", True),
            ("sports_commentary", True),
            ("esports_commentary", True),
            ("podcast", False),
            ("other", False),
        ],
    )
    def test_routing(self, tag, expected):
        assert route_denoise(clip(domain_tag=tag)) is expected


def groups_for_synthetic(n_groups=3, clips_per_group=4, srate=24000, dnsmos=3.5):
    groups = []
    for g in range(n_groups):
        group = []
        for i in range(clips_per_group):
            group.append(
                clip(
                    clip_id=f"g{g}-c{i}",
                    speakers=1,
                    dnsmos=dnsmos,
                    srate=srate,
                    transcript=f"[S1]clip {g} {i} words to say",
                )
            )
        groups.append(group)
    return groups


class TestSyntheticConstruction:
    def test_sample_rate_mismatch(self):
        groups = groups_for_synthetic()
        groups[1][2] = clip(clip_id="odd", speakers=1, srate=44100)
        with pytest.raises(SampleRateMismatch):
            build_synthetic_multispeaker(groups, 3, seed=0)

    def test_quality_threshold(self):
        groups = groups_for_synthetic()
        groups[0][0] = clip(clip_id="bad", speakers=1, dnsmos=3.3)
        with pytest.raises(QualityBelowThreshold):
            build_synthetic_multispeaker(groups, 3, seed=0)

    def test_quality_boundary_inclusive(self):
        groups = groups_for_synthetic(dnsmos=3.4)
        sample = build_synthetic_multispeaker(groups, 3, seed=0)
        assert sample.plan

    def test_empty_group_insufficient(self):
        groups = groups_for_synthetic()
        groups[2] = []
        with pytest.raises(InsufficientMaterial):
            build_synthetic_multispeaker(groups, 3, seed=0)

    def test_deterministic_and_covering(self):
        groups = groups_for_synthetic(n_groups=4, clips_per_group=5)
        reference = build_synthetic_multispeaker(groups, 4, seed=42)
        payload = json.dumps(reference.to_json_dict(), sort_keys=True)
        for _ in range(20):
            again = build_synthetic_multispeaker(groups, 4, seed=42)
            assert json.dumps(again.to_json_dict(), sort_keys=True) == payload
        speakers = {label for label, _ in reference.plan}
        assert speakers == {"S1", "S2", "S3", "S4"}

    def test_different_seeds_differ(self):
        groups = groups_for_synthetic(n_groups=3, clips_per_group=6)
        plans = {
            json.dumps(build_synthetic_multispeaker(groups, 3, seed=s).plan)
            for s in range(20)
        }
        assert len(plans) > 1

    def test_transcript_is_tagged_by_group_order(self):
        groups = groups_for_synthetic()
        sample = build_synthetic_multispeaker(groups, 3, seed=1)
        assert sample.transcript.startswith("[S1]clip 0")
        assert "[S2]" in sample.transcript and "[S3]" in sample.transcript

    def test_speaker_count_bounds(self):
        with pytest.raises(CorpusError):
            build_synthetic_multispeaker(groups_for_synthetic(2), 2, seed=0)


class TestStageSelect:
    def _dataset(self):
        return [
            clip(clip_id="low", speakers=1, dnsmos=3.0, srate=16000),
            clip(clip_id="mid1", speakers=1, dnsmos=3.5, srate=24000),
            clip(clip_id="mid2", speakers=2, dnsmos=3.6, srate=44100),
            clip(clip_id="multi", speakers=4, dnsmos=3.8, srate=48000),
            clip(clip_id="junk", speakers=2, dnsmos=2.5, srate=48000),
            clip(clip_id="lowsr", speakers=2, dnsmos=3.9, srate=22050),
        ]

    def test_stage1_includes_two_speaker_mid_quality(self):
        plan = stage_select(self._dataset(), StageConfig.for_stage(1), seed=0)
        ids = {e.ref_id for e in plan.entries}
        assert "low" in ids and "mid1" in ids and "mid2" in ids and "lowsr" in ids
        assert "junk" not in ids
        assert "multi" not in ids  # 3-5 speakers enter at stage 3

    def test_stage2_gates_and_downweights(self):
        plan = stage_select(self._dataset(), StageConfig.for_stage(2), seed=0)
        by_id = {e.ref_id: e for e in plan.entries}
        assert set(by_id) == {"mid1", "mid2"}
        assert by_id["mid1"].weight == 0.3
        assert by_id["mid2"].weight == 1.0

    def test_stage3_superset_plus_synthetic(self):
        groups = groups_for_synthetic()
        synth = build_synthetic_multispeaker(groups, 3, seed=7, sample_id="syn-7")
        plan2 = stage_select(self._dataset(), StageConfig.for_stage(2), seed=0)
        plan3 = stage_select(
            self._dataset(), StageConfig.for_stage(3), seed=0, synthetic=[synth]
        )
        ids2 = {e.ref_id for e in plan2.entries}
        ids3 = {e.ref_id for e in plan3.entries}
        assert ids2 < ids3
        assert "multi" in ids3
        assert "syn-7" in ids3
        assert {e.source for e in plan3.entries} == {"real", "synthetic"}

    def test_plan_reproducible(self):
        a = stage_select(self._dataset(), StageConfig.for_stage(2), seed=5)
        b = stage_select(self._dataset(), StageConfig.for_stage(2), seed=5)
        assert a.to_jsonl() == b.to_jsonl()


class TestManifestIo:
    def test_roundtrip(self, tmp_path):
        clips = [clip(clip_id="a"), clip(clip_id="b", speakers=1, dnsmos=None)]
        path = tmp_path / "manifest.jsonl"
        write_manifest_jsonl(path, clips)
        assert read_manifest_jsonl(path) == clips

    def test_field_names(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        write_manifest_jsonl(path, [clip()])
        doc = json.loads(path.read_text().splitlines()[0])
        assert set(doc) >= {
            "clip_id", "recording_id", "spans", "duration_s", "speaker_count",
            "dnsmos", "language", "true_sample_rate_hz", "domain_tag", "transcript",
        }

    def test_invariants_validated_on_load(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        doc = clip().to_json_dict()
        doc["duration_s"] = 4000.0
        path.write_text(json.dumps(doc) + "\n")
        with pytest.raises(CorpusError):
            read_manifest_jsonl(path)
