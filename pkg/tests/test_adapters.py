import json
import sys

import numpy as np
import pytest

from dialogkit.adapters import (
    AdapterFailure,
    AdapterRole,
    AdapterSet,
    AdapterTimeout,
    AdversarialEmbedder,
    MockAligner,
    MockEmbedder,
    ReplayBackend,
    SchemaViolation,
    SubprocessBackend,
    canonical_json,
    mock_adapter_set,
    request_key,
    validate_artifact,
    validate_request,
)

ALIGNER_REQUEST = {"audio_path": "a.wav", "words": ["hi", "there"], "language": "en"}


class TestSchemas:
    def test_aligner_roundtrip(self):
        validate_request(AdapterRole.ALIGNER, ALIGNER_REQUEST)
        artifact = MockAligner()(ALIGNER_REQUEST)
        validate_artifact(AdapterRole.ALIGNER, artifact)
        assert [a["word"] for a in artifact["alignments"]] == ["hi", "there"]

    def test_missing_required_field(self):
        with pytest.raises(SchemaViolation):
            validate_request(AdapterRole.ALIGNER, {"audio_path": "a.wav"})

    def test_wrong_type(self):
        with pytest.raises(SchemaViolation):
            validate_request(AdapterRole.QSCORE, {"audio_path": 7})

    def test_langid_needs_text_or_audio(self):
        validate_request(AdapterRole.LANGID, {"text": "hello"})
        validate_request(AdapterRole.LANGID, {"audio_path": "a.wav"})
        with pytest.raises(SchemaViolation):
            validate_request(AdapterRole.LANGID, {})

    def test_non_monotone_alignment_rejected(self):
        artifact = {
            "alignments": [
                {"word": "a", "start_s": 1.0, "end_s": 2.0, "score": 1.0},
                {"word": "b", "start_s": 0.5, "end_s": 1.5, "score": 1.0},
            ]
        }
        with pytest.raises(SchemaViolation):
            validate_artifact(AdapterRole.ALIGNER, artifact)

    def test_embedding_dim_mismatch(self):
        with pytest.raises(SchemaViolation):
            validate_artifact(AdapterRole.EMBEDDER, {"vector": [1.0, 2.0], "dim": 3})

    def test_dnsmos_range(self):
        with pytest.raises(SchemaViolation):
            validate_artifact(AdapterRole.QSCORE, {"dnsmos": 5.2})

    def test_extra_fields_allowed(self):
        validate_request(
            AdapterRole.EMBEDDER,
            {"audio_path": "a.wav", "true_speaker": 2, "fragment_index": 0},
        )


class TestAdapterSet:
    def test_unregistered_role(self):
        adapters = AdapterSet()
        with pytest.raises(AdapterFailure):
            adapters.invoke(AdapterRole.ASR, {"audio_path": "a.wav", "language": "en"})

    def test_invoke_validates_both_sides(self):
        adapters = AdapterSet()
        adapters.register(AdapterRole.QSCORE, lambda req: {"dnsmos": 99.0})
        with pytest.raises(SchemaViolation):
            adapters.invoke(AdapterRole.QSCORE, {"audio_path": "a.wav"})

    def test_from_env(self):
        env = {"ADAPTER_QSCORE_CMD": "qscore-backend --flag"}
        adapters = AdapterSet.from_env(env)
        assert adapters.has(AdapterRole.QSCORE)
        assert not adapters.has(AdapterRole.ASR)

    def test_mock_set_covers_all_roles(self):
        adapters = mock_adapter_set()
        assert set(adapters.roles()) == set(AdapterRole)


class TestMockEmbedder:
    def test_noiseless_one_hot(self):
        emb = MockEmbedder(dim=4, sigma=0.0)
        artifact = emb({"audio_path": "x.wav", "true_speaker": 3})
        assert artifact["vector"] == [0.0, 0.0, 1.0, 0.0]
        assert artifact["dim"] == 4

    def test_speaker_from_path(self):
        emb = MockEmbedder(dim=4)
        assert emb({"audio_path": "prompts/S2.wav"})["vector"][1] == 1.0

    def test_deterministic_given_seed(self):
        emb = MockEmbedder(dim=8, sigma=0.4, seed=11)
        req = {"audio_path": "x.wav", "true_speaker": 1, "start_s": 0.0, "end_s": 1.0}
        assert emb(req) == emb(req)

    def test_noise_varies_by_request(self):
        emb = MockEmbedder(dim=8, sigma=0.4, seed=11)
        a = emb({"audio_path": "x.wav", "true_speaker": 1, "start_s": 0.0, "end_s": 1.0})
        b = emb({"audio_path": "x.wav", "true_speaker": 1, "start_s": 1.0, "end_s": 2.0})
        assert a["vector"] != b["vector"]

    def test_high_noise_drives_attribution_to_chance(self):
        # Monte Carlo: with overwhelming noise, nearest-prompt attribution over
        # two speakers hits ~50%.
        emb = MockEmbedder(dim=8, sigma=50.0, seed=3)
        prompts = {
            k: np.array(
                MockEmbedder(dim=8, sigma=0.0)({"audio_path": "p.wav", "true_speaker": k})[
                    "vector"
                ]
            )
            for k in (1, 2)
        }
        n, correct = 3000, 0
        for i in range(n):
            true = 1 + i % 2
            vec = np.array(
                emb({"audio_path": "g.wav", "true_speaker": true, "fragment_index": i})[
                    "vector"
                ]
            )
            sims = {k: float(vec @ p) for k, p in prompts.items()}
            pred = min(sorted(sims), key=lambda k: (-sims[k], k))
            correct += pred == true
        p_hat = correct / n
        sigma = (0.25 / n) ** 0.5
        assert abs(p_hat - 0.5) < 4 * sigma


class TestAdversarialEmbedder:
    def test_flips_first_k_fragments_only(self):
        emb = AdversarialEmbedder(flip_count=2, n_speakers=3, dim=8)
        flipped = emb({"audio_path": "g.wav", "true_speaker": 1, "fragment_index": 0})
        assert flipped["vector"][1] == 1.0  # reported as S2
        honest = emb({"audio_path": "g.wav", "true_speaker": 1, "fragment_index": 2})
        assert honest["vector"][0] == 1.0
        prompt = emb({"audio_path": "p.wav", "true_speaker": 1})
        assert prompt["vector"][0] == 1.0


class TestSubprocessBackend:
    def _echo_backend(self, role=AdapterRole.QSCORE):
        code = (
            "import json,sys; req=json.load(sys.stdin);"
            "print(json.dumps({'dnsmos': 3.0}))"
        )
        return SubprocessBackend(role, f"{sys.executable} -c \"{code}\"")

    def test_roundtrip(self):
        artifact = self._echo_backend()({"audio_path": "a.wav"})
        assert artifact == {"dnsmos": 3.0}

    def test_nonzero_exit_reports_stderr(self):
        code = "import sys; sys.stderr.write('boom'); sys.exit(3)"
        backend = SubprocessBackend(
            AdapterRole.QSCORE, f"{sys.executable} -c \"{code}\""
        )
        with pytest.raises(AdapterFailure) as exc:
            backend({"audio_path": "a.wav"})
        assert exc.value.exit_code == 3
        assert "boom" in exc.value.stderr_tail

    def test_garbage_output(self):
        backend = SubprocessBackend(
            AdapterRole.QSCORE, f"{sys.executable} -c \"print('not json')\""
        )
        with pytest.raises(SchemaViolation):
            backend({"audio_path": "a.wav"})

    def test_timeout(self):
        backend = SubprocessBackend(
            AdapterRole.QSCORE,
            f"{sys.executable} -c \"import time; time.sleep(5)\"",
            timeout_s=0.3,
        )
        with pytest.raises(AdapterTimeout):
            backend({"audio_path": "a.wav"})


class TestReplayAndRecording:
    def test_record_then_replay_identical(self, tmp_path):
        adapters = mock_adapter_set().with_recording(tmp_path)
        request = dict(ALIGNER_REQUEST)
        first = adapters.invoke(AdapterRole.ALIGNER, request)
        replayed = AdapterSet.replay(tmp_path)
        assert replayed.invoke(AdapterRole.ALIGNER, request) == first

    def test_missing_artifact(self, tmp_path):
        (tmp_path / "aligner").mkdir()
        backend = ReplayBackend(AdapterRole.ALIGNER, tmp_path)
        with pytest.raises(AdapterFailure):
            backend(ALIGNER_REQUEST)

    def test_request_key_stable(self):
        a = {"audio_path": "x.wav", "words": ["a"], "language": "en"}
        b = {"language": "en", "words": ["a"], "audio_path": "x.wav"}
        assert request_key(a) == request_key(b)
        assert canonical_json(a) == canonical_json(b)

    def test_replay_is_byte_stable(self, tmp_path):
        adapters = mock_adapter_set().with_recording(tmp_path)
        adapters.invoke(AdapterRole.ALIGNER, ALIGNER_REQUEST)
        path = next((tmp_path / "aligner").iterdir())
        bytes_first = path.read_bytes()
        adapters.invoke(AdapterRole.ALIGNER, ALIGNER_REQUEST)
        assert path.read_bytes() == bytes_first
        assert json.loads(bytes_first)
