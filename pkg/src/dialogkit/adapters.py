"""External-model adapter protocol: JSON requests/artifacts over subprocesses,
plus replay and deterministic mock backends.

Every role has a fixed wire schema. Backends never leak into core logic: the
engine sees validated JSON artifacts only. ``ADAPTER_<ROLE>_CMD`` environment
variables select subprocess command lines per role.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import shlex
import subprocess
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
DEFAULT_TIMEOUT_S = 600.0


class AdapterRole(str, Enum):
    ALIGNER = "aligner"
    EMBEDDER = "embedder"
    ASR = "asr"
    ASR_DIARIZE = "asr_diarize"
    QSCORE = "qscore"
    LANGID = "langid"
    SRATE = "srate"
    DENOISE = "denoise"
    AUDIO_CUT = "audio_cut"


class AdapterError(Exception):
    pass


class AdapterFailure(AdapterError):
    def __init__(self, role: AdapterRole, message: str, exit_code: int | None = None,
                 stderr_tail: str = ""):
        super().__init__(f"{role.value}: {message}")
        self.role = role
        self.exit_code = exit_code
        self.stderr_tail = stderr_tail


class AdapterTimeout(AdapterFailure):
    pass


class SchemaViolation(AdapterError):
    pass


@dataclass(frozen=True)
class WordAlignment:
    word: str
    start_s: float
    end_s: float
    score: float = 1.0


# field name -> (types, required). Extra fields are permitted so callers can
# attach provenance metadata for test backends.
_STR = (str,)
_NUM = (int, float)
_REQUEST_FIELDS: dict[AdapterRole, dict[str, tuple[tuple, bool]]] = {
    AdapterRole.ALIGNER: {"audio_path": (_STR, True), "words": ((list,), True),
                          "language": (_STR, True)},
    AdapterRole.EMBEDDER: {"audio_path": (_STR, True), "start_s": (_NUM, False),
                           "end_s": (_NUM, False)},
    AdapterRole.ASR: {"audio_path": (_STR, True), "language": (_STR, True)},
    AdapterRole.ASR_DIARIZE: {"audio_path": (_STR, True), "language": (_STR, True)},
    AdapterRole.QSCORE: {"audio_path": (_STR, True)},
    AdapterRole.LANGID: {"text": (_STR, False), "audio_path": (_STR, False)},
    AdapterRole.SRATE: {"audio_path": (_STR, True)},
    AdapterRole.DENOISE: {"audio_path": (_STR, True), "spans": ((list,), False)},
    AdapterRole.AUDIO_CUT: {"audio_path": (_STR, True), "spans": ((list,), False)},
}
_ARTIFACT_FIELDS: dict[AdapterRole, dict[str, tuple[tuple, bool]]] = {
    AdapterRole.ALIGNER: {"alignments": ((list,), True)},
    AdapterRole.EMBEDDER: {"vector": ((list,), True), "dim": ((int,), True)},
    AdapterRole.ASR: {"text": (_STR, True)},
    AdapterRole.ASR_DIARIZE: {"text": (_STR, True)},
    AdapterRole.QSCORE: {"dnsmos": (_NUM, True)},
    AdapterRole.LANGID: {"language": (_STR, True)},
    AdapterRole.SRATE: {"true_sample_rate_hz": ((int,), True)},
    AdapterRole.DENOISE: {"output_path": (_STR, True)},
    AdapterRole.AUDIO_CUT: {"output_path": (_STR, True)},
}


def _check_fields(role: AdapterRole, obj, fields, kind: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{role.value} {kind} must be a JSON object")
    for name, (types, required) in fields.items():
        if name not in obj:
            if required:
                raise SchemaViolation(f"{role.value} {kind} missing field {name!r}")
            continue
        value = obj[name]
        if isinstance(value, bool) or not isinstance(value, types):
            raise SchemaViolation(
                f"{role.value} {kind} field {name!r} has type "
                f"{type(value).__name__}"
            )


def validate_request(role: AdapterRole, request: dict) -> None:
    _check_fields(role, request, _REQUEST_FIELDS[role], "request")
    if role == AdapterRole.LANGID and "text" not in request and "audio_path" not in request:
        raise SchemaViolation("langid request needs text or audio_path")
    if role == AdapterRole.ALIGNER and not all(
        isinstance(w, str) for w in request["words"]
    ):
        raise SchemaViolation("aligner words must be strings")


def validate_artifact(role: AdapterRole, artifact: dict) -> None:
    _check_fields(role, artifact, _ARTIFACT_FIELDS[role], "artifact")
    if role == AdapterRole.ALIGNER:
        prev_end = None
        for rec in artifact["alignments"]:
            if not isinstance(rec, dict):
                raise SchemaViolation("alignment entries must be objects")
            for key in ("word", "start_s", "end_s"):
                if key not in rec:
                    raise SchemaViolation(f"alignment entry missing {key!r}")
            if rec["end_s"] <= rec["start_s"]:
                raise SchemaViolation(
                    f"alignment for {rec['word']!r} is empty or inverted"
                )
            if prev_end is not None and rec["start_s"] < prev_end:
                raise SchemaViolation("alignments must be monotone, non-overlapping")
            prev_end = rec["end_s"]
    elif role == AdapterRole.EMBEDDER:
        if len(artifact["vector"]) != artifact["dim"]:
            raise SchemaViolation("embedding vector length disagrees with dim")
    elif role == AdapterRole.QSCORE:
        if not 1.0 <= artifact["dnsmos"] <= 5.0:
            raise SchemaViolation("dnsmos must lie in [1, 5]")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def request_key(request: dict) -> str:
    return hashlib.sha256(canonical_json(request).encode()).hexdigest()[:24]


class SubprocessBackend:
    """One JSON request on stdin, one JSON artifact on stdout."""

    def __init__(self, role: AdapterRole, command: str,
                 timeout_s: float = DEFAULT_TIMEOUT_S):
        self.role = role
        self.argv = shlex.split(command)
        self.timeout_s = timeout_s

    def __call__(self, request: dict) -> dict:
        try:
            proc = subprocess.run(
                self.argv,
                input=canonical_json(request).encode(),
                capture_output=True,
                timeout=self.timeout_s,
            )
        except subprocess.TimeoutExpired:
            raise AdapterTimeout(self.role, f"timed out after {self.timeout_s}s")
        except OSError as exc:
            raise AdapterFailure(self.role, f"cannot launch backend: {exc}")
        stderr_tail = proc.stderr.decode(errors="replace")[-2000:]
        if proc.returncode != 0:
            raise AdapterFailure(
                self.role,
                f"backend exited with {proc.returncode}",
                exit_code=proc.returncode,
                stderr_tail=stderr_tail,
            )
        try:
            return json.loads(proc.stdout.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SchemaViolation(f"{self.role.value}: non-JSON backend output: {exc}")


class ReplayBackend:
    """Serves pre-recorded artifacts keyed by the request hash."""

    def __init__(self, role: AdapterRole, directory):
        self.role = role
        self.directory = Path(directory)

    def __call__(self, request: dict) -> dict:
        path = self.directory / self.role.value / f"{request_key(request)}.json"
        if not path.exists():
            raise AdapterFailure(
                self.role, f"no recorded artifact for request (expected {path})"
            )
        return json.loads(path.read_text(encoding="utf-8"))


class RecordingBackend:
    """Pass-through wrapper that persists artifacts for later replay."""

    def __init__(self, role: AdapterRole, inner, directory):
        self.role = role
        self.inner = inner
        self.directory = Path(directory)

    def __call__(self, request: dict) -> dict:
        artifact = self.inner(request)
        role_dir = self.directory / self.role.value
        role_dir.mkdir(parents=True, exist_ok=True)
        path = role_dir / f"{request_key(request)}.json"
        path.write_text(canonical_json(artifact) + "\n", encoding="utf-8")
        return artifact


class AdapterSet:
    """Role registry; validates both sides of every invocation."""

    def __init__(self):
        self._backends: dict[AdapterRole, object] = {}

    def register(self, role: AdapterRole, backend) -> "AdapterSet":
        self._backends[role] = backend
        return self

    def has(self, role: AdapterRole) -> bool:
        return role in self._backends

    def roles(self) -> list[AdapterRole]:
        return list(self._backends)

    def invoke(self, role: AdapterRole, request: dict) -> dict:
        if role not in self._backends:
            raise AdapterFailure(role, "no backend registered")
        validate_request(role, request)
        artifact = self._backends[role](request)
        validate_artifact(role, artifact)
        return artifact

    @classmethod
    def from_env(cls, env=None, timeout_s: float = DEFAULT_TIMEOUT_S) -> "AdapterSet":
        """Build subprocess backends from ADAPTER_<ROLE>_CMD variables."""
        env = os.environ if env is None else env
        adapters = cls()
        for role in AdapterRole:
            cmd = env.get(f"ADAPTER_{role.value.upper()}_CMD")
            if cmd:
                adapters.register(role, SubprocessBackend(role, cmd, timeout_s))
        return adapters

    @classmethod
    def replay(cls, directory) -> "AdapterSet":
        """Serve every role found under a recorded-artifact directory."""
        directory = Path(directory)
        adapters = cls()
        for role in AdapterRole:
            if (directory / role.value).is_dir():
                adapters.register(role, ReplayBackend(role, directory))
        return adapters

    def with_recording(self, directory) -> "AdapterSet":
        recorded = AdapterSet()
        for role, backend in self._backends.items():
            recorded.register(role, RecordingBackend(role, backend, directory))
        return recorded


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


_SPEAKER_IN_PATH = re.compile(r"[Ss](\d)(?=\D|$)")


class MockEmbedder:
    """Deterministic embedding double with injectable ground truth.

    The returned vector is the true speaker's unit basis vector plus seeded
    Gaussian noise of scale ``sigma``. The true speaker comes from the
    request's ``true_speaker`` field when present, otherwise from an ``S<k>``
    marker in the audio path.
    """

    def __init__(self, dim: int = 8, sigma: float = 0.0, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.sigma = sigma
        self.seed = seed

    def _speaker_index(self, request: dict) -> int:
        if "true_speaker" in request:
            return int(request["true_speaker"])
        m = _SPEAKER_IN_PATH.search(request.get("audio_path", ""))
        return int(m.group(1)) if m else 1

    def __call__(self, request: dict) -> dict:
        speaker = self._speaker_index(request)
        vec = np.zeros(self.dim)
        vec[(speaker - 1) % self.dim] = 1.0
        if self.sigma > 0:
            rng = np.random.default_rng(
                _stable_seed(self.seed, canonical_json(request))
            )
            vec = vec + rng.normal(0.0, self.sigma, self.dim)
        return {"vector": [float(x) for x in vec], "dim": self.dim,
                "norm": float(np.linalg.norm(vec))}


class AdversarialEmbedder(MockEmbedder):
    """Noiseless mock that deliberately mislabels the first ``flip_count``
    fragments of each case (prompt embeddings stay truthful)."""

    def __init__(self, flip_count: int, n_speakers: int, dim: int = 8):
        super().__init__(dim=dim, sigma=0.0)
        self.flip_count = flip_count
        self.n_speakers = n_speakers

    def __call__(self, request: dict) -> dict:
        artifact = super().__call__(request)
        frag_index = request.get("fragment_index")
        if frag_index is not None and frag_index < self.flip_count:
            true = self._speaker_index(request)
            wrong = true % self.n_speakers + 1
            vec = np.zeros(self.dim)
            vec[(wrong - 1) % self.dim] = 1.0
            artifact = {"vector": [float(x) for x in vec], "dim": self.dim,
                        "norm": 1.0}
        return artifact


class MockAligner:
    """Uniform-spacing aligner: word i spans [i, i+1) / words_per_second."""

    def __init__(self, words_per_second: float = 2.0, drop_words: frozenset = frozenset()):
        self.words_per_second = words_per_second
        self.drop_words = drop_words

    def __call__(self, request: dict) -> dict:
        step = 1.0 / self.words_per_second
        alignments = []
        for i, word in enumerate(request["words"]):
            if word in self.drop_words:
                continue
            alignments.append(
                {"word": word, "start_s": i * step, "end_s": (i + 1) * step,
                 "score": 1.0}
            )
        return {"alignments": alignments}


class MockAsr:
    """Returns canned transcripts keyed by audio path."""

    def __init__(self, transcripts: dict | None = None, default: str = ""):
        self.transcripts = transcripts or {}
        self.default = default

    def __call__(self, request: dict) -> dict:
        return {"text": self.transcripts.get(request["audio_path"], self.default)}


class MockQscore:
    def __init__(self, scores: dict | None = None, default: float = 3.5):
        self.scores = scores or {}
        self.default = default

    def __call__(self, request: dict) -> dict:
        return {"dnsmos": float(self.scores.get(request["audio_path"], self.default))}


class MockLangid:
    def __init__(self, languages: dict | None = None, default: str = "en"):
        self.languages = languages or {}
        self.default = default

    def __call__(self, request: dict) -> dict:
        key = request.get("audio_path") or request.get("text", "")
        return {"language": self.languages.get(key, self.default)}


class MockSrate:
    def __init__(self, rates: dict | None = None, default: int = 24000):
        self.rates = rates or {}
        self.default = default

    def __call__(self, request: dict) -> dict:
        return {"true_sample_rate_hz": int(self.rates.get(request["audio_path"], self.default))}


class MockPassthroughPath:
    """denoise/audio_cut double: reports the input path as output."""

    def __call__(self, request: dict) -> dict:
        return {"output_path": request["audio_path"]}


def mock_adapter_set(
    dim: int = 8,
    sigma: float = 0.0,
    seed: int = 0,
    transcripts: dict | None = None,
    words_per_second: float = 2.0,
) -> AdapterSet:
    """Fully-mocked adapter set covering every role, for tests and fixtures."""
    adapters = AdapterSet()
    adapters.register(AdapterRole.ALIGNER, MockAligner(words_per_second))
    adapters.register(AdapterRole.EMBEDDER, MockEmbedder(dim, sigma, seed))
    adapters.register(AdapterRole.ASR, MockAsr(transcripts))
    adapters.register(AdapterRole.ASR_DIARIZE, MockAsr(transcripts))
    adapters.register(AdapterRole.QSCORE, MockQscore())
    adapters.register(AdapterRole.LANGID, MockLangid())
    adapters.register(AdapterRole.SRATE, MockSrate())
    adapters.register(AdapterRole.DENOISE, MockPassthroughPath())
    adapters.register(AdapterRole.AUDIO_CUT, MockPassthroughPath())
    return adapters


def alignments_from_artifact(artifact: dict) -> list[WordAlignment]:
    return [
        WordAlignment(
            word=rec["word"],
            start_s=float(rec["start_s"]),
            end_s=float(rec["end_s"]),
            score=float(rec.get("score", 1.0)),
        )
        for rec in artifact["alignments"]
    ]
