"""Deterministic stand-in backend for CLI tests.

Usage: python mock_backend.py <role>
Reads one JSON request on stdin, writes one JSON artifact on stdout.
"""

import json
import sys


def main() -> int:
    role = sys.argv[1]
    request = json.load(sys.stdin)
    if role == "qscore":
        # encode a per-file score in the path for gate tests: ...__q3.5.wav
        score = 3.5
        path = request["audio_path"] or ""
        if "__q" in path:
            score = float(path.split("__q")[1].split(".wav")[0])
        artifact = {"dnsmos": score}
    elif role == "langid":
        artifact = {"language": "en"}
    elif role == "srate":
        artifact = {"true_sample_rate_hz": 24000}
    elif role in ("asr", "asr_diarize"):
        artifact = {"text": "[S1]hello there friend on this fine day"}
    elif role in ("denoise", "audio_cut"):
        artifact = {"output_path": request["audio_path"] + ".dn.wav"}
    else:
        print(json.dumps({"error": f"unsupported role {role}"}), file=sys.stderr)
        return 1
    print(json.dumps(artifact))
    return 0


if __name__ == "__main__":
    sys.exit(main())
