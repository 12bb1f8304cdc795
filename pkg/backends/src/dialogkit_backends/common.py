"""Shared plumbing for one-shot adapter backends.

Every backend reads a single JSON request on stdin and writes a single JSON
artifact on stdout (exit 0), or a JSON error object on stderr (exit 1). An
optional `--serve <socket-path>` mode keeps the process alive and answers
newline-delimited JSON requests over a Unix socket with the same envelope,
amortizing model-loading cost.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys

import numpy as np
from scipy.io import wavfile

SCHEMA_VERSION = 1


def read_wav(path: str) -> tuple[int, np.ndarray]:
    """Load a WAV file as (rate, mono float array in [-1, 1])."""
    rate, data = wavfile.read(path)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        data = data / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    return int(rate), data.astype(np.float64)


def write_wav(path: str, rate: int, samples: np.ndarray) -> None:
    clipped = np.clip(samples, -1.0, 1.0)
    wavfile.write(path, rate, (clipped * 32767.0).astype(np.int16))


def slice_samples(rate: int, samples: np.ndarray, request: dict) -> np.ndarray:
    start = request.get("start_s")
    end = request.get("end_s")
    a = 0 if start is None else max(0, int(start * rate))
    b = len(samples) if end is None else min(len(samples), int(end * rate))
    return samples[a:b]


def canonical(artifact: dict) -> str:
    return json.dumps(artifact, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True)


def _serve(path: str, handler) -> int:
    if os.path.exists(path):
        os.unlink(path)
    server = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    server.bind(path)
    server.listen(1)
    try:
        while True:
            conn, _ = server.accept()
            with conn, conn.makefile("rw", encoding="utf-8") as stream:
                for line in stream:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        artifact = handler(json.loads(line))
                        stream.write(canonical(artifact) + "\n")
                    except Exception as exc:  # noqa: BLE001 - reported to client
                        stream.write(
                            json.dumps({"error": {"type": type(exc).__name__,
                                                  "message": str(exc)}}) + "\n"
                        )
                    stream.flush()
    finally:
        server.close()
        if os.path.exists(path):
            os.unlink(path)


def run_backend(role: str, handler, manifest: dict, argv=None) -> int:
    """Standard entry point: one-shot stdio, --manifest, or --serve."""
    parser = argparse.ArgumentParser(prog=f"dialogkit-backend-{role}")
    parser.add_argument("--manifest", action="store_true",
                        help="print the backend manifest and exit")
    parser.add_argument("--serve", metavar="SOCKET",
                        help="serve requests over a Unix socket")
    args = parser.parse_args(argv)

    if args.manifest:
        doc = {"role": role, "schema_version": SCHEMA_VERSION}
        doc.update(manifest)
        print(json.dumps(doc, sort_keys=True))
        return 0
    if args.serve:
        return _serve(args.serve, handler)
    try:
        request = json.load(sys.stdin)
        artifact = handler(request)
    except Exception as exc:  # noqa: BLE001 - one-shot process boundary
        print(
            json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
            file=sys.stderr,
        )
        return 1
    print(canonical(artifact))
    return 0
