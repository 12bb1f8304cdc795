"""Reference adapter backends speaking the dialogkit JSON wire protocol.

Each module is a one-shot process: one JSON request on stdin, one JSON
artifact on stdout. Select them per role through the core's
``ADAPTER_<ROLE>_CMD`` environment variables, e.g.::

    ADAPTER_ALIGNER_CMD="python -m dialogkit_backends.aligner"

Real models are opt-in via ``DIALOGKIT_<ROLE>_ENGINE``; the defaults are
deterministic, fully offline DSP implementations (or honest nulls where a
model is genuinely required).
"""

__version__ = "0.1.0"
