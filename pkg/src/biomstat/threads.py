"""Worker-count resolution: --threads flag, BIOMSTAT_THREADS, then cpu count."""

from __future__ import annotations

import os

ENV_THREADS = "BIOMSTAT_THREADS"


def resolve_threads(flag_value: int | None) -> int:
    """0 or unset means auto (cpu count); explicit flag beats the env var."""
    value = flag_value
    if value is None:
        raw = os.environ.get(ENV_THREADS, "").strip()
        if raw:
            try:
                value = int(raw)
            except ValueError:
                raise ValueError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None
    if value is None or value == 0:
        return os.cpu_count() or 1
    if value < 0:
        raise ValueError(f"thread count must be >= 0, got {value}")
    return value
