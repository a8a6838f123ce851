"""Worker-count policy shared by the parallel sweeps."""
import os


def worker_count(requested=None) -> int:
    """min(requested or cpu count, WAVESMITH_THREADS if set), at least 1."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("WAVESMITH_THREADS")
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ValueError(f"WAVESMITH_THREADS must be an integer, got {cap!r}") from None
    return max(1, int(n))
