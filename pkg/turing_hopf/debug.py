import logging
import os
import resource
import tracemalloc

_LOGGER = logging.getLogger(__name__)


def mem_print(tag):
    if not _LOGGER.isEnabledFor(logging.DEBUG):
        return
    # ru_maxrss is kilobytes on Linux; convert to bytes
    rss_bytes = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
    cur, peak = tracemalloc.get_traced_memory()
    _LOGGER.debug(
        "%s | RSS=%.1fMB Py(cur=%.1fMB, peak=%.1fMB) pid=%d",
        tag,
        rss_bytes / 1e6,
        cur / 1e6,
        peak / 1e6,
        os.getpid(),
    )
