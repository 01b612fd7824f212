"""Compositional zero-shot classification with textual prototypes and
text-initialized visual proxies.

The heavy lifting lives in the `_czproxy` extension; this package just
re-exports it under a stable name for both the installed-wheel layout and
in-tree builds (where the extension sits on PYTHONPATH directly).
"""

try:
    from czproxy._czproxy import (  # type: ignore[attr-defined]
        CzproxyError,
        evaluate,
        generate_world,
        grad_check,
        predict,
        read_vptf,
        train,
        write_vptf,
        __version__,
    )
except ImportError:  # in-tree build: extension is top-level
    from _czproxy import (  # type: ignore[no-redef]
        CzproxyError,
        evaluate,
        generate_world,
        grad_check,
        predict,
        read_vptf,
        train,
        write_vptf,
        __version__,
    )

__all__ = [
    "CzproxyError",
    "evaluate",
    "generate_world",
    "grad_check",
    "predict",
    "read_vptf",
    "train",
    "write_vptf",
    "__version__",
]
