"""Feature-augmentation search: generate and select derived tabular features.

The heavy lifting lives in the compiled ``_core`` module; this package
re-exports its operations. Expression work uses postfix token strings
(``"x1 x2 *"``), datasets travel as CSV paths, and reports come back as
plain dicts.
"""

try:
    from featforge._core import (
        evaluate_expression,
        load_trace,
        parse_expressions,
        run_search,
        score_csv,
        train_router,
        version,
    )
except ImportError:  # running against a build tree, module not yet packaged
    from _core import (
        evaluate_expression,
        load_trace,
        parse_expressions,
        run_search,
        score_csv,
        train_router,
        version,
    )

__version__ = version()

__all__ = [
    "evaluate_expression",
    "load_trace",
    "parse_expressions",
    "run_search",
    "score_csv",
    "train_router",
    "version",
    "__version__",
]
