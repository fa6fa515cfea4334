from ._autoevol import (
    AutoevolError,
    classify,
    contamination_check,
    estimate_cost,
    extract_final_instruction,
    failure_rate,
    load_dataset,
    run_cli,
    save_dataset,
    tag_metrics,
    tokenize,
)

__all__ = [
    "AutoevolError",
    "classify",
    "contamination_check",
    "estimate_cost",
    "extract_final_instruction",
    "failure_rate",
    "load_dataset",
    "run_cli",
    "save_dataset",
    "tag_metrics",
    "tokenize",
]
