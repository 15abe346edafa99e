"""Coverage-guided fuzzing engine for a simulated host-device runtime."""

from hetfuzz._core import (
    HOST_SLOTS,
    MAP_SIZE,
    TargetError,
    bench,
    compare_kernel,
    deterministic_mutants,
    havoc_mutant,
    replay_sequence,
    run_campaign,
    run_input,
    seeded_key_hex,
    showmap,
    splice_mutant,
    targets,
)

__all__ = [
    "HOST_SLOTS",
    "MAP_SIZE",
    "TargetError",
    "bench",
    "compare_kernel",
    "deterministic_mutants",
    "havoc_mutant",
    "replay_sequence",
    "run_campaign",
    "run_input",
    "seeded_key_hex",
    "showmap",
    "splice_mutant",
    "targets",
]
