"""Structured pruning by stochastic mask optimization over forward evaluations.

The heavy lifting lives in the compiled extension ``maskgrad._core``; this
package re-exports its surface. Only scalar forward losses ever cross the
optimizer boundary, so the same machinery drives toy enumerable problems and
transformer checkpoints alike.
"""

from ._core import (  # noqa: F401
    ArchConfig,
    Checkpoint,
    ConfigError,
    DataError,
    GranularityMap,
    NumericError,
    SegmentStore,
    brute_force_best_mask,
    build_granularity,
    builtin_metric,
    cli,
    compact,
    exact_grad_phi,
    exact_phi,
    extract_mask,
    extract_mask_grouped,
    grad_log_prob,
    load_checkpoint,
    load_scores,
    load_segments,
    log_prob,
    masked_loss,
    optimize_scores,
    perplexity,
    project,
    project_weighted,
    projection_reference,
    random_checkpoint,
    random_init,
    sample_mask,
    save_scores,
    score_const,
    sigmoid_norm,
    synth_uniform,
    teacher_sample,
)

__version__ = "0.1.0"


def main() -> int:
    """Console entry point mirroring the native ``maskgrad`` binary."""
    import sys

    return cli(sys.argv[1:])
