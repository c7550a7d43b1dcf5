"""Learning-rate warmup/decay and Gumbel temperature annealing."""

from __future__ import annotations


def lr_schedule(step: int, warmup: int = 4000, width: int = 256) -> float:
    """Transformer schedule: width^-0.5 * min(step^-0.5, step * warmup^-1.5).

    Ramps linearly to the peak at `warmup` steps, then decays as the inverse
    square root of the step number.
    """
    step = max(int(step), 1)
    return width**-0.5 * min(step**-0.5, step * warmup**-1.5)


def tau_schedule(
    step: int,
    max_steps: int,
    tau_start: float = 1.0,
    tau_end: float = 0.1,
    anneal_frac: float = 0.8,
) -> float:
    """Exponential anneal from tau_start to tau_end over anneal_frac*max_steps.

    Starts high and settles at a small but non-zero temperature; constant at
    tau_end after the anneal horizon.
    """
    horizon = max(1, int(round(anneal_frac * max_steps)))
    frac = min(int(step), horizon) / horizon
    return tau_start * (tau_end / tau_start) ** frac
