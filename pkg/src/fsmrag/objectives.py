"""Pure arithmetic of the two training objectives.

No model lives here: callers supply log-probabilities computed elsewhere,
keyed by (module, input, target) or via a callable. The warm-up loss is a
weighted negative mean log-likelihood; the adaptation objective penalizes
the reward by a reference-policy log-ratio scaled by beta.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

from .errors import ContractError
from .feedback import LabeledStep
from .warmup import TrainingExample

LogProbSource = Mapping | Callable


def _key(module: str, input_render: str, target: str) -> tuple[str, str, str]:
    return (module, input_render, target)


def _lookup(source: LogProbSource, module: str, input_render: str, target: str, what: str) -> float:
    if callable(source):
        value = source(module, input_render, target)
        if value is None:
            raise ContractError(f"missing {what} for module {module!r}")
        return float(value)
    try:
        return float(source[_key(module, input_render, target)])
    except KeyError:
        raise ContractError(
            f"missing {what} for module {module!r} target {target[:40]!r}"
        ) from None


def lm_loss(
    batch: Sequence[TrainingExample],
    logprob: LogProbSource,
    weights: Mapping[str, float] | None = None,
) -> float:
    """Negative mean of per-module-weighted target log-likelihoods."""
    if not batch:
        raise ContractError("lm_loss over an empty batch")
    weights = weights or {}
    total = 0.0
    for e in batch:
        lam = weights.get(e.module, e.weight)
        total += lam * _lookup(logprob, e.module, e.input_render, e.target, "logprob")
    return -total / len(batch)


def kto_objective(
    batch: Sequence[LabeledStep],
    logpi: LogProbSource,
    logref: LogProbSource,
    beta: float,
    weights: Mapping[str, float] | None = None,
    regularizer: float | Callable[[Sequence[LabeledStep]], float] = 0.0,
) -> float:
    """Reward-minus-scaled-log-ratio objective over unpaired labeled steps.

    With beta = 0 this reduces to the negative mean reward. The optional
    regularizer is an additive term (constant or callable on the batch).
    """
    if not batch:
        raise ContractError("kto_objective over an empty batch")
    if beta < 0:
        raise ContractError("beta must be >= 0")
    weights = weights or {}
    total = 0.0
    for s in batch:
        lam = weights.get(s.module, 1.0)
        lp = _lookup(logpi, s.module, s.input_render, s.target, "policy logprob")
        lr = _lookup(logref, s.module, s.input_render, s.target, "reference logprob")
        total += lam * (s.reward - beta * (lp - lr))
    base = -total / len(batch)
    extra = regularizer(batch) if callable(regularizer) else float(regularizer)
    return base + extra
