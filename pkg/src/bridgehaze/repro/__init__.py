"""Acceptance checks, one callable per criterion.

``run(n)`` evaluates criterion ``n`` and returns a :class:`CriterionResult`.
Criteria 9 to 11 share trained toy models; pass ``cache_dir`` to reuse them
across processes.
"""
from __future__ import annotations

from .metric_checks import metric_oracles
from .model_checks import gradient_checks, rdc_merge_equivalence
from .result import CriterionResult
from .stats import chain_vs_marginal, posterior_oracle, schedule_identities, time_reversal
from .training_checks import oracle_equivalence, stage1_overfit

TITLES = {
    1: "schedule identities",
    2: "chain vs marginal",
    3: "posterior oracle",
    4: "time reversal",
    5: "RDC merge equivalence",
    6: "gradient checks",
    7: "stage-1 overfit",
    8: "stage-2 oracle equivalence",
    9: "end-to-end toy dehazing",
    10: "sampling-steps ablation",
    11: "variance-factor ablation",
    12: "metric oracles",
}

_SIMPLE = {
    1: schedule_identities,
    2: chain_vs_marginal,
    3: posterior_oracle,
    4: time_reversal,
    5: rdc_merge_equivalence,
    6: gradient_checks,
    7: stage1_overfit,
    8: oracle_equivalence,
    12: metric_oracles,
}


class ToyModels:
    """Lazily trained s=1 and s=4 toy models."""

    def __init__(self, cache_dir=None, **config):
        self.cache_dir = cache_dir
        self.config = config
        self._models = {}

    def get(self, s: float):
        if s not in self._models:
            from .toy import toy_config, train_toy_model

            cfg = toy_config(**{**self.config, "s": s})
            self._models[s] = train_toy_model(cfg, cache_dir=self.cache_dir)
        return self._models[s]


def run(n: int, models: ToyModels | None = None) -> CriterionResult:
    if n in _SIMPLE:
        res = _SIMPLE[n]()
    else:
        from .toy import end_to_end, steps_ablation, variance_ablation

        models = models or ToyModels()
        if n == 9:
            res = end_to_end(models.get(1.0))
        elif n == 10:
            res = steps_ablation(models.get(1.0))
        elif n == 11:
            res = variance_ablation(models.get(1.0), models.get(4.0))
        else:
            raise ValueError(f"no criterion {n}")
    res.name = f"{n:2d}. {TITLES[n]}"
    return res


__all__ = ["CriterionResult", "TITLES", "ToyModels", "run"]
