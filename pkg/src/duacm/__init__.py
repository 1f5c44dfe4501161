"""Diagnosis-uncertain all-cause risk modeling.

Train an outcome model f(x, d) and a diagnosis model g(x) on labeled data,
then at inference expose the whole distribution of risk induced by diagnosis
uncertainty: mean, pessimistic quantiles, per-diagnosis explanations, and
interactive rule-out / confirm updates. Ships with a synthetic-cohort oracle
and the evaluation harnesses used to study pooled-vs-specific modeling.
"""

__version__ = "0.1.0"
