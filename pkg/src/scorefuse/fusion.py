"""Score-level fusion rules: plain and Bayesian averages, weighted
combinations with correlation-estimated weights, and a logistic (logit
perceptron) stacker trained on validation scores.

All fusers consume per-matcher scores already normalized into [0, 1] and
emit a fused score in [0, 1], so the evaluation stack treats fused output
like any single matcher's.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError, TrainingError
from .tables import AlignedScores, ScoreTable

WEIGHT_PROVENANCES = ("uniform", "pcc", "manual")

DEFAULT_CLAMP_EPSILON = 1e-6

_TINY = 2.2250738585072014e-308  # smallest positive normal double
_BELOW_ONE = 1.0 - 2.0**-53  # largest double below 1.0


@dataclass(frozen=True)
class FusionWeights:
    """Non-negative per-matcher weights for the weighted-average rule."""

    matcher_ids: tuple[str, ...]
    weights: tuple[float, ...]
    provenance: str
    raw_pcc: tuple[float, ...] | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.weights) != len(self.matcher_ids):
            raise ContractError("weights and matcher_ids must have equal length")
        if self.provenance not in WEIGHT_PROVENANCES:
            raise ContractError(f"provenance must be one of {WEIGHT_PROVENANCES}")
        if any(w < 0 or not math.isfinite(w) for w in self.weights):
            raise ContractError(f"weights must be finite and >= 0, got {self.weights}")
        if not math.fsum(self.weights) > 0:
            raise ContractError("weight sum must be positive")


@dataclass(frozen=True)
class TrainingLog:
    initial_loss: float
    final_loss: float
    epochs_run: int
    seed: int


@dataclass(frozen=True)
class PerceptronFuser:
    """A single logistic unit sigma(w . s + b) over matcher scores."""

    matcher_ids: tuple[str, ...]
    coefficients: tuple[float, ...]
    bias: float
    training_log: TrainingLog

    def __post_init__(self):
        if len(self.coefficients) != len(self.matcher_ids):
            raise ContractError("coefficients and matcher_ids must have equal length")
        if not all(math.isfinite(c) for c in self.coefficients) or not math.isfinite(self.bias):
            raise ContractError("perceptron parameters must be finite")

    def predict(self, matrix: np.ndarray) -> np.ndarray:
        z = matrix @ np.asarray(self.coefficients, dtype=np.float64) + self.bias
        return _sigmoid(z)


@dataclass(frozen=True, eq=False)
class FusedTable:
    """A fused score column packaged as a [0, 1] score table."""

    method_id: str
    table: ScoreTable

    def __post_init__(self):
        if self.table.declared_range != (0.0, 1.0):
            raise ContractError("fused tables must be declared [0, 1]")


def fuse_average(scores) -> float:
    """Arithmetic mean, accumulated exactly and rounded once.

    Exact rational accumulation makes the result permutation-invariant and
    correctly rounded (e.g. the mean of {0.2, 0.4, 0.6} is exactly 0.4).
    """
    scores = list(scores)
    if not scores:
        raise ContractError("fuse_average needs at least one score")
    return float(sum(map(Fraction, scores), Fraction(0)) / len(scores))


def fuse_bayesian(scores, clamp_epsilon: float = DEFAULT_CLAMP_EPSILON) -> float:
    """Product-odds combination prod(s) / (prod(s) + prod(1-s)).

    Scores are clamped to [eps, 1-eps] first, which removes the 0/0
    singularity at unanimous extreme scores. The quotient is evaluated as a
    sigmoid of summed log-odds, which is the same quantity but cannot
    underflow however many scores are fused; terms are summed in sorted
    order so reordering the inputs cannot change the rounding.
    """
    scores = list(scores)
    if not scores:
        raise ContractError("fuse_bayesian needs at least one score")
    if not (0.0 < clamp_epsilon < 0.5):
        raise ContractError(f"clamp_epsilon must be in (0, 0.5), got {clamp_epsilon}")
    clamped = sorted(min(1.0 - clamp_epsilon, max(clamp_epsilon, s)) for s in scores)
    log_odds = math.fsum(math.log(s) - math.log(1.0 - s) for s in clamped)
    value = float(_sigmoid(np.float64(log_odds)))
    # sigma rounds to 0.0 / 1.0 beyond ~37 units of log-odds; keep (0, 1) open
    return min(max(value, _TINY), _BELOW_ONE)


def fuse_weighted(scores, weights: FusionWeights) -> float:
    """Weighted mean sum(w*s) / sum(w), exactly accumulated, rounded once."""
    scores = list(scores)
    if len(scores) != len(weights.weights):
        raise ContractError(
            f"got {len(scores)} scores for {len(weights.weights)} weights"
        )
    num = sum((Fraction(w) * Fraction(s) for w, s in zip(weights.weights, scores)), Fraction(0))
    den = sum(map(Fraction, weights.weights), Fraction(0))
    return float(num / den)


def _pcc(a: np.ndarray, b: np.ndarray) -> float:
    ac = a - a.mean()
    bc = b - b.mean()
    denom = math.sqrt(float(ac @ ac) * float(bc @ bc))
    if denom == 0.0:
        raise ContractError("correlation undefined for zero-variance series")
    return float(ac @ bc) / denom


def estimate_pcc_weights(validation: AlignedScores) -> FusionWeights:
    """Weight each matcher by the correlation of its validation scores with
    the mated labels (0/1); negative correlations clamp to weight 0.

    Raw correlations are kept for diagnostics. A zero-variance column gets
    weight 0 with a recorded note; if everything clamps to 0 the fall-back
    is uniform weights (provenance ``uniform``).
    """
    labels = validation.mated_mask.astype(np.float64)
    n_mated = int(labels.sum())
    if n_mated == 0 or n_mated == len(labels):
        raise ContractError("validation scores must contain both classes")
    raw: list[float] = []
    notes: list[str] = []
    for j, mid in enumerate(validation.matcher_ids):
        col = validation.matrix[:, j]
        if float(np.var(col)) == 0.0:
            raw.append(0.0)
            notes.append(f"matcher {mid!r} has zero score variance; weight forced to 0")
            continue
        raw.append(_pcc(col, labels))
    clamped = [max(0.0, r) for r in raw]
    if math.fsum(clamped) > 0.0:
        return FusionWeights(
            validation.matcher_ids, tuple(clamped), "pcc", tuple(raw), tuple(notes)
        )
    notes.append("all correlations clamped to 0; falling back to uniform weights")
    uniform = tuple(1.0 for _ in validation.matcher_ids)
    return FusionWeights(validation.matcher_ids, uniform, "uniform", tuple(raw), tuple(notes))


@dataclass(frozen=True)
class PerceptronHyper:
    learning_rate: float = 0.05
    max_epochs: int = 10000
    tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.max_epochs < 1 or self.tolerance < 0:
            raise ContractError(f"invalid perceptron hyperparameters: {self}")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def _cross_entropy(p: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def train_perceptron(
    validation: AlignedScores, hyper: PerceptronHyper | None = None
) -> PerceptronFuser:
    """Fit the logistic unit by full-batch gradient descent on mean
    cross-entropy over the validation rows.

    Weights and bias start at zero, so the fit is deterministic; the seed is
    recorded in the training log for provenance only. Training stops at
    ``max_epochs`` or once the per-epoch loss decrease falls below
    ``tolerance``.
    """
    hyper = hyper or PerceptronHyper()
    y = validation.mated_mask.astype(np.float64)
    n_mated = int(y.sum())
    if n_mated == 0 or n_mated == len(y):
        raise ContractError("validation scores must contain both classes")
    x = validation.matrix
    n, n_feat = x.shape
    w = np.zeros(n_feat, dtype=np.float64)
    b = 0.0
    initial_loss = _cross_entropy(_sigmoid(x @ w + b), y)
    prev_loss = initial_loss
    loss = initial_loss
    epochs = 0
    for epochs in range(1, hyper.max_epochs + 1):
        residual = _sigmoid(x @ w + b) - y
        step_w = hyper.learning_rate * (x.T @ residual) / n
        step_b = hyper.learning_rate * float(residual.mean())
        w -= step_w
        b -= step_b
        loss = _cross_entropy(_sigmoid(x @ w + b), y)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epochs}")
        if loss > prev_loss:
            # a divergent step (oversized learning rate) is rolled back, so
            # the returned parameters never score worse than where they began
            w += step_w
            b += step_b
            loss = prev_loss
            break
        if prev_loss - loss < hyper.tolerance:
            break
        prev_loss = loss
    log = TrainingLog(initial_loss, loss, epochs, hyper.seed)
    return PerceptronFuser(validation.matcher_ids, tuple(float(c) for c in w), b, log)


def _method_id(method) -> str:
    if isinstance(method, str):
        return method
    if isinstance(method, FusionWeights):
        return "pcc_avg" if method.provenance == "pcc" else "weighted"
    if isinstance(method, PerceptronFuser):
        return "perceptron"
    raise ContractError(f"unknown fusion method {method!r}")


def apply_fusion(method, test: AlignedScores) -> FusedTable:
    """Fuse every row of ``test`` with the given method.

    ``method`` is ``"avg"``, ``"bayes"``, a :class:`FusionWeights`, or a
    :class:`PerceptronFuser`; parametric methods must carry exactly the
    test matcher ids, in order. Row order is preserved.
    """
    mat = test.matrix
    if isinstance(method, str):
        if method == "avg":
            fused = mat.mean(axis=1)
        elif method == "bayes":
            clamped = np.clip(mat, DEFAULT_CLAMP_EPSILON, 1.0 - DEFAULT_CLAMP_EPSILON)
            log_odds = (np.log(clamped) - np.log(1.0 - clamped)).sum(axis=1)
            fused = np.clip(_sigmoid(log_odds), _TINY, _BELOW_ONE)
        else:
            raise ContractError(f"unknown fusion method {method!r}")
    else:
        if method.matcher_ids != test.matcher_ids:
            raise ContractError(
                f"method matchers {method.matcher_ids} do not match "
                f"test matchers {test.matcher_ids}"
            )
        if isinstance(method, FusionWeights):
            w = np.asarray(method.weights, dtype=np.float64)
            fused = (mat @ w) / w.sum()
        elif isinstance(method, PerceptronFuser):
            fused = method.predict(mat)
        else:
            raise ContractError(f"unknown fusion method {method!r}")
    fused = np.clip(fused, 0.0, 1.0)
    method_id = _method_id(method)
    records = tuple(p.with_score(float(s)) for p, s in zip(test.pairs, fused))
    return FusedTable(method_id, ScoreTable(method_id, (0.0, 1.0), records))


def fuser_to_dict(fuser: FusionWeights | PerceptronFuser) -> dict:
    """JSON-ready form of a fitted fuser, for reuse across runs."""
    if isinstance(fuser, FusionWeights):
        return {
            "kind": "weights",
            "matcher_ids": list(fuser.matcher_ids),
            "weights": list(fuser.weights),
            "provenance": fuser.provenance,
            "raw_pcc": None if fuser.raw_pcc is None else list(fuser.raw_pcc),
            "notes": list(fuser.notes),
        }
    if isinstance(fuser, PerceptronFuser):
        return {
            "kind": "perceptron",
            "matcher_ids": list(fuser.matcher_ids),
            "coefficients": list(fuser.coefficients),
            "bias": fuser.bias,
            "training_log": {
                "initial_loss": fuser.training_log.initial_loss,
                "final_loss": fuser.training_log.final_loss,
                "epochs_run": fuser.training_log.epochs_run,
                "seed": fuser.training_log.seed,
            },
        }
    raise ContractError(f"cannot serialize {fuser!r}")


def fuser_from_dict(doc: dict) -> FusionWeights | PerceptronFuser:
    try:
        kind = doc["kind"]
        ids = tuple(str(m) for m in doc["matcher_ids"])
        if kind == "weights":
            raw = doc.get("raw_pcc")
            return FusionWeights(
                ids,
                tuple(float(w) for w in doc["weights"]),
                str(doc["provenance"]),
                None if raw is None else tuple(float(r) for r in raw),
                tuple(str(n) for n in doc.get("notes", ())),
            )
        if kind == "perceptron":
            log = doc["training_log"]
            return PerceptronFuser(
                ids,
                tuple(float(c) for c in doc["coefficients"]),
                float(doc["bias"]),
                TrainingLog(
                    float(log["initial_loss"]),
                    float(log["final_loss"]),
                    int(log["epochs_run"]),
                    int(log["seed"]),
                ),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed fuser document: {exc}") from None
    raise ParseError(f"unknown fuser kind {doc.get('kind')!r}")


def save_fuser(fuser: FusionWeights | PerceptronFuser, path) -> None:
    Path(path).write_text(
        json.dumps(fuser_to_dict(fuser), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_fuser(path) -> FusionWeights | PerceptronFuser:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})") from None
    return fuser_from_dict(doc)
