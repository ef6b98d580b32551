"""Contract metrics and the pass/fail verdict.

Semantic fidelity is measured as disagreement between the aggregated
decomposition and the reference model over the margin-selected boundary
subset, corrected by a Hoeffding term.  Structural divergence is measured
as pairwise Jaccard overlap of component supports plus per-component
prune ratios.  The verdict is the conjunction of the three conditions.

The Hoeffding correction used in the verdict takes n = the full
evaluation-sample size (the concentration bound is stated for the i.i.d.
sample); the subset-size variant is computed and reported alongside it.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .boundary import AbsoluteSelector, QuantileSelector, boundary_subset
from .decomp import aggregate_predict_batch, prune_counts, support
from .errors import EvaluationError, ValidationError
from .network import predict_batch

REPORT_SCHEMA = "nndecomp-report/1"


@dataclass(frozen=True)
class ContractParams:
    epsilon: float = 0.1
    gamma: float = 0.5
    eta: float = 0.3
    delta: float = 0.05
    selector: object = QuantileSelector(0.2)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValidationError("epsilon must lie in (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ValidationError("gamma must lie in (0, 1]")
        if not 0.0 < self.eta < 1.0:
            raise ValidationError("eta must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValidationError("delta must lie in (0, 1)")
        if not isinstance(self.selector, (AbsoluteSelector, QuantileSelector)):
            raise ValidationError(f"unknown boundary selector {self.selector!r}")

    def selector_dict(self):
        if isinstance(self.selector, AbsoluteSelector):
            return {"mode": "absolute", "kappa": self.selector.kappa}
        return {"mode": "quantile", "q": self.selector.q}


def hoeffding_term(delta, n):
    """sqrt(log(2/delta) / (2n)); the finite-sample disagreement correction."""
    if n < 1:
        raise ValidationError("n must be at least 1")
    if not 0.0 < delta <= 2.0:
        raise ValidationError("delta must lie in (0, 2]")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def overlap(s_i, s_j):
    """Jaccard ratio of two support sets."""
    s_i, s_j = set(s_i), set(s_j)
    union = s_i | s_j
    if not union:
        raise ValidationError("overlap of two empty supports is undefined")
    return len(s_i & s_j) / len(union)


def prune_ratio(component, total_units=None):
    """Fraction of hidden units the component drops."""
    kept, total = prune_counts(component)
    if total_units is not None:
        total = total_units
    if total <= 0:
        raise ValidationError("total unit count must be positive")
    return 1.0 - kept / total


@dataclass(frozen=True)
class _EvalData:
    """Shared raw material for the semantic metrics."""

    ref: np.ndarray  # reference predictions, full dataset
    dec: np.ndarray  # aggregated decomposition predictions, full dataset
    subset: np.ndarray  # boundary-subset indices


def _eval_data(net, components, dataset, selector):
    subset = boundary_subset(net, dataset, selector)
    if not subset:
        raise EvaluationError(
            "boundary subset is empty; enlarge kappa or switch to a quantile"
        )
    ref = predict_batch(net, dataset.features)
    dec = aggregate_predict_batch(components, dataset.features)
    return _EvalData(ref=ref, dec=dec, subset=np.array(subset, dtype=np.int64))


@dataclass(frozen=True)
class DisagreementResult:
    dis_hat: float
    per_class: dict  # reference class -> disagreement fraction (absent if unseen)
    n_boundary: int
    disagreements: int


def _disagreement_from(data):
    ref_b = data.ref[data.subset]
    dec_b = data.dec[data.subset]
    wrong = dec_b != ref_b
    n_b = len(data.subset)
    per_class = {}
    for c in np.unique(ref_b):
        in_class = ref_b == c
        per_class[int(c)] = float(np.mean(wrong[in_class]))
    return DisagreementResult(
        dis_hat=int(wrong.sum()) / n_b,
        per_class=per_class,
        n_boundary=n_b,
        disagreements=int(wrong.sum()),
    )


def empirical_disagreement(net, components, dataset, selector):
    """Fraction of boundary-subset samples where the aggregate and the
    reference disagree, plus the same conditioned on the reference class."""
    return _disagreement_from(_eval_data(net, components, dataset, selector))


def confusion_deviation(net, components, dataset, selector):
    """Entrywise L1 distance between the boundary-restricted joint label
    distributions (decomposed vs reference prediction, against reference).

    The reference joint is diagonal by construction, so every disagreeing
    sample moves exactly 2/n of mass: the result equals 2 * dis_hat.
    """
    data = _eval_data(net, components, dataset, selector)
    return _confusion_from(data, net.class_count)


def _confusion_from(data, class_count):
    ref_b = data.ref[data.subset]
    dec_b = data.dec[data.subset]
    n_b = len(data.subset)
    c = int(class_count)
    ref_joint = np.zeros((c, c), dtype=np.int64)
    dec_joint = np.zeros((c, c), dtype=np.int64)
    for r, d in zip(ref_b, dec_b):
        ref_joint[r, r] += 1
        dec_joint[d, r] += 1
    l1_counts = int(np.abs(dec_joint - ref_joint).sum())
    return l1_counts / n_b


@dataclass(frozen=True)
class GlobalDisagreement:
    total: float
    on_subset: float
    off_subset_mass: float
    n: int
    n_boundary: int
    disagreements_total: int
    disagreements_on: int
    disagreements_off: int


def global_disagreement(net, components, dataset, selector):
    """Disagreement over the whole dataset, split into the boundary subset
    and the disagreeing mass outside it.  Counts are returned so the
    accounting identity total*n = dis*n_boundary + off_mass*n can be
    checked exactly in integers."""
    data = _eval_data(net, components, dataset, selector)
    return _global_from(data)


def _global_from(data):
    wrong = data.dec != data.ref
    n = len(data.ref)
    inside = np.zeros(n, dtype=bool)
    inside[data.subset] = True
    d_total = int(wrong.sum())
    d_on = int(wrong[inside].sum())
    d_off = d_total - d_on
    n_b = len(data.subset)
    return GlobalDisagreement(
        total=d_total / n,
        on_subset=d_on / n_b,
        off_subset_mass=d_off / n,
        n=n,
        n_boundary=n_b,
        disagreements_total=d_total,
        disagreements_on=d_on,
        disagreements_off=d_off,
    )


@dataclass(frozen=True)
class ContractReport:
    params: ContractParams
    seed: object
    n_total: int
    n_boundary: int
    dis_hat: float
    per_class_dis: dict
    hoeffding_h: float  # full-sample correction; used in the verdict
    hoeffding_h_boundary: float  # subset-size variant, reported for comparison
    dis_plus_h: float
    pairwise_overlap: list  # class-by-class Jaccard matrix
    max_overlap: float
    prune_ratios: list
    min_prune: float
    confusion_l1: float
    global_dis: float
    off_boundary_dis_mass: float
    condition_semantic: bool
    condition_overlap: bool
    condition_prune: bool
    verdict: bool

    def to_dict(self):
        return {
            "schema_version": REPORT_SCHEMA,
            "params": {
                "epsilon": self.params.epsilon,
                "gamma": self.params.gamma,
                "eta": self.params.eta,
                "delta": self.params.delta,
                "boundary_selector": self.params.selector_dict(),
            },
            "seed": self.seed,
            "n_total": self.n_total,
            "n_boundary": self.n_boundary,
            "dis_hat": self.dis_hat,
            "per_class_dis": {str(k): v for k, v in sorted(self.per_class_dis.items())},
            "hoeffding_h": self.hoeffding_h,
            "hoeffding_h_boundary": self.hoeffding_h_boundary,
            "dis_plus_h": self.dis_plus_h,
            "pairwise_overlap": self.pairwise_overlap,
            "max_overlap": self.max_overlap,
            "prune_ratios": self.prune_ratios,
            "min_prune": self.min_prune,
            "confusion_l1": self.confusion_l1,
            "global_dis": self.global_dis,
            "off_boundary_dis_mass": self.off_boundary_dis_mass,
            "condition_semantic": self.condition_semantic,
            "condition_overlap": self.condition_overlap,
            "condition_prune": self.condition_prune,
            "verdict": "PASS" if self.verdict else "FAIL",
        }


def evaluate_contract(net, components, dataset, params, seed=None):
    """Compute every contract metric and render the verdict."""
    data = _eval_data(net, components, dataset, params.selector)
    dis = _disagreement_from(data)
    glob = _global_from(data)
    confusion = _confusion_from(data, net.class_count)

    # Diagonal-reference construction: every disagreement moves exactly two
    # count-matrix entries.  Violations would mean a metric bug.
    if not confusion * dis.n_boundary <= 2 * dis.disagreements + 1e-9:
        raise EvaluationError("confusion deviation exceeded twice the disagreement")

    by_class = sorted(components, key=lambda c: c.class_index)
    supports = [support(c) for c in by_class]
    c = len(by_class)
    ov = [[1.0] * c for _ in range(c)]
    max_ov = 0.0
    for i in range(c):
        for j in range(i + 1, c):
            val = overlap(supports[i], supports[j])
            ov[i][j] = ov[j][i] = val
            max_ov = max(max_ov, val)

    ratios = [prune_ratio(comp) for comp in by_class]
    min_prune = min(ratios)

    h_total = hoeffding_term(params.delta, glob.n)
    h_boundary = hoeffding_term(params.delta, dis.n_boundary)
    dis_plus_h = dis.dis_hat + h_total

    cond_semantic = dis_plus_h <= params.epsilon
    cond_overlap = max_ov <= params.gamma
    cond_prune = min_prune >= params.eta

    return ContractReport(
        params=params,
        seed=seed,
        n_total=glob.n,
        n_boundary=dis.n_boundary,
        dis_hat=dis.dis_hat,
        per_class_dis=dis.per_class,
        hoeffding_h=h_total,
        hoeffding_h_boundary=h_boundary,
        dis_plus_h=dis_plus_h,
        pairwise_overlap=ov,
        max_overlap=max_ov,
        prune_ratios=ratios,
        min_prune=min_prune,
        confusion_l1=confusion,
        global_dis=glob.total,
        off_boundary_dis_mass=glob.off_subset_mass,
        condition_semantic=cond_semantic,
        condition_overlap=cond_overlap,
        condition_prune=cond_prune,
        verdict=cond_semantic and cond_overlap and cond_prune,
    )


def save_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1)
        fh.write("\n")


def load_report_dict(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def report_csv_lines(report):
    """Flat metric rows for the emitted metrics CSV."""
    d = report.to_dict()
    keys = [
        "n_total",
        "n_boundary",
        "dis_hat",
        "hoeffding_h",
        "hoeffding_h_boundary",
        "dis_plus_h",
        "max_overlap",
        "min_prune",
        "confusion_l1",
        "global_dis",
        "off_boundary_dis_mass",
        "verdict",
    ]
    lines = ["metric,value"]
    lines += [f"{k},{d[k]}" for k in keys]
    return lines
