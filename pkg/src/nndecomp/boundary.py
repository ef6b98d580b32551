"""Boundary probing: l-inf gradient-ascent attacks, bisection refinement
to near-zero-margin inputs, margin-based subset selection, and the
calibration set that augments a dataset with refined boundary inputs.

Refinement is parametric: the pair is tracked as a dyadic sub-interval
[a, b] of the original segment, so the recorded segment fraction halves
exactly (in floating point) on every iteration.
"""

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import EvaluationError, InvalidPairError, ValidationError
from .network import input_gradient, margin, margin_batch, predict, predict_batch

BOUNDARY_SCHEMA = "nndecomp-boundary/1"


@dataclass(frozen=True)
class PgdConfig:
    """l-inf ascent settings.  step_size may not exceed ball_radius."""

    ball_radius: float
    step_size: float
    steps: int = 20
    random_start: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.ball_radius < 0 or self.step_size < 0:
            raise ValidationError("ball_radius and step_size must be >= 0")
        if self.step_size > self.ball_radius:
            raise ValidationError("step_size must not exceed ball_radius")
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")


@dataclass(frozen=True)
class BoundaryPoint:
    """A refined straddling pair and its near-boundary midpoint.

    segment_fraction is the dyadic width of the remaining sub-interval of
    the original segment: exactly 2**-iterations.
    """

    x_lo: np.ndarray
    x_hi: np.ndarray
    midpoint: np.ndarray
    class_pair: tuple
    final_margin: float
    iterations: int
    initial_length: float = 0.0
    segment_fraction: float = 1.0


def pgd_attack(net, x, label, cfg, rng=None):
    """Ascend cross-entropy of `label` for cfg.steps sign-gradient steps,
    projecting onto the l-inf ball around x after every step.

    The perturbation is tracked separately and clipped to [-r, r], so the
    projected delta respects the ball exactly; reconstructing x + delta
    can round by at most one ulp per coordinate.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    r = cfg.ball_radius
    delta = np.zeros_like(x)
    if cfg.random_start:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        delta = rng.uniform(-r, r, size=x.shape)
    for _ in range(cfg.steps):
        g = input_gradient(net, x + delta, label)
        delta = delta + cfg.step_size * np.sign(g)
        np.clip(delta, -r, r, out=delta)
    return x + delta


@dataclass(frozen=True)
class FlipSearchResult:
    pairs: list  # (x, x_adv, (pred_orig, pred_adv))
    n_samples: int
    n_flipped: int

    @property
    def flip_rate(self):
        return self.n_flipped / self.n_samples if self.n_samples else 0.0


def find_flip_pairs(net, dataset, cfg):
    """Attack every sample; keep the ones whose prediction flips.

    Each sample gets its own seed stream derived from (cfg.seed, index),
    so any processing order gives identical results.
    """
    preds = predict_batch(net, dataset.features)
    pairs = []
    for i in range(len(dataset)):
        x = dataset.features[i]
        label = int(preds[i])
        rng = np.random.default_rng((cfg.seed, i)) if cfg.random_start else None
        x_adv = pgd_attack(net, x, label, cfg, rng=rng)
        adv_label = predict(net, x_adv)
        if adv_label != label:
            pairs.append((x.copy(), x_adv, (label, adv_label)))
    return FlipSearchResult(pairs, n_samples=len(dataset), n_flipped=len(pairs))


def refine_pair(net, x_lo, x_hi, margin_tol=1e-6, max_iters=60):
    """Bisect the segment between a straddling pair until the midpoint's
    margin drops to margin_tol (or max_iters)."""
    x_lo = np.ascontiguousarray(x_lo, dtype=np.float64)
    x_hi = np.ascontiguousarray(x_hi, dtype=np.float64)
    pred_lo = predict(net, x_lo)
    pred_hi = predict(net, x_hi)
    if pred_lo == pred_hi:
        raise InvalidPairError(
            f"both endpoints predict class {pred_lo}; nothing to bisect"
        )
    delta = x_hi - x_lo
    initial_length = float(np.linalg.norm(delta))

    def at(t):
        if t == 0.0:
            return x_lo
        if t == 1.0:
            return x_hi
        return x_lo + t * delta

    a, b = 0.0, 1.0
    fraction = 1.0
    iters = 0
    mid_t = 0.5 * (a + b)
    mid = at(mid_t)
    mid_margin = margin(net, mid)
    mid_pred = predict(net, mid)
    while mid_margin > margin_tol and iters < max_iters:
        if mid_pred == pred_lo:
            a = mid_t
        else:
            # Covers both the matching-endpoint case and a third class
            # showing up mid-segment: keep the low side, adopt the new class.
            b = mid_t
            pred_hi = mid_pred
        fraction *= 0.5
        iters += 1
        mid_t = 0.5 * (a + b)
        if mid_t == a or mid_t == b:
            break  # float resolution exhausted
        mid = at(mid_t)
        mid_margin = margin(net, mid)
        mid_pred = predict(net, mid)
    return BoundaryPoint(
        x_lo=at(a),
        x_hi=at(b),
        midpoint=mid,
        class_pair=(pred_lo, pred_hi),
        final_margin=mid_margin,
        iterations=iters,
        initial_length=initial_length,
        segment_fraction=fraction,
    )


def mine_boundary_points(net, dataset, cfg, margin_tol=1e-6, max_iters=60):
    """find_flip_pairs + refine_pair over the whole dataset."""
    flips = find_flip_pairs(net, dataset, cfg)
    points = [
        refine_pair(net, x, x_adv, margin_tol=margin_tol, max_iters=max_iters)
        for x, x_adv, _ in flips.pairs
    ]
    return points, flips


@dataclass(frozen=True)
class AbsoluteSelector:
    kappa: float

    def __post_init__(self):
        if self.kappa < 0:
            raise ValidationError("kappa must be >= 0")


@dataclass(frozen=True)
class QuantileSelector:
    q: float

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ValidationError("quantile must lie in (0, 1]")


def boundary_subset(net, dataset, selector):
    """Indices of the margin-selected boundary subset, sorted ascending.

    Absolute mode keeps margins <= kappa; quantile mode keeps the
    ceil(q*n) smallest margins with ties broken by dataset index.
    """
    margins = margin_batch(net, dataset.features)
    if isinstance(selector, AbsoluteSelector):
        idx = np.nonzero(margins <= selector.kappa)[0]
        return [int(i) for i in idx]
    if isinstance(selector, QuantileSelector):
        count = int(np.ceil(selector.q * len(dataset)))
        order = np.argsort(margins, kind="stable")[:count]
        return sorted(int(i) for i in order)
    raise ValidationError(f"unknown selector {selector!r}")


@dataclass(frozen=True)
class CalibrationSet:
    """Base dataset plus refined boundary midpoints.

    Training targets are the reference model's own predictions for every
    combined row (the contract is fidelity to the model, not to ground
    truth), so `combined_labels` is model-predicted for base rows too.
    """

    base: Dataset
    boundary_points: tuple
    combined_features: np.ndarray
    combined_labels: np.ndarray

    def __len__(self):
        return len(self.combined_features)


def build_calibration_set(dataset, boundary_points, net):
    for p in boundary_points:
        if p.midpoint.shape != (dataset.dim,):
            raise ValidationError(
                f"boundary point dimension {p.midpoint.shape} does not match "
                f"dataset dim {dataset.dim}"
            )
    mids = [p.midpoint for p in boundary_points]
    feats = (
        np.vstack([dataset.features] + [m[None, :] for m in mids])
        if mids
        else dataset.features.copy()
    )
    labels = predict_batch(net, feats)
    feats.setflags(write=False)
    labels.setflags(write=False)
    return CalibrationSet(
        base=dataset,
        boundary_points=tuple(boundary_points),
        combined_features=feats,
        combined_labels=labels,
    )


# ---------------------------------------------------------------------------
# Sidecar format: a JSON array of refinement records.


def boundary_points_to_json(points):
    return [
        {
            "x_lo": p.x_lo.tolist(),
            "x_hi": p.x_hi.tolist(),
            "midpoint": p.midpoint.tolist(),
            "class_pair": list(p.class_pair),
            "final_margin": p.final_margin,
            "iterations": p.iterations,
        }
        for p in points
    ]


def save_boundary_points(points, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(boundary_points_to_json(points), fh, indent=1)
        fh.write("\n")


def load_boundary_points(path):
    with open(path, "r", encoding="utf-8") as fh:
        docs = json.load(fh)
    if not isinstance(docs, list):
        raise ValidationError(f"{path}: expected a JSON array of records")
    points = []
    for rec in docs:
        try:
            points.append(
                BoundaryPoint(
                    x_lo=np.array(rec["x_lo"], dtype=np.float64),
                    x_hi=np.array(rec["x_hi"], dtype=np.float64),
                    midpoint=np.array(rec["midpoint"], dtype=np.float64),
                    class_pair=tuple(rec["class_pair"]),
                    final_margin=float(rec["final_margin"]),
                    iterations=int(rec["iterations"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: malformed record: {exc}") from exc
    return points


def require_nonempty_subset(indices, selector):
    if not indices:
        raise EvaluationError(
            f"boundary subset is empty under {selector!r}; widen kappa or "
            "use a quantile selector"
        )
    return indices
