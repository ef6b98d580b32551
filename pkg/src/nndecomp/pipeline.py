"""End-to-end orchestration: data -> reference model -> boundary mining ->
per-class mask learning -> contract evaluation, with every stage reading
its inputs from files written by the previous one.

All randomness is derived from one master seed through fixed stage tags,
so adding parallelism or re-running single stages never changes results.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boundary import (
    AbsoluteSelector,
    PgdConfig,
    QuantileSelector,
    build_calibration_set,
    load_boundary_points,
    mine_boundary_points,
    save_boundary_points,
)
from .contract import ContractParams, evaluate_contract, report_csv_lines, save_report
from .data import gen_blobs, load_csv, save_csv
from .decomp import (
    Component,
    LbmaskConfig,
    binarize,
    dimension_surgery,
    init_mask_logits,
    lbmask_train,
    load_mask,
    save_mask,
)
from .errors import MissingArtifactError, ValidationError
from .network import load_model, save_model
from .train import TrainConfig, train_reference

# Stage tags for seed derivation.
_STAGE_DATA = 101
_STAGE_TRAIN = 102
_STAGE_BOUNDARY = 103
_STAGE_MASKS = 104

DATASET_FILE = "dataset.csv"
MODEL_FILE = "model.json"
BOUNDARY_FILE = "boundary.json"
REPORT_FILE = "report.json"
METRICS_FILE = "metrics.csv"
CONFIG_ECHO_FILE = "resolved_config.json"


def stage_seed(master, stage):
    """Hash (master seed, stage tag) into an independent integer seed."""
    return int(np.random.SeedSequence([master, stage]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class BlobsSource:
    class_count: int
    dim: int
    per_class: int
    separation: float
    redundancy: int = 0


@dataclass(frozen=True)
class CsvSource:
    path: str
    class_count: int


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    data: object
    hidden_layers: tuple
    learning_rate: float
    epochs: int
    train_batch_size: int
    pgd_ball_radius: object  # None = ball_multiplier * mean per-feature std
    pgd_ball_multiplier: float
    pgd_step_size: object  # None = ball / 10
    pgd_steps: int
    pgd_random_start: bool
    refine_margin_tol: float
    refine_max_iters: int
    lbmask: LbmaskConfig
    contract: ContractParams
    workers: int = 1

    def to_dict(self):
        if isinstance(self.data, BlobsSource):
            data = {
                "source": "blobs",
                "class_count": self.data.class_count,
                "dim": self.data.dim,
                "per_class": self.data.per_class,
                "separation": self.data.separation,
                "redundancy": self.data.redundancy,
            }
        else:
            data = {
                "source": "csv",
                "path": self.data.path,
                "class_count": self.data.class_count,
            }
        return {
            "seed": self.seed,
            "data": data,
            "architecture": {"hidden_layers": list(self.hidden_layers)},
            "reference_training": {
                "learning_rate": self.learning_rate,
                "epochs": self.epochs,
                "batch_size": self.train_batch_size,
            },
            "pgd": {
                "ball_radius": self.pgd_ball_radius,
                "ball_multiplier": self.pgd_ball_multiplier,
                "step_size": self.pgd_step_size,
                "steps": self.pgd_steps,
                "random_start": self.pgd_random_start,
            },
            "refinement": {
                "margin_tol": self.refine_margin_tol,
                "max_iters": self.refine_max_iters,
            },
            "lbmask": {
                "target_sparsity": self.lbmask.target_sparsity,
                "init_alpha": self.lbmask.init_alpha,
                "init_scale": self.lbmask.init_scale,
                "learning_rate": self.lbmask.learning_rate,
                "steps": self.lbmask.steps,
                "batch_size": self.lbmask.batch_size,
                "sparsity_weight": self.lbmask.sparsity_weight,
            },
            "contract": {
                "epsilon": self.contract.epsilon,
                "gamma": self.contract.gamma,
                "eta": self.contract.eta,
                "delta": self.contract.delta,
                "boundary_selector": self.contract.selector_dict(),
            },
            "workers": self.workers,
        }


def _selector_from_dict(doc):
    mode = doc.get("mode")
    if mode == "quantile":
        return QuantileSelector(float(doc["q"]))
    if mode == "absolute":
        return AbsoluteSelector(float(doc["kappa"]))
    raise ValidationError(f"unknown boundary selector mode {mode!r}")


def config_from_dict(doc):
    try:
        data_doc = doc["data"]
        source = data_doc.get("source", "blobs")
        if source == "blobs":
            data = BlobsSource(
                class_count=int(data_doc["class_count"]),
                dim=int(data_doc["dim"]),
                per_class=int(data_doc["per_class"]),
                separation=float(data_doc["separation"]),
                redundancy=int(data_doc.get("redundancy", 0)),
            )
        elif source == "csv":
            data = CsvSource(
                path=str(data_doc["path"]),
                class_count=int(data_doc["class_count"]),
            )
        else:
            raise ValidationError(f"unknown data source {source!r}")

        arch = doc.get("architecture", {})
        training = doc.get("reference_training", {})
        pgd = doc.get("pgd", {})
        refinement = doc.get("refinement", {})
        lbm = doc.get("lbmask", {})
        contract = doc.get("contract", {})
        selector = _selector_from_dict(
            contract.get("boundary_selector", {"mode": "quantile", "q": 0.2})
        )
        return PipelineConfig(
            seed=int(doc["seed"]),
            data=data,
            hidden_layers=tuple(int(h) for h in arch.get("hidden_layers", [32, 16])),
            learning_rate=float(training.get("learning_rate", 0.05)),
            epochs=int(training.get("epochs", 150)),
            train_batch_size=int(training.get("batch_size", 32)),
            pgd_ball_radius=pgd.get("ball_radius"),
            pgd_ball_multiplier=float(pgd.get("ball_multiplier", 0.5)),
            pgd_step_size=pgd.get("step_size"),
            pgd_steps=int(pgd.get("steps", 20)),
            pgd_random_start=bool(pgd.get("random_start", True)),
            refine_margin_tol=float(refinement.get("margin_tol", 1e-6)),
            refine_max_iters=int(refinement.get("max_iters", 60)),
            lbmask=LbmaskConfig(
                target_sparsity=float(lbm.get("target_sparsity", 0.5)),
                init_alpha=float(lbm.get("init_alpha", 0.0)),
                init_scale=float(lbm.get("init_scale", 1.0)),
                learning_rate=float(lbm.get("learning_rate", 1.0)),
                steps=int(lbm.get("steps", 400)),
                batch_size=int(lbm.get("batch_size", 64)),
                sparsity_weight=float(lbm.get("sparsity_weight", 1.0)),
                seed=0,  # replaced by the derived stage seed at run time
            ),
            contract=ContractParams(
                epsilon=float(contract.get("epsilon", 0.1)),
                gamma=float(contract.get("gamma", 0.5)),
                eta=float(contract.get("eta", 0.3)),
                delta=float(contract.get("delta", 0.05)),
                selector=selector,
            ),
            workers=int(doc.get("workers", 1)),
        )
    except KeyError as exc:
        raise ValidationError(f"config is missing field {exc}") from exc


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def _require(path, producer):
    if not Path(path).exists():
        raise MissingArtifactError(f"expected {path}; run `{producer}` first")
    return path


def _load_dataset(config, out):
    if isinstance(config.data, CsvSource):
        class_count = config.data.class_count
    else:
        class_count = config.data.class_count
    path = _require(Path(out) / DATASET_FILE, "gen-data")
    return load_csv(path, class_count)


def stage_gen_data(config, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(config.data, BlobsSource):
        src = config.data
        dataset = gen_blobs(
            class_count=src.class_count,
            dim=src.dim,
            per_class=src.per_class,
            separation=src.separation,
            redundancy=src.redundancy,
            seed=stage_seed(config.seed, _STAGE_DATA),
        )
    else:
        csv_path = Path(config.data.path)
        if not csv_path.is_absolute():
            csv_path = Path(out) / csv_path
        dataset = load_csv(_require(csv_path, "provide the CSV"), config.data.class_count)
    save_csv(dataset, out / DATASET_FILE)
    return dataset


def stage_train(config, out):
    out = Path(out)
    dataset = _load_dataset(config, out)
    arch = (dataset.dim,) + config.hidden_layers + (dataset.class_count,)
    net = train_reference(
        dataset,
        arch,
        TrainConfig(
            learning_rate=config.learning_rate,
            epochs=config.epochs,
            batch_size=config.train_batch_size,
            seed=stage_seed(config.seed, _STAGE_TRAIN),
        ),
    )
    save_model(net, out / MODEL_FILE)
    return net


def resolve_pgd_config(config, dataset):
    """Explicit ball wins; otherwise scale the mean per-feature std."""
    ball = config.pgd_ball_radius
    if ball is None:
        ball = config.pgd_ball_multiplier * float(np.mean(dataset.features.std(axis=0)))
    step = config.pgd_step_size
    if step is None:
        step = ball / 10.0
    return PgdConfig(
        ball_radius=float(ball),
        step_size=float(step),
        steps=config.pgd_steps,
        random_start=config.pgd_random_start,
        seed=stage_seed(config.seed, _STAGE_BOUNDARY),
    )


def stage_mine_boundary(config, out):
    out = Path(out)
    dataset = _load_dataset(config, out)
    net = load_model(_require(out / MODEL_FILE, "train-ref"))
    cfg = resolve_pgd_config(config, dataset)
    points, flips = mine_boundary_points(
        net,
        dataset,
        cfg,
        margin_tol=config.refine_margin_tol,
        max_iters=config.refine_max_iters,
    )
    save_boundary_points(points, out / BOUNDARY_FILE)
    return points, flips


def mask_path(out, k):
    return Path(out) / f"mask_{k}.json"


def component_model_path(out, k):
    return Path(out) / f"component_{k}.model.json"


def train_components(net, calibration, config, workers=1):
    """Train one mask per class; any worker count gives identical results."""
    lbm = LbmaskConfig(
        target_sparsity=config.lbmask.target_sparsity,
        init_alpha=config.lbmask.init_alpha,
        init_scale=config.lbmask.init_scale,
        learning_rate=config.lbmask.learning_rate,
        steps=config.lbmask.steps,
        batch_size=config.lbmask.batch_size,
        sparsity_weight=config.lbmask.sparsity_weight,
        seed=stage_seed(config.seed, _STAGE_MASKS),
    )
    init = init_mask_logits(net, lbm.init_alpha, lbm.init_scale)

    def train_one(k):
        comp = Component(net, k, init)
        return lbmask_train(comp, calibration, lbm)

    classes = range(net.class_count)
    if workers <= 1:
        return [train_one(k) for k in classes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(train_one, classes))


def stage_decompose(config, out, workers=None):
    out = Path(out)
    dataset = _load_dataset(config, out)
    net = load_model(_require(out / MODEL_FILE, "train-ref"))
    points = load_boundary_points(_require(out / BOUNDARY_FILE, "mine-boundary"))
    calibration = build_calibration_set(dataset, points, net)
    components = train_components(
        net, calibration, config, workers=config.workers if workers is None else workers
    )
    for comp in components:
        save_mask(comp, mask_path(out, comp.class_index))
        reduced = dimension_surgery(net, binarize(comp.mask))
        save_model(reduced, component_model_path(out, comp.class_index))
    return components


def stage_evaluate(config, out, masks_dir=None):
    out = Path(out)
    dataset = _load_dataset(config, out)
    net = load_model(_require(out / MODEL_FILE, "train-ref"))
    mask_root = Path(masks_dir) if masks_dir is not None else out
    components = []
    for k in range(net.class_count):
        components.append(load_mask(net, _require(mask_path(mask_root, k), "decompose")))
    report = evaluate_contract(net, components, dataset, config.contract, seed=config.seed)
    save_report(report, out / REPORT_FILE)
    with open(out / METRICS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(report_csv_lines(report)))
        fh.write("\n")
    return report


def run_pipeline(config, out, workers=None):
    """All five stages in order; artifacts land in `out`."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / CONFIG_ECHO_FILE, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=1)
        fh.write("\n")
    stage_gen_data(config, out)
    stage_train(config, out)
    stage_mine_boundary(config, out)
    stage_decompose(config, out, workers=workers)
    return stage_evaluate(config, out)
