"""Boundary-aware decomposition contracts for dense feed-forward classifiers.

Builds class-wise components over a frozen network, mines near-boundary
inputs, learns structured binary masks, and checks whether the result
satisfies a semantic-structural contract: low disagreement with the
reference model near its decision boundary, low pairwise support overlap,
and a non-trivial prune ratio per component.
"""

from ._kernels import BACKEND as kernel_backend  # noqa: F401
from .boundary import (  # noqa: F401
    AbsoluteSelector,
    BoundaryPoint,
    PgdConfig,
    QuantileSelector,
    boundary_subset,
    build_calibration_set,
    find_flip_pairs,
    mine_boundary_points,
    pgd_attack,
    refine_pair,
)
from .contract import (  # noqa: F401
    ContractParams,
    ContractReport,
    confusion_deviation,
    empirical_disagreement,
    evaluate_contract,
    global_disagreement,
    hoeffding_term,
    overlap,
    prune_ratio,
)
from .data import Dataset, gen_blobs, load_csv, save_csv, split  # noqa: F401
from .decomp import (  # noqa: F401
    Component,
    LbmaskConfig,
    MaskState,
    aggregate_predict,
    binarize,
    component_score,
    dimension_surgery,
    init_mask_logits,
    lbmask_loss,
    lbmask_train,
    make_components,
    support,
)
from .network import (  # noqa: F401
    DenseNetwork,
    ForwardTrace,
    Layer,
    forward,
    input_gradient,
    load_model,
    margin,
    masked_forward,
    predict,
    save_model,
)
from .pipeline import PipelineConfig, load_config, run_pipeline  # noqa: F401
from .train import TrainConfig, train_reference  # noqa: F401

__version__ = "0.1.0"
