"""Deep transfer network: domain-adaptive MLP training with
distribution-matching penalties and iterative pseudo-labeling."""

from dtn.batching import BatchPlan, PairedBatch, balance, build_plan, verify_bound
from dtn.data import (
    DomainDataset,
    Role,
    SynthShiftSpec,
    gen_synth_shift,
    load_delimited,
    load_idx,
    resize_bilinear,
    save_delimited,
)
from dtn.errors import DataFormatError, ManifestError, NumericalError, ShapeError
from dtn.mmd import (
    MmdTerms,
    conditional_mmd,
    conditional_mmd_grad,
    marginal_mmd,
    marginal_mmd_grad,
    mmd_matrix,
    mmd_terms,
)
from dtn.network import (
    Activation,
    LayerSpec,
    NetworkParams,
    backprop,
    forward,
    forward_batch,
    init_params,
    mlp_specs,
)
from dtn.trainer import (
    TrainConfig,
    TrainReport,
    batch_gradient,
    batch_objective,
    fit,
    predict,
    sgd_step,
)

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "BatchPlan",
    "DataFormatError",
    "DomainDataset",
    "LayerSpec",
    "ManifestError",
    "MmdTerms",
    "NetworkParams",
    "NumericalError",
    "PairedBatch",
    "Role",
    "ShapeError",
    "SynthShiftSpec",
    "TrainConfig",
    "TrainReport",
    "backprop",
    "balance",
    "batch_gradient",
    "batch_objective",
    "build_plan",
    "conditional_mmd",
    "conditional_mmd_grad",
    "fit",
    "forward",
    "forward_batch",
    "gen_synth_shift",
    "init_params",
    "load_delimited",
    "load_idx",
    "marginal_mmd",
    "marginal_mmd_grad",
    "mlp_specs",
    "mmd_matrix",
    "mmd_terms",
    "predict",
    "resize_bilinear",
    "save_delimited",
    "sgd_step",
    "verify_bound",
]
