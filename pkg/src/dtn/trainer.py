"""Deep transfer network training loop.

The objective over one paired batch is

    J = NLL + lam * MMD_mar(last hidden layer) + mu * MMD_con(softmax)

minimized by mini-batch SGD. An outer loop alternates training with
re-prediction of target pseudo labels until they reach a fixed point or
an iteration cap. All randomness flows from the config seed through one
generator in a fixed order, so equal configs give bit-identical runs.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from dtn import kernels, mmd, network
from dtn.batching import build_plan
from dtn.data import DomainDataset
from dtn.errors import NumericalError


@dataclass
class TrainConfig:
    """Hyperparameters of one training run.

    lam and mu weight the marginal and conditional distribution penalties,
    batch_size is the total paired-batch size S (S/2 per domain), and
    label_iters caps the outer pseudo-label loop. target_nll controls
    whether pseudo-labeled target samples also enter the likelihood term.
    """

    lam: float = 10.0
    mu: float = 10.0
    batch_size: int = 200
    label_iters: int = 10
    learning_rate: float = 0.01
    epochs_per_iter: int = 10
    seed: int = 0
    target_nll: bool = True
    reshuffle_each_epoch: bool = True

    def __post_init__(self):
        if self.lam < 0 or self.mu < 0:
            raise ValueError("lam and mu must be nonnegative")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError(f"batch_size must be even and >= 2, got {self.batch_size}")
        if self.label_iters < 0:
            raise ValueError("label_iters must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs_per_iter < 1:
            raise ValueError("epochs_per_iter must be >= 1")


@dataclass
class EpochRecord:
    """One epoch's summed objective. iteration 0 is the source-only
    baseline; marginal and conditional are already scaled by lam and mu."""

    iteration: int
    epoch: int
    objective: float
    nll: float
    marginal: float
    conditional: float
    seconds: float


@dataclass
class TrainReport:
    """Everything a run produced besides the parameters themselves.

    iteration_labels holds the target predictions after the baseline and
    after every outer iteration, so callers can score the whole
    trajectory; label_changes[i] is the Hamming distance between
    consecutive prediction vectors.
    """

    epochs: list = field(default_factory=list)
    label_changes: list = field(default_factory=list)
    iteration_labels: list = field(default_factory=list)
    final_labels: np.ndarray = None
    iterations: int = 0


def _split_features(hiddens, x, n_s):
    # distribution penalty acts on the last feature layer; with no hidden
    # layers that is the raw input, which carries no parameter gradient
    feats = hiddens[-1] if hiddens else x
    return feats[:n_s], feats[n_s:]


def _stack_labels(y_s, y_t, n_s, n_t, config):
    ys = network.as_label_array(y_s, n_s)
    yt = network.as_label_array(y_t if config.target_nll else None, n_t)
    return np.concatenate([ys, yt])


def batch_objective(params, specs, x_s, y_s, x_t, y_t, config):
    """Objective J over one paired batch, with its three components.

    Returns (J, (nll, lam * mmd_mar, mu * mmd_con)). y_t may be None when
    no pseudo labels exist yet; it is ignored unless config.target_nll.
    """
    x_s = np.ascontiguousarray(x_s, dtype=np.float64)
    x_t = np.ascontiguousarray(x_t, dtype=np.float64)
    x = np.concatenate([x_s, x_t])
    hiddens, probs = network.forward_batch(params, specs, x)
    n_s = x_s.shape[0]
    f_s, f_t = _split_features(hiddens, x, n_s)
    labels = _stack_labels(y_s, y_t, n_s, x_t.shape[0], config)

    nll = kernels.nll_sum(probs, labels)
    mar = config.lam * mmd.marginal_mmd(f_s.T, f_t.T)
    con = config.mu * mmd.conditional_mmd(probs[:n_s].T, probs[n_s:].T)
    return nll + mar + con, (nll, mar, con)


def batch_gradient(params, specs, x_s, y_s, x_t, y_t, config):
    """Gradient of batch_objective w.r.t. every weight and bias.

    The distribution-penalty gradients are injected into backprop at the
    last hidden layer (lam term) and at the softmax output (mu term).
    """
    x_s = np.ascontiguousarray(x_s, dtype=np.float64)
    x_t = np.ascontiguousarray(x_t, dtype=np.float64)
    x = np.concatenate([x_s, x_t])
    hiddens, probs = network.forward_batch(params, specs, x)
    n_s = x_s.shape[0]
    f_s, f_t = _split_features(hiddens, x, n_s)
    terms = mmd.mmd_terms(f_s.T, f_t.T, probs[:n_s].T, probs[n_s:].T)

    extra_h = np.concatenate([terms.grad_h_source.T, terms.grad_h_target.T])
    extra_p = np.concatenate([terms.grad_p_source.T, terms.grad_p_target.T])
    labels = _stack_labels(y_s, y_t, n_s, x_t.shape[0], config)
    return network.backprop(params, specs, x, labels,
                            extra_grad_h=extra_h, extra_grad_p=extra_p,
                            lam=config.lam, mu=config.mu)


def _apply_update(params, grads, lr):
    # build every updated array before touching params, so a non-finite
    # update leaves them untouched
    new_w = [w - lr * g for w, g in zip(params.weights, grads.weights)]
    new_b = [b - lr * g for b, g in zip(params.biases, grads.biases)]
    for i, (w, b) in enumerate(zip(new_w, new_b)):
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise NumericalError(f"non-finite update at layer {i + 1}")
    params.weights[:] = new_w
    params.biases[:] = new_b


def sgd_step(params, specs, x_s, y_s, x_t, y_t, config):
    """One SGD update on a paired batch; mutates and returns params.

    A non-finite gradient or update raises a numerical error with params
    unchanged.
    """
    _paired_step(params, specs, x_s, y_s, x_t, y_t, config)
    return params


def _paired_step(params, specs, x_s, y_s, x_t, y_t, config):
    # objective is evaluated before the update so epoch logs follow the
    # objective-component bookkeeping invariant exactly
    j, comps = batch_objective(params, specs, x_s, y_s, x_t, y_t, config)
    grads = batch_gradient(params, specs, x_s, y_s, x_t, y_t, config)
    _apply_update(params, grads, config.learning_rate)
    return j, comps


def _source_step(params, specs, x, y, config):
    # baseline phase: plain summed-NLL SGD, no distribution terms
    _, probs = network.forward_batch(params, specs, x)
    labels = network.as_label_array(y, x.shape[0])
    j = kernels.nll_sum(probs, labels)
    grads = network.backprop(params, specs, x, labels)
    _apply_update(params, grads, config.learning_rate)
    return j


def predict(params, specs, data):
    """Argmax class per sample; ties take the lowest class index."""
    x = data.features if isinstance(data, DomainDataset) else np.asarray(data, dtype=np.float64)
    _, probs = network.forward_batch(params, specs, x)
    return np.argmax(probs, axis=1).astype(np.int64)


def _hamming(a, b):
    return int(np.count_nonzero(a != b))


def _source_epoch(params, specs, source, order, config, report, epoch):
    half = config.batch_size // 2
    start = time.perf_counter()
    total = 0.0
    for k in range(0, len(order), half):
        idx = order[k:k + half]
        total += _source_step(params, specs, source.features[idx],
                              source.labels[idx], config)
    report.epochs.append(EpochRecord(0, epoch, total, total, 0.0, 0.0,
                                     time.perf_counter() - start))


def _paired_epoch(params, specs, source, target, pseudo, plan, config,
                  report, iteration, epoch):
    start = time.perf_counter()
    tot_j, tot_nll, tot_mar, tot_con = 0.0, 0.0, 0.0, 0.0
    for b in plan.batches:
        yt = pseudo[b.target_indices] if config.target_nll else None
        j, (nll, mar, con) = _paired_step(
            params, specs,
            source.features[b.source_indices], source.labels[b.source_indices],
            target.features[b.target_indices], yt, config)
        tot_j += j
        tot_nll += nll
        tot_mar += mar
        tot_con += con
    report.epochs.append(EpochRecord(iteration, epoch, tot_j, tot_nll,
                                     tot_mar, tot_con,
                                     time.perf_counter() - start))


def fit(source, target, specs, config):
    """Run the full algorithm; returns (params, report).

    A baseline network (same architecture, no distribution terms) is
    trained on source data alone and predicts the initial target labels.
    Each outer iteration then trains on paired batches with the previous
    pseudo labels and re-predicts, stopping at a label fixed point or
    after label_iters iterations. Target labels, if present, are never
    read. A numerical failure aborts the run and carries the partial
    report on the raised error.
    """
    if source.n_samples < 1 or target.n_samples < 1:
        raise ValueError("both domains need at least one sample")
    if source.labels is None:
        raise ValueError("source dataset must be labeled")

    master = np.random.default_rng(config.seed)
    params = network.init_params(specs, master)
    report = TrainReport()

    try:
        fixed_order = None
        for epoch in range(config.epochs_per_iter):
            if fixed_order is None or config.reshuffle_each_epoch:
                fixed_order = master.permutation(source.n_samples)
            _source_epoch(params, specs, source, fixed_order, config,
                          report, epoch)

        pseudo = predict(params, specs, target)
        report.iteration_labels.append(pseudo)

        for i in range(1, config.label_iters + 1):
            plan = None
            for epoch in range(config.epochs_per_iter):
                if plan is None or config.reshuffle_each_epoch:
                    plan = build_plan(source.n_samples, target.n_samples,
                                      config.batch_size, master)
                _paired_epoch(params, specs, source, target, pseudo, plan,
                              config, report, i, epoch)
            labels = predict(params, specs, target)
            report.iteration_labels.append(labels)
            report.label_changes.append(_hamming(labels, pseudo))
            report.iterations = i
            pseudo = labels
            if report.label_changes[-1] == 0:
                break
    except NumericalError as err:
        report.final_labels = report.iteration_labels[-1] if report.iteration_labels else None
        err.report = report
        raise

    report.final_labels = pseudo
    return params, report
