"""Mini-batch training driver for the EPNN.

Each epoch shuffles the sample order with its own counter-derived RNG
(``default_rng([seed, tag, epoch])``), so a run resumed from a checkpoint
at epoch ``e`` replays exactly the batches the uninterrupted run would
have seen.  A non-finite batch loss (or non-finite activations inside the
network) aborts the run and rolls the model back to the last epoch that
finished with finite loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import losses
from .model import EPNN, NetworkSpec
from .optim import AdamState, TrainConfig, adam_step

__all__ = ["TrainResult", "train"]

_SHUFFLE_TAG = 0xE70C


@dataclass
class TrainResult:
    """Outcome of a training run."""

    model: EPNN
    loss_trace: list[float] = field(default_factory=list)
    status: str = "ok"  # "ok" | "diverged"
    epochs_run: int = 0
    adam_state: AdamState | None = None


def train(
    dataset,
    spec: NetworkSpec,
    cfg: TrainConfig,
    labels: np.ndarray | None = None,
    model: EPNN | None = None,
    adam_state: AdamState | None = None,
    start_epoch: int = 0,
    loss_trace: list[float] | None = None,
    epoch_callback=None,
) -> TrainResult:
    """Train (or resume training) an EPNN on a channel dataset.

    Parameters
    ----------
    dataset : Dataset or (count, K, N_t) complex array of channels.
    spec, cfg : architecture and training hyper-parameters.
    labels : (count, N_t, N_par) complex solver precoders; required when
        ``cfg.mode == "supervised"``.
    model, adam_state, start_epoch, loss_trace : pass all four to resume a
        checkpointed run; fresh objects are created otherwise.
    epoch_callback : optional ``f(epoch, model, adam_state, epoch_loss)``
        invoked after every completed epoch (checkpoint hook).
    """
    cfg.validate()
    spec.validate()
    channels = np.asarray(getattr(dataset, "channels", dataset), dtype=np.complex128)
    if channels.ndim != 3 or channels.shape[1:] != (spec.users, spec.antennas):
        raise ValueError(
            f"dataset shape {channels.shape} does not match spec "
            f"(K={spec.users}, N_t={spec.antennas})"
        )
    count = channels.shape[0]
    if count == 0:
        raise ValueError("dataset is empty")
    if cfg.mode == "supervised":
        if labels is None:
            raise ValueError("supervised mode requires solver labels")
        labels = np.asarray(labels, dtype=np.complex128)
        if labels.shape != (count, spec.antennas, spec.n_par):
            raise ValueError(
                f"labels shape {labels.shape} does not match "
                f"({count}, {spec.antennas}, {spec.n_par})"
            )

    c = spec.constellation()
    if model is None:
        model = EPNN(spec, init_seed=cfg.seed)
    if adam_state is None:
        adam_state = AdamState.for_params(model.parameters())
    trace = list(loss_trace) if loss_trace else []

    params = model.parameters()
    snapshot = ([p.copy() for p in params], [s.copy() for s in model.stats()])
    status = "ok"
    epochs_run = start_epoch

    for epoch in range(start_epoch, cfg.epochs):
        rng = np.random.default_rng([cfg.seed, _SHUFFLE_TAG, epoch])
        perm = rng.permutation(count)
        total = 0.0
        finite = True
        for lo in range(0, count, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            Hb = channels[idx]
            try:
                Xb = model.forward(Hb, training=True)
                if cfg.mode == "unsupervised":
                    loss, G = losses.unsupervised_value_and_grad(Xb, Hb, c, cfg.lambda_reg)
                else:
                    loss, G = losses.supervised_value_and_grad(Xb, labels[idx])
            except FloatingPointError:
                finite = False
                break
            if not np.isfinite(loss):
                finite = False
                break
            model.zero_grad()
            model.backward(G)
            adam_step(params, model.gradients(), adam_state, cfg, epoch=epoch)
            total += loss * idx.size
        if not finite:
            model.load_parameters(snapshot[0])
            model.load_stats(snapshot[1])
            status = "diverged"
            break
        epoch_loss = total / count
        trace.append(epoch_loss)
        epochs_run = epoch + 1
        snapshot = ([p.copy() for p in params], [s.copy() for s in model.stats()])
        if epoch_callback is not None:
            epoch_callback(epoch, model, adam_state, epoch_loss)

    return TrainResult(
        model=model,
        loss_trace=trace,
        status=status,
        epochs_run=epochs_run,
        adam_state=adam_state,
    )
