"""EPNN architecture: spec, forward/backward passes, and the scaling layer.

The network maps a channel matrix, presented as a two-plane real tensor
(Re H, Im H), through a conv stack (each conv followed by ReLU then batch
norm), a flatten, several parallel fully-connected branches with residual
links, a trunk FC layer, and a linear output head.  The real output vector
is reinterpreted as a complex matrix X_temp (first half = real parts,
second half = imaginary parts, column-major over the precoder index) and
passed through the power-scaling stage

    X_hat = X_temp / ||X_temp||_F * sqrt(min(||X_temp||_F, P * N_par))

so that ``||X_hat||_F**2 = min(||X_temp||_F, P * N_par)`` always respects
the reduced-set power budget.  An alternative ``"ball"`` scaling mode
projects onto the ball of squared radius ``P * N_par`` instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..constellation import Constellation, make_constellation
from .layers import BatchNorm, Conv2d, Dense, ReLU, conv_out_shape

__all__ = ["ConvSpec", "NetworkSpec", "EPNN", "forward", "infer"]

_SCALING_MODES = ("paper", "ball")


@dataclass(frozen=True)
class ConvSpec:
    """One convolutional layer: SAME padding, ReLU + batch norm appended."""

    filters: int
    kernel: tuple[int, int]
    stride: tuple[int, int]
    padding: str = "same"


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture hyper-parameters; all tensor shapes derive from this.

    Defaults follow the reference configuration: conv stack
    256 x (K, 1) stride (K, 1) then two 256 x (1, 1) layers, two parallel
    FC branches of widths 2048/8192/2048/8192/2048 with a residual link
    from branch layer 3 to the branch end, a 2048-wide trunk, and a linear
    output head of size ``2 * N_t * N_par``.  Every width is configurable
    downward for desk-scale runs via :meth:`desk`.
    """

    users: int
    antennas: int
    order: int
    power_budget: float = 1.0
    conv_layers: tuple[ConvSpec, ...] = ()
    branch_widths: tuple[int, ...] = (2048, 8192, 2048, 8192, 2048)
    num_branches: int = 2
    trunk_width: int = 2048
    residual_links: tuple[tuple[int, int], ...] = ((3, 5),)
    scaling_mode: str = "paper"

    def __post_init__(self):
        if not self.conv_layers:
            k = self.users
            object.__setattr__(
                self,
                "conv_layers",
                (
                    ConvSpec(256, (k, 1), (k, 1)),
                    ConvSpec(256, (1, 1), (1, 1)),
                    ConvSpec(256, (1, 1), (1, 1)),
                ),
            )
        else:
            object.__setattr__(
                self, "conv_layers", tuple(self.conv_layers)
            )
        object.__setattr__(self, "branch_widths", tuple(self.branch_widths))
        object.__setattr__(
            self, "residual_links", tuple(tuple(l) for l in self.residual_links)
        )

    @classmethod
    def desk(
        cls,
        users: int,
        antennas: int,
        order: int,
        power_budget: float = 1.0,
        conv_filters: int = 64,
        width: int = 256,
        **overrides,
    ) -> "NetworkSpec":
        """Reduced-width variant of the default architecture for desk-scale runs."""
        k = users
        return cls(
            users=users,
            antennas=antennas,
            order=order,
            power_budget=power_budget,
            conv_layers=(
                ConvSpec(conv_filters, (k, 1), (k, 1)),
                ConvSpec(conv_filters, (1, 1), (1, 1)),
                ConvSpec(conv_filters, (1, 1), (1, 1)),
            ),
            branch_widths=(width, 2 * width, width, 2 * width, width),
            trunk_width=width,
            **overrides,
        )

    @property
    def n_par(self) -> int:
        return self.order ** (self.users - 1)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (2, self.users, self.antennas)

    @property
    def output_dim(self) -> int:
        return 2 * self.antennas * self.n_par

    def validate(self):
        if self.users < 1 or self.antennas < 1:
            raise ValueError("users and antennas must be positive")
        if self.order < 2:
            raise ValueError(f"constellation order must be >= 2, got {self.order}")
        if not self.power_budget > 0:
            raise ValueError(f"power_budget must be positive, got {self.power_budget}")
        if self.num_branches < 1:
            raise ValueError("need at least one FC branch")
        if not self.branch_widths or any(w < 1 for w in self.branch_widths):
            raise ValueError(f"invalid branch widths {self.branch_widths}")
        if self.trunk_width < 1:
            raise ValueError(f"invalid trunk width {self.trunk_width}")
        for conv in self.conv_layers:
            if conv.filters < 1 or min(conv.kernel) < 1 or min(conv.stride) < 1:
                raise ValueError(f"invalid conv layer {conv}")
            if conv.padding != "same":
                raise ValueError(f"only 'same' padding is supported, got {conv.padding!r}")
        n = len(self.branch_widths)
        for src, dst in self.residual_links:
            if not (1 <= src < dst <= n):
                raise ValueError(
                    f"residual link ({src}, {dst}) out of range for {n} branch layers"
                )
            if self.branch_widths[src - 1] != self.branch_widths[dst - 1]:
                raise ValueError(
                    f"residual link ({src}, {dst}) connects incompatible widths "
                    f"{self.branch_widths[src - 1]} and {self.branch_widths[dst - 1]}"
                )
        if self.scaling_mode not in _SCALING_MODES:
            raise ValueError(
                f"scaling_mode must be one of {_SCALING_MODES}, got {self.scaling_mode!r}"
            )

    def constellation(self) -> Constellation:
        return make_constellation(self.order)


class _Block:
    """Dense/conv layer followed by ReLU and batch norm, as one unit."""

    def __init__(self, core, features: int, name: str):
        self.core = core
        self.relu = ReLU()
        self.bn = BatchNorm(features)
        self.name = name

    def params(self):
        return self.core.params() + self.bn.params()

    def grads(self):
        return self.core.grads() + self.bn.grads()

    def stats(self):
        return self.bn.stats()

    def forward(self, x, training):
        z = self.core.forward(x, training)
        if not np.all(np.isfinite(z)):
            raise FloatingPointError(f"non-finite activations in layer {self.name}")
        return self.bn.forward(self.relu.forward(z, training), training)

    def backward(self, dy):
        return self.core.backward(self.relu.backward(self.bn.backward(dy)))


class EPNN:
    """The trainable precoding network.

    Parameters, gradients, and batch-norm statistics are exposed as ordered
    lists of real tensors; the order is fixed by construction (conv stack,
    then branches in order, trunk, output head) and shared by the optimizer
    and the checkpoint format.
    """

    def __init__(self, spec: NetworkSpec, init_seed: int = 0):
        spec.validate()
        self.spec = spec
        rng = np.random.default_rng([init_seed, 0x51F0])

        in_ch = 2
        shape = (spec.users, spec.antennas)
        self.conv_blocks: list[_Block] = []
        for ci, conv in enumerate(spec.conv_layers, start=1):
            core = Conv2d(in_ch, conv.filters, conv.kernel, conv.stride, rng)
            self.conv_blocks.append(_Block(core, conv.filters, f"CL-{ci}"))
            shape = conv_out_shape(shape, conv.kernel, conv.stride)
            in_ch = conv.filters
        self.flat_dim = in_ch * shape[0] * shape[1]
        self._conv_out_shape = (in_ch, shape[0], shape[1])

        self.branches: list[list[_Block]] = []
        for i in range(spec.num_branches):
            blocks = []
            dim = self.flat_dim
            for j, width in enumerate(spec.branch_widths, start=1):
                blocks.append(_Block(Dense(dim, width, rng), width, f"FC-({i + 1},{j})"))
                dim = width
            self.branches.append(blocks)

        concat_dim = spec.num_branches * spec.branch_widths[-1]
        self.trunk = _Block(Dense(concat_dim, spec.trunk_width, rng), spec.trunk_width, "FC-trunk")
        self.head = Dense(spec.trunk_width, spec.output_dim, rng)

        self._modules = list(self.conv_blocks)
        for blocks in self.branches:
            self._modules.extend(blocks)
        self._modules.append(self.trunk)
        self._modules.append(self.head)
        self._cache = None

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        out = []
        for m in self._modules:
            out.extend(m.params())
        return out

    def gradients(self) -> list[np.ndarray]:
        out = []
        for m in self._modules:
            out.extend(m.grads())
        return out

    def stats(self) -> list[np.ndarray]:
        out = []
        for m in self._modules:
            if hasattr(m, "stats"):
                out.extend(m.stats())
        return out

    def zero_grad(self):
        for g in self.gradients():
            g[...] = 0.0

    def load_parameters(self, tensors):
        own = self.parameters()
        if len(tensors) != len(own):
            raise ValueError(f"expected {len(own)} parameter tensors, got {len(tensors)}")
        for dst, src in zip(own, tensors):
            if dst.shape != np.shape(src):
                raise ValueError(f"parameter shape mismatch: {dst.shape} vs {np.shape(src)}")
            dst[...] = src

    def load_stats(self, tensors):
        own = self.stats()
        if len(tensors) != len(own):
            raise ValueError(f"expected {len(own)} statistic tensors, got {len(tensors)}")
        for dst, src in zip(own, tensors):
            dst[...] = src

    # -- forward / backward -------------------------------------------------

    def forward(self, H: np.ndarray, training: bool = False) -> np.ndarray:
        """Map a batch of channels (N, K, N_t) to precoders (N, N_t, N_par)."""
        H = np.asarray(H, dtype=np.complex128)
        if H.ndim != 3 or H.shape[1:] != (self.spec.users, self.spec.antennas):
            raise ValueError(
                f"expected channel batch of shape (N, {self.spec.users}, "
                f"{self.spec.antennas}), got {H.shape}"
            )
        x = np.stack([H.real, H.imag], axis=1)

        for block in self.conv_blocks:
            x = block.forward(x, training)
        flat = x.reshape(x.shape[0], -1)

        branch_values = []
        branch_outs = []
        for blocks in self.branches:
            values = []
            v = flat
            for b, block in enumerate(blocks, start=1):
                z = block.forward(v, training)
                for src, dst in self.spec.residual_links:
                    if dst == b:
                        z = z + values[src - 1]
                values.append(z)
                v = z
            branch_values.append(values)
            branch_outs.append(v)
        concat = np.concatenate(branch_outs, axis=1)

        t = self.trunk.forward(concat, training)
        y = self.head.forward(t, training)
        x_temp = self._to_complex(y)
        x_hat, scale_cache = self._scale_forward(x_temp)
        self._cache = (x.shape, branch_values, scale_cache)
        self._check_finite(y)
        return x_hat

    def backward(self, G: np.ndarray):
        """Backpropagate a packed complex gradient dL/dX_hat (N, N_t, N_par).

        Packed convention: ``G = dL/dRe(X_hat) + 1j * dL/dIm(X_hat)``.
        Accumulates parameter gradients; call :meth:`zero_grad` first.
        """
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        conv_shape, branch_values, scale_cache = self._cache
        G_temp = self._scale_backward(np.asarray(G, dtype=np.complex128), scale_cache)
        dy = self._from_complex(G_temp)

        dt = self.head.backward(dy)
        dconcat = self.trunk.backward(dt)

        w = self.spec.branch_widths[-1]
        dflat = 0.0
        for i, blocks in enumerate(self.branches):
            g = dconcat[:, i * w : (i + 1) * w]
            stash: dict[int, np.ndarray] = {}
            for b in range(len(blocks), 0, -1):
                if b in stash:
                    g = g + stash.pop(b)
                for src, dst in self.spec.residual_links:
                    if dst == b:
                        stash[src] = stash.get(src, 0.0) + g
                g = blocks[b - 1].backward(g)
            dflat = dflat + g

        dx = dflat.reshape(conv_shape)
        for block in reversed(self.conv_blocks):
            dx = block.backward(dx)
        self._cache = None

    # -- scaling stage ------------------------------------------------------

    def _to_complex(self, y: np.ndarray) -> np.ndarray:
        n = self.spec.antennas * self.spec.n_par
        re = y[:, :n].reshape(-1, self.spec.n_par, self.spec.antennas).transpose(0, 2, 1)
        im = y[:, n:].reshape(-1, self.spec.n_par, self.spec.antennas).transpose(0, 2, 1)
        return re + 1j * im

    def _from_complex(self, G: np.ndarray) -> np.ndarray:
        N = G.shape[0]
        n = self.spec.antennas * self.spec.n_par
        dy = np.empty((N, 2 * n))
        dy[:, :n] = G.real.transpose(0, 2, 1).reshape(N, n)
        dy[:, n:] = G.imag.transpose(0, 2, 1).reshape(N, n)
        return dy

    def _scale_forward(self, x_temp: np.ndarray):
        budget = self.spec.power_budget * self.spec.n_par
        r = np.sqrt(np.sum(x_temp.real**2 + x_temp.imag**2, axis=(1, 2)))
        nonzero = r > 0.0
        rsafe = np.where(nonzero, r, 1.0)
        if self.spec.scaling_mode == "paper":
            first = r <= budget
            g = np.where(first, 1.0 / np.sqrt(rsafe), np.sqrt(budget) / rsafe)
            gp = np.where(first, -0.5 * rsafe**-1.5, -np.sqrt(budget) / rsafe**2)
        else:  # ball projection onto squared radius ``budget``
            first = r * r <= budget
            g = np.where(first, 1.0, np.sqrt(budget) / rsafe)
            gp = np.where(first, 0.0, -np.sqrt(budget) / rsafe**2)
        g = np.where(nonzero, g, 0.0)
        gp = np.where(nonzero, gp, 0.0)
        x_hat = g[:, None, None] * x_temp
        return x_hat, (x_temp, rsafe, g, gp)

    def _scale_backward(self, G_hat: np.ndarray, cache) -> np.ndarray:
        x_temp, rsafe, g, gp = cache
        dot = np.real(np.sum(np.conj(G_hat) * x_temp, axis=(1, 2)))
        coeff = gp * dot / rsafe
        return g[:, None, None] * G_hat + coeff[:, None, None] * x_temp

    @staticmethod
    def _check_finite(y: np.ndarray):
        if not np.all(np.isfinite(y)):
            raise FloatingPointError("non-finite activations in the output head")


def forward(model: EPNN, H: np.ndarray, training: bool = False) -> np.ndarray:
    """Forward pass for a single channel matrix or a batch of them."""
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim == 2:
        return model.forward(H[None], training=training)[0]
    return model.forward(H, training=training)


def infer(model: EPNN, H: np.ndarray) -> np.ndarray:
    """Inference-mode forward (running batch-norm statistics); power-feasible."""
    return forward(model, H, training=False)
