"""Embedder and classifier models on the minimal autodiff core."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, add, conv2d, l2_normalize, matmul, maxpool2d, relu, reshape, sigmoid

# (out_channels, kernel, stride, pool) per block.  Strides 2 on the first
# two blocks keep full-resolution 431x128 inputs affordable on a CPU.
DEFAULT_CONV_BLOCKS = ((16, 3, 2, 2), (32, 3, 2, 2), (64, 3, 1, 2), (128, 3, 1, 2))


@dataclass
class EmbedderConfig:
    conv_blocks: tuple = DEFAULT_CONV_BLOCKS
    embedding_dim: int = 512
    l2_normalize: bool = True
    margin: float = 0.2
    batch_size: int = 64
    learning_rate: float = 1e-4
    max_epochs: int = 60
    patience: int = 10
    seed: int = 0
    input_shape: tuple[int, int] = (431, 128)

    def __post_init__(self):
        if self.embedding_dim < 2:
            raise ValueError("embedding_dim must be >= 2")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        for block in self.conv_blocks:
            if len(block) != 4 or block[1] != 3 or block[3] != 2:
                raise ValueError(f"conv block must be (channels, 3, stride, 2), got {block}")


@dataclass
class ClassifierConfig:
    hidden_dims: tuple[int, int] = (256, 64)
    batch_size: int = 64
    learning_rate: float = 1e-5
    max_epochs: int = 400
    patience: int = 10
    seed: int = 0
    input_dim: int = 512


class Dense:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32):
        scale = np.sqrt(2.0 / n_in)
        self.w = Tensor(rng.standard_normal((n_in, n_out)).astype(dtype) * dtype(scale), requires_grad=True)
        self.b = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.w), self.b)

    def params(self) -> list[Tensor]:
        return [self.w, self.b]


class ConvBlock:
    """3x3 conv (same padding) + relu + 2x2 max pool."""

    def __init__(self, c_in: int, c_out: int, stride: int, rng: np.random.Generator, dtype=np.float32):
        scale = np.sqrt(2.0 / (c_in * 9))
        self.w = Tensor(rng.standard_normal((c_out, c_in, 3, 3)).astype(dtype) * dtype(scale), requires_grad=True)
        self.b = Tensor(np.zeros((1, c_out, 1, 1), dtype=dtype), requires_grad=True)
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return maxpool2d(relu(add(conv2d(x, self.w, self.stride), self.b)))

    def params(self) -> list[Tensor]:
        return [self.w, self.b]


def _block_output_shape(shape: tuple[int, int], stride: int) -> tuple[int, int]:
    h = (shape[0] - 1) // stride + 1  # 'same' conv
    w = (shape[1] - 1) // stride + 1
    return h // 2, w // 2  # pool


class Embedder:
    """Compact CNN mapping a (431, 128) spectrogram to a unit 512-vector."""

    def __init__(self, config: EmbedderConfig, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(config.seed)
        self.blocks: list[ConvBlock] = []
        c_in = 1
        shape = config.input_shape
        for c_out, _, stride, _ in config.conv_blocks:
            self.blocks.append(ConvBlock(c_in, c_out, stride, rng, dtype))
            shape = _block_output_shape(shape, stride)
            c_in = c_out
        self.flat_dim = c_in * shape[0] * shape[1]
        if self.flat_dim == 0:
            raise ValueError(f"input {config.input_shape} collapses to zero cells")
        self.head = Dense(self.flat_dim, config.embedding_dim, rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        """x: (B, 1, H, W) -> (B, embedding_dim), L2-normalized rows."""
        if x.data.shape[2:] != self.config.input_shape:
            raise ValueError(
                f"input is {x.data.shape[2:]}, model expects {self.config.input_shape}"
            )
        out = x
        for block in self.blocks:
            out = block(out)
        out = reshape(out, (out.data.shape[0], self.flat_dim))
        out = self.head(out)
        if self.config.l2_normalize:
            out = l2_normalize(out)
        return out

    def params(self) -> list[Tensor]:
        found: list[Tensor] = []
        for block in self.blocks:
            found.extend(block.params())
        found.extend(self.head.params())
        return found

    def param_names(self) -> list[str]:
        names = []
        for i in range(len(self.blocks)):
            names.extend([f"block{i}.w", f"block{i}.b"])
        names.extend(["head.w", "head.b"])
        return names


class Classifier:
    """512 -> 256 -> 64 -> 1 rectifier MLP with a sigmoid output."""

    def __init__(self, config: ClassifierConfig, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(config.seed)
        h1, h2 = config.hidden_dims
        self.fc1 = Dense(config.input_dim, h1, rng, dtype)
        self.fc2 = Dense(h1, h2, rng, dtype)
        self.out = Dense(h2, 1, rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        """x: (B, input_dim) -> (B,) likelihoods strictly inside (0, 1)."""
        if x.data.shape[-1] != self.config.input_dim:
            raise ValueError(f"input dim {x.data.shape[-1]} != {self.config.input_dim}")
        h = relu(self.fc1(x))
        h = relu(self.fc2(h))
        y = sigmoid(self.out(h))
        return reshape(y, (x.data.shape[0],))

    def params(self) -> list[Tensor]:
        return self.fc1.params() + self.fc2.params() + self.out.params()

    def param_names(self) -> list[str]:
        return ["fc1.w", "fc1.b", "fc2.w", "fc2.b", "out.w", "out.b"]
