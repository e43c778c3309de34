"""Network definition: reference/quality embeddings and the score predictor.

Three components:

* DTE (degradation-tolerant embedding) — embeds the degraded reference image
  into a learned reference space. A second instance with identical
  architecture (the teacher) embeds pristine images during training.
* QSE (quality-sensitive embedding) — embeds the restored image.
* CSP (convolutional score predictor) — maps the feature difference
  DTE(reference) - QSE(restored) to a scalar quality score.

The quality embedding and score predictor are shared between the student
and teacher paths by construction: there is exactly one storage location
for each, so the two paths cannot diverge on those parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import torch
from torch import Tensor, nn

from driqa.errors import UsageError

STRIDE = 4  # stem stride 2 x pool stride 2

_ACTIVATIONS = {"relu": nn.ReLU, "elu": nn.ELU, "silu": nn.SiLU}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    The default values are the paper-faithful preset (288 px, width 64,
    3 embedding blocks, 4 predictor blocks, 3 fully connected layers);
    ``desk_model_config`` gives a small CPU-friendly variant.
    """

    input_resolution: int = 288
    channel_width: int = 64
    stem_kernel: int = 7
    stem_stride: int = 2
    n_embed_blocks: int = 3
    n_csp_blocks: int = 4
    fc_hidden_sizes: tuple[int, ...] = (128, 64)
    nonlinearity: str = "relu"
    shared_embeddings: bool = False
    csp_input_downsample: int = 1
    norm_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    norm_std: tuple[float, float, float] = (0.5, 0.5, 0.5)

    @property
    def n_fc_layers(self) -> int:
        return len(self.fc_hidden_sizes) + 1

    def __post_init__(self):
        if self.input_resolution % STRIDE != 0:
            raise UsageError(f"input_resolution {self.input_resolution} not divisible by {STRIDE}")
        if self.stem_stride != 2:
            raise UsageError("stem_stride must be 2 (overall stride is fixed at 4)")
        if self.stem_kernel % 2 != 1:
            raise UsageError("stem_kernel must be odd")
        if self.csp_input_downsample not in (1, 2, 4):
            raise UsageError(f"csp_input_downsample must be 1, 2 or 4, got {self.csp_input_downsample}")
        if self.nonlinearity not in _ACTIVATIONS:
            raise UsageError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.channel_width < 1 or self.n_embed_blocks < 1 or self.n_csp_blocks < 1:
            raise UsageError("channel_width and block counts must be positive")
        if any(s <= 0 for s in (self.norm_std or ())):
            raise UsageError("norm_std entries must be positive")


def desk_model_config(**overrides) -> ModelConfig:
    """Small configuration for CPU-scale experiments (96 px, width 16)."""
    base = dict(input_resolution=96, channel_width=16, fc_hidden_sizes=(32, 16))
    base.update(overrides)
    return ModelConfig(**base)


def _activation(config: ModelConfig) -> nn.Module:
    return _ACTIVATIONS[config.nonlinearity]()


class ResidualBlock(nn.Module):
    """Pre-activation residual block: x + conv(act(conv(act(x))))."""

    def __init__(self, channels: int, config: ModelConfig):
        super().__init__()
        self.act1 = _activation(config)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.act2 = _activation(config)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return x + self.conv2(self.act2(self.conv1(self.act1(x))))


class FeatureEmbedding(nn.Module):
    """Stem convolution + residual blocks; maps (N, 3, H, W) to (N, C, H/4, W/4)."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        w = config.channel_width
        self.stem = nn.Conv2d(3, w, config.stem_kernel, stride=config.stem_stride,
                              padding=config.stem_kernel // 2)
        self.pool = nn.MaxPool2d(2)
        self.blocks = nn.Sequential(*[ResidualBlock(w, config) for _ in range(config.n_embed_blocks)])

    def forward(self, x: Tensor) -> Tensor:
        return self.blocks(self.pool(self.stem(x)))


class ScorePredictor(nn.Module):
    """Residual blocks over the feature difference, pooled, then FC layers to one scalar.

    The spatial structure of the difference is kept through the residual
    blocks; global average pooling happens only before the fully connected
    head. The output has no activation (scores are unconstrained reals).
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        w = config.channel_width
        self.downsample = (
            nn.AvgPool2d(config.csp_input_downsample)
            if config.csp_input_downsample > 1
            else nn.Identity()
        )
        self.blocks = nn.Sequential(*[ResidualBlock(w, config) for _ in range(config.n_csp_blocks)])
        fc: list[nn.Module] = []
        sizes = (w, *config.fc_hidden_sizes, 1)
        for i in range(len(sizes) - 1):
            if i > 0:
                fc.append(_activation(config))
            fc.append(nn.Linear(sizes[i], sizes[i + 1]))
        self.fc = nn.Sequential(*fc)

    def forward(self, diff: Tensor) -> Tensor:
        single = diff.dim() == 3
        if single:
            diff = diff.unsqueeze(0)
        if diff.dim() != 4:
            raise UsageError(f"expected (C, h, w) or (N, C, h, w) feature, got {tuple(diff.shape)}")
        h = self.blocks(self.downsample(diff))
        h = h.mean(dim=(2, 3))
        out = self.fc(h).squeeze(-1)
        return out.squeeze(0) if single else out


class CKDN(nn.Module):
    """Conditional knowledge distillation network for DR-IQA.

    Parameter groups:

    * ``theta_e1``  — student reference embedding (DTE), fed degraded images;
    * ``theta_e1h`` — teacher reference embedding, same architecture, fed
      pristine images (training only — never touched by :meth:`score`);
    * ``theta_e2``  — quality embedding (QSE), shared by both paths;
    * ``theta_s``   — score predictor (CSP), shared by both paths.

    With ``shared_embeddings`` the student reference embedding is the quality
    embedding itself (same storage).
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.qse = FeatureEmbedding(config)
        self.dte = self.qse if config.shared_embeddings else FeatureEmbedding(config)
        self.dte_teacher = FeatureEmbedding(config)
        self.csp = ScorePredictor(config)
        mean = torch.tensor(config.norm_mean).view(3, 1, 1)
        std = torch.tensor(config.norm_std).view(3, 1, 1)
        self.register_buffer("norm_mean", mean)
        self.register_buffer("norm_std", std)

    # -- input handling -----------------------------------------------------

    def _prepare(self, image: Tensor, name: str) -> tuple[Tensor, bool]:
        if image.dim() == 3:
            image = image.unsqueeze(0)
            single = True
        elif image.dim() == 4:
            single = False
        else:
            raise UsageError(f"{name}: expected (3, H, W) or (N, 3, H, W), got {tuple(image.shape)}")
        n, c, h, w = image.shape
        if c != 3:
            raise UsageError(f"{name}: expected 3 channels, got {c}")
        if h % STRIDE != 0 or w % STRIDE != 0:
            raise UsageError(f"{name}: resolution {h}x{w} not divisible by stride {STRIDE}")
        return image, single

    def standardize(self, image: Tensor) -> Tensor:
        mean = self.norm_mean.to(image.dtype)
        std = self.norm_std.to(image.dtype)
        return (image - mean) / std

    # -- forward paths ------------------------------------------------------

    def reference_features(self, degraded: Tensor) -> Tensor:
        """Student reference embedding of the degraded image."""
        x, single = self._prepare(degraded, "degraded")
        f = self.dte(self.standardize(x))
        return f.squeeze(0) if single else f

    def teacher_reference_features(self, pristine: Tensor) -> Tensor:
        """Teacher reference embedding of the pristine image (training only)."""
        x, single = self._prepare(pristine, "pristine")
        f = self.dte_teacher(self.standardize(x))
        return f.squeeze(0) if single else f

    def quality_features(self, restored: Tensor) -> Tensor:
        """Quality embedding of the restored image."""
        x, single = self._prepare(restored, "restored")
        f = self.qse(self.standardize(x))
        return f.squeeze(0) if single else f

    def score(self, degraded: Tensor, restored: Tensor) -> Tensor:
        """Quality score of ``restored`` given the degraded reference.

        This is the only inference path; the teacher embedding is never read.
        """
        if degraded.shape[-2:] != restored.shape[-2:]:
            raise UsageError(
                f"resolution mismatch: reference {tuple(degraded.shape[-2:])} "
                f"vs restored {tuple(restored.shape[-2:])}"
            )
        return self.csp(self.reference_features(degraded) - self.quality_features(restored))

    def teacher_score(self, pristine: Tensor, restored: Tensor) -> Tensor:
        """Full-reference score using the teacher embedding and the shared CSP/QSE."""
        if pristine.shape[-2:] != restored.shape[-2:]:
            raise UsageError(
                f"resolution mismatch: reference {tuple(pristine.shape[-2:])} "
                f"vs restored {tuple(restored.shape[-2:])}"
            )
        return self.csp(self.teacher_reference_features(pristine) - self.quality_features(restored))

    def nr_score(self, restored: Tensor) -> Tensor:
        """No-reference probe: the restored image fed to both branches."""
        return self.score(restored, restored)

    # -- parameter groups ---------------------------------------------------

    def parameter_modules(self) -> dict[str, nn.Module]:
        """The module behind each named group. In shared mode theta_e1 and
        theta_e2 point at the same object."""
        return {
            "theta_e1": self.dte,
            "theta_e1h": self.dte_teacher,
            "theta_e2": self.qse,
            "theta_s": self.csp,
        }

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        return {name: list(m.parameters()) for name, m in self.parameter_modules().items()}

    def trainable_parameters(self, groups: Iterator[str] | None = None) -> list[nn.Parameter]:
        """Deduplicated parameters of the requested groups (all groups if None)."""
        wanted = self.parameter_groups()
        names = list(wanted) if groups is None else list(groups)
        seen: dict[int, nn.Parameter] = {}
        for name in names:
            for p in wanted[name]:
                seen.setdefault(id(p), p)
        return list(seen.values())


def _he_uniform_init(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_uniform_(m.weight, nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def build_model(config: ModelConfig, seed: int = 0, dtype: torch.dtype = torch.float32) -> CKDN:
    """Construct a CKDN with seeded He-uniform init (biases zero)."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = CKDN(config)
        _he_uniform_init(model)
    return model.to(dtype)
