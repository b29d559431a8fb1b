"""Architecture strings and generator/discriminator construction.

An architecture string such as ``"D_ehhh G_eehe cd=1e-5 cg=1e-3"`` tags each
of the four linear layers of the discriminator (D) and generator (G) as
euclidean (``e``) or hyperbolic (``h``), input to output. Boundary maps are
not part of the notation; the builder inserts an exp map in front of every
maximal run of ``h`` layers and a log map after it. A discriminator whose
last layer is hyperbolic keeps its 1-d output on the ball (no final log map).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .autodiff import NonFiniteError, Tensor, as_tensor
from .layers import (
    BALL,
    EUCLIDEAN,
    Dropout,
    EuclideanLinear,
    ExpMapBoundary,
    HyperbolicLeakyReLU,
    HyperbolicLinear,
    Layer,
    LeakyReLU,
    LogMapBoundary,
    Tanh,
)
from .poincare import Curvature
from .rng import Rng

DISCRIMINATOR_WIDTHS = (1024, 512, 256, 1)
GENERATOR_WIDTHS = (256, 512, 1024, 784)
IMAGE_DIM = 784
NOISE_DIM = 128
N_CLASSES = 10
LEAKY_SLOPE = 0.2
DROPOUT_RATE = 0.1


class Variant(str, Enum):
    GAN = "gan"
    CGAN = "cgan"
    WGAN_GP = "wgan_gp"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"wgan": "wgan_gp", "wgangp": "wgan_gp", "hgan": "gan", "hcgan": "cgan", "hwgan": "wgan_gp"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown GAN variant {value!r}") from None


@dataclass(frozen=True)
class ArchConfig:
    d_tags: tuple[str, ...]
    g_tags: tuple[str, ...]
    c_d: Curvature | None = None
    c_g: Curvature | None = None
    variant: Variant = field(default=Variant.GAN)

    def __post_init__(self):
        for name in ("d_tags", "g_tags"):
            tags = tuple(getattr(self, name))
            if not tags or any(t not in ("e", "h") for t in tags):
                raise ValueError(f"{name} must be a non-empty sequence of 'e'/'h', got {tags!r}")
            object.__setattr__(self, name, tags)
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        for tags, c, label in ((self.d_tags, self.c_d, "c_d"), (self.g_tags, self.c_g, "c_g")):
            if ("h" in tags) != (c is not None):
                if c is None:
                    raise ValueError(f"missing curvature {label} for a network with hyperbolic layers")
                raise ValueError(f"curvature {label} given for an all-euclidean network")

    @property
    def d_hyperbolic(self) -> bool:
        return "h" in self.d_tags

    @property
    def g_hyperbolic(self) -> bool:
        return "h" in self.g_tags

    @property
    def is_euclidean(self) -> bool:
        return not (self.d_hyperbolic or self.g_hyperbolic)

    @property
    def arch(self) -> str:
        """Tag part only, e.g. ``"D_ehhh G_eehe"``."""
        return f"D_{''.join(self.d_tags)} G_{''.join(self.g_tags)}"

    def with_curvature(self, c: float) -> "ArchConfig":
        """Same tags, with ``c`` assigned to whichever networks are hyperbolic."""
        return ArchConfig(
            self.d_tags,
            self.g_tags,
            Curvature(c) if self.d_hyperbolic else None,
            Curvature(c) if self.g_hyperbolic else None,
            self.variant,
        )


_CONFIG_RE = re.compile(
    r"^\s*D_(?P<d>[eh]+)\s+G_(?P<g>[eh]+)"
    r"(?P<rest>(?:\s+c[dg]\s*=\s*[^\s]+)*)\s*$",
    re.IGNORECASE,
)
_CURV_RE = re.compile(r"(c[dg])\s*=\s*([^\s]+)", re.IGNORECASE)


def parse_config(text: str, variant="gan", layers: int | None = 4) -> ArchConfig:
    """Parse ``"D_xxxx G_xxxx [cd=<float>] [cg=<float>]"``.

    ``layers`` fixes the tag length (4 for the standard MNIST networks); pass
    ``None`` to accept any length.
    """
    m = _CONFIG_RE.match(text)
    if m is None:
        raise ValueError(f"malformed architecture string: {text!r}")
    d_tags, g_tags = m["d"].lower(), m["g"].lower()
    if layers is not None and (len(d_tags) != layers or len(g_tags) != layers):
        raise ValueError(f"expected {layers} tags per network in {text!r}")
    curv: dict[str, Curvature] = {}
    for key, value in _CURV_RE.findall(m["rest"]):
        key = key.lower()
        if key in curv:
            raise ValueError(f"duplicate {key} in {text!r}")
        try:
            curv[key] = Curvature(float(value))
        except ValueError as exc:
            raise ValueError(f"bad curvature {key}={value!r}: {exc}") from None
    return ArchConfig(tuple(d_tags), tuple(g_tags), curv.get("cd"), curv.get("cg"), variant)


def render_config(cfg: ArchConfig) -> str:
    parts = [cfg.arch]
    if cfg.c_d is not None:
        parts.append(f"cd={cfg.c_d.c!r}")
    if cfg.c_g is not None:
        parts.append(f"cg={cfg.c_g.c!r}")
    return " ".join(parts)


class Network:
    """An ordered stack of layers with a flat parameter registry."""

    def __init__(self, layers: list[Layer], role: str = ""):
        self.layers = list(layers)
        self.role = role

    def forward(self, x, training: bool = False, rng: Rng | None = None) -> Tensor:
        out = as_tensor(x)
        first = next((l for l in self.layers if hasattr(l, "in_features")), None)
        if first is not None and out.shape[-1] != first.in_features:
            raise ValueError(f"input width {out.shape[-1]} does not match network input {first.in_features}")
        for i, layer in enumerate(self.layers):
            try:
                out = layer(out, training=training, rng=rng)
            except NonFiniteError as exc:
                raise NonFiniteError(f"layer {i} ({layer!r}): {exc}") from exc
        return out

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.parameters().items():
                params[f"{i}.{name}"] = p
        return params

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(state) != set(params):
            raise KeyError(f"parameter names differ: {sorted(set(state) ^ set(params))}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {p.shape}")
            p.data = arr.copy()

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def describe(self) -> list[str]:
        return [repr(l) for l in self.layers]

    def __repr__(self):
        return f"Network({self.role}: {', '.join(self.describe())})"


def _build(tags, in_features, widths, c, rng, role) -> Network:
    tags, widths = tuple(tags), tuple(int(w) for w in widths)
    if len(tags) != len(widths):
        raise ValueError(f"{len(tags)} layer tags but {len(widths)} widths")
    if in_features < 1 or any(w < 1 for w in widths):
        raise ValueError("layer widths must be positive")
    if role == "discriminator" and widths[-1] != 1:
        raise ValueError("discriminator must end in a single output unit")
    layers: list[Layer] = []
    space = EUCLIDEAN
    fan_in = in_features
    for i, (tag, width) in enumerate(zip(tags, widths)):
        last = i == len(tags) - 1
        if tag == "h":
            if space == EUCLIDEAN:
                layers.append(ExpMapBoundary(c))
                space = BALL
            layers.append(HyperbolicLinear(fan_in, width, c, rng))
        else:
            layers.append(EuclideanLinear(fan_in, width, rng))
        fan_in = width
        if last:
            break
        if tag == "h":
            layers.append(HyperbolicLeakyReLU(LEAKY_SLOPE, c))
            if tags[i + 1] == "e":
                layers.append(LogMapBoundary(c))
                space = EUCLIDEAN
        else:
            layers.append(LeakyReLU(LEAKY_SLOPE))
            if role == "discriminator":
                layers.append(Dropout(DROPOUT_RATE))
    if role == "generator":
        if space == BALL:
            layers.append(LogMapBoundary(c))
        layers.append(Tanh())
    net = Network(layers, role)
    check_space_consistency(net)
    return net


def build_generator(cfg: ArchConfig, widths=GENERATOR_WIDTHS, noise_dim: int = NOISE_DIM, rng: Rng | None = None) -> Network:
    in_features = noise_dim + (N_CLASSES if cfg.variant is Variant.CGAN else 0)
    return _build(cfg.g_tags, in_features, widths, cfg.c_g, rng or Rng(0), "generator")


def build_discriminator(cfg: ArchConfig, widths=DISCRIMINATOR_WIDTHS, image_dim: int = IMAGE_DIM, rng: Rng | None = None) -> Network:
    in_features = image_dim + (N_CLASSES if cfg.variant is Variant.CGAN else 0)
    return _build(cfg.d_tags, in_features, widths, cfg.c_d, rng or Rng(0), "discriminator")


def check_space_consistency(net: Network) -> None:
    """Raise ``ValueError`` unless every layer receives the space it expects.

    Inputs and generator outputs are euclidean; a discriminator may end on
    the ball only when its final layer is hyperbolic linear.
    """
    space = EUCLIDEAN
    for i, layer in enumerate(net.layers):
        if layer.in_space != space:
            raise ValueError(f"layer {i} ({layer!r}) expects {layer.in_space} input, got {space}")
        space = layer.out_space
    if space == BALL and not (net.role == "discriminator" and isinstance(net.layers[-1], HyperbolicLinear)):
        raise ValueError(f"{net.role or 'network'} ends on the ball without a log map")
