"""Network builders for the architecture test bed.

Families: the isotropic encoder-decoder A_<depth>_<skips>_<width>_<kernel>,
ConvDecoder (3x3 kernels) and Deep Decoder (1x1 kernels), each with a
selectable upsampler (nearest / bilinear / l100 / transposed / none).

Unlearnt upsamplers are zero insertion with gain 4 followed by a frozen
separable low-pass filter; the nearest kind reproduces exact pixel
replication.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .regularization import lipschitz_init, lipschitz_normalize
from .rng import SplitMix64, derive_seed

NEAREST_TAPS = (0.5, 0.5)
BILINEAR_TAPS = (0.25, 0.5, 0.25)
# 17-tap Kaiser-window design (beta 10, cutoff 0.1), -100 dB stopband.
L100_TAPS = (
    0.000015, 0.000541, 0.003707, 0.014130, 0.037396, 0.075367, 0.121291,
    0.159962, 0.175182, 0.159962, 0.121291, 0.075367, 0.037396, 0.014130,
    0.003707, 0.000541, 0.000015,
)

FAMILIES = ("encoder-decoder", "conv-decoder", "deep-decoder")
SKIP_POLICIES = ("zero", "half", "full")
UPSAMPLERS = ("nearest", "bilinear", "l100", "transposed", "none")


class ArchError(ValueError):
    """Raised on invalid architecture specifications."""


@dataclass(frozen=True)
class ArchSpec:
    family: str = "encoder-decoder"
    depth: int = 2
    skip_policy: str = "full"
    width: int = 64
    kernel: int = 3
    upsampler: str = "nearest"
    output_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ArchError(f"unknown architecture family {self.family!r}")
        if self.skip_policy not in SKIP_POLICIES:
            raise ArchError(f"unknown skip policy {self.skip_policy!r}")
        if self.upsampler not in UPSAMPLERS:
            raise ArchError(f"unknown upsampler kind {self.upsampler!r}")
        if self.depth < 1 or self.width < 1:
            raise ArchError("depth and width must be >= 1")
        if self.kernel % 2 == 0:
            raise ArchError(f"kernel size must be odd, got {self.kernel}")

    @property
    def name(self) -> str:
        if self.family == "encoder-decoder":
            return f"A_{self.depth}_{self.skip_policy}_{self.width}_{self.kernel}"
        prefix = "cd" if self.family == "conv-decoder" else "dd"
        return f"{prefix}_{self.width}"


def parse_arch_name(name: str, output_size: int = 64, upsampler: str = "nearest",
                    seed: int = 0) -> ArchSpec:
    """Parse labels like ``A_2_full_64_3``, ``cd_256``, ``dd_256``."""
    parts = name.split("_")
    try:
        if parts[0] == "A" and len(parts) == 5:
            return ArchSpec("encoder-decoder", int(parts[1]), parts[2],
                            int(parts[3]), int(parts[4]), upsampler,
                            output_size, seed)
        if parts[0] in ("cd", "dd") and len(parts) == 2:
            family = "conv-decoder" if parts[0] == "cd" else "deep-decoder"
            kernel = 3 if family == "conv-decoder" else 1
            return ArchSpec(family, 7, "zero", int(parts[1]), kernel,
                            upsampler, output_size, seed)
    except (ValueError, ArchError) as exc:
        raise ArchError(f"cannot parse architecture name {name!r}: {exc}") from exc
    raise ArchError(f"cannot parse architecture name {name!r}")


# -- layers ------------------------------------------------------------------

class ConvLayer:
    """Learnable convolution; optionally Lipschitz-normalized each forward."""

    def __init__(self, rng: SplitMix64, name: str, cin: int, cout: int,
                 kernel: int, stride: int = 1, bias: bool = True):
        fan_in = cin * kernel * kernel
        bound = math.sqrt(6.0 / fan_in)
        w = (rng.uniform((cout, cin, kernel, kernel)) * 2.0 - 1.0) * bound
        self.weight = Parameter(w, f"{name}.weight")
        self.bias = Parameter(np.zeros(cout), f"{name}.bias") if bias else None
        self.stride = stride
        self.lip_k: Parameter | None = None
        self.name = name

    def enable_lipschitz(self) -> Parameter:
        self.lip_k = Parameter(lipschitz_init(self.weight.data), f"{self.name}.lip_k")
        return self.lip_k

    def effective_weight(self) -> Tensor:
        if self.lip_k is None:
            return self.weight
        return lipschitz_normalize(self.weight, self.lip_k)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.effective_weight(), self.bias,
                         stride=self.stride, padding="same")

    def params(self):
        out = [self.weight]
        if self.bias is not None:
            out.append(self.bias)
        if self.lip_k is not None:
            out.append(self.lip_k)
        return out


class BatchNormLayer:
    def __init__(self, name: str, channels: int):
        self.scale = Parameter(np.ones(channels), f"{name}.scale")
        self.shift = Parameter(np.zeros(channels), f"{name}.shift")

    def __call__(self, x: Tensor) -> Tensor:
        return ad.batchnorm2d(x, self.scale, self.shift)

    def params(self):
        return [self.scale, self.shift]


class FixedUpsampler:
    """Zero insertion (gain = upx*upy) followed by a frozen low-pass filter."""

    def __init__(self, taps, factor: int = 2):
        self.taps = np.asarray(taps, dtype=np.float64)
        self.factor = factor
        self.gain = float(factor * factor)

    def __call__(self, x: Tensor) -> Tensor:
        up = ad.zero_insert_upsample(x, self.factor, self.factor, self.gain)
        return ad.fixed_lowpass_conv(up, self.taps)

    def params(self):
        return []


class TransposedConvUpsampler:
    """Learnable stride-2 transposed convolution, initialized to the bilinear
    interpolation kernel on the channel diagonal."""

    def __init__(self, rng: SplitMix64, name: str, channels: int, kernel: int,
                 factor: int = 2):
        if kernel % 2 == 0:
            raise ArchError("transposed upsampler kernel must be odd")
        w = np.zeros((channels, channels, kernel, kernel))
        bil = np.outer([0.5, 1.0, 0.5], [0.5, 1.0, 0.5])
        c = kernel // 2
        for i in range(channels):
            w[i, i, c - 1 : c + 2, c - 1 : c + 2] = bil
        self.weight = Parameter(w, f"{name}.weight")
        self.kernel = kernel
        self.factor = factor
        self.lip_k: Parameter | None = None
        self.name = name

    def enable_lipschitz(self) -> Parameter:
        self.lip_k = Parameter(lipschitz_init(self.weight.data), f"{self.name}.lip_k")
        return self.lip_k

    def effective_weight(self) -> Tensor:
        if self.lip_k is None:
            return self.weight
        return lipschitz_normalize(self.weight, self.lip_k)

    def __call__(self, x: Tensor) -> Tensor:
        h, w = x.shape[2] * self.factor, x.shape[3] * self.factor
        return ad.conv_transpose2d(x, self.effective_weight(), stride=self.factor,
                                   padding=(self.kernel - 1) // 2,
                                   output_size=(h, w))

    def params(self):
        return [self.weight] if self.lip_k is None else [self.weight, self.lip_k]


def make_upsampler(kind: str, channels: int = 1, factor: int = 2,
                   kernel: int = 3, rng: SplitMix64 | None = None,
                   name: str = "up"):
    if kind == "nearest":
        return FixedUpsampler(NEAREST_TAPS, factor)
    if kind == "bilinear":
        return FixedUpsampler(BILINEAR_TAPS, factor)
    if kind == "l100":
        return FixedUpsampler(L100_TAPS, factor)
    if kind == "transposed":
        return TransposedConvUpsampler(rng or SplitMix64(0), name, channels,
                                       kernel, factor)
    raise ArchError(f"unknown upsampler kind {kind!r}")


def make_noise_input(channels: int, h: int, w: int, seed: int) -> Tensor:
    """Fixed U(0,1) input tensor, identical across calls with equal args."""
    if channels < 1 or h < 1 or w < 1:
        raise ArchError("noise input extents must be positive")
    rng = SplitMix64(derive_seed(seed, "noise-input"))
    return Tensor(rng.uniform((1, channels, h, w)))


# -- network instance --------------------------------------------------------

@dataclass
class NetworkInstance:
    spec: ArchSpec
    z: Tensor
    layers: list
    conv_layers: list = field(default_factory=list)
    concat_count: int = 0

    def forward(self, z: Tensor | None = None) -> Tensor:
        return self._forward(z if z is not None else self.z)

    def params(self) -> list:
        seen, out = set(), []
        for layer in self.layers:
            for p in layer.params():
                if id(p) not in seen:
                    seen.add(id(p))
                    out.append(p)
        return out

    def conv_weights(self) -> list:
        return [l.weight for l in self.conv_layers]

    def enable_lipschitz(self) -> list:
        return [l.enable_lipschitz() for l in self.conv_layers]

    def set_input(self, z: Tensor):
        self.z = z

    def snapshot(self) -> list:
        return [p.data.copy() for p in self.params()]

    def restore(self, snap: list):
        for p, d in zip(self.params(), snap):
            p.data = d.copy()


def count_params(net: NetworkInstance) -> int:
    """Trainable element count (frozen buffers excluded)."""
    return sum(p.data.size for p in net.params())


def _skip_levels(depth: int, policy: str) -> set:
    """Decoder levels (1 = deepest) that receive an encoder skip."""
    if policy == "zero":
        return set()
    if policy == "full":
        return set(range(1, depth + 1))
    return set(range(1, (depth + 1) // 2 + 1))  # half: the deepest ceil(d/2)


def build_encoder_decoder(spec: ArchSpec) -> NetworkInstance:
    """Hourglass with one stride-2 conv per encoder level and one conv per
    decoder level after 2x upsampling; skips concatenate the encoder level
    inputs into the same-resolution decoder levels."""
    if spec.family != "encoder-decoder":
        raise ArchError(f"wrong family {spec.family!r} for build_encoder_decoder")
    n, d, w, k = spec.output_size, spec.depth, spec.width, spec.kernel
    if n % (2 ** d) != 0:
        raise ArchError(f"output size {n} not divisible by 2^{d}")
    if spec.upsampler == "none":
        raise ArchError("encoder-decoder requires an upsampler to restore the "
                        "output resolution; 'none' is only valid for the "
                        "decoder-only families")
    rng = SplitMix64(derive_seed(spec.seed, "weights"))
    skips = _skip_levels(d, spec.skip_policy)

    enc, layers = [], []
    for i in range(1, d + 1):
        conv = ConvLayer(rng, f"enc{i}.conv", w, w, k, stride=2)
        bn = BatchNormLayer(f"enc{i}.bn", w)
        enc.append((conv, bn))
        layers += [conv, bn]
    dec = []
    for j in range(1, d + 1):
        cin = 2 * w if j in skips else w
        up = (make_upsampler(spec.upsampler, w, kernel=k, rng=rng,
                             name=f"dec{j}.up")
              if spec.upsampler != "none" else None)
        conv = ConvLayer(rng, f"dec{j}.conv", cin, w, k)
        bn = BatchNormLayer(f"dec{j}.bn", w)
        dec.append((up, conv, bn))
        layers += ([up] if up is not None else []) + [conv, bn]
    head = ConvLayer(rng, "head", w, 2, 1)
    layers.append(head)

    conv_layers = [c for c, _ in enc] + [c for _, c, _ in dec] + [head]
    conv_layers += [up for up, _, _ in dec if isinstance(up, TransposedConvUpsampler)]

    z = make_noise_input(w, n, n, spec.seed)
    net = NetworkInstance(spec, z, layers, conv_layers,
                          concat_count=len(skips))

    def forward(zin: Tensor) -> Tensor:
        feats = []  # encoder level inputs, index i-1 at resolution n / 2^(i-1)
        h = zin
        for conv, bn in enc:
            feats.append(h)
            h = ad.relu(bn(conv(h)))
        for j, (up, conv, bn) in enumerate(dec, start=1):
            if up is not None:
                h = up(h)
            if j in skips:
                h = ad.concat_channels(h, feats[d - j])
            h = ad.relu(bn(conv(h)))
        return head(h)

    net._forward = forward
    return net


def _build_decoder_only(spec: ArchSpec) -> NetworkInstance:
    n, d, w = spec.output_size, spec.depth, spec.width
    k = 3 if spec.family == "conv-decoder" else 1
    if spec.upsampler == "none":
        ups_layers = 0
    else:
        # keep the input at least 4x4; upsample in the first layers
        ups_layers = min(d, max(int(math.log2(n)) - 2, 0))
    factor = 2 ** ups_layers
    if n % factor != 0:
        raise ArchError(f"output size {n} not divisible by the cumulative "
                        f"upsampling factor {factor}")
    z_extent = n // factor
    rng = SplitMix64(derive_seed(spec.seed, "weights"))

    stages, layers = [], []
    for i in range(1, d + 1):
        up = (make_upsampler(spec.upsampler, w, kernel=3, rng=rng,
                             name=f"layer{i}.up")
              if spec.upsampler != "none" and i <= ups_layers else None)
        conv = ConvLayer(rng, f"layer{i}.conv", w, w, k)
        bn = BatchNormLayer(f"layer{i}.bn", w)
        stages.append((up, conv, bn))
        layers += ([up] if up is not None else []) + [conv, bn]
    head = ConvLayer(rng, "head", w, 2, 1)
    layers.append(head)

    conv_layers = [c for _, c, _ in stages] + [head]
    conv_layers += [u for u, _, _ in stages if isinstance(u, TransposedConvUpsampler)]

    z = make_noise_input(w, z_extent, z_extent, spec.seed)
    net = NetworkInstance(spec, z, layers, conv_layers)

    def forward(zin: Tensor) -> Tensor:
        h = zin
        for up, conv, bn in stages:
            if up is not None:
                h = up(h)
            h = bn(ad.relu(conv(h)))
        return head(h)

    net._forward = forward
    return net


def build_conv_decoder(spec: ArchSpec) -> NetworkInstance:
    if spec.family != "conv-decoder":
        raise ArchError(f"wrong family {spec.family!r} for build_conv_decoder")
    return _build_decoder_only(spec)


def build_deep_decoder(spec: ArchSpec) -> NetworkInstance:
    if spec.family != "deep-decoder":
        raise ArchError(f"wrong family {spec.family!r} for build_deep_decoder")
    return _build_decoder_only(spec)


def build_network(spec: ArchSpec) -> NetworkInstance:
    if spec.family == "encoder-decoder":
        return build_encoder_decoder(spec)
    if spec.family == "conv-decoder":
        return build_conv_decoder(spec)
    return build_deep_decoder(spec)
