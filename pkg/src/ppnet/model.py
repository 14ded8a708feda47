"""The 8-layer parametric early-vision model.

Stage order (pooling is part of the stage that precedes it):

1. pointwise divisive normalization of the RGB input (Weber-style
   luminance compression),
2. opponent-color matrix, then 2x2 max pooling,
3. pointwise per-channel divisive normalization of the opponent channels,
4. center-surround (difference-of-Gaussians) convolution, 3 -> 3 channels,
   then 2x2 max pooling,
5. divisive normalization with a spatial Gaussian pool per channel,
6. Gabor filter bank, 3 -> 128 channels (64 achromatic, 32 red-green,
   32 yellow-blue; 8 orientations x 2 phases each),
7. divisive normalization pooled over space, frequency and orientation,
8. per-channel linear scaling (the task-adaptation layer).

Calibration.  Generative lengths and frequencies are expressed on the
model's input lattice (default 64 cpd, so a 256x256 image subtends 2
degrees).  Each 2x2 pooling doubles the pixel pitch, so when kernels are
materialized on a pooled grid the parameters are projected by the
accumulated pool factor P (inverse widths and frequencies divided by P).
Tap values are therefore exactly the ones the input-lattice calibration
prescribes, and the highest-frequency filters of the bank remain below
the Nyquist limit of their grid.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, InputError
from .kernels import (ChannelMeta, ChannelMix, DnNeighborhoodParams, DoGParams,
                      GaborParams, dog_kernel, gabor_kernel)
from .layers import (ColorMatrix, DnParams, FeatureNeighborhood,
                     GaussianNeighborhood, PointwiseNeighborhood, color_matrix,
                     divisive_norm)
from .tensor import ImageTensor, KernelTensor, conv2d, max_pool_2x2

__all__ = [
    "LAYER_NAMES", "LAYER_FIELDS", "NOMINAL_ARCH_TOTAL",
    "ModelConfig", "ModelState", "LayerTaps", "ChannelInfo", "ParamCounts",
    "build_bio_model", "channel_layout", "CompiledModel", "forward",
    "count_params", "save_params", "load_params", "states_equal",
    "param_vector", "with_param_vector", "layer_param_count",
]

LAYER_NAMES = ("layer1", "layer2", "layer3", "layer4",
               "layer5", "layer6", "layer7", "layer8")

# Ordered field registry; flattening, counting and serialization all
# follow this order.
LAYER_FIELDS: dict[str, tuple[str, ...]] = {
    "layer1": ("beta", "h"),
    "layer2": ("matrix",),
    "layer3": ("beta", "h"),
    "layer4": ("mix", "k", "log_sigma"),
    "layer5": ("amplitude", "beta", "gamma"),
    "layer6": ("mix",
               "a_freqs", "a_gamma_x", "a_gamma_y", "a_theta_f", "a_theta_env",
               "t_freqs", "t_gamma_x", "t_gamma_y", "t_theta_f", "t_theta_env",
               "d_freqs", "d_gamma_x", "d_gamma_y", "d_theta_f", "d_theta_env"),
    "layer7": ("amplitude", "beta", "gamma_s", "gamma_f_bands", "sigma_o"),
    "layer8": ("b",),
}

_FIELD_SHAPES: dict[str, dict[str, tuple[int, ...]]] = {
    "layer1": {"beta": (1,), "h": (1,)},
    "layer2": {"matrix": (3, 3)},
    "layer3": {"beta": (3,), "h": (3,)},
    "layer4": {"mix": (3, 3), "k": (3, 3), "log_sigma": (3, 3)},
    "layer5": {"amplitude": (3,), "beta": (3,), "gamma": (3,)},
    "layer6": {
        "mix": (3, 128),
        "a_freqs": (4,), "a_gamma_x": (4,), "a_gamma_y": (4,),
        "a_theta_f": (8,), "a_theta_env": (8,),
        "t_freqs": (2,), "t_gamma_x": (2,), "t_gamma_y": (2,),
        "t_theta_f": (8,), "t_theta_env": (8,),
        "d_freqs": (2,), "d_gamma_x": (2,), "d_gamma_y": (2,),
        "d_theta_f": (8,), "d_theta_env": (8,),
    },
    "layer7": {"amplitude": (128,), "beta": (128,), "gamma_s": (128,),
               "gamma_f_bands": (8,), "sigma_o": (8,)},
    "layer8": {"b": (128,)},
}

# Parameter total usually quoted for this architecture.  The V1
# normalization stage is decomposed here into 400 explicit parameters
# (amplitude, bias and spatial width per channel plus per-band frequency
# widths and per-orientation widths), 25 fewer than the 425 that total
# implies for that stage; count_params reports both numbers.
NOMINAL_ARCH_TOTAL = 1062

_FORMAT_NAME = "ppnet-parameters"
_FORMAT_VERSION = 1

_CLASS_SPECS = (("A", "a", 4), ("T", "t", 2), ("D", "d", 2))
N_ORIENTATIONS = 8
PHASES = (0.0, np.pi / 2.0)


@dataclass(frozen=True)
class ModelConfig:
    """Input calibration and kernel supports.

    Supports are tap counts on each stage's own (pooled) grid; they can be
    changed freely without affecting the parameter count.
    """

    sampling_frequency: float = 64.0
    dog_support: int = 61
    dn_gaussian_support: int = 17
    gabor_support: int = 41
    v1_dn_support: int = 21

    def __post_init__(self):
        if not (self.sampling_frequency > 0):
            raise ConfigurationError("sampling_frequency must be > 0 cpd")
        for name in ("dog_support", "dn_gaussian_support",
                     "gabor_support", "v1_dn_support"):
            v = getattr(self, name)
            if v < 1 or v % 2 == 0:
                raise ConfigurationError(f"{name} must be odd and >= 1, got {v}")


@dataclass
class ModelState:
    """All trainable parameters, grouped per layer, plus frozen masks.

    ``params[layer][field]`` is a read-only float64 array with the
    registry shape; ``frozen[layer]`` is a boolean mask over the layer's
    flattened parameters.  Treat instances as immutable; helpers below
    return modified copies.
    """

    config: ModelConfig
    params: dict[str, dict[str, np.ndarray]]
    frozen: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        clean: dict[str, dict[str, np.ndarray]] = {}
        for layer in LAYER_NAMES:
            if layer not in self.params:
                raise ConfigurationError(f"missing parameter group {layer}")
            clean[layer] = {}
            for name in LAYER_FIELDS[layer]:
                if name not in self.params[layer]:
                    raise ConfigurationError(f"missing parameter {layer}.{name}")
                arr = np.array(self.params[layer][name], dtype=np.float64, copy=True)
                want = _FIELD_SHAPES[layer][name]
                if arr.shape != want:
                    raise ConfigurationError(
                        f"{layer}.{name} must have shape {want}, got {arr.shape}")
                if not np.all(np.isfinite(arr)):
                    raise ConfigurationError(f"{layer}.{name} contains non-finite values")
                arr.flags.writeable = False
                clean[layer][name] = arr
        self.params = clean
        frozen: dict[str, np.ndarray] = {}
        for layer in LAYER_NAMES:
            n = layer_param_count(layer)
            mask = np.array(self.frozen.get(layer, np.zeros(n, dtype=bool)),
                            dtype=bool, copy=True)
            if mask.shape != (n,):
                raise ConfigurationError(
                    f"frozen mask for {layer} must have {n} entries, got {mask.shape}")
            mask.flags.writeable = False
            frozen[layer] = mask
        self.frozen = frozen

    def get(self, layer: str, name: str) -> np.ndarray:
        return self.params[layer][name]


@dataclass(frozen=True)
class LayerTaps:
    """The eight intermediate tensors of one forward pass; taps[k] is the
    output of layer k+1 (pooling included), i.e. the exact input to layer
    k+2."""

    taps: tuple[ImageTensor, ...]

    def __post_init__(self):
        if len(self.taps) != 8:
            raise ConfigurationError(f"expected 8 taps, got {len(self.taps)}")

    def __getitem__(self, k: int) -> ImageTensor:
        return self.taps[k]

    @property
    def final(self) -> ImageTensor:
        return self.taps[7]


@dataclass(frozen=True)
class ChannelInfo:
    """Placement of one Gabor channel inside the 128-channel plan."""

    index: int
    chromatic_class: str
    input_channel: int
    freq_index: int
    theta_index: int
    phase_index: int
    band_index: int
    frequency: float
    gamma_x: float
    gamma_y: float
    theta_f: float
    theta_env: float
    phase: float


def layer_param_count(layer: str) -> int:
    return sum(int(np.prod(_FIELD_SHAPES[layer][f])) for f in LAYER_FIELDS[layer])


def _groups_equal(a: ModelState, b: ModelState, layer: str) -> bool:
    return all(np.array_equal(a.params[layer][f], b.params[layer][f])
               for f in LAYER_FIELDS[layer])


def build_bio_model(cfg: ModelConfig | None = None) -> ModelState:
    """The psychophysically calibrated default parameter set."""
    cfg = cfg or ModelConfig()
    third = 1.0 / 3.0
    params = {
        "layer1": {"beta": [0.1], "h": [0.5]},
        "layer2": {"matrix": [[0.24, 0.71, 0.10],
                              [0.18, -0.39, 0.19],
                              [0.09, 0.25, -0.38]]},
        "layer3": {"beta": [1.0, 1.0, 1.0], "h": [third, third, third]},
        "layer4": {
            "mix": np.eye(3),
            # columns are output channels (A, T, D); K and log(sigma) are
            # shared down each column at initialization.
            "k": np.tile([1.1, 5.0, 5.0], (3, 1)),
            "log_sigma": np.tile([-1.9, -1.76, -1.76], (3, 1)),
        },
        "layer5": {"amplitude": [1.0] * 3, "beta": [0.1] * 3, "gamma": [25.0] * 3},
        "layer6": {
            "mix": _bio_gabor_mix(),
            "a_freqs": [2.0, 4.0, 8.0, 16.0],
            "a_gamma_x": [1.87, 3.48, 6.50, 12.13],
            "a_gamma_y": [1.49, 2.79, 5.20, 9.70],
            "a_theta_f": _eight_orientations(),
            "a_theta_env": _eight_orientations(),
            "t_freqs": [3.0, 6.0],
            "t_gamma_x": [2.69, 5.02],
            "t_gamma_y": [2.15, 4.01],
            "t_theta_f": _eight_orientations(),
            "t_theta_env": _eight_orientations(),
            "d_freqs": [3.0, 6.0],
            "d_gamma_x": [2.69, 5.02],
            "d_gamma_y": [2.15, 4.01],
            "d_theta_f": _eight_orientations(),
            "d_theta_env": _eight_orientations(),
        },
        "layer7": {
            "amplitude": np.ones(128),
            "beta": np.full(128, 0.1),
            "gamma_s": np.full(128, 5.0),
            "gamma_f_bands": [1.25, 0.63, 0.31, 0.16, 0.83, 0.42, 0.83, 0.42],
            "sigma_o": np.full(8, 0.11 * np.pi),
        },
        "layer8": {"b": np.ones(128)},
    }
    return ModelState(config=cfg, params=params)


def _eight_orientations() -> np.ndarray:
    return np.arange(N_ORIENTATIONS) * (np.pi / N_ORIENTATIONS)


def _bio_gabor_mix() -> np.ndarray:
    mix = np.zeros((3, 128))
    start = 0
    for _, prefix, nf in _CLASS_SPECS:
        row = {"a": 0, "t": 1, "d": 2}[prefix]
        width = nf * N_ORIENTATIONS * len(PHASES)
        mix[row, start:start + width] = 1.0
        start += width
    return mix


def channel_layout(state: ModelState) -> tuple[ChannelInfo, ...]:
    """Expand the per-class parameter sets into the ordered 128-channel plan.

    Order: chromatic class (A, T, D), then frequency, then orientation,
    then phase (even before odd).  Band indices are global: achromatic
    bands 0-3, red-green 4-5, yellow-blue 6-7.
    """
    infos = []
    idx = 0
    band_offset = 0
    for cls, prefix, nf in _CLASS_SPECS:
        p = state.params["layer6"]
        freqs = p[f"{prefix}_freqs"]
        gx = p[f"{prefix}_gamma_x"]
        gy = p[f"{prefix}_gamma_y"]
        tf = p[f"{prefix}_theta_f"]
        te = p[f"{prefix}_theta_env"]
        if freqs.shape != (nf,):
            raise ConfigurationError(
                f"{prefix}_freqs must have {nf} entries, got {freqs.shape}")
        row = {"a": 0, "t": 1, "d": 2}[prefix]
        for fi in range(nf):
            for oi in range(N_ORIENTATIONS):
                for pi, phase in enumerate(PHASES):
                    infos.append(ChannelInfo(
                        index=idx, chromatic_class=cls, input_channel=row,
                        freq_index=fi, theta_index=oi, phase_index=pi,
                        band_index=band_offset + fi,
                        frequency=float(freqs[fi]),
                        gamma_x=float(gx[fi]), gamma_y=float(gy[fi]),
                        theta_f=float(tf[oi]), theta_env=float(te[oi]),
                        phase=float(phase)))
                    idx += 1
        band_offset += nf
    if idx != 128:
        raise ConfigurationError(f"channel plan must total 128 channels, got {idx}")
    return tuple(infos)


class CompiledModel:
    """A ModelState with all kernels materialized, ready for inference.

    Compilation regenerates every kernel from the current generative
    parameters; the compiled object is immutable and may be shared across
    threads.  Fitting code recompiles after each parameter update; passing
    the previous compilation as ``donor`` reuses any filter bank whose
    generative parameters are bit-identical, which makes probes that only
    touch the normalization or scaling stages cheap.
    """

    def __init__(self, state: ModelState, donor: "CompiledModel | None" = None):
        self.state = state
        cfg = state.config
        fs = cfg.sampling_frequency
        p = state.params
        if donor is not None and donor.state.config != cfg:
            donor = None

        self._dn1 = DnParams(b=np.ones(1), beta=p["layer1"]["beta"],
                             neighborhood=PointwiseNeighborhood(p["layer1"]["h"]))
        self._color = ColorMatrix(p["layer2"]["matrix"])
        self._dn3 = DnParams(b=np.ones(3), beta=p["layer3"]["beta"],
                             neighborhood=PointwiseNeighborhood(p["layer3"]["h"]))

        # Stage 4 runs after one pooling (P = 2), stages 5-7 after two (P = 4).
        if donor is not None and _groups_equal(state, donor.state, "layer4"):
            self.dog_bank = donor.dog_bank
        else:
            self.dog_bank = self._build_dog_kernel(pool_factor=2.0)

        self._dn5 = DnParams(
            b=np.ones(3), beta=p["layer5"]["beta"],
            neighborhood=GaussianNeighborhood(
                amplitude=p["layer5"]["amplitude"],
                gamma=p["layer5"]["gamma"] / 4.0,
                size=cfg.dn_gaussian_support))

        self.channels = channel_layout(state)
        self.gabor_shapes = tuple(
            GaborParams(gamma_x=c.gamma_x / 4.0, gamma_y=c.gamma_y / 4.0,
                        theta_env=c.theta_env, f=c.frequency / 4.0,
                        theta_f=c.theta_f, phase=c.phase)
            for c in self.channels)
        self.gabor_mix = ChannelMix(p["layer6"]["mix"])
        if donor is not None and _groups_equal(state, donor.state, "layer6"):
            self.gabor_bank = donor.gabor_bank
        else:
            self.gabor_bank = self._build_gabor_kernel()

        l7 = p["layer7"]
        meta = tuple(ChannelMeta(c.frequency, c.theta_f, c.chromatic_class)
                     for c in self.channels)
        self.dn7_neighborhood = DnNeighborhoodParams(
            h=l7["amplitude"],
            gamma_s=l7["gamma_s"] / 4.0,
            gamma_f=l7["gamma_f_bands"][[c.band_index for c in self.channels]],
            sigma_o=l7["sigma_o"][[c.theta_index for c in self.channels]],
            channel_meta=meta)
        self._dn7 = DnParams(b=np.ones(128), beta=l7["beta"],
                             neighborhood=FeatureNeighborhood(
                                 self.dn7_neighborhood, cfg.v1_dn_support))
        self._b8 = p["layer8"]["b"]

        self._stages = (self._stage1, self._stage2, self._stage3, self._stage4,
                        self._stage5, self._stage6, self._stage7, self._stage8)

    def _build_dog_kernel(self, pool_factor: float) -> KernelTensor:
        cfg = self.state.config
        p4 = self.state.params["layer4"]
        spacing = pool_factor / cfg.sampling_frequency
        size = cfg.dog_support
        data = np.zeros((size, size, 3, 3))
        for i in range(3):
            for z in range(3):
                shape = DoGParams(
                    gamma=float(np.exp(-p4["log_sigma"][i, z])) / pool_factor,
                    k=float(p4["k"][i, z]))
                one = ChannelMix(np.array([[p4["mix"][i, z]]]))
                data[:, :, i, z] = dog_kernel(shape, one, size, spacing).data[:, :, 0, 0]
        return KernelTensor(data, spacing)

    def _build_gabor_kernel(self) -> KernelTensor:
        cfg = self.state.config
        spacing = 4.0 / cfg.sampling_frequency
        slices = [gabor_kernel(shape, ChannelMix(self.gabor_mix.a[:, z:z + 1]),
                               cfg.gabor_support, spacing).data
                  for z, shape in enumerate(self.gabor_shapes)]
        return KernelTensor(np.concatenate(slices, axis=3), spacing)

    # Individual stages (pooling belongs to the stage before it).

    def _stage1(self, x: ImageTensor) -> ImageTensor:
        return divisive_norm(x, self._dn1)

    def _stage2(self, x: ImageTensor) -> ImageTensor:
        return max_pool_2x2(color_matrix(x, self._color))

    def _stage3(self, x: ImageTensor) -> ImageTensor:
        return divisive_norm(x, self._dn3)

    def _stage4(self, x: ImageTensor) -> ImageTensor:
        return max_pool_2x2(conv2d(x, self.dog_bank, padding="symmetric"))

    def _stage5(self, x: ImageTensor) -> ImageTensor:
        return divisive_norm(x, self._dn5)

    def _stage6(self, x: ImageTensor) -> ImageTensor:
        return conv2d(x, self.gabor_bank, padding="symmetric")

    def _stage7(self, x: ImageTensor) -> ImageTensor:
        return divisive_norm(x, self._dn7)

    def _stage8(self, x: ImageTensor) -> ImageTensor:
        return ImageTensor(x.data * self._b8.reshape(1, 1, -1), x.sampling_frequency)

    def run_from(self, first_stage: int, x: ImageTensor) -> tuple[ImageTensor, list[ImageTensor]]:
        """Apply stages ``first_stage``..8 (1-based) to ``x``."""
        taps = []
        for stage in self._stages[first_stage - 1:]:
            x = stage(x)
            taps.append(x)
        return x, taps

    def run_to(self, last_stage: int, x: ImageTensor) -> ImageTensor:
        """Apply stages 1..``last_stage`` (1-based) to ``x``; 0 is a no-op."""
        for stage in self._stages[:last_stage]:
            x = stage(x)
        return x

    def forward(self, img: ImageTensor) -> tuple[ImageTensor, LayerTaps]:
        """Run the full cascade; returns the final 128-channel tensor and
        every intermediate tap.

        The input must be a 3-channel image; values outside [0, 1] are
        clamped with a warning (so 8-bit decoding artifacts do not abort
        batch runs).
        """
        if img.channels != 3:
            raise InputError(f"model input must have 3 channels, got {img.channels}")
        lo, hi = float(img.data.min()), float(img.data.max())
        if lo < 0.0 or hi > 1.0:
            warnings.warn(
                f"input values span [{lo:.4g}, {hi:.4g}]; clamping to [0, 1]",
                stacklevel=2)
            img = ImageTensor(np.clip(img.data, 0.0, 1.0), img.sampling_frequency)
        final, taps = self.run_from(1, img)
        return final, LayerTaps(tuple(taps))


def forward(state: ModelState, img: ImageTensor) -> tuple[ImageTensor, LayerTaps]:
    """One-shot forward pass; compile the state explicitly to amortize
    kernel generation over many images."""
    return CompiledModel(state).forward(img)


@dataclass(frozen=True)
class ParamCounts:
    per_layer: dict[str, int]
    total: int
    nominal_total: int = NOMINAL_ARCH_TOTAL

    @property
    def layer7_gap(self) -> int:
        return self.nominal_total - self.total


def count_params(state: ModelState) -> ParamCounts:
    """Per-layer trainable parameter counts for the fixed channel plan."""
    per_layer = {layer: layer_param_count(layer) for layer in LAYER_NAMES}
    return ParamCounts(per_layer=per_layer, total=sum(per_layer.values()))


def param_vector(state: ModelState, layers: tuple[str, ...] | list[str]) -> np.ndarray:
    """Flatten the given layers' parameters (registry order) into one vector."""
    parts = [state.params[layer][name].ravel()
             for layer in layers for name in LAYER_FIELDS[layer]]
    return np.concatenate(parts) if parts else np.zeros(0)


def with_param_vector(state: ModelState, layers: tuple[str, ...] | list[str],
                      vector: np.ndarray) -> ModelState:
    """Inverse of param_vector: a new state with those layers replaced."""
    params = {layer: dict(group) for layer, group in state.params.items()}
    pos = 0
    for layer in layers:
        for name in LAYER_FIELDS[layer]:
            shape = _FIELD_SHAPES[layer][name]
            n = int(np.prod(shape))
            params[layer][name] = vector[pos:pos + n].reshape(shape)
            pos += n
    if pos != vector.size:
        raise ConfigurationError(
            f"vector has {vector.size} entries, layers need {pos}")
    return ModelState(config=state.config, params=params, frozen=dict(state.frozen))


def states_equal(a: ModelState, b: ModelState) -> bool:
    """Bit-exact equality of config, parameters and frozen masks."""
    if a.config != b.config:
        return False
    for layer in LAYER_NAMES:
        for name in LAYER_FIELDS[layer]:
            if not np.array_equal(a.params[layer][name], b.params[layer][name]):
                return False
        if not np.array_equal(a.frozen[layer], b.frozen[layer]):
            return False
    return True


_UNITS_DOC = {
    "lengths": "degrees of visual angle on the model input lattice",
    "frequencies": "cycles per degree (cpd) on the model input lattice",
    "angles": "radians",
    "sampling_frequency": "cpd",
}


def save_params(state: ModelState, path) -> None:
    """Write a self-describing structured-text parameter file.

    JSON with a format/version header, a config group, one named group per
    layer, declared units and the frozen masks.  Floats round-trip
    bit-exactly.
    """
    doc = {
        "format": _FORMAT_NAME,
        "version": _FORMAT_VERSION,
        "units": _UNITS_DOC,
        "config": {
            "sampling_frequency": state.config.sampling_frequency,
            "dog_support": state.config.dog_support,
            "dn_gaussian_support": state.config.dn_gaussian_support,
            "gabor_support": state.config.gabor_support,
            "v1_dn_support": state.config.v1_dn_support,
        },
        "layers": {layer: {name: state.params[layer][name].tolist()
                           for name in LAYER_FIELDS[layer]}
                   for layer in LAYER_NAMES},
        "frozen": {layer: state.frozen[layer].tolist() for layer in LAYER_NAMES},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _require(cond: bool, where: str, msg: str):
    if not cond:
        raise DataError(f"{where}: {msg}")


def load_params(path) -> ModelState:
    """Read a parameter file written by save_params.

    Malformed documents raise DataError naming the offending group (or the
    line/column for raw syntax errors).
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise DataError(
                f"{path}: malformed parameter file at line {e.lineno}, "
                f"column {e.colno}: {e.msg}") from e
    _require(isinstance(doc, dict), str(path), "top level must be an object")
    _require(doc.get("format") == _FORMAT_NAME, "format",
             f"expected {_FORMAT_NAME!r}, got {doc.get('format')!r}")
    _require(doc.get("version") == _FORMAT_VERSION, "version",
             f"expected {_FORMAT_VERSION}, got {doc.get('version')!r}")
    cfg_doc = doc.get("config")
    _require(isinstance(cfg_doc, dict), "config", "missing or not an object")
    try:
        cfg = ModelConfig(
            sampling_frequency=float(cfg_doc["sampling_frequency"]),
            dog_support=int(cfg_doc["dog_support"]),
            dn_gaussian_support=int(cfg_doc["dn_gaussian_support"]),
            gabor_support=int(cfg_doc["gabor_support"]),
            v1_dn_support=int(cfg_doc["v1_dn_support"]))
    except (KeyError, TypeError, ValueError, ConfigurationError) as e:
        raise DataError(f"config: {e}") from e
    layers_doc = doc.get("layers")
    _require(isinstance(layers_doc, dict), "layers", "missing or not an object")
    params: dict[str, dict[str, np.ndarray]] = {}
    for layer in LAYER_NAMES:
        group = layers_doc.get(layer)
        _require(isinstance(group, dict), layer, "missing parameter group")
        params[layer] = {}
        for name in LAYER_FIELDS[layer]:
            _require(name in group, f"{layer}.{name}", "missing parameter")
            try:
                arr = np.array(group[name], dtype=np.float64)
            except (TypeError, ValueError) as e:
                raise DataError(f"{layer}.{name}: not numeric ({e})") from e
            want = _FIELD_SHAPES[layer][name]
            _require(arr.shape == want, f"{layer}.{name}",
                     f"expected shape {want}, got {arr.shape}")
            params[layer][name] = arr
    frozen_doc = doc.get("frozen", {})
    _require(isinstance(frozen_doc, dict), "frozen", "must be an object")
    frozen = {}
    for layer in LAYER_NAMES:
        if layer in frozen_doc:
            mask = np.array(frozen_doc[layer], dtype=bool)
            _require(mask.shape == (layer_param_count(layer),), f"frozen.{layer}",
                     f"expected {layer_param_count(layer)} flags, got {mask.shape}")
            frozen[layer] = mask
    try:
        return ModelState(config=cfg, params=params, frozen=frozen)
    except ConfigurationError as e:
        raise DataError(str(e)) from e
