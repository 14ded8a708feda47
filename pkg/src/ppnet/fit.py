"""Parameter fitting against human opinion scores.

Three entry points:

* fit_final_scale — optimizes only the last per-channel scaling B with an
  exact analytic gradient.  Forward passes run once per image; every step
  then works on cached per-channel errors, so 200 steps cost seconds.
* fit_freeze_ladder — optimizes any small unfrozen suffix of the layer
  stack by central finite differences, regenerating kernels from the
  current generative parameters at every probe.  Guarded to <= 700 free
  parameters; images can be center-cropped and the evaluation restricted
  to a fixed mini-batch for desk-scale runs.
* random_init_sweep — evaluates correlation for randomly perturbed
  initializations without any training.

The loss everywhere is the signed Pearson correlation between distances
and MOS, minimized toward -1 (distances anti-correlate with opinion); a
sign-flipped metric is penalized, not rewarded.  Fits are deterministic
given (seed, settings).
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import Manifest, load_image_as_tensor
from .errors import InputError, NumericalError, ParameterError
from .model import (LAYER_NAMES, CompiledModel, ModelConfig, ModelState,
                    build_bio_model, layer_param_count, param_vector,
                    with_param_vector)
from .tensor import ImageTensor

__all__ = ["FreezeSpec", "FitReport", "SweepReport", "fit_final_scale",
           "fit_freeze_ladder", "random_init_sweep", "project_constraints"]

_MAX_HALVINGS = 20
_MAX_FD_PARAMS = 700
_K_FLOOR = 1.0 + 2e-6
_GAMMA_FLOOR = 1e-6
_BETA_FLOOR = 1e-6


@dataclass(frozen=True)
class FreezeSpec:
    """Which layers stay at their current values during a ladder fit."""

    frozen_layers: tuple[bool, bool, bool, bool, bool, bool, bool, bool]

    @classmethod
    def prefix(cls, depth: int) -> "FreezeSpec":
        """Freeze layers 1..depth (0 freezes nothing, 8 everything)."""
        if not 0 <= depth <= 8:
            raise InputError(f"freeze depth must be in 0..8, got {depth}")
        return cls(tuple(i < depth for i in range(8)))

    @property
    def trainable_layers(self) -> tuple[str, ...]:
        return tuple(name for name, frozen in zip(LAYER_NAMES, self.frozen_layers)
                     if not frozen)

    @property
    def frozen_prefix(self) -> int:
        """Number of leading frozen layers (cacheable forward prefix)."""
        depth = 0
        for frozen in self.frozen_layers:
            if not frozen:
                break
            depth += 1
        return depth


@dataclass(frozen=True)
class FitReport:
    iterations: int
    initial_pearson: float
    final_pearson: float
    parameter_deltas: dict[str, float]
    wall_clock: float
    seed: int
    excluded_records: int = 0

    def summary(self) -> str:
        lines = [f"iterations: {self.iterations}",
                 f"initial pearson: {self.initial_pearson:.6f}",
                 f"final pearson: {self.final_pearson:.6f}",
                 f"wall clock (s): {self.wall_clock:.2f}",
                 f"seed: {self.seed}"]
        for layer, delta in self.parameter_deltas.items():
            lines.append(f"delta[{layer}]: {delta:.6g}")
        if self.excluded_records:
            lines.append(f"excluded records: {self.excluded_records}")
        return "\n".join(lines) + "\n"


def _field_bounds(layer: str, name: str, fs: float) -> tuple[float, float]:
    """Valid interval for one parameter field."""
    if name == "beta":
        return _BETA_FLOOR, np.inf
    if layer == "layer4" and name == "k":
        return _K_FLOOR, np.inf
    if name.endswith("freqs"):
        # Keep carriers strictly inside the representable band of the
        # twice-pooled grid.
        return _GAMMA_FLOOR, 0.499 * fs
    if "gamma" in name or name == "sigma_o":
        return _GAMMA_FLOOR, np.inf
    return -np.inf, np.inf


def project_constraints(state: ModelState) -> ModelState:
    """Clip parameters back into their valid domains.

    Floors: DN biases beta > 1e-6, inverse widths gamma > 1e-6, DoG width
    ratios K > 1 + 2e-6.  Carrier frequencies are kept strictly inside the
    representable band of the twice-pooled grid (< 0.499 x input sampling
    frequency).
    """
    fs = state.config.sampling_frequency
    p = {layer: dict(group) for layer, group in state.params.items()}
    for layer, group in p.items():
        for name, value in group.items():
            lo, hi = _field_bounds(layer, name, fs)
            if np.isfinite(lo) or np.isfinite(hi):
                group[name] = np.clip(value, lo, hi)
    return ModelState(config=state.config, params=p, frozen=dict(state.frozen))


def _vector_bounds(state: ModelState, layers: tuple[str, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Per-entry bounds of the flattened parameter vector of ``layers``."""
    from .model import LAYER_FIELDS
    fs = state.config.sampling_frequency
    lows, highs = [], []
    for layer in layers:
        for name in LAYER_FIELDS[layer]:
            n = state.params[layer][name].size
            lo, hi = _field_bounds(layer, name, fs)
            lows.append(np.full(n, lo))
            highs.append(np.full(n, hi))
    if not lows:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(lows), np.concatenate(highs)


def _center_crop(img: ImageTensor, size: int) -> ImageTensor:
    if img.height <= size and img.width <= size:
        return img
    top = max(0, (img.height - size) // 2)
    left = max(0, (img.width - size) // 2)
    return ImageTensor(
        img.data[top:top + min(size, img.height), left:left + min(size, img.width), :],
        img.sampling_frequency)


def _load_pairs(manifest: Manifest, sampling_frequency: float,
                crop: int | None) -> list[tuple[ImageTensor, ImageTensor]]:
    cache: dict[str, ImageTensor] = {}

    def load(path: str) -> ImageTensor:
        if path not in cache:
            img = load_image_as_tensor(path, sampling_frequency)
            cache[path] = _center_crop(img, crop) if crop else img
        return cache[path]

    return [(load(r.ref_path), load(r.dist_path)) for r in manifest.records]


def _final_tap(compiled: CompiledModel, img: ImageTensor,
               cache: dict[int, np.ndarray]) -> np.ndarray:
    key = id(img)
    if key not in cache:
        final, taps = compiled.forward(img)
        cache[key] = taps[6].data
    return cache[key]


def _channel_error_table(compiled: CompiledModel,
                         pairs: list[tuple[ImageTensor, ImageTensor]],
                         threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """(n_records, channels) error matrix and per-record element counts,
    sharing forward passes across repeated images."""
    tap_cache: dict[int, np.ndarray] = {}
    unique: dict[int, ImageTensor] = {}
    for ref, dist in pairs:
        unique.setdefault(id(ref), ref)
        unique.setdefault(id(dist), dist)
    images = list(unique.values())
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda im: compiled.forward(im)[1][6].data, images))
        for im, tap in zip(images, results):
            tap_cache[id(im)] = tap
    e_rows = []
    n_rows = []
    for ref, dist in pairs:
        diff = (_final_tap(compiled, ref, tap_cache)
                - _final_tap(compiled, dist, tap_cache))
        e_rows.append(np.sum(diff * diff, axis=(0, 1)))
        n_rows.append(diff.size)
    return np.array(e_rows), np.array(n_rows, dtype=np.float64)


def _pearson_gradient(d: np.ndarray, mos: np.ndarray) -> tuple[float, np.ndarray]:
    """Pearson correlation and its gradient with respect to d."""
    if d.size < 2:
        raise NumericalError("correlation undefined: need at least 2 records")
    dd = d - d.mean()
    md = mos - mos.mean()
    sdd = float(np.dot(dd, dd))
    smm = float(np.dot(md, md))
    if sdd == 0.0 or smm == 0.0:
        raise NumericalError("correlation undefined: zero variance input")
    sdm = float(np.dot(dd, md))
    denom = np.sqrt(sdd * smm)
    rho = sdm / denom
    grad = (md - (sdm / sdd) * dd) / denom
    return rho, grad


def fit_final_scale(state: ModelState, manifest: Manifest, steps: int = 200,
                    learning_rate: float = 1.0, seed: int = 0,
                    sampling_frequency: float = 64.0,
                    threads: int = 1) -> tuple[ModelState, FitReport]:
    """Gradient descent on the final per-channel scaling, exact gradient.

    All layers but the last are implicitly frozen; forward passes run once
    and every step reuses the cached per-channel errors.  Backtracking
    line search (up to 20 halvings) keeps the loss non-increasing.  The
    returned scale vector is normalized to max |B_c| = 1, which leaves the
    correlation unchanged.
    """
    t0 = time.perf_counter()
    compiled = CompiledModel(state)
    pairs = _load_pairs(manifest, sampling_frequency, crop=None)
    e_table, n_table = _channel_error_table(compiled, pairs, threads=threads)
    mos = np.array([r.mos for r in manifest.records])

    alive = e_table.sum(axis=1) > 0.0
    excluded = int(np.count_nonzero(~alive))
    if excluded:
        warnings.warn(
            f"excluding {excluded} record(s) with identical responses "
            f"(zero distance for every scaling)", stacklevel=2)
        e_table, n_table, mos = e_table[alive], n_table[alive], mos[alive]

    b = state.params["layer8"]["b"].copy()

    def loss_and_grad(bvec: np.ndarray) -> tuple[float, np.ndarray]:
        d = np.sqrt(e_table @ (bvec * bvec) / n_table)
        rho, drho = _pearson_gradient(d, mos)
        safe_d = np.where(d > 0.0, d, np.inf)
        grad = ((drho / (n_table * safe_d)) @ e_table) * bvec
        return rho, grad

    def loss_only(bvec: np.ndarray) -> float:
        d = np.sqrt(e_table @ (bvec * bvec) / n_table)
        return _pearson_gradient(d, mos)[0]

    rho, grad = loss_and_grad(b)
    initial_rho = rho
    lr = learning_rate
    iterations = 0
    for _ in range(steps):
        accepted = False
        for _ in range(_MAX_HALVINGS + 1):
            candidate = b - lr * grad
            cand_rho = loss_only(candidate)
            if cand_rho < rho:
                b, rho = candidate, cand_rho
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break
        iterations += 1
        lr = min(lr * 2.0, learning_rate)
        rho, grad = loss_and_grad(b)

    scale = np.max(np.abs(b))
    if scale > 0:
        b = b / scale
    fitted = with_param_vector(state, ("layer8",), b)
    report = FitReport(
        iterations=iterations, initial_pearson=initial_rho, final_pearson=rho,
        parameter_deltas={"layer8": float(np.linalg.norm(
            b - state.params["layer8"]["b"]))},
        wall_clock=time.perf_counter() - t0, seed=seed,
        excluded_records=excluded)
    return fitted, report


def fit_freeze_ladder(state: ModelState, spec: FreezeSpec, manifest: Manifest,
                      steps: int = 20, fd_step: float = 1e-4,
                      learning_rate: float = 0.5, seed: int = 0,
                      sampling_frequency: float = 64.0,
                      crop: int | None = None,
                      batch: int | None = None,
                      threads: int = 1) -> tuple[ModelState, FitReport]:
    """Central-finite-difference descent over the unfrozen layers.

    Kernels are regenerated from the current generative parameters at
    every probe, so gradients reach the generators.  The evaluation subset
    (mini-batch) is drawn once per run, keeping the loss deterministic and
    the line search meaningful.  Constraint projection (K, gamma, beta
    floors) is applied to every candidate.  Outputs of the frozen leading
    layers are computed once per image and reused by every probe; when
    only the final scaling is free, per-channel errors are cached as well
    and each probe is a closed-form evaluation.
    """
    t0 = time.perf_counter()
    trainable = spec.trainable_layers
    n_free = sum(layer_param_count(layer) for layer in trainable)
    if n_free > _MAX_FD_PARAMS:
        raise ParameterError(
            f"finite-difference fitting is guarded to {_MAX_FD_PARAMS} free "
            f"parameters; this freeze specification leaves {n_free}")

    pairs = _load_pairs(manifest, sampling_frequency, crop)
    mos_all = np.array([r.mos for r in manifest.records])
    if batch is not None and batch < len(pairs):
        rng = np.random.default_rng([seed, 0])
        keep = np.sort(rng.choice(len(pairs), size=batch, replace=False))
        pairs = [pairs[i] for i in keep]
        mos = mos_all[keep]
    else:
        mos = mos_all

    state = project_constraints(state)
    prefix = spec.frozen_prefix
    base_compiled = CompiledModel(state)

    # The frozen leading layers never change during the run: run them once
    # per unique image and keep only the deepest frozen tap.
    prefix_cache: dict[int, ImageTensor] = {}

    def prefix_tap(img: ImageTensor) -> ImageTensor:
        key = id(img)
        if key not in prefix_cache:
            prefix_cache[key] = base_compiled.run_to(prefix, img)
        return prefix_cache[key]

    scale_only = trainable == ("layer8",)
    e_table = n_table = None
    if scale_only:
        rows, ns = [], []
        for ref, dist in pairs:
            diff = prefix_tap(ref).data - prefix_tap(dist).data
            rows.append(np.sum(diff * diff, axis=(0, 1)))
            ns.append(diff.size)
        e_table = np.array(rows)
        n_table = np.array(ns, dtype=np.float64)

    lo_bounds, hi_bounds = _vector_bounds(state, trainable)

    def loss(theta: np.ndarray) -> float:
        theta = np.clip(theta, lo_bounds, hi_bounds)
        if scale_only:
            # theta is exactly the scale vector; no state rebuild needed.
            d = np.sqrt(e_table @ (theta * theta) / n_table)
            return _pearson_gradient(d, mos)[0]
        candidate = with_param_vector(state, trainable, theta)
        compiled = CompiledModel(candidate, donor=base_compiled)
        outs: dict[int, np.ndarray] = {}

        def suffix(img: ImageTensor) -> np.ndarray:
            key = id(img)
            if key not in outs:
                final, _ = compiled.run_from(prefix + 1, prefix_tap(img))
                outs[key] = final.data
            return outs[key]

        distances = np.empty(len(pairs))
        for i, (ref, dist) in enumerate(pairs):
            diff = suffix(ref) - suffix(dist)
            distances[i] = np.sqrt(np.sum(diff * diff) / diff.size)
        return _pearson_gradient(distances, mos)[0]

    theta = param_vector(state, trainable)
    if trainable:
        initial_rho = rho = loss(theta)
    else:
        # Everything frozen: just report the correlation of the state as-is.
        compiled = base_compiled
        distances = np.empty(len(pairs))
        for i, (ref, dist) in enumerate(pairs):
            fr, _ = compiled.forward(ref)
            fd_, _ = compiled.forward(dist)
            diff = fr.data - fd_.data
            distances[i] = np.sqrt(np.sum(diff * diff) / diff.size)
        initial_rho = rho = _pearson_gradient(distances, mos)[0]

    iterations = 0
    if trainable and steps > 0:
        lr = learning_rate

        def fd_gradient(th: np.ndarray) -> np.ndarray:
            hs = fd_step * np.maximum(np.abs(th), 1.0)

            def probe(j: int) -> float:
                plus = th.copy()
                plus[j] += hs[j]
                minus = th.copy()
                minus[j] -= hs[j]
                return (loss(plus) - loss(minus)) / (2.0 * hs[j])

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    return np.fromiter(pool.map(probe, range(th.size)),
                                       dtype=np.float64, count=th.size)
            return np.fromiter((probe(j) for j in range(th.size)),
                               dtype=np.float64, count=th.size)

        for _ in range(steps):
            grad = fd_gradient(theta)
            accepted = False
            for _ in range(_MAX_HALVINGS + 1):
                candidate = theta - lr * grad
                cand_rho = loss(candidate)
                if cand_rho < rho:
                    theta, rho = candidate, cand_rho
                    accepted = True
                    break
                lr *= 0.5
            if not accepted:
                break
            iterations += 1
            lr = min(lr * 2.0, learning_rate)

    fitted = (with_param_vector(state, trainable,
                                np.clip(theta, lo_bounds, hi_bounds))
              if trainable else state)
    deltas = {layer: float(np.linalg.norm(
        param_vector(fitted, (layer,)) - param_vector(state, (layer,))))
        for layer in trainable}
    report = FitReport(
        iterations=iterations, initial_pearson=initial_rho, final_pearson=rho,
        parameter_deltas=deltas, wall_clock=time.perf_counter() - t0, seed=seed)
    return fitted, report


@dataclass(frozen=True)
class SweepReport:
    samples: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    seed: int

    def summary(self) -> str:
        return (f"draws: {self.samples.size}\n"
                f"seed: {self.seed}\n"
                f"mean pearson: {self.samples.mean():.6f}\n"
                f"best pearson: {self.samples.min():.6f}\n")


_ANGLE_FIELDS = {("layer6", f"{p}_{a}") for p in ("a", "t", "d")
                 for a in ("theta_f", "theta_env")}
_MATRIX_FIELDS = {("layer2", "matrix"), ("layer4", "mix"), ("layer6", "mix")}
_LOG_FIELDS = {("layer4", "log_sigma")}


def _perturb_state(base: ModelState, rng: np.random.Generator,
                   scale: float) -> ModelState:
    """Randomize around a state: positive parameters get log-uniform
    factors in [0.25, 4], angles are redrawn uniformly on [0, pi), matrix
    entries get zero-mean noise of scale 0.5|v| + 0.1.  ``scale`` in
    [0, 1] interpolates between no perturbation and the full scheme."""
    log4 = np.log(4.0)
    params = {layer: dict(group) for layer, group in base.params.items()}
    for layer, group in base.params.items():
        for name, value in group.items():
            key = (layer, name)
            if key in _ANGLE_FIELDS:
                random_angles = rng.uniform(0.0, np.pi, size=value.shape)
                params[layer][name] = (1 - scale) * value + scale * random_angles
            elif key in _MATRIX_FIELDS:
                noise = rng.standard_normal(value.shape) * (0.5 * np.abs(value) + 0.1)
                params[layer][name] = value + scale * noise
            elif key in _LOG_FIELDS:
                params[layer][name] = value + scale * rng.uniform(
                    -log4, log4, size=value.shape)
            else:
                factors = np.exp(rng.uniform(-log4, log4, size=value.shape))
                params[layer][name] = value * factors ** scale
    return project_constraints(
        ModelState(config=base.config, params=params, frozen=dict(base.frozen)))


def random_init_sweep(cfg: ModelConfig, manifest: Manifest, n_inits: int,
                      seed: int, scale: float = 1.0,
                      sampling_frequency: float = 64.0,
                      threads: int = 1) -> SweepReport:
    """Correlation of randomly perturbed initializations, without training.

    Draw i uses the derived seed [seed, i], so the histogram is
    reproducible and independent of threading.
    """
    if n_inits < 1:
        raise InputError("n_inits must be >= 1")
    base = build_bio_model(cfg)
    pairs = _load_pairs(manifest, sampling_frequency, crop=None)
    mos = np.array([r.mos for r in manifest.records])

    def one_draw(i: int) -> float:
        rng = np.random.default_rng([seed, i])
        compiled = CompiledModel(_perturb_state(base, rng, scale))
        distances = np.empty(len(pairs))
        tap_cache: dict[int, np.ndarray] = {}
        for j, (ref, dist) in enumerate(pairs):
            fr = _final_scaled(compiled, ref, tap_cache)
            fd_ = _final_scaled(compiled, dist, tap_cache)
            diff = fr - fd_
            distances[j] = np.sqrt(np.sum(diff * diff) / diff.size)
        return _pearson_gradient(distances, mos)[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = np.fromiter(pool.map(one_draw, range(n_inits)),
                                  dtype=np.float64, count=n_inits)
    else:
        samples = np.fromiter((one_draw(i) for i in range(n_inits)),
                              dtype=np.float64, count=n_inits)
    counts, edges = np.histogram(samples, bins=20, range=(-1.0, 1.0))
    return SweepReport(samples=samples, bin_edges=edges, counts=counts, seed=seed)


def _final_scaled(compiled: CompiledModel, img: ImageTensor,
                  cache: dict[int, np.ndarray]) -> np.ndarray:
    key = id(img)
    if key not in cache:
        final, _ = compiled.forward(img)
        cache[key] = final.data
    return cache[key]
