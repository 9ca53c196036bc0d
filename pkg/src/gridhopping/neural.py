"""Neural distance-bound support: weight files, forward evaluation, and a
desk-scale Adam fitter that distills an analytic field into a small MLP.

The runtime network is a plain affine+ReLU chain (3 inputs, 1 output, no
activation on the last layer).  Normalization layers used during training
elsewhere are expected to be folded into the affine weights at export.

Learned fields may overestimate distance; wrap them in
``fields.shrink(nn_field, lam)`` before marching.  For a certified safety
factor, :func:`spectral_lipschitz_bound` multiplies per-layer spectral
norms into a global Lipschitz bound (pessimistic, not the default).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .fields import Field

__all__ = ["NnWeights", "NeuralField", "WeightFormatError", "FitConfig",
           "nn_evaluate", "nn_evaluate_batch", "load_weights", "save_weights",
           "fit", "spectral_lipschitz_bound"]

FORMAT_HEADER = "nnsdb 1"


class WeightFormatError(ValueError):
    """Malformed weight file or inconsistent layer dimensions."""


@dataclass(frozen=True)
class NnWeights:
    """Dense layer stack: ((W, b), ...) with W of shape (rows, cols).

    Consecutive layers chain (cols of layer L equal rows of layer L-1);
    the first layer takes 3 inputs and the last produces 1 output.
    """

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self) -> None:
        if not self.layers:
            raise WeightFormatError("network needs at least one layer")
        prev = 3
        for idx, (W, b) in enumerate(self.layers, start=1):
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise WeightFormatError(f"layer {idx}: weight/bias shapes disagree")
            if W.shape[1] != prev:
                raise WeightFormatError(
                    f"layer {idx}: expects {W.shape[1]} inputs but the previous "
                    f"layer produces {prev}")
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise WeightFormatError(f"layer {idx}: non-finite value")
            prev = W.shape[0]
        if prev != 1:
            raise WeightFormatError(f"last layer must produce 1 output, got {prev}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (3,) + tuple(W.shape[0] for W, _ in self.layers)


def nn_evaluate_batch(w: NnWeights, pts: np.ndarray) -> np.ndarray:
    """Forward pass for an (m, 3) batch.

    Each affine map accumulates one input column at a time in fixed order
    (bias first), so results are bitwise independent of the batch shape and
    single-point evaluation agrees exactly with batched evaluation.
    """
    h = np.asarray(pts, dtype=np.float64)
    last = len(w.layers) - 1
    for li, (W, b) in enumerate(w.layers):
        z = np.empty((h.shape[0], W.shape[0]))
        z[:] = b
        for c in range(W.shape[1]):
            z += h[:, c:c + 1] * W[:, c]
        h = z if li == last else np.maximum(z, 0.0)
    return h[:, 0]


def nn_evaluate(w: NnWeights, p) -> float:
    """Forward pass at a single point."""
    from .fields import _as_vec3
    p = _as_vec3(p)
    return float(nn_evaluate_batch(w, np.array([[p.x, p.y, p.z]]))[0])


class NeuralField(Field):
    """A weight stack exposed through the field-evaluator contract."""

    def __init__(self, weights: NnWeights):
        self.weights = weights

    def values(self, pts):
        return nn_evaluate_batch(self.weights, pts)


def save_weights(w: NnWeights, path) -> None:
    """Text format: header line, layer count, then per layer a "rows cols"
    line, the weight rows, and one bias line; 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{FORMAT_HEADER}\n{len(w.layers)}\n")
        for W, b in w.layers:
            fh.write(f"{W.shape[0]} {W.shape[1]}\n")
            for row in W:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
            fh.write(" ".join(f"{v:.17g}" for v in b) + "\n")


def load_weights(path) -> NnWeights:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    pos = 0

    def next_line(context: str) -> str:
        nonlocal pos
        if pos >= len(lines):
            raise WeightFormatError(f"truncated file while reading {context}")
        line = lines[pos]
        pos += 1
        return line

    if next_line("header").strip() != FORMAT_HEADER:
        raise WeightFormatError(f"bad header; expected {FORMAT_HEADER!r}")
    try:
        count = int(next_line("layer count").strip())
    except ValueError as exc:
        raise WeightFormatError("layer count is not an integer") from exc
    if count < 1:
        raise WeightFormatError("layer count must be positive")

    layers = []
    for idx in range(1, count + 1):
        dims = next_line(f"layer {idx} dimensions").split()
        try:
            rows, cols = (int(v) for v in dims)
        except ValueError as exc:
            raise WeightFormatError(f"layer {idx}: bad dimension line") from exc
        if rows < 1 or cols < 1:
            raise WeightFormatError(f"layer {idx}: non-positive dimensions")
        W = np.empty((rows, cols))
        for r in range(rows):
            parts = next_line(f"layer {idx} row {r}").split()
            if len(parts) != cols:
                raise WeightFormatError(
                    f"layer {idx}: row {r} has {len(parts)} values, expected {cols}")
            try:
                W[r] = [float(v) for v in parts]
            except ValueError as exc:
                raise WeightFormatError(f"layer {idx}: unparseable weight") from exc
        parts = next_line(f"layer {idx} bias").split()
        if len(parts) != rows:
            raise WeightFormatError(
                f"layer {idx}: bias has {len(parts)} values, expected {rows}")
        try:
            b = np.array([float(v) for v in parts])
        except ValueError as exc:
            raise WeightFormatError(f"layer {idx}: unparseable bias") from exc
        if not (np.isfinite(W).all() and np.isfinite(b).all()):
            raise WeightFormatError(f"layer {idx}: non-finite value")
        layers.append((W, b))
    return NnWeights(tuple(layers))


def spectral_lipschitz_bound(w: NnWeights) -> float:
    """Product of layer spectral norms: a global Lipschitz upper bound.

    ReLU is 1-Lipschitz, so |nn(p) - nn(q)| <= L * |p - q| with this L.
    Wrapping the field in ``shrink(nn_field, L)`` therefore restores
    marching safety even for pathological weights, at the cost of tiny
    steps; the usual moderate shrink factor is the practical choice.
    """
    bound = 1.0
    for W, _ in w.layers:
        bound *= float(np.linalg.svd(W, compute_uv=False)[0])
    return bound


@dataclass(frozen=True)
class FitConfig:
    """Training hyperparameters; the optimizer defaults are the standard
    Adam settings."""

    sample_count: int = 20_000
    steps: int = 5_000
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_adam: float = 1e-8
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.sample_count < 1 or self.steps < 0 or self.batch_size < 1:
            raise ValueError("sample_count and batch_size must be positive, steps >= 0")
        if self.batch_size > self.sample_count:
            raise ValueError("batch_size cannot exceed sample_count")
        for name in ("learning_rate", "beta1", "beta2", "epsilon_adam"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


_NEAR_SURFACE_BAND = 0.1


def _sample_points(target: Field, cfg: FitConfig, rng: np.random.Generator) -> np.ndarray:
    """Half uniform in the cube, half rejection-sampled near the surface
    (|f| < 0.1).  Falls back to uniform if the band is too rare to fill."""
    n_uniform = cfg.sample_count // 2
    uniform = rng.uniform(-0.5, 0.5, (n_uniform, 3))
    need = cfg.sample_count - n_uniform
    near: list[np.ndarray] = []
    for _ in range(1000):
        if need <= 0:
            break
        cand = rng.uniform(-0.5, 0.5, (8192, 3))
        keep = cand[np.abs(target.values(cand)) < _NEAR_SURFACE_BAND][:need]
        near.append(keep)
        need -= len(keep)
    if need > 0:
        near.append(rng.uniform(-0.5, 0.5, (need, 3)))
    return np.concatenate([uniform] + near, axis=0)


def _init_layers(arch, rng: np.random.Generator):
    layers = []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        limit = np.sqrt(6.0 / fan_in)
        layers.append([rng.uniform(-limit, limit, (fan_out, fan_in)), np.zeros(fan_out)])
    return layers


def fit(target: Field, arch, cfg: FitConfig,
        loss_out: list | None = None) -> NnWeights:
    """Train an MLP on mean squared error against the target field values.

    Fully deterministic for a given ``rng_seed``: sampling, initialization
    and batch order all come from one seeded generator.  Optionally appends
    the per-step training loss to ``loss_out``.
    """
    arch = [int(a) for a in arch]
    if len(arch) < 2 or arch[0] != 3 or arch[-1] != 1 or any(a < 1 for a in arch):
        raise ValueError(f"architecture must chain from 3 inputs to 1 output, got {arch}")

    rng = np.random.default_rng(cfg.rng_seed)
    X = _sample_points(target, cfg, rng)
    Y = target.values(X)
    layers = _init_layers(arch, rng)

    m_state = [[np.zeros_like(W), np.zeros_like(b)] for W, b in layers]
    v_state = [[np.zeros_like(W), np.zeros_like(b)] for W, b in layers]
    b1, b2, eps, lr = cfg.beta1, cfg.beta2, cfg.epsilon_adam, cfg.learning_rate

    order = rng.permutation(len(X))
    cursor = 0
    last = len(layers) - 1
    for step in range(1, cfg.steps + 1):
        if cursor + cfg.batch_size > len(X):
            order = rng.permutation(len(X))
            cursor = 0
        idx = order[cursor:cursor + cfg.batch_size]
        cursor += cfg.batch_size
        xb, yb = X[idx], Y[idx]

        activations = [xb]
        pre = []
        h = xb
        for li, (W, b) in enumerate(layers):
            z = h @ W.T + b
            pre.append(z)
            h = z if li == last else np.maximum(z, 0.0)
            activations.append(h)
        residual = activations[-1][:, 0] - yb
        if loss_out is not None:
            loss_out.append(float(np.mean(residual * residual)))

        delta = (2.0 * residual / cfg.batch_size)[:, None]
        for li in range(last, -1, -1):
            W, b = layers[li]
            grad_W = delta.T @ activations[li]
            grad_b = delta.sum(axis=0)
            if li > 0:
                delta = (delta @ W) * (pre[li - 1] > 0.0)
            for slot, grad in ((0, grad_W), (1, grad_b)):
                m_state[li][slot] = b1 * m_state[li][slot] + (1 - b1) * grad
                v_state[li][slot] = b2 * v_state[li][slot] + (1 - b2) * grad * grad
                m_hat = m_state[li][slot] / (1 - b1 ** step)
                v_hat = v_state[li][slot] / (1 - b2 ** step)
                layers[li][slot] = layers[li][slot] - lr * m_hat / (np.sqrt(v_hat) + eps)

    return NnWeights(tuple((W.copy(), b.copy()) for W, b in layers))
