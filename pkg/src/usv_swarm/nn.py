"""Dense multilayer perceptrons in float64 with exact backprop, Adam and soft updates.

Weights use the (out, in) convention so a layer computes ``z = x @ W.T + b``.
All functions here treat parameters as values: they return new arrays and
never mutate their inputs.
"""
from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("tanh", "identity")


@functools.lru_cache(maxsize=None)
def _layout(layer_sizes: tuple[int, ...]):
    """(start, stop, shape) of every weight and bias block inside the flat vector."""
    blocks, off = [], 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        blocks.append((off, off + fan_out * fan_in, (fan_out, fan_in)))
        off += fan_out * fan_in
        blocks.append((off, off + fan_out, (fan_out,)))
        off += fan_out
    return tuple(blocks), off


class MlpParams:
    """Network parameters stored in one flat float64 vector.

    ``weights[l]`` (shape ``(layer_sizes[l+1], layer_sizes[l])``) and
    ``biases[l]`` are views into ``flat``, so optimizer and target updates can
    act on the whole network at once.
    """

    def __init__(self, layer_sizes, weights, biases, hidden_activation="relu",
                 output_activation="identity"):
        sizes = tuple(int(n) for n in layer_sizes)
        if len(weights) != len(sizes) - 1 or len(biases) != len(weights):
            raise ValueError("layer count does not match layer_sizes")
        for l, (w, b) in enumerate(zip(weights, biases)):
            shape = (sizes[l + 1], sizes[l])
            if np.shape(w) != shape or np.shape(b) != (shape[0],):
                raise ValueError(f"layer {l}: expected weight {shape}, bias ({shape[0]},); "
                                 f"got {np.shape(w)}, {np.shape(b)}")
        parts = []
        for w, b in zip(weights, biases):
            parts.extend((np.ravel(w), np.ravel(b)))
        self._init(sizes, np.concatenate(parts).astype(np.float64, copy=False),
                   hidden_activation, output_activation)

    def _init(self, sizes, flat, hidden_activation, output_activation):
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {hidden_activation!r}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {output_activation!r}")
        self.layer_sizes = sizes
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.flat = flat
        self._views = None

    def _build_views(self):
        blocks, _ = _layout(self.layer_sizes)
        self._views = [self.flat[a:b].reshape(shape) for a, b, shape in blocks]

    @property
    def weights(self) -> list[np.ndarray]:
        if self._views is None:
            self._build_views()
        return self._views[0::2]

    @property
    def biases(self) -> list[np.ndarray]:
        if self._views is None:
            self._build_views()
        return self._views[1::2]

    @classmethod
    def from_flat(cls, layer_sizes, flat, hidden_activation="relu",
                  output_activation="identity") -> "MlpParams":
        sizes = tuple(int(n) for n in layer_sizes)
        _, total = _layout(sizes)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (total,):
            raise ValueError(f"flat parameter vector must have length {total}, got {flat.shape}")
        obj = cls.__new__(cls)
        obj._init(sizes, flat, hidden_activation, output_activation)
        return obj

    def __repr__(self):
        return (f"MlpParams(layer_sizes={self.layer_sizes}, hidden={self.hidden_activation}, "
                f"output={self.output_activation})")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def arrays(self) -> list[np.ndarray]:
        """Weights and biases interleaved per layer: [W0, b0, W1, b1, ...]."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_flat(self, flat) -> "MlpParams":
        return MlpParams.from_flat(self.layer_sizes, flat, self.hidden_activation,
                                   self.output_activation)

    def copy(self) -> "MlpParams":
        return self.with_flat(self.flat.copy())

    def zeros_like(self) -> "MlpParams":
        return self.with_flat(np.zeros_like(self.flat))

    def max_abs_diff(self, other: "MlpParams") -> float:
        _check_same_shapes(self, other)
        return float(np.max(np.abs(self.flat - other.flat)))

    def layer_of(self, index: int) -> int:
        """Layer that owns position ``index`` of the flat vector."""
        blocks, _ = _layout(self.layer_sizes)
        layer = 0
        for k, (start, _stop, _shape) in enumerate(blocks):
            if start <= index:
                layer = k // 2
        return layer


@dataclass
class AdamState:
    first_moment: MlpParams
    second_moment: MlpParams
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, learning_rate=1e-3, beta1=0.9, beta2=0.999,
                   epsilon=1e-8) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0, learning_rate, beta1, beta2, epsilon)


@dataclass
class ForwardCache:
    # activations[0] is the input; activations[l + 1] = act(pre_activations[l])
    pre_activations: list[np.ndarray] = field(default_factory=list)
    activations: list[np.ndarray] = field(default_factory=list)


def _check_same_shapes(a: MlpParams, b: MlpParams):
    if a.layer_sizes != b.layer_sizes:
        raise ValueError(f"layer shapes differ: {a.layer_sizes} vs {b.layer_sizes}")


def mlp_init(layer_sizes, hidden_activation="relu", output_activation="identity",
             seed: int = 0) -> MlpParams:
    """Xavier-uniform weights, zero biases; the same seed always gives the same network."""
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 2 or any(n < 1 for n in sizes):
        raise ValueError(f"need at least two positive layer sizes, got {list(layer_sizes)}")
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(sizes), weights, biases, hidden_activation, output_activation)


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z, a, kind):
    if kind == "relu":
        return z > 0.0
    if kind == "tanh":
        return 1.0 - a * a
    return None


def mlp_forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_size:
        raise ValueError(f"input shape {x.shape} incompatible with input size {params.input_size}")
    cache = ForwardCache([], [x])
    a = x
    last = params.n_layers - 1
    weights, biases = params.weights, params.biases
    for l in range(params.n_layers):
        z = a @ weights[l].T + biases[l]
        a = _activate(z, params.output_activation if l == last else params.hidden_activation)
        cache.pre_activations.append(z)
        cache.activations.append(a)
    return a, cache


def mlp_forward_only(params: MlpParams, x) -> np.ndarray:
    return mlp_forward(params, x)[0]


def mlp_backward(params: MlpParams, cache: ForwardCache, output_grad
                 ) -> tuple[MlpParams, np.ndarray]:
    """Gradients of ``sum(output * output_grad)`` w.r.t. every parameter and the input."""
    if len(cache.pre_activations) != params.n_layers:
        raise ValueError("cache does not belong to this network")
    delta = np.asarray(output_grad, dtype=np.float64)
    out = cache.activations[-1]
    if delta.shape != out.shape:
        raise ValueError(f"output_grad shape {delta.shape} != output shape {out.shape}")
    grads = params.zeros_like()
    grads_w, grads_b, weights = grads.weights, grads.biases, params.weights
    last = params.n_layers - 1
    for l in range(last, -1, -1):
        kind = params.output_activation if l == last else params.hidden_activation
        d_act = _activation_grad(cache.pre_activations[l], cache.activations[l + 1], kind)
        if d_act is not None:
            delta = delta * d_act
        np.matmul(delta.T, cache.activations[l], out=grads_w[l])
        np.sum(delta, axis=0, out=grads_b[l])
        delta = delta @ weights[l]
    return grads, delta


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState
              ) -> tuple[MlpParams, AdamState]:
    _check_same_shapes(params, grads)
    _check_same_shapes(params, state.first_moment)
    g = grads.flat
    if not np.isfinite(g).all():
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise FloatingPointError(f"non-finite gradient in layer {grads.layer_of(bad)}")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    m = b1 * state.first_moment.flat + (1.0 - b1) * g
    v = b2 * state.second_moment.flat + (1.0 - b2) * (g * g)
    step = state.learning_rate * (m / (1.0 - b1 ** t)) / (np.sqrt(v / (1.0 - b2 ** t)) + state.epsilon)
    new_state = AdamState(params.with_flat(m), params.with_flat(v), t,
                          state.learning_rate, b1, b2, state.epsilon)
    return params.with_flat(params.flat - step), new_state


def soft_update(target: MlpParams, source: MlpParams, tau: float) -> MlpParams:
    """Element-wise ``tau * source + (1 - tau) * target``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    _check_same_shapes(target, source)
    return target.with_flat(tau * source.flat + (1.0 - tau) * target.flat)


def finite_diff_check(params: MlpParams, x, h: float = 1e-5, output_grad=None,
                      analytic: tuple[MlpParams, np.ndarray] | None = None) -> float:
    """Max relative error between backprop and central differences.

    The objective is ``sum(mlp(x) * output_grad)`` (``output_grad`` defaults to
    ones). Every weight, bias and input entry is perturbed. Per entry the error is
    ``|a - n| / max(|a|, |n|, 1e-4 * scale)`` where ``scale`` is the largest
    gradient magnitude seen, so entries that are tiny relative to the rest are
    judged absolutely rather than amplifying round-off. If every analytic and
    numeric entry is below 1e-12 the result is 0.

    ``analytic`` overrides the backprop result, which is how injected faults are
    tested.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=np.float64)
    out, cache = mlp_forward(params, x)
    g_out = np.ones_like(out) if output_grad is None else np.asarray(output_grad, dtype=np.float64)
    if analytic is None:
        analytic = mlp_backward(params, cache, g_out)
    grads, grad_x = analytic

    def objective(p, inp):
        return float(np.sum(mlp_forward(p, inp)[0] * g_out))

    ana_parts, num_parts = [], []
    work = params.copy()
    for arr, garr in zip(work.arrays(), grads.arrays()):
        num = np.empty_like(arr)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = objective(work, x)
            flat[i] = orig - h
            fm = objective(work, x)
            flat[i] = orig
            num.reshape(-1)[i] = (fp - fm) / (2 * h)
        ana_parts.append(np.ravel(garr))
        num_parts.append(num.ravel())
    num_x = np.empty_like(x)
    flat_x = x.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        fp = objective(params, x)
        flat_x[i] = orig - h
        fm = objective(params, x)
        flat_x[i] = orig
        num_x.reshape(-1)[i] = (fp - fm) / (2 * h)
    ana_parts.append(np.ravel(grad_x))
    num_parts.append(num_x.ravel())

    a = np.concatenate(ana_parts)
    n = np.concatenate(num_parts)
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))))
    if scale < 1e-12:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-4 * scale)
    return float(np.max(np.abs(a - n) / denom))


# -- JSON checkpoint format -------------------------------------------------

def params_to_dict(params: MlpParams) -> dict:
    return {
        "layer_sizes": list(params.layer_sizes),
        "weights": [w.ravel().tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "hidden_activation": params.hidden_activation,
        "output_activation": params.output_activation,
    }


def params_from_dict(d: dict) -> MlpParams:
    sizes = tuple(int(n) for n in d["layer_sizes"])
    if len(d["weights"]) != len(sizes) - 1 or len(d["biases"]) != len(sizes) - 1:
        raise ValueError("network document has the wrong number of layers")
    weights = []
    for l, flat in enumerate(d["weights"]):
        arr = np.asarray(flat, dtype=np.float64)
        if arr.size != sizes[l + 1] * sizes[l]:
            raise ValueError(f"layer {l} weight count {arr.size} does not match layer_sizes")
        weights.append(arr.reshape(sizes[l + 1], sizes[l]))
    biases = [np.asarray(b, dtype=np.float64) for b in d["biases"]]
    return MlpParams(sizes, weights, biases, d["hidden_activation"], d["output_activation"])


def adam_to_dict(state: AdamState) -> dict:
    return {
        "first_moment": params_to_dict(state.first_moment),
        "second_moment": params_to_dict(state.second_moment),
        "step_count": state.step_count,
        "learning_rate": state.learning_rate,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "epsilon": state.epsilon,
    }


def adam_from_dict(d: dict) -> AdamState:
    return AdamState(params_from_dict(d["first_moment"]), params_from_dict(d["second_moment"]),
                     int(d["step_count"]), float(d["learning_rate"]), float(d["beta1"]),
                     float(d["beta2"]), float(d["epsilon"]))


def dumps_params(params: MlpParams) -> str:
    # json uses repr() for floats, which round-trips float64 exactly
    return json.dumps(params_to_dict(params))


def loads_params(text: str) -> MlpParams:
    return params_from_dict(json.loads(text))
