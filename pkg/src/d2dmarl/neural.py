"""Dense ReLU networks with hand-written backprop, Adam, soft target updates and
a bit-exact weight file format.

Parameters are float64 numpy arrays. Weights are stored ``(fan_in, fan_out)``
so a batch forward is ``x @ W + b``.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

WEIGHT_MAGIC = b"D2DW"
WEIGHT_VERSION = 1
_ACTIVATIONS = ("identity", "relu")


@dataclass(frozen=True)
class MLPSpec:
    layer_sizes: tuple
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        if self.output_activation not in _ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def mac_count(self) -> int:
        """Multiply-accumulates for one forward pass of a single input row."""
        u = self.layer_sizes
        return sum(a * b for a, b in zip(u[:-1], u[1:]))

    @property
    def complexity_order(self) -> int:
        """Per-hidden-layer cost summed as U_{l-1}U_l + U_l U_{l+1}.

        This counts each interior weight matrix twice, so it is the looser
        order-of-magnitude figure; ``mac_count`` is the exact work.
        """
        u = self.layer_sizes
        return sum(u[l - 1] * u[l] + u[l] * u[l + 1] for l in range(1, len(u) - 1))


class MLP:
    """Affine layers with ReLU between them; output layer per ``spec.output_activation``."""

    def __init__(self, spec: MLPSpec, params: list):
        self.spec = spec
        self.params = params
        self._check()

    def _check(self):
        sizes = self.spec.layer_sizes
        if len(self.params) != 2 * (len(sizes) - 1):
            raise ValueError("parameter list does not match spec")
        for l, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            W, bias = self.params[2 * l], self.params[2 * l + 1]
            if W.shape != (a, b) or bias.shape != (b,):
                raise ValueError(f"layer {l}: got {W.shape}/{bias.shape}, want {(a, b)}/{(b,)}")

    @property
    def n_layers(self) -> int:
        return len(self.spec.layer_sizes) - 1

    def copy(self) -> "MLP":
        return MLP(self.spec, [p.copy() for p in self.params])

    def forward(self, x):
        """Returns ``(y, cache)``. Accepts a vector or a ``(batch, n_in)`` array."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[-1] != self.spec.n_in:
            raise ValueError(f"input width {h.shape[-1]} != {self.spec.n_in}")
        inputs, pre = [], []
        for l in range(self.n_layers):
            W, b = self.params[2 * l], self.params[2 * l + 1]
            inputs.append(h)
            z = h @ W + b
            pre.append(z)
            last = l == self.n_layers - 1
            if not last or self.spec.output_activation == "relu":
                h = np.maximum(z, 0.0)
            else:
                h = z
        cache = _Cache(self, inputs, pre, single)
        return (h[0] if single else h), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache: "_Cache", grad_out):
        """Reverse pass. Returns ``(param_grads, grad_input)`` matching ``params`` order."""
        if cache.owner is not self:
            raise ValueError("cache was produced by a different network")
        g = np.asarray(grad_out, dtype=float)
        if cache.single:
            g = g[None, :]
        grads = [None] * len(self.params)
        for l in reversed(range(self.n_layers)):
            last = l == self.n_layers - 1
            if not last or self.spec.output_activation == "relu":
                g = g * (cache.pre[l] > 0)
            W = self.params[2 * l]
            grads[2 * l] = cache.inputs[l].T @ g
            grads[2 * l + 1] = g.sum(axis=0)
            g = g @ W.T
        return grads, (g[0] if cache.single else g)


@dataclass
class _Cache:
    owner: object
    inputs: list
    pre: list
    single: bool


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def init_weights(spec: MLPSpec, seed) -> MLP:
    """Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = []
    for a, b in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = np.sqrt(6.0 / a)
        params.append(rng.uniform(-bound, bound, size=(a, b)))
        params.append(np.zeros(b))
    return MLP(spec, params)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = None
    v: list = None

    @classmethod
    def for_params(cls, params, lr, **kw) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], **kw)


def adam_step(params: list, grads: list, opt: AdamState) -> None:
    """In-place bias-corrected Adam update of ``params``."""
    if len(params) != len(grads) or len(params) != len(opt.m):
        raise ValueError("params, grads and optimizer state do not line up")
    opt.step += 1
    c1 = 1.0 - opt.beta1 ** opt.step
    c2 = 1.0 - opt.beta2 ** opt.step
    for p, g, m, v in zip(params, grads, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)


def soft_update(target_params: list, online_params: list, tau: float) -> None:
    """In place: target <- tau * online + (1 - tau) * target."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if len(target_params) != len(online_params):
        raise ValueError("target/online parameter lists differ in length")
    for t, o in zip(target_params, online_params):
        if t.shape != o.shape:
            raise ValueError(f"shape mismatch {t.shape} vs {o.shape}")
        if tau == 1.0:
            t[...] = o
        else:
            t *= 1.0 - tau
            t += tau * o


def hard_copy(target_params: list, online_params: list) -> None:
    soft_update(target_params, online_params, 1.0)


class FusionCritic:
    """Q(s, a): states pass one ReLU layer, then actions are concatenated in.

    ``hidden`` lists every hidden width; the first one is the state-only layer.
    Parameters are exposed as one flat list so Adam and soft updates treat it
    like an ``MLP``.
    """

    def __init__(self, state_net: MLP, head: MLP, action_dim: int):
        if state_net.spec.output_activation != "relu":
            raise ValueError("state branch must end in a ReLU")
        if head.spec.n_in != state_net.spec.n_out + action_dim or head.spec.n_out != 1:
            raise ValueError("head width does not match state branch + actions")
        self.state_net = state_net
        self.head = head
        self.action_dim = action_dim

    @classmethod
    def build(cls, state_dim: int, action_dim: int, hidden, seed) -> "FusionCritic":
        hidden = list(hidden)
        if not hidden:
            raise ValueError("critic needs at least one hidden layer")
        ss = as_seed_sequence(seed).spawn(2)
        state_net = init_weights(MLPSpec((state_dim, hidden[0]), "relu"), ss[0])
        head = init_weights(MLPSpec((hidden[0] + action_dim, *hidden[1:], 1)), ss[1])
        return cls(state_net, head, action_dim)

    @property
    def state_dim(self) -> int:
        return self.state_net.spec.n_in

    @property
    def input_width(self) -> int:
        return self.state_dim + self.action_dim

    @property
    def params(self) -> list:
        return self.state_net.params + self.head.params

    @property
    def mac_count(self) -> int:
        return self.state_net.spec.mac_count + self.head.spec.mac_count

    def copy(self) -> "FusionCritic":
        return FusionCritic(self.state_net.copy(), self.head.copy(), self.action_dim)

    def forward(self, states, actions):
        """Batched Q values, shape ``(batch,)``, plus a cache for ``backward``."""
        h, c_state = self.state_net.forward(np.atleast_2d(states))
        q, c_head = self.head.forward(np.concatenate([h, np.atleast_2d(actions)], axis=1))
        return q[:, 0], (c_state, c_head)

    def __call__(self, states, actions):
        return self.forward(states, actions)[0]

    def backward(self, cache, grad_q):
        """Returns ``(param_grads, grad_states, grad_actions)``."""
        c_state, c_head = cache
        g_head, g_in = self.head.backward(c_head, np.asarray(grad_q, dtype=float)[:, None])
        width = self.state_net.spec.n_out
        g_state, g_s = self.state_net.backward(c_state, g_in[:, :width])
        return g_state + g_head, g_s, g_in[:, width:]


# -- weight files ----------------------------------------------------------------
#
# layout (little endian):
#   magic "D2DW" | u32 version | u32 n_sizes | u32 sizes[n_sizes] | u8 output_act
#   then float64 arrays W0, b0, W1, b1, ... each row-major

def dumps_mlp(net: MLP) -> bytes:
    buf = io.BytesIO()
    sizes = net.spec.layer_sizes
    buf.write(WEIGHT_MAGIC)
    buf.write(struct.pack("<II", WEIGHT_VERSION, len(sizes)))
    buf.write(struct.pack(f"<{len(sizes)}I", *sizes))
    buf.write(struct.pack("<B", _ACTIVATIONS.index(net.spec.output_activation)))
    for p in net.params:
        buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return buf.getvalue()


def loads_mlp(data: bytes, expect: MLPSpec | None = None) -> MLP:
    if data[:4] != WEIGHT_MAGIC:
        raise ValueError("not a weight file")
    version, n = struct.unpack_from("<II", data, 4)
    if version != WEIGHT_VERSION:
        raise ValueError(f"unsupported weight file version {version}")
    off = 12
    sizes = struct.unpack_from(f"<{n}I", data, off)
    off += 4 * n
    (act,) = struct.unpack_from("<B", data, off)
    off += 1
    spec = MLPSpec(sizes, _ACTIVATIONS[act])
    if expect is not None and spec != expect:
        raise ValueError(f"weight file spec {spec} does not match expected {expect}")
    params = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        for shape in ((a, b), (b,)):
            count = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
            params.append(arr.astype(float))
            off += 8 * count
    if off != len(data):
        raise ValueError("trailing bytes in weight file")
    return MLP(spec, params)


def save_mlp(net: MLP, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_mlp(net))


def load_mlp(path, expect: MLPSpec | None = None) -> MLP:
    with open(path, "rb") as fh:
        return loads_mlp(fh.read(), expect)
