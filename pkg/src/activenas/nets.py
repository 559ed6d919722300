"""Dense residual network backend.

Realizes a grid point as a trainable network: an initial affine block, j
stacks of i residual blocks with width doubling between stacks, and an affine
classification head with softmax.  Parameters live in a single flat float64
vector; every layer holds views into it, so in-place SGD updates and
finite-difference probes see the same memory.

The residual-dense block is x + A2(relu(A1(x))): two affine layers with a ReLU
between them and an identity skip, so a block with all-zero internals is an
exact identity map.  Width transitions between stacks are affine projections;
they carry parameters but are not counted as depth layers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .space import ArchPoint, BlockSpec

CHECKPOINT_MAGIC = b"ANET"
CHECKPOINT_VERSION = 1

# block families that instantiate() knows how to build
_FAMILIES = ("residual-dense",)


@dataclass(frozen=True)
class NetworkSpec:
    """Everything needed to build one network deterministically."""

    arch: ArchPoint
    block: BlockSpec
    input_shape: tuple
    n_classes: int
    dropout_rate: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        _check_family(self)

    @property
    def stack_widths(self) -> list[int]:
        """Width per stack: base_width doubled at every stack transition."""
        return [self.block.base_width * 2 ** k for k in range(self.arch.j)]

    def to_dict(self) -> dict:
        return {
            "arch": {"i": self.arch.i, "j": self.arch.j},
            "block": {
                "beta": self.block.beta,
                "alpha": self.block.alpha,
                "base_width": self.block.base_width,
                "kind": self.block.kind,
            },
            "input_shape": list(self.input_shape),
            "n_classes": self.n_classes,
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            arch=ArchPoint(**d["arch"]),
            block=BlockSpec(**d["block"]),
            input_shape=tuple(d["input_shape"]),
            n_classes=d["n_classes"],
            dropout_rate=d["dropout_rate"],
        )


@dataclass(frozen=True)
class LayerInfo:
    """Static accounting for one parameterized layer."""

    name: str
    params: int
    units: int
    counted: bool  # True if the layer is part of the depth formula


def _check_family(spec: NetworkSpec) -> None:
    kind = spec.block.kind
    if kind not in _FAMILIES:
        raise ConfigError(f"unknown block family {kind!r}; registered: {_FAMILIES}")
    if spec.block.beta != 2 or spec.block.alpha != 2:
        raise ConfigError(
            "residual-dense blocks have two affine layers and two outer layers; "
            f"got beta={spec.block.beta}, alpha={spec.block.alpha}"
        )
    if len(spec.input_shape) != 1:
        raise ConfigError(
            f"residual-dense expects flat feature vectors, got shape {spec.input_shape}"
        )


def _layer_entries(spec: NetworkSpec):
    """Yield (name, weight_shape, bias_shape, counted) in forward order."""
    _check_family(spec)
    d = spec.input_shape[0]
    widths = spec.stack_widths
    yield "init", (d, widths[0]), (widths[0],), True
    for k, w in enumerate(widths):
        if k > 0:
            yield f"t{k}", (widths[k - 1], w), (w,), False
        for b in range(spec.arch.i):
            yield f"s{k}.b{b}.A1", (w, w), (w,), True
            yield f"s{k}.b{b}.A2", (w, w), (w,), True
    yield "clf", (widths[-1], spec.n_classes), (spec.n_classes,), True


def layer_manifest(spec: NetworkSpec) -> list[LayerInfo]:
    """Per-layer parameter and unit counts from the static structure."""
    out = []
    for name, w_shape, b_shape, counted in _layer_entries(spec):
        n_params = int(np.prod(w_shape)) + int(np.prod(b_shape))
        out.append(LayerInfo(name=name, params=n_params, units=b_shape[0], counted=counted))
    return out


def parameter_count(spec: NetworkSpec) -> int:
    return sum(layer.params for layer in layer_manifest(spec))


class ModelHandle:
    """An instantiated network: flat parameter vector plus named layer views."""

    def __init__(self, spec: NetworkSpec, init_seed: int):
        self.spec = spec
        self.init_seed = init_seed
        self.trained = False
        self.train_history: list[float] = []
        self.train_steps = 0

        layout = {}
        offset = 0
        for name, w_shape, b_shape, _ in _layer_entries(spec):
            w_size = int(np.prod(w_shape))
            layout[name + ".W"] = (offset, w_shape)
            offset += w_size
            layout[name + ".b"] = (offset, b_shape)
            offset += b_shape[0]
        self.layout = layout
        self.params = np.zeros(offset, dtype=np.float64)
        self.grads = np.zeros(offset, dtype=np.float64)
        # weight decay applies to weight matrices only, never biases
        self.weight_mask = np.zeros(offset, dtype=bool)
        for name, (off, shape) in layout.items():
            if name.endswith(".W"):
                self.weight_mask[off : off + int(np.prod(shape))] = True
        self._bind_views()
        self._init_params()

    # -- structure ---------------------------------------------------------

    def param(self, name: str) -> np.ndarray:
        """View of one named parameter array (writable, shares memory)."""
        off, shape = self.layout[name]
        return self.params[off : off + int(np.prod(shape))].reshape(shape)

    def grad(self, name: str) -> np.ndarray:
        off, shape = self.layout[name]
        return self.grads[off : off + int(np.prod(shape))].reshape(shape)

    def param_names(self) -> list[str]:
        return list(self.layout)

    @property
    def n_params(self) -> int:
        return self.params.size

    def _bind_views(self):
        p, g = self.param, self.grad
        self._init = (p("init.W"), p("init.b"), g("init.W"), g("init.b"))
        self._clf = (p("clf.W"), p("clf.b"), g("clf.W"), g("clf.b"))
        self._stacks = []
        self._transitions = []
        for k in range(self.spec.arch.j):
            if k > 0:
                self._transitions.append(
                    (p(f"t{k}.W"), p(f"t{k}.b"), g(f"t{k}.W"), g(f"t{k}.b"))
                )
            blocks = []
            for b in range(self.spec.arch.i):
                base = f"s{k}.b{b}."
                blocks.append(
                    tuple(p(base + n) for n in ("A1.W", "A1.b", "A2.W", "A2.b"))
                    + tuple(g(base + n) for n in ("A1.W", "A1.b", "A2.W", "A2.b"))
                )
            self._stacks.append(blocks)

    def _init_params(self):
        """He-normal weights, zero biases, drawn in layout order.

        The closing layer of every block starts at zero so each block is the
        identity map at initialization; activation scale then stays flat in
        depth and deep stacks train at the same learning rate as shallow
        ones.  The closing layers pick up gradient immediately (their input
        is nonzero), so nothing stays stuck at zero.
        """
        rng = np.random.default_rng(self.init_seed)
        for name, (off, shape) in self.layout.items():
            view = self.params[off : off + int(np.prod(shape))]
            if name.endswith("A2.W"):
                view[:] = 0.0
            elif name.endswith(".W"):
                fan_in = shape[0]
                view[:] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=view.size)
            else:
                view[:] = 0.0

    # -- forward / backward ------------------------------------------------

    def _forward(self, x, dropout_rng=None, need_cache=False):
        """Run the network; returns (logits, embedding, cache).

        dropout_rng enables inverted dropout after each block; None disables
        it (deterministic inference path).
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.spec.input_shape[0]:
            raise DataError(
                f"expected inputs of shape (n, {self.spec.input_shape[0]}), got {x.shape}"
            )
        rate = self.spec.dropout_rate
        use_dropout = dropout_rng is not None and rate > 0.0
        keep = 1.0 - rate

        w0, b0, _, _ = self._init
        pre0 = x @ w0 + b0
        h = np.maximum(pre0, 0.0)
        cache = {"x": x, "pre0": pre0, "stacks": []} if need_cache else None

        for k, blocks in enumerate(self._stacks):
            stack_cache = {"blocks": []}
            if k > 0:
                wt, bt, _, _ = self._transitions[k - 1]
                if need_cache:
                    stack_cache["t_in"] = h
                h = h @ wt + bt
            for w1, b1, w2, b2, _, _, _, _ in blocks:
                z1 = h @ w1 + b1
                r1 = np.maximum(z1, 0.0)
                z2 = r1 @ w2 + b2
                out = h + z2
                mask = None
                if use_dropout:
                    mask = (dropout_rng.random(out.shape) >= rate) / keep
                    out = out * mask
                if need_cache:
                    stack_cache["blocks"].append((h, z1, r1, mask))
                h = out
            if need_cache:
                cache["stacks"].append(stack_cache)

        wc, bc, _, _ = self._clf
        logits = h @ wc + bc
        return logits, h, cache

    def _backward(self, dlogits, emb, cache):
        """Accumulate parameter gradients into self.grads for one batch."""
        self.grads[:] = 0.0
        wc, _, gwc, gbc = self._clf
        gwc[:, :] = emb.T @ dlogits
        gbc[:] = dlogits.sum(axis=0)
        g = dlogits @ wc.T

        for k in range(len(self._stacks) - 1, -1, -1):
            blocks = self._stacks[k]
            stack_cache = cache["stacks"][k]
            for b in range(len(blocks) - 1, -1, -1):
                w1, b1, w2, b2, gw1, gb1, gw2, gb2 = blocks[b]
                h_in, z1, r1, mask = stack_cache["blocks"][b]
                if mask is not None:
                    g = g * mask
                gw2[:, :] = r1.T @ g
                gb2[:] = g.sum(axis=0)
                g_r1 = g @ w2.T
                g_z1 = np.where(z1 > 0.0, g_r1, 0.0)
                gw1[:, :] = h_in.T @ g_z1
                gb1[:] = g_z1.sum(axis=0)
                g = g + g_z1 @ w1.T
            if k > 0:
                wt, _, gwt, gbt = self._transitions[k - 1]
                t_in = stack_cache["t_in"]
                gwt[:, :] = t_in.T @ g
                gbt[:] = g.sum(axis=0)
                g = g @ wt.T

        w0, _, gw0, gb0 = self._init
        g_pre = np.where(cache["pre0"] > 0.0, g, 0.0)
        gw0[:, :] = cache["x"].T @ g_pre
        gb0[:] = g_pre.sum(axis=0)

    def loss_and_grad(self, x, y, dropout_rng=None):
        """Mean cross-entropy over the batch and its gradient (in self.grads)."""
        y = np.asarray(y)
        logits, emb, cache = self._forward(x, dropout_rng=dropout_rng, need_cache=True)
        n = logits.shape[0]
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1))
        loss = float(np.mean(log_z - shifted[np.arange(n), y]))
        probs = np.exp(shifted - log_z[:, None])
        dlogits = probs
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        self._backward(dlogits, emb, cache)
        return loss

    # -- inference ---------------------------------------------------------

    def predict_proba(self, x) -> np.ndarray:
        """Class probabilities (n, n_classes); dropout disabled."""
        logits, _, _ = self._forward(x)
        return _softmax(logits)

    def predict_proba_mc(self, x, t_passes: int, seed=None) -> np.ndarray:
        """Stack of t stochastic forward passes (t, n, n_classes).

        Dropout masks are resampled per pass from a generator seeded with
        `seed`; with dropout_rate 0 every pass equals predict_proba.
        """
        if t_passes < 1:
            raise ConfigError(f"t_passes must be >= 1, got {t_passes}")
        rng = np.random.default_rng(seed)
        passes = []
        for _ in range(t_passes):
            logits, _, _ = self._forward(x, dropout_rng=rng)
            passes.append(_softmax(logits))
        return np.stack(passes)

    def embed(self, x) -> np.ndarray:
        """Activations entering the classification layer (n, final width)."""
        _, emb, _ = self._forward(x)
        return emb

    def evaluate(self, x, y, loss: str = "zero-one") -> float:
        """Mean loss over a labeled set; loss is "zero-one" or "cross-entropy"."""
        y = np.asarray(y)
        if y.size == 0:
            raise DataError("cannot evaluate on an empty set")
        if loss == "zero-one":
            pred = np.argmax(self.predict_proba(x), axis=1)
            return float(np.mean(pred != y))
        if loss == "cross-entropy":
            probs = self.predict_proba(x)
            eps = np.finfo(np.float64).tiny
            return float(-np.mean(np.log(probs[np.arange(y.size), y] + eps)))
        raise ConfigError(f"unknown loss {loss!r}")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def instantiate(spec: NetworkSpec, seed: int) -> ModelHandle:
    """Build an untrained network with deterministic He initialization."""
    return ModelHandle(spec, init_seed=seed)


# -- checkpoint io ---------------------------------------------------------


def save_model(model: ModelHandle, path) -> None:
    """Write the versioned binary checkpoint: header + float32 parameters."""
    spec_json = json.dumps(model.spec.to_dict(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(spec_json)))
        f.write(spec_json)
        f.write(model.params.astype("<f4").tobytes())


def load_model(path) -> ModelHandle:
    """Read a checkpoint written by save_model; parameters upcast to float64."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a model checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (json_len,) = struct.unpack_from("<I", blob, 8)
    spec_end = 12 + json_len
    try:
        spec = NetworkSpec.from_dict(json.loads(blob[12:spec_end].decode("utf-8")))
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint header: {exc}") from exc
    raw = blob[spec_end:]
    if len(raw) % 4 != 0:
        raise DataError(f"{path}: truncated parameter vector")
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    model = ModelHandle(spec, init_seed=0)
    if values.size != model.n_params:
        raise DataError(
            f"{path}: checkpoint holds {values.size} parameters, "
            f"spec requires {model.n_params}"
        )
    model.params[:] = values
    model.trained = True
    return model
