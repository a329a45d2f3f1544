"""CNN feature extractor + temporal aggregation + FC classifier."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from spkcount import attention as attn
from spkcount.nn import functional as F
from spkcount.nn.init import kaiming_init

AGGREGATIONS = ("attention", "avgpool")


@dataclass(frozen=True)
class ModelConfig:
    conv_layers: int = 8
    conv_channels: int = 128
    kernel: tuple[int, int] = (5, 5)
    fc_layers: int = 2
    fc_width: int = 256
    n_classes: int = 4
    n_mels: int = 40
    aggregation: str = "attention"

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        if min(self.conv_layers, self.conv_channels, self.fc_width, self.n_mels, *self.kernel) < 1:
            raise ValueError("layer counts and widths must be positive")
        if self.fc_layers < 0:
            raise ValueError("fc_layers must be >= 0")
        if self.n_classes != 4:
            raise ValueError("n_classes is fixed at 4")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = list(self.kernel)
        return d


# Small enough to train in minutes on one CPU core; used by the experiments.
DESK_CONFIG = ModelConfig(conv_layers=2, conv_channels=8, fc_layers=2, fc_width=32)


class Parameter:
    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = data
        self.grad = np.zeros_like(data)

    def __repr__(self):
        return f"Parameter(shape={self.data.shape}, dtype={self.data.dtype})"


class SpeakerCounter:
    """Maps (N, T, n_mels) LMFB batches to (N, 4) log-probabilities.

    Conv layers use stride 1 and "same" padding, so the stack output is
    (N, C, T, n_mels). Averaging over the mel axis gives the (K = C, M = T)
    feature map that the aggregator collapses over time.
    """

    def __init__(self, config: ModelConfig = ModelConfig(), seed=0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        # scalar input standardisation, fitted on training data
        self.input_mean = 0.0
        self.input_std = 1.0
        self.params: OrderedDict[str, Parameter] = OrderedDict()
        self._cache = None

        seeds = iter(np.random.SeedSequence(seed).spawn(64))
        kh, kw = config.kernel
        c_in = 1
        for i in range(config.conv_layers):
            fan_in = c_in * kh * kw
            shape = (config.conv_channels, c_in, kh, kw)
            self._add(f"conv{i}.weight", kaiming_init(shape, fan_in, next(seeds), dtype))
            self._add(f"conv{i}.bias", np.zeros(config.conv_channels, dtype))
            c_in = config.conv_channels
        k = config.conv_channels
        if config.aggregation == "attention":
            ap = attn.AttentionParams.init(k, seed=next(seeds), dtype=dtype)
            self._add("attn.Wk", ap.Wk)
            self._add("attn.Wv", ap.Wv)
            self._add("attn.q", ap.q)
        width = k
        for i in range(config.fc_layers):
            self._add(f"fc{i}.weight", kaiming_init((config.fc_width, width), width, next(seeds), dtype))
            self._add(f"fc{i}.bias", np.zeros(config.fc_width, dtype))
            width = config.fc_width
        self._add("out.weight", kaiming_init((config.n_classes, width), width, next(seeds), dtype))
        self._add("out.bias", np.zeros(config.n_classes, dtype))

    def _add(self, name, data):
        self.params[name] = Parameter(np.asarray(data, dtype=self.dtype))

    def __getitem__(self, name) -> np.ndarray:
        return self.params[name].data

    @property
    def attention_params(self) -> attn.AttentionParams:
        return attn.AttentionParams(self["attn.Wk"], self["attn.Wv"], self["attn.q"])

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad[...] = 0

    def astype(self, dtype) -> "SpeakerCounter":
        """Copy of the model with parameters cast to ``dtype``."""
        clone = SpeakerCounter.__new__(SpeakerCounter)
        clone.config = self.config
        clone.dtype = np.dtype(dtype)
        clone.input_mean, clone.input_std = self.input_mean, self.input_std
        clone.params = OrderedDict((n, Parameter(p.data.astype(dtype))) for n, p in self.params.items())
        clone._cache = None
        return clone

    # ------------------------------------------------------------- forward

    def feature_map(self, x):
        """(N, T, n_mels) -> (N, K, M) conv features, caching for backward."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.config.n_mels:
            raise ValueError(f"expected (N, T, {self.config.n_mels}) input, got {x.shape}")
        pad = F.same_padding(self.config.kernel)
        h = ((x - self.input_mean) / self.input_std)[:, None].astype(self.dtype)
        conv_cache = []
        for i in range(self.config.conv_layers):
            z = F.conv2d_forward(h, self[f"conv{i}.weight"], self[f"conv{i}.bias"], pad)
            conv_cache.append((h, z))
            h = F.relu(z)
        return h.mean(axis=3), conv_cache

    def forward(self, x):
        fmap, conv_cache = self.feature_map(x)
        if self.config.aggregation == "attention":
            v, attn_cache = attn.attention_pool(fmap, self.attention_params, return_cache=True)
        else:
            v, attn_cache = attn.average_pool(fmap), None
        fc_cache = []
        h = v
        for i in range(self.config.fc_layers):
            z = F.dense_forward(h, self[f"fc{i}.weight"], self[f"fc{i}.bias"])
            fc_cache.append((h, z))
            h = F.relu(z)
        logits = F.dense_forward(h, self["out.weight"], self["out.bias"])
        log_probs = F.log_softmax(logits)
        self._cache = (conv_cache, fmap.shape, attn_cache, fc_cache, h, log_probs)
        return log_probs

    __call__ = forward

    # ------------------------------------------------------------ backward

    def backward(self, grad_log_probs):
        """Accumulates parameter gradients; returns d(loss)/d(input)."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        conv_cache, fmap_shape, attn_cache, fc_cache, h, log_probs = self._cache
        self._cache = None
        p = self.params

        g = F.log_softmax_backward(grad_log_probs, log_probs)
        g, gw, gb = F.dense_backward(g, h, self["out.weight"])
        p["out.weight"].grad += gw
        p["out.bias"].grad += gb
        for i in reversed(range(self.config.fc_layers)):
            h_in, z = fc_cache[i]
            g = F.relu_backward(g, z)
            g, gw, gb = F.dense_backward(g, h_in, self[f"fc{i}.weight"])
            p[f"fc{i}.weight"].grad += gw
            p[f"fc{i}.bias"].grad += gb

        if self.config.aggregation == "attention":
            gWk, gWv, gq, g = attn.attention_backward(g, attn_cache, self.attention_params)
            p["attn.Wk"].grad += gWk
            p["attn.Wv"].grad += gWv
            p["attn.q"].grad += gq
        else:
            g = attn.average_pool_backward(g, fmap_shape[-1])

        n_mels = self.config.n_mels
        g = np.repeat(g[..., None] / n_mels, n_mels, axis=-1)
        pad = F.same_padding(self.config.kernel)
        for i in reversed(range(self.config.conv_layers)):
            h_in, z = conv_cache[i]
            g = F.relu_backward(g, z)
            g, gw, gb = F.conv2d_backward(g, h_in, self[f"conv{i}.weight"], pad)
            p[f"conv{i}.weight"].grad += gw
            p[f"conv{i}.bias"].grad += gb
        return g[:, 0] / self.input_std

    # ----------------------------------------------------------- inference

    def predict_log_proba(self, x) -> np.ndarray:
        """Per-segment inference, one forward pass per segment.

        Running segments one at a time makes each result independent of what
        else is in the batch, so streaming and batch evaluation agree bit for
        bit.
        """
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        out = np.stack([self.forward(seg[None])[0] for seg in x]) if len(x) else np.zeros((0, 4))
        self._cache = None
        return out

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.predict_log_proba(x), axis=1)
