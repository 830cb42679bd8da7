"""Decoder network from pose parameters to displacement pixel images.

A stack of transpose convolutions with batch normalization and ReLU
upsamples a 1x1xP pose code to a WxWx4 pixel image (front and back uv
displacement planes).  Everything is plain numpy: forward, reverse-mode
gradients, Adam, and a deterministic training loop.  One network is
trained per camera.

Images cross this module in channel-first layout (N, C, H, W); the
conversion helpers accept the pixel-image form (H, W, 4).
"""

import copy
import json
import struct

import numpy as np

from .pixelmap import PixelImage

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
CHECKPOINT_MAGIC = b"TSWT"


def _col_scatter(cols, stride, pad, h_out, w_out):
    """Scatter per-offset planes into the upsampled output.

    cols: (n, d, k, k, h, w).  Adds cols[..., ki, kj, i, j] at padded
    output position (i*stride + ki, j*stride + kj), then crops padding.
    """
    n, d, k, _, h, w = cols.shape
    hp, wp = h_out + 2 * pad, w_out + 2 * pad
    out = np.zeros((n, d, hp, wp), dtype=cols.dtype)
    for ki in range(k):
        for kj in range(k):
            out[:, :, ki:ki + (h - 1) * stride + 1:stride,
                kj:kj + (w - 1) * stride + 1:stride] += cols[:, :, ki, kj]
    if pad:
        out = out[:, :, pad:hp - pad, pad:wp - pad]
    return out


def _col_gather(g, stride, pad, k, h, w):
    """Adjoint of _col_scatter: sample the padded gradient per offset."""
    n, d = g.shape[:2]
    gp = np.pad(g, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.empty((n, d, k, k, h, w), dtype=g.dtype)
    for ki in range(k):
        for kj in range(k):
            win[:, :, ki, kj] = gp[:, :, ki:ki + (h - 1) * stride + 1:stride,
                                   kj:kj + (w - 1) * stride + 1:stride]
    return win


class TransposeConv:
    """Transpose convolution, kernel (c_in, c_out, k, k) plus bias."""

    def __init__(self, c_in, c_out, k, stride, pad, dtype=np.float32):
        self.c_in, self.c_out = c_in, c_out
        self.k, self.stride, self.pad = k, stride, pad
        self.kernel = np.zeros((c_in, c_out, k, k), dtype=dtype)
        self.bias = np.zeros(c_out, dtype=dtype)

    def spec(self):
        return ["tconv", self.c_in, self.c_out, self.k, self.stride,
                self.pad]

    def init_params(self, rng):
        fan_in = self.c_in * self.k * self.k
        fan_out = self.c_out * self.k * self.k
        a = np.sqrt(6.0 / (fan_in + fan_out))
        self.kernel[...] = rng.uniform(-a, a, self.kernel.shape)

    def state(self):
        return [("kernel", self.kernel), ("bias", self.bias)]

    def trainable(self):
        return self.state()

    def out_size(self, h):
        return (h - 1) * self.stride - 2 * self.pad + self.k

    def forward(self, x, mode, cache):
        n, c, h, w = x.shape
        xf = x.transpose(1, 0, 2, 3).reshape(c, -1)
        w2 = self.kernel.reshape(c, -1)
        cols = (w2.T @ xf).reshape(self.c_out, self.k, self.k, n, h, w)
        cols = cols.transpose(3, 0, 1, 2, 4, 5)
        y = _col_scatter(cols, self.stride, self.pad,
                         self.out_size(h), self.out_size(w))
        if cache is not None:
            cache["x"] = x
        return y + self.bias[None, :, None, None]

    def backward(self, g, cache):
        x = cache["x"]
        n, c, h, w = x.shape
        win = _col_gather(g, self.stride, self.pad, self.k, h, w)
        wf = win.transpose(1, 2, 3, 0, 4, 5).reshape(
            self.c_out * self.k * self.k, -1)
        w2 = self.kernel.reshape(c, -1)
        dx = (w2 @ wf).reshape(c, n, h, w).transpose(1, 0, 2, 3)
        xf = x.transpose(1, 0, 2, 3).reshape(c, -1)
        dk = (xf @ wf.T).reshape(self.kernel.shape)
        db = g.sum(axis=(0, 2, 3))
        return dx, {"kernel": dk, "bias": db}


class BatchNorm:
    """Per-channel normalization with running statistics for eval mode.

    Train mode normalizes by batch mean and biased variance and folds the
    same quantities into the running buffers (momentum BN_MOMENTUM).
    """

    def __init__(self, channels, dtype=np.float32):
        self.channels = channels
        self.scale = np.ones(channels, dtype=dtype)
        self.shift = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def spec(self):
        return ["bn", self.channels]

    def init_params(self, rng):
        pass

    def state(self):
        return [("scale", self.scale), ("shift", self.shift),
                ("running_mean", self.running_mean),
                ("running_var", self.running_var)]

    def trainable(self):
        return [("scale", self.scale), ("shift", self.shift)]

    def out_size(self, h):
        return h

    def forward(self, x, mode, cache):
        sh = (1, self.channels, 1, 1)
        if mode == "train":
            mu = x.mean(axis=(0, 2, 3))
            var = ((x - mu.reshape(sh)) ** 2).mean(axis=(0, 2, 3))
            self.running_mean += BN_MOMENTUM * (mu - self.running_mean)
            self.running_var += BN_MOMENTUM * (var - self.running_var)
        else:
            mu, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + np.asarray(BN_EPS, dtype=x.dtype))
        xhat = (x - mu.reshape(sh)) * inv.reshape(sh)
        if cache is not None:
            cache["xhat"] = xhat
            cache["inv"] = inv
            cache["mode"] = mode
        return self.scale.reshape(sh) * xhat + self.shift.reshape(sh)

    def backward(self, g, cache):
        sh = (1, self.channels, 1, 1)
        xhat, inv = cache["xhat"], cache["inv"]
        dscale = (g * xhat).sum(axis=(0, 2, 3))
        dshift = g.sum(axis=(0, 2, 3))
        dxhat = g * self.scale.reshape(sh)
        if cache["mode"] == "train":
            m = g.shape[0] * g.shape[2] * g.shape[3]
            t = dxhat - dxhat.mean(axis=(0, 2, 3)).reshape(sh) \
                - xhat * (dxhat * xhat).sum(axis=(0, 2, 3)).reshape(sh) / m
            dx = t * inv.reshape(sh)
        else:
            dx = dxhat * inv.reshape(sh)
        return dx, {"scale": dscale, "shift": dshift}


class Relu:
    def spec(self):
        return ["relu"]

    def init_params(self, rng):
        pass

    def state(self):
        return []

    def trainable(self):
        return []

    def out_size(self, h):
        return h

    def forward(self, x, mode, cache):
        if cache is not None:
            cache["pos"] = x > 0
        return np.maximum(x, 0)

    def backward(self, g, cache):
        return g * cache["pos"], {}


def _layer_from_spec(entry, dtype):
    kind = entry[0]
    if kind == "tconv":
        return TransposeConv(*entry[1:], dtype=dtype)
    if kind == "bn":
        return BatchNorm(entry[1], dtype=dtype)
    if kind == "relu":
        return Relu()
    raise ValueError(f"unknown layer kind {kind!r}")


class DecoderModel:
    """Layer stack mapping (n, P) pose codes to (n, 4, W, W) images."""

    def __init__(self, layers, p, width):
        self.layers = layers
        self.p = p
        self.width = width
        got = self.out_width()
        if got != width:
            raise ValueError(f"layer stack yields width {got}, "
                             f"declared {width}")

    @classmethod
    def build(cls, spec, p, width, seed=0, dtype=np.float32):
        layers = [_layer_from_spec(e, dtype) for e in spec]
        rng = np.random.Generator(np.random.PCG64(seed))
        for layer in layers:
            layer.init_params(rng)
        return cls(layers, p, width)

    def spec(self):
        return [layer.spec() for layer in self.layers]

    def out_width(self):
        h = 1
        for layer in self.layers:
            h = layer.out_size(h)
        return h

    def dtype(self):
        for _, arr in self.state_blocks():
            return arr.dtype
        return np.dtype(np.float32)

    def param_blocks(self):
        """Trainable blocks in declaration order: [(key, array)]."""
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.trainable():
                out.append(((i, name), arr))
        return out

    def state_blocks(self):
        """All persistent blocks (parameters and running statistics)."""
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.state():
                out.append(((i, name), arr))
        return out

    def n_params(self):
        return sum(a.size for _, a in self.param_blocks())

    def copy(self):
        return copy.deepcopy(self)

    def forward_batch(self, codes, mode, caches=None):
        codes = np.asarray(codes, dtype=self.dtype())
        if codes.ndim == 1:
            codes = codes[None]
        if codes.shape[1] != self.p:
            raise ValueError(f"pose code length {codes.shape[1]}, "
                             f"model expects {self.p}")
        x = codes.reshape(len(codes), self.p, 1, 1)
        for i, layer in enumerate(self.layers):
            cache = None
            if caches is not None:
                cache = {}
                caches.append(cache)
            x = layer.forward(x, mode, cache)
        return x

    def backward_batch(self, g, caches):
        grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            g, layer_grads = self.layers[i].backward(g, caches[i])
            for name, val in layer_grads.items():
                grads[(i, name)] = val
        return grads


def desk_config(p=16):
    """Small configuration: P-dim code to a 64x64x4 image."""
    spec = [
        ["tconv", p, 256, 4, 1, 0], ["bn", 256], ["relu"],
        ["tconv", 256, 128, 4, 2, 1], ["bn", 128], ["relu"],
        ["tconv", 128, 64, 4, 2, 1], ["bn", 64], ["relu"],
        ["tconv", 64, 32, 4, 2, 1], ["bn", 32], ["relu"],
        ["tconv", 32, 4, 4, 2, 1],
    ]
    return spec, p, 64


def full_config(p=90):
    """Full-scale configuration: P-dim code to a 512x512x4 image."""
    spec = [
        ["tconv", p, 512, 4, 1, 0], ["bn", 512], ["relu"],
        ["tconv", 512, 512, 4, 2, 1], ["bn", 512], ["relu"],
        ["tconv", 512, 256, 4, 2, 1], ["bn", 256], ["relu"],
        ["tconv", 256, 256, 4, 2, 1], ["bn", 256], ["relu"],
        ["tconv", 256, 128, 4, 2, 1], ["bn", 128], ["relu"],
        ["tconv", 128, 64, 4, 2, 1], ["bn", 64], ["relu"],
        ["tconv", 64, 32, 4, 2, 1], ["bn", 32], ["relu"],
        ["tconv", 32, 4, 4, 2, 1],
    ]
    return spec, p, 512


def build_model(config, seed=0, dtype=np.float32):
    spec, p, width = config
    return DecoderModel.build(spec, p, width, seed=seed, dtype=dtype)


def _pose_code(pose):
    return pose.params if hasattr(pose, "params") else np.asarray(pose)


def forward(model, pose, mode="eval"):
    """One pose to a PixelImage (the mask is full; loss masks come from
    rasterized targets)."""
    out = model.forward_batch(_pose_code(pose)[None], mode)[0]
    data = out.transpose(1, 2, 0).astype(np.float64)
    w = model.width
    return PixelImage(data, np.ones((w, w, 2), dtype=bool))


def _as_planes(img):
    if isinstance(img, PixelImage):
        return img.data.transpose(2, 0, 1)
    return np.asarray(img)


def example_loss(pred, target, mask):
    """Unsquared Frobenius norm of the masked difference."""
    d = (_as_planes(pred) - _as_planes(target)) * _as_planes(mask)
    return float(np.sqrt(np.sum(d.astype(np.float64) ** 2)))


def loss(pred, target, mask):
    """Shape-checked per-example loss; a batch sums these over its
    examples."""
    p, t, m = _as_planes(pred), _as_planes(target), _as_planes(mask)
    if p.shape != t.shape or p.shape != m.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape} "
                         f"vs {m.shape}")
    return example_loss(p, t, m)


def batch_loss_grad(pred, target, mask):
    """Batch loss (sum of per-example norms) and its gradient.

    pred, target, mask: (n, c, h, w).  At a zero-norm example the norm is
    kinked; the subgradient 0 is used.
    """
    d = (pred - target) * mask
    sq = (d.astype(np.float64) ** 2).sum(axis=(1, 2, 3))
    norms = np.sqrt(sq)
    total = float(norms.sum())
    safe = np.where(norms > 0, norms, 1.0)
    g = d * (mask / safe[:, None, None, None]).astype(d.dtype)
    g[norms == 0] = 0
    return total, g


def gradients(model, codes, targets, masks):
    """Gradient of the batch loss for every trainable block."""
    codes = np.asarray(codes)
    if len(codes) == 0:
        raise ValueError("empty batch")
    caches = []
    pred = model.forward_batch(codes, "train", caches)
    total, g = batch_loss_grad(pred, targets.astype(pred.dtype),
                               masks.astype(pred.dtype))
    grads = model.backward_batch(g, caches)
    return total, grads


class AdamState:
    """Moment buffers and step counter for Adam."""

    def __init__(self, model, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step = 0
        self.m = {k: np.zeros_like(a) for k, a in model.param_blocks()}
        self.v = {k: np.zeros_like(a) for k, a in model.param_blocks()}


def adam_step(state, model, grads):
    """Bias-corrected Adam update, in place on the model's parameters."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for key, param in model.param_blocks():
        g = grads[key]
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient in block {key}")
        m = state.m[key]
        v = state.v[key]
        m += (1 - b1) * (g - m)
        v += (1 - b2) * (g * g - v)
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        param -= update.astype(param.dtype)
    return state


def _stack_examples(examples, dtype):
    codes = np.stack([np.asarray(_pose_code(p), dtype=dtype)
                      for p, _ in examples])
    targets = np.stack([_as_planes(img) for _, img in examples])
    masks = np.stack([img.loss_mask().transpose(2, 0, 1)
                      for _, img in examples]).astype(dtype)
    return codes, targets.astype(dtype), masks


class TrainResult:
    def __init__(self, model, curve, best_epoch):
        self.model = model
        self.curve = curve  # rows: (epoch, train_loss, val_loss or nan)
        self.best_epoch = best_epoch


def train(model, train_set, val_set=None, epochs=50, seed=0, batch_size=8,
          lr=1e-3, stop_loss=None):
    """Deterministic Adam training over (pose, PixelImage) pairs.

    Reports per-epoch mean per-example losses; when a validation set is
    given, the parameters of the best-validation epoch are returned,
    otherwise the final ones.  stop_loss ends training early once the
    epoch's mean train loss falls at or below it.
    """
    if len(train_set) == 0:
        raise ValueError("empty training set")
    dtype = model.dtype()
    codes, targets, masks = _stack_examples(train_set, dtype)
    val = _stack_examples(val_set, dtype) if val_set else None
    rng = np.random.Generator(np.random.PCG64(seed))
    state = AdamState(model, lr=lr)
    curve = []
    best = (np.inf, None, -1)  # val loss, state blocks, epoch
    for epoch in range(epochs):
        order = rng.permutation(len(train_set))
        seen = 0.0
        for lo in range(0, len(order), batch_size):
            sel = order[lo:lo + batch_size]
            total, grads = gradients(model, codes[sel], targets[sel],
                                     masks[sel])
            adam_step(state, model, grads)
            seen += total
        train_loss = seen / len(train_set)
        val_loss = np.nan
        if val is not None:
            pred = model.forward_batch(val[0], "eval")
            val_loss = batch_loss_grad(pred, val[1], val[2])[0] / len(val[0])
            if val_loss < best[0]:
                best = (val_loss,
                        [(k, a.copy()) for k, a in model.state_blocks()],
                        epoch)
        curve.append((epoch, train_loss, val_loss))
        if stop_loss is not None and train_loss <= stop_loss:
            break
    out = model
    if val is not None and best[1] is not None:
        out = model.copy()
        for (key, arr), (_, saved) in zip(out.state_blocks(), best[1]):
            arr[...] = saved
    return TrainResult(out, curve, best[2])


def save_checkpoint(model, path, seed=None, step=0):
    """JSON header, then a little-endian f32 block of all state in
    declaration order, introduced by the magic bytes."""
    header = {
        "arch": model.spec(),
        "p": model.p,
        "width": model.width,
        "seed": seed,
        "step": step,
    }
    blocks = model.state_blocks()
    count = sum(a.size for _, a in blocks)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, indent=2).encode())
        fh.write(b"\n")
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", count))
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float32):
    """Rebuild a model (and its header metadata) from a checkpoint."""
    with open(path, "rb") as fh:
        raw = fh.read()
    at = raw.find(CHECKPOINT_MAGIC)
    if at < 0:
        raise ValueError("missing checkpoint magic")
    header = json.loads(raw[:at].decode())
    count = struct.unpack_from("<I", raw, at + 4)[0]
    data = np.frombuffer(raw, dtype="<f4", count=count,
                         offset=at + 8)
    model = DecoderModel.build(header["arch"], header["p"],
                               header["width"], dtype=dtype)
    pos = 0
    for _, arr in model.state_blocks():
        arr[...] = data[pos:pos + arr.size].reshape(arr.shape)
        pos += arr.size
    if pos != count:
        raise ValueError(f"checkpoint holds {count} values, "
                         f"model needs {pos}")
    return model, header
