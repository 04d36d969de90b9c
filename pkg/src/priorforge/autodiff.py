"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

Provides exactly the differentiable operations the untrained networks and
losses need: 2-D convolution (plain, transposed, depthwise-fixed), zero
insertion upsampling, batch norm, pointwise nonlinearities, channel concat,
masked mean-absolute-error, and the reductions used by the regularizers.
Plus the Adam optimizer.

Gradients accumulate in ``.grad`` buffers of tensors flagged
``requires_grad``; ``Adam.step`` zeroes them after each update.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


class GraphError(ValueError):
    """Raised on shape or usage errors in graph construction."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Dense float64 n-D array participating in one computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ----------------------------------------------------

    @staticmethod
    def _make(data, parents, backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Populate gradients of every reachable requires_grad tensor.

        Repeated calls accumulate into existing ``.grad`` buffers.
        """
        if self.data.size != 1:
            raise GraphError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
        # free intermediate grads; leaves keep their accumulated buffers
        for node in topo:
            if node._backward is not None:
                node.grad = None

    # -- arithmetic --------------------------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = Tensor._lift(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor._make(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __neg__(self):
        a = self
        return Tensor._make(-a.data, (a,), lambda g: a._accumulate(-g) if a.requires_grad else None)

    def __sub__(self, other):
        return self + (-Tensor._lift(other))

    def __rsub__(self, other):
        return Tensor._lift(other) + (-self)

    def __mul__(self, other):
        other = Tensor._lift(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._make(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor._make(a.data / b.data, (a, b), bw)

    def __pow__(self, exponent: float):
        a = self
        e = float(exponent)

        def bw(g):
            if a.requires_grad:
                a._accumulate(g * e * a.data ** (e - 1.0))

        return Tensor._make(a.data ** e, (a,), bw)

    def abs(self):
        a = self
        return Tensor._make(
            np.abs(a.data), (a,),
            lambda g: a._accumulate(g * np.sign(a.data)) if a.requires_grad else None,
        )

    def sum(self, axis=None):
        a = self

        def bw(g):
            if not a.requires_grad:
                return
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.data.shape).copy())
            else:
                a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

        return Tensor._make(a.data.sum(axis=axis), (a,), bw)

    def mean(self):
        return self.sum() / self.data.size

    def reshape(self, *shape):
        a = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Tensor._make(
            a.data.reshape(shape), (a,),
            lambda g: a._accumulate(g.reshape(a.data.shape)) if a.requires_grad else None,
        )

    def __getitem__(self, key):
        a = self

        def bw(g):
            if a.requires_grad:
                full = np.zeros_like(a.data)
                full[key] = g
                a._accumulate(full)

        return Tensor._make(a.data[key], (a,), bw)

    def max(self):
        """Global maximum; gradient flows to the first argmax entry."""
        a = self
        flat_idx = int(np.argmax(a.data))

        def bw(g):
            if a.requires_grad:
                full = np.zeros_like(a.data)
                full.flat[flat_idx] = g
                a._accumulate(full)

        return Tensor._make(a.data.max(), (a,), bw)

    def clamp_min(self, floor: float):
        """max(x, floor) elementwise; gradient flows where x > floor."""
        a = self
        f = float(floor)

        def bw(g):
            if a.requires_grad:
                a._accumulate(g * (a.data > f))

        return Tensor._make(np.maximum(a.data, f), (a,), bw)

    def item(self) -> float:
        return float(self.data)


class Parameter(Tensor):
    """Trainable tensor with a unique hierarchical name."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


# -- pointwise ops ---------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    return Tensor._make(
        np.maximum(x.data, 0.0), (x,),
        lambda g: x._accumulate(g * (x.data > 0)) if x.requires_grad else None,
    )


def softplus(x: Tensor) -> Tensor:
    """ln(1 + exp(x)), overflow-safe."""
    out = np.logaddexp(0.0, x.data)

    def bw(g):
        if x.requires_grad:
            sig = 0.5 * (1.0 + np.tanh(0.5 * x.data))
            x._accumulate(g * sig)

    return Tensor._make(out, (x,), bw)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor._make(
        x.data * c, (x,),
        lambda g: x._accumulate(g * c) if x.requires_grad else None,
    )


def pointwise(kind: str, x: Tensor, c: float | None = None) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "softplus":
        return softplus(x)
    if kind == "scale":
        return scale(x, c if c is not None else 1.0)
    raise GraphError(f"unknown pointwise kind {kind!r}")


# -- convolution machinery -------------------------------------------------

def _pad4(pad) -> tuple:
    """Normalize pad spec to (top, bottom, left, right)."""
    if isinstance(pad, int):
        return (pad, pad, pad, pad)
    if len(pad) == 2:
        return (pad[0], pad[0], pad[1], pad[1])
    return tuple(pad)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    b, c, h, w = xp.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    s0, s1, s2, s3 = xp.strides
    view = as_strided(
        xp, (b, c, kh, kw, oh, ow), (s0, s1, s2, s3, s2 * stride, s3 * stride)
    )
    return np.ascontiguousarray(view.reshape(b, c * kh * kw, oh * ow)), oh, ow


def _corr2d(x: np.ndarray, w: np.ndarray, stride: int, pad) -> np.ndarray:
    """Cross-correlation of x (B,Cin,H,W) with w (Cout,Cin,kh,kw)."""
    pt, pb, pl, pr = _pad4(pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    cout, cin, kh, kw = w.shape
    cols, oh, ow = _im2col(xp, kh, kw, stride)
    out = np.matmul(w.reshape(cout, -1), cols)
    return out.reshape(x.shape[0], cout, oh, ow)


def _corr2d_weight_grad(x, dout, stride, pad, w_shape):
    pt, pb, pl, pr = _pad4(pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    cout, cin, kh, kw = w_shape
    cols, oh, ow = _im2col(xp, kh, kw, stride)
    d = dout.reshape(dout.shape[0], cout, oh * ow)
    dw = np.matmul(d, cols.transpose(0, 2, 1)).sum(axis=0)
    return dw.reshape(w_shape)


def _corr2d_input_grad(dout, w, stride, pad, x_shape):
    """Transpose of _corr2d with respect to its input."""
    pt, pb, pl, pr = _pad4(pad)
    b, cin, h, wd = x_shape
    cout, _, kh, kw = w.shape
    _, _, oh, ow = dout.shape
    # dilate by the stride
    if stride > 1:
        d = np.zeros((b, cout, (oh - 1) * stride + 1, (ow - 1) * stride + 1))
        d[:, :, ::stride, ::stride] = dout
    else:
        d = dout
    th, tw = h + pt + pb, wd + pl + pr  # padded-input extents to reconstruct
    def_h = th - (d.shape[2] + kh - 1)
    def_w = tw - (d.shape[3] + kw - 1)
    dpad = np.pad(d, ((0, 0), (0, 0), (kh - 1, kh - 1 + def_h), (kw - 1, kw - 1 + def_w)))
    wf = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    dx_pad = _corr2d(dpad, np.ascontiguousarray(wf), 1, 0)
    return dx_pad[:, :, pt : pt + h, pl : pl + wd]


def _resolve_padding(padding, kh: int, kw: int) -> tuple:
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise GraphError("'same' padding requires odd kernel extents")
        return ((kh - 1) // 2, (kh - 1) // 2, (kw - 1) // 2, (kw - 1) // 2)
    return _pad4(padding)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding="same") -> Tensor:
    """Strided 2-D cross-correlation with optional bias.

    x: (B, Cin, H, W); weight: (Cout, Cin, kh, kw); bias: (Cout,).
    """
    if x.data.ndim != 4:
        raise GraphError(f"conv2d input must be 4-D, got {x.data.ndim}-D")
    if weight.data.ndim != 4:
        raise GraphError(f"conv2d weight must be 4-D, got {weight.data.ndim}-D")
    cout, cin, kh, kw = weight.data.shape
    if x.data.shape[1] != cin:
        raise GraphError(
            f"conv2d channel mismatch: input has {x.data.shape[1]} channels, "
            f"weight expects {cin}"
        )
    if stride not in (1, 2):
        raise GraphError(f"conv2d stride must be 1 or 2, got {stride}")
    if bias is not None and bias.data.shape != (cout,):
        raise GraphError(
            f"conv2d bias shape {bias.data.shape} does not match {cout} output channels"
        )
    pad = _resolve_padding(padding, kh, kw)
    out = _corr2d(x.data, weight.data, stride, pad)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        if x.requires_grad:
            x._accumulate(_corr2d_input_grad(g, weight.data, stride, pad, x.data.shape))
        if weight.requires_grad:
            weight._accumulate(
                _corr2d_weight_grad(x.data, g, stride, pad, weight.data.shape)
            )
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    return Tensor._make(out, parents, bw)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 2, padding: int = 1,
                     output_size: tuple | None = None) -> Tensor:
    """Transposed convolution; weight is (Cin, Cout, kh, kw).

    Computes the adjoint of conv2d(., weight viewed as (Cin->Cout), stride,
    padding) mapping (B, Cin, H, W) to (B, Cout, H', W').
    """
    cin, cout, kh, kw = weight.data.shape
    if x.data.shape[1] != cin:
        raise GraphError(
            f"conv_transpose2d channel mismatch: input has {x.data.shape[1]}, "
            f"weight expects {cin}"
        )
    b, _, h, wd = x.data.shape
    if output_size is None:
        oh = (h - 1) * stride - 2 * padding + kh
        ow = (wd - 1) * stride - 2 * padding + kw
    else:
        oh, ow = output_size
    wv = weight.data  # conv weight with (out=cin, in=cout)
    pad = _pad4(padding)
    out = _corr2d_input_grad(x.data, wv, stride, pad, (b, cout, oh, ow))
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        if x.requires_grad:
            x._accumulate(_corr2d(g, wv, stride, pad))
        if weight.requires_grad:
            weight._accumulate(
                _corr2d_weight_grad(g, x.data, stride, pad, weight.data.shape)
            )
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    return Tensor._make(out, parents, bw)


def zero_insert_upsample(x: Tensor, upx: int, upy: int, gain: float = 1.0) -> Tensor:
    """Interleave zeros: out[i*upy, j*upx] = gain * x[i, j], zero elsewhere."""
    if upx < 1 or upy < 1:
        raise GraphError(f"upsampling factors must be >= 1, got ({upx}, {upy})")
    b, c, h, w = x.data.shape
    out = np.zeros((b, c, h * upy, w * upx))
    out[:, :, ::upy, ::upx] = x.data * gain

    def bw(g):
        if x.requires_grad:
            x._accumulate(g[:, :, ::upy, ::upx] * gain)

    return Tensor._make(out, (x,), bw)


def fixed_lowpass_conv(x: Tensor, taps) -> Tensor:
    """Depthwise convolution with the frozen separable kernel outer(taps, taps).

    Same spatial extents via zero padding; for even tap counts the kernel is
    aligned one sample back (pad_left = L//2) so that the nearest-neighbor
    taps [0.5, 0.5] after 2x zero insertion reproduce exact pixel replication.
    """
    taps = np.asarray(taps, dtype=np.float64)
    if taps.ndim != 1 or taps.size == 0:
        raise GraphError("taps must be a non-empty 1-D coefficient list")
    L = taps.size
    k2d = np.outer(taps, taps)[None, None]
    pad = (L // 2, (L - 1) // 2, L // 2, (L - 1) // 2)
    b, c, h, w = x.data.shape
    xr = x.data.reshape(b * c, 1, h, w)
    out = _corr2d(xr, k2d, 1, pad).reshape(b, c, h, w)

    def bw(g):
        if x.requires_grad:
            gr = g.reshape(b * c, 1, h, w)
            dx = _corr2d_input_grad(gr, k2d, 1, pad, (b * c, 1, h, w))
            x._accumulate(dx.reshape(b, c, h, w))

    return Tensor._make(out, (x,), bw)


def batchnorm2d(x: Tensor, scale_p: Tensor, shift_p: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over batch and space, then affine."""
    b, c, h, w = x.data.shape
    if scale_p.data.shape != (c,) or shift_p.data.shape != (c,):
        raise GraphError(
            f"batchnorm2d expects scale/shift of shape ({c},), got "
            f"{scale_p.data.shape} and {shift_p.data.shape}"
        )
    m = b * h * w
    mu = x.data.mean(axis=(0, 2, 3), keepdims=True)
    var = x.data.var(axis=(0, 2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = scale_p.data[None, :, None, None] * xhat + shift_p.data[None, :, None, None]

    def bw(g):
        if shift_p.requires_grad:
            shift_p._accumulate(g.sum(axis=(0, 2, 3)))
        if scale_p.requires_grad:
            scale_p._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxhat = g * scale_p.data[None, :, None, None]
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            x._accumulate((inv / m) * (m * dxhat - s1 - xhat * s2))

    return Tensor._make(out, (x, scale_p, shift_p), bw)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise GraphError(
            f"concat_channels requires matching batch/spatial extents, got "
            f"{a.data.shape} and {b.data.shape}"
        )
    ca = a.data.shape[1]

    def bw(g):
        if a.requires_grad:
            a._accumulate(g[:, :ca])
        if b.requires_grad:
            b._accumulate(g[:, ca:])

    return Tensor._make(np.concatenate([a.data, b.data], axis=1), (a, b), bw)


def mae_loss(pred: Tensor, target, mask=None) -> Tensor:
    """Mean absolute error over entries selected by the 0/1 mask."""
    target = np.asarray(target, dtype=np.float64)
    if pred.data.shape != target.shape:
        raise GraphError(
            f"mae_loss shape mismatch: pred {pred.data.shape} vs target {target.shape}"
        )
    diff = pred.data - target
    if mask is None:
        count = diff.size
        val = np.abs(diff).mean()
        sel = None
    else:
        sel = np.broadcast_to(np.asarray(mask, dtype=np.float64), diff.shape)
        count = sel.sum()
        if count == 0:
            raise GraphError("mae_loss mask selects no entries")
        val = (np.abs(diff) * sel).sum() / count

    def bw(g):
        if pred.requires_grad:
            sg = np.sign(diff)
            if sel is not None:
                sg = sg * sel
            pred._accumulate(g * sg / count)

    return Tensor._make(val, (pred,), bw)


def backward(loss: Tensor) -> None:
    loss.backward()


# -- optimizer -------------------------------------------------------------

class Adam:
    """Bias-corrected Adam over a fixed parameter list."""

    def __init__(self, params, lr: float = 0.008, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                name = getattr(p, "name", f"param[{i}]")
                raise GraphError(f"adam step: parameter {name!r} has no gradient")
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * (g * g)
            mhat = self.m[i] / b1t
            vhat = self.v[i] / b2t
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
            p.grad = None

    def zero_grad(self):
        for p in self.params:
            p.grad = None
