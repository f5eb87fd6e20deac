"""Dense tensors with reverse-mode gradients.

The op set is deliberately small: exactly what the detection head, its
losses, and the training loop need. Tensors wrap a numpy array (float32 on
the training path, float64 on the gradient-check path) and record the
operation that produced them, so calling :meth:`Tensor.backward` on a scalar
output fills ``grad`` on every reachable leaf.

All forward ops are deterministic (fixed numpy reduction order), and every
op keeps finite inputs finite: ``sqrt`` and ``log`` clamp their arguments
away from zero rather than emitting inf/NaN.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, GraphError, ShapeError

# sqrt inputs are clamped here so the gradient of sqrt(P*M) stays bounded
# as the product approaches zero.
SQRT_EPS = 1e-9
# log inputs are clamped so BCE on saturated float32 probabilities stays finite.
LOG_EPS = 1e-12

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A dense array node in a differentiable graph.

    ``data`` is a numpy array (float32 or float64, row-major). Tensors are
    treated as immutable values after construction; ops return new tensors
    and never mutate their operands.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode gradient pass from a scalar output.

        Accumulates into ``grad`` on every node of the graph, leaves
        included. Node visitation follows a deterministic topological order.
        """
        if self.data.shape != ():
            raise GraphError(
                f"backward requires a scalar output, got shape {self.data.shape}"
            )
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones((), dtype=self.data.dtype)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def _lift(x, dtype):
    """Wrap a scalar/array as a constant Tensor of the given dtype."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data, parents, backward_fn):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    out._parents = tuple(parents)
    out._backward_fn = backward_fn
    return out


def _accum(t, g):
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


# -- elementwise arithmetic ---------------------------------------------


def add(a, b):
    a = _lift(a, np.float32)
    b = _lift(b, a.dtype)
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not conform")
    data = a.data + b.data

    def backward_fn(g):
        _accum(a, g if a.shape == data.shape else g.sum())
        _accum(b, g if b.shape == data.shape else g.sum())

    return _node(data, (a, b), backward_fn)


def sub(a, b):
    b = _lift(b, a.dtype if isinstance(a, Tensor) else np.float32)
    return add(a, mul(b, -1.0))


def mul(a, b):
    """Elementwise product.

    Shapes must match, or one side is a scalar, or the sides differ only in
    a trailing axis of size 1 (e.g. an [H,W,1] map scaling an [H,W,K] map).
    """
    a = _lift(a, np.float32)
    b = _lift(b, a.dtype)
    sa, sb = a.shape, b.shape
    if not _mul_conforms(sa, sb):
        raise ShapeError(f"mul: shapes {sa} and {sb} do not conform")
    data = a.data * b.data

    def backward_fn(g):
        _accum(a, _reduce_to(g * b.data, sa))
        _accum(b, _reduce_to(g * a.data, sb))

    return _node(data, (a, b), backward_fn)


def _mul_conforms(sa, sb):
    if sa == sb or sa == () or sb == ():
        return True
    if len(sa) == len(sb) and sa[:-1] == sb[:-1] and 1 in (sa[-1], sb[-1]):
        return True
    return False


def _reduce_to(g, shape):
    if g.shape == shape:
        return g
    if shape == ():
        return g.sum()
    # trailing-axis broadcast
    return g.sum(axis=-1, keepdims=True)


def div(a, b):
    """Elementwise quotient; the caller guarantees a nonzero denominator."""
    a = _lift(a, np.float32)
    b = _lift(b, a.dtype)
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"div: shapes {a.shape} and {b.shape} do not conform")
    data = a.data / b.data

    def backward_fn(g):
        _accum(a, _reduce_to(g / b.data, a.shape))
        _accum(b, _reduce_to(-g * a.data / (b.data * b.data), b.shape))

    return _node(data, (a, b), backward_fn)


def power(a, exponent):
    """a ** exponent for a scalar exponent.

    The base is expected to be non-negative for non-integer exponents.
    Gradient at exactly 0 with exponent < 1 is defined as 0.
    """
    a = _lift(a, np.float32)
    c = float(exponent)
    data = np.power(a.data, c)

    def backward_fn(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = c * np.power(a.data, c - 1.0)
        d = np.where(np.isfinite(d), d, 0.0)
        _accum(a, g * d)

    return _node(data, (a,), backward_fn)


def exp(a):
    a = _lift(a, np.float32)
    data = np.exp(a.data)

    def backward_fn(g):
        _accum(a, g * data)

    return _node(data, (a,), backward_fn)


def log(a):
    """Natural log; the argument is clamped to >= LOG_EPS."""
    a = _lift(a, np.float32)
    clamped = np.maximum(a.data, LOG_EPS)
    data = np.log(clamped)

    def backward_fn(g):
        _accum(a, np.where(a.data >= LOG_EPS, g / clamped, 0.0))

    return _node(data, (a,), backward_fn)


def sqrt(a):
    """Square root; the argument is clamped to >= SQRT_EPS."""
    a = _lift(a, np.float32)
    clamped = np.maximum(a.data, SQRT_EPS)
    data = np.sqrt(clamped)

    def backward_fn(g):
        _accum(a, np.where(a.data >= SQRT_EPS, g / (2.0 * data), 0.0))

    return _node(data, (a,), backward_fn)


def relu(a):
    a = _lift(a, np.float32)
    data = np.maximum(a.data, 0.0)

    def backward_fn(g):
        _accum(a, g * (a.data > 0))

    return _node(data, (a,), backward_fn)


def sigmoid(a):
    a = _lift(a, np.float32)
    x = a.data
    # branch on sign to avoid exp overflow on large negatives
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    data = data.astype(x.dtype, copy=False)

    def backward_fn(g):
        _accum(a, g * data * (1.0 - data))

    return _node(data, (a,), backward_fn)


def absolute(a):
    """|a| with sign(a) as the (sub)gradient; 0 at a == 0."""
    a = _lift(a, np.float32)
    data = np.abs(a.data)

    def backward_fn(g):
        _accum(a, g * np.sign(a.data))

    return _node(data, (a,), backward_fn)


def minimum(a, b):
    """Elementwise min; ties route the gradient to the first operand."""
    a = _lift(a, np.float32)
    b = _lift(b, a.dtype)
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"minimum: shapes {a.shape} and {b.shape} do not conform")
    take_a = a.data <= b.data
    data = np.where(take_a, a.data, b.data)

    def backward_fn(g):
        _accum(a, _reduce_to(g * take_a, a.shape))
        _accum(b, _reduce_to(g * ~take_a, b.shape))

    return _node(data, (a, b), backward_fn)


def maximum(a, b):
    """Elementwise max; ties route the gradient to the first operand."""
    a = _lift(a, np.float32)
    b = _lift(b, a.dtype)
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"maximum: shapes {a.shape} and {b.shape} do not conform")
    take_a = a.data >= b.data
    data = np.where(take_a, a.data, b.data)

    def backward_fn(g):
        _accum(a, _reduce_to(g * take_a, a.shape))
        _accum(b, _reduce_to(g * ~take_a, b.shape))

    return _node(data, (a, b), backward_fn)


def clamp_min(a, floor):
    return maximum(a, _lift(np.asarray(floor, dtype=_lift(a, np.float32).dtype), None))


def tensor_sum(a):
    """Sum of all elements, as a scalar tensor."""
    a = _lift(a, np.float32)
    data = np.asarray(a.data.sum(), dtype=a.dtype)

    def backward_fn(g):
        _accum(a, np.full(a.shape, g, dtype=a.dtype))

    return _node(data, (a,), backward_fn)


# -- structural ops ------------------------------------------------------


def concat(tensors, axis=-1):
    """Concatenate along the channel (last) axis by default."""
    tensors = [_lift(t, np.float32) for t in tensors]
    base = tensors[0].shape
    ax = axis % max(len(base), 1)
    for t in tensors[1:]:
        if len(t.shape) != len(base) or t.shape[:ax] + t.shape[ax + 1:] != base[:ax] + base[ax + 1:]:
            raise ShapeError(
                f"concat: shape {t.shape} does not conform with {base} on axis {axis}"
            )
    data = np.concatenate([t.data for t in tensors], axis=ax)
    sizes = [t.shape[ax] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return _node(data, tensors, backward_fn)


def split(a, sizes, axis=-1):
    """Inverse of concat: slice ``a`` into chunks of the given sizes."""
    a = _lift(a, np.float32)
    ax = axis % a.data.ndim
    if sum(sizes) != a.shape[ax]:
        raise ShapeError(f"split: sizes {sizes} do not cover axis of length {a.shape[ax]}")
    outs = []
    lo = 0
    for size in sizes:
        lo_c, hi_c = lo, lo + size

        def make_backward(lo_c=lo_c, hi_c=hi_c):
            def backward_fn(g):
                full = np.zeros(a.shape, dtype=a.dtype)
                sl = [slice(None)] * a.data.ndim
                sl[ax] = slice(lo_c, hi_c)
                full[tuple(sl)] = g
                _accum(a, full)

            return backward_fn

        sl = [slice(None)] * a.data.ndim
        sl[ax] = slice(lo_c, hi_c)
        outs.append(_node(a.data[tuple(sl)].copy(), (a,), make_backward()))
        lo += size
    return outs


def select_channels(a, indices):
    """Pick channels (last axis) by index; output keeps the last axis."""
    a = _lift(a, np.float32)
    idx = np.asarray(indices, dtype=np.int64)
    data = a.data[..., idx].copy()

    def backward_fn(g):
        full = np.zeros(a.shape, dtype=a.dtype)
        np.add.at(full, (..., idx), g)
        _accum(a, full)

    return _node(data, (a,), backward_fn)


def take_channel(a, c):
    """Pick one channel (last axis), dropping that axis."""
    a = _lift(a, np.float32)
    data = a.data[..., c].copy()

    def backward_fn(g):
        full = np.zeros(a.shape, dtype=a.dtype)
        full[..., c] = g
        _accum(a, full)

    return _node(data, (a,), backward_fn)


def gather_rows(a, flat_indices):
    """Gather spatial positions of an [H,W,C] map as a [P,C] tensor.

    ``flat_indices`` are row-major positions i*W + j.
    """
    a = _lift(a, np.float32)
    if a.data.ndim != 3:
        raise ShapeError(f"gather_rows expects an [H,W,C] map, got {a.shape}")
    h, w, c = a.shape
    idx = np.asarray(flat_indices, dtype=np.int64)
    flat = a.data.reshape(h * w, c)
    data = flat[idx].copy()

    def backward_fn(g):
        full = np.zeros((h * w, c), dtype=a.dtype)
        np.add.at(full, idx, g)
        _accum(a, full.reshape(h, w, c))

    return _node(data, (a,), backward_fn)


def global_avg_pool(a):
    """[H,W,C] -> [C] spatial mean."""
    a = _lift(a, np.float32)
    if a.data.ndim != 3:
        raise ShapeError(f"global_avg_pool expects an [H,W,C] map, got {a.shape}")
    h, w, _ = a.shape
    data = a.data.mean(axis=(0, 1))

    def backward_fn(g):
        _accum(a, np.broadcast_to(g / (h * w), a.shape))

    return _node(data, (a,), backward_fn)


def linear(weight, bias, x):
    """Matrix-vector product with bias: weight[out,in] @ x[in] + bias[out]."""
    weight = _lift(weight, np.float32)
    bias = _lift(bias, weight.dtype)
    x = _lift(x, weight.dtype)
    if x.data.ndim != 1 or weight.data.ndim != 2 or weight.shape[1] != x.shape[0]:
        raise ShapeError(
            f"linear: weight {weight.shape} does not conform with input {x.shape}"
        )
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias {bias.shape} does not match out dim {weight.shape[0]}")
    data = weight.data @ x.data + bias.data

    def backward_fn(g):
        _accum(weight, np.outer(g, x.data))
        _accum(bias, g)
        _accum(x, weight.data.T @ g)

    return _node(data, (weight, bias, x), backward_fn)


# -- convolution ---------------------------------------------------------


def conv2d(x, weight, bias, stride=1, pad=0):
    """2-D cross-correlation on an [H,W,Cin] map.

    weight is [k,k,Cin,Cout] with k odd, bias is [Cout]. Output spatial size
    is floor((H + 2*pad - k)/stride) + 1. Implemented as im2col + matmul.
    """
    x = _lift(x, np.float32)
    weight = _lift(weight, x.dtype)
    bias = _lift(bias, x.dtype)
    if x.data.ndim != 3 or weight.data.ndim != 4:
        raise ShapeError(
            f"conv2d: expected [H,W,Cin] input and [k,k,Cin,Cout] weight, "
            f"got {x.shape} and {weight.shape}"
        )
    k = weight.shape[0]
    if weight.shape[1] != k:
        raise ShapeError(f"conv2d: kernel must be square, got {weight.shape[:2]}")
    if k % 2 == 0:
        raise ShapeError(f"conv2d: kernel size must be odd, got {k}")
    cin, cout = weight.shape[2], weight.shape[3]
    if x.shape[2] != cin:
        raise ShapeError(
            f"conv2d: input has {x.shape[2]} channels but weight expects {cin}"
        )
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias {bias.shape} does not match Cout {cout}")
    h, w_in = x.shape[0], x.shape[1]
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (w_in + 2 * pad - k) // stride + 1
    if h_out <= 0 or w_out <= 0:
        raise ShapeError(f"conv2d: output would be empty for input {x.shape} with k={k}")

    padded = np.pad(x.data, ((pad, pad), (pad, pad), (0, 0))) if pad else x.data
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(0, 1))
    windows = windows[::stride, ::stride]            # [h_out, w_out, Cin, k, k]
    patches = windows.transpose(0, 1, 3, 4, 2).reshape(h_out * w_out, k * k * cin)
    patches = np.ascontiguousarray(patches)
    w_mat = weight.data.reshape(k * k * cin, cout)
    data = (patches @ w_mat + bias.data).reshape(h_out, w_out, cout)

    def backward_fn(g):
        g_mat = g.reshape(h_out * w_out, cout)
        _accum(bias, g_mat.sum(axis=0))
        _accum(weight, (patches.T @ g_mat).reshape(weight.shape))
        dpatch = (g_mat @ w_mat.T).reshape(h_out, w_out, k, k, cin)
        gpad = np.zeros((h + 2 * pad, w_in + 2 * pad, cin), dtype=x.dtype)
        for ki in range(k):
            for kj in range(k):
                gpad[ki:ki + h_out * stride:stride,
                     kj:kj + w_out * stride:stride] += dpatch[:, :, ki, kj]
        _accum(x, gpad[pad:pad + h, pad:pad + w_in] if pad else gpad)

    return _node(data, (x, weight, bias), backward_fn)


# -- bilinear sampling ---------------------------------------------------


def _corner_setup(coord, size):
    """Clamp a coordinate array to [0, size-1] and return interp pieces."""
    c = np.clip(coord, 0.0, size - 1.0)
    lo = np.floor(c).astype(np.int64)
    lo = np.minimum(lo, size - 2) if size > 1 else np.zeros_like(lo)
    hi = np.minimum(lo + 1, size - 1)
    frac = c - lo
    in_range = (coord > 0.0) & (coord < size - 1.0)
    return lo, hi, frac, in_range


def bilinear_sample(feature_map, i, j, c):
    """Sample channel ``c`` of an [H,W,C] map at fractional (i, j).

    Coordinates are clamped to the map before interpolation, so out-of-range
    samples reduce to the border value. Differentiable w.r.t. the map values
    and w.r.t. the coordinates (zero coordinate gradient in clamped regions).
    """
    feature_map = _lift(feature_map, np.float32)
    if feature_map.data.ndim != 3:
        raise ShapeError(f"bilinear_sample expects an [H,W,C] map, got {feature_map.shape}")
    h, w, _ = feature_map.shape
    ti = _lift(i, feature_map.dtype)
    tj = _lift(j, feature_map.dtype)
    i0, i1, di, i_in = _corner_setup(float(ti.data), h)
    j0, j1, dj, j_in = _corner_setup(float(tj.data), w)
    m = feature_map.data
    v00, v01 = m[i0, j0, c], m[i0, j1, c]
    v10, v11 = m[i1, j0, c], m[i1, j1, c]
    w00 = (1.0 - di) * (1.0 - dj)
    w01 = (1.0 - di) * dj
    w10 = di * (1.0 - dj)
    w11 = di * dj
    data = np.asarray(w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11,
                      dtype=feature_map.dtype)

    def backward_fn(g):
        gm = np.zeros(feature_map.shape, dtype=feature_map.dtype)
        gm[i0, j0, c] += g * w00
        gm[i0, j1, c] += g * w01
        gm[i1, j0, c] += g * w10
        gm[i1, j1, c] += g * w11
        _accum(feature_map, gm)
        gdi = (1.0 - dj) * (v10 - v00) + dj * (v11 - v01)
        gdj = (1.0 - di) * (v01 - v00) + di * (v11 - v10)
        _accum(ti, np.asarray(g * gdi if i_in else 0.0, dtype=ti.dtype))
        _accum(tj, np.asarray(g * gdj if j_in else 0.0, dtype=tj.dtype))

    return _node(data, (feature_map, ti, tj), backward_fn)


def bilinear_sample_per_channel(feature_map, rows, cols):
    """Vectorized per-channel sampling of an [H,W,C] map.

    ``rows`` and ``cols`` are [H',W',C] tensors of absolute fractional
    coordinates; output[p,q,c] interpolates channel c at
    (rows[p,q,c], cols[p,q,c]). Same clamp-to-border semantics and the same
    gradients as :func:`bilinear_sample`, applied elementwise.
    """
    feature_map = _lift(feature_map, np.float32)
    rows = _lift(rows, feature_map.dtype)
    cols = _lift(cols, feature_map.dtype)
    if feature_map.data.ndim != 3:
        raise ShapeError(f"expected an [H,W,C] map, got {feature_map.shape}")
    if rows.shape != cols.shape or rows.data.ndim != 3 or rows.shape[-1] != feature_map.shape[-1]:
        raise ShapeError(
            f"coordinate shapes {rows.shape}/{cols.shape} do not conform with "
            f"map {feature_map.shape}"
        )
    h, w, c = feature_map.shape
    i0, i1, di, i_in = _corner_setup(rows.data, h)
    j0, j1, dj, j_in = _corner_setup(cols.data, w)
    cidx = np.broadcast_to(np.arange(c, dtype=np.int64), rows.shape)
    m = feature_map.data
    v00 = m[i0, j0, cidx]
    v01 = m[i0, j1, cidx]
    v10 = m[i1, j0, cidx]
    v11 = m[i1, j1, cidx]
    w00 = (1.0 - di) * (1.0 - dj)
    w01 = (1.0 - di) * dj
    w10 = di * (1.0 - dj)
    w11 = di * dj
    data = (w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11).astype(feature_map.dtype)

    def backward_fn(g):
        gm = np.zeros(feature_map.shape, dtype=feature_map.dtype)
        np.add.at(gm, (i0, j0, cidx), g * w00)
        np.add.at(gm, (i0, j1, cidx), g * w01)
        np.add.at(gm, (i1, j0, cidx), g * w10)
        np.add.at(gm, (i1, j1, cidx), g * w11)
        _accum(feature_map, gm)
        gdi = (1.0 - dj) * (v10 - v00) + dj * (v11 - v01)
        gdj = (1.0 - di) * (v01 - v00) + di * (v11 - v10)
        _accum(rows, (g * gdi * i_in).astype(rows.dtype))
        _accum(cols, (g * gdj * j_in).astype(cols.dtype))

    return _node(data, (feature_map, rows, cols), backward_fn)


# -- gradient checking ---------------------------------------------------


def grad_check(build, params, eps=1e-4, coords_per_param=None, seed=0):
    """Compare analytic gradients against central finite differences.

    ``build`` maps a dict of parameter tensors to a scalar output tensor and
    must be a pure function of those tensors. The check re-executes the graph
    in float64 so rounding noise stays well below the comparison tolerance.

    ``coords_per_param`` limits the check to that many randomly chosen
    coordinates per parameter (seeded, deterministic); by default every
    coordinate is checked. Returns the worst relative error
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
    """
    params64 = {
        name: Tensor(p.data.astype(np.float64), requires_grad=True)
        for name, p in params.items()
    }
    out = build(params64)
    if out.data.shape != ():
        raise GraphError(f"grad_check requires a scalar output, got shape {out.data.shape}")
    out.backward()
    analytic = {
        name: (p.grad if p.grad is not None else np.zeros(p.shape, dtype=np.float64))
        for name, p in params64.items()
    }

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params64.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if coords_per_param is not None and n > coords_per_param:
            coords = np.sort(rng.choice(n, size=coords_per_param, replace=False))
        else:
            coords = np.arange(n)
        aflat = analytic[name].reshape(-1)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + eps
            f_plus = float(build(params64).data)
            flat[idx] = orig - eps
            f_minus = float(build(params64).data)
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(aflat[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            if rel > worst:
                worst = rel
    return worst


# -- serialization -------------------------------------------------------

TENSOR_MAGIC = b"TNSR"


def tensor_to_bytes(arr):
    """Serialize an array: magic, u32 rank, u32 dims, f32 payload (LE)."""
    arr = np.asarray(arr, dtype=np.float32)
    header = TENSOR_MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.astype("<f4").tobytes(order="C")


def tensor_from_bytes(buf, offset=0):
    """Parse one serialized tensor; returns (float32 array, next offset)."""
    start = offset
    if len(buf) < offset + 8:
        raise FormatError("truncated tensor header", offset=start)
    if buf[offset:offset + 4] != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {buf[offset:offset + 4]!r}", offset=start)
    offset += 4
    (rank,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    if rank > 8:
        raise FormatError(f"implausible tensor rank {rank}", offset=start + 4)
    if len(buf) < offset + 4 * rank:
        raise FormatError("truncated tensor dims", offset=offset)
    dims = struct.unpack_from(f"<{rank}I", buf, offset)
    offset += 4 * rank
    count = 1
    for d in dims:
        count *= d
    nbytes = 4 * count
    if len(buf) < offset + nbytes:
        raise FormatError(
            f"truncated tensor payload (need {nbytes} bytes)", offset=offset
        )
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=offset)
    offset += nbytes
    return data.reshape(dims).astype(np.float32), offset
