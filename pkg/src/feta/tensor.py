"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation records its parents and a closure that maps
the output gradient to parent gradients.  :func:`backward` walks that record
in reverse topological order exactly once; afterwards the record is released
so a second call on the same output raises :class:`ContractError`.

Leading dimensions are treated as batch dimensions wherever numpy
broadcasting allows it, so a stack of equally sized graphs can share one
tape.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError

_DEBUG = False
# when a list, piecewise-linear ops append their branch pattern to it
_KINKS = None


def set_debug(flag: bool) -> None:
    """Enable or disable the non-finite value assertion on every new tensor."""
    global _DEBUG
    _DEBUG = bool(flag)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_consumed")
    # make numpy defer to the reflected operators (ndarray - Tensor -> Tensor)
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        if _DEBUG and not np.all(np.isfinite(self.data)):
            raise ContractError("non-finite value entered a tensor")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self._consumed = False

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _make(data, parents, backward):
    parents = tuple(p for p in parents if p.requires_grad)
    if not parents:
        return Tensor(data)
    return Tensor(data, True, parents, backward)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), _pair(a, b, back))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), _pair(a, b, back))


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), _pair(a, b, back))


hadamard = mul


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def back(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return _make(out, (a, b), _pair(a, b, back))


def _pair(a, b, back):
    # Map a two-input backward onto whichever parents actually need grads.
    def wrapped(g):
        ga, gb = back(g)
        grads = []
        if a.requires_grad:
            grads.append(ga)
        if b.requires_grad:
            grads.append(gb)
        return grads

    return wrapped


def _unary(x, out, local):
    x = as_tensor(x)
    return _make(out, (x,), lambda g: [local(g)])


def _branch(mask):
    if _KINKS is not None:
        _KINKS.append(mask)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    _branch(mask)
    return _unary(x, np.where(mask, x.data, 0.0), lambda g: g * mask)


def leaky_relu(x, slope=0.2) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    _branch(mask)
    scale = np.where(mask, 1.0, slope)
    return _unary(x, x.data * scale, lambda g: g * scale)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _unary(x, out, lambda g: g * out)


def log(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.log(x.data), lambda g: g / x.data)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _unary(x, out, lambda g: g * (1.0 - out * out))


def absolute(x) -> Tensor:
    x = as_tensor(x)
    _branch(np.sign(x.data))
    return _unary(x, np.abs(x.data), lambda g: g * np.sign(x.data))


# ---------------------------------------------------------------------------
# structural


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = np.matmul(a.data, b.data)

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), _pair(a, b, back))


def transpose(x) -> Tensor:
    """Swap the last two axes."""
    x = as_tensor(x)
    return _unary(x, np.swapaxes(x.data, -1, -2), lambda g: np.swapaxes(g, -1, -2))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _unary(x, x.data.reshape(shape), lambda g: g.reshape(old))


def getitem(x, index) -> Tensor:
    x = as_tensor(x)
    out = x.data[index]

    def local(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return full

    return _unary(x, out, local)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        parts = np.split(g, sizes, axis=axis)
        return [p for p, t in zip(parts, tensors) if t.requires_grad]

    return _make(out, tensors, back)


def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def local(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, x.shape).copy()

    return _unary(x, out, local)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# normalisers


def softmax_rows(a, mask=None) -> Tensor:
    """Softmax along the last axis, stabilised by row-max subtraction.

    ``mask`` (boolean, broadcastable) excludes entries; every row must keep
    at least one admissible entry.
    """
    a = as_tensor(a)
    z = a.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def local(g):
        return out * (g - (g * out).sum(axis=-1, keepdims=True))

    return _unary(a, out, local)


def log_softmax_rows(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    soft = np.exp(out)
    return _unary(a, out, lambda g: g - soft * g.sum(axis=-1, keepdims=True))


def layer_norm(x, eps=1e-5) -> Tensor:
    """Normalise the last axis to zero mean and unit variance (no affine)."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def local(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return inv * (g - gm - xhat * gx)

    return _unary(x, xhat, local)


def frobenius_norm(x, axes=None) -> Tensor:
    """Frobenius norm over all entries, or over ``axes`` (e.g. ``(-2, -1)``)."""
    x = as_tensor(x)
    keep = axes is not None
    val = np.sqrt((x.data * x.data).sum(axis=axes, keepdims=keep))
    safe = np.where(val == 0.0, 1.0, val)

    def local(g):
        gk = g if not keep else g.reshape(val.shape)
        return np.where(val == 0.0, 0.0, gk * x.data / safe)

    out = val if not keep else np.squeeze(val, axis=axes)
    return _unary(x, np.asarray(out), local)


# ---------------------------------------------------------------------------
# reverse sweep


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor) -> None:
    """Accumulate d(output)/d(leaf) into ``leaf.grad`` for every leaf."""
    if output.data.size != 1:
        raise ContractError(f"backward needs a scalar output, got shape {output.shape}")
    if output._consumed:
        raise ContractError("this tape was already replayed; run a fresh forward pass")
    if not output.requires_grad:
        return
    order = _topo_order(output)
    grads = {id(output): np.ones_like(output.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    for node in order:
        if node._backward is not None:
            node._parents = ()
            node._backward = None
            node._consumed = True


# ---------------------------------------------------------------------------
# gradient checking


def _traced(f):
    global _KINKS
    _KINKS = []
    try:
        value = f().item()
        return value, _KINKS
    finally:
        _KINKS = None


def _same_branches(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def finite_diff_report(f, params, eps=1e-5, floor=1e-8, kink_retries=0) -> dict:
    """Compare tape gradients with central differences entry by entry.

    Parameters
    ----------
    f : callable
        Zero-argument function returning a scalar :class:`Tensor`; it must
        read the current values of ``params``.
    params : sequence of Tensor or mapping name -> Tensor
        Leaves to check; their ``data`` is perturbed in place and restored.
    eps : float
        Central-difference step, in (0, 1e-2].
    floor : float
        Lower bound on the denominator, so entries below difference
        round-off do not dominate.
    kink_retries : int
        With a positive value, a step that flips any ReLU, LeakyReLU or
        absolute-value branch is retried at a tenth of its size, at most this
        many times.  Entries whose every step still crosses a branch point
        are counted in ``skipped`` and left out of ``worst``.

    Returns
    -------
    dict
        ``worst`` (max ``|a - b| / max(|a|, |b|, floor)``), ``checked``,
        ``skipped`` and ``retried`` entry counts.
    """
    if not 0.0 < eps <= 1e-2:
        raise ContractError(f"eps must lie in (0, 1e-2], got {eps}")
    if isinstance(params, dict):
        params = list(params.values())
    params = list(params)
    for p in params:
        p.grad = None
    out = f()
    base = out.item()
    backward(out)
    if kink_retries:
        again, pattern = _traced(f)
    else:
        again, pattern = f().item(), None
    if again != base:
        raise ContractError("f is not deterministic: two forward passes disagree")
    worst, checked, skipped, retried = 0.0, 0, 0, 0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            step = eps
            for attempt in range(kink_retries + 1):
                flat[i] = orig + step
                up, up_pat = _traced(f) if kink_retries else (f().item(), None)
                flat[i] = orig - step
                down, down_pat = _traced(f) if kink_retries else (f().item(), None)
                flat[i] = orig
                smooth = pattern is None or (_same_branches(pattern, up_pat) and _same_branches(pattern, down_pat))
                if smooth:
                    break
                step /= 10.0
            if not smooth:
                skipped += 1
                continue
            retried += attempt > 0
            numeric = (up - down) / (2.0 * step)
            a = analytic.reshape(-1)[i]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
            checked += 1
    return {"worst": worst, "checked": checked, "skipped": skipped, "retried": retried}


def finite_diff_check(f, params, eps=1e-5, floor=1e-8):
    """Worst relative error between tape gradients and central differences.

    Shorthand for ``finite_diff_report(...)["worst"]`` without kink handling.
    """
    return finite_diff_report(f, params, eps=eps, floor=floor)["worst"]
