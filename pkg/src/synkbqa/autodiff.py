"""Dense tensors with reverse-mode automatic differentiation.

Everything is float64. Supported shapes are () scalars, (n,) vectors and
(m, n) matrices; there is no broadcasting beyond what the primitives below
define. Gradients flow only through tensors that live on a Tape, either
because an operation produced them there or because the tape was told to
watch them (parameters).
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteGradient(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "tape")

    def __init__(self, data, tape: "Tape | None" = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Tape:
    """Ordered record of primitive applications for one backward pass.

    Single-threaded by design; run distinct tapes on distinct threads.
    """

    def __init__(self):
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._watched: list[Tensor] = []

    def watch(self, tensor: Tensor) -> Tensor:
        tensor.tape = self
        self._watched.append(tensor)
        return tensor

    def record(self, out, inputs, backward_fn):
        self._ops.append((out, inputs, backward_fn))

    def backward(self, loss: Tensor) -> None:
        """Populate .grad on every watched tensor reachable from loss.

        Watched tensors not reachable from the loss get a zero gradient.
        """
        if loss.tape is not self:
            raise ValueError("loss was not produced on this tape")
        if loss.data.shape != ():
            raise ShapeError(f"backward expects a scalar loss, got shape {loss.data.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones(())}
        for out, inputs, backward_fn in reversed(self._ops):
            gout = grads.get(id(out))
            if gout is None:
                continue
            for t, g in zip(inputs, backward_fn(gout)):
                if g is None or t.tape is not self:
                    continue
                acc = grads.get(id(t))
                grads[id(t)] = g if acc is None else acc + g
        for p in self._watched:
            g = grads.get(id(p))
            p.grad = np.zeros_like(p.data) if g is None else np.asarray(g)


def _result(value, inputs, backward_fn) -> Tensor:
    tape = None
    for t in inputs:
        if t.tape is not None:
            tape = t.tape
            break
    out = Tensor(value, tape)
    if tape is not None:
        tape.record(out, tuple(inputs), backward_fn)
    return out


def _check_same_shape(op: str, a: Tensor, b: Tensor):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def constant(data) -> Tensor:
    return Tensor(data)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim not in (1, 2) or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: shape mismatch {a.data.shape} vs {b.data.shape}")
    if b.data.ndim == 1:
        def bwd(g):
            return np.outer(g, b.data), a.data.T @ g
    else:
        def bwd(g):
            return g @ b.data.T, a.data.T @ g
    return _result(a.data @ b.data, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data * c, (a,), lambda g: (g * c,))


def sigmoid(x: Tensor) -> Tensor:
    y = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-x.data)),
                 np.exp(x.data) / (1.0 + np.exp(x.data)))
    return _result(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x: Tensor) -> Tensor:
    mask = (x.data > 0).astype(np.float64)
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def concat(xs: list[Tensor]) -> Tensor:
    if not xs:
        raise ShapeError("concat: empty input list")
    for x in xs:
        if x.data.ndim != 1:
            raise ShapeError(f"concat: expected vectors, got shape {x.data.shape}")
    sizes = [x.data.shape[0] for x in xs]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(xs)))
    return _result(np.concatenate([x.data for x in xs]), xs, bwd)


def stack_scalars(xs: list[Tensor]) -> Tensor:
    for x in xs:
        if x.data.shape != ():
            raise ShapeError(f"stack_scalars: expected scalars, got shape {x.data.shape}")

    def bwd(g):
        return tuple(g[i] for i in range(len(xs)))
    return _result(np.array([x.data for x in xs]), xs, bwd)


def add_n(xs: list[Tensor]) -> Tensor:
    if not xs:
        raise ShapeError("sum: empty input list")
    for x in xs[1:]:
        _check_same_shape("sum", xs[0], x)
    return _result(sum(x.data for x in xs), xs, lambda g: tuple(g for _ in xs))


def mean_n(xs: list[Tensor]) -> Tensor:
    if not xs:
        raise ShapeError("mean: empty input list")
    for x in xs[1:]:
        _check_same_shape("mean", xs[0], x)
    inv = 1.0 / len(xs)
    return _result(sum(x.data for x in xs) * inv, xs, lambda g: tuple(g * inv for _ in xs))


def maxpool_n(xs: list[Tensor]) -> Tensor:
    """Coordinatewise max over a list of same-shape tensors.

    The value is permutation-invariant; on ties the gradient routes to the
    first list element attaining the max.
    """
    if not xs:
        raise ShapeError("maxpool: empty input list")
    for x in xs[1:]:
        _check_same_shape("maxpool", xs[0], x)
    stacked = np.stack([x.data for x in xs])
    arg = np.argmax(stacked, axis=0)

    def bwd(g):
        return tuple(g * (arg == i) for i in range(len(xs)))
    return _result(stacked.max(axis=0), xs, bwd)


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError(f"dot: expected vectors, got {a.data.shape} and {b.data.shape}")
    _check_same_shape("dot", a, b)
    return _result(a.data @ b.data, (a, b), lambda g: (g * b.data, g * a.data))


def vsum(x: Tensor) -> Tensor:
    return _result(x.data.sum(), (x,), lambda g: (g * np.ones_like(x.data),))


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of two vectors; defined as 0 when either is zero."""
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError(f"cosine: expected vectors, got {a.data.shape} and {b.data.shape}")
    _check_same_shape("cosine", a, b)
    na = np.linalg.norm(a.data)
    nb = np.linalg.norm(b.data)
    if na == 0.0 or nb == 0.0:
        return _result(np.float64(0.0), (a, b), lambda g: (np.zeros_like(a.data), np.zeros_like(b.data)))
    c = float(a.data @ b.data) / (na * nb)

    def bwd(g):
        ga = g * (b.data / (na * nb) - c * a.data / (na * na))
        gb = g * (a.data / (na * nb) - c * b.data / (nb * nb))
        return ga, gb
    return _result(np.float64(c), (a, b), bwd)


def lookup_row(table: Tensor, index: int) -> Tensor:
    """Gather one row of a matrix; the backward pass scatter-adds into it."""
    if table.data.ndim != 2:
        raise ShapeError(f"lookup_row: expected a matrix, got shape {table.data.shape}")
    if not 0 <= index < table.data.shape[0]:
        raise IndexError(f"lookup_row: row {index} out of range for {table.data.shape}")

    def bwd(g):
        full = np.zeros_like(table.data)
        full[index] = g
        return (full,)
    return _result(table.data[index].copy(), (table,), bwd)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity in evaluation mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}
_BINARY = {"matmul": matmul, "add": add, "sub": sub, "mul": mul, "cosine": cosine, "dot": dot}
_LIST = {"concat": concat, "sum": add_n, "mean": mean_n, "maxpool": maxpool_n}


def forward_primitive(op_kind: str, inputs: list[Tensor]) -> Tensor:
    """Apply a primitive by name; list-valued ops take the whole input list."""
    if op_kind in _UNARY:
        (x,) = inputs
        return _UNARY[op_kind](x)
    if op_kind in _BINARY:
        a, b = inputs
        return _BINARY[op_kind](a, b)
    if op_kind in _LIST:
        return _LIST[op_kind](list(inputs))
    raise ValueError(f"unknown primitive {op_kind!r}")


def xavier_init(shape, seed) -> Tensor:
    """Uniform init on +-sqrt(6 / (fan_in + fan_out)), reproducible per seed.

    `seed` may be an int or an already-seeded numpy Generator.
    """
    shape = tuple(int(s) for s in shape)
    if not shape or any(s <= 0 for s in shape):
        raise ValueError(f"xavier_init: invalid shape {shape}")
    fan_in = shape[0]
    fan_out = shape[-1] if len(shape) > 1 else shape[0]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Tensor(rng.uniform(-limit, limit, shape))


class Adam:
    """Adam with bias correction over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        for name, p in self.params.items():
            g = p.grad
            if g is not None and not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
        self.t += 1
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / (1 - self.beta1 ** self.t)
            vhat = self.v[name] / (1 - self.beta2 ** self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def save_matrices(path, named: dict[str, np.ndarray]) -> None:
    """Write named matrices as text blocks: `name rows cols` then row lines.

    Vectors and scalars are stored as single-row matrices. Values round-trip
    exactly at 17 significant digits.
    """
    with open(path, "w", encoding="utf-8") as f:
        for name, arr in named.items():
            if " " in name:
                raise ValueError(f"matrix name may not contain spaces: {name!r}")
            a = np.atleast_2d(np.asarray(arr, dtype=np.float64))
            f.write(f"{name} {a.shape[0]} {a.shape[1]}\n")
            for row in a:
                f.write(" ".join("%.17g" % x for x in row) + "\n")


def load_matrices(path) -> dict[str, np.ndarray]:
    named: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        parts = lines[i].split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{i + 1}: expected `name rows cols` header")
        name, rows, cols = parts[0], int(parts[1]), int(parts[2])
        if name in named:
            raise ValueError(f"{path}:{i + 1}: duplicate matrix name {name!r}")
        block = []
        for r in range(rows):
            vals = lines[i + 1 + r].split()
            if len(vals) != cols:
                raise ValueError(f"{path}:{i + 2 + r}: expected {cols} values, got {len(vals)}")
            block.append([float(v) for v in vals])
        named[name] = np.array(block, dtype=np.float64)
        i += 1 + rows
    return named
