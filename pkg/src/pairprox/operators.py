"""Compositional operators, possibly set-valued, and sampling-based
monotonicity checks for operator pairs.

An operator is built from a small closed set of variants (affine maps,
componentwise sign blocks, signed permutations, registered pointwise maps,
positive scalings, sums and block stacks). Evaluation returns an axis-aligned
set: a single point, or a box when some sign coordinate sits at zero.
"""
from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import linalg
from .errors import DimensionMismatchError, UnknownRegistryKeyError
from .rng import SplitMix64

MONOTONE_SLACK = 1e-12


# ---------------------------------------------------------------------------
# value sets


@dataclass(frozen=True, eq=False)
class ValueSet:
    """Axis-aligned set of operator values: a point iff lower == upper."""

    lower: np.ndarray
    upper: np.ndarray

    @staticmethod
    def singleton(x: np.ndarray) -> "ValueSet":
        x = np.asarray(x, dtype=float)
        return ValueSet(x, x)

    @staticmethod
    def box(lower: np.ndarray, upper: np.ndarray) -> "ValueSet":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if lower.shape != upper.shape or np.any(lower > upper):
            raise ValueError("box bounds must satisfy lower <= upper componentwise")
        return ValueSet(lower, upper)

    @property
    def is_singleton(self) -> bool:
        return bool(np.array_equal(self.lower, self.upper))

    @property
    def value(self) -> np.ndarray:
        if not self.is_singleton:
            raise ValueError("value set is not a single point")
        return self.lower

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


class Selection(Enum):
    """Canonical selections from a box value."""

    LOW = "extreme-low"
    MID = "midpoint"
    HIGH = "extreme-high"


def select(vs: ValueSet, strategy: Selection) -> np.ndarray:
    if vs.is_singleton or strategy is Selection.MID:
        return 0.5 * (vs.lower + vs.upper)
    if strategy is Selection.LOW:
        return vs.lower
    return vs.upper


# ---------------------------------------------------------------------------
# operator variants

_POINTWISE_REGISTRY: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda t: t,
    "negation": lambda t: -t,
    "abs-sin": lambda t: np.abs(np.sin(t)),
    "cos-abs": lambda t: np.cos(np.abs(t)),
    "neg-cos-abs": lambda t: -np.cos(np.abs(t)),
}


def register_pointwise(name: str, fn: Callable[[np.ndarray], np.ndarray]) -> None:
    """Extend the componentwise-map registry with a single-valued function."""
    _POINTWISE_REGISTRY[name] = fn


class OperatorExpr:
    """Base class; subclasses are immutable value objects."""

    def evaluate(self, x: np.ndarray) -> ValueSet:
        raise NotImplementedError

    @property
    def dim(self) -> int | None:
        """Ambient dimension, or None when the variant fits any dimension."""
        return None

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = linalg.as_vector(x)
        if self.dim is not None and x.size != self.dim:
            raise DimensionMismatchError(f"operator dim {self.dim}, input dim {x.size}")
        return x


def evaluate(op: OperatorExpr, x: np.ndarray) -> ValueSet:
    return op.evaluate(x)


def evaluate_point(op: OperatorExpr, x: np.ndarray) -> np.ndarray:
    """Evaluate an operator that must be single-valued at x."""
    vs = op.evaluate(x)
    if not vs.is_singleton:
        raise ValueError("operator is set-valued at this point")
    return vs.value


@dataclass(frozen=True, eq=False)
class Affine(OperatorExpr):
    """x -> A x + c."""

    matrix: np.ndarray
    offset: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", linalg.as_matrix(self.matrix))
        off = np.zeros(self.matrix.shape[0]) if self.offset is None else linalg.as_vector(self.offset)
        if off.size != self.matrix.shape[0]:
            raise DimensionMismatchError("offset length must match matrix rows")
        object.__setattr__(self, "offset", off)

    @property
    def dim(self) -> int | None:
        return self.matrix.shape[1]

    def evaluate(self, x: np.ndarray) -> ValueSet:
        x = self._check_dim(x)
        return ValueSet.singleton(self.matrix @ x + self.offset)


def identity_operator(n: int) -> Affine:
    return Affine(np.eye(n))


@dataclass(frozen=True, eq=False)
class SignBlock(OperatorExpr):
    """x -> scale * (Sign(x_{sel(0)}), ..., Sign(x_{sel(n-1)})), Sign set-valued at 0."""

    scale: float
    selector: tuple[int, ...]

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("sign-block scale must be nonnegative")
        sel = tuple(int(i) for i in self.selector)
        if sorted(sel) != list(range(len(sel))):
            raise ValueError("selector must be a permutation of 0..n-1")
        object.__setattr__(self, "selector", sel)

    @property
    def dim(self) -> int | None:
        return len(self.selector)

    def evaluate(self, x: np.ndarray) -> ValueSet:
        x = self._check_dim(x)
        picked = x[list(self.selector)]
        lower = self.scale * np.sign(picked)
        upper = lower.copy()
        at_zero = picked == 0.0
        lower[at_zero] = -self.scale
        upper[at_zero] = self.scale
        return ValueSet(lower, upper)


@dataclass(frozen=True, eq=False)
class Permutation(OperatorExpr):
    """x -> (signs_i * x_{perm(i)}): coordinate shuffle with sign flips."""

    perm: tuple[int, ...]
    signs: tuple[float, ...] | None = None

    def __post_init__(self):
        perm = tuple(int(i) for i in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise ValueError("perm must be a permutation of 0..n-1")
        object.__setattr__(self, "perm", perm)
        signs = (1.0,) * len(perm) if self.signs is None else tuple(float(s) for s in self.signs)
        if len(signs) != len(perm) or any(s not in (-1.0, 1.0) for s in signs):
            raise ValueError("signs must be +-1 per coordinate")
        object.__setattr__(self, "signs", signs)

    @property
    def dim(self) -> int | None:
        return len(self.perm)

    def as_matrix(self) -> np.ndarray:
        n = len(self.perm)
        m = np.zeros((n, n))
        for i, (j, s) in enumerate(zip(self.perm, self.signs)):
            m[i, j] = s
        return m

    def evaluate(self, x: np.ndarray) -> ValueSet:
        x = self._check_dim(x)
        return ValueSet.singleton(np.array(self.signs) * x[list(self.perm)])


def swap_operator() -> Permutation:
    """The 2-D coordinate swap (x1, x2) -> (x2, x1)."""
    return Permutation((1, 0))


@dataclass(frozen=True, eq=False)
class Pointwise(OperatorExpr):
    """Named componentwise single-valued map from the registry."""

    name: str

    def evaluate(self, x: np.ndarray) -> ValueSet:
        x = self._check_dim(x)
        try:
            fn = _POINTWISE_REGISTRY[self.name]
        except KeyError:
            raise UnknownRegistryKeyError(f"no pointwise map named {self.name!r}") from None
        return ValueSet.singleton(np.asarray(fn(x), dtype=float))


@dataclass(frozen=True, eq=False)
class Scale(OperatorExpr):
    """x -> gamma * inner(x) with gamma > 0."""

    gamma: float
    inner: OperatorExpr

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("scale factor must be positive")

    @property
    def dim(self) -> int | None:
        return self.inner.dim

    def evaluate(self, x: np.ndarray) -> ValueSet:
        vs = self.inner.evaluate(x)
        return ValueSet(self.gamma * vs.lower, self.gamma * vs.upper)


@dataclass(frozen=True, eq=False)
class Sum(OperatorExpr):
    """Minkowski sum of term values."""

    terms: tuple[OperatorExpr, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("sum needs at least one term")
        dims = {t.dim for t in terms if t.dim is not None}
        if len(dims) > 1:
            raise DimensionMismatchError(f"sum terms disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self) -> int | None:
        for t in self.terms:
            if t.dim is not None:
                return t.dim
        return None

    def evaluate(self, x: np.ndarray) -> ValueSet:
        x = self._check_dim(x)
        lower = np.zeros(x.size)
        upper = np.zeros(x.size)
        for t in self.terms:
            vs = t.evaluate(x)
            lower = lower + vs.lower
            upper = upper + vs.upper
        return ValueSet(lower, upper)


@dataclass(frozen=True, eq=False)
class Stack(OperatorExpr):
    """Block-structured map: each (start, stop, op) block reads and writes the
    coordinate slice [start, stop); uncovered coordinates map to zero."""

    ambient_dim: int
    blocks: tuple[tuple[int, int, OperatorExpr], ...]

    def __post_init__(self):
        blocks = tuple((int(a), int(b), op) for a, b, op in self.blocks)
        covered: set[int] = set()
        for start, stop, op in blocks:
            if not (0 <= start < stop <= self.ambient_dim):
                raise ValueError(f"slice [{start}, {stop}) out of range for dim {self.ambient_dim}")
            span = set(range(start, stop))
            if covered & span:
                raise ValueError("stack blocks must not overlap")
            if op.dim is not None and op.dim != stop - start:
                raise DimensionMismatchError("block operator dimension does not match its slice")
            covered |= span
        object.__setattr__(self, "blocks", blocks)

    @property
    def dim(self) -> int | None:
        return self.ambient_dim

    def evaluate(self, x: np.ndarray) -> ValueSet:
        x = self._check_dim(x)
        lower = np.zeros(self.ambient_dim)
        upper = np.zeros(self.ambient_dim)
        for start, stop, op in self.blocks:
            vs = op.evaluate(x[start:stop])
            lower[start:stop] = vs.lower
            upper[start:stop] = vs.upper
        return ValueSet(lower, upper)


# ---------------------------------------------------------------------------
# canonical instances used throughout tests and demos


def trig_block_operator() -> Sum:
    """The 2-D single-valued operator (x1, x2) -> (x2 + |sin x1|, x1 - cos|x2|).

    Not monotone on its own, but forms a monotone pair with the swap kernel.
    """
    return Sum(
        (
            Permutation((1, 0)),
            Stack(2, ((0, 1, Pointwise("abs-sin")), (1, 2, Pointwise("neg-cos-abs")))),
        )
    )


def sign_swap_operator() -> Sum:
    """The 2-D set-valued operator (x1, x2) -> (Sign(x2) + x1, Sign(x1) - x2)."""
    return Sum((SignBlock(1.0, (1, 0)), Affine(np.diag([1.0, -1.0]))))


# ---------------------------------------------------------------------------
# pair monotonicity checks


class Verdict(Enum):
    MONOTONE_EVIDENCE = "monotone-evidence"
    VIOLATION_FOUND = "violation-found"


@dataclass(frozen=True, eq=False)
class PairMonotonicityReport:
    """Outcome of sampling <F(x)-F(y), v(x)-v(y)> over a box.

    Sampling gathers evidence or finds counterexamples; it never certifies
    monotonicity. The witness re-evaluates exactly to `witness_inner` by
    applying `witness_selections` to (F(x), F(y), v(x), v(y)).
    """

    samples: int
    min_quotient: float
    min_inner: float
    witness_x: np.ndarray = field(repr=False)
    witness_y: np.ndarray = field(repr=False)
    witness_selections: tuple[Selection, Selection, Selection, Selection]
    verdict: Verdict

    @property
    def violation_value(self) -> float | None:
        return self.min_inner if self.verdict is Verdict.VIOLATION_FOUND else None


def _selection_candidates(vs: ValueSet) -> list[tuple[Selection, np.ndarray]]:
    if vs.is_singleton:
        return [(Selection.MID, vs.value)]
    return [(s, select(vs, s)) for s in (Selection.LOW, Selection.MID, Selection.HIGH)]


def _resolve_box(
    f: OperatorExpr, v: OperatorExpr, box: tuple | None
) -> tuple[np.ndarray, np.ndarray]:
    dim = f.dim if f.dim is not None else v.dim
    if box is None:
        if dim is None:
            raise DimensionMismatchError("box required when operator dimension is ambiguous")
        return np.full(dim, -10.0), np.full(dim, 10.0)
    lower, upper = box
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if lower.size == 1 and dim is not None:
        lower = np.full(dim, lower[0])
    if upper.size == 1 and dim is not None:
        upper = np.full(dim, upper[0])
    if lower.shape != upper.shape or np.any(lower > upper):
        raise ValueError("invalid sampling box")
    return lower, upper


def check_pair_monotone(
    f: OperatorExpr,
    v: OperatorExpr,
    box: tuple | None = None,
    samples: int = 10_000,
    seed: int = 0,
    include: Sequence[tuple[np.ndarray, np.ndarray]] = (),
) -> PairMonotonicityReport:
    """Sample point pairs and test <F(x)-F(y), v(x)-v(y)> >= 0 over all
    canonical selections from set-valued evaluations.

    `include` pairs are scanned before the seeded draws, so known critical
    directions (kernel vectors, published counterexamples) can be pinned.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    lower, upper = _resolve_box(f, v, box)
    rng = SplitMix64(seed)

    count = 0
    best = {"quot": np.inf, "inner": np.inf, "quot_w": None, "inner_w": None}

    def scan(x: np.ndarray, y: np.ndarray) -> None:
        nonlocal count
        dx2 = float(np.sum((x - y) ** 2))
        if dx2 == 0.0:
            return
        count += 1
        fxs = _selection_candidates(f.evaluate(x))
        fys = _selection_candidates(f.evaluate(y))
        vxs = _selection_candidates(v.evaluate(x))
        vys = _selection_candidates(v.evaluate(y))
        for (sfx, fx), (sfy, fy), (svx, vx), (svy, vy) in itertools.product(fxs, fys, vxs, vys):
            inner = float((fx - fy) @ (vx - vy))
            quot = inner / dx2
            sel = (sfx, sfy, svx, svy)
            if quot < best["quot"]:
                best["quot"] = quot
                best["quot_w"] = (x.copy(), y.copy(), sel)
            if inner < best["inner"]:
                best["inner"] = inner
                best["inner_w"] = (x.copy(), y.copy(), sel)

    for x, y in include:
        scan(linalg.as_vector(x), linalg.as_vector(y))
    for _ in range(samples):
        scan(rng.uniform_box(lower, upper), rng.uniform_box(lower, upper))

    if count == 0:
        raise ValueError("no usable sample pairs (all coincided)")
    violated = best["inner"] < -MONOTONE_SLACK
    wx, wy, wsel = best["inner_w"] if violated else best["quot_w"]
    return PairMonotonicityReport(
        samples=count,
        min_quotient=best["quot"],
        min_inner=best["inner"],
        witness_x=wx,
        witness_y=wy,
        witness_selections=wsel,
        verdict=Verdict.VIOLATION_FOUND if violated else Verdict.MONOTONE_EVIDENCE,
    )


def reevaluate_witness(
    f: OperatorExpr, v: OperatorExpr, report: PairMonotonicityReport
) -> float:
    """Recompute the witness inner product from scratch."""
    sfx, sfy, svx, svy = report.witness_selections
    fx = select(f.evaluate(report.witness_x), sfx)
    fy = select(f.evaluate(report.witness_y), sfy)
    vx = select(v.evaluate(report.witness_x), svx)
    vy = select(v.evaluate(report.witness_y), svy)
    return float((fx - fy) @ (vx - vy))


def check_pair_strongly_monotone(
    f: OperatorExpr,
    v: OperatorExpr,
    box: tuple | None = None,
    samples: int = 10_000,
    seed: int = 0,
    include: Sequence[tuple[np.ndarray, np.ndarray]] = (),
) -> float:
    """Sampled lower-bound estimate of the strong-monotonicity modulus:
    the minimum observed quotient, clamped at zero. Not a certificate."""
    report = check_pair_monotone(f, v, box, samples, seed, include)
    return max(0.0, report.min_quotient)


# ---------------------------------------------------------------------------
# JSON serialization


def operator_to_json(op: OperatorExpr, matrix_dir: str | None = None, _counter: list | None = None) -> dict:
    """Serialize the variant tree. Matrices embed inline unless `matrix_dir`
    is given, in which case they are written to files and referenced."""
    if _counter is None:
        _counter = [0]
    if isinstance(op, Affine):
        doc: dict = {"kind": "affine", "offset": list(map(float, op.offset))}
        if matrix_dir is None:
            doc["matrix"] = [[float(x) for x in row] for row in op.matrix]
        else:
            _counter[0] += 1
            fname = f"matrix-{_counter[0]}.mat"
            linalg.write_matrix(os.path.join(matrix_dir, fname), op.matrix)
            doc["matrix-file"] = fname
        return doc
    if isinstance(op, SignBlock):
        return {"kind": "sign-block", "scale": float(op.scale), "selector": list(op.selector)}
    if isinstance(op, Permutation):
        return {"kind": "permutation", "permutation": list(op.perm), "signs": list(op.signs)}
    if isinstance(op, Pointwise):
        return {"kind": "pointwise", "registry-name": op.name}
    if isinstance(op, Scale):
        return {"kind": "scale", "scale": float(op.gamma), "inner": operator_to_json(op.inner, matrix_dir, _counter)}
    if isinstance(op, Sum):
        return {"kind": "sum", "terms": [operator_to_json(t, matrix_dir, _counter) for t in op.terms]}
    if isinstance(op, Stack):
        return {
            "kind": "stack",
            "dim": op.ambient_dim,
            "blocks": [
                {"start": a, "stop": b, "op": operator_to_json(o, matrix_dir, _counter)}
                for a, b, o in op.blocks
            ],
        }
    raise TypeError(f"cannot serialize {type(op).__name__}")


def operator_from_json(doc: dict, base_dir: str = ".") -> OperatorExpr:
    kind = doc.get("kind")
    if kind == "affine":
        if "matrix-file" in doc:
            matrix = linalg.read_matrix(os.path.join(base_dir, doc["matrix-file"]))
        elif "matrix" in doc:
            matrix = np.asarray(doc["matrix"], dtype=float)
        else:
            raise ValueError("affine operator needs 'matrix' or 'matrix-file'")
        offset = np.asarray(doc["offset"], dtype=float) if "offset" in doc else None
        return Affine(matrix, offset)
    if kind == "sign-block":
        return SignBlock(float(doc.get("scale", 1.0)), tuple(doc["selector"]))
    if kind == "permutation":
        signs = tuple(doc["signs"]) if "signs" in doc else None
        return Permutation(tuple(doc["permutation"]), signs)
    if kind == "pointwise":
        name = doc["registry-name"]
        if name not in _POINTWISE_REGISTRY:
            raise UnknownRegistryKeyError(f"no pointwise map named {name!r}")
        return Pointwise(name)
    if kind == "scale":
        return Scale(float(doc["scale"]), operator_from_json(doc["inner"], base_dir))
    if kind == "sum":
        return Sum(tuple(operator_from_json(t, base_dir) for t in doc["terms"]))
    if kind == "stack":
        blocks = tuple(
            (int(b["start"]), int(b["stop"]), operator_from_json(b["op"], base_dir))
            for b in doc["blocks"]
        )
        return Stack(int(doc["dim"]), blocks)
    raise ValueError(f"unknown operator kind {kind!r}")


def load_operator(path: str) -> OperatorExpr:
    with open(path) as fh:
        doc = json.load(fh)
    return operator_from_json(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def save_operator(path: str, op: OperatorExpr, matrix_dir: str | None = None) -> None:
    if matrix_dir is None:
        matrix_dir_resolved = None
    else:
        matrix_dir_resolved = matrix_dir
        os.makedirs(matrix_dir, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(operator_to_json(op, matrix_dir_resolved), fh, indent=2)
        fh.write("\n")
