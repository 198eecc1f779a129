"""Polynomial dictionaries of observables.

A dictionary maps a state ``x`` (length ``n_vars``) to a row of ``N_d`` values.
It is stored as a list of monomial exponent vectors together with a linear
``transform`` (``N_raw x N_d``): ``D(x) = monomials(z) @ transform`` where
``z = (x - center) / scale`` is an optional affine change of variables. The
span of all polynomials up to a given degree does not depend on that change,
but monomials of a box mapped to ``[-1, 1]`` are far better conditioned than
monomials of, say, ``[1, 5]``. Keeping the raw monomials explicit makes
dictionaries serializable, so a fitted model can be re-evaluated on new data
from its JSON file alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb

import numpy as np
from scipy.linalg import qr, solve_triangular

from .linalg import InputError, RankDeficiencyError, as_matrix, rank

__all__ = [
    "Dictionary",
    "DictionarySizeError",
    "monomial_terms",
    "monomial_dictionary",
    "evaluate",
    "orthonormalize_on_data",
    "restrict",
]

FORMAT_VERSION = 1
MAX_TERMS = 50_000


class DictionarySizeError(InputError):
    pass


@dataclass(frozen=True, eq=False)
class Dictionary:
    n_vars: int
    terms: np.ndarray
    transform: np.ndarray
    center: np.ndarray | None = None
    scale: np.ndarray | None = None

    def __post_init__(self):
        terms = np.asarray(self.terms, dtype=np.int64).reshape(-1, self.n_vars)
        transform = np.asarray(self.transform, dtype=float)
        center = np.zeros(self.n_vars) if self.center is None else np.asarray(self.center, dtype=float)
        scale = np.ones(self.n_vars) if self.scale is None else np.asarray(self.scale, dtype=float)
        center = np.broadcast_to(center, (self.n_vars,)).copy()
        scale = np.broadcast_to(scale, (self.n_vars,)).copy()
        if not (np.all(np.isfinite(center)) and np.all(np.isfinite(scale)) and np.all(scale > 0)):
            raise InputError("center must be finite and scale finite and positive")
        if transform.ndim != 2 or transform.shape[0] != terms.shape[0]:
            raise InputError(
                f"transform must have {terms.shape[0]} rows, got shape {transform.shape}"
            )
        if np.any(terms < 0):
            raise InputError("monomial exponents must be nonnegative")
        if len({tuple(t) for t in terms}) != len(terms):
            raise InputError("monomial terms must be distinct")
        for name, value in (("terms", terms), ("transform", transform), ("center", center), ("scale", scale)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_raw(self) -> int:
        return self.terms.shape[0]

    @property
    def size(self) -> int:
        """Number of dictionary functions ``N_d``."""
        return self.transform.shape[1]

    @property
    def max_degree(self) -> int:
        return int(self.terms.sum(axis=1).max()) if self.n_raw else 0

    def __call__(self, X) -> np.ndarray:
        return evaluate(self, X)

    def with_transform(self, transform) -> "Dictionary":
        return Dictionary(self.n_vars, self.terms, transform, self.center, self.scale)

    def standardize(self, X) -> np.ndarray:
        """The mapped variables ``(X - center) / scale``."""
        return (X - self.center) / self.scale

    def to_dict(self) -> dict:
        return {
            "format": "koopsub.dictionary",
            "version": FORMAT_VERSION,
            "n_vars": self.n_vars,
            "max_degree": self.max_degree,
            "terms": self.terms.tolist(),
            "transform": self.transform.tolist(),
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Dictionary":
        if data.get("version", FORMAT_VERSION) != FORMAT_VERSION:
            raise InputError(f"unsupported dictionary format version {data.get('version')}")
        n_vars = int(data["n_vars"])
        terms = np.asarray(data["terms"], dtype=np.int64).reshape(-1, n_vars)
        transform = np.asarray(data["transform"], dtype=float).reshape(terms.shape[0], -1)
        return cls(n_vars, terms, transform, data.get("center"), data.get("scale"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Dictionary":
        return cls.from_dict(json.loads(text))


def monomial_terms(n_vars: int, max_degree: int) -> np.ndarray:
    """Exponent vectors of total degree <= ``max_degree`` in graded-lex order.

    Within one degree the vectors are sorted lexicographically descending, so
    for two variables the order is ``1, x1, x2, x1^2, x1 x2, x2^2, ...``.
    """
    if n_vars < 1 or max_degree < 0:
        raise InputError(f"need n_vars >= 1 and max_degree >= 0, got {n_vars}, {max_degree}")
    count = comb(n_vars + max_degree, max_degree)
    if count > MAX_TERMS:
        raise DictionarySizeError(f"{count} monomials exceeds the cap of {MAX_TERMS}")
    rows = []
    for degree in range(max_degree + 1):
        # each multiset of variable indices is one monomial; lexicographic
        # order of the index tuples equals descending lex order of exponents
        for idx in combinations_with_replacement(range(n_vars), degree):
            e = [0] * n_vars
            for i in idx:
                e[i] += 1
            rows.append(e)
    return np.array(rows, dtype=np.int64).reshape(-1, n_vars)


def monomial_dictionary(n_vars: int, max_degree: int, domain=None) -> Dictionary:
    """All monomials up to ``max_degree``.

    With ``domain`` (an ``n_vars x 2`` box) the monomials are taken in the
    variables mapped affinely onto ``[-1, 1]``; the span is the same.
    """
    terms = monomial_terms(n_vars, max_degree)
    center = scale = None
    if domain is not None:
        box = np.asarray(domain, dtype=float).reshape(n_vars, 2)
        if np.any(box[:, 1] <= box[:, 0]):
            raise InputError(f"empty domain box {box.tolist()}")
        center = box.mean(axis=1)
        scale = 0.5 * (box[:, 1] - box[:, 0])
    return Dictionary(n_vars, terms, np.eye(len(terms)), center, scale)


def _raw_monomials(terms: np.ndarray, X: np.ndarray) -> np.ndarray:
    N, n = X.shape
    max_deg = int(terms.max()) if terms.size else 0
    powers = np.ones((max_deg + 1, N, n))
    for k in range(1, max_deg + 1):
        powers[k] = powers[k - 1] * X
    out = np.ones((N, terms.shape[0]))
    for j in range(n):
        out *= powers[terms[:, j], :, j].T
    return out


def evaluate(dictionary: Dictionary, X) -> np.ndarray:
    """Evaluate the dictionary on the rows of ``X``; returns ``N x N_d``."""
    X = as_matrix(X, "X")
    if X.shape[1] != dictionary.n_vars:
        if X.shape[0] == dictionary.n_vars and X.shape[1] == 1:
            X = X.T
        else:
            raise InputError(
                f"states have {X.shape[1]} coordinates, dictionary expects {dictionary.n_vars}"
            )
    return _raw_monomials(dictionary.terms, dictionary.standardize(X)) @ dictionary.transform


def orthonormalize_on_data(dictionary: Dictionary, X, rtol: float | None = None) -> Dictionary:
    """Change basis so that the evaluation on ``X`` has orthonormal columns.

    The span of the dictionary is unchanged. Two passes of Householder QR
    are applied; the second one cleans up the loss of orthogonality caused by
    ill-conditioned monomial columns.
    """
    M = evaluate(dictionary, X)
    if M.shape[1] == 0:
        return dictionary
    if rank(M, rtol) < M.shape[1]:
        raise RankDeficiencyError(
            f"dictionary evaluation ({M.shape[0]}x{M.shape[1]}) is rank deficient on the data"
        )
    transform = np.array(dictionary.transform)
    Z = dictionary.standardize(as_matrix(X))
    for _ in range(2):
        R = qr(M, mode="r")[0][: M.shape[1]]
        # fix signs so the transform is deterministic
        R *= np.sign(np.diag(R))[:, None]
        transform = solve_triangular(R, transform.T, trans="T", lower=False).T
        M = _raw_monomials(dictionary.terms, Z) @ transform
    return dictionary.with_transform(transform)


def restrict(dictionary: Dictionary, C) -> Dictionary:
    """Dictionary ``D(.) @ C``; a zero-column ``C`` gives the empty dictionary."""
    C = as_matrix(C, "C") if np.size(C) else np.zeros((dictionary.size, 0))
    if C.shape[0] != dictionary.size:
        raise InputError(f"coefficient matrix has {C.shape[0]} rows, dictionary has {dictionary.size}")
    return dictionary.with_transform(dictionary.transform @ C)
