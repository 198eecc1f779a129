"""EDMD fitting, spectra, predictors and accuracy metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dictionary import Dictionary, evaluate
from .linalg import InputError, as_matrix, default_rtol, epsilon_apart_measure, svd

__all__ = [
    "KoopmanModel",
    "edmd_fit",
    "residual_frobenius",
    "normalize_eigenvectors",
    "eigenfunction_value",
    "predict_dictionary",
    "predict_function",
    "relative_prediction_error",
    "rrmse",
    "rrmse_max",
]

MODEL_FORMAT_VERSION = 1


def _check_pair(DX, DY):
    DX = as_matrix(DX, "DX")
    DY = as_matrix(DY, "DY")
    if DX.shape != DY.shape:
        raise InputError(f"shape mismatch: DX {DX.shape} vs DY {DY.shape}")
    return DX, DY


def _truncated_pinv_apply(M: np.ndarray, R: np.ndarray, rtol: float | None) -> np.ndarray:
    """``pinv(M) @ R`` through a rank-truncated SVD of ``M``."""
    if M.shape[1] == 0:
        return np.zeros((0, R.shape[1]))
    U, s, Vh = svd(M)
    tol = (default_rtol(M.shape) if rtol is None else rtol) * (s[0] if s.size else 0.0)
    keep = s > tol
    return Vh[keep].T @ ((U[:, keep].T @ R) / s[keep][:, None])


def residual_frobenius(DX, DY, K) -> float:
    """``||DY - DX K||_F``."""
    DX, DY = _check_pair(DX, DY)
    K = np.asarray(K)
    if K.shape != (DX.shape[1], DY.shape[1]):
        raise InputError(f"K must be {DX.shape[1]}x{DY.shape[1]}, got {K.shape}")
    return float(np.linalg.norm(DY - DX @ K))


def edmd_fit(DX, DY, rtol: float | None = None) -> tuple[np.ndarray, float]:
    """Least-squares Koopman matrix ``K = pinv(DX) @ DY``.

    Returns
    -------
    K : ndarray, shape (N_d, N_d)
    residual : float
        ``||DY - DX K||_F``.
    """
    DX, DY = _check_pair(DX, DY)
    K = _truncated_pinv_apply(DX, DY, rtol)
    return K, residual_frobenius(DX, DY, K)


def normalize_eigenvectors(vecs: np.ndarray) -> np.ndarray:
    """Unit 2-norm columns whose largest-magnitude entry is real positive."""
    vecs = np.array(vecs, dtype=complex)
    for j in range(vecs.shape[1]):
        v = vecs[:, j]
        v /= np.linalg.norm(v)
        k = int(np.argmax(np.abs(v).round(12)))
        v *= np.conj(v[k]) / abs(v[k])
        v[k] = abs(v[k])
    return vecs


def _sorted_eig(K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, vecs = np.linalg.eig(K)
    # descending modulus, then descending real part; conjugate partners share
    # both, so they end up adjacent (positive imaginary part first)
    order = np.lexsort((-lam.imag, -lam.real.round(12), -np.abs(lam).round(12)))
    return lam[order], normalize_eigenvectors(vecs[:, order])


@dataclass(frozen=True, eq=False)
class KoopmanModel:
    """A dictionary together with its fitted Koopman matrix and spectrum.

    ``eigenvectors[:, j]`` is the right eigenvector of ``K`` for
    ``eigenvalues[j]``; the associated eigenfunction is ``D(x) @ v``.
    """

    dictionary: Dictionary
    K: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float = float("nan")
    meta: dict = field(default_factory=dict)

    @classmethod
    def fit(cls, dictionary: Dictionary, X, Y, rtol: float | None = None, meta=None) -> "KoopmanModel":
        DX = evaluate(dictionary, X)
        DY = evaluate(dictionary, Y)
        K, residual = edmd_fit(DX, DY, rtol)
        return cls.from_matrix(dictionary, K, residual, meta)

    @classmethod
    def from_matrix(cls, dictionary: Dictionary, K, residual: float = float("nan"), meta=None):
        K = np.asarray(K, dtype=float)
        if K.shape != (dictionary.size, dictionary.size):
            raise InputError(f"K must be {dictionary.size}x{dictionary.size}, got {K.shape}")
        if K.size:
            lam, vecs = _sorted_eig(K)
        else:
            lam, vecs = np.zeros(0, complex), np.zeros((0, 0), complex)
        return cls(dictionary, K, lam, vecs, float(residual), dict(meta or {}))

    @property
    def size(self) -> int:
        return self.dictionary.size

    def eigenfunctions(self, X) -> np.ndarray:
        """Values of all eigenfunctions on the rows of ``X`` (``N x N_d``)."""
        return evaluate(self.dictionary, X) @ self.eigenvectors

    def to_dict(self) -> dict:
        return {
            "format": "koopsub.model",
            "version": MODEL_FORMAT_VERSION,
            "dictionary": self.dictionary.to_dict(),
            "K": self.K.tolist(),
            "residual": self.residual,
            "eigenvalues": {"real": self.eigenvalues.real.tolist(), "imag": self.eigenvalues.imag.tolist()},
            "eigenvectors": {
                "real": self.eigenvectors.real.tolist(),
                "imag": self.eigenvectors.imag.tolist(),
            },
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KoopmanModel":
        if data.get("version", MODEL_FORMAT_VERSION) != MODEL_FORMAT_VERSION:
            raise InputError(f"unsupported model format version {data.get('version')}")
        dictionary = Dictionary.from_dict(data["dictionary"])
        n = dictionary.size
        K = np.asarray(data["K"], dtype=float).reshape(n, n)
        lam = np.asarray(data["eigenvalues"]["real"]) + 1j * np.asarray(data["eigenvalues"]["imag"])
        vr = np.asarray(data["eigenvectors"]["real"], dtype=float).reshape(n, n)
        vi = np.asarray(data["eigenvectors"]["imag"], dtype=float).reshape(n, n)
        residual = data.get("residual")
        return cls(
            dictionary,
            K,
            lam.astype(complex),
            vr + 1j * vi,
            float("nan") if residual is None else float(residual),
            dict(data.get("meta", {})),
        )

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "KoopmanModel":
        return cls.from_dict(json.loads(text))


def eigenfunction_value(model: KoopmanModel, idx: int, x) -> complex | np.ndarray:
    """``phi_idx(x) = D(x) v_idx``; returns an array when ``x`` holds several states."""
    if not 0 <= idx < model.size:
        raise IndexError(f"eigenpair index {idx} out of range for {model.size} eigenpairs")
    x = np.asarray(x, dtype=float)
    values = evaluate(model.dictionary, np.atleast_2d(x)) @ model.eigenvectors[:, idx]
    return complex(values[0]) if x.ndim == 1 else values


def predict_dictionary(model: KoopmanModel, x0, steps: int) -> np.ndarray:
    """Rows ``D(x0) K^k`` for ``k = 0..steps``."""
    if steps < 0:
        raise InputError("steps must be nonnegative")
    row = evaluate(model.dictionary, np.atleast_2d(np.asarray(x0, dtype=float)))[0]
    out = np.empty((steps + 1, model.size))
    out[0] = row
    for k in range(1, steps + 1):
        out[k] = out[k - 1] @ model.K
    return out


def predict_function(model: KoopmanModel, w, x0, steps: int) -> np.ndarray:
    """Predicted values ``D(x0) K^k w`` of the function ``D(.) w``.

    When ``w`` is a stored eigenvector the prediction is evaluated through the
    eigenvalue directly, giving the exact geometric sequence.
    """
    w = np.asarray(w)
    if w.shape != (model.size,):
        raise InputError(f"coefficient vector must have length {model.size}, got shape {w.shape}")
    if steps < 0:
        raise InputError("steps must be nonnegative")
    for j in range(model.size):
        v = model.eigenvectors[:, j]
        if np.array_equal(w, v):
            phi0 = eigenfunction_value(model, j, x0)
            return phi0 * model.eigenvalues[j] ** np.arange(steps + 1)
    return predict_dictionary(model, x0, steps) @ w


def relative_prediction_error(dictionary: Dictionary, K, x, x_next) -> float | np.ndarray:
    """One-step relative linear prediction error in percent.

    ``100 * ||D(x_next) - D(x) K|| / ||D(x_next)||``. Accepts single states or
    arrays of states (one row each); returns a float or an array accordingly.
    """
    single = np.asarray(x).ndim == 1
    Dx = evaluate(dictionary, np.atleast_2d(np.asarray(x, dtype=float)))
    Dn = evaluate(dictionary, np.atleast_2d(np.asarray(x_next, dtype=float)))
    num = np.linalg.norm(Dn - Dx @ np.asarray(K), axis=1)
    den = np.linalg.norm(Dn, axis=1)
    if np.any(den == 0.0):
        raise ZeroDivisionError("relative prediction error undefined where D(x_next) = 0")
    err = 100.0 * num / den
    return float(err[0]) if single else err


def rrmse(DX, DY, K, w) -> float:
    """Relative RMS one-step prediction error of the function ``D(.) w``.

    ``||(DY - DX K) w|| / ||DY w||`` with ``w`` real or complex.
    """
    DX, DY = _check_pair(DX, DY)
    w = np.asarray(w)
    num = np.linalg.norm((DY - DX @ K) @ w)
    den = np.linalg.norm(DY @ w)
    if den == 0.0:
        raise ZeroDivisionError("function vanishes on the data")
    return float(num / den)


def rrmse_max(dictionary: Dictionary, X, Y, rtol: float | None = None) -> float:
    """Worst relative RMS error over all functions in the span of ``dictionary``.

    Computed as the eps-apart measure of ``range(D(X))`` and ``range(D(Y))``.
    An empty dictionary scores 0.
    """
    if dictionary.size == 0:
        return 0.0
    return epsilon_apart_measure(evaluate(dictionary, X), evaluate(dictionary, Y), rtol)
