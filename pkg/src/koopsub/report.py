"""Experiment orchestration: epsilon sweeps, tables and grid exports.

A sweep samples one training set and one independently seeded test set,
orthonormalizes a polynomial dictionary on the training states, and for every
``epsilon`` runs T-SSD, fits the Koopman matrix on the pruned dictionary and
scores the worst-case relative error on both data sets.

Reports are written without wall-clock timings unless asked for, so that
reruns with the same configuration produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dictionary import Dictionary, evaluate, monomial_dictionary, orthonormalize_on_data, restrict
from .koopman import KoopmanModel, relative_prediction_error, rrmse_max
from .linalg import InputError
from .systems import SnapshotPair, SystemSpec, discrete_step, sample_snapshots
from .tssd import TssdConfig, tssd

__all__ = [
    "ExperimentData",
    "SweepRow",
    "SweepReport",
    "EigenfunctionGrid",
    "ErrorGrid",
    "UnsupportedError",
    "prepare_data",
    "fit_tssd_model",
    "run_sweep",
    "eigenfunction_grid",
    "error_heatmap",
    "grid_axes",
    "worker_count",
    "CERTIFICATE_SLACK",
]

log = logging.getLogger(__name__)

CERTIFICATE_SLACK = 1e-6
DEFAULT_GRID = 101


class UnsupportedError(InputError):
    """Requested export is not defined for this system."""


def worker_count(n_tasks: int, requested: int | None = None) -> int:
    """Threads for ``n_tasks`` independent jobs, capped by ``KOOPMAN_THREADS``."""
    cap = os.environ.get("KOOPMAN_THREADS")
    workers = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        try:
            workers = min(workers, int(cap))
        except ValueError:
            raise InputError(f"KOOPMAN_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(workers, n_tasks))


@dataclass(frozen=True, eq=False)
class ExperimentData:
    """Training and test snapshots plus the data-orthonormalized dictionary."""

    spec: SystemSpec
    dictionary: Dictionary
    train: SnapshotPair
    test: SnapshotPair
    degree: int

    @property
    def DX(self) -> np.ndarray:
        return evaluate(self.dictionary, self.train.X)

    @property
    def DY(self) -> np.ndarray:
        return evaluate(self.dictionary, self.train.Y)


def prepare_data(
    spec: SystemSpec,
    degree: int,
    N: int,
    traj_len: int = 2,
    seed: int = 0,
    n_test: int | None = None,
    test_seed: int | None = None,
) -> ExperimentData:
    """Sample train/test sets and build the orthonormalized dictionary.

    The test set uses the same sampling strategy with ``test_seed``, which
    defaults to ``seed + 1``; ``n_test`` defaults to ``N``.
    """
    train = sample_snapshots(spec, N, traj_len, seed)
    test = sample_snapshots(
        spec,
        N if n_test is None else n_test,
        traj_len,
        seed + 1 if test_seed is None else test_seed,
    )
    base = monomial_dictionary(spec.state_dim, degree, domain=spec.domain)
    dictionary = orthonormalize_on_data(base, train.X)
    return ExperimentData(spec, dictionary, train, test, degree)


def fit_tssd_model(data: ExperimentData, config: TssdConfig, DX=None, DY=None):
    """Run T-SSD on the training data and fit the pruned model.

    Returns ``(C, trace, model)``; ``model`` is ``None`` when no subspace
    exists.
    """
    DX = data.DX if DX is None else DX
    DY = data.DY if DY is None else DY
    C, trace = tssd(DX, DY, config)
    if C.shape[1] == 0:
        return C, trace, None
    pruned = restrict(data.dictionary, C)
    model = KoopmanModel.fit(pruned, data.train.X, data.train.Y, meta={"epsilon": config.epsilon})
    return C, trace, model


@dataclass
class SweepRow:
    epsilon: float
    dim: int
    rrmse_max_train: float
    rrmse_max_test: float
    iters: int
    terminated_by: str
    wall_time: float = 0.0

    def certified(self) -> bool:
        return self.rrmse_max_train <= self.epsilon + CERTIFICATE_SLACK


@dataclass
class SweepReport:
    rows: list[SweepRow]
    metadata: dict = field(default_factory=dict)

    COLUMNS = ("epsilon", "dim", "rrmse_max_train", "rrmse_max_test", "iters", "terminated_by")

    @property
    def dims(self) -> list[int]:
        return [r.dim for r in self.rows]

    def row(self, epsilon: float) -> SweepRow:
        for r in self.rows:
            if np.isclose(r.epsilon, epsilon, rtol=0, atol=1e-12):
                return r
        raise KeyError(epsilon)

    def uncertified(self) -> list[SweepRow]:
        """Rows breaking ``rrmse_max_train <= epsilon`` (should be empty)."""
        return [r for r in self.rows if not r.certified()]

    def to_dict(self, include_timing: bool = False) -> dict:
        rows = []
        for r in self.rows:
            d = asdict(r)
            if not include_timing:
                d.pop("wall_time")
            rows.append(d)
        return {"format": "koopsub.sweep", "version": 1, "metadata": self.metadata, "rows": rows}

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"

    def to_csv(self, include_timing: bool = False) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.metadata, sort_keys=True) + "\n")
        columns = list(self.COLUMNS) + (["wall_time"] if include_timing else [])
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for r in self.rows:
            writer.writerow([_fmt(getattr(r, c)) for c in columns])
        return buf.getvalue()


def _fmt(value):
    return repr(float(value)) if isinstance(value, float) else value


def _sweep_point(data: ExperimentData, DX, DY, epsilon: float, variant: str, rtol) -> SweepRow:
    config = TssdConfig(epsilon=epsilon, variant=variant, rtol=rtol)
    start = time.perf_counter()
    C, trace = tssd(DX, DY, config)
    elapsed = time.perf_counter() - start
    pruned = restrict(data.dictionary, C)
    train_err = rrmse_max(pruned, data.train.X, data.train.Y)
    test_err = rrmse_max(pruned, data.test.X, data.test.Y)
    log.info("eps=%g dim=%d train=%.4g test=%.4g (%.1fs)", epsilon, C.shape[1], train_err, test_err, elapsed)
    return SweepRow(
        epsilon=float(epsilon),
        dim=int(C.shape[1]),
        rrmse_max_train=float(train_err),
        rrmse_max_test=float(test_err),
        iters=trace.iters_used,
        terminated_by=trace.terminated_by,
        wall_time=elapsed,
    )


def run_sweep(
    spec: SystemSpec,
    degree: int,
    epsilons,
    seed: int = 0,
    variant: str = "efficient",
    N: int = 10_000,
    traj_len: int = 2,
    n_test: int | None = None,
    test_seed: int | None = None,
    rtol: float | None = None,
    workers: int | None = None,
    data: ExperimentData | None = None,
) -> SweepReport:
    """Dimension and accuracy of the T-SSD subspace for a list of ``epsilon``.

    Parameters
    ----------
    spec : SystemSpec
    degree : int
        Total degree of the polynomial dictionary.
    epsilons : sequence of float
        Accuracy parameters; rows come back in this order.
    seed, test_seed : int
        Seeds of the training and test sets (``test_seed`` defaults to
        ``seed + 1``).
    variant : {"plain", "efficient", "monotone"}
    N, n_test, traj_len : int
        Sampling protocol, see :func:`koopsub.systems.sample_snapshots`.
    workers : int, optional
        Threads for independent epsilon points; capped by the environment
        variable ``KOOPMAN_THREADS``.
    data : ExperimentData, optional
        Reuse already prepared data instead of sampling.

    Returns
    -------
    SweepReport
    """
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise InputError("need at least one epsilon")
    if data is None:
        data = prepare_data(spec, degree, N, traj_len, seed, n_test, test_seed)
    DX, DY = data.DX, data.DY
    n_workers = worker_count(len(epsilons), workers if workers is not None else 1)
    if n_workers == 1:
        rows = [_sweep_point(data, DX, DY, e, variant, rtol) for e in epsilons]
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            rows = list(pool.map(lambda e: _sweep_point(data, DX, DY, e, variant, rtol), epsilons))
    metadata = {
        "system": data.spec.to_dict(),
        "degree": data.degree,
        "N": data.train.n_samples,
        "N_test": data.test.n_samples,
        "N_d": data.dictionary.size,
        "traj_len": data.train.meta.get("traj_len"),
        "seeds": {"train": data.train.meta.get("seed"), "test": data.test.meta.get("seed")},
        "variant": variant,
        "rtol": rtol,
    }
    return SweepReport(rows, metadata)


def grid_axes(domain, n: int = DEFAULT_GRID) -> list[np.ndarray]:
    """Evenly spaced axes over every coordinate of ``domain``."""
    box = np.asarray(domain, dtype=float).reshape(-1, 2)
    if n < 2:
        raise InputError("grid needs at least 2 points per axis")
    return [np.linspace(lo, hi, n) for lo, hi in box]


def _planar_grid(axes, n_vars: int):
    if n_vars != 2 or len(axes) != 2:
        raise UnsupportedError(f"grid export needs a 2-D state, got {n_vars} variables")
    G1, G2 = np.meshgrid(axes[0], axes[1], indexing="ij")
    return G1, G2, np.column_stack([G1.ravel(), G2.ravel()])


@dataclass
class EigenfunctionGrid:
    axes: list[np.ndarray]
    values: np.ndarray
    eigenvalue: complex
    idx: int

    def to_csv(self, header: dict | None = None) -> str:
        G1, G2 = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
        v = self.values.ravel()
        data = np.column_stack([G1.ravel(), G2.ravel(), np.abs(v), np.angle(v)])
        return _grid_csv(("x1", "x2", "abs", "phase"), data, header)


@dataclass
class ErrorGrid:
    axes: list[np.ndarray]
    values: np.ndarray

    def to_csv(self, header: dict | None = None) -> str:
        G1, G2 = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
        data = np.column_stack([G1.ravel(), G2.ravel(), self.values.ravel()])
        return _grid_csv(("x1", "x2", "error_pct"), data, header)


def _grid_csv(columns, data, header) -> str:
    buf = io.StringIO()
    if header is not None:
        buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    buf.write(",".join(columns) + "\n")
    np.savetxt(buf, data, delimiter=",", fmt="%.17g")
    return buf.getvalue()


def eigenfunction_grid(model: KoopmanModel, idx: int, axes) -> EigenfunctionGrid:
    """Values of eigenfunction ``idx`` of ``model`` on a planar grid."""
    if not 0 <= idx < model.size:
        raise IndexError(f"eigenpair index {idx} out of range for {model.size} eigenpairs")
    G1, _, pts = _planar_grid(axes, model.dictionary.n_vars)
    values = (evaluate(model.dictionary, pts) @ model.eigenvectors[:, idx]).reshape(G1.shape)
    return EigenfunctionGrid(list(axes), values, complex(model.eigenvalues[idx]), idx)


def error_heatmap(dictionary: Dictionary, K, spec: SystemSpec, axes) -> ErrorGrid:
    """Relative one-step prediction error (percent) on a planar grid.

    ``x_next`` is the true discrete step of ``spec``; grid points where the
    dictionary vanishes on ``x_next`` get ``nan``.
    """
    G1, _, pts = _planar_grid(axes, spec.state_dim)
    nxt = discrete_step(spec, pts)
    try:
        err = relative_prediction_error(dictionary, K, pts, nxt)
    except ZeroDivisionError:
        Dn = evaluate(dictionary, nxt)
        num = np.linalg.norm(Dn - evaluate(dictionary, pts) @ np.asarray(K), axis=1)
        den = np.linalg.norm(Dn, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            err = np.where(den > 0, 100.0 * num / den, np.nan)
    return ErrorGrid(list(axes), np.asarray(err).reshape(G1.shape))
