"""Benchmark dynamical systems and snapshot generation.

Continuous-time vector fields are discretized with one classical RK4 step of
size ``dt`` (forward Euler is available for ablations). Initial conditions
are drawn uniformly from the domain box with numpy's PCG64 generator, which
is part of the snapshot file format ``v1``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .linalg import InputError

__all__ = [
    "SystemSpec",
    "SnapshotPair",
    "DomainError",
    "TrajectoryEscapeError",
    "hopf",
    "duffing",
    "harmonic_consensus",
    "linear_custom",
    "ring_adjacency",
    "get_system",
    "SYSTEMS",
    "vector_field",
    "discrete_step",
    "simulate_trajectory",
    "sample_snapshots",
    "harmonic_mean",
    "write_snapshots",
    "read_snapshots",
]

SNAPSHOT_FORMAT = "snapshots v1"
PRNG = "PCG64"


class DomainError(InputError):
    """State outside the set where the vector field is defined."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = None if state is None else np.asarray(state)


class TrajectoryEscapeError(DomainError):
    """A discrete step left the extended safety box around the domain."""


@dataclass(frozen=True, eq=False)
class SystemSpec:
    name: str
    state_dim: int
    domain: np.ndarray
    dt: float
    params: dict = field(default_factory=dict)
    integrator: str = "rk4"

    def __post_init__(self):
        domain = np.asarray(self.domain, dtype=float).reshape(self.state_dim, 2)
        if np.any(domain[:, 0] >= domain[:, 1]):
            raise InputError(f"empty domain box {domain.tolist()}")
        if not self.dt > 0:
            raise InputError(f"dt must be positive, got {self.dt}")
        if self.integrator not in ("rk4", "euler"):
            raise InputError(f"unknown integrator {self.integrator!r}")
        object.__setattr__(self, "domain", domain)

    @property
    def lower(self) -> np.ndarray:
        return self.domain[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.domain[:, 1]

    def safety_box(self) -> np.ndarray:
        """Domain box widened by its own width on every side."""
        width = self.upper - self.lower
        return np.column_stack([self.lower - width, self.upper + width])

    def replace(self, **changes) -> "SystemSpec":
        fields = dict(
            name=self.name,
            state_dim=self.state_dim,
            domain=self.domain,
            dt=self.dt,
            params=self.params,
            integrator=self.integrator,
        )
        fields.update(changes)
        return SystemSpec(**fields)

    def to_dict(self) -> dict:
        params = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v) for k, v in self.params.items()}
        return {
            "name": self.name,
            "state_dim": self.state_dim,
            "domain": self.domain.tolist(),
            "dt": self.dt,
            "params": params,
            "integrator": self.integrator,
        }


def hopf(dt: float = 0.01, domain=((-2.0, 2.0), (-2.0, 2.0)), **kw) -> SystemSpec:
    return SystemSpec("hopf", 2, domain, dt, **kw)


def duffing(dt: float = 0.02, domain=((-2.0, 2.0), (-2.0, 2.0)), **kw) -> SystemSpec:
    return SystemSpec("duffing", 2, domain, dt, **kw)


def ring_adjacency(n: int) -> np.ndarray:
    A = np.zeros((n, n))
    for i in range(n):
        A[i, (i + 1) % n] = A[(i + 1) % n, i] = 1.0
    return A


def harmonic_consensus(n_agents: int = 5, dt: float = 0.01, adjacency=None, domain=None, **kw) -> SystemSpec:
    adjacency = ring_adjacency(n_agents) if adjacency is None else np.asarray(adjacency, dtype=float)
    if adjacency.shape != (n_agents, n_agents):
        raise InputError(f"adjacency must be {n_agents}x{n_agents}")
    if domain is None:
        domain = [(1.0, 5.0)] * n_agents
    return SystemSpec("harmonic_consensus", n_agents, domain, dt, params={"adjacency": adjacency}, **kw)


def linear_custom(A, dt: float = 0.01, domain=None, **kw) -> SystemSpec:
    """Continuous-time linear system ``xdot = A x``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise InputError("A must be square")
    if domain is None:
        domain = [(-1.0, 1.0)] * n
    return SystemSpec("linear_custom", n, domain, dt, params={"A": A}, **kw)


SYSTEMS = {
    "hopf": hopf,
    "duffing": duffing,
    "harmonic_consensus": harmonic_consensus,
}


def get_system(name: str, **kwargs) -> SystemSpec:
    aliases = {"consensus": "harmonic_consensus"}
    name = aliases.get(name, name)
    try:
        factory = SYSTEMS[name]
    except KeyError:
        raise InputError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}") from None
    return factory(**{k: v for k, v in kwargs.items() if v is not None})


def harmonic_mean(x) -> np.ndarray:
    x = np.atleast_2d(x)
    return x.shape[1] / np.sum(1.0 / x, axis=1)


def _hopf_field(x):
    x1, x2 = x[:, 0], x[:, 1]
    r2 = x1**2 + x2**2
    return np.column_stack([x1 + 2 * x2 - x1 * r2, -2 * x1 + x2 - x2 * r2])


def _duffing_field(x):
    x1, x2 = x[:, 0], x[:, 1]
    return np.column_stack([x2, -0.5 * x2 + x1 * (1 - x1**2)])


def _consensus_field(x, adjacency):
    if np.any(x <= 0):
        bad = x[np.any(x <= 0, axis=1)][0]
        raise DomainError(f"harmonic-mean consensus needs positive states, got {bad.tolist()}", bad)
    n = x.shape[1]
    ups = harmonic_mean(x)
    coupling = x @ adjacency.T - x * adjacency.sum(axis=1)
    return n * x**2 / ups[:, None] ** 2 * coupling


def vector_field(spec: SystemSpec, x) -> np.ndarray:
    """Right-hand side ``xdot = f(x)``; accepts one state or rows of states."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    if xs.shape[1] != spec.state_dim:
        raise InputError(f"{spec.name} states have {spec.state_dim} coordinates, got {xs.shape[1]}")
    if spec.name == "hopf":
        out = _hopf_field(xs)
    elif spec.name == "duffing":
        out = _duffing_field(xs)
    elif spec.name == "harmonic_consensus":
        out = _consensus_field(xs, np.asarray(spec.params["adjacency"]))
    elif spec.name == "linear_custom":
        out = xs @ np.asarray(spec.params["A"]).T
    else:
        raise InputError(f"no vector field for system {spec.name!r}")
    return out[0] if single else out


def discrete_step(spec: SystemSpec, x) -> np.ndarray:
    """Advance one time step ``dt`` with the configured integrator."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    h = spec.dt
    if spec.integrator == "euler":
        out = xs + h * vector_field(spec, xs)
    else:
        k1 = vector_field(spec, xs)
        k2 = vector_field(spec, xs + 0.5 * h * k1)
        k3 = vector_field(spec, xs + 0.5 * h * k2)
        k4 = vector_field(spec, xs + h * k3)
        out = xs + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    box = spec.safety_box()
    bad = ~np.all(np.isfinite(out) & (out >= box[:, 0]) & (out <= box[:, 1]), axis=1)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise TrajectoryEscapeError(
            f"{spec.name}: step from {xs[k].tolist()} left the safety box", xs[k]
        )
    return out[0] if single else out


def simulate_trajectory(spec: SystemSpec, x0, steps: int) -> np.ndarray:
    """States ``x_0 .. x_steps`` (rows) of the discretized system."""
    out = np.empty((steps + 1, spec.state_dim))
    out[0] = x0
    for k in range(steps):
        out[k + 1] = discrete_step(spec, out[k])
    return out


@dataclass(frozen=True, eq=False)
class SnapshotPair:
    X: np.ndarray
    Y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if X.shape != Y.shape:
            raise InputError(f"X {X.shape} and Y {Y.shape} differ in shape")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]


def sample_snapshots(spec: SystemSpec, N: int, traj_len: int = 2, seed: int = 0) -> SnapshotPair:
    """Snapshot pairs ``(x_i, T(x_i))`` from uniformly seeded trajectories.

    ``N / (traj_len - 1)`` initial conditions are drawn uniformly from the
    domain; each trajectory contributes its consecutive state pairs, in
    trajectory order.
    """
    if N < 1 or traj_len < 2:
        raise InputError("need N >= 1 and traj_len >= 2")
    pairs_per_traj = traj_len - 1
    if N % pairs_per_traj:
        raise InputError(f"N = {N} is not divisible by traj_len - 1 = {pairs_per_traj}")
    n_traj = N // pairs_per_traj
    rng = np.random.Generator(np.random.PCG64(seed))
    x0 = spec.lower + (spec.upper - spec.lower) * rng.random((n_traj, spec.state_dim))
    states = np.empty((traj_len, n_traj, spec.state_dim))
    states[0] = x0
    for k in range(1, traj_len):
        try:
            states[k] = discrete_step(spec, states[k - 1])
        except DomainError as exc:
            j = int(np.argmax(np.all(states[k - 1] == exc.state, axis=1)))
            raise type(exc)(f"{exc} (trajectory with initial condition {x0[j].tolist()})", x0[j]) from exc
    X = states[:-1].transpose(1, 0, 2).reshape(N, spec.state_dim)
    Y = states[1:].transpose(1, 0, 2).reshape(N, spec.state_dim)
    meta = {"system": spec.name, "dt": spec.dt, "seed": int(seed), "traj_len": traj_len}
    return SnapshotPair(X, Y, meta)


def write_snapshots(path, pair: SnapshotPair) -> None:
    meta = pair.meta
    header = f"# {SNAPSHOT_FORMAT}; system={meta.get('system', 'unknown')}; dt={meta.get('dt', 'nan')}; seed={meta.get('seed', 'none')}"
    buf = io.StringIO()
    np.savetxt(buf, np.hstack([pair.X, pair.Y]), delimiter=",", fmt="%.17g")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        fh.write(buf.getvalue())


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_snapshots(path) -> SnapshotPair:
    with open(path) as fh:
        first = fh.readline().strip()
        if not first.startswith("#") or SNAPSHOT_FORMAT not in first:
            raise InputError(f"{path}: missing '# {SNAPSHOT_FORMAT}' header")
        meta = {}
        for part in first.lstrip("#").split(";")[1:]:
            key, _, value = part.strip().partition("=")
            meta[key] = _parse_value(value)
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] % 2:
        raise InputError(f"{path}: odd number of columns ({data.shape[1]})")
    n = data.shape[1] // 2
    return SnapshotPair(data[:, :n], data[:, n:], meta)
