"""Master-equation and quantum-trajectory dynamics.

Density matrices are vectorized by stacking columns (Fortran order), so that
``vec(A X B) = (B^T kron A) vec(X)``.  The Lindblad generator is

    L(rho) = -i[H, rho] + sum_k (C_k rho C_k^dag - 1/2 {C_k^dag C_k, rho}).

Trajectories are propagated in batches: all trajectories of a block share one
``(n_traj, dim)`` array and one precomputed step propagator, and each
trajectory draws from its own random stream seeded by ``(seed, index)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .hilbert import DensityMatrix, HilbertSpace, Operator, StateVector
from .models import OpenSystem

FIRST_ORDER = "first-order-probability"
NORM_THRESHOLD = "norm-threshold"
JUMP_METHODS = (FIRST_ORDER, NORM_THRESHOLD)
INTEGRATORS = ("expm", "rk4")

MAX_RATE_STEP = 0.05
DEGENERACY_RATIO = 1e-10
BLOCK_SIZE = 2048


class DegenerateSteadyStateError(ArithmeticError):
    """The generator has more than one stationary state."""


class TrajectoryPreconditionError(ValueError):
    """The trajectory step is too coarse for the collapse rates."""


def vec(m: NDArray) -> NDArray:
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: NDArray, d: int) -> NDArray:
    return np.asarray(v).reshape(d, d, order="F")


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    space: HilbertSpace
    supermatrix: NDArray[np.complex128]

    @property
    def dim(self) -> int:
        return self.space.dim

    def apply(self, rho: DensityMatrix | NDArray) -> NDArray[np.complex128]:
        m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
        return unvec(self.supermatrix @ vec(m), self.dim)

    def propagator(self, t: float) -> NDArray[np.complex128]:
        return scipy.linalg.expm(self.supermatrix * t)


def liouvillian(system: OpenSystem) -> LindbladGenerator:
    h = system.hamiltonian.matrix
    d = system.dim
    eye = np.eye(d)
    sup = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for op in system.collapse_ops:
        c = op.matrix
        cdc = c.conj().T @ c
        sup += np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
    return LindbladGenerator(system.space, sup)


def steady_state(gen: LindbladGenerator) -> DensityMatrix:
    """Unique stationary state from the null space of the generator."""
    _, s, vh = np.linalg.svd(gen.supermatrix)
    if s[-2] < DEGENERACY_RATIO * s[0]:
        raise DegenerateSteadyStateError(
            f"generator kernel is degenerate: singular values {s[-2]:.3e}, {s[-1]:.3e} (largest {s[0]:.3e})"
        )
    rho = unvec(vh[-1].conj(), gen.dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho)
    residual = np.linalg.norm(gen.supermatrix @ vec(rho))
    if residual > 1e-8 * s[0]:
        raise ArithmeticError(f"steady-state residual {residual:.3e} too large")
    return DensityMatrix(gen.space, rho).validate()


def evolve_density(rho0: DensityMatrix, gen: LindbladGenerator, t: float) -> DensityMatrix:
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    out = unvec(gen.propagator(t) @ vec(rho0.matrix), gen.dim)
    drift = abs(np.trace(out) - np.trace(rho0.matrix))
    if drift > 1e-8:
        raise ArithmeticError(f"trace drifted by {drift:.3e}")
    return DensityMatrix(gen.space, out)


def spectral_gap(gen: LindbladGenerator) -> float:
    """Slowest non-zero relaxation rate ``min(-Re lambda)`` of the generator."""
    ev = np.linalg.eigvals(gen.supermatrix)
    ev = np.delete(ev, np.argmin(np.abs(ev)))
    return float(np.min(-ev.real))


def max_collapse_rate(system: OpenSystem) -> float:
    rates = [np.linalg.eigvalsh(c.matrix.conj().T @ c.matrix)[-1] for c in system.collapse_ops]
    return float(max(rates, default=0.0))


def emission_unraveling(system: OpenSystem) -> OpenSystem:
    """Equivalent model whose first collapse operator is proportional to ``field_op``.

    The dissipator is invariant under unitary mixing of the collapse
    operators.  When the field operator lies in their span, the mixing is
    chosen so channel 0 carries the largest possible multiple of it.
    """
    if system.emission_channel is not None:
        return system
    ops = system.collapse_ops
    A = np.stack([c.matrix.ravel() for c in ops], axis=1)
    f = system.field_op.matrix.ravel()
    w, *_ = np.linalg.lstsq(A, f, rcond=None)
    if np.linalg.norm(A @ w - f) > 1e-10 * max(1.0, np.linalg.norm(f)):
        raise ValueError(f"{system.label}: field operator is not a combination of the collapse operators")
    v = w / np.linalg.norm(w)
    rest = scipy.linalg.null_space(v.conj()[None, :]).T
    V = np.vstack([v, rest])
    mixed = tuple(
        Operator(system.space, sum(V[m, k] * ops[k].matrix for k in range(len(ops))))
        for m in range(len(ops))
    )
    return replace(system, collapse_ops=mixed, emission_channel=0)


# ---------------------------------------------------------------------------
# Monte-Carlo wave functions


@dataclass(frozen=True)
class TrajectoryConfig:
    """Trajectory ensemble settings (times in units of 1/kappa).

    ``dt`` is an upper bound: the step is shortened so that it divides the
    output spacing ``t_max / (n_out - 1)`` and, for the first-order method,
    so that no channel has a per-step jump probability above
    ``max_jump_probability``.
    """

    dt: float = 0.01
    t_max: float = 10.0
    n_traj: int = 1000
    seed: int = 0
    jump_method: str = FIRST_ORDER
    n_out: int = 101
    integrator: str = "expm"
    max_jump_probability: float = 0.01

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if int(self.n_traj) != self.n_traj or self.n_traj < 1:
            raise ValueError("n_traj must be a positive integer")
        if self.n_out < 2:
            raise ValueError("n_out must be at least 2")
        if self.jump_method not in JUMP_METHODS:
            raise ValueError(f"jump_method must be one of {JUMP_METHODS}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    index: int
    times: NDArray[np.float64]
    amplitudes: NDArray[np.complex128] | None
    jump_times: NDArray[np.float64]
    jump_channels: NDArray[np.int64]
    space: HilbertSpace

    @property
    def jumps(self) -> list[tuple[float, int]]:
        return list(zip(self.jump_times.tolist(), self.jump_channels.tolist()))

    @property
    def states(self) -> list[StateVector]:
        if self.amplitudes is None:
            return []
        return [StateVector(self.space, row) for row in self.amplitudes]


@dataclass(frozen=True)
class _Plan:
    dt: float
    stride: int
    n_out: int

    @property
    def n_steps(self) -> int:
        return self.stride * (self.n_out - 1)

    @property
    def times(self) -> NDArray[np.float64]:
        return np.arange(self.n_out) * (self.stride * self.dt)


def step_plan(system: OpenSystem, cfg: TrajectoryConfig) -> _Plan:
    rate = max_collapse_rate(system)
    if cfg.dt * rate > MAX_RATE_STEP * (1 + 1e-9):
        raise TrajectoryPreconditionError(
            f"dt={cfg.dt} too large: dt * max collapse rate = {cfg.dt * rate:.3g} > {MAX_RATE_STEP}"
        )
    target = cfg.dt
    if cfg.jump_method == FIRST_ORDER and rate > 0:
        target = min(target, cfg.max_jump_probability / rate)
    t_out = cfg.t_max / (cfg.n_out - 1)
    stride = max(1, math.ceil(t_out / target - 1e-9))
    return _Plan(dt=t_out / stride, stride=stride, n_out=cfg.n_out)


def step_propagator(h_nh: NDArray, dt: float, integrator: str = "expm") -> NDArray:
    """One-step propagator for ``d psi/dt = -i H_nh psi``.

    ``rk4`` is the classical Runge-Kutta step, which for a constant linear
    generator is the fourth-order Taylor polynomial of the exponential.
    """
    x = -1j * dt * h_nh
    if integrator == "expm":
        return scipy.linalg.expm(x)
    out = np.eye(h_nh.shape[0], dtype=complex)
    term = np.eye(h_nh.shape[0], dtype=complex)
    for k in range(1, 5):
        term = term @ x / k
        out = out + term
    return out


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def _run_block(args):
    (h_nh, cops, psi0, plan, method, integrator, seed, indices, obs_mats, keep_states) = args
    n = len(indices)
    d = psi0.shape[0]
    dt = plan.dt
    ut = step_propagator(h_nh, dt, integrator).T
    mt = sum(c.conj().T @ c for c in cops).T if cops else np.zeros((d, d))
    cts = [c.T for c in cops]
    gens = [trajectory_rng(seed, i) for i in indices]
    thresh = np.array([g.random() for g in gens])
    surv = np.ones(n)
    psi = np.tile(psi0.astype(complex), (n, 1))
    jt: list[NDArray] = []
    jr: list[NDArray] = []
    jc: list[NDArray] = []
    obs = np.zeros((len(obs_mats), plan.n_out, n))
    states = np.zeros((plan.n_out, n, d), dtype=complex) if keep_states else None

    def record(k: int, x: NDArray) -> None:
        for m, o in enumerate(obs_mats):
            obs[m, k] = np.real(np.sum(x.conj() * (x @ o.T), axis=1))
        if states is not None:
            states[k] = x

    def jump(rows: NDArray, t: float, x: NDArray) -> None:
        out = np.empty(rows.size, dtype=np.int64)
        for r_i, row in enumerate(rows):
            cand = np.array([x[row] @ ct for ct in cts])
            w = np.real(np.sum(cand.conj() * cand, axis=1))
            g = gens[row]
            k = int(np.searchsorted(np.cumsum(w) / w.sum(), g.random(), side="right"))
            k = min(k, len(cts) - 1)
            x[row] = cand[k] / math.sqrt(w[k])
            thresh[row] = g.random()
            out[r_i] = k
        jt.append(np.full(rows.size, t))
        jr.append(rows)
        jc.append(out)

    record(0, psi)
    for step in range(plan.n_steps):
        t = step * dt
        if method == FIRST_ORDER:
            rate = np.real(np.sum(psi.conj() * (psi @ mt), axis=1))
            surv *= 1.0 - dt * rate
            rows = np.flatnonzero(surv < thresh)
            if rows.size:
                jump(rows, t, psi)
                surv[rows] = 1.0
            psi = psi @ ut
            psi /= np.sqrt(np.sum(psi.real**2 + psi.imag**2, axis=1))[:, None]
            out_state = psi
        else:
            psi = psi @ ut
            nrm2 = np.sum(psi.real**2 + psi.imag**2, axis=1)
            rows = np.flatnonzero(nrm2 < thresh)
            if rows.size:
                jump(rows, t + dt, psi)
                nrm2[rows] = 1.0
            out_state = None
        if (step + 1) % plan.stride == 0:
            k = (step + 1) // plan.stride
            if out_state is None:
                out_state = psi / np.sqrt(nrm2)[:, None]
            record(k, out_state)

    if jt:
        t_all, r_all, c_all = np.concatenate(jt), np.concatenate(jr), np.concatenate(jc)
    else:
        t_all = np.zeros(0)
        r_all = c_all = np.zeros(0, dtype=np.int64)
    order = np.lexsort((t_all, r_all))
    return obs, states, t_all[order], r_all[order], c_all[order]


def _blocks(n_traj: int) -> list[NDArray]:
    idx = np.arange(n_traj)
    return [idx[i : i + BLOCK_SIZE] for i in range(0, n_traj, BLOCK_SIZE)]


def _run(system: OpenSystem, psi0: StateVector, cfg: TrajectoryConfig, obs_ops=(), keep_states=False, workers=1):
    if psi0.space != system.space:
        raise ValueError("initial state lives on a different space")
    psi0.check_normalized()
    plan = step_plan(system, cfg)
    h_nh = system.nonhermitian_hamiltonian()
    cops = [c.matrix for c in system.collapse_ops]
    obs_mats = [o.matrix for o in obs_ops]
    tasks = [
        (h_nh, cops, psi0.amplitudes, plan, cfg.jump_method, cfg.integrator, cfg.seed, b, obs_mats, keep_states)
        for b in _blocks(cfg.n_traj)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, tasks))
    else:
        results = [_run_block(t) for t in tasks]
    return plan, tasks, results


def mcwf_ensemble(
    system: OpenSystem,
    psi0: StateVector,
    cfg: TrajectoryConfig,
    store_states: bool = True,
    workers: int = 1,
) -> list[TrajectoryRecord]:
    """Run ``cfg.n_traj`` quantum-jump trajectories from ``psi0``.

    Trajectory ``i`` depends only on ``(cfg.seed, i)``; the result is the
    same for any ``workers``.
    """
    plan, tasks, results = _run(system, psi0, cfg, keep_states=store_states, workers=workers)
    times = plan.times
    records = []
    for task, (_, states, t_all, r_all, c_all) in zip(tasks, results):
        indices = task[7]
        bounds = np.searchsorted(r_all, np.arange(len(indices) + 1))
        for local, i in enumerate(indices):
            sl = slice(bounds[local], bounds[local + 1])
            amps = None if states is None else states[:, local, :].copy()
            records.append(TrajectoryRecord(int(i), times, amps, t_all[sl], c_all[sl], system.space))
    return records


@dataclass(frozen=True)
class EnsembleAverage:
    times: NDArray[np.float64]
    mean: NDArray[np.float64]
    stderr: NDArray[np.float64]
    n_traj: int


def ensemble_expectation(
    system: OpenSystem, psi0: StateVector, cfg: TrajectoryConfig, op: Operator, workers: int = 1
) -> EnsembleAverage:
    """Trajectory mean and standard error of ``<op>`` on the output grid (no states kept)."""
    plan, _, results = _run(system, psi0, cfg, obs_ops=(op,), workers=workers)
    vals = np.concatenate([r[0][0] for r in results], axis=1)
    n = vals.shape[1]
    sd = vals.std(axis=1, ddof=1) if n > 1 else np.zeros(plan.n_out)
    return EnsembleAverage(plan.times, vals.mean(axis=1), sd / math.sqrt(n), n)


@dataclass(frozen=True)
class JumpLog:
    """Flattened jump record of an ensemble, sorted by trajectory then time."""

    traj: NDArray[np.int64]
    times: NDArray[np.float64]
    channels: NDArray[np.int64]
    n_traj: int
    t_max: float
    dt: float


def jump_log(system: OpenSystem, psi0: StateVector, cfg: TrajectoryConfig, workers: int = 1) -> JumpLog:
    plan, tasks, results = _run(system, psi0, cfg, workers=workers)
    traj, times, chans = [], [], []
    for task, (_, _, t_all, r_all, c_all) in zip(tasks, results):
        traj.append(task[7][r_all])
        times.append(t_all)
        chans.append(c_all)
    return JumpLog(
        np.concatenate(traj), np.concatenate(times), np.concatenate(chans),
        cfg.n_traj, plan.n_steps * plan.dt, plan.dt,
    )


def no_jump_norms(system: OpenSystem, psi0: StateVector, times: NDArray) -> NDArray[np.float64]:
    """Squared norm of ``exp(-i H_nh t) psi0`` at each of ``times``."""
    h_nh = system.nonhermitian_hamiltonian()
    out = []
    for t in times:
        v = scipy.linalg.expm(-1j * h_nh * t) @ psi0.amplitudes
        out.append(float(np.real(np.vdot(v, v))))
    return np.array(out)

