"""Exact and effective (polariton) models of driven, damped atom-cavity systems.

All energies and rates are angular frequencies in units of the cavity decay
rate kappa, with hbar = 1.  Hamiltonians are Hermitian and written in the
frame rotating at the drive laser frequency; dissipation lives only in the
collapse operators, so the non-Hermitian trajectory Hamiltonian is
``H - (i/2) sum_k C_k^dag C_k``.

Four models are built:

* ``build_jc``            two-level atom in a truncated cavity, driven through the cavity
* ``build_eit``           four-level EIT-Kerr atom in a truncated cavity
* ``build_jc_effective``  ground state plus the two vacuum-Rabi polaritons (3 levels)
* ``derive_eit_effective`` ground state plus the three first-manifold EIT polaritons (4 levels)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .hilbert import (
    HilbertSpace,
    Operator,
    StateVector,
    atomic_transition,
    fock_annihilation,
    identity,
    sigma_z,
    tensor,
)

# Face-value reading of the effective Hamiltonians' anti-Hermitian terms
# corresponds to a scale of 1.0; 0.5 gives polariton population decay rates
# equal to kappa/gamma weighted by the photon/atom content of each polariton.
DEFAULT_EFFECTIVE_DECAY_SCALE = 0.5

EIGEN_FIDELITY_TOL = 1e-8
EIGEN_ENERGY_TOL = 1e-9


@dataclass(frozen=True)
class JCParams:
    """Driven Jaynes-Cummings parameters (units of kappa).

    ``theta`` is the drive detuning; ``theta = g`` puts the laser on the
    lower vacuum Rabi resonance.
    """

    g: float
    theta: float
    pump: float
    gamma: float
    n_max: int = 4
    kappa: float = 1.0

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"coupling g must be positive, got {self.g}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.pump < 0:
            raise ValueError(f"pump must be non-negative, got {self.pump}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be a positive integer, got {self.n_max}")


@dataclass(frozen=True)
class EITParams:
    """Four-level EIT-Kerr parameters (units of kappa).

    Level 1 is the ground state; the cavity couples 1-3 (``g1``) and 2-4
    (``g2``), the classical coupling laser couples 2-3 (``omega_c``).
    ``delta`` and ``Delta`` detune levels 3 and 4.
    """

    g1: float
    g2: float
    omega_c: float
    delta: float
    Delta: float
    pump: float
    gamma1: float
    gamma2: float
    gamma3: float
    n_max: int = 4
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("g1", "g2", "omega_c", "kappa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("gamma1", "gamma2", "gamma3", "pump"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be a positive integer, got {self.n_max}")


@dataclass(frozen=True)
class EffectiveEITParams:
    eps_plus: float
    eps_minus: float
    omega_plus: float
    omega_minus: float
    omega_r: float
    gamma0: float
    gamma1_plus: float
    gamma1_minus: float
    c0: float
    c_plus: float
    c_minus: float

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in self.__dict__.items()}


# Reference parameter sets (dashed and solid curves).
JC_DASHED = JCParams(g=6.0, theta=6.0, pump=0.1, gamma=0.1)
JC_SOLID = JCParams(g=20.0, theta=20.0, pump=0.5, gamma=0.1)
EIT_DASHED = EITParams(g1=6.0, g2=6.0, omega_c=6.0, delta=0.2, Delta=0.0, pump=0.7,
                       gamma1=0.1, gamma2=0.1, gamma3=0.1)
EIT_SOLID = EITParams(g1=6.0, g2=6.0, omega_c=12.0, delta=4.0, Delta=0.0, pump=0.1,
                      gamma1=0.1, gamma2=0.1, gamma3=0.1)


@dataclass(frozen=True, eq=False)
class OpenSystem:
    """Hermitian Hamiltonian, collapse operators and the measured field operator.

    ``drive`` is the pump part of ``hamiltonian`` and ``excitation`` the
    excitation-number operator; both are set for exact models only.
    ``emission_channel`` indexes the collapse operator proportional to
    ``field_op`` (``None`` when no such channel exists).
    """

    space: HilbertSpace
    hamiltonian: Operator
    collapse_ops: tuple[Operator, ...]
    field_op: Operator
    label: str
    family: str
    kind: str
    params: JCParams | EITParams | None = None
    drive: Operator | None = None
    excitation: Operator | None = None
    emission_channel: int | None = None
    conventions: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.hamiltonian.is_hermitian():
            raise ValueError(f"{self.label}: Hamiltonian is not Hermitian")
        object.__setattr__(self, "hamiltonian", self.hamiltonian.as_hermitian())
        object.__setattr__(self, "collapse_ops", tuple(self.collapse_ops))
        for op in (*self.collapse_ops, self.field_op):
            if op.space != self.space:
                raise ValueError(f"{self.label}: operator on the wrong space")

    @property
    def dim(self) -> int:
        return self.space.dim

    def nonhermitian_hamiltonian(self) -> NDArray[np.complex128]:
        m = self.hamiltonian.matrix.copy()
        for c in self.collapse_ops:
            m -= 0.5j * (c.matrix.conj().T @ c.matrix)
        return m

    def undriven_hamiltonian(self) -> Operator:
        if self.drive is None:
            raise ValueError(f"{self.label}: no separable drive term")
        return (self.hamiltonian - self.drive).as_hermitian()

    def ground_state(self) -> StateVector:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return StateVector(self.space, v)


def _jc_operators(n_max: int):
    a_c = fock_annihilation(n_max)
    i_c = identity(a_c.space)
    i_a = identity(HilbertSpace((("atom", 2),)))
    a = tensor(a_c, i_a)
    sm = tensor(i_c, atomic_transition(2, 1, 2))
    sz = tensor(i_c, sigma_z())
    return a, sm, sz


def _jc_interaction(n_max: int, g: float, theta: float, theta_sign: int) -> Operator:
    a, sm, sz = _jc_operators(n_max)
    ad, sp = a.dag(), sm.dag()
    h = theta_sign * theta * (0.5 * sz + ad @ a) + 1j * g * (ad @ sm) - 1j * g * (a @ sp)
    return h.as_hermitian()


def jc_theta_sign() -> int:
    """Sign of the detuning term for which ``theta = g`` drives the lower Rabi resonance.

    The first-manifold eigenstate with coupling energy ``-g`` is the lower
    vacuum Rabi state; it must sit at zero energy (relative to ``|0,->``)
    in the drive frame when ``theta = g``.
    """
    g = 1.0
    a, sm, _ = _jc_operators(1)
    coupling = (1j * g * (a.dag() @ sm) - 1j * g * (a @ sm.dag())).matrix
    idx = [1, 2]  # |0,+>, |1,->
    vals, vecs = np.linalg.eigh(coupling[np.ix_(idx, idx)])
    lower = np.zeros(4, dtype=complex)
    lower[idx] = vecs[:, 0]
    for sign in (+1, -1):
        h = _jc_interaction(1, g, g, sign).matrix
        e_lower = np.real(np.vdot(lower, h @ lower)) - np.real(h[0, 0])
        if abs(e_lower) < 1e-12:
            return sign
    raise RuntimeError("neither detuning sign puts the lower Rabi state on resonance")


def build_jc(p: JCParams) -> OpenSystem:
    """Exact driven Jaynes-Cummings model on ``(n_max+1) x 2`` levels."""
    if p.n_max < 2:
        raise ValueError("exact models need n_max >= 2")
    sign = jc_theta_sign()
    a, sm, _ = _jc_operators(p.n_max)
    h_int = _jc_interaction(p.n_max, p.g, p.theta, sign)
    drive = (1j * p.pump * (a - a.dag())).as_hermitian()
    excitation = (a.dag() @ a + sm.dag() @ sm).as_hermitian()
    return OpenSystem(
        space=a.space,
        hamiltonian=h_int + drive,
        collapse_ops=(math.sqrt(p.kappa) * a, math.sqrt(p.gamma) * sm),
        field_op=a,
        label="jc-exact",
        family="jc",
        kind="exact",
        params=p,
        drive=drive,
        excitation=excitation,
        emission_channel=0,
        conventions={"theta_sign": sign, "theta_sign_source": "as-written" if sign == 1 else "negated"},
    )


def _eit_operators(n_max: int):
    a_c = fock_annihilation(n_max)
    i_c = identity(a_c.space)
    a = tensor(a_c, identity(HilbertSpace((("atom", 4),))))

    def s(i, j):
        return tensor(i_c, atomic_transition(4, i, j))

    return a, s


def build_eit(p: EITParams) -> OpenSystem:
    """Exact EIT-Kerr model on ``(n_max+1) x 4`` levels.

    Decay channels: level 3 to 1 (``gamma1``) and to 2 (``gamma2``), level 4
    to 2 (``gamma3``), plus cavity loss.
    """
    if p.n_max < 2:
        raise ValueError("exact models need n_max >= 2")
    a, s = _eit_operators(p.n_max)
    ad = a.dag()
    oc = p.omega_c
    h_int = (
        p.delta * s(3, 3)
        + p.Delta * s(4, 4)
        + 1j * p.g1 * (ad @ s(1, 3) - s(3, 1) @ a)
        + 1j * (np.conj(oc) * s(2, 3) - oc * s(3, 2))
        + 1j * p.g2 * (ad @ s(2, 4) - s(4, 2) @ a)
    ).as_hermitian()
    drive = (1j * p.pump * (a - ad)).as_hermitian()
    excitation = (ad @ a + s(2, 2) + s(3, 3) + 2.0 * s(4, 4)).as_hermitian()
    return OpenSystem(
        space=a.space,
        hamiltonian=h_int + drive,
        collapse_ops=(
            math.sqrt(p.kappa) * a,
            math.sqrt(p.gamma1) * s(1, 3),
            math.sqrt(p.gamma2) * s(2, 3),
            math.sqrt(p.gamma3) * s(2, 4),
        ),
        field_op=a,
        label="eit-exact",
        family="eit",
        kind="exact",
        params=p,
        drive=drive,
        excitation=excitation,
        emission_channel=0,
    )


def _lowering(dim: int, j: int) -> Operator:
    space = HilbertSpace((("polariton", dim),))
    m = np.zeros((dim, dim), dtype=complex)
    m[0, j] = 1.0
    return Operator(space, m)


def build_jc_effective(p: JCParams, decay_scale: float = DEFAULT_EFFECTIVE_DECAY_SCALE) -> OpenSystem:
    """Ground state plus vacuum-Rabi polaritons ``{|G>, |e_->, |e_+>}``.

    Each polariton decays with rate ``decay_scale * (gamma + kappa)``;
    ``decay_scale = 1`` is the anti-Hermitian term taken literally.
    """
    if decay_scale <= 0:
        raise ValueError("decay_scale must be positive")
    qm, qp = _lowering(3, 1), _lowering(3, 2)
    amp = p.pump / math.sqrt(2)
    h = 2 * p.theta * (qp.dag() @ qp) + 1j * amp * (qm - qm.dag() + qp - qp.dag())
    rate = decay_scale * (p.gamma + p.kappa)
    return OpenSystem(
        space=qm.space,
        hamiltonian=h.as_hermitian(),
        collapse_ops=(math.sqrt(rate) * qm, math.sqrt(rate) * qp),
        field_op=(qp + qm) / math.sqrt(2),
        label="jc-effective",
        family="jc",
        kind="effective",
        params=p,
        conventions={"decay_scale": decay_scale},
    )


def effective_eit_parameters(p: EITParams) -> EffectiveEITParams:
    """Polariton energies, drive strengths and decay rates of the first EIT manifold."""
    r = p.g1 / p.omega_c
    root = math.sqrt((p.delta / 2) ** 2 + p.omega_c**2 + p.g1**2)
    eps_p = p.delta / 2 + root
    eps_m = p.delta / 2 - root
    c0 = 1.0 / math.sqrt(1.0 + r**2)

    def c_pm(eps):
        return -r / math.sqrt(1.0 + (eps / p.omega_c) ** 2 + r**2)

    def width(eps):
        return (p.kappa * p.g1**2 + (p.gamma1 + p.gamma2) * eps**2) / (p.g1**2 + p.omega_c**2 + eps**2)

    c_p, c_m = c_pm(eps_p), c_pm(eps_m)
    return EffectiveEITParams(
        eps_plus=eps_p,
        eps_minus=eps_m,
        omega_plus=2 * p.pump * c_p,
        omega_minus=2 * p.pump * c_m,
        omega_r=2 * p.pump * c0,
        gamma0=p.kappa / (1.0 + r**2),
        gamma1_plus=width(eps_p),
        gamma1_minus=width(eps_m),
        c0=c0,
        c_plus=c_p,
        c_minus=c_m,
    )


def derive_eit_effective(
    p: EITParams, decay_scale: float = DEFAULT_EFFECTIVE_DECAY_SCALE
) -> tuple[EffectiveEITParams, OpenSystem]:
    """Effective four-level polariton model ``{|G>, |phi_0>, |phi_->, |phi_+>}``.

    Polariton ``j`` decays with rate ``2 * decay_scale * Gamma_j``.
    """
    if decay_scale <= 0:
        raise ValueError("decay_scale must be positive")
    e = effective_eit_parameters(p)
    p0, pm, pp = _lowering(4, 1), _lowering(4, 2), _lowering(4, 3)
    h = (
        e.eps_minus * (pm.dag() @ pm)
        + e.eps_plus * (pp.dag() @ pp)
        + 0.5j * e.omega_minus * (pm - pm.dag())
        + 0.5j * e.omega_plus * (pp - pp.dag())
        + 0.5j * e.omega_r * (p0 - p0.dag())
    )
    s = 2.0 * decay_scale
    system = OpenSystem(
        space=p0.space,
        hamiltonian=h.as_hermitian(),
        collapse_ops=(
            math.sqrt(s * e.gamma0) * p0,
            math.sqrt(s * e.gamma1_minus) * pm,
            math.sqrt(s * e.gamma1_plus) * pp,
        ),
        field_op=e.c0 * p0 + e.c_plus * pp + e.c_minus * pm,
        label="eit-effective",
        family="eit",
        kind="effective",
        params=p,
        conventions={"decay_scale": decay_scale},
    )
    return e, system


def build_driven_cavity(pump: float, n_max: int = 12, kappa: float = 1.0) -> OpenSystem:
    """Empty cavity driven by ``i pump (a - a^dag)``; the coherent-light reference."""
    a = fock_annihilation(n_max)
    drive = (1j * pump * (a - a.dag())).as_hermitian()
    return OpenSystem(
        space=a.space,
        hamiltonian=drive,
        collapse_ops=(math.sqrt(kappa) * a,),
        field_op=a,
        label="cavity",
        family="cavity",
        kind="exact",
        drive=drive,
        excitation=(a.dag() @ a).as_hermitian(),
        emission_channel=0,
    )


def rephase(system: OpenSystem, level: int, phase: complex) -> OpenSystem:
    """Redefine basis ket ``level`` by a unit-modulus ``phase`` everywhere in the model."""
    if not abs(abs(phase) - 1.0) < 1e-12:
        raise ValueError("phase must have unit modulus")
    u = np.ones(system.dim, dtype=complex)
    u[level] = phase
    U = np.diag(u)

    def conj(op: Operator | None) -> Operator | None:
        if op is None:
            return None
        return Operator(op.space, U @ op.matrix @ U.conj().T)

    return replace(
        system,
        hamiltonian=conj(system.hamiltonian).as_hermitian(),
        collapse_ops=tuple(conj(c) for c in system.collapse_ops),
        field_op=conj(system.field_op),
        drive=conj(system.drive),
        excitation=conj(system.excitation),
    )


# ---------------------------------------------------------------------------
# Manifold spectra


def eit_dressed_states(p: EITParams, gauge: str = "builder") -> dict[str, NDArray[np.complex128]]:
    """First-manifold dressed states as coefficient vectors over ``(|1,1>, |0,3>, |0,2>)``.

    ``gauge="textbook"`` returns the textbook coefficients.  Those are
    eigenvectors of the Hamiltonian with the opposite sign of the cavity
    coupling; ``gauge="builder"`` applies the photon-parity map
    ``a -> -a`` (a sign flip on ``|1,1>``), which makes them eigenvectors of
    the model assembled by :func:`build_eit`.
    """
    r = p.g1 / p.omega_c
    e = effective_eit_parameters(p)
    states = {"phi0": np.array([1.0, 0.0, r], dtype=complex) / math.sqrt(1 + r**2)}
    for name, eps in (("phi_minus", e.eps_minus), ("phi_plus", e.eps_plus)):
        x = eps / p.omega_c
        v = -np.array([r, 1j * x, -1.0], dtype=complex) / math.sqrt(1 + x**2 + r**2)
        states[name] = v
    if gauge == "builder":
        for v in states.values():
            v[0] = -v[0]
    elif gauge != "textbook":
        raise ValueError(f"unknown gauge {gauge!r}")
    return states


def jc_manifold_formulas(theta: float, g: float, n: int, theta_sign: int = 1) -> dict[str, tuple[float, float]]:
    """Analytic ``(lower, upper)`` JC manifold energies under three conventions.

    ``absolute``: eigenvalues of the interaction Hamiltonian, theta(n - 1/2) -/+ g sqrt(n).
    ``relative``: measured from the ``|0,->`` ground state, theta n -/+ g sqrt(n).
    ``half_theta``: theta n / 2 -/+ g sqrt(n), the commonly quoted dressed-energy form.
    """
    t = theta_sign * theta
    s = g * math.sqrt(n)
    return {
        "absolute": (t * (n - 0.5) - s, t * (n - 0.5) + s),
        "relative": (t * n - s, t * n + s),
        "half_theta": (t * n / 2 - s, t * n / 2 + s),
    }


@dataclass(frozen=True, eq=False)
class ManifoldSpectrum:
    n: int
    energies: NDArray[np.float64]
    states: list[StateVector]
    ground_energy: float
    second_photon_detuning: float | None = None
    reference: dict = field(default_factory=dict)

    @property
    def relative_energies(self) -> NDArray[np.float64]:
        return self.energies - self.ground_energy


def _manifold_block(system: OpenSystem, n: int):
    h = system.undriven_hamiltonian().matrix
    exc = np.real(np.diag(system.excitation.matrix))
    idx = np.flatnonzero(np.abs(exc - n) < 1e-9)
    return h, idx


def manifold_spectrum(system: OpenSystem, n: int) -> ManifoldSpectrum:
    """Eigenpairs of the undriven Hamiltonian restricted to ``n`` excitations."""
    if system.kind != "exact" or system.excitation is None:
        raise ValueError(f"{system.label}: manifold analysis needs an exact model")
    n_max = system.space.dims[0] - 1
    if not 0 <= n <= n_max:
        raise ValueError(f"manifold {n} outside the truncation 0..{n_max}")
    h, idx = _manifold_block(system, n)
    if idx.size == 0:
        raise ValueError(f"manifold {n} is empty")
    vals, vecs = np.linalg.eigh(h[np.ix_(idx, idx)])
    states = []
    for k in range(vals.size):
        v = np.zeros(system.dim, dtype=complex)
        v[idx] = vecs[:, k]
        states.append(StateVector(system.space, v))
    _, idx0 = _manifold_block(system, 0)
    e0 = float(np.linalg.eigvalsh(h[np.ix_(idx0, idx0)])[0])

    reference: dict = {}
    detuning = None
    p = system.params
    if system.family == "jc" and n >= 1:
        sign = system.conventions.get("theta_sign", 1)
        reference = jc_manifold_formulas(p.theta, p.g, n, sign)
        if n == 2:
            lower1 = float(manifold_spectrum(system, 1).energies[0])
            detuning = (vals[0] - e0) - 2 * (lower1 - e0)
    elif system.family == "eit" and n == 1:
        reference = _check_eit_first_manifold(system, idx, vals, vecs)
    return ManifoldSpectrum(n, vals, states, e0, detuning, reference)


def _check_eit_first_manifold(system: OpenSystem, idx, vals, vecs) -> dict:
    p = system.params
    e = effective_eit_parameters(p)
    space = system.space
    order = [space.index(1, 0), space.index(0, 2), space.index(0, 1)]  # |1,1>, |0,3>, |0,2>
    pos = [int(np.flatnonzero(idx == k)[0]) for k in order]
    analytic = eit_dressed_states(p, gauge="builder")
    energies = {"phi_minus": e.eps_minus, "phi0": 0.0, "phi_plus": e.eps_plus}
    out = {}
    for k, name in enumerate(("phi_minus", "phi0", "phi_plus")):
        v = vecs[pos, k]
        fid = abs(np.vdot(analytic[name], v)) ** 2
        out[name] = {
            "energy": float(vals[k]),
            "analytic_energy": energies[name],
            "energy_error": abs(float(vals[k]) - energies[name]),
            "fidelity": float(fid),
        }
        if fid < 1 - EIGEN_FIDELITY_TOL or out[name]["energy_error"] > EIGEN_ENERGY_TOL:
            raise ArithmeticError(f"first-manifold state {name} disagrees with the analytic form: {out[name]}")
    return out
