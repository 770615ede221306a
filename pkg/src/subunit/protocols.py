"""Simulation of the simultaneous (C x C) and reset-assisted (C x 1) benchmarking protocols.

Both protocols square the measured expectation instead of inverting the
sequence, so ``E_s[m(s)**2]`` decays with the eigenvalues of the twirled
doubled channel.  Two evaluation modes are available:

* exact: the Clifford average is replaced by the twirl projector on the
  doubled product-basis Liouville space, giving ``E[m**2]`` to machine
  precision;
* Monte Carlo: random sequences of single-qubit Cliffords are applied to
  a batch of states in the Pauli-coordinate representation.

Within a layer the order is gate, gate noise, then (for the reset
protocol) the reset of subsystem B.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .data import DecayDataset
from .exceptions import FitError, InvalidInputError, UnsupportedError
from .fitting import FitResult, fit_single_exponential, fit_triple_exponential
from .liouville import BipartiteChannel, Channel, PAULI, make_basis, product_basis
from .measures import correlated_unitarity, sub_unitarity, unitarity, witness_bound
from .twirl import estimate_C, local_twirl_projector
from .zoo import identity_channel, make_rng, swap_unitary

DEFAULT_K = tuple(range(1, 31))
DEFAULT_SEQS = 500


# -- Clifford group ---------------------------------------------------------


def _canonical_phase(u: np.ndarray) -> np.ndarray:
    flat = u.reshape(-1)
    i = int(np.argmax(np.abs(flat) > 1e-9))
    return u * (abs(flat[i]) / flat[i])


def _same_up_to_phase(u: np.ndarray, v: np.ndarray) -> bool:
    return abs(abs(np.trace(u.conj().T @ v)) - u.shape[0]) < 1e-9


@lru_cache(maxsize=None)
def _clifford_1q() -> np.ndarray:
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    s = np.diag([1, 1j])
    group = [np.eye(2, dtype=complex)]
    frontier = list(group)
    while frontier:
        nxt = []
        for g in frontier:
            for gen in (h, s):
                u = _canonical_phase(gen @ g)
                if not any(_same_up_to_phase(u, v) for v in group):
                    group.append(u)
                    nxt.append(u)
        frontier = nxt
    out = np.array(group)
    out.setflags(write=False)
    return out


def clifford_group(n_qubits: int = 1) -> np.ndarray:
    """The single-qubit Clifford group modulo phase, shape ``(24, 2, 2)``."""
    if n_qubits != 1:
        raise UnsupportedError("only the single-qubit Clifford group is enumerated")
    return _clifford_1q()


@lru_cache(maxsize=None)
def clifford_liouville() -> np.ndarray:
    """Real Pauli-basis Liouville matrices of the 24 single-qubit Cliffords."""
    b = make_basis(2)
    mats = np.array([Channel.from_unitary(u, validate=False).liouville(b, b).real for u in _clifford_1q()])
    mats.setflags(write=False)
    return mats


# -- noise model -------------------------------------------------------------


@dataclass(frozen=True)
class ResetModel:
    """Reset applied to subsystem B after each layer of the reset protocol.

    ``kind`` is one of

    ``"ideal"``
        replace B by the maximally mixed state;
    ``"depolarizing"``
        ``p * ideal + (1 - p) * identity``, so ``p = 1`` is a perfect reset
        and ``p = 0`` no reset at all;
    ``"bloch"``
        replace B by ``(I + b . sigma)/2`` (qubits only).
    """

    kind: str = "ideal"
    p: float = 1.0
    bloch: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("ideal", "depolarizing", "bloch"):
            raise InvalidInputError(f"unknown reset kind {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise InvalidInputError(f"reset strength p={self.p} outside [0, 1]")
        if len(self.bloch) != 3 or np.linalg.norm(self.bloch) > 1 + 1e-12:
            raise InvalidInputError("Bloch vector must have three components and norm <= 1")

    @classmethod
    def depolarizing(cls, p: float) -> "ResetModel":
        return cls("depolarizing", p=float(p))

    @classmethod
    def bloch_state(cls, b) -> "ResetModel":
        return cls("bloch", bloch=tuple(float(x) for x in b))

    def channel_b(self, d_b: int) -> Channel:
        """The reset acting on B alone."""
        vec_i = np.eye(d_b).reshape(-1)
        if self.kind == "bloch":
            if d_b != 2:
                raise UnsupportedError("Bloch resets need a qubit")
            state = 0.5 * (np.eye(2) + sum(c * PAULI[a] for c, a in zip(self.bloch, "XYZ")))
            return Channel(np.outer(state.reshape(-1), vec_i), 2, 2)
        ideal = np.outer(vec_i, vec_i) / d_b
        p = 1.0 if self.kind == "ideal" else self.p
        return Channel(p * ideal + (1 - p) * np.eye(d_b * d_b), d_b, d_b)

    def describe(self) -> dict:
        return {"kind": self.kind, "p": self.p, "bloch": list(self.bloch)}


@dataclass
class NoiseModel:
    """Gate-independent noise: one channel after every gate plus SPAM and reset errors."""

    gate_noise: BipartiteChannel
    state_prep: Channel | None = None
    measurement_noise: Channel | None = None
    reset: ResetModel = field(default_factory=ResetModel)

    def __post_init__(self):
        d = self.gate_noise.dim
        for ch in (self.state_prep, self.measurement_noise):
            if ch is not None:
                if ch.d_in != d or ch.d_out != d:
                    raise InvalidInputError("SPAM channels must act on the full system")
                ch.validate()
        self.gate_noise.channel.validate()

    def swapped(self) -> "NoiseModel":
        """The same model with the roles of A and B exchanged."""
        d_a, d_b = self.gate_noise.d_a, self.gate_noise.d_b
        sw = Channel.from_unitary(swap_unitary_rect(d_a, d_b), validate=False)
        sw_back = Channel.from_unitary(swap_unitary_rect(d_b, d_a), validate=False)

        def conj(ch):
            return None if ch is None else sw.compose(ch.compose(sw_back))

        gate = BipartiteChannel(conj(self.gate_noise.channel), d_b, d_a)
        return NoiseModel(gate, conj(self.state_prep), conj(self.measurement_noise), self.reset)


def swap_unitary_rect(d_a: int, d_b: int) -> np.ndarray:
    """Permutation ``|i>_A |j>_B -> |j> |i>`` from ``C^{d_a} (x) C^{d_b}`` to ``C^{d_b} (x) C^{d_a}``."""
    if d_a == d_b:
        return swap_unitary(d_a)
    u = np.zeros((d_a * d_b, d_a * d_b))
    for i in range(d_a):
        for j in range(d_b):
            u[j * d_a + i, i * d_b + j] = 1.0
    return u


def _reset_liouville(noise: NoiseModel) -> np.ndarray:
    g = noise.gate_noise
    full = identity_channel(g.d_a).tensor(noise.reset.channel_b(g.d_b))
    b = product_basis(g.d_a, g.d_b)
    return full.liouville(b, b).real


def _spam_coords(noise: NoiseModel, rho, M):
    """Pauli coordinates of the prepared state and of each (noisy) observable.

    ``M`` is one observable or a stack of shape ``(n_obs, d, d)``; the
    observable coordinates always come back two-dimensional.
    """
    g = noise.gate_noise
    b = product_basis(g.d_a, g.d_b)
    rho = np.asarray(rho, dtype=complex)
    ms = np.asarray(M, dtype=complex)
    ms = ms[None] if ms.ndim == 2 else ms
    if rho.shape != (g.dim, g.dim) or ms.shape[1:] != (g.dim, g.dim):
        raise InvalidInputError(f"state and observables must be {g.dim}x{g.dim}")
    if not np.allclose(ms, np.conj(np.swapaxes(ms, 1, 2)), atol=1e-12):
        raise InvalidInputError("observables must be hermitian")
    if noise.state_prep is not None:
        rho = noise.state_prep.apply(rho)
    if noise.measurement_noise is not None:
        ms = np.array([noise.measurement_noise.adjoint_apply(m) for m in ms])
    return np.array([b.coordinates(m).real for m in ms]), b.coordinates(rho).real, ms


def _check_k(k_list) -> np.ndarray:
    k = np.asarray(k_list, dtype=int)
    if k.ndim != 1 or len(k) == 0 or np.any(k < 1) or np.any(np.diff(k) <= 0):
        raise InvalidInputError("kList must be a strictly ascending list of positive lengths")
    return k


def _exact(layer: np.ndarray, twirl: np.ndarray, cms, cr, k_list) -> list[DecayDataset]:
    # E[m^2](k) = <cM cM| (L (x) L . P)^k |cr cr>
    step = np.kron(layer, layer) @ twirl
    v = np.kron(cr, cr)
    left = np.array([np.kron(cm, cm) for cm in cms])
    out, cur = [], 0
    for k in k_list:
        for _ in range(int(k) - cur):
            v = step @ v
        cur = int(k)
        out.append(left @ v)
    out = np.array(out)
    return [DecayDataset(k_list, out[:, j]) for j in range(len(cms))]


def _threads(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("SUBUNIT_THREADS")
    return max(1, int(env)) if env else 1


def _seed_sequence(rng) -> np.random.SeedSequence:
    # per-length streams are spawned from this so threading cannot change results
    if isinstance(rng, np.random.SeedSequence):
        return rng
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.SeedSequence(rng)
    return np.random.SeedSequence(int(make_rng(rng).integers(0, 2**63)))


def _monte_carlo(step, cms, observables, k_list, seqs, rng, shots, keep_samples, workers) -> list[DecayDataset]:
    if seqs < 2:
        raise InvalidInputError("Monte Carlo mode needs at least two sequences per length")
    if shots is not None:
        for m in observables:
            ev = np.linalg.eigvalsh(m)
            if ev.min() < -1e-12 or ev.max() > 1 + 1e-12:
                raise InvalidInputError("shot noise needs observables with spectrum in [0, 1]")
        if shots < 2:
            raise InvalidInputError("shot noise needs at least two shots")
    cells = _seed_sequence(rng).spawn(len(k_list))

    def run_cell(i):
        g = np.random.Generator(np.random.Philox(cells[i]))
        m = step(g, int(k_list[i]), seqs) @ cms.T
        if shots is None:
            return m**2
        # unbiased estimate of m**2 from c successes in N shots: c(c-1)/(N(N-1))
        counts = g.binomial(shots, np.clip(m, 0.0, 1.0))
        return counts * (counts - 1) / (shots * (shots - 1))

    n = _threads(workers)
    if n > 1:
        with ThreadPoolExecutor(n) as pool:
            samples = list(pool.map(run_cell, range(len(k_list))))
    else:
        samples = [run_cell(i) for i in range(len(k_list))]
    out = []
    for j in range(len(cms)):
        cell = [s[:, j] for s in samples]
        mean = np.array([s.mean() for s in cell])
        se = np.array([s.std(ddof=1) / np.sqrt(len(s)) for s in cell])
        out.append(
            DecayDataset(k_list, mean, se, np.full(len(k_list), seqs), samples=cell if keep_samples else None)
        )
    return out


def _single(out: list[DecayDataset], M, meta: dict):
    for d in out:
        d.meta.update(meta)
    return out[0] if np.asarray(M).ndim == 2 else out


def run_protocol_1(
    noise: NoiseModel,
    rho,
    M,
    k_list=DEFAULT_K,
    seqs_per_k: int = DEFAULT_SEQS,
    rng=None,
    shots: int | None = None,
    exact: bool = False,
    keep_samples: bool = False,
    workers: int | None = None,
) -> DecayDataset:
    """Simultaneous local-Clifford benchmarking of a two-qubit noise channel.

    Each of the ``k`` layers is ``E o (U_A (x) U_B)`` with independent
    uniformly random Cliffords.  The returned dataset holds
    ``E_s[m(s)**2]`` per length; in Monte Carlo mode with ``shots`` the
    squared expectation is estimated without bias from binomial counts.

    ``M`` may be a stack of observables, all evaluated on the same
    sequences (as when commuting observables are read out from one
    measurement); a list of datasets is then returned.
    """
    g = noise.gate_noise
    k_list = _check_k(k_list)
    cms, cr, obs = _spam_coords(noise, rho, M)
    lv = g.liouville.real
    if exact:
        twirl = local_twirl_projector(g.d_a, g.d_b, True, True)
        return _single(_exact(lv, twirl, cms, cr, k_list), M, dict(protocol=1, mode="exact"))
    if (g.d_a, g.d_b) != (2, 2):
        raise UnsupportedError("Monte Carlo sampling is implemented for two qubits")
    cliff = clifford_liouville()

    def step(gen, k, n):
        c = np.broadcast_to(cr, (n, 16)).copy()
        for _ in range(k):
            a, b = gen.integers(0, 24, size=(2, n))
            # (L_A (x) L_B) c  ==  L_A C L_B^T  with c reshaped to a 4x4 matrix C
            c = (cliff[a] @ c.reshape(n, 4, 4) @ cliff[b].transpose(0, 2, 1)).reshape(n, 16)
            c = c @ lv.T
        return c

    out = _monte_carlo(step, cms, obs, k_list, seqs_per_k, rng, shots, keep_samples, workers)
    return _single(out, M, dict(protocol=1, mode="monte-carlo", shots=shots))


def run_protocol_2(
    noise: NoiseModel,
    rho,
    M_A,
    k_list=DEFAULT_K,
    seqs_per_k: int = DEFAULT_SEQS,
    rng=None,
    shots: int | None = None,
    exact: bool = False,
    keep_samples: bool = False,
    workers: int | None = None,
) -> DecayDataset:
    """Clifford benchmarking of A with a reset of B after every noisy gate.

    Each layer is ``R o E o (U_A (x) id_B)`` where ``R`` is the reset of
    ``noise.reset``; ``R`` is also applied once to the prepared state.  ``M_A`` is an observable on A and is measured as
    ``M_A (x) I``.
    """
    g = noise.gate_noise
    k_list = _check_k(k_list)
    M_A = np.asarray(M_A, dtype=complex)
    if M_A.shape[-2:] != (g.d_a, g.d_a) or M_A.ndim not in (2, 3):
        raise InvalidInputError(f"M_A must be {g.d_a}x{g.d_a} (or a stack of such)")
    full = np.array([np.kron(m, np.eye(g.d_b)) for m in M_A.reshape(-1, g.d_a, g.d_a)])
    cms, cr, obs = _spam_coords(noise, rho, full)
    reset = _reset_liouville(noise)
    # B starts out reset, so the first layer sees the same B input as the rest
    cr = reset @ cr
    layer = reset @ g.liouville.real
    meta = dict(protocol=2, reset=noise.reset.describe())
    if exact:
        twirl = local_twirl_projector(g.d_a, g.d_b, True, False)
        return _single(_exact(layer, twirl, cms, cr, k_list), M_A, dict(meta, mode="exact"))
    if (g.d_a, g.d_b) != (2, 2):
        raise UnsupportedError("Monte Carlo sampling is implemented for two qubits")
    cliff = clifford_liouville()

    def step(gen, k, n):
        c = np.broadcast_to(cr, (n, 16)).copy()
        for _ in range(k):
            a = gen.integers(0, 24, size=n)
            c = (cliff[a] @ c.reshape(n, 4, 4)).reshape(n, 16)
            c = c @ layer.T
        return c

    out = _monte_carlo(step, cms, obs, k_list, seqs_per_k, rng, shots, keep_samples, workers)
    return _single(out, M_A, dict(meta, mode="monte-carlo", shots=shots))


# -- reduced channels and the orthogonal-preparation bound -------------------


def conditional_channel(bch: BipartiteChannel, sigma_b: np.ndarray) -> Channel:
    """``rho -> tr_B E(rho (x) sigma_b)`` for a fixed state ``sigma_b`` of B."""
    da, db = bch.d_a, bch.d_b
    sigma_b = np.asarray(sigma_b, dtype=complex)
    if sigma_b.shape != (db, db):
        raise InvalidInputError(f"sigma_b must be {db}x{db}")
    s = bch.channel.superop.reshape(da, db, da, db, da, db, da, db)
    r = np.einsum("abcbijkl,jl->acik", s, sigma_b)
    return Channel(r.reshape(da * da, da * da), da, da)


def orthogonal_prep_bound(bch: BipartiteChannel, b) -> float:
    """Average unitarity of the channels conditioned on the B states ``(I +- b.sigma)/2``.

    Upper-bounds ``u_{A->A}``, with equality for product channels.
    """
    if bch.d_b != 2:
        raise UnsupportedError("B must be a qubit")
    b = np.asarray(b, dtype=float)
    if b.shape != (3,) or abs(np.linalg.norm(b) - 1) > 1e-9:
        raise InvalidInputError("b must be a unit Bloch vector")
    bs = sum(c * PAULI[a] for c, a in zip(b, "XYZ"))
    plus = conditional_channel(bch, 0.5 * (np.eye(2) + bs))
    minus = conditional_channel(bch, 0.5 * (np.eye(2) - bs))
    return 0.5 * (unitarity(plus) + unitarity(minus))


def reset_effective_unitarity(noise: NoiseModel) -> float:
    """Unitarity of the A channel seen by the reset protocol once B is reset.

    Exact for an ideal or Bloch reset, where B re-enters every layer in a
    fixed state; for a partial depolarizing reset this is only the
    fully-reset reference value.
    """
    g = noise.gate_noise
    r = noise.reset
    if r.kind == "bloch":
        state = 0.5 * (np.eye(2) + sum(c * PAULI[a] for c, a in zip(r.bloch, "XYZ")))
    else:
        state = np.eye(g.d_b) / g.d_b
    return unitarity(conditional_channel(g, state))


# -- pipelines ---------------------------------------------------------------


def default_spam(d_a: int = 2, d_b: int = 2):
    """``|00><00|`` as preparation and measurement, and ``|0><0| - I/d_A`` on A.

    The traceless A observable drops the constant offset from ``m``, which
    removes the largest source of sequence-to-sequence variance in ``m**2``.
    """
    rho = np.zeros((d_a * d_b, d_a * d_b))
    rho[0, 0] = 1.0
    m_a = -np.eye(d_a) / d_a
    m_a[0, 0] += 1.0
    return rho, rho.copy(), m_a


def sector_observables() -> np.ndarray:
    """``Z (x) I``, ``I (x) Z`` and ``Z (x) Z``: one per sector, all diagonal.

    A single computational-basis readout yields all three, so they can be
    evaluated on the same sequences.
    """
    z, i = PAULI["Z"], PAULI["I"]
    return np.array([np.kron(z, i), np.kron(i, z), np.kron(z, z)])


def spectrum_preparations(d_a: int = 2, d_b: int = 2) -> np.ndarray:
    """Preparations that excite every twirl sector, plus the maximally mixed state.

    ``|0><0| (x) |0><0|``, ``|0><0| (x) I/d_B`` and ``I/d_A (x) |0><0|`` give
    linearly independent sector weights; ``I/(d_A d_B)`` isolates the
    constant offset that a non-unital channel feeds into every series.
    """
    za = np.zeros((d_a, d_a))
    za[0, 0] = 1.0
    zb = np.zeros((d_b, d_b))
    zb[0, 0] = 1.0
    ha, hb = np.eye(d_a) / d_a, np.eye(d_b) / d_b
    return np.array([np.kron(za, zb), np.kron(za, hb), np.kron(ha, zb), np.kron(ha, hb)])


@dataclass
class DecaySpectrum:
    """Three twirl eigenvalues recovered from a joint simultaneous-protocol fit.

    ``multiplicities`` maps each fitted decay to the rank of its amplitude
    matrix (preparations x observables); ``n_unit`` counts eigenvalues equal
    to one, which only show up in the constant term; ``n_hidden`` counts
    eigenvalues never seen in the data, taken as zero since such modes
    are annihilated by the final noise layer.
    """

    fit: FitResult
    eigenvalues: list
    multiplicities: list
    n_unit: int
    n_hidden: int

    @property
    def total(self) -> float:
        return float(np.sum(self.eigenvalues))


def decay_spectrum(
    bch: BipartiteChannel,
    k_list=DEFAULT_K,
    exact: bool = True,
    seqs_per_k: int = DEFAULT_SEQS,
    rng=None,
    workers: int | None = None,
    rank_rtol: float | None = None,
) -> DecaySpectrum:
    """Run the simultaneous protocol for every preparation/observable pair and count modes.

    The amplitude of a decay in series ``(prep, obs)`` factorizes as
    ``l(obs) . Pi_lambda . r(prep)``, so the rank of the 3x3 amplitude
    matrix is the number of modes sharing that decay.  ``rank_rtol``
    (relative to the largest amplitude) defaults to ``1e-6`` for exact
    data; sampled data use a threshold from the amplitude covariance.
    """
    if rank_rtol is None:
        rank_rtol = 1e-6 if exact else 0.0
    preps = spectrum_preparations(bch.d_a, bch.d_b)
    obs = sector_observables()
    gens = _seed_sequence(rng).spawn(len(preps))
    data = []
    for r, gen in zip(preps, gens):
        kw = {} if exact else dict(seqs_per_k=seqs_per_k, rng=gen, workers=workers)
        data += run_protocol_1(NoiseModel(bch), r, obs, k_list, exact=exact, **kw)
    fit = fit_triple_exponential(data)
    if not fit.converged:
        raise FitError("joint three-exponential fit did not converge")
    n_amp = len(fit.constants) // len(data)
    amps = np.array(fit.constants).reshape(len(preps), len(obs), n_amp)
    sd = np.sqrt(np.maximum(np.array(fit.covariance_diag[: len(fit.constants)]), 0.0)).reshape(amps.shape)
    lam = fit.distinct_decays
    if fit.model_form == "const+3exp":
        return DecaySpectrum(fit, [float(v) for v in lam], [1, 1, 1], 0, 0)
    scale = max(float(np.max(np.abs(amps[:3]))), 1e-300)

    def rank(mat, j):
        # singular values below the noise floor of a 3x3 matrix of independent errors do not count
        tol = max(rank_rtol * scale, 7.0 * float(np.max(sd[:, :, j])))
        return int(np.sum(np.linalg.svd(mat, compute_uv=False) > tol))

    if fit.model_form == "jordan3":
        mult = [3]
    elif fit.model_form == "jordan2":
        mult = [max(2, rank(amps[:3, :, 1], 1)), max(1, rank(amps[:3, :, 3], 3))]
    else:
        mult = [max(1, rank(amps[:3, :, j + 1], j + 1)) for j in range(len(lam))]
    # the maximally mixed preparation carries only the non-unital offset
    n_unit = rank(amps[:3, :, 0] - amps[3, None, :, 0], 0)
    eig = [v for v, m in zip(lam, mult) for _ in range(m)] + [1.0] * n_unit
    if len(eig) > 3:
        fit.warnings.append(f"amplitude ranks account for {len(eig)} modes; keeping three")
        eig = eig[:3]
    n_hidden = 3 - len(eig)
    eig += [0.0] * n_hidden
    return DecaySpectrum(fit, [float(v) for v in eig], mult, n_unit, n_hidden)


@dataclass
class WitnessEstimate:
    """Correlation estimate assembled from both protocols."""

    u_c_true: float
    witness_bound: float
    spectrum: DecaySpectrum
    lambdas: list
    lambda_sum: float
    u_aa_est: float
    u_bb_est: float
    c_direct: float
    c_sim: float

    @property
    def u_abab_est(self) -> float:
        return self.lambda_sum - self.u_aa_est - self.u_bb_est

    @property
    def witnessed(self) -> bool:
        return self.c_sim > self.witness_bound

    def to_dict(self) -> dict:
        return {
            "u_c_true": self.u_c_true,
            "witness_bound": self.witness_bound,
            "model_form": self.spectrum.fit.model_form,
            "multiplicities": self.spectrum.multiplicities,
            "n_unit": self.spectrum.n_unit,
            "n_hidden": self.spectrum.n_hidden,
            "lambdas": self.lambdas,
            "lambda_sum": self.lambda_sum,
            "u_aa_est": self.u_aa_est,
            "u_bb_est": self.u_bb_est,
            "u_abab_est": self.u_abab_est,
            "c_direct": self.c_direct,
            "c_sim": self.c_sim,
            "witnessed": self.witnessed,
        }


def estimate_local_unitarity(
    noise: NoiseModel, subsystem: str = "A", k_list=DEFAULT_K, exact: bool = True, return_data: bool = False, **mc
):
    """Fit the reset-protocol decay for subsystem A (or B by exchanging roles).

    For a qubit the X, Y and Z expectations are all recorded for every
    sequence and fitted jointly, which cuts the sampling error of the
    decay roughly in half compared with a single observable.  Returns the
    :class:`FitResult`, or ``(fit, datasets)`` with ``return_data``.
    """
    if subsystem not in ("A", "B"):
        raise InvalidInputError("subsystem must be 'A' or 'B'")
    model = noise if subsystem == "A" else noise.swapped()
    g = model.gate_noise
    rho, _, m_a = default_spam(g.d_a, g.d_b)
    if g.d_a == 2:
        # three measurement settings on the same sequences; they share the decay
        m_a = np.array([PAULI[a] for a in "XYZ"])
    data = run_protocol_2(model, rho, m_a, k_list, exact=exact, **mc)
    fit = fit_single_exponential(data)
    return (fit, data) if return_data else fit


def witness_pipeline(
    bch: BipartiteChannel,
    reset_a: ResetModel | None = None,
    reset_b: ResetModel | None = None,
    k_list=DEFAULT_K,
    exact: bool = True,
    seqs_per_k: int = DEFAULT_SEQS,
    rng=None,
    workers: int | None = None,
    spectrum: DecaySpectrum | None = None,
) -> WitnessEstimate:
    """Estimate ``u_c`` from simulated data.

    The simultaneous protocol supplies the three twirl eigenvalues, whose
    sum is ``u_AA + u_BB + u_ABAB`` for any channel.  The reset protocol,
    run on each side, supplies ``u_AA`` (resetting B with ``reset_a``) and
    ``u_BB`` (resetting A with ``reset_b``).  A precomputed ``spectrum``
    skips the simultaneous protocol, which does not depend on the resets.
    """
    reset_a = reset_a or ResetModel()
    reset_b = reset_b or ResetModel()
    gens = _seed_sequence(rng).spawn(3)
    mc = {} if exact else dict(seqs_per_k=seqs_per_k, workers=workers)
    spec = spectrum if spectrum is not None else decay_spectrum(bch, k_list, exact, rng=gens[0], **mc)
    c_direct = estimate_C(spec.eigenvalues).value
    fa = estimate_local_unitarity(NoiseModel(bch, reset=reset_a), "A", k_list, exact, **(mc and dict(mc, rng=gens[1])))
    fb = estimate_local_unitarity(NoiseModel(bch, reset=reset_b), "B", k_list, exact, **(mc and dict(mc, rng=gens[2])))
    u_aa, u_bb = _fit_decay(fa), _fit_decay(fb)
    lam_sum = spec.total
    c_sim = (lam_sum - u_aa - u_bb) - u_aa * u_bb
    return WitnessEstimate(
        u_c_true=correlated_unitarity(bch),
        witness_bound=witness_bound(bch.d_a, bch.d_b),
        spectrum=spec,
        lambdas=spec.eigenvalues,
        lambda_sum=lam_sum,
        u_aa_est=u_aa,
        u_bb_est=u_bb,
        c_direct=float(c_direct),
        c_sim=float(c_sim),
    )


def _fit_decay(fit: FitResult) -> float:
    # a vanishing amplitude means the curve is flat: the decay merges with the constant
    if not fit.converged:
        return 1.0
    return float(fit.decays[0])


def theoretical_local_unitarities(bch: BipartiteChannel) -> tuple[float, float]:
    return sub_unitarity(bch, "A", "A"), sub_unitarity(bch, "B", "B")
