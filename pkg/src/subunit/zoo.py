"""Named channels and seeded random samplers.

All samplers draw from :class:`numpy.random.Generator` backed by the
counter-based Philox bit generator.  Independent streams for parallel work
are obtained with :func:`spawn_rngs`, which splits a :class:`SeedSequence`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import InvalidInputError, UnsupportedError
from .liouville import PAULI, BipartiteChannel, Channel


def make_rng(seed=None) -> np.random.Generator:
    """Philox-backed generator from an int, a ``SeedSequence`` or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    """``n`` statistically independent generators derived from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(child)) for child in ss.spawn(n)]


def _ginibre(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _is_power_of_two(d: int) -> bool:
    return d >= 2 and (d & (d - 1)) == 0


def pauli_strings(n: int) -> np.ndarray:
    """Unnormalized Pauli strings on ``n`` qubits in lexicographic order."""
    out = []
    for word in itertools.product("IXYZ", repeat=n):
        m = np.array([[1.0 + 0j]])
        for ch in word:
            m = np.kron(m, PAULI[ch])
        out.append(m)
    return np.array(out)


# -- named channels -------------------------------------------------------


def identity_channel(d: int) -> Channel:
    return Channel.from_unitary(np.eye(d))


def swap_unitary(d: int) -> np.ndarray:
    u = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            u[j * d + i, i * d + j] = 1.0
    return u


CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def depolarizing(p: float, d: int) -> Channel:
    """``rho -> (1-p) rho + p tr(rho) I/d``."""
    if not 0 <= p <= 1 + 1 / (d * d - 1):
        raise InvalidInputError(f"depolarizing parameter {p} outside the CPTP range")
    vec_i = np.eye(d).reshape(-1)
    s = (1 - p) * np.eye(d * d) + p * np.outer(vec_i, vec_i) / d
    return Channel(s, d, d).validate()


def reset_to_state(rho: np.ndarray) -> Channel:
    """Replacement channel ``X -> tr(X) rho``."""
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    if np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2)) < -1e-12 or abs(np.trace(rho) - 1) > 1e-12:
        raise InvalidInputError("reset target is not a density matrix")
    return Channel(np.outer(rho.reshape(-1), np.eye(d).reshape(-1)), d, d).validate()


def named_channel(name: str, d_a: int = 2, d_b: int | None = None, **params):
    """Build a named channel.

    Parameters
    ----------
    name : {"identity", "swap", "cnot", "depolarizing", "reset_to_state"}
    d_a, d_b : int
        Subsystem dimensions.  When ``d_b`` is given the result is a
        :class:`BipartiteChannel` on ``d_a * d_b``; otherwise a
        :class:`Channel` on ``d_a``.
    **params
        ``p`` for depolarizing, ``state`` for reset_to_state.
    """
    d = d_a * (d_b or 1)
    if name == "identity":
        ch = identity_channel(d)
    elif name == "swap":
        if d_b is None or d_a != d_b:
            raise InvalidInputError("swap requires d_a == d_b")
        ch = Channel.from_unitary(swap_unitary(d_a))
    elif name == "cnot":
        if (d_a, d_b) != (2, 2):
            raise InvalidInputError("cnot requires two qubits")
        ch = Channel.from_unitary(CNOT)
    elif name == "depolarizing":
        ch = depolarizing(float(params.get("p", 0.0)), d)
    elif name == "reset_to_state":
        state = params.get("state")
        if state is None:
            state = np.zeros((d, d))
            state[0, 0] = 1.0
        ch = reset_to_state(state)
    else:
        raise InvalidInputError(f"unknown channel name {name!r}")
    return BipartiteChannel(ch, d_a, d_b) if d_b is not None else ch


# -- samplers -------------------------------------------------------------


def random_unitary(d: int, rng=None) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    if d < 2:
        raise InvalidInputError("random_unitary requires d >= 2")
    rng = make_rng(rng)
    q, r = np.linalg.qr(_ginibre(rng, (d, d)))
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_choi(d_in: int, d_out: int, rank: int, rng=None) -> np.ndarray:
    """Unit-trace Choi state of a random CPTP map (Ginibre / BCSZ construction)."""
    if not 1 <= rank <= d_in * d_out:
        raise InvalidInputError(f"Kraus rank must lie in [1, {d_in * d_out}], got {rank}")
    if rank * d_out < d_in:
        raise InvalidInputError(f"Kraus rank {rank} too small for a trace preserving map {d_in} -> {d_out}")
    rng = make_rng(rng)
    while True:
        g = _ginibre(rng, (d_out * d_in, rank))
        dmat = g @ g.conj().T
        y = np.einsum("aiaj->ij", dmat.reshape(d_out, d_in, d_out, d_in))
        w, v = np.linalg.eigh(y)
        if w[0] > 1e-12 * w[-1]:
            break
    y_isqrt = (v / np.sqrt(w)) @ v.conj().T
    m = np.kron(np.eye(d_out), y_isqrt)
    choi = m @ dmat @ m
    return (choi + choi.conj().T) / (2 * d_in)


def random_channel(d_in: int, d_out: int | None = None, rank: int | None = None, rng=None) -> Channel:
    """Random CPTP map with the given Kraus rank (full rank by default)."""
    d_out = d_in if d_out is None else d_out
    rank = d_in * d_out if rank is None else rank
    return Channel.from_choi(random_choi(d_in, d_out, rank, rng), d_in, d_out)


def random_bipartite(d_a: int = 2, d_b: int = 2, rank: int | None = None, rng=None) -> BipartiteChannel:
    d = d_a * d_b
    return BipartiteChannel(random_channel(d, d, rank, rng), d_a, d_b)


def random_unitary_channel(d_a: int = 2, d_b: int = 2, rng=None) -> BipartiteChannel:
    return BipartiteChannel(Channel.from_unitary(random_unitary(d_a * d_b, rng)), d_a, d_b)


@dataclass(frozen=True)
class SeparableSpec:
    """Certificate ``E = sum_k w_k E_k (x) F_k`` of a separable channel."""

    terms: tuple

    def __post_init__(self):
        w = np.array([t[0] for t in self.terms], dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise InvalidInputError("separable weights must be nonnegative and sum to 1")

    @property
    def weights(self) -> np.ndarray:
        return np.array([t[0] for t in self.terms])

    def channel(self) -> BipartiteChannel:
        a, b = self.terms[0][1], self.terms[0][2]
        mixed = Channel.mixture(self.weights, [ca.tensor(cb) for _, ca, cb in self.terms])
        return BipartiteChannel(mixed, a.d_in, b.d_in)


def random_separable(
    d_a: int = 2,
    d_b: int = 2,
    num_terms: int = 2,
    rng=None,
    rank: int | None = None,
) -> tuple[BipartiteChannel, SeparableSpec]:
    """Dirichlet(1,...,1) mixture of random product channels.

    ``rank`` fixes the Kraus rank of every factor; by default each factor
    draws its rank uniformly from ``1..d**2``.
    """
    if num_terms < 1:
        raise InvalidInputError("num_terms must be >= 1")
    rng = make_rng(rng)
    weights = rng.dirichlet(np.ones(num_terms)) if num_terms > 1 else np.ones(1)
    terms = []
    for w in weights:
        ra = rank if rank is not None else int(rng.integers(1, d_a * d_a + 1))
        rb = rank if rank is not None else int(rng.integers(1, d_b * d_b + 1))
        terms.append((float(w), random_channel(d_a, d_a, ra, rng), random_channel(d_b, d_b, rb, rng)))
    # renormalize in float so the certificate check is exact
    s = sum(t[0] for t in terms)
    terms = [(w / s, a, b) for w, a, b in terms]
    spec = SeparableSpec(tuple(terms))
    return spec.channel(), spec


def pauli_channel(weights: np.ndarray, d_a: int = 2, d_b: int = 2) -> BipartiteChannel:
    """Pauli channel ``rho -> sum p[a,b] (s_a (x) s_b) rho (s_a (x) s_b)``.

    ``weights`` has shape ``(d_a**2, d_b**2)`` indexed by Pauli strings in
    lexicographic order and sums to one.
    """
    if not (_is_power_of_two(d_a) and _is_power_of_two(d_b)):
        raise UnsupportedError("Pauli channels require power-of-two dimensions")
    p = _check_prob_table(weights, (d_a * d_a, d_b * d_b))
    pa = pauli_strings(d_a.bit_length() - 1)
    pb = pauli_strings(d_b.bit_length() - 1)
    kraus = [np.sqrt(p[i, j]) * np.kron(pa[i], pb[j]) for i in range(len(pa)) for j in range(len(pb)) if p[i, j] > 0]
    return BipartiteChannel(Channel.from_kraus(kraus), d_a, d_b)


def _check_prob_table(weights, shape) -> np.ndarray:
    p = np.asarray(weights, dtype=float)
    if p.shape != shape:
        raise InvalidInputError(f"weight table has shape {p.shape}, expected {shape}")
    if np.any(p < -1e-15):
        raise InvalidInputError("weights must be nonnegative")
    if abs(p.sum() - 1) > 1e-12:
        raise InvalidInputError(f"weights must sum to 1 (got {p.sum():.15g})")
    return np.clip(p, 0, None)


def random_pauli_weights(d_a: int = 2, d_b: int = 2, rng=None, sparsity: float = 0.0) -> np.ndarray:
    """Random probability table over Pauli pairs, optionally with zeroed entries."""
    rng = make_rng(rng)
    w = rng.dirichlet(np.ones(d_a * d_a * d_b * d_b))
    if sparsity > 0:
        w = w * (rng.random(w.size) >= sparsity)
        if w.sum() == 0:
            w[0] = 1.0
        w = w / w.sum()
    return w.reshape(d_a * d_a, d_b * d_b)


def unitary_error_basis_mixture(
    weights: Sequence[float],
    d_a: int = 2,
    d_b: int = 2,
    pairs: Sequence[tuple[int, int]] | None = None,
    rng=None,
) -> BipartiteChannel:
    """Mixture ``sum_k p_k (U_k (x) V_k) . (U_k (x) V_k)^dag`` over Pauli error bases.

    By default term ``k`` uses the ``k``-th Pauli string on both sides; with
    ``rng`` the pairs are drawn as a random injective assignment.  Explicit
    ``pairs`` of Pauli indices override both.
    """
    if not (_is_power_of_two(d_a) and _is_power_of_two(d_b)):
        raise UnsupportedError("error-basis mixtures use Pauli strings and need power-of-two dimensions")
    w = np.asarray(weights, dtype=float)
    n = len(w)
    if pairs is None:
        if n > min(d_a * d_a, d_b * d_b):
            raise InvalidInputError("more terms than distinct error-basis elements; pass explicit pairs")
        if rng is not None:
            rng = make_rng(rng)
            pairs = list(zip(rng.permutation(d_a * d_a)[:n], rng.permutation(d_b * d_b)[:n]))
        else:
            pairs = [(k, k) for k in range(n)]
    table = np.zeros((d_a * d_a, d_b * d_b))
    for wk, (i, j) in zip(w, pairs):
        table[i, j] += wk
    return pauli_channel(table, d_a, d_b)


def separable_search_zero_uc(d_a: int = 2, d_b: int = 2, rng=None, tol: float = 1e-12):
    """Separable channel with vanishing correlated unitarity that is not a product.

    Bisects the mixing weight between the negatively correlated mixture
    ``(id (x) D + D (x) id)/2`` (``D`` completely depolarizing) and a random
    separable channel with positive correlated unitarity.
    """
    from .measures import correlated_unitarity

    rng = make_rng(rng)
    da, db = d_a, d_b
    neg = Channel.mixture(
        [0.5, 0.5],
        [identity_channel(da).tensor(depolarizing(1.0, db)), depolarizing(1.0, da).tensor(identity_channel(db))],
    )
    while True:
        pos, _ = random_separable(da, db, 2, rng, rank=1)
        if correlated_unitarity(pos) > 1e-3:
            break

    def f(t):
        return BipartiteChannel(neg.mix(pos.channel, t), da, db)

    lo, hi = 1.0, 0.0  # u_c(f(1)) < 0 < u_c(f(0))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if correlated_unitarity(f(mid)) < 0:
            lo = mid
        else:
            hi = mid
        if abs(lo - hi) < tol:
            break
    return f(0.5 * (lo + hi))
