"""Scalar channel measures built from Liouville sub-blocks.

The central objects are the sub-unitarities

    u_{X->Y} = alpha_X * ||T_{X->Y}||_F**2,   X, Y in {A, B, AB},

with ``alpha_A = 1/(d_A**2 - 1)``, ``alpha_B = 1/(d_B**2 - 1)`` and
``alpha_AB = alpha_A * alpha_B``, and the correlated unitarity
``u_c = u_{AB->AB} - u_{A->A} u_{B->B}``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .exceptions import InvalidInputError, NumericalDomainError, UnsupportedError
from .liouville import SECTORS, BipartiteChannel, Channel, _basis, extract_blocks

WITNESS_GUARD = 1e-9


def alpha(d: int) -> float:
    """Sector normalization ``1/(d**2 - 1)``."""
    return 1.0 / (d * d - 1)


def sector_alpha(d_a: int, d_b: int, sector: str) -> float:
    return {"A": alpha(d_a), "B": alpha(d_b), "AB": alpha(d_a) * alpha(d_b)}[sector]


def _as_bipartite(bch) -> BipartiteChannel:
    if not isinstance(bch, BipartiteChannel):
        raise InvalidInputError("expected a BipartiteChannel")
    return bch


def _unital_block(ch: Channel) -> np.ndarray:
    return ch.liouville()[1:, 1:]


def unitarity(ch: Channel | BipartiteChannel, allow_non_square: bool = False) -> float:
    """Unitarity ``tr(T^dag T)/(d_in**2 - 1)``.

    Non-square channels are accepted only with ``allow_non_square``; they
    use the same normalization by the input dimension.
    """
    if isinstance(ch, BipartiteChannel):
        ch = ch.channel
    if ch.d_in != ch.d_out and not allow_non_square:
        raise UnsupportedError("unitarity of a non-square channel requires allow_non_square=True")
    t = _unital_block(ch)
    return float(np.sum(np.abs(t) ** 2).real / (ch.d_in**2 - 1))


def sub_unitarity(bch: BipartiteChannel, source: str, target: str) -> float:
    """Sub-unitarity ``u_{source->target}``."""
    bch = _as_bipartite(bch)
    if source not in SECTORS or target not in SECTORS:
        raise InvalidInputError(f"sectors must be among {SECTORS}")
    blk = extract_blocks(bch).blocks[(source, target)]
    return float(sector_alpha(bch.d_a, bch.d_b, source) * np.sum(np.abs(blk) ** 2))


def sub_unitarity_table(bch: BipartiteChannel) -> dict[tuple[str, str], float]:
    """All nine sub-unitarities keyed by ``(source, target)``."""
    bch = _as_bipartite(bch)
    lb = extract_blocks(bch)
    return {
        key: float(sector_alpha(bch.d_a, bch.d_b, key[0]) * np.sum(np.abs(blk) ** 2))
        for key, blk in lb.blocks.items()
    }


def correlated_unitarity(bch: BipartiteChannel) -> float:
    """``u_{AB->AB} - u_{A->A} * u_{B->B}``."""
    tab = sub_unitarity_table(bch)
    return tab[("AB", "AB")] - tab[("A", "A")] * tab[("B", "B")]


def witness_bound_exact(d_a: int, d_b: int) -> Fraction:
    """Separable ceiling ``beta_A (1 + beta_B)(1 - 1/min(d_A**2, d_B**2)) + 1/4`` as a fraction.

    ``beta_i = 1/(d_i**2 - 1)`` for qubits and ``d_i/(d_i**2 - 1)`` otherwise.
    """
    if d_a < 2 or d_b < 2:
        raise InvalidInputError("dimensions must be >= 2")

    def beta(d):
        return Fraction(1, d * d - 1) if d == 2 else Fraction(d, d * d - 1)

    return beta(d_a) * (1 + beta(d_b)) * (1 - Fraction(1, min(d_a, d_b) ** 2)) + Fraction(1, 4)


def witness_bound(d_a: int, d_b: int) -> float:
    return float(witness_bound_exact(d_a, d_b))


def unitarity_decomposition_check(bch: BipartiteChannel) -> float:
    """Residual of ``u = (1/(d**2-1)) sum_{X,Y} u_{X->Y} / alpha_X``."""
    bch = _as_bipartite(bch)
    tab = sub_unitarity_table(bch)
    d = bch.dim
    rhs = sum(v / sector_alpha(bch.d_a, bch.d_b, src) for (src, _), v in tab.items()) / (d * d - 1)
    return abs(unitarity(bch.channel) - rhs)


class Addressability(NamedTuple):
    a: float
    e_a: float
    e_b: float
    e_ab: float


def addressability(bch: BipartiteChannel) -> Addressability:
    """Trace-based correlation ``a = e_AB - e_A e_B`` with ``e_X = alpha_X tr T_{X->X}``."""
    bch = _as_bipartite(bch)
    lb = extract_blocks(bch)
    e = {s: float(sector_alpha(bch.d_a, bch.d_b, s) * np.trace(lb.blocks[(s, s)]).real) for s in SECTORS}
    return Addressability(e["AB"] - e["A"] * e["B"], e["A"], e["B"], e["AB"])


def entanglement_fidelity(ch: Channel) -> float:
    d = ch.d_in
    phi = np.eye(d).reshape(-1) / np.sqrt(d)
    return float(np.real(phi.conj() @ ch.choi @ phi))


def infidelity(ch: Channel | BipartiteChannel) -> float:
    """Average infidelity ``1 - (d F_e + 1)/(d + 1)`` from the entanglement fidelity."""
    if isinstance(ch, BipartiteChannel):
        ch = ch.channel
    if ch.d_in != ch.d_out:
        raise UnsupportedError("infidelity requires a square channel")
    d = ch.d_in
    return 1.0 - (d * entanglement_fidelity(ch) + 1) / (d + 1)


class DiamondBounds(NamedTuple):
    lower_r: float
    upper_r: float
    lower_u: float
    upper_u: float


def diamond_bounds(ch: Channel | BipartiteChannel, k2_tol: float = 1e-12) -> DiamondBounds:
    """Bounds on the diamond distance to the identity.

    The first pair uses infidelity only, ``d/(d+1) r`` and ``sqrt(d(d+1) r)``.
    The second pair adds unitarity through
    ``K**2 = (d**2-1)/d**2 (u + 2 d r/(d-1) - 1)``: ``K/sqrt(2)`` and
    ``sqrt(d**3 K**2/4 + (d+1)**2 r**2/2)``.
    """
    if isinstance(ch, BipartiteChannel):
        ch = ch.channel
    d = ch.d_in
    r = max(infidelity(ch), 0.0)
    u = unitarity(ch)
    k2 = (d * d - 1) / (d * d) * (u + 2 * d * r / (d - 1) - 1)
    if k2 < -k2_tol:
        raise NumericalDomainError(f"K^2 = {k2:.3e} is negative beyond tolerance")
    k2 = max(k2, 0.0)
    return DiamondBounds(
        d / (d + 1) * r,
        float(np.sqrt(d * (d + 1) * r)),
        float(np.sqrt(k2 / 2)),
        float(np.sqrt(d**3 * k2 / 4 + (d + 1) ** 2 * r * r / 2)),
    )


@dataclass(frozen=True, eq=False)
class ComplementaryPair:
    """Channel, its complementary channel and the joint Stinespring isometry.

    ``isometry`` maps ``X`` into ``A (x) B`` with the environment ``B``
    second, ``V = sum_i K_i (x) |i>``.
    """

    primary: Channel
    complementary: Channel
    isometry: np.ndarray


def complementary_channel(ch: Channel) -> ComplementaryPair:
    """Stinespring dilation from the canonical Kraus set and the induced environment channel."""
    ks = np.array(ch.kraus)  # (k, d_out, d_in)
    k = ks.shape[0]
    v = ks.transpose(1, 0, 2).reshape(ch.d_out * k, ch.d_in)
    # environment Kraus F_a[i, x] = K_i[a, x]
    comp = Channel.from_kraus([ks[:, a, :] for a in range(ch.d_out)])
    return ComplementaryPair(ch, comp, v)


def information_disturbance_sum(ch: Channel) -> float:
    """``u(E) + u(E^c)`` with non-square unitarities normalized by the input dimension."""
    pair = complementary_channel(ch)
    return unitarity(ch, allow_non_square=True) + unitarity(pair.complementary, allow_non_square=True)


def _pauli_expectation(op: np.ndarray, rho: np.ndarray) -> float:
    return float(np.real(np.trace(op @ rho)))


def correlation_function_sum(bch: BipartiteChannel, connected: bool = True) -> float:
    """Weighted sum of two-point correlation functions over Pauli probes.

    For normalized Pauli operators ``P_i`` on A and ``Q_j`` on B the probe
    states are ``psi_kl = (I + P_k (x) Q_l)/d`` on AB and ``(I + P_k)/d_A``,
    ``(I + Q_l)/d_B`` on the marginals.  With ``connected=True`` every
    expectation value is taken relative to the response to the maximally
    mixed input, and the sum

        alpha_AB d**2 sum_{ijkl} [ (<P_i Q_j>_{E(psi_kl)})**2
                                   - (<P_i>_{E_A(psi_k)})**2 (<Q_j>_{E_B(psi_l)})**2 ]

    equals the correlated unitarity for every channel.  ``connected=False``
    evaluates the unsubtracted version with maximally mixed marginals.
    """
    bch = _as_bipartite(bch)
    da, db = bch.d_a, bch.d_b
    if (da & (da - 1)) or (db & (db - 1)):
        raise UnsupportedError("correlation functions are defined with Pauli probes (power-of-two dims)")
    pa, pb = _basis(da).elements[1:], _basis(db).elements[1:]
    d = da * db
    ch = bch.channel
    ea, eb = bch.local_a(), bch.local_b()
    eye = np.eye(d)
    base = ch.apply(eye / d)
    obs = np.einsum("iab,jcd->ijacbd", pa, pb).reshape(len(pa), len(pb), d, d)

    joint = 0.0
    for k in range(len(pa)):
        for l in range(len(pb)):
            out = ch.apply((eye + np.kron(pa[k], pb[l])) / d)
            if connected:
                out = out - base
            vals = np.einsum("ijab,ba->ij", obs, out).real
            joint += float(np.sum(vals**2))

    def local_response(e, probes, dd):
        base_out = e.apply(np.eye(dd) / dd)
        resp = np.empty((len(probes), len(probes)))
        for k, pk in enumerate(probes):
            out = e.apply((np.eye(dd) + pk) / dd) - base_out if connected else base_out
            resp[:, k] = [_pauli_expectation(p, out) for p in probes]
        return resp

    ra = local_response(ea, pa, da)
    rb = local_response(eb, pb, db)
    local = float(np.sum(ra**2) * np.sum(rb**2))
    return alpha(da) * alpha(db) * d * d * (joint - local)


def correlation_function_identity(bch: BipartiteChannel, connected: bool = True) -> float:
    """Residual ``|correlation_function_sum - u_c|``."""
    return abs(correlation_function_sum(bch, connected) - correlated_unitarity(bch))


@dataclass(frozen=True)
class NormComparison:
    delta: float
    u_c: float
    t_ab: float
    t_a: float
    t_b: float
    theta_cos: float
    identity_residual: float
    lower: float
    upper: float

    @property
    def ta_tb(self) -> float:
        return self.t_a * self.t_b

    @property
    def sandwich_holds(self) -> bool:
        d2 = self.delta**2
        tol = 1e-10 * max(1.0, self.upper)
        return self.lower - tol <= d2 <= self.upper + tol


def norm_comparison(bch: BipartiteChannel) -> NormComparison:
    """Compare ``T_{AB->AB}`` with ``T_{A->A} (x) T_{B->B}`` in Frobenius norm."""
    bch = _as_bipartite(bch)
    lb = extract_blocks(bch)
    t_a_m, t_b_m, t_ab_m = lb.blocks[("A", "A")], lb.blocks[("B", "B")], lb.blocks[("AB", "AB")]
    prod = np.kron(t_a_m, t_b_m)
    delta2 = float(np.sum(np.abs(t_ab_m - prod) ** 2))
    t_ab, t_a, t_b = (float(np.linalg.norm(m)) for m in (t_ab_m, t_a_m, t_b_m))
    small = min(t_ab, t_a, t_b) < 1e-14
    cos = 0.0 if small else float(np.real(np.vdot(prod, t_ab_m)) / (t_ab * t_a * t_b))
    model = t_ab**2 + (t_a * t_b) ** 2 - (0.0 if small else 2 * t_ab * t_a * t_b * cos)
    u_c = alpha(bch.d_a) * alpha(bch.d_b) * (t_ab**2 - (t_a * t_b) ** 2)
    return NormComparison(
        delta=float(np.sqrt(delta2)),
        u_c=u_c,
        t_ab=t_ab,
        t_a=t_a,
        t_b=t_b,
        theta_cos=cos,
        identity_residual=abs(delta2 - model),
        lower=(t_ab - t_a * t_b) ** 2,
        upper=(t_ab + t_a * t_b) ** 2,
    )


def is_unital(ch: Channel, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(ch.liouville()[1:, 0]), initial=0.0) < tol)


def t_inner_product(ch1: Channel, ch2: Channel) -> float:
    """``Re tr(T_1^dag T_2)`` of the unital blocks."""
    if (ch1.d_in, ch1.d_out) != (ch2.d_in, ch2.d_out):
        raise InvalidInputError("channels must have equal dimensions")
    return float(np.real(np.vdot(_unital_block(ch1), _unital_block(ch2))))


def t_inner_product_bounds(ch1: Channel, ch2: Channel, tol: float = 1e-10) -> tuple[float, float, float]:
    """Inner product of unital blocks with its proven bounds.

    Returns ``(value, lower, upper)``; ``upper = d**2 - 1`` and
    ``lower = -1`` for qubits or when either channel is unital, ``-d``
    otherwise.  Raises :class:`NumericalDomainError` on violation.
    """
    d = ch1.d_in
    val = t_inner_product(ch1, ch2)
    lower = -1.0 if (d == 2 or is_unital(ch1) or is_unital(ch2)) else -float(d)
    upper = float(d * d - 1)
    if not lower - tol <= val <= upper + tol:
        raise NumericalDomainError(f"<T1,T2> = {val} outside [{lower}, {upper}]")
    return val, lower, upper


@dataclass(frozen=True)
class PauliClosedForms:
    u: float
    u_aa: float
    u_bb: float
    u_abab: float
    u_c: float


def pauli_channel_measures(weights: np.ndarray, d_a: int = 2, d_b: int = 2) -> PauliClosedForms:
    """Closed-form unitarities of a Pauli channel.

    ``weights[i, j]`` is the probability of Pauli string ``i`` on A and
    ``j`` on B (summing to one).  Internally the weights are rescaled to
    ``p = d * weights`` with ``d = d_A d_B``, so that ``u = (sum p**2 - 1)/(d**2 - 1)``.
    """
    from .zoo import _check_prob_table

    w = _check_prob_table(weights, (d_a * d_a, d_b * d_b))
    n_a, n_b, n = d_a * d_a, d_b * d_b, d_a * d_a * d_b * d_b
    p = d_a * d_b * w
    q_a = d_a * w.sum(axis=1)
    q_b = d_b * w.sum(axis=0)
    s, s_a, s_b = float(np.sum(p**2)), float(np.sum(q_a**2)), float(np.sum(q_b**2))
    u = (s - 1) / (n - 1)
    u_aa = (s_a - 1) / (n_a - 1)
    u_bb = (s_b - 1) / (n_b - 1)
    u_abab = ((n - 1) * u - (n_a - 1) * u_aa - (n_b - 1) * u_bb) / ((n_a - 1) * (n_b - 1))
    u_c = (s - s_a * s_b) / ((n_a - 1) * (n_b - 1))
    return PauliClosedForms(u, u_aa, u_bb, u_abab, u_c)


def error_basis_correlated_unitarity(weights, d_a: int = 2, d_b: int = 2) -> float:
    """Closed form for mixtures of distinct local error-basis pairs.

    ``u_c = d_A**2 d_B**2 / ((d_A**2-1)(d_B**2-1)) * (sum p**2 - (sum p**2)**2)``.
    """
    p = np.asarray(weights, dtype=float)
    s = float(np.sum(p**2))
    return d_a**2 * d_b**2 / ((d_a**2 - 1) * (d_b**2 - 1)) * (s - s * s)


@dataclass
class MeasureReport:
    """All scalar measures of a bipartite channel."""

    d_a: int
    d_b: int
    u: float
    sub: dict
    u_c: float
    witness_bound: float
    witness_violated: bool
    addressability: dict
    infidelity: float
    x_norms: dict
    decomposition_residual: float = field(default=0.0)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sub"] = {f"{k[0]}->{k[1]}": v for k, v in self.sub.items()}
        return out


def measure_report(bch: BipartiteChannel) -> MeasureReport:
    bch = _as_bipartite(bch)
    tab = sub_unitarity_table(bch)
    u_c = tab[("AB", "AB")] - tab[("A", "A")] * tab[("B", "B")]
    c = witness_bound(bch.d_a, bch.d_b)
    lb = extract_blocks(bch)
    ad = addressability(bch)
    return MeasureReport(
        d_a=bch.d_a,
        d_b=bch.d_b,
        u=unitarity(bch.channel),
        sub=tab,
        u_c=u_c,
        witness_bound=c,
        witness_violated=bool(u_c > c + WITNESS_GUARD),
        addressability=ad._asdict(),
        infidelity=infidelity(bch.channel),
        x_norms={s: float(np.sum(np.abs(lb.x_sub[s]) ** 2)) for s in SECTORS},
        decomposition_residual=unitarity_decomposition_check(bch),
    )
