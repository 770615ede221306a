"""Local 2-design twirl of ``E (x) E`` and the resulting decay laws.

Averaging ``L(U_A (x) U_B)^{(x)2}`` over a product of unitary 2-designs
projects onto the span of four vectors of the doubled Liouville space,
ordered here as ``(|00>, |10>, |11>, |01>)``:

* ``|00> = |X_0 Y_0>|X_0 Y_0>``
* ``|10> = sqrt(alpha_A) sum_i |X_i Y_0>|X_i Y_0>``
* ``|11> = sqrt(alpha_A alpha_B) sum_ij |X_i Y_j>|X_i Y_j>``
* ``|01> = sqrt(alpha_B) sum_j |X_0 Y_j>|X_0 Y_j>``

(the bases are hermitian, so ``|X^dag>> = |X>>``).  The compressed 4x4
matrix has first row ``(1, 0, 0, 0)`` and a 3x3 block ``S`` of
sub-unitarities whose eigenvalues are the decay constants of simultaneous
randomized benchmarking.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .data import DecayDataset
from .exceptions import InvalidInputError
from .liouville import BipartiteChannel, Channel, _basis, extract_blocks, product_basis, sector_indices
from .measures import alpha, sub_unitarity_table

ORDER = ("00", "10", "11", "01")
DEGENERACY_RTOL = 1e-8
RANK_RTOL = 1e-9


def projector_eigenvectors(d_a: int, d_b: int) -> np.ndarray:
    """The four orthonormal invariant vectors, shape ``(4, N**2)`` with ``N = (d_A d_B)**2``."""
    if d_a < 2 or d_b < 2:
        raise InvalidInputError("dimensions must be >= 2")
    n = (d_a * d_b) ** 2
    idx = sector_indices(d_a, d_b)
    sqrt_w = {"A": np.sqrt(alpha(d_a)), "B": np.sqrt(alpha(d_b)), "AB": np.sqrt(alpha(d_a) * alpha(d_b))}
    vecs = np.zeros((4, n * n))
    vecs[0, 0] = 1.0
    for row, sector in zip((1, 2, 3), ("A", "AB", "B")):
        vecs[row, idx[sector] * n + idx[sector]] = sqrt_w[sector]
    return vecs


def projector(d_a: int, d_b: int) -> np.ndarray:
    """Dense projector onto the invariant subspace (product basis coordinates)."""
    v = projector_eigenvectors(d_a, d_b)
    return v.T @ v


def single_system_projector(d: int) -> np.ndarray:
    """Haar twirl projector of ``(U (x) U*)^{(x)2}`` in computational row-major coordinates."""
    b = _basis(d)
    vecs = b.elements.reshape(d * d, -1)
    zero = np.kron(vecs[0], vecs[0])
    daggers = np.conj(np.swapaxes(b.elements, 1, 2)).reshape(d * d, -1)
    one = sum(np.kron(vecs[k], daggers[k]) for k in range(1, d * d)) / np.sqrt(d * d - 1)
    return np.outer(zero, zero.conj()) + np.outer(one, one.conj())


def local_twirl_projector(d_a: int, d_b: int, twirl_a: bool = True, twirl_b: bool = True) -> np.ndarray:
    """Projector on the doubled product-basis Liouville space for a local twirl.

    Index order is ``(mu nu, mu' nu')``; untwirled subsystems act as identity.
    """

    def single(d, twirl):
        n = d * d
        if not twirl:
            return np.eye(n * n).reshape(n, n, n, n)
        p = np.zeros((n, n, n, n))
        p[0, 0, 0, 0] = 1.0
        k = np.arange(1, n)
        p[k[:, None], k[:, None], k[None, :], k[None, :]] = alpha(d)
        return p

    pa, pb = single(d_a, twirl_a), single(d_b, twirl_b)
    na, nb = d_a * d_a, d_b * d_b
    # pa[m, m', s, s'] pb[n, n', t, t'] -> Q[(m n), (m' n'), (s t), (s' t')]
    q = np.einsum("abcd,efgh->aebfcgdh", pa, pb)
    n = na * nb
    return q.reshape(n * n, n * n)


@dataclass(frozen=True, eq=False)
class TwirlMatrix:
    """Compressed twirl ``P (E (x) E) P`` in the basis ``(|00>, |10>, |11>, |01>)``."""

    m: np.ndarray
    d_a: int = 2
    d_b: int = 2
    liouville: np.ndarray | None = field(default=None, repr=False)

    @property
    def S(self) -> np.ndarray:
        return self.m[1:, 1:]

    @property
    def x_column(self) -> np.ndarray:
        return self.m[1:, 0]

    @classmethod
    def from_blocks(cls, S: np.ndarray, x_column=(0.0, 0.0, 0.0), d_a: int = 2, d_b: int = 2) -> "TwirlMatrix":
        m = np.zeros((4, 4))
        m[0, 0] = 1.0
        m[1:, 0] = x_column
        m[1:, 1:] = S
        return cls(m, d_a, d_b)

    def to_dict(self) -> dict:
        return {"order": list(ORDER), "m": self.m.tolist(), "d_a": self.d_a, "d_b": self.d_b}


def twirl_matrix(bch: BipartiteChannel) -> TwirlMatrix:
    """Closed form of the compressed twirl from sub-unitarities and non-unital norms."""
    da, db = bch.d_a, bch.d_b
    a_a, a_b = alpha(da), alpha(db)
    u = sub_unitarity_table(bch)
    lb = extract_blocks(bch)
    x = {s: float(np.sum(np.abs(lb.x_sub[s]) ** 2)) for s in ("A", "B", "AB")}
    m = np.zeros((4, 4))
    m[0, 0] = 1.0
    m[1:, 0] = (np.sqrt(a_a) * x["A"], np.sqrt(a_a * a_b) * x["AB"], np.sqrt(a_b) * x["B"])
    m[1, 1:] = (u[("A", "A")], u[("AB", "A")] / np.sqrt(a_b), np.sqrt(a_a / a_b) * u[("B", "A")])
    m[2, 1:] = (np.sqrt(a_b) * u[("A", "AB")], u[("AB", "AB")], np.sqrt(a_a) * u[("B", "AB")])
    m[3, 1:] = (np.sqrt(a_b / a_a) * u[("A", "B")], u[("AB", "B")] / np.sqrt(a_a), u[("B", "B")])
    return TwirlMatrix(m, da, db, np.asarray(lb.liouville))


def _sandwich(liou: np.ndarray, va: np.ndarray, vb: np.ndarray) -> complex:
    # <a| L (x) L |b> without forming the Kronecker product
    n = liou.shape[0]
    a, b = va.reshape(n, n), vb.reshape(n, n)
    return complex(np.sum(a.conj() * (liou @ b @ liou.T)))


def twirl_matrix_sandwich(bch: BipartiteChannel) -> np.ndarray:
    """4x4 matrix ``<i| L (x) L |j>`` computed directly from the invariant vectors."""
    vecs = projector_eigenvectors(bch.d_a, bch.d_b)
    liou = bch.liouville
    out = np.array([[_sandwich(liou, vecs[i], vecs[j]) for j in range(4)] for i in range(4)])
    return out.real if np.max(np.abs(out.imag)) < 1e-12 else out


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigenvalues of ``S`` with Jordan structure and a 4x4 similarity.

    ``m = transform @ jordan @ inv(transform)`` where ``jordan`` has the
    trivial eigenvalue 1 first, followed by the blocks of ``S``.
    """

    eigenvalues: np.ndarray
    jordan_shape: str
    transform: np.ndarray
    jordan: np.ndarray
    transform_s: np.ndarray
    jordan_s: np.ndarray
    blocks: tuple
    degeneracy_warning: bool = False

    def reconstruction_error(self, tm: TwirlMatrix) -> float:
        rec = self.transform_s @ self.jordan_s @ np.linalg.inv(self.transform_s)
        return float(np.max(np.abs(rec - tm.S)))

    def to_dict(self) -> dict:
        ev = self.eigenvalues
        return {
            "eigenvalues_re": ev.real.tolist(),
            "eigenvalues_im": ev.imag.tolist(),
            "jordan_shape": self.jordan_shape,
            "blocks": [list(b) for b in self.blocks],
            "degeneracy_warning": self.degeneracy_warning,
        }


def _null_space(a: np.ndarray, k: int) -> np.ndarray:
    _, _, vh = np.linalg.svd(a)
    return vh[-k:].conj().T


def _clusters(ev: np.ndarray) -> list[list[int]]:
    groups: list[list[int]] = []
    for i, lam in enumerate(ev):
        for g in groups:
            ref = ev[g[0]]
            if abs(lam - ref) <= DEGENERACY_RTOL * max(1.0, abs(ref)):
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def spectral_analysis(tm: TwirlMatrix) -> SpectralData:
    """Eigenvalues, Jordan shape and similarity transform of the twirl matrix."""
    s = np.asarray(tm.S, dtype=complex)
    ev = np.linalg.eigvals(s)
    ev = ev[np.lexsort((-ev.imag, -ev.real))]
    norm_s = max(np.linalg.norm(s, 2), 1e-300)
    thr = RANK_RTOL * norm_s
    warn = False
    chains: list[list[np.ndarray]] = []
    chain_vals: list[complex] = []
    shape = "diagonal"
    for g in _clusters(ev):
        lam = complex(np.mean(ev[g]))
        mult = len(g)
        a = s - lam * np.eye(3)
        sv = np.linalg.svd(a, compute_uv=False)
        nullity = int(np.sum(sv <= thr))
        if mult > 1 and nullity < mult and np.any((sv > thr) & (sv < 1e3 * thr)):
            warn = True
            nullity = mult
        nullity = max(1, min(nullity, mult))
        if nullity == mult:
            for v in _null_space(a, mult).T:
                chains.append([v])
                chain_vals.append(lam)
            continue
        if mult == 2 or (mult == 3 and nullity == 1):
            v = _null_space(a, 1)[:, 0]
            chain = [v]
            for _ in range(mult - 1):
                chain.append(np.linalg.lstsq(a, chain[-1], rcond=None)[0])
            chains.append(chain)
            chain_vals.append(lam)
            shape = "oneBlock2" if mult == 2 else "oneBlock3"
        else:
            # one 2-block and one 1-block with the same eigenvalue: a @ a = 0
            u_left, _, _ = np.linalg.svd(a)
            v1 = u_left[:, 0]
            v2 = np.linalg.lstsq(a, v1, rcond=None)[0]
            ns = _null_space(a, 2)
            other = ns[:, 0] - v1 * np.vdot(v1, ns[:, 0])
            if np.linalg.norm(other) < 1e-8:
                other = ns[:, 1] - v1 * np.vdot(v1, ns[:, 1])
            chains += [[v1, v2], [other / np.linalg.norm(other)]]
            chain_vals += [lam, lam]
            shape = "oneBlock2"
    cols, jd, blocks = [], np.zeros((3, 3), dtype=complex), []
    pos = 0
    for lam, chain in zip(chain_vals, chains):
        for j, v in enumerate(chain):
            cols.append(v)
            jd[pos + j, pos + j] = lam
            if j > 0:
                jd[pos + j - 1, pos + j] = 1.0
        blocks.append((lam.real if abs(lam.imag) < 1e-12 else lam, len(chain)))
        pos += len(chain)
    vs = np.array(cols).T
    # 4x4 similarity: eigenvector (1, w) of the trivial eigenvalue with (I - S) w = x
    x = np.asarray(tm.x_column, dtype=complex)
    w = np.linalg.lstsq(np.eye(3) - s, x, rcond=None)[0]
    t4 = np.zeros((4, 4), dtype=complex)
    t4[0, 0] = 1.0
    t4[1:, 0] = w
    t4[1:, 1:] = vs
    j4 = np.zeros((4, 4), dtype=complex)
    j4[0, 0] = 1.0
    j4[1:, 1:] = jd
    if not np.allclose(x + s @ w, w, atol=1e-9):
        warn = True
    return SpectralData(ev, shape, t4, j4, vs, jd, tuple(blocks), warn)


def spam_vectors(tm: TwirlMatrix, M: np.ndarray, rho: np.ndarray, noise_after_gate: bool = True):
    """Projections of ``M (x) M`` and ``rho (x) rho`` onto the invariant vectors.

    With ``noise_after_gate`` the final noise layer is folded into the
    measurement side, ``<M M| E (x) E |a>``.
    """
    basis = product_basis(tm.d_a, tm.d_b)
    vecs = projector_eigenvectors(tm.d_a, tm.d_b)
    n = len(basis)
    cm = basis.coordinates(np.asarray(M, dtype=complex)).conj()
    if noise_after_gate and tm.liouville is not None:
        cm = cm @ tm.liouville
    cr = basis.coordinates(np.asarray(rho, dtype=complex))
    left = np.array([cm @ v.reshape(n, n) @ cm for v in vecs])
    right = np.array([cr @ v.reshape(n, n).conj() @ cr for v in vecs])
    return left, right


def predict_decay(
    tm: TwirlMatrix,
    M: np.ndarray,
    rho: np.ndarray,
    k_max: int,
    k_list=None,
    noise_after_gate: bool = True,
) -> DecayDataset:
    """Exact ``E_s[m(s)**2]`` for sequence lengths ``1..k_max`` (or ``k_list``)."""
    if k_list is None:
        if k_max < 2:
            raise InvalidInputError("k_max must be >= 2")
        k_list = np.arange(1, k_max + 1)
    k_list = np.asarray(k_list, dtype=int)
    left, right = spam_vectors(tm, M, rho, noise_after_gate)
    out = np.empty(len(k_list))
    for i, k in enumerate(k_list):
        out[i] = np.real(left @ np.linalg.matrix_power(tm.m, int(k) - 1) @ right)
    return DecayDataset(k_list, out, meta={"source": "exact-twirl"})


class CEstimate(NamedTuple):
    value: float
    in_regime: bool
    sorted_decays: tuple


def estimate_C(decays) -> CEstimate:
    """``|l3 - l1 l2|`` with the decays sorted in descending order.

    ``in_regime`` is false when any decay lies outside ``[0, 1]`` or had a
    non-negligible imaginary part; the value is then reported from real
    parts but carries no separable-regime guarantee.
    """
    lam = np.asarray(decays, dtype=complex)
    if lam.size != 3:
        raise InvalidInputError("estimate_C needs exactly three decay constants")
    regime = True
    if np.max(np.abs(lam.imag)) > 1e-8:
        warnings.warn("complex decay constants; using real parts", RuntimeWarning, stacklevel=2)
        regime = False
    r = np.sort(lam.real)[::-1]
    if np.any(r < -1e-9) or np.any(r > 1 + 1e-9):
        regime = False
    return CEstimate(float(abs(r[2] - r[0] * r[1])), regime, tuple(float(v) for v in r))


def recover_uabab_from_global(u_global: float, lambda_sum: float, d: int) -> float:
    """``((d**2+1) u - sum(lambda)) / (d**2 - 2)`` for unital separable channels."""
    if d < 2:
        raise InvalidInputError("subsystem dimension must be >= 2")
    return ((d * d + 1) * u_global - lambda_sum) / (d * d - 2)


def eigenvalue_deviation_bound(tm: TwirlMatrix) -> tuple[float, float]:
    """``(bound, deviation)`` with bound ``(1 - u_AA)/sqrt(alpha_B)``.

    The deviation is the distance from ``u_AA`` to the nearest eigenvalue of ``S``.
    """
    u_aa = tm.S[0, 0]
    bound = (1 - u_aa) / np.sqrt(alpha(tm.d_b))
    ev = np.linalg.eigvals(tm.S)
    return float(bound), float(np.min(np.abs(ev - u_aa)))
