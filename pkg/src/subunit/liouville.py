"""Operator bases, vectorization and channel representations.

Conventions
-----------
* Vectorization is row-major: ``|a><b|`` maps to ``|a> (x) |b>``, i.e.
  ``vectorize(M) == M.reshape(-1)``.  With this convention the channel
  ``rho -> K rho K^dag`` acts on vectors as ``K (x) conj(K)``.
* The computational superoperator ``S`` of a channel is the
  ``d_out**2 x d_in**2`` matrix with ``S @ vec(rho) == vec(E(rho))``.
* The Liouville matrix in an operator basis ``{X_mu}`` has entries
  ``L[mu, nu] = tr(X_mu^dag E(X_nu))``.
* The Choi state is ``J = (E (x) id)(|Phi><Phi|)`` with
  ``|Phi> = sum_i |ii> / sqrt(d_in)``, output factor first, unit trace.
* Bipartite operator bases are stored in tensor order ``X_mu (x) Y_nu`` with
  ``mu`` major; sectors A, B and AB are index sets, never permutations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

from .exceptions import InvalidChannelError, InvalidDimensionError, UnsupportedError

CP_TOL = 1e-10
TP_TOL = 1e-10
KRAUS_TOL = 1e-12

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

SECTORS = ("A", "B", "AB")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class OperatorBasis:
    """Hilbert-Schmidt orthonormal operator basis with ``elements[0] = I/sqrt(d)``.

    Attributes
    ----------
    dim : int
        Hilbert space dimension ``d``.
    elements : ndarray, shape (d**2, d, d)
        Basis operators.
    labels : tuple of str
        Human readable names, e.g. ``"XZ"`` for Pauli strings.
    """

    dim: int
    elements: np.ndarray
    labels: tuple = ()

    def __len__(self) -> int:
        return self.elements.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.elements[i]

    @cached_property
    def matrix(self) -> np.ndarray:
        """Unitary ``d**2 x d**2`` matrix whose columns are ``vec(X_mu)``."""
        return _frozen(self.elements.reshape(len(self), -1).T.copy())

    @cached_property
    def is_hermitian(self) -> bool:
        return bool(np.allclose(self.elements, np.conj(np.swapaxes(self.elements, 1, 2)), atol=1e-14))

    def coordinates(self, op: np.ndarray) -> np.ndarray:
        """Expansion coefficients ``tr(X_mu^dag op)``."""
        return self.matrix.conj().T @ vectorize(op)


def _pauli_basis(n: int) -> OperatorBasis:
    d = 2**n
    labels, elems = [], []
    for word in itertools.product("IXYZ", repeat=n):
        m = np.array([[1.0 + 0j]])
        for ch in word:
            m = np.kron(m, PAULI[ch])
        labels.append("".join(word))
        elems.append(m / np.sqrt(d))
    return OperatorBasis(d, _frozen(np.array(elems)), tuple(labels))


def _gell_mann_basis(d: int) -> OperatorBasis:
    elems = [np.eye(d, dtype=complex) / np.sqrt(d)]
    labels = ["I"]
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1 / np.sqrt(2)
            a = np.zeros((d, d), dtype=complex)
            a[j, k], a[k, j] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            elems += [s, a]
            labels += [f"S{j}{k}", f"A{j}{k}"]
    for l in range(1, d):
        diag = np.zeros(d, dtype=complex)
        diag[:l] = 1.0
        diag[l] = -l
        elems.append(np.diag(diag) / np.sqrt(l * (l + 1)))
        labels.append(f"D{l}")
    return OperatorBasis(d, _frozen(np.array(elems)), tuple(labels))


@lru_cache(maxsize=None)
def _basis(d: int) -> OperatorBasis:
    if d == 1:
        return OperatorBasis(1, _frozen(np.ones((1, 1, 1), dtype=complex)), ("I",))
    n = d.bit_length() - 1
    if 2**n == d:
        return _pauli_basis(n)
    return _gell_mann_basis(d)


def make_basis(d: int) -> OperatorBasis:
    """Canonical orthonormal operator basis for dimension ``d``.

    For ``d = 2**n`` this is the normalized Pauli-string basis in
    lexicographic ``{I,X,Y,Z}^n`` order; otherwise normalized generalized
    Gell-Mann matrices (identity, symmetric, antisymmetric, diagonal).

    Raises
    ------
    InvalidDimensionError
        If ``d < 2``.
    """
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise InvalidDimensionError(f"basis dimension must be an integer >= 2, got {d!r}")
    return _basis(int(d))


@lru_cache(maxsize=None)
def product_basis(d_a: int, d_b: int) -> OperatorBasis:
    """Tensor-ordered basis ``X_mu (x) Y_nu`` (``mu`` major) for ``d_a x d_b``."""
    ba, bb = _basis(d_a), _basis(d_b)
    elems = np.einsum("aij,bkl->abikjl", ba.elements, bb.elements).reshape(
        len(ba) * len(bb), d_a * d_b, d_a * d_b
    )
    labels = tuple(f"{x}|{y}" for x in ba.labels for y in bb.labels)
    return OperatorBasis(d_a * d_b, _frozen(elems), labels)


def vectorize(m: np.ndarray) -> np.ndarray:
    """Row-major vectorization, ``|a><b| -> |a>|b>``."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise InvalidDimensionError("vectorize expects a 2-d array")
    return m.reshape(-1)


def unvectorize(v: np.ndarray, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Inverse of :func:`vectorize`; square shape is inferred when omitted."""
    v = np.asarray(v)
    if shape is None:
        d = int(round(np.sqrt(v.size)))
        if d * d != v.size:
            raise InvalidDimensionError(f"vector of length {v.size} is not a square operator")
        shape = (d, d)
    return v.reshape(shape)


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Partial trace of an operator on ``prod(dims)`` keeping subsystems ``keep``."""
    dims = list(dims)
    keep = sorted(set(keep))
    n = len(dims)
    t = np.asarray(rho).reshape(dims + dims)
    # trace out from the highest index down so axis numbers stay valid
    for i in reversed(range(n)):
        if i not in keep:
            m = t.ndim // 2
            t = np.trace(t, axis1=i, axis2=i + m)
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    return t.reshape(dk, dk)


def _superop_to_choi(s: np.ndarray, d_out: int, d_in: int) -> np.ndarray:
    # superoperator [(a,b),(i,j)] -> choi [(a,i),(b,j)]
    return s.reshape(d_out, d_out, d_in, d_in).transpose(0, 2, 1, 3).reshape(d_out * d_in, d_out * d_in) / d_in


def _choi_to_superop(j: np.ndarray, d_out: int, d_in: int) -> np.ndarray:
    return j.reshape(d_out, d_in, d_out, d_in).transpose(0, 2, 1, 3).reshape(d_out**2, d_in**2) * d_in


@dataclass(frozen=True, eq=False)
class Channel:
    """Completely positive trace-preserving map held as its superoperator.

    Construct through :meth:`from_kraus`, :meth:`from_choi`,
    :meth:`from_liouville` or :meth:`from_unitary`.  All other
    representations are derived lazily and cached.
    """

    superop: np.ndarray
    d_in: int
    d_out: int
    _kraus: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        s = np.asarray(self.superop, dtype=complex)
        if s.shape != (self.d_out**2, self.d_in**2):
            raise InvalidDimensionError(
                f"superoperator shape {s.shape} does not match d_in={self.d_in}, d_out={self.d_out}"
            )
        object.__setattr__(self, "superop", _frozen(s))

    # -- constructors -------------------------------------------------
    @classmethod
    def from_kraus(cls, kraus: Sequence[np.ndarray], validate: bool = True) -> "Channel":
        ks = [np.asarray(k, dtype=complex) for k in kraus]
        if not ks:
            raise InvalidChannelError("empty Kraus set")
        d_out, d_in = ks[0].shape
        if any(k.shape != (d_out, d_in) for k in ks):
            raise InvalidDimensionError("Kraus operators have inconsistent shapes")
        s = sum(np.kron(k, k.conj()) for k in ks)
        ch = cls(s, d_in, d_out, tuple(_frozen(k) for k in ks))
        if validate:
            ch.validate()
        return ch

    @classmethod
    def from_unitary(cls, u: np.ndarray, validate: bool = True) -> "Channel":
        return cls.from_kraus([u], validate=validate)

    @classmethod
    def from_choi(cls, choi: np.ndarray, d_in: int, d_out: int | None = None, validate: bool = True) -> "Channel":
        d_out = d_in if d_out is None else d_out
        choi = np.asarray(choi, dtype=complex)
        if choi.shape != (d_in * d_out, d_in * d_out):
            raise InvalidDimensionError(f"Choi shape {choi.shape} inconsistent with dims ({d_in}, {d_out})")
        ch = cls(_choi_to_superop(choi, d_out, d_in), d_in, d_out)
        if validate:
            ch.validate()
        return ch

    @classmethod
    def from_liouville(
        cls,
        liou: np.ndarray,
        basis_in: OperatorBasis | None = None,
        basis_out: OperatorBasis | None = None,
        validate: bool = True,
    ) -> "Channel":
        liou = np.asarray(liou, dtype=complex)
        d_out = int(round(np.sqrt(liou.shape[0])))
        d_in = int(round(np.sqrt(liou.shape[1])))
        bi = _basis(d_in) if basis_in is None else basis_in
        bo = _basis(d_out) if basis_out is None else basis_out
        if bi.dim != d_in or bo.dim != d_out:
            raise InvalidDimensionError("basis dimensions do not match the Liouville matrix")
        ch = cls(bo.matrix @ liou @ bi.matrix.conj().T, d_in, d_out)
        if validate:
            ch.validate()
        return ch

    # -- derived representations --------------------------------------
    @cached_property
    def choi(self) -> np.ndarray:
        """Unit-trace Choi state ``(E (x) id)(|Phi><Phi|)``, output factor first."""
        return _frozen(_superop_to_choi(self.superop, self.d_out, self.d_in))

    @cached_property
    def kraus(self) -> tuple:
        """Kraus operators; canonical (orthogonal) set from the Choi spectrum unless given."""
        if self._kraus is not None:
            return self._kraus
        w, v = np.linalg.eigh(self.d_in * (self.choi + self.choi.conj().T) / 2)
        ks = [
            _frozen(np.sqrt(wi) * v[:, i].reshape(self.d_out, self.d_in))
            for i, wi in sorted(enumerate(w), key=lambda t: -t[1])
            if wi > KRAUS_TOL
        ]
        return tuple(ks)

    @property
    def kraus_rank(self) -> int:
        return int(np.sum(np.linalg.eigvalsh(self.d_in * self.choi) > KRAUS_TOL))

    def liouville(self, basis_in: OperatorBasis | None = None, basis_out: OperatorBasis | None = None) -> np.ndarray:
        """Liouville matrix ``tr(X_mu^dag E(X_nu))``; canonical bases by default."""
        bi = _basis(self.d_in) if basis_in is None else basis_in
        bo = _basis(self.d_out) if basis_out is None else basis_out
        if bi.dim != self.d_in or bo.dim != self.d_out:
            raise InvalidDimensionError("basis dimension does not match channel")
        return bo.matrix.conj().T @ self.superop @ bi.matrix

    # -- checks --------------------------------------------------------
    def tp_defect(self) -> float:
        tr_out = np.einsum("aiaj->ij", self.choi.reshape(self.d_out, self.d_in, self.d_out, self.d_in))
        return float(np.max(np.abs(self.d_in * tr_out - np.eye(self.d_in))))

    def min_choi_eigenvalue(self) -> float:
        j = self.choi
        return float(np.linalg.eigvalsh((j + j.conj().T) / 2)[0])

    def validate(self, cp_tol: float = CP_TOL, tp_tol: float = TP_TOL) -> "Channel":
        """Raise :class:`InvalidChannelError` unless CPTP within tolerance."""
        herm = float(np.max(np.abs(self.choi - self.choi.conj().T)))
        if herm > cp_tol:
            raise InvalidChannelError(f"Choi matrix not hermitian (defect {herm:.3e} > {cp_tol:g})")
        lam = self.min_choi_eigenvalue()
        if lam < -cp_tol:
            raise InvalidChannelError(f"not completely positive: min Choi eigenvalue {lam:.3e} < -{cp_tol:g}")
        tp = self.tp_defect()
        if tp > tp_tol:
            raise InvalidChannelError(f"not trace preserving: defect {tp:.3e} > {tp_tol:g}")
        return self

    # -- algebra -------------------------------------------------------
    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho)
        return (self.superop @ rho.reshape(-1)).reshape(self.d_out, self.d_out)

    def adjoint_apply(self, op: np.ndarray) -> np.ndarray:
        """Heisenberg-picture action ``E^dag(op)``."""
        op = np.asarray(op)
        return (self.superop.conj().T @ op.reshape(-1)).reshape(self.d_in, self.d_in)

    def compose(self, other: "Channel") -> "Channel":
        """``self o other`` (apply ``other`` first)."""
        if other.d_out != self.d_in:
            raise InvalidDimensionError("cannot compose channels with mismatched dimensions")
        return Channel(self.superop @ other.superop, other.d_in, self.d_out)

    def tensor(self, other: "Channel") -> "Channel":
        """Product channel ``self (x) other`` on the ordered pair of systems."""
        a_o, a_i, b_o, b_i = self.d_out, self.d_in, other.d_out, other.d_in
        k = np.kron(self.superop, other.superop).reshape(a_o, a_o, b_o, b_o, a_i, a_i, b_i, b_i)
        s = k.transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape((a_o * b_o) ** 2, (a_i * b_i) ** 2)
        return Channel(s, a_i * b_i, a_o * b_o)

    def mix(self, other: "Channel", weight: float) -> "Channel":
        """Convex combination ``weight * self + (1 - weight) * other``."""
        if (self.d_in, self.d_out) != (other.d_in, other.d_out):
            raise InvalidDimensionError("cannot mix channels of different dimensions")
        return Channel(weight * self.superop + (1 - weight) * other.superop, self.d_in, self.d_out)

    @staticmethod
    def mixture(weights: Sequence[float], channels: Sequence["Channel"]) -> "Channel":
        c0 = channels[0]
        s = sum(w * c.superop for w, c in zip(weights, channels))
        return Channel(s, c0.d_in, c0.d_out)


@dataclass(frozen=True, eq=False)
class BipartiteChannel:
    """A channel on ``A (x) B`` together with its subsystem dimensions."""

    channel: Channel
    d_a: int
    d_b: int

    def __post_init__(self):
        if self.d_a < 2 or self.d_b < 2:
            raise InvalidDimensionError("subsystem dimensions must be >= 2")
        d = self.d_a * self.d_b
        if self.channel.d_in != d or self.channel.d_out != d:
            raise UnsupportedError("bipartite channels must map A(x)B to itself")

    @property
    def dim(self) -> int:
        return self.d_a * self.d_b

    @property
    def basis(self) -> OperatorBasis:
        return product_basis(self.d_a, self.d_b)

    @cached_property
    def liouville(self) -> np.ndarray:
        """Liouville matrix in the tensor-ordered product basis."""
        b = self.basis
        return _frozen(self.channel.liouville(b, b))

    @classmethod
    def product(cls, ch_a: Channel, ch_b: Channel) -> "BipartiteChannel":
        return cls(ch_a.tensor(ch_b), ch_a.d_in, ch_b.d_in)

    def conjugate_local(self, pre_a, pre_b, post_a, post_b) -> "BipartiteChannel":
        """``(post_a (x) post_b) o E o (pre_a (x) pre_b)`` for local unitaries."""
        pre = Channel.from_unitary(np.kron(pre_a, pre_b), validate=False)
        post = Channel.from_unitary(np.kron(post_a, post_b), validate=False)
        return BipartiteChannel(post.compose(self.channel.compose(pre)), self.d_a, self.d_b)

    def local_a(self) -> Channel:
        """Reduced channel ``rho -> tr_B E(rho (x) I/d_B)``."""
        return _reduced(self, keep="A")

    def local_b(self) -> Channel:
        """Reduced channel ``rho -> tr_A E(I/d_A (x) rho)``."""
        return _reduced(self, keep="B")


def _reduced(bch: BipartiteChannel, keep: str) -> Channel:
    da, db = bch.d_a, bch.d_b
    s = bch.channel.superop.reshape(da, db, da, db, da, db, da, db)
    # indices: out (a b, a' b'), in (i j, i' j')
    if keep == "A":
        r = np.einsum("abcbiljl->acij", s) / db
        return Channel(r.reshape(da * da, da * da), da, da)
    r = np.einsum("abadkjkl->bdjl", s) / da
    return Channel(r.reshape(db * db, db * db), db, db)


def sector_indices(d_a: int, d_b: int) -> dict[str, np.ndarray]:
    """Indices of sectors A = {(i,0)}, B = {(0,j)}, AB = {(i,j)} with i, j >= 1."""
    na, nb = d_a * d_a, d_b * d_b
    return {
        "A": np.array([i * nb for i in range(1, na)]),
        "B": np.array([j for j in range(1, nb)]),
        "AB": np.array([i * nb + j for i in range(1, na) for j in range(1, nb)]),
    }


@dataclass(frozen=True, eq=False)
class LiouvilleBlocks:
    """Affine decomposition ``L = [[1, 0], [x, T]]`` and its bipartite sub-blocks.

    ``blocks[(X, Y)]`` is ``T_{X->Y}``: rows from output sector ``Y``,
    columns from input sector ``X``.  ``x_sub[X]`` is the restriction of the
    non-unital vector to sector ``X``.
    """

    liouville: np.ndarray
    d_a: int
    d_b: int
    x: np.ndarray
    T: np.ndarray
    blocks: dict
    x_sub: dict
    indices: dict

    def reassemble(self) -> np.ndarray:
        """Rebuild the full Liouville matrix from the stored pieces."""
        n = self.liouville.shape[0]
        out = np.zeros((n, n), dtype=complex)
        out[0, :] = self.liouville[0, :]
        for sx in SECTORS:
            out[self.indices[sx], 0] = self.x_sub[sx]
            for sy in SECTORS:
                out[np.ix_(self.indices[sy], self.indices[sx])] = self.blocks[(sx, sy)]
        return out


def extract_blocks(bch: BipartiteChannel) -> LiouvilleBlocks:
    """Slice the tensor-ordered Liouville matrix into sector blocks."""
    if not isinstance(bch, BipartiteChannel):
        raise UnsupportedError("extract_blocks requires a BipartiteChannel")
    liou = bch.liouville
    idx = sector_indices(bch.d_a, bch.d_b)
    blocks = {(sx, sy): liou[np.ix_(idx[sy], idx[sx])] for sx in SECTORS for sy in SECTORS}
    x_sub = {s: liou[idx[s], 0] for s in SECTORS}
    return LiouvilleBlocks(liou, bch.d_a, bch.d_b, liou[1:, 0], liou[1:, 1:], blocks, x_sub, idx)
