"""Sequence-length indexed decay data shared by simulation and fitting."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


@dataclass
class DecayDataset:
    """Mean of ``m(s)**2`` per sequence length.

    Attributes
    ----------
    k : ndarray of int
        Sequence lengths, strictly increasing.
    mean : ndarray
        Estimated (or exact) ``E[m**2]`` per length.
    stderr : ndarray or None
        Standard error of each mean; ``None`` for exact data.
    n_seqs : ndarray or None
        Number of sequences behind each mean.
    samples : list of ndarray or None
        Per-sequence values, kept only on request.
    """

    k: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray | None = None
    n_seqs: np.ndarray | None = None
    samples: list | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=int)
        self.mean = np.asarray(self.mean, dtype=float)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
        if self.n_seqs is not None:
            self.n_seqs = np.asarray(self.n_seqs, dtype=int)

    @property
    def is_exact(self) -> bool:
        return self.stderr is None

    def weights(self) -> np.ndarray:
        """Least-squares weights ``1/stderr**2`` (ones for exact data)."""
        if self.stderr is None:
            return np.ones_like(self.mean)
        se = np.where(self.stderr > 0, self.stderr, np.min(self.stderr[self.stderr > 0], initial=1.0))
        return 1.0 / se**2

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "mean_m2", "stderr", "n_seqs"])
        for i, k in enumerate(self.k):
            se = "" if self.stderr is None else f"{self.stderr[i]:.15g}"
            ns = "" if self.n_seqs is None else int(self.n_seqs[i])
            w.writerow([int(k), f"{self.mean[i]:.15g}", se, ns])
        return buf.getvalue()

    def to_dict(self, keep_samples: bool = False) -> dict:
        out = {
            "k": self.k.tolist(),
            "mean_m2": self.mean.tolist(),
            "stderr": None if self.stderr is None else self.stderr.tolist(),
            "n_seqs": None if self.n_seqs is None else self.n_seqs.tolist(),
        }
        if keep_samples and self.samples is not None:
            out["samples"] = [np.asarray(s).tolist() for s in self.samples]
        return out
