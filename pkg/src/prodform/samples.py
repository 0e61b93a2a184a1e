"""Sample containers and the estimate record returned by every estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MarginalSamples:
    """Per-block sample sequences, the raw material of product-form sums.

    Block k holds N_k points from the k-th marginal; block lengths may
    differ. Each point is a scalar or a fixed-width vector. The container is
    immutable after construction and safe to share.
    """

    def __init__(self, blocks):
        arrays = []
        for k, block in enumerate(blocks):
            arr = np.array(block, dtype=float)
            if arr.ndim not in (1, 2):
                raise ValueError(f"block {k} must be 1-d or 2-d, got ndim={arr.ndim}")
            if arr.shape[0] < 1:
                raise ValueError(f"block {k} needs at least one sample")
            arr.flags.writeable = False
            arrays.append(arr)
        if not arrays:
            raise ValueError("need at least one block")
        self._blocks = tuple(arrays)

    @classmethod
    def from_joint(cls, joints) -> "MarginalSamples":
        """Split aligned joint tuples (N, K) into per-block columns."""
        joints = np.asarray(joints, dtype=float)
        if joints.ndim != 2:
            raise ValueError("joint samples must form an (N, K) array")
        return cls([joints[:, k] for k in range(joints.shape[1])])

    @property
    def n_blocks(self) -> int:
        return len(self._blocks)

    @property
    def n_per_block(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self._blocks)

    def block(self, k: int) -> np.ndarray:
        return self._blocks[k]

    def point(self, k: int, n: int):
        """The n-th sample of block k, as a scalar or a tuple."""
        value = self._blocks[k][n]
        if np.ndim(value) == 0:
            return float(value)
        return tuple(value)

    def tuple_count(self) -> int:
        count = 1
        for n in self.n_per_block:
            count *= n
        return count

    def all_scalar(self) -> bool:
        return all(b.ndim == 1 for b in self._blocks)


@dataclass(frozen=True)
class Estimate:
    """Point estimate plus the cost counters behind it.

    ``n_phi_evals`` counts joint evaluations for brute-force strategies and
    factor evaluations for the structured fast paths.
    """

    value: float
    n_phi_evals: int
    n_samples_used: tuple[int, ...]
    strategy: str
