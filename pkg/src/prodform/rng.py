"""Counter-based, splittable random streams.

Streams are backed by numpy's Philox counter-based bit generator. A stream is
identified by a master seed plus a path of labels; splitting appends a label,
so the same (seed, label path) always reproduces the same draw sequence, no
matter which other streams were consumed in between. String labels are hashed
with SHA-256 (Python's built-in ``hash`` is salted per process and would break
reproducibility).
"""

from __future__ import annotations

import hashlib

import numpy as np


def _encode_label(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer stream labels must be non-negative")
        return int(label)
    if isinstance(label, str):
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream labels must be int or str, got {type(label)!r}")


class Rng:
    """A seeded stream with deterministic child-stream derivation."""

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(_path)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def split(self, *labels) -> "Rng":
        """Derive an independent child stream keyed by ``labels``."""
        encoded = tuple(_encode_label(lab) for lab in labels)
        return Rng(self.seed, self.path + encoded)

    def uniform(self, size=None) -> np.ndarray:
        """Draws from U(0, 1); the primitive every sampler is built on."""
        return self.generator.random(size)

    def standard_normal(self, size=None):
        """Standard normals via the Box-Muller transform on this stream.

        The trigonometric (non-rejecting) form consumes exactly two uniforms
        per pair of normals, so the draw count is a deterministic function of
        ``size`` and substreams never desynchronize.
        """
        n = 1 if size is None else int(np.prod(size))
        pairs = (n + 1) // 2
        u1 = self.generator.random(pairs)
        u2 = self.generator.random(pairs)
        radius = np.sqrt(-2.0 * np.log1p(-u1))  # 1-u1 avoids log(0)
        angle = 2.0 * np.pi * u2
        out = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:n]
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path})"
