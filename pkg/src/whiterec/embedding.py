"""SVD item embeddings and similarity models computed on top of them.

Embeddings are the D x |I| matrix E = S^{1/2} V^T taken from the top-D
singular triplets of the interaction matrix. The triplets come from an
eigendecomposition of whichever Gram matrix is smaller, never from a
general SVD of the full matrix. The ridge autoencoder on embeddings uses
the dual D x D form, so its cost scales with D rather than |I|; the EASE
variant has no such shortcut and goes through the |I| x |I| inverse.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import linalg
from .autoencoder import SimilarityMatrix, _ease_from_gram, _shifted
from .errors import ParseError
from .ingest import InteractionMatrix

EMBED_MAGIC = b"WREC-EMB"
EMBED_VERSION = 1


@dataclass
class EmbeddingMatrix:
    """Dense D x |I| item embeddings; rows are latent dimensions.

    ``singular_values`` keeps the length-D singular spectrum from the
    factorization when available (it is not part of the on-disk format).
    """

    values: np.ndarray
    singular_values: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def n_items(self) -> int:
        return self.values.shape[1]


def svd_embed(X: InteractionMatrix, d: int) -> EmbeddingMatrix:
    """Top-d singular triplets of X folded into E = S_d^{1/2} V_d^T.

    Works through the smaller Gram matrix: eigenvalues of X^T X (or X X^T)
    are the squared singular values, and the missing singular factor is
    recovered by one sparse product. Near-zero squared eigenvalues are
    clamped before the square roots; if d exceeds the numerical rank the
    trailing rows of E are zeroed and a warning is emitted.
    """
    if not 1 <= d <= min(X.n_users, X.n_items):
        raise ValueError(
            f"embedding dim must be in [1, min(|U|, |I|)] = "
            f"[1, {min(X.n_users, X.n_items)}], got {d}"
        )
    items_side = X.n_items <= X.n_users
    eig = linalg.eigh(linalg.gram(X, side="items" if items_side else "users"))
    sq = np.maximum(eig.eigenvalues[:d], 0.0)
    rank_tol = linalg.RANK_RTOL * max(eig.eigenvalues[0], 0.0)
    deficient = sq <= rank_tol
    if np.any(deficient):
        warnings.warn(
            f"requested {d} embedding dimensions but numerical rank is "
            f"{int(np.sum(~deficient))}; trailing rows are zero",
            stacklevel=2,
        )
    sigma = np.sqrt(sq)
    if items_side:
        # E_i: = sqrt(sigma_i) * (i-th eigenvector of X^T X)^T
        e = np.sqrt(sigma)[:, np.newaxis] * eig.eigenvectors[:, :d].T
    else:
        # V_d = X^T U_d / sigma, so E = sigma^{-1/2} U_d^T X.
        utx = np.asarray((X.matrix.T @ eig.eigenvectors[:, :d]).T)
        scale = np.zeros(d)
        np.divide(1.0, np.sqrt(sigma), out=scale, where=~deficient)
        e = scale[:, np.newaxis] * utx
    e[deficient, :] = 0.0
    return EmbeddingMatrix(values=e, singular_values=sigma)


def embed_dot(e: EmbeddingMatrix) -> SimilarityMatrix:
    """Plain inner-product similarity E^T E, the no-whitening baseline."""
    b = linalg.symmetrize(e.values.T @ e.values)
    return SimilarityMatrix(b, "embed_dot", {"embedding_dim": e.dim})


def embed_ridge(e: EmbeddingMatrix, lam: float, center: bool = False) -> SimilarityMatrix:
    """Ridge autoencoder on embeddings via the dual form E^T (E E^T + lam I)^{-1} E.

    Only the D x D Gram is ever inverted; the single |I| x |I| array this
    function creates is the returned similarity matrix itself.
    """
    if lam <= 0.0:
        raise ValueError(f"lam must be > 0, got {lam}")
    v = _maybe_center(e.values, center)
    k = linalg.symmetrize(v @ v.T)
    m = linalg.spd_solve(_shifted(k, lam), v)
    b = v.T @ m
    return SimilarityMatrix(b, "embed_ridge", {"lambda": lam, "embedding_dim": e.dim})


def embed_ease(e: EmbeddingMatrix, lam: float, center: bool = False) -> SimilarityMatrix:
    """EASE on embeddings: the usual closed form with Gram E^T E.

    The zero-diagonal constraint forces the |I| x |I| inverse, so unlike
    embed_ridge this is the expensive path.
    """
    if lam <= 0.0:
        raise ValueError(f"lam must be > 0, got {lam}")
    v = _maybe_center(e.values, center)
    linalg.check_capacity(v.shape[1], "embedding-side Gram matrix")
    g = linalg.symmetrize(v.T @ v)
    sol = _ease_from_gram(g, lam)
    return SimilarityMatrix(sol.B.values, "embed_ease",
                            {"lambda": lam, "embedding_dim": e.dim})


def _maybe_center(values: np.ndarray, center: bool) -> np.ndarray:
    if not center:
        return values
    return values - values.mean(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Persistence: versioned little-endian binary with the item vocabulary.
# ---------------------------------------------------------------------------

def save_embeddings(e: EmbeddingMatrix, item_ids: list[str], path: str | Path) -> None:
    """Write header (magic, version, D, |I|), row-major f64 values, vocab."""
    if len(item_ids) != e.n_items:
        raise ValueError(
            f"vocabulary has {len(item_ids)} entries for {e.n_items} items"
        )
    with open(path, "wb") as fh:
        fh.write(EMBED_MAGIC)
        fh.write(struct.pack("<III", EMBED_VERSION, e.dim, e.n_items))
        fh.write(np.ascontiguousarray(e.values, dtype="<f8").tobytes())
        for item in item_ids:
            raw = item.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def load_embeddings(path: str | Path) -> tuple[EmbeddingMatrix, list[str]]:
    """Read a file written by save_embeddings; singular values are not stored."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != EMBED_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}, expected {EMBED_MAGIC!r}")
        version, d, n_items = struct.unpack("<III", _read_exact(fh, 12, path))
        if version != EMBED_VERSION:
            raise ParseError(f"{path}: unsupported version {version}")
        payload = _read_exact(fh, d * n_items * 8, path)
        values = np.frombuffer(payload, dtype="<f8").reshape(d, n_items).copy()
        item_ids = []
        for _ in range(n_items):
            (length,) = struct.unpack("<I", _read_exact(fh, 4, path))
            item_ids.append(_read_exact(fh, length, path).decode("utf-8"))
    return EmbeddingMatrix(values=values, singular_values=None), item_ids


def _read_exact(fh, n: int, path) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ParseError(f"{path}: truncated file (wanted {n} bytes, got {len(data)})")
    return data
