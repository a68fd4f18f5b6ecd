"""Embedding-matrix geometry: singular spectra, isotropy, intrinsic dimension.

The isotropy score reorients the point cloud by PCA, compares the
variance profile against the uniform one and maps the defect into
``[0, 1]``; zero means all variance sits in one direction, one means a
perfectly isotropic cloud. Intrinsic dimension counts the covariance
eigenvalues that hold at least a fixed fraction of the largest one.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

EMBEDDING_MAGIC = b"EMB1"


@dataclass
class EmbeddingMatrix:
    """``rows × cols`` real matrix of learned embeddings."""

    values: np.ndarray

    def __post_init__(self) -> None:
        array = np.asarray(self.values, dtype=np.float32)
        if array.ndim != 2:
            raise ValueError("embedding matrix must be two-dimensional")
        if array.shape[0] < 2 or array.shape[1] < 2:
            raise ValueError("embedding matrix must be at least 2x2")
        if not np.isfinite(array).all():
            raise ValueError("embedding matrix holds non-finite values")
        self.values = array

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def save_embeddings(matrix: EmbeddingMatrix | np.ndarray) -> bytes:
    """Serialize to the EMB1 binary format (little-endian float32, row-major)."""
    if not isinstance(matrix, EmbeddingMatrix):
        matrix = EmbeddingMatrix(matrix)
    array = matrix.values.astype("<f4", copy=False)
    header = EMBEDDING_MAGIC + struct.pack("<II", matrix.rows, matrix.cols)
    return header + array.tobytes(order="C")


def load_embeddings(data: bytes) -> EmbeddingMatrix:
    """Parse EMB1 bytes; validates magic, size and finiteness."""
    if len(data) < 12:
        raise ValueError("embedding file shorter than its header")
    if data[:4] != EMBEDDING_MAGIC:
        raise ValueError("bad embedding magic")
    rows, cols = struct.unpack_from("<II", data, 4)
    expected = 12 + rows * cols * 4
    if len(data) != expected:
        raise ValueError(
            f"embedding payload size mismatch: expected {expected} bytes, got {len(data)}"
        )
    array = np.frombuffer(data, dtype="<f4", offset=12).reshape(rows, cols)
    return EmbeddingMatrix(np.array(array))


def singular_spectrum(points: np.ndarray) -> np.ndarray:
    """Singular values normalized by the largest, descending in ``[0, 1]``."""
    array = np.asarray(points, dtype=np.float64)
    if array.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    values = np.linalg.svd(array, compute_uv=False)
    top = values[0]
    if top <= 0.0:
        raise ValueError("degenerate spectrum: matrix is zero")
    return values / top


def _pca_variances(points: np.ndarray) -> np.ndarray:
    """Variances of the cloud along its principal axes (descending)."""
    array = np.asarray(points, dtype=np.float64)
    if array.ndim != 2:
        raise ValueError("expected a 2-D point cloud")
    if array.shape[0] < 2 or array.shape[1] < 2:
        raise ValueError("need at least two points in at least two dimensions")
    centered = array - array.mean(axis=0)
    covariance = centered.T @ centered / (array.shape[0] - 1)
    eigenvalues = np.linalg.eigvalsh(covariance)[::-1]
    return np.clip(eigenvalues, 0.0, None)


def isoscore(points: np.ndarray) -> float:
    """Isotropy of a point cloud in ``[0, 1]``.

    Steps: PCA-reorient, take the variance vector, normalize it to norm
    ``sqrt(d)``, measure its distance to the all-ones vector, then map
    the defect through the quadratic normalizations so a uniform profile
    scores exactly 1 and a one-directional profile exactly 0.
    """
    variances = _pca_variances(points)
    d = variances.shape[0]
    norm = np.linalg.norm(variances)
    if norm == 0.0:
        raise ValueError("zero total variance")
    normalized = variances * np.sqrt(d) / norm
    defect = np.linalg.norm(normalized - np.ones(d)) / np.sqrt(2 * (d - np.sqrt(d)))
    phi = (d - defect**2 * (d - np.sqrt(d))) ** 2 / d**2
    return float((d * phi - 1) / (d - 1))


def pca_intrinsic_dim(points: np.ndarray, ratio_threshold: float = 0.05) -> int:
    """Eigenvalue-ratio intrinsic dimension of a point cloud.

    Counts principal variances no smaller than ``ratio_threshold`` times
    the largest one.
    """
    if not 0 < ratio_threshold <= 1:
        raise ValueError("ratio_threshold must be in (0, 1]")
    variances = _pca_variances(points)
    top = variances[0]
    if top <= 0.0:
        raise ValueError("degenerate input: all points identical")
    return int(np.count_nonzero(variances >= ratio_threshold * top))


@dataclass
class GeometryReport:
    isoscore: float
    pca_intrinsic_dim: int
    spectrum: list[float]

    def to_json(self) -> dict:
        return {
            "isoscore": self.isoscore,
            "pca_id": self.pca_intrinsic_dim,
            "spectrum": self.spectrum,
        }


def geometry_report(
    matrix: EmbeddingMatrix | np.ndarray, ratio_threshold: float = 0.05
) -> GeometryReport:
    """All three statistics of one embedding matrix."""
    if isinstance(matrix, EmbeddingMatrix):
        matrix = matrix.values
    return GeometryReport(
        isoscore=isoscore(matrix),
        pca_intrinsic_dim=pca_intrinsic_dim(matrix, ratio_threshold),
        spectrum=[float(v) for v in singular_spectrum(matrix)],
    )
