"""Structured covariance generation and spectral diagnostics.

Nine synthetic correlation families over ``K`` sensor streams, each
returning a unit-diagonal positive-definite matrix, plus effective-rank
summaries of the eigenvalue spectrum and a ridge regularizer. All
generated matrices are wrapped in an immutable :class:`CovarianceModel`
that caches the Cholesky factor and the descending eigenvalues.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateGraphError, NumericError
from .seeding import TAG_GRAPH, rng_from

PATTERNS = (
    "identity",
    "toeplitz",
    "equicorrelation",
    "block",
    "circulant",
    "graph",
    "exponential",
    "rbf",
    "kronecker",
)

# Eigenvalues at or below this are treated as a PSD violation to repair.
PSD_TOL = 1e-10
# Base jitter added on repair, on top of |lambda_min|.
JITTER_PAD = 1e-8
SYM_TOL = 1e-12
UNIT_DIAG_TOL = 1e-9


@dataclass(frozen=True)
class CorrelationSpec:
    """Recipe for one synthetic correlation matrix.

    ``rho`` is the base correlation level in [0, 1). Pattern-specific
    knobs: ``block_size`` (block; defaults to K/8 and must divide K),
    ``edge_prob`` and ``graph_seed`` (graph), ``length_scale`` (rbf
    defaults to K/10; exponential defaults to -1/ln(rho), which makes it
    coincide with toeplitz), ``kron_k1`` (kronecker left-factor size,
    defaults to the smallest divisor of K at or above sqrt(K)) and
    ``kron_patterns`` (kronecker factor families).
    """

    pattern: str
    k: int
    rho: float = 0.0
    block_size: int | None = None
    edge_prob: float = 0.05
    graph_seed: int = 0
    length_scale: float | None = None
    kron_k1: int | None = None
    kron_patterns: tuple[str, str] = ("equicorrelation", "toeplitz")
    allow_identity: bool = False

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ConfigError(
                f"unknown pattern {self.pattern!r}; expected one of {', '.join(PATTERNS)}"
            )
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not (0.0 <= self.rho < 1.0):
            raise ConfigError(f"rho must lie in [0, 1), got {self.rho}")
        if not (0.0 <= self.edge_prob <= 1.0):
            raise ConfigError(f"edge_prob must lie in [0, 1], got {self.edge_prob}")
        if self.length_scale is not None and self.length_scale <= 0:
            raise ConfigError(f"length_scale must be positive, got {self.length_scale}")


@dataclass(frozen=True)
class CovarianceModel:
    """Immutable PD covariance with cached factorizations.

    ``jitter_applied`` records the diagonal inflation used by the PSD
    repair step (0.0 when the raw matrix was already comfortably PD).
    """

    sigma: np.ndarray
    cholesky: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    jitter_applied: float = 0.0

    @property
    def k(self) -> int:
        return self.sigma.shape[0]

    @classmethod
    def from_matrix(cls, sigma: np.ndarray, *, jitter_applied: float = 0.0) -> "CovarianceModel":
        """Wrap a symmetric positive-definite matrix, validating both properties."""
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ConfigError(f"covariance must be square, got shape {sigma.shape}")
        if not np.allclose(sigma, sigma.T, atol=SYM_TOL, rtol=0.0):
            raise ConfigError("covariance must be symmetric within 1e-12")
        sigma = (sigma + sigma.T) / 2.0
        eigs = np.linalg.eigvalsh(sigma)
        if eigs[0] <= PSD_TOL:
            raise NumericError(
                f"covariance not positive definite: lambda_min={eigs[0]:.3e}"
            )
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - eigs guard above
            raise NumericError(f"Cholesky factorization failed: {exc}") from exc
        eigs_desc = eigs[::-1].copy()
        for arr in (sigma, chol, eigs_desc):
            arr.flags.writeable = False
        return cls(sigma=sigma, cholesky=chol, eigenvalues=eigs_desc,
                   jitter_applied=float(jitter_applied))

    def diagonal_model(self) -> "CovarianceModel":
        """Model with the same diagonal and all cross-correlations zeroed."""
        return CovarianceModel.from_matrix(np.diag(np.diag(self.sigma)))


@dataclass(frozen=True)
class SpectrumReport:
    """Effective-rank summaries of one covariance spectrum."""

    k: int
    shannon_er: float
    pr_er: float
    normalized_er: float
    lambda_min: float
    lambda_max: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "shannon_er": self.shannon_er,
            "pr_er": self.pr_er,
            "normalized_er": self.normalized_er,
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _toeplitz(k: int, rho: float) -> np.ndarray:
    idx = np.arange(k)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _equicorrelation(k: int, rho: float) -> np.ndarray:
    return (1.0 - rho) * np.eye(k) + rho * np.ones((k, k))


def _block(k: int, rho: float, block_size: int | None) -> np.ndarray:
    if block_size is None:
        if k % 8 != 0:
            raise ConfigError(
                f"block pattern default block size is k/8, but 8 does not divide k={k}; "
                "pass block_size explicitly"
            )
        block_size = k // 8
    if block_size < 1 or k % block_size != 0:
        raise ConfigError(f"block_size {block_size} must divide k={k}")
    return np.kron(np.eye(k // block_size), _equicorrelation(block_size, rho))


def _circulant(k: int, rho: float) -> np.ndarray:
    idx = np.arange(k)
    dist = np.abs(idx[:, None] - idx[None, :])
    return rho ** np.minimum(dist, k - dist)


def _graph(spec: CorrelationSpec) -> np.ndarray:
    k = spec.k
    rng = rng_from(spec.graph_seed, TAG_GRAPH)
    upper = np.triu(rng.random((k, k)) < spec.edge_prob, 1)
    adj = (upper | upper.T).astype(float)
    if not upper.any():
        if spec.allow_identity:
            return np.eye(k)
        raise DegenerateGraphError(
            f"graph pattern produced no edges (k={k}, edge_prob={spec.edge_prob}, "
            f"graph_seed={spec.graph_seed}); set allow_identity to accept I"
        )
    if spec.rho == 0.0:
        return np.eye(k)
    lam_max = float(np.max(np.abs(np.linalg.eigvalsh(adj))))
    alpha = 0.95 * spec.rho / lam_max
    precision_like = np.eye(k) - alpha * adj
    raw = np.linalg.inv(precision_like)
    scale = np.sqrt(np.diag(raw))
    return raw / np.outer(scale, scale)


def _exponential(k: int, rho: float, length_scale: float | None) -> np.ndarray:
    if length_scale is None:
        if rho == 0.0:
            return np.eye(k)
        length_scale = -1.0 / math.log(rho)
    idx = np.arange(k)
    return np.exp(-np.abs(idx[:, None] - idx[None, :]) / length_scale)


def _rbf(k: int, length_scale: float | None) -> np.ndarray:
    if length_scale is None:
        length_scale = k / 10.0
    idx = np.arange(k)
    sq = (idx[:, None] - idx[None, :]).astype(float) ** 2
    return np.exp(-sq / (2.0 * length_scale**2))


def kron_factor_sizes(k: int) -> tuple[int, int]:
    """Smallest divisor of ``k`` at or above sqrt(k), and its cofactor."""
    root = math.isqrt(k)
    if root * root == k:
        return root, root
    for d in range(root + 1, k + 1):
        if k % d == 0:
            return d, k // d
    raise ConfigError(f"no factorization found for k={k}")  # pragma: no cover


def _kronecker(spec: CorrelationSpec) -> np.ndarray:
    if spec.kron_k1 is not None:
        k1 = spec.kron_k1
        if k1 < 1 or spec.k % k1 != 0:
            raise ConfigError(f"kron_k1={k1} must divide k={spec.k}")
        k2 = spec.k // k1
    else:
        k1, k2 = kron_factor_sizes(spec.k)
    pat_a, pat_b = spec.kron_patterns
    if "kronecker" in (pat_a, pat_b):
        raise ConfigError("kronecker factors cannot themselves be kronecker")
    left = _pattern_matrix(CorrelationSpec(pattern=pat_a, k=k1, rho=spec.rho,
                                           graph_seed=spec.graph_seed,
                                           edge_prob=spec.edge_prob,
                                           allow_identity=spec.allow_identity))
    right = _pattern_matrix(CorrelationSpec(pattern=pat_b, k=k2, rho=spec.rho,
                                            graph_seed=spec.graph_seed + 1,
                                            edge_prob=spec.edge_prob,
                                            allow_identity=spec.allow_identity))
    return np.kron(left, right)


def _pattern_matrix(spec: CorrelationSpec) -> np.ndarray:
    if spec.pattern == "identity":
        return np.eye(spec.k)
    if spec.pattern == "toeplitz":
        return _toeplitz(spec.k, spec.rho)
    if spec.pattern == "equicorrelation":
        return _equicorrelation(spec.k, spec.rho)
    if spec.pattern == "block":
        return _block(spec.k, spec.rho, spec.block_size)
    if spec.pattern == "circulant":
        return _circulant(spec.k, spec.rho)
    if spec.pattern == "graph":
        return _graph(spec)
    if spec.pattern == "exponential":
        return _exponential(spec.k, spec.rho, spec.length_scale)
    if spec.pattern == "rbf":
        return _rbf(spec.k, spec.length_scale)
    if spec.pattern == "kronecker":
        return _kronecker(spec)
    raise ConfigError(f"unknown pattern {spec.pattern!r}")  # pragma: no cover


def generate_correlation(spec: CorrelationSpec) -> CovarianceModel:
    """Generate the correlation matrix for ``spec``, repairing borderline PSD.

    If the smallest eigenvalue of the raw matrix is at or below 1e-10, the
    matrix is inflated by ``(|lambda_min| + 1e-8) * I`` and rescaled back
    to a unit diagonal; the inflation is recorded as ``jitter_applied``.
    """
    raw = _pattern_matrix(spec)
    raw = (raw + raw.T) / 2.0
    eigs = np.linalg.eigvalsh(raw)
    jitter = 0.0
    if eigs[0] <= PSD_TOL:
        jitter = abs(float(eigs[0])) + JITTER_PAD
        raw = (raw + jitter * np.eye(spec.k)) / (1.0 + jitter)
    model = CovarianceModel.from_matrix(raw, jitter_applied=jitter)
    diag = np.diag(model.sigma)
    if np.max(np.abs(diag - 1.0)) > UNIT_DIAG_TOL:
        raise NumericError("generated correlation matrix lost its unit diagonal")
    return model


def spectrum(model_or_sigma: CovarianceModel | np.ndarray) -> SpectrumReport:
    """Effective-rank report; accepts a model or a raw symmetric PSD matrix."""
    if isinstance(model_or_sigma, CovarianceModel):
        eigs = model_or_sigma.eigenvalues
        k = model_or_sigma.k
    else:
        sigma = np.asarray(model_or_sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ConfigError(f"spectrum needs a square matrix, got shape {sigma.shape}")
        if not np.allclose(sigma, sigma.T, atol=1e-10, rtol=0.0):
            raise ConfigError("spectrum needs a symmetric matrix")
        eigs = np.linalg.eigvalsh(sigma)[::-1]
        if eigs[-1] < -PSD_TOL:
            raise ConfigError(f"spectrum needs a PSD matrix; lambda_min={eigs[-1]:.3e}")
        k = sigma.shape[0]

    lam = np.maximum(eigs, 0.0)
    total = float(lam.sum())
    if total <= 0.0:
        raise ConfigError("spectrum of the zero matrix is undefined")
    p = lam / total
    nz = p[p > 0.0]
    shannon = float(np.exp(-(nz * np.log(nz)).sum()))
    pr = float(total**2 / float((lam**2).sum()))
    return SpectrumReport(
        k=k,
        shannon_er=shannon,
        pr_er=pr,
        normalized_er=shannon / k,
        lambda_min=float(eigs[-1]),
        lambda_max=float(eigs[0]),
    )


def regularize(model: CovarianceModel, alpha: float) -> CovarianceModel:
    """Ridge shift ``sigma + alpha * I``. No renormalization of the diagonal."""
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    if alpha == 0:
        return model
    return CovarianceModel.from_matrix(
        model.sigma + alpha * np.eye(model.k),
        jitter_applied=model.jitter_applied,
    )


# ---------------------------------------------------------------------------
# serialization

def save_matrix_csv(sigma: np.ndarray, path: str | Path) -> None:
    # Header-free row-major CSV; %.17g round-trips every float64 exactly.
    np.savetxt(path, np.asarray(sigma, dtype=float), delimiter=",", fmt="%.17g")


def load_matrix_csv(path: str | Path) -> np.ndarray:
    sigma = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    return sigma


def model_to_json(model: CovarianceModel) -> str:
    return json.dumps(
        {"k": model.k, "jitter_applied": model.jitter_applied,
         "sigma": model.sigma.tolist()},
        sort_keys=True,
    )


def model_from_json(text: str) -> CovarianceModel:
    payload = json.loads(text)
    sigma = np.asarray(payload["sigma"], dtype=float)
    if sigma.shape != (payload["k"], payload["k"]):
        raise ConfigError("sigma shape disagrees with declared k")
    return CovarianceModel.from_matrix(sigma, jitter_applied=payload.get("jitter_applied", 0.0))
