"""Teacher-student distillation losses on plain numpy arrays.

The student sees raw frames, the teacher sees object-complete frames. Losses
compare classification distributions (KL), regression outputs and backbone
feature maps (MSE), and combine them with a caller-supplied detection loss.
Classification inputs are probabilities; apply softmax before calling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-12
SIMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class DistillationConfig:
    """Loss weights. Defaults are the grid-searched values used for the supervised setting.

    ``heads_pairing="expanded"`` weights KL by ``alpha1`` and regression MSE by
    ``alpha2``; ``"named"`` swaps them.
    """

    alpha1: float = 2.0
    alpha2: float = 1.0
    lambda1: float = 0.7
    lambda2: float = 0.3
    lambda3: float = 1.0
    heads_pairing: str = "expanded"

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "lambda1", "lambda2", "lambda3"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a non-negative finite number, got {value}")
        if self.heads_pairing not in ("expanded", "named"):
            raise ValueError("heads_pairing must be 'expanded' or 'named'")


@dataclass(frozen=True)
class LossBreakdown:
    l_heads: float
    l_kd_cls: float
    l_kd_reg: float
    l_feat: float
    l_det: float
    total: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("l_heads", "l_kd_cls", "l_kd_reg", "l_feat", "l_det", "total")}


def _as_tensor(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def mse(a, b) -> float:
    a, b = _as_tensor(a, "a"), _as_tensor(b, "b")
    _check_shapes(a, b)
    return float(np.mean((a - b) ** 2))


def _check_simplex(p: np.ndarray, name: str) -> None:
    if p.ndim == 0:
        raise ValueError(f"{name} needs a class axis")
    if np.any(p < 0):
        raise ValueError(f"{name} has negative probabilities")
    err = np.abs(p.sum(axis=-1) - 1.0)
    if np.any(err > SIMPLEX_TOL):
        raise ValueError(f"{name} class slices do not sum to 1 (max error {err.max():.3g})")


def kl_divergence(s, t) -> float:
    """Mean over positions of KL(s || t) along the last (class) axis.

    Terms with s = 0 contribute nothing; t is clamped below at ``EPS``.
    """
    s, t = _as_tensor(s, "s"), _as_tensor(t, "t")
    _check_shapes(s, t)
    _check_simplex(s, "s")
    _check_simplex(t, "t")
    tc = np.maximum(t, EPS)
    pos = s > 0
    terms = np.zeros_like(s)
    terms[pos] = s[pos] * np.log(s[pos] / tc[pos])
    return float(np.mean(terms.sum(axis=-1)))


def kl_divergence_grad(s, t) -> np.ndarray:
    """Gradient of :func:`kl_divergence` with respect to ``s``.

    Each entry is ``(ln(s/t) + 1) / M`` with M the number of class slices;
    entries where s = 0 are ``-inf``.
    """
    s, t = _as_tensor(s, "s"), _as_tensor(t, "t")
    _check_shapes(s, t)
    n_slices = s.size // s.shape[-1]
    with np.errstate(divide="ignore"):
        return (np.log(s / np.maximum(t, EPS)) + 1.0) / n_slices


def heads_loss(s_cls, t_cls, s_reg, t_reg, cfg: DistillationConfig | None = None) -> float:
    return _heads(s_cls, t_cls, s_reg, t_reg, cfg or DistillationConfig())[0]


def _heads(s_cls, t_cls, s_reg, t_reg, cfg: DistillationConfig):
    kl = kl_divergence(s_cls, t_cls)
    reg = mse(s_reg, t_reg)
    if cfg.heads_pairing == "expanded":
        return cfg.alpha1 * kl + cfg.alpha2 * reg, kl, reg
    return cfg.alpha1 * reg + cfg.alpha2 * kl, kl, reg


def project_channels(features, weights, bias=None) -> np.ndarray:
    """Per-location linear channel map (a fixed 1x1 convolution): C x H x W -> C' x H x W."""
    features = _as_tensor(features, "features")
    weights = _as_tensor(weights, "weights")
    if features.ndim != 3:
        raise ValueError(f"features must be C x H x W, got shape {features.shape}")
    if weights.ndim != 2 or weights.shape[1] != features.shape[0]:
        raise ValueError(f"weights shape {weights.shape} does not map {features.shape[0]} channels")
    out = np.einsum("oc,chw->ohw", weights, features)
    if bias is not None:
        bias = _as_tensor(bias, "bias").reshape(-1)
        if bias.shape != (weights.shape[0],):
            raise ValueError(f"bias needs {weights.shape[0]} entries, got {bias.shape}")
        out = out + bias[:, None, None]
    return out


def feature_loss(t_back, s_back_projected) -> float:
    """MSE between teacher features and (already projected) student features."""
    return mse(t_back, s_back_projected)


def total_loss(
    l_heads: float,
    l_feat: float,
    l_det: float,
    cfg: DistillationConfig | None = None,
    l_kd_cls: float = 0.0,
    l_kd_reg: float = 0.0,
) -> LossBreakdown:
    cfg = cfg or DistillationConfig()
    for name, value in (("l_heads", l_heads), ("l_feat", l_feat), ("l_det", l_det)):
        if not np.isfinite(value) or value < 0:
            raise ValueError(f"{name} must be a non-negative finite number, got {value}")
    total = cfg.lambda1 * l_heads + cfg.lambda2 * l_feat + cfg.lambda3 * l_det
    return LossBreakdown(float(l_heads), float(l_kd_cls), float(l_kd_reg), float(l_feat), float(l_det), float(total))


def distillation_loss(s_cls, t_cls, s_reg, t_reg, t_back, s_back_projected, l_det, cfg=None) -> LossBreakdown:
    """All terms at once from raw head and backbone outputs."""
    cfg = cfg or DistillationConfig()
    l_heads, kl, reg = _heads(s_cls, t_cls, s_reg, t_reg, cfg)
    return total_loss(l_heads, feature_loss(t_back, s_back_projected), l_det, cfg, kl, reg)
