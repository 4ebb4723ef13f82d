"""Robust global color and tone transfer from a style exemplar to a photograph.

Chrominance is moved with the closed-form linear map between two Gaussians,
computed on a floored input covariance so flat inputs never receive explosive
gains. Luminance is remapped by a two-parameter arctan curve fitted to a
capped interpolation between the input and style percentile features.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .colorspace import (
    DEFAULT_CLIP,
    DEFAULT_GAMMA,
    WHITE,
    XYZ_TO_RGB,
    LabImage,
    lab_to_srgb,
    preprocess,
)
from .errors import SingularCovariance
from .imgio import RgbImage
from .stylestats import (
    MAX_STAT_SAMPLES,
    ChromaStats,
    LumaFeature,
    StyleDescriptor,
    check_psd2,
    inv2,
    sqrt_spd2,
    style_descriptor,
)

DEFAULT_LAMBDA_R = 7.5
DEFAULT_TAU = 0.4
MAX_CORRELATION = 0.999

DELTA_MIN = 0.01
DELTA_MAX = 4.0
LUT_SIZE = 4096


@dataclass(frozen=True, eq=False)
class ChromaMap:
    T: np.ndarray
    mu_in: np.ndarray
    mu_style: np.ndarray


@dataclass(frozen=True)
class ToneCurveParams:
    m: float
    delta: float

    def __post_init__(self):
        if not 0.0 <= self.m <= 1.0:
            raise ValueError(f"inflection point m must lie in [0, 1], got {self.m}")
        if not self.delta >= DELTA_MIN:
            raise ValueError(f"delta must be >= {DELTA_MIN}, got {self.delta}")


@dataclass(frozen=True)
class FaceRegion:
    center: tuple[float, float]  # (x, y) in pixels
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"face radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class FaceCorrectionConfig:
    l_th: float = 0.3
    gamma_th: float = 0.5
    alpha_r: float = 0.45
    alpha_c: float = 0.001

    def __post_init__(self):
        for name in ("l_th", "gamma_th", "alpha_r", "alpha_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.l_th > 1:
            raise ValueError("l_th must lie in (0, 1]")


@dataclass(frozen=True)
class TransferConfig:
    gamma: float = DEFAULT_GAMMA
    clip: float = DEFAULT_CLIP
    lambda_r: float = DEFAULT_LAMBDA_R
    tau: float = DEFAULT_TAU
    # "cap" limits the percentile shift to tau; "literal" uses tau / min(tau, d)
    tone_target: str = "cap"
    gamma_compress: bool = True
    max_stat_samples: int | None = MAX_STAT_SAMPLES
    face: FaceCorrectionConfig = field(default_factory=FaceCorrectionConfig)


# ---------------------------------------------------------------- chrominance


def regularize_covariance(cov, lambda_r: float) -> np.ndarray:
    """Floor the diagonal at ``lambda_r`` while keeping the correlation coefficient.

    The correlation is clamped to +-0.999 so the result is always invertible
    when ``lambda_r > 0``.
    """
    cov = check_psd2(cov)
    d0, d1 = cov[0, 0], cov[1, 1]
    denom = math.sqrt(max(d0, 0.0) * max(d1, 0.0))
    rho = cov[0, 1] / denom if denom > 0 else 0.0
    rho = min(max(rho, -MAX_CORRELATION), MAX_CORRELATION)
    n0, n1 = max(d0, lambda_r), max(d1, lambda_r)
    off = rho * math.sqrt(n0 * n1)
    return np.array([[n0, off], [off, n1]])


def chroma_transform(
    input: ChromaStats, style: ChromaStats, lambda_r: float = DEFAULT_LAMBDA_R
) -> ChromaMap:
    """Linear map sending N(mu_in, cov_in') onto N(mu_style, cov_style)."""
    if lambda_r < 0:
        raise ValueError(f"lambda_r must be non-negative, got {lambda_r}")
    sigma_in = regularize_covariance(input.cov, lambda_r)
    sigma_style = check_psd2(style.cov)
    root = sqrt_spd2(sigma_in)
    if root[0, 0] * root[1, 1] - root[0, 1] ** 2 <= 0.0:
        raise SingularCovariance("regularized input covariance is singular")
    root_inv = inv2(root)
    mid = root @ sigma_style @ root
    mid = 0.5 * (mid + mid.T)
    T = root_inv @ sqrt_spd2(mid) @ root_inv
    T = 0.5 * (T + T.T)
    return ChromaMap(T, input.mean.copy(), style.mean.copy())


def apply_chroma(img: LabImage, cmap: ChromaMap) -> LabImage:
    T = cmap.T
    da = img.a - cmap.mu_in[0]
    db = img.b - cmap.mu_in[1]
    a = T[0, 0] * da + T[0, 1] * db + cmap.mu_style[0]
    b = T[1, 0] * da + T[1, 1] * db + cmap.mu_style[1]
    return img.replace(a=a, b=b)


# ---------------------------------------------------------------- luminance


def tone_curve(m, delta, l):
    """Arctan tone curve; broadcasts over all three arguments."""
    base = np.arctan(m / delta)
    return (base + np.arctan((l - m) / delta)) / (base + np.arctan((1.0 - m) / delta))


def tone_curve_eval(params: ToneCurveParams, l):
    return tone_curve(params.m, params.delta, l)


def tone_target(l_in: np.ndarray, l_style: np.ndarray, tau: float, mode: str = "cap") -> np.ndarray:
    """Interpolated luminance feature the curve is fitted to."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    diff = l_style - l_in
    sup = float(np.max(np.abs(diff)))
    if mode == "cap":
        factor = min(1.0, tau / max(tau, sup))
    elif mode == "literal":
        factor = tau / min(tau, sup) if sup > 0 else 1.0
    else:
        raise ValueError(f"unknown tone target mode {mode!r}")
    return l_in + diff * factor


def tone_cost(m, delta, l_in: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Sum of squared residuals for arrays of candidate (m, delta)."""
    m = np.asarray(m, dtype=np.float64)[..., None]
    delta = np.asarray(delta, dtype=np.float64)[..., None]
    r = tone_curve(m, delta, l_in) - target
    return np.sum(r * r, axis=-1)


def _cost_and_grad(p: np.ndarray, l_in: np.ndarray, target: np.ndarray):
    """Cost and gradient w.r.t. (m, log delta)."""
    m, delta = p[0], math.exp(p[1])
    za, zb, zc = m / delta, (l_in - m) / delta, (1.0 - m) / delta
    A, B, C = math.atan(za), np.arctan(zb), math.atan(zc)
    wa, wb, wc = 1.0 / (1.0 + za * za), 1.0 / (1.0 + zb * zb), 1.0 / (1.0 + zc * zc)
    num, den = A + B, A + C
    r = num / den - target
    # d/dm and d/dlog(delta) of each arctan term
    dnum_m, dden_m = (wa - wb) / delta, (wa - wc) / delta
    dnum_u, dden_u = -(za * wa + zb * wb), -(za * wa + zc * wc)
    dg_m = (dnum_m * den - num * dden_m) / (den * den)
    dg_u = (dnum_u * den - num * dden_u) / (den * den)
    return float(r @ r), np.array([2.0 * (r @ dg_m), 2.0 * (r @ dg_u)])


# search layout: coarse grid, then windowed refinements around the best cells
_COARSE = 17
_FINE = 9
_LEVELS = 4
_BEAM = 4


def fit_tone_curve(
    l_in: LumaFeature, l_style: LumaFeature, tau: float = DEFAULT_TAU, mode: str = "cap"
) -> ToneCurveParams:
    """Fit (m, delta) by hierarchical grid refinement.

    A 17x17 sweep over m in [0, 1] and log-spaced delta in [0.01, 4] seeds the
    search; each of four refinement levels re-grids 9x9 inside +-1 parent cell
    around each of the best few candidates kept so far. Deterministic.
    """
    x = l_in.q
    target = tone_target(x, l_style.q, tau, mode)
    ld_lo, ld_hi = math.log(DELTA_MIN), math.log(DELTA_MAX)

    mg, lg = np.meshgrid(
        np.linspace(0.0, 1.0, _COARSE), np.linspace(ld_lo, ld_hi, _COARSE), indexing="ij"
    )
    cand_m, cand_ld = mg.ravel(), lg.ravel()
    cost = tone_cost(cand_m, np.exp(cand_ld), x, target)
    step_m = 1.0 / (_COARSE - 1)
    step_ld = (ld_hi - ld_lo) / (_COARSE - 1)

    for _ in range(_LEVELS):
        keep = np.argsort(cost, kind="stable")[:_BEAM]
        offs = np.linspace(-1.0, 1.0, _FINE)
        ms, lds = [cand_m[keep]], [cand_ld[keep]]
        for i in keep:
            wm, wl = np.meshgrid(
                np.clip(cand_m[i] + offs * step_m, 0.0, 1.0),
                np.clip(cand_ld[i] + offs * step_ld, ld_lo, ld_hi),
                indexing="ij",
            )
            ms.append(wm.ravel())
            lds.append(wl.ravel())
        cand_m, cand_ld = np.concatenate(ms), np.concatenate(lds)
        cost = tone_cost(cand_m, np.exp(cand_ld), x, target)
        step_m *= 2.0 / (_FINE - 1)
        step_ld *= 2.0 / (_FINE - 1)

    best = int(np.argmin(cost))
    best_m, best_ld, best_cost = cand_m[best], cand_ld[best], cost[best]

    # continuous polish from each surviving cell; grid cells can straddle a
    # narrow diagonal valley or sit one step short of the m boundary
    bounds = [(0.0, 1.0), (ld_lo, ld_hi)]
    for i in np.argsort(cost, kind="stable")[:_BEAM]:
        res = minimize(
            _cost_and_grad, np.array([cand_m[i], cand_ld[i]]), args=(x, target), jac=True,
            method="L-BFGS-B", bounds=bounds, options={"ftol": 1e-15, "gtol": 1e-12},
        )
        if res.fun < best_cost:
            best_m, best_ld, best_cost = res.x[0], res.x[1], res.fun

    m = min(max(float(best_m), 0.0), 1.0)
    delta = min(max(math.exp(best_ld), DELTA_MIN), DELTA_MAX)
    return ToneCurveParams(m, float(delta))


def tone_lut(params: ToneCurveParams, size: int = LUT_SIZE) -> np.ndarray:
    lut = tone_curve_eval(params, np.linspace(0.0, 1.0, size))
    lut[0], lut[-1] = 0.0, 1.0
    return np.maximum.accumulate(lut)


def apply_lut(values: np.ndarray, lut: np.ndarray) -> np.ndarray:
    """Piecewise-linear lookup of ``values`` in [0, 1] on a uniform table."""
    n = lut.size - 1
    padded = np.append(lut, lut[-1])
    x = np.clip(values, 0.0, 1.0) * n
    i = x.astype(np.intp)
    f = x - i
    lo = padded[i]
    return lo + f * (padded[i + 1] - lo)


def apply_tone(img: LabImage, params: ToneCurveParams) -> LabImage:
    return img.replace(L=apply_lut(img.L, tone_lut(params)))


# ---------------------------------------------------------------- faces


def _face_box(face: FaceRegion, shape: tuple[int, int]) -> tuple[slice, slice]:
    h, w = shape
    cx, cy = face.center
    r = face.radius
    x0 = max(int(math.floor(cx - r)), 0)
    x1 = min(int(math.ceil(cx + r)) + 1, w)
    y0 = max(int(math.floor(cy - r)), 0)
    y1 = min(int(math.ceil(cy + r)) + 1, h)
    return slice(y0, y1), slice(x0, x1)


def correct_face_exposure(
    img: LabImage, faces, cfg: FaceCorrectionConfig = FaceCorrectionConfig()
) -> LabImage:
    """Brighten faces whose median luminance fell below ``cfg.l_th``.

    Every pixel is blended towards ``L ** gamma`` with a weight that decays
    with distance from the face center (in radii) and with chroma distance
    from the median face chroma.
    """
    h, w = img.shape
    L = img.L
    changed = False
    for face in faces:
        cx, cy = face.center
        if not (0 <= cx < w and 0 <= cy < h):
            raise ValueError(f"face center {face.center} outside {w}x{h} image")
        ys, xs = _face_box(face, (h, w))
        l_med = float(np.median(L[ys, xs]))
        if l_med >= cfg.l_th:
            continue
        gamma = max(cfg.gamma_th, 0.65 * l_med / cfg.l_th)
        a_med = float(np.median(img.a[ys, xs]))
        b_med = float(np.median(img.b[ys, xs]))
        yy = ((np.arange(h) - cy) / face.radius) ** 2
        xx = ((np.arange(w) - cx) / face.radius) ** 2
        spatial = np.exp(-cfg.alpha_r * yy)[:, None] * np.exp(-cfg.alpha_r * xx)[None, :]
        chroma = np.exp(-cfg.alpha_c * ((img.a - a_med) ** 2 + (img.b - b_med) ** 2))
        weight = spatial * chroma
        # L ** gamma >= L for gamma <= 1; the max guards against pow rounding
        lifted = np.maximum(np.power(L, gamma), L)
        L = L + weight * (lifted - L)
        changed = True
    return img.replace(L=L) if changed else img


def load_faces(path) -> list[FaceRegion]:
    """Read a faces sidecar: ``[{"cx": int, "cy": int, "r": int}, ...]``."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, list):
        raise ValueError(f"{path}: faces document must be a JSON array")
    faces = []
    for entry in data:
        try:
            faces.append(FaceRegion((float(entry["cx"]), float(entry["cy"])), float(entry["r"])))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: malformed face entry {entry!r}") from exc
    return faces


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True, eq=False)
class PreparedInput:
    """Preprocessed input and its statistics, reusable across styles."""

    lab: LabImage
    descriptor: StyleDescriptor


@dataclass(frozen=True, eq=False)
class TransferResult:
    image: RgbImage
    chroma_map: ChromaMap
    tone: ToneCurveParams


def prepare_input(rgb: RgbImage, cfg: TransferConfig = TransferConfig()) -> PreparedInput:
    lab = preprocess(rgb, cfg.gamma, cfg.clip, cfg.gamma_compress)
    return PreparedInput(lab, style_descriptor(lab, cfg.max_stat_samples))


def render(
    prepared: PreparedInput,
    style: StyleDescriptor,
    faces=(),
    cfg: TransferConfig = TransferConfig(),
) -> TransferResult:
    """Transfer ``style`` onto an already prepared input."""
    cmap = chroma_transform(prepared.descriptor.chroma, style.chroma, cfg.lambda_r)
    tone = fit_tone_curve(prepared.descriptor.luma, style.luma, cfg.tau, cfg.tone_target)
    out_exponent = cfg.gamma if cfg.gamma_compress else 1.0 / cfg.gamma
    if faces or out_exponent < 1.0:
        lab = apply_tone(apply_chroma(prepared.lab, cmap), tone)
        if faces:
            lab = correct_face_exposure(lab, faces, cfg.face)
        out = lab_to_srgb(lab, cfg.gamma, cfg.gamma_compress)
    else:
        out = _render_fused(prepared.lab, cmap, tone, out_exponent)
    return TransferResult(out, cmap, tone)


def _render_fused(lab: LabImage, cmap: ChromaMap, tone: ToneCurveParams, out_exponent: float) -> RgbImage:
    """Same chain as apply_chroma -> apply_tone -> lab_to_srgb, in one pass."""
    out = np.empty((lab.L.size, 3))
    _kernels.render(
        lab.L.reshape(-1), lab.a.reshape(-1), lab.b.reshape(-1),
        cmap.T, cmap.mu_in, cmap.mu_style, tone_lut(tone),
        XYZ_TO_RGB, WHITE, _kernels.encode_lut(out_exponent), out,
    )
    return RgbImage.trusted(out.reshape(lab.height, lab.width, 3))


def run_transfer(
    input: RgbImage, style: StyleDescriptor, faces=(), cfg: TransferConfig = TransferConfig()
) -> TransferResult:
    return render(prepare_input(input, cfg), style, faces, cfg)


def transfer_style(
    input: RgbImage, style: StyleDescriptor, faces=(), cfg: TransferConfig = TransferConfig()
) -> RgbImage:
    """Stylize ``input`` with the statistics in ``style``."""
    return run_transfer(input, style, faces, cfg).image


def warmup(cfg: TransferConfig = TransferConfig()) -> None:
    """Run a tiny image through the pipeline so compiled kernels are loaded
    for the exact argument types used later."""
    _kernels.warmup()
    ramp = np.linspace(0.0, 1.0, 48).reshape(4, 4, 3)
    prepared = prepare_input(RgbImage(ramp), cfg)
    render(prepared, prepared.descriptor, (), cfg)
    lab_to_srgb(prepared.lab, cfg.gamma, cfg.gamma_compress)
