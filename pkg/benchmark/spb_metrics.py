import math
import numpy as np
from dataclasses import dataclass, field
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray
from pypomes_core import validate_format_error
from scipy.stats import wasserstein_distance
from typing import Any, Final

# SSIM stabilizers for the [0,1] dynamic range
SSIM_C1: Final[float] = 0.01 ** 2
SSIM_C2: Final[float] = 0.03 ** 2
SSIM_WINDOW: Final[int] = 8

# intensity histogram resolution for RWDE
HISTOGRAM_BINS: Final[int] = 256


@dataclass
class ImageBuffer:
    width: int
    height: int
    channels: int
    values: NDArray

    def __post_init__(self) -> None:
        # stored as (height, width, channels), clamped to [0,1]
        self.values = np.clip(np.asarray(self.values, dtype=np.float64), 0.0, 1.0)
        self.values = self.values.reshape(self.height, self.width, self.channels)

    def channel(self, index: int) -> "ImageBuffer":
        return ImageBuffer(width=self.width,
                           height=self.height,
                           channels=1,
                           values=self.values[:, :, index])


def image_from_array(values: Any) -> ImageBuffer:
    """
    Wrap a (h, w) or (h, w, c) array, or a flat pixel vector (as a single row), as an image.
    """
    arr: NDArray = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1, 1)
    elif arr.ndim == 2:
        arr = arr[:, :, None]
    return ImageBuffer(width=arr.shape[1],
                       height=arr.shape[0],
                       channels=arr.shape[2],
                       values=arr)


@dataclass
class WaveletPyramid:
    # details[0] is the finest level; each entry holds the (LH, HL, HH) bands
    details: list[tuple[NDArray, NDArray, NDArray]] = field(default_factory=list)
    approximation: NDArray | None = None

    @property
    def levels(self) -> int:
        return len(self.details)

    def band_power(self, level: int) -> float:
        return float(sum(np.sum(band ** 2) for band in self.details[level - 1]))

    def energy(self) -> float:
        return float(np.sum(self.approximation ** 2)) + sum(self.band_power(level)
                                                            for level in range(1, self.levels + 1))


def _assert_same_shape(errors: list[str],
                       a: ImageBuffer,
                       b: ImageBuffer) -> bool:

    if a.values.shape != b.values.shape:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, f"{b.width}x{b.height}x{b.channels}",
                                            f"expected {a.width}x{a.height}x{a.channels}", "@image"))
        return False
    return True


def psnr(errors: list[str],
         a: ImageBuffer,
         b: ImageBuffer) -> float | None:
    """
    Peak signal-to-noise ratio in dB on the [0,1] range; identical images give +inf.
    """
    if not _assert_same_shape(errors, a, b):
        return None
    mse: float = float(np.mean((a.values - b.values) ** 2))
    return math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)


def ssim(errors: list[str],
         a: ImageBuffer,
         b: ImageBuffer,
         window: int = SSIM_WINDOW) -> float | None:
    """
    Mean structural similarity over uniform *window* x *window* patches, stride 1, channels averaged.
    """
    if not _assert_same_shape(errors, a, b):
        return None
    if window < 1 or window > min(a.width, a.height):
        # 151: Invalid value {}: must be in the range {}
        errors.append(validate_format_error(151, window, [1, min(a.width, a.height)], "@window"))
        return None

    scores: list[float] = []
    for channel in range(a.channels):
        patches_a: NDArray = sliding_window_view(a.values[:, :, channel], (window, window))
        patches_b: NDArray = sliding_window_view(b.values[:, :, channel], (window, window))
        mu_a: NDArray = patches_a.mean(axis=(-2, -1))
        mu_b: NDArray = patches_b.mean(axis=(-2, -1))
        var_a: NDArray = patches_a.var(axis=(-2, -1))
        var_b: NDArray = patches_b.var(axis=(-2, -1))
        cov: NDArray = ((patches_a - mu_a[..., None, None]) *
                        (patches_b - mu_b[..., None, None])).mean(axis=(-2, -1))
        local: NDArray = ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)) / \
                         ((mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2))
        scores.append(float(local.mean()))

    return float(np.mean(scores))


def _haar_step(band: NDArray) -> tuple[NDArray, tuple[NDArray, NDArray, NDArray]]:
    top_left: NDArray = band[0::2, 0::2]
    top_right: NDArray = band[0::2, 1::2]
    bottom_left: NDArray = band[1::2, 0::2]
    bottom_right: NDArray = band[1::2, 1::2]
    approx: NDArray = (top_left + top_right + bottom_left + bottom_right) / 2.0
    horizontal: NDArray = (top_left - top_right + bottom_left - bottom_right) / 2.0
    vertical: NDArray = (top_left + top_right - bottom_left - bottom_right) / 2.0
    diagonal: NDArray = (top_left - top_right - bottom_left + bottom_right) / 2.0
    return approx, (horizontal, vertical, diagonal)


def haar_decompose(errors: list[str],
                   img: ImageBuffer,
                   levels: int) -> WaveletPyramid | None:
    """
    Orthonormal 2D Haar analysis, applied *levels* times to the approximation band.

    :param errors: incidental errors
    :param img: a single-channel image, its sides divisible by 2^levels
    :param levels: the number of decomposition levels
    :return: the pyramid, or *None* on error
    """
    block: int = 2 ** levels
    if img.channels != 1:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, img.channels, "single channel required", "@channels"))
        return None
    if levels < 1 or img.width % block or img.height % block:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, f"{img.width}x{img.height}",
                                            f"sides must be divisible by 2^{levels}", "@levels"))
        return None

    result: WaveletPyramid = WaveletPyramid()
    band: NDArray = img.values[:, :, 0]
    for _ in range(levels):
        band, details = _haar_step(band)
        result.details.append(details)
    result.approximation = band
    return result


def haar_reconstruct(pyramid: WaveletPyramid) -> NDArray:

    band: NDArray = pyramid.approximation
    for horizontal, vertical, diagonal in reversed(pyramid.details):
        rows, cols = band.shape
        out: NDArray = np.empty((2 * rows, 2 * cols))
        out[0::2, 0::2] = (band + horizontal + vertical + diagonal) / 2.0
        out[0::2, 1::2] = (band - horizontal + vertical - diagonal) / 2.0
        out[1::2, 0::2] = (band + horizontal - vertical - diagonal) / 2.0
        out[1::2, 1::2] = (band - horizontal - vertical + diagonal) / 2.0
        band = out
    return band


def _band_power(errors: list[str],
                img: ImageBuffer,
                level: int) -> float | None:
    # power of the level-lambda detail bands, summed over channels
    total: float = 0.0
    for channel in range(img.channels):
        pyramid: WaveletPyramid = haar_decompose(errors, img.channel(channel), level)
        if pyramid is None:
            return None
        total += pyramid.band_power(level)
    return total


def wdpr(errors: list[str],
         y_true: ImageBuffer,
         y_syn: ImageBuffer,
         level: int) -> float | None:
    """
    Relative error |P_true - P_syn| / P_true of the level-*level* detail-band power.
    """
    if not _assert_same_shape(errors, y_true, y_syn):
        return None
    power_true: float = _band_power(errors, y_true, level)
    power_syn: float = _band_power(errors, y_syn, level)
    if power_true is None or power_syn is None:
        return None
    if power_true == 0.0:
        # 101: {}
        errors.append(validate_format_error(101, f"ground truth has no detail power at level {level}"))
        return None
    return abs(power_true - power_syn) / power_true


def power_ratio(errors: list[str],
                y_true: ImageBuffer,
                y_syn: ImageBuffer,
                level: int) -> float | None:

    if not _assert_same_shape(errors, y_true, y_syn):
        return None
    power_true: float = _band_power(errors, y_true, level)
    power_syn: float = _band_power(errors, y_syn, level)
    if power_true is None or power_syn is None:
        return None
    if power_true == 0.0:
        # 101: {}
        errors.append(validate_format_error(101, f"ground truth has no detail power at level {level}"))
        return None
    return power_syn / power_true


def wasserstein_1d(errors: list[str],
                   hist_a: Any,
                   hist_b: Any,
                   bin_width: float = 1.0) -> float | None:
    """
    Exact 1D optimal-transport distance between two histograms on a common uniform grid.

    Both histograms are normalized to unit mass and placed at the bin positions, *bin_width* apart.
    """
    a: NDArray = np.asarray(hist_a, dtype=np.float64)
    b: NDArray = np.asarray(hist_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, b.shape, f"expected {a.shape}", "@hist"))
        return None
    if np.any(a < 0.0) or np.any(b < 0.0) or a.sum() <= 0.0 or b.sum() <= 0.0:
        # 101: {}
        errors.append(validate_format_error(101, "histograms must be nonnegative with positive mass"))
        return None
    positions: NDArray = np.arange(a.size, dtype=np.float64) * bin_width
    return float(wasserstein_distance(positions, positions,
                                      u_weights=a,
                                      v_weights=b))


def intensity_histogram(img: ImageBuffer,
                        channel: int,
                        bins: int = HISTOGRAM_BINS) -> NDArray:

    counts, _ = np.histogram(img.values[:, :, channel], bins=bins, range=(0.0, 1.0))
    return counts.astype(np.float64)


def _histogram_distance(errors: list[str],
                        a: ImageBuffer,
                        b: ImageBuffer) -> float | None:
    # channel-averaged distance between intensity distributions
    distances: list[float] = []
    for channel in range(a.channels):
        distance: float = wasserstein_1d(errors,
                                         intensity_histogram(a, channel),
                                         intensity_histogram(b, channel),
                                         bin_width=1.0 / HISTOGRAM_BINS)
        if distance is None:
            return None
        distances.append(distance)
    return float(np.mean(distances))


def rwde(errors: list[str],
         y_train: ImageBuffer,
         y_syn: ImageBuffer,
         y_true: ImageBuffer) -> float | None:
    """
    Relative Wasserstein distance error WD(train, syn) / WD(true, syn).

    The images may differ in size: only their intensity distributions enter. Values below 1
    mean the synthesis sits closer to the training distribution than to the truth.
    A zero denominator (synthesis distributed exactly as the truth) is reported as an error.
    """
    if y_train.channels != y_syn.channels or y_true.channels != y_syn.channels:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, y_syn.channels, "channel counts differ", "@channels"))
        return None
    numerator: float = _histogram_distance(errors, y_train, y_syn)
    denominator: float = _histogram_distance(errors, y_true, y_syn)
    if numerator is None or denominator is None:
        return None
    if denominator == 0.0:
        # 101: {}
        errors.append(validate_format_error(101, "synthesis matches the ground-truth distribution (perfect)"))
        return None
    return numerator / denominator


def metrics_report(errors: list[str],
                   y_true: ImageBuffer,
                   y_syn: ImageBuffer,
                   y_train: ImageBuffer = None,
                   levels: int = 3) -> dict | None:
    """
    PSNR, SSIM, and per-level WDPR and power ratio of *y_syn* against *y_true*; RWDE when *y_train* is given.

    :param errors: incidental errors
    :param y_true: the ground truth
    :param y_syn: the synthesis
    :param y_train: optional training image
    :param levels: WDPR levels 1..levels
    :return: the metric values, or *None* on error
    """
    op_errors: list[str] = []
    if not _assert_same_shape(op_errors, y_true, y_syn):
        errors.extend(op_errors)
        return None

    result: dict = {
        "psnr": psnr(op_errors, y_true, y_syn),
        "ssim": ssim(op_errors, y_true, y_syn,
                     window=min(SSIM_WINDOW, y_true.width, y_true.height)),
        "wdpr": {},
        "power-ratio": {}
    }
    for level in range(1, levels + 1):
        result["wdpr"][str(level)] = wdpr(op_errors, y_true, y_syn, level)
        result["power-ratio"][str(level)] = power_ratio(op_errors, y_true, y_syn, level)
    if y_train is not None:
        rwde_errors: list[str] = []
        result["rwde"] = rwde(rwde_errors, y_train, y_syn, y_true)
        if any("perfect" in err for err in rwde_errors):
            result["rwde"] = "perfect"
        else:
            op_errors.extend(rwde_errors)

    if op_errors:
        errors.extend(op_errors)
        return None
    return result
