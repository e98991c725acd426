import sys
import numpy as np
from dataclasses import dataclass, field
from logging import Logger, DEBUG
from numpy.typing import NDArray
from pathlib import Path
from pypomes_core import exc_format, str_sanitize, validate_format_error
from typing import Any, Final

from benchmark import spb_common
from benchmark.spb_metrics import ImageBuffer

DATASET_KINDS: Final[tuple[str, ...]] = ("signal1d", "image2d")

# PNM magic numbers: ASCII and binary, gray and color
PNM_FORMATS: Final[dict[str, tuple[int, bool]]] = {
    "P2": (1, False),
    "P3": (3, False),
    "P5": (1, True),
    "P6": (3, True),
}
PNM_MAXVALS: Final[tuple[int, ...]] = (255, 65535)


@dataclass
class Dataset:
    kind: str
    # N x d inputs in [0,1]^d, N x c targets
    coords: NDArray
    targets: NDArray
    train_mask: NDArray
    width: int = 0
    height: int = 1
    channels: int = 1
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def train_count(self) -> int:
        return int(self.train_mask.sum())

    @property
    def test_count(self) -> int:
        return int((~self.train_mask).sum())

    def as_image(self,
                 values: NDArray = None) -> ImageBuffer:
        """
        The targets, or *values* laid out the same way, as an image (a 1D signal becomes a single row).
        """
        return ImageBuffer(width=self.width,
                           height=self.height,
                           channels=self.channels,
                           values=self.targets if values is None else values)


def gen_signal_1d(errors: list[str],
                  seed: int,
                  n_samples: int,
                  n_modes: int,
                  max_frequency: int) -> Dataset | None:
    """
    Generate y(x) = sum_m A_m sin(2 pi f_m x + phi_m) on the grid x_i = i / n_samples.

    Frequencies are integers drawn uniformly in [1, *max_frequency*], with amplitudes 1/f_m and phases
    uniform in [0, 2 pi). Even-index samples train, odd-index samples test.

    :param errors: incidental errors
    :param seed: the generator seed
    :param n_samples: the grid size, even and at least 4
    :param n_modes: the number of sinusoids
    :param max_frequency: the largest frequency, at most half the grid size
    :return: the dataset, or *None* on error
    """
    op_errors: list[str] = []
    if n_samples < 4 or n_samples % 2:
        # 142: Invalid value {}: {}
        op_errors.append(validate_format_error(142, n_samples, "must be even and at least 4", "@n-samples"))
    if n_modes < 1:
        # 142: Invalid value {}: {}
        op_errors.append(validate_format_error(142, n_modes, "must be positive", "@n-modes"))
    if not 1 <= max_frequency <= max(1, n_samples // 2):
        # 151: Invalid value {}: must be in the range {}
        op_errors.append(validate_format_error(151, max_frequency, [1, n_samples // 2], "@max-frequency"))
    if op_errors:
        errors.extend(op_errors)
        return None

    rng: np.random.Generator = np.random.default_rng(seed)
    frequencies: NDArray = rng.integers(1, max_frequency + 1, size=n_modes)
    amplitudes: NDArray = 1.0 / frequencies
    phases: NDArray = rng.uniform(0.0, 2.0 * np.pi, size=n_modes)

    x: NDArray = np.arange(n_samples) / n_samples
    y: NDArray = (amplitudes * np.sin(2.0 * np.pi * np.outer(x, frequencies) + phases)).sum(axis=1)
    return Dataset(kind="signal1d",
                   coords=x[:, None],
                   targets=y[:, None],
                   train_mask=np.arange(n_samples) % 2 == 0,
                   width=n_samples,
                   info={
                       "seed": seed,
                       "frequencies": frequencies.tolist(),
                       "amplitudes": amplitudes.tolist(),
                       "phases": phases.tolist()
                   })


def gen_image_2d(errors: list[str],
                 seed: int,
                 size: int,
                 channels: int = 1) -> ImageBuffer | None:
    """
    Synthetic test image: a smooth diagonal gradient under a seeded sinusoidal texture, quantized to 8 bits.
    """
    op_errors: list[str] = []
    if size < 2:
        # 142: Invalid value {}: {}
        op_errors.append(validate_format_error(142, size, "must be at least 2", "@size"))
    if channels not in (1, 3):
        # 142: Invalid value {}: {}
        op_errors.append(validate_format_error(142, channels, "must be 1 or 3", "@channels"))
    if op_errors:
        errors.extend(op_errors)
        return None

    rng: np.random.Generator = np.random.default_rng(seed)
    centers: NDArray = (np.arange(size) + 0.5) / size
    u, v = np.meshgrid(centers, centers)
    planes: list[NDArray] = []
    for _ in range(channels):
        plane: NDArray = 0.2 + 0.3 * (u + v)
        for fu, fv, phase in zip(rng.integers(1, 9, size=3), rng.integers(1, 9, size=3),
                                 rng.uniform(0.0, 2.0 * np.pi, size=3)):
            plane += 0.08 * np.sin(2.0 * np.pi * (fu * u + fv * v) + phase)
        planes.append(plane)
    values: NDArray = np.round(np.clip(np.stack(planes, axis=-1), 0.0, 1.0) * 255.0) / 255.0
    return ImageBuffer(width=size,
                       height=size,
                       channels=channels,
                       values=values)


def image_dataset(errors: list[str],
                  img: ImageBuffer,
                  train_stride: int = 2) -> Dataset | None:
    """
    Pixel-centre coordinates in [0,1]^2, row-major; pixels on the regular *train_stride* sub-grid train.
    """
    if train_stride < 2:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, train_stride, "must be at least 2", "@train-stride"))
        return None

    rows, cols = np.meshgrid(np.arange(img.height), np.arange(img.width), indexing="ij")
    coords: NDArray = np.stack([(cols.ravel() + 0.5) / img.width,
                                (rows.ravel() + 0.5) / img.height], axis=1)
    train_mask: NDArray = (rows.ravel() % train_stride == 0) & (cols.ravel() % train_stride == 0)
    return Dataset(kind="image2d",
                   coords=coords,
                   targets=img.values.reshape(-1, img.channels).copy(),
                   train_mask=train_mask,
                   width=img.width,
                   height=img.height,
                   channels=img.channels,
                   info={"train-stride": train_stride})


def _header_tokens(data: bytes,
                   count: int) -> tuple[list[bytes], int]:
    # whitespace-separated tokens, '#' comments running to end of line
    tokens: list[bytes] = []
    pos: int = 0
    while len(tokens) < count:
        while pos < len(data) and (data[pos:pos + 1].isspace() or data[pos:pos + 1] == b"#"):
            if data[pos:pos + 1] == b"#":
                while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        start: int = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated header")
        tokens.append(data[start:pos])
    return tokens, pos


def parse_pnm(errors: list[str],
              data: bytes) -> ImageBuffer | None:
    """
    Decode a PGM (P2/P5) or PPM (P3/P6) image with maxval 255 or 65535 into [0,1] values.
    """
    try:
        tokens, pos = _header_tokens(data=data,
                                     count=4)
        magic: str = tokens[0].decode(encoding="ascii")
        width, height, maxval = (int(token) for token in tokens[1:])
    except (ValueError, UnicodeDecodeError) as e:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, "image header", str(e), "@image"))
        return None

    if magic not in PNM_FORMATS:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, magic,
                                            f"must be one of {','.join(PNM_FORMATS)}", "@magic"))
        return None
    if maxval not in PNM_MAXVALS:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, maxval, "unsupported maxval, must be 255 or 65535", "@maxval"))
        return None
    if width < 1 or height < 1:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, f"{width}x{height}", "empty image", "@image"))
        return None

    channels, binary = PNM_FORMATS[magic]
    expected: int = width * height * channels
    if binary:
        # exactly one whitespace byte separates maxval from the raster
        dtype: np.dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raster: bytes = data[pos + 1:pos + 1 + expected * dtype.itemsize]
        if len(raster) != expected * dtype.itemsize:
            # 101: {}
            errors.append(validate_format_error(101, f"truncated raster: {len(raster)} bytes, "
                                                     f"expected {expected * dtype.itemsize}"))
            return None
        samples: NDArray = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    else:
        try:
            tokens, _ = _header_tokens(data=data[pos:],
                                       count=expected)
            samples = np.array([int(token) for token in tokens], dtype=np.float64)
        except ValueError as e:
            # 101: {}
            errors.append(validate_format_error(101, f"malformed raster: {e}"))
            return None

    if samples.max(initial=0.0) > maxval:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, int(samples.max()), f"exceeds maxval {maxval}", "@raster"))
        return None
    return ImageBuffer(width=width,
                       height=height,
                       channels=channels,
                       values=samples / maxval)


def format_pnm(img: ImageBuffer,
               binary: bool = True,
               maxval: int = 255) -> bytes:

    magic: str = {(1, False): "P2", (3, False): "P3", (1, True): "P5", (3, True): "P6"}[(img.channels, binary)]
    samples: NDArray = np.round(img.values.ravel() * maxval).astype(np.int64)
    header: bytes = f"{magic}\n{img.width} {img.height}\n{maxval}\n".encode(encoding="ascii")
    if binary:
        dtype: str = ">u2" if maxval > 255 else "u1"
        return header + samples.astype(dtype).tobytes()
    lines: list[str] = [" ".join(str(sample) for sample in row)
                        for row in samples.reshape(img.height, -1)]
    return header + ("\n".join(lines) + "\n").encode(encoding="ascii")


def read_image(errors: list[str],
               path: Path | str,
               logger: Logger = None) -> ImageBuffer | None:

    # initialize the return variable
    result: ImageBuffer | None = None

    try:
        data: bytes = Path(path).read_bytes()
    except OSError as e:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, str(path), e.strerror or "unreadable", "@path"))
        return result

    result = parse_pnm(errors=errors,
                       data=data)
    if result:
        spb_common.log(logger=logger,
                       level=DEBUG,
                       msg=f"Read image {path}: {result.width}x{result.height}x{result.channels}")
    return result


def load_image(errors: list[str],
               path: Path | str,
               train_stride: int = 2,
               logger: Logger = None) -> Dataset | None:
    """
    Read a PGM/PPM image as a 2D regression dataset.

    :param errors: incidental errors
    :param path: the image file
    :param train_stride: pixels on this regular sub-grid train, the rest test
    :param logger: optional logger
    :return: the dataset, or *None* on error
    """
    img: ImageBuffer = read_image(errors=errors,
                                  path=path,
                                  logger=logger)
    if not img:
        return None
    result: Dataset = image_dataset(errors=errors,
                                    img=img,
                                    train_stride=train_stride)
    if result:
        result.info["path"] = str(path)
    return result


def save_image(errors: list[str],
               img: ImageBuffer,
               path: Path | str,
               binary: bool = True,
               maxval: int = 255,
               logger: Logger = None) -> bool:

    if maxval not in PNM_MAXVALS:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, maxval, "unsupported maxval, must be 255 or 65535", "@maxval"))
        return False
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(format_pnm(img=img,
                                          binary=binary,
                                          maxval=maxval))
    except Exception as e:
        exc_err: str = str_sanitize(exc_format(exc=e,
                                               exc_info=sys.exc_info()))
        # 102: Unexpected error: {}
        errors.append(validate_format_error(102, exc_err))
        return False

    spb_common.log(logger=logger,
                   level=DEBUG,
                   msg=f"Wrote image {path}")
    return True


def save_signal_csv(errors: list[str],
                    dataset: Dataset,
                    path: Path | str,
                    logger: Logger = None) -> bool:
    """
    Write a 1D dataset as CSV with header *x,y*, one row per sample, values in shortest round-trip form.
    """
    lines: list[str] = ["x,y"]
    lines.extend(f"{x!r},{y!r}" for x, y in zip(dataset.coords[:, 0].tolist(), dataset.targets[:, 0].tolist()))
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except Exception as e:
        exc_err: str = str_sanitize(exc_format(exc=e,
                                               exc_info=sys.exc_info()))
        # 102: Unexpected error: {}
        errors.append(validate_format_error(102, exc_err))
        return False

    spb_common.log(logger=logger,
                   level=DEBUG,
                   msg=f"Wrote {len(lines) - 1} samples to {path}")
    return True
