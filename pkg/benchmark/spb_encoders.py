import numpy as np
from dataclasses import dataclass, field
from logging import Logger, DEBUG, WARNING
from numpy.typing import NDArray
from pypomes_core import validate_format_error
from typing import Any, Final, Literal

from benchmark import spb_common

# encoding families understood by the harness
ENCODER_KINDS: Final[tuple[str, ...]] = (
    "identity", "pe", "grff", "ape", "spe", "spe-diagonal", "hash"
)

# families carrying trainable frequencies (and thus a learned spectrum)
ADAPTIVE_KINDS: Final[tuple[str, ...]] = ("ape", "spe", "spe-diagonal")

# default XOR-hash primes, one per input dimension (first is 1)
HASH_PRIMES: Final[tuple[int, ...]] = (1, 2654435761, 805459861)

# feature layout shared by PE, APE and diagonal SPE
FEATURE_LAYOUT: Final[str] = "per input dimension, per octave ascending, (sin, cos)"


@dataclass(frozen=True)
class PeConfig:
    L: int
    p: float = 0.0
    input_dim: int = 1

    @property
    def output_dim(self) -> int:
        return 2 * self.L * self.input_dim

    def amplitudes(self) -> NDArray:
        # a_l = (l+1)^(-p), octave l counted from zero
        return np.arange(1, self.L + 1, dtype=np.float64) ** (-self.p)

    def frequencies(self) -> NDArray:
        return np.pi * 2.0 ** np.arange(self.L, dtype=np.float64)


@dataclass
class GrffConfig:
    L: int
    sigma: float
    seed: int
    B: NDArray

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    @property
    def output_dim(self) -> int:
        return 2 * self.L


@dataclass
class ApeParams:
    omegas: NDArray
    input_dim: int = 1

    @property
    def output_dim(self) -> int:
        return 2 * len(self.omegas) * self.input_dim


@dataclass
class SpeLayerParams:
    mode: Literal["diagonal", "dense"]
    W: NDArray
    phase: NDArray
    inner_pe: PeConfig


@dataclass
class HashGridConfig:
    levels: int
    table_size: int
    features_per_entry: int
    base_resolution: int
    growth_factor: float
    input_dim: int
    primes: tuple[int, ...]
    tables: NDArray
    seed: int = 0

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_entry

    def resolution(self, level: int) -> int:
        return int(np.floor(self.base_resolution * self.growth_factor ** level))


@dataclass
class EncodedFeatures:
    values: NDArray
    layout: str = FEATURE_LAYOUT
    clamped: bool = False


@dataclass
class EncoderSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def label(self) -> str:
        # seeds excluded
        items: str = ";".join(f"{key}={val}" for key, val in sorted(self.params.items()) if key != "seed")
        return f"{self.kind}:{items}" if items else self.kind


@dataclass
class EncoderState:
    spec: EncoderSpec
    input_dim: int
    output_dim: int
    pe: PeConfig | None = None
    grff: GrffConfig | None = None
    ape: ApeParams | None = None
    spe: SpeLayerParams | None = None
    hash_grid: HashGridConfig | None = None


def to_signed(coords: NDArray) -> NDArray:
    """
    Map coordinates from [0,1] to [-1,1]; the inverse is *to_unit*.
    """
    return 2.0 * coords - 1.0


def to_unit(coords: NDArray) -> NDArray:
    return 0.5 * (coords + 1.0)


def _as_batch(x: Any) -> tuple[NDArray, bool]:
    arr: NDArray = np.asarray(x, dtype=np.float64)
    single: bool = arr.ndim == 1
    return np.atleast_2d(arr), single


def pe_values(x: NDArray,
              cfg: PeConfig) -> NDArray:
    # (N, d, L) arguments 2^l * pi * x_i
    args: NDArray = x[:, :, None] * cfg.frequencies()
    amps: NDArray = cfg.amplitudes()
    pairs: NDArray = np.stack([amps * np.sin(args), amps * np.cos(args)], axis=-1)
    return pairs.reshape(x.shape[0], -1)


def pe_encode(errors: list[str],
              x: Any,
              cfg: PeConfig) -> EncodedFeatures | None:

    # initialize the return variable
    result: EncodedFeatures | None = None

    batch, single = _as_batch(x)
    if not np.all(np.isfinite(batch)):
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, "x", "non-finite coordinate", "@x"))
    elif batch.shape[1] != cfg.input_dim:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, batch.shape[1],
                                            f"expected {cfg.input_dim} input dimensions", "@x"))
    else:
        values: NDArray = pe_values(x=batch,
                                    cfg=cfg)
        result = EncodedFeatures(values=values[0] if single else values)

    return result


def build_grff(L: int,
               sigma: float,
               seed: int,
               input_dim: int) -> GrffConfig:

    rng: np.random.Generator = np.random.default_rng(seed)
    B: NDArray = rng.normal(loc=0.0, scale=sigma, size=(L, input_dim))
    return GrffConfig(L=L, sigma=sigma, seed=seed, B=B)


def _grff_values(x: NDArray,
                 cfg: GrffConfig) -> NDArray:
    proj: NDArray = x @ cfg.B.T
    return np.concatenate([np.sin(proj), np.cos(proj)], axis=1)


def grff_encode(errors: list[str],
                x: Any,
                cfg: GrffConfig) -> EncodedFeatures | None:

    result: EncodedFeatures | None = None
    batch, single = _as_batch(x)
    if batch.shape[1] != cfg.input_dim:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, batch.shape[1],
                                            f"B has {cfg.input_dim} columns", "@x"))
    else:
        values: NDArray = _grff_values(x=batch,
                                       cfg=cfg)
        result = EncodedFeatures(values=values[0] if single else values,
                                 layout="sin(Bx) block, then cos(Bx) block")
    return result


def _ape_values(x: NDArray,
                params: ApeParams) -> NDArray:
    args: NDArray = x[:, :, None] * params.omegas
    pairs: NDArray = np.stack([np.sin(args), np.cos(args)], axis=-1)
    return pairs.reshape(x.shape[0], -1)


def ape_encode(errors: list[str],
               x: Any,
               params: ApeParams) -> EncodedFeatures | None:

    result: EncodedFeatures | None = None
    batch, single = _as_batch(x)
    if len(params.omegas) < 1:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, 0, "at least one frequency required", "@K"))
    elif batch.shape[1] != params.input_dim:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, batch.shape[1],
                                            f"expected {params.input_dim} input dimensions", "@x"))
    else:
        values: NDArray = _ape_values(x=batch,
                                      params=params)
        result = EncodedFeatures(values=values[0] if single else values)
    return result


def ape_backward(params: ApeParams,
                 x: NDArray,
                 grad_features: NDArray) -> NDArray:
    """
    Gradient of the APE features with respect to the trainable frequencies.

    :param params: the APE parameters
    :param x: the (N, d) coordinates that were encoded
    :param grad_features: the (N, 2Kd) gradient flowing into the features
    :return: the (K,) gradient for *params.omegas*
    """
    args: NDArray = x[:, :, None] * params.omegas
    grads: NDArray = grad_features.reshape(x.shape[0], x.shape[1], len(params.omegas), 2)
    xs: NDArray = x[:, :, None]
    per_omega: NDArray = grads[..., 0] * xs * np.cos(args) - grads[..., 1] * xs * np.sin(args)
    return per_omega.sum(axis=(0, 1))


def _spe_pre(features: NDArray,
             params: SpeLayerParams) -> NDArray:
    if params.mode == "diagonal":
        return features * params.W + params.phase
    return features @ params.W.T + params.phase


def spe_apply(errors: list[str],
              features: EncodedFeatures | NDArray,
              params: SpeLayerParams) -> NDArray | None:

    result: NDArray | None = None
    values: NDArray = features.values if isinstance(features, EncodedFeatures) else np.asarray(features)
    batch, single = _as_batch(values)

    width: int = params.W.shape[-1]
    if batch.shape[1] != width or params.phase.shape[0] != params.W.shape[0] or \
       (params.mode == "diagonal" and params.W.ndim != 1) or \
       (params.mode == "dense" and params.W.ndim != 2):
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, batch.shape[1],
                                            f"SPE {params.mode} layer expects {width} features", "@features"))
    else:
        out: NDArray = np.sin(_spe_pre(features=batch,
                                       params=params))
        result = out[0] if single else out

    return result


def spe_apply_backward(params: SpeLayerParams,
                       features: NDArray,
                       grad_out: NDArray) -> tuple[NDArray, NDArray, NDArray]:
    """
    Exact gradients of the SPE layer.

    :return: gradients for *W*, *phase* and the incoming features
    """
    grad_pre: NDArray = grad_out * np.cos(_spe_pre(features=features,
                                                   params=params))
    if params.mode == "diagonal":
        return (grad_pre * features).sum(axis=0), grad_pre.sum(axis=0), grad_pre * params.W
    return grad_pre.T @ features, grad_pre.sum(axis=0), grad_pre @ params.W


def build_hash_grid(input_dim: int,
                    levels: int = 8,
                    table_size: int = 4096,
                    features_per_entry: int = 2,
                    base_resolution: int = 4,
                    growth_factor: float = 1.5,
                    seed: int = 0,
                    primes: tuple[int, ...] = HASH_PRIMES) -> HashGridConfig:

    rng: np.random.Generator = np.random.default_rng(seed)
    tables: NDArray = rng.uniform(low=-1e-4,
                                  high=1e-4,
                                  size=(levels, table_size, features_per_entry))
    return HashGridConfig(levels=levels,
                          table_size=table_size,
                          features_per_entry=features_per_entry,
                          base_resolution=base_resolution,
                          growth_factor=growth_factor,
                          input_dim=input_dim,
                          primes=tuple(primes[:input_dim]),
                          tables=tables,
                          seed=seed)


def hash_index(corners: Any,
               primes: tuple[int, ...],
               table_size: int) -> NDArray:
    """
    Spatial hash of integer grid corners: (XOR_i corner_i * prime_i) mod T.

    :param corners: integer corners, shape (..., d)
    :param primes: one prime per dimension
    :param table_size: the table size T
    :return: indices in [0, T)
    """
    corners = np.asarray(corners, dtype=np.int64).astype(np.uint64)
    result: NDArray = np.zeros(corners.shape[:-1], dtype=np.uint64)
    for dim in range(corners.shape[-1]):
        # uint64 products wrap around, as in the reference hash
        result ^= corners[..., dim] * np.uint64(primes[dim])
    return (result % np.uint64(table_size)).astype(np.int64)


def _hash_values(x: NDArray,
                 cfg: HashGridConfig) -> tuple[NDArray, list[tuple[NDArray, NDArray]]]:

    n_samples, dims = x.shape
    offsets: NDArray = np.array([[(corner >> dim) & 1 for dim in range(dims)]
                                 for corner in range(2 ** dims)], dtype=np.int64)
    values: NDArray = np.empty((n_samples, cfg.output_dim))
    cache: list[tuple[NDArray, NDArray]] = []
    for level in range(cfg.levels):
        scaled: NDArray = x * cfg.resolution(level)
        base: NDArray = np.floor(scaled).astype(np.int64)
        frac: NDArray = scaled - base
        # (N, 2^d, d) corners and their d-linear weights
        corners: NDArray = base[:, None, :] + offsets[None, :, :]
        weights: NDArray = np.prod(np.where(offsets[None, :, :] == 1,
                                            frac[:, None, :], 1.0 - frac[:, None, :]), axis=2)
        indices: NDArray = hash_index(corners=corners,
                                      primes=cfg.primes,
                                      table_size=cfg.table_size)
        rows: NDArray = cfg.tables[level][indices]
        start: int = level * cfg.features_per_entry
        values[:, start:start + cfg.features_per_entry] = np.einsum("nc,ncf->nf", weights, rows)
        cache.append((indices, weights))

    return values, cache


def hash_encode(errors: list[str],
                x: Any,
                cfg: HashGridConfig,
                logger: Logger = None) -> EncodedFeatures | None:

    result: EncodedFeatures | None = None
    batch, single = _as_batch(x)
    if batch.shape[1] != cfg.input_dim or batch.shape[1] > 3:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, batch.shape[1],
                                            "hash grid supports up to 3 matching dimensions", "@x"))
    elif not np.all(np.isfinite(batch)):
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, "x", "non-finite coordinate", "@x"))
    else:
        clamped: bool = bool(np.any(batch < 0.0) or np.any(batch > 1.0))
        if clamped:
            batch = np.clip(batch, 0.0, 1.0)
            spb_common.log(logger=logger,
                           level=WARNING,
                           msg="Hash grid input outside the unit cube, clamped")
        values, _ = _hash_values(x=batch,
                                 cfg=cfg)
        result = EncodedFeatures(values=values[0] if single else values,
                                 layout="per level ascending, F features each",
                                 clamped=clamped)
    return result


def hash_backward(cfg: HashGridConfig,
                  cache: list[tuple[NDArray, NDArray]],
                  grad_features: NDArray) -> NDArray:

    result: NDArray = np.zeros_like(cfg.tables)
    width: int = cfg.features_per_entry
    for level, (indices, weights) in enumerate(cache):
        grad: NDArray = grad_features[:, level * width:(level + 1) * width]
        for corner in range(indices.shape[1]):
            # colliding corners accumulate
            np.add.at(result[level], indices[:, corner], weights[:, corner, None] * grad)
    return result


def encoder_output_dim(spec: EncoderSpec,
                       input_dim: int) -> int:

    params: dict = spec.params
    match spec.kind:
        case "pe" | "spe" | "spe-diagonal":
            return 2 * int(params.get("L", 8)) * input_dim
        case "grff":
            return 2 * int(params.get("L", 64))
        case "ape":
            return 2 * int(params.get("K", 8)) * input_dim
        case "hash":
            return int(params.get("levels", 8)) * int(params.get("features", 2))
    return input_dim


def build_encoder(errors: list[str],
                  spec: EncoderSpec,
                  input_dim: int,
                  logger: Logger = None) -> EncoderState | None:

    # initialize the return variable
    result: EncoderState | None = None

    if spec.kind not in ENCODER_KINDS:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, spec.kind,
                                            f"must be one of {','.join(ENCODER_KINDS)}", "@encoder.kind"))
        return result

    params: dict = spec.params
    seed: int = int(params.get("seed", 0))
    result = EncoderState(spec=spec,
                          input_dim=input_dim,
                          output_dim=encoder_output_dim(spec=spec,
                                                        input_dim=input_dim))
    match spec.kind:
        case "pe" | "spe":
            # dense SPE lives in the network's first activation
            result.pe = PeConfig(L=int(params.get("L", 8)),
                                 p=float(params.get("p", 0.0)),
                                 input_dim=input_dim)
        case "spe-diagonal":
            result.pe = PeConfig(L=int(params.get("L", 8)),
                                 p=float(params.get("p", 0.0)),
                                 input_dim=input_dim)
            # unit weights and zero phase: the layer starts as sin(PE(x))
            result.spe = SpeLayerParams(mode="diagonal",
                                        W=np.ones(result.pe.output_dim),
                                        phase=np.zeros(result.pe.output_dim),
                                        inner_pe=result.pe)
        case "grff":
            result.grff = build_grff(L=int(params.get("L", 64)),
                                     sigma=float(params.get("sigma", 10.0)),
                                     seed=seed,
                                     input_dim=input_dim)
        case "ape":
            # start on the PE frequency ladder
            K: int = int(params.get("K", 8))
            result.ape = ApeParams(omegas=np.pi * 2.0 ** np.arange(K, dtype=np.float64),
                                   input_dim=input_dim)
        case "hash":
            if input_dim > 3:
                # 142: Invalid value {}: {}
                errors.append(validate_format_error(142, input_dim,
                                                    "hash grid supports up to 3 dimensions", "@input-dim"))
                return None
            result.hash_grid = build_hash_grid(input_dim=input_dim,
                                               levels=int(params.get("levels", 8)),
                                               table_size=int(params.get("table-size", 4096)),
                                               features_per_entry=int(params.get("features", 2)),
                                               base_resolution=int(params.get("base-resolution", 4)),
                                               growth_factor=float(params.get("growth-factor", 1.5)),
                                               seed=seed)
    spb_common.log(logger=logger,
                   level=DEBUG,
                   msg=f"Built encoder {spec.label()}, {input_dim} -> {result.output_dim} features")
    return result


def encoder_trainables(state: EncoderState) -> dict[str, NDArray]:
    """
    Live references to the encoder's trainable arrays, keyed by name.

    Optimizers update these arrays in place.
    """
    result: dict[str, NDArray] = {}
    if state.ape is not None:
        result["omegas"] = state.ape.omegas
    if state.spe is not None:
        result["spe-W"] = state.spe.W
        result["spe-phase"] = state.spe.phase
    if state.hash_grid is not None:
        result["tables"] = state.hash_grid.tables
    return result


def encode(state: EncoderState,
           coords: NDArray) -> tuple[NDArray, Any]:
    """
    Encode a batch of [0,1]^d coordinates.

    Sinusoidal families see the coordinates mapped to [-1,1]; the hash grid sees them as given.

    :param state: the encoder
    :param coords: (N, d) coordinates in [0,1]
    :return: the (N, D) features and the cache needed by *encode_backward*
    """
    cache: Any = None
    match state.spec.kind:
        case "pe" | "spe":
            values = pe_values(x=to_signed(coords),
                               cfg=state.pe)
        case "spe-diagonal":
            cache = pe_values(x=to_signed(coords),
                              cfg=state.pe)
            values = np.sin(_spe_pre(features=cache,
                                     params=state.spe))
        case "grff":
            values = _grff_values(x=to_signed(coords),
                                  cfg=state.grff)
        case "ape":
            cache = to_signed(coords)
            values = _ape_values(x=cache,
                                 params=state.ape)
        case "hash":
            values, cache = _hash_values(x=np.clip(coords, 0.0, 1.0),
                                         cfg=state.hash_grid)
        case _:
            values = to_signed(coords)
    return values, cache


def encode_backward(state: EncoderState,
                    cache: Any,
                    grad_features: NDArray) -> dict[str, NDArray]:

    result: dict[str, NDArray] = {}
    match state.spec.kind:
        case "spe-diagonal":
            grad_w, grad_phase, _ = spe_apply_backward(params=state.spe,
                                                       features=cache,
                                                       grad_out=grad_features)
            result["spe-W"] = grad_w
            result["spe-phase"] = grad_phase
        case "ape":
            result["omegas"] = ape_backward(params=state.ape,
                                            x=cache,
                                            grad_features=grad_features)
        case "hash":
            result["tables"] = hash_backward(cfg=state.hash_grid,
                                             cache=cache,
                                             grad_features=grad_features)
    return result
