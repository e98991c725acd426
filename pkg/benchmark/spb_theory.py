import math
import numpy as np
from logging import Logger, INFO, WARNING
from numpy.typing import NDArray
from pypomes_core import validate_format_error
from typing import Any, NamedTuple

from benchmark import spb_common
from benchmark.spb_encoders import (
    PeConfig, SpeLayerParams, GrffConfig, build_grff, spe_apply, pe_values
)


class SpectrumEntry(NamedTuple):
    component: int
    octave: int
    omega_star: float


def _bracket(omega_a: float,
             L: int) -> tuple[int, int]:
    # beta_1 = floor(log2(w/pi)), beta_0 = ceil(log2(w/pi)), corrected for rounding
    ratio: float = omega_a / math.pi
    beta_1: int = math.floor(math.log2(ratio))
    while 2.0 ** beta_1 * math.pi > omega_a:
        beta_1 -= 1
    while 2.0 ** (beta_1 + 1) * math.pi <= omega_a:
        beta_1 += 1
    beta_0: int = beta_1 if 2.0 ** beta_1 * math.pi == omega_a else beta_1 + 1
    return beta_0, min(beta_1, L - 1)


def delta_pe(errors: list[str],
             omega_a: float,
             L: int) -> float | None:
    """
    Distance from *omega_a* to the nearest hardcoded PE frequency in {pi, 2pi, ..., 2^(L-1)pi}.

    Frequencies below pi are measured against pi, those at or above 2^(L-1)pi against
    2^(L-1)pi, and the rest against the two octaves bracketing them.

    :param errors: incidental errors
    :param omega_a: the target frequency (> 0)
    :param L: the octave count
    :return: the distance, or *None* on error
    """
    # initialize the return variable
    result: float | None = None

    if not (omega_a > 0.0) or not math.isfinite(omega_a):
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, omega_a, "must be positive", "@omega_a"))
    elif L < 1:
        # 151: Invalid value {}: must be in the range {}
        errors.append(validate_format_error(151, L, [1, "inf"], "@L"))
    else:
        top: float = 2.0 ** (L - 1) * math.pi
        if omega_a >= top:
            result = omega_a - top
        elif omega_a <= math.pi:
            result = math.pi - omega_a
        else:
            beta_0, beta_1 = _bracket(omega_a=omega_a,
                                      L=L)
            result = min(2.0 ** beta_0 * math.pi - omega_a, omega_a - 2.0 ** beta_1 * math.pi)

    return result


def delta_pe_bruteforce(omega_a: float,
                        L: int) -> float:

    return min(abs(omega_a - 2.0 ** k * math.pi) for k in range(L))


def component_octave(component: int,
                     cfg: PeConfig) -> int:
    """
    The 1-indexed octave of a PE feature column, per the canonical feature layout.
    """
    return (component % (2 * cfg.L)) // 2 + 1


def learned_spectrum(W: NDArray,
                     cfg: PeConfig) -> list[SpectrumEntry]:
    """
    Effective frequencies w* = |w| * 2^(l-1) of an SPE first layer, sorted by magnitude.

    A 1-D *W* holds diagonal weights, one per PE component; for a 2-D (dense) *W*, each row
    contributes its largest-magnitude column, which also determines its octave.

    :param W: the SPE weights
    :param cfg: the PE feeding the layer
    :return: the spectrum entries, descending by w*
    """
    W = np.asarray(W, dtype=np.float64)
    entries: list[SpectrumEntry] = []
    if W.ndim == 1:
        for component, omega in enumerate(W):
            octave: int = component_octave(component=component,
                                           cfg=cfg)
            entries.append(SpectrumEntry(component, octave, abs(float(omega)) * 2.0 ** (octave - 1)))
    else:
        for row in range(W.shape[0]):
            column: int = int(np.argmax(np.abs(W[row])))
            octave: int = component_octave(component=column,
                                           cfg=cfg)
            entries.append(SpectrumEntry(row, octave, abs(float(W[row, column])) * 2.0 ** (octave - 1)))

    return sorted(entries, key=lambda entry: -entry.omega_star)


def ape_spectrum(omegas: NDArray) -> list[SpectrumEntry]:
    """
    APE frequencies expressed in the same multiples of pi as the SPE spectrum.
    """
    entries: list[SpectrumEntry] = []
    for component, omega in enumerate(np.asarray(omegas, dtype=np.float64)):
        omega_star: float = abs(float(omega)) / math.pi
        octave: int = max(1, math.floor(math.log2(omega_star)) + 1) if omega_star > 0 else 1
        entries.append(SpectrumEntry(component, octave, omega_star))
    return sorted(entries, key=lambda entry: -entry.omega_star)


def spectrum_energy_fraction(spectrum: list[SpectrumEntry],
                             max_octave: int) -> float:

    total: float = sum(entry.omega_star ** 2 for entry in spectrum)
    if total == 0.0:
        return 1.0
    inside: float = sum(entry.omega_star ** 2 for entry in spectrum if entry.octave <= max_octave)
    return inside / total


def sinusoid_gates(t: Any,
                   tolerance: float = math.pi / 8) -> tuple[NDArray, NDArray]:
    """
    The omega-agnostic gates selecting which PE component carries a sinusoid near *t*.

    Near t = n*pi the sine component vanishes with slope +-1 and is selected (I=1, S=0);
    near t = (n+1/2)*pi the cosine component is (I=0, S=1). Elsewhere both gates are 0.

    :param t: the PE phase argument(s)
    :param tolerance: half-width of the selection window
    :return: the I and S indicators
    """
    t = np.asarray(t, dtype=np.float64)
    half_periods: NDArray = np.rint(2.0 * t / np.pi)
    near: NDArray = np.abs(t - half_periods * np.pi / 2.0) <= tolerance
    even: NDArray = np.mod(half_periods, 2) == 0
    return (near & even).astype(np.float64), (near & ~even).astype(np.float64)


def gated_approximation_error(omega: float,
                              x_grid: Any,
                              L: int) -> float:
    """
    Worst error of the gated top-octave approximation of sin(omega * pi * x) on *x_grid*.

    Each point x is written as n/2^L + eps, with n/2^L the nearest anchor. The I/S gates pick the
    highest-octave PE component that vanishes at the anchor; sign-aligned, that component is
    sin(2^(L-1) * pi * eps), and it stands in for the offset eps. The approximation is thus
    sin(omega * pi * n/2^L + omega * component / 2^(L-1)), and its error is bounded by
    omega * (pi/4 - sin(pi/4)) / 2^(L-1).

    :param omega: the frequency feature
    :param x_grid: sample points in [-1,1]
    :param L: the octave count
    :return: the max absolute error over the grid (0 for an empty grid)
    """
    x: NDArray = np.asarray(x_grid, dtype=np.float64)
    if x.size == 0:
        return 0.0

    t: NDArray = 2.0 ** (L - 1) * np.pi * x
    # every t lies within pi/4 of its nearest anchor n*pi/2
    gate_i, gate_s = sinusoid_gates(t=t,
                                    tolerance=np.pi / 2.0)
    n: NDArray = np.rint(2.0 * t / np.pi)
    # (-1)^k with k the whole half-turn count of the anchor
    k: NDArray = np.floor(n / 2.0)
    sign: NDArray = np.where(np.mod(k, 2) == 0, 1.0, -1.0)
    component: NDArray = sign * (gate_i * np.sin(t) - gate_s * np.cos(t))
    approx: NDArray = np.sin(omega * np.pi * n / 2.0 ** L + omega * component / 2.0 ** (L - 1))
    target: NDArray = np.sin(omega * np.pi * x)
    return float(np.max(np.abs(approx - target)))


def dyadic_grid(resolution_bits: int = 16) -> NDArray:
    """
    Uniform grid on [-1,1] with spacing 2^-resolution_bits.
    """
    steps: int = 2 ** resolution_bits
    return np.arange(-steps, steps + 1, dtype=np.float64) / steps


def sawtooth_s_function(errors: list[str],
                        omega: float,
                        n: int,
                        t: float) -> float | None:
    """
    The omega-dependent corrective function a periodic-linear activation would need.

    S(t) = sin(omega*t) / (sqrt(omega^2 - (2n*pi)^2) mod 2*pi)

    :return: the value of S(t), or *None* when the branch is undefined or degenerate
    """
    result: float | None = None

    radicand: float = omega ** 2 - (2.0 * n * math.pi) ** 2
    if radicand <= 0.0:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, omega,
                                            f"requires omega^2 > (2n*pi)^2 for n={n}", "@omega"))
    else:
        denominator: float = math.sqrt(radicand) % (2.0 * math.pi)
        # the modulus wraps, so values near 2*pi are as degenerate as values near 0
        if min(denominator, 2.0 * math.pi - denominator) < 1e-9:
            # 101: {}
            errors.append(validate_format_error(101,
                                                f"degenerate denominator for omega={omega}, n={n}"))
        else:
            result = math.sin(omega * t) / denominator

    return result


def grff_as_sine_layer(cfg: GrffConfig) -> tuple[NDArray, NDArray]:
    """
    Random Fourier features written as a single sine layer sin(Cx + phi).

    With C = (B, B)^T and phi = (pi/2, ..., pi/2, 0, ..., 0), the layer yields [cos(Bx), sin(Bx)].

    :return: the weight *C* and bias *phi*
    """
    C: NDArray = np.concatenate([cfg.B, cfg.B], axis=0)
    phi: NDArray = np.concatenate([np.full(cfg.L, np.pi / 2.0), np.zeros(cfg.L)])
    return C, phi


def _check(name: str,
           worst: float,
           tolerance: float,
           passed: bool = None) -> dict:

    return {
        "name": name,
        "passed": bool(worst <= tolerance) if passed is None else passed,
        "worst-error": float(worst),
        "tolerance": tolerance
    }


def run_theory_checks(seed: int = 0,
                      logger: Logger = None) -> list[dict]:
    """
    Evaluate the encoding-level identities and properties over their parameter grids.

    :param seed: seed for the random draws
    :param logger: optional logger
    :return: one entry per check, with name, pass flag, worst error and tolerance
    """
    rng: np.random.Generator = np.random.default_rng(seed)
    checks: list[dict] = []

    # PE periodicity: every frequency 2^l*pi has a period dividing 2
    cfg: PeConfig = PeConfig(L=6, p=0.0, input_dim=1)
    x: NDArray = rng.uniform(-1.0, 1.0, size=(1000, 1))
    worst: float = float(np.max(np.abs(pe_values(x, cfg) - pe_values(x + 2.0, cfg))))
    checks.append(_check("pe-periodicity", worst, 1e-10))

    # PE amplitude bounds under falloff
    cfg = PeConfig(L=8, p=0.5, input_dim=2)
    values: NDArray = pe_values(rng.uniform(-1.0, 1.0, size=(1000, 2)), cfg)
    bounds: NDArray = np.tile(np.repeat(cfg.amplitudes(), 2), 2)
    checks.append(_check("pe-amplitude-bounds", float(np.max(np.abs(values) - bounds)), 0.0))

    # SPE output stays in [-1,1] whatever the weight magnitude
    cfg = PeConfig(L=6, input_dim=1)
    features: NDArray = pe_values(rng.uniform(-1.0, 1.0, size=(1000, 1)), cfg)
    dense: SpeLayerParams = SpeLayerParams(mode="dense",
                                           W=rng.normal(0.0, 1e3, size=(32, cfg.output_dim)),
                                           phase=rng.normal(0.0, 1e3, size=32),
                                           inner_pe=cfg)
    op_errors: list[str] = []
    out: NDArray = spe_apply(op_errors, features, dense)
    checks.append(_check("spe-bounded", float(np.max(np.abs(out))) - 1.0, 0.0))

    # small-weight SPE reduces to scaled PE
    epsilon: float = 1e-6
    diagonal: SpeLayerParams = SpeLayerParams(mode="diagonal",
                                              W=np.full(cfg.output_dim, epsilon),
                                              phase=np.zeros(cfg.output_dim),
                                              inner_pe=cfg)
    out = spe_apply(op_errors, features, diagonal)
    mask: NDArray = np.abs(features) > 1e-3
    ratio: NDArray = out[mask] / (epsilon * features[mask])
    checks.append(_check("spe-reduces-to-pe", float(np.max(np.abs(ratio - 1.0))), 1e-9))

    # gated approximation error shrinks by at least a quarter per octave (integer omega, dyadic grid)
    grid: NDArray = dyadic_grid()
    worst = 0.0
    for omega in range(1, 9):
        errs: list[float] = [gated_approximation_error(omega, grid, L) for L in range(4, 13)]
        worst = max(worst, max(later - 0.75 * earlier for earlier, later in zip(errs, errs[1:])))
    checks.append(_check("approximation-monotone-in-L", max(worst, 0.0), 1e-9))

    # the gated approximation is exact at the anchors n/2^L
    worst = 0.0
    for L in (4, 8, 12):
        anchors: NDArray = np.arange(-2 ** L, 2 ** L + 1, dtype=np.float64) / 2 ** L
        worst = max(worst, max(gated_approximation_error(omega, anchors, L) for omega in range(1, 9)))
    checks.append(_check("approximation-exact-at-anchors", worst, 1e-9))

    # the search bound matches a brute-force nearest-feature search
    L: int = 8
    draws: NDArray = rng.uniform(0.0, 2.0 ** (L + 1) * math.pi, size=1000)
    mismatches: int = sum(1 for omega_a in draws if omega_a > 0.0 and
                          delta_pe(op_errors, float(omega_a), L) != delta_pe_bruteforce(float(omega_a), L))
    checks.append(_check("delta-pe-bruteforce", float(mismatches), 0.0))

    # periodic-linear corrective term depends on omega, the sinusoid gates do not
    s_a: float = sawtooth_s_function(op_errors, 3.0 * math.pi, 1, 0.3)
    s_b: float = sawtooth_s_function(op_errors, 3.5 * math.pi, 1, 0.3)
    ts: NDArray = rng.uniform(-10.0, 10.0, size=100)
    gates_a: tuple = sinusoid_gates(ts)
    gates_b: tuple = sinusoid_gates(ts)
    omega_dependent: bool = s_a is not None and s_b is not None and s_a != s_b
    gates_agnostic: bool = all(np.array_equal(a, b) for a, b in zip(gates_a, gates_b))
    checks.append(_check("sawtooth-omega-dependence", 0.0, 0.0,
                         passed=omega_dependent and gates_agnostic))

    # random Fourier features are a sine layer with C=(B,B)^T and a pi/2 phase
    grff: GrffConfig = build_grff(L=16, sigma=10.0, seed=seed, input_dim=2)
    C, phi = grff_as_sine_layer(grff)
    x = rng.uniform(-1.0, 1.0, size=(200, 2))
    proj: NDArray = x @ grff.B.T
    expected: NDArray = np.concatenate([np.cos(proj), np.sin(proj)], axis=1)
    checks.append(_check("grff-as-sine-layer", float(np.max(np.abs(np.sin(x @ C.T + phi) - expected))), 1e-12))

    for check in checks:
        spb_common.log(logger=logger,
                       level=INFO if check["passed"] else WARNING,
                       msg=f"Theory check {check['name']}: "
                           f"{'pass' if check['passed'] else 'FAIL'}, worst error {check['worst-error']:.3e}")
    return checks
