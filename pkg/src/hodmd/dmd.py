"""Higher-order DMD: fit, rank selection, prediction and model files.

The fit follows the exact-DMD recipe on a delay-embedded snapshot pair:

1. thin SVD ``S1 = U S V^T``, truncated to rank ``r``
2. reduced operator ``Lt = U_r^T S2 V_r S_r^-1`` and its eigen-decomposition
3. exact modes ``Phi = S2 V_r S_r^-1 W``
4. continuous exponents ``omega = ln(lambda) / dt``
5. amplitudes ``b = pinv(Phi) y0_aug`` (first embedded column)

and predicts ``y(t) = Phi exp(omega (t - t0)) b``, reading the delay-0 block.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numkern
from .errors import (
    DegenerateSpectrum,
    GrowthOverflow,
    HodmdWarning,
    IllConditionedTruncation,
    InvalidInput,
    InvalidRank,
    ParseError,
    UnsupportedModelVersion,
)
from .snapshots import EmbeddedPair, SnapshotSet, make_pair

MODEL_VERSION = 1
LAMBDA_FLOOR = 1e-12
ILL_CONDITIONED_RATIO = 1e-14
DEFAULT_THRESHOLD = 0.999
# exp() overflows float64 just above 709.78
_MAX_EXPONENT = 709.0


@dataclass(frozen=True)
class RankSelection:
    r: int
    sigma: np.ndarray
    energy_ratio: float
    threshold: float
    power: int = 1

    def as_dict(self) -> dict:
        return {
            "r": self.r,
            "energy_ratio": self.energy_ratio,
            "threshold": self.threshold,
            "power": self.power,
            "sigma": self.sigma.tolist(),
        }


def select_rank(sigma, threshold: float = DEFAULT_THRESHOLD, power: int = 1) -> RankSelection:
    """Smallest ``r`` whose leading singular values hold ``threshold`` of the total.

    With the default ``power=1`` the plain singular values are summed; ``power=2``
    gives the usual squared-energy criterion.
    """
    sig = np.asarray(sigma, dtype=float)
    if sig.ndim != 1 or sig.size == 0:
        raise InvalidInput("sigma must be a non-empty vector")
    if np.any(sig < 0) or not np.all(np.isfinite(sig)):
        raise InvalidInput("sigma must be finite and nonnegative")
    if np.any(np.diff(sig) > 1e-12 * sig[0]):
        raise InvalidInput("sigma must be nonincreasing")
    if not 0 < threshold <= 1:
        raise InvalidInput(f"threshold must be in (0, 1], got {threshold}")
    if power not in (1, 2):
        raise InvalidInput(f"energy power must be 1 or 2, got {power}")
    energy = sig**power
    total = energy.sum()
    if total <= 0:
        raise DegenerateSpectrum("all singular values are zero")
    cum = np.cumsum(energy) / total
    # tolerate round-off in the cumulative sum, e.g. 9.99 / 10.000000000000002
    r = int(np.searchsorted(cum, threshold - 1e-12)) + 1
    r = min(r, sig.size)
    return RankSelection(r=r, sigma=sig, energy_ratio=float(cum[r - 1]),
                         threshold=float(threshold), power=power)


@dataclass(frozen=True)
class HodmdModel:
    """Fitted reduced model; ``phi`` has ``s * p`` rows and ``r`` columns."""

    r: int
    s: int
    p: int
    dt: float
    phi: np.ndarray
    lam: np.ndarray
    omega: np.ndarray
    b: np.ndarray
    t0: float = 0.0
    ports: tuple[str, ...] = ()
    offset: np.ndarray | None = None
    residual: float | None = None
    rank_selection: RankSelection | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.phi.shape != (self.s * self.p, self.r):
            raise InvalidInput(f"phi shape {self.phi.shape} != ({self.s * self.p}, {self.r})")
        for name in ("lam", "omega", "b"):
            if getattr(self, name).shape != (self.r,):
                raise InvalidInput(f"{name} must have length r={self.r}")

    def delay_block(self, i: int = 0) -> np.ndarray:
        return self.phi[i * self.p:(i + 1) * self.p]


def _amplitudes_first(phi: np.ndarray, pair: EmbeddedPair, rcond: float) -> np.ndarray:
    return numkern.pinv_apply(phi, pair.s1[:, 0], rcond=rcond)


def _amplitudes_all(phi: np.ndarray, lam: np.ndarray, pair: EmbeddedPair) -> np.ndarray:
    # least squares of Phi diag(b) V = S1 over every training column, solved
    # through the r x r normal equations to avoid the (rows*cols) x r stack
    n = pair.n_cols
    vander = lam[:, None] ** np.arange(n)[None, :]
    gram = (phi.conj().T @ phi) * np.conj(vander @ vander.conj().T)
    rhs = np.sum(np.conj(vander) * (phi.conj().T @ pair.s1), axis=1)
    b, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    return b


def fit(
    pair: EmbeddedPair,
    rank: int | None = None,
    *,
    threshold: float = DEFAULT_THRESHOLD,
    energy_power: int = 1,
    amplitudes: str = "first",
    on_ill_conditioned: str = "warn",
    lambda_floor: float = LAMBDA_FLOOR,
    rcond: float = numkern.DEFAULT_RCOND,
) -> HodmdModel:
    """Fit a (higher-order) DMD model to an embedded snapshot pair.

    ``rank=None`` applies the energy rule with ``threshold``; an explicit rank
    always wins. ``amplitudes="all"`` fits ``b`` to every training column
    instead of the first one only.
    """
    if amplitudes not in ("first", "all"):
        raise InvalidInput(f"amplitudes must be 'first' or 'all', got {amplitudes!r}")
    if on_ill_conditioned not in ("warn", "raise"):
        raise InvalidInput("on_ill_conditioned must be 'warn' or 'raise'")

    dec = numkern.svd(pair.s1)
    k = dec.k
    if rank is None:
        selection = select_rank(dec.sigma, threshold, energy_power)
        r = selection.r
    else:
        if isinstance(rank, bool) or int(rank) != rank or rank < 1 or rank > k:
            raise InvalidRank(
                f"rank {rank} outside [1, {k}] for a {pair.s1.shape[0]}x{pair.s1.shape[1]} matrix"
            )
        r = int(rank)
        total = dec.sigma.sum()
        ratio = float(dec.sigma[:r].sum() / total) if total > 0 else 0.0
        selection = RankSelection(r, dec.sigma, ratio, float("nan"), energy_power)

    sig_r = dec.sigma[:r]
    if sig_r[-1] <= 0 or not np.isfinite(sig_r[-1]):
        raise IllConditionedTruncation(f"singular value {r} is zero; lower the rank")
    if sig_r[-1] < ILL_CONDITIONED_RATIO * sig_r[0]:
        msg = (f"sigma_{r}/sigma_1 = {sig_r[-1] / sig_r[0]:.3g} is below "
               f"{ILL_CONDITIONED_RATIO:g}; truncation is ill-conditioned")
        if on_ill_conditioned == "raise":
            raise IllConditionedTruncation(msg)
        warnings.warn(msg, HodmdWarning, stacklevel=2)

    u_r = dec.u[:, :r]
    v_r = dec.vt[:r].T
    s2_v = (pair.s2 @ v_r) / sig_r
    l_tilde = u_r.T @ s2_v
    lam, w = numkern.eig(l_tilde)
    phi = s2_v @ w

    keep = np.abs(lam) > lambda_floor
    if not np.all(keep):
        warnings.warn(
            f"dropping {int((~keep).sum())} eigenvalue(s) with |lambda| <= {lambda_floor:g}",
            HodmdWarning, stacklevel=2,
        )
        lam, phi = lam[keep], phi[:, keep]
        if lam.size == 0:
            raise DegenerateSpectrum("no eigenvalue above the modulus floor")
    omega = np.log(lam) / pair.dt

    if amplitudes == "first":
        b = _amplitudes_first(phi, pair, rcond)
    else:
        b = _amplitudes_all(phi, lam, pair)

    s2_norm = np.linalg.norm(pair.s2)
    resid = np.linalg.norm(pair.s2 - (pair.s2 @ v_r) @ v_r.T)
    residual = float(resid / s2_norm) if s2_norm > 0 else 0.0

    return HodmdModel(
        r=lam.size, s=pair.s, p=pair.p, dt=pair.dt, phi=phi, lam=lam, omega=omega,
        b=b, t0=pair.t0, ports=tuple(pair.ports) or tuple(f"y{i}" for i in range(pair.p)),
        residual=residual, rank_selection=selection,
    )


def fit_plain_dmd(snapshots: SnapshotSet, rank: int | None = None, **kwargs) -> HodmdModel:
    """Standard DMD (no delays). An explicit rank is capped at ``min(p, q)``."""
    pair = make_pair(snapshots)
    if rank is not None:
        rank = min(int(rank), min(pair.s1.shape))
    return fit(pair, rank, **kwargs)


def _mode_matrix(model: HodmdModel, deembed: str) -> np.ndarray:
    if deembed == "first":
        return model.delay_block(0)
    if deembed == "average":
        # block i sees y(t + i dt); undo the shift with lambda^-i before averaging
        acc = np.zeros((model.p, model.r), dtype=complex)
        for i in range(model.s):
            acc += model.delay_block(i) * model.lam ** (-i)
        return acc / model.s
    raise InvalidInput(f"deembed must be 'first' or 'average', got {deembed!r}")


def predict(
    model: HodmdModel,
    times,
    *,
    deembed: str = "first",
    with_imag: bool = False,
):
    """Evaluate ``Re(Phi exp(omega (t - t0)) b)`` for the physical ports.

    Returns a ``(p, len(times))`` array, or ``(values, max_imag)`` when
    ``with_imag`` is set. Raises :class:`GrowthOverflow` when a growing mode
    would overflow.
    """
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.ndim != 1 or not np.all(np.isfinite(t)):
        raise InvalidInput("times must be a finite 1-D vector")
    tau = t - model.t0
    growth = np.outer(model.omega.real, tau) + np.log(np.abs(model.b) + 1e-300)[:, None]
    if growth.size and growth.max() > _MAX_EXPONENT:
        mode = int(np.unravel_index(np.argmax(growth), growth.shape)[0])
        raise GrowthOverflow(
            f"mode {mode} (omega={model.omega[mode]:.6g}) overflows at "
            f"t={t[np.argmax(growth[mode])]:.6g}",
            mode=mode,
        )
    modes = _mode_matrix(model, deembed)
    dyn = model.b[:, None] * np.exp(np.outer(model.omega, tau))
    y = modes @ dyn
    if model.offset is not None:
        y = y + model.offset[:, None]
    values = y.real
    if not np.all(np.isfinite(values)):
        raise GrowthOverflow("prediction is not finite")
    if with_imag:
        return values, float(np.max(np.abs(y.imag))) if y.size else 0.0
    return values


def predict_steps(model: HodmdModel, n: int, **kwargs):
    """Prediction on the model's own grid ``t0 + dt * arange(n)``."""
    return predict(model, model.t0 + model.dt * np.arange(n), **kwargs)


def _cplx(a) -> dict:
    a = np.asarray(a, dtype=complex)
    return {"re": a.real.tolist(), "im": a.imag.tolist()}


def _uncplx(d, name: str) -> np.ndarray:
    try:
        return np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"model field {name!r} is malformed") from exc


def model_to_dict(model: HodmdModel, config: dict | None = None) -> dict:
    out = {
        "version": MODEL_VERSION,
        "r": model.r,
        "s": model.s,
        "p": model.p,
        "dt": model.dt,
        "t0": model.t0,
        "ports": list(model.ports),
        "phi": _cplx(model.phi),
        "lambda": _cplx(model.lam),
        "omega": _cplx(model.omega),
        "b": _cplx(model.b),
    }
    if model.offset is not None:
        out["offset"] = np.asarray(model.offset, dtype=float).tolist()
    if model.residual is not None:
        out["residual"] = model.residual
    if model.rank_selection is not None:
        sel = model.rank_selection
        out["rank_selection"] = {
            "r": sel.r, "energy_ratio": sel.energy_ratio,
            "threshold": None if math.isnan(sel.threshold) else sel.threshold,
            "power": sel.power,
        }
    if config is not None:
        out["config"] = config
    return out


def model_from_dict(d: dict) -> HodmdModel:
    if not isinstance(d, dict) or d.get("version") != MODEL_VERSION:
        got = d.get("version") if isinstance(d, dict) else None
        raise UnsupportedModelVersion(f"model version {got!r}, expected {MODEL_VERSION}")
    try:
        r, s, p = int(d["r"]), int(d["s"]), int(d["p"])
        phi = _uncplx(d["phi"], "phi").reshape(s * p, r)
        offset = d.get("offset")
        return HodmdModel(
            r=r, s=s, p=p, dt=float(d["dt"]), t0=float(d["t0"]),
            ports=tuple(d["ports"]), phi=phi,
            lam=_uncplx(d["lambda"], "lambda"), omega=_uncplx(d["omega"], "omega"),
            b=_uncplx(d["b"], "b"),
            offset=None if offset is None else np.asarray(offset, dtype=float),
            residual=d.get("residual"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"model file is incomplete: {exc}") from exc


def save_model(model: HodmdModel, path, config: dict | None = None) -> None:
    """Write the model as versioned JSON; floats keep full precision."""
    text = json.dumps(model_to_dict(model, config), indent=1, sort_keys=True)
    Path(path).write_text(text + "\n")


def load_model(path) -> HodmdModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(d)


def mode_table(model: HodmdModel) -> list[dict]:
    """Per-mode summary (growth rate, frequency, amplitude) for reports."""
    rows = []
    norms = np.linalg.norm(model.delay_block(0), axis=0)
    for i in range(model.r):
        rows.append({
            "lambda_abs": float(abs(model.lam[i])),
            "growth": float(model.omega[i].real),
            "freq_hz": float(model.omega[i].imag / (2 * math.pi)),
            "amplitude": float(abs(model.b[i]) * norms[i]),
        })
    return rows


def with_offset(model: HodmdModel, offset: Sequence[float] | None) -> HodmdModel:
    from dataclasses import replace
    return replace(model, offset=None if offset is None else np.asarray(offset, dtype=float))
