"""Problem instances, synthetic generators and the instance container format.

Generators draw from ``numpy.random.Generator(PCG64(seed))`` in a fixed
order (U, V, sparse support, sparse values, noise, observation set), so an
instance is a pure function of its parameters and seed.  Gaussian samples
use numpy's ziggurat ``standard_normal``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from lrsd import matio
from lrsd.errors import FormatError, InvalidConfig
from lrsd.linalg import ObservationMask, as_matrix, project_mask

FORMAT_VERSION = 1
RNG_NAME = "numpy.random.PCG64"


@dataclass
class GroundTruth:
    L0: np.ndarray
    S0: np.ndarray
    N0: np.ndarray
    rank_r: int
    support_size_p: int


@dataclass
class Instance:
    """``D`` observed on ``mask``; solve min ||L||_* + xi ||P(S)||_1 s.t. ||L + S - P(D)|| <= delta."""

    D: np.ndarray
    mask: ObservationMask
    delta: float = 0.0
    xi: Optional[float] = None
    rho_noise: Optional[float] = None
    ground_truth: Optional[GroundTruth] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.D = as_matrix(self.D, "D")
        if self.mask.shape != self.D.shape:
            raise InvalidConfig(f"mask shape {self.mask.shape} != data shape {self.D.shape}")
        if self.xi is None:
            self.xi = 1.0 / math.sqrt(max(self.D.shape))
        if not self.delta >= 0:
            raise InvalidConfig("delta must be nonnegative")
        if not self.xi > 0:
            raise InvalidConfig("xi must be positive")
        self.delta = float(self.delta)
        self.xi = float(self.xi)

    @property
    def shape(self):
        return self.D.shape

    @cached_property
    def D_obs(self) -> np.ndarray:
        """``P_Omega(D)``: what every solver actually consumes."""
        return project_mask(self.D, self.mask)

    @cached_property
    def instance_id(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.D_obs).tobytes())
        h.update(np.packbits(self.mask.array).tobytes())
        h.update(repr((self.D.shape, self.delta, self.xi)).encode())
        return h.hexdigest()[:16]

    @classmethod
    def from_matrix(cls, D, mask=None, delta=0.0, xi=None, **kw) -> "Instance":
        D = as_matrix(D, "D")
        return cls(D, mask if mask is not None else ObservationMask.full(D.shape), delta, xi, **kw)


def _nearest(x: float) -> int:
    return max(1, int(math.floor(x + 0.5)))


def _check_fraction(name, v, closed_right=False):
    ok = 0 < v <= 1 if closed_right else 0 < v < 1
    if not ok:
        raise InvalidConfig(f"{name}={v} outside its domain")


def _low_rank_sparse(rng, m, n, c_r, c_p):
    _check_fraction("c_r", c_r)
    _check_fraction("c_p", c_p)
    if c_r * min(m, n) < 1 or c_p * m * n < 1:
        raise InvalidConfig("c_r * n and c_p * n^2 must both be at least 1")
    r = _nearest(c_r * min(m, n))
    p = _nearest(c_p * m * n)
    U = rng.standard_normal((m, r))
    V = rng.standard_normal((n, r))
    L0 = U @ V.T
    support = rng.choice(m * n, size=p, replace=False)
    # uniform on +-sqrt(8r/pi) gives E|S_ij| = sqrt(2r/pi) = E|L0_ij|
    bound = math.sqrt(8.0 * r / math.pi)
    S0 = np.zeros(m * n)
    S0[support] = rng.uniform(-bound, bound, size=p)
    return L0, S0.reshape(m, n), r, p


def _sample_mask(rng, m, n, sample_ratio):
    if sample_ratio == 1:
        return ObservationMask.full((m, n))
    size = _nearest(sample_ratio * m * n)
    obs = np.zeros(m * n, dtype=bool)
    obs[rng.choice(m * n, size=size, replace=False)] = True
    return ObservationMask(obs.reshape(m, n))


def gen_rpcp_missing(n: int, c_r: float, c_p: float, sample_ratio: float = 1.0,
                     seed: int = 0, m: Optional[int] = None) -> Instance:
    """Random robust PCA instance ``D = L0 + S0`` observed on a uniform random set."""
    m = n if m is None else m
    if n < 1 or m < 1:
        raise InvalidConfig("dimensions must be positive")
    _check_fraction("sample_ratio", sample_ratio, closed_right=True)
    rng = np.random.Generator(np.random.PCG64(seed))
    L0, S0, r, p = _low_rank_sparse(rng, m, n, c_r, c_p)
    mask = _sample_mask(rng, m, n, sample_ratio)
    gt = GroundTruth(L0, S0, np.zeros((m, n)), r, p)
    meta = dict(generator="rpcp_missing", n=n, m=m, c_r=c_r, c_p=c_p,
                sample_ratio=sample_ratio, seed=seed, rng=RNG_NAME, numpy=np.__version__)
    return Instance(L0 + S0, mask, 0.0, 1.0 / math.sqrt(max(m, n)), None, gt, meta)


def signal_power(n: int, c_r: float, c_p: float) -> float:
    """Per-entry ``E||L0 + S0||_F^2 / n^2`` of the synthetic model."""
    r = _nearest(c_r * n)
    return c_r * n + c_p * 8.0 * r / (3.0 * math.pi)


def rho_from_snr(n: int, c_r: float, c_p: float, snr_db: float) -> float:
    """Noise standard deviation giving the requested SNR (dB) for the synthetic model."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    if not math.isfinite(snr_db):
        raise InvalidConfig("snr_db must be finite or +inf")
    return math.sqrt(signal_power(n, c_r, c_p) / 10.0 ** (snr_db / 10.0))


def snr_from_rho(n: int, c_r: float, c_p: float, rho: float) -> float:
    if rho == 0:
        return math.inf
    return 10.0 * math.log10(signal_power(n, c_r, c_p) / rho**2)


def delta_for_noise(rho: float, m: int, n: int, rule: str = "columns") -> float:
    """Constraint radius for Gaussian noise of standard deviation `rho`.

    ``"columns"``: ``sqrt(n + sqrt(8 n)) rho`` with n the column count.
    ``"entries"``: ``sqrt(N + sqrt(8 N)) rho`` with N = m n entries, i.e.
    the mean plus two standard deviations of ``||N0||_F^2``.
    """
    if rule == "columns":
        k = n
    elif rule == "entries":
        k = m * n
    else:
        raise InvalidConfig(f"unknown delta rule {rule!r}")
    return math.sqrt(k + math.sqrt(8.0 * k)) * rho


def gen_spcp(n: int, c_r: float, c_p: float, snr_db: float, seed: int = 0,
             m: Optional[int] = None, delta_rule: str = "columns") -> Instance:
    """Random stable PCA instance ``D = L0 + S0 + N0`` with full observation."""
    m = n if m is None else m
    if n < 1 or m < 1:
        raise InvalidConfig("dimensions must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    L0, S0, r, p = _low_rank_sparse(rng, m, n, c_r, c_p)
    rho = rho_from_snr(n, c_r, c_p, snr_db)
    N0 = rho * rng.standard_normal((m, n)) if rho > 0 else np.zeros((m, n))
    delta = delta_for_noise(rho, m, n, delta_rule)
    gt = GroundTruth(L0, S0, N0, r, p)
    meta = dict(generator="spcp", n=n, m=m, c_r=c_r, c_p=c_p, snr_db=snr_db, seed=seed,
                delta_rule=delta_rule, rng=RNG_NAME, numpy=np.__version__)
    return Instance(L0 + S0 + N0, ObservationMask.full((m, n)), delta,
                    1.0 / math.sqrt(max(m, n)), rho if rho > 0 else None, gt, meta)


def generate(kind: str, **params) -> Instance:
    if kind in ("rpcp", "rpcp_missing"):
        return gen_rpcp_missing(**params)
    if kind == "spcp":
        return gen_spcp(**params)
    raise InvalidConfig(f"unknown generator {kind!r}")


# -- container --------------------------------------------------------------

def _json_float(x):
    if x is None:
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def save_instance(instance: Instance, path) -> Path:
    """Write `instance` as a directory: manifest.json, LRSD matrices, mask file."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    matio.write_lrsd(path / "D.lrsd", instance.D)
    matio.write_mask(path / "mask.txt", instance.mask)
    manifest = {
        "format_version": FORMAT_VERSION,
        "rows": instance.shape[0],
        "cols": instance.shape[1],
        "xi": instance.xi,
        "delta": instance.delta,
        "rho_noise": instance.rho_noise,
        "instance_id": instance.instance_id,
        "metadata": {k: _json_float(v) if isinstance(v, float) else v
                     for k, v in instance.metadata.items()},
        "ground_truth": None,
    }
    gt = instance.ground_truth
    if gt is not None:
        for name in ("L0", "S0", "N0"):
            matio.write_lrsd(path / f"{name}.lrsd", getattr(gt, name))
        manifest["ground_truth"] = {"rank_r": gt.rank_r, "support_size_p": gt.support_size_p,
                                    "files": ["L0.lrsd", "S0.lrsd", "N0.lrsd"]}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_instance(path) -> Instance:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable manifest ({exc})") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {manifest.get('format_version')}")
    shape = (manifest["rows"], manifest["cols"])
    D = matio.read_lrsd(path / "D.lrsd")
    if D.shape != shape:
        raise FormatError(f"{path}: D shape {D.shape} disagrees with manifest {shape}")
    mask = matio.read_mask(path / "mask.txt", shape)
    gt = None
    if manifest.get("ground_truth"):
        g = manifest["ground_truth"]
        L0, S0, N0 = (matio.read_lrsd(path / f) for f in g["files"])
        gt = GroundTruth(L0, S0, N0, g["rank_r"], g["support_size_p"])
    meta = {k: (float(v) if v in ("inf", "-inf") else v)
            for k, v in manifest.get("metadata", {}).items()}
    return Instance(D, mask, manifest["delta"], manifest["xi"], manifest.get("rho_noise"), gt, meta)
