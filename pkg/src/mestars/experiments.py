"""Monte-Carlo sweep harness, convergence traces, and the gradient audit.

Each sweep point averages the WSR of seeded runs; realization k always
uses the same derived seed regardless of how many realizations are
requested, so prefixes of a larger campaign reproduce a smaller one.
"""

from __future__ import annotations

import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .ao import SCHEMES, run_scheme
from .channel import assemble_cascade, sample_realization
from .config import AlgorithmConfig, SystemConfig, dbm_to_watts
from .position_opt import es_objective, optimize_positions  # noqa: F401
from .rates import ES, PassiveCoefficients
from .rng import RandomStream, mix_seed

CSV_HEADER = "param,value,scheme,mean_wsr,stderr,n"

_PARAM_ALIASES = {
    "users": "num_users", "num_users": "num_users",
    "power": "pmax_dbm", "pmax_dbm": "pmax_dbm",
    "region": "region_side_lambda", "region_side_lambda": "region_side_lambda",
    "paths": "num_paths", "num_paths": "num_paths",
    "elements": "num_elements", "num_elements": "num_elements",
}


@dataclass
class SweepSpec:
    """One swept parameter, the values to visit, and the schemes to run."""

    param: str
    values: list
    schemes: tuple = SCHEMES
    num_realizations: int = 100
    master_seed: int = 0

    def validate(self) -> "SweepSpec":
        if self.param not in _PARAM_ALIASES:
            raise ValueError(f"unknown sweep parameter '{self.param}'")
        if not self.values:
            raise ValueError("value list must be nonempty")
        if self.num_realizations < 1:
            raise ValueError("need at least one realization")
        for s in self.schemes:
            if s.upper() not in SCHEMES:
                raise ValueError(f"unknown scheme '{s}'")
        return self


def apply_sweep_value(cfg: SystemConfig, param: str, value) -> SystemConfig:
    name = _PARAM_ALIASES[param]
    if name == "num_users":
        cfg = replace(cfg, num_users=int(value))
    elif name == "pmax_dbm":
        cfg = replace(cfg, max_power=dbm_to_watts(float(value)))
    elif name == "region_side_lambda":
        cfg = replace(cfg, region_side_lambda=float(value))
    elif name == "num_paths":
        cfg = replace(cfg, num_paths=int(value))
    else:
        cfg = replace(cfg, num_elements=int(value))
    return cfg.validate()


def _one_run(args):
    scheme, cfg, alg, seed = args
    realization = sample_realization(cfg, seed)
    result = run_scheme(scheme, realization, cfg, alg)
    return result.wsr


def _worker_count() -> int:
    raw = os.environ.get("STARS_OPT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_sweep(spec: SweepSpec, cfg: SystemConfig, alg: AlgorithmConfig) -> str:
    """Run the full sweep and return the CSV text (LF line endings).

    A failed run is dropped from its row's average; n records how many
    realizations actually contributed.
    """
    spec.validate()
    jobs = []
    for value in spec.values:
        cfg_v = apply_sweep_value(cfg, spec.param, value)
        for scheme in spec.schemes:
            for k in range(spec.num_realizations):
                seed = mix_seed(spec.master_seed, k)
                jobs.append((scheme.upper(), cfg_v, alg, seed))

    workers = _worker_count()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = []
            for wsr_val in pool.map(_run_guarded, jobs, chunksize=1):
                outcomes.append(wsr_val)
    else:
        outcomes = [_run_guarded(job) for job in jobs]

    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    i = 0
    for value in spec.values:
        for scheme in spec.schemes:
            vals = [outcomes[i + k] for k in range(spec.num_realizations)]
            i += spec.num_realizations
            good = np.array([v for v in vals if v is not None])
            n = good.size
            if n:
                mean = float(good.mean())
                stderr = float(good.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            else:
                mean, stderr = float("nan"), float("nan")
            buf.write(f"{spec.param},{value},{scheme.upper()},"
                      f"{mean!r},{stderr!r},{n}\n")
    return buf.getvalue()


def _run_guarded(job):
    try:
        return _one_run(job)
    except Exception:
        return None


def run_convergence_trace(cfg: SystemConfig, alg: AlgorithmConfig,
                          protocol: str, seed: int) -> str:
    """Per-outer-iteration WSR of one realization as `iter,wsr` CSV."""
    realization = sample_realization(cfg, seed)
    result = run_scheme(protocol, realization, cfg, alg)
    buf = io.StringIO()
    buf.write("iter,wsr\n")
    for i, v in enumerate(result.trace):
        buf.write(f"{i},{float(v)!r}\n")
    return buf.getvalue()


# --------------------------------------------------------------------------
# finite-difference gradient audit
# --------------------------------------------------------------------------

def gradient_check(cfg: SystemConfig, trials: int = 100,
                   seed: int = 0) -> float:
    """Compare the analytic position gradient against central differences.

    Random realization, beamformer, coefficients, and positions per trial;
    returns the worst relative infinity-norm error over all trials.
    """
    from .channel import ChannelRealization  # noqa: F401  (doc pointer)
    worst = 0.0
    h = 1e-6 * cfg.wavelength
    for trial in range(trials):
        s = mix_seed(seed, trial)
        realization = sample_realization(cfg, s)
        stream = RandomStream(s, stream_id=1)
        n = cfg.num_elements
        u = np.vstack([
            stream.uniform(-0.45 * cfg.region_side, 0.45 * cfg.region_side,
                           size=n),
            stream.uniform(-0.45 * cfg.region_side, 0.45 * cfg.region_side,
                           size=n)])
        w = stream.complex_normal(1.0, size=(cfg.num_bs_antennas,
                                             cfg.num_users))
        w *= np.sqrt(cfg.max_power) / np.linalg.norm(w)
        beta = stream.uniform(0.05, 0.95, size=n)
        coeffs = PassiveCoefficients(beta, 1.0 - beta,
                                     stream.uniform(0.0, 2 * np.pi, size=n),
                                     stream.uniform(0.0, 2 * np.pi, size=n),
                                     ES)
        weights = np.full(cfg.num_users, 1.0 / cfg.num_users)
        objective = es_objective(cfg, realization, w, coeffs, weights)
        _, grad = objective.value_and_grad(u)
        fd = np.zeros_like(grad)
        for axis in range(2):
            for k in range(n):
                up = u.copy()
                up[axis, k] += h
                dn = u.copy()
                dn[axis, k] -= h
                fd[axis, k] = (objective.value(up) - objective.value(dn)) / (2 * h)
        scale = max(np.abs(fd).max(), 1e-12)
        worst = max(worst, float(np.abs(grad - fd).max() / scale))
    return worst
