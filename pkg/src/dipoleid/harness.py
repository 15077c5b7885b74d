"""Synthetic laboratory: problem files, precomputation, the measurement
oracle, identification reports and field export.

All files are JSON except the field exports (CSV). Complex arrays are
stored as ``{"real": ..., "imag": ...}``. Python's float ``repr`` is
shortest round-trip, so every float is stored at full binary precision and
a write, read, write cycle gives identical bytes.

The hidden dipole operator lives in a separate oracle file. Precomputation
takes only the public problem file, so it cannot see the operator.
"""
import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .functionals import ProblemContext, measure_phi
from .greedy import (
    IdentificationResult,
    MeasurementRecord,
    SelectiveFieldSet,
    greedy_fields,
    identify,
    relative_error,
)
from .linalg import combine, make_hermitian, random_hermitian_basis
from .optimizers import MonotonicSettings, MultistartSettings, OptimizerTrace
from .propagator import TimeGrid

__all__ = [
    "FORMAT_VERSION",
    "PAPER_H",
    "PAPER_MU_STAR",
    "ProblemSpec",
    "InputError",
    "paper_problem",
    "random_problem",
    "write_problem",
    "read_problem",
    "write_oracle",
    "read_oracle",
    "precompute",
    "write_archive",
    "read_archive",
    "simulate_measurements",
    "write_measurements",
    "read_measurements",
    "run_identification",
    "write_report",
    "export_fields",
    "atomic_write_text",
]

FORMAT_VERSION = 1

PAPER_H = 1e-2 * np.diag([1.0, 2.0, 4.0])
PAPER_MU_STAR = np.array([
    [2.4154, 1.9335, 1.5822],
    [1.9335, 1.4366, 1.5991],
    [1.5822, 1.5991, 1.9843],
])
PAPER_T = 4000 * np.pi
PAPER_M = 40000


class InputError(ValueError):
    """A file or flag combination the harness cannot use."""


@dataclass
class ProblemSpec:
    """Public description of an experiment plus every optimizer setting.

    ``mu_star`` is only filled in by the generators; it is never written to
    the problem file (see :func:`write_oracle`).
    """

    H: np.ndarray
    psi0: np.ndarray
    psi1: np.ndarray
    T: float
    M: int
    L: int
    basis_seed: int = 0
    beta: float = 1e-2
    noise_sigma: float = 0.0
    field_seed: int = 0
    monotonic: MonotonicSettings = field(default_factory=MonotonicSettings)
    multistart: MultistartSettings = field(default_factory=MultistartSettings)
    mu_star: Optional[np.ndarray] = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=complex)
        n = self.H.shape[0]
        if not 1 <= self.L <= n * n:
            raise InputError(f"L must be in [1, {n * n}] for dimension {n}, got {self.L}")
        if self.noise_sigma < 0:
            raise InputError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        # validates H, states and grid
        self.context()

    @property
    def dim(self):
        return self.H.shape[0]

    @property
    def grid(self):
        return TimeGrid(self.T, self.M)

    def context(self):
        return ProblemContext(self.H, self.psi0, self.psi1, self.grid, self.beta)

    def basis(self):
        return random_hermitian_basis(self.dim, self.L, self.basis_seed)


def paper_problem(**overrides):
    """The three-level test case with the printed dipole operator."""
    params = dict(
        H=PAPER_H, psi0=np.eye(3)[0], psi1=np.eye(3)[2], T=PAPER_T, M=PAPER_M, L=9,
        mu_star=PAPER_MU_STAR.copy(),
    )
    params.update(overrides)
    return ProblemSpec(**params)


def random_problem(dim=3, L=None, seed=0, **overrides):
    """Random instance of dimension ``dim``.

    ``H`` is diagonal with sorted level energies in ``1e-2 * [1, 2 dim]``,
    the system starts in the lowest level and is measured on the highest.
    The hidden operator is a combination of the basis with coefficients
    drawn uniformly from ``[-1, 1]``.
    """
    if dim < 2:
        raise InputError(f"dim must be at least 2, got {dim}")
    L = dim * dim if L is None else L
    rng = np.random.default_rng(seed)
    levels = np.sort(1e-2 * rng.uniform(1.0, 2.0 * dim, size=dim))
    params = dict(
        H=np.diag(levels), psi0=np.eye(dim)[0], psi1=np.eye(dim)[-1],
        T=PAPER_T, M=PAPER_M, L=L, basis_seed=seed, field_seed=seed,
    )
    params.update(overrides)
    spec = ProblemSpec(**params)
    coeffs = rng.uniform(-1.0, 1.0, size=spec.L)
    spec.mu_star = make_hermitian(combine(coeffs, spec.basis()))
    return spec


# -- serialization helpers -------------------------------------------------

def _cplx(a):
    a = np.asarray(a, dtype=complex)
    return {"real": a.real.tolist(), "imag": a.imag.tolist()}


def _uncplx(obj):
    try:
        return np.asarray(obj["real"], dtype=float) + 1j * np.asarray(obj["imag"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed complex array: {exc}") from exc


def _dumps(obj):
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load(path, kind):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or data.get("format") != kind:
        raise InputError(f"{path} is not a {kind} file")
    if data.get("version") != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported version {data.get('version')!r}")
    return data


def _header(kind):
    return {"format": kind, "version": FORMAT_VERSION}


# -- problem and oracle files ----------------------------------------------

def _problem_dict(spec):
    d = _header("dipoleid-problem")
    d.update(
        H=_cplx(spec.H), psi0=_cplx(spec.psi0), psi1=_cplx(spec.psi1),
        T=spec.T, M=spec.M, L=spec.L, basis_seed=spec.basis_seed, beta=spec.beta,
        noise_sigma=spec.noise_sigma, field_seed=spec.field_seed,
        monotonic=asdict(spec.monotonic), multistart=asdict(spec.multistart),
    )
    return d


def write_problem(spec, path):
    """Write the public part of ``spec``; ``mu_star`` is left out."""
    atomic_write_text(path, _dumps(_problem_dict(spec)))


def read_problem(path):
    d = _load(path, "dipoleid-problem")
    try:
        return ProblemSpec(
            H=_uncplx(d["H"]), psi0=_uncplx(d["psi0"]), psi1=_uncplx(d["psi1"]),
            T=d["T"], M=d["M"], L=d["L"], basis_seed=d["basis_seed"], beta=d["beta"],
            noise_sigma=d["noise_sigma"], field_seed=d["field_seed"],
            monotonic=MonotonicSettings(**d["monotonic"]),
            multistart=MultistartSettings(**d["multistart"]),
        )
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: missing or invalid entry {exc}") from exc


def write_oracle(mu_star, path):
    d = _header("dipoleid-oracle")
    d["mu_star"] = _cplx(make_hermitian(mu_star))
    atomic_write_text(path, _dumps(d))


def read_oracle(path):
    return make_hermitian(_uncplx(_load(path, "dipoleid-oracle")["mu_star"]))


# -- field archive ---------------------------------------------------------

def settings_hash(spec):
    """SHA-256 of everything in the problem file that shapes the fields."""
    d = _problem_dict(spec)
    del d["noise_sigma"]
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def precompute(spec):
    """Run the greedy construction for ``spec`` (which must not need ``mu_star``)."""
    fs = greedy_fields(spec.context(), spec.basis(), spec.monotonic, spec.multistart, spec.field_seed)
    fs.provenance.update(
        settings_hash=settings_hash(spec), code_version=__version__,
        basis_seed=spec.basis_seed, L=spec.L,
    )
    return fs


def _trace_dict(tr):
    return {
        "objective_history": list(tr.objective_history),
        "iterations": tr.iterations,
        "converged": tr.converged,
        "field_changes": list(tr.field_changes),
        "min_step_gain": list(tr.min_step_gain),
    }


def _archive_dict(fs):
    d = _header("dipoleid-fields")
    d.update(
        provenance=fs.provenance,
        basis=[_cplx(b) for b in fs.basis],
        fields=[np.asarray(f, dtype=float).tolist() for f in fs.fields],
        fit_coefficients=[np.asarray(a, dtype=float).tolist() for a in fs.fit_coefficients],
        fit_costs=[None if np.isnan(c) else float(c) for c in fs.fit_costs],
        traces=[_trace_dict(t) for t in fs.traces],
    )
    return d


def write_archive(fs, path):
    atomic_write_text(path, _dumps(_archive_dict(fs)))


def read_archive(path):
    d = _load(path, "dipoleid-fields")
    try:
        traces = [OptimizerTrace(**t) for t in d["traces"]]
        return SelectiveFieldSet(
            basis=[_uncplx(b) for b in d["basis"]],
            fields=[np.asarray(f, dtype=float) for f in d["fields"]],
            fit_coefficients=[np.asarray(a, dtype=float) for a in d["fit_coefficients"]],
            fit_costs=[float("nan") if c is None else c for c in d["fit_costs"]],
            traces=traces,
            provenance=d["provenance"],
        )
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: missing or invalid entry {exc}") from exc


def check_archive(spec, fs):
    """Raise :class:`InputError` unless ``fs`` was computed on ``spec``'s grid and basis."""
    prov = fs.provenance
    if prov.get("M") != spec.M or prov.get("T") != spec.T:
        raise InputError(
            f"archive grid (T={prov.get('T')}, M={prov.get('M')}) does not match "
            f"the problem (T={spec.T}, M={spec.M})"
        )
    if len(fs.basis) != spec.L or not all(
        np.array_equal(a, b) for a, b in zip(fs.basis, spec.basis())
    ):
        raise InputError("archive basis does not match the problem's basis seed and size")


# -- measurements ----------------------------------------------------------

def simulate_measurements(spec, fs, mu_star, noise_sigma=None, seed=0):
    """Oracle readings ``phi(mu_star, eps_k)`` plus complex Gaussian noise.

    ``noise_sigma`` (default: the problem's) is the standard deviation of
    each real component.
    """
    check_archive(spec, fs)
    sigma = spec.noise_sigma if noise_sigma is None else noise_sigma
    if sigma < 0:
        raise InputError(f"noise_sigma must be >= 0, got {sigma}")
    ctx = spec.context()
    rng = np.random.default_rng(seed)
    records = []
    for k, eps in enumerate(fs.fields):
        value = measure_phi(ctx, mu_star, eps)
        if sigma > 0:
            value += sigma * complex(*rng.standard_normal(2))
        records.append(MeasurementRecord(k, value))
    return records


def write_measurements(records, path, noise_sigma=0.0, seed=0):
    d = _header("dipoleid-measurements")
    d.update(
        noise_sigma=noise_sigma, seed=seed,
        records=[{"field_id": r.field_id, "real": r.value.real, "imag": r.value.imag} for r in records],
    )
    atomic_write_text(path, _dumps(d))


def read_measurements(path):
    d = _load(path, "dipoleid-measurements")
    try:
        return [MeasurementRecord(int(r["field_id"]), complex(r["real"], r["imag"])) for r in d["records"]]
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed record {exc}") from exc


# -- identification report -------------------------------------------------

def run_identification(spec, fs, records, mu_star=None, multistart=None):
    """Identify from ``records``; scores against ``mu_star`` only when given."""
    check_archive(spec, fs)
    if len(records) != len(fs.fields):
        raise InputError(f"{len(records)} measurements for {len(fs.fields)} fields")
    result = identify(spec.context(), fs, records, multistart or spec.multistart)
    if mu_star is not None:
        result.relative_error = relative_error(result.mu_hat, mu_star)
    return result


def report_dict(result: IdentificationResult):
    d = _header("dipoleid-report")
    d.update(
        alpha=result.alpha.tolist(),
        mu_hat=_cplx(result.mu_hat),
        residual=result.residual,
        restart_costs=list(result.trace.objective_history) if result.trace else [],
        converged=bool(result.trace.converged) if result.trace else None,
    )
    if result.relative_error is not None:
        d["relative_error"] = result.relative_error
    return d


def write_report(result, path, wall_time=None):
    """Write the report. Wall time goes to ``<path>.timing.json`` so the report
    itself is reproducible byte for byte."""
    atomic_write_text(path, _dumps(report_dict(result)))
    if wall_time is not None:
        atomic_write_text(f"{path}.timing.json", _dumps({"wall_time_s": wall_time}))


# -- export ----------------------------------------------------------------

def export_fields(fs, outdir):
    """One ``field_<k>.csv`` per field with columns ``t, epsilon`` plus
    ``summary.csv`` with ``k, l2_norm, final_J``. Returns the paths written."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    T, M = fs.provenance["T"], fs.provenance["M"]
    grid = TimeGrid(T, M)
    t = grid.times()
    width = len(str(len(fs.fields)))
    paths = []
    for k, eps in enumerate(fs.fields, start=1):
        path = outdir / f"field_{k:0{width}d}.csv"
        rows = [["t", "epsilon"]] + [[repr(float(a)), repr(float(b))] for a, b in zip(t, eps)]
        atomic_write_text(path, _csv(rows))
        paths.append(path)
    rows = [["k", "l2_norm", "final_J"]]
    for k, (eps, tr) in enumerate(zip(fs.fields, fs.traces), start=1):
        norm = float(np.sqrt(grid.dt * np.dot(eps, eps)))
        rows.append([str(k), repr(norm), repr(float(tr.final_objective))])
    path = outdir / "summary.csv"
    atomic_write_text(path, _csv(rows))
    paths.append(path)
    return paths


def _csv(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()
