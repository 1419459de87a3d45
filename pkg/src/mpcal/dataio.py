"""CSV data files and calibration reports.

A data file has one row per load step::

    step,eps_11,eps_22,eps_12,sig_11,sig_22,sig_12

with the strain columns a variant prescribes and the stress columns it can
observe (all six of each for ``3d``).  Steps count up from 1.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .forward import ForwardHistory, LoadSchedule
from .model import COMPONENTS, ModelVariant
from .optimize import OptTrace
from .sensitivity import Observation


class DataFileError(ValueError):
    pass


def data_columns(variant) -> list[str]:
    variant = ModelVariant.parse(variant)
    return (
        ["step"]
        + [f"eps_{COMPONENTS[c]}" for c in variant.prescribed]
        + [f"sig_{COMPONENTS[c]}" for c in variant.observed]
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def write_data(path, schedule: LoadSchedule, stress) -> None:
    """Write prescribed strains and (observed) stresses of every step."""
    variant = schedule.variant
    stress = np.asarray(stress, dtype=float).reshape(-1, 6)
    if stress.shape[0] != schedule.n_steps:
        raise ValueError("stress rows and schedule length differ")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(data_columns(variant))
        for n in range(schedule.n_steps):
            row = [str(n + 1)]
            row += [_fmt(schedule.strains[n, c]) for c in variant.prescribed]
            row += [_fmt(stress[n, c]) for c in variant.observed]
            w.writerow(row)


def load_observations(path, variant, truncate_strain: float | None = None, norm: str = "frobenius", mask=None):
    """Read a data file into a load schedule and matching observations.

    With ``truncate_strain`` the file is cut before the first row whose
    ``|eps_11|`` exceeds the threshold, so the retained rows remain a
    contiguous prefix of the loading path.

    Returns
    -------
    LoadSchedule, Observation
    """
    variant = ModelVariant.parse(variant)
    cols = data_columns(variant)
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataFileError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFileError(f"{path}: empty file")
        header = [h.strip() for h in header]
        for c in cols:
            if c not in header:
                raise DataFileError(f"{path}: missing column {c!r}")
        idx = [header.index(c) for c in cols]
        rows = []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise DataFileError(f"{path}:{line}: expected {len(header)} fields, got {len(rec)}")
            try:
                vals = [float(rec[i]) for i in idx]
            except ValueError:
                raise DataFileError(f"{path}:{line}: non-numeric field") from None
            if not np.all(np.isfinite(vals)):
                raise DataFileError(f"{path}:{line}: non-finite value")
            rows.append((line, vals))
    if not rows:
        raise DataFileError(f"{path}: no data rows")
    for k, (line, vals) in enumerate(rows):
        if vals[0] != k + 1:
            raise DataFileError(f"{path}:{line}: steps must count up from 1 (got {vals[0]:g})")
    data = np.array([v for _, v in rows])
    k = len(variant.prescribed)
    strain_vals, stress_vals = data[:, 1 : 1 + k], data[:, 1 + k :]
    if truncate_strain is not None:
        e11 = np.abs(strain_vals[:, 0])
        over = np.nonzero(e11 > truncate_strain)[0]
        if over.size:
            if over[0] == 0:
                raise DataFileError(f"{path}: every row exceeds the strain cutoff {truncate_strain}")
            strain_vals, stress_vals = strain_vals[: over[0]], stress_vals[: over[0]]
    schedule = LoadSchedule.from_prescribed(variant, strain_vals)
    targets = np.zeros((strain_vals.shape[0], 6))
    targets[:, list(variant.observed)] = stress_vals
    if mask is None:
        obs = Observation.for_variant(variant, targets, norm)
    else:
        obs = Observation(targets, mask, norm)
    return schedule, obs


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def write_convergence(path, trace: OptTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "log10_J", "grad_inf_p", "grad_inf_eta", "cond_eta", "solves"] + list(trace.names))
        logJ = trace.log10_objective
        for k in range(len(trace.objective)):
            w.writerow(
                [k, f"{logJ[k]:.10f}", f"{trace.grad_inf[k]:.6e}", f"{trace.grad_inf_eta[k]:.6e}",
                 f"{trace.cond[k]:.6e}", trace.solves[k]]
                + [_fmt(v) for v in trace.params[k]]
            )


def write_curve(path, history: ForwardHistory, obs: Observation | None = None) -> None:
    """Model (and observed) stress against strain for every step."""
    variant = history.variant
    eps = history.total_strain().real
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["step"] + [f"eps_{c}" for c in COMPONENTS] + [f"model_sig_{COMPONENTS[c]}" for c in variant.observed]
        if obs is not None:
            head += [f"obs_sig_{COMPONENTS[c]}" for c in variant.observed]
        w.writerow(head)
        for n in range(history.n_steps):
            row = [n + 1] + [_fmt(e) for e in eps[n]] + [_fmt(history.stress[n, c].real) for c in variant.observed]
            if obs is not None:
                row += [_fmt(obs.targets[n, c]) for c in variant.observed]
            w.writerow(row)


def summary_text(result) -> str:
    """Plain-text table of the calibrated parameters and run cost."""
    names = result.names
    lines = [f"method: {result.trace.method}", ""]
    width = max(12, *(len(n) for n in names))
    head = f"{'':<10}" + "".join(f"{n:>{width + 12}}" for n in names)
    lines.append(head)
    if result.truth is not None:
        lines.append(f"{'truth':<10}" + "".join(f"{v:>{width + 12}.6g}" for v in result.truth))
    lines.append(f"{'initial':<10}" + "".join(f"{v:>{width + 12}.6g}" for v in result.initial))
    cells = []
    for k, v in enumerate(result.params):
        cell = f"{v:.6g}"
        if result.truth is not None:
            cell += f" ({100 * abs(v - result.truth[k]) / abs(result.truth[k]):.3f}%)"
        cells.append(f"{cell:>{width + 12}}")
    lines.append(f"{'optimum':<10}" + "".join(cells))
    lines += [
        "",
        f"iterations:             {result.trace.iterations}",
        f"converged:              {result.trace.converged} ({result.trace.message})",
        f"final log10 J:          {result.trace.log10_objective[-1]:.8f}",
        f"final |dJ/dp|_inf:      {result.trace.grad_inf[-1]:.3e}",
        f"final cond (eta-space): {result.trace.cond[-1]:.3e}",
        f"wall time [s]:          {result.trace.wall_time:.2f}",
        f"total system solutions: {result.solves}",
    ]
    if result.ga_solves:
        lines.append(f"GA system solutions:    {result.ga_solves}")
    return "\n".join(lines) + "\n"
