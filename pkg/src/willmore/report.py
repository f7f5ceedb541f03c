"""Run reports: history CSV, throughput table, and rendered history figures.

history.csv contains only deterministic columns (identical configurations
produce byte-identical files); wall-clock timings go to timings.csv and the
throughput summary instead.
"""

import os
import threading

from matplotlib.figure import Figure

# matplotlib's text machinery shares parser/font caches across figures, so
# rendering is serialized even though each run owns its own Figure objects.
_RENDER_LOCK = threading.Lock()

HISTORY_COLUMNS = (
    "iteration",
    "energy",
    "grad_norm_J",
    "constraint_violation",
    "tau",
    "backtracks",
    "restorations",
)

TIMING_PHASES = ("assembly", "factorization", "solves", "line_search", "restoration")


def _fmt(value):
    if isinstance(value, (int,)):
        return str(value)
    return format(float(value), ".17g")


def write_history_csv(path, records):
    lines = [",".join(HISTORY_COLUMNS)]
    for r in records:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    r.iteration,
                    r.energy,
                    r.grad_norm_J,
                    r.constraint_violation,
                    r.tau,
                    r.backtracks,
                    r.restorations,
                )
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def write_timings_csv(path, records):
    lines = [",".join(("iteration",) + TIMING_PHASES + ("total",))]
    for r in records:
        per_phase = [r.timings.get(phase, 0.0) for phase in TIMING_PHASES]
        lines.append(
            ",".join([str(r.iteration)] + [_fmt(t) for t in per_phase + [sum(per_phase)]])
        )
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def throughput_table(num_faces, init_seconds, iteration_seconds):
    """Timing table: initialization and per-iteration time with faces/s rates."""
    init_speed = num_faces / init_seconds if init_seconds > 0 else float("inf")
    iter_speed = num_faces / iteration_seconds if iteration_seconds > 0 else float("inf")
    header = f"{'faces':>10} | {'init time (s)':>13} {'init faces/s':>13} | {'iter time (s)':>13} {'iter faces/s':>13}"
    row = (
        f"{num_faces:>10d} | {init_seconds:>13.3f} {init_speed:>13.1f} | "
        f"{iteration_seconds:>13.3f} {iter_speed:>13.1f}"
    )
    return header + "\n" + row


def summarize_run(name, state, num_faces):
    records = state.history
    iter_seconds = (
        sum(sum(r.timings.values()) for r in records) / len(records) if records else 0.0
    )
    lines = [
        f"run: {name}",
        f"termination: {state.termination}",
        f"iterations: {state.iteration}",
        f"final energy: {state.energy:.10g}",
        f"final constraint violation: {state.constraint_violation:.3e}",
        f"grad_tol: {state.grad_tol:.3e}  constraint_tol: {state.constraint_tol:.3e}",
        "",
        throughput_table(num_faces, state.init_seconds, iter_seconds),
    ]
    return "\n".join(lines)


def _new_axes(title):
    # Figure objects (no pyplot) keep rendering free of global state, so
    # parallel preset runs may render concurrently.
    fig = Figure(figsize=(6.0, 3.8))
    ax = fig.add_subplot(1, 1, 1)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    return fig, ax


def _save(fig, out_dir, name):
    fig.tight_layout()
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=150)
    return path


def render_history_figures(out_dir, records, title=None):
    """Render the optimization history to PNG files next to the CSV output.

    Returns the list of written figure paths (energy, step size/gradient,
    constraint violation).
    """
    if not records:
        return []
    with _RENDER_LOCK:
        return _render_history_figures(out_dir, records, title)


def _render_history_figures(out_dir, records, title):
    iters = [r.iteration for r in records]
    paths = []

    fig, ax = _new_axes(title)
    ax.plot(iters, [r.energy for r in records], "o-", ms=2.5, lw=1.0, color="tab:blue")
    ax.set_xlabel("iteration")
    ax.set_ylabel("Willmore energy")
    paths.append(_save(fig, out_dir, "willmore_energy.png"))

    fig, ax = _new_axes(title)
    ax.semilogy(iters, [max(r.grad_norm_J, 1e-300) for r in records], "o-", ms=2.5,
                lw=1.0, color="tab:orange", label="gradient J-norm")
    ax.semilogy(iters, [max(r.tau, 1e-300) for r in records], "s-", ms=2.5, lw=1.0,
                color="tab:green", label="step size")
    ax.set_xlabel("iteration")
    ax.legend()
    paths.append(_save(fig, out_dir, "step_sizes.png"))

    fig, ax = _new_axes(title)
    ax.semilogy(
        iters,
        [max(r.constraint_violation, 1e-300) for r in records],
        "o-",
        ms=2.5,
        lw=1.0,
        color="tab:red",
    )
    ax.set_xlabel("iteration")
    ax.set_ylabel("constraint violation (max norm)")
    paths.append(_save(fig, out_dir, "constraint_violation.png"))
    return paths
