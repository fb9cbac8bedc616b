"""Per-run time series and the CSV surfaces of the experiment runner.

Link numbers in CSV headers and scenario files are 1-based (link 1 is the
one nearest the base); Python APIs use 0-based indices throughout.
"""

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RunLog:
    scenario: str
    mode: str
    seed: int
    n_joints: int
    active_links: tuple = ()
    steps: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    q: list = field(default_factory=list)
    link_weights: list = field(default_factory=list)
    qd_norm: list = field(default_factory=list)
    n_clamped: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    contact_flags: list = field(default_factory=list)
    contact_step: int = -1
    contact_link: int = -1
    positions: list = field(default_factory=list)   # kept only when requested

    def record(self, step, eps, q, weights, qd_norm, n_clamped, wall_ms,
               contact=False, positions=None):
        self.steps.append(int(step))
        self.eps.append(float(eps))
        self.q.append(np.asarray(q, dtype=float).copy())
        self.link_weights.append(dict(weights))
        self.qd_norm.append(float(qd_norm))
        self.n_clamped.append(int(n_clamped))
        self.wall_ms.append(float(wall_ms))
        self.contact_flags.append(bool(contact))
        if positions is not None:
            self.positions.append(np.asarray(positions, dtype=float).copy())

    @property
    def n_records(self):
        return len(self.steps)

    @property
    def final_eps(self):
        return self.eps[-1] if self.eps else float("nan")

    @property
    def steps_to_contact(self):
        """Contact step, or -1 when the run ended without contact."""
        return self.contact_step

    def mean_step_ms(self):
        return float(np.mean(self.wall_ms)) if self.wall_ms else float("nan")

    def summary(self):
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "seed": self.seed,
            "records": self.n_records,
            "final_eps": self.final_eps,
            "steps_to_contact": self.steps_to_contact,
            "contact_link": self.contact_link,
            "mean_step_ms": self.mean_step_ms(),
        }

    def header(self, deterministic=False):
        cols = ["step", "eps"]
        cols += [f"q{i}" for i in range(self.n_joints)]
        cols += [f"w_link{j + 1}" for j in self.active_links]
        cols += ["qd_norm", "n_clamped", "contact"]
        if not deterministic:
            cols.append("wall_ms")
        return cols

    def to_csv(self, path, deterministic=False):
        """Write the run log.  In deterministic mode the wall-clock column is
        omitted so identical (scenario, seed) runs are byte-identical."""
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(self.header(deterministic))
            for i in range(self.n_records):
                row = [self.steps[i], repr(self.eps[i])]
                row += [repr(float(v)) for v in self.q[i]]
                row += [repr(float(self.link_weights[i].get(j, 0.0)))
                        for j in self.active_links]
                row += [repr(self.qd_norm[i]), self.n_clamped[i],
                        int(self.contact_flags[i])]
                if not deterministic:
                    row.append(f"{self.wall_ms[i]:.6f}")
                w.writerow(row)


class BatchRunError(RuntimeError):
    def __init__(self, seed, cause):
        super().__init__(f"run for seed {seed} failed: {cause}")
        self.seed = seed
        self.cause = cause


@dataclass
class BatchResult:
    scenario: str
    mode: str
    seeds: tuple
    eps_per_run: np.ndarray = None     # (n_runs, horizon) for non-contact batches
    contact_steps: tuple = ()          # per-run steps-to-contact (-1: none)
    contact_links: tuple = ()

    def mean_eps(self):
        return self.eps_per_run.mean(axis=0)

    def std_eps(self):
        return self.eps_per_run.std(axis=0)

    def to_aggregate_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "mean_eps", "std_eps"])
            for t, (m, s) in enumerate(zip(self.mean_eps(), self.std_eps())):
                w.writerow([t, repr(float(m)), repr(float(s))])

    def to_contact_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["seed", "steps_to_contact", "contact_link"])
            for seed, steps, link in zip(self.seeds, self.contact_steps,
                                         self.contact_links):
                w.writerow([seed, steps, link + 1 if link >= 0 else -1])
