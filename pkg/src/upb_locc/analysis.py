"""Closed-form entanglement costs, simulation cross-checks and the cost sweep."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .upb import cardinality, ceil_half, layer_population

SIM_CUTOFF = 8
COST_TOL = 1e-9

DESCRIPTORS = {
    "T1": "{(1, phi+(2)_AB); (1, phi+(3)_BC)}",
    "T2": "{(1, phi+(2)_AB); (1, phi+(2)_AC)}",
    "T3": "{(1, phi+(3)_ABC)}",
    "T4": "{(1, phi+(ceil(d/2))_AB); (1, phi+(d)_BC)}",
    "T5": "{(e(d), phi+(2)_AB); (1, phi+(d)_BC)}",
    "T6": "{(1, phi+(ceil(d/2))_AB); (1, phi+(ceil(d/2))_AC)}",
    "naive": "{(1, phi+(d)_AB); (1, phi+(d)_CB)}",
}


def _check(d: int):
    if d < 3:
        raise ValueError("d must be >= 3")


def cost_t4(d: int) -> float:
    _check(d)
    return math.log2(d) + math.log2(ceil_half(d))


def t5_rounds(d: int) -> int:
    """Upper summation index ceil(d/2 - 2) plus one, in integers."""
    _check(d)
    return ceil_half(d - 4) + 1


def e_term(d: int, m: int) -> float:
    """((d-2m)^3 - 8 ceil(d/2-1-m)) / (d^3 - 8 ceil(d/2-1))."""
    return ((d - 2 * m) ** 3 - 8 * ceil_half(d - 2 - 2 * m)) / cardinality(d)


def e_of_d(d: int) -> float:
    _check(d)
    return math.fsum(e_term(d, m) for m in range(t5_rounds(d)))


def e_by_population(d: int) -> float:
    """The same sum written as (states in layers >= m) / (all states)."""
    return math.fsum(layer_population(d, m) for m in range(t5_rounds(d))) / cardinality(d)


def cost_t5(d: int) -> float:
    return math.log2(d) + e_of_d(d)


def cost_t6(d: int) -> float:
    _check(d)
    return 2 * math.log2(ceil_half(d))


def cost_naive(d: int) -> float:
    _check(d)
    return 2 * math.log2(d)


COSTS = {"T4": cost_t4, "T5": cost_t5, "T6": cost_t6, "naive": cost_naive}
FIXED_D3 = {"T1": 1 + math.log2(3), "T2": 2.0, "T3": None}


@dataclass(frozen=True)
class CostRow:
    d: int
    theorem: str
    closed_form: float | None
    simulated: float | None
    descriptor: str

    def agrees(self) -> bool:
        if self.closed_form is None or self.simulated is None:
            return True
        return abs(self.closed_form - self.simulated) < COST_TOL


def _parity_ok(d: int, parity: str) -> bool:
    if parity == "both":
        return True
    if parity not in ("even", "odd"):
        raise ValueError(f"parity must be even, odd or both, not {parity!r}")
    return (d % 2 == 0) == (parity == "even")


def simulated_cost(theorem: str, d: int) -> float | None:
    """Expected ebits from a full branch simulation (None for the tripartite resource)."""
    from .engine import run_protocol
    from .protocols import build_protocol
    from .upb import build_upb

    if theorem == "T3":
        return None
    report = run_protocol(build_protocol(theorem, d), build_upb(d), name=theorem)
    return report.expected_ebits()


def sweep(
    d_min: int,
    d_max: int,
    parity: str = "both",
    theorems: Sequence[str] = ("T4", "T5", "T6"),
    cutoff: int = SIM_CUTOFF,
) -> list[CostRow]:
    if not 3 <= d_min <= d_max:
        raise ValueError("need 3 <= d_min <= d_max")
    rows = []
    for d in range(d_min, d_max + 1):
        if not _parity_ok(d, parity):
            continue
        for th in sorted(theorems):
            if th in FIXED_D3:
                if d != 3:
                    continue
                closed = FIXED_D3[th]
            elif th in COSTS:
                closed = COSTS[th](d)
            else:
                raise ValueError(f"unknown theorem {th!r}")
            sim = simulated_cost(th, d) if (th != "naive" and d <= cutoff) else None
            rows.append(CostRow(d, th, closed, sim, DESCRIPTORS[th]))
    return rows


def crossover(a: str, b: str, ds: Iterable[int]) -> list[int]:
    """Values of d at which sign(cost_a - cost_b) differs from the previous grid point."""
    out = []
    prev = None
    for d in ds:
        diff = COSTS[a](d) - COSTS[b](d)
        sign = 0 if abs(diff) < COST_TOL else (1 if diff > 0 else -1)
        if prev is not None and sign != prev:
            out.append(d)
        prev = sign
    return out


def _runs(ds: Sequence[int], signs: Sequence[int]) -> list[tuple[int, int, int]]:
    """Maximal runs (sign, first d, last d)."""
    out: list[list[int]] = []
    for d, s in zip(ds, signs):
        if out and out[-1][0] == s:
            out[-1][2] = d
        else:
            out.append([s, d, d])
    return [tuple(r) for r in out]


def crossover_summary(ds: Sequence[int]) -> list[str]:
    """Human-readable T4 vs T5 comparison, one line per run of equal sign."""
    ds = list(ds)
    if not ds:
        return []
    signs = []
    for d in ds:
        diff = cost_t4(d) - cost_t5(d)
        signs.append(0 if abs(diff) < COST_TOL else (1 if diff > 0 else -1))
    lines = []
    runs = _runs(ds, signs)
    for k, (s, lo, hi) in enumerate(runs):
        last = k == len(runs) - 1
        if s == 0:
            what = "T4=T5"
        elif s > 0:
            what = "T5<T4"
        else:
            what = "T4<T5"
        if lo == hi:
            lines.append(f"{what} at d={lo}")
        elif last and hi == ds[-1] and k > 0:
            lines.append(f"{what} for d>={lo}")
        else:
            lines.append(f"{what} for d in [{lo},{hi}]")
    return lines


def validate_t5_expectation(d: int) -> tuple[bool, float, float]:
    """(pass, simulated expected EPR copies, e(d))."""
    from .engine import run_protocol
    from .protocols import build_protocol
    from .upb import build_upb

    report = run_protocol(build_protocol("T5", d), build_upb(d), name="T5")
    sim = report.expected_epr()
    ref = e_of_d(d)
    return abs(sim - ref) < COST_TOL, sim, ref


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def rows_to_csv(rows: Sequence[CostRow], comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["d", "theorem", "ebits_closed_form", "ebits_simulated", "resource_descriptor"])
    for r in rows:
        w.writerow([r.d, r.theorem, _fmt(r.closed_form), _fmt(r.simulated), r.descriptor])
    for line in comments:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def gnuplot_script(csv_name: str, theorems: Sequence[str] = ("T4", "T5", "T6")) -> str:
    plots = ", \\\n     ".join(
        f"'{csv_name}' using 1:(strcol(2) eq '{t}' ? $3 : 1/0) with linespoints title '{t}'" for t in theorems
    )
    return (
        "set datafile separator ','\n"
        "set key left top\n"
        "set xlabel 'd'\n"
        "set ylabel 'ebits'\n"
        f"plot {plots}\n"
    )
