"""Two-sensor data fusion on the five-agent harness.

Per tumbling window of ``k`` sample pairs:

* Agent1 computes the correlation ``r`` of the two series and squares it;
* Agent2 computes the closeness coefficient of the window means,
  ``1 - |a - b| / closeness_threshold`` (clamped at 0 for later use);
* Agent3 averages the window means;
* Agent4 multiplies the minimum squared correlation over the last
  ``history`` windows by the closeness coefficient (the confidence);
* Agent5 passes the average through when the confidence reaches
  ``confidence_threshold``, otherwise holds the previous fused value and
  widens Agent2's closeness threshold by ``rho`` (up to ``cap``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from .bdi import DesireSet, Intention
from .dfg import ActorSpec, DataflowGraph, OpContext, Operator, register_operator
from .errors import InvalidThreshold, TooFewRows, ZeroVariance
from .packing import agent_configs, boundary_links
from .runtime import MultiAgentSystem, configure_agent
from .trace import FIRE

OK, LOW_CONFIDENCE, DEGRADED = "ok", "low_confidence", "degraded"
FLAG_CODES = {OK: 0, LOW_CONFIDENCE: 1, DEGRADED: 2}
FLAG_NAMES = {v: k for k, v in FLAG_CODES.items()}
ZERO_VARIANCE_TOL = 1e-12


@dataclass(frozen=True)
class ObservationWindow:
    pairs: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.pairs) < 2:
            raise ValueError("a window needs at least 2 pairs")

    @classmethod
    def of(cls, pairs: Iterable[Sequence[float]]) -> "ObservationWindow":
        return cls(tuple((float(a), float(b)) for a, b in pairs))

    @property
    def n(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class FusionParams:
    closeness_threshold: float = 20.0
    confidence_threshold: float = 0.5
    window: int = 8
    rho: float = 1.25
    cap: float = 100.0
    history: int = 3
    correlation_threshold: float = 0.5

    def __post_init__(self):
        if not self.closeness_threshold > 0:
            raise InvalidThreshold("closeness_threshold must be > 0")
        if not 0 <= self.confidence_threshold <= 1:
            raise InvalidThreshold("confidence_threshold must be in [0, 1]")
        if not 0 <= self.correlation_threshold <= 1:
            raise InvalidThreshold("correlation_threshold must be in [0, 1]")
        if self.window < 2:
            raise InvalidThreshold("window must be >= 2")
        if not self.rho > 1:
            raise InvalidThreshold("rho must be > 1")
        if self.cap < self.closeness_threshold:
            raise InvalidThreshold("cap must be >= closeness_threshold")
        if self.history < 1:
            raise InvalidThreshold("history must be >= 1")


@dataclass(frozen=True)
class FusionResult:
    window_index: int
    r: float
    zero_variance: bool
    corr2: float
    gamma_raw: float
    gamma: float
    average: float
    confidence: float
    fused: float
    flag: str
    closeness_threshold: float

    def row(self) -> list:
        return [self.window_index, self.r, self.corr2, self.gamma, self.average,
                self.confidence, self.fused, self.flag]


RESULT_COLUMNS = ["window_index", "r", "corr2", "gamma", "avg", "confidence", "fused", "flag"]


# ---------------------------------------------------------------------------
# the math

def correlation(window: ObservationWindow) -> float:
    n = window.n
    sa = sb = sab = saa = sbb = 0.0
    for a, b in window.pairs:
        sa += a
        sb += b
        sab += a * b
        saa += a * a
        sbb += b * b
    var_a = n * saa - sa * sa
    var_b = n * sbb - sb * sb
    if var_a <= ZERO_VARIANCE_TOL * n * saa or var_b <= ZERO_VARIANCE_TOL * n * sbb:
        raise ZeroVariance("a series in the window is constant")
    r = (n * sab - sa * sb) / (math.sqrt(var_a) * math.sqrt(var_b))
    return max(-1.0, min(1.0, r))


def correlation_squared(r: float) -> float:
    return r * r


def closeness(sensor_a: float, sensor_b: float, closeness_threshold: float) -> tuple[float, float]:
    """Return (raw, clamped) closeness; raw is never above 1, clamped never below 0."""
    if not closeness_threshold > 0:
        raise InvalidThreshold("closeness_threshold must be > 0")
    raw = 1.0 - abs(sensor_a - sensor_b) / closeness_threshold
    return raw, max(raw, 0.0)


def average(sensor_a: float, sensor_b: float) -> float:
    return (sensor_a + sensor_b) / 2.0


def confidence(corr2_history: Sequence[float], gamma: float) -> float:
    if not corr2_history:
        raise ValueError("history must not be empty")
    return min(corr2_history) * gamma


def raised_threshold(current: float, rho: float, cap: float) -> float:
    return min(current * rho, cap)


def fuse(
    avg: float,
    conf: float,
    params: FusionParams,
    previous_fused: float | None,
    *,
    degraded: bool = False,
    closeness_threshold: float | None = None,
) -> tuple[float, str, dict[str, float] | None]:
    """Gate the average by confidence; returns (fused, flag, feedback).

    A zero-variance window is flagged degraded and holds the previous value
    without feedback, since no threshold change can repair a constant series.
    """
    if degraded:
        return (previous_fused if previous_fused is not None else avg), DEGRADED, None
    if conf >= params.confidence_threshold:
        return avg, OK, None
    current = params.closeness_threshold if closeness_threshold is None else closeness_threshold
    feedback = {"closeness_threshold": raised_threshold(current, params.rho, params.cap)}
    if previous_fused is None:
        return avg, DEGRADED, feedback
    return previous_fused, LOW_CONFIDENCE, feedback


# ---------------------------------------------------------------------------
# agent-hosted operators

def _accumulate(ctx: OpContext, a: float, b: float) -> list | None:
    st = ctx.state()
    st.setdefault("pairs", []).append([a, b])
    ctx.beliefs["s1"], ctx.beliefs["s2"] = a, b
    if len(st["pairs"]) < int(ctx.beliefs["window"]):
        return None
    pairs = st.pop("pairs")
    st["windows"] = st.get("windows", 0) + 1
    return pairs


def _means(pairs: list) -> tuple[float, float]:
    k = len(pairs)
    return sum(p[0] for p in pairs) / k, sum(p[1] for p in pairs) / k


def _op_correlation(values, ctx: OpContext):
    pairs = _accumulate(ctx, *values)
    if pairs is None:
        return None
    try:
        r, zv = correlation(ObservationWindow.of(pairs)), False
    except ZeroVariance:
        r, zv = 0.0, True
    ctx.notes.update({"window": ctx.state()["windows"] - 1, "r": r, "zero_variance": zv})
    return r, float(zv)


def _op_closeness(values, ctx: OpContext):
    pairs = _accumulate(ctx, *values)
    if pairs is None:
        return None
    ma, mb = _means(pairs)
    threshold = ctx.beliefs["closeness_threshold"]
    raw, gamma = closeness(ma, mb, threshold)
    ctx.notes.update({"window": ctx.state()["windows"] - 1, "gamma_raw": raw, "gamma": gamma,
                      "closeness_threshold": threshold})
    return (gamma,)


def _op_average(values, ctx: OpContext):
    pairs = _accumulate(ctx, *values)
    if pairs is None:
        return None
    avg = average(*_means(pairs))
    ctx.notes.update({"window": ctx.state()["windows"] - 1, "avg": avg})
    return (avg,)


def _op_confidence(values, ctx: OpContext):
    corr2, gamma, zv = values
    st = ctx.state()
    hist = st.setdefault("history", [])
    hist.append(corr2)
    del hist[:-int(ctx.beliefs["history"])]
    conf = confidence(hist, gamma)
    st["windows"] = st.get("windows", 0) + 1
    ctx.notes.update({"window": st["windows"] - 1, "corr2": corr2, "confidence": conf})
    return conf, zv


def _op_fuse(values, ctx: OpContext):
    avg, conf, zv = values
    b = ctx.beliefs
    params = FusionParams(
        closeness_threshold=b["closeness_threshold"], confidence_threshold=b["confidence_threshold"],
        rho=b["rho"], cap=max(b["cap"], b["closeness_threshold"]),
    )
    previous = b["last_fused"] if b["has_fused"] else None
    fused, flag, feedback = fuse(avg, conf, params, previous, degraded=bool(zv))
    b["last_fused"], b["has_fused"] = fused, 1.0
    st = ctx.state()
    st["windows"] = st.get("windows", 0) + 1
    ctx.notes.update({"window": st["windows"] - 1, "fused": fused, "flag": flag})
    if feedback:
        ctx.feedback.update(feedback)
        ctx.notes["feedback"] = feedback
    return fused, float(FLAG_CODES[flag])


register_operator("fusion.correlation", _op_correlation, 2, 2, beliefs=("window", "s1", "s2"), replace=True)
register_operator("fusion.closeness", _op_closeness, 2, 1,
                  beliefs=("window", "s1", "s2", "closeness_threshold"), replace=True)
register_operator("fusion.average", _op_average, 2, 1, beliefs=("window", "s1", "s2"), replace=True)
register_operator("fusion.confidence", _op_confidence, 3, 2, beliefs=("history",), replace=True)
register_operator("fusion.fuse", _op_fuse, 3, 2,
                  beliefs=("confidence_threshold", "closeness_threshold", "rho", "cap", "last_fused", "has_fused"),
                  replace=True)


# ---------------------------------------------------------------------------
# the five-agent system

FUSION_PARTITION = {
    "A1": ["correlate", "square"],
    "A2": ["closeness"],
    "A3": ["average"],
    "A4": ["confidence"],
    "A5": ["fuse"],
}
FUSION_PLANS = {"A1": "correlation", "A2": "closeness", "A3": "average", "A4": "confidence", "A5": "fuse"}


def fusion_graph() -> DataflowGraph:
    def custom(name: str) -> Operator:
        return Operator("custom", name=name)

    return DataflowGraph.from_actors(
        [
            ActorSpec("correlate", custom("fusion.correlation"), ("s1_a1", "s2_a1"), ("r", "zv_a1")),
            ActorSpec("square", Operator("square"), ("r",), ("corr2",)),
            ActorSpec("closeness", custom("fusion.closeness"), ("s1_a2", "s2_a2"), ("gamma",)),
            ActorSpec("average", custom("fusion.average"), ("s1_a3", "s2_a3"), ("avg",)),
            ActorSpec("confidence", custom("fusion.confidence"), ("corr2", "gamma", "zv_a1"), ("conf", "zv_a4")),
            ActorSpec("fuse", custom("fusion.fuse"), ("avg", "conf", "zv_a4"), ("fused", "flag")),
        ],
        ["s1_a1", "s2_a1", "s1_a2", "s2_a2", "s1_a3", "s2_a3"],
        ["fused", "flag"],
    )


def build_fusion_system(
    params: FusionParams | None = None,
    first: Sequence[float] = (0.0, 0.0),
    *,
    seed: int | str = 0,
) -> MultiAgentSystem:
    """Five agents in the two-level fine-grain layout; sensors s1, s2 fan out to agents 1-3.

    Initial beliefs hold ``first`` as the last-observed sensor values plus
    the thresholds.  Agent5's threshold feedback reaches Agent2 as a belief
    update, not through a link.
    """
    params = params or FusionParams()
    s1, s2 = float(first[0]), float(first[1])
    graph = fusion_graph()
    beliefs = {
        "A1": {"window": params.window, "s1": s1, "s2": s2, "correlation_threshold": params.correlation_threshold},
        "A2": {"window": params.window, "s1": s1, "s2": s2, "closeness_threshold": params.closeness_threshold},
        "A3": {"window": params.window, "s1": s1, "s2": s2},
        "A4": {"history": params.history},
        "A5": {"confidence_threshold": params.confidence_threshold,
               "closeness_threshold": params.closeness_threshold,
               "rho": params.rho, "cap": params.cap, "last_fused": 0.0, "has_fused": 0.0},
    }
    agents = []
    for cfg in agent_configs(graph, FUSION_PARTITION):
        plan = FUSION_PLANS[cfg.id]
        agents.append(configure_agent(
            cfg, beliefs[cfg.id],
            desires=DesireSet.of("fusion"),
            intentions=[Intention(1, plan, tuple(cfg.behavior.actors), serves="fusion")],
        ))
    return MultiAgentSystem(
        agents, boundary_links(graph, FUSION_PARTITION),
        input_bindings={"s1": ("s1_a1", "s1_a2", "s1_a3"), "s2": ("s2_a1", "s2_a2", "s2_a3")},
        output_names={"fused": "fused", "flag": "flag"},
        seed=seed, name="fig8-fusion",
    )


def collect_results(system: MultiAgentSystem) -> list[FusionResult]:
    """Assemble per-window results from the agents' fire events."""
    notes: dict[str, list[dict]] = {a: [] for a in FUSION_PARTITION}
    for e in system.events:
        if e.kind == FIRE and e.subject in notes and "window" in e.data.get("notes", {}):
            notes[e.subject].append(e.data["notes"])
    n = min(len(v) for v in notes.values())
    out = []
    for w in range(n):
        a1, a2, a3, a4, a5 = (notes[a][w] for a in ("A1", "A2", "A3", "A4", "A5"))
        out.append(FusionResult(
            w, a1["r"], a1["zero_variance"], a4["corr2"], a2["gamma_raw"], a2["gamma"], a3["avg"],
            a4["confidence"], a5["fused"], a5["flag"], a2["closeness_threshold"],
        ))
    return out


def run_fusion(
    rows: Sequence[Sequence[float]],
    params: FusionParams | None = None,
    *,
    seed: int | str = 0,
    max_drain: int = 64,
) -> tuple[list[FusionResult], MultiAgentSystem]:
    """Feed ``rows`` of (s1, s2), one pair per step, and fuse each full window.

    After a window's last pair the system is stepped until Agent5 has fused
    that window, so its threshold feedback always lands before the next
    window closes.  A trailing partial window is ignored.
    """
    params = params or FusionParams()
    k = params.window
    if len(rows) < k:
        raise TooFewRows(f"{len(rows)} rows, window needs {k}")
    system = build_fusion_system(params, rows[0], seed=seed)
    fuser = system.agents["A5"]
    for w in range(len(rows) // k):
        for s1, s2 in rows[w * k:(w + 1) * k]:
            system.step({"s1": s1, "s2": s2})
        for _ in range(max_drain):
            if fuser.state.firings >= w + 1:
                break
            system.step()
        else:
            raise RuntimeError(f"window {w} was not fused within {max_drain} steps")
    return collect_results(system), system


def read_sensor_trace(fp: IO[str], *, quantize: bool = False) -> list[tuple[float, float]]:
    """Read ``step,s1,s2`` rows (header required)."""
    reader = csv.reader(fp)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["step", "s1", "s2"]:
        raise ValueError(f"expected header step,s1,s2, got {header}")
    rows = []
    last_step = None
    for lineno, rec in enumerate(reader, start=2):
        if not rec or not "".join(rec).strip():
            continue
        if len(rec) != 3:
            raise ValueError(f"line {lineno}: expected 3 columns")
        step, s1, s2 = int(rec[0]), float(rec[1]), float(rec[2])
        if last_step is not None and step <= last_step:
            raise ValueError(f"line {lineno}: steps must increase")
        if not (math.isfinite(s1) and math.isfinite(s2)):
            raise ValueError(f"line {lineno}: non-finite sensor value")
        last_step = step
        rows.append((float(round(s1)), float(round(s2))) if quantize else (s1, s2))
    return rows


def write_results(fp: IO[str], results: Iterable[FusionResult]) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r.row()])
