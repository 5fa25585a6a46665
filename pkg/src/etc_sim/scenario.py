"""Line-oriented scenario documents and the built-in scenarios.

A document is a sequence of ``[section]`` headers and ``key = value`` lines;
``#`` starts a comment. Matrices are written row by row with ``;`` between
rows. See ``FLEXIBLE_LINK_REFERENCE`` below for a complete example.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .models import (
    MODEL_REGISTRY,
    LinearController,
    LipschitzAffinePlant,
    LuenbergerObserver,
    NodePartition,
    Nonlinearity,
    PhiTerm,
    builtin_plant,
)
from .numcore import DEFAULT_DT, DEFAULT_EVENT_TOL
from .simulator import DEFAULT_MAX_EVENTS, DisturbanceEvent, Scenario
from .triggering import (
    EpsilonCrossing,
    IdealNode,
    LyapunovPair,
    Mixed,
    NodeRelativeActuator,
    NodeRelativeSensor,
    Periodic,
    RelativeState,
    StateDependent,
    TriggerPolicy,
    build_certificate,
)

FLEXIBLE_LINK_REFERENCE = """\
# Flexible-link robot, event-triggered observer-based control.
name = flexible-link-paper

[model]
name = flexible-link

[gains]
# published feedback row, applied as u = -K xhat
K = 7.8428 1.1212 -4.3666 1.1243
K_sign = -1
L = 9.3334 1.0001; -48.7804 22.3665; -0.0524 3.3194; 19.4066 -0.3167

[initial]
x0 = 1 1 1 1
xhat0 = 0 0 0 0

[sim]
t_end = 15
dt = 0.001
event_tol = 1e-6

[triggers]
# tuned thresholds, far outside the certified budget
budget = ignore
u1 = relative factor=0.2 dwell=0.01
y1 = relative factor=0.2 dwell=0.01
y2 = relative factor=0.2 dwell=0.01

[disturbances]
impulse = 2 : 1 1 1 1

[outputs]
csv = flexible-link-paper.csv
svg = flexible-link-paper.svg
report = flexible-link-paper.report
"""

FLEXIBLE_LINK_AUTO = FLEXIBLE_LINK_REFERENCE.replace("name = flexible-link-paper", "name = flexible-link-auto").replace(
    """budget = ignore
u1 = relative factor=0.2 dwell=0.01
y1 = relative factor=0.2 dwell=0.01
y2 = relative factor=0.2 dwell=0.01""",
    """budget = enforce
u1 = auto
y1 = auto
y2 = auto""",
).replace("# tuned thresholds, far outside the certified budget\n", "").replace(
    "flexible-link-paper.", "flexible-link-auto.")

BUILTIN_SCENARIOS = {
    "flexible-link-paper": FLEXIBLE_LINK_REFERENCE,
    "flexible-link-auto": FLEXIBLE_LINK_AUTO,
}

_SECTIONS = {"", "model", "gains", "initial", "sim", "triggers", "disturbances", "outputs"}


def _numbers(text: str, line: int) -> list[float]:
    out = []
    for tok in text.replace(",", " ").split():
        try:
            v = float(tok)
        except ValueError:
            raise ParseError(line, f"not a number: {tok!r}") from None
        if not math.isfinite(v):
            raise ParseError(line, f"non-finite number: {tok!r}")
        out.append(v)
    if not out:
        raise ParseError(line, "expected at least one number")
    return out


def _matrix(text: str, line: int) -> np.ndarray:
    rows = [_numbers(r, line) for r in text.split(";") if r.strip()]
    if not rows:
        raise ParseError(line, "empty matrix")
    if len({len(r) for r in rows}) != 1:
        raise ParseError(line, "matrix rows have different lengths")
    return np.array(rows)


def _scalar(text: str, line: int) -> float:
    vals = _numbers(text, line)
    if len(vals) != 1:
        raise ParseError(line, "expected a single number")
    return vals[0]


def _params(tokens: list[str], line: int, allowed: set[str]) -> dict[str, float]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ParseError(line, f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        if k not in allowed:
            raise ParseError(line, f"unknown parameter {k!r}; expected one of {sorted(allowed)}")
        out[k] = _scalar(v, line)
    missing = allowed - set(out)
    if missing:
        raise ParseError(line, f"missing parameter(s) {sorted(missing)}")
    return out


def parse_policy(text: str, kind: str, line: int) -> TriggerPolicy | None:
    """Policy from its one-line form; ``None`` means ``auto``."""
    tokens = text.split()
    if not tokens:
        raise ParseError(line, "empty trigger policy")
    head, rest = tokens[0], tokens[1:]
    try:
        if head == "auto":
            if rest:
                raise ParseError(line, "auto takes no parameters")
            return None
        if head == "periodic":
            return Periodic(_params(rest, line, {"delta"})["delta"])
        if head == "epsilon":
            return EpsilonCrossing(_params(rest, line, {"eps"})["eps"])
        if head == "state":
            p = _params(rest, line, {"sigma", "eps"})
            return StateDependent(p["sigma"], p["eps"])
        if head == "mixed":
            p = _params(rest, line, {"eps", "dwell"})
            return Mixed(p["eps"], p["dwell"])
        if head == "relative-state":
            return RelativeState(_params(rest, line, {"sigma"})["sigma"])
        if head == "relative":
            p = _params(rest, line, {"factor", "dwell"})
            if kind == "actuator":
                return NodeRelativeActuator(p["factor"], 1.0, p["dwell"])
            return NodeRelativeSensor(2.0 * p["factor"], 1.0, p["dwell"])
        if head == "actuator":
            p = _params(rest, line, {"kappa", "L_gamma", "dwell"})
            return NodeRelativeActuator(p["kappa"], p["L_gamma"], p["dwell"])
        if head == "sensor":
            p = _params(rest, line, {"kappa", "L_h", "dwell"})
            return NodeRelativeSensor(p["kappa"], p["L_h"], p["dwell"])
        if head == "ideal":
            p = _params(rest, line, {"kappa", "dwell"})
            return IdealNode(p["kappa"], p["dwell"])
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(line, str(exc)) from None
    raise ParseError(line, f"unknown trigger policy {head!r}")


def format_policy(policy: TriggerPolicy | None) -> str:
    r = repr
    if policy is None:
        return "auto"
    if isinstance(policy, Periodic):
        return f"periodic delta={r(policy.delta)}"
    if isinstance(policy, EpsilonCrossing):
        return f"epsilon eps={r(policy.epsilon)}"
    if isinstance(policy, StateDependent):
        return f"state sigma={r(policy.sigma)} eps={r(policy.epsilon)}"
    if isinstance(policy, Mixed):
        return f"mixed eps={r(policy.epsilon)} dwell={r(policy.delta_min)}"
    if isinstance(policy, RelativeState):
        return f"relative-state sigma={r(policy.sigma)}"
    if isinstance(policy, NodeRelativeActuator):
        return f"actuator kappa={r(policy.kappa)} L_gamma={r(policy.L_gamma)} dwell={r(policy.tau_min)}"
    if isinstance(policy, NodeRelativeSensor):
        return f"sensor kappa={r(policy.kappa)} L_h={r(policy.L_h)} dwell={r(policy.tau_min)}"
    if isinstance(policy, IdealNode):
        return f"ideal kappa={r(policy.kappa)} dwell={r(policy.tau_min)}"
    raise TypeError(f"cannot format {policy!r}")


def _parse_phi(text: str, n: int, line: int) -> Nonlinearity:
    terms = []
    for chunk in text.split(";"):
        tok = chunk.split()
        if not tok:
            continue
        if len(tok) != 4:
            raise ParseError(line, "phi terms are '<out> <gain> <func> <src>' separated by ';'")
        try:
            out, gain, func, src = int(tok[0]) - 1, float(tok[1]), tok[2], int(tok[3]) - 1
            terms.append(PhiTerm(out, gain, func, src))
        except ValueError as exc:
            raise ParseError(line, f"bad phi term {chunk.strip()!r}: {exc}") from None
    try:
        return Nonlinearity(n, tuple(terms))
    except ValueError as exc:
        raise ParseError(line, str(exc)) from None


def _read_sections(document: str) -> dict[str, dict[str, tuple[str, int]]]:
    sections: dict[str, dict[str, tuple[str, int]]] = {"": {}}
    current = ""
    content = False
    for lineno, raw in enumerate(document.splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        content = True
        if text.startswith("["):
            if not text.endswith("]"):
                raise ParseError(lineno, f"malformed section header {text!r}")
            current = text[1:-1].strip()
            if current not in _SECTIONS:
                raise ParseError(lineno, f"unknown section [{current}]")
            if current in sections and current:
                raise ParseError(lineno, f"duplicate section [{current}]")
            sections[current] = {}
            continue
        if "=" not in text:
            raise ParseError(lineno, f"expected 'key = value', got {text!r}")
        key, value = (s.strip() for s in text.split("=", 1))
        if not key:
            raise ParseError(lineno, "missing key")
        if key in sections[current]:
            raise ParseError(lineno, f"duplicate key {key!r}")
        sections[current][key] = (value, lineno)
    if not content:
        raise ParseError(1, "empty scenario document")
    return sections


def parse_scenario(document: str) -> Scenario:
    secs = _read_sections(document)
    last_line = max(1, len(document.splitlines()))

    def need(section: str, key: str) -> tuple[str, int]:
        if section not in secs:
            raise ParseError(last_line, f"missing section [{section}]")
        if key not in secs[section]:
            raise ParseError(last_line, f"missing key {key!r} in [{section}]")
        return secs[section][key]

    def known(section: str, keys: set[str]) -> None:
        for key, (_, line) in secs.get(section, {}).items():
            if key not in keys:
                raise ParseError(line, f"unknown key {key!r} in [{section or 'top level'}]")

    known("", {"name"})
    name = secs[""].get("name", ("scenario", 1))[0]

    # model
    model = secs.get("model")
    if model is None:
        raise ParseError(last_line, "missing section [model]")
    known("model", {"name", "A", "B", "C", "phi", "rho", "inputs", "outputs"})
    model_name = None
    if "name" in model:
        value, line = model["name"]
        if value not in MODEL_REGISTRY:
            raise ParseError(line, f"unknown model {value!r}; known: {', '.join(sorted(MODEL_REGISTRY))}")
        if any(k in model for k in ("A", "B", "C", "phi", "rho", "inputs", "outputs")):
            raise ParseError(line, "a named model cannot be combined with inline matrices")
        plant = builtin_plant(value)
        model_name = value
    else:
        A = _matrix(*need("model", "A"))
        B = _matrix(*need("model", "B"))
        C = _matrix(*need("model", "C"))
        n = A.shape[0]
        phi = _parse_phi(*model["phi"], n) if "phi" in model else Nonlinearity(n)
        rho = _scalar(*model["rho"]) if "rho" in model else phi.lipschitz_bound()
        try:
            inputs = (NodePartition.from_widths(int(w) for w in _numbers(*model["inputs"]))
                      if "inputs" in model else NodePartition.singletons(B.shape[1]))
            outputs = (NodePartition.from_widths(int(w) for w in _numbers(*model["outputs"]))
                       if "outputs" in model else NodePartition.singletons(C.shape[0]))
            plant = LipschitzAffinePlant(A, B, C, phi, rho, inputs, outputs, name=name)
        except ValueError as exc:
            raise ValidationError(f"[model]: {exc}") from None

    # gains
    known("gains", {"K", "K_sign", "L"})
    K = _matrix(*need("gains", "K"))
    if "K_sign" in secs["gains"]:
        sign = _scalar(*secs["gains"]["K_sign"])
        if sign not in (1.0, -1.0):
            raise ParseError(secs["gains"]["K_sign"][1], "K_sign must be 1 or -1")
        K = sign * K
    L = _matrix(*need("gains", "L"))
    n, m, p = plant.n, plant.m, plant.p
    if K.size != m * n:
        raise ValidationError(f"K has {K.size} entries, expected {m}x{n}")
    if L.size != n * p:
        raise ValidationError(f"L has {L.size} entries, expected {n}x{p}")
    K, L = K.reshape(m, n), L.reshape(n, p)

    known("initial", {"x0", "xhat0"})
    x0 = _numbers(*need("initial", "x0"))
    xhat0 = _numbers(*secs["initial"]["xhat0"]) if "xhat0" in secs["initial"] else [0.0] * n

    sim = secs.get("sim", {})
    known("sim", {"t_end", "dt", "event_tol", "max_events_per_node"})
    t_end = _scalar(*need("sim", "t_end"))
    dt = _scalar(*sim["dt"]) if "dt" in sim else DEFAULT_DT
    event_tol = _scalar(*sim["event_tol"]) if "event_tol" in sim else DEFAULT_EVENT_TOL
    max_events = int(_scalar(*sim["max_events_per_node"])) if "max_events_per_node" in sim else DEFAULT_MAX_EVENTS

    # triggers: actuators u1..uq then sensors y1..yr
    trig = secs.get("triggers", {})
    q, r = len(plant.input_partition), len(plant.output_partition)
    labels = [f"u{i + 1}" for i in range(q)] + [f"y{j + 1}" for j in range(r)]
    known("triggers", set(labels) | {"budget"})
    budget = trig.get("budget", ("ignore", 0))[0]
    if budget not in ("ignore", "enforce"):
        raise ParseError(trig["budget"][1], "budget must be 'ignore' or 'enforce'")
    policies: list[TriggerPolicy | None] = []
    for idx, label in enumerate(labels):
        if label not in trig:
            raise ParseError(last_line, f"missing trigger policy for node {label}")
        policies.append(parse_policy(trig[label][0], "actuator" if idx < q else "sensor", trig[label][1]))

    disturbances = []
    for key, (value, line) in secs.get("disturbances", {}).items():
        if ":" not in value:
            raise ParseError(line, "disturbance is '<time> : <jump vector>'")
        when, jump = value.split(":", 1)
        disturbances.append(DisturbanceEvent(_scalar(when, line), _numbers(jump, line)))

    known("outputs", {"csv", "svg", "report"})
    outputs = {k: v for k, (v, _) in secs.get("outputs", {}).items()}

    auto = [pol is None for pol in policies]
    need_cert = any(auto) or budget == "enforce"
    cert = None
    if need_cert:
        try:
            ctrl = LinearController(K, plant.input_partition)
            obs = LuenbergerObserver(L, plant.C, plant.output_partition)
            cert = build_certificate(plant, ctrl, obs, LyapunovPair.from_gains(plant, ctrl, obs))
        except Exception as exc:  # surfaced as a validation failure of the document
            raise ValidationError(f"cannot derive a certificate for auto triggers / budget: {exc}") from exc
        derived = cert.actuator_policies() + cert.sensor_policies()
        policies = [derived[i] if pol is None else pol for i, pol in enumerate(policies)]
        if budget == "enforce":
            kappas = [getattr(pol, "kappa", None) for pol in policies]
            if any(k is None for k in kappas):
                raise ValidationError("budget enforcement needs kappa-carrying node policies")
            if math.fsum(kappas) > cert.sigma_prime * (1 + 1e-12):
                raise ValidationError(f"sum(kappa)={math.fsum(kappas):.6g} exceeds sigma'={cert.sigma_prime:.6g}")

    return Scenario(
        plant=plant, K=K, L=L, policies=policies, x0=x0, xhat0=xhat0, t_end=t_end, dt=dt,
        event_tol=event_tol, disturbances=disturbances, name=name, model_name=model_name,
        auto_triggers=auto if any(auto) else None, budget=budget, outputs=outputs,
        max_events_per_node=max_events,
    )


def _fmt_row(v) -> str:
    return " ".join(repr(float(x)) for x in np.ravel(v))


def _fmt_matrix(M) -> str:
    return "; ".join(_fmt_row(row) for row in np.atleast_2d(M))


def serialize_scenario(sc: Scenario) -> str:
    lines = [f"name = {sc.name}", "", "[model]"]
    if sc.model_name:
        lines.append(f"name = {sc.model_name}")
    else:
        pl = sc.plant
        lines += [f"A = {_fmt_matrix(pl.A)}", f"B = {_fmt_matrix(pl.B)}", f"C = {_fmt_matrix(pl.C)}"]
        if pl.phi.terms:
            terms = "; ".join(f"{t.out + 1} {t.gain!r} {t.func} {t.src + 1}" for t in pl.phi.terms)
            lines.append(f"phi = {terms}")
        lines += [f"rho = {float(pl.rho)!r}",
                  "inputs = " + " ".join(str(w) for w in pl.input_partition.widths),
                  "outputs = " + " ".join(str(w) for w in pl.output_partition.widths)]
    lines += ["", "[gains]", f"K = {_fmt_matrix(sc.K)}", f"L = {_fmt_matrix(sc.L)}",
              "", "[initial]", f"x0 = {_fmt_row(sc.x0)}", f"xhat0 = {_fmt_row(sc.xhat0)}",
              "", "[sim]", f"t_end = {sc.t_end!r}", f"dt = {sc.dt!r}", f"event_tol = {sc.event_tol!r}",
              f"max_events_per_node = {sc.max_events_per_node}",
              "", "[triggers]", f"budget = {sc.budget}"]
    q = sc.actuator_count
    auto = sc.auto_triggers or [False] * len(sc.policies)
    for i, pol in enumerate(sc.policies):
        label = f"u{i + 1}" if i < q else f"y{i - q + 1}"
        lines.append(f"{label} = {format_policy(None if auto[i] else pol)}")
    if sc.disturbances:
        lines += ["", "[disturbances]"]
        for k, d in enumerate(sc.disturbances):
            lines.append(f"jump{k + 1} = {d.time!r} : {_fmt_row(d.state_jump)}")
    if sc.outputs:
        lines += ["", "[outputs]"] + [f"{k} = {v}" for k, v in sorted(sc.outputs.items())]
    return "\n".join(lines) + "\n"


def load_scenario(ref: str) -> Scenario:
    """Built-in scenario name or path to a scenario document."""
    if ref in BUILTIN_SCENARIOS:
        return parse_scenario(BUILTIN_SCENARIOS[ref])
    path = Path(ref)
    if not path.is_file():
        raise FileNotFoundError(f"no built-in scenario or file named {ref!r}")
    return parse_scenario(path.read_text())
