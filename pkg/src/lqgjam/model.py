"""Game specification: dynamics, observation channel, costs and information structure.

Configuration files are TOML. Matrices are row-major nested arrays and a bare
number is shorthand for a 1x1 matrix. Stage-indexed costs (``Q``, ``Rd``,
``Ra``, ``Od``, ``Oa``) accept either one value used at every stage or a full
list of ``horizon`` values, plus an optional ``<field>_overrides`` table keyed
by stage index::

    horizon = 30
    A = 0.9
    Ra = 1.5
    Ra_overrides = { 29 = 10.0 }
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Mapping, Union

import numpy as np
import tomli
import tomli_w

PSD_TOL = 1e-10


class SpecError(ValueError):
    """Raised when a configuration cannot be turned into a valid GameSpec."""


class InfoStructure(str, enum.Enum):
    DEFENDER_LEADS = "defender_leads"
    ATTACKER_LEADS = "attacker_leads"
    SIMULTANEOUS = "simultaneous"


@dataclass(frozen=True)
class ObservationRule:
    """Maps the pair (observe, jam) to whether the measurement gets through."""

    name: str
    fn: Callable[[int, int], int]

    def __call__(self, i_d: int, i_a: int) -> int:
        return int(self.fn(int(i_d), int(i_a)))


DEFAULT_RULE = ObservationRule("default", lambda i_d, i_a: i_d * (1 - i_a))
# Either player triggering a measurement exposes it (pursuit-evasion style).
EITHER_RULE = ObservationRule("either", lambda i_d, i_a: 1 - (1 - i_d) * (1 - i_a))

OBSERVATION_RULES = {rule.name: rule for rule in (DEFAULT_RULE, EITHER_RULE)}


@dataclass(frozen=True)
class KnownExactly:
    x0: np.ndarray

    def __eq__(self, other: object) -> bool:
        return isinstance(other, KnownExactly) and np.array_equal(self.x0, other.x0)


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Gaussian)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.cov, other.cov)
        )


InitialState = Union[KnownExactly, Gaussian]

_MATRIX_FIELDS = ("A", "Bd", "Ba", "C", "D", "E", "sigma_s", "sigma_o", "Q_N")
_STAGE_MATRIX_FIELDS = ("Q", "Rd", "Ra")
_STAGE_SCALAR_FIELDS = ("Od", "Oa")


def _frozen(a: Any, ndim: int | None = None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise SpecError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Immutable problem statement.

    Stage-indexed costs are stacked arrays: ``Q`` is (N, q, q), ``Rd`` is
    (N, m_d, m_d), ``Ra`` is (N, m_a, m_a), ``Od`` and ``Oa`` are (N,).
    """

    horizon: int
    A: np.ndarray
    Bd: np.ndarray
    Ba: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    sigma_s: np.ndarray
    sigma_o: np.ndarray
    initial_state: InitialState
    Q: np.ndarray
    Q_N: np.ndarray
    Rd: np.ndarray
    Ra: np.ndarray
    Od: np.ndarray
    Oa: np.ndarray
    info_structure: InfoStructure = InfoStructure.DEFENDER_LEADS
    enforce_concavity: bool = True
    observation_rule: ObservationRule = field(default=DEFAULT_RULE)

    def __post_init__(self) -> None:
        for name in _MATRIX_FIELDS:
            object.__setattr__(self, name, _frozen(getattr(self, name), 2))
        for name in _STAGE_MATRIX_FIELDS:
            object.__setattr__(self, name, _frozen(getattr(self, name), 3))
        for name in _STAGE_SCALAR_FIELDS:
            object.__setattr__(self, name, _frozen(getattr(self, name), 1))
        init = self.initial_state
        if isinstance(init, KnownExactly):
            init = KnownExactly(_frozen(init.x0, 1))
        else:
            init = Gaussian(_frozen(init.mean, 1), _frozen(init.cov, 2))
        object.__setattr__(self, "initial_state", init)
        object.__setattr__(self, "info_structure", InfoStructure(self.info_structure))

    @property
    def q(self) -> int:
        return self.A.shape[0]

    @property
    def m_d(self) -> int:
        return self.Bd.shape[1]

    @property
    def m_a(self) -> int:
        return self.Ba.shape[1]

    @property
    def x0_mean(self) -> np.ndarray:
        init = self.initial_state
        return init.x0 if isinstance(init, KnownExactly) else init.mean

    @property
    def sigma_0(self) -> np.ndarray:
        """Prior covariance of x_0 (zero when the initial state is known)."""
        init = self.initial_state
        if isinstance(init, KnownExactly):
            return np.zeros((self.q, self.q))
        return init.cov

    @cached_property
    def perfect_observation(self) -> bool:
        """Noiseless measurement through a square invertible D."""
        noise = self.E @ self.sigma_o @ self.E.T
        D = self.D
        if np.any(noise != 0) or D.shape[0] != D.shape[1]:
            return False
        return bool(np.linalg.matrix_rank(D) == D.shape[0])

    def replace(self, **changes: Any) -> GameSpec:
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return GameSpec(**values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GameSpec):
            return NotImplemented
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray):
                if not (isinstance(b, np.ndarray) and a.shape == b.shape and np.array_equal(a, b)):
                    return False
            elif isinstance(a, ObservationRule):
                if a.name != b.name:
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self) -> str:
        return self.message


# ----------------------------------------------------------------------------
# validation


def _dimension_problems(spec: GameSpec) -> list[tuple[str, str, str]]:
    """Return (field, other_field, message) for every inconsistent pair."""
    problems: list[tuple[str, str, str]] = []
    q = spec.A.shape[0]

    def need(cond: bool, a: str, b: str, msg: str) -> None:
        if not cond:
            problems.append((a, b, msg))

    need(spec.A.shape == (q, q), "A", "A", f"A must be square, got {spec.A.shape}")
    need(spec.Bd.shape[0] == q, "Bd", "A", f"Bd has {spec.Bd.shape[0]} rows but A is {q}x{q}")
    need(spec.Ba.shape[0] == q, "Ba", "A", f"Ba has {spec.Ba.shape[0]} rows but A is {q}x{q}")
    need(spec.C.shape[0] == q, "C", "A", f"C has {spec.C.shape[0]} rows but A is {q}x{q}")
    need(spec.D.shape[1] == q, "D", "A", f"D has {spec.D.shape[1]} columns but A is {q}x{q}")
    need(spec.E.shape[0] == spec.D.shape[0], "E", "D",
         f"E has {spec.E.shape[0]} rows but D has {spec.D.shape[0]}")
    p, s = spec.C.shape[1], spec.E.shape[1]
    need(spec.sigma_s.shape == (p, p), "sigma_s", "C",
         f"sigma_s is {spec.sigma_s.shape} but C has {p} columns")
    need(spec.sigma_o.shape == (s, s), "sigma_o", "E",
         f"sigma_o is {spec.sigma_o.shape} but E has {s} columns")
    need(spec.Q_N.shape == (q, q), "Q_N", "A", f"Q_N is {spec.Q_N.shape} but A is {q}x{q}")
    N = spec.horizon
    for name, dim in (("Q", q), ("Rd", spec.Bd.shape[1]), ("Ra", spec.Ba.shape[1])):
        arr = getattr(spec, name)
        other = {"Q": "A", "Rd": "Bd", "Ra": "Ba"}[name]
        need(arr.shape[1:] == (dim, dim), name, other,
             f"{name} stages are {arr.shape[1:]} but {other} implies {dim}x{dim}")
        need(arr.shape[0] == N, name, "horizon", f"{name} has {arr.shape[0]} stages but horizon is {N}")
    for name in _STAGE_SCALAR_FIELDS:
        arr = getattr(spec, name)
        need(arr.shape == (N,), name, "horizon", f"{name} has {arr.shape[0]} stages but horizon is {N}")
    need(spec.x0_mean.shape == (q,), "x0", "A", f"x0 has length {spec.x0_mean.shape[0]} but A is {q}x{q}")
    if isinstance(spec.initial_state, Gaussian):
        need(spec.initial_state.cov.shape == (q, q), "sigma_0", "A",
             f"sigma_0 is {spec.initial_state.cov.shape} but A is {q}x{q}")
    return problems


def _min_eig(M: np.ndarray) -> float:
    if M.size == 0:
        return math.inf
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def validate(spec: GameSpec) -> list[Violation]:
    """Check every invariant of ``spec``; an empty list means valid."""
    out: list[Violation] = []
    if not isinstance(spec.horizon, (int, np.integer)) or spec.horizon < 1:
        out.append(Violation("horizon", f"horizon must be a positive integer, got {spec.horizon!r}"))
        return out
    dims = _dimension_problems(spec)
    if dims:
        return [Violation(a, msg) for a, _, msg in dims]

    for name, arr in (("A", spec.A), ("Bd", spec.Bd), ("Ba", spec.Ba), ("C", spec.C),
                      ("D", spec.D), ("E", spec.E)):
        if not np.all(np.isfinite(arr)):
            out.append(Violation(name, f"{name} has non-finite entries"))

    def psd(name: str, M: np.ndarray) -> None:
        if not np.all(np.isfinite(M)):
            out.append(Violation(name, f"{name} has non-finite entries"))
            return
        if not np.allclose(M, M.T, rtol=0.0, atol=1e-9 * max(1.0, float(np.abs(M).max(initial=0.0)))):
            out.append(Violation(name, f"{name} not symmetric"))
        lam = _min_eig(M)
        if lam < -PSD_TOL:
            out.append(Violation(name, f"{name} not positive semidefinite (min eigenvalue {lam:.6g})"))

    def pd(name: str, M: np.ndarray) -> None:
        if not np.all(np.isfinite(M)):
            out.append(Violation(name, f"{name} has non-finite entries"))
            return
        lam = _min_eig(M)
        if not lam > 0:
            out.append(Violation(name, f"{name} not positive definite (min eigenvalue {lam:.6g})"))

    psd("sigma_s", spec.sigma_s)
    psd("sigma_o", spec.sigma_o)
    if isinstance(spec.initial_state, Gaussian):
        psd("sigma_0", spec.initial_state.cov)
    for n in range(spec.horizon):
        psd(f"Q[{n}]", spec.Q[n])
        pd(f"Rd[{n}]", spec.Rd[n])
        pd(f"Ra[{n}]", spec.Ra[n])
        for name in _STAGE_SCALAR_FIELDS:
            v = float(getattr(spec, name)[n])
            if not math.isfinite(v):
                out.append(Violation(name, f"{name}[{n}] not finite"))
            elif v < 0:
                out.append(Violation(name, f"{name}[{n}] negative ({v:g})"))
    psd("Q_N", spec.Q_N)
    return out


# ----------------------------------------------------------------------------
# parsing


_REQUIRED = ("horizon", "A", "Bd", "Ba", "C", "D", "E", "sigma_s", "sigma_o", "Q", "Q_N", "Rd", "Ra", "x0")
_KNOWN = set(_REQUIRED) | {
    "Od", "Oa", "sigma_0", "info_structure", "enforce_concavity", "observation_rule",
    "Q_overrides", "Rd_overrides", "Ra_overrides", "Od_overrides", "Oa_overrides",
}


def _as_matrix(name: str, value: Any) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"field '{name}': not a numeric matrix ({exc})") from None
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 1 and arr.size == 0:
        return arr.reshape(0, 0)
    raise SpecError(f"field '{name}': expected a number or a 2-d nested array, got {arr.ndim}-d")


def _as_vector(name: str, value: Any) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"field '{name}': not a numeric vector ({exc})") from None
    if arr.ndim == 0:
        return arr.reshape(1)
    if arr.ndim != 1:
        raise SpecError(f"field '{name}': expected a number or a flat array, got {arr.ndim}-d")
    return arr


def _overrides(raw: Mapping[str, Any], name: str, horizon: int) -> dict[int, Any]:
    table = raw.get(f"{name}_overrides", {})
    if not isinstance(table, Mapping):
        raise SpecError(f"field '{name}_overrides': expected a table keyed by stage index")
    out = {}
    for key, value in table.items():
        try:
            n = int(key)
        except ValueError:
            raise SpecError(f"field '{name}_overrides': stage key {key!r} is not an integer") from None
        if not 0 <= n < horizon:
            raise SpecError(f"field '{name}_overrides': stage {n} outside 0..{horizon - 1}")
        out[n] = value
    return out


def _stage_matrices(raw: Mapping[str, Any], name: str, horizon: int) -> np.ndarray:
    value = raw[name]
    try:
        depth = np.ndim(value) if not isinstance(value, list) or value else 1
    except ValueError:
        raise SpecError(f"field '{name}': ragged nested array") from None
    if depth == 1:
        # one scalar per stage, each a 1x1 matrix
        stages = [_as_matrix(f"{name}[{n}]", v) for n, v in enumerate(value)]
    elif depth == 3:
        stages = [_as_matrix(f"{name}[{n}]", v) for n, v in enumerate(value)]
    else:
        stages = [_as_matrix(name, value)] * horizon
    if len(stages) != horizon:
        raise SpecError(f"field '{name}': {len(stages)} stages given but horizon is {horizon}")
    for n, v in _overrides(raw, name, horizon).items():
        stages[n] = _as_matrix(f"{name}_overrides[{n}]", v)
    shapes = {s.shape for s in stages}
    if len(shapes) > 1:
        raise SpecError(f"field '{name}': stage matrices have differing shapes {sorted(shapes)}")
    return np.stack(stages) if stages else np.zeros((0, 0, 0))


def _stage_scalars(raw: Mapping[str, Any], name: str, horizon: int) -> np.ndarray:
    value = raw.get(name, 0.0)
    if isinstance(value, list):
        if len(value) != horizon:
            raise SpecError(f"field '{name}': {len(value)} stages given but horizon is {horizon}")
        vals = [float(v) for v in value]
    else:
        try:
            vals = [float(value)] * horizon
        except (TypeError, ValueError):
            raise SpecError(f"field '{name}': expected a number or a list of numbers") from None
    for n, v in _overrides(raw, name, horizon).items():
        vals[n] = float(v)
    return np.array(vals, dtype=float)


def spec_from_mapping(raw: Mapping[str, Any]) -> GameSpec:
    """Build and validate a GameSpec from an already-decoded config mapping."""
    missing = [k for k in _REQUIRED if k not in raw]
    if "Ra" in missing and "Ba" in raw and np.size(raw["Ba"]) == 0:
        missing.remove("Ra")
    if missing:
        raise SpecError(f"missing required field(s): {', '.join(missing)}")
    unknown = sorted(set(raw) - _KNOWN)
    if unknown:
        raise SpecError(f"unknown field(s): {', '.join(unknown)}")

    horizon = raw["horizon"]
    if isinstance(horizon, bool) or not isinstance(horizon, int) or horizon < 1:
        raise SpecError(f"field 'horizon': expected a positive integer, got {horizon!r}")

    mats = {name: _as_matrix(name, raw[name]) for name in _MATRIX_FIELDS}
    if mats["Ba"].size == 0:
        mats["Ba"] = np.zeros((mats["A"].shape[0], 0))
    stage_mats = {}
    for name in _STAGE_MATRIX_FIELDS:
        if name == "Ra" and "Ra" not in raw:
            stage_mats[name] = np.zeros((horizon, 0, 0))
        else:
            stage_mats[name] = _stage_matrices(raw, name, horizon)
    stage_scalars = {name: _stage_scalars(raw, name, horizon) for name in _STAGE_SCALAR_FIELDS}

    x0 = _as_vector("x0", raw["x0"])
    if "sigma_0" in raw:
        initial: InitialState = Gaussian(x0, _as_matrix("sigma_0", raw["sigma_0"]))
    else:
        initial = KnownExactly(x0)

    try:
        info = InfoStructure(raw.get("info_structure", InfoStructure.DEFENDER_LEADS.value))
    except ValueError:
        choices = ", ".join(i.value for i in InfoStructure)
        raise SpecError(f"field 'info_structure': must be one of {choices}") from None
    rule_name = raw.get("observation_rule", DEFAULT_RULE.name)
    if rule_name not in OBSERVATION_RULES:
        raise SpecError(f"field 'observation_rule': unknown rule {rule_name!r}")
    concave = raw.get("enforce_concavity", True)
    if not isinstance(concave, bool):
        raise SpecError("field 'enforce_concavity': expected true or false")

    spec = GameSpec(
        horizon=horizon,
        initial_state=initial,
        info_structure=info,
        enforce_concavity=concave,
        observation_rule=OBSERVATION_RULES[rule_name],
        **mats,
        **stage_mats,
        **stage_scalars,
    )
    dims = _dimension_problems(spec)
    if dims:
        a, b, msg = dims[0]
        raise SpecError(f"dimension mismatch between '{a}' and '{b}': {msg}")
    violations = validate(spec)
    if violations:
        raise SpecError("invalid spec: " + "; ".join(str(v) for v in violations))
    return spec


def parse_spec(config_text: str) -> GameSpec:
    """Parse TOML config text into a validated GameSpec."""
    try:
        raw = tomli.loads(config_text)
    except tomli.TOMLDecodeError as exc:
        raise SpecError(f"parse error: {exc}") from None
    return spec_from_mapping(raw)


def load_spec(path: str) -> GameSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


def spec_to_mapping(spec: GameSpec) -> dict[str, Any]:
    """Inverse of :func:`spec_from_mapping`, with every stage listed explicitly."""
    raw: dict[str, Any] = {
        "horizon": int(spec.horizon),
        "info_structure": spec.info_structure.value,
        "enforce_concavity": bool(spec.enforce_concavity),
        "observation_rule": spec.observation_rule.name,
    }
    for name in _MATRIX_FIELDS:
        raw[name] = getattr(spec, name).tolist()
    if spec.m_a == 0:
        raw["Ba"] = [[] for _ in range(spec.q)]
    for name in _STAGE_MATRIX_FIELDS:
        if name == "Ra" and spec.m_a == 0:
            continue
        raw[name] = getattr(spec, name).tolist()
    for name in _STAGE_SCALAR_FIELDS:
        raw[name] = getattr(spec, name).tolist()
    raw["x0"] = spec.x0_mean.tolist()
    if isinstance(spec.initial_state, Gaussian):
        raw["sigma_0"] = spec.initial_state.cov.tolist()
    return raw


def serialize_spec(spec: GameSpec) -> str:
    return tomli_w.dumps(spec_to_mapping(spec))
