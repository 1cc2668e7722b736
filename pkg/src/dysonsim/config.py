"""Experiment configuration: YAML parsing, validation and named presets.

Complex numbers are written as ``[re, im]`` pairs; operators as maps from
Pauli words to coefficients, e.g. ``{X: 0.5, Y: [0, -0.5]}`` for sigma_minus.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import numpy as np
import yaml

from .errors import ValidationError
from .estimator import MODES
from .model import LindbladModel, NonHermitianModel, RateFunction, density_matrix
from .pauli import MAX_QUBITS, pauli_matrix, validate_word

PRESET_ALIASES = {"dephasing-σz": "dephasing-sigmaz"}

_SQ = 1.0 / math.sqrt(2.0)
PRODUCT_STATES = {
    "e": (1.0, 0.0),
    "g": (0.0, 1.0),
    "+": (_SQ, _SQ),
    "-": (_SQ, -_SQ),
    "r": (_SQ, 1j * _SQ),
    "l": (_SQ, -1j * _SQ),
}

KNOWN_KEYS = {
    "name", "description", "qubits", "hamiltonian", "lindblads", "non_hermitian", "initial_state",
    "observable", "times", "orders", "epsilon", "budget", "mode", "seed", "oracle_steps",
}


class ConfigError(ValidationError):
    def __init__(self, key: str, detail: str, line: int | None = None):
        where = key + (f" (line {line})" if line else "")
        super().__init__(f"config {where}: {detail}")
        self.key = key
        self.detail = detail
        self.line = line


def _complex(value, key: str) -> complex:
    if isinstance(value, bool):
        raise ConfigError(key, f"expected a number or [re, im], got {value!r}")
    if isinstance(value, (int, float)):
        return complex(float(value))
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return complex(float(value[0]), float(value[1]))
    raise ConfigError(key, f"expected a number or [re, im], got {value!r}")


def _encode_complex(z: complex):
    return [z.real, z.imag]


def _pauli_map(raw, qubits: int, key: str) -> dict[str, complex]:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(key, "expected a map from Pauli words to coefficients")
    out: dict[str, complex] = {}
    for word, coeff in raw.items():
        try:
            w = validate_word(str(word), qubits)
        except ValidationError as exc:
            raise ConfigError(f"{key}.{word}", str(exc)) from None
        out[w] = out.get(w, 0.0) + _complex(coeff, f"{key}.{word}")
    return out


def _operator(terms: dict[str, complex], qubits: int) -> np.ndarray:
    out = np.zeros((2**qubits, 2**qubits), dtype=np.complex128)
    for w, q in terms.items():
        out += q * pauli_matrix(w)
    return out


def _rate(raw, key: str) -> RateFunction:
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return RateFunction.constant(float(raw))
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError(key, "rate must be a number or a map with 'kind'")
    kind = raw["kind"]
    try:
        if kind == "constant":
            return RateFunction.constant(float(raw["value"]))
        if kind == "sinusoid":
            return RateFunction.sinusoid(float(raw["amplitude"]), float(raw["omega"]), float(raw.get("phase", 0.0)))
        if kind == "tabulated":
            return RateFunction.tabulated([float(x) for x in raw["grid"]], [float(x) for x in raw["values"]])
    except KeyError as exc:
        raise ConfigError(key, f"missing field {exc.args[0]!r} for rate kind {kind!r}") from None
    except ValidationError as exc:
        raise ConfigError(key, str(exc)) from None
    raise ConfigError(key, f"unknown rate kind {kind!r}")


def _times(raw) -> tuple[float, ...]:
    if isinstance(raw, dict):
        try:
            vals = np.linspace(float(raw["start"]), float(raw["stop"]), int(raw["num"]))
        except KeyError as exc:
            raise ConfigError("times", f"missing field {exc.args[0]!r}") from None
    elif isinstance(raw, (list, tuple)):
        vals = np.array([float(x) for x in raw])
    elif isinstance(raw, (int, float)) and not isinstance(raw, bool):
        vals = np.array([float(raw)])
    else:
        raise ConfigError("times", "expected a list or {start, stop, num}")
    if vals.size == 0:
        raise ConfigError("times", "at least one time is required")
    if np.any(vals <= 0) or np.any(np.diff(vals) <= 0):
        raise ConfigError("times", "times must be positive and strictly increasing")
    return tuple(float(x) for x in vals)


@dataclass(frozen=True)
class LindbladSpec:
    operator: dict[str, complex]
    rate: RateFunction


@dataclass(frozen=True)
class ExperimentConfig:
    qubits: int
    hamiltonian: dict[str, complex]
    observable: dict[str, complex]
    initial_state: Any
    times: tuple[float, ...]
    lindblads: tuple[LindbladSpec, ...] = ()
    gamma: dict[str, complex] | None = None
    orders: int | None = None
    epsilon: float | None = None
    c: float = 0.5
    beta: float = 2.0
    samples: int | None = None
    delta: float | None = None
    mode: str = "exact-mean"
    seed: int = 0
    oracle_steps: int = 2000
    name: str = "custom"
    description: str = ""
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def is_non_hermitian(self) -> bool:
        return self.gamma is not None

    def build_model(self):
        if "model" not in self._cache:
            H = _operator(self.hamiltonian, self.qubits)
            if self.is_non_hermitian:
                model = NonHermitianModel(H, _operator(self.gamma, self.qubits))
            else:
                model = LindbladModel.build(H, [(_operator(l.operator, self.qubits), l.rate) for l in self.lindblads])
            self._cache["model"] = model
        return self._cache["model"]

    def observable_matrix(self) -> np.ndarray:
        return _operator(self.observable, self.qubits)

    def rho0(self) -> np.ndarray:
        return parse_state(self.initial_state, self.qubits)

    @property
    def sampled(self) -> bool:
        return self.mode != "deterministic-quadrature"

    def to_dict(self) -> dict:
        """Plain-data echo that ``from_dict`` parses back to the same config."""
        d: dict[str, Any] = {
            "name": self.name,
            "description": self.description,
            "qubits": self.qubits,
            "hamiltonian": {w: _encode_complex(q) for w, q in sorted(self.hamiltonian.items())},
            "observable": {w: _encode_complex(q) for w, q in sorted(self.observable.items())},
            "initial_state": _encode_state(self.initial_state),
            "times": list(self.times),
            "mode": self.mode,
            "seed": self.seed,
            "oracle_steps": self.oracle_steps,
            "budget": {"c": self.c, "beta": self.beta},
        }
        if self.samples is not None:
            d["budget"]["samples"] = self.samples
        if self.delta is not None:
            d["budget"]["delta"] = self.delta
        if self.is_non_hermitian:
            d["non_hermitian"] = {"gamma": {w: _encode_complex(q) for w, q in sorted(self.gamma.items())}}
        else:
            d["lindblads"] = [
                {"operator": {w: _encode_complex(q) for w, q in sorted(l.operator.items())}, "rate": l.rate.to_dict()}
                for l in self.lindblads
            ]
        if self.orders is not None:
            d["orders"] = self.orders
        if self.epsilon is not None:
            d["epsilon"] = self.epsilon
        return d


def _encode_state(state):
    if isinstance(state, str):
        return state
    arr = np.asarray(state, dtype=np.complex128)
    key = "vector" if arr.ndim == 1 else "density"
    return {key: np.stack([arr.real, arr.imag], axis=-1).tolist()}


def parse_state(raw, qubits: int) -> np.ndarray:
    """Density matrix from a product string over e/g/+/-/r/l, a vector or a density literal."""
    dim = 2**qubits
    if isinstance(raw, str):
        if len(raw) != qubits or any(ch not in PRODUCT_STATES for ch in raw):
            raise ConfigError(
                "initial_state", f"{raw!r} must have one letter per qubit from {''.join(PRODUCT_STATES)}"
            )
        vec = np.ones(1, dtype=np.complex128)
        for ch in raw:
            vec = np.kron(vec, np.array(PRODUCT_STATES[ch], dtype=np.complex128))
        return density_matrix(vec, dim)
    arr = np.asarray(raw, dtype=np.complex128)
    try:
        return density_matrix(arr, dim)
    except ValidationError as exc:
        raise ConfigError("initial_state", str(exc)) from None


def _raw_state(raw, qubits: int):
    """Normalize the YAML form of the initial state (entries may be [re, im])."""
    if isinstance(raw, str):
        parse_state(raw, qubits)
        return raw
    if isinstance(raw, dict) and len(raw) == 1 and next(iter(raw)) in ("vector", "density"):
        kind, data = next(iter(raw.items()))
        try:
            if kind == "vector":
                arr = np.array([_complex(v, f"initial_state.vector[{i}]") for i, v in enumerate(data)])
            else:
                arr = np.array(
                    [[_complex(v, f"initial_state.density[{i}][{j}]") for j, v in enumerate(row)] for i, row in enumerate(data)]
                )
        except TypeError:
            raise ConfigError("initial_state", f"malformed {kind} literal") from None
        parse_state(arr, qubits)
        return arr
    raise ConfigError("initial_state", "expected a product-state string or {vector: ...} / {density: ...}")


def _line_of(node, key: str) -> int | None:
    """1-based source line of a dotted config key such as ``lindblads[0].rate``."""
    line = None
    for part in re.findall(r"[^.\[\]]+|\[\d+\]", key):
        if part.startswith("[") and isinstance(node, yaml.SequenceNode):
            idx = int(part[1:-1])
            if idx >= len(node.value):
                break
            node = node.value[idx]
            line = node.start_mark.line + 1
            continue
        if not isinstance(node, yaml.MappingNode):
            break
        match = next(((k, v) for k, v in node.value if k.value == part), None)
        if match is None:
            break
        line = match[0].start_mark.line + 1
        node = match[1]
    return line


def from_dict(raw: dict, source_node=None) -> ExperimentConfig:
    try:
        return _from_dict(raw)
    except ConfigError as exc:
        if source_node is None or exc.line is not None:
            raise
        raise ConfigError(exc.key, exc.detail, _line_of(source_node, exc.key)) from None


def _from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a map")
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(unknown[0], f"unknown key; allowed keys are {sorted(KNOWN_KEYS)}")
    qubits = raw.get("qubits")
    if not isinstance(qubits, int) or isinstance(qubits, bool) or not 1 <= qubits <= MAX_QUBITS:
        raise ConfigError("qubits", f"must be an integer in [1, {MAX_QUBITS}]")
    for key in ("observable", "initial_state", "times"):
        if key not in raw:
            raise ConfigError(key, "required key is missing")

    hamiltonian = _pauli_map(raw.get("hamiltonian"), qubits, "hamiltonian")
    observable = _pauli_map(raw["observable"], qubits, "observable")
    if not observable:
        raise ConfigError("observable", "observable has no terms")

    lindblads: list[LindbladSpec] = []
    gamma = None
    if "non_hermitian" in raw:
        if raw.get("lindblads"):
            raise ConfigError("non_hermitian", "give either lindblads or non_hermitian, not both")
        nh = raw["non_hermitian"]
        if not isinstance(nh, dict) or "gamma" not in nh:
            raise ConfigError("non_hermitian", "expected {gamma: {word: coeff}}")
        gamma = _pauli_map(nh["gamma"], qubits, "non_hermitian.gamma")
    else:
        items = raw.get("lindblads") or []
        if not isinstance(items, list):
            raise ConfigError("lindblads", "expected a list")
        for i, item in enumerate(items):
            key = f"lindblads[{i}]"
            if not isinstance(item, dict) or "operator" not in item or "rate" not in item:
                raise ConfigError(key, "each Lindblad needs 'operator' and 'rate'")
            op = _pauli_map(item["operator"], qubits, f"{key}.operator")
            if not op:
                raise ConfigError(key, "operator has no terms")
            lindblads.append(LindbladSpec(op, _rate(item["rate"], f"{key}.rate")))

    budget = raw.get("budget") or {}
    if not isinstance(budget, dict):
        raise ConfigError("budget", "expected a map")
    extra = sorted(set(budget) - {"c", "beta", "samples", "delta"})
    if extra:
        raise ConfigError(f"budget.{extra[0]}", "unknown budget key")
    c = float(budget.get("c", 0.5))
    beta = float(budget.get("beta", 2.0))
    if not 0.0 < c < 1.0:
        raise ConfigError("budget.c", "must lie in (0, 1)")
    if beta <= 0:
        raise ConfigError("budget.beta", "must be positive")
    samples = budget.get("samples")
    if samples is not None and (not isinstance(samples, int) or samples < 1):
        raise ConfigError("budget.samples", "must be a positive integer")
    delta = budget.get("delta")
    if delta is not None and not float(delta) > 0:
        raise ConfigError("budget.delta", "must be positive")

    orders = raw.get("orders")
    epsilon = raw.get("epsilon")
    if orders is not None and (not isinstance(orders, int) or orders < 0):
        raise ConfigError("orders", "must be a nonnegative integer")
    if epsilon is not None and not 0.0 < float(epsilon) < 1.0:
        raise ConfigError("epsilon", "must lie in (0, 1)")
    if orders is None and epsilon is None:
        raise ConfigError("orders", "give orders (max order K) or epsilon (target error)")

    mode = raw.get("mode", "exact-mean")
    if mode not in MODES:
        raise ConfigError("mode", f"must be one of {MODES}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    steps = raw.get("oracle_steps", 2000)
    if not isinstance(steps, int) or steps < 1:
        raise ConfigError("oracle_steps", "must be a positive integer (steps per unit time)")

    cfg = ExperimentConfig(
        qubits=qubits,
        hamiltonian=hamiltonian,
        observable=observable,
        initial_state=_raw_state(raw["initial_state"], qubits),
        times=_times(raw["times"]),
        lindblads=tuple(lindblads),
        gamma=gamma,
        orders=orders,
        epsilon=None if epsilon is None else float(epsilon),
        c=c,
        beta=beta,
        samples=samples,
        delta=None if delta is None else float(delta),
        mode=mode,
        seed=seed,
        oracle_steps=steps,
        name=str(raw.get("name", "custom")),
        description=str(raw.get("description", "")),
    )
    try:
        cfg.build_model()
    except ValidationError as exc:
        raise ConfigError("hamiltonian" if "hamiltonian" in str(exc) else "model", str(exc)) from None
    return cfg


def loads(text: str) -> ExperimentConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<yaml>", str(exc).splitlines()[0], mark.line + 1 if mark else None) from None
    return from_dict(raw, node)


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _preset_dir():
    return resources.files("dysonsim") / "presets"


def list_presets() -> list[tuple[str, str]]:
    """(name, description) for every bundled preset, sorted by name."""
    out = []
    for entry in sorted(_preset_dir().iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".yaml"):
            raw = yaml.safe_load(entry.read_text(encoding="utf-8"))
            out.append((entry.name[: -len(".yaml")], str(raw.get("description", ""))))
    return out


def preset_text(name: str) -> str:
    name = PRESET_ALIASES.get(name, name)
    path = _preset_dir() / f"{name}.yaml"
    if not path.is_file():
        known = ", ".join(n for n, _ in list_presets())
        raise ConfigError("preset", f"unknown preset {name!r}; available: {known}")
    return path.read_text(encoding="utf-8")


def load_preset(name: str) -> ExperimentConfig:
    return loads(preset_text(name))
