"""Coupled higher-order semi-Markov (CHOSMM) sequence generator and dataset I/O.

Each variable carries a second-order transition tensor, explicit
per-state sojourn-time distributions and an AR emission per state.
Transitions are drawn only when a sojourn expires; the new state's
logits are shifted by ``eta`` for every neighbour (per the adjacency
matrix) that was in that state at the previous step.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

__all__ = [
    "ConfigError",
    "DatasetParseError",
    "TransitionTensor",
    "DurationDist",
    "VariableSpec",
    "SimConfig",
    "Dataset",
    "pattern_tensor",
    "base_transition",
    "coupled_transition",
    "sample_duration",
    "emit",
    "generate",
    "write_dataset",
    "read_dataset",
    "rng_stream",
    "DURATION_TABLE",
    "FAST1_TABLE",
    "FAST2_TABLE",
]

PROB_FLOOR = 1e-12


class ConfigError(ValueError):
    """Invalid simulator or run configuration."""


class DatasetParseError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


def rng_stream(seed: int, *names: str) -> np.random.Generator:
    """Independent Philox stream keyed by ``seed`` and a path of names."""
    key = tuple(zlib.crc32(str(n).encode()) for n in names)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# transition tensors
# ---------------------------------------------------------------------------


@dataclass
class TransitionTensor:
    psi: np.ndarray
    pattern_id: int | None = None

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=np.float64)
        m = self.psi.shape[0]
        if self.psi.shape != (m, m, m):
            raise ConfigError(f"transition tensor must be m x m x m, got {self.psi.shape}")
        if np.any(self.psi < 0):
            raise ConfigError("transition tensor has negative entries")

    @property
    def m(self) -> int:
        return self.psi.shape[0]


def pattern_tensor(pattern_id: int) -> TransitionTensor:
    """One of the five predefined two-state history patterns.

    1 inertial, 2 bias-to-2, 3 back-to-1 after (1->2), 4 flip-on-equality,
    5 random.  Index order is ``psi[a, b, u]`` with ``a = s_{t-2}``,
    ``b = s_{t-1}`` (0-based).
    """
    psi = np.zeros((2, 2, 2))
    for a in range(2):
        for b in range(2):
            if pattern_id == 1:
                row = [0.9, 0.1] if a == b else [0.5, 0.5]
            elif pattern_id == 2:
                row = [0.1, 0.9]
            elif pattern_id == 3:
                if (a, b) == (0, 1):
                    row = [0.8, 0.2]
                elif a == b:
                    row = [0.7, 0.3]
                else:
                    row = [0.2, 0.8]
            elif pattern_id == 4:
                stay = 0.2 if a == b else 0.85
                row = [stay, 1 - stay] if b == 0 else [1 - stay, stay]
            elif pattern_id == 5:
                row = [0.5, 0.5]
            else:
                raise ConfigError(f"unknown transition pattern {pattern_id}")
            psi[a, b] = row
    return TransitionTensor(psi, pattern_id)


def base_transition(psi: TransitionTensor, a: int, b: int) -> np.ndarray:
    """Normalized ``psi[a, b, :]`` for 0-based history states ``a``, ``b``."""
    m = psi.m
    if not (0 <= a < m and 0 <= b < m):
        raise ConfigError(f"history states ({a}, {b}) out of range for m={m}")
    row = psi.psi[a, b]
    tot = row.sum()
    if tot <= 0:
        raise ConfigError(f"transition row ({a}, {b}) is all zero")
    return row / tot


def coupled_transition(base_probs, neighbor_states, adjacency_row, eta: float) -> np.ndarray:
    """Softmax of ``log(base) + eta * sum_j A_ij 1{s_j = u}``.

    ``neighbor_states`` holds the previous-step state (0-based) of every
    variable; ``adjacency_row`` selects which of them count.
    """
    base = np.asarray(base_probs, dtype=np.float64)
    states = np.asarray(neighbor_states)
    row = np.asarray(adjacency_row)
    if states.shape != row.shape:
        raise ValueError("neighbor_states and adjacency_row differ in length")
    if eta == 0.0:
        return base.copy()
    counts = np.zeros(base.shape[0])
    for s, a in zip(states, row):
        if a:
            counts[s] += 1.0
    logits = np.log(np.maximum(base, PROB_FLOOR)) + eta * counts
    logits -= logits.max()
    e = np.exp(logits)
    return e / e.sum()


# ---------------------------------------------------------------------------
# durations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DurationDist:
    kind: str  # "geometric" | "poisson1" | "fixed"
    param: float

    def __post_init__(self):
        if self.kind == "geometric":
            if not 0.0 < self.param <= 1.0:
                raise ConfigError(f"geometric p must lie in (0, 1], got {self.param}")
        elif self.kind == "poisson1":
            if self.param <= 0:
                raise ConfigError(f"poisson rate must be > 0, got {self.param}")
        elif self.kind == "fixed":
            if self.param < 1 or int(self.param) != self.param:
                raise ConfigError(f"fixed duration must be an integer >= 1, got {self.param}")
        else:
            raise ConfigError(f"unknown duration kind {self.kind!r}")

    @property
    def mean(self) -> float:
        if self.kind == "geometric":
            return 1.0 / self.param
        if self.kind == "poisson1":
            return 1.0 + self.param
        return float(self.param)

    @classmethod
    def parse(cls, text: str) -> "DurationDist":
        try:
            kind, val = text.strip().split(":")
            return cls(kind.strip().lower(), float(val))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad duration spec {text!r} (expected kind:value)") from None

    def __str__(self) -> str:
        val = int(self.param) if self.kind == "fixed" else repr(self.param)
        return f"{self.kind}:{val}"


def sample_duration(dist: DurationDist, rng: np.random.Generator) -> int:
    if dist.kind == "geometric":
        return int(rng.geometric(dist.param))
    if dist.kind == "poisson1":
        return 1 + int(rng.poisson(dist.param))
    return int(dist.param)


G, P1, FX = "geometric", "poisson1", "fixed"
DURATION_TABLE = {
    1: (DurationDist(G, 0.01), DurationDist(P1, 250)),
    2: (DurationDist(G, 0.001), DurationDist(P1, 20)),
    3: (DurationDist(FX, 200), DurationDist(G, 0.0025)),
    4: (DurationDist(P1, 100), DurationDist(P1, 100)),
    5: (DurationDist(G, 0.01), DurationDist(G, 0.005)),
}
for _k in range(6, 11):
    DURATION_TABLE[_k] = DURATION_TABLE[_k - 5]

FAST1_TABLE = {
    1: (DurationDist(G, 0.3), DurationDist(P1, 10)),
    2: (DurationDist(G, 0.01), DurationDist(P1, 2)),
    3: (DurationDist(FX, 20), DurationDist(G, 0.1)),
}
FAST2_TABLE = {
    1: (DurationDist(G, 0.15), DurationDist(P1, 20)),
    2: (DurationDist(G, 0.05), DurationDist(P1, 4)),
    3: (DurationDist(FX, 40), DurationDist(G, 0.05)),
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class VariableSpec:
    transition: TransitionTensor
    durations: list[DurationDist]
    ar_coeffs: np.ndarray  # (m, P)
    sigma: float

    def __post_init__(self):
        self.ar_coeffs = np.atleast_2d(np.asarray(self.ar_coeffs, dtype=np.float64))
        m = self.transition.m
        if len(self.durations) != m:
            raise ConfigError(f"need {m} duration distributions, got {len(self.durations)}")
        if self.ar_coeffs.shape[0] != m or self.ar_coeffs.shape[1] < 1:
            raise ConfigError(f"ar_coeffs must be {m} x P with P >= 1")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")

    @property
    def order(self) -> int:
        return self.ar_coeffs.shape[1]


@dataclass
class SimConfig:
    n_vars: int
    n_states: int
    length: int
    eta: float
    adjacency: np.ndarray
    variables: list[VariableSpec]
    seed: int = 0

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=np.int64)
        if self.adjacency.shape != (self.n_vars, self.n_vars):
            raise ConfigError(f"adjacency must be {self.n_vars}x{self.n_vars}")
        if not np.all(np.isin(self.adjacency, (0, 1))):
            raise ConfigError("adjacency must be binary")
        if np.any(np.diag(self.adjacency) != 0):
            raise ConfigError("adjacency diagonal must be zero")
        if self.eta < 0:
            raise ConfigError("eta must be >= 0")
        if len(self.variables) != self.n_vars:
            raise ConfigError(f"expected {self.n_vars} variable specs, got {len(self.variables)}")
        for v in self.variables:
            if v.transition.m != self.n_states:
                raise ConfigError("transition tensor size differs from n_states")
        if self.length < 3:
            raise ConfigError("length must be >= 3")

    @classmethod
    def standard(
        cls,
        patterns,
        duration_ids=None,
        durations=None,
        adjacency=None,
        length: int = 5000,
        eta: float = 0.2,
        seed: int = 0,
        ar_coeffs=((1.0,), (-0.9,)),
        sigma: float = 0.1,
    ) -> "SimConfig":
        """Build a two-state config from pattern ids and duration table rows."""
        n = len(patterns)
        if durations is None:
            durations = [list(DURATION_TABLE[k]) for k in duration_ids]
        if adjacency is None:
            adjacency = np.zeros((n, n), dtype=int)
        specs = [
            VariableSpec(pattern_tensor(p), list(d), np.array(ar_coeffs), sigma)
            for p, d in zip(patterns, durations)
        ]
        return cls(n, 2, length, eta, np.asarray(adjacency), specs, seed)


CHAIN3 = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])


def preset(name: str, seed: int = 0, length: int | None = None) -> SimConfig:
    """Named setups: ``sim3``, ``fast1``, ``fast2`` (3 vars) and ``sim10``."""
    if name == "sim3":
        return SimConfig.standard([1, 2, 3], duration_ids=[1, 2, 3], adjacency=CHAIN3,
                                  length=length or 5000, seed=seed)
    if name in ("fast1", "fast2"):
        table = FAST1_TABLE if name == "fast1" else FAST2_TABLE
        return SimConfig.standard([1, 2, 3], durations=[table[k] for k in (1, 2, 3)],
                                  adjacency=CHAIN3, length=length or 5000, seed=seed)
    if name == "sim10":
        pick = rng_stream(seed, "sim10", "layout")
        patterns = [int(p) for p in pick.integers(1, 6, size=10)]
        dur = [int(d) for d in pick.integers(1, 11, size=10)]
        adj = (pick.random((10, 10)) < 0.5).astype(int)
        np.fill_diagonal(adj, 0)
        return SimConfig.standard(patterns, duration_ids=dur, adjacency=adj,
                                  length=length or 10000, seed=seed)
    raise ConfigError(f"unknown preset {name!r}")


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def emit(state: int, history, spec: VariableSpec, rng: np.random.Generator) -> float:
    """One AR draw: ``sum_p a[state, p] * history[-1-p] + N(0, sigma^2)``.

    ``history`` is ordered oldest first; only the last ``P`` entries are used.
    """
    hist = np.asarray(history, dtype=np.float64)
    P = spec.order
    if hist.shape[0] < P:
        raise ValueError(f"history needs {P} entries")
    val = sum(spec.ar_coeffs[state, p] * hist[-1 - p] for p in range(P))
    return float(val + spec.sigma * rng.standard_normal())


@dataclass
class Dataset:
    """Observations ``X`` (T x N) and optional 1-based states ``S`` (T x N)."""

    X: np.ndarray
    S: np.ndarray | None = None
    columns: list[str] = field(default_factory=list)
    m: int = 2

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError("X must be T x N")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("X has non-finite entries")
        if not self.columns:
            self.columns = [f"x_{i + 1}" for i in range(self.X.shape[1])]
        if self.S is not None:
            self.S = np.asarray(self.S, dtype=np.int64)
            if self.S.shape != self.X.shape:
                raise ValueError("S and X shapes differ")
            if self.S.size and (self.S.min() < 1 or self.S.max() > self.m):
                raise ValueError(f"states must lie in 1..{self.m}")

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]

    def labels(self) -> np.ndarray | None:
        """0-based state labels or ``None``."""
        return None if self.S is None else self.S - 1

    def occupancy(self) -> np.ndarray | None:
        if self.S is None:
            return None
        return np.stack([(self.S == k + 1).mean(axis=0) for k in range(self.m)], axis=1)


def _simulate_states(cfg: SimConfig, rngs: list[np.random.Generator]) -> np.ndarray:
    T, N, m = cfg.length, cfg.n_vars, cfg.n_states
    S = np.zeros((T, N), dtype=np.int64)
    remaining = np.zeros(N, dtype=np.int64)
    for i in range(N):
        S[0, i] = rngs[i].integers(m)
        S[1, i] = rngs[i].integers(m)
        remaining[i] = sample_duration(cfg.variables[i].durations[S[1, i]], rngs[i]) - 1
    for t in range(2, T):
        prev = S[t - 1].copy()
        for i in range(N):
            if remaining[i] > 0:
                S[t, i] = prev[i]
                remaining[i] -= 1
                continue
            spec = cfg.variables[i]
            base = base_transition(spec.transition, S[t - 2, i], S[t - 1, i])
            probs = coupled_transition(base, prev, cfg.adjacency[i], cfg.eta)
            u = rngs[i].random()
            s = int(np.searchsorted(np.cumsum(probs), u, side="right"))
            s = min(s, m - 1)
            S[t, i] = s
            remaining[i] = sample_duration(spec.durations[s], rngs[i]) - 1
    return S


def generate(cfg: SimConfig) -> Dataset:
    """Simulate a dataset; a pure function of ``cfg`` (including its seed)."""
    state_rngs = [rng_stream(cfg.seed, "states", i) for i in range(cfg.n_vars)]
    S = _simulate_states(cfg, state_rngs)
    X = np.empty((cfg.length, cfg.n_vars))
    for i, spec in enumerate(cfg.variables):
        rng = rng_stream(cfg.seed, "emission", i)
        P = spec.order
        init = spec.sigma * rng.standard_normal(P)
        noise = spec.sigma * rng.standard_normal(cfg.length)
        X[:, i] = kernels.ar_recursion(S[:, i], spec.ar_coeffs, noise, init)
    return Dataset(X, S + 1, m=cfg.n_states)


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------


def write_dataset(d: Dataset, path) -> None:
    """CSV with header ``t,x_1..x_N[,s_1..s_N]``; floats in repr (round-trip) form."""
    N = d.N
    header = ["t"] + [f"x_{i + 1}" for i in range(N)]
    if d.S is not None:
        header += [f"s_{i + 1}" for i in range(N)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(d.T):
            row = [str(t)] + [repr(float(v)) for v in d.X[t]]
            if d.S is not None:
                row += [str(int(s)) for s in d.S[t]]
            w.writerow(row)


def read_dataset(path, m: int | None = None) -> Dataset:
    """Read a dataset CSV.

    Observation columns are every header entry other than ``t`` and
    ``s_*``; a file without ``s_*`` columns yields ``S = None``.  ``m``
    defaults to the largest state present (at least 2).
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetParseError("empty file", 1) from None
        header = [h.strip() for h in header]
        x_cols = [j for j, h in enumerate(header) if h != "t" and not h.startswith("s_")]
        s_cols = [j for j, h in enumerate(header) if h.startswith("s_")]
        if not x_cols:
            raise DatasetParseError("no observation columns", 1)
        if s_cols and len(s_cols) != len(x_cols):
            raise DatasetParseError(
                f"{len(s_cols)} state columns for {len(x_cols)} observation columns", 1
            )
        xs, ss = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetParseError(
                    f"expected {len(header)} fields, found {len(row)}", lineno
                )
            try:
                xs.append([float(row[j]) for j in x_cols])
                if s_cols:
                    ss.append([int(row[j]) for j in s_cols])
            except ValueError as exc:
                raise DatasetParseError(str(exc), lineno) from None
    if not xs:
        raise DatasetParseError("no data rows", 2)
    X = np.array(xs)
    S = np.array(ss) if s_cols else None
    if m is None:
        m = max(2, int(S.max())) if S is not None else 2
    cols = [header[j] for j in x_cols]
    try:
        return Dataset(X, S, cols, m)
    except ValueError as exc:
        raise DatasetParseError(str(exc)) from None


# ---------------------------------------------------------------------------
# key-value config files
# ---------------------------------------------------------------------------


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """``key = value`` lines; ``#`` comments; duplicate keys rejected."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = val
    return out


SIM_KEYS = ("n_vars", "n_states", "length", "eta", "seed", "adjacency")
VAR_FIELDS = ("pattern", "psi", "duration", "ar_coeffs", "sigma")


def is_sim_key(key: str) -> bool:
    if key in SIM_KEYS:
        return True
    if key.startswith("var") and "." in key:
        head, rest = key.split(".", 1)
        return head[3:].isdigit() and rest.split(".")[0] in VAR_FIELDS
    return False


def sim_config_from_kv(kv: dict[str, str]) -> SimConfig:
    """Build a :class:`SimConfig` from flat keys.

    Required: ``n_vars, n_states, length, eta, seed, adjacency`` and per
    variable ``var<i>.pattern`` (or ``var<i>.psi``, m^3 comma-separated),
    ``var<i>.duration.<s>``, ``var<i>.ar_coeffs.<s>``, ``var<i>.sigma``;
    ``i`` and ``s`` are 1-based.
    """
    for k in kv:
        if not is_sim_key(k):
            raise ConfigError(f"unknown key {k!r}")
    for k in SIM_KEYS:
        if k not in kv:
            raise ConfigError(f"missing required key {k!r}")
    try:
        n = int(kv["n_vars"])
        m = int(kv["n_states"])
        length = int(kv["length"])
        eta = float(kv["eta"])
        seed = int(kv["seed"])
    except ValueError as exc:
        raise ConfigError(f"bad numeric value: {exc}") from None
    bits = kv["adjacency"].replace(",", "").replace(" ", "")
    if len(bits) != n * n or set(bits) - {"0", "1"}:
        raise ConfigError(f"adjacency must be {n * n} characters of 0/1")
    adj = np.array([int(b) for b in bits]).reshape(n, n)
    specs = []
    for i in range(1, n + 1):
        p = f"var{i}."
        if p + "psi" in kv:
            vals = [float(v) for v in kv[p + "psi"].split(",")]
            if len(vals) != m**3:
                raise ConfigError(f"{p}psi needs {m ** 3} values")
            trans = TransitionTensor(np.array(vals).reshape(m, m, m))
        elif p + "pattern" in kv:
            if m != 2:
                raise ConfigError("predefined patterns require n_states = 2")
            trans = pattern_tensor(int(kv[p + "pattern"]))
        else:
            raise ConfigError(f"missing required key {p}pattern")
        durs, coeffs = [], []
        for s in range(1, m + 1):
            dk, ak = f"{p}duration.{s}", f"{p}ar_coeffs.{s}"
            if dk not in kv:
                raise ConfigError(f"missing required key {dk}")
            if ak not in kv:
                raise ConfigError(f"missing required key {ak}")
            durs.append(DurationDist.parse(kv[dk]))
            coeffs.append([float(c) for c in kv[ak].split(",")])
        if len({len(c) for c in coeffs}) != 1:
            raise ConfigError(f"{p}ar_coeffs: all states need the same AR order")
        if p + "sigma" not in kv:
            raise ConfigError(f"missing required key {p}sigma")
        specs.append(VariableSpec(trans, durs, np.array(coeffs), float(kv[p + "sigma"])))
    return SimConfig(n, m, length, eta, adj, specs, seed)


def sim_config_to_kv(cfg: SimConfig) -> dict[str, str]:
    kv = {
        "n_vars": str(cfg.n_vars),
        "n_states": str(cfg.n_states),
        "length": str(cfg.length),
        "eta": repr(cfg.eta),
        "seed": str(cfg.seed),
        "adjacency": "".join(str(int(b)) for b in cfg.adjacency.ravel()),
    }
    for i, v in enumerate(cfg.variables, start=1):
        p = f"var{i}."
        if v.transition.pattern_id is not None:
            kv[p + "pattern"] = str(v.transition.pattern_id)
        else:
            kv[p + "psi"] = ",".join(repr(float(x)) for x in v.transition.psi.ravel())
        for s in range(cfg.n_states):
            kv[f"{p}duration.{s + 1}"] = str(v.durations[s])
            kv[f"{p}ar_coeffs.{s + 1}"] = ",".join(repr(float(c)) for c in v.ar_coeffs[s])
        kv[p + "sigma"] = repr(v.sigma)
    return kv


def load_sim_config(path) -> SimConfig:
    path = Path(path)
    return sim_config_from_kv(parse_kv(path.read_text(encoding="utf-8"), str(path)))


def save_sim_config(cfg: SimConfig, path) -> None:
    lines = [f"{k} = {v}" for k, v in sim_config_to_kv(cfg).items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def sojourn_stats(states: np.ndarray) -> list[int]:
    """Lengths of maximal constant runs, excluding the censored first and last."""
    runs = kernels.run_lengths(states)
    ends = np.flatnonzero(np.r_[states[1:] != states[:-1], True])
    lengths = runs[ends].tolist()
    return lengths[1:-1]


def occupancy_summary(d: Dataset) -> str:
    occ = d.occupancy()
    lines = [f"T={d.T} N={d.N} m={d.m}"]
    if occ is not None:
        for i in range(d.N):
            shares = " ".join(f"s{k + 1}={occ[i, k]:.3f}" for k in range(d.m))
            lines.append(f"  {d.columns[i]}: {shares}")
    return "\n".join(lines)

