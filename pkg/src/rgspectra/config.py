"""Plain-text experiment configs: one `key = value` per line, `#` starts a comment."""

from __future__ import annotations

from .errors import ConfigError, PreconditionError
from .graphs import parse_model
from .mcclt import ExperimentConfig, default_workers
from .spectral import TestFunction, builtin

KEYS = {"dimension", "model", "radius", "k", "f", "c", "weighted", "n_grid", "replicates", "seed", "workers",
        "anderson"}

DEFAULTS = {"dimension": "2", "model": "rgg", "radius": "1", "f": "poly:0,0,1", "weighted": "false",
            "n_grid": "64,256,1024", "replicates": "1000", "seed": "0", "anderson": "false"}


def parse_function(spec: str) -> TestFunction:
    """`poly:a0,a1,...`, `x^m`, or a built-in name."""
    spec = spec.strip()
    if spec.startswith("x^"):
        m = int(spec[2:])
        return TestFunction.polynomial([0] * m + [1], spec)
    return builtin(spec)


def _bool(v: str, key: str, line: int) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"line {line}: {key} expects a boolean, got {v!r}")


def parse_text(text: str) -> dict[str, tuple[str, int]]:
    raw: dict[str, tuple[str, int]] = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {no}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {no}: duplicate key {key!r} (first set on line {raw[key][1]})")
        raw[key] = (value, no)
    return raw


def resolve(raw: dict[str, tuple[str, int]]) -> tuple[ExperimentConfig, dict]:
    """Fill defaults, validate, and return the config with its resolved key table."""
    vals = {k: (v, 0) for k, v in DEFAULTS.items()}
    vals.update(raw)
    get = lambda k: vals[k][0]
    line = lambda k: vals[k][1] if k in vals else 0
    try:
        dimension = int(get("dimension"))
        kind = get("model").lower()
        if kind == "rgg":
            model = parse_model("rgg", r=float(get("radius")))
        elif kind == "knn":
            if "k" not in vals:
                raise ConfigError("model = knn needs k")
            model = parse_model("knn", k=int(get("k")))
        else:
            model = parse_model(kind)
        f = parse_function(get("f"))
        weighted = _bool(get("weighted"), "weighted", line("weighted"))
        c = float(get("c")) if "c" in vals else None
        if weighted and not c:
            raise ConfigError(f"line {line('c') or line('weighted')}: the weighted trace Tr[f(A) e^(cA)] "
                              "requires a constant c != 0")
        n_grid = [float(s) for s in get("n_grid").split(",") if s.strip()]
        workers = int(get("workers")) if "workers" in vals else default_workers()
        cfg = ExperimentConfig(dimension, model, f, n_grid, int(get("replicates")), int(get("seed")), c, weighted,
                               workers, _bool(get("anderson"), "anderson", line("anderson")))
    except ConfigError:
        raise
    except (PreconditionError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    resolved = {k: v for k, (v, _) in sorted(vals.items())}
    return cfg, resolved


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return resolve(parse_text(fh.read()))[0]


def load_config_resolved(path) -> tuple[ExperimentConfig, dict]:
    with open(path) as fh:
        return resolve(parse_text(fh.read()))
