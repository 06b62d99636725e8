"""Analysis configuration: one JSON document naming the semiring, resource
domains, guard valuation, repository manifest, metric table, policies and
analysis bounds.  Relative paths are resolved against the document's folder.

Example (the shipped BestTravel corpus)::

    {
      "semiring": "RISK",
      "domains": {"A": ["AIRPORT"], "B": {"union": ["I", "F", "H"]}, ...},
      "guards": {"is_available": true, "can_overbook": "both", ...},
      "repository": "repository.json",
      "metric_table": "risk_table.json",
      "policies": ["policies/no_overbooking.json"],
      "bounds": {"depth": 3, "mu_iters": 64, "fuel": 10000,
                 "state_cap": 200000, "trace_cap": 100000},
      "scheduler": "left",
      "seed": 0,
      "guard_mode": "predictive",
      "custom_semirings": ["level.json"]
    }

Repository manifest: ``{"services": [{"location", "source", "effect"?}]}``;
an entry without ``source`` must give ``input``, ``output`` and ``effect``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .effects import Arrow, MetricFn, Service, ServiceRepository, domain_type, publish
from .errors import ConfigError, LreqError
from .history import parse_history
from .interp import GUARD_MODES
from .lang.parser import parse
from .lang.syntax import Expr, Signature
from .policy import UsageAutomaton, load_policy
from .semiring import Semiring, get_semiring, load_semiring, register_semiring

SCHEDULERS = ("left", "right", "seeded", "exhaustive")


@dataclass
class Bounds:
    depth: int = 3
    mu_iters: int = 64
    fuel: int = 10_000
    state_cap: int = 200_000
    trace_cap: int = 100_000

    def __post_init__(self):
        for name in ("mu_iters", "fuel", "state_cap", "trace_cap"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
                raise ConfigError(f"bound {name} must be a positive integer, not {v!r}")
        if not isinstance(self.depth, int) or isinstance(self.depth, bool) or self.depth < 0:
            raise ConfigError(f"bound depth must be a non-negative integer, not {self.depth!r}")


@dataclass
class AnalysisConfig:
    semiring: Semiring
    signature: Signature
    repo: ServiceRepository
    F: MetricFn
    policies: dict[str, UsageAutomaton] = field(default_factory=dict)
    guards: dict[str, Any] = field(default_factory=dict)
    bounds: Bounds = field(default_factory=Bounds)
    scheduler: str = "left"
    seed: int = 0
    guard_mode: str = "predictive"
    base: Path | None = None

    def resolve_program(self, path: str | Path) -> Path:
        """``path`` as given, or relative to the configuration's folder."""
        p = Path(path)
        if p.exists() or p.is_absolute() or self.base is None:
            return p
        alt = self.base / p
        return alt if alt.exists() else p

    def load_program(self, path: str | Path) -> Expr:
        p = self.resolve_program(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read program {path}: {exc.strerror}") from None
        return parse(text, self.signature)


def default_config_path() -> Path:
    return Path(str(resources.files("lreq") / "data" / "besttravel" / "config.json"))


def _read_json(path: Path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _doc_or_path(item: Any, base: Path) -> tuple[Any, Path]:
    if isinstance(item, str):
        p = base / item
        return _read_json(p), p.parent
    return item, base


def load_repository(
    manifest: Mapping[str, Any], base: Path, signature: Signature, F: MetricFn
) -> ServiceRepository:
    repo = ServiceRepository(signature)
    entries = manifest.get("services")
    if not isinstance(entries, list):
        raise ConfigError("repository manifest needs a 'services' list")
    for entry in entries:
        try:
            loc = str(entry["location"])
        except (KeyError, TypeError):
            raise ConfigError(f"repository entry {entry!r} lacks a location") from None
        declared = None
        if entry.get("effect") is not None:
            try:
                declared = parse_history(str(entry["effect"]), F.semiring)
            except LreqError as exc:
                raise ConfigError(f"service {loc}: bad effect: {exc}") from None
        if "source" in entry:
            src_path = base / str(entry["source"])
            try:
                text = src_path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"service {loc}: cannot read {src_path}: {exc.strerror}") from None
            impl = parse(text, signature)
            publish(loc, impl, repo, F, source=str(entry["source"]), declared=declared)
        else:
            if declared is None or "input" not in entry or "output" not in entry:
                raise ConfigError(f"service {loc} without source needs input, output and effect")
            arrow = Arrow(domain_type(str(entry["input"])), declared, domain_type(str(entry["output"])))
            repo.add(Service(loc, arrow))
    return repo


def load_config(path: str | Path | None = None, **overrides: Any) -> AnalysisConfig:
    """Read a configuration document; keyword overrides (``semiring``,
    ``depth``, ``mu_iters``, ``fuel``, ``seed``, ``scheduler``, ``guard_mode``,
    ``guards``) take precedence over its fields."""
    cfg_path = Path(path) if path is not None else default_config_path()
    doc = _read_json(cfg_path)
    if not isinstance(doc, dict):
        raise ConfigError(f"{cfg_path} must contain a JSON object")
    base = cfg_path.parent

    for item in doc.get("custom_semirings", ()):
        sdoc, _ = _doc_or_path(item, base)
        register_semiring(load_semiring(sdoc), replace=True)
    semiring = get_semiring(overrides.get("semiring") or doc.get("semiring", "RISK"))

    guards = dict(doc.get("guards", {}))
    guards.update(overrides.get("guards") or {})
    for g, v in guards.items():
        if not (isinstance(v, bool) or v == "both"):
            raise ConfigError(f"guard {g} must be true, false or \"both\", not {v!r}")

    policies: dict[str, UsageAutomaton] = {}
    for item in doc.get("policies", ()):
        pdoc, _ = _doc_or_path(item, base)
        phi = load_policy(pdoc)
        if phi.name in policies:
            raise ConfigError(f"policy {phi.name} defined twice")
        policies[phi.name] = phi

    signature = Signature.from_doc(doc.get("domains", {}), guards=guards.keys(), policies=policies.keys())
    for phi in policies.values():
        unknown = {r for r in phi.resources() if signature.domain_of(r) is None}
        if unknown:
            raise ConfigError(f"policy {phi.name} mentions undeclared resources {sorted(unknown)}")

    if "metric_table" in doc:
        tdoc, _ = _doc_or_path(doc["metric_table"], base)
        F = MetricFn.from_doc(tdoc)
    else:
        F = MetricFn(semiring)
    if F.semiring != semiring:
        raise ConfigError(f"metric table is for {F.semiring.name}, but the analysis uses {semiring.name}")

    if "repository" in doc:
        mdoc, mbase = _doc_or_path(doc["repository"], base)
        repo = load_repository(mdoc, mbase, signature, F)
    else:
        repo = ServiceRepository(signature)

    bdoc = dict(doc.get("bounds", {}))
    for key in ("depth", "mu_iters", "fuel"):
        if overrides.get(key) is not None:
            bdoc[key] = overrides[key]
    try:
        bounds = Bounds(**bdoc)
    except TypeError as exc:
        raise ConfigError(f"bad bounds: {exc}") from None

    scheduler = overrides.get("scheduler") or doc.get("scheduler", "left")
    if scheduler not in SCHEDULERS:
        raise ConfigError(f"unknown scheduler {scheduler!r}")
    seed = overrides.get("seed")
    if seed is None:
        seed = doc.get("seed", 0)
    guard_mode = overrides.get("guard_mode") or doc.get("guard_mode", "predictive")
    if guard_mode not in GUARD_MODES:
        raise ConfigError(f"unknown guard mode {guard_mode!r}")
    return AnalysisConfig(
        semiring=semiring,
        signature=signature,
        repo=repo,
        F=F,
        policies=policies,
        guards=guards,
        bounds=bounds,
        scheduler=scheduler,
        seed=int(seed),
        guard_mode=guard_mode,
        base=base,
    )
