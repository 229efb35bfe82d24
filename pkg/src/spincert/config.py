"""Structured-text configuration: interaction and tensor schemas, named
built-ins, overrides and digests."""

from __future__ import annotations

import hashlib
import json
import sys
from typing import Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import models
from .errors import ConfigError
from .fnorm import Interaction, Term
from .z2 import MpsTensor, TimeReversal, stack, stack_time_reversal


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} does not parse: {exc}") from exc


def _parse_literal(text: str):
    lowered = text.strip()
    if lowered.lower() in ("true", "false"):
        return lowered.lower() == "true"
    for caster in (int, float):
        try:
            return caster(lowered)
        except ValueError:
            continue
    return lowered


def apply_overrides(config: dict, overrides: Sequence[str]) -> dict:
    """Merge ``key=value`` (dotted keys allowed) into a copy of the config."""
    out = json.loads(json.dumps(config))  # deep copy of plain data
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override needs key=value, got: {item!r}")
        key, _, raw = item.partition("=")
        node = out
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} crosses a value")
        node[parts[-1]] = _parse_literal(raw)
    return out


def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _complex_matrix(entries, what: str) -> np.ndarray:
    try:
        arr = np.asarray(entries, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: matrix entries must be [re, im] pairs"
                          ) from exc
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError(
            f"{what}: expected a square row-major matrix of [re, im] pairs, "
            f"got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


INTERACTION_BUILTINS = ("tfim", "heisenberg", "aklt", "power-law",
                        "tfim-path")
MPS_BUILTINS = ("aklt", "product", "double-aklt")


def builtin_interaction(name: str, sites: Sequence[int],
                        params: Optional[dict] = None) -> Interaction:
    params = dict(params or {})
    try:
        if name == "tfim":
            return models.tfim(sites, coupling=params.pop("coupling", 1.0),
                               field=params.pop("field", 1.0))
        if name == "heisenberg":
            return models.heisenberg(sites,
                                     coupling=params.pop("coupling", 1.0))
        if name == "aklt":
            return models.aklt_interaction(sites)
        if name == "power-law":
            return models.power_law_interaction(
                sites, decay=params.pop("decay", 6.0),
                seed=int(params.pop("seed", 0)))
        if name == "tfim-path":
            return models.tfim_path(
                sites, field_start=params.pop("field_start", 2.0),
                field_end=params.pop("field_end", 3.0),
                coupling=params.pop("coupling", 1.0))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for builtin {name!r}: {exc}")
    raise ConfigError(f"unknown interaction builtin: {name!r} "
                      f"(available: {', '.join(INTERACTION_BUILTINS)})")


def interaction_from_config(config: dict) -> Interaction:
    """Build an interaction from the [interaction] table.

    Either ``builtin = "name"`` with ``sites``/parameters, or an explicit
    ``onsite_dim`` plus [[interaction.term]] tables with integer ``sites``
    and row-major complex ``matrix`` entries.
    """
    table = config.get("interaction")
    if not isinstance(table, dict):
        raise ConfigError("config needs an [interaction] table")
    if "builtin" in table:
        sites = table.get("sites")
        if isinstance(sites, int):
            sites = list(range(sites))
        if not isinstance(sites, list):
            raise ConfigError("builtin interactions need `sites` "
                              "(a count or a list)")
        params = {k: v for k, v in table.items()
                  if k not in ("builtin", "sites")}
        return builtin_interaction(table["builtin"], sites, params)
    if "onsite_dim" not in table:
        raise ConfigError("[interaction] needs onsite_dim or builtin")
    terms = []
    for i, entry in enumerate(table.get("term", [])):
        sites = entry.get("sites")
        if not isinstance(sites, list) or not sites:
            raise ConfigError(f"term {i}: needs a nonempty `sites` list")
        matrix = _complex_matrix(entry.get("matrix"), f"term {i}")
        try:
            terms.append(Term(tuple(sites), matrix))
        except ValueError as exc:
            raise ConfigError(f"term {i}: {exc}") from exc
    try:
        return Interaction(int(table["onsite_dim"]), tuple(terms))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def builtin_mps(name: str):
    """Named (tensor, time-reversal) pairs for the index computations."""
    if name == "aklt":
        return (MpsTensor(models.aklt_mps_tensors()),
                TimeReversal(models.spin_rotation_y_pi(3)))
    if name == "product":
        tensor = MpsTensor(models.product_mps_tensors([1.0, 1.0]))
        return tensor, TimeReversal(np.eye(2, dtype=complex))
    if name == "double-aklt":
        single = MpsTensor(models.aklt_mps_tensors())
        xi = TimeReversal(models.spin_rotation_y_pi(3))
        return stack(single, single), stack_time_reversal(xi, xi)
    raise ConfigError(f"unknown mps builtin: {name!r} "
                      f"(available: {', '.join(MPS_BUILTINS)})")


def mps_from_config(config: dict):
    """Build (MpsTensor, TimeReversal) from [mps] and [time_reversal]."""
    table = config.get("mps")
    if not isinstance(table, dict):
        raise ConfigError("config needs an [mps] table")
    if "builtin" in table:
        return builtin_mps(table["builtin"])
    try:
        d = int(table["physical_dim"])
        bond = int(table["bond_dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("[mps] needs physical_dim and bond_dim") from exc
    raw = table.get("tensors")
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError("[mps] tensors must be nested [re, im] lists"
                          ) from exc
    if arr.shape != (d, bond, bond, 2):
        raise ConfigError(f"[mps] tensors must have shape "
                          f"({d}, {bond}, {bond}, 2), got {arr.shape}")
    tensor = MpsTensor(arr[..., 0] + 1j * arr[..., 1])
    tr_table = config.get("time_reversal", {})
    if "onsite_unitary" in tr_table:
        xi = TimeReversal(_complex_matrix(tr_table["onsite_unitary"],
                                          "time_reversal"))
    else:
        xi = TimeReversal(np.eye(d, dtype=complex))
    return tensor, xi
