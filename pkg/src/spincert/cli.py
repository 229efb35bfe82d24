"""Batch experiment surface: one subcommand per verification campaign.

Every campaign resolves a config (file, builtin and overrides), derives a
digest, runs deterministically under the given seed and writes CSV or JSON
reports carrying the run manifest.  Exit codes: 0 success, 2 bound
violation, 3 convergence failure, 64 config error, 70 resource ceiling.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import config as cfg
from . import models
from .chain import Volume, assemble_hamiltonian, ground_state
from .errors import (BoundViolation, ConfigError, DivergentEnvelope,
                     DivergentSum, NotConverged, QuadratureFailure,
                     SpincertError, VolumeTooLarge)
from .fnorm import FSpec, f_norm
from .lrcert import (AnnulusGeometry, DisjointGeometry, cached_convolution_constant,
                     certify_lr, lr_constants)
from .specflow import (EnvelopeParams, generator_split_defect,
                       hastings_generator, i_gamma, i_gamma_envelope, omega1,
                       omega2, q_envelope, transport_defects, weight_function)
from .splitlab import (correlation_decay_check, decoupling_defect_curve,
                       truncation_defect_curve)
from .z2 import entanglement_degeneracy_probe, mps_tr_index
from .chain import LocalOperator
from .models import SIGMA_Z


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); keep 2 for bounds
        raise ConfigError(message)


def centered_volume(sites: int) -> Volume:
    return Volume(-((sites - 1) // 2), sites // 2)


def cut_volume(sites: int) -> Volume:
    """Volume split by the bond between sites 0 and 1."""
    left = sites // 2
    return Volume(1 - left, sites - left)


def _parse_values(text: str) -> list:
    """Comma list or a..b[..step] range of numbers."""
    text = text.strip()
    if ".." in text:
        parts = text.split("..")
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad range: {text!r}")
        start, stop = float(parts[0]), float(parts[1])
        step = float(parts[2]) if len(parts) == 3 else 1.0
        out = []
        value = start
        while value <= stop + 1e-9:
            out.append(value)
            value += step
        return out
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad value list: {text!r}") from exc


def _int_values(text: str) -> list:
    return [int(round(v)) for v in _parse_values(text)]


class Reporter:
    """Writes deterministic reports that embed the run manifest."""

    def __init__(self, command: str, out_dir: str, digest: str, seed: int):
        self.command = command
        self.out_dir = out_dir
        self.digest = digest
        self.seed = seed
        self.outputs = []
        os.makedirs(out_dir, exist_ok=True)

    def _manifest(self) -> dict:
        return {"command": self.command, "config_digest": self.digest,
                "seed": self.seed, "tool_version": __version__,
                "outputs": sorted(self.outputs)}

    def write_csv(self, name: str, header: Sequence[str], rows) -> str:
        path = os.path.join(self.out_dir, name)
        self.outputs.append(name)
        with open(path, "w", newline="") as handle:
            handle.write(f"# spincert {self.command} "
                         f"config_digest={self.digest} seed={self.seed}\n")
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(v) if isinstance(v, float) else v
                                 for v in row])
        return path

    def write_json(self, name: str, payload: dict) -> str:
        path = os.path.join(self.out_dir, name)
        self.outputs.append(name)
        payload = dict(payload)
        payload["manifest"] = self._manifest()
        with open(path, "w") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
            handle.write("\n")
        return path

    def finalize(self):
        path = os.path.join(self.out_dir, "manifest.json")
        with open(path, "w") as handle:
            json.dump(self._manifest(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def _resolve(args, extra: dict) -> tuple:
    base = cfg.load_config(args.config) if args.config else {}
    base = cfg.apply_overrides(base, args.set or [])
    resolved = {"command": extra.pop("_command"), "config": base,
                "seed": args.seed, **extra}
    return base, cfg.config_digest(resolved)


def _spec_from_args(args) -> FSpec:
    return FSpec(beta=args.beta, R=args.R, b=args.b)


def _interaction(args, config: dict, sites: Sequence[int]):
    if config.get("interaction"):
        table = dict(config["interaction"])
        if "builtin" in table and "sites" not in table:
            table["sites"] = list(sites)
        return cfg.interaction_from_config({"interaction": table})
    builtin = args.builtin or "tfim"
    params = {}
    for key in ("coupling", "field", "decay"):
        if getattr(args, key, None) is not None:
            params[key] = getattr(args, key)
    if builtin == "power-law":
        params.setdefault("seed", args.seed)
    return cfg.builtin_interaction(builtin, sites, params)


# ---------------------------------------------------------------------------
# subcommands


def run_fnorm(args) -> int:
    sites = centered_volume(args.sites).sites
    config, digest = _resolve(args, {"_command": "fnorm",
                                     "builtin": args.builtin,
                                     "sites": args.sites, "beta": args.beta,
                                     "R": args.R, "b": args.b})
    phi = _interaction(args, config, sites)
    spec = _spec_from_args(args)
    report = f_norm(phi, spec)
    c_beta = cached_convolution_constant(spec)
    constants = lr_constants(spec, report.value, c_beta=c_beta)
    rep = Reporter("fnorm", args.out_dir, digest, args.seed)
    rep.write_json("fnorm.json", {
        "f_norm": report.value,
        "witness_pair": list(report.witness_pair) if report.witness_pair
        else None,
        "truncation_radius": report.truncation_radius,
        "convolution_constant": c_beta,
        "kappa": constants.kappa, "nu": constants.nu,
        "beta": spec.beta, "R": spec.R, "b": spec.b})
    rep.finalize()
    return 0


def _default_geometries(volume: Volume) -> list:
    reach_n = min(-volume.a, volume.b)
    geoms = []
    if reach_n >= 3:
        geoms.append(AnnulusGeometry(m=2, n=min(4, reach_n), c=1, p=1))
        geoms.append(AnnulusGeometry(m=2, n=min(4, reach_n), c=1, p=1,
                                     support_size=2))
    sites = volume.sites
    for dist in range(1, len(sites) - 2):
        geoms.append(DisjointGeometry((sites[0], sites[1]),
                                      (sites[1] + dist,)))
    return geoms


def run_lr_certify(args) -> int:
    volume = centered_volume(args.sites)
    config, digest = _resolve(args, {"_command": "lr-certify",
                                     "builtin": args.builtin,
                                     "sites": args.sites, "beta": args.beta,
                                     "R": args.R, "b": args.b,
                                     "t": args.t_values,
                                     "samples": args.samples})
    phi = _interaction(args, config, volume.sites)
    spec = _spec_from_args(args)
    t_grid = _parse_values(args.t_values)
    geometries = _default_geometries(volume)
    constants = lr_constants(spec, f_norm(phi, spec).value)

    def work(geometry):
        return certify_lr(phi, spec, [geometry], t_grid, args.samples,
                          args.seed, volume, constants=constants)

    threads = max(args.threads, 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, geometries))
    else:
        chunks = [work(g) for g in geometries]
    certificates = [cert for chunk in chunks for cert in chunk]
    rep = Reporter("lr-certify", args.out_dir, digest, args.seed)
    rep.write_csv("certificates.csv",
                  ["geometry", "t", "bound", "measured", "ratio", "samples",
                   "seed", "support_size", "dist"],
                  [[c.geometry, c.t, c.bound, c.measured, c.ratio, c.samples,
                    c.seed, c.support_size, c.dist] for c in certificates])
    ratios = [c.ratio for c in certificates if math.isfinite(c.ratio)]
    rep.write_json("summary.json", {
        "cells": len(certificates),
        "observables": int(sum(c.samples for c in certificates)),
        "max_ratio": max(ratios) if ratios else 0.0,
        "violations": 0,
        "kappa": constants.kappa, "nu": constants.nu})
    rep.finalize()
    return 0


def run_split_defects(args) -> int:
    volume = cut_volume(args.sites)
    config, digest = _resolve(args, {"_command": "split-defects",
                                     "builtin": args.builtin,
                                     "sites": args.sites, "beta": args.beta,
                                     "R": args.R, "b": args.b,
                                     "n": args.n_values, "t": args.t_values,
                                     "r": args.r})
    phi = _interaction(args, config, volume.sites)
    spec = _spec_from_args(args)
    n_values = _int_values(args.n_values)
    t_values = _parse_values(args.t_values)
    from .chain import DensePropagator
    from .fnorm import restrict
    constants = lr_constants(spec, f_norm(phi, spec).value)
    prop = DensePropagator(phi, volume)
    prop_cut = DensePropagator(restrict(phi, "decoupled"), volume)
    rows = []
    for t in t_values:
        trunc = truncation_defect_curve(phi, spec, n_values, args.r, t,
                                        volume, constants=constants,
                                        propagator=prop)
        for n, defect, envelope in trunc.rows():
            rows.append(["truncation", n, t, defect, envelope])
        dec = decoupling_defect_curve(phi, spec, n_values, t, volume,
                                      constants=constants, propagator=prop,
                                      propagator_cut=prop_cut)
        for n, defect, envelope in dec.rows():
            rows.append(["decoupling", n, t, defect, envelope])
    rep = Reporter("split-defects", args.out_dir, digest, args.seed)
    rep.write_csv("defects.csv", ["kind", "n", "t", "defect", "envelope"],
                  rows)
    rep.finalize()
    return 0


def run_corr_decay(args) -> int:
    volume = cut_volume(args.sites)
    config, digest = _resolve(args, {"_command": "corr-decay",
                                     "builtin": args.builtin,
                                     "sites": args.sites, "beta": args.beta,
                                     "R": args.R, "b": args.b,
                                     "gamma": args.gamma})
    phi = _interaction(args, config, volume.sites)
    spec = _spec_from_args(args)
    H = assemble_hamiltonian(phi, volume, 0.0)
    sd = ground_state(H, args.gamma)
    anchor = volume.a + 1
    A = LocalOperator((anchor,), SIGMA_Z)
    rows = []
    for target in range(anchor + 1, volume.b):
        B = LocalOperator((target,), SIGMA_Z)
        result = correlation_decay_check(phi, spec, volume, args.gamma, A, B,
                                         spectral=sd)
        rows.append([target - anchor, result.connected, result.envelope,
                     result.allowance])
    rep = Reporter("corr-decay", args.out_dir, digest, args.seed)
    rep.write_csv("correlations.csv",
                  ["distance", "connected", "envelope", "allowance"], rows)
    rep.finalize()
    return 0


def run_flow(args) -> int:
    volume = centered_volume(args.sites)
    config, digest = _resolve(args, {"_command": "flow",
                                     "sites": args.sites,
                                     "field_start": args.field_start,
                                     "field_end": args.field_end,
                                     "gamma": args.gamma, "beta": args.beta,
                                     "R": args.R, "b": args.b,
                                     "s_points": args.s_points,
                                     "gn": args.gn_values})
    family = models.tfim_path(volume.sites, args.field_start, args.field_end)
    gamma = args.gamma
    if gamma is None:
        gaps = []
        for s in np.linspace(0.0, 1.0, 5):
            sd = ground_state(assemble_hamiltonian(family, volume, s), 1e-6)
            gaps.append(sd.gap)
        gamma = 0.9 * min(gaps)
    w = weight_function(gamma)
    s_grid = list(np.linspace(0.0, 1.0, args.s_points))
    defects = transport_defects(family, volume, s_grid, w)
    gen = hastings_generator(family, volume, 0.5, w)
    payload = {
        "family": {"builtin": "tfim-path", "sites": args.sites,
                   "field_start": args.field_start,
                   "field_end": args.field_end},
        "gamma": gamma,
        "t_trunc": gen.t_trunc,
        "tail_error": gen.tail_error,
        "hermiticity_defect": gen.hermiticity_defect,
        "s_grid": [float(s) for s in s_grid],
        "transport_defects": defects,
        "max_transport_defect": max(defects),
    }
    rep = Reporter("flow", args.out_dir, digest, args.seed)
    rep.write_json("flow.json", payload)
    if args.gn_values:
        spec = _spec_from_args(args)
        n_values = _int_values(args.gn_values)
        gn_family = models.tfim_path(range(-max(n_values), max(n_values) + 1),
                                     args.field_start, args.field_end)
        curve = generator_split_defect(gn_family, spec, 0.5, n_values, w)
        rep.write_csv("gn.csv", ["n", "defect", "envelope"], curve.rows())
    rep.finalize()
    return 0


def run_envelopes(args) -> int:
    config, digest = _resolve(args, {"_command": "envelopes",
                                     "gamma": args.gamma, "beta": args.beta,
                                     "R": args.R, "b": args.b,
                                     "x": args.x, "psi": args.psi})
    spec = _spec_from_args(args)
    w = weight_function(args.gamma)
    constants = lr_constants(spec, args.psi)
    params = EnvelopeParams(kappa=constants.kappa, nu=constants.nu,
                            gamma=args.gamma, R=spec.R, b=spec.b,
                            psi_f_norm=args.psi, weight=w)
    rows = []
    for x in _parse_values(args.x):
        x = max(x, 1.0)
        env = i_gamma_envelope(args.gamma, x)
        rows.append([x, omega1(x, params), omega2(x, params, "display"),
                     omega2(x, params, "proof"),
                     q_envelope(x, params, "display"),
                     q_envelope(x, params, "proof"),
                     i_gamma(w, x),
                     env.value if env.applicable else float("nan"),
                     int(env.applicable)])
    rep = Reporter("envelopes", args.out_dir, digest, args.seed)
    rep.write_csv("envelopes.csv",
                  ["x", "omega1", "omega2_display", "omega2_proof",
                   "q_display", "q_proof", "i_gamma", "i_gamma_envelope",
                   "envelope_applicable"], rows)
    rep.finalize()
    return 0


def run_z2(args) -> int:
    config, digest = _resolve(args, {"_command": "z2",
                                     "builtin": args.builtin})
    if config.get("mps"):
        tensor, xi = cfg.mps_from_config(config)
    else:
        tensor, xi = cfg.builtin_mps(args.builtin or "aklt")
    result = mps_tr_index(tensor, xi)
    degeneracy = entanglement_degeneracy_probe(tensor)
    rep = Reporter("z2", args.out_dir, digest, args.seed)
    rep.write_json("index.json", {
        "index": result.index,
        "theta": result.theta,
        "residual": result.residual,
        "overlap": result.overlap,
        "physical_dim": tensor.physical_dim,
        "bond_dim": tensor.bond_dim,
        "degeneracy_table": [[v, c] for v, c in degeneracy.multiplicities],
    })
    rep.finalize()
    return 0


# ---------------------------------------------------------------------------


def _add_common(sub, spec_defaults=(6.0, 0.0, 1.0)):
    sub.add_argument("--config", default=None,
                     help="TOML config file")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out-dir", default="reports")
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="config override, repeatable")
    beta, big_r, little_b = spec_defaults
    sub.add_argument("--beta", type=float, default=beta)
    sub.add_argument("--R", type=float, default=big_r)
    sub.add_argument("--b", type=float, default=little_b)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spincert",
                     description="spin-chain certification campaigns")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("fnorm", help="interaction norms and constants")
    _add_common(p)
    p.add_argument("--builtin", default="tfim")
    p.add_argument("--sites", type=int, default=10)
    p.add_argument("--coupling", type=float, default=None)
    p.add_argument("--field", type=float, default=None)
    p.add_argument("--decay", type=float, default=None)
    p.set_defaults(func=run_fnorm)

    p = subs.add_parser("lr-certify", help="commutator bound certification")
    _add_common(p)
    p.add_argument("--builtin", default="tfim")
    p.add_argument("--sites", type=int, default=10)
    p.add_argument("--coupling", type=float, default=None)
    p.add_argument("--field", type=float, default=None)
    p.add_argument("--decay", type=float, default=None)
    p.add_argument("--t-values", default="0.25,0.5,1.0")
    p.add_argument("--samples", type=int, default=2)
    p.set_defaults(func=run_lr_certify)

    p = subs.add_parser("split-defects",
                        help="truncation and decoupling defect curves")
    _add_common(p)
    p.add_argument("--builtin", default="tfim")
    p.add_argument("--sites", type=int, default=12)
    p.add_argument("--coupling", type=float, default=None)
    p.add_argument("--field", type=float, default=None)
    p.add_argument("--n-values", default="1,2,3")
    p.add_argument("--t-values", default="0.5,1.0")
    p.add_argument("--r", type=int, default=1)
    p.set_defaults(func=run_split_defects)

    p = subs.add_parser("corr-decay", help="ground-state correlation decay")
    _add_common(p, spec_defaults=(6.0, 0.5, 1.0))
    p.add_argument("--builtin", default="tfim")
    p.add_argument("--sites", type=int, default=12)
    p.add_argument("--coupling", type=float, default=None)
    p.add_argument("--field", type=float, default=2.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.set_defaults(func=run_corr_decay)

    p = subs.add_parser("flow", help="spectral-flow transport and splitting")
    _add_common(p, spec_defaults=(6.0, 1.0, 0.5))
    p.add_argument("--sites", type=int, default=6)
    p.add_argument("--field-start", type=float, default=2.0)
    p.add_argument("--field-end", type=float, default=3.0)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--s-points", type=int, default=11)
    p.add_argument("--gn-values", default=None,
                   help="volume radii for the generator-splitting curve")
    p.set_defaults(func=run_flow)

    p = subs.add_parser("envelopes", help="decay envelope tables")
    _add_common(p, spec_defaults=(6.0, 1.0, 0.5))
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--x", default="1..64")
    p.add_argument("--psi", type=float, default=1.0,
                   help="interaction norm entering the envelopes")
    p.set_defaults(func=run_envelopes)

    p = subs.add_parser("z2", help="time-reversal index reports")
    _add_common(p)
    p.add_argument("--builtin", default="aklt")
    p.set_defaults(func=run_z2)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 64
    except BoundViolation as exc:
        print(f"bound violation: {exc}", file=sys.stderr)
        return 2
    except (NotConverged, QuadratureFailure, DivergentEnvelope,
            DivergentSum) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 3
    except VolumeTooLarge as exc:
        print(f"resource ceiling: {exc}", file=sys.stderr)
        return 70
    except SpincertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
