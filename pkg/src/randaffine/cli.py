"""Command line interface: ``randaffine <command> [options]``.

Every command reads an optional YAML or JSON config (``--config``) whose keys
are overridden by explicit flags, and writes rows as CSV or JSON lines.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace

import numpy as np
import yaml

from . import experiments as ex
from .calibration import CalibrationOptions, calibrate_two_stage, load_quotes
from .chf import CharacteristicFn, randomize_chf
from .cos import price_vanilla
from .errors import RandAffineError
from .models import BatesParams, params_from_dict
from .montecarlo import McConfig, mc_price_v1, price_v2, vanilla_payoff
from .quadrature import quadrature_rule
from .randomizers import Degenerate, from_dict
from .sensitivities import BumpConfig, dprice_dhyper
from .special import black76_implied_vol, implied_vol_array
from .vix import VIX_SCALE, vix2_chf_rand, vix_future_cos, vix_future_rand, vix_option_cos, vix_option_rand

PRESETS = {
    "table2-uniform": {"model": {"sigma": 0.2}, "slot": "sigma", "randomizer": {"family": "uniform", "a_hat": 0.1,
                                                                                 "b_hat": 0.45}},
    "table2-gamma": {"model": {"sigma": 0.2}, "slot": "sigma", "randomizer": {"family": "gamma", "a_hat": 2.55,
                                                                             "b_hat": 0.1}},
    "table2-ncchi2": {"model": {"sigma": 0.2}, "slot": "sigma",
                      "randomizer": {"family": "ncchi2", "a_hat": 0.088, "b_hat": 0.1662, "c_hat": 3.2417}},
    "figure3-uniform": {"model": ex.FIGURE3.to_dict(), "slot": "gamma", "expiry": ex.FIGURE3_T,
                        "randomizer": {"family": "uniform", "a_hat": 0.1, "b_hat": 1.34}},
    "figure3-gamma": {"model": ex.FIGURE3.to_dict(), "slot": "gamma", "expiry": ex.FIGURE3_T,
                      "randomizer": {"family": "gamma", "a_hat": 2.0, "b_hat": 0.36}},
    "figure4": {"model": ex.FIGURE4.to_dict(), "expiry": ex.FIGURE4_T},
}
for _row, (_p, _u) in ex.TABLE5.items():
    PRESETS[f"table5-row{_row}"] = {"model": _p.to_dict(), "slot": "gamma", "expiry": 1 / 12,
                                    "randomizer": _u.to_dict()}


class Emitter:
    """Collects rows and writes them as CSV or JSON lines."""

    def __init__(self, fmt="csv", out=None, precision=12):
        self.fmt = fmt
        self.out = out
        self.precision = precision
        self.rows = []

    def _fmt(self, v):
        if isinstance(v, (float, np.floating)):
            if not math.isfinite(v):
                return str(v)
            return float(f"{float(v):.{self.precision}g}")
        if isinstance(v, np.integer):
            return int(v)
        return v

    def add(self, **row):
        self.rows.append({k: self._fmt(v) for k, v in row.items()})

    def write(self):
        fh = open(self.out, "w", newline="") if self.out else sys.stdout
        try:
            if self.fmt == "json-lines":
                for row in self.rows:
                    fh.write(json.dumps(row) + "\n")
            else:
                if not self.rows:
                    return
                keys = list(self.rows[0])
                for row in self.rows[1:]:
                    keys += [k for k in row if k not in keys]
                w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
                w.writeheader()
                w.writerows(self.rows)
        finally:
            if self.out:
                fh.close()


def load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        text = fh.read()
    data = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping at the top level")
    return data


def _merged(args):
    cfg = {}
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise ValueError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        cfg.update(PRESETS[args.preset])
    cfg.update(load_config(args.config))
    for key in ("N", "expiry", "slot", "kind", "strikes", "strikes_file", "expiries", "paths", "scheme", "estimator", "hyper",
                "method", "deltas", "steps_per_year"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "family", None):
        cfg["randomizer"] = {"family": args.family, **_parse_hypers(args.hyper_values or [])}
    return cfg


def _parse_hypers(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = float(v)
    return out


def _floats(v):
    if isinstance(v, str):
        return [float(x) for x in v.split(",") if x.strip()]
    return [float(x) for x in np.atleast_1d(v)]


def _strikes(cfg, default):
    """Strikes from ``strikes`` (inline) or the ``strike`` column of ``strikes_file``."""
    if cfg.get("strikes_file"):
        path = cfg["strikes_file"]
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "strike" not in rows[0]:
            raise ValueError(f"{path}: needs a 'strike' column")
        return np.array([float(r["strike"]) for r in rows])
    return np.array(_floats(cfg.get("strikes", default)))


def _int_range(v):
    """``"2-9"``, ``"2,4,6"`` or an int/list."""
    if isinstance(v, int):
        return [v]
    if isinstance(v, str):
        if "-" in v:
            lo, hi = v.split("-")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in v.split(",")]
    return [int(x) for x in v]


def _model(cfg):
    if "model" not in cfg:
        raise ValueError("config needs a 'model' block")
    return params_from_dict(cfg["model"])


def _spec(cfg):
    r = cfg.get("randomizer")
    return None if r is None else from_dict(r)


def _slot(cfg, params):
    return cfg.get("slot", "gamma" if isinstance(params, BatesParams) else "sigma")


def _chf(params, slot, spec, N, T):
    base = CharacteristicFn(params, T)
    return base if spec is None else randomize_chf(base, slot, spec, N)


# ---------------------------------------------------------------- commands

def cmd_quadrature(args, em):
    cfg = _merged(args)
    spec = _spec(cfg)
    if spec is None:
        raise ValueError("quadrature needs a randomizer (--family with --hyper-value key=value, or config)")
    rule = quadrature_rule(spec, int(cfg.get("N", 5)), method=args.method or "exact")
    for n, (w, t) in enumerate(rule, 1):
        em.add(n=n, weight=w, node=t)


def cmd_price_vanilla(args, em):
    cfg = _merged(args)
    p = _model(cfg)
    spec = _spec(cfg)
    slot = _slot(cfg, p)
    N = int(cfg.get("N", 5))
    T = float(cfg.get("expiry", 0.1))
    kind = cfg.get("kind", "call")
    K = _strikes(cfg, [80, 90, 100, 110, 120])
    method = cfg.get("method", "cos")
    if method == "mixture":
        if spec is None or isinstance(p, BatesParams) or slot != "sigma":
            raise ValueError("method 'mixture' is the closed-form route for a randomized BS sigma only")
        prices = ex.bs_mixture_price(p.s0, K, p.r, T, spec, N, kind)
    elif method == "cos":
        prices = price_vanilla(_chf(p, slot, spec, N, T), K, kind)
    else:
        raise ValueError(f"method must be 'cos' or 'mixture', got {method!r}")
    iv = implied_vol_array(prices, p.s0, K, p.r, T, kind)
    for k, pr, v in zip(K, prices, iv):
        em.add(expiry=T, strike=k, kind=kind, price=pr, implied_vol=v)


def cmd_price_vix(args, em):
    cfg = _merged(args)
    p = _model(cfg)
    if not isinstance(p, BatesParams):
        raise ValueError("price-vix needs Bates parameters")
    spec = _spec(cfg)
    slot = _slot(cfg, p)
    N = int(cfg.get("N", 5))
    T = float(cfg.get("expiry", 1 / 12))
    method = cfg.get("method", "direct")
    if spec is None:
        spec, N = Degenerate(getattr(p, slot)), 1
    if method == "cos":
        chf = vix2_chf_rand(p, slot, spec, N, T)
        F = vix_future_cos(chf)
    elif method == "direct":
        F = vix_future_rand(p, slot, spec, N, T)
    else:
        raise ValueError(f"method must be 'direct' or 'cos', got {method!r}")
    K = _strikes(cfg, list(np.round(F * np.linspace(0.6, 1.6, 11), 4)))
    if method == "cos":
        prices = vix_option_cos(K / VIX_SCALE, chf)
    else:
        prices = vix_option_rand(K / VIX_SCALE, p, slot, spec, N, T)
    df = math.exp(-p.r * T)
    for k, pr in zip(K, prices):
        try:
            iv = float(black76_implied_vol(pr, F, k, T, df))
        except RandAffineError:
            iv = float("nan")
        em.add(expiry=T, strike=k, future=F, price=pr, black_vol=iv)


def cmd_surface(args, em):
    cfg = _merged(args)
    p = _model(cfg)
    spec = _spec(cfg)
    slot = _slot(cfg, p)
    N = int(cfg.get("N", 5))
    expiries = _floats(cfg.get("expiries", list(ex.TABLE3_EXPIRIES.values())))
    if "strikes" in cfg:
        K = _floats(cfg["strikes"])
        strikes_fn = lambda T: K  # noqa: E731
    else:
        deltas = _floats(cfg.get("deltas", list(ex.TABLE3_DELTAS)))
        strikes_fn = lambda T: ex.table3_strikes(T, p.s0, deltas)  # noqa: E731
    for T, k, pr, iv in ex.iv_surface(p, slot, spec, N, strikes_fn, expiries, cfg.get("kind", "call")):
        em.add(expiry=T, strike=k, price=pr, implied_vol=iv)


def cmd_table3(args, em):
    cfg = _merged(args)
    name = cfg.get("spec", args.spec)
    if name not in ex.TABLE2:
        raise ValueError(f"spec must be one of {sorted(ex.TABLE2)}")
    Ns = _int_range(cfg.get("N", "2-9"))
    labels = cfg.get("expiries") or list(ex.TABLE3_EXPIRIES)
    if isinstance(labels, str):
        labels = labels.split(",")
    expiries = {lab: ex.TABLE3_EXPIRIES[lab] for lab in labels}
    rows, _ = ex.table3(ex.TABLE2[name], Ns, expiries, int(cfg.get("paths", 10_000_000)), args.seed)
    for r in rows:
        em.add(spec=name, T=r.label, N=r.N, max_iv_error_pct=r.error, route_gap=r.route_gap)


def cmd_mc(args, em):
    cfg = _merged(args)
    p = _model(cfg)
    spec = _spec(cfg)
    slot = _slot(cfg, p)
    N = int(cfg.get("N", 5))
    T = float(cfg.get("expiry", 0.1))
    kind = cfg.get("kind", "call")
    K = _strikes(cfg, [80, 90, 100, 110, 120])
    mc = McConfig(int(cfg.get("paths", 100_000)), int(cfg.get("steps_per_year", 365)),
                  cfg.get("scheme", "exact-cir"), args.seed)
    payoff = vanilla_payoff(kind, K)
    cos = price_vanilla(_chf(p, slot, spec, N, T), K, kind)
    which = cfg.get("estimator", "both")
    if which in ("v1", "both"):
        price, se = mc_price_v1(p, T, payoff, mc, slot if spec is not None else None, spec)
        for k, pr, s, c in zip(K, price, se, cos):
            em.add(estimator="v1", strike=k, price=pr, se=s, cos=c, z=(pr - c) / s if s > 0 else 0.0)
    if which in ("v2", "both"):
        if spec is None:
            raise ValueError("the V2 estimator needs a randomizer")
        res = price_v2(p, slot, spec, N, payoff, T, mc)
        for k, pr, s, c in zip(K, res.price, res.se, cos):
            em.add(estimator="v2", strike=k, price=pr, se=s, cos=c, z=(pr - c) / s if s > 0 else 0.0)


def cmd_sens(args, em):
    cfg = _merged(args)
    p = _model(cfg)
    spec = _spec(cfg)
    if spec is None:
        raise ValueError("sens needs a randomizer")
    slot = _slot(cfg, p)
    N = int(cfg.get("N", 5))
    T = float(cfg.get("expiry", 0.1))
    kind = cfg.get("kind", "call")
    hyper = cfg.get("hyper", "a_hat")
    K = _strikes(cfg, [80, 90, 100, 110, 120])
    out = dprice_dhyper(K, kind, CharacteristicFn(p, T), slot, spec, hyper, N, BumpConfig(float(cfg.get("bump",
                                                                                                     1e-4))))
    for k, pr, d in zip(K, out.price, out.derivative):
        em.add(strike=k, hyper=hyper, price=pr, derivative=d, bump=out.bump)


def cmd_calibrate(args, em):
    cfg = load_config(args.config)
    surface = load_quotes(args.quotes)
    initial = params_from_dict(cfg.get("initial", ex.TABLE5[1][0].to_dict()))
    if not isinstance(initial, BatesParams):
        raise ValueError("calibration needs an initial Bates parameter block")
    o = cfg.get("options", {})
    opts = CalibrationOptions(
        slot=o.get("slot", "gamma"), N=int(o.get("N", 5)),
        stage2_free=tuple(o.get("stage2_free", CalibrationOptions.stage2_free)),
        max_evals=int(o.get("max_evals", 2000)), w_atm=float(o.get("w_atm", 5.0)),
        vix_method=o.get("vix_method", "cos"), polish=bool(o.get("polish", True)))
    res = calibrate_two_stage(surface, replace(initial), opts)
    row = res.table_row()
    row.update(objective=res.objective, rmse_vol_pts=res.rmse_vol_points(), evaluations=res.iterations,
               converged=res.converged)
    em.add(**row)


COMMANDS = {
    "quadrature": cmd_quadrature,
    "price-vanilla": cmd_price_vanilla,
    "price-vix": cmd_price_vix,
    "surface": cmd_surface,
    "table3": cmd_table3,
    "mc": cmd_mc,
    "sens": cmd_sens,
    "calibrate": cmd_calibrate,
}


def _global_flags(p, default):
    p.add_argument("--seed", type=int, default=default, help="random seed (default 42)")
    p.add_argument("--out", default=default, help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json-lines"), default=default)
    p.add_argument("--precision", type=int, default=default, help="significant digits in output (default 12)")


def build_parser():
    ap = argparse.ArgumentParser(prog="randaffine", description="Randomized affine diffusion pricing tools.")
    _global_flags(ap, argparse.SUPPRESS)
    ap.set_defaults(seed=42, out=None, format="csv", precision=12)
    # the global flags are also accepted after the subcommand
    shared = argparse.ArgumentParser(add_help=False)
    _global_flags(shared, argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[shared], **kw)

    sub.add_parser = add_parser

    def common(p, model=True):
        p.add_argument("--config", default=None, help="YAML or JSON config file")
        p.add_argument("--preset", default=None, help=f"named parameter block: {', '.join(sorted(PRESETS))}")
        p.add_argument("--family", default=None, help="randomizer family (overrides config)")
        p.add_argument("--hyper-value", dest="hyper_values", action="append", metavar="KEY=VALUE",
                       help="randomizer hyper-parameter, repeatable")
        p.add_argument("--N", type=int, default=None)
        if model:
            p.add_argument("--slot", default=None)
            p.add_argument("--expiry", type=float, default=None)
            p.add_argument("--strikes", default=None, help="comma separated")
            p.add_argument("--strikes-file", dest="strikes_file", default=None, help="CSV with a 'strike' column")

    p = sub.add_parser("quadrature", help="quadrature pairs of a randomizer")
    common(p, model=False)
    p.add_argument("--method", choices=("exact", "cholesky"), default=None)
    p = sub.add_parser("price-vanilla", help="European option prices")
    common(p)
    p.add_argument("--kind", choices=("call", "put"), default=None)
    p.add_argument("--method", choices=("cos", "mixture"), default=None)
    p = sub.add_parser("price-vix", help="VIX option prices in VIX points")
    common(p)
    p.add_argument("--method", choices=("direct", "cos"), default=None)
    p = sub.add_parser("surface", help="implied volatility surface")
    common(p)
    p.add_argument("--expiries", default=None, help="comma separated, in years")
    p.add_argument("--deltas", default=None, help="strike rule K = S0 exp(0.1 sqrt(T) delta)")
    p.add_argument("--kind", choices=("call", "put"), default=None)
    p = sub.add_parser("table3", help="max IV error of randomized BS against Monte Carlo")
    p.add_argument("--config", default=None)
    p.add_argument("--spec", choices=sorted(ex.TABLE2), default="gamma")
    p.add_argument("--N", default=None, help="range such as 2-9")
    p.add_argument("--expiries", default=None, help=f"labels from {','.join(ex.TABLE3_EXPIRIES)}")
    p.add_argument("--paths", type=int, default=None)
    p = sub.add_parser("mc", help="Monte Carlo prices (V1 and V2 estimators) next to COS")
    common(p)
    p.add_argument("--kind", choices=("call", "put"), default=None)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--scheme", default=None)
    p.add_argument("--steps-per-year", dest="steps_per_year", type=int, default=None)
    p.add_argument("--estimator", choices=("v1", "v2", "both"), default=None)
    p = sub.add_parser("sens", help="price derivative with respect to a randomizer hyper-parameter")
    common(p)
    p.add_argument("--kind", choices=("call", "put"), default=None)
    p.add_argument("--hyper", default=None)
    p = sub.add_parser("calibrate", help="two-stage calibration to index and VIX quotes")
    p.add_argument("--quotes", required=True)
    p.add_argument("--config", default=None)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    em = Emitter(args.format, args.out, args.precision)
    try:
        COMMANDS[args.command](args, em)
    except (RandAffineError, ValueError, OSError) as exc:
        print(f"randaffine {args.command}: error: {exc}", file=sys.stderr)
        return 2
    em.write()
    return 0


if __name__ == "__main__":
    sys.exit(main())
