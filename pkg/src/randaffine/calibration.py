"""Two-stage calibration of the randomized Bates model to index and VIX options.

Stage 1 fits plain Bates to index implied vols.  Stage 2 starts from the
stage-1 point, randomizes one slot (gamma by default) with a uniform law and
fits index and VIX quotes jointly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, minimize

from .chf import CharacteristicFn, randomize_chf
from .cos import price_vanilla
from .errors import DomainError, InvariantViolation, RandAffineError
from .models import BatesParams
from .randomizers import Degenerate, Uniform
from .special import black76, black76_implied_vol, black76_vega, implied_vol_array
from .vix import VIX_SCALE, Vix2ChF, vix2_chf_rand, vix_coefficients, vix_future_cos, vix_mean, \
    vix_option_cos, vix_option_direct, vix_option_rand

W_ATM = 5.0
PENALTY = 1e3
UNDERLYINGS = ("index", "vix")


@dataclass(frozen=True)
class Quote:
    underlying: str
    expiry: float
    strike: float
    mid_iv: float
    bid_iv: float | None = None
    ask_iv: float | None = None


@dataclass
class QuoteSurface:
    quotes: list
    spot: float = 100.0
    rate: float = 0.0
    valuation_date: str = ""

    def __post_init__(self):
        seen = set()
        for i, q in enumerate(self.quotes):
            _validate_quote(q, f"quote {i}")
            key = (q.underlying, q.expiry, q.strike)
            if key in seen:
                raise InvariantViolation(f"duplicate quote {key}")
            seen.add(key)

    def select(self, underlying):
        return [q for q in self.quotes if q.underlying == underlying]

    def expiries(self, underlying):
        return sorted({q.expiry for q in self.quotes if q.underlying == underlying})

    def __len__(self):
        return len(self.quotes)


def _validate_quote(q, where):
    if q.underlying not in UNDERLYINGS:
        raise InvariantViolation(f"{where}: underlying must be one of {UNDERLYINGS}, got {q.underlying!r}")
    if not q.expiry > 0:
        raise InvariantViolation(f"{where}: expiry must be positive")
    if not q.strike > 0:
        raise InvariantViolation(f"{where}: strike must be positive")
    if not q.mid_iv > 0:
        raise InvariantViolation(f"{where}: mid_iv must be positive")
    if q.bid_iv is not None and q.ask_iv is not None and q.bid_iv > q.ask_iv:
        raise InvariantViolation(f"{where}: bid_iv exceeds ask_iv")
    if q.bid_iv is not None and q.bid_iv > q.mid_iv:
        raise InvariantViolation(f"{where}: bid_iv exceeds mid_iv")
    if q.ask_iv is not None and q.mid_iv > q.ask_iv:
        raise InvariantViolation(f"{where}: mid_iv exceeds ask_iv")


def load_quotes(path, spot=None, rate=None) -> QuoteSurface:
    """Read a quote CSV with header ``underlying,expiry,strike,mid_iv[,bid_iv,ask_iv]``.

    Leading ``# key=value`` lines may set ``spot``, ``rate`` and
    ``valuation_date``; keyword arguments override them.
    """
    meta = {}
    quotes = []
    seen = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if s.startswith("#"):
            if "=" in s:
                k, v = s[1:].split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        if s:
            body.append((lineno, line))
    if not body:
        raise InvariantViolation(f"{path}: no header row")
    header_line, header = body[0][0], next(csv.reader([body[0][1]]))
    header = [h.strip() for h in header]
    required = ["underlying", "expiry", "strike", "mid_iv"]
    missing = [h for h in required if h not in header]
    if missing:
        raise InvariantViolation(f"{path}:{header_line}: header lacks columns {missing}")
    for lineno, line in body[1:]:
        row = dict(zip(header, (c.strip() for c in next(csv.reader([line])))))
        try:
            q = Quote(
                row["underlying"].lower(),
                float(row["expiry"]),
                float(row["strike"]),
                float(row["mid_iv"]),
                float(row["bid_iv"]) if row.get("bid_iv") else None,
                float(row["ask_iv"]) if row.get("ask_iv") else None,
            )
        except (KeyError, ValueError) as exc:
            raise InvariantViolation(f"{path}:{lineno}: malformed row ({exc})") from None
        try:
            _validate_quote(q, f"{path}:{lineno}")
        except InvariantViolation:
            raise
        key = (q.underlying, q.expiry, q.strike)
        if key in seen:
            raise InvariantViolation(f"{path}:{lineno}: duplicate quote {key} (first on line {seen[key]})")
        seen[key] = lineno
        quotes.append(q)
    return QuoteSurface(
        quotes,
        float(spot if spot is not None else meta.get("spot", 100.0)),
        float(rate if rate is not None else meta.get("rate", 0.0)),
        meta.get("valuation_date", ""),
    )


def save_quotes(surface: QuoteSurface, path):
    with open(path, "w", newline="") as fh:
        fh.write(f"# spot={surface.spot!r}\n# rate={surface.rate!r}\n")
        if surface.valuation_date:
            fh.write(f"# valuation_date={surface.valuation_date}\n")
        w = csv.writer(fh)
        w.writerow(["underlying", "expiry", "strike", "mid_iv", "bid_iv", "ask_iv"])
        for q in surface.quotes:
            w.writerow([q.underlying, repr(q.expiry), repr(q.strike), repr(q.mid_iv),
                        "" if q.bid_iv is None else repr(q.bid_iv), "" if q.ask_iv is None else repr(q.ask_iv)])


# ---------------------------------------------------------------- model side

@dataclass(frozen=True)
class ModelSpec:
    """Bates parameters with one randomized slot (``spec=None`` means plain Bates)."""

    params: BatesParams
    slot: str = "gamma"
    spec: object = None
    N: int = 5

    def index_prices(self, expiry, strikes):
        base = CharacteristicFn(self.params, expiry)
        chf = base if self._plain else randomize_chf(base, self.slot, self.spec, self.N)
        return price_vanilla(chf, strikes, "call")

    @property
    def _plain(self):
        return self.spec is None or isinstance(self.spec, Degenerate)

    def _vix_chf(self, expiry):
        if self._plain:
            p = self.params if self.spec is None else self.params.with_param(self.slot, self.spec.theta0)
            return Vix2ChF([vix_coefficients(p, expiry)])
        return vix2_chf_rand(self.params, self.slot, self.spec, self.N, expiry)

    def vix_future(self, expiry, method="cos"):
        chf = self._vix_chf(expiry)
        if method == "cos":
            return vix_future_cos(chf)
        return VIX_SCALE * sum(w * vix_mean(co) for w, co in zip(chf.weights, chf.coeffs))

    def vix_prices(self, expiry, strikes_pts, method="cos"):
        """VIX call prices in VIX points for strikes in VIX points."""
        K = np.asarray(strikes_pts, dtype=float) / VIX_SCALE
        if method == "cos":
            return vix_option_cos(K, self._vix_chf(expiry))
        if self._plain:
            p = self.params if self.spec is None else self.params.with_param(self.slot, self.spec.theta0)
            return vix_option_direct(K, p, expiry)
        return vix_option_rand(K, self.params, self.slot, self.spec, self.N, expiry)


def synthetic_surface(model: ModelSpec, index_grid, vix_grid, spot=None, rate=None, vix_method="cos"):
    """Quotes whose mid vols are exactly those implied by ``model``.

    ``index_grid`` maps expiry to index strikes; ``vix_grid`` maps expiry to
    VIX strikes in points.  VIX vols are Black vols on the model VIX future.
    """
    p = model.params
    spot = p.s0 if spot is None else spot
    rate = p.r if rate is None else rate
    quotes = []
    for T, strikes in index_grid.items():
        K = np.asarray(strikes, dtype=float)
        iv = implied_vol_array(model.index_prices(T, K), spot, K, rate, T, "call")
        quotes += [Quote("index", float(T), float(k), float(v)) for k, v in zip(K, iv)]
    for T, strikes in vix_grid.items():
        K = np.asarray(strikes, dtype=float)
        F = model.vix_future(T, vix_method)
        df = math.exp(-rate * T)
        iv = black76_implied_vol(model.vix_prices(T, K, vix_method), F, K, T, df)
        quotes += [Quote("vix", float(T), float(k), float(v)) for k, v in zip(K, iv)]
    return QuoteSurface(quotes, spot, rate)


def atm_weights(surface: QuoteSurface, vix_forwards=None, w_atm=W_ATM):
    """Weight per quote: ``w_atm`` for the strike nearest the forward in each (underlying, expiry)."""
    w = np.ones(len(surface.quotes))
    groups = {}
    for i, q in enumerate(surface.quotes):
        groups.setdefault((q.underlying, q.expiry), []).append(i)
    for (und, T), idx in groups.items():
        if und == "index":
            fwd = surface.spot * math.exp(surface.rate * T)
        else:
            if not vix_forwards or T not in vix_forwards:
                # without a forward use the middle of the quoted strikes
                ks = sorted(surface.quotes[i].strike for i in idx)
                fwd = ks[len(ks) // 2]
            else:
                fwd = vix_forwards[T]
        best = min(idx, key=lambda i: abs(surface.quotes[i].strike / fwd - 1.0))
        w[best] = w_atm
    return w


def residuals(model: ModelSpec, surface: QuoteSurface, use_vix=True, vix_method="cos"):
    """Per-quote residuals in vol units (model minus market), in surface order.

    Index residuals are implied-vol differences.  VIX residuals are price
    differences against Black prices at the market vol on the model VIX
    future, divided by the Black vega.
    """
    res = np.full(len(surface.quotes), np.nan)
    by_group = {}
    for i, q in enumerate(surface.quotes):
        by_group.setdefault((q.underlying, q.expiry), []).append(i)
    for (und, T), idx in by_group.items():
        K = np.array([surface.quotes[i].strike for i in idx])
        mid = np.array([surface.quotes[i].mid_iv for i in idx])
        if und == "index":
            prices = model.index_prices(T, K)
            iv = implied_vol_array(prices, surface.spot, K, surface.rate, T, "call")
            res[idx] = iv - mid
        elif use_vix:
            F = model.vix_future(T, vix_method)
            df = math.exp(-surface.rate * T)
            prices = model.vix_prices(T, K, vix_method)
            target = black76(F, K, T, mid, df)
            vega = black76_vega(F, K, T, mid, df)
            res[idx] = (prices - target) / np.maximum(vega, 1e-12)
    return res


def objective(params: BatesParams, spec, surface: QuoteSurface, weights, slot="gamma", N=5, use_vix=True,
              vix_method="cos"):
    """Weighted RMS residual in vol units; pricing failures return a penalty."""
    return _objective(ModelSpec(params, slot, spec, N), surface, weights, use_vix, vix_method)


def _objective(model: ModelSpec, surface, weights, use_vix=True, vix_method="cos"):
    try:
        with np.errstate(all="ignore"):
            r = residuals(model, surface, use_vix, vix_method)
    except (RandAffineError, FloatingPointError, ValueError, ZeroDivisionError, OverflowError):
        return PENALTY
    mask = ~np.isnan(r)
    w = np.asarray(weights, dtype=float)[mask]
    r = r[mask]
    if not np.all(np.isfinite(r)):
        return PENALTY
    return float(math.sqrt(np.sum(w * r * r) / np.sum(w)))


# ---------------------------------------------------------------- optimizer

POSITIVE = {"kappa", "vbar", "gamma", "v0", "lam", "sigma_j"}
STAGE1_FREE = ("kappa", "vbar", "gamma", "rho", "v0", "lam", "mu_j", "sigma_j")
STAGE2_FREE = ("vbar", "rho", "lam")


def _encode(name, value):
    if name in POSITIVE or name in ("a_hat", "b_hat"):
        return math.log(max(value, 1e-12))
    if name == "rho":
        return math.atanh(min(max(value, -0.999999), 0.999999))
    return value


def _decode(name, x):
    if name in POSITIVE or name in ("a_hat", "b_hat"):
        return math.exp(min(x, 50.0))
    if name == "rho":
        return math.tanh(x)
    return x


@dataclass
class StageResult:
    model: ModelSpec
    objective: float
    evaluations: int
    converged: bool
    message: str = ""


@dataclass
class CalibrationResult:
    params: BatesParams
    spec: object
    objective: float
    residuals: np.ndarray
    iterations: int
    converged: bool
    stage1: StageResult
    stage2: StageResult | None
    weights: np.ndarray = field(default=None)

    def rmse_vol_points(self):
        return 100.0 * float(np.sqrt(np.nanmean(self.residuals ** 2)))

    def table_row(self):
        p = self.params
        row = {"kappa": p.kappa, "v0": p.v0, "vbar": p.vbar, "rho": p.rho, "mu_j": p.mu_j,
               "sigma_j": p.sigma_j, "lam": p.lam}
        if isinstance(self.spec, Uniform):
            row["gamma_a_hat"], row["gamma_b_hat"] = self.spec.a_hat, self.spec.b_hat
        else:
            row["gamma"] = p.gamma
        return row


def _build(names, x, template: ModelSpec):
    values = {n: float(_decode(n, xi)) for n, xi in zip(names, x)}
    pvals = {k: v for k, v in values.items() if k not in ("a_hat", "b_hat")}
    if not -1.0 < pvals.get("rho", template.params.rho) < 1.0:
        return None
    try:
        params = replace(template.params, **pvals)
    except DomainError:
        return None
    spec = template.spec
    if "a_hat" in values or "b_hat" in values:
        a = values.get("a_hat", getattr(spec, "a_hat", None))
        b = values.get("b_hat", getattr(spec, "b_hat", None))
        if not (0 < a < b):
            return None
        spec = Uniform(a, b)
    return replace(template, params=params, spec=spec)


def _start_vector(names, template):
    return np.array([_encode(n, getattr(template.spec if n in ("a_hat", "b_hat") else template.params, n))
                     for n in names])


class _BudgetSpent(Exception):
    pass


def _run_stage(names, template: ModelSpec, surface, weights, use_vix, max_evals, vix_method, xatol, fatol,
               polish=True):
    """Simplex search, then a Levenberg-Marquardt polish on the remaining budget.

    Both phases work in transformed coordinates (log for positive
    parameters, atanh for rho).  Proposals that violate an admissibility
    constraint are not priced and get a penalty.
    """
    x0 = _start_vector(names, template)
    w = np.asarray(weights, dtype=float)
    w_norm = np.sqrt(w / w.sum())
    best = {"f": math.inf, "model": template}
    count = {"n": 0}

    def vec(x):
        # hard cap: the optimizers only check their own budgets between iterations
        if count["n"] >= max_evals:
            raise _BudgetSpent
        count["n"] += 1
        model = _build(names, x, template)
        if model is None:
            return None, np.full(len(w), PENALTY)
        try:
            with np.errstate(all="ignore"):
                r = residuals(model, surface, use_vix, vix_method)
        except (RandAffineError, FloatingPointError, ValueError, ZeroDivisionError, OverflowError):
            return None, np.full(len(w), PENALTY)
        r = np.where(np.isnan(r), 0.0, r)
        if not np.all(np.isfinite(r)):
            return None, np.full(len(w), PENALTY)
        out = w_norm * r
        val = float(math.sqrt(np.sum(out * out)))
        if val < best["f"]:
            best["f"], best["model"] = val, model
        return model, out

    def f(x):
        return float(np.linalg.norm(vec(x)[1]))

    # simplex steps of 10% in transformed coordinates
    steps = np.full(len(x0), 0.1)
    simplex = np.vstack([x0] + [x0 + np.eye(len(x0))[i] * steps[i] for i in range(len(x0))])
    simplex_budget = max_evals // 2 if polish else max_evals
    try:
        out = minimize(f, x0, method="Nelder-Mead",
                       options={"maxfev": simplex_budget, "initial_simplex": simplex, "xatol": xatol,
                                "fatol": fatol, "adaptive": True})
        converged, message = bool(out.success), "simplex: " + str(out.message)
    except _BudgetSpent:
        converged, message = False, "simplex: evaluation budget spent"
    left = max_evals - count["n"]
    if polish and left > len(x0) + 1:
        start = _start_vector(names, best["model"])
        try:
            # LM needs at least as many residuals as unknowns
            method = "lm" if len(w) >= len(x0) else "trf"
            ls = least_squares(lambda x: vec(x)[1], start, method=method, xtol=1e-12, ftol=1e-14, gtol=1e-14,
                               max_nfev=left)
            converged = bool(ls.status > 0)
            message += "; polish: " + str(ls.message)
        except _BudgetSpent:
            converged = False
            message += "; polish: evaluation budget spent"
    model, val = best["model"], best["f"]
    # the reported value is recomputed with the public objective
    val = _objective(model, surface, weights, use_vix, vix_method)
    return StageResult(model, val, count["n"], converged, message)


@dataclass
class CalibrationOptions:
    slot: str = "gamma"
    N: int = 5
    stage2_free: tuple = STAGE2_FREE
    stage1_free: tuple = STAGE1_FREE
    max_evals: int = 2000
    w_atm: float = W_ATM
    vix_method: str = "cos"
    initial_spec: object = None
    xatol: float = 1e-7
    fatol: float = 1e-12
    polish: bool = True


def calibrate_two_stage(surface: QuoteSurface, initial: BatesParams, options: CalibrationOptions = None,
                        stage1: StageResult | None = None) -> CalibrationResult:
    """Stage 1 on index quotes with plain Bates, stage 2 jointly with a uniform randomizer."""
    opts = options or CalibrationOptions()
    if not surface.select("index"):
        raise DomainError("calibration needs index quotes for stage 1")
    if not surface.select("vix"):
        raise DomainError("stage 2 needs VIX quotes; the surface has none")
    initial = replace(initial, s0=surface.spot, r=surface.rate)

    if stage1 is None:
        w_index = atm_weights(surface, None, opts.w_atm)
        plain = ModelSpec(initial, opts.slot, None, opts.N)
        stage1 = _run_stage(list(opts.stage1_free), plain, surface, w_index, False, opts.max_evals,
                            opts.vix_method, opts.xatol, opts.fatol, opts.polish)
    p1 = stage1.model.params
    theta = getattr(p1, opts.slot)
    spec0 = opts.initial_spec or Uniform(0.5 * theta, 1.5 * theta)
    template = ModelSpec(p1, opts.slot, spec0, opts.N)
    forwards = {T: template.vix_future(T, opts.vix_method) for T in surface.expiries("vix")}
    weights = atm_weights(surface, forwards, opts.w_atm)
    names = ["a_hat", "b_hat"] + [n for n in opts.stage2_free if n != opts.slot]
    st2 = _run_stage(names, template, surface, weights, True, opts.max_evals, opts.vix_method, opts.xatol,
                     opts.fatol, opts.polish)
    final = st2.model
    res = residuals(final, surface, True, opts.vix_method)
    return CalibrationResult(final.params, final.spec, st2.objective, res, stage1.evaluations + st2.evaluations,
                             stage1.converged and st2.converged, stage1, st2, weights)
