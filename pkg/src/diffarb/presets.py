"""Ready-made example markets.

Each preset builds a complete RunConfig: model coefficients,
certificates where useful ones exist, and a simulation plan sized so a
full report finishes in seconds.  The JSON files shipped in the
``presets/`` data directory are the canonical serialisations of these
configurations (see tests/test_presets.py, which pins them byte for
byte).

girsanov
    Scalar market with diffusion min(sqrt|x|, 1) and no drift.  The
    volatility floor at the origin makes the driftless dynamics
    non-unique, yet a bounded market price of risk exists and an EMM
    can be certified.
novikov-fail
    Two-dimensional unit-volatility market with drift (5 x2, 0).
    Exponential moment conditions on the drift fail, but the
    diffusion-only criteria still certify an EMM.
radial-d
    Radial power market a = (max(norm, 1))^(2+eps) Id with an inward
    drift of matching strength.  A supermartingale deflator exists in
    every dimension; an equivalent local martingale measure exists
    exactly for d <= 2.  Parameters: d (default 3), eps (default 1).
power-1d
    Scalar power-volatility market a = (max(|x1|, 1))^delta.  The
    discounted asset is a true martingale iff delta <= 1; larger
    exponents price a bubble.  Parameter: delta (default 1.5).
bessel-cubed
    Cube of a Brownian motion started at zero.  No market price of
    risk exists at the origin, hence no deflator of any strength; the
    checks report failure evidence rather than certificates.
"""

from __future__ import annotations

from .config import ALL_APPLICABLE, RunConfig
from .errors import UnknownPreset
from .model import CertificateBundle, MarketModel
from .simulate import SimConfig

PRESET_NAMES = ("girsanov", "novikov-fail", "radial-d", "power-1d",
                "bessel-cubed")

# Greek spellings accepted for the parameterised presets.
_PARAM_ALIASES = {"δ": "delta", "ε": "eps"}


def _fmt(value: float) -> str:
    """Shortest plain rendering of a positive parameter (1.0 -> "1")."""
    return format(float(value), "g")


def _reject_extras(name: str, params: dict, allowed: tuple = ()) -> None:
    extras = sorted(set(params) - set(allowed))
    if extras:
        if allowed:
            raise ValueError(
                f"preset {name!r} accepts only {', '.join(allowed)}; "
                f"got {', '.join(extras)}")
        raise ValueError(
            f"preset {name!r} takes no parameters; got {', '.join(extras)}")


def _girsanov() -> RunConfig:
    model = MarketModel(
        d=1, m=1, T=1.0, x0=(0.0,), S0=(1.0,),
        b=("0",), a=(("min(sqrt(abs(x1)),1)",),), mu=())
    certs = CertificateBundle(zeta="2", a_hat="1")
    sim = SimConfig(steps_per_unit_time=256, paths=4000,
                    radii=(4.0, 6.0, 8.0), master_seed=2024)
    return RunConfig(model=model, certificates=certs,
                     checks=ALL_APPLICABLE, simulate=sim)


def _novikov_fail() -> RunConfig:
    model = MarketModel(
        d=2, m=2, T=1.0, x0=(0.0, 0.0), S0=(1.0, 1.0),
        b=("5*x2", "0"), a=(("1", "0"), ("0", "1")), mu=())
    certs = CertificateBundle(zeta="3", a_hat="1")
    sim = SimConfig(steps_per_unit_time=256, paths=4000,
                    radii=(4.0, 6.0, 8.0), master_seed=2024)
    return RunConfig(model=model, certificates=certs,
                     checks=ALL_APPLICABLE, simulate=sim)


def _radial_d(d: int = 3, eps: float = 1.0) -> RunConfig:
    d = int(d)
    eps = float(eps)
    if d < 1:
        raise ValueError(f"radial-d needs d >= 1, got {d}")
    if eps <= 0:
        raise ValueError(f"radial-d needs eps > 0, got {eps}")
    power = _fmt(2.0 + eps)
    f = f"(max(norm,1))^{power}"
    # Inward drift -(beta/2) * norm^eps * x with the weakest admissible
    # pull; in d <= 2 that is no drift at all.
    beta = float(max(d - 2, 0))
    if beta == 0.0:
        b = tuple("0" for _ in range(d))
    else:
        b = tuple(f"-({_fmt(beta / 2)})*norm^{_fmt(eps)}*x{i}"
                  for i in range(1, d + 1))
    a = tuple(tuple(f if i == j else "0" for j in range(d))
              for i in range(d))
    x0 = tuple(1.0 if i == 0 else 0.0 for i in range(d))
    model = MarketModel(d=d, m=d, T=1.0, x0=x0, S0=tuple(1.0 for _ in range(d)),
                        b=b, a=a, mu=())
    certs = CertificateBundle(
        zeta="1", a_hat=f,
        A=f"2*z*(sqrt(2*z))^{power}", B=f"{d}/(2*z)",
        xi=f"(max(z,1))^{power}", alpha=f"rho^{power}")
    sim = SimConfig(steps_per_unit_time=512, paths=4000,
                    radii=(4.0, 8.0, 16.0, 32.0), master_seed=2024)
    return RunConfig(model=model, certificates=certs,
                     checks=ALL_APPLICABLE, simulate=sim)


def _power_1d(delta: float = 1.5) -> RunConfig:
    delta = float(delta)
    if delta <= 0:
        raise ValueError(f"power-1d needs delta > 0, got {delta}")
    dstr = _fmt(delta)
    f = f"(max(abs(x1),1))^{dstr}"
    model = MarketModel(d=1, m=1, T=1.0, x0=(1.0,), S0=(1.0,),
                        b=("0",), a=((f,),), mu=())
    certs = CertificateBundle(
        zeta="3", a_hat=f,
        xi=f"(max(z,1))^{dstr}", alpha=f"rho^{dstr}")
    sim = SimConfig(steps_per_unit_time=512, paths=4000,
                    radii=(4.0, 8.0, 24.0, 32.0), master_seed=2024,
                    drift_mode="Q_shift", shift_asset=1)
    return RunConfig(model=model, certificates=certs,
                     checks=ALL_APPLICABLE, simulate=sim)


def _bessel_cubed() -> RunConfig:
    model = MarketModel(
        d=1, m=1, T=1.0, x0=(0.0,), S0=(1.0,),
        b=("3*x1/abs(x1)^(2/3)",), a=(("9*abs(x1)^(4/3)",),), mu=())
    return RunConfig(model=model, certificates=None,
                     checks=ALL_APPLICABLE, simulate=None)


def preset(name: str, **params) -> RunConfig:
    """Build one of the named example configurations.

    radial-d takes ``d`` and ``eps``, power-1d takes ``delta`` (Greek
    spellings work too); the other presets take no parameters.
    Raises UnknownPreset for an unrecognised name and ValueError for
    bad parameters.
    """
    params = {_PARAM_ALIASES.get(key, key): value
              for key, value in params.items()}
    if name == "girsanov":
        _reject_extras(name, params)
        return _girsanov()
    if name == "novikov-fail":
        _reject_extras(name, params)
        return _novikov_fail()
    if name == "radial-d":
        _reject_extras(name, params, allowed=("d", "eps"))
        return _radial_d(**params)
    if name == "power-1d":
        _reject_extras(name, params, allowed=("delta",))
        return _power_1d(**params)
    if name == "bessel-cubed":
        _reject_extras(name, params)
        return _bessel_cubed()
    raise UnknownPreset(name, PRESET_NAMES)


__all__ = ["PRESET_NAMES", "preset"]
