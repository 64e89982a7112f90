"""JSON shapes of configurations, fields and reports.

Rationals travel as "num/den" strings, floats as JSON numbers (shortest
round-trip repr); key order is fixed by construction for byte-stable output.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

from app.services.configuration import (
    GENERAL,
    HYPERBOLIC,
    AugmentedConfiguration,
    Circle,
    Configuration,
    CycleSpec,
    ForestNode,
    augment_for_stability,
    index_circles,
    layout_forest,
    validate_configuration,
)
from app.services.construct import DarbouxData, Mode, VectorField, darboux_data
from app.services.errors import InvalidInput
from app.services.ratpoly import BivariatePolynomial
from app.utils.normalize import format_float, format_rational, parse_rational

FIELD_FORMAT = "realize-field/1"


# ---------- полиномы ----------
def poly_to_json(p: BivariatePolynomial) -> List[list]:
    return p.records()


def poly_from_json(data: Any, what: str = "polynomial") -> BivariatePolynomial:
    if not isinstance(data, list):
        raise InvalidInput(f"{what} must be a list of [i, j, coeff] records")
    return BivariatePolynomial.from_records(data)


def _point_to_json(p) -> List[str]:
    return [format_rational(p[0]), format_rational(p[1])]


def _point_from_json(data: Any, what: str) -> Tuple[Fraction, Fraction]:
    if not isinstance(data, list) or len(data) != 2:
        raise InvalidInput(f"{what} must be a pair of rationals")
    return parse_rational(data[0]), parse_rational(data[1])


# ---------- конфигурации ----------
def _number(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidInput(f"{what} must be a number, got {value!r}")
    return float(value)


def _integer(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidInput(f"{what} must be an integer, got {value!r}")
    return value


def cycle_to_json(spec: CycleSpec) -> Dict[str, Any]:
    return {
        "center": _point_to_json(spec.circle.center),
        "radius": format_rational(spec.circle.radius),
        "period": format_float(spec.period),
        "multiplicity": spec.multiplicity,
        "stability": spec.interior_stability,
    }


def cycle_from_json(data: Any, k: int) -> CycleSpec:
    if not isinstance(data, dict):
        raise InvalidInput(f"cycle {k} must be an object")
    missing = [key for key in ("center", "radius", "period") if key not in data]
    if missing:
        raise InvalidInput(f"cycle {k} is missing {', '.join(missing)}", k=k)
    return CycleSpec(
        Circle(_point_from_json(data["center"], f"cycle {k} center"), parse_rational(data["radius"])),
        period=_number(data["period"], f"cycle {k} period"),
        multiplicity=_integer(data.get("multiplicity", 1), f"cycle {k} multiplicity"),
        interior_stability=_integer(data.get("stability", 1), f"cycle {k} stability"),
    )


def config_to_json(c: Configuration) -> Dict[str, Any]:
    return {"cycles": [cycle_to_json(spec) for spec in c.cycles]}


def forest_from_json(nodes: Any, path: str = "forest") -> List[ForestNode]:
    if not isinstance(nodes, list):
        raise InvalidInput(f"{path} must be a list of nodes")
    out = []
    for i, node in enumerate(nodes):
        where = f"{path}[{i}]"
        if not isinstance(node, dict) or "period" not in node:
            raise InvalidInput(f"{where} must be an object with a period")
        out.append(
            ForestNode(
                period=_number(node["period"], f"{where}.period"),
                multiplicity=_integer(node.get("multiplicity", 1), f"{where}.multiplicity"),
                interior_stability=_integer(node.get("stability", 1), f"{where}.stability"),
                children=forest_from_json(node.get("children", []), f"{where}.children"),
            )
        )
    return out


def forest_to_json(nodes: List[ForestNode]) -> List[Dict[str, Any]]:
    return [
        {
            "period": format_float(n.period),
            "multiplicity": n.multiplicity,
            "stability": n.interior_stability,
            "children": forest_to_json(n.children),
        }
        for n in nodes
    ]


def config_from_json(data: Any) -> Tuple[Configuration, str]:
    """Configuration plus the input form ('cycles' or 'forest')."""
    if not isinstance(data, dict):
        raise InvalidInput("configuration must be a JSON object")
    if "cycles" in data:
        cycles = data["cycles"]
        if not isinstance(cycles, list) or not cycles:
            raise InvalidInput("'cycles' must be a non-empty list")
        return Configuration(tuple(cycle_from_json(c, k) for k, c in enumerate(cycles))), "cycles"
    if "forest" in data:
        return layout_forest(forest_from_json(data["forest"])), "forest"
    raise InvalidInput("configuration needs a 'cycles' or a 'forest' key")


# ---------- аугментация ----------
def augmentation_to_json(aug: AugmentedConfiguration) -> Dict[str, Any]:
    return {
        "mode": aug.mode,
        "epsilon": format_rational(aug.epsilon),
        "N": aug.N,
        "n1": aug.n1,
        "n2": aug.n2,
        "n2_stated": aug.n2_stated,
        "N_stated": aug.N_stated,
        "extra_circles": [
            {"center": _point_to_json(c.center), "radius": format_rational(c.radius), "owner": owner}
            for c, owner in zip(aug.extra_circles, aug.owners)
        ],
        "singular_points": [_point_to_json(q) for q in aug.singular_points],
    }


# ---------- Дарбу ----------
def darboux_to_json(d: DarbouxData) -> Dict[str, Any]:
    return {
        "kind": d.kind,
        "Lambda": d.Lambda,
        "factors": [{"f": poly_to_json(f), "exponent": format_rational(e)} for f, e in d.factors],
        "angular_centers": [{"center": _point_to_json(p), "weight": w} for p, w in d.angular_centers],
        "exponential_terms": [
            {"f": poly_to_json(f), "power": p, "coefficient": format_rational(c)} for f, p, c in d.exponential_terms
        ],
        "omitted": list(d.omitted),
    }


# ---------- поле ----------
def field_to_json(v: VectorField, aug: Optional[AugmentedConfiguration] = None) -> Dict[str, Any]:
    base = aug.base if aug is not None else v.source if isinstance(v.source, Configuration) else None
    return {
        "format": FIELD_FORMAT,
        "mode": v.mode.value,
        "degree": v.degree,
        "degree_bound": v.degree_bound,
        "P": poly_to_json(v.P),
        "Q": poly_to_json(v.Q),
        "V": poly_to_json(v.V),
        "tau": [format_rational(t) for t in v.tau],
        "circles": [
            {"center": _point_to_json(c.center), "radius": format_rational(c.radius), "multiplicity": m}
            for c, m in zip(v.circles, v.multiplicities)
        ],
        "base_count": v.base_count,
        "holes": [_point_to_json(p) for p in v.holes],
        "omitted": list(v.omitted),
        "tangential": [poly_to_json(t) for t in v.tangential],
        "configuration": config_to_json(base) if base is not None else None,
        "augmentation": augmentation_to_json(aug) if aug is not None else None,
        "darboux": darboux_to_json(darboux_data(v)),
    }


def field_from_json(data: Any) -> Tuple[VectorField, Optional[AugmentedConfiguration]]:
    if not isinstance(data, dict):
        raise InvalidInput("field file must be a JSON object")
    if data.get("format") != FIELD_FORMAT:
        raise InvalidInput(f"unsupported field format {data.get('format')!r}")
    try:
        mode = Mode.parse(data["mode"])
        circles_raw = data["circles"]
        circles = tuple(
            Circle(_point_from_json(c["center"], f"circle {k} center"), parse_rational(c["radius"]))
            for k, c in enumerate(circles_raw)
        )
        mults = tuple(_integer(c.get("multiplicity", 1), f"circle {k} multiplicity") for k, c in enumerate(circles_raw))
        tau = tuple(parse_rational(t) for t in data["tau"])
        tangential = tuple(poly_from_json(t, "tangential") for t in data["tangential"])
        base_count = _integer(data["base_count"], "base_count")
        degree_bound = _integer(data["degree_bound"], "degree_bound")
        holes = tuple(_point_from_json(p, "hole") for p in data.get("holes", []))
        omitted = tuple(_integer(k, "omitted index") for k in data.get("omitted", []))
        P, Q, V = (poly_from_json(data[key], key) for key in ("P", "Q", "V"))
    except (KeyError, TypeError, AttributeError) as exc:
        raise InvalidInput(f"malformed field file: {exc}") from exc
    if len(tau) != len(circles) or len(tangential) != len(circles):
        raise InvalidInput("tau and tangential lists must match the circle list")

    idx = index_circles(circles, mults)
    source = None
    aug = None
    if data.get("configuration") is not None:
        base, _ = config_from_json(data["configuration"])
        source = base
        if mode in (Mode.TS, Mode.FULL):
            aug = augment_for_stability(base, validate_configuration(base), HYPERBOLIC if mode is Mode.TS else GENERAL)
            if aug.circles != circles:
                raise InvalidInput("field circles do not match the re-derived augmentation")
            source = aug

    v = VectorField(
        P=P,
        Q=Q,
        V=V,
        tau=tau,
        mode=mode,
        degree_bound=degree_bound,
        circles=circles,
        multiplicities=mults,
        base_count=base_count,
        primary_centers=tuple(circles[k].center for k in idx.primary_ids()),
        tangential=tangential,
        holes=holes,
        omitted=omitted,
        source=source,
    )
    return v, aug
