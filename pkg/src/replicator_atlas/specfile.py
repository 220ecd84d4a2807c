"""JSON game documents with path-precise diagnostics.

Supported ``kind`` values::

    {"kind": "congestion", "resources": [{"a": 1, "b": 0}, ...],
     "strategies": [[[0], [1, 2]], ...]}            # per player, resource lists
    {"kind": "coordination", "vertices": 2, "strategies": 2,
     "labels": ["Stag", "Hare"],                   # optional
     "edges": [{"i": 0, "j": 1, "matrix": [[1, 0], [0, 2]]}]}
    {"kind": "balls_bins", "n": 3, "m": 3}
    {"kind": "gw", "w": 2}
    {"kind": "star_stag_hunt", "n": 3, "w": 2}
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .errors import ConstructionError, SpecParseError
from .games import (
    CongestionGame,
    CoordinationEdge,
    Game,
    MixedProfile,
    NetworkCoordinationGame,
    balls_bins,
    gw_game,
    star_stag_hunt,
)

KINDS = ("congestion", "coordination", "balls_bins", "gw", "star_stag_hunt")


def _get(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise SpecParseError(f"{path}.{key}", "missing required field")
    return obj[key]


def _number(v: Any, path: str, minimum: float | None = None, strict: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SpecParseError(path, f"expected a finite number, got {v!r}")
    if minimum is not None and (v <= minimum if strict else v < minimum):
        op = ">" if strict else ">="
        raise SpecParseError(path, f"must be {op} {minimum}")
    return float(v)


def _integer(v: Any, path: str, minimum: int) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SpecParseError(path, f"expected an integer, got {v!r}")
    if v < minimum:
        raise SpecParseError(path, f"must be >= {minimum}")
    return v


def _list(v: Any, path: str) -> list:
    if not isinstance(v, list):
        raise SpecParseError(path, f"expected a list, got {type(v).__name__}")
    return v


def _parse_congestion(doc: dict) -> CongestionGame:
    resources = []
    res_list = _list(_get(doc, "resources", "$"), "$.resources")
    for e, r in enumerate(res_list):
        p = f"$.resources[{e}]"
        if not isinstance(r, dict):
            raise SpecParseError(p, "expected an object with fields a and b")
        a = _number(_get(r, "a", p), f"{p}.a", 0.0)
        b = _number(r.get("b", 0.0), f"{p}.b", 0.0)
        resources.append((a, b))
    strategies = []
    for i, sset in enumerate(_list(_get(doc, "strategies", "$"), "$.strategies")):
        p = f"$.strategies[{i}]"
        player = []
        for s, strat in enumerate(_list(sset, p)):
            ps = f"{p}[{s}]"
            ids = [_integer(e, f"{ps}[{k}]", 0) for k, e in enumerate(_list(strat, ps))]
            for k, e in enumerate(ids):
                if e >= len(resources):
                    raise SpecParseError(f"{ps}[{k}]", f"unknown resource {e}")
            player.append(tuple(ids))
        strategies.append(tuple(player))
    try:
        return CongestionGame(tuple(resources), tuple(strategies))
    except ConstructionError as exc:
        raise SpecParseError("$.strategies", str(exc)) from None


def _parse_coordination(doc: dict) -> NetworkCoordinationGame:
    n = _integer(_get(doc, "vertices", "$"), "$.vertices", 1)
    k = _integer(_get(doc, "strategies", "$"), "$.strategies", 2)
    labels = doc.get("labels")
    if labels is not None:
        labels = _list(labels, "$.labels")
        if len(labels) != k or not all(isinstance(s, str) for s in labels):
            raise SpecParseError("$.labels", f"expected {k} strings")
    edges = []
    for m, e in enumerate(_list(_get(doc, "edges", "$"), "$.edges")):
        p = f"$.edges[{m}]"
        if not isinstance(e, dict):
            raise SpecParseError(p, "expected an object with fields i, j, matrix")
        i = _integer(_get(e, "i", p), f"{p}.i", 0)
        j = _integer(_get(e, "j", p), f"{p}.j", 0)
        for name, v in (("i", i), ("j", j)):
            if v >= n:
                raise SpecParseError(f"{p}.{name}", f"vertex {v} out of range")
        rows = _list(_get(e, "matrix", p), f"{p}.matrix")
        if len(rows) != k:
            raise SpecParseError(f"{p}.matrix", f"expected {k} rows")
        mat = []
        for r, row in enumerate(rows):
            pr = f"{p}.matrix[{r}]"
            row = _list(row, pr)
            if len(row) != k:
                raise SpecParseError(pr, f"expected {k} entries")
            mat.append(tuple(_number(x, f"{pr}[{c}]") for c, x in enumerate(row)))
        edges.append(CoordinationEdge(i, j, tuple(mat)))
    try:
        return NetworkCoordinationGame(n, k, tuple(edges), tuple(labels) if labels else None)
    except ConstructionError as exc:
        raise SpecParseError("$.edges", str(exc)) from None


def parse_game(doc: Any) -> Game:
    """Build a game from a decoded JSON document."""
    if not isinstance(doc, dict):
        raise SpecParseError("$", "expected a JSON object")
    kind = _get(doc, "kind", "$")
    if kind not in KINDS:
        raise SpecParseError("$.kind", f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    if kind == "congestion":
        return _parse_congestion(doc)
    if kind == "coordination":
        return _parse_coordination(doc)
    try:
        if kind == "balls_bins":
            n = _integer(_get(doc, "n", "$"), "$.n", 1)
            m = _integer(doc.get("m", n), "$.m", 2)
            return balls_bins(n, m)
        if kind == "gw":
            return gw_game(_number(_get(doc, "w", "$"), "$.w", 0.0, strict=True))
        n = _integer(_get(doc, "n", "$"), "$.n", 1)
        return star_stag_hunt(n, _number(_get(doc, "w", "$"), "$.w", 0.0, strict=True))
    except ConstructionError as exc:
        raise SpecParseError("$", str(exc)) from None


def loads_game(text: str) -> Game:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecParseError("$", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_game(doc)


def load_game(path: str | Path) -> Game:
    return loads_game(Path(path).read_text(encoding="utf-8"))


def game_to_dict(game: Game) -> dict:
    """Explicit (congestion or coordination) form of any game."""
    if isinstance(game, CongestionGame):
        return {
            "kind": "congestion",
            "resources": [{"a": a, "b": b} for a, b in game.resources],
            "strategies": [[list(s) for s in sset] for sset in game.strategies],
        }
    doc = {
        "kind": "coordination",
        "vertices": game.vertex_count,
        "strategies": game.strategy_count,
        "edges": [{"i": e.i, "j": e.j, "matrix": [list(r) for r in e.matrix]} for e in game.edges],
    }
    if game.strategy_labels is not None:
        doc["labels"] = list(game.strategy_labels)
    return doc


def dumps_game(game: Game) -> str:
    return json.dumps(game_to_dict(game), indent=2, sort_keys=True) + "\n"


def parse_profile(doc: Any, shape: tuple[int, ...], path: str = "$") -> MixedProfile:
    """A profile given as a list of per-player probability vectors."""
    rows = _list(doc, path)
    if len(rows) != len(shape):
        raise SpecParseError(path, f"expected {len(shape)} player vectors")
    vecs = []
    for i, row in enumerate(rows):
        p = f"{path}[{i}]"
        row = _list(row, p)
        if len(row) != shape[i]:
            raise SpecParseError(p, f"expected {shape[i]} probabilities")
        vecs.append([_number(x, f"{p}[{k}]") for k, x in enumerate(row)])
    return MixedProfile.from_vectors(vecs)
