"""Airway branch codes.

``B1`` is the tracheal bifurcation.  Each further digit walks to a daughter
bifurcation: ``1`` for the major (larger diameter) daughter, ``2`` for the
minor one.  An angle code appends ``A1`` or ``A2`` to pick the daughter whose
branching angle is meant, e.g. ``B1121A2``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

_CODE_RE = re.compile(r"^B1([12]*)(?:A([12]))?$")


class CodeError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class BranchCode:
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if any(d not in (1, 2) for d in self.path):
            raise CodeError(f"branch path digits must be 1 or 2, got {self.path}")
        object.__setattr__(self, "path", tuple(self.path))

    @property
    def generation(self) -> int:
        return len(self.path) + 1

    @property
    def parent(self) -> "BranchCode | None":
        return BranchCode(self.path[:-1]) if self.path else None

    def child(self, digit: int) -> "BranchCode":
        return BranchCode(self.path + (digit,))

    def angle(self, index: int) -> "AngleCode":
        return AngleCode(self, index)

    def __str__(self) -> str:
        return "B1" + "".join(map(str, self.path))

    def sort_key(self):
        return str(self)


@dataclass(frozen=True)
class AngleCode:
    branch: BranchCode
    index: int

    def __post_init__(self):
        if self.index not in (1, 2):
            raise CodeError(f"angle index must be 1 or 2, got {self.index}")

    @property
    def generation(self) -> int:
        return self.branch.generation

    @property
    def daughter(self) -> BranchCode:
        """Code of the airway whose angle this is."""
        return self.branch.child(self.index)

    def __str__(self) -> str:
        return f"{self.branch}A{self.index}"


def parse_code(text: str) -> BranchCode | AngleCode:
    m = _CODE_RE.match(text.strip())
    if not m:
        raise CodeError(f"malformed branch code {text!r}")
    branch = BranchCode(tuple(int(c) for c in m.group(1)))
    if m.group(2) is None:
        return branch
    return AngleCode(branch, int(m.group(2)))


def parse_branch(text: str) -> BranchCode:
    code = parse_code(text)
    if not isinstance(code, BranchCode):
        raise CodeError(f"expected a branch code, got angle code {text!r}")
    return code


def parse_angle(text: str) -> AngleCode:
    code = parse_code(text)
    if not isinstance(code, AngleCode):
        raise CodeError(f"expected an angle code, got {text!r}")
    return code


def all_branches(max_generation: int, exclude=()) -> list[BranchCode]:
    """Every bifurcation code up to ``max_generation``, skipping the subtrees
    rooted at the codes in ``exclude``."""
    excluded = [parse_branch(e) if isinstance(e, str) else e for e in exclude]
    out = []
    frontier = [BranchCode()]
    while frontier:
        code = frontier.pop(0)
        if any(code.path[: len(e.path)] == e.path for e in excluded):
            continue
        out.append(code)
        if code.generation < max_generation:
            frontier.extend([code.child(1), code.child(2)])
    return sorted(out, key=str)


# bifurcations B1221 and B1222 are not part of the 26-angle pool
POOL_EXCLUDED = ("B1221", "B1222")


def angle_pool(generations) -> list[AngleCode]:
    """Named angle pools: the 26 angles of generations 1-4 or any subset of
    those generations (e.g. ``{3, 4}`` gives the 20-angle pool)."""
    gens = set(generations)
    if not gens:
        return []
    codes = all_branches(max(gens), exclude=POOL_EXCLUDED)
    return sorted((c.angle(i) for c in codes if c.generation in gens for i in (1, 2)), key=str)


def named_pool(name: str) -> list[AngleCode]:
    pools = {"all26": {1, 2, 3, 4}, "gen1234": {1, 2, 3, 4}, "gen34": {3, 4}}
    if name not in pools:
        raise CodeError(f"unknown pool {name!r}; choose from {sorted(pools)}")
    return angle_pool(pools[name])
