"""Species sets: ordered class names with index 0 reserved for soil.

The species set is configuration, not code.  Two presets cover the common
cases; any ordered name list with "soil" first is accepted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

IRISH = ("soil", "grass", "clover", "weeds")
GRASSCLOVER = ("soil", "grass", "white_clover", "red_clover", "weeds")

PRESETS = {"irish": IRISH, "grassclover": GRASSCLOVER}


@dataclass(frozen=True)
class SpeciesSet:
    """Ordered species names. Index 0 is always soil/background and can
    never be pasted; indices are dense starting at 0."""

    names: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.names) < 2:
            raise ConfigError("species set needs soil plus at least one species")
        if len(set(self.names)) != len(self.names):
            raise ConfigError(f"duplicate species names: {self.names}")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    @classmethod
    def preset(cls, name: str) -> "SpeciesSet":
        try:
            return cls(PRESETS[name])
        except KeyError:
            raise ConfigError(
                f"unknown species preset {name!r}; choose from {sorted(PRESETS)}"
            ) from None

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        """Resolve a species name to its class index."""
        try:
            return self._index[name]
        except KeyError:
            raise ConfigError(
                f"unknown species {name!r}; configured set is {list(self.names)}"
            ) from None

    @property
    def pasteable(self) -> tuple[str, ...]:
        """Names of species that can be pasted (everything but soil)."""
        return self.names[1:]

    @property
    def n_pasteable(self) -> int:
        return len(self.names) - 1
