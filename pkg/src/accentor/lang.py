"""Per-language diacritic tables: which characters carry marks and what their bases are."""

from __future__ import annotations

from dataclasses import dataclass, field


def _with_upper(pairs: dict[str, str]) -> dict[str, str]:
    full = dict(pairs)
    for marked, base in pairs.items():
        full[marked.upper()] = base.upper()
    return full


# Lowercase mark->base maps; uppercase derived.
_HUNGARIAN = {
    "á": "a", "é": "e", "í": "i",
    "ó": "o", "ö": "o", "ő": "o",
    "ú": "u", "ü": "u", "ű": "u",
}

_POLISH = {
    "ą": "a", "ć": "c", "ę": "e", "ł": "l", "ń": "n",
    "ó": "o", "ś": "s", "ź": "z", "ż": "z",
}

_CZECH = {
    "á": "a", "č": "c", "ď": "d", "é": "e", "ě": "e", "í": "i",
    "ň": "n", "ó": "o", "ř": "r", "š": "s", "ť": "t",
    "ú": "u", "ů": "u", "ý": "y", "ž": "z",
}

_SLOVAK = {
    "á": "a", "ä": "a", "č": "c", "ď": "d", "é": "e", "í": "i",
    "ĺ": "l", "ľ": "l", "ň": "n", "ó": "o", "ô": "o",
    "ŕ": "r", "š": "s", "ť": "t", "ú": "u", "ý": "y", "ž": "z",
}


@dataclass(frozen=True)
class DiacriticTable:
    """Maps each diacritized character to its base character (both cases).

    A base never appears as a key, so stripping is idempotent.  The variant
    set of a base is its preimage under the map plus the base itself.
    """

    language_code: str
    mapping: dict[str, str]
    _variants: dict[str, tuple[str, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        for marked, base in self.mapping.items():
            if base in self.mapping:
                raise ValueError(f"base {base!r} also appears as a diacritized key")
            if len(marked) != 1 or len(base) != 1:
                raise ValueError("table entries must be single characters")
        groups: dict[str, list[str]] = {}
        for marked, base in self.mapping.items():
            groups.setdefault(base, []).append(marked)
        variants = {
            base: tuple([base] + sorted(marked_list))
            for base, marked_list in groups.items()
        }
        object.__setattr__(self, "_variants", variants)

    @property
    def marked_chars(self) -> tuple[str, ...]:
        """All diacritized characters, in codepoint order."""
        return tuple(sorted(self.mapping))

    @property
    def mapped_bases(self) -> tuple[str, ...]:
        """Bases that have at least one diacritized variant."""
        return tuple(sorted(self._variants))

    def base_of(self, ch: str) -> str:
        return self.mapping.get(ch, ch)

    def variants(self, ch: str) -> tuple[str, ...]:
        """The base of `ch` plus every diacritized form of that base."""
        return self._variants.get(self.base_of(ch), (ch,))

    def is_important(self, ch: str) -> bool:
        """True when the character's base family has >= 2 members."""
        return self.base_of(ch) in self._variants

    def strip(self, text: str) -> str:
        return text.translate(self._strip_table())

    def _strip_table(self):
        table = getattr(self, "_cached_strip", None)
        if table is None:
            table = str.maketrans(self.mapping)
            object.__setattr__(self, "_cached_strip", table)
        return table


def dediacritize(text: str, table: DiacriticTable) -> str:
    """Replace every mapped character by its base; everything else unchanged."""
    return table.strip(text)


_BUILTIN = {
    "hu": _HUNGARIAN,
    "pl": _POLISH,
    "cs": _CZECH,
    "sk": _SLOVAK,
}


def builtin_table(language_code: str) -> DiacriticTable:
    """Look up one of the packaged language tables (hu, pl, cs, sk)."""
    try:
        pairs = _BUILTIN[language_code]
    except KeyError:
        raise KeyError(
            f"no built-in table for {language_code!r}; available: {sorted(_BUILTIN)}"
        ) from None
    return DiacriticTable(language_code, _with_upper(pairs))


def available_languages() -> tuple[str, ...]:
    return tuple(sorted(_BUILTIN))
