"""Sellmeier dispersion forms and the crystal database.

Wavelengths passed to the evaluation routines are in nanometres; the
Sellmeier coefficients themselves follow the micrometre convention of the
handbook fits they were taken from.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ConfigError, DispersionRangeError

_FORMULAS = {}


def _formula(formula_id, n_coeff):
    def register(fn):
        _FORMULAS[formula_id] = (fn, n_coeff)
        return fn
    return register


@_formula("sellmeier_2pole", 5)
def _sellmeier_2pole(c, lam_um):
    l2 = lam_um ** 2
    a, b, cc, d, e = c
    return np.sqrt(a + b / (l2 - cc) + d * l2 / (l2 - e))


@_formula("sellmeier_pole_quadratic", 4)
def _sellmeier_pole_quadratic(c, lam_um):
    l2 = lam_um ** 2
    a, b, cc, d = c
    return np.sqrt(a + b / (l2 - cc) + d * l2)


@_formula("constant", 1)
def _constant(c, lam_um):
    return c[0] * np.ones_like(lam_um) if np.ndim(lam_um) else c[0]


@_formula("cauchy2", 2)
def _cauchy2(c, lam_um):
    return c[0] + c[1] / lam_um ** 2


@dataclass(frozen=True)
class SellmeierForm:
    """One principal-index dispersion curve with its validity window."""

    formula_id: str
    coefficients: tuple
    valid_um_min: float
    valid_um_max: float

    def __post_init__(self):
        if self.formula_id not in _FORMULAS:
            raise ConfigError(
                f"unknown formula_id {self.formula_id!r}; "
                f"supported: {sorted(_FORMULAS)}"
            )
        _, n_coeff = _FORMULAS[self.formula_id]
        if len(self.coefficients) != n_coeff:
            raise ConfigError(
                f"formula {self.formula_id!r} takes {n_coeff} coefficients, "
                f"got {len(self.coefficients)}"
            )
        if not 0 < self.valid_um_min < self.valid_um_max:
            raise ConfigError("invalid validity range")

    def index(self, wavelength_nm, crystal_name="?"):
        """Refractive index at the given wavelength (nm; scalar or array)."""
        lam_um = np.asarray(wavelength_nm) * 1e-3
        if np.min(lam_um) < self.valid_um_min or np.max(lam_um) > self.valid_um_max:
            bad = lam_um if lam_um.ndim == 0 else lam_um.flat[
                int(np.argmax((lam_um < self.valid_um_min) | (lam_um > self.valid_um_max)))
            ]
            raise DispersionRangeError(
                f"{float(bad) * 1e3:.6g} nm is outside the validity range "
                f"[{self.valid_um_min * 1e3:.6g}, {self.valid_um_max * 1e3:.6g}] nm "
                f"of crystal {crystal_name}"
            )
        fn, _ = _FORMULAS[self.formula_id]
        n = fn(self.coefficients, lam_um)
        return float(n) if np.ndim(n) == 0 else n


@dataclass(frozen=True)
class CrystalSpec:
    """Uniaxial crystal: both principal indices, length, and cut angle.

    The database stores only the dispersion data; length (mm) and cut
    angle (degrees from the optic axis) are per-setup and supplied when a
    crystal is instantiated. cut_angle may be None when the angle is to
    be solved from phasematching.
    """

    name: str
    sellmeier_o: SellmeierForm
    sellmeier_e: SellmeierForm
    length_mm: float
    cut_angle_deg: float | None = None
    source_citation: str = ""

    def __post_init__(self):
        if self.length_mm <= 0:
            raise ConfigError(f"crystal length must be positive, got {self.length_mm}")
        if self.cut_angle_deg is not None and not 0 <= self.cut_angle_deg <= 90:
            raise ConfigError(
                f"cut angle must lie in [0, 90] degrees, got {self.cut_angle_deg}"
            )


_DB_KEYS = (
    "name",
    "formula_id",
    "coefficients_o",
    "coefficients_e",
    "valid_um_min",
    "valid_um_max",
    "source_citation",
)


def parse_crystal_database(text):
    """Parse the crystal-database text format into raw record dicts.

    Records are blank-line-separated blocks of "key = value" lines.
    Unknown keys, duplicate keys, and missing keys are all errors.
    """
    records = {}
    block = {}
    lineno_of_block = None

    def flush():
        if not block:
            return
        missing = [k for k in _DB_KEYS if k not in block]
        if missing:
            raise ConfigError(
                f"crystal record starting at line {lineno_of_block} is missing "
                f"fields: {', '.join(missing)}"
            )
        name = block["name"]
        if name in records:
            raise ConfigError(f"duplicate crystal record {name!r}")
        records[name] = dict(block)
        block.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            flush()
            continue
        if line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _DB_KEYS:
            raise ConfigError(f"line {lineno}: unknown field {key!r}")
        if block and key == "name":
            raise ConfigError(
                f"line {lineno}: 'name' must start a record (missing blank line?)"
            )
        if key in block:
            raise ConfigError(f"line {lineno}: duplicate field {key!r}")
        if not block:
            if key != "name":
                raise ConfigError(f"line {lineno}: records must start with 'name'")
            lineno_of_block = lineno
        block[key] = value.strip()
    flush()
    return records


def _record_to_forms(rec):
    try:
        vmin = float(rec["valid_um_min"])
        vmax = float(rec["valid_um_max"])
        co = tuple(float(x) for x in rec["coefficients_o"].split(","))
        ce = tuple(float(x) for x in rec["coefficients_e"].split(","))
    except ValueError as exc:
        raise ConfigError(f"crystal {rec['name']!r}: {exc}") from exc
    fo = SellmeierForm(rec["formula_id"], co, vmin, vmax)
    fe = SellmeierForm(rec["formula_id"], ce, vmin, vmax)
    return fo, fe


class CrystalDatabase:
    """Immutable lookup of named dispersion records."""

    def __init__(self, text):
        self._records = parse_crystal_database(text)

    @classmethod
    def builtin(cls):
        text = resources.files("pairspec.data").joinpath("crystals.txt").read_text()
        return cls(text)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls(fh.read())

    def names(self):
        return sorted(self._records)

    def crystal(self, name, length_mm, cut_angle_deg=None):
        """Instantiate a CrystalSpec for a named record."""
        if name not in self._records:
            raise ConfigError(
                f"unknown crystal {name!r}; available: {', '.join(self.names())}"
            )
        rec = self._records[name]
        fo, fe = _record_to_forms(rec)
        return CrystalSpec(
            name=name,
            sellmeier_o=fo,
            sellmeier_e=fe,
            length_mm=length_mm,
            cut_angle_deg=cut_angle_deg,
            source_citation=rec["source_citation"],
        )


_BUILTIN = None


def builtin_database():
    """The database shipped with the package (loaded once, immutable)."""
    global _BUILTIN
    if _BUILTIN is None:
        _BUILTIN = CrystalDatabase.builtin()
    return _BUILTIN


def get_crystal(name, length_mm, cut_angle_deg=None):
    return builtin_database().crystal(name, length_mm, cut_angle_deg)
