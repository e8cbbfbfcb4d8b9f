"""Run configuration: a YAML file parsed against a strict schema.

Every length carries its unit in the key (``*_um``, ``*_m``), energies are
``*_kev``. Unknown keys are errors, and relative paths resolve against the
directory holding the config file and must exist when the file is parsed.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import (BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt,
                      ValidationError, model_validator)

from . import materials as matlib
from .mask import MaskSpec, mask_from_definition
from .phantom import (ImagingGeometry, Material, ProjectedObject, cylinder_phantom,
                      gaussian_phantom, tube_phantom, vacuum)


class ConfigError(ValueError):
    """Raised for unreadable, malformed or inconsistent configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometryConfig(_Strict):
    energy_kev: PositiveFloat
    z_m: PositiveFloat
    pixel_size_um: PositiveFloat
    oversampling: int = Field(default=32, ge=8, multiple_of=2)
    n_pixels_x: PositiveInt = 128
    n_pixels_y: PositiveInt = 1
    parity_origin: Literal[0, 1] = 0

    def build(self, oversampling: int | None = None) -> ImagingGeometry:
        return ImagingGeometry.from_energy(
            self.energy_kev, z=self.z_m, pixel_size=self.pixel_size_um * 1e-6,
            oversampling=oversampling or self.oversampling,
            n_pixels_x=self.n_pixels_x, n_pixels_y=self.n_pixels_y)


class MaskConfig(_Strict):
    type: Literal["square", "fourier", "sampled"]
    period_um: PositiveFloat
    aperture_um: Optional[PositiveFloat] = None
    coefficients: Optional[list[float]] = None
    csv_path: Optional[Path] = None
    m_max: PositiveInt = 51
    offset_um: float = 0.0

    @model_validator(mode="after")
    def _fields_for_type(self):
        need = {"square": "aperture_um", "fourier": "coefficients", "sampled": "csv_path"}
        if getattr(self, need[self.type]) is None:
            raise ValueError(f"mask type {self.type!r} needs {need[self.type]}")
        return self


class MaterialConfig(_Strict):
    """Either a tabulated ``compound`` or explicit ``delta`` and ``beta``."""

    compound: Optional[str] = None
    delta: Optional[float] = Field(default=None, ge=0)
    beta: Optional[float] = Field(default=None, ge=0)
    source: Optional[str] = None

    @model_validator(mode="after")
    def _one_form(self):
        explicit = self.delta is not None or self.beta is not None
        if (self.compound is None) == (not explicit):
            raise ValueError("give either compound or both delta and beta")
        if explicit and (self.delta is None or self.beta is None):
            raise ValueError("explicit materials need both delta and beta")
        if self.compound is not None and self.compound not in matlib.COMPOUNDS:
            raise ValueError(f"unknown compound {self.compound!r}; "
                             f"known: {sorted(matlib.COMPOUNDS)}")
        return self


class PhantomConfig(_Strict):
    type: Literal["vacuum", "cylinder", "tube", "gaussian"]
    # cylinder
    radius_um: Optional[PositiveFloat] = None
    material: Optional[str] = None
    axis: Literal["x", "y"] = "y"
    center_um: Optional[float] = None
    # tube
    outer_radius_um: Optional[PositiveFloat] = None
    wall_um: Optional[PositiveFloat] = None
    rod_radius_um: Optional[PositiveFloat] = None
    rod_offset_um: float = 0.0
    tube_material: Optional[str] = None
    fill_material: Optional[str] = None
    rod_material: Optional[str] = None
    # gaussian
    amplitude_rad: Optional[float] = None
    sigma_um: Optional[PositiveFloat] = None
    absorption: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _fields_for_type(self):
        need = {"vacuum": (),
                "cylinder": ("radius_um", "material"),
                "tube": ("outer_radius_um", "wall_um", "rod_radius_um", "tube_material",
                         "fill_material", "rod_material"),
                "gaussian": ("amplitude_rad", "sigma_um")}[self.type]
        missing = [k for k in need if getattr(self, k) is None]
        if missing:
            raise ValueError(f"phantom type {self.type!r} needs {', '.join(missing)}")
        return self

    def material_names(self):
        return [n for n in (self.material, self.tube_material, self.fill_material,
                            self.rod_material) if n is not None]


class NoiseConfig(_Strict):
    enabled: bool = False
    mean_counts: PositiveFloat = 1e4
    seed: int = Field(default=0, ge=0)


class OracleConfig(_Strict):
    blur_fwhm_um: float = Field(default=3.5, ge=0)
    transfer: Literal["angular_spectrum", "fresnel"] = "angular_spectrum"
    oversampling: int = Field(default=64, ge=8, multiple_of=2)
    guard_fraction: float = Field(default=0.25, ge=0.1)
    reference: Literal["wave", "closed"] = "wave"


class OutputConfig(_Strict):
    directory: Path = Path("out")
    previews: bool = True
    forms: list[Literal["closed", "integrated"]] = ["closed", "integrated"]
    pb_reference: bool = True


class RetrievalConfig(_Strict):
    pairing: Literal["sliding", "disjoint"] = "sliding"
    raw_path: Optional[Path] = None
    flat_path: Optional[Path] = None


class RunConfig(_Strict):
    geometry: GeometryConfig
    mask: MaskConfig
    phantom: PhantomConfig = PhantomConfig(type="vacuum")
    materials: dict[str, MaterialConfig] = {}
    noise: NoiseConfig = NoiseConfig()
    oracle: OracleConfig = OracleConfig()
    outputs: OutputConfig = OutputConfig()
    retrieval: RetrievalConfig = RetrievalConfig()
    base_dir: Path = Path(".")

    @model_validator(mode="after")
    def _consistency(self):
        p = self.geometry.pixel_size_um
        if abs(self.mask.period_um - 2 * p) > 1e-9 * p:
            raise ValueError(f"mask period {self.mask.period_um} um must be twice the "
                             f"pixel size ({2 * p} um)")
        for name in self.phantom.material_names():
            if name not in self.materials and name not in matlib.COMPOUNDS:
                raise ValueError(f"material {name!r} is neither in the materials "
                                 "table nor a tabulated compound")
        for name, m in self.materials.items():
            if m.compound is not None:
                # fails early when the energy is outside the attenuation table
                matlib.linear_attenuation(m.compound, self.geometry.energy_kev)
        for name in self.phantom.material_names():
            if name not in self.materials:
                matlib.linear_attenuation(name, self.geometry.energy_kev)
        return self

    # -- builders ---------------------------------------------------------

    def build_geometry(self, oversampling: int | None = None) -> ImagingGeometry:
        return self.geometry.build(oversampling)

    def build_mask(self) -> MaskSpec:
        defn = self.mask.model_dump(exclude_none=True)
        if "csv_path" in defn:
            defn["csv_path"] = str(defn["csv_path"])
        try:
            return mask_from_definition(defn, self.base_dir)
        except ValueError as exc:
            raise ConfigError(f"mask: {exc}") from exc

    def material(self, name: str) -> Material:
        e = self.geometry.energy_kev
        m = self.materials.get(name)
        if m is None:
            return matlib.material(name, e)
        if m.compound is not None:
            found = matlib.material(m.compound, e)
            return Material(name, found.delta, found.beta)
        return Material(name, m.delta, m.beta)

    def build_object_factory(self):
        """``geom -> ProjectedObject`` for the configured phantom."""
        ph = self.phantom
        um = 1e-6
        center = None if ph.center_um is None else ph.center_um * um

        if ph.type == "vacuum":
            return vacuum
        if ph.type == "cylinder":
            mat = self.material(ph.material)
            return lambda g: cylinder_phantom(ph.radius_um * um, mat, g, ph.axis, center)
        if ph.type == "tube":
            mats = tuple(self.material(n) for n in
                         (ph.tube_material, ph.fill_material, ph.rod_material))
            return lambda g: tube_phantom(ph.outer_radius_um * um, ph.wall_um * um,
                                          ph.rod_radius_um * um, mats, g,
                                          rod_offset=ph.rod_offset_um * um, center=center)
        return lambda g: gaussian_phantom(ph.amplitude_rad, ph.sigma_um * um, g,
                                          absorption=ph.absorption)

    def build_object(self, geom: ImagingGeometry | None = None) -> ProjectedObject:
        return self.build_object_factory()(geom or self.build_geometry())

    def resolve(self, path: Path | None) -> Path | None:
        if path is None:
            return None
        return path if path.is_absolute() else self.base_dir / path


def _check_paths(cfg: RunConfig):
    for label, p in (("mask.csv_path", cfg.mask.csv_path),
                     ("retrieval.raw_path", cfg.retrieval.raw_path),
                     ("retrieval.flat_path", cfg.retrieval.flat_path)):
        if p is None:
            continue
        full = cfg.resolve(p)
        # images are addressed by base name; accept the .f32/.hdr pair too
        if not (full.exists() or full.with_suffix(".hdr").exists()):
            raise ConfigError(f"{label}: {full} does not exist")


def parse_config(data: dict, base_dir=".") -> RunConfig:
    """Validate a config mapping; raises :class:`ConfigError`."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    if "base_dir" in data:
        raise ConfigError("base_dir is set from the config file location, not in the file")
    try:
        cfg = RunConfig(**data, base_dir=Path(base_dir))
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"  {loc}: {err['msg']}")
        raise ConfigError("invalid config:\n" + "\n".join(lines)) from None
    _check_paths(cfg)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return parse_config(data, path.parent.resolve())
