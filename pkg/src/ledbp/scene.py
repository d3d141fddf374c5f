"""Office geometry, Lambertian channel gains and the dimming LP.

The LP is

    minimize    q^T y + e
    subject to  H y >= b,  0 <= y <= 1

where ``H[j, i]`` is the illuminance at user device ``j`` when LED ``i`` is
at full power and every other LED is off.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, InfeasibleScene


@dataclass(frozen=True)
class RoomGeometry:
    width: float = 15.0
    depth: float = 15.0
    ceiling_height: float = 3.0
    workspace_height: float = 0.75

    def __post_init__(self):
        for name in ("width", "depth", "ceiling_height", "workspace_height"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.workspace_height < self.ceiling_height:
            raise ValueError("workspace plane must lie below the ceiling")

    @property
    def vertical_separation(self):
        return self.ceiling_height - self.workspace_height


@dataclass(frozen=True)
class LambertianModel:
    """Point-source Lambertian emitter facing straight down.

    ``intensity_scale`` multiplies the normalized radiation pattern
    ``(m+1)/(2 pi d^2) cos^m(phi) cos(theta)`` and so carries lux m^2.
    Gains below ``gain_cutoff_ratio`` times the row maximum are zeroed.
    """

    half_power_semiangle: float = 60.0
    intensity_scale: float = 795.2156
    gain_cutoff_ratio: float = 0.01

    def __post_init__(self):
        if not 0 < self.half_power_semiangle < 90:
            raise ValueError("half_power_semiangle must be in (0, 90) degrees")
        if not self.intensity_scale > 0:
            raise ValueError("intensity_scale must be positive")
        if not 0 <= self.gain_cutoff_ratio < 1:
            raise ValueError("gain_cutoff_ratio must be in [0, 1)")

    @property
    def order(self):
        """Lambertian order m_L = -ln 2 / ln cos(semiangle)."""
        return -math.log(2.0) / math.log(math.cos(math.radians(self.half_power_semiangle)))

    @classmethod
    def from_nadir_gain(cls, lux, separation, half_power_semiangle=60.0, gain_cutoff_ratio=0.01):
        """Pick ``intensity_scale`` so a UD right below an LED sees ``lux``."""
        m = -math.log(2.0) / math.log(math.cos(math.radians(half_power_semiangle)))
        scale = lux * 2 * math.pi * separation**2 / (m + 1)
        return cls(half_power_semiangle, scale, gain_cutoff_ratio)


@dataclass(frozen=True)
class OfficeScene:
    room: RoomGeometry
    led_positions: np.ndarray
    ud_positions: np.ndarray
    lambertian: LambertianModel = field(default_factory=lambda: default_channel())

    def __post_init__(self):
        leds = np.asarray(self.led_positions, dtype=float).reshape(-1, 3)
        uds = np.asarray(self.ud_positions, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "led_positions", leds)
        object.__setattr__(self, "ud_positions", uds)
        if not np.allclose(leds[:, 2], self.room.ceiling_height):
            raise ValueError("every LED must lie on the ceiling plane")
        if not np.allclose(uds[:, 2], self.room.workspace_height):
            raise ValueError("every UD must lie on the workspace plane")
        inside = (
            (uds[:, 0] >= 0) & (uds[:, 0] <= self.room.width)
            & (uds[:, 1] >= 0) & (uds[:, 1] <= self.room.depth)
        )
        if not inside.all():
            raise ValueError("every UD must lie inside the floor rectangle")

    @property
    def n_leds(self):
        return len(self.led_positions)

    @property
    def m_uds(self):
        return len(self.ud_positions)


@dataclass
class IlluminationProblem:
    H: np.ndarray
    b: np.ndarray
    max_power: np.ndarray
    standby: float
    q: np.ndarray
    e: float
    daylight: np.ndarray

    @property
    def n_leds(self):
        return self.H.shape[1]

    @property
    def m_uds(self):
        return self.H.shape[0]


def generate_led_grid(rows, cols, room):
    """Cell-centred ``rows x cols`` grid of LEDs on the ceiling, row-major."""
    if rows < 1 or cols < 1:
        raise ValueError("LED grid needs at least one row and one column")
    xs = (np.arange(cols) + 0.5) * room.width / cols
    ys = (np.arange(rows) + 0.5) * room.depth / rows
    gx, gy = np.meshgrid(xs, ys)
    z = np.full(gx.size, room.ceiling_height)
    return np.column_stack([gx.ravel(), gy.ravel(), z])


def place_uds(count, seed, room):
    """Uniform random UD positions on the workspace plane."""
    if count < 0:
        raise ValueError("count must be non-negative")
    rng = np.random.default_rng(seed)
    xy = rng.uniform(size=(count, 2)) * [room.width, room.depth]
    z = np.full(count, room.workspace_height)
    return np.column_stack([xy, z])


def channel_gain(scene):
    """Channel gain matrix of shape (m_uds, n_leds) with row-wise cutoff."""
    room = scene.room
    if room.ceiling_height == room.workspace_height:
        raise ValueError("ceiling and workspace planes coincide")
    lam = scene.lambertian
    order = lam.order
    delta = scene.led_positions[None, :, :] - scene.ud_positions[:, None, :]
    dist2 = np.einsum("jik,jik->ji", delta, delta)
    cos_angle = np.abs(delta[..., 2]) / np.sqrt(dist2)
    H = lam.intensity_scale * (order + 1) / (2 * np.pi * dist2) * cos_angle**order * cos_angle
    if lam.gain_cutoff_ratio > 0 and H.size:
        row_max = H.max(axis=1, keepdims=True)
        H[H < lam.gain_cutoff_ratio * row_max] = 0.0
    return H


def illuminance(problem, y):
    y = np.asarray(y, dtype=float)
    if y.shape != (problem.n_leds,):
        raise ValueError(f"dimming vector must have shape ({problem.n_leds},)")
    return problem.H @ y + problem.daylight


def energy_fraction(problem, y):
    """Normalized energy f0(y) = q^T y + e."""
    return float(problem.q @ np.asarray(y, dtype=float) + problem.e)


def assemble_problem(H, b, max_power, standby=0.0, feasibility_margin=1e-6):
    H = np.atleast_2d(np.asarray(H, dtype=float))
    m, n = H.shape
    b = np.broadcast_to(np.asarray(b, dtype=float), (m,)).copy()
    eps = np.broadcast_to(np.asarray(max_power, dtype=float), (n,)).copy()
    if (H < 0).any():
        raise ValueError("channel gains must be non-negative")
    if (eps <= 0).any():
        raise ValueError("max_power must be strictly positive")
    if standby < 0:
        raise ValueError("standby must be non-negative")
    if (b < 0).any():
        raise ValueError("requirements must be non-negative")

    reach = H.sum(axis=1)
    short = np.flatnonzero(reach < b + feasibility_margin)
    if short.size:
        j = short[0]
        raise InfeasibleScene(
            f"UD {j} needs {b[j]:g} lux but full power delivers {reach[j]:g} lux "
            f"({short.size} requirement(s) unreachable)"
        )

    total = eps.sum() + standby
    return IlluminationProblem(
        H=H,
        b=b,
        max_power=eps,
        standby=float(standby),
        q=eps / total,
        e=standby / total,
        daylight=np.zeros(m),
    )


def default_channel(room=None):
    """Narrow 30 degree beams, 1000 lux at nadir, gains below 10% of a UD's best dropped.

    Bright enough that every point of a 15 m office with a 10 x 10 grid can
    reach 400 lux, and local enough that each UD hears only a handful of LEDs.
    """
    room = room or RoomGeometry()
    return LambertianModel.from_nadir_gain(1000.0, room.vertical_separation, 30.0, 0.1)


@dataclass
class SceneConfig:
    """Everything needed to rebuild one office scene from scratch."""

    room: RoomGeometry = field(default_factory=RoomGeometry)
    grid_rows: int = 10
    grid_cols: int = 10
    ud_count: int = 15
    seed: int = 0
    lambertian: LambertianModel = field(default_factory=lambda: default_channel())
    requirement: float = 400.0
    max_power: float = 1.0
    standby: float = 0.0
    feasibility_margin: float = 1e-6
    b: list | None = None
    epsilon: list | None = None

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scene config keys: {sorted(unknown)}")
        try:
            if "room" in data:
                data["room"] = RoomGeometry(**data["room"])
            if "lambertian" in data:
                lam = dict(data["lambertian"])
                if "nadir_gain" in lam:
                    nadir = lam.pop("nadir_gain")
                    room = data.get("room", RoomGeometry())
                    data["lambertian"] = LambertianModel.from_nadir_gain(
                        nadir, room.vertical_separation, **lam
                    )
                else:
                    data["lambertian"] = LambertianModel(**lam)
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)

    def with_seed(self, seed):
        return SceneConfig(**{**self.__dict__, "seed": seed})

    def build_scene(self):
        leds = generate_led_grid(self.grid_rows, self.grid_cols, self.room)
        uds = place_uds(self.ud_count, self.seed, self.room)
        return OfficeScene(self.room, leds, uds, self.lambertian)

    def build(self):
        """Return ``(scene, problem)``."""
        scene = self.build_scene()
        H = channel_gain(scene)
        b = self.requirement if self.b is None else self.b
        eps = self.max_power if self.epsilon is None else self.epsilon
        problem = assemble_problem(H, b, eps, self.standby, self.feasibility_margin)
        return scene, problem


def export_scene(scene, problem, path=None):
    """Dump positions and the dense gain matrix as JSON (string or file)."""
    doc = {
        "room": asdict(scene.room),
        "lambertian": asdict(scene.lambertian),
        "led_positions": scene.led_positions.tolist(),
        "ud_positions": scene.ud_positions.tolist(),
        "H": problem.H.tolist(),
        "b": problem.b.tolist(),
        "max_power": problem.max_power.tolist(),
        "standby": problem.standby,
        "q": problem.q.tolist(),
        "e": problem.e,
    }
    text = json.dumps(doc, indent=1)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
