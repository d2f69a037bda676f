"""Synthetic traffic-like sequences with per-pixel ground truth.

Each frame composites, from bottom to top: a noisy background, multiplicative
shadows attached to each object, then the objects themselves. Pixel values
are rounded to integers in [0, 255] so a sequence survives a PGM round trip
unchanged.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import UsageError
from .mixture import ColorMode
from .segment import ROAD, SHADOW, VEHICLE


@dataclass
class SceneObject:
    """A rectangle moving at constant velocity, with an optional shadow.

    Position at frame index ``t`` (0-based) is ``(x + vx * t, y + vy * t)``
    floored to whole pixels. With ``wrap`` the rectangle re-enters on the
    opposite edge, which makes its occupancy of every pixel periodic.
    The object is present for ``start <= t < stop`` (``stop < 0``: forever).
    """

    x: float = 0.0
    y: float = 0.0
    width: int = 8
    height: int = 8
    vx: float = 0.0
    vy: float = 0.0
    value: tuple = (200.0,)
    value_std: float = 20.0
    shadow_dx: int = 0
    shadow_dy: int = 0
    shadow_width: int = 0
    shadow_height: int = 0
    shadow_factor: float = 0.5
    wrap: bool = False
    start: int = 0
    stop: int = -1

    def present(self, t):
        return t >= self.start and (self.stop < 0 or t < self.stop)


@dataclass
class SceneSpec:
    width: int = 64
    height: int = 64
    frames: int = 200
    color_mode: int = 1
    seed: int = 0
    background: tuple = (120.0,)
    background_ramp: float = 0.0
    noise_road: float = 4.0
    noise_shadow: float = 3.0
    objects: list = field(default_factory=list)

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise UsageError(f"scene size must be positive, got {self.width}x{self.height}")
        if self.frames < 0:
            raise UsageError("frame count must be >= 0")
        d = int(ColorMode.parse(self.color_mode))
        if len(self.background) not in (1, d):
            raise UsageError(f"background needs 1 or {d} values")
        if self.noise_road < 0 or self.noise_shadow < 0:
            raise UsageError("noise levels must be >= 0")
        for k, obj in enumerate(self.objects):
            if obj.width < 1 or obj.height < 1:
                raise UsageError(f"object {k}: size must be positive")
            if len(obj.value) not in (1, d):
                raise UsageError(f"object {k}: value needs 1 or {d} entries")
            if obj.value_std < 0:
                raise UsageError(f"object {k}: value_std must be >= 0")
            if obj.shadow_width and obj.shadow_height and not 0.0 < obj.shadow_factor < 1.0:
                raise UsageError(f"object {k}: shadow_factor must lie in (0, 1)")
            if obj.shadow_width < 0 or obj.shadow_height < 0:
                raise UsageError(f"object {k}: shadow size must be >= 0")


def _span(origin, size, limit, wrap):
    """Indices covered by [origin, origin + size) on an axis of length ``limit``."""
    start = int(np.floor(origin))
    idx = np.arange(start, start + size)
    if wrap:
        return np.unique(idx % limit)
    return idx[(idx >= 0) & (idx < limit)]


def _rect_mask(h, w, x, y, width, height, wrap):
    m = np.zeros((h, w), dtype=bool)
    rows = _span(y, height, h, wrap)
    cols = _span(x, width, w, wrap)
    if rows.size and cols.size:
        m[np.ix_(rows, cols)] = True
    return m


def base_image(spec: SceneSpec) -> np.ndarray:
    """Noise-free background, (H, W, d)."""
    d = int(ColorMode.parse(spec.color_mode))
    bg = np.broadcast_to(np.asarray(spec.background, dtype=np.float64), (d,))
    ramp = np.zeros(spec.width)
    if spec.width > 1:
        ramp = spec.background_ramp * (np.arange(spec.width) / (spec.width - 1) - 0.5)
    return bg[None, None, :] + ramp[None, :, None] + np.zeros((spec.height, 1, 1))


def generate_synthetic(spec: SceneSpec):
    """Render ``spec``. Returns ``(frames, masks)``.

    ``frames`` is float64 (T, H, W, d) holding integers; ``masks`` is uint8
    (T, H, W) of semantic labels.
    """
    spec.validate()
    d = int(ColorMode.parse(spec.color_mode))
    h, w, n = spec.height, spec.width, spec.frames
    rng = np.random.default_rng(spec.seed)
    base = base_image(spec)
    frames = np.empty((n, h, w, d))
    masks = np.empty((n, h, w), dtype=np.uint8)
    for t in range(n):
        img = base + spec.noise_road * rng.normal(size=(h, w, d))
        shade = np.ones((h, w))
        label = np.full((h, w), ROAD, dtype=np.uint8)
        shadow_noise = spec.noise_shadow * rng.normal(size=(h, w, d))
        obj_draws = [rng.normal(size=(h, w, d)) for _ in spec.objects]
        for obj in spec.objects:
            if not (obj.present(t) and obj.shadow_width and obj.shadow_height):
                continue
            x, y = obj.x + obj.vx * t + obj.shadow_dx, obj.y + obj.vy * t + obj.shadow_dy
            cover = _rect_mask(h, w, x, y, obj.shadow_width, obj.shadow_height, obj.wrap)
            shade[cover] = np.minimum(shade[cover], obj.shadow_factor)
        in_shadow = shade < 1.0
        img = np.where(in_shadow[..., None], base * shade[..., None] + shadow_noise, img)
        label[in_shadow] = SHADOW
        for obj, draw in zip(spec.objects, obj_draws):
            if not obj.present(t):
                continue
            cover = _rect_mask(h, w, obj.x + obj.vx * t, obj.y + obj.vy * t,
                               obj.width, obj.height, obj.wrap)
            value = np.broadcast_to(np.asarray(obj.value, dtype=np.float64), (d,))
            img = np.where(cover[..., None], value + obj.value_std * draw, img)
            label[cover] = VEHICLE
        frames[t] = np.clip(np.rint(img), 0, 255)
        masks[t] = label
    return frames, masks


# ---------------------------------------------------------------------------
# stock scenes


def default_scene(frames=200, seed=7, color_mode=1) -> SceneSpec:
    """Two lanes of bright vehicles, each casting a shadow sideways onto the road."""
    d = int(ColorMode.parse(color_mode))
    rgb = d == 3
    return SceneSpec(
        width=64, height=64, frames=frames, color_mode=d, seed=seed,
        background=(120.0, 118.0, 112.0) if rgb else (120.0,),
        background_ramp=20.0, noise_road=4.0, noise_shadow=3.0,
        objects=[
            SceneObject(x=0, y=8, width=8, height=10, vx=2.0,
                        value=(210.0, 190.0, 60.0) if rgb else (200.0,), value_std=20.0,
                        shadow_dx=-2, shadow_dy=10, shadow_width=8, shadow_height=6,
                        shadow_factor=0.4, wrap=True),
            SceneObject(x=30, y=36, width=6, height=10, vx=3.0,
                        value=(60.0, 90.0, 230.0) if rgb else (215.0,), value_std=20.0,
                        shadow_dx=-3, shadow_dy=10, shadow_width=6, shadow_height=6,
                        shadow_factor=0.4, wrap=True),
        ],
    )


def slow_object_scene(frames=1000, seed=3, occupancy=0.3, background=100.0,
                      value=220.0, width=10, speed=0.5) -> SceneSpec:
    """A single bright object crawling along a wrapped strip.

    Every pixel is covered for a fraction ``occupancy`` of the frames, in
    dwell runs of ``occupancy * width / speed`` frames.
    """
    obj_w = int(round(occupancy * width))
    if obj_w < 1 or obj_w >= width:
        raise UsageError(f"occupancy {occupancy} not representable on a strip of {width}")
    return SceneSpec(
        width=width, height=4, frames=frames, color_mode=1, seed=seed,
        background=(background,), noise_road=3.0, noise_shadow=3.0,
        objects=[SceneObject(x=0, y=0, width=obj_w, height=4, vx=speed,
                             value=(value,), value_std=10.0, wrap=True)],
    )


def parked_object_scene(frames=300, seed=5, arrive=50, dwell=200,
                        background=100.0, value=200.0) -> SceneSpec:
    """An object that stops on the road for ``dwell`` frames, then leaves."""
    return SceneSpec(
        width=16, height=16, frames=frames, color_mode=1, seed=seed,
        background=(background,), noise_road=3.0, noise_shadow=3.0,
        objects=[SceneObject(x=4, y=4, width=8, height=8, value=(value,), value_std=5.0,
                             start=arrive, stop=arrive + dwell)],
    )


# ---------------------------------------------------------------------------
# flat key = value scene files


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def dump_scene_spec(spec: SceneSpec) -> str:
    lines = []
    for f in fields(SceneSpec):
        if f.name != "objects":
            lines.append(f"{f.name} = {_fmt(getattr(spec, f.name))}")
    for k, obj in enumerate(spec.objects):
        for name, value in asdict(obj).items():
            lines.append(f"object.{k}.{name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def _coerce(kind, text, key):
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is tuple:
            return tuple(float(x) for x in text.split(","))
        if kind is int:
            return int(text)
        return float(text)
    except ValueError:
        raise UsageError(f"{key}: cannot parse {text!r}") from None


_SCENE_TYPES = {"width": int, "height": int, "frames": int, "color_mode": int, "seed": int,
                "background": tuple, "background_ramp": float, "noise_road": float,
                "noise_shadow": float}
_OBJECT_TYPES = {"x": float, "y": float, "width": int, "height": int, "vx": float,
                 "vy": float, "value": tuple, "value_std": float, "shadow_dx": int,
                 "shadow_dy": int, "shadow_width": int, "shadow_height": int,
                 "shadow_factor": float, "wrap": bool, "start": int, "stop": int}


def parse_scene_spec(text: str) -> SceneSpec:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    top, objs = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("object."):
            parts = key.split(".")
            if len(parts) != 3 or not parts[1].isdigit() or parts[2] not in _OBJECT_TYPES:
                raise UsageError(f"line {lineno}: unknown key {key!r}")
            objs.setdefault(int(parts[1]), {})[parts[2]] = _coerce(_OBJECT_TYPES[parts[2]], value, key)
        elif key in _SCENE_TYPES:
            top[key] = _coerce(_SCENE_TYPES[key], value, key)
        else:
            raise UsageError(f"line {lineno}: unknown key {key!r}")
    spec = SceneSpec(**top, objects=[SceneObject(**objs[k]) for k in sorted(objs)])
    spec.validate()
    return spec


def load_scene_spec(path) -> SceneSpec:
    return parse_scene_spec(Path(path).read_text())
