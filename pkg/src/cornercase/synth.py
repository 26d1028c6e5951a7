"""Synthetic driving scenes with known ground truth.

A scenario is a textured background plus rectangular sprites that move by
a per-frame velocity script.  Velocity discontinuities are the scripted
"surprises"; the generator logs them with the frame window in which a
detector response is expected.  Everything is a pure function of the
scenario spec, including its seed, so two generations of the same spec are
bitwise identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .imaging import BlurConfig, gaussian_blur, _round_half_up

JITTER_MODES = ("none", "drift", "shake")

# Frames after a velocity discontinuity in which the detector response is
# expected (the spike decays once the prediction window refills).
RESPONSE_WINDOW = 3


@dataclass(frozen=True)
class SpriteSpec:
    class_id: int
    height: int
    width: int
    row: float
    col: float
    vel_row: float
    vel_col: float
    intensity: float

    def __post_init__(self):
        if not 0 <= self.class_id <= 19:
            raise ValueError(f"sprite class id out of range 0..19: {self.class_id}")
        if self.height < 1 or self.width < 1:
            raise ValueError(f"sprite size must be positive, got {self.height}x{self.width}")
        if not 0 <= self.intensity <= 255:
            raise ValueError(f"sprite intensity out of range 0..255: {self.intensity}")


@dataclass(frozen=True)
class VelocityChange:
    sprite: int  # 1-based position in the sprite list
    frame: int
    vel_row: float
    vel_col: float


@dataclass(frozen=True)
class ScenarioSpec:
    height: int
    width: int
    frames: int
    seed: int = 0
    background_class: int = 1
    background_intensity: float = 96.0
    texture_amplitude: float = 0.0
    texture_smooth: float = 0.0
    jitter_mode: str = "none"
    jitter_row: float = 0.0
    jitter_col: float = 0.0
    jitter_amp: float = 0.0
    sprites: tuple[SpriteSpec, ...] = field(default_factory=tuple)
    events: tuple[VelocityChange, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.height < 2 or self.width < 2:
            raise ValueError(f"canvas must be at least 2x2, got {self.height}x{self.width}")
        if self.frames < 1:
            raise ValueError(f"need at least 1 frame, got {self.frames}")
        if not 1 <= self.background_class <= 19:
            raise ValueError(f"background class out of range 1..19: {self.background_class}")
        if self.jitter_mode not in JITTER_MODES:
            raise ValueError(f"unknown jitter mode: {self.jitter_mode!r}")
        for sprite in self.sprites:
            if sprite.height > self.height or sprite.width > self.width:
                raise ValueError(
                    f"sprite {sprite.height}x{sprite.width} does not fit the "
                    f"{self.height}x{self.width} canvas"
                )
        for event in self.events:
            if not 1 <= event.sprite <= len(self.sprites):
                raise ValueError(f"event references sprite {event.sprite}, have {len(self.sprites)}")
            if not 2 <= event.frame <= self.frames:
                raise ValueError(f"event frame {event.frame} outside 2..{self.frames}")


@dataclass
class LoggedEvent:
    start_frame: int
    end_frame: int
    class_id: int
    base_row: int  # bottom-up row of the sprite's bottom edge at event time


def _jitter_offsets(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    steps = np.arange(spec.frames, dtype=np.float64)
    if spec.jitter_mode == "drift":
        return np.stack([steps * spec.jitter_row, steps * spec.jitter_col], axis=1)
    if spec.jitter_mode == "shake":
        return rng.uniform(-spec.jitter_amp, spec.jitter_amp, size=(spec.frames, 2))
    return np.zeros((spec.frames, 2))


def _background_field(spec: ScenarioSpec, rng: np.random.Generator, margin: int) -> np.ndarray:
    shape = (spec.height + 2 * margin, spec.width + 2 * margin)
    field_ = np.full(shape, float(spec.background_intensity))
    if spec.texture_amplitude > 0:
        field_ = field_ + spec.texture_amplitude * rng.standard_normal(shape)
    if spec.texture_smooth > 0:
        size = 2 * math.ceil(3 * spec.texture_smooth) + 1
        field_ = gaussian_blur(field_, BlurConfig(kernel_size=size, sigma=spec.texture_smooth))
    return field_


def _sample_window(field_: np.ndarray, top: float, left: float, h: int, w: int) -> np.ndarray:
    r0 = int(np.floor(top))
    c0 = int(np.floor(left))
    fr = top - r0
    fc = left - c0
    block = field_[r0 : r0 + h + 1, c0 : c0 + w + 1]
    tl = block[:h, :w]
    tr = block[:h, 1 : w + 1]
    bl = block[1 : h + 1, :w]
    br = block[1 : h + 1, 1 : w + 1]
    top_row = tl * (1 - fc) + tr * fc
    bot_row = bl * (1 - fc) + br * fc
    return top_row * (1 - fr) + bot_row * fr


def _sprite_tracks(spec: ScenarioSpec) -> list[np.ndarray]:
    """Per sprite, the (frames, 2) float positions of the top-left corner."""
    changes: dict[tuple[int, int], tuple[float, float]] = {}
    for event in spec.events:
        changes[(event.sprite - 1, event.frame)] = (event.vel_row, event.vel_col)
    tracks = []
    for si, sprite in enumerate(spec.sprites):
        pos = np.zeros((spec.frames, 2))
        pos[0] = (sprite.row, sprite.col)
        vel = (sprite.vel_row, sprite.vel_col)
        for t in range(2, spec.frames + 1):
            vel = changes.get((si, t), vel)
            pos[t - 1] = pos[t - 2] + vel
        tracks.append(pos)
    return tracks


def _clamped_corner(spec: ScenarioSpec, sprite: SpriteSpec, pos: np.ndarray) -> tuple[int, int]:
    r = int(_round_half_up(np.asarray(pos[0])))
    c = int(_round_half_up(np.asarray(pos[1])))
    r = min(max(r, 0), spec.height - sprite.height)
    c = min(max(c, 0), spec.width - sprite.width)
    return r, c


def generate_scenario(spec: ScenarioSpec):
    """Render a scenario to (frames, masks, events).

    frames and masks are lists of (H, W) uint8 arrays; masks carry
    internal class ids with the background class everywhere no sprite
    sits.  Sprites are painted in list order, so later sprites win where
    they overlap.  Sprite footprints round to whole pixels and clamp to
    the canvas.
    """
    rng = np.random.default_rng(spec.seed)
    offsets = _jitter_offsets(spec, rng)
    margin = int(np.ceil(np.abs(offsets).max())) + 1 if offsets.size else 1
    field_ = _background_field(spec, rng, margin)
    tracks = _sprite_tracks(spec)

    frames = []
    masks = []
    for t in range(spec.frames):
        oy, ox = offsets[t]
        img = _sample_window(field_, margin + oy, margin + ox, spec.height, spec.width).copy()
        mask = np.full((spec.height, spec.width), spec.background_class, dtype=np.uint8)
        for sprite, track in zip(spec.sprites, tracks):
            r, c = _clamped_corner(spec, sprite, track[t])
            img[r : r + sprite.height, c : c + sprite.width] = sprite.intensity
            mask[r : r + sprite.height, c : c + sprite.width] = sprite.class_id
        frames.append(np.clip(_round_half_up(img), 0, 255).astype(np.uint8))
        masks.append(mask)

    log = []
    for event in spec.events:
        sprite = spec.sprites[event.sprite - 1]
        r, _ = _clamped_corner(spec, sprite, tracks[event.sprite - 1][event.frame - 1])
        bottom = r + sprite.height - 1
        log.append(
            LoggedEvent(
                start_frame=event.frame,
                end_frame=min(event.frame + RESPONSE_WINDOW, spec.frames),
                class_id=sprite.class_id,
                base_row=(spec.height - 1) - bottom,
            )
        )
    return frames, masks, log


def render_background(spec: ScenarioSpec) -> list[np.ndarray]:
    """The sprite-free rendering of a scenario (same seed consumption)."""
    return generate_scenario(replace(spec, sprites=(), events=()))[0]


# ---------------------------------------------------------------------------
# Plain-text scenario format, so fixtures can live in version control.


def _format_pair(a: float, b: float) -> str:
    return f"{a:g},{b:g}"


def format_scenario(spec: ScenarioSpec) -> str:
    lines = [
        f"height = {spec.height}",
        f"width = {spec.width}",
        f"frames = {spec.frames}",
        f"seed = {spec.seed}",
        f"background_class = {spec.background_class}",
        f"background_intensity = {spec.background_intensity:g}",
        f"texture_amplitude = {spec.texture_amplitude:g}",
        f"texture_smooth = {spec.texture_smooth:g}",
    ]
    if spec.jitter_mode == "drift":
        lines.append(f"jitter = drift:{_format_pair(spec.jitter_row, spec.jitter_col)}")
    elif spec.jitter_mode == "shake":
        lines.append(f"jitter = shake:{spec.jitter_amp:g}")
    else:
        lines.append("jitter = none")
    for sprite in spec.sprites:
        lines.append(
            "sprite = "
            f"class={sprite.class_id} size={sprite.height}x{sprite.width} "
            f"pos={_format_pair(sprite.row, sprite.col)} "
            f"vel={_format_pair(sprite.vel_row, sprite.vel_col)} "
            f"intensity={sprite.intensity:g}"
        )
    for event in spec.events:
        lines.append(
            f"event = sprite={event.sprite} frame={event.frame} "
            f"vel={_format_pair(event.vel_row, event.vel_col)}"
        )
    return "\n".join(lines) + "\n"


def _parse_pair(text: str, what: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"{what} needs two comma-separated numbers, got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_fields(text: str, line: str) -> dict[str, str]:
    fields = {}
    for token in text.split():
        if "=" not in token:
            raise ValueError(f"bad token {token!r} in line: {line}")
        key, value = token.split("=", 1)
        fields[key] = value
    return fields


def parse_scenario(text: str) -> ScenarioSpec:
    """Parse the plain-text key = value scenario format."""
    scalars: dict[str, str] = {}
    sprites: list[SpriteSpec] = []
    events: list[VelocityChange] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "sprite":
            fields = _parse_fields(value, raw_line)
            size = fields["size"].lower().split("x")
            if len(size) != 2:
                raise ValueError(f"line {lineno}: sprite size must be HxW")
            row, col = _parse_pair(fields["pos"], "sprite pos")
            vr, vc = _parse_pair(fields["vel"], "sprite vel")
            sprites.append(
                SpriteSpec(
                    class_id=int(fields["class"]),
                    height=int(size[0]),
                    width=int(size[1]),
                    row=row,
                    col=col,
                    vel_row=vr,
                    vel_col=vc,
                    intensity=float(fields["intensity"]),
                )
            )
        elif key == "event":
            fields = _parse_fields(value, raw_line)
            vr, vc = _parse_pair(fields["vel"], "event vel")
            events.append(
                VelocityChange(
                    sprite=int(fields["sprite"]),
                    frame=int(fields["frame"]),
                    vel_row=vr,
                    vel_col=vc,
                )
            )
        else:
            scalars[key] = value

    for required in ("height", "width", "frames"):
        if required not in scalars:
            raise ValueError(f"scenario is missing the {required!r} key")

    jitter_mode, jitter_row, jitter_col, jitter_amp = "none", 0.0, 0.0, 0.0
    jitter = scalars.pop("jitter", "none")
    if jitter.startswith("drift:"):
        jitter_mode = "drift"
        jitter_row, jitter_col = _parse_pair(jitter[len("drift:"):], "drift velocity")
    elif jitter.startswith("shake:"):
        jitter_mode = "shake"
        jitter_amp = float(jitter[len("shake:"):])
    elif jitter != "none":
        raise ValueError(f"unknown jitter spec: {jitter!r}")

    known_int = {"height", "width", "frames", "seed", "background_class"}
    known_float = {"background_intensity", "texture_amplitude", "texture_smooth"}
    kwargs: dict = {}
    for key, value in scalars.items():
        if key in known_int:
            kwargs[key] = int(value)
        elif key in known_float:
            kwargs[key] = float(value)
        else:
            raise ValueError(f"unknown scenario key: {key!r}")
    return ScenarioSpec(
        jitter_mode=jitter_mode,
        jitter_row=jitter_row,
        jitter_col=jitter_col,
        jitter_amp=jitter_amp,
        sprites=tuple(sprites),
        events=tuple(events),
        **kwargs,
    )


def load_scenario(path) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def save_scenario(spec: ScenarioSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_scenario(spec))
