"""Synthetic multi-agent scenes, visibility masking, and the dataset file
format.

Agents follow damped second-order dynamics: each is attracted to a
personal offset around a shared reference track (a waypoint-seeking
"ball"), repelled softly from the others, and confined to a bounded
field. Visibility is then simulated two ways: a circle of radius r
around the reference, or a camera aperture of half-angle theta tracking
the reference from a fixed sideline position. Masks mark availability
only; ground-truth coordinates are always retained.

Files are a small text header followed by a raw little-endian binary
payload, so coordinates round-trip bit-exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

MAGIC = "trajset v1"
FIELD_HALF = 25.0
SCENE_CENTER = (0.0, 0.0)
DEFAULT_CAMERA = (0.0, -15.0)


@dataclass
class DynamicsParams:
    attraction: float = 0.25
    repulsion: float = 0.3
    damping: float = 0.5
    noise_accel: float = 0.0
    v_max: float = 1.5
    field_half: float = FIELD_HALF
    offset_radius: float = 5.0
    offset_resample: int = 15
    ball_attraction: float = 0.05
    ball_damping: float = 0.3
    ball_v_max: float = 1.2
    waypoint_tol: float = 2.0
    wall_push: float = 0.5


@dataclass
class TrajectorySequence:
    id: str
    coords: np.ndarray          # (T, N, 2) scene units
    reference_track: np.ndarray  # (T, 2)
    t_past: int
    t_future: int

    def __post_init__(self):
        t, n, two = self.coords.shape
        if two != 2 or n < 1:
            raise DataError(f"bad coords shape {self.coords.shape}")
        if t != self.t_past + self.t_future:
            raise DataError(f"coords span {t} steps, expected "
                            f"{self.t_past + self.t_future}")
        if self.reference_track.shape != (t, 2):
            raise DataError(f"reference track shape {self.reference_track.shape} "
                            f"does not match {t} steps")
        if not np.isfinite(self.coords).all():
            raise DataError(f"sequence {self.id}: non-finite coordinates")

    @property
    def n_agents(self) -> int:
        return self.coords.shape[1]

    @property
    def past(self) -> np.ndarray:
        return self.coords[: self.t_past]

    @property
    def future(self) -> np.ndarray:
        return self.coords[self.t_past:]


@dataclass
class MaskingSpec:
    mode: str                    # "circle" or "camera"
    radius: float | None = None
    angle: float | None = None   # degrees, half-aperture
    camera: tuple | None = None

    def __post_init__(self):
        if self.mode == "circle":
            if self.radius is None or self.radius <= 0:
                raise ConfigError("circle mode needs radius > 0")
        elif self.mode == "camera":
            if self.angle is None or not (0 < self.angle < 180):
                raise ConfigError("camera mode needs 0 < angle < 180 degrees")
            if self.camera is None:
                self.camera = DEFAULT_CAMERA
        else:
            raise ConfigError(f"unknown masking mode {self.mode!r}")

    @property
    def parameter(self) -> float:
        return self.radius if self.mode == "circle" else self.angle

    def label(self) -> str:
        if self.mode == "circle":
            return f"circle r={self.radius:g}"
        return f"camera theta={self.angle:g}"


# ---------------------------------------------------------------------------
# generation


def _simulate_reference(rng, t_total, p: DynamicsParams):
    pos = rng.uniform(-0.4, 0.4, size=2) * p.field_half
    vel = np.zeros(2)
    waypoint = rng.uniform(-0.8, 0.8, size=2) * p.field_half
    track = np.empty((t_total, 2))
    for t in range(t_total):
        track[t] = pos
        if np.linalg.norm(waypoint - pos) < p.waypoint_tol:
            waypoint = rng.uniform(-0.8, 0.8, size=2) * p.field_half
        acc = p.ball_attraction * (waypoint - pos) - p.ball_damping * vel
        vel = vel + acc
        speed = np.linalg.norm(vel)
        if speed > p.ball_v_max:
            vel *= p.ball_v_max / speed
        pos = pos + vel
    return track


def _draw_offsets(rng, n, radius):
    r = radius * np.sqrt(rng.uniform(size=n))
    theta = rng.uniform(0, 2 * np.pi, size=n)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def _simulate_agents(rng, track, n_agents, p: DynamicsParams, seq_id):
    t_total = track.shape[0]
    offsets = _draw_offsets(rng, n_agents, p.offset_radius)
    # agents start scattered around the reference, inside the field
    pos = np.clip(track[0] + offsets + _draw_offsets(rng, n_agents, p.offset_radius),
                  -p.field_half, p.field_half)
    vel = np.zeros((n_agents, 2))
    phases = rng.integers(0, max(1, p.offset_resample), size=n_agents)
    coords = np.empty((t_total, n_agents, 2))
    for t in range(t_total):
        coords[t] = pos
        if p.offset_resample > 0 and t > 0:
            due = (t + phases) % p.offset_resample == 0
            if due.any():
                offsets[due] = _draw_offsets(rng, int(due.sum()), p.offset_radius)
        target = track[t] + offsets
        acc = p.attraction * (target - pos) - p.damping * vel
        if p.repulsion != 0.0:
            diff = pos[:, None, :] - pos[None, :, :]
            dist2 = (diff ** 2).sum(axis=-1) + 1.0
            acc += p.repulsion * (diff / dist2[..., None]).sum(axis=1)
        if p.noise_accel > 0.0:
            acc += rng.normal(scale=p.noise_accel, size=(n_agents, 2))
        over = np.abs(pos) - p.field_half
        acc -= p.wall_push * np.sign(pos) * np.clip(over, 0.0, None)
        vel = vel + acc
        speed = np.linalg.norm(vel, axis=-1, keepdims=True)
        np.divide(vel * p.v_max, speed, out=vel, where=speed > p.v_max)
        pos = pos + vel
        if np.abs(pos).max() > p.field_half * 10:
            raise DataError(f"sequence {seq_id}: integration diverged at step {t}")
    return coords


def generate_sequences(count, n_agents, t_past, t_future, seed,
                       dynamics: DynamicsParams | None = None,
                       id_prefix="seq"):
    """Deterministic batch of interacting sequences for one seed."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    dynamics = dynamics or DynamicsParams()
    t_total = t_past + t_future
    children = np.random.SeedSequence(seed).spawn(count)
    out = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        track = _simulate_reference(rng, t_total, dynamics)
        coords = _simulate_agents(rng, track, n_agents, dynamics, f"{id_prefix}{i:05d}")
        out.append(TrajectorySequence(id=f"{id_prefix}{i:05d}", coords=coords,
                                      reference_track=track,
                                      t_past=t_past, t_future=t_future))
    return out


# ---------------------------------------------------------------------------
# masking


def apply_circle_mask(seq: TrajectorySequence, radius: float) -> np.ndarray:
    """Visible iff within `radius` (inclusive) of the reference; past only."""
    if radius <= 0:
        raise ConfigError("radius must be > 0")
    past = seq.past
    ref = seq.reference_track[: seq.t_past]
    dist = np.linalg.norm(past - ref[:, None, :], axis=-1)
    return (dist <= radius).astype(np.float64)


def apply_camera_mask(seq: TrajectorySequence, angle_deg: float,
                      camera=DEFAULT_CAMERA) -> np.ndarray:
    """Visible iff within `angle_deg` (inclusive) of the camera-to-reference
    direction. An agent exactly at the camera counts as visible."""
    if not (0 < angle_deg < 180):
        raise ConfigError("angle must be in (0, 180) degrees")
    cam = np.asarray(camera, dtype=np.float64)
    past = seq.past
    ref = seq.reference_track[: seq.t_past]
    view = ref - cam
    view_norm = np.linalg.norm(view, axis=-1)
    if (view_norm == 0).any():
        raise DataError("reference track passes through the camera position")
    rel = past - cam
    rel_norm = np.linalg.norm(rel, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_ang = (rel * view[:, None, :]).sum(axis=-1) / (rel_norm * view_norm[:, None])
    cos_ang = np.where(rel_norm == 0, 1.0, cos_ang)  # at-camera convention
    return (cos_ang >= np.cos(np.radians(angle_deg))).astype(np.float64)


def apply_mask(seq: TrajectorySequence, spec: MaskingSpec) -> np.ndarray:
    if spec.mode == "circle":
        return apply_circle_mask(seq, spec.radius)
    return apply_camera_mask(seq, spec.angle, spec.camera)


def split_dataset(sequences, train_fraction: float, seed: int):
    """Deterministic shuffled split into (train, test) lists."""
    if not (0 < train_fraction < 1):
        raise ConfigError("train_fraction must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(sequences))
    n_train = int(round(train_fraction * len(sequences)))
    if n_train == 0 or n_train == len(sequences):
        raise ConfigError(f"split {train_fraction} leaves one side empty "
                          f"for {len(sequences)} sequences")
    train = [sequences[i] for i in order[:n_train]]
    test = [sequences[i] for i in order[n_train:]]
    return train, test


# ---------------------------------------------------------------------------
# dataset files


@dataclass
class Dataset:
    spec: MaskingSpec
    split: str
    seed: int
    sequences: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    results: list | None = None   # per record: (imputed past, predicted future)
    units: str = "scene"

    def __post_init__(self):
        if len(self.sequences) != len(self.masks):
            raise DataError(f"{len(self.sequences)} sequences vs "
                            f"{len(self.masks)} masks")
        for seq, mask in zip(self.sequences, self.masks):
            if mask.shape != (seq.t_past, seq.n_agents):
                raise DataError(f"sequence {seq.id}: mask shape {mask.shape} does "
                                f"not match ({seq.t_past}, {seq.n_agents})")

    @property
    def t_past(self):
        return self.sequences[0].t_past

    @property
    def t_future(self):
        return self.sequences[0].t_future

    @property
    def n_agents(self):
        return self.sequences[0].n_agents

    def missing_rate(self) -> float:
        total = sum(m.size for m in self.masks)
        missing = sum((m == 0).sum() for m in self.masks)
        return missing / total


def build_dataset(sequences, spec: MaskingSpec, split: str, seed: int) -> Dataset:
    masks = [apply_mask(s, spec) for s in sequences]
    return Dataset(spec=spec, split=split, seed=seed,
                   sequences=list(sequences), masks=masks)


def write_dataset(path, ds: Dataset) -> None:
    seqs = ds.sequences
    if not seqs:
        raise DataError("refusing to write an empty dataset")
    header = [MAGIC,
              f"mode={ds.spec.mode}"]
    if ds.spec.mode == "circle":
        header.append(f"radius={ds.spec.radius!r}")
    else:
        header.append(f"angle={ds.spec.angle!r}")
        header.append(f"camera={ds.spec.camera[0]!r},{ds.spec.camera[1]!r}")
    header += [f"units={ds.units}",
               f"split={ds.split}",
               f"seed={ds.seed}",
               f"t_past={ds.t_past}",
               f"t_future={ds.t_future}",
               f"n_agents={ds.n_agents}",
               f"count={len(seqs)}",
               f"has_results={0 if ds.results is None else 1}"]
    header += [f"record {s.id}" for s in seqs]

    payload = io.BytesIO()
    for i, (seq, mask) in enumerate(zip(seqs, ds.masks)):
        payload.write(seq.coords.astype("<f8").tobytes())
        payload.write(seq.reference_track.astype("<f8").tobytes())
        payload.write(mask.astype("<u1").tobytes())
        if ds.results is not None:
            imputed, predicted = ds.results[i]
            payload.write(np.asarray(imputed).astype("<f8").tobytes())
            payload.write(np.asarray(predicted).astype("<f8").tobytes())
    blob = payload.getvalue()
    header.append(f"payload_bytes={len(blob)}")

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(blob)


_HEADER_KEYS = {"mode", "radius", "angle", "camera", "units", "split", "seed",
                "t_past", "t_future", "n_agents", "count", "has_results",
                "payload_bytes"}


def read_dataset(path) -> Dataset:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from None

    fields: dict[str, str] = {}
    record_ids = []
    offset = 0
    line_no = 0
    while True:
        nl = raw.find(b"\n", offset)
        if nl < 0:
            raise DataError(f"{path}: header never terminated (line {line_no + 1})")
        line = raw[offset:nl].decode("ascii", errors="replace")
        offset = nl + 1
        line_no += 1
        if line_no == 1:
            if line != MAGIC:
                raise DataError(f"{path}: bad magic {line!r} on line 1")
            continue
        if line.startswith("record "):
            record_ids.append(line[len("record "):])
            continue
        if "=" not in line:
            raise DataError(f"{path}: malformed header line {line_no}: {line!r}")
        key, value = line.split("=", 1)
        if key not in _HEADER_KEYS:
            raise DataError(f"{path}: unknown header key {key!r} on line {line_no}")
        fields[key] = value
        if key == "payload_bytes":
            break

    try:
        t_past = int(fields["t_past"])
        t_future = int(fields["t_future"])
        n_agents = int(fields["n_agents"])
        count = int(fields["count"])
        has_results = int(fields.get("has_results", "0"))
        payload_bytes = int(fields["payload_bytes"])
        seed = int(fields["seed"])
        if fields["mode"] == "circle":
            spec = MaskingSpec(mode="circle", radius=float(fields["radius"]))
        else:
            cam = tuple(float(v) for v in fields["camera"].split(","))
            spec = MaskingSpec(mode="camera", angle=float(fields["angle"]), camera=cam)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: bad header field ({exc})") from None

    if len(record_ids) != count:
        raise DataError(f"{path}: header count={count} but {len(record_ids)} "
                        f"record lines")
    blob = raw[offset:]
    if len(blob) != payload_bytes:
        raise DataError(f"{path}: payload truncated at byte {len(blob)} "
                        f"of {payload_bytes}")

    t_total = t_past + t_future
    sizes = [t_total * n_agents * 2 * 8, t_total * 2 * 8, t_past * n_agents]
    if has_results:
        sizes += [t_past * n_agents * 2 * 8, t_future * n_agents * 2 * 8]
    per_record = sum(sizes)
    if per_record * count != payload_bytes:
        raise DataError(f"{path}: payload holds {payload_bytes} bytes, expected "
                        f"{per_record * count} for {count} records")

    sequences, masks = [], []
    results = [] if has_results else None
    pos = 0
    for seq_id in record_ids:
        coords = np.frombuffer(blob, "<f8", t_total * n_agents * 2, pos).reshape(
            t_total, n_agents, 2).copy()
        pos += sizes[0]
        ref = np.frombuffer(blob, "<f8", t_total * 2, pos).reshape(t_total, 2).copy()
        pos += sizes[1]
        mask = np.frombuffer(blob, "<u1", t_past * n_agents, pos).reshape(
            t_past, n_agents).astype(np.float64)
        pos += sizes[2]
        sequences.append(TrajectorySequence(id=seq_id, coords=coords,
                                            reference_track=ref,
                                            t_past=t_past, t_future=t_future))
        masks.append(mask)
        if has_results:
            imputed = np.frombuffer(blob, "<f8", t_past * n_agents * 2, pos).reshape(
                t_past, n_agents, 2).copy()
            pos += sizes[3]
            predicted = np.frombuffer(blob, "<f8", t_future * n_agents * 2, pos).reshape(
                t_future, n_agents, 2).copy()
            pos += sizes[4]
            results.append((imputed, predicted))

    return Dataset(spec=spec, split=fields["split"], seed=seed,
                   sequences=sequences, masks=masks, results=results,
                   units=fields["units"])


def validate_dataset(ds: Dataset) -> None:
    """Check that the stored masks regenerate from coordinates + scenario."""
    for seq, mask in zip(ds.sequences, ds.masks):
        regenerated = apply_mask(seq, ds.spec)
        if not np.array_equal(regenerated, mask):
            raise DataError(f"sequence {seq.id}: stored mask does not match "
                            f"the {ds.spec.label()} scenario")


def stack_arrays(ds: Dataset):
    """Batch views (coords (B,T,N,2), masks (B,T_past,N)) for model code."""
    coords = np.stack([s.coords for s in ds.sequences])
    masks = np.stack(ds.masks)
    return coords, masks
