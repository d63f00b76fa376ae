"""Synthetic untrimmed-video feature data and the dataset container format.

The generated world is built so that localization quality hinges on telling
class-specific background apart from action: background snippets of a video
share the static (RGB) component of one of its action classes with strength
`confound_strength`, while their motion (flow) component is pure noise. Action
snippets carry both a static and a motion prototype.

File container: magic "WTALDS01", little-endian payload, CRC32 trailer.
The same container with zero instances per video carries externally extracted
features, so real-data runs need none of the generation code here.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError

DATASET_MAGIC = b"WTALDS01"
DATASET_VERSION = 1


@dataclass
class VideoRecord:
    """One untrimmed video as feature matrices plus annotations.

    `ground_truth` is a list of (class, start, end) with half-open snippet
    spans; it exists for evaluation only and the training view never sees it.
    """

    video_id: str
    x_rgb: np.ndarray
    x_flow: np.ndarray
    video_label: np.ndarray
    ground_truth: list

    @property
    def num_snippets(self) -> int:
        return self.x_rgb.shape[0]

    def validate(self) -> None:
        if self.x_rgb.shape != self.x_flow.shape or self.x_rgb.ndim != 2:
            raise ValueError(f"{self.video_id}: modality shapes differ or not 2-D: "
                             f"{self.x_rgb.shape} vs {self.x_flow.shape}")
        t = self.num_snippets
        c = self.video_label.shape[0]
        for cls, start, end in self.ground_truth:
            if not 0 <= cls < c:
                raise ValueError(f"{self.video_id}: instance class {cls} out of range")
            if not (0 <= start < end <= t):
                raise ValueError(f"{self.video_id}: bad span [{start}, {end}) for T={t}")


@dataclass
class TrainingVideo:
    """What the trainer is allowed to see: features and the video label only."""

    video_id: str
    x_rgb: np.ndarray
    x_flow: np.ndarray
    video_label: np.ndarray


def training_view(records: list) -> list:
    return [TrainingVideo(r.video_id, r.x_rgb, r.x_flow, r.video_label)
            for r in records]


@dataclass
class SynthConfig:
    num_classes: int = 5
    feature_dim: int = 32
    t_range: tuple = (60, 120)
    instances_range: tuple = (1, 3)
    instance_len_range: tuple = (8, 20)
    prototype_scale: float = 1.0
    confound_strength: float = 0.8
    noise_sigma: float = 0.7
    num_train: int = 200
    num_test: int = 60
    seed: int = 7

    def validate(self) -> None:
        if self.num_classes < 1 or self.feature_dim < 1:
            raise ConfigError("num_classes and feature_dim must be >= 1")
        t_lo, t_hi = self.t_range
        i_lo, i_hi = self.instances_range
        l_lo, l_hi = self.instance_len_range
        if not (1 <= t_lo <= t_hi and 1 <= i_lo <= i_hi and 1 <= l_lo <= l_hi):
            raise ConfigError("ranges must be non-empty with positive lower bounds")
        # minimal draw must fit: i_lo instances of l_lo snippets plus a
        # background snippet before, between, and after each
        if i_lo * l_lo + (i_lo + 1) > t_lo:
            raise ConfigError(f"instances cannot fit: {i_lo} x {l_lo} snippets plus "
                              f"{i_lo + 1} background gaps exceed min T={t_lo}")
        if not 0.0 <= self.confound_strength <= 1.0:
            raise ConfigError("confound_strength must be in [0, 1]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.num_train < 1 or self.num_test < 0:
            raise ConfigError("num_train >= 1 and num_test >= 0 required")


@dataclass
class Prototypes:
    static: np.ndarray   # (C, D) per-class static component
    motion: np.ndarray   # (C, D) per-class motion component
    static_bg: np.ndarray  # (D,) class-agnostic background static component


def draw_prototypes(cfg: SynthConfig, rng: np.random.Generator) -> Prototypes:
    scale = cfg.prototype_scale
    return Prototypes(
        static=scale * rng.normal(size=(cfg.num_classes, cfg.feature_dim)),
        motion=scale * rng.normal(size=(cfg.num_classes, cfg.feature_dim)),
        static_bg=scale * rng.normal(size=cfg.feature_dim),
    )


def _layout(cfg: SynthConfig, t: int, rng: np.random.Generator):
    """Instance classes and spans for one video, background in every gap."""
    i_lo, i_hi = cfg.instances_range
    l_lo, l_hi = cfg.instance_len_range
    n = int(rng.integers(i_lo, i_hi + 1))
    n = min(n, (t - 1) // (l_lo + 1))  # cfg.validate guarantees n >= i_lo fits
    lens = rng.integers(l_lo, l_hi + 1, size=n)
    while lens.sum() + n + 1 > t:
        lens[int(np.argmax(lens))] -= 1
    extra_bg = t - int(lens.sum()) - (n + 1)
    gaps = 1 + rng.multinomial(extra_bg, np.full(n + 1, 1.0 / (n + 1)))
    classes = rng.integers(0, cfg.num_classes, size=n)
    spans = []
    pos = 0
    for i in range(n):
        pos += int(gaps[i])
        spans.append((int(classes[i]), pos, pos + int(lens[i])))
        pos += int(lens[i])
    return spans


def _render(cfg: SynthConfig, proto: Prototypes, video_id: str, t: int,
            spans: list, rng: np.random.Generator) -> VideoRecord:
    d = cfg.feature_dim
    confound_class = spans[0][0]
    bg_static = (cfg.confound_strength * proto.static[confound_class]
                 + (1.0 - cfg.confound_strength) * proto.static_bg)
    x_rgb = np.tile(bg_static, (t, 1))
    x_flow = np.zeros((t, d))
    for cls, start, end in spans:
        x_rgb[start:end] = proto.static[cls]
        x_flow[start:end] = proto.motion[cls]
    if cfg.noise_sigma > 0:
        x_rgb += rng.normal(0.0, cfg.noise_sigma, size=(t, d))
        x_flow += rng.normal(0.0, cfg.noise_sigma, size=(t, d))
    label = np.zeros(cfg.num_classes)
    for cls, _, _ in spans:
        label[cls] = 1.0
    rec = VideoRecord(video_id=video_id, x_rgb=x_rgb, x_flow=x_flow,
                      video_label=label, ground_truth=spans)
    rec.validate()
    return rec


def generate(cfg: SynthConfig) -> tuple:
    """Draw (train, test) record lists, deterministic under cfg.seed."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    proto = draw_prototypes(cfg, rng)
    t_lo, t_hi = cfg.t_range

    def make(prefix: str, count: int) -> list:
        out = []
        for i in range(count):
            t = int(rng.integers(t_lo, t_hi + 1))
            spans = _layout(cfg, t, rng)
            out.append(_render(cfg, proto, f"{prefix}_{i:04d}", t, spans, rng))
        return out

    return make("train", cfg.num_train), make("test", cfg.num_test)


class _Cursor:
    """Byte reader that reports the offset of whatever failed."""

    def __init__(self, data: bytes, start: int = 0):
        self.data = data
        self.pos = start

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise DataFormatError(f"truncated while reading {what} "
                                  f"({n} bytes needed)", offset=self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def f64(self, what: str) -> float:
        return struct.unpack("<d", self.take(8, what))[0]


def _label_bytes(label: np.ndarray) -> bytes:
    c = label.shape[0]
    mask = bytearray((c + 7) // 8)
    for i in range(c):
        if label[i] != 0:
            mask[i // 8] |= 1 << (i % 8)
    return bytes(mask)


def _label_from_bytes(mask: bytes, c: int) -> np.ndarray:
    label = np.zeros(c)
    for i in range(c):
        if mask[i // 8] & (1 << (i % 8)):
            label[i] = 1.0
    return label


def write_dataset(path, records: list, num_classes: int | None = None,
                  frames_per_snippet: int = 0, fps: float = 0.0) -> None:
    """Serialize records; 0 / 0.0 mark snippet timing as unknown."""
    if num_classes is None:
        if not records:
            raise ValueError("num_classes required for an empty dataset")
        num_classes = records[0].video_label.shape[0]
    if records:
        feature_dim = records[0].x_rgb.shape[1]
    else:
        feature_dim = 0
    parts = [struct.pack("<IIIQ", DATASET_VERSION, num_classes, feature_dim,
                         len(records)),
             struct.pack("<Id", frames_per_snippet, fps)]
    for rec in records:
        rec.validate()
        if rec.video_label.shape[0] != num_classes:
            raise ValueError(f"{rec.video_id}: label length != {num_classes}")
        if rec.x_rgb.shape[1] != feature_dim:
            raise ValueError(f"{rec.video_id}: feature dim != {feature_dim}")
        vid = rec.video_id.encode("utf-8")
        parts.append(struct.pack("<I", len(vid)))
        parts.append(vid)
        parts.append(struct.pack("<I", rec.num_snippets))
        parts.append(_label_bytes(rec.video_label))
        parts.append(struct.pack("<I", len(rec.ground_truth)))
        for cls, start, end in rec.ground_truth:
            parts.append(struct.pack("<III", cls, start, end))
        parts.append(np.ascontiguousarray(rec.x_rgb, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(rec.x_flow, dtype="<f8").tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


@dataclass
class Dataset:
    records: list
    num_classes: int
    feature_dim: int
    frames_per_snippet: int = 0
    fps: float = 0.0


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(DATASET_MAGIC) or blob[: len(DATASET_MAGIC)] != DATASET_MAGIC:
        raise DataFormatError("bad magic, not a dataset file", offset=0)
    if len(blob) < len(DATASET_MAGIC) + 4:
        raise DataFormatError("file too short for checksum trailer",
                              offset=len(blob))
    payload = blob[len(DATASET_MAGIC) : -4]
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) != stored_crc:
        raise DataFormatError("checksum mismatch, file corrupt",
                              offset=len(blob) - 4)
    cur = _Cursor(blob, start=len(DATASET_MAGIC))
    cur.data = blob[:-4]
    version = cur.u32("version")
    if version != DATASET_VERSION:
        raise DataFormatError(f"unsupported version {version}", offset=cur.pos - 4)
    num_classes = cur.u32("class count")
    feature_dim = cur.u32("feature dim")
    count = cur.u64("video count")
    frames_per_snippet = cur.u32("frames per snippet")
    fps = cur.f64("fps")
    mask_len = (num_classes + 7) // 8
    records = []
    for _ in range(count):
        id_len = cur.u32("id length")
        vid = cur.take(id_len, "video id").decode("utf-8")
        t = cur.u32("snippet count")
        label = _label_from_bytes(cur.take(mask_len, "label bitmask"), num_classes)
        n_inst = cur.u32("instance count")
        gts = []
        for _ in range(n_inst):
            cls = cur.u32("instance class")
            start = cur.u32("instance start")
            end = cur.u32("instance end")
            gts.append((cls, start, end))
        nbytes = t * feature_dim * 8
        x_rgb = np.frombuffer(cur.take(nbytes, "rgb features"),
                              dtype="<f8").reshape(t, feature_dim).copy()
        x_flow = np.frombuffer(cur.take(nbytes, "flow features"),
                               dtype="<f8").reshape(t, feature_dim).copy()
        rec = VideoRecord(video_id=vid, x_rgb=x_rgb, x_flow=x_flow,
                          video_label=label, ground_truth=gts)
        try:
            rec.validate()
        except ValueError as exc:
            raise DataFormatError(str(exc), offset=cur.pos) from exc
        records.append(rec)
    if cur.pos != len(cur.data):
        raise DataFormatError(f"{len(cur.data) - cur.pos} trailing bytes after "
                              "last video", offset=cur.pos)
    return Dataset(records=records, num_classes=num_classes,
                   feature_dim=feature_dim,
                   frames_per_snippet=frames_per_snippet, fps=fps)
