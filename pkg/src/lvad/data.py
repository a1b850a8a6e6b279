"""Feature bags, their binary container, manifests, and the synthetic corpus.

File layout (little endian):

    magic   4 bytes  b"LVAD"
    version u32      1
    T       u32      snippets
    D_V     u32      visual feature width
    D_A     u32      audio feature width
    label   u8       0 normal, 1 anomalous
    truth   u8       1 if a frame-truth block follows
    visual  T*D_V float32, row-major
    audio   T*D_A float32, row-major
    frames  16*T  u8, only when truth == 1

Feature payloads are stored and kept in memory as float32; the model casts
to float64 on entry, so a save/load round trip is byte-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError

MAGIC = b"LVAD"
VERSION = 1
FRAMES_PER_SNIPPET = 16

_HEADER = struct.Struct("<4sIIIIBB")


@dataclass
class VideoFeatureBag:
    """Pre-extracted per-snippet features for one video."""

    bag_id: str
    visual: np.ndarray  # (T, D_V) float32
    audio: np.ndarray  # (T, D_A) float32
    label: int
    frame_truth: np.ndarray | None = None  # (16*T,) uint8

    def __post_init__(self) -> None:
        self.visual = np.ascontiguousarray(self.visual, dtype=np.float32)
        self.audio = np.ascontiguousarray(self.audio, dtype=np.float32)
        if self.visual.ndim != 2 or self.audio.ndim != 2:
            raise ContractError(f"bag {self.bag_id}: features must be (T, D) matrices")
        if self.visual.shape[0] != self.audio.shape[0] or self.visual.shape[0] < 1:
            raise ContractError(f"bag {self.bag_id}: modalities disagree on T")
        if self.label not in (0, 1):
            raise ContractError(f"bag {self.bag_id}: label must be 0 or 1")
        if not np.isfinite(self.visual).all() or not np.isfinite(self.audio).all():
            raise ContractError(f"bag {self.bag_id}: non-finite features")
        if self.frame_truth is not None:
            self.frame_truth = np.ascontiguousarray(self.frame_truth, dtype=np.uint8)
            if self.frame_truth.shape != (FRAMES_PER_SNIPPET * self.t,):
                raise ContractError(f"bag {self.bag_id}: frame truth length mismatch")
            if not np.isin(self.frame_truth, (0, 1)).all():
                raise ContractError(f"bag {self.bag_id}: frame truth must be binary")
            if self.label == 0 and self.frame_truth.any():
                raise ContractError(f"bag {self.bag_id}: normal bag with anomalous frames")

    @property
    def t(self) -> int:
        return self.visual.shape[0]


def save_bag(bag: VideoFeatureBag, path: str | Path) -> None:
    path = Path(path)
    has_truth = bag.frame_truth is not None
    header = _HEADER.pack(
        MAGIC, VERSION, bag.t, bag.visual.shape[1], bag.audio.shape[1], bag.label, int(has_truth)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(bag.visual.astype("<f4").tobytes())
        fh.write(bag.audio.astype("<f4").tobytes())
        if has_truth:
            fh.write(bag.frame_truth.tobytes())


def load_bag(path: str | Path) -> VideoFeatureBag:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if len(blob) < _HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, version, t, d_v, d_a, label, has_truth = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    if t < 1 or d_v < 1 or d_a < 1:
        raise ParseError(f"{path}: degenerate dimensions T={t} D_V={d_v} D_A={d_a}")
    if label not in (0, 1) or has_truth not in (0, 1):
        raise ParseError(f"{path}: bad label/truth flags")
    expected = _HEADER.size + 4 * t * (d_v + d_a) + (FRAMES_PER_SNIPPET * t if has_truth else 0)
    if len(blob) != expected:
        raise ParseError(f"{path}: payload is {len(blob)} bytes, expected {expected}")
    offset = _HEADER.size
    visual = np.frombuffer(blob, dtype="<f4", count=t * d_v, offset=offset).reshape(t, d_v)
    offset += 4 * t * d_v
    audio = np.frombuffer(blob, dtype="<f4", count=t * d_a, offset=offset).reshape(t, d_a)
    offset += 4 * t * d_a
    truth = None
    if has_truth:
        truth = np.frombuffer(blob, dtype=np.uint8, count=FRAMES_PER_SNIPPET * t, offset=offset)
    try:
        return VideoFeatureBag(path.stem, visual.copy(), audio.copy(), int(label),
                               truth.copy() if truth is not None else None)
    except ContractError as exc:
        raise ParseError(str(exc)) from None


@dataclass
class Manifest:
    """Ordered bag listing; paths are stored relative to the manifest file."""

    entries: list[tuple[str, int, str]] = field(default_factory=list)
    base_dir: Path = Path(".")

    def __post_init__(self) -> None:
        paths = [p for p, _, _ in self.entries]
        if len(paths) != len(set(paths)):
            raise ParseError("manifest: duplicate bag paths")
        for _, label, split in self.entries:
            if label not in (0, 1):
                raise ParseError(f"manifest: bad label {label}")
            if split not in ("train", "test"):
                raise ParseError(f"manifest: bad split {split!r}")

    def split(self, which: str) -> list[tuple[Path, int]]:
        return [(self.base_dir / p, lab) for p, lab, s in self.entries if s == which]

    def load_split(self, which: str) -> list[VideoFeatureBag]:
        bags = []
        for path, label in self.split(which):
            bag = load_bag(path)
            if bag.label != label:
                raise ParseError(f"{path}: file label {bag.label} != manifest label {label}")
            bags.append(bag)
        return bags


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    entries = []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"{path}:{line_no}: expected 'path<TAB>label<TAB>split'")
        rel, label_s, split = parts
        try:
            label = int(label_s)
        except ValueError:
            raise ParseError(f"{path}:{line_no}: label {label_s!r} is not an integer") from None
        entries.append((rel, label, split))
    return Manifest(entries, base_dir=path.parent)


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    lines = [f"{p}\t{label}\t{split}" for p, label, split in manifest.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Synthetic corpus.

# Clutter model: a shared mixture of components whose per-video composition
# is Dirichlet-distributed.  The alpha keeps compositions varied enough that
# pooled bag statistics stay unreliable without drowning the windows.
_MIX_COMPONENTS = 3
_VISUAL_CLUSTER_SPREAD = 0.35
_AUDIO_CLUSTER_SPREAD = 0.25
_VISUAL_NOISE = 0.2
_AUDIO_NOISE = 0.25
_COMPOSITION_ALPHA = 3.0


def _unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def generate_synthetic_corpus(
    seed: int,
    n_normal: int,
    n_abnormal: int,
    t_range: tuple[int, int] = (20, 60),
    d_v: int = 1024,
    d_a: int = 128,
    anomaly_rate: float = 0.3,
    separation: float = 4.0,
) -> list[VideoFeatureBag]:
    """Deterministic corpus of mixture-of-Gaussians feature bags.

    Snippets draw from a mixture shared across the corpus; each video has
    its own component composition, so aggregate statistics vary widely even
    among normal videos.  The anomaly signal is cross-modal by construction:

    * An anomalous bag shifts one contiguous window (an ``anomaly_rate``
      fraction of snippets) in both modalities at once: audio moves
      ``separation`` along a corpus-level anomaly axis, visual moves
      ``separation`` along a direction drawn fresh per snippet.
    * Every normal bag carries one distractor window of the same length
      with only one of those shifts, audio for half the bags and visual for
      the other half.  Bursts of single-modality extremity therefore occur
      in both classes, window for window, so a detector that pools one
      modality over the bag, or counts loud snippets, gains little.  Only
      audio-visual co-occurrence within a snippet separates the labels.
    """
    if n_normal < 0 or n_abnormal < 0 or n_normal + n_abnormal == 0:
        raise ContractError("generate_synthetic_corpus: need at least one bag")
    t_min, t_max = t_range
    if not 1 <= t_min <= t_max:
        raise ContractError(f"generate_synthetic_corpus: bad t_range {t_range}")
    if not 0.0 < anomaly_rate <= 1.0:
        raise ContractError(f"generate_synthetic_corpus: anomaly_rate {anomaly_rate} not in (0, 1]")
    if separation < 0.0:
        raise ContractError("generate_synthetic_corpus: separation must be nonnegative")

    rng = np.random.default_rng(seed)
    mu_v = rng.normal(scale=_VISUAL_CLUSTER_SPREAD, size=(_MIX_COMPONENTS, d_v))
    mu_a = rng.normal(scale=_AUDIO_CLUSTER_SPREAD, size=(_MIX_COMPONENTS, d_a))
    audio_axis = _unit(rng, d_a)

    def snippets(t: int) -> tuple[np.ndarray, np.ndarray]:
        weights = rng.dirichlet(np.full(_MIX_COMPONENTS, _COMPOSITION_ALPHA))
        comp = rng.choice(_MIX_COMPONENTS, size=t, p=weights)
        visual = mu_v[comp] + rng.normal(scale=_VISUAL_NOISE, size=(t, d_v))
        audio = mu_a[comp] + rng.normal(scale=_AUDIO_NOISE, size=(t, d_a))
        return visual, audio

    def window_size(t: int) -> int:
        return max(1, int(round(anomaly_rate * t)))

    def visual_burst(n: int) -> np.ndarray:
        # one fresh direction per snippet: the burst is recognizable only by
        # its energy, never by a rememberable direction
        return separation * np.stack([_unit(rng, d_v) for _ in range(n)])

    bags = []
    for i in range(n_normal):
        t = int(rng.integers(t_min, t_max + 1))
        visual, audio = snippets(t)
        wd = window_size(t)
        start = int(rng.integers(0, t - wd + 1))
        if rng.integers(0, 2) == 0:
            audio[start : start + wd] += separation * audio_axis
        else:
            visual[start : start + wd] += visual_burst(wd)
        truth = np.zeros(FRAMES_PER_SNIPPET * t, dtype=np.uint8)
        bags.append(VideoFeatureBag(f"normal_{i:04d}", visual, audio, 0, truth))
    for i in range(n_abnormal):
        t = int(rng.integers(t_min, t_max + 1))
        visual, audio = snippets(t)
        window = window_size(t)
        start = int(rng.integers(0, t - window + 1))
        visual[start : start + window] += visual_burst(window)
        audio[start : start + window] += separation * audio_axis
        truth = np.zeros((t, FRAMES_PER_SNIPPET), dtype=np.uint8)
        truth[start : start + window] = 1
        bags.append(VideoFeatureBag(f"abnormal_{i:04d}", visual, audio, 1, truth.reshape(-1)))
    return bags


def default_split(bags: list[VideoFeatureBag]) -> list[str]:
    """Per-label round robin: every third bag of each class goes to test."""
    counters = {0: 0, 1: 0}
    splits = []
    for bag in bags:
        n = counters[bag.label]
        splits.append("test" if n % 3 == 2 else "train")
        counters[bag.label] = n + 1
    return splits


def write_corpus(bags: list[VideoFeatureBag], out_dir: str | Path,
                 splits: list[str] | None = None) -> Path:
    """Write bag files plus a manifest.tsv; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = splits if splits is not None else default_split(bags)
    if len(splits) != len(bags):
        raise ContractError("write_corpus: one split per bag required")
    entries = []
    for bag, split in zip(bags, splits):
        name = f"{bag.bag_id}.lvad"
        save_bag(bag, out_dir / name)
        entries.append((name, bag.label, split))
    manifest_path = out_dir / "manifest.tsv"
    save_manifest(Manifest(entries, base_dir=out_dir), manifest_path)
    return manifest_path
