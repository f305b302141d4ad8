"""Frame-level audio representations.

Clips are loaded as mono 16 kHz peak-normalized signals, turned into
one-sided power spectrograms (1024-sample Hann window, 50% overlap, no
centering), then into dB-scaled log-STFT or 128-bin log-mel frames, and
finally stacked into fixed-width temporal context windows.  Pretrained
embeddings are ingested from sidecar cache files rather than computed.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window, resample_poly

from . import cache
from .dataset import ClipKey
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

TARGET_SR = 16000
WINDOW = 1024
HOP = 512
DB_FLOOR_POWER = 1e-10  # -100 dB

REPRESENTATIONS = ("log_stft", "log_mel", "embedding")


@dataclass
class AudioClip:
    samples: np.ndarray  # float64, peak-normalized to [-1, 1]
    sample_rate: int = TARGET_SR


@dataclass
class Spectrogram:
    values: np.ndarray  # (frames, bins)
    frame_hop_seconds: float
    bin_kind: str  # fft | mel | embedding
    is_db: bool = False

    @property
    def frame_times(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) * self.frame_hop_seconds


@dataclass
class FrameSet:
    """Feature rows with aligned per-row provenance."""

    matrix: np.ndarray  # (rows, stack_size * base_dim) float32
    clip: ClipKey | None
    times: np.ndarray  # row start time in seconds
    energies: np.ndarray  # summed base-frame power per row (NaN if unknown)
    stack_size: int
    representation: str

    def __post_init__(self):
        if len(self.times) != self.matrix.shape[0] or len(self.energies) != self.matrix.shape[0]:
            raise DataError("frame metadata length must equal matrix rows")


def load_audio(path) -> AudioClip:
    """Read a WAV file to mono 16 kHz with peak |x| = 1 (silence stays zero)."""
    try:
        sr, data = wavfile.read(path)
    except Exception as exc:
        raise DataError(f"cannot read audio file {path}: {exc}") from exc
    if data.ndim > 2 or data.size == 0:
        raise DataError(f"unsupported audio layout in {path}: shape {data.shape}")
    x = data.astype(np.float64)
    if np.issubdtype(data.dtype, np.integer):
        x /= float(max(abs(np.iinfo(data.dtype).min), np.iinfo(data.dtype).max))
    if x.ndim == 2:
        x = x.mean(axis=1)
    if sr != TARGET_SR:
        g = math.gcd(int(sr), TARGET_SR)
        x = resample_poly(x, TARGET_SR // g, int(sr) // g)
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak > 0:
        x = x / peak
    return AudioClip(samples=x, sample_rate=TARGET_SR)


def stft_power(clip: AudioClip, window: int = WINDOW, hop: int = HOP) -> Spectrogram:
    """One-sided power spectrogram |DFT(hann * frame)|^2, no padding.

    Frame count is 1 + floor((N - window) / hop).
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.shape[0] < window:
        raise DataError(f"clip too short for STFT: {x.shape[0]} samples < window {window}")
    n_frames = 1 + (x.shape[0] - window) // hop
    frames = np.lib.stride_tricks.as_strided(
        x,
        shape=(n_frames, window),
        strides=(x.strides[0] * hop, x.strides[0]),
        writeable=False,
    )
    win = get_window("hann", window, fftbins=True)
    spec = np.fft.rfft(frames * win, axis=1)
    power = (spec.real**2 + spec.imag**2)
    return Spectrogram(values=power, frame_hop_seconds=hop / clip.sample_rate, bin_kind="fft")


def power_to_db(s: Spectrogram, floor: float = DB_FLOOR_POWER) -> Spectrogram:
    """10*log10(power), floored at ``floor`` (default -100 dB)."""
    if s.is_db:
        raise DataError("power_to_db input is already in dB")
    vals = 10.0 * np.log10(np.maximum(s.values, floor))
    return Spectrogram(values=vals, frame_hop_seconds=s.frame_hop_seconds, bin_kind=s.bin_kind, is_db=True)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_fft_bins: int = WINDOW // 2 + 1,
    sr: int = TARGET_SR,
    n_mels: int = 128,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> np.ndarray:
    """Triangular mel filterbank, (n_fft_bins, n_mels), area-normalized."""
    if fmax is None:
        fmax = sr / 2.0
    if n_mels < 1:
        raise ConfigError("n_mels must be >= 1")
    if fmax > sr / 2.0:
        raise ConfigError(f"fmax {fmax} exceeds Nyquist {sr / 2.0}")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bin_freqs = np.arange(n_fft_bins) * (sr / (2.0 * (n_fft_bins - 1)))
    fb = np.zeros((n_fft_bins, n_mels))
    for j in range(n_mels):
        lo, center, hi = edges[j], edges[j + 1], edges[j + 2]
        rising = (bin_freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - bin_freqs) / max(hi - center, 1e-12)
        fb[:, j] = np.maximum(0.0, np.minimum(rising, falling)) * (2.0 / (hi - lo))
    return fb


def mel_project(s: Spectrogram, n_mels: int = 128, fmin: float = 0.0, fmax: float | None = None) -> Spectrogram:
    """Project a raw one-sided power spectrogram onto mel bands (still power)."""
    if s.is_db or s.bin_kind != "fft":
        raise DataError("mel_project expects a raw one-sided FFT power spectrogram")
    fb = mel_filterbank(n_fft_bins=s.values.shape[1], n_mels=n_mels, fmin=fmin, fmax=fmax)
    return Spectrogram(values=s.values @ fb, frame_hop_seconds=s.frame_hop_seconds, bin_kind="mel")


def frame_energy(s: Spectrogram) -> np.ndarray:
    """Per-frame summed power of a raw spectrogram."""
    if s.is_db:
        raise DataError("frame_energy expects raw power, not dB")
    return s.values.sum(axis=1)


def stack_frames(
    s: Spectrogram,
    clip: ClipKey | None,
    stack_size: int,
    stride: int | None = None,
    energies: np.ndarray | None = None,
    representation: str = "log_stft",
) -> FrameSet:
    """Concatenate runs of ``stack_size`` consecutive frames into rows.

    Row i covers frames [i*stride, i*stride + stack_size); its time is the
    first member frame's start time and its energy the sum of member frame
    energies.  Default stride equals the stack size (non-overlapping).
    """
    if stack_size < 1:
        raise ConfigError("stack_size must be >= 1")
    stride = stack_size if stride is None else stride
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    vals = s.values
    n, d = vals.shape
    if energies is None:
        energies = np.full(n, np.nan)
    if n < stack_size:
        log.warning("only %d frames for stack size %d; emitting empty frame set", n, stack_size)
        return FrameSet(
            matrix=np.zeros((0, stack_size * d), dtype=np.float32),
            clip=clip,
            times=np.zeros(0),
            energies=np.zeros(0),
            stack_size=stack_size,
            representation=representation,
        )
    rows = (n - stack_size) // stride + 1
    starts = np.arange(rows) * stride
    idx = starts[:, None] + np.arange(stack_size)[None, :]
    matrix = vals[idx].reshape(rows, stack_size * d).astype(np.float32)
    row_energy = np.asarray(energies, dtype=np.float64)[idx].sum(axis=1)
    times = starts * s.frame_hop_seconds
    return FrameSet(
        matrix=matrix,
        clip=clip,
        times=times,
        energies=row_energy,
        stack_size=stack_size,
        representation=representation,
    )


def ingest_embeddings(
    sidecar_path,
    clip: ClipKey,
    expected_dim: int = 512,
    expected_hop_seconds: float = 0.1,
) -> FrameSet:
    """Load precomputed per-frame embeddings from a frame-matrix cache file.

    The sidecar must carry ``hop_seconds`` metadata and match the configured
    dimension; an optional ``energy`` metadata column is passed through.
    """
    matrix, meta = cache.read_cache(sidecar_path)
    if matrix.shape[0] == 0:
        log.warning("empty embedding sidecar %s", sidecar_path)
        return FrameSet(
            matrix=np.zeros((0, expected_dim), dtype=np.float32),
            clip=clip,
            times=np.zeros(0),
            energies=np.zeros(0),
            stack_size=1,
            representation="embedding",
        )
    if matrix.shape[1] != expected_dim:
        raise DataError(
            f"{sidecar_path}: embedding dimension {matrix.shape[1]} != configured {expected_dim}"
        )
    hop = meta.get("hop_seconds")
    if hop is None or abs(float(hop) - expected_hop_seconds) > 1e-9:
        raise DataError(
            f"{sidecar_path}: hop_seconds {hop!r} != configured {expected_hop_seconds}"
        )
    n = matrix.shape[0]
    energies = meta.get("energy")
    energies = np.asarray(energies, dtype=np.float64) if energies is not None else np.full(n, np.nan)
    if energies.shape[0] != n:
        raise DataError(f"{sidecar_path}: energy metadata length {energies.shape[0]} != rows {n}")
    return FrameSet(
        matrix=matrix,
        clip=clip,
        times=np.arange(n) * float(hop),
        energies=energies,
        stack_size=1,
        representation="embedding",
    )


@dataclass
class FeatureParams:
    window: int = WINDOW
    hop: int = HOP
    n_mels: int = 128
    db_floor_power: float = DB_FLOOR_POWER
    embedding_dim: int = 512
    embedding_hop_seconds: float = 0.1


def clip_base_frames(path, params: FeatureParams | None = None) -> dict[str, Spectrogram | np.ndarray]:
    """Full per-clip base pipeline: load, STFT, energies, log-STFT, log-mel."""
    params = params or FeatureParams()
    clip = load_audio(path)
    power = stft_power(clip, window=params.window, hop=params.hop)
    energy = frame_energy(power)
    log_stft = power_to_db(power, floor=params.db_floor_power)
    log_mel = power_to_db(mel_project(power, n_mels=params.n_mels), floor=params.db_floor_power)
    return {"energy": energy, "log_stft": log_stft, "log_mel": log_mel}
