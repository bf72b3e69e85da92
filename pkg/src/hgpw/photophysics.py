"""Stochastic photon records from an incoherently driven two-level emitter.

Excitation waits are Exponential(S_eff/tau), decay waits Exponential(1/tau),
so the steady state emission rate is (1/tau) S/(1+S) and the intensity
correlation is 1 - exp(-(1+S)|t|/tau).

Simulation works on detected photons directly: each emission is detected on
channel c with probability q * p_branch(c) * eta_c. Thinning a renewal process
with a geometric number N of skipped cycles gives inter-detection times
Gamma(N, tau/S_eff) + Gamma(N, tau), which is exact and vectorises.

Timestamps are integer picoseconds. Time is split into fixed-length blocks
(BLOCK_S seconds), each seeded from (seed, task, block) so the output does not
depend on how blocks are distributed across workers. The emitter restarts in
the ground state at each block boundary.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

BLOCK_S = 1.0
PS = 1e-12

SIGNAL, BACKGROUND, DARK = 0, 1, 2
ORIGINS = ("signal", "background", "dark")

# task ids for counter-based seeding
TASK_CW, TASK_PULSED, TASK_POLARIZATION, TASK_POISSON = 1, 2, 3, 4


@dataclass(frozen=True)
class EmitterConfig:
    lifetime_ns: float = 2.74
    i_sat: float = 90.0  # kW/cm^2
    dipole_angle_deg: float = 0.0
    branching: dict = field(default_factory=lambda: {"wg_left": 0.0, "wg_right": 0.0, "free": 1.0})
    quantum_yield: float = 1.0

    def __post_init__(self):
        if not self.lifetime_ns > 0:
            raise ValueError("lifetime must be > 0")
        if not self.i_sat > 0:
            raise ValueError("saturation intensity must be > 0")
        if not 0 <= self.quantum_yield <= 1:
            raise ValueError("quantum yield must be in [0, 1]")
        p = np.array(list(self.branching.values()), float)
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError("branching probabilities must be >= 0 and sum to 1")

    def s_eff(self, intensity, angle_deg=None):
        s = intensity / self.i_sat
        if angle_deg is None:
            return s
        return s * np.cos(np.deg2rad(angle_deg - self.dipole_angle_deg)) ** 2


@dataclass(frozen=True)
class Channel:
    branch: str = "free"     # emission branch feeding this detector
    efficiency: float = 1.0  # everything between the branch and a click

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise ValueError("channel efficiency must be in [0, 1]")


@dataclass(frozen=True)
class DetectionChain:
    """Detectors, numbered 1..n in the output (channel 0 is reserved for sync)."""

    channels: tuple = (Channel(),)
    dark_rate: float = 0.0        # counts/s per channel
    background_rate: float = 0.0  # counts/s per channel at S = 1, linear in intensity
    jitter_ps: float = 0.0
    dead_time_ns: float = 0.0

    def __post_init__(self):
        if min(self.dark_rate, self.background_rate) < 0:
            raise ValueError("rates must be >= 0")
        if self.jitter_ps < 0 or self.dead_time_ns < 0:
            raise ValueError("jitter and dead time must be >= 0")

    def detect_probabilities(self, emitter: EmitterConfig):
        return np.array([emitter.quantum_yield * emitter.branching.get(c.branch, 0.0) * c.efficiency
                         for c in self.channels])


@dataclass(frozen=True, eq=False)
class PhotonStream:
    """Time-ordered detections on one channel."""

    channel: int
    timestamps: np.ndarray  # int64 ps, non-decreasing
    origin: np.ndarray | None = None  # uint8 codes into ORIGINS

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=np.int64)
        object.__setattr__(self, "timestamps", t)
        if t.size and (t[0] < 0 or np.any(np.diff(t) < 0)):
            raise ValueError(f"channel {self.channel}: timestamps must be non-negative and sorted")

    def __len__(self):
        return self.timestamps.size

    def rate(self, duration_s):
        return self.timestamps.size / duration_s


def rng_for(seed, task, block=0):
    """Counter-based generator: one independent stream per (master seed, task, block)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(task, block))))


def _renewal_times(rng, s_eff, tau_s, p_detect, t_end):
    """Detection times in [0, t_end) of the thinned two-level renewal process (seconds)."""
    if s_eff <= 0 or p_detect <= 0:
        return np.empty(0)
    k_exc = s_eff / tau_s
    mean_gap = (1 / k_exc + tau_s) / p_detect
    out, t0 = [], 0.0
    while True:
        n = int(1.2 * (t_end - t0) / mean_gap) + 64
        skips = rng.geometric(p_detect, n) if p_detect < 1 else np.ones(n, np.int64)
        gaps = rng.gamma(skips, 1 / k_exc) + rng.gamma(skips, tau_s)
        t = t0 + np.cumsum(gaps)
        if t[-1] >= t_end:
            out.append(t[t < t_end])
            break
        out.append(t)
        t0 = t[-1]
    return np.concatenate(out)


def _poisson_times(rng, rate, t_end):
    n = rng.poisson(rate * t_end) if rate > 0 else 0
    return rng.uniform(0.0, t_end, n)


def _finish_channel(rng, chain: DetectionChain, times_s, origins, t_start_ps, t_end_ps):
    if chain.jitter_ps > 0:
        times_s = times_s + rng.normal(0.0, chain.jitter_ps * PS, times_s.size)
    t = np.rint(times_s / PS).astype(np.int64) + t_start_ps
    keep = (t >= t_start_ps) & (t < t_end_ps)
    t, origins = t[keep], origins[keep]
    order = np.argsort(t, kind="stable")
    return t[order], origins[order]


def apply_dead_time(t, origins, dead_ps):
    """Non-paralyzable dead time on a sorted stream."""
    if dead_ps <= 0 or t.size == 0:
        return t, origins
    keep = np.zeros(t.size, bool)
    last = -np.inf
    for i, ti in enumerate(t.tolist()):
        if ti - last >= dead_ps:
            keep[i] = True
            last = ti
    return t[keep], origins[keep]


def _cw_block(emitter, chain, s_eff, bg_scale, seed, task, block, t_start_s, t_len_s):
    rng = rng_for(seed, task, block)
    tau = emitter.lifetime_ns * 1e-9
    probs = chain.detect_probabilities(emitter)
    p_tot = float(probs.sum())
    sig = _renewal_times(rng, s_eff, tau, min(p_tot, 1.0), t_len_s)
    which = (rng.choice(len(probs), sig.size, p=probs / p_tot) if sig.size
             else np.empty(0, np.int64))
    t0_ps, t1_ps = int(round(t_start_s / PS)), int(round((t_start_s + t_len_s) / PS))
    per_channel = []
    for c in range(len(chain.channels)):
        s = sig[which == c]
        b = _poisson_times(rng, chain.background_rate * bg_scale, t_len_s)
        d = _poisson_times(rng, chain.dark_rate, t_len_s)
        times = np.concatenate([s, b, d])
        origins = np.concatenate([np.full(s.size, SIGNAL), np.full(b.size, BACKGROUND),
                                  np.full(d.size, DARK)]).astype(np.uint8)
        per_channel.append(_finish_channel(rng, chain, times, origins, t0_ps, t1_ps))
    return per_channel


def _merge_blocks(chain, blocks, first_channel=1):
    streams = []
    for c in range(len(chain.channels)):
        t = np.concatenate([b[c][0] for b in blocks]) if blocks else np.empty(0, np.int64)
        o = np.concatenate([b[c][1] for b in blocks]) if blocks else np.empty(0, np.uint8)
        order = np.argsort(t, kind="stable")
        t, o = apply_dead_time(t[order], o[order], chain.dead_time_ns * 1000)
        streams.append(PhotonStream(first_channel + c, t, o))
    return streams


def _blocks(duration_s):
    n = int(np.ceil(duration_s / BLOCK_S - 1e-12))
    return [(k, k * BLOCK_S, min(BLOCK_S, duration_s - k * BLOCK_S)) for k in range(n)]


def _run(fn, jobs, workers):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda a: fn(*a), jobs))
    return [fn(*a) for a in jobs]


def simulate_cw(emitter: EmitterConfig, chain: DetectionChain, intensity, angle_deg, duration_s,
                seed, workers=1, task=TASK_CW):
    """Per-channel photon streams under cw excitation at ``intensity`` (kW/cm^2).

    ``angle_deg`` is the excitation polarisation; None means aligned with the dipole.
    """
    if not duration_s > 0:
        raise ValueError("duration must be > 0")
    if intensity < 0:
        raise ValueError("intensity must be >= 0")
    s_eff = float(emitter.s_eff(intensity, angle_deg))
    bg_scale = intensity / emitter.i_sat
    jobs = [(emitter, chain, s_eff, bg_scale, seed, task, k, t0, dt) for k, t0, dt in _blocks(duration_s)]
    return _merge_blocks(chain, _run(_cw_block, jobs, workers))


def expected_signal_rate(emitter: EmitterConfig, chain: DetectionChain, intensity, angle_deg=None):
    """Mean detected signal rate per channel (counts/s)."""
    s = emitter.s_eff(intensity, angle_deg)
    return chain.detect_probabilities(emitter) / (emitter.lifetime_ns * 1e-9) * s / (1 + s)


def _pulsed_block(emitter, chain, p_exc, rep_ps, seed, task, block, first_pulse, n_pulses):
    rng = rng_for(seed, task, block)
    probs = chain.detect_probabilities(emitter) * p_exc
    p_tot = float(probs.sum())
    t0_ps = first_pulse * rep_ps
    t_len_s = n_pulses * rep_ps * PS
    if p_tot > 0:
        # Bernoulli trials per pulse via geometric gaps between successes
        n_est = int(1.2 * n_pulses * p_tot) + 64
        idx = np.cumsum(rng.geometric(p_tot, n_est)) - 1
        while idx[-1] < n_pulses:
            more = idx[-1] + np.cumsum(rng.geometric(p_tot, n_est))
            idx = np.concatenate([idx, more])
        idx = idx[idx < n_pulses]
    else:
        idx = np.empty(0, np.int64)
    delay = rng.exponential(emitter.lifetime_ns * 1e-9, idx.size)
    sig = idx * (rep_ps * PS) + delay
    which = rng.choice(len(probs), idx.size, p=probs / p_tot) if idx.size else idx
    out = []
    for c in range(len(chain.channels)):
        s = sig[which == c]
        d = _poisson_times(rng, chain.dark_rate, t_len_s)
        times = np.concatenate([s, d])
        origins = np.concatenate([np.full(s.size, SIGNAL), np.full(d.size, DARK)]).astype(np.uint8)
        out.append(_finish_channel(rng, chain, times, origins, t0_ps, t0_ps + n_pulses * rep_ps))
    return out


PULSE_BLOCK = 2_000_000


def simulate_pulsed(emitter: EmitterConfig, chain: DetectionChain, rep_period_ns, excitation_prob,
                    n_pulses, seed, workers=1, task=TASK_PULSED):
    """Pulsed excitation; returns [sync stream (channel 0), detector streams (1..n)].

    At most one emission per pulse (re-excitation within a period is neglected).
    """
    if not rep_period_ns > 0:
        raise ValueError("repetition period must be > 0")
    if not 0 <= excitation_prob <= 1:
        raise ValueError("excitation probability must be in [0, 1]")
    if rep_period_ns < 5 * emitter.lifetime_ns:
        warnings.warn("repetition period shorter than 5 lifetimes; decays will spill over pulses")
    rep_ps = int(round(rep_period_ns * 1000))
    jobs = [(emitter, chain, excitation_prob, rep_ps, seed, task, k, start, min(PULSE_BLOCK, n_pulses - start))
            for k, start in enumerate(range(0, n_pulses, PULSE_BLOCK))]
    streams = _merge_blocks(chain, _run(_pulsed_block, jobs, workers))
    sync = PhotonStream(0, np.arange(n_pulses, dtype=np.int64) * rep_ps)
    return [sync] + streams


def polarization_scan(emitter: EmitterConfig, chain: DetectionChain, intensity, angles_deg, dwell_s,
                      seed, channel=0):
    """Detected rate on ``channel`` (index into chain.channels) at each excitation angle."""
    angles = list(angles_deg)
    if not angles:
        raise ValueError("empty angle list")
    if len(angles) < 4:
        raise ValueError("polarization scan needs >= 4 angles")
    out = []
    for k, theta in enumerate(angles):
        streams = simulate_cw(emitter, chain, intensity, theta, dwell_s, seed,
                              task=TASK_POLARIZATION * 1000 + k)
        out.append((float(theta), len(streams[channel]) / dwell_s))
    return out


def saturation_scan(emitter: EmitterConfig, chain: DetectionChain, intensities, dwell_s, seed,
                    channel=0, task=TASK_CW):
    """Detected rate on ``channel`` at each intensity (dipole-aligned excitation)."""
    out = []
    for k, inten in enumerate(intensities):
        streams = simulate_cw(emitter, chain, inten, None, dwell_s, seed, task=task * 1000 + k)
        out.append((float(inten), len(streams[channel]) / dwell_s))
    return out


def poisson_streams(rates, duration_s, seed):
    """Independent Poisson streams (channels 1..n) for null tests."""
    rng = rng_for(seed, TASK_POISSON)
    t_end = int(round(duration_s / PS))
    out = []
    for c, r in enumerate(rates, start=1):
        n = rng.poisson(r * duration_s)
        out.append(PhotonStream(c, np.sort(rng.integers(0, t_end, n))))
    return out


def analytic_g2(t_ns, s, tau_ns, rho=1.0):
    """g2(t) = 1 - rho^2 exp(-(1+S)|t|/tau) for signal fraction rho (uncorrelated background)."""
    if s < 0 or not 0 <= rho <= 1:
        raise ValueError("need S >= 0 and rho in [0, 1]")
    return 1.0 - rho**2 * np.exp(-(1.0 + s) * np.abs(np.asarray(t_ns, float)) / tau_ns)
