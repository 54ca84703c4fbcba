"""Geometric multipath channel: realization sampling and cascade assembly.

Every link is a far-field plane-wave response.  The surface element
positions U enter only through per-path phase factors; the random part of
a realization (angles, complex path gains, user placement) is sampled once
and frozen.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig
from .rng import RandomStream

TRANSMISSION = "t"
REFLECTION = "r"


@dataclass(frozen=True)
class ChannelRealization:
    """Sampled path angles and gains for one quasi-static fading block."""

    bs_theta: np.ndarray          # (L,) elevation AoD at the BS
    bs_phi: np.ndarray            # (L,) azimuth AoD at the BS
    inc_theta: np.ndarray         # (L,) elevation AoA at the surface
    inc_phi: np.ndarray           # (L,) azimuth AoA at the surface
    user_theta: np.ndarray        # (J, L) elevation AoD surface -> user
    user_phi: np.ndarray          # (J, L) azimuth AoD surface -> user
    bs_path_gains: np.ndarray     # (L,) diagonal of the BS-link response
    user_path_gains: np.ndarray   # (J, L) per-user path-gain rows
    user_side: tuple              # per-user 't' / 'r'
    beta_bs: float                # expected BS-surface power gain
    beta_users: np.ndarray        # (J,) expected surface-user power gains
    user_positions: np.ndarray    # (J, 3) meters, audit only

    @property
    def num_users(self) -> int:
        return self.user_theta.shape[0]

    @property
    def num_paths(self) -> int:
        return self.bs_theta.shape[0]

    def side_users(self, side: str) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.user_side) == side)


@dataclass
class ElementPositions:
    """Movable-element coordinates and their unconstrained preimage."""

    u: np.ndarray        # (2, N) meters, inside [-A/2, A/2]^2
    u_tilde: np.ndarray  # (2, N) preimage under U = (A/2) tanh(U~)


def positions_from_tilde(u_tilde: np.ndarray, region_side: float) -> np.ndarray:
    return (region_side / 2.0) * np.tanh(u_tilde)


def tilde_from_positions(u: np.ndarray, region_side: float) -> np.ndarray:
    scaled = np.clip(2.0 * u / region_side, -1 + 1e-12, 1 - 1e-12)
    return np.arctanh(scaled)


def min_pairwise_distance(u: np.ndarray) -> float:
    n = u.shape[1]
    if n < 2:
        return np.inf
    diff = u[:, :, None] - u[:, None, :]
    d = np.sqrt((diff ** 2).sum(axis=0))
    return float(d[np.triu_indices(n, k=1)].min())


def bs_antenna_positions(cfg: SystemConfig) -> np.ndarray:
    """Half-wavelength uniform linear array along the BS x axis, centered."""
    m = cfg.num_bs_antennas
    x = (np.arange(m) - (m - 1) / 2.0) * cfg.wavelength / 2.0
    return np.vstack([x, np.zeros(m)])


def build_frm(positions: np.ndarray, theta: np.ndarray, phi: np.ndarray,
              wavelength: float) -> np.ndarray:
    """Field-response matrix, one column per position, one row per path.

    Entry (o, k) = exp(j 2pi/lambda * rho_o) with
    rho_o = x_k cos(theta_o) sin(phi_o) + y_k sin(theta_o).
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 2 or positions.shape[0] != 2:
        raise ValueError("positions must be a 2 x K matrix")
    cx = np.cos(theta) * np.sin(phi)          # (L,)
    sy = np.sin(theta)                        # (L,)
    rho = np.outer(cx, positions[0]) + np.outer(sy, positions[1])
    return np.exp(2j * np.pi / wavelength * rho)


def sample_realization(cfg: SystemConfig, seed: int) -> ChannelRealization:
    """Draw one seeded realization per the stated experimental procedure.

    Users land uniformly in the square region; the path angles themselves
    are uniform in [-pi/2, pi/2], so user placement only sets path losses.
    Users alternate between the transmission and reflection sides, with
    transmission-side draws mirrored across the surface plane (y -> -y) to
    keep the distance distribution identical on both sides.
    """
    stream = RandomStream(seed, stream_id=0)
    L, J = cfg.num_paths, cfg.num_users

    bs_theta = stream.uniform(-np.pi / 2, np.pi / 2, size=L)
    bs_phi = stream.uniform(-np.pi / 2, np.pi / 2, size=L)
    inc_theta = stream.uniform(-np.pi / 2, np.pi / 2, size=L)
    inc_phi = stream.uniform(-np.pi / 2, np.pi / 2, size=L)
    user_theta = stream.uniform(-np.pi / 2, np.pi / 2, size=(J, L))
    user_phi = stream.uniform(-np.pi / 2, np.pi / 2, size=(J, L))

    cx, cy, cz = cfg.user_region_center
    half = cfg.user_region_edge / 2.0
    ux = stream.uniform(cx - half, cx + half, size=J)
    uz = stream.uniform(cz - half, cz + half, size=J)
    uy = np.full(J, cy)
    sides = []
    for j in range(J):
        if j % 2 == 0:
            sides.append(TRANSMISSION)
            uy[j] = -uy[j]
        else:
            sides.append(REFLECTION)
    user_positions = np.stack([ux, uy, uz], axis=1)

    d_bs = float(np.linalg.norm(cfg.bs_position))
    d_users = np.linalg.norm(user_positions, axis=1)
    beta_bs = cfg.ref_gain * d_bs ** (-cfg.pathloss_exponent)
    beta_users = cfg.ref_gain * d_users ** (-cfg.pathloss_exponent)

    bs_gains = stream.complex_normal(beta_bs / L, size=L)
    user_gains = np.empty((J, L), dtype=complex)
    for j in range(J):
        user_gains[j] = stream.complex_normal(beta_users[j] / L, size=L)

    return ChannelRealization(
        bs_theta=bs_theta, bs_phi=bs_phi,
        inc_theta=inc_theta, inc_phi=inc_phi,
        user_theta=user_theta, user_phi=user_phi,
        bs_path_gains=bs_gains, user_path_gains=user_gains,
        user_side=tuple(sides), beta_bs=beta_bs, beta_users=beta_users,
        user_positions=user_positions,
    )


@dataclass
class CascadeBundle:
    """All deterministic channel responses for one (realization, U) pair."""

    cfg: SystemConfig
    realization: ChannelRealization
    u: np.ndarray          # (2, N)
    e_bs: np.ndarray       # (L, M) BS field-response matrix
    f_in: np.ndarray       # (L, N) incident-channel FRM
    f_users: np.ndarray    # (J, L, N) per-user departure FRMs
    h: np.ndarray          # (N, M) BS-surface response
    g: np.ndarray          # (J, N) surface-user responses
    v: np.ndarray          # (J, N, M) cascaded responses diag(g_j) H

    def effective_channel(self, j: int, q: np.ndarray) -> np.ndarray:
        """Row q^H V_j, the user's effective MISO channel (1 x M)."""
        return (np.conj(q) * self.g[j]) @ self.h


def assemble_cascade(cfg: SystemConfig, realization: ChannelRealization,
                     u: np.ndarray) -> CascadeBundle:
    lam = cfg.wavelength
    e_bs = build_frm(bs_antenna_positions(cfg), realization.bs_theta,
                     realization.bs_phi, lam)
    f_in = build_frm(u, realization.inc_theta, realization.inc_phi, lam)
    # (J, L, N) in one shot: rho = zeta-like projections per user path.
    cx = np.cos(realization.user_theta) * np.sin(realization.user_phi)  # (J,L)
    sy = np.sin(realization.user_theta)                                 # (J,L)
    rho = cx[:, :, None] * u[0][None, None, :] + sy[:, :, None] * u[1][None, None, :]
    f_users = np.exp(2j * np.pi / lam * rho)

    h = f_in.conj().T @ (realization.bs_path_gains[:, None] * e_bs)
    g = np.einsum("jl,jln->jn", realization.user_path_gains, f_users)
    v = g[:, :, None] * h[None, :, :]
    return CascadeBundle(cfg=cfg, realization=realization, u=u.copy(),
                         e_bs=e_bs, f_in=f_in, f_users=f_users,
                         h=h, g=g, v=v)


# --- realization audit dump/restore (plain text, one complex per line) ---

def dump_realization(real: ChannelRealization) -> str:
    buf = io.StringIO()
    buf.write("#angles\n")
    for arr in (real.bs_theta, real.bs_phi, real.inc_theta, real.inc_phi,
                real.user_theta.ravel(), real.user_phi.ravel()):
        for x in arr:
            buf.write(f"{float(x)!r} 0.0\n")
    buf.write("#gains\n")
    for z in np.concatenate([real.bs_path_gains, real.user_path_gains.ravel()]):
        buf.write(f"{float(z.real)!r} {float(z.imag)!r}\n")
    buf.write("#meta\n")
    buf.write(" ".join(real.user_side) + "\n")
    buf.write(f"{float(real.beta_bs)!r}\n")
    buf.write(" ".join(repr(float(b)) for b in real.beta_users) + "\n")
    for p in real.user_positions:
        buf.write(" ".join(repr(float(c)) for c in p) + "\n")
    return buf.getvalue()


def load_realization(text: str) -> ChannelRealization:
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            current = line[1:]
            sections[current] = []
        else:
            sections[current].append(line)

    angles = np.array([float(l.split()[0]) for l in sections["angles"]])
    gains = np.array([complex(float(a), float(b))
                      for a, b in (l.split() for l in sections["gains"])])
    meta = sections["meta"]
    sides = tuple(meta[0].split())
    beta_bs = float(meta[1])
    beta_users = np.array([float(x) for x in meta[2].split()])
    J = len(sides)
    positions = np.array([[float(x) for x in row.split()] for row in meta[3:3 + J]])
    L = (len(angles) - 0) // (4 + 2 * J)

    k = 0
    def take(n):
        nonlocal k
        out = angles[k:k + n]
        k += n
        return out

    bs_theta, bs_phi = take(L), take(L)
    inc_theta, inc_phi = take(L), take(L)
    user_theta = take(J * L).reshape(J, L)
    user_phi = take(J * L).reshape(J, L)
    return ChannelRealization(
        bs_theta=bs_theta, bs_phi=bs_phi, inc_theta=inc_theta, inc_phi=inc_phi,
        user_theta=user_theta, user_phi=user_phi,
        bs_path_gains=gains[:L], user_path_gains=gains[L:].reshape(J, L),
        user_side=sides, beta_bs=beta_bs, beta_users=beta_users,
        user_positions=positions,
    )
