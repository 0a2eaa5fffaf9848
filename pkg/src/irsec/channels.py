"""Geometry sampling and Ricean channel generation with bounded CSI errors.

All IRS-side links are drawn with the LoS parameter set; the eavesdropper
channel estimates carry a Frobenius-ball uncertainty with radius
eps_j = kappa_j * ||H_bar_j||_F. Channel sets are noise-normalized on
construction (see ``normalize_channel_set``): receiver noise becomes 1 and the
AP-IRS link is rescaled to O(1) entries, which leaves every SINR, leakage and
kappa unchanged but keeps the conic solver well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import ConfigError, RiceanParams, SystemConfig

# spawn-key tags for the per-entity random substreams
_TAG_GEOMETRY = 0
_TAG_AP_IRS = 1
_TAG_IRS_USER = 2
_TAG_IRS_EVE = 3
_TAG_DIRECT_USER = 4
_TAG_DIRECT_EVE = 5


def child_rng(seed_seq: np.random.SeedSequence, *key: int) -> np.random.Generator:
    """Deterministic, addressable substream of a seed tree.

    Children are keyed by ``spawn_key`` so that e.g. the AP-IRS draw of IRS l
    does not depend on how many other entities were sampled before it.
    """
    child = np.random.SeedSequence(
        entropy=seed_seq.entropy, spawn_key=tuple(seed_seq.spawn_key) + key
    )
    return np.random.default_rng(child)


def as_seed_seq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


@dataclass(frozen=True)
class Geometry:
    """2-D placement of AP (origin), IRSs, users and eavesdroppers, metres."""

    cell_radius: float
    ap: np.ndarray
    irs: np.ndarray    # (L, 2)
    users: np.ndarray  # (K, 2)
    eves: np.ndarray   # (J, 2)

    def __post_init__(self):
        for name in ("irs", "users", "eves"):
            pts = getattr(self, name)
            if pts.size and np.max(np.linalg.norm(pts - self.ap, axis=1)) > self.cell_radius + 1e-9:
                raise ConfigError(f"{name} positions exceed the cell radius")


def irs_positions(config: SystemConfig) -> np.ndarray:
    """Fixed IRS sites: distances d_l along the East-West axis, alternating."""
    pos = np.zeros((config.n_irs, 2))
    for l, d in enumerate(config.irs_distances):
        pos[l, 0] = d if l % 2 == 0 else -d
    return pos


def _uniform_disk(radius: float, n: int, rng: np.random.Generator) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(size=n))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def sample_geometry(config: SystemConfig, rng: np.random.Generator) -> Geometry:
    """Users and eavesdroppers uniform in the cell disk; IRS sites fixed."""
    if config.cell_radius <= 0:
        raise ConfigError("cell radius must be positive")
    irs = irs_positions(config)
    anchors = np.vstack([np.zeros((1, 2)), irs])

    def draw(n: int) -> np.ndarray:
        pts = _uniform_disk(config.cell_radius, n, rng)
        # degenerate co-located draws would give zero link distance
        for i in range(n):
            while np.min(np.linalg.norm(anchors - pts[i], axis=1)) < 1e-6:
                pts[i] = _uniform_disk(config.cell_radius, 1, rng)[0]
        return pts

    return Geometry(
        cell_radius=config.cell_radius,
        ap=np.zeros(2),
        irs=irs,
        users=draw(config.k_users),
        eves=draw(config.j_eves),
    )


def ula_response(n: int, angle: float) -> np.ndarray:
    """Half-wavelength uniform linear array response at bearing ``angle``."""
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle))


def bearing(src: np.ndarray, dst: np.ndarray) -> float:
    d = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    return float(np.arctan2(d[1], d[0]))


def ricean_channel(
    rows: int,
    cols: int,
    distance: float,
    params: RiceanParams,
    los: bool,
    rx_angle: float,
    tx_angle: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw one rows x cols Ricean-faded channel matrix.

    The LoS component is the outer product of the ULA responses at the two
    ends; the NLoS component has i.i.d. CN(0,1) entries. The large-scale gain
    is l0 * d^-alpha with the LoS/NLoS parameter pair selected by ``los``.
    """
    if distance <= 0:
        raise ConfigError("link distance must be positive")
    alpha = params.alpha_los if los else params.alpha_nlos
    beta = params.beta_los if los else params.beta_nlos
    gain = np.sqrt(params.l0 * distance ** (-alpha))
    a_los = np.outer(ula_response(rows, rx_angle), ula_response(cols, tx_angle).conj())
    a_nlos = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)
    return gain * (np.sqrt(beta / (1.0 + beta)) * a_los + np.sqrt(1.0 / (1.0 + beta)) * a_nlos)


@dataclass(frozen=True)
class ChannelSet:
    """One realized set of channels, immutable per Monte-Carlo trial.

    ``G`` stacks the per-IRS AP-side blocks row-wise (M x N_t); ``h`` holds the
    IRS-user vectors (K x M); ``h_bar`` the estimated IRS-eavesdropper matrices
    (J x N_r x M) with Frobenius uncertainty radii ``eps``. After
    normalization the noise variances are exactly 1.
    """

    g: np.ndarray
    h: np.ndarray
    h_bar: np.ndarray
    eps: np.ndarray
    sigma2_l: np.ndarray
    sigma2_e: np.ndarray
    irs_sizes: tuple[int, ...]

    def __post_init__(self):
        m, n_t = self.g.shape
        if sum(self.irs_sizes) != m:
            raise ConfigError("irs_sizes must sum to the row count of G")
        if self.h.shape[1] != m or (self.h_bar.size and self.h_bar.shape[2] != m):
            raise ConfigError("channel dimensions are inconsistent")
        if np.any(self.eps < 0):
            raise ConfigError("uncertainty radii must be nonnegative")

    @property
    def n_t(self) -> int:
        return self.g.shape[1]

    @property
    def m_total(self) -> int:
        return self.g.shape[0]

    @property
    def k_users(self) -> int:
        return self.h.shape[0]

    @property
    def j_eves(self) -> int:
        return self.h_bar.shape[0]

    @property
    def n_r(self) -> int:
        return self.h_bar.shape[1] if self.h_bar.size else 0


def normalize_channel_set(channels: ChannelSet, g_scale: float) -> ChannelSet:
    """Rescale to unit noise and O(1) AP-IRS entries, preserving all rates.

    G is divided by ``g_scale`` while each receiver-side channel (and its
    uncertainty radius) is multiplied by g_scale / sigma, so the cascaded
    products h^H Phi G / sigma_l and H_j Phi G / sigma_e are unchanged.
    """
    sig_l = np.sqrt(channels.sigma2_l)
    sig_e = np.sqrt(channels.sigma2_e)
    return replace(
        channels,
        g=channels.g / g_scale,
        h=channels.h * (g_scale / sig_l)[:, None],
        h_bar=channels.h_bar * (g_scale / sig_e)[:, None, None]
        if channels.h_bar.size
        else channels.h_bar,
        eps=channels.eps * (g_scale / sig_e) if channels.eps.size else channels.eps,
        sigma2_l=np.ones_like(channels.sigma2_l),
        sigma2_e=np.ones_like(channels.sigma2_e),
    )


def build_channel_set(
    config: SystemConfig,
    geometry: Geometry,
    seed,
    normalize: bool = True,
) -> ChannelSet:
    """Draw all links for one trial from an addressable seed tree.

    Every (link kind, entity index) pair owns an independent substream, so
    regenerating with one IRS removed reproduces the remaining blocks exactly.
    """
    ss = as_seed_seq(seed)
    p = config.fading
    sizes = config.irs_sizes

    g_blocks = []
    for l in range(config.n_irs):
        d = float(np.linalg.norm(geometry.irs[l] - geometry.ap))
        g_blocks.append(
            ricean_channel(
                sizes[l], config.n_t, d, p, los=True,
                rx_angle=bearing(geometry.irs[l], geometry.ap),
                tx_angle=bearing(geometry.ap, geometry.irs[l]),
                rng=child_rng(ss, _TAG_AP_IRS, l),
            )
        )
    g = np.vstack(g_blocks)

    h = np.zeros((config.k_users, config.m_total), dtype=complex)
    for k in range(config.k_users):
        row = []
        for l in range(config.n_irs):
            d = float(np.linalg.norm(geometry.users[k] - geometry.irs[l]))
            row.append(
                ricean_channel(
                    sizes[l], 1, d, p, los=True,
                    rx_angle=bearing(geometry.irs[l], geometry.users[k]),
                    tx_angle=0.0,
                    rng=child_rng(ss, _TAG_IRS_USER, k, l),
                ).ravel()
            )
        h[k] = np.concatenate(row)

    h_bar = np.zeros((config.j_eves, config.n_r, config.m_total), dtype=complex)
    for j in range(config.j_eves):
        blocks = []
        for l in range(config.n_irs):
            d = float(np.linalg.norm(geometry.eves[j] - geometry.irs[l]))
            blocks.append(
                ricean_channel(
                    config.n_r, sizes[l], d, p, los=True,
                    rx_angle=bearing(geometry.eves[j], geometry.irs[l]),
                    tx_angle=bearing(geometry.irs[l], geometry.eves[j]),
                    rng=child_rng(ss, _TAG_IRS_EVE, j, l),
                )
            )
        h_bar[j] = np.hstack(blocks)

    kappa = config.kappa_vector()
    eps = kappa * np.array([np.linalg.norm(h_bar[j]) for j in range(config.j_eves)])

    sigma2 = config.noise_watts
    channels = ChannelSet(
        g=g,
        h=h,
        h_bar=h_bar,
        eps=eps,
        sigma2_l=np.full(config.k_users, sigma2),
        sigma2_e=np.full(config.j_eves, sigma2),
        irs_sizes=sizes,
    )
    if not normalize:
        return channels
    g_scale = np.sqrt(p.l0 * config.irs_distances[0] ** (-p.alpha_los))
    return normalize_channel_set(channels, g_scale)


def build_direct_channel_set(config: SystemConfig, geometry: Geometry, seed) -> ChannelSet:
    """Direct AP-user/AP-eavesdropper channels for the no-IRS baseline.

    Users are blocked (NLoS draw); eavesdroppers keep LoS conditions. The set
    is expressed in the same ChannelSet form with G = I so the beamforming
    machinery applies unchanged with the IRS dimension replaced by N_t.
    """
    ss = as_seed_seq(seed)
    p = config.fading

    h = np.zeros((config.k_users, config.n_t), dtype=complex)
    for k in range(config.k_users):
        d = float(np.linalg.norm(geometry.users[k] - geometry.ap))
        h[k] = ricean_channel(
            config.n_t, 1, d, p, los=False,
            rx_angle=bearing(geometry.ap, geometry.users[k]),
            tx_angle=0.0,
            rng=child_rng(ss, _TAG_DIRECT_USER, k),
        ).ravel()

    h_bar = np.zeros((config.j_eves, config.n_r, config.n_t), dtype=complex)
    for j in range(config.j_eves):
        d = float(np.linalg.norm(geometry.eves[j] - geometry.ap))
        h_bar[j] = ricean_channel(
            config.n_r, config.n_t, d, p, los=True,
            rx_angle=bearing(geometry.eves[j], geometry.ap),
            tx_angle=bearing(geometry.ap, geometry.eves[j]),
            rng=child_rng(ss, _TAG_DIRECT_EVE, j),
        )

    kappa = config.kappa_vector()
    eps = kappa * np.array([np.linalg.norm(h_bar[j]) for j in range(config.j_eves)])
    sigma2 = config.noise_watts
    channels = ChannelSet(
        g=np.eye(config.n_t, dtype=complex),
        h=h,
        h_bar=h_bar,
        eps=eps,
        sigma2_l=np.full(config.k_users, sigma2),
        sigma2_e=np.full(config.j_eves, sigma2),
        irs_sizes=(config.n_t,),
    )
    # balance the direct system too: G = s I absorbs the (strong, LoS)
    # eavesdropper scale so the LMI data stays O(1); products are invariant
    sigma = np.sqrt(sigma2)
    if config.j_eves:
        amp = max(
            np.linalg.norm(h_bar[j] / sigma) / np.sqrt(config.n_r * config.n_t)
            for j in range(config.j_eves)
        )
        s_eve = max(float(amp), 1.0)
    else:
        s_eve = 1.0
    return normalize_channel_set(channels, 1.0 / s_eve)


def sample_uncertainty(
    h_bar: np.ndarray,
    eps: float,
    rng: np.random.Generator,
    boundary: bool = False,
) -> np.ndarray:
    """Draw Delta-H with ||Delta-H||_F <= eps (volume-uniform in the ball).

    ``boundary=True`` projects onto the sphere ||Delta-H||_F = eps for
    worst-case stress sampling.
    """
    if eps < 0:
        raise ConfigError("uncertainty radius must be nonnegative")
    shape = h_bar.shape
    if eps == 0.0:
        return np.zeros(shape, dtype=complex)
    direction = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    norm = np.linalg.norm(direction)
    while norm == 0.0:  # pragma: no cover - measure zero
        direction = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        norm = np.linalg.norm(direction)
    direction /= norm
    if boundary:
        return eps * direction
    real_dim = 2 * int(np.prod(shape))
    radius = eps * rng.uniform() ** (1.0 / real_dim)
    return radius * direction


def scenario_seed_tree(config: SystemConfig, trial: int) -> np.random.SeedSequence:
    """Root seed for one (config, trial) pair."""
    return np.random.SeedSequence(entropy=config.seed, spawn_key=(trial,))


def draw_scenario(config: SystemConfig, trial: int) -> tuple[Geometry, ChannelSet]:
    """Geometry plus normalized channels for one Monte-Carlo trial."""
    root = scenario_seed_tree(config, trial)
    geometry = sample_geometry(config, child_rng(root, _TAG_GEOMETRY))
    return geometry, build_channel_set(config, geometry, root)
