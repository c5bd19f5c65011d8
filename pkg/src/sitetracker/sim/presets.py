"""Named scenario configurations used by the experiments."""

from ..config import merge

AREA = (0.0, 11.0, 0.0, 9.0)


def default(seed=0, **overrides):
    """11 x 9 m site, 12 perimeter APs, 8 people of whom 5 carry devices."""
    return merge({"seed": seed}, overrides)


def crossing(seed=0, n_scans=300, lead=3.5, **overrides):
    """Two device carriers shuttling along the diagonals of the area.

    Both walk with the same steady gait; the second starts ``lead`` meters
    along its diagonal so the pair passes the centre slightly apart.
    """
    a0 = [[1.0, 1.0], [10.0, 8.0]]
    a1 = [[10.0, 1.0], [1.0, 8.0]]
    dx, dy = a1[1][0] - a1[0][0], a1[1][1] - a1[0][1]
    norm = (dx * dx + dy * dy) ** 0.5
    start = [a1[0][0] + lead * dx / norm, a1[0][1] + lead * dy / norm]
    cfg = {
        "seed": seed,
        "n_scans": n_scans,
        "agents": {"n_agents": 2, "n_devices": 2, "pause_prob": 0.0,
                   "paths": [a0[::-1], a1[::-1]], "starts": [a0[0], start],
                   "height_range": [1.78, 1.78], "personal_jitter": 0.0,
                   "frequency_range": [1.8, 1.8], "heading_noise_deg": 1.0},
    }
    return merge(cfg, overrides)


CORRIDOR_WALLS = ([0.5, 2.0, 10.5, 3.75], [0.5, 5.25, 10.5, 7.0])


def corridor(seed=0, n_scans=600, p_d=0.4, **overrides):
    """Walkers shuttling along a 1.5 m corridor between two long walls."""
    lanes = [4.5, 4.2, 4.8, 4.5]
    paths = []
    for i, y in enumerate(lanes):
        a, b = [1.0 + 0.5 * i, y], [10.0 - 0.5 * i, y]
        paths.append([a, b] if i % 2 == 0 else [b, a])
    cfg = {
        "seed": seed,
        "n_scans": n_scans,
        "walls": [list(w) for w in CORRIDOR_WALLS],
        "camera": {"p_d": p_d, "clutter_rate": 0.3},
        "agents": {"n_agents": 4, "n_devices": 4, "pause_prob": 0.0, "paths": paths,
                   "heading_noise_deg": 2.0},
        "imu": {"heading_bias_deg": [15.0, 35.0]},
    }
    return merge(cfg, overrides)


def mog_sequence(seed=0, n_scans=900, **overrides):
    """Walkers with long pauses; the detector sees rendered frames instead of
    simulated detections, so the camera emission itself is left clutter-free."""
    cfg = {
        "seed": seed,
        "n_scans": n_scans,
        "camera": {"clutter_rate": 0.0},
        "agents": {"n_agents": 4, "n_devices": 4, "pause_prob": 0.7, "pause_scans": [35, 55]},
    }
    return merge(cfg, overrides)


def mog_illumination(n_scans, period=150, first=100, step=35.0):
    """Alternating brightness jumps every ``period`` scans."""
    return tuple((s, step if (s // period) % 2 else -step) for s in range(first, n_scans, period))


PRESETS = {"default": default, "crossing": crossing, "corridor": corridor,
           "mog_sequence": mog_sequence}
