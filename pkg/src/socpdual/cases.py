"""Built-in test networks.

``ieee33`` carries the Baran & Wu 33-bus feeder (12.66 kV, 10 MVA base).
``synthetic56`` is a seeded random 56-bus radial feeder standing in for the
SCE 56-bus system, whose data is not public. It is *not* the real network.
"""

from __future__ import annotations

import numpy as np

from .network import Network, make_network

# (from, to, r ohm, x ohm, P kW, Q kvar at "to")
_IEEE33 = [
    (1, 2, 0.0922, 0.0470, 100, 60),
    (2, 3, 0.4930, 0.2511, 90, 40),
    (3, 4, 0.3660, 0.1864, 120, 80),
    (4, 5, 0.3811, 0.1941, 60, 30),
    (5, 6, 0.8190, 0.7070, 60, 20),
    (6, 7, 0.1872, 0.6188, 200, 100),
    (7, 8, 0.7114, 0.2351, 200, 100),
    (8, 9, 1.0300, 0.7400, 60, 20),
    (9, 10, 1.0440, 0.7400, 60, 20),
    (10, 11, 0.1966, 0.0650, 45, 30),
    (11, 12, 0.3744, 0.1238, 60, 35),
    (12, 13, 1.4680, 1.1550, 60, 35),
    (13, 14, 0.5416, 0.7129, 120, 80),
    (14, 15, 0.5910, 0.5260, 60, 10),
    (15, 16, 0.7463, 0.5450, 60, 20),
    (16, 17, 1.2890, 1.7210, 60, 20),
    (17, 18, 0.7320, 0.5740, 90, 40),
    (2, 19, 0.1640, 0.1565, 90, 40),
    (19, 20, 1.5042, 1.3554, 90, 40),
    (20, 21, 0.4095, 0.4784, 90, 40),
    (21, 22, 0.7089, 0.9373, 90, 40),
    (3, 23, 0.4512, 0.3083, 90, 50),
    (23, 24, 0.8980, 0.7091, 420, 200),
    (24, 25, 0.8960, 0.7011, 420, 200),
    (6, 26, 0.2030, 0.1034, 60, 25),
    (26, 27, 0.2842, 0.1447, 60, 25),
    (27, 28, 1.0590, 0.9337, 60, 20),
    (28, 29, 0.8042, 0.7006, 120, 70),
    (29, 30, 0.5075, 0.2585, 200, 600),
    (30, 31, 0.9744, 0.9630, 150, 70),
    (31, 32, 0.3105, 0.3619, 210, 100),
    (32, 33, 0.3410, 0.5302, 60, 40),
]

IEEE33_BRANCHES = tuple((f, t) for f, t, *_ in _IEEE33)


def _node(v_lo, v_hi, p, q):
    return {"v_min": v_lo, "v_max": v_hi, "p_min": p[0], "p_max": p[1], "q_min": q[0], "q_max": q[1]}


def ieee33(
    v_range: tuple[float, float] = (0.9, 1.1),
    l_max: float = 0.25,
    base_kv: float = 12.66,
    base_mva: float = 10.0,
) -> Network:
    """Baran & Wu 33-bus feeder with fixed loads (negative injections).

    ``v_range`` is in voltage magnitude and gets squared; ``l_max`` is a
    uniform squared-current limit (the original data carries none).
    """
    z_base = base_kv**2 / base_mva
    v_lo, v_hi = v_range[0] ** 2, v_range[1] ** 2
    nodes, branches = {}, []
    for f, t, r, x, p_kw, q_kvar in _IEEE33:
        p = -p_kw / (1000.0 * base_mva)
        q = -q_kvar / (1000.0 * base_mva)
        nodes[str(t)] = _node(v_lo, v_hi, (p, p), (q, q))
        branches.append({"child": str(t), "parent": str(f), "r": r / z_base, "x": x / z_base, "l_max": l_max})
    return make_network(1.0, nodes, branches, root="1")


def random_radial(
    n_nodes: int,
    rng: np.random.Generator,
    r_range: tuple[float, float] = (0.002, 0.06),
    rx_range: tuple[float, float] = (0.4, 2.5),
    load_p: tuple[float, float] = (0.0, 0.03),
    pf_q: tuple[float, float] = (0.2, 0.6),
    l_max: tuple[float, float] = (0.2, 1.0),
    v_range: tuple[float, float] = (0.9, 1.1),
    flexible: float = 0.0,
    max_children: int | None = None,
) -> Network:
    """Random radial network with ``n_nodes`` nodes including the root.

    Loads are fixed negative injections unless ``flexible`` > 0, in which case
    each node's box is widened by up to ``flexible`` on both sides.
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    parents = [0]
    n_kids = [0] * n_nodes
    nodes, branches = {}, []
    for i in range(1, n_nodes):
        cand = [j for j in range(i) if max_children is None or n_kids[j] < max_children]
        # bias towards recent nodes to get feeder-like depth
        w = np.exp(np.linspace(-2.0, 0.0, len(cand)))
        j = int(rng.choice(cand, p=w / w.sum()))
        n_kids[j] += 1
        parents.append(j)
        r = rng.uniform(*r_range)
        x = r / rng.uniform(*rx_range)
        p = -rng.uniform(*load_p)
        q = p * rng.uniform(*pf_q)
        if flexible > 0:
            p_box = (p - rng.uniform(0, flexible), p + rng.uniform(0, flexible))
            q_box = (q - rng.uniform(0, flexible), q + rng.uniform(0, flexible))
        else:
            p_box, q_box = (p, p), (q, q)
        nodes[str(i)] = _node(v_range[0] ** 2, v_range[1] ** 2, p_box, q_box)
        branches.append({"child": str(i), "parent": str(j), "r": r, "x": x, "l_max": rng.uniform(*l_max)})
    return make_network(1.0, nodes, branches, root="0")


def synthetic56(seed: int = 56) -> Network:
    """Seeded 56-bus radial stand-in for the SCE 56-bus feeder (not authentic data)."""
    rng = np.random.default_rng(seed)
    return random_radial(
        56,
        rng,
        r_range=(0.001, 0.02),
        rx_range=(0.5, 3.0),
        load_p=(0.0, 0.02),
        l_max=(0.5, 1.5),
        max_children=3,
    )


def chain(ratios: list[float], r: float = 0.01, l_max: float = 1.0, box: float = 0.1, v0: float = 1.0) -> Network:
    """Chain ``0 <- 1 <- 2 ...`` whose branch ``k`` (child ``k``) has r/x = ``ratios[k-1]``."""
    nodes, branches = {}, []
    for k, ratio in enumerate(ratios, start=1):
        nodes[str(k)] = _node(0.81, 1.21, (-box, box), (-box, box))
        branches.append({"child": str(k), "parent": str(k - 1), "r": r, "x": r / ratio, "l_max": l_max})
    return make_network(v0, nodes, branches, root="0")
