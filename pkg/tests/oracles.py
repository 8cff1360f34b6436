"""Independent slow reference implementations used by several test modules."""
import math

import numpy as np


def brute_force_cost(mesh, illum, obs, cfg, cameras):
    """Term-by-term loops over vertices, faces and edges."""
    V, F, K = mesh.vertices, mesh.faces, mesh.albedo
    unit = []
    for f in F:
        c = np.cross(V[f[1]] - V[f[0]], V[f[2]] - V[f[0]])
        unit.append(c / np.linalg.norm(c))
    unit = np.array(unit)
    normals = []
    for i in range(len(V)):
        s = sum(unit[j] for j in range(len(F)) if i in F[j])
        normals.append(s / np.linalg.norm(s))
    e_pho = e_pol = 0.0
    for o in range(len(obs)):
        i, c = obs.vertex[o], obs.camera[o]
        w = 1.0 / sum(1 for v in obs.vertex if v == i)
        n = normals[i]
        x, y, z = n
        basis = [1, y, z, x, x * y, y * z, z * z - 1 / 3, x * z, x * x - y * y]
        S = sum(b * l for b, l in zip(basis, illum[c][:9]))
        for ch in range(3):
            e_pho += w * (obs.rgb[o][ch] - K[i][ch] * S * illum[c][9 + ch]) ** 2
        if not math.isnan(obs.aop[o]):
            nc = cameras[c].rotation @ n
            alpha = math.atan2(-nc[1], nc[0]) % (2 * math.pi)
            eta = math.inf
            for m in range(-1, 3):
                d = (alpha - obs.aop[o] - m * math.pi / 2) % (2 * math.pi)
                eta = min(eta, d, 2 * math.pi - d)
            theta = 1 - 4 * eta / math.pi
            f = (math.exp(-cfg.k * theta) - math.exp(-cfg.k)) / (1 - math.exp(-cfg.k))
            e_pol += w * f * f
    e_gsm = 0.0
    for m in range(len(F)):
        nbrs = [j for j in range(len(F)) if j != m and len(set(F[j]) & set(F[m])) == 2]
        a = sum(unit[j] for j in nbrs)
        a = a / np.linalg.norm(a)
        t = math.atan2(np.linalg.norm(np.cross(unit[m], a)), unit[m] @ a)
        e_gsm += (t / math.pi) ** cfg.q
    e_psm = 0.0
    edges = {tuple(sorted((f[a], f[b]))) for f in F for a, b in ((0, 1), (1, 2), (2, 0))}
    topo_edges = [tuple(e) for e in mesh.topology.edges]
    for e, w in zip(topo_edges, obs.edge_weight):
        assert tuple(sorted(e)) in edges
        # ordered pairs (i, j) and (j, i) both appear in the double sum
        e_psm += 2 * w * np.sum((K[e[0]] - K[e[1]]) ** 2)
    return e_pho + cfg.tau1 * e_pol + cfg.tau2 * e_gsm + cfg.tau3 * e_psm
