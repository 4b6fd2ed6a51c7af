"""Deterministic figure rendering from the simulator's CSV exports.

Five figure kinds: ``tree`` (2-D or 3-D by the data's dimension), ``cones``
(straightness cone overlays), ``lenses`` (the forced-empty lens diagram
along an exploration trace), ``deviation`` (log-log scaling curves), and
``tails`` (survival plots with a fitted envelope shape).  Output is a pure
function of the input files and style options: fixed canvas, no timestamps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import LineCollection
from matplotlib.patches import Circle, Wedge

from rst_figures import schemas

_SAVE_KW = {"dpi": 150, "metadata": {"Software": None}}

KINDS = ("tree", "cones", "lenses", "deviation", "tails")


@dataclass
class FigureSpec:
    """What to draw and from which files.

    inputs maps role names to CSV paths: tree/cones need ``points`` and
    ``tree`` (cones also ``straightness``); lenses needs ``trace``;
    deviation needs ``deviation``; tails needs ``tail``.
    """

    kind: str
    inputs: dict
    out: str
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {KINDS}")


def _edges(ids: np.ndarray, pts: np.ndarray, tree: np.ndarray) -> np.ndarray:
    """(n, 2, d) segment array child -> parent, origin as the zero vector."""
    row = {int(i): k for k, i in enumerate(ids)}
    d = pts.shape[1]
    segs = np.zeros((tree.shape[0], 2, d))
    for k, (child, parent) in enumerate(tree):
        if int(child) not in row:
            raise schemas.SchemaError(f"tree row {k + 2}: child id {child} missing from points")
        segs[k, 0] = pts[row[int(child)]]
        if int(parent) != 0:
            if int(parent) not in row:
                raise schemas.SchemaError(f"tree row {k + 2}: parent id {parent} missing from points")
            segs[k, 1] = pts[row[int(parent)]]
    return segs


def fit_slope(norms: np.ndarray, medians: np.ndarray) -> float:
    """Least-squares slope of log(median deviation) against log(norm).

    Must match the producer's fit: same formula on the same CSV numbers.
    """
    return float(np.polyfit(np.log(norms), np.log(medians), 1)[0])


def fit_envelope(thresholds: np.ndarray, survival: np.ndarray, exponent: float):
    """Fit log-survival = a - c * t^exponent; returns (a, c)."""
    keep = survival > 0
    if keep.sum() < 2:
        return 0.0, 0.0
    x = thresholds[keep] ** exponent
    coef = np.polyfit(x, np.log(survival[keep]), 1)
    return float(coef[1]), float(-coef[0])


def _render_tree(spec: FigureSpec):
    ids, pts = schemas.load_points(spec.inputs["points"])
    tree = schemas.load_tree(spec.inputs["tree"])
    d = pts.shape[1]
    if d == 2:
        fig, ax = plt.subplots(figsize=(7, 7))
        if tree.shape[0]:
            segs = _edges(ids, pts, tree)
            lengths = np.linalg.norm(segs[:, 0] - segs[:, 1], axis=1)
            widths = 1.6 / (1.0 + lengths)
            ax.add_collection(LineCollection(segs, colors="0.35", linewidths=widths))
            lim = float(np.abs(pts).max()) * 1.05
        else:
            lim = 1.0
        ax.plot([0], [0], "o", color="black", markersize=5)
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
        ax.set_aspect("equal")
        ax.set_title(f"radial spanning tree, {tree.shape[0]} edges")
    elif d == 3:
        from mpl_toolkits.mplot3d.art3d import Line3DCollection

        fig = plt.figure(figsize=(7, 7))
        ax = fig.add_subplot(projection="3d")
        if tree.shape[0]:
            segs = _edges(ids, pts, tree)
            # depth cue: color and thickness fade with the third coordinate
            depth = segs[:, 0, 2]
            rng = depth.max() - depth.min() or 1.0
            t = (depth - depth.min()) / rng
            colors = plt.cm.viridis(t)
            ax.add_collection3d(Line3DCollection(segs, colors=colors, linewidths=0.4 + 1.2 * t))
            lim = float(np.abs(pts).max()) * 1.05
        else:
            lim = 1.0
        ax.scatter([0], [0], [0], color="black", s=24)
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
        ax.set_zlim(-lim, lim)
        ax.set_title(f"radial spanning tree in 3-D, {tree.shape[0]} edges")
    else:
        raise schemas.SchemaError(f"tree rendering supports d in {{2, 3}}, got d={d}")
    return fig


def _subtree_members(ids, tree):
    """child -> children index for subtree extraction."""
    kids: dict = {}
    for child, parent in tree:
        kids.setdefault(int(parent), []).append(int(child))
    return kids


def _render_cones(spec: FigureSpec):
    ids, pts = schemas.load_points(spec.inputs["points"])
    tree = schemas.load_tree(spec.inputs["tree"])
    prof = schemas.load_straightness(spec.inputs["straightness"])
    if pts.shape[1] != 2:
        raise schemas.SchemaError("cone overlays are drawn in dimension 2")
    n_cones = int(spec.style.get("n_cones", 6))
    mult = float(spec.style.get("aperture_multiplier", 1.0))
    row = {int(i): k for k, i in enumerate(ids)}
    radius = float(np.linalg.norm(pts, axis=1).max()) if len(ids) else 1.0

    fig, ax = plt.subplots(figsize=(7, 7))
    if tree.shape[0]:
        segs = _edges(ids, pts, tree)
        ax.add_collection(LineCollection(segs, colors="0.8", linewidths=0.5))
    by_id = {int(v): (nrm, ang) for v, nrm, ang in prof}
    # roots in the middle band whose subtree reaches the boundary region
    kids = _subtree_members(ids, tree)
    chosen = []
    for vid, nrm, ang in sorted(prof.tolist(), key=lambda r: -r[1]):
        if not 0.35 * radius <= nrm <= 0.6 * radius or ang <= 0:
            continue
        stack, members, exits = [int(vid)], [], False
        while stack:
            u = stack.pop()
            members.append(u)
            if np.linalg.norm(pts[row[u]]) >= 0.95 * radius:
                exits = True
            stack.extend(kids.get(u, []))
        if exits and len(members) >= 3:
            chosen.append((int(vid), members))
        if len(chosen) >= n_cones:
            break
    for vid, members in chosen:
        u = pts[row[vid]]
        nrm, ang = by_id[vid]
        theta = np.degrees(np.arctan2(u[1], u[0]))
        spread = np.degrees(min(np.pi, mult * ang))
        ax.add_patch(
            Wedge((0, 0), radius, theta - spread, theta + spread, color="red", alpha=0.15)
        )
        member_rows = [row[m] for m in members]
        sub = tree[np.isin(tree[:, 0], members)]
        ax.add_collection(LineCollection(_edges(ids, pts, sub), colors="red", linewidths=0.9))
        ax.plot(*pts[member_rows].T, ".", color="darkred", markersize=1.5)
    ax.plot([0], [0], "o", color="black", markersize=5)
    lim = radius * 1.05
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_aspect("equal")
    ax.set_title(f"subtrees confined to cones toward their roots ({len(chosen)} shown)")
    return fig


def _render_lenses(spec: FigureSpec):
    d, data, header = schemas.load_trace(spec.inputs["trace"])
    if d != 2:
        raise schemas.SchemaError("the lens diagram is drawn in dimension 2")
    max_steps = int(spec.style.get("max_steps", 14))
    xy = data[: max_steps + 1, 1:3]
    R = data[: max_steps + 1, 3]
    fig, ax = plt.subplots(figsize=(7, 7))
    cmap = plt.cm.plasma(np.linspace(0.15, 0.85, max(len(xy) - 1, 1)))
    for k in range(len(xy) - 1):
        radius = float(np.linalg.norm(xy[k + 1] - xy[k]))
        clip = Circle((0, 0), R[k], transform=ax.transData)
        lens = Circle(xy[k], radius, color=cmap[k], alpha=0.35)
        lens.set_clip_path(clip)
        ax.add_patch(lens)
    ax.plot(xy[:, 0], xy[:, 1], "k.-", linewidth=1.0, markersize=4)
    ax.plot([0], [0], "o", color="black", markersize=5)
    boundary = Circle((0, 0), R[0], fill=False, color="0.6", linestyle="--")
    ax.add_patch(boundary)
    pad = 1.15 * float(np.abs(xy).max() + 1)
    cx = xy.mean(axis=0)
    half = max(pad - abs(cx).max(), float(np.abs(xy - cx).max()) + 2.0)
    ax.set_xlim(cx[0] - half, cx[0] + half)
    ax.set_ylim(cx[1] - half, cx[1] + half)
    ax.set_aspect("equal")
    ax.set_title("lenses forced empty along the exploration")
    return fig


def _render_deviation(spec: FigureSpec):
    data = schemas.load_deviation(spec.inputs["deviation"])
    norms, medians = data[:, 0], data[:, 5]
    slope = fit_slope(norms, medians)
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.loglog(norms, medians, "o-", label="median deviation")
    anchor = medians[0] / norms[0] ** slope
    ax.loglog(norms, anchor * norms**slope, "--", color="0.4", label=f"fit: slope = {slope:.3f}")
    ax.set_xlabel("start norm")
    ax.set_ylabel("median orthogonal deviation")
    ax.legend()
    ax.set_title("path deviation scaling")
    fig._fitted_slope = slope  # exposed for tests and callers
    return fig


def _render_tails(spec: FigureSpec):
    data, has_bound = schemas.load_tail(spec.inputs["tail"])
    thr, surv, hw = data[:, 0], data[:, 1], data[:, 2]
    exponent = float(spec.style.get("shape_exponent", 2.0 / 3.0))
    a, c = fit_envelope(thr, surv, exponent)
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.errorbar(thr, surv, yerr=hw, fmt="o-", capsize=2, label="empirical survival")
    pos = surv > 0
    if pos.sum() >= 2 and c != 0.0:
        xs = np.linspace(thr[pos].min(), thr[pos].max(), 100)
        ax.plot(
            xs,
            np.exp(a - c * xs**exponent),
            "--",
            color="0.4",
            label=f"envelope shape exp(-c t^{exponent:.3g}), fitted c (shape only)",
        )
    if has_bound:
        ax.plot(thr, data[:, 4], ":", color="crimson", label="analytic bound")
    if spec.style.get("log_y", True) and np.any(pos):
        ax.set_yscale("log")
    ax.set_xlabel("threshold t")
    ax.set_ylabel("survival")
    ax.legend()
    ax.set_title("tail estimate with fitted envelope shape")
    return fig


_RENDERERS = {
    "tree": _render_tree,
    "cones": _render_cones,
    "lenses": _render_lenses,
    "deviation": _render_deviation,
    "tails": _render_tails,
}


def render(spec: FigureSpec) -> str:
    """Validate inputs, draw the figure, write the image; returns the path."""
    fig = _RENDERERS[spec.kind](spec)
    try:
        fig.savefig(spec.out, **_SAVE_KW)
    finally:
        plt.close(fig)
    return spec.out
