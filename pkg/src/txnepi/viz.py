"""Best-effort SVG emitters (require the optional matplotlib extra).

Presentation only: acceptance surfaces are the CSV outputs.
"""

from __future__ import annotations

from .errors import TxnEpiError


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("svg", force=False)
        import matplotlib.pyplot as plt

        return plt
    except ImportError as exc:
        raise TxnEpiError(
            "SVG output needs matplotlib; install the 'viz' extra"
        ) from exc


def write_hotspot_svg(hotspot_map, path, top_n: int = 30) -> None:
    """Horizontal bar heatmap of the noisiest postal codes."""
    plt = _pyplot()
    items = sorted(hotspot_map.counts.items(), key=lambda kv: kv[1], reverse=True)[:top_n]
    fig, ax = plt.subplots(figsize=(7, max(2, 0.25 * len(items))))
    if items:
        postals, values = zip(*items)
        colors = plt.cm.inferno([v / max(max(values), 1) for v in values])
        ax.barh(range(len(items)), values, color=colors)
        ax.set_yticks(range(len(items)), postals, fontsize=7)
        ax.invert_yaxis()
    ax.set_xlabel("noisy offline transaction count")
    ax.set_title(
        f"{hotspot_map.city} {hotspot_map.start.isoformat()}..{hotspot_map.end.isoformat()}"
        f" (epsilon={hotspot_map.metadata.epsilon:g})"
    )
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def write_series_svg(frame, path, x: str, ys: list[str], title: str = "") -> None:
    """Line chart of one or more columns of a dated frame."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(9, 4))
    for column in ys:
        ax.plot(frame[x], frame[column], label=column)
    ax.set_xlabel(x)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    step = max(1, len(frame) // 12)
    ax.set_xticks(frame[x][::step])
    ax.tick_params(axis="x", labelrotation=60, labelsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
