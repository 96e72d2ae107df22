"""SVG rendering of the figure data.  CSV is the contract; these plots are a thin view over it."""

from __future__ import annotations

import io
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

from matplotlib.figure import Figure  # noqa: E402

# fixed ids and glyph paths keep the SVG byte-identical across runs
_RC = {"svg.hashsalt": "covertkit", "svg.fonttype": "path", "path.simplify": False}

_STYLE = {"tv": ("C2", "-"), "kl_reverse": ("C1", "--"), "kl_forward": ("C0", ":")}
_LABEL = {"tv": r"$\xi^* \geq 1-\epsilon$", "kl_reverse": r"$D(p_0\|p_1) \leq 2\epsilon^2$",
          "kl_forward": r"$D(p_1\|p_0) \leq 2\epsilon^2$"}


def _render(fig: Figure) -> bytes:
    buf = io.BytesIO()
    with matplotlib.rc_context(_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    return buf.getvalue()


def _info_label(bits: bool) -> str:
    return r"$I(x;z)$ (bits)" if bits else r"$I(x;z)$ (nats)"


def fig2_svg(theta: Sequence[float], kl_reverse: Sequence[float], mutual_info: Sequence[float],
             gauss_kl_reverse: float, gauss_mi: float, bits: bool = False) -> bytes:
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(6.0, 6.0))
        ax1, ax2 = fig.subplots(2, 1, sharex=True)
        ax1.plot(theta, kl_reverse, "C0-", label="skew-normal")
        ax1.axhline(gauss_kl_reverse, color="k", ls="--", lw=1, label="Gaussian")
        ax1.set_ylabel(r"$D(p_0\|p_1)$ (nats)")
        ax1.legend(loc="best")
        ax2.plot(theta, mutual_info, "C1-", label="skew-normal")
        ax2.axhline(gauss_mi, color="k", ls="--", lw=1, label="Gaussian")
        ax2.set_ylabel(_info_label(bits))
        ax2.set_xlabel(r"skew parameter $\theta$")
        ax2.legend(loc="best")
        return _render(fig)


def frontier_svg(skew_x: Sequence[float], skew_mi: Sequence[float], gauss_x: Sequence[float],
                 gauss_mi: Sequence[float], xlabel: str, bits: bool = False) -> bytes:
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(6.0, 4.5))
        ax = fig.subplots()
        ax.plot(gauss_x, gauss_mi, "k-", lw=1.2, label="Gaussian (varying $P_x$)")
        ax.plot(skew_x, skew_mi, "C3o", ms=3, label=r"skew-normal (varying $\theta$)")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(_info_label(bits))
        ax.legend(loc="best")
        return _render(fig)


def fig5_svg(px_db: Sequence[float], curves: dict[float, dict[str, Sequence[float]]]) -> bytes:
    """``curves`` maps sigma_w^2 (dB) to arrays ``xi``, ``bound_reverse``, ``bound_forward``."""
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(6.0, 4.5))
        ax = fig.subplots()
        for i, (sw_db, c) in enumerate(sorted(curves.items())):
            col = f"C{i}"
            ax.plot(px_db, c["xi"], color=col, ls="-", label=rf"$\xi^*$, $\sigma_w^2$={sw_db:g} dB")
            ax.plot(px_db, c["bound_reverse"], color=col, ls="--")
            ax.plot(px_db, c["bound_forward"], color=col, ls=":")
        ax.plot([], [], "k--", label=r"$1-\sqrt{D(p_0\|p_1)/2}$")
        ax.plot([], [], "k:", label=r"$1-\sqrt{D(p_1\|p_0)/2}$")
        ax.set_xlabel(r"$P_x$ (dB)")
        ax.set_ylabel("detection error probability")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(loc="best", fontsize="small")
        return _render(fig)


def fig6_svg(eps: Sequence[float], power: dict[str, Sequence[float]], info: dict[str, Sequence[float]],
             bits: bool = False) -> bytes:
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(6.0, 6.0))
        ax1, ax2 = fig.subplots(2, 1, sharex=True)
        for kind in ("tv", "kl_reverse", "kl_forward"):
            col, ls = _STYLE[kind]
            ax1.plot(eps, power[kind], color=col, ls=ls, label=_LABEL[kind])
            ax2.plot(eps, info[kind], color=col, ls=ls, label=_LABEL[kind])
        ax1.set_ylabel(r"$P_x^*$")
        ax1.legend(loc="best", fontsize="small")
        ax2.set_ylabel("max " + _info_label(bits))
        ax2.set_xlabel(r"$\epsilon$")
        return _render(fig)
