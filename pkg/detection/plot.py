# detection/plot.py
import logging
import os
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from detection.spectrum import Spectrum  # noqa: E402

logger = logging.getLogger(__name__)


def write_spectrum_svg(
    spec: Spectrum,
    path: str,
    key_frequency: Optional[float] = None,
    title: Optional[str] = None,
) -> str:
    """Line plot of magnitude against cycles-per-token, key frequency marked."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(spec.frequencies, spec.magnitudes, marker=".", linewidth=1)
    if key_frequency is not None:
        ax.axvline(x=float(key_frequency), color="tab:red", linestyle="--", label=f"key {float(key_frequency):.3f}")
        ax.legend(loc="upper right")
    ax.set_xlabel("Frequency (cycles per token)")
    ax.set_ylabel("Magnitude")
    ax.set_title(title or f"Rank spectrum (N={spec.n})")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)

    logger.info("Wrote spectrum plot to %s", path)
    return path
