"""Architecture strings of the form "2x50" or "2x20-3x10".

"LxN" means L consecutive hidden layers of N neurons; terms are joined by
"-" in network order.
"""

import re

_TERM = re.compile(r"^(\d+)x(\d+)$")


class ArchError(ValueError):
    pass


def parse_arch(s):
    """Parse an arch string into the list of hidden-layer widths."""
    widths = []
    for term in s.strip().split("-"):
        m = _TERM.match(term)
        if not m:
            raise ArchError(f"bad arch term {term!r} in {s!r}")
        count, width = int(m.group(1)), int(m.group(2))
        if count < 1 or width < 1:
            raise ArchError(f"arch term {term!r} must have positive counts")
        widths.extend([width] * count)
    return widths


def format_arch(widths):
    """Normal form: consecutive equal widths collapse into one LxN term."""
    if not widths:
        raise ArchError("empty width list")
    if any(w < 1 for w in widths):
        raise ArchError("widths must be positive")
    terms = []
    run_w, run_n = widths[0], 1
    for w in widths[1:]:
        if w == run_w:
            run_n += 1
        else:
            terms.append(f"{run_n}x{run_w}")
            run_w, run_n = w, 1
    terms.append(f"{run_n}x{run_w}")
    return "-".join(terms)
