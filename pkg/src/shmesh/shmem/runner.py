"""SPMD driver: run a program(ctx) on every PE of a mesh."""

from ..config import RuntimeFlags
from .runtime import PeContext


def run_spmd(mesh, program, flags: RuntimeFlags | None = None, *,
             reset_clocks=False, contexts=None):
    """Run `program(ctx)` on all PEs; returns the per-PE return values.

    `contexts`, when given a list, receives each PE's PeContext (for stats
    inspection after the run).
    """
    flags = flags or RuntimeFlags()

    def main(port):
        ctx = PeContext(port, flags)
        if contexts is not None:
            contexts.append(ctx)
        return program(ctx)

    return mesh.run(main, reset_clocks=reset_clocks)
