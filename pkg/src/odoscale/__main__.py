"""Enable running as python -m odoscale."""

from odoscale.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
