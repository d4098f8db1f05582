"""
manigp - manifold-adaptive Gaussian process regression

Entry point for the command-line interface.
"""

import sys
from pathlib import Path

# Add project root to path for proper imports
project_root = Path(__file__).parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))


def main():
    """Run the manigp command line."""
    try:
        from cli.app import main as cli_main
    except ImportError as e:
        print(f"Error importing modules: {e}", file=sys.stderr)
        print("\nPlease ensure all dependencies are installed:", file=sys.stderr)
        print("  pip install -r requirements.txt", file=sys.stderr)
        sys.exit(1)
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
