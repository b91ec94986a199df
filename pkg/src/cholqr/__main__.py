import sys

from src.cholqr.cli import main

if __name__ == "__main__":
    sys.exit(main())
