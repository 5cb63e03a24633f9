"""Allow ``python -m numevent``."""

from .cli import main

if __name__ == "__main__":
    main()
