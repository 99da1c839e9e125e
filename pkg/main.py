"""应用入口"""
import sys

from vseed.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
