"""Application entry point."""

import sys

from quadplan.app import cli_main

if __name__ == '__main__':
    sys.exit(cli_main())
