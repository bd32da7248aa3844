import sys

from frprune.cli.main import main

sys.exit(main())
