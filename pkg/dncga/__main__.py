import sys

from dncga.cli import main

sys.exit(main())
