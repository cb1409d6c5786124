import sys

from vqt.cli import main

sys.exit(main())
