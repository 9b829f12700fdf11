import sys

from infotrial.cli import main

sys.exit(main())
