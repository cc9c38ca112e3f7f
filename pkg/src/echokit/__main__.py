import sys

from echokit.cli import main

sys.exit(main())
