import sys

from spiketest.cli import main

sys.exit(main())
