import sys

from recordgraph.cli import main

sys.exit(main())
