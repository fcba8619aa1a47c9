import sys

from tracewatch.cli import main

sys.exit(main())
