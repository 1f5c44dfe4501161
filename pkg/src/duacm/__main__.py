import sys
from duacm.cli import main
sys.exit(main())
