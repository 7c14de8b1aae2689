import sys
from zk_lab.cli import main
sys.exit(main())
