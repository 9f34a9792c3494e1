"""Run gbdsde_lab as a module."""

from .cli import main

raise SystemExit(main())
