"""Random-signal ISAC toolkit: ACF statistics, pulse and constellation design, MIMO precoding."""

__version__ = "0.1.0"
