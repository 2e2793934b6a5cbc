"""Q-learning fluid-resuscitation controller, blood-volume virtual patient and PID baseline."""

__version__ = "0.1.0"
