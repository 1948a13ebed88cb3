"""Graph neural networks for motion planning."""
