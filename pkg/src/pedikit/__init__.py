"""pedikit: desk-scale quadruped loco-manipulation toolkit.

Foot trajectories as weighted Bezier curves with slerp orientations, a
damped-least-squares tracking controller standing in for a learned policy, a
nine-task scene suite with scripted experts, parallel demonstration dataset
collection, and a live teleoperation bridge.
"""

__version__ = "0.1.0"
