"""Collaborative teleoperation stack, hardware-free.

Subsystems: wire (framed protocol), session (shared-world server), kinematics
and robot (simulated 6-DoF arm), fixtures (proximity assistance), runtime
(module lifecycle and latency degradation), prototyper (XML application
composer), relay (stream fan-out), scenario (scripted multi-client runs).
"""

__version__ = "0.1.0"
