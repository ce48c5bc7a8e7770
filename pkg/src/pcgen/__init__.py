"""Continuous-time consistency modeling for 3D point clouds: a trig
interpolation noise schedule, analytic flow-matching plus Chamfer
training, one/few-step samplers, and a generative metric suite."""

__version__ = "0.1.0"
