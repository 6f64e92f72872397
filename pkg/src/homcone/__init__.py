"""Cone-constrained homogeneous stochastic control: BSDE solvers, feedback controls, verification."""
