"""MCPL Zones: single-emitter multi-carrier parametric loudspeaker sound zones."""
