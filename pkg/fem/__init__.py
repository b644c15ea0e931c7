"""P1 finite element assembly."""
