"""Free-horizon parabolic control solver and optimality auditor."""
