"""Wave simulation and synthetic boundary measurements."""
