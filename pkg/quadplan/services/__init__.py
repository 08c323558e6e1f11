"""Domain services: dynamics, wind, energy, transcription, solver, simulation."""
