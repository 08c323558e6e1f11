"""Energy-efficient quadrotor trajectory planning."""
