"""Four-sphere Kirchhoff dynamics: effective model, coupled-pendulum targeting, datum synthesis and exact-flow checks."""
