"""HTTP service and command line front ends over the design pipeline."""
