# Simulated designs and panel file input/output
