# Estimation, inference and Monte Carlo modules
