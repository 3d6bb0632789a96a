# Factor-model average marginal effects
