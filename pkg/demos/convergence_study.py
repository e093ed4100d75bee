"""Small spatial and temporal convergence studies.

These use coarse ladders so they finish in about a minute. The full studies
are run by the acceptance tests and the command line driver.
"""
from oldroyd_dg.mms import convergence_study, render_table

space = convergence_study("space", 2, [2, 4, 8], 1 / 256)
print(render_table(space))
print()
temporal = convergence_study("time", 2, [1 / 4, 1 / 8, 1 / 16], 16)
print(render_table(temporal))
if temporal.truncated_at is not None:
    print(f"rungs from index {temporal.truncated_at} are limited by the spatial error")
