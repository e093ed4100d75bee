"""One manufactured-solution run.

Solves on an 8 x 8 mesh with P2 velocity and P1 pressure, then prints the
errors at the final time and the largest pressure mean seen during the run.
"""
from oldroyd_dg.mms import run_mms, scheme_params

params = scheme_params(r=2, tau=1 / 32)
print(f"delta defaults to the stability bound {params.delta:.5f}")
res = run_mms(2, 8, params)
e = res.errors
print(f"t=1: |u-u_h|={e.u_l2:.3e}  |u-u_h|_dG={e.u_dg:.3e}  |p-p_h|={e.p_l2:.3e}")
print(f"max |mean(p_h)| over all steps: {res.max_abs_p_mean:.1e}")
print(f"wall time {res.wall_time:.1f} s over {len(res.diagnostics)} steps")
