"""Reproduce a convergence table for the first benchmark problem.

Runs the solver on a doubling mesh ladder for both lowest-order and linear
elements and prints tables in the usual rows-per-field layout.  All five
fields converge at order k+1 in L2.
"""

from hdgoc import run_convergence_study

for k, ns in [(0, [8, 16, 32, 64]), (1, [8, 16, 32])]:
    report = run_convergence_study("example1", k, ns)
    print(f"\n=== example1, degree k = {k} ===")
    print(report.to_markdown())
    finals = ", ".join(f"{name}: {order:.2f}"
                       for name, order in report.final_orders().items())
    print(f"orders at the finest level -> {finals}")
