"""The logic side of the tasks: parsers, checkers, and generators.

Targets in the formula tasks are not graded by string match.  A predicted
assignment is correct when it forces the proposition true under every
completion; a predicted symbolic trace is correct when every word it
denotes satisfies the temporal formula.  The generators bake that check
in, so every emitted pair is correct by construction.
"""
from streamformer.logic import (check_assignment, check_symbolic_trace,
                                eval_lasso, gen_ltl, gen_prop, parse_ltl,
                                parse_prop, parse_trace, unparse)

# --- propositional side -------------------------------------------------
phi = parse_prop("&a|b!c")
print(f"formula: {unparse(phi)}")
for a in ({"a": 1, "b": 1}, {"a": 1, "c": 0}, {"a": 0}):
    shown = "".join(f"{k}{int(v)}" for k, v in a.items())
    print(f"  assignment {shown:6}  forces true: {check_assignment(phi, a)}")

# --- temporal side ------------------------------------------------------
# Ua&ab reads "a until (a and b)"; the trace holds a for two steps then
# loops on a&b forever, written prefix;cycle with {} around the cycle.
psi = parse_ltl("Ua&ab")
for t in ("a;a;{&ab}", "a;{!b}", "{&ab}"):
    trace = parse_trace(t)
    print(f"  trace {t:12} satisfies {unparse(psi)}: "
          f"{eval_lasso(psi, trace)}")

# check_symbolic_trace quantifies over the words a symbolic trace denotes,
# so a trace step like "1" (no constraint) must work for every valuation.
loose = parse_trace("a;{1}")
print(f"  trace a;{{1}} satisfies Fa for all words: "
      f"{check_symbolic_trace(parse_ltl('U1a'), loose)}")

# --- generators ---------------------------------------------------------
for d in (gen_prop(0, 3, (4, 9), 3), gen_ltl(0, 3, (4, 8), 3)):
    print(f"\n{d.task} samples (seeded, reproducible):")
    for s, t in d.pairs:
        print(f"  {s:14} -> {t}")
