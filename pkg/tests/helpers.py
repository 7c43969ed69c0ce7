"""Shared fixtures-as-functions for the test modules."""

from __future__ import annotations

from perfcast.diffcore import LineKind, LinePatch, RenderedChange

# Two-hunk change mixing an import, a comment and a renamed call.
LISTING_DIFF = """\
--- a/Example.java
+++ b/Example.java
@@ -1,2 +1,3 @@
 A line of code context
+ import static com.example.animport;
 A line of code context
@@ -5,3 +6,4 @@
 A line of code context
+ // code comment
- oldFunctionCall()
+ newFunctionCall()
 A line of code context
"""

TABLE_COUNTS = {
    "a": 4, "line": 4, "of": 4, "code": 4, "context": 4,
    "+import": 1, "+static": 1, "+com": 1, "+example": 1, "+animport": 1,
    "-old": 1, "-function": 1, "-call": 1,
    "+new": 1, "+function": 1, "+call": 1,
}

LOOP_BEFORE = """\
def notify_all(all_users):
    for i in (1, all_users):
        print(i)
    return None
"""

LOOP_AFTER = """\
def notify_all(all_users):
    for i in (1, all_users):
        print(i)
        call_medium_expensive_function(i)
    return None
"""


def change(*lines: str, name: str = "f", width: int = 1) -> RenderedChange:
    """Build a RenderedChange from '+', '-' or ' ' prefixed strings."""
    return RenderedChange(name, width, tuple(LinePatch(LineKind(s[0]), s[1:]) for s in lines))

# (criterion, passed, detail) lines collected by the acceptance suite and
# printed in the terminal summary.
ACCEPTANCE: list[tuple[int, bool, str]] = []


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((criterion, bool(passed), detail))
    print(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
