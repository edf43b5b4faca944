"""Golden corpus for the expression language: 50 frozen cases.

VALUE_CASES rows are (text, coords, expected): parsing must succeed, the
printed form must reparse to the same tree, and evaluation at coords must
return expected exactly (all expected values are either exact dyadic
arithmetic or libm outputs frozen from the same runtime).

ERROR_CASES rows are (text, offset): parsing must raise ExpressionError with
exactly that byte offset.
"""

VALUE_CASES = [
    # literals
    ("1", (), 1.0),
    ("3.5", (), 3.5),
    (".5", (), 0.5),
    ("1e2", (), 100.0),
    ("2.5e-2", (), 0.025),
    # additive / multiplicative precedence and associativity
    ("1 + 2", (), 3.0),
    ("1 - 2 - 3", (), -4.0),
    ("2 * 3 + 4", (), 10.0),
    ("2 + 3 * 4", (), 14.0),
    ("(2 + 3) * 4", (), 20.0),
    ("8 / 4 / 2", (), 1.0),
    ("1 / 8", (), 0.125),
    ("1 + 2 * 3^2", (), 19.0),
    # exponentiation: right associative, above unary minus
    ("2^3", (), 8.0),
    ("2^3^2", (), 512.0),
    ("(2^3)^2", (), 64.0),
    ("-2^2", (), -4.0),
    ("(-2)^2", (), 4.0),
    ("2^-3", (), 0.125),
    ("2^(1 + 1)", (), 4.0),
    # unary minus
    ("-2 - -3", (), 1.0),
    ("--2", (), 2.0),
    ("2 * -3", (), -6.0),
    # variables
    ("x1", (2.0,), 2.0),
    ("x1 + x2", (2.0, 3.0), 5.0),
    ("x2^2 - x1", (1.0, 4.0), 15.0),
    ("x1 * (1 - x1) / 2", (0.25,), 0.09375),
    ("x3", (1.0, 2.0, 7.5), 7.5),
    ("-(x1 + x2) * 2", (1.5, 0.5), -4.0),
    ("(x1 + 1) * (x1 - 1)", (3.0,), 8.0),
    ("2 * x1^2", (3.0,), 18.0),
    # functions (libm values frozen from this runtime)
    ("sin(0)", (), 0.0),
    ("cos(0)", (), 1.0),
    ("exp(1)", (), 2.718281828459045),
    ("sin(1.5707963267948966)", (), 1.0),
    ("cos(3.141592653589793)", (), -1.0),
    ("sin(cos(0))", (), 0.8414709848078965),
    ("exp(x1 - x1)", (9.0,), 1.0),
]

ERROR_CASES = [
    ("", 0),  # empty input
    ("1 +", 3),  # dangling operator
    ("(1 + 2", 6),  # unclosed parenthesis
    ("1 + * 2", 4),  # operator where an operand belongs
    ("2 % 3", 2),  # character outside the language
    ("foo + 1", 0),  # unknown identifier
    ("sin(1, 2)", 5),  # arity violation
    ("x0 + 1", 0),  # variable indices start at 1
    ("1 2", 2),  # trailing input
    ("x1(3)", 2),  # variables are not callable
    ("sin 1", 4),  # function without argument list
    ("1 + (2 -)", 8),  # operand missing inside group
]

assert len(VALUE_CASES) + len(ERROR_CASES) == 50
