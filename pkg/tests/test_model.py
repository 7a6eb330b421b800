import re

import numpy as np
import pytest

from nnrepair.model import ModelBuilder, write_lp


def small_model():
    b = ModelBuilder()
    x = b.add_var("x[0]", 0.0, 1.0)
    yv = b.add_var("y", binary=True)
    z = b.add_var("z")
    b.add_square(x, 2.0, 0.5)        # 2 (x - 0.5)^2
    b.add_linear(yv, 1.0)
    b.add_ge({yv: 1.0, x: -1.0}, 0.0, "link")
    b.add_eq({z: 1.0, x: -3.0}, 1.0, "def")
    return b.build({"kind": "test"}), (x, yv, z)


def test_builder_objective_and_violation():
    m, (x, yv, z) = small_model()
    assert m.num_vars == 3 and m.num_binaries == 1 and m.index("y") == yv
    pt = np.array([0.5, 1.0, 2.5])
    assert m.objective_value(pt) == pytest.approx(1.0)
    assert m.violation(pt) == 0.0
    bad = np.array([0.5, 0.0, 2.5])       # y >= x violated by 0.5
    assert m.violation(bad) == pytest.approx(0.5)
    assert m.violation(bad, kinds=["def"]) == 0.0
    assert m.violation(np.array([0.5, 0.4, 2.5]), kinds=[]) == pytest.approx(0.4)
    assert m.violation(np.array([2.0, 1.0, 7.0]), kinds=[], integrality=False) == pytest.approx(1.0)


def test_fix_and_add_rows_copy():
    m, (x, yv, _) = small_model()
    f = m.fix({yv: 0.0})
    assert f.ub[yv] == 0.0 and m.ub[yv] == 1.0
    extra = m.add_rows([{x: 1.0}], [0.25], "cut")
    assert extra.b_ub.size == m.b_ub.size + 1 and extra.ub_kinds[-1] == "cut"
    assert m.without_objective().objective_value(np.ones(3)) == 0.0


def _parse_lp(text, names):
    """Reads the subset of LP syntax that write_lp emits back into dense rows."""
    idx = {n: i for i, n in enumerate(names)}
    rows = {}
    section = None
    for line in text.splitlines():
        s = line.strip()
        if s in ("Minimize", "Subject To", "Bounds", "Binaries", "End"):
            section = s
            continue
        if section == "Subject To" and ":" in s:
            name, rest = s.split(":", 1)
            m = re.match(r"(.*) (<=|=) (\S+)$", rest.strip())
            lhs, sense, rhs = m.groups()
            coef = np.zeros(len(names))
            tokens = lhs.split()
            sign = 1.0
            i = 0
            while i < len(tokens):
                if tokens[i] in "+-":
                    sign = -1.0 if tokens[i] == "-" else 1.0
                    i += 1
                    continue
                coef[idx[tokens[i + 1]]] += sign * float(tokens[i])
                sign = 1.0
                i += 2
            rows[name] = (coef, sense, float(rhs))
    return rows


def test_write_lp_round_trip(tmp_path):
    m, _ = small_model()
    text = write_lp(m, tmp_path / "m.lp")
    assert (tmp_path / "m.lp").read_text() == text
    for section in ("Minimize", "Subject To", "Bounds", "Binaries", "End"):
        assert section in text
    assert "x_0_" in text and "[ 4 x_0_ ^ 2 ] / 2" in text
    rows = _parse_lp(text, ["x_0_", "y", "z"])
    a_ub = m.a_ub.toarray()
    a_eq = m.a_eq.toarray()
    for r in range(a_ub.shape[0]):
        coef, sense, rhs = rows[f"{m.ub_kinds[r]}_u{r}"]
        assert sense == "<=" and rhs == m.b_ub[r]
        np.testing.assert_array_equal(coef, a_ub[r])
    for r in range(a_eq.shape[0]):
        coef, sense, rhs = rows[f"{m.eq_kinds[r]}_e{r}"]
        assert sense == "=" and rhs == m.b_eq[r]
        np.testing.assert_array_equal(coef, a_eq[r])
    assert " z free" in text and " 0 <= x_0_ <= 1" in text


def test_write_lp_keeps_fixed_binaries():
    m, (_, yv, _) = small_model()
    text = write_lp(m.fix({yv: 1.0}))
    assert " y = 1" in text
