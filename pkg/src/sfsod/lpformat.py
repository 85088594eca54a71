"""Export a problem in CPLEX LP text format for external cross-checks.

Layout, in order:

* ``Minimize``: ``obj: [ c r1 ^2 + ... ] / 2`` with ``c = 2/n``, i.e. the
  mean squared residual.
* ``Subject To``: one ``res<i>`` row per case defining the residual
  ``r<i> + x_i . b + f<i> = y_i``; then the links between coefficients and
  indicators (``mb_up<j>``/``mb_lo<j>`` and ``mf_up<i>``/``mf_lo<i>`` in
  big-M form, or ``cb<j>``/``cf<i>`` complement rows in SOS form); the two
  cardinality rows ``card_beta`` and ``card_phi``; and ``ridge`` when the
  ridge radius is finite.
* ``Bounds``: every continuous variable is free.
* ``Binaries``: ``zb<j>`` then ``zf<i>``.
* ``SOS`` (SOS form only): one type-1 set per pair (complement, variable).

Variables are ``b<j>`` (coefficients, 0-based column index, ``b0`` is the
intercept when present), ``f<i>`` (mean shifts), ``r<i>`` (residuals),
``zb<j>``/``zf<i>`` (indicators) and ``wb<j>``/``wf<i>`` (complements,
SOS form only).  Numbers carry 17 significant digits.
"""

from __future__ import annotations

import math

from .core import SfsodProblem


def _num(x) -> str:
    return format(float(x), ".17g")


def _terms(pairs):
    out = []
    for coef, name in pairs:
        if coef == 0:
            continue
        sign = "-" if coef < 0 else "+"
        out.append(f"{sign} {_num(abs(coef))} {name}")
    text = " ".join(out) if out else "0 " + pairs[0][1]
    return text[2:] if text.startswith("+ ") else text


def _wrap(text, width=200):
    # LP readers limit line length; break between terms
    lines, cur = [], ""
    for tok in text.split(" "):
        if len(cur) + len(tok) + 1 > width and cur:
            lines.append(cur)
            cur = "   " + tok
        else:
            cur = f"{cur} {tok}" if cur else tok
    lines.append(cur)
    return "\n".join(lines)


def export_lp(problem: SfsodProblem, path=None, bound_mode=None) -> str:
    """Render ``problem`` as LP text; write it to ``path`` when given.

    ``bound_mode`` defaults to ``"bigm"`` when the problem carries big-M
    vectors and ``"sos"`` otherwise.
    """
    mode = (bound_mode or ("bigm" if problem.has_bigM else "sos")).lower()
    if mode == "bigm" and not problem.has_bigM:
        raise ValueError("big-M form needs big-M vectors on the problem")
    X, y, n, p = problem.data.X, problem.data.y, problem.n, problem.p
    first = 1 if problem.intercept else 0
    pen = range(first, p)
    rows = [f"\\ sfsod problem n={n} p={p} k_p={problem.k_p} k_n={problem.k_n} form={mode}",
            "Minimize"]
    c = _num(2.0 / n)
    rows.append(_wrap("obj: [ " + " + ".join(f"{c} r{i} ^2" for i in range(n)) + " ] / 2"))
    rows.append("Subject To")
    for i in range(n):
        pairs = [(1.0, f"r{i}")] + [(X[i, j], f"b{j}") for j in range(p)] + [(1.0, f"f{i}")]
        rows.append(_wrap(f"res{i}: {_terms(pairs)} = {_num(y[i])}"))
    if mode == "bigm":
        for j in pen:
            m = problem.bigM_beta[j]
            rows.append(f"mb_up{j}: b{j} - {_num(m)} zb{j} <= 0")
            rows.append(f"mb_lo{j}: b{j} + {_num(m)} zb{j} >= 0")
        for i in range(n):
            m = problem.bigM_phi[i]
            rows.append(f"mf_up{i}: f{i} - {_num(m)} zf{i} <= 0")
            rows.append(f"mf_lo{i}: f{i} + {_num(m)} zf{i} >= 0")
    else:
        for j in pen:
            rows.append(f"cb{j}: wb{j} + zb{j} = 1")
        for i in range(n):
            rows.append(f"cf{i}: wf{i} + zf{i} = 1")
    budget = problem.k_p - first
    if len(pen):
        rows.append(_wrap("card_beta: " + " + ".join(f"zb{j}" for j in pen) + f" <= {budget}"))
    rows.append(_wrap("card_phi: " + " + ".join(f"zf{i}" for i in range(n)) + f" <= {problem.k_n}"))
    if math.isfinite(problem.lam) and len(pen):
        rows.append(_wrap("ridge: [ " + " + ".join(f"b{j} ^2" for j in pen) + f" ] <= {_num(problem.lam)}"))
    rows.append("Bounds")
    rows += [f" b{j} free" for j in range(p)]
    rows += [f" f{i} free" for i in range(n)]
    rows += [f" r{i} free" for i in range(n)]
    rows.append("Binaries")
    rows += [f" zb{j}" for j in pen]
    rows += [f" zf{i}" for i in range(n)]
    if mode == "sos":
        rows.append("SOS")
        rows += [f" sb{j}: S1:: wb{j}:1 b{j}:2" for j in pen]
        rows += [f" sf{i}: S1:: wf{i}:1 f{i}:2" for i in range(n)]
    rows.append("End")
    text = "\n".join(rows) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
