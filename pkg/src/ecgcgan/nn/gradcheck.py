"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: dict[str, float] = field(default_factory=dict)
    n_checked: dict[str, int] = field(default_factory=dict)
    n_kinks: dict[str, int] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance and all(n > 0 for n in self.n_checked.values())

    def __str__(self) -> str:
        lines = [f"gradient check: worst {self.worst:.3e} (tolerance {self.tolerance:.0e})"]
        for name, err in self.max_rel_error.items():
            flag = "ok" if err <= self.tolerance else "FAIL"
            if self.n_checked[name] == 0:
                flag = "FAIL (every probe crossed a kink)"
            kinks = self.n_kinks.get(name, 0)
            note = f", {kinks} redrawn at kinks" if kinks else ""
            lines.append(f"  {name:<40s} {err:.3e} over {self.n_checked[name]} entries{note}  {flag}")
        return "\n".join(lines)


def relative_error(analytic, numeric, floor: float = 1e-6):
    """``|a - n| / max(|a|, |n|, floor)``; the floor absorbs round-off on zero gradients."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def _as_tuple(out):
    return out if isinstance(out, tuple) else (out,)


def gradient_check(
    fragment,
    inputs: np.ndarray,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    max_entries: int | None = None,
    training: bool = True,
    check_input: bool = True,
    seed: int = 0,
) -> GradCheckReport:
    """Compare ``fragment.backward`` against central differences.

    ``fragment`` needs ``forward(x, training)``, ``backward(grad)`` and
    ``parameters()``; ``forward`` may return an array or a tuple of arrays.
    The scalar objective is a fixed random projection of the outputs. Each
    parameter block is probed at up to ``max_entries`` random entries (all
    entries when ``None``). Everything runs in float64.

    Central differences are meaningless where a perturbation moves some
    activation across a non-differentiable point (LeakyReLU at zero). When
    the fragment exposes ``kink_inputs()``, a probe whose +step or -step pass
    flips the sign of any such input is retried at step/10 and step/100, then
    discarded for another entry; the discards are counted in ``n_kinks``.
    """
    rng = np.random.default_rng(seed)
    # C order so that reshape(-1) below is a view we can perturb in place
    x = np.array(inputs, dtype=np.float64, order="C")
    if hasattr(fragment, "astype"):
        fragment.astype(np.float64)
    params = fragment.parameters()
    saved_buffers = {k: b.copy() for k, b in fragment.buffers().items()} if hasattr(fragment, "buffers") else {}

    def restore_buffers():
        for k, b in fragment.buffers().items():
            b[...] = saved_buffers[k]

    outs = _as_tuple(fragment.forward(x, training))
    proj = tuple(rng.normal(size=o.shape) / np.sqrt(o.size) for o in outs)

    kink_inputs = getattr(fragment, "kink_inputs", lambda: [])

    def objective(inp):
        """Projected output, plus whether any kink input changed sign versus the base pass."""
        res = _as_tuple(fragment.forward(inp, training))
        restore_buffers()
        crossed = any(np.any((k > 0) != s) for k, s in zip(kink_inputs(), base_signs))
        return sum(float(np.sum(o * r)) for o, r in zip(res, proj)), crossed

    for p in params.values():
        p.zero_grad()
    restore_buffers()
    fragment.forward(x, training)
    base_signs = [k > 0 for k in kink_inputs()]
    restore_buffers()
    grad_in = fragment.backward(proj if len(proj) > 1 else proj[0])
    analytic = {name: p.grad.copy() for name, p in params.items()}

    report = GradCheckReport(tolerance)
    steps = (step, step / 10, step / 100)

    def probe(name, arr, grad):
        flat = arr.reshape(-1)
        if not np.shares_memory(flat, arr):
            raise ValueError(f"{name} is not contiguous; perturbations would not reach the fragment")
        n = flat.size
        want = n if max_entries is None else min(n, max_entries)
        errs, kinks = [], 0
        for i in rng.permutation(n):
            if len(errs) == want:
                break
            orig = flat[i]
            for h in steps:
                flat[i] = orig + h
                fp, crossed_p = objective(x)
                flat[i] = orig - h
                fm, crossed_m = objective(x)
                flat[i] = orig
                if not (crossed_p or crossed_m):
                    errs.append(float(relative_error(grad.reshape(-1)[i], (fp - fm) / (2 * h))))
                    break
            else:
                kinks += 1
        report.max_rel_error[name] = max(errs, default=0.0)
        report.n_checked[name] = len(errs)
        report.n_kinks[name] = kinks

    for name, p in params.items():
        probe(name, p.data, analytic[name])
    if check_input:
        probe("input", x, grad_in)
    return report
