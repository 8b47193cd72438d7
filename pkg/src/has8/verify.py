"""Independent verification oracles.

Every check here recomputes its expected values through a second code path:
central finite differences for smooth layers, scalar closed-form gradient
transcriptions for the encoder surrogates, an exhaustive 256-point variance
table for the ordering claims, and a hand chain-rule recursion for BPTT.
Finite differences are never applied across the encoder or the spike
threshold; their true derivative is zero almost everywhere, so those paths
are checked against the closed forms instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import codec, tensor as tt
from .codec import SurrogateSpec
from .layers import BatchNorm, Conv2d, Linear
from .neuron import IFConfig, IFNeuron
from .tensor import Tensor, backward


@dataclass
class CheckReport:
    name: str
    max_abs_err: float
    max_rel_err: float
    passed: bool
    tolerance: str
    samples: int

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: max_abs={self.max_abs_err:.3e} max_rel={self.max_rel_err:.3e} ({self.tolerance}, n={self.samples})"


def finite_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, coordinate by coordinate."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def _report(name, got, want, rtol, atol, tol_note=None) -> CheckReport:
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    abs_err = np.abs(got - want)
    denom = np.maximum(np.abs(want), 1e-300)
    rel_err = abs_err / denom
    ok = np.all(abs_err <= atol + rtol * np.abs(want))
    note = tol_note or f"rtol={rtol:g} atol={atol:g}"
    return CheckReport(name, float(abs_err.max(initial=0.0)), float(rel_err.max(initial=0.0)), bool(ok), note, got.size)


# ---------------------------------------------------------------------------
# closed-form surrogate transcriptions (scalar, independent of codec's numpy path)


def _ref_sigmoid(u: float) -> float:
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def _ref_sigsine(i: float, k: int, alpha: float) -> float:
    u = alpha * math.sin(math.pi * i / 2.0**k)
    s = _ref_sigmoid(u)
    return s * (1.0 - s) * (alpha * math.pi / 2.0**k) * math.cos(math.pi * i / 2.0**k)


def _ref_tanhsine(i: float, k: int, alpha: float) -> float:
    u = alpha * math.sin(math.pi * i / 2.0**k)
    sech = 1.0 / math.cosh(u)
    return sech * sech * (alpha * math.pi / 2.0**k) * math.cos(math.pi * i / 2.0**k)


def _ref_fouriersine(i: float, k: int, n_terms: int, literal: bool) -> float:
    total = 0.0
    for n in range(1, n_terms + 1, 2):
        total += math.cos(n * math.pi * i / 2.0**k)
    coef = 1.0 / 2.0 ** (k - 1)
    return 0.5 - coef * total if literal else -coef * total


def _ref_surrogate(i: float, k: int, spec: SurrogateSpec) -> float:
    if spec.kind == "sigsine":
        return _ref_sigsine(i, k, spec.alpha)
    if spec.kind == "tanhsine":
        return _ref_tanhsine(i, k, spec.alpha)
    return _ref_fouriersine(i, k, spec.n_terms, spec.fourier_literal)


def _ref_rescale(k: int) -> float:
    return k / 2.0 ** (7 - k)


def surrogate_equiv_check(grid_points: int = 1024) -> list[CheckReport]:
    """Backward through the encoder vs the closed forms, per (kind, k, rescale).

    The autodiff side seeds the output gradient one timestep at a time; the
    expected value is 255 * G_k(I) * rescale_k evaluated by the scalar
    transcription above.
    """
    reports = []
    xs = np.linspace(0.0, 1.0, grid_points)
    for kind in codec.SURROGATE_KINDS:
        for rescale in (False, True):
            spec = SurrogateSpec(kind=kind, rescale=rescale)
            for k in range(8):
                t_index = codec.T_STEPS - 1 - k
                x = Tensor(xs.copy(), requires_grad=True)
                train = codec.bitplane_encode(x, spec)
                backward(tt.tsum(tt.index0(train.tensor, t_index)))
                got = x.grad
                intensities = codec.intensity_of(xs)
                factor = _ref_rescale(k) if rescale else 1.0
                want = np.array([255.0 * _ref_surrogate(float(i), k, spec) * factor for i in intensities])
                name = f"surrogate_equiv/{kind}/k{k}/{'rescale' if rescale else 'plain'}"
                reports.append(_report(name, got, want, rtol=1e-9, atol=1e-12, tol_note="rel 1e-9 (abs floor 1e-12)"))
    return reports


def variance_probe(kind: str, alpha: float = -10.0) -> tuple[dict, list[CheckReport]]:
    """Per-plane gradient variance over the full 256-intensity grid.

    Asserts the ordering claims: without rescaling the sigmoid/tanh wrapped
    gradients lose variance as the plane order k grows; the rescale envelope
    factor |alpha| pi k / 128 grows with k.  Fourier variances are reported
    but not asserted (the literal form's constant offset dominates them).
    """
    grid = np.arange(256, dtype=np.float64)
    spec = SurrogateSpec(kind=kind, alpha=alpha, rescale=False)
    variances = []
    envelopes = []
    for k in range(8):
        g = np.array([_ref_surrogate(float(i), k, spec) for i in grid])
        variances.append(float(g.var()))
        envelopes.append(abs(alpha) * math.pi * _ref_rescale(k) / 2.0**k)
    table = {
        "kind": kind,
        "variance_unscaled": variances,
        "rescale_envelope": envelopes,
    }
    reports = []
    if kind in ("sigsine", "tanhsine"):
        ordered = all(variances[k + 1] <= variances[k] * (1 + 1e-12) for k in range(7))
        worst = max(range(7), key=lambda k: variances[k + 1] / max(variances[k], 1e-300))
        reports.append(
            CheckReport(
                f"variance_ordering/{kind}/unscaled-nonincreasing",
                0.0 if ordered else variances[worst + 1] - variances[worst],
                0.0,
                ordered,
                "var(k+1) <= var(k)",
                8,
            )
        )
    env_ok = all(envelopes[k + 1] >= envelopes[k] for k in range(7))
    reports.append(
        CheckReport(
            f"variance_ordering/{kind}/rescaled-envelope-nondecreasing",
            0.0,
            0.0,
            env_ok,
            "envelope(k+1) >= envelope(k)",
            8,
        )
    )
    return table, reports


def bptt_chain_oracle(w_val: float, t_steps: int = 3, vth: float = 1.0, alpha: float = 2.0) -> float:
    """Hand chain rule for a one-weight IF chain with rate decoding.

    Differentiates the recurrence u(t) = (1 - s(t-1)) u(t-1) + w symbolically,
    tracking du/dw and ds/dw step by step, reset-path terms included.
    """
    u = 0.0
    s = 0.0
    du = 0.0
    ds = 0.0
    total = 0.0
    for _ in range(t_steps):
        du = (1.0 - s) * du - u * ds + 1.0
        u = (1.0 - s) * u + w_val
        surr = alpha / (2.0 * (1.0 + (math.pi / 2.0 * alpha * (u - vth)) ** 2))
        ds = surr * du
        s = 1.0 if u - vth >= 0 else 0.0
        total += ds
    return total / t_steps


def bptt_brute_force_check() -> list[CheckReport]:
    """Tape gradient of the scalar IF chain vs the symbolic recursion."""
    reports = []
    for w_val in (0.4, 1.5, 0.0, 0.9):
        w = Tensor(np.asarray(w_val, dtype=np.float64), requires_grad=True)
        neuron = IFNeuron(IFConfig())
        neuron.reset()
        outs = [neuron.step(w * 1.0) for _ in range(3)]
        y = tt.tmean(tt.stack(outs, axis=0), axis=0)
        backward(y)
        want = bptt_chain_oracle(w_val)
        reports.append(
            _report(f"bptt_oracle/w={w_val}", float(w.grad), want, rtol=0.0, atol=1e-10, tol_note="abs 1e-10")
        )
    return reports


# ---------------------------------------------------------------------------
# smooth-path finite differences


def _fd_check(name, make_loss, x0, rtol=1e-6, atol=1e-9) -> CheckReport:
    x = Tensor(x0.copy(), requires_grad=True)
    backward(make_loss(x))
    got = x.grad
    want = finite_diff(lambda a: float(make_loss(Tensor(a)).data), x0)
    return _report(name, got, want, rtol=rtol, atol=atol, tol_note=f"rel {rtol:g} vs central differences")


def check_smooth_ops(seed: int = 0) -> list[CheckReport]:
    """Finite-difference validation of every smooth layer and elementwise op."""
    rng = np.random.default_rng(seed)
    reports = []
    r3 = Tensor(rng.normal(size=(4, 5)))

    reports.append(_fd_check("fd/add", lambda x: tt.tsum(tt.add(x, x) * r3), rng.normal(size=(4, 5))))
    reports.append(_fd_check("fd/sub", lambda x: tt.tsum(tt.sub(x, x * 2.0) * r3), rng.normal(size=(4, 5))))
    reports.append(_fd_check("fd/mul", lambda x: tt.tsum(x * x * r3), rng.normal(size=(4, 5))))
    reports.append(_fd_check("fd/div", lambda x: tt.tsum(tt.div(r3, x)), rng.normal(size=(4, 5)) + 3.0))
    reports.append(_fd_check("fd/sigmoid", lambda x: tt.tsum(tt.sigmoid(x) * r3), rng.normal(size=(4, 5))))
    reports.append(_fd_check("fd/tanh", lambda x: tt.tsum(tt.tanh(x) * r3), rng.normal(size=(4, 5))))
    reports.append(_fd_check("fd/exp", lambda x: tt.tsum(tt.exp(x) * r3), rng.normal(size=(4, 5)) * 0.5))
    reports.append(_fd_check("fd/log", lambda x: tt.tsum(tt.log(x) * r3), rng.uniform(0.5, 2.0, (4, 5))))
    reports.append(_fd_check("fd/relu", lambda x: tt.tsum(tt.relu(x) * r3), rng.normal(size=(4, 5)) + 0.05))
    reports.append(_fd_check("fd/mean", lambda x: tt.tmean(x * x), rng.normal(size=(4, 5))))

    w = Tensor(rng.normal(size=(5, 3)))
    rm = Tensor(rng.normal(size=(4, 3)))
    reports.append(_fd_check("fd/matmul", lambda x: tt.tsum(tt.matmul(x, w) * rm), rng.normal(size=(4, 5))))

    lin = Linear(5, 3, rng)
    rl = Tensor(rng.normal(size=(4, 3)))
    reports.append(_fd_check("fd/linear", lambda x: tt.tsum(lin(x) * rl), rng.normal(size=(4, 5))))

    conv = Conv2d(3, 4, 3, rng, stride=1, pad=1)
    rc = Tensor(rng.normal(size=(2, 4, 6, 6)))
    reports.append(_fd_check("fd/conv2d", lambda x: tt.tsum(conv(x) * rc), rng.normal(size=(2, 3, 6, 6))))

    conv_s = Conv2d(3, 4, 2, rng, stride=2, pad=0)
    rs = Tensor(rng.normal(size=(2, 4, 3, 3)))
    reports.append(_fd_check("fd/conv2d-stride2", lambda x: tt.tsum(conv_s(x) * rs), rng.normal(size=(2, 3, 6, 6))))

    bn = BatchNorm(3)
    bn.gamma.data = rng.normal(size=3) + 1.5
    bn.beta.data = rng.normal(size=3)
    rb = Tensor(rng.normal(size=(4, 3, 5, 5)))
    reports.append(_fd_check("fd/batchnorm-train", lambda x: tt.tsum(bn(x) * rb), rng.normal(size=(4, 3, 5, 5))))

    bn_eval = BatchNorm(3)
    bn_eval.eval()
    reports.append(_fd_check("fd/batchnorm-eval", lambda x: tt.tsum(bn_eval(x) * rb), rng.normal(size=(4, 3, 5, 5))))

    rp = Tensor(rng.normal(size=(2, 3, 2, 2)))
    reports.append(_fd_check("fd/maxpool", lambda x: tt.tsum(tt.maxpool2d(x, 2) * rp), rng.normal(size=(2, 3, 4, 4))))

    from .optim import cross_entropy

    labels = rng.integers(0, 3, size=6)
    reports.append(_fd_check("fd/cross_entropy", lambda x: cross_entropy(x, labels), rng.normal(size=(6, 3))))

    # two-layer composite: the whole tape against one finite difference
    lin1 = Linear(6, 8, rng)
    lin2 = Linear(8, 2, rng)
    r2l = Tensor(rng.normal(size=(3, 2)))
    reports.append(_fd_check("fd/mlp-2layer", lambda x: tt.tsum(lin2(tt.tanh(lin1(x))) * r2l), rng.normal(size=(3, 6))))
    return reports


def run_all(grid_points: int = 1024) -> tuple[list[CheckReport], dict]:
    """Run the full verification suite; returns (reports, variance tables)."""
    reports = []
    reports.extend(check_smooth_ops())
    reports.extend(surrogate_equiv_check(grid_points))
    tables = {}
    for kind in codec.SURROGATE_KINDS:
        table, rs = variance_probe(kind)
        tables[kind] = table
        reports.extend(rs)
    reports.extend(bptt_brute_force_check())
    return reports, tables
