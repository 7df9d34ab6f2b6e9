import numpy as np
import pytest
import torch


def fd_grad(fn, tensor, eps=1e-4, index=None):
    """Central finite differences of scalar ``fn()`` w.r.t. entries of ``tensor`` (in place)."""
    flat = tensor.data.view(-1)
    idx = range(flat.numel()) if index is None else index
    out = []
    for i in idx:
        orig = flat[i].item()
        flat[i] = orig + eps
        up = fn().item()
        flat[i] = orig - eps
        down = fn().item()
        flat[i] = orig
        out.append((up - down) / (2 * eps))
    return torch.tensor(out, dtype=torch.float64)


def rel_err(a, b):
    a, b = torch.as_tensor(a, dtype=torch.float64).flatten(), torch.as_tensor(b, dtype=torch.float64).flatten()
    denom = max(a.norm().item(), b.norm().item(), 1e-12)
    return (a - b).norm().item() / denom


def grad_check(fn, tensors, eps=1e-4, max_entries=None, seed=0):
    """Worst relative error between autograd and finite differences over ``tensors``."""
    gen = np.random.default_rng(seed)
    worst = 0.0
    for t in tensors:
        if t.grad is not None:
            t.grad = None
    loss = fn()
    loss.backward()
    for t in tensors:
        n = t.numel()
        index = None
        if max_entries is not None and n > max_entries:
            index = sorted(gen.choice(n, size=max_entries, replace=False).tolist())
        analytic = t.grad.view(-1) if index is None else t.grad.view(-1)[index]
        with torch.no_grad():
            numeric = fd_grad(fn, t, eps, index)
        assert analytic.abs().sum() > 0 or numeric.abs().sum() == 0
        worst = max(worst, rel_err(analytic, numeric))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def double_torch():
    prev = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(prev)


def leaky_margin(module, fn):
    """Smallest |pre-activation| reaching any leaky ReLU inside ``module`` during ``fn()``."""
    found = []

    def hook(m, inputs):
        found.append(inputs[0].detach().abs().min().item())

    handles = [m.register_forward_pre_hook(hook) for m in module.modules() if isinstance(m, torch.nn.LeakyReLU)]
    try:
        with torch.no_grad():
            fn()
    finally:
        for h in handles:
            h.remove()
    return min(found, default=float("inf"))


def kink_free(build, margin=3e-4, tries=200):
    """Redraw ``build(seed) -> (module, fn, tensors)`` until no leaky ReLU input is within ``margin`` of 0.

    Central differences at eps=1e-4 are only meaningful away from the kink.
    """
    for seed in range(tries):
        module, fn, tensors = build(seed)
        if leaky_margin(module, fn) > margin:
            return module, fn, tensors
    raise RuntimeError("no kink-free draw found")


# acceptance verdict lines, echoed again in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
