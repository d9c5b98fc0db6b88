"""Central finite-difference gradient oracle shared by unit and acceptance tests."""

import torch


def finite_difference_check(loss_fn, params, h=1e-4, rel_tol=1e-3, max_coords=None, atol=None):
    """Compare autograd gradients of loss_fn() against central differences.

    loss_fn must be deterministic (re-seed any noise internally). Checks each
    parameter tensor's gradient by vector relative error; with max_coords set,
    only that many coordinates (the largest-gradient ones) are perturbed.
    Gradients below the roundoff floor `atol` on both sides count as matching.
    Returns the worst relative error seen.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    if atol is None:
        atol = 1e-8 * (1.0 + abs(float(loss.detach())))
    worst = 0.0
    for p in params:
        grad = p.grad.detach().clone().reshape(-1)
        flat = p.data.reshape(-1)
        n = flat.numel()
        if max_coords is None or n <= max_coords:
            idx = range(n)
        else:
            # probe the most informative coordinates so the norm comparison
            # is not dominated by numerically zero entries
            idx = torch.topk(grad.abs(), max_coords).indices.tolist()
        fd = torch.zeros(len(list(idx)), dtype=p.dtype)
        an = torch.zeros_like(fd)
        for j, i in enumerate(idx):
            orig = flat[i].item()
            flat[i] = orig + h
            up = float(loss_fn())
            flat[i] = orig - h
            down = float(loss_fn())
            flat[i] = orig
            fd[j] = (up - down) / (2 * h)
            an[j] = grad[i]
        denom = max(float(fd.norm()), float(an.norm()))
        if denom < atol:
            continue
        rel = float((fd - an).norm()) / denom
        worst = max(worst, rel)
        assert rel < rel_tol, f"gradient mismatch {rel:.2e} on tensor of shape {tuple(p.shape)}"
    return worst
