import torch


def finite_difference_audit(model, loss_fn, h=1e-6):
    """Per-tensor ``max|analytic - fd| / max|fd|`` with central differences on every entry."""
    worst = {}
    for name, p in model.named_parameters():
        model.zero_grad()
        loss_fn().backward()
        analytic = p.grad.detach().clone().reshape(-1)
        fd = torch.empty_like(analytic)
        flat = p.data.reshape(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + h
                up = loss_fn().item()
                flat[i] = orig - h
                down = loss_fn().item()
                flat[i] = orig
            fd[i] = (up - down) / (2 * h)
        scale = max(fd.abs().max().item(), 1e-12)
        worst[name] = (analytic - fd).abs().max().item() / scale
    return worst
