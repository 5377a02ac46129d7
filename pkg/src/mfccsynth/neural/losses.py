"""Least-squares adversarial losses.

Each function returns the scalar loss together with the gradient with
respect to the tensors the caller is allowed to optimize. Targets use
the 1/0 convention: real scores are pulled toward 1, fake toward 0,
and the generator pulls its fakes toward 1.
"""

import numpy as np

from ..errors import ContractError


def _check_scores(name, s):
    if s.ndim != 1 or s.size == 0:
        raise ContractError(f"{name} must be a nonempty 1-D score array")


def discriminator_loss(real_scores, fake_scores):
    """0.5*mean((real-1)^2) + 0.5*mean(fake^2).

    Returns (loss, grad_real, grad_fake).
    """
    _check_scores("real_scores", real_scores)
    _check_scores("fake_scores", fake_scores)
    dr = real_scores - 1.0
    loss = 0.5 * np.mean(dr * dr) + 0.5 * np.mean(fake_scores * fake_scores)
    return loss, dr / real_scores.size, fake_scores / fake_scores.size


def generator_adversarial_loss(fake_scores):
    """0.5*mean((fake-1)^2). Returns (loss, grad_fake)."""
    _check_scores("fake_scores", fake_scores)
    df = fake_scores - 1.0
    return 0.5 * np.mean(df * df), df / fake_scores.size


def peek_similarity_loss(real_acts, fake_acts):
    """0.5*mean((real-fake)^2) over an intermediate feature map.

    The real branch is treated as a constant target; only the gradient
    with respect to the fake activations is returned.
    """
    if real_acts.shape != fake_acts.shape:
        raise ContractError(
            f"peek activation shapes differ: {real_acts.shape} vs "
            f"{fake_acts.shape}")
    if real_acts.size == 0:
        raise ContractError("peek activations are empty")
    diff = fake_acts - real_acts
    return 0.5 * np.mean(diff * diff), diff / diff.size
