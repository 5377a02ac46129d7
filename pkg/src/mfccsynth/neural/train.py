"""Training loops: adversarial pulse refinement and the supervised
pulse model.

The GAN loop alternates one discriminator update with one generator
update per batch. Fakes for the discriminator step come from the
generator in inference mode; during the generator step the
discriminator stays entirely fixed (inference mode, no weight update).
A non-finite loss aborts training immediately so the checkpoint from
the previous epoch remains the last usable state.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, InvariantError
from .losses import (discriminator_loss, generator_adversarial_loss,
                     peek_similarity_loss)
from .models import Discriminator, Generator, PulseModel
from .optim import Adam


def smooth_pulse_surrogate(pulses, width=21):
    """Coarse pulses from real ones: per-pulse moving average with a
    raised-cosine weighting. Removes the high band the generator is
    expected to restore."""
    if width < 3 or width % 2 == 0:
        raise ContractError("smoothing width must be odd and >= 3")
    n = np.arange(1, width + 1)
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / (width + 1))
    w = w / w.sum()
    out = np.empty_like(pulses)
    for i in range(pulses.shape[0]):
        out[i] = np.convolve(pulses[i], w, mode="same")
    return out


@dataclass
class GanTrainResult:
    generator: Generator
    discriminator: Discriminator
    history: list = field(default_factory=list)
    epochs_run: int = 0


def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = perm[start:start + batch_size]
        if idx.size >= 2:
            yield idx


def train_gan(pulses, xhat=None, *, epochs=20, batch_size=64, lr=1e-4,
              beta1=0.5, beta2=0.999, seed=0, checkpoint_dir=None,
              log=None):
    """Train the residual generator against the discriminator.

    pulses: (n, 400) real pulse matrix; xhat: matching coarse pulses,
    derived by smoothing when omitted. Returns a GanTrainResult with
    one history row per batch.
    """
    pulses = np.asarray(pulses, dtype=np.float64)
    if pulses.ndim != 2:
        raise ContractError(f"pulses must be 2-D, got shape {pulses.shape}")
    if pulses.shape[0] < 2:
        raise ContractError("need at least 2 pulses to train")
    if not np.all(np.isfinite(pulses)):
        raise ContractError("pulses contain non-finite values")
    if xhat is None:
        xhat = smooth_pulse_surrogate(pulses)
    xhat = np.asarray(xhat, dtype=np.float64)
    if xhat.shape != pulses.shape:
        raise ContractError(
            f"coarse pulse shape {xhat.shape} does not match pulses "
            f"{pulses.shape}")
    if epochs < 1:
        raise ContractError("epochs must be >= 1")

    rng = np.random.default_rng(seed)
    gen = Generator(rng=rng)
    disc = Discriminator(rng=rng)
    opt_g = Adam(lr=lr, beta1=beta1, beta2=beta2)
    opt_d = Adam(lr=lr, beta1=beta1, beta2=beta2)
    result = GanTrainResult(gen, disc)
    n, t = pulses.shape
    last_checkpoint = None

    for epoch in range(epochs):
        for batch_no, idx in enumerate(_batches(n, batch_size, rng)):
            real = pulses[idx]
            coarse = xhat[idx]
            b = idx.size

            # one generator forward serves both steps: its weights do
            # not change during the discriminator update, so the cached
            # activations stay valid for the generator backward below
            gen.zero_grads()
            z = rng.standard_normal((b, t))
            fake = gen.forward(z, coarse, train=True)

            # discriminator step: real toward 1, generated toward 0
            disc.zero_grads()
            s_real, _ = disc.forward(real, train=True)
            grad_real = (s_real - 1.0) / b
            disc.backward(grad_real)
            s_fake, _ = disc.forward(fake, train=True)
            loss_d, _, grad_fake = discriminator_loss(s_real, s_fake)
            disc.backward(grad_fake)
            opt_d.step(disc.named_trainable())

            # generator step against the updated, now-fixed discriminator
            disc.zero_grads()
            _, peek_real = disc.forward(real, train=False)
            s_fake, peek_fake = disc.forward(fake, train=False)
            loss_adv, grad_scores = generator_adversarial_loss(s_fake)
            loss_peek, grad_peek = peek_similarity_loss(peek_real, peek_fake)
            dx = disc.backward(grad_scores, grad_peek)
            gen.backward(dx)
            opt_g.step(gen.named_trainable())

            row = {"epoch": epoch, "batch": batch_no, "loss_d": loss_d,
                   "loss_g_adv": loss_adv, "loss_g_peek": loss_peek}
            result.history.append(row)
            if not (np.isfinite(loss_d) and np.isfinite(loss_adv)
                    and np.isfinite(loss_peek)):
                raise InvariantError(
                    f"non-finite loss at epoch {epoch} batch {batch_no}"
                    + (f"; last checkpoint: {last_checkpoint}"
                       if last_checkpoint else "; no checkpoint written"))
        result.epochs_run = epoch + 1
        if checkpoint_dir is not None:
            os.makedirs(checkpoint_dir, exist_ok=True)
            gpath = os.path.join(checkpoint_dir,
                                 f"generator_epoch{epoch + 1:03d}.nnw")
            dpath = os.path.join(checkpoint_dir,
                                 f"discriminator_epoch{epoch + 1:03d}.nnw")
            gen.save(gpath)
            disc.save(dpath)
            last_checkpoint = gpath
        if log is not None:
            tail = result.history[-1]
            log(f"epoch {epoch + 1}/{epochs} loss_d={tail['loss_d']:.4f} "
                f"loss_g_adv={tail['loss_g_adv']:.4f} "
                f"loss_g_peek={tail['loss_g_peek']:.4f}")
    return result


def train_pulse_model(contexts, targets, *, epochs=10, batch_size=64,
                      lr=1e-4, seed=0, log=None):
    """Supervised pulse model fit, mean squared error on the pulse.

    contexts: (n, frames, 22) conditioning windows; targets: (n, 400).
    Returns (model, history).
    """
    contexts = np.asarray(contexts, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if contexts.ndim != 3 or targets.ndim != 2 \
            or contexts.shape[0] != targets.shape[0]:
        raise ContractError(
            f"bad training shapes: {contexts.shape} vs {targets.shape}")
    rng = np.random.default_rng(seed)
    model = PulseModel(rng=rng)
    opt = Adam(lr=lr)
    history = []
    for epoch in range(epochs):
        for idx in _batches(contexts.shape[0], batch_size, rng):
            model.zero_grads()
            pred = model.forward(contexts[idx], train=True)
            err = pred - targets[idx]
            loss = np.mean(err * err)
            model.backward(2.0 * err / err.size)
            opt.step(model.named_trainable())
            history.append({"epoch": epoch, "loss": loss})
            if not np.isfinite(loss):
                raise InvariantError(
                    f"non-finite pulse model loss at epoch {epoch}")
        if log is not None:
            log(f"epoch {epoch + 1}/{epochs} "
                f"loss={history[-1]['loss']:.6f}")
    return model, history
