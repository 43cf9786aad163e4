"""Influence-function pseudo-outcomes and their mixed-bias companions.

Every estimator in the package is a (weighted) mean of one of the
pseudo-outcomes below; the influence function is the pseudo-outcome minus
the target.  The functions are written for a generic ``treat`` indicator
and ``outcome`` so that one formula covers the ATE (treat = A, outcome = Y),
a mean potential outcome (treat = I{A=a}, outcome = I{A=a} Y) and a
backward step of the longitudinal recursion (outcome = I{A_t=a_t} Psi_{t+1}).
"""

from __future__ import annotations

import numpy as np


def fixed_weight_pseudo(weight, treat, outcome, delta, rho, eta, kappa, gamma):
    """Pseudo-outcome for a prespecified weighting function.

    (w - rho)(O - eta)/kappa + (1 - (w - rho)(T - delta)/kappa) gamma
    """
    centred = (weight - rho) / kappa
    return centred * (outcome - eta) + (1.0 - centred * (treat - delta)) * gamma


def adaptive_pseudo(treat, outcome, prop, delta, kappa, xi, eta, gamma):
    """Pseudo-outcome when the weight is the fitted propensity ``prop``.

    Covers both the ATE form (outcome = Y) and the per-arm / per-period
    form (outcome = I{A=a} times the downstream pseudo-outcome).
    """
    return (
        (prop - delta) / kappa * outcome
        + (treat - prop) / kappa * xi
        - (treat - delta) / kappa * eta
        + (1.0 + ((treat - prop) ** 2 - (treat - delta) ** 2) / kappa) * gamma
    )


def miv_pseudo(weight, treat, y, delta, rho, eta, kappa, gamma):
    """Pseudo-outcome for the multiplicative-IV mean potential outcome.

    Here ``eta`` is E[I{A=a} Y | L] and ``gamma`` the covariance ratio of
    I{A=a} Y and I{A=a} with the weight.
    """
    scale = (1.0 - delta) / kappa * (weight - rho)
    return (1.0 - treat) * gamma + treat * y + scale * (treat * y - eta) - scale * gamma * (treat - delta)


def fixed_weight_step_weight(weight, treat, rho, kappa):
    """Per-period inverse weight (w_t - rho_t) I{A_t=a_t} / kappa_t."""
    return (weight - rho) * treat / kappa


def adaptive_step_weight(treat, prop, delta, kappa):
    """Per-period inverse weight (pi_t - delta_t) I{A_t=a_t} / kappa_t."""
    return (prop - delta) / kappa * treat


def longitudinal_closed_form(y, weights, treats, rhos, kappas, deltas, etas, gammas):
    """Product expansion of the backward recursion, evaluated at t = 0.

    All arguments except ``y`` are per-period lists (t = 0..T) of arrays.
    Computes

        prod_t W_t * Y + sum_t (prod_{s<t} W_s) * {(1 - c_t (A_t - delta_t)) gamma_t - c_t eta_t}

    with c_t = (w_t - rho_t)/kappa_t and W_t = c_t I{A_t = a_t}.
    """
    horizon = len(weights)
    step = [fixed_weight_step_weight(weights[t], treats[t], rhos[t], kappas[t]) for t in range(horizon)]
    lead = np.ones_like(np.asarray(y, dtype=float))
    total = np.zeros_like(lead)
    for t in range(horizon):
        c = (weights[t] - rhos[t]) / kappas[t]
        total = total + lead * ((1.0 - c * (treats[t] - deltas[t])) * gammas[t] - c * etas[t])
        lead = lead * step[t]
    return total + lead * y


def longitudinal_adaptive_closed_form(y, treats, props, deltas, kappas, xis, etas, gammas):
    """Product expansion of the adaptive backward recursion at t = 0."""
    horizon = len(treats)
    lead = np.ones_like(np.asarray(y, dtype=float))
    total = np.zeros_like(lead)
    for t in range(horizon):
        a, p, d, k = treats[t], props[t], deltas[t], kappas[t]
        bracket = (a - p) * xis[t] - (a - d) * etas[t] + gammas[t] * (k + (a - p) ** 2 - (a - d) ** 2)
        total = total + lead * bracket / k
        lead = lead * adaptive_step_weight(a, p, d, k)
    return total + lead * y


# ------------------------------------------------------------- mixed bias

def fixed_weight_mixed_bias(kappa, kappa0, gamma, gamma0, rho, rho0, eta, eta0, delta, delta0):
    """Integrand whose mean is E[phi(O; psi0, alpha)] for a perturbed alpha."""
    return (
        (kappa - kappa0) * (gamma - gamma0)
        + (rho - rho0) * (eta - eta0)
        - (rho - rho0) * (delta - delta0) * gamma
    ) / kappa


def adaptive_mixed_bias(kappa, kappa0, gamma, gamma0, delta, delta0, prop, prop0, xi, xi0, eta, eta0):
    return (
        (gamma - gamma0) * (kappa - kappa0)
        - gamma * (delta0 - delta) ** 2
        + gamma * (prop0 - prop) ** 2
        - (xi - xi0) * (prop - prop0)
        + (eta - eta0) * (delta - delta0)
    ) / kappa


def longitudinal_mixed_bias(weights, treats, rhos, rhos0, kappas, kappas0, deltas, deltas0,
                            etas, etas0, gammas, gammas0):
    """Sum over periods of the leading product times the period's
    three-term product of nuisance errors (all lists indexed by t)."""
    horizon = len(weights)
    lead = np.ones_like(np.asarray(weights[0], dtype=float))
    total = np.zeros_like(lead)
    for t in range(horizon):
        total = total + lead * fixed_weight_mixed_bias(
            kappas[t], kappas0[t], gammas[t], gammas0[t], rhos[t], rhos0[t],
            etas[t], etas0[t], deltas[t], deltas0[t],
        )
        lead = lead * fixed_weight_step_weight(weights[t], treats[t], rhos[t], kappas[t])
    return total
