"""Gaussian-process surrogate and expected improvement.

Inputs are mapped to the unit cube of the design box and outputs are
standardised. The squared-exponential kernel has one length scale per
dimension, chosen by profile likelihood over a log grid with coordinate
sweeps; the signal variance has a closed-form optimum for given length scales.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist
from scipy.stats import norm

logger = logging.getLogger(__name__)

LENGTH_GRID = np.logspace(np.log10(0.05), 1.0, 16)
NOISE_FLOOR = 1e-8
_MAX_JITTER = 1e-2


class GpSurrogate:
    """Noise-free GP regression over a box.

    Args:
        lower (np.ndarray): Box lower corner.
        upper (np.ndarray): Box upper corner.
        noise (float): Diagonal noise floor in standardised units.
        sweeps (int): Coordinate sweeps of the length-scale search.
    """

    def __init__(self, lower: np.ndarray, upper: np.ndarray, noise: float = NOISE_FLOOR, sweeps: int = 2):
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        self.noise = noise
        self.sweeps = sweeps
        self.length_scales = np.full(self.lower.size, 0.5)
        self.signal_variance = 1.0
        self._inputs: np.ndarray | None = None
        self._factor = None
        self._alpha: np.ndarray | None = None
        self._y_mean = 0.0
        self._y_std = 1.0

    def _unit(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(np.asarray(x, dtype=np.float64)) - self.lower) / (self.upper - self.lower)

    def _correlation(self, a: np.ndarray, b: np.ndarray, scales: np.ndarray) -> np.ndarray:
        return np.exp(-0.5 * cdist(a / scales, b / scales, metric="sqeuclidean"))

    def _factorize(self, corr: np.ndarray):
        jitter = self.noise
        eye = np.eye(corr.shape[0])
        while True:
            try:
                return cho_factor(corr + jitter * eye, lower=True), jitter
            except np.linalg.LinAlgError:
                if jitter >= _MAX_JITTER:
                    raise
                jitter *= 10.0

    def _profile_nll(self, inputs: np.ndarray, y: np.ndarray, scales: np.ndarray) -> float:
        try:
            factor, _ = self._factorize(self._correlation(inputs, inputs, scales))
        except np.linalg.LinAlgError:
            return np.inf
        variance = max(float(y @ cho_solve(factor, y)) / y.size, 1e-300)
        log_det = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
        return 0.5 * y.size * np.log(variance) + 0.5 * log_det

    def fit(self, x: np.ndarray, y: np.ndarray) -> GpSurrogate:
        """Fit hyperparameters and the posterior to observations ``(x, y)``.

        Raises:
            ValueError: With no observations or mismatched lengths.
        """
        inputs = self._unit(x)
        values = np.asarray(y, dtype=np.float64).ravel()
        if values.size == 0 or values.size != inputs.shape[0]:
            raise ValueError(f"GP needs matching observations, got {inputs.shape[0]} inputs and {values.size} outputs")
        self._y_mean = float(values.mean())
        spread = float(values.std())
        self._y_std = spread if spread > 0 else 1.0
        standard = (values - self._y_mean) / self._y_std

        scores = [self._profile_nll(inputs, standard, np.full(inputs.shape[1], scale)) for scale in LENGTH_GRID]
        scales = np.full(inputs.shape[1], LENGTH_GRID[int(np.argmin(scores))])
        for _ in range(self.sweeps):
            for dim in range(scales.size):
                trial = scales.copy()
                best_value, best_nll = scales[dim], np.inf
                for candidate in LENGTH_GRID:
                    trial[dim] = candidate
                    nll = self._profile_nll(inputs, standard, trial)
                    if nll < best_nll:
                        best_value, best_nll = candidate, nll
                scales[dim] = best_value

        self.length_scales = scales
        self._factor, jitter = self._factorize(self._correlation(inputs, inputs, scales))
        self._alpha = cho_solve(self._factor, standard)
        self.signal_variance = float(standard @ self._alpha) / standard.size
        self._inputs = inputs
        logger.debug("GP fit on %d points: length scales %s (jitter %.1e)", values.size, np.round(scales, 3), jitter)
        return self

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation in objective units."""
        if self._inputs is None or self._alpha is None:
            raise ValueError("GP surrogate has not been fitted")
        cross = self._correlation(self._unit(x), self._inputs, self.length_scales)
        mean = cross @ self._alpha
        reduction = np.einsum("ij,ji->i", cross, cho_solve(self._factor, cross.T))
        variance = np.clip(self.signal_variance * (1.0 - reduction), 0.0, None)
        return self._y_mean + self._y_std * mean, self._y_std * np.sqrt(variance)


def expected_improvement_from_moments(mean: np.ndarray, std: np.ndarray, best: float) -> np.ndarray:
    """EI for maximisation; zero wherever the standard deviation is zero."""
    mu = np.asarray(mean, dtype=np.float64)
    sigma = np.asarray(std, dtype=np.float64)
    gain = mu - best
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(sigma > 0, gain / sigma, 0.0)
        ei = gain * norm.cdf(u) + sigma * norm.pdf(u)
    return np.where(sigma > 0, np.maximum(ei, 0.0), 0.0)


def expected_improvement(surrogate: GpSurrogate, candidate: np.ndarray, best_so_far: float) -> np.ndarray:
    mean, std = surrogate.predict(candidate)
    return expected_improvement_from_moments(mean, std, best_so_far)
