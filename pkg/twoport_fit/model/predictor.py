"""
Inference: spectrum to configuration, optionally refined.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import torch

from twoport_fit.circuit.components import Configuration
from twoport_fit.config.config_manager import ConfigManager
from twoport_fit.dataset.grid import ValueGrid
from twoport_fit.diffsim.refine import RefinementResult, Refiner
from twoport_fit.exceptions import InvalidInputError, PredictionError
from twoport_fit.model.checkpoint import load_checkpoint
from twoport_fit.model.decoder import DecodeResult, decode
from twoport_fit.model.hypernet import HyperDecoder, spectra_tensor
from twoport_fit.simulation.simulator import Spectrum, normalize


@dataclass
class Prediction:
    """
    Attributes:
        config: Predicted configuration; refined values when refinement ran.
        decoded: Configuration straight from the decoder.
        refinement: Refinement result, when requested.
    """
    config: Configuration
    decoded: Configuration
    refinement: Optional[RefinementResult] = None


class Predictor:
    """
    Class to turn spectra into configurations with a trained model.
    """
    def __init__(self, model: HyperDecoder, config_manager: Optional[ConfigManager] = None):
        """
        Initialize the predictor.

        Args:
            model: Trained model; it is switched to eval mode.
            config_manager: Instance of ConfigManager for refinement settings.
        """
        self.model = model.eval()
        self.config = config_manager or ConfigManager()
        self.grid = ValueGrid.with_bins(model.config.n_bins)
        self.refiner = Refiner(self.config)
        self.logger = logging.getLogger('Predictor')

    @classmethod
    def from_checkpoint(cls, path: str, config_manager: Optional[ConfigManager] = None) -> 'Predictor':
        model, _ = load_checkpoint(path)
        return cls(model, config_manager)

    def decode(self, spectrum: Spectrum) -> DecodeResult:
        """Normalize, run the hypernetwork and decode greedily."""
        if len(spectrum) != self.model.config.input_length:
            raise InvalidInputError(
                f"Spectrum has {len(spectrum)} points, model expects {self.model.config.input_length}"
            )
        dtype = next(self.model.parameters()).dtype
        with torch.no_grad():
            weights, h0 = self.model.decoder_weights(spectra_tensor([normalize(spectrum)], dtype))
        return decode(weights, self.model.config.max_len, h0, self.grid)

    def predict(self, spectrum: Spectrum, refine: bool = False) -> Prediction:
        """
        Predict the configuration that produced a spectrum.

        Args:
            spectrum: Raw target spectrum.
            refine: Refine the decoded values against the spectrum and
                re-quantize them.

        Returns:
            The prediction.

        Raises:
            PredictionError: when the decoder emits EOS first.
        """
        result = self.decode(spectrum)
        if result.degenerate:
            raise PredictionError("Decoder produced an empty configuration")
        if not refine:
            return Prediction(result.config, result.config)

        refinement = self.refiner.refine(result.config, spectrum)
        refined = refinement.candidate.to_configuration(self.grid)
        return Prediction(refined, result.config, refinement)


def predict(spectrum: Spectrum, model: HyperDecoder, refine: bool = False,
            config_manager: Optional[ConfigManager] = None) -> Configuration:
    """Configuration predicted for ``spectrum``; see :meth:`Predictor.predict`."""
    return Predictor(model, config_manager).predict(spectrum, refine).config
