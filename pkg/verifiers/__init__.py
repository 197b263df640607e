"""
Module verifiers - Unités de vérification pilotées par la ligne de commande.
"""

from .base_verifier import BaseVerifier, ErrorType, VerificationError
from .lde_verifier import LDEVerifier
from .solution_verifier import SolutionVerifier
from .reduction_runner import ReductionRunner
from .compat_verifier import CompatVerifier

__all__ = [
    'BaseVerifier',
    'ErrorType',
    'VerificationError',
    'LDEVerifier',
    'SolutionVerifier',
    'ReductionRunner',
    'CompatVerifier'
]
