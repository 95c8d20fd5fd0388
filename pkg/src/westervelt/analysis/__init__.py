"""Constants, energy estimates, monitors and smallness certificates."""

from .certificate import Condition, SmallnessCertificate, smallness_certificate
from .constants import (ConstantEstimate, ConstantsTable, estimate_constants,
                        estimate_embedding_constant, estimate_poincare_constant,
                        estimate_trace_constant, printed_young_constant, young_constant)
from .energy import ESTIMATES, FORMULATION_OF, EnergyReport, Term, energy_report, fit_cbar
from .interface import FluxBalance, interface_flux_balance
from .ingredients import DataNorms, FieldStats, data_norms, field_stats, frozen_fields
from .monitors import (LINF_VARIANTS, DegeneracyMargin, LinfBound, degeneracy_margin,
                       linf_bound)
from .reflection import Reflection, reflection_coefficient, window_energy

__all__ = [
    "Condition", "SmallnessCertificate", "smallness_certificate",
    "ConstantEstimate", "ConstantsTable", "estimate_constants",
    "estimate_embedding_constant", "estimate_poincare_constant", "estimate_trace_constant",
    "printed_young_constant", "young_constant",
    "ESTIMATES", "FORMULATION_OF", "EnergyReport", "Term", "energy_report", "fit_cbar",
    "FluxBalance", "interface_flux_balance",
    "DataNorms", "FieldStats", "data_norms", "field_stats", "frozen_fields",
    "LINF_VARIANTS", "DegeneracyMargin", "LinfBound", "degeneracy_margin", "linf_bound",
    "Reflection", "reflection_coefficient", "window_energy",
]
