"""
Pump and crystal inputs for type-II PDC, and the dimensionless quantities
derived from them.

Units: durations in ps, angular frequencies in rad/ps (detunings from the
carrier), crystal length in mm, poling period in um.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

from ..errors import DegenerateAdvance, InvalidSchmidtDomain, NonPositiveInput

SIGMA_S = 1.61

# ppKTP, symmetric group velocity matching, L = 40 mm, pump at 791.5 nm
PPKTP_TAU_O = 2.95
PPKTP_TAU_E = -2.95
PPKTP_LENGTH_MM = 40.0
PPKTP_POLING_UM = 47.6
PPKTP_PUMP_WAVELENGTH_NM = 791.5

# |1 + t_o*t_e| below this is the degenerate point (M12 = 0, C infinite)
SCHMIDT_DOMAIN_EPS = 1e-12


@dataclass(frozen=True)
class PdcParams:
    pump_fwhm: float
    tau_o: float
    tau_e: float
    sigma_s: float
    omega_p: float
    t_o: float
    t_e: float
    crystal_length: Optional[float] = None
    poling_period: Optional[float] = None
    pump_wavelength: Optional[float] = field(default=None, compare=False)

    @property
    def delta_s(self) -> float:
        return 2.0 * math.sqrt(math.log(2.0)) / self.sigma_s

    def scaled(self, pump_fwhm: float) -> "PdcParams":
        """Same crystal, different pump duration."""
        return derive_params(
            pump_fwhm, self.tau_o, self.tau_e, self.sigma_s,
            crystal_length=self.crystal_length,
            poling_period=self.poling_period,
            pump_wavelength=self.pump_wavelength,
        )


def pump_bandwidth(pump_fwhm: float) -> float:
    """Omega_p = sqrt(2 ln 2)/tau_p in rad/ps."""
    if not pump_fwhm > 0:
        raise NonPositiveInput(f"pump_fwhm must be positive, got {pump_fwhm}")
    return math.sqrt(2.0 * math.log(2.0)) / pump_fwhm


def advance_time(omega_p: float, tau: float, sigma_s: float) -> float:
    return math.sqrt(2.0) * omega_p * tau / sigma_s


def derive_params(
        pump_fwhm: float,
        tau_o: float,
        tau_e: float,
        sigma_s: float = SIGMA_S,
        crystal_length: Optional[float] = None,
        poling_period: Optional[float] = None,
        pump_wavelength: Optional[float] = None,
    ) -> PdcParams:
    if not sigma_s > 0:
        raise NonPositiveInput(f"sigma_s must be positive, got {sigma_s}")
    omega_p = pump_bandwidth(pump_fwhm)
    if tau_o == tau_e:
        raise DegenerateAdvance(f"tau_o == tau_e == {tau_o} ps: the JTA diverges")
    t_o = advance_time(omega_p, tau_o, sigma_s)
    t_e = advance_time(omega_p, tau_e, sigma_s)
    if abs(1.0 + t_o * t_e) <= SCHMIDT_DOMAIN_EPS:
        raise InvalidSchmidtDomain(
            f"1 + t_o*t_e = {1.0 + t_o * t_e:.3e} is zero (t_o={t_o:.6g}, t_e={t_e:.6g})"
        )
    return PdcParams(
        pump_fwhm=pump_fwhm,
        tau_o=tau_o,
        tau_e=tau_e,
        sigma_s=sigma_s,
        omega_p=omega_p,
        t_o=t_o,
        t_e=t_e,
        crystal_length=crystal_length,
        poling_period=poling_period,
        pump_wavelength=pump_wavelength,
    )


def single_mode_pump_duration(tau_o: float, sigma_s: float = SIGMA_S) -> float:
    """
    Pump FWHM at which the symmetric crystal is single-mode (t_o = 1),
    tau_p = delta_s * tau_o with delta_s = 2 sqrt(ln 2)/sigma_s.
    """
    if not tau_o > 0:
        raise NonPositiveInput(f"tau_o must be positive, got {tau_o}")
    if not sigma_s > 0:
        raise NonPositiveInput(f"sigma_s must be positive, got {sigma_s}")
    return 2.0 * math.sqrt(math.log(2.0)) / sigma_s * tau_o


def pump_duration_for_t(t_o: float, tau_o: float, sigma_s: float = SIGMA_S) -> float:
    """Inverse of the t_o map: the pump FWHM giving the requested t_o."""
    if not t_o > 0:
        raise NonPositiveInput(f"t_o must be positive, got {t_o}")
    return single_mode_pump_duration(tau_o, sigma_s) / t_o


def ppktp(pump_fwhm: float, sigma_s: float = SIGMA_S) -> PdcParams:
    return derive_params(
        pump_fwhm, PPKTP_TAU_O, PPKTP_TAU_E, sigma_s,
        crystal_length=PPKTP_LENGTH_MM,
        poling_period=PPKTP_POLING_UM,
        pump_wavelength=PPKTP_PUMP_WAVELENGTH_NM,
    )
