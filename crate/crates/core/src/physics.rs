//! Single-diode PV cell model, module temperature, solar geometry and
//! Haurwitz clear-sky irradiance.

use chrono::{DateTime, Datelike, Timelike, Utc};

use crate::error::{Error, Result};

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Exponent arguments are clamped here to keep `exp` finite.
pub const MAX_EXPONENT: f64 = 500.0;
/// Absolute current tolerance of the implicit cell-current solver, A.
pub const CURRENT_TOLERANCE: f64 = 1e-10;
/// Largest accepted residual at the returned root, A.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
/// Grid size of the maximum-power search.
pub const MPP_GRID: usize = 512;

/// Temperature coefficient of the fleet performance model, 1/°C.
pub const POWER_TEMP_COEFF: f64 = -0.004;
/// Irradiance at standard test conditions, W/m².
pub const STC_IRRADIANCE: f64 = 1000.0;
/// Module temperature at standard test conditions, °C.
pub const STC_TEMPERATURE: f64 = 25.0;

const HAURWITZ_SCALE: f64 = 1098.0;
const HAURWITZ_EXTINCTION: f64 = 0.057;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiodeParams {
    /// I_0, A.
    pub saturation_current: f64,
    /// n in the Shockley equation.
    pub ideality: f64,
    /// Junction temperature, K.
    pub temperature: f64,
    /// I_l, A.
    pub light_current: f64,
    /// R_s, Ω.
    pub series_resistance: f64,
    /// R_sh, Ω.
    pub shunt_resistance: f64,
    /// A in the implicit cell equation.
    pub diode_factor: f64,
}

impl DiodeParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.saturation_current > 0.0
            && self.temperature > 0.0
            && self.shunt_resistance > 0.0
            && self.series_resistance >= 0.0
            && self.ideality > 0.0
            && self.diode_factor > 0.0
            && self.light_current >= 0.0;
        if !ok {
            return Err(Error::Domain(format!("invalid diode parameters: {self:?}")));
        }
        Ok(())
    }

    /// `A k T / q`, the voltage scale of the implicit cell equation.
    fn cell_voltage_scale(&self) -> f64 {
        self.diode_factor * BOLTZMANN * self.temperature / ELEMENTARY_CHARGE
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModuleWeather {
    /// Ambient temperature, °C.
    pub ambient_temp: f64,
    /// W/m².
    pub irradiance: f64,
    /// m/s.
    pub wind_speed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolarPosition {
    pub cos_zenith: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiodeCurrent {
    pub amps: f64,
    /// The exponent hit [`MAX_EXPONENT`].
    pub saturated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaxPowerPoint {
    pub voltage: f64,
    pub current: f64,
    pub power: f64,
}

/// `kT/q`.
pub fn thermal_voltage(kelvin: f64) -> Result<f64> {
    if kelvin <= 0.0 || !kelvin.is_finite() {
        return Err(Error::Domain(format!("temperature must be positive, got {kelvin} K")));
    }
    Ok(BOLTZMANN * kelvin / ELEMENTARY_CHARGE)
}

fn clamped_exp(arg: f64) -> (f64, bool) {
    if arg > MAX_EXPONENT {
        (MAX_EXPONENT.exp(), true)
    } else {
        (arg.exp(), false)
    }
}

/// Shockley diode current at junction voltage `v_j`.
pub fn diode_current(v_j: f64, p: &DiodeParams) -> Result<DiodeCurrent> {
    p.validate()?;
    let vt = thermal_voltage(p.temperature)?;
    let (e, saturated) = clamped_exp(v_j / (p.ideality * vt));
    Ok(DiodeCurrent {
        amps: p.saturation_current * (e - 1.0),
        saturated,
    })
}

/// Residual of the implicit cell equation; zero at the operating current.
pub fn cell_residual(current: f64, v_pv: f64, p: &DiodeParams) -> f64 {
    let vd = v_pv + current * p.series_resistance;
    let (e, _) = clamped_exp(vd / p.cell_voltage_scale());
    p.light_current - p.saturation_current * (e - 1.0) - vd / p.shunt_resistance - current
}

/// Solves the implicit single-diode equation for the cell current by bisection.
pub fn cell_current(v_pv: f64, p: &DiodeParams) -> Result<f64> {
    p.validate()?;
    let (mut lo, mut hi) = (-p.light_current, 2.0 * p.light_current);
    let (f_lo, f_hi) = (cell_residual(lo, v_pv, p), cell_residual(hi, v_pv, p));
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    // residual is strictly decreasing in the current
    if f_lo < 0.0 || f_hi > 0.0 {
        return Err(Error::Numerical(format!(
            "no sign change on [{lo}, {hi}] A at V = {v_pv} V (f = {f_lo:e}, {f_hi:e})"
        )));
    }
    // a steep residual can exceed its bound on a bracket narrower than the
    // current tolerance, so keep halving until both hold or the bracket is one ulp
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = cell_residual(mid, v_pv, p);
        if f == 0.0 || (hi - lo <= CURRENT_TOLERANCE && f.abs() <= RESIDUAL_TOLERANCE) {
            return Ok(mid);
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `V · I(V)`.
pub fn cell_power(v_pv: f64, p: &DiodeParams) -> Result<f64> {
    Ok(v_pv * cell_current(v_pv, p)?)
}

/// Voltage where the cell current crosses zero.
pub fn open_circuit_voltage(p: &DiodeParams) -> Result<f64> {
    p.validate()?;
    if p.light_current == 0.0 {
        return Ok(0.0);
    }
    let scale = p.cell_voltage_scale();
    let g = |v: f64| {
        let (e, _) = clamped_exp(v / scale);
        p.light_current - p.saturation_current * (e - 1.0) - v / p.shunt_resistance
    };
    let (mut lo, mut hi) = (0.0, scale * (p.light_current / p.saturation_current + 1.0).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Best power over an evenly spaced grid on `[0, V_oc]`.
pub fn max_power_point(p: &DiodeParams) -> Result<MaxPowerPoint> {
    max_power_point_on_grid(p, MPP_GRID)
}

pub fn max_power_point_on_grid(p: &DiodeParams, points: usize) -> Result<MaxPowerPoint> {
    let v_oc = open_circuit_voltage(p)?;
    let mut best = MaxPowerPoint {
        voltage: 0.0,
        current: cell_current(0.0, p)?,
        power: 0.0,
    };
    for k in 1..points {
        let v = v_oc * k as f64 / (points - 1) as f64;
        let i = cell_current(v, p)?;
        if v * i > best.power {
            best = MaxPowerPoint {
                voltage: v,
                current: i,
                power: v * i,
            };
        }
    }
    Ok(best)
}

/// Module temperature in °C from ambient temperature, irradiance and wind.
pub fn module_temperature(w: &ModuleWeather) -> f64 {
    0.94 * w.ambient_temp + 0.02 * w.irradiance - 1.5 * w.wind_speed + 0.35
}

/// Cosine of the solar zenith angle (declination from the day angle, hour
/// angle from longitude-shifted solar time; no equation of time).
pub fn solar_cos_zenith(time: DateTime<Utc>, lat_deg: f64, lon_deg: f64) -> f64 {
    let day = time.ordinal() as f64;
    let declination = (-23.44f64).to_radians() * (std::f64::consts::TAU / 365.0 * (day + 10.0)).cos();
    let utc_hours = time.hour() as f64 + time.minute() as f64 / 60.0 + time.second() as f64 / 3600.0;
    let solar_hours = utc_hours + lon_deg / 15.0;
    let hour_angle = (15.0 * (solar_hours - 12.0)).to_radians();
    let lat = lat_deg.to_radians();
    let cz = lat.sin() * declination.sin() + lat.cos() * declination.cos() * hour_angle.cos();
    cz.clamp(-1.0, 1.0)
}

pub fn solar_position(time: DateTime<Utc>, lat_deg: f64, lon_deg: f64) -> SolarPosition {
    SolarPosition {
        cos_zenith: solar_cos_zenith(time, lat_deg, lon_deg),
    }
}

/// Haurwitz clear-sky global horizontal irradiance, W/m².
pub fn clearsky_ghi(cos_zenith: f64) -> f64 {
    if cos_zenith <= 0.0 {
        return 0.0;
    }
    HAURWITZ_SCALE * cos_zenith * (-HAURWITZ_EXTINCTION / cos_zenith).exp()
}

/// Plant output from irradiance and a given module temperature, MW.
pub fn plant_power_at_module_temp(capacity: f64, irradiance: f64, module_temp: f64) -> f64 {
    let p = capacity * (irradiance / STC_IRRADIANCE) * (1.0 + POWER_TEMP_COEFF * (module_temp - STC_TEMPERATURE));
    if p > 0.0 {
        p.min(capacity)
    } else {
        0.0
    }
}

/// Plant output under the linear temperature-coefficient model, MW.
pub fn plant_power(capacity: f64, w: &ModuleWeather) -> f64 {
    plant_power_at_module_temp(capacity, w.irradiance, module_temperature(w))
}
