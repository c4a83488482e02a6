//! Material parameters and the effective atomic unit system.
//!
//! All operator assembly happens in effective atomic units of the host
//! material (hbar = e = m* = 4 pi eps_r eps_0 = 1). Physical units only
//! appear at the configuration and output boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bohr radius in nm.
pub const BOHR_RADIUS_NM: f64 = 0.052_917_721_090_3;
/// Hartree energy in meV.
pub const HARTREE_MEV: f64 = 27_211.386_245_988;
/// Reduced Planck constant in meV ps.
pub const HBAR_MEV_PS: f64 = 0.658_211_956_9;
/// Atomic unit of magnetic flux density in T.
pub const ATOMIC_BFIELD_T: f64 = 235_051.756_758;

/// Effective-mass parameters of a double quantum dot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Effective mass in units of the free electron mass.
    pub m_star: f64,
    /// Relative permittivity.
    pub eps_r: f64,
    /// Effective g-factor.
    pub g_star: f64,
    /// Confinement energy in meV.
    pub hbar_omega: f64,
    /// Interdot separation in nm.
    pub d: f64,
}

impl MaterialParams {
    pub const GAAS: MaterialParams = MaterialParams {
        m_star: 0.067,
        eps_r: 12.4,
        g_star: -0.44,
        hbar_omega: 1.0,
        d: 130.0,
    };

    pub fn preset(name: &str) -> Option<MaterialParams> {
        match name.to_ascii_lowercase().as_str() {
            "gaas" => Some(Self::GAAS),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.m_star, self.eps_r, self.g_star, self.hbar_omega, self.d]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("material", "non-finite parameter"));
        }
        if self.m_star <= 0.0 {
            return Err(Error::invalid("m_star", format!("must be positive, got {}", self.m_star)));
        }
        if self.eps_r < 1.0 {
            return Err(Error::invalid("eps_r", format!("must be >= 1, got {}", self.eps_r)));
        }
        if self.hbar_omega <= 0.0 {
            return Err(Error::invalid(
                "hbar_omega",
                format!("must be positive, got {}", self.hbar_omega),
            ));
        }
        if self.d < 0.0 {
            return Err(Error::invalid("d", format!("must be non-negative, got {}", self.d)));
        }
        Ok(())
    }

    /// Gyromagnetic ratio `g* e / 2 m_e` in internal units (energy per internal
    /// field unit per unit spin). Always derived from `g_star`.
    pub fn gamma_e(&self) -> f64 {
        // e hbar / 2 m_e is m*/2 once the mass unit is m* m_e
        0.5 * self.g_star * self.m_star
    }

    pub fn units(&self) -> Result<UnitSystem> {
        effective_units(self)
    }

    /// Dimensionless Hamiltonian parameters in internal units.
    pub fn confinement(&self) -> Result<Confinement> {
        let units = self.units()?;
        Ok(Confinement {
            omega: units.energy_to_internal(self.hbar_omega),
            d: units.length_to_internal(self.d),
            coulomb: 1.0,
        })
    }
}

/// Conversion factors between internal and physical units. Each field is the
/// size of one internal unit expressed in the physical unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// nm
    pub length_unit: f64,
    /// meV
    pub energy_unit: f64,
    /// ps
    pub time_unit: f64,
    /// V/m
    pub efield_unit: f64,
    /// T
    pub bfield_unit: f64,
}

/// Effective atomic units for the material.
pub fn effective_units(params: &MaterialParams) -> Result<UnitSystem> {
    if !(params.m_star > 0.0) {
        return Err(Error::invalid("m_star", "must be positive"));
    }
    if !(params.eps_r > 0.0) {
        return Err(Error::invalid("eps_r", "must be positive"));
    }
    let length_unit = params.eps_r / params.m_star * BOHR_RADIUS_NM;
    let energy_unit = params.m_star / (params.eps_r * params.eps_r) * HARTREE_MEV;
    let time_unit = HBAR_MEV_PS / energy_unit;
    // meV / nm = 1e6 V/m for a unit charge
    let efield_unit = energy_unit / length_unit * 1e6;
    let scale = params.m_star / params.eps_r;
    let bfield_unit = ATOMIC_BFIELD_T * scale * scale;
    Ok(UnitSystem { length_unit, energy_unit, time_unit, efield_unit, bfield_unit })
}

impl UnitSystem {
    pub fn length_to_internal(&self, nm: f64) -> f64 {
        nm / self.length_unit
    }
    pub fn length_to_physical(&self, x: f64) -> f64 {
        x * self.length_unit
    }
    pub fn energy_to_internal(&self, mev: f64) -> f64 {
        mev / self.energy_unit
    }
    pub fn energy_to_physical(&self, e: f64) -> f64 {
        e * self.energy_unit
    }
    pub fn time_to_internal(&self, ps: f64) -> f64 {
        ps / self.time_unit
    }
    pub fn time_to_physical(&self, t: f64) -> f64 {
        t * self.time_unit
    }
    pub fn efield_to_internal(&self, v_per_m: f64) -> f64 {
        v_per_m / self.efield_unit
    }
    pub fn efield_to_physical(&self, f: f64) -> f64 {
        f * self.efield_unit
    }
    pub fn bfield_to_internal(&self, tesla: f64) -> f64 {
        tesla / self.bfield_unit
    }
    pub fn bfield_to_physical(&self, b: f64) -> f64 {
        b * self.bfield_unit
    }
    /// Angular frequency in rad/ps of an internal energy (or internal angular frequency).
    pub fn angular_frequency_to_physical(&self, w: f64) -> f64 {
        w / self.time_unit
    }
    pub fn angular_frequency_to_internal(&self, rad_per_ps: f64) -> f64 {
        rad_per_ps * self.time_unit
    }
}

/// Internal-unit parameters of the confining potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confinement {
    /// Oscillator frequency (= confinement energy).
    pub omega: f64,
    /// Interdot separation.
    pub d: f64,
    /// Prefactor of the Coulomb repulsion; 1 for the physical model, 0 to switch it off.
    pub coulomb: f64,
}

impl Confinement {
    /// Oscillator length `sqrt(hbar / m* omega)`.
    pub fn oscillator_length(&self) -> f64 {
        1.0 / self.omega.sqrt()
    }

    pub fn without_coulomb(self) -> Self {
        Confinement { coulomb: 0.0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::invalid("omega", "must be positive"));
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(Error::invalid("d", "must be non-negative"));
        }
        if !self.coulomb.is_finite() {
            return Err(Error::invalid("coulomb", "must be finite"));
        }
        Ok(())
    }
}
