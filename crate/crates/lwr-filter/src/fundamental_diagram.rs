//! Triangular fundamental diagram: the flow-density relation and every
//! quantity derived from it (wave speeds, Rankine-Hugoniot shock speed,
//! Godunov interface flux).
//!
//! Internal units are SI throughout: densities in veh/m, flows in veh/s,
//! speeds in m/s. Vehicles-per-hour appears only at construction and
//! reporting boundaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds per hour, for veh/h <-> veh/s conversions at the API boundary.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FdError {
    #[error("invalid parameters: capacity={capacity_vps} veh/s, critical={critical} veh/m, jam={jam} veh/m (need capacity > 0 and 0 < critical < jam)")]
    InvalidParameters {
        capacity_vps: f64,
        critical: f64,
        jam: f64,
    },
    #[error("density {0} veh/m outside [0, {1}] veh/m")]
    DensityOutOfRange(f64, f64),
    #[error("shock speed undefined: left and right densities are both {0} veh/m")]
    UndefinedShock(f64),
}

/// Parameter triple of the triangular flow-density relation.
///
/// Flow rises linearly from zero to the capacity at the critical density,
/// then falls linearly to zero at the jam density. Values are immutable
/// after construction, so a diagram can be shared freely across threads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalDiagram {
    capacity: f64,         // q_c, veh/s
    critical_density: f64, // rho_c, veh/m
    jam_density: f64,      // rho_jam, veh/m
}

impl FundamentalDiagram {
    /// Build from SI units (capacity in veh/s).
    pub fn new(capacity_vps: f64, critical_density: f64, jam_density: f64) -> Result<Self, FdError> {
        let ok = capacity_vps > 0.0
            && critical_density > 0.0
            && jam_density > critical_density
            && capacity_vps.is_finite()
            && jam_density.is_finite();
        if !ok {
            return Err(FdError::InvalidParameters {
                capacity_vps,
                critical: critical_density,
                jam: jam_density,
            });
        }
        Ok(Self {
            capacity: capacity_vps,
            critical_density,
            jam_density,
        })
    }

    /// Build from a capacity quoted in veh/h, the unit sensor feeds use.
    pub fn from_vph(capacity_vph: f64, critical_density: f64, jam_density: f64) -> Result<Self, FdError> {
        Self::new(capacity_vph / SECONDS_PER_HOUR, critical_density, jam_density)
    }

    /// Capacity in veh/s.
    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Capacity in veh/h.
    pub fn capacity_vph(&self) -> f64 {
        self.capacity * SECONDS_PER_HOUR
    }

    /// Critical density in veh/m.
    pub fn critical_density(&self) -> f64 {
        self.critical_density
    }

    /// Jam density in veh/m.
    pub fn jam_density(&self) -> f64 {
        self.jam_density
    }

    /// Flow (veh/s) at the given density. Errors outside [0, jam].
    pub fn flow(&self, density: f64) -> Result<f64, FdError> {
        if !(0.0..=self.jam_density).contains(&density) {
            return Err(FdError::DensityOutOfRange(density, self.jam_density));
        }
        Ok(self.flow_unchecked(density))
    }

    /// Flow without the domain check; callers must guarantee
    /// density in [0, jam]. Used on solver hot paths where the state
    /// invariant already holds.
    #[inline]
    pub(crate) fn flow_unchecked(&self, density: f64) -> f64 {
        if density < self.critical_density {
            self.capacity / self.critical_density * density
        } else {
            self.capacity * (self.jam_density - density) / (self.jam_density - self.critical_density)
        }
    }

    /// Free-flow speed q_c / rho_c in m/s: slope of the uncongested branch.
    pub fn free_flow_speed(&self) -> f64 {
        self.capacity / self.critical_density
    }

    /// Magnitude of the congested-branch slope q_c / (rho_jam - rho_c),
    /// in m/s. Queues discharge backward at this speed.
    pub fn backward_wave_speed(&self) -> f64 {
        self.capacity / (self.jam_density - self.critical_density)
    }

    /// Rankine-Hugoniot shock speed between two densities, in m/s.
    /// Positive means downstream propagation.
    pub fn shock_speed(&self, rho_l: f64, rho_r: f64) -> Result<f64, FdError> {
        if rho_l == rho_r {
            return Err(FdError::UndefinedShock(rho_l));
        }
        let q_l = self.flow(rho_l)?;
        let q_r = self.flow(rho_r)?;
        Ok((q_l - q_r) / (rho_l - rho_r))
    }

    /// Godunov interface flux (veh/s) between a left and a right cell.
    ///
    /// Case split on the positions of the two densities relative to the
    /// critical density; ties are resolved top to bottom, which is safe
    /// because adjacent branches agree at their shared boundary. The
    /// equal-density case returns the plain flow so the numerical flux
    /// stays consistent.
    pub fn godunov_flux(&self, rho_l: f64, rho_r: f64) -> Result<f64, FdError> {
        if !(0.0..=self.jam_density).contains(&rho_l) {
            return Err(FdError::DensityOutOfRange(rho_l, self.jam_density));
        }
        if !(0.0..=self.jam_density).contains(&rho_r) {
            return Err(FdError::DensityOutOfRange(rho_r, self.jam_density));
        }
        Ok(self.godunov_flux_unchecked(rho_l, rho_r))
    }

    #[inline]
    pub(crate) fn godunov_flux_unchecked(&self, rho_l: f64, rho_r: f64) -> f64 {
        let rho_c = self.critical_density;
        if rho_r < rho_l && rho_l <= rho_c {
            self.flow_unchecked(rho_l)
        } else if rho_r <= rho_c && rho_c <= rho_l {
            self.capacity
        } else if rho_c <= rho_r && rho_r < rho_l {
            self.flow_unchecked(rho_r)
        } else if rho_l < rho_r {
            self.flow_unchecked(rho_l).min(self.flow_unchecked(rho_r))
        } else {
            // rho_l == rho_r, not covered by the four cases above.
            self.flow_unchecked(rho_l)
        }
    }

    /// Largest wave speed the diagram can produce, in m/s.
    pub fn max_wave_speed(&self) -> f64 {
        self.free_flow_speed().max(self.backward_wave_speed())
    }
}
