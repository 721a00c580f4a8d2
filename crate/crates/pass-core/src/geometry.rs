//! Geometry of waveguides, pinching-antenna positions and the radio
//! constants shared by every channel computation.

use nalgebra::{Point3, Vector3};

use crate::coupling::PowerModel;
use crate::error::{Error, Result};

/// Propagation speed used to convert carrier frequency to wavelength, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A straight dielectric waveguide that antennas can pinch anywhere along
/// its length.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveguideLayout {
    /// Where power enters the guide.
    pub feed_point: Point3<f64>,
    /// Direction of the guide; must already be unit length.
    pub axis: Vector3<f64>,
    /// Usable guide length in metres, `> 0`.
    pub length: f64,
    /// Effective refractive index of the guided mode, `>= 1`.
    pub refractive_index: f64,
    /// In-guide attenuation in dB per metre, `>= 0`.
    pub attenuation_db_per_m: f64,
}

impl WaveguideLayout {
    pub fn new(
        feed_point: Point3<f64>,
        axis: Vector3<f64>,
        length: f64,
        refractive_index: f64,
        attenuation_db_per_m: f64,
    ) -> Result<Self> {
        let layout = WaveguideLayout {
            feed_point,
            axis,
            length,
            refractive_index,
            attenuation_db_per_m,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.feed_point.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("feed_point", "coordinates must be finite"));
        }
        if (self.axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "axis",
                format!("must be unit length, got norm {}", self.axis.norm()),
            ));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::invalid(
                "length",
                format!("must be finite and > 0, got {}", self.length),
            ));
        }
        if !(self.refractive_index >= 1.0) || !self.refractive_index.is_finite() {
            return Err(Error::invalid(
                "refractive_index",
                format!("must be finite and >= 1, got {}", self.refractive_index),
            ));
        }
        if !(self.attenuation_db_per_m >= 0.0) || !self.attenuation_db_per_m.is_finite() {
            return Err(Error::invalid(
                "attenuation_db_per_m",
                format!("must be finite and >= 0, got {}", self.attenuation_db_per_m),
            ));
        }
        Ok(())
    }

    /// Point in space `offset` metres down the guide from the feed.
    pub fn position_at(&self, offset: f64) -> Point3<f64> {
        self.feed_point + self.axis * offset
    }

    /// Offset of the point on the (unclamped) guide axis closest to `p`.
    pub fn axis_projection(&self, p: &Point3<f64>) -> f64 {
        (p - self.feed_point).dot(&self.axis)
    }

    /// Offset in `[0, length]` closest to `p`.
    pub fn foot_offset(&self, p: &Point3<f64>) -> f64 {
        self.axis_projection(p).clamp(0.0, self.length)
    }
}

/// Antenna offsets along one waveguide together with the power-sharing
/// model feeding them.
///
/// Offsets are metres from the feed, strictly increasing and inside
/// `[0, length]`; the constructor enforces this, so a constructed value is
/// always consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct PinchConfig {
    offsets: Vec<f64>,
    power_model: PowerModel,
}

impl PinchConfig {
    pub fn new(offsets: Vec<f64>, power_model: PowerModel, waveguide_length: f64) -> Result<Self> {
        power_model.validate()?;
        for (i, &d) in offsets.iter().enumerate() {
            if !d.is_finite() || d < 0.0 || d > waveguide_length {
                return Err(Error::invalid(
                    "offsets",
                    format!("offset {i} = {d} outside [0, {waveguide_length}]"),
                ));
            }
            if i > 0 && d <= offsets[i - 1] {
                return Err(Error::invalid(
                    "offsets",
                    format!(
                        "offsets must be strictly increasing, got {} then {d}",
                        offsets[i - 1]
                    ),
                ));
            }
        }
        Ok(PinchConfig {
            offsets,
            power_model,
        })
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn power_model(&self) -> PowerModel {
        self.power_model
    }

    pub fn n_antennas(&self) -> usize {
        self.offsets.len()
    }
}

/// Carrier and noise constants shared by all users and waveguides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    /// Free-space carrier wavelength in metres, `> 0`.
    pub wavelength: f64,
    /// Free-space amplitude at 1 m range, `lambda / (4 pi)`.
    pub reference_gain: f64,
    /// Noise power at each receiver in watts, `> 0`.
    pub noise_power: f64,
}

impl RadioParams {
    /// Parameters for a given wavelength; the reference gain follows from
    /// the free-space law.
    pub fn new(wavelength: f64, noise_power: f64) -> Result<Self> {
        let params = RadioParams {
            wavelength,
            reference_gain: wavelength / (4.0 * std::f64::consts::PI),
            noise_power,
        };
        params.validate()?;
        Ok(params)
    }

    /// Convenience constructor from a carrier frequency in Hz.
    pub fn from_frequency(frequency_hz: f64, noise_power: f64) -> Result<Self> {
        if !(frequency_hz > 0.0) || !frequency_hz.is_finite() {
            return Err(Error::invalid(
                "frequency_hz",
                format!("must be finite and > 0, got {frequency_hz}"),
            ));
        }
        RadioParams::new(SPEED_OF_LIGHT / frequency_hz, noise_power)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) || !self.wavelength.is_finite() {
            return Err(Error::invalid(
                "wavelength",
                format!("must be finite and > 0, got {}", self.wavelength),
            ));
        }
        let expected = self.wavelength / (4.0 * std::f64::consts::PI);
        if !(self.reference_gain > 0.0)
            || (self.reference_gain - expected).abs() > 1e-12 * expected.max(1.0)
        {
            return Err(Error::invalid(
                "reference_gain",
                format!(
                    "must equal wavelength / (4 pi) = {expected}, got {}",
                    self.reference_gain
                ),
            ));
        }
        if !(self.noise_power > 0.0) || !self.noise_power.is_finite() {
            return Err(Error::invalid(
                "noise_power",
                format!("must be finite and > 0, got {}", self.noise_power),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waveguide_points_and_projections() {
        let wg = WaveguideLayout::new(
            Point3::new(1.0, 2.0, 3.0),
            Vector3::new(0.0, 1.0, 0.0),
            10.0,
            1.4,
            0.08,
        )
        .unwrap();
        assert_eq!(wg.position_at(4.0), Point3::new(1.0, 6.0, 3.0));
        let user = Point3::new(5.0, 6.5, 0.0);
        assert_eq!(wg.axis_projection(&user), 4.5);
        assert_eq!(wg.foot_offset(&user), 4.5);
        assert_eq!(wg.foot_offset(&Point3::new(0.0, -3.0, 0.0)), 0.0);
        assert_eq!(wg.foot_offset(&Point3::new(0.0, 99.0, 0.0)), 10.0);
    }

    #[test]
    fn waveguide_rejects_bad_fields() {
        let unit = Vector3::new(1.0, 0.0, 0.0);
        let origin = Point3::origin();
        assert!(WaveguideLayout::new(origin, Vector3::new(1.0, 1.0, 0.0), 1.0, 1.0, 0.0).is_err());
        assert!(WaveguideLayout::new(origin, unit, 0.0, 1.0, 0.0).is_err());
        assert!(WaveguideLayout::new(origin, unit, -2.0, 1.0, 0.0).is_err());
        assert!(WaveguideLayout::new(origin, unit, 1.0, 0.9, 0.0).is_err());
        assert!(WaveguideLayout::new(origin, unit, 1.0, 1.0, -0.1).is_err());
        // A normalised axis passes the unit-length gate.
        let diag = Vector3::new(1.0, 1.0, 1.0).normalize();
        assert!(WaveguideLayout::new(origin, diag, 1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn pinch_config_enforces_ordering_and_bounds() {
        let model = PowerModel::Equal;
        assert!(PinchConfig::new(vec![0.0, 1.0, 2.0], model, 5.0).is_ok());
        assert!(PinchConfig::new(vec![], model, 5.0).is_ok());
        assert!(PinchConfig::new(vec![1.0, 1.0], model, 5.0).is_err());
        assert!(PinchConfig::new(vec![2.0, 1.0], model, 5.0).is_err());
        assert!(PinchConfig::new(vec![-0.5], model, 5.0).is_err());
        assert!(PinchConfig::new(vec![5.5], model, 5.0).is_err());
        assert!(
            PinchConfig::new(vec![1.0], PowerModel::Proportional { ratio: 0.0 }, 5.0).is_err()
        );
    }

    #[test]
    fn radio_params_reference_gain() {
        let params = RadioParams::new(1.0, 1e-12).unwrap();
        assert!((params.reference_gain - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-15);
        let ten_ghz = RadioParams::from_frequency(10.0e9, 1e-12).unwrap();
        assert!((ten_ghz.wavelength - 0.029_979_245_8).abs() < 1e-12);
        assert!(RadioParams::new(0.0, 1e-12).is_err());
        assert!(RadioParams::new(1.0, 0.0).is_err());
        let mut tampered = params;
        tampered.reference_gain = 1.0;
        assert!(tampered.validate().is_err());
    }
}
