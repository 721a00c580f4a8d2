//! Scenario files: a TOML schema with unit-suffixed keys, strict parsing
//! and conversion into the core model types.
//!
//! Every key carries its unit in the name (`length_m`, `noise_dbm`) so a
//! scenario can never be misread by a factor of 1000. Unknown keys are
//! rejected rather than ignored.

use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use pass_core::{CandidateGrid, PowerModel, RadioParams, SweepSystem, WaveguideLayout};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from loading or validating a scenario file. All of them are
/// input errors: the file, not the solver, is at fault.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Syntax or schema violation; the inner error carries the line and
    /// key context produced by the TOML parser.
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    /// A well-formed file whose values break an invariant. The message
    /// names the offending field.
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Power division between the antennas on one waveguide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerModelSpec {
    /// `"equal"` or `"proportional"`.
    pub kind: String,
    /// Extraction ratio per antenna; required for `"proportional"`,
    /// forbidden for `"equal"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

/// One straight waveguide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideSpec {
    /// Feed point, metres.
    pub feed: [f64; 3],
    /// Guide direction; any nonzero vector, normalized on load.
    pub axis: [f64; 3],
    pub length_m: f64,
}

/// Configuration of the array-gain study: gain of `1..=n_max` antennas at
/// a fixed pitch, centered on the first user's foot point on the first
/// waveguide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGainSpec {
    pub n_max: usize,
    /// Antenna pitch, metres.
    pub spacing_m: f64,
    /// `"phase_aligned"` nudges each antenna into phase agreement with
    /// the array center; `"centered"` keeps the raw uniform offsets.
    #[serde(default = "default_alignment")]
    pub mode: String,
}

fn default_alignment() -> String {
    "phase_aligned".to_string()
}

/// Configuration of the minimum-power study: every listed system is
/// solved at every SINR target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinPowerSpec {
    pub sinr_db: Vec<f64>,
    /// Drawn from `pass_continuous`, `pass_discrete`, `conventional_mimo`,
    /// `massive_mimo_hybrid`.
    pub systems: Vec<String>,
    pub n_pa_per_waveguide: usize,
    /// Sub-array size of the hybrid baseline.
    pub antennas_per_rf: usize,
    /// Base-station position for the non-pinching baselines, metres.
    pub bs: [f64; 3],
}

/// A complete experiment description. Scalar keys come first so the
/// serialized echo is itself a valid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub frequency_ghz: f64,
    /// Effective refractive index of the guided mode, `>= 1`.
    pub n_eff: f64,
    pub attenuation_db_per_m: f64,
    /// Pitch of the pre-installed discrete candidate positions.
    #[serde(default = "default_candidate_spacing")]
    pub candidate_spacing_m: f64,
    pub noise_dbm: f64,
    #[serde(default)]
    pub seed: u64,
    /// User positions, metres.
    pub users: Vec<[f64; 3]>,
    pub power_model: PowerModelSpec,
    pub waveguides: Vec<WaveguideSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub array_gain: Option<ArrayGainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_power: Option<MinPowerSpec>,
}

fn default_candidate_spacing() -> f64 {
    CandidateGrid::DEFAULT_SPACING
}

fn fail(msg: String) -> Result<(), ScenarioError> {
    Err(ScenarioError::Invalid(msg))
}

fn check_finite(name: &str, values: &[f64]) -> Result<(), ScenarioError> {
    for v in values {
        if !v.is_finite() {
            return fail(format!("{name} must be finite, got {v}"));
        }
    }
    Ok(())
}

impl Scenario {
    /// Checks every invariant the schema cannot express. Messages name
    /// the offending field.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.frequency_ghz > 0.0) || !self.frequency_ghz.is_finite() {
            return fail(format!(
                "frequency_ghz must be > 0, got {}",
                self.frequency_ghz
            ));
        }
        if !(self.n_eff >= 1.0) || !self.n_eff.is_finite() {
            return fail(format!("n_eff must be >= 1, got {}", self.n_eff));
        }
        if !(self.attenuation_db_per_m >= 0.0) || !self.attenuation_db_per_m.is_finite() {
            return fail(format!(
                "attenuation_db_per_m must be >= 0, got {}",
                self.attenuation_db_per_m
            ));
        }
        if !(self.candidate_spacing_m > 0.0) || !self.candidate_spacing_m.is_finite() {
            return fail(format!(
                "candidate_spacing_m must be > 0, got {}",
                self.candidate_spacing_m
            ));
        }
        check_finite("noise_dbm", &[self.noise_dbm])?;
        if self.users.is_empty() {
            return fail("users must contain at least one position".to_string());
        }
        for (i, u) in self.users.iter().enumerate() {
            check_finite(&format!("users[{i}]"), u)?;
        }
        match self.power_model.kind.as_str() {
            "equal" => {
                if self.power_model.alpha.is_some() {
                    return fail("power_model.alpha is only valid with kind \"proportional\""
                        .to_string());
                }
            }
            "proportional" => match self.power_model.alpha {
                Some(a) if a.is_finite() && 0.0 < a && a < 1.0 => {}
                Some(a) => {
                    return fail(format!(
                        "power_model.alpha must be strictly between 0 and 1, got {a}"
                    ));
                }
                None => {
                    return fail(
                        "power_model.alpha is required for kind \"proportional\"".to_string()
                    );
                }
            },
            other => {
                return fail(format!(
                    "power_model.kind must be \"equal\" or \"proportional\", got \"{other}\""
                ));
            }
        }
        if self.waveguides.is_empty() {
            return fail("waveguides must contain at least one entry".to_string());
        }
        for (i, wg) in self.waveguides.iter().enumerate() {
            check_finite(&format!("waveguides[{i}].feed"), &wg.feed)?;
            check_finite(&format!("waveguides[{i}].axis"), &wg.axis)?;
            let norm = Vector3::from(wg.axis).norm();
            if !(norm > 0.0) {
                return fail(format!("waveguides[{i}].axis must be a nonzero vector"));
            }
            if !(wg.length_m > 0.0) || !wg.length_m.is_finite() {
                return fail(format!(
                    "waveguides[{i}].length_m must be > 0, got {}",
                    wg.length_m
                ));
            }
        }
        if let Some(ag) = &self.array_gain {
            if ag.n_max == 0 {
                return fail("array_gain.n_max must be at least 1".to_string());
            }
            if !(ag.spacing_m > 0.0) || !ag.spacing_m.is_finite() {
                return fail(format!(
                    "array_gain.spacing_m must be > 0, got {}",
                    ag.spacing_m
                ));
            }
            if ag.mode != "phase_aligned" && ag.mode != "centered" {
                return fail(format!(
                    "array_gain.mode must be \"phase_aligned\" or \"centered\", got \"{}\"",
                    ag.mode
                ));
            }
        }
        if let Some(mp) = &self.min_power {
            check_finite("min_power.sinr_db", &mp.sinr_db)?;
            for s in &mp.systems {
                if parse_system(s).is_none() {
                    return fail(format!("min_power.systems contains unknown system \"{s}\""));
                }
            }
            if mp.n_pa_per_waveguide == 0 {
                return fail("min_power.n_pa_per_waveguide must be at least 1".to_string());
            }
            if mp.antennas_per_rf == 0 {
                return fail("min_power.antennas_per_rf must be at least 1".to_string());
            }
            check_finite("min_power.bs", &mp.bs)?;
        }
        Ok(())
    }

    /// Rescales every waveguide axis to unit length. Idempotent, so a
    /// normalized echo reloads to the identical scenario.
    pub fn normalize(&mut self) {
        for wg in &mut self.waveguides {
            let v = Vector3::from(wg.axis).normalize();
            wg.axis = [v.x, v.y, v.z];
        }
    }

    /// Free-space carrier wavelength in metres.
    pub fn wavelength(&self) -> f64 {
        pass_core::SPEED_OF_LIGHT / (self.frequency_ghz * 1e9)
    }

    /// Receiver noise power in watts.
    pub fn noise_watts(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    pub fn radio(&self) -> pass_core::Result<RadioParams> {
        RadioParams::new(self.wavelength(), self.noise_watts())
    }

    pub fn model(&self) -> PowerModel {
        match self.power_model.kind.as_str() {
            "proportional" => PowerModel::Proportional {
                // validate() guarantees alpha is present and in (0, 1)
                ratio: self.power_model.alpha.unwrap_or(0.9),
            },
            _ => PowerModel::Equal,
        }
    }

    pub fn layouts(&self) -> pass_core::Result<Vec<WaveguideLayout>> {
        self.waveguides
            .iter()
            .map(|wg| {
                WaveguideLayout::new(
                    Point3::from(wg.feed),
                    Vector3::from(wg.axis).normalize(),
                    wg.length_m,
                    self.n_eff,
                    self.attenuation_db_per_m,
                )
            })
            .collect()
    }

    pub fn user_points(&self) -> Vec<Point3<f64>> {
        self.users.iter().map(|&u| Point3::from(u)).collect()
    }

    /// Serializes the scenario back to TOML (the `validate` echo).
    pub fn to_toml(&self) -> String {
        // Scalar fields precede the table fields in the struct, so the
        // serializer never has to emit a value after a table.
        toml::to_string_pretty(self).expect("scenario serialization cannot fail")
    }
}

/// Maps a scenario system label to the sweep system it names.
pub fn parse_system(label: &str) -> Option<SweepSystem> {
    match label {
        "pass_continuous" => Some(SweepSystem::PassContinuous),
        "pass_discrete" => Some(SweepSystem::PassDiscrete),
        "conventional_mimo" => Some(SweepSystem::ConventionalMimo),
        "massive_mimo_hybrid" => Some(SweepSystem::MassiveMimoHybrid),
        _ => None,
    }
}

/// Reads, parses, validates and normalizes a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut scenario: Scenario = toml::from_str(&text).map_err(|source| ScenarioError::Parse {
        path: path.to_path_buf(),
        source: Box::new(source),
    })?;
    scenario.validate()?;
    scenario.normalize();
    Ok(scenario)
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Watts to dBm. Zero and negative powers map to `-inf` and NaN, which
/// only ever reach output formatting.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}
