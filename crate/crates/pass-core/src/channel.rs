//! Line-of-sight channels between pinched waveguides and users.
//!
//! A pinching antenna at offset `d` along a guide radiates towards a user
//! at range `r` with coefficient
//!
//! ```text
//! g = A(d) * (reference_gain / r) * exp(-j (2 pi / lambda) (r + n_eff d))
//! ```
//!
//! where `A(d) = 10^(-attenuation_db_per_m * d / 20)` is the in-guide
//! amplitude loss before the power leaves the guide, the `r` term is the
//! free-space propagation phase and the `n_eff d` term is the phase picked
//! up travelling inside the dielectric. Per-antenna coefficients combine
//! into a composite scalar channel per waveguide (weighted by the square
//! root of each antenna's power share), composite channels stack into a
//! users-by-waveguides matrix, and a feed architecture maps that matrix
//! onto the RF chains that actually drive the guides.

use nalgebra::{DMatrix, Point3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{PinchConfig, RadioParams, WaveguideLayout};

/// Complex channel coefficient of a single pinching antenna.
///
/// `offset` is the antenna's position along the guide in metres. Errors if
/// the user sits exactly on the antenna (zero range).
pub fn pa_coefficient(
    offset: f64,
    layout: &WaveguideLayout,
    user: &Point3<f64>,
    params: &RadioParams,
) -> Result<Complex64> {
    layout.validate()?;
    params.validate()?;
    if !offset.is_finite() || offset < 0.0 || offset > layout.length {
        return Err(Error::invalid(
            "offset",
            format!("must lie in [0, {}], got {offset}", layout.length),
        ));
    }
    let position = layout.position_at(offset);
    let range = (user - position).norm();
    if range <= 1e-12 {
        return Err(Error::ZeroRange);
    }
    let guide_loss = 10f64.powf(-layout.attenuation_db_per_m * offset / 20.0);
    let amplitude = guide_loss * params.reference_gain / range;
    let phase = -(2.0 * std::f64::consts::PI / params.wavelength)
        * (range + layout.refractive_index * offset);
    Ok(Complex64::from_polar(amplitude, phase))
}

/// Composite scalar channel of one pinched waveguide towards one user:
/// the power-share-weighted sum of its antennas' coefficients.
pub fn composite_channel(
    config: &PinchConfig,
    layout: &WaveguideLayout,
    user: &Point3<f64>,
    params: &RadioParams,
) -> Result<Complex64> {
    if config.n_antennas() == 0 {
        return Ok(Complex64::ZERO);
    }
    let profile = crate::coupling::power_profile(config.power_model(), config.n_antennas())?;
    let mut h = Complex64::ZERO;
    for (&offset, &fraction) in config.offsets().iter().zip(&profile.fractions) {
        h += fraction.sqrt() * pa_coefficient(offset, layout, user, params)?;
    }
    Ok(h)
}

/// Composite channels of every user/waveguide pair, users along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    matrix: DMatrix<Complex64>,
}

impl ChannelMatrix {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn n_users(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_waveguides(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn entry(&self, user: usize, waveguide: usize) -> Complex64 {
        self.matrix[(user, waveguide)]
    }
}

/// Builds the users-by-waveguides composite channel matrix. `configs[w]`
/// holds the antennas pinching `layouts[w]`.
pub fn channel_matrix(
    layouts: &[WaveguideLayout],
    configs: &[PinchConfig],
    users: &[Point3<f64>],
    params: &RadioParams,
) -> Result<ChannelMatrix> {
    if layouts.len() != configs.len() {
        return Err(Error::dims(format!(
            "{} waveguides but {} pinch configurations",
            layouts.len(),
            configs.len()
        )));
    }
    let mut matrix = DMatrix::zeros(users.len(), layouts.len());
    for (w, (layout, config)) in layouts.iter().zip(configs).enumerate() {
        for (k, user) in users.iter().enumerate() {
            matrix[(k, w)] = composite_channel(config, layout, user, params)?;
        }
    }
    Ok(ChannelMatrix { matrix })
}

/// How RF chains drive the waveguide feeds.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedArchitecture {
    /// One RF chain per waveguide, connected directly.
    SubConnected,
    /// Every RF chain reaches every feed through an arbitrary passive
    /// network; columns of the splitter are unit-norm.
    FullyConnected { splitter: DMatrix<Complex64> },
    /// Every RF chain reaches every feed through phase shifters only:
    /// unit-modulus entries, scaled by `1/sqrt(n_waveguides)`.
    PhaseShiftedFullyConnected { phases: DMatrix<Complex64> },
}

impl FeedArchitecture {
    /// Fully connected splitter dividing each RF chain uniformly (and
    /// in-phase) over all feeds.
    pub fn uniform_fully_connected(n_waveguides: usize, n_rf_chains: usize) -> Self {
        let value = Complex64::new(1.0 / (n_waveguides as f64).sqrt(), 0.0);
        FeedArchitecture::FullyConnected {
            splitter: DMatrix::from_element(n_waveguides, n_rf_chains, value),
        }
    }

    pub fn n_rf_chains(&self, n_waveguides: usize) -> usize {
        match self {
            FeedArchitecture::SubConnected => n_waveguides,
            FeedArchitecture::FullyConnected { splitter } => splitter.ncols(),
            FeedArchitecture::PhaseShiftedFullyConnected { phases } => phases.ncols(),
        }
    }

    /// Checks the architecture against the number of waveguide feeds.
    pub fn validate(&self, n_waveguides: usize) -> Result<()> {
        match self {
            FeedArchitecture::SubConnected => Ok(()),
            FeedArchitecture::FullyConnected { splitter } => {
                if splitter.nrows() != n_waveguides {
                    return Err(Error::dims(format!(
                        "splitter has {} rows for {} waveguides",
                        splitter.nrows(),
                        n_waveguides
                    )));
                }
                for (j, col) in splitter.column_iter().enumerate() {
                    if (col.norm() - 1.0).abs() > 1e-9 {
                        return Err(Error::invalid(
                            "splitter",
                            format!("column {j} has norm {}, expected 1", col.norm()),
                        ));
                    }
                }
                Ok(())
            }
            FeedArchitecture::PhaseShiftedFullyConnected { phases } => {
                if phases.nrows() != n_waveguides {
                    return Err(Error::dims(format!(
                        "phase matrix has {} rows for {} waveguides",
                        phases.nrows(),
                        n_waveguides
                    )));
                }
                for (idx, v) in phases.iter().enumerate() {
                    if (v.norm() - 1.0).abs() > 1e-9 {
                        return Err(Error::invalid(
                            "phases",
                            format!("entry {idx} has modulus {}, expected 1", v.norm()),
                        ));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Channel seen from the RF chains: the composite matrix times the feed
/// network, one column per RF chain.
pub fn effective_channel(
    channels: &ChannelMatrix,
    architecture: &FeedArchitecture,
) -> Result<DMatrix<Complex64>> {
    architecture.validate(channels.n_waveguides())?;
    Ok(match architecture {
        FeedArchitecture::SubConnected => channels.matrix().clone(),
        FeedArchitecture::FullyConnected { splitter } => channels.matrix() * splitter,
        FeedArchitecture::PhaseShiftedFullyConnected { phases } => {
            let scale = Complex64::new(1.0 / (phases.nrows() as f64).sqrt(), 0.0);
            channels.matrix() * (phases * scale)
        }
    })
}

/// Per-user SINR under a linear precoder (one column per user).
///
/// With `h_k` the conjugated `k`-th row of the effective channel,
/// `sinr_k = |h_k^H w_k|^2 / (sum_{j != k} |h_k^H w_j|^2 + noise)`.
pub fn sinr(
    effective: &DMatrix<Complex64>,
    precoder: &DMatrix<Complex64>,
    noise_power: f64,
) -> Result<Vec<f64>> {
    if !(noise_power > 0.0) || !noise_power.is_finite() {
        return Err(Error::invalid(
            "noise_power",
            format!("must be finite and > 0, got {noise_power}"),
        ));
    }
    let n_users = effective.nrows();
    if precoder.nrows() != effective.ncols() || precoder.ncols() != n_users {
        return Err(Error::dims(format!(
            "effective channel is {}x{} but precoder is {}x{} (need {}x{})",
            effective.nrows(),
            effective.ncols(),
            precoder.nrows(),
            precoder.ncols(),
            effective.ncols(),
            n_users
        )));
    }
    // gains[(k, j)] = h_k^H w_j
    let gains = effective.conjugate() * precoder;
    let mut out = Vec::with_capacity(n_users);
    for k in 0..n_users {
        let signal = gains[(k, k)].norm_sqr();
        let mut interference = 0.0;
        for j in 0..n_users {
            if j != k {
                interference += gains[(k, j)].norm_sqr();
            }
        }
        out.push(signal / (interference + noise_power));
    }
    Ok(out)
}
