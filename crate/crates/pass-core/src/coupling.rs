//! Coupled-mode power exchange between a dielectric waveguide and the
//! pinching elements pressed against it.
//!
//! Each pinching antenna behaves as a directional coupler: over a contact
//! length `L` it diverts the fraction `F * sin^2(kappa * L)` of the power
//! still guided at its position, where `kappa` is the coupling coefficient
//! of the waveguide/element pair and `F <= 1` caps the achievable transfer.
//! Cascading couplers along one waveguide turns per-stage extraction ratios
//! into a radiated-power profile, which is how the equal and proportional
//! power models are realised in hardware.

use crate::error::{Error, Result};

/// A single pinching element described as a directional coupler.
///
/// Fields are public for ergonomic literal construction; every operation
/// that consumes a spec re-validates it first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplerSpec {
    /// Contact length between element and waveguide, in metres. `>= 0`.
    pub coupling_length: f64,
    /// Coupling coefficient `kappa` in rad/m. `> 0`.
    pub coupling_coefficient: f64,
    /// Maximum power-transfer efficiency `F`, in `(0, 1]`.
    pub max_efficiency: f64,
}

impl CouplerSpec {
    pub fn new(coupling_length: f64, coupling_coefficient: f64, max_efficiency: f64) -> Result<Self> {
        let spec = CouplerSpec {
            coupling_length,
            coupling_coefficient,
            max_efficiency,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coupling_length >= 0.0) || !self.coupling_length.is_finite() {
            return Err(Error::invalid(
                "coupling_length",
                format!("must be finite and >= 0, got {}", self.coupling_length),
            ));
        }
        if !(self.coupling_coefficient > 0.0) || !self.coupling_coefficient.is_finite() {
            return Err(Error::invalid(
                "coupling_coefficient",
                format!("must be finite and > 0, got {}", self.coupling_coefficient),
            ));
        }
        if !(self.max_efficiency > 0.0 && self.max_efficiency <= 1.0) {
            return Err(Error::invalid(
                "max_efficiency",
                format!("must lie in (0, 1], got {}", self.max_efficiency),
            ));
        }
        Ok(())
    }

    /// Shortest contact length that transfers all available power
    /// (`F * 1`), i.e. the quarter period of the exchange.
    pub fn full_transfer_length(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 / self.coupling_coefficient
    }
}

/// Splits unit guided power into `(guided, radiated)` at one coupler.
///
/// `radiated = F * sin^2(kappa * L)` and `guided = 1 - radiated`, so the
/// pair always sums to one. Power that `F < 1` keeps out of the radiated
/// branch stays in the guide rather than vanishing.
pub fn coupled_power(spec: &CouplerSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let s = (spec.coupling_coefficient * spec.coupling_length).sin();
    let radiated = spec.max_efficiency * s * s;
    Ok((1.0 - radiated, radiated))
}

/// Shortest contact length that radiates exactly `target` of the incident
/// power: the smallest non-negative root of `F sin^2(kappa L) = target`.
///
/// Errors with [`Error::UnreachableFraction`] when `target > F`.
pub fn length_for_fraction(target: f64, coupling_coefficient: f64, max_efficiency: f64) -> Result<f64> {
    if !(coupling_coefficient > 0.0) || !coupling_coefficient.is_finite() {
        return Err(Error::invalid(
            "coupling_coefficient",
            format!("must be finite and > 0, got {coupling_coefficient}"),
        ));
    }
    if !(max_efficiency > 0.0 && max_efficiency <= 1.0) {
        return Err(Error::invalid(
            "max_efficiency",
            format!("must lie in (0, 1], got {max_efficiency}"),
        ));
    }
    if !(target >= 0.0) || !target.is_finite() {
        return Err(Error::invalid(
            "target",
            format!("must be finite and >= 0, got {target}"),
        ));
    }
    if target > max_efficiency {
        return Err(Error::UnreachableFraction {
            target,
            max_efficiency,
            stage: None,
        });
    }
    Ok((target / max_efficiency).sqrt().asin() / coupling_coefficient)
}

/// How transmit power is shared among the antennas on one waveguide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerModel {
    /// Every antenna radiates the same fraction `1/N`; nothing is left in
    /// the guide.
    Equal,
    /// Each coupler extracts the same fixed `ratio` of whatever reaches it,
    /// so antenna `n` radiates `ratio * (1 - ratio)^(n-1)` and the guide
    /// keeps `(1 - ratio)^N`.
    Proportional { ratio: f64 },
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            PowerModel::Equal => Ok(()),
            PowerModel::Proportional { ratio } => {
                if !(ratio > &0.0 && ratio <= &1.0) {
                    Err(Error::invalid(
                        "ratio",
                        format!("must lie in (0, 1], got {ratio}"),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Radiated fraction per antenna plus whatever power stays in the guide.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    /// Fraction of the fed power radiated by each antenna, feed first.
    pub fractions: Vec<f64>,
    /// Fraction still guided past the last antenna.
    pub residual: f64,
}

impl PowerProfile {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|f| !(*f >= 0.0)) || !(self.residual >= 0.0) {
            return Err(Error::invalid(
                "power profile",
                "fractions and residual must be non-negative",
            ));
        }
        let total: f64 = self.fractions.iter().sum::<f64>() + self.residual;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "power profile",
                format!("fractions and residual sum to {total}, expected 1"),
            ));
        }
        Ok(())
    }
}

/// Power profile of `n_antennas` elements under the given sharing model.
pub fn power_profile(model: PowerModel, n_antennas: usize) -> Result<PowerProfile> {
    model.validate()?;
    if n_antennas == 0 {
        return Err(Error::invalid("n_antennas", "must be at least 1"));
    }
    match model {
        PowerModel::Equal => Ok(PowerProfile {
            fractions: vec![1.0 / n_antennas as f64; n_antennas],
            residual: 0.0,
        }),
        PowerModel::Proportional { ratio } => {
            // Successive multiplication keeps the neighbour ratio exactly
            // (1 - ratio) in floating point.
            let mut fractions = Vec::with_capacity(n_antennas);
            let mut f = ratio;
            for _ in 0..n_antennas {
                fractions.push(f);
                f *= 1.0 - ratio;
            }
            let residual = (1.0 - fractions.iter().sum::<f64>()).max(0.0);
            Ok(PowerProfile {
                fractions,
                residual,
            })
        }
    }
}

/// Coupler chain whose cascade radiates `1/N` of the fed power at every
/// element: stage `k` (1-based) must extract `1/(N - k + 1)` of what
/// reaches it, which fixes its contact length.
///
/// With `max_efficiency < 1` the later stages eventually demand more than
/// one coupler can transfer; the error reports the first such stage.
pub fn equal_power_coupler_chain(
    n_antennas: usize,
    coupling_coefficient: f64,
    max_efficiency: f64,
) -> Result<Vec<CouplerSpec>> {
    if n_antennas == 0 {
        return Err(Error::invalid("n_antennas", "must be at least 1"));
    }
    let mut chain = Vec::with_capacity(n_antennas);
    for k in 1..=n_antennas {
        let ratio = 1.0 / (n_antennas - k + 1) as f64;
        let length = length_for_fraction(ratio, coupling_coefficient, max_efficiency).map_err(
            |e| match e {
                Error::UnreachableFraction {
                    target,
                    max_efficiency,
                    ..
                } => Error::UnreachableFraction {
                    target,
                    max_efficiency,
                    stage: Some(k),
                },
                other => other,
            },
        )?;
        chain.push(CouplerSpec {
            coupling_length: length,
            coupling_coefficient,
            max_efficiency,
        });
    }
    Ok(chain)
}

/// Cascades a coupler chain: each stage radiates its share of the power
/// still guided, and the remainder continues down the guide.
pub fn cascade(chain: &[CouplerSpec]) -> Result<PowerProfile> {
    let mut fractions = Vec::with_capacity(chain.len());
    let mut remaining = 1.0;
    for spec in chain {
        let (guided, radiated) = coupled_power(spec)?;
        fractions.push(remaining * radiated);
        remaining *= guided;
    }
    Ok(PowerProfile {
        fractions,
        residual: remaining,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol,
            "expected {a} and {b} to agree within {tol}, differ by {}",
            (a - b).abs()
        );
    }

    #[test]
    fn full_transfer_at_quarter_period() {
        for kappa in [0.5, 1.0, 3.0, 40.0] {
            let spec = CouplerSpec::new(PI / (2.0 * kappa), kappa, 1.0).unwrap();
            let (guided, radiated) = coupled_power(&spec).unwrap();
            assert_close(radiated, 1.0, 1e-12);
            assert_close(guided, 0.0, 1e-12);
            assert_close(spec.full_transfer_length(), PI / (2.0 * kappa), 0.0);
        }
    }

    #[test]
    fn zero_length_radiates_nothing() {
        let spec = CouplerSpec::new(0.0, 2.0, 0.7).unwrap();
        let (guided, radiated) = coupled_power(&spec).unwrap();
        assert_eq!(radiated, 0.0);
        assert_eq!(guided, 1.0);
    }

    #[test]
    fn efficiency_caps_the_transfer() {
        let spec = CouplerSpec::new(PI / 2.0, 1.0, 0.35).unwrap();
        let (_, radiated) = coupled_power(&spec).unwrap();
        assert_close(radiated, 0.35, 1e-12);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(CouplerSpec::new(-0.1, 1.0, 1.0).is_err());
        assert!(CouplerSpec::new(1.0, 0.0, 1.0).is_err());
        assert!(CouplerSpec::new(1.0, -2.0, 1.0).is_err());
        assert!(CouplerSpec::new(1.0, 1.0, 0.0).is_err());
        assert!(CouplerSpec::new(1.0, 1.0, 1.2).is_err());
        assert!(CouplerSpec::new(f64::NAN, 1.0, 1.0).is_err());
        let bad = CouplerSpec {
            coupling_length: 1.0,
            coupling_coefficient: -1.0,
            max_efficiency: 1.0,
        };
        assert!(coupled_power(&bad).is_err());
    }

    #[test]
    fn length_inversion_hits_target() {
        let kappa = 4.0;
        for target in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let length = length_for_fraction(target, kappa, 1.0).unwrap();
            let spec = CouplerSpec::new(length, kappa, 1.0).unwrap();
            let (_, radiated) = coupled_power(&spec).unwrap();
            assert_close(radiated, target, 1e-10);
        }
    }

    #[test]
    fn length_inversion_picks_smallest_root() {
        // All roots live in [0, pi/(2 kappa)]; anything beyond the quarter
        // period would be a later solution of the same equation.
        let kappa = 2.5;
        let length = length_for_fraction(0.42, kappa, 1.0).unwrap();
        assert!(length >= 0.0);
        assert!(length <= PI / (2.0 * kappa));
    }

    #[test]
    fn unreachable_fraction_is_an_error() {
        let err = length_for_fraction(0.8, 1.0, 0.6).unwrap_err();
        match err {
            Error::UnreachableFraction {
                target,
                max_efficiency,
                stage,
            } => {
                assert_eq!(target, 0.8);
                assert_eq!(max_efficiency, 0.6);
                assert_eq!(stage, None);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn equal_profile_matches_closed_form() {
        for n in 1..=16 {
            let profile = power_profile(PowerModel::Equal, n).unwrap();
            profile.validate().unwrap();
            assert_eq!(profile.fractions.len(), n);
            assert_eq!(profile.residual, 0.0);
            for f in &profile.fractions {
                assert_close(*f, 1.0 / n as f64, 0.0);
            }
        }
    }

    #[test]
    fn proportional_profile_matches_closed_form() {
        let profile = power_profile(PowerModel::Proportional { ratio: 0.5 }, 3).unwrap();
        profile.validate().unwrap();
        assert_eq!(profile.fractions, vec![0.5, 0.25, 0.125]);
        assert_eq!(profile.residual, 0.125);
    }

    #[test]
    fn equal_chain_realises_equal_shares() {
        for n in 1..=16 {
            let chain = equal_power_coupler_chain(n, 3.0, 1.0).unwrap();
            let profile = cascade(&chain).unwrap();
            profile.validate().unwrap();
            for f in &profile.fractions {
                assert_close(*f, 1.0 / n as f64, 1e-12);
            }
            assert_close(profile.residual, 0.0, 1e-12);
            // Later stages must extract ever larger shares, ending at 1.
            assert_close(chain[n - 1].coupling_length, PI / (2.0 * 3.0), 1e-12);
            for w in chain.windows(2) {
                assert!(w[0].coupling_length < w[1].coupling_length);
            }
        }
    }

    #[test]
    fn limited_efficiency_fails_at_the_right_stage() {
        // Stage k of an N = 4 chain extracts 1/(5-k): 0.25, 1/3, 0.5, 1.
        // F = 0.6 only blocks the final full-extraction stage, while
        // F = 0.4 already blocks the 0.5 extraction at stage 3.
        let err = equal_power_coupler_chain(4, 1.0, 0.6).unwrap_err();
        match err {
            Error::UnreachableFraction { stage, .. } => assert_eq!(stage, Some(4)),
            other => panic!("unexpected error {other:?}"),
        }
        let err = equal_power_coupler_chain(4, 1.0, 0.4).unwrap_err();
        match err {
            Error::UnreachableFraction { stage, .. } => assert_eq!(stage, Some(3)),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn zero_antennas_rejected() {
        assert!(power_profile(PowerModel::Equal, 0).is_err());
        assert!(equal_power_coupler_chain(0, 1.0, 1.0).is_err());
        assert!(power_profile(PowerModel::Proportional { ratio: 1.5 }, 2).is_err());
    }

    proptest! {
        #[test]
        fn guided_plus_radiated_is_one(
            length in 0.0..10.0f64,
            kappa in 1e-3..50.0f64,
            eff in 1e-3..1.0f64,
        ) {
            let spec = CouplerSpec::new(length, kappa, eff).unwrap();
            let (guided, radiated) = coupled_power(&spec).unwrap();
            prop_assert!(radiated >= 0.0 && radiated <= eff + 1e-15);
            prop_assert!((guided + radiated - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn radiated_power_grows_up_to_quarter_period(
            kappa in 1e-2..20.0f64,
            eff in 1e-3..1.0f64,
            a in 0.0..1.0f64,
            b in 0.0..1.0f64,
        ) {
            let quarter = PI / (2.0 * kappa);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p_lo = coupled_power(&CouplerSpec::new(lo * quarter, kappa, eff).unwrap()).unwrap().1;
            let p_hi = coupled_power(&CouplerSpec::new(hi * quarter, kappa, eff).unwrap()).unwrap().1;
            prop_assert!(p_lo <= p_hi + 1e-15);
        }

        #[test]
        fn length_round_trips_through_fraction(
            target_scale in 0.0..1.0f64,
            kappa in 1e-2..20.0f64,
            eff in 1e-3..1.0f64,
        ) {
            let target = target_scale * eff;
            let length = length_for_fraction(target, kappa, eff).unwrap();
            let spec = CouplerSpec::new(length, kappa, eff).unwrap();
            let (_, radiated) = coupled_power(&spec).unwrap();
            prop_assert!((radiated - target).abs() <= 1e-10);
        }

        #[test]
        fn profiles_conserve_power(
            n in 1usize..16,
            ratio in 1e-3..1.0f64,
        ) {
            for model in [PowerModel::Equal, PowerModel::Proportional { ratio }] {
                let profile = power_profile(model, n).unwrap();
                prop_assert!(profile.validate().is_ok());
            }
        }

        #[test]
        fn proportional_neighbour_ratio_is_exact(
            n in 2usize..16,
            ratio in 1e-3..0.999f64,
        ) {
            let profile = power_profile(PowerModel::Proportional { ratio }, n).unwrap();
            for w in profile.fractions.windows(2) {
                // Exact equality: each fraction is the previous one times
                // the same rounded factor.
                prop_assert_eq!(w[1], w[0] * (1.0 - ratio));
            }
        }

        #[test]
        fn cascade_conserves_power(
            lengths in proptest::collection::vec(0.0..2.0f64, 1..16),
            kappa in 1e-2..10.0f64,
            eff in 1e-3..1.0f64,
        ) {
            let chain: Vec<CouplerSpec> = lengths
                .iter()
                .map(|&l| CouplerSpec::new(l, kappa, eff).unwrap())
                .collect();
            let profile = cascade(&chain).unwrap();
            prop_assert!(profile.validate().is_ok());
        }
    }
}
