//! Multiuser minimum-power beamforming and the joint optimization of
//! transmit precoding with antenna placement.
//!
//! The inner problem (fixed placements) is the classic power-minimization
//! under per-user SINR targets, solved by the uplink-downlink duality
//! fixed point: iterate dual uplink powers against MMSE receive directions
//! until convergence, then convert to downlink powers through a linear
//! system. The joint problem alternates that inner solve with per-antenna
//! one-dimensional placement updates that maximize the worst SINR margin
//! under the current precoder. Keeping the margin at or above one
//! guarantees the previous precoder stays feasible, so the re-solved total
//! power never increases across rounds.
//!
//! Baselines for comparison: a conventional half-wavelength array with one
//! antenna per RF chain, and a hybrid array where each RF chain drives a
//! sub-array through conjugate-phase analog weights.

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{channel_matrix, effective_channel, sinr, FeedArchitecture};
use crate::coupling::PowerModel;
use crate::error::{Error, Result};
use crate::geometry::{PinchConfig, RadioParams, WaveguideLayout};
use crate::placement::{optimize_continuous, optimize_discrete, CandidateGrid};

const MAX_DUAL_SWEEPS: usize = 500;
const DUAL_TOLERANCE: f64 = 1e-10;
const DUAL_DIVERGENCE: f64 = 1e12;
const MAX_OUTER_ROUNDS: usize = 100;
const OUTER_RELATIVE_TOLERANCE: f64 = 1e-6;

/// Precoder and total power for a fixed effective channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSolution {
    /// One column per user.
    pub precoder: DMatrix<Complex64>,
    /// Sum of squared column norms.
    pub total_power: f64,
    /// Fixed-point sweeps used.
    pub iterations: usize,
}

/// Result of the inner solver: the SINR targets are either met at minimum
/// power or provably unreachable. Infeasibility is a value so sweeps can
/// record it and continue.
#[derive(Debug, Clone, PartialEq)]
pub enum PrecoderOutcome {
    Feasible(PrecoderSolution),
    Infeasible,
}

impl PrecoderOutcome {
    pub fn feasible(&self) -> Option<&PrecoderSolution> {
        match self {
            PrecoderOutcome::Feasible(sol) => Some(sol),
            PrecoderOutcome::Infeasible => None,
        }
    }
}

fn check_targets(targets: &[f64], n_users: usize) -> Result<()> {
    if targets.len() != n_users {
        return Err(Error::dims(format!(
            "{} SINR targets for {} users",
            targets.len(),
            n_users
        )));
    }
    for &g in targets {
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::invalid(
                "sinr_targets",
                format!("targets must be finite and > 0, got {g}"),
            ));
        }
    }
    Ok(())
}

fn dual_matrix(
    channels: &[DVector<Complex64>],
    dual_powers: &[f64],
    noise_power: f64,
    n_chains: usize,
) -> DMatrix<Complex64> {
    let mut a = DMatrix::identity(n_chains, n_chains) * Complex64::new(noise_power, 0.0);
    for (h, &q) in channels.iter().zip(dual_powers) {
        a += h * h.adjoint() * Complex64::new(q, 0.0);
    }
    a
}

/// Minimum-total-power precoder meeting every SINR target, or Infeasible.
///
/// `effective` has one row per user, one column per RF chain; the SINR
/// convention matches [`crate::channel::sinr`]. The fixed point iterates
/// dual powers `q_k <- gamma_k / sinr_uplink_k(q)` (Sherman-Morrison gives
/// the leave-one-out value from the full dual covariance), stopping at
/// relative tolerance 1e-10 or 500 sweeps; dual powers beyond 1e12 mean
/// the targets are unreachable. The downlink conversion reuses the MMSE
/// directions and solves a real linear system for the column powers, and
/// the result is accepted only if it checks out against the SINR targets.
pub fn min_power_precoder(
    effective: &DMatrix<Complex64>,
    targets: &[f64],
    noise_power: f64,
) -> Result<PrecoderOutcome> {
    let n_users = effective.nrows();
    let n_chains = effective.ncols();
    check_targets(targets, n_users)?;
    if !(noise_power > 0.0) || !noise_power.is_finite() {
        return Err(Error::invalid(
            "noise_power",
            format!("must be finite and > 0, got {noise_power}"),
        ));
    }
    if effective.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::invalid("effective", "channel entries must be finite"));
    }
    if n_users == 0 || n_chains == 0 {
        return Err(Error::dims("effective channel must be non-empty"));
    }

    let channels: Vec<DVector<Complex64>> =
        (0..n_users).map(|k| effective.row(k).transpose()).collect();
    if channels.iter().any(|h| h.norm_squared() == 0.0) {
        return Ok(PrecoderOutcome::Infeasible);
    }

    let mut dual: Vec<f64> = channels
        .iter()
        .zip(targets)
        .map(|(h, &g)| g * noise_power / h.norm_squared())
        .collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_DUAL_SWEEPS {
        iterations += 1;
        let lu = dual_matrix(&channels, &dual, noise_power, n_chains).lu();
        let mut largest_change = 0.0f64;
        let mut next = dual.clone();
        for k in 0..n_users {
            let x = match lu.solve(&channels[k]) {
                Some(x) => x,
                None => return Ok(PrecoderOutcome::Infeasible),
            };
            let y = channels[k].dotc(&x).re;
            if !(y > 0.0) || !y.is_finite() {
                return Ok(PrecoderOutcome::Infeasible);
            }
            // Leave-one-out: h^H (A - q h h^H)^{-1} h = y / (1 - q y).
            let q_new = targets[k] * (1.0 - dual[k] * y) / y;
            if !(q_new > 0.0) || !q_new.is_finite() {
                return Ok(PrecoderOutcome::Infeasible);
            }
            largest_change = largest_change.max((q_new - dual[k]).abs() / q_new);
            next[k] = q_new;
        }
        dual = next;
        if dual.iter().any(|&q| q > DUAL_DIVERGENCE) {
            return Ok(PrecoderOutcome::Infeasible);
        }
        if largest_change < DUAL_TOLERANCE {
            converged = true;
            break;
        }
    }

    // MMSE directions from the final dual covariance.
    let lu = dual_matrix(&channels, &dual, noise_power, n_chains).lu();
    let mut directions: Vec<DVector<Complex64>> = Vec::with_capacity(n_users);
    for h in &channels {
        let x = match lu.solve(h) {
            Some(x) => x,
            None => return Ok(PrecoderOutcome::Infeasible),
        };
        let norm = x.norm();
        if !(norm > 0.0) {
            return Ok(PrecoderOutcome::Infeasible);
        }
        directions.push(x / Complex64::new(norm, 0.0));
    }

    // Feasibility certificate for these directions: finite powers meeting
    // every target exist iff the target-weighted crosstalk matrix has
    // spectral radius below one. Without this, a slowly diverging fixed
    // point can produce a near-singular power system whose huge solution
    // still passes an SINR check to within rounding.
    let mut gains = DMatrix::<f64>::zeros(n_users, n_users);
    for k in 0..n_users {
        for j in 0..n_users {
            gains[(k, j)] = channels[k].dotc(&directions[j]).norm_sqr();
        }
    }
    let mut crosstalk = DMatrix::<f64>::zeros(n_users, n_users);
    for k in 0..n_users {
        if !(gains[(k, k)] > 0.0) {
            return Ok(PrecoderOutcome::Infeasible);
        }
        for j in 0..n_users {
            if j != k {
                crosstalk[(k, j)] = targets[k] * gains[(k, j)] / gains[(k, k)];
            }
        }
    }
    let spectral_radius = crosstalk
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    if spectral_radius >= 1.0 - 1e-9 {
        return Ok(PrecoderOutcome::Infeasible);
    }

    // Downlink powers from the per-user SINR equations.
    let mut balance = DMatrix::<f64>::zeros(n_users, n_users);
    for k in 0..n_users {
        for j in 0..n_users {
            let gain = gains[(k, j)];
            balance[(k, j)] = if k == j { gain / targets[k] } else { -gain };
        }
    }
    let powers = match balance.lu().solve(&DVector::from_element(n_users, noise_power)) {
        Some(p) => p,
        None => return Ok(PrecoderOutcome::Infeasible),
    };
    if powers.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Ok(PrecoderOutcome::Infeasible);
    }

    let mut precoder = DMatrix::zeros(n_chains, n_users);
    for (j, (u, &p)) in directions.iter().zip(powers.iter()).enumerate() {
        precoder.set_column(j, &(u * Complex64::new(p.sqrt(), 0.0)));
    }
    let achieved = sinr(effective, &precoder, noise_power)?;
    let ok = achieved
        .iter()
        .zip(targets)
        .all(|(s, &g)| *s >= g * (1.0 - 1e-8));
    if !ok {
        // Either the fixed point ran out of sweeps short of the target or
        // the conversion degenerated; both mean no certified solution.
        let _ = converged;
        return Ok(PrecoderOutcome::Infeasible);
    }
    Ok(PrecoderOutcome::Feasible(PrecoderSolution {
        precoder,
        total_power: powers.sum(),
        iterations,
    }))
}

/// Whether antennas slide continuously or snap to a candidate grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Continuous,
    Discrete(CandidateGrid),
}

/// A multi-waveguide multiuser minimum-power design instance.
#[derive(Debug, Clone, PartialEq)]
pub struct JointProblem {
    pub users: Vec<Point3<f64>>,
    pub waveguides: Vec<WaveguideLayout>,
    /// Antennas pinching each waveguide.
    pub n_pa_per_waveguide: usize,
    pub power_model: PowerModel,
    /// Per-user SINR targets, linear.
    pub sinr_targets: Vec<f64>,
    pub radio: RadioParams,
    pub activation: Activation,
    pub architecture: FeedArchitecture,
}

impl JointProblem {
    pub fn validate(&self) -> Result<()> {
        if self.users.is_empty() {
            return Err(Error::invalid("users", "need at least one user"));
        }
        if self.waveguides.is_empty() {
            return Err(Error::invalid("waveguides", "need at least one waveguide"));
        }
        check_targets(&self.sinr_targets, self.users.len())?;
        if self.n_pa_per_waveguide == 0 {
            return Err(Error::invalid("n_pa_per_waveguide", "must be at least 1"));
        }
        self.power_model.validate()?;
        self.radio.validate()?;
        for wg in &self.waveguides {
            wg.validate()?;
        }
        self.architecture.validate(self.waveguides.len())?;
        let shortest = self
            .waveguides
            .iter()
            .map(|w| w.length)
            .fold(f64::INFINITY, f64::min);
        match &self.activation {
            Activation::Continuous => {
                let span = (self.n_pa_per_waveguide - 1) as f64 * self.radio.wavelength / 2.0;
                if span > shortest {
                    return Err(Error::ApertureTooLong {
                        n_antennas: self.n_pa_per_waveguide,
                        spacing: self.radio.wavelength / 2.0,
                        required: span,
                        available: shortest,
                    });
                }
            }
            Activation::Discrete(grid) => {
                if grid.len() < self.n_pa_per_waveguide {
                    return Err(Error::NotEnoughCandidates {
                        requested: self.n_pa_per_waveguide,
                        available: grid.len(),
                    });
                }
                if grid.offsets().last().copied().unwrap_or(0.0) > shortest {
                    return Err(Error::invalid(
                        "activation",
                        "candidate offsets extend beyond the shortest waveguide",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A feasible joint design.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    pub precoder: DMatrix<Complex64>,
    pub placements: Vec<PinchConfig>,
    pub total_power: f64,
    pub achieved_sinr: Vec<f64>,
    /// Outer descent rounds of the winning start.
    pub iterations: usize,
    /// Accepted total power after each outer round, nonincreasing.
    pub outer_powers: Vec<f64>,
}

/// Result of [`joint_min_power`]; infeasibility carries the best worst-user
/// SINR margin (achieved/target) any examined placement reached.
#[derive(Debug, Clone, PartialEq)]
pub enum JointOutcome {
    Feasible(BeamformingSolution),
    Infeasible { best_margin: f64 },
}

impl JointOutcome {
    pub fn feasible(&self) -> Option<&BeamformingSolution> {
        match self {
            JointOutcome::Feasible(sol) => Some(sol),
            JointOutcome::Infeasible { .. } => None,
        }
    }
}

fn effective_for(
    problem: &JointProblem,
    placements: &[Vec<f64>],
) -> Result<DMatrix<Complex64>> {
    let configs: Vec<PinchConfig> = placements
        .iter()
        .zip(&problem.waveguides)
        .map(|(offsets, wg)| PinchConfig::new(offsets.clone(), problem.power_model, wg.length))
        .collect::<Result<_>>()?;
    let channels = channel_matrix(&problem.waveguides, &configs, &problem.users, &problem.radio)?;
    effective_channel(&channels, &problem.architecture)
}

/// Worst achieved/target SINR ratio under a fixed precoder.
fn worst_margin(
    effective: &DMatrix<Complex64>,
    precoder: &DMatrix<Complex64>,
    targets: &[f64],
    noise_power: f64,
) -> Result<f64> {
    let achieved = sinr(effective, precoder, noise_power)?;
    Ok(achieved
        .iter()
        .zip(targets)
        .map(|(s, g)| s / g)
        .fold(f64::INFINITY, f64::min))
}

/// Unit-power matched-filter precoder, used to score placements when the
/// inner problem is infeasible.
fn matched_filter(effective: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n_users = effective.nrows();
    let n_chains = effective.ncols();
    let mut w = DMatrix::zeros(n_chains, n_users);
    for k in 0..n_users {
        let h = effective.row(k).transpose();
        let norm = h.norm();
        if norm > 0.0 {
            w.set_column(k, &(h / Complex64::new(norm, 0.0)));
        }
    }
    w
}

/// One margin-maximizing pass over every antenna offset, holding the
/// precoder fixed. Accepts only strict improvements, so the worst margin
/// is nondecreasing. Returns the final margin.
fn placement_pass(
    problem: &JointProblem,
    placements: &mut [Vec<f64>],
    precoder: &DMatrix<Complex64>,
) -> Result<f64> {
    let noise = problem.radio.noise_power;
    let targets = &problem.sinr_targets;
    let mut margin = worst_margin(
        &effective_for(problem, placements)?,
        precoder,
        targets,
        noise,
    )?;
    let separation = problem.radio.wavelength / 2.0;

    for wg_idx in 0..problem.waveguides.len() {
        for pa_idx in 0..problem.n_pa_per_waveguide {
            let current = placements[wg_idx][pa_idx];
            let try_offset = |d: f64, placements: &mut [Vec<f64>]| -> Result<Option<f64>> {
                placements[wg_idx][pa_idx] = d;
                let m = worst_margin(
                    &effective_for(problem, placements)?,
                    precoder,
                    targets,
                    noise,
                )?;
                placements[wg_idx][pa_idx] = current;
                Ok(if m > margin { Some(m) } else { None })
            };

            let mut best: Option<(f64, f64)> = None; // (margin, offset)
            match &problem.activation {
                Activation::Discrete(grid) => {
                    for &candidate in grid.offsets() {
                        if candidate != current
                            && placements[wg_idx]
                                .iter()
                                .enumerate()
                                .any(|(i, &d)| i != pa_idx && d == candidate)
                        {
                            continue; // occupied on this waveguide
                        }
                        // The replacement must keep offsets strictly
                        // increasing after re-sorting, which sorting below
                        // guarantees; skip exact duplicates only.
                        let mut trial = placements[wg_idx].clone();
                        trial[pa_idx] = candidate;
                        trial.sort_by(f64::total_cmp);
                        let original = std::mem::replace(&mut placements[wg_idx], trial);
                        let m = worst_margin(
                            &effective_for(problem, placements)?,
                            precoder,
                            targets,
                            noise,
                        )?;
                        placements[wg_idx] = original;
                        if m > margin && best.is_none_or(|(bm, _)| m > bm) {
                            best = Some((m, candidate));
                        }
                    }
                    if let Some((m, candidate)) = best {
                        placements[wg_idx][pa_idx] = candidate;
                        placements[wg_idx].sort_by(f64::total_cmp);
                        margin = m;
                    }
                }
                Activation::Continuous => {
                    let wg = &problem.waveguides[wg_idx];
                    let lo = if pa_idx == 0 {
                        0.0
                    } else {
                        placements[wg_idx][pa_idx - 1] + separation
                    };
                    let hi = if pa_idx + 1 == problem.n_pa_per_waveguide {
                        wg.length
                    } else {
                        placements[wg_idx][pa_idx + 1] - separation
                    };
                    if !(lo < hi) {
                        continue;
                    }
                    const GRID: usize = 64;
                    let at = |j: usize| lo + (hi - lo) * j as f64 / (GRID - 1) as f64;
                    let mut best_j = None;
                    for j in 0..GRID {
                        if let Some(m) = try_offset(at(j), placements)? {
                            if best.is_none_or(|(bm, _)| m > bm) {
                                best = Some((m, at(j)));
                                best_j = Some(j);
                            }
                        }
                    }
                    // Golden-section refinement inside the winning cell.
                    if let Some(j) = best_j {
                        let mut a = at(j.saturating_sub(1));
                        let mut b = at((j + 1).min(GRID - 1));
                        let phi = (5f64.sqrt() - 1.0) / 2.0;
                        let mut x1 = b - phi * (b - a);
                        let mut x2 = a + phi * (b - a);
                        let eval = |d: f64, placements: &mut [Vec<f64>]| -> Result<f64> {
                            placements[wg_idx][pa_idx] = d;
                            let m = worst_margin(
                                &effective_for(problem, placements)?,
                                precoder,
                                targets,
                                noise,
                            )?;
                            placements[wg_idx][pa_idx] = current;
                            Ok(m)
                        };
                        let mut f1 = eval(x1, placements)?;
                        let mut f2 = eval(x2, placements)?;
                        for _ in 0..40 {
                            if f1 < f2 {
                                a = x1;
                                x1 = x2;
                                f1 = f2;
                                x2 = a + phi * (b - a);
                                f2 = eval(x2, placements)?;
                            } else {
                                b = x2;
                                x2 = x1;
                                f2 = f1;
                                x1 = b - phi * (b - a);
                                f1 = eval(x1, placements)?;
                            }
                        }
                        let refined = if f1 > f2 { x1 } else { x2 };
                        if let Some(m) = try_offset(refined, placements)? {
                            if best.is_none_or(|(bm, _)| m > bm) {
                                best = Some((m, refined));
                            }
                        }
                    }
                    if let Some((m, offset)) = best {
                        placements[wg_idx][pa_idx] = offset;
                        margin = m;
                    }
                }
            }
        }
    }
    Ok(margin)
}

enum StartOutcome {
    Feasible(BeamformingSolution),
    Infeasible { best_margin: f64 },
}

fn descend_from(problem: &JointProblem, start: &[Vec<f64>]) -> Result<StartOutcome> {
    let noise = problem.radio.noise_power;
    let mut placements: Vec<Vec<f64>> = start.to_vec();
    let mut best_margin = f64::NEG_INFINITY;

    let mut effective = effective_for(problem, &placements)?;
    let mut current = match min_power_precoder(&effective, &problem.sinr_targets, noise)? {
        PrecoderOutcome::Feasible(sol) => Some(sol),
        PrecoderOutcome::Infeasible => None,
    };

    // Repair phase: chase SINR margin under a matched filter until the
    // inner problem turns feasible.
    if current.is_none() {
        for _ in 0..10 {
            let filter = matched_filter(&effective);
            let margin = placement_pass(problem, &mut placements, &filter)?;
            best_margin = best_margin.max(margin);
            effective = effective_for(problem, &placements)?;
            if let PrecoderOutcome::Feasible(sol) =
                min_power_precoder(&effective, &problem.sinr_targets, noise)?
            {
                current = Some(sol);
                break;
            }
        }
    }
    let Some(mut solution) = current else {
        if best_margin == f64::NEG_INFINITY {
            let filter = matched_filter(&effective);
            best_margin = worst_margin(&effective, &filter, &problem.sinr_targets, noise)?;
        }
        return Ok(StartOutcome::Infeasible { best_margin });
    };

    let mut outer_powers = vec![solution.total_power];
    let mut rounds = 0;
    for _ in 0..MAX_OUTER_ROUNDS {
        rounds += 1;
        let snapshot = placements.clone();
        placement_pass(problem, &mut placements, &solution.precoder)?;
        let trial_effective = effective_for(problem, &placements)?;
        match min_power_precoder(&trial_effective, &problem.sinr_targets, noise)? {
            PrecoderOutcome::Feasible(sol) if sol.total_power <= solution.total_power => {
                let improvement =
                    (solution.total_power - sol.total_power) / solution.total_power;
                solution = sol;
                effective = trial_effective;
                outer_powers.push(solution.total_power);
                if improvement < OUTER_RELATIVE_TOLERANCE {
                    break;
                }
            }
            // A margin-preserving move can never make the old precoder
            // infeasible; treat any regression as convergence and restore
            // the placements that produced the accepted solution.
            _ => {
                placements = snapshot;
                break;
            }
        }
    }

    let achieved = sinr(&effective, &solution.precoder, noise)?;
    let configs: Vec<PinchConfig> = placements
        .iter()
        .zip(&problem.waveguides)
        .map(|(offsets, wg)| PinchConfig::new(offsets.clone(), problem.power_model, wg.length))
        .collect::<Result<_>>()?;
    Ok(StartOutcome::Feasible(BeamformingSolution {
        precoder: solution.precoder,
        placements: configs,
        total_power: solution.total_power,
        achieved_sinr: achieved,
        iterations: rounds,
        outer_powers,
    }))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut result = 1usize;
    for i in 0..k.min(n - k) {
        result = result.saturating_mul(n - i) / (i + 1);
    }
    result
}

fn starting_placements(problem: &JointProblem, seed: u64) -> Result<Vec<Vec<Vec<f64>>>> {
    let n_wg = problem.waveguides.len();
    let n_pa = problem.n_pa_per_waveguide;
    let mut starts: Vec<Vec<Vec<f64>>> = Vec::new();

    if let Activation::Discrete(grid) = &problem.activation {
        // Tiny search spaces: every placement combination becomes a start,
        // so the descent degenerates to polished enumeration.
        let per_wg = binomial(grid.len(), n_pa);
        if per_wg > 0 && per_wg.saturating_pow(n_wg as u32) <= 64 {
            let combos = combinations(grid.len(), n_pa);
            let mut assignment = vec![0usize; n_wg];
            loop {
                starts.push(
                    assignment
                        .iter()
                        .map(|&c| combos[c].iter().map(|&i| grid.offsets()[i]).collect())
                        .collect(),
                );
                let mut pos = 0;
                loop {
                    if pos == n_wg {
                        break;
                    }
                    assignment[pos] += 1;
                    if assignment[pos] < combos.len() {
                        break;
                    }
                    assignment[pos] = 0;
                    pos += 1;
                }
                if pos == n_wg {
                    break;
                }
            }
            return Ok(starts);
        }
    }

    // Each waveguide serves its round-robin user as well as possible.
    let mut matched: Vec<Vec<f64>> = Vec::with_capacity(n_wg);
    for (w, wg) in problem.waveguides.iter().enumerate() {
        let user = &problem.users[w % problem.users.len()];
        let offsets = match &problem.activation {
            Activation::Discrete(grid) => {
                optimize_discrete(user, wg, grid, n_pa, problem.power_model, &problem.radio)?
                    .offsets
            }
            Activation::Continuous => optimize_continuous(
                user,
                wg,
                n_pa,
                problem.power_model,
                &problem.radio,
                4,
                seed ^ (w as u64).wrapping_mul(0x9e3779b97f4a7c15),
            )?
            .offsets,
        };
        matched.push(offsets);
    }
    starts.push(matched);

    // Evenly spread antennas.
    let spread: Vec<Vec<f64>> = problem
        .waveguides
        .iter()
        .map(|wg| match &problem.activation {
            Activation::Discrete(grid) => {
                let step = grid.len() / n_pa;
                (0..n_pa).map(|i| grid.offsets()[(i * step.max(1)).min(grid.len() - 1)]).collect()
            }
            Activation::Continuous => (0..n_pa)
                .map(|i| wg.length * (i as f64 + 0.5) / n_pa as f64)
                .collect(),
        })
        .collect();
    if spread.iter().all(|v| v.windows(2).all(|w| w[1] > w[0])) {
        starts.push(spread);
    }

    // Seeded random starts.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..2 {
        let mut random: Vec<Vec<f64>> = Vec::with_capacity(n_wg);
        let mut valid = true;
        for wg in &problem.waveguides {
            let offsets: Vec<f64> = match &problem.activation {
                Activation::Discrete(grid) => {
                    let mut picked: Vec<usize> = Vec::with_capacity(n_pa);
                    let mut guard = 0;
                    while picked.len() < n_pa && guard < 10_000 {
                        guard += 1;
                        let i = rng.random_range(0..grid.len());
                        if !picked.contains(&i) {
                            picked.push(i);
                        }
                    }
                    if picked.len() < n_pa {
                        valid = false;
                        break;
                    }
                    picked.sort_unstable();
                    picked.iter().map(|&i| grid.offsets()[i]).collect()
                }
                Activation::Continuous => {
                    let separation = problem.radio.wavelength / 2.0;
                    let mut v: Vec<f64> =
                        (0..n_pa).map(|_| rng.random_range(0.0..wg.length)).collect();
                    v.sort_by(f64::total_cmp);
                    let mut lower = 0.0;
                    for (i, x) in v.iter_mut().enumerate() {
                        let bound = if i == 0 { 0.0 } else { lower + separation };
                        if *x < bound {
                            *x = bound;
                        }
                        lower = *x;
                    }
                    let mut upper = wg.length;
                    for (i, x) in v.iter_mut().enumerate().rev() {
                        let bound = if i + 1 == n_pa { wg.length } else { upper - separation };
                        if *x > bound {
                            *x = bound;
                        }
                        upper = *x;
                    }
                    v
                }
            };
            random.push(offsets);
        }
        if valid {
            starts.push(random);
        }
    }
    Ok(starts)
}

fn joint_min_power_impl(
    problem: &JointProblem,
    seed: u64,
    extra_starts: &[Vec<Vec<f64>>],
) -> Result<JointOutcome> {
    problem.validate()?;
    let mut starts = starting_placements(problem, seed)?;
    for extra in extra_starts {
        starts.push(extra.clone());
    }

    let mut best: Option<BeamformingSolution> = None;
    let mut best_margin = f64::NEG_INFINITY;
    for start in &starts {
        match descend_from(problem, start)? {
            StartOutcome::Feasible(sol) => {
                let replace = match &best {
                    None => true,
                    Some(cur) => sol.total_power < cur.total_power,
                };
                if replace {
                    best = Some(sol);
                }
            }
            StartOutcome::Infeasible { best_margin: m } => {
                best_margin = best_margin.max(m);
            }
        }
    }
    Ok(match best {
        Some(sol) => JointOutcome::Feasible(sol),
        None => JointOutcome::Infeasible { best_margin },
    })
}

/// Jointly chooses antenna placements and the transmit precoder to meet
/// all SINR targets at minimum total power.
///
/// Block-coordinate descent from several deterministic and seeded starts:
/// re-solve the inner precoder problem, then nudge every antenna offset to
/// maximize the worst SINR margin under the incumbent precoder (their
/// current offset is always a candidate, so the margin never drops below
/// one and the re-solve can only reduce power). Stops when the relative
/// power improvement falls under 1e-6 or after 100 rounds. On tiny
/// discrete search spaces every placement combination is used as a start.
pub fn joint_min_power(problem: &JointProblem, seed: u64) -> Result<JointOutcome> {
    joint_min_power_impl(problem, seed, &[])
}

fn ula_channels(
    users: &[Point3<f64>],
    bs_position: &Point3<f64>,
    n_antennas: usize,
    params: &RadioParams,
) -> Result<DMatrix<Complex64>> {
    params.validate()?;
    if n_antennas == 0 {
        return Err(Error::invalid("n_antennas", "must be at least 1"));
    }
    if users.is_empty() {
        return Err(Error::invalid("users", "need at least one user"));
    }
    let axis = Vector3::new(1.0, 0.0, 0.0);
    let mut matrix = DMatrix::zeros(users.len(), n_antennas);
    for (k, user) in users.iter().enumerate() {
        for i in 0..n_antennas {
            let position = bs_position + axis * (i as f64 * params.wavelength / 2.0);
            let range = (user - position).norm();
            if range <= 1e-12 {
                return Err(Error::ZeroRange);
            }
            let phase = -(2.0 * std::f64::consts::PI / params.wavelength) * range;
            matrix[(k, i)] = Complex64::from_polar(params.reference_gain / range, phase);
        }
    }
    Ok(matrix)
}

/// Minimum transmit power of a conventional array: a half-wavelength
/// uniform linear array at the base station, one antenna per RF chain,
/// same free-space channel law with no in-guide travel.
pub fn baseline_conventional_mimo(
    users: &[Point3<f64>],
    bs_position: &Point3<f64>,
    n_antennas: usize,
    targets: &[f64],
    params: &RadioParams,
) -> Result<PrecoderOutcome> {
    let channels = ula_channels(users, bs_position, n_antennas, params)?;
    min_power_precoder(&channels, targets, params.noise_power)
}

/// Minimum transmit power of a hybrid array: each RF chain drives its own
/// `antennas_per_rf`-element sub-array through unit-modulus analog weights
/// conjugate-matched to a round-robin-assigned user; the digital stage is
/// the minimum-power precoder on the effective users-by-chains matrix.
pub fn baseline_massive_mimo_hybrid(
    users: &[Point3<f64>],
    bs_position: &Point3<f64>,
    n_rf: usize,
    antennas_per_rf: usize,
    targets: &[f64],
    params: &RadioParams,
) -> Result<PrecoderOutcome> {
    if n_rf == 0 || antennas_per_rf == 0 {
        return Err(Error::invalid(
            "n_rf",
            "chain and sub-array sizes must be at least 1",
        ));
    }
    let total = n_rf * antennas_per_rf;
    let channels = ula_channels(users, bs_position, total, params)?;
    let scale = 1.0 / (antennas_per_rf as f64).sqrt();
    let mut analog = DMatrix::zeros(total, n_rf);
    for j in 0..n_rf {
        let assigned = j % users.len();
        for i in j * antennas_per_rf..(j + 1) * antennas_per_rf {
            let c = channels[(assigned, i)];
            analog[(i, j)] = c / Complex64::new(c.norm() / scale, 0.0);
        }
    }
    // Store the effective matrix in the same conjugated-row convention as
    // the channels themselves: entry = sum_i c_ki conj(v_ij).
    let effective = &channels * analog.conjugate();
    min_power_precoder(&effective, targets, params.noise_power)
}

/// Systems compared in the power-versus-SINR study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepSystem {
    PassContinuous,
    PassDiscrete,
    ConventionalMimo,
    MassiveMimoHybrid,
}

impl SweepSystem {
    pub fn label(&self) -> &'static str {
        match self {
            SweepSystem::PassContinuous => "pass_continuous",
            SweepSystem::PassDiscrete => "pass_discrete",
            SweepSystem::ConventionalMimo => "conventional_mimo",
            SweepSystem::MassiveMimoHybrid => "massive_mimo_hybrid",
        }
    }
}

/// Everything the sweep needs beyond the per-point SINR target.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSetup {
    /// Template problem; its `sinr_targets` are replaced per sweep point
    /// and its activation must be Discrete when a PASS system runs (the
    /// grid seeds the continuous variant too).
    pub problem: JointProblem,
    pub bs_position: Point3<f64>,
    /// Sub-array size of the hybrid baseline.
    pub antennas_per_rf: usize,
    pub seed: u64,
}

/// One sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sinr_db: f64,
    pub system: SweepSystem,
    /// Linear watts; NaN when infeasible.
    pub total_power: f64,
    pub feasible: bool,
    pub iterations: usize,
}

/// Minimum power of every requested system at every SINR target, row
/// order `(gamma, system)` as given. All systems run with the same number
/// of RF chains. The continuous PASS run is seeded with the discrete
/// solution's placements, so its power never exceeds the discrete one.
/// Infeasible cells are recorded and the sweep continues.
pub fn power_vs_sinr_sweep(
    setup: &SweepSetup,
    gamma_db: &[f64],
    systems: &[SweepSystem],
) -> Result<Vec<SweepRow>> {
    setup.problem.validate()?;
    if setup.antennas_per_rf == 0 {
        return Err(Error::invalid("antennas_per_rf", "must be at least 1"));
    }
    let n_users = setup.problem.users.len();
    let n_rf = setup
        .problem
        .architecture
        .n_rf_chains(setup.problem.waveguides.len());
    let needs_pass = systems
        .iter()
        .any(|s| matches!(s, SweepSystem::PassContinuous | SweepSystem::PassDiscrete));
    if needs_pass && !matches!(setup.problem.activation, Activation::Discrete(_)) {
        return Err(Error::invalid(
            "activation",
            "PASS sweep systems need a discrete candidate grid in the template",
        ));
    }

    let mut rows = Vec::with_capacity(gamma_db.len() * systems.len());
    for &sinr_db in gamma_db {
        let gamma = 10f64.powf(sinr_db / 10.0);
        let targets = vec![gamma; n_users];

        let mut discrete_outcome: Option<JointOutcome> = None;
        if needs_pass {
            let mut discrete_problem = setup.problem.clone();
            discrete_problem.sinr_targets = targets.clone();
            discrete_outcome = Some(joint_min_power(&discrete_problem, setup.seed)?);
        }

        for &system in systems {
            let row = match system {
                SweepSystem::PassDiscrete => {
                    match discrete_outcome.as_ref().expect("computed above") {
                        JointOutcome::Feasible(sol) => SweepRow {
                            sinr_db,
                            system,
                            total_power: sol.total_power,
                            feasible: true,
                            iterations: sol.iterations,
                        },
                        JointOutcome::Infeasible { .. } => SweepRow {
                            sinr_db,
                            system,
                            total_power: f64::NAN,
                            feasible: false,
                            iterations: 0,
                        },
                    }
                }
                SweepSystem::PassContinuous => {
                    let mut continuous_problem = setup.problem.clone();
                    continuous_problem.sinr_targets = targets.clone();
                    continuous_problem.activation = Activation::Continuous;
                    let extra: Vec<Vec<Vec<f64>>> = match discrete_outcome.as_ref() {
                        Some(JointOutcome::Feasible(sol)) => vec![sol
                            .placements
                            .iter()
                            .map(|c| c.offsets().to_vec())
                            .collect()],
                        _ => Vec::new(),
                    };
                    match joint_min_power_impl(&continuous_problem, setup.seed, &extra)? {
                        JointOutcome::Feasible(sol) => SweepRow {
                            sinr_db,
                            system,
                            total_power: sol.total_power,
                            feasible: true,
                            iterations: sol.iterations,
                        },
                        JointOutcome::Infeasible { .. } => SweepRow {
                            sinr_db,
                            system,
                            total_power: f64::NAN,
                            feasible: false,
                            iterations: 0,
                        },
                    }
                }
                SweepSystem::ConventionalMimo => {
                    let outcome = baseline_conventional_mimo(
                        &setup.problem.users,
                        &setup.bs_position,
                        n_rf,
                        &targets,
                        &setup.problem.radio,
                    )?;
                    sweep_row_from_precoder(sinr_db, system, outcome)
                }
                SweepSystem::MassiveMimoHybrid => {
                    let outcome = baseline_massive_mimo_hybrid(
                        &setup.problem.users,
                        &setup.bs_position,
                        n_rf,
                        setup.antennas_per_rf,
                        &targets,
                        &setup.problem.radio,
                    )?;
                    sweep_row_from_precoder(sinr_db, system, outcome)
                }
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

fn sweep_row_from_precoder(
    sinr_db: f64,
    system: SweepSystem,
    outcome: PrecoderOutcome,
) -> SweepRow {
    match outcome {
        PrecoderOutcome::Feasible(sol) => SweepRow {
            sinr_db,
            system,
            total_power: sol.total_power,
            feasible: true,
            iterations: sol.iterations,
        },
        PrecoderOutcome::Infeasible => SweepRow {
            sinr_db,
            system,
            total_power: f64::NAN,
            feasible: false,
            iterations: 0,
        },
    }
}
