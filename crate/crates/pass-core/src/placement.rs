//! Single-user antenna placement along one waveguide.
//!
//! The objective throughout is the received power `|h|^2` of the composite
//! channel for a unit-power feed. Two activation styles are covered:
//! continuous repositioning anywhere on the guide (projected gradient
//! ascent from several seeded starts) and discrete activation over a grid
//! of pre-installed candidate positions (greedy selection plus swap local
//! search, restarted from many forced first picks). `array_gain_sweep`
//! reproduces the gain-versus-antenna-count study: equally spaced antennas
//! centered on the user's perpendicular foot point, optionally with each
//! offset nudged so all antennas combine in phase.

use nalgebra::Point3;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::channel::{composite_channel, pa_coefficient};
use crate::coupling::{power_profile, PowerModel};
use crate::error::{Error, Result};
use crate::geometry::{PinchConfig, RadioParams, WaveguideLayout};

/// Pre-installed candidate offsets, uniformly spaced from the feed.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    spacing: f64,
    offsets: Vec<f64>,
}

impl CandidateGrid {
    /// Candidate pitch used when a scenario does not specify one, metres.
    pub const DEFAULT_SPACING: f64 = 0.5;

    /// Grid `0, spacing, 2 spacing, ...` covering `[0, length]`.
    pub fn uniform(length: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::invalid(
                "spacing",
                format!("must be finite and > 0, got {spacing}"),
            ));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::invalid(
                "length",
                format!("must be finite and > 0, got {length}"),
            ));
        }
        let mut offsets = Vec::new();
        let mut i = 0u64;
        loop {
            let d = i as f64 * spacing;
            if d > length * (1.0 + 1e-12) {
                break;
            }
            offsets.push(d.min(length));
            i += 1;
        }
        Ok(CandidateGrid { spacing, offsets })
    }

    pub fn with_default_spacing(length: f64) -> Result<Self> {
        CandidateGrid::uniform(length, Self::DEFAULT_SPACING)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Which activation style produced a placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementMode {
    Continuous,
    Discrete,
}

/// Outcome of a placement optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementResult {
    /// Chosen offsets, strictly increasing.
    pub offsets: Vec<f64>,
    /// `|h|^2` of the composite channel at the chosen offsets.
    pub received_power: f64,
    /// Ascent steps or greedy-plus-swap moves of the winning run.
    pub iterations: usize,
    pub mode: PlacementMode,
}

/// Received power `|h|^2` for a unit-power feed.
pub fn received_power(
    offsets: &[f64],
    model: PowerModel,
    layout: &WaveguideLayout,
    user: &Point3<f64>,
    params: &RadioParams,
) -> Result<f64> {
    let config = PinchConfig::new(offsets.to_vec(), model, layout.length)?;
    Ok(composite_channel(&config, layout, user, params)?.norm_sqr())
}

/// Analytic gradient of [`received_power`] with respect to each offset.
///
/// Each antenna contributes through three slopes: guide attenuation, the
/// `1/r` amplitude falloff and the combined free-space plus in-guide phase
/// advance. Boundary offsets get the same one-sided formula; projection is
/// the caller's job.
pub fn power_gradient(
    offsets: &[f64],
    model: PowerModel,
    layout: &WaveguideLayout,
    user: &Point3<f64>,
    params: &RadioParams,
) -> Result<Vec<f64>> {
    let config = PinchConfig::new(offsets.to_vec(), model, layout.length)?;
    layout.validate()?;
    params.validate()?;
    if config.n_antennas() == 0 {
        return Ok(Vec::new());
    }
    let profile = power_profile(model, offsets.len())?;
    let user_offset = layout.axis_projection(user);
    let wavenumber = 2.0 * PI / params.wavelength;
    let attenuation_rate = std::f64::consts::LN_10 * layout.attenuation_db_per_m / 20.0;

    let mut h = Complex64::ZERO;
    let mut per_antenna = Vec::with_capacity(offsets.len());
    for (&d, &fraction) in offsets.iter().zip(&profile.fractions) {
        let g = pa_coefficient(d, layout, user, params)?;
        let weight = fraction.sqrt();
        h += weight * g;
        per_antenna.push((d, weight, g));
    }

    let mut gradient = Vec::with_capacity(per_antenna.len());
    for &(d, weight, g) in &per_antenna {
        let range = (user - layout.position_at(d)).norm();
        let range_slope = (d - user_offset) / range;
        let phase_slope = -wavenumber * (range_slope + layout.refractive_index);
        let log_derivative = Complex64::new(-attenuation_rate - range_slope / range, phase_slope);
        gradient.push(2.0 * weight * (h.conj() * g * log_derivative).re);
    }
    Ok(gradient)
}

/// Sorts offsets and pushes them inside `[0, length]` with at least
/// `separation` between neighbours. Requires `(n-1) * separation <= length`.
fn project_offsets(raw: &[f64], length: f64, separation: f64) -> Vec<f64> {
    let mut v: Vec<f64> = raw.to_vec();
    v.sort_by(f64::total_cmp);
    let mut lower = 0.0;
    for (i, x) in v.iter_mut().enumerate() {
        let bound = if i == 0 { 0.0 } else { lower + separation };
        if *x < bound {
            *x = bound;
        }
        lower = *x;
    }
    let mut upper = length;
    let n = v.len();
    for (i, x) in v.iter_mut().enumerate().rev() {
        let bound = if i + 1 == n { length } else { upper - separation };
        if *x > bound {
            *x = bound;
        }
        upper = *x;
    }
    v
}

struct Ascent {
    offsets: Vec<f64>,
    power: f64,
    iterations: usize,
}

/// Projected gradient ascent with halving line search from one start.
fn ascend(
    start: &[f64],
    model: PowerModel,
    layout: &WaveguideLayout,
    user: &Point3<f64>,
    params: &RadioParams,
    separation: f64,
) -> Result<Ascent> {
    let mut x = project_offsets(start, layout.length, separation);
    let mut power = received_power(&x, model, layout, user, params)?;
    let mut iterations = 0;
    let mut stale = 0;
    for _ in 0..600 {
        let gradient = power_gradient(&x, model, layout, user, params)?;
        let max_component = gradient.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if max_component <= 1e-300 {
            break;
        }
        // Cap the first trial so no offset moves more than an eighth
        // wavelength; phase structure is lost beyond that scale.
        let mut step = params.wavelength / 8.0 / max_component;
        let mut accepted = None;
        for _ in 0..45 {
            let trial: Vec<f64> = x.iter().zip(&gradient).map(|(xi, gi)| xi + step * gi).collect();
            let trial = project_offsets(&trial, layout.length, separation);
            let trial_power = received_power(&trial, model, layout, user, params)?;
            if trial_power > power {
                accepted = Some((trial, trial_power));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((trial, trial_power)) => {
                stale = if trial_power - power <= 1e-13 * power { stale + 1 } else { 0 };
                x = trial;
                power = trial_power;
                if stale >= 3 {
                    break;
                }
            }
            None => break,
        }
    }

    // Gradient ascent zigzags once it reaches the valley whose soft
    // direction shifts all antennas together while keeping their relative
    // phases; finish the walk with a pattern search whose move set
    // includes exactly that common-mode direction.
    let polished = pattern_polish(&x, power, model, layout, user, params, separation)?;
    iterations += polished.2;
    Ok(Ascent {
        offsets: polished.0,
        power: polished.1,
        iterations,
    })
}

/// Deterministic compass search over per-antenna and common-mode moves
/// with a halving step, from a sixteenth wavelength down to a nanometre.
/// Infeasible moves (outside the guide or closer than `separation`) are
/// rejected rather than projected.
fn pattern_polish(
    start: &[f64],
    start_power: f64,
    model: PowerModel,
    layout: &WaveguideLayout,
    user: &Point3<f64>,
    params: &RadioParams,
    separation: f64,
) -> Result<(Vec<f64>, f64, usize)> {
    let feasible_power = |offsets: &mut Vec<f64>| -> Result<Option<f64>> {
        offsets.sort_by(f64::total_cmp);
        let inside = offsets.first().is_some_and(|&d| d >= 0.0)
            && offsets.last().is_some_and(|&d| d <= layout.length)
            && offsets.windows(2).all(|w| w[1] - w[0] >= separation);
        if !inside {
            return Ok(None);
        }
        Ok(Some(received_power(offsets, model, layout, user, params)?))
    };

    let mut x = start.to_vec();
    let mut power = start_power;
    let mut probes = 0;
    let mut step = params.wavelength / 16.0;
    while step > 1e-9 {
        let mut moved = false;
        for axis in 0..=x.len() {
            for sign in [1.0, -1.0] {
                let mut trial = x.clone();
                if axis == x.len() {
                    for t in &mut trial {
                        *t += sign * step;
                    }
                } else {
                    trial[axis] += sign * step;
                }
                probes += 1;
                if let Some(p) = feasible_power(&mut trial)? {
                    if p > power {
                        x = trial;
                        power = p;
                        moved = true;
                    }
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok((x, power, probes))
}

fn better(candidate: (&[f64], f64), incumbent: (&[f64], f64)) -> bool {
    if candidate.1 != incumbent.1 {
        return candidate.1 > incumbent.1;
    }
    // Exact power tie: prefer lexicographically smallest offsets.
    candidate.0 < incumbent.0
}

/// Places `n_antennas` anywhere on the guide to maximize received power.
///
/// Runs projected gradient ascent from deterministic seeds (the discrete
/// optimum on a quarter-wavelength grid and on the default candidate grid)
/// plus `restarts` jittered and random starts, and returns the best run.
/// Because the default-grid optimum is one of the starts and ascent never
/// degrades it, the result is at least as good as discrete activation on
/// that grid.
pub fn optimize_continuous(
    user: &Point3<f64>,
    layout: &WaveguideLayout,
    n_antennas: usize,
    model: PowerModel,
    params: &RadioParams,
    restarts: usize,
    seed: u64,
) -> Result<PlacementResult> {
    layout.validate()?;
    params.validate()?;
    model.validate()?;
    if n_antennas == 0 {
        return Err(Error::invalid("n_antennas", "must be at least 1"));
    }
    let separation = params.wavelength / 2.0;
    let span = (n_antennas - 1) as f64 * separation;
    if span > layout.length {
        return Err(Error::ApertureTooLong {
            n_antennas,
            spacing: separation,
            required: span,
            available: layout.length,
        });
    }

    let mut starts: Vec<Vec<f64>> = Vec::new();
    // The objective oscillates with period lambda / (n_eff + |dr/dd|)
    // along the guide; an eighth-wavelength grid keeps at least two
    // samples per period for realistic indices. Neighbouring phase basins
    // can differ by well under the grid's own sampling error, so the top
    // handful of distinct grid optima all become ascent starts rather
    // than the winner alone. The coarse default grid seeds the
    // amplitude-optimal region.
    let fine = CandidateGrid::uniform(layout.length, params.wavelength / 8.0)?;
    if fine.len() >= n_antennas {
        let mut runs = discrete_multistart(&fine, n_antennas, model, layout, user, params)?;
        runs.sort_by(|a, b| {
            b.power.total_cmp(&a.power).then_with(|| {
                selection_offsets(&fine, &a.selected)
                    .partial_cmp(&selection_offsets(&fine, &b.selected))
                    .expect("offsets are finite")
            })
        });
        let mut seen: Vec<Vec<f64>> = Vec::new();
        for run in &runs {
            let offsets = selection_offsets(&fine, &run.selected);
            if !seen.contains(&offsets) {
                seen.push(offsets.clone());
                starts.push(offsets);
                if starts.len() == 6 {
                    break;
                }
            }
        }
    }
    if let Ok(coarse) = CandidateGrid::with_default_spacing(layout.length) {
        if coarse.len() >= n_antennas {
            starts
                .push(optimize_discrete(user, layout, &coarse, n_antennas, model, params)?.offsets);
        }
    }
    if starts.is_empty() {
        // Degenerate short guide: spread evenly.
        starts.push(
            (0..n_antennas)
                .map(|i| layout.length * (i as f64 + 0.5) / n_antennas as f64)
                .collect(),
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = starts[0].clone();
    for r in 0..restarts {
        if r % 2 == 0 {
            let jittered: Vec<f64> = base
                .iter()
                .map(|d| d + rng.random_range(-params.wavelength..params.wavelength) / 2.0)
                .collect();
            starts.push(jittered);
        } else {
            starts.push((0..n_antennas).map(|_| rng.random_range(0.0..layout.length)).collect());
        }
    }

    let mut best: Option<Ascent> = None;
    for start in &starts {
        let run = ascend(start, model, layout, user, params, separation)?;
        best = match best {
            None => Some(run),
            Some(cur) => {
                if better((&run.offsets, run.power), (&cur.offsets, cur.power)) {
                    Some(run)
                } else {
                    Some(cur)
                }
            }
        };
    }
    let best = best.expect("at least one start");
    Ok(PlacementResult {
        offsets: best.offsets,
        received_power: best.power,
        iterations: best.iterations,
        mode: PlacementMode::Continuous,
    })
}

struct DiscreteRun {
    selected: Vec<usize>,
    power: f64,
    moves: usize,
}

fn selection_offsets(grid: &CandidateGrid, selected: &[usize]) -> Vec<f64> {
    let mut offsets: Vec<f64> = selected.iter().map(|&i| grid.offsets()[i]).collect();
    offsets.sort_by(f64::total_cmp);
    offsets
}

fn selection_power(
    grid: &CandidateGrid,
    selected: &[usize],
    model: PowerModel,
    layout: &WaveguideLayout,
    user: &Point3<f64>,
    params: &RadioParams,
) -> Result<f64> {
    received_power(&selection_offsets(grid, selected), model, layout, user, params)
}

/// Greedy completion from a (possibly empty) forced prefix, then steepest
/// single-candidate swaps until no swap improves the power.
fn greedy_and_swap(
    grid: &CandidateGrid,
    forced_first: Option<usize>,
    n_antennas: usize,
    model: PowerModel,
    layout: &WaveguideLayout,
    user: &Point3<f64>,
    params: &RadioParams,
) -> Result<DiscreteRun> {
    let n_candidates = grid.len();
    let mut in_use = vec![false; n_candidates];
    let mut selected: Vec<usize> = Vec::with_capacity(n_antennas);
    let mut moves = 0;
    if let Some(first) = forced_first {
        selected.push(first);
        in_use[first] = true;
        moves += 1;
    }
    while selected.len() < n_antennas {
        let mut best: Option<(f64, usize)> = None;
        for (c, used) in in_use.iter().enumerate() {
            if *used {
                continue;
            }
            selected.push(c);
            let power = selection_power(grid, &selected, model, layout, user, params)?;
            selected.pop();
            // Candidates scan in ascending offset order, so a strict
            // comparison keeps the lowest offset on ties.
            if best.is_none_or(|(bp, _)| power > bp) {
                best = Some((power, c));
            }
        }
        let (_, chosen) = best.expect("n_antennas <= candidates");
        selected.push(chosen);
        in_use[chosen] = true;
        moves += 1;
    }

    let mut power = selection_power(grid, &selected, model, layout, user, params)?;
    loop {
        let mut best_swap: Option<(f64, Vec<f64>, usize, usize)> = None;
        for slot in 0..selected.len() {
            let original = selected[slot];
            for (c, used) in in_use.iter().enumerate() {
                if *used {
                    continue;
                }
                selected[slot] = c;
                let trial_power = selection_power(grid, &selected, model, layout, user, params)?;
                if trial_power > power {
                    let trial_offsets = selection_offsets(grid, &selected);
                    let take = match &best_swap {
                        None => true,
                        Some((bp, boffs, _, _)) => {
                            trial_power > *bp || (trial_power == *bp && trial_offsets < *boffs)
                        }
                    };
                    if take {
                        best_swap = Some((trial_power, trial_offsets, slot, c));
                    }
                }
                selected[slot] = original;
            }
        }
        match best_swap {
            Some((new_power, _, slot, c)) => {
                in_use[selected[slot]] = false;
                selected[slot] = c;
                in_use[c] = true;
                power = new_power;
                moves += 1;
            }
            None => break,
        }
    }
    Ok(DiscreteRun {
        selected,
        power,
        moves,
    })
}

/// Greedy-plus-swap runs restarted from every candidate as the forced
/// first pick (the strongest 32 single positions when the grid is large),
/// preceded by one unforced run.
fn discrete_multistart(
    grid: &CandidateGrid,
    n_antennas: usize,
    model: PowerModel,
    layout: &WaveguideLayout,
    user: &Point3<f64>,
    params: &RadioParams,
) -> Result<Vec<DiscreteRun>> {
    let mut first_picks: Vec<Option<usize>> = vec![None];
    if grid.len() <= 64 {
        first_picks.extend((0..grid.len()).map(Some));
    } else {
        let mut singles: Vec<(f64, usize)> = (0..grid.len())
            .map(|c| {
                let power = selection_power(grid, &[c], model, layout, user, params)?;
                Ok((power, c))
            })
            .collect::<Result<_>>()?;
        singles.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        first_picks.extend(singles.iter().take(32).map(|&(_, c)| Some(c)));
    }
    first_picks
        .into_iter()
        .map(|first| greedy_and_swap(grid, first, n_antennas, model, layout, user, params))
        .collect()
}

/// Picks `n_antennas` of the grid's candidate positions to maximize
/// received power: greedy selection plus swap local search, restarted from
/// every candidate as the forced first pick (the strongest 32 single
/// positions when the grid is large).
pub fn optimize_discrete(
    user: &Point3<f64>,
    layout: &WaveguideLayout,
    grid: &CandidateGrid,
    n_antennas: usize,
    model: PowerModel,
    params: &RadioParams,
) -> Result<PlacementResult> {
    layout.validate()?;
    params.validate()?;
    model.validate()?;
    if n_antennas == 0 {
        return Err(Error::invalid("n_antennas", "must be at least 1"));
    }
    if n_antennas > grid.len() {
        return Err(Error::NotEnoughCandidates {
            requested: n_antennas,
            available: grid.len(),
        });
    }
    if grid.offsets().last().copied().unwrap_or(0.0) > layout.length {
        return Err(Error::invalid(
            "grid",
            "candidate offsets extend beyond the waveguide",
        ));
    }

    let runs = discrete_multistart(grid, n_antennas, model, layout, user, params)?;
    let mut best: Option<DiscreteRun> = None;
    for run in runs {
        best = match best {
            None => Some(run),
            Some(cur) => {
                let run_offsets = selection_offsets(grid, &run.selected);
                let cur_offsets = selection_offsets(grid, &cur.selected);
                if better((&run_offsets, run.power), (&cur_offsets, cur.power)) {
                    Some(run)
                } else {
                    Some(cur)
                }
            }
        };
    }
    let best = best.expect("at least the unforced run");
    Ok(PlacementResult {
        offsets: selection_offsets(grid, &best.selected),
        received_power: best.power,
        iterations: best.moves,
        mode: PlacementMode::Discrete,
    })
}

/// Whether [`array_gain_sweep`] keeps the raw equally spaced offsets or
/// nudges each one into phase agreement with the foot point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignmentMode {
    Centered,
    PhaseAligned,
}

/// One point of an array-gain sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGainRow {
    pub n_antennas: usize,
    /// Received power relative to a single antenna at the foot point.
    pub gain: f64,
}

/// Total phase (free space plus in-guide) at offset `d`, unwrapped.
fn total_phase(
    d: f64,
    layout: &WaveguideLayout,
    user: &Point3<f64>,
    params: &RadioParams,
) -> f64 {
    let range = (user - layout.position_at(d)).norm();
    -(2.0 * PI / params.wavelength) * (range + layout.refractive_index * d)
}

/// Moves `d0` to the nearest offset whose total phase matches `target`
/// modulo 2 pi, never further than `max_shift`. The total phase is strictly
/// decreasing in the offset (`n_eff >= 1` dominates the range slope), so
/// the nearest match is unique and bisection is safe.
fn align_offset(
    d0: f64,
    target: f64,
    max_shift: f64,
    layout: &WaveguideLayout,
    user: &Point3<f64>,
    params: &RadioParams,
) -> f64 {
    let phi0 = total_phase(d0, layout, user, params);
    let mut delta = (phi0 - target).rem_euclid(2.0 * PI);
    if delta > PI {
        delta -= 2.0 * PI;
    }
    if delta == 0.0 {
        return d0;
    }
    let goal = phi0 - delta;
    // Positive delta means the phase must decrease, i.e. move right.
    let direction = if delta > 0.0 { 1.0 } else { -1.0 };
    let mut step = params.wavelength / (4.0 * layout.refractive_index);
    let mut near = d0;
    let mut far = d0;
    loop {
        far = (far + direction * step).clamp(d0 - max_shift, d0 + max_shift);
        let phi_far = total_phase(far, layout, user, params);
        if (phi_far - goal) * (phi0 - goal) <= 0.0 {
            break;
        }
        if (far - d0).abs() >= max_shift {
            return d0; // no in-range alignment; keep the raw offset
        }
        near = far;
        step *= 2.0;
    }
    let (mut lo, mut hi) = if near <= far { (near, far) } else { (far, near) };
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let phi_mid = total_phase(mid, layout, user, params);
        // Phase decreases with offset: left of the root it is above goal.
        if phi_mid > goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    mid.clamp(0.0, layout.length)
}

/// Gain of `n` equally spaced antennas centered on the user's foot point,
/// relative to a single antenna at the foot point, for each `n` in
/// `n_list` (row order follows `n_list`).
pub fn array_gain_sweep(
    user: &Point3<f64>,
    layout: &WaveguideLayout,
    n_list: &[usize],
    spacing: f64,
    model: PowerModel,
    params: &RadioParams,
    mode: AlignmentMode,
) -> Result<Vec<ArrayGainRow>> {
    layout.validate()?;
    params.validate()?;
    model.validate()?;
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::invalid(
            "spacing",
            format!("must be finite and > 0, got {spacing}"),
        ));
    }
    let foot = layout.foot_offset(user);
    let reference = received_power(&[foot], model, layout, user, params)?;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n == 0 {
            return Err(Error::invalid("n_list", "antenna counts must be >= 1"));
        }
        let span = (n - 1) as f64 * spacing;
        let available = 2.0 * foot.min(layout.length - foot);
        if span > available {
            return Err(Error::ApertureTooLong {
                n_antennas: n,
                spacing,
                required: span,
                available,
            });
        }
        let mut offsets: Vec<f64> = (0..n)
            .map(|i| foot + (i as f64 - (n - 1) as f64 / 2.0) * spacing)
            .collect();
        if mode == AlignmentMode::PhaseAligned && n > 1 {
            let target = total_phase(foot, layout, user, params);
            let max_shift = 0.45 * spacing;
            for d in offsets.iter_mut() {
                *d = align_offset(*d, target, max_shift, layout, user, params);
            }
        }
        let power = received_power(&offsets, model, layout, user, params)?;
        rows.push(ArrayGainRow {
            n_antennas: n,
            gain: power / reference,
        });
    }
    Ok(rows)
}
