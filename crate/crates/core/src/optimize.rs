//! Minimal-time pulse amplitude.
//!
//! For a fixed amplitude every coupling is `g_j(t) = ghat_j(t/T) / T`, so the
//! shortest duration that respects `max |g_j| <= g_max` is `C(A) / g_max`
//! with `C(A) = max_{s, j} |ghat_j(s)|`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pulse_design::{unit_branches, ProtocolSpec};

pub const PEAK_GRID: usize = 100_000;
pub const COARSE_STEP: f64 = 1e-2;
pub const AMPLITUDE_TOL: f64 = 1e-6;
pub const DEFAULT_BRACKET: (f64, f64) = (0.05, 2.0);

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of a unimodal `f` on `[a, b]`.
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // the midpoint can lose to an interior probe on kinked objectives
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |best, cand| if cand.1 < best.1 { cand } else { best })
}

/// `C(A)`: peak coupling magnitude of the unit-duration pulse.
pub fn dimensionless_peak(template: &ProtocolSpec, amplitude: f64) -> Result<f64> {
    peak_with_grid(template, amplitude, PEAK_GRID)
}

pub fn peak_with_grid(template: &ProtocolSpec, amplitude: f64, grid: usize) -> Result<f64> {
    if !(amplitude > 0.0) {
        return Err(Error::InvalidSpec(format!("amplitude must be positive, got {amplitude}")));
    }
    let spec = template.with_amplitude(amplitude);
    spec.validate()?;
    let theta = spec.theta();
    let eval = |s: f64| unit_branches(spec.kind, amplitude, theta, spec.n_qubits, s);
    let (_, used) = eval(0.5);

    let mut best = [(0.0f64, 0usize); 3];
    for i in 0..=grid {
        let s = i as f64 / grid as f64;
        let (vals, _) = eval(s);
        for b in 0..used {
            let v = vals[b].abs();
            if !v.is_finite() {
                return Err(Error::NonFinite("coupling peak"));
            }
            if v > best[b].0 {
                best[b] = (v, i);
            }
        }
    }

    let h = 1.0 / grid as f64;
    let mut peak = 0.0f64;
    for (b, &(v, i)) in best.iter().enumerate().take(used) {
        let lo = (i as f64 - 1.0).max(0.0) * h;
        let hi = ((i + 1) as f64 * h).min(1.0);
        let (_, neg) = golden_section_min(|s| -eval(s).0[b].abs(), lo, hi, 1e-12);
        peak = peak.max(v).max(-neg);
    }
    Ok(peak)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeCurve {
    pub amplitudes: Vec<f64>,
    pub durations: Vec<f64>,
    pub best_amplitude: f64,
    pub best_duration: f64,
}

/// `T(A) = C(A) / g_max` on a grid of amplitudes.
pub fn time_curve(template: &ProtocolSpec, amplitudes: &[f64]) -> Result<TimeCurve> {
    if amplitudes.is_empty() {
        return Err(Error::InvalidGrid("empty amplitude grid".into()));
    }
    let durations = amplitudes
        .par_iter()
        .map(|&a| dimensionless_peak(template, a).map(|c| c / template.g_max))
        .collect::<Result<Vec<f64>>>()?;
    let (k, &best) = durations
        .iter()
        .enumerate()
        .fold((0, &durations[0]), |acc, (k, d)| if *d < *acc.1 { (k, d) } else { acc });
    Ok(TimeCurve {
        amplitudes: amplitudes.to_vec(),
        durations,
        best_amplitude: amplitudes[k],
        best_duration: best,
    })
}

pub fn amplitude_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Optimum {
    pub amplitude: f64,
    pub duration: f64,
    /// `C(A*)`, the duration in units of `1/g_max`.
    pub peak: f64,
}

/// Coarse scan at `COARSE_STEP`, then golden-section refinement.
pub fn optimal_amplitude(template: &ProtocolSpec, bracket: (f64, f64)) -> Result<Optimum> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidGrid(format!("bad bracket [{lo}, {hi}]")));
    }
    let grid = amplitude_grid(lo, hi, COARSE_STEP);
    if grid.len() < 3 {
        return Err(Error::InvalidGrid(format!("bracket [{lo}, {hi}] narrower than the coarse step")));
    }
    let curve = time_curve(template, &grid)?;
    let k = grid
        .iter()
        .position(|&a| a == curve.best_amplitude)
        .expect("argmin comes from the grid");
    if k == 0 || k == grid.len() - 1 {
        return Err(Error::NoInteriorMinimum {
            lo,
            hi,
            edge: if k == 0 { "lower" } else { "upper" },
        });
    }
    let (a, c) = golden_section_min(
        |a| dimensionless_peak(template, a).unwrap_or(f64::INFINITY),
        grid[k - 1],
        grid[k + 1],
        AMPLITUDE_TOL,
    );
    if !c.is_finite() {
        return Err(Error::NonFinite("coupling peak"));
    }
    Ok(Optimum {
        amplitude: a,
        duration: c / template.g_max,
        peak: c,
    })
}

/// The template with the given amplitude and its minimal duration.
pub fn minimal_time_spec(template: &ProtocolSpec, amplitude: f64) -> Result<ProtocolSpec> {
    let c = dimensionless_peak(template, amplitude)?;
    Ok(template.with_amplitude(amplitude).with_duration(c / template.g_max))
}
