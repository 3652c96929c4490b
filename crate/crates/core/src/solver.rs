//! Normalised gradient ascent on the combined objective, plus the robust
//! reweighted re-optimisation used after implausible velocity jumps.

use crate::doppler::{doppler_objective, down_values, sample_up_at_bins, DopplerImages};
use crate::motion::MotionModel;
use crate::registration::{
    intensity_objective, sample_map_at_bins, DopplerParams, Evaluation, SparseScan,
};
use crate::types::{LocalMap, RadarScan, ScanState};

/// Intensity-registration term: filtered scan values and the map at `τ₁`.
#[derive(Debug, Clone)]
pub struct IntensityTerm<'a> {
    pub scan: &'a RadarScan,
    pub values: SparseScan,
    pub map: &'a LocalMap,
}

/// The active objectives for one scan.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub intensity: Option<IntensityTerm<'a>>,
    pub doppler_images: Option<DopplerImages>,
    pub model: &'a MotionModel,
    pub doppler: DopplerParams,
}

impl Problem<'_> {
    pub fn evaluate(&self, state: &ScanState) -> Evaluation {
        let mut e = Evaluation::zero(state.n_params());
        if let Some(t) = &self.intensity {
            e.add(&intensity_objective(t.scan, &t.values, t.map, state, self.model, &self.doppler));
        }
        if let Some(im) = &self.doppler_images {
            e.add(&doppler_objective(im, state, &self.doppler));
        }
        e
    }

    /// Copy of the problem with the robust weights of `state` folded into
    /// every stored intensity.
    pub fn reweighted_at(&self, state: &ScanState) -> Self {
        let intensity = self.intensity.as_ref().map(|t| {
            let predicted = sample_map_at_bins(t.scan, &t.values, t.map, state, self.model, &self.doppler);
            let weights: Vec<f64> = (0..t.values.n_rows())
                .flat_map(|n| t.values.row(n).map(|(_, v)| v))
                .zip(&predicted)
                .map(|(v, p)| robust_weight(v - p))
                .collect();
            IntensityTerm {
                values: t.values.reweighted(&weights),
                ..t.clone()
            }
        });
        let doppler_images = self.doppler_images.as_ref().map(|im| {
            let predicted = sample_up_at_bins(im, state, &self.doppler);
            let weights: Vec<f64> = down_values(im)
                .iter()
                .zip(&predicted)
                .map(|(v, p)| robust_weight(v - p))
                .collect();
            im.reweighted(&weights)
        });
        Self {
            intensity,
            doppler_images,
            model: self.model,
            doppler: self.doppler,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub step_init: f64,
    pub step_min: f64,
    pub max_iters: usize,
    pub speed_cap: f64,
}

impl SolverSettings {
    pub fn from_config(c: &crate::Config) -> Self {
        Self {
            step_init: c.step_init,
            step_min: c.step_min,
            max_iters: c.max_iters,
            speed_cap: c.speed_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub state: ScanState,
    pub iterations: usize,
    pub score: f64,
    /// The gradient vanished at the start; the initial state was returned.
    pub degenerate: bool,
    pub robust: bool,
}

/// Maximises the problem's objective from `init` by steps of length `c`
/// along the normalised gradient, halving `c` after every non-ascending
/// step. Stops when `c` drops below `step_min` or after `max_iters` steps.
pub fn optimize(problem: &Problem<'_>, init: &ScanState, settings: &SolverSettings) -> SolveResult {
    let mut state = *init;
    let mut current = problem.evaluate(&state);
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm(&current.gradient) == 0.0 || !norm(&current.gradient).is_finite() {
        return SolveResult {
            state,
            iterations: 0,
            score: current.score,
            degenerate: true,
            robust: false,
        };
    }
    let mut c = settings.step_init;
    let mut iterations = 0;
    while iterations < settings.max_iters && c >= settings.step_min {
        iterations += 1;
        let gn = norm(&current.gradient);
        if gn == 0.0 {
            break;
        }
        let params: Vec<f64> = state
            .params()
            .iter()
            .zip(&current.gradient)
            .map(|(p, g)| p + c * g / gn)
            .collect();
        let candidate = state.with_params(&params);
        if candidate.is_valid(settings.speed_cap) {
            let e = problem.evaluate(&candidate);
            if e.score > current.score {
                state = candidate;
                current = e;
                continue;
            }
        }
        c *= 0.5;
    }
    SolveResult {
        state,
        iterations,
        score: current.score,
        degenerate: false,
        robust: false,
    }
}

/// `ρ = (|Δ| − 1)⁶`, with `|Δ|` clamped to 1 so the weight stays in `[0, 1]`.
pub fn robust_weight(delta: f64) -> f64 {
    (delta.abs().min(1.0) - 1.0).powi(6)
}

/// Robust re-optimisation: each pass freezes the robust weights at the
/// current estimate and runs a fresh ascent on the reweighted objective. The
/// first pass starts from `prev_state` (the constant-velocity prediction).
pub fn robust_reoptimize(
    problem: &Problem<'_>,
    prev_state: &ScanState,
    settings: &SolverSettings,
    passes: usize,
) -> SolveResult {
    let mut state = *prev_state;
    let mut result = None;
    for _ in 0..passes.max(1) {
        let weighted = problem.reweighted_at(&state);
        let r = optimize(&weighted, &state, settings);
        state = r.state;
        result = Some(r);
    }
    let mut r = result.expect("at least one pass");
    r.robust = true;
    r
}
