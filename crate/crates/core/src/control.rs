//! Lyapunov function, feedback law with drift cancellation, the closed-loop
//! design run that produces an open-loop [`ControlSchedule`], and the
//! invariant-set residual used to diagnose where the closed loop stalls.
//!
//! With `V = Tr(ρ_D²) − Tr(ρ ρ_D)` and `ρ_D` evolving freely under `H₀`,
//!
//! ```text
//! V̇ = −Σₙ fₙ Tr{ρ_D[−iHₙ, ρ]} − Tr[ρ_D 𝓛(ρ)]
//! ```
//!
//! so choosing `fₙ = Tr{[−iHₙ, ρ]ρ_D}` for every control except the
//! drift-cancelling one, and `f_{n₀} = −Tr[ρ_D 𝓛(ρ)] / Tr{ρ_D[−iH_{n₀}, ρ]}`,
//! leaves `V̇ = −Σ_{n≠n₀} fₙ² ≤ 0`.

use crate::dynamics::{
    checked_state, free_rhs, is_stationary, rk4, ControlSystemModel, IntegratorConfig,
    LindbladChannel, Stage, TargetTrajectory,
};
use crate::error::{Error, Result};
use crate::matrix::{trace_product_unchecked, ComplexMatrix};
use crate::schedule::ControlSchedule;
use crate::state::{fidelity, DensityMatrix, Physicality};

/// Default singularity guard on the drift-cancellation denominator.
pub const DEFAULT_GUARD_EPS: f64 = 1e-2;

/// Cap on the fixed-point passes of one design step.
const STEP_FIELD_ITERATIONS: usize = 12;

/// Targets must be pure to this tolerance on `Tr ρ_D²`.
const TARGET_PURITY_TOL: f64 = 1e-8;

/// `V(ρ_D, ρ) = Tr(ρ_D²) − Tr(ρ ρ_D)`; rounding residues above −1e-10 are
/// clamped to zero.
pub fn lyapunov_value(rho_d: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    rho_d.matrix().same_dim(rho.matrix())?;
    Ok(lyapunov_raw(rho_d.matrix(), rho.matrix()))
}

fn lyapunov_raw(rho_d: &ComplexMatrix, rho: &ComplexMatrix) -> f64 {
    let v = trace_product_unchecked(rho_d, rho_d).re - trace_product_unchecked(rho, rho_d).re;
    if v < 0.0 && v > -1e-10 {
        0.0
    } else {
        v
    }
}

/// `Tr{[−iHₙ, ρ]ρ_D}`, evaluated as `Im Tr(Hₙ [ρ, ρ_D])`.
pub fn feedback_field(
    h_n: &ComplexMatrix,
    rho: &DensityMatrix,
    rho_d: &DensityMatrix,
) -> Result<f64> {
    h_n.same_dim(rho.matrix())?;
    h_n.same_dim(rho_d.matrix())?;
    let c = state_commutator(rho.matrix(), rho_d.matrix());
    let z = trace_product_unchecked(h_n, &c);
    debug_assert!(
        z.re.abs() < 1e-10 * (1.0 + h_n.max_abs()),
        "feedback field has imaginary residue {}",
        z.re
    );
    Ok(z.im)
}

fn state_commutator(rho: &ComplexMatrix, rho_d: &ComplexMatrix) -> ComplexMatrix {
    &(rho * rho_d) - &(rho_d * rho)
}

/// Drift-cancelling field value and whether the singularity guard fired.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftCancel {
    pub value: f64,
    pub clamped: bool,
}

/// `f_{n₀} = −Tr[ρ_D 𝓛(ρ)] / Tr{ρ_D[−iH_{n₀}, ρ]}`, or 0 (clamped) when the
/// denominator is below `guard_eps` in magnitude.
pub fn drift_cancel_field(
    h_n0: &ComplexMatrix,
    rho: &DensityMatrix,
    rho_d: &DensityMatrix,
    channel: &LindbladChannel,
    guard_eps: f64,
) -> Result<DriftCancel> {
    if channel.is_empty() {
        return Err(Error::InvalidParameter(
            "drift cancellation needs a nonempty Lindblad channel".into(),
        ));
    }
    h_n0.same_dim(rho.matrix())?;
    h_n0.same_dim(rho_d.matrix())?;
    channel.jumps()[0].same_dim(rho.matrix())?;
    let c = state_commutator(rho.matrix(), rho_d.matrix());
    let denominator = trace_product_unchecked(h_n0, &c).im;
    let drift = trace_product_unchecked(rho_d.matrix(), &channel.apply(rho.matrix())).re;
    Ok(cancel(drift, denominator, guard_eps))
}

fn cancel(drift: f64, denominator: f64, guard_eps: f64) -> DriftCancel {
    if denominator.abs() >= guard_eps {
        DriftCancel {
            value: -drift / denominator,
            clamped: false,
        }
    } else {
        DriftCancel {
            value: 0.0,
            clamped: true,
        }
    }
}

/// Knobs of the feedback law.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignOptions {
    pub guard_eps: f64,
    /// Per-control proportional gain on the feedback fields; empty means all
    /// ones. The drift-cancelling field is never scaled.
    pub gains: Vec<f64>,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            guard_eps: DEFAULT_GUARD_EPS,
            gains: Vec::new(),
        }
    }
}

impl DesignOptions {
    fn gain(&self, n: usize) -> f64 {
        self.gains.get(n).copied().unwrap_or(1.0)
    }

    fn validate(&self, controls: usize) -> Result<()> {
        if !(self.guard_eps >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "guard_eps must be >= 0, got {}",
                self.guard_eps
            )));
        }
        if !self.gains.is_empty() && self.gains.len() != controls {
            return Err(Error::InvalidParameter(format!(
                "{} gains given for {controls} controls",
                self.gains.len()
            )));
        }
        if self.gains.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidParameter("gains must be finite".into()));
        }
        Ok(())
    }
}

/// All feedback fields at one state; the flag reports a guard activation.
fn closed_loop_fields(
    model: &ControlSystemModel,
    rho: &ComplexMatrix,
    rho_d: &ComplexMatrix,
    options: &DesignOptions,
) -> (Vec<f64>, bool) {
    let c = state_commutator(rho, rho_d);
    let n0 = model.drift_cancel_index();
    let mut clamped = false;
    let fields = model
        .controls()
        .iter()
        .enumerate()
        .map(|(n, h)| {
            let projection = trace_product_unchecked(h, &c).im;
            if Some(n) == n0 {
                let drift = trace_product_unchecked(rho_d, &model.channel().apply(rho)).re;
                let dc = cancel(drift, projection, options.guard_eps);
                clamped |= dc.clamped;
                dc.value
            } else {
                options.gain(n) * projection
            }
        })
        .collect();
    (fields, clamped)
}

fn fields_agree(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= 1e-13 * (1.0 + x.abs()))
}

/// Feedback fields with the drift-cancel guard flag.
type Fields = (Vec<f64>, bool);

struct Step {
    next: (ComplexMatrix, ComplexMatrix),
    mid: Fields,
    end: Fields,
}

fn co_derivative(
    model: &ControlSystemModel,
    stationary: bool,
    s: &(ComplexMatrix, ComplexMatrix),
    fields: &[f64],
) -> (ComplexMatrix, ComplexMatrix) {
    let drho_d = if stationary {
        ComplexMatrix::zeros(s.1.dim())
    } else {
        free_rhs(model.h0(), &s.1)
    };
    (model.rhs(&s.0, fields), drho_d)
}

/// One closed-loop RK4 step whose stages apply the schedule samples
/// `(start, m, m, e)`, with `m` and `e` solved by fixed-point iteration:
///
/// - `m = ½(F(y₂) + F(y₃))`, the mean of the feedback at the two midpoint
///   stage states. The deviations of the two midpoint stages from per-stage
///   feedback then cancel to leading order, keeping fourth-order accuracy.
/// - `e = F(ρₖ₊₁)`, the feedback at the accepted state, which also opens the
///   next step.
///
/// Iteration stops once both are reproduced to 1e-13 or after
/// [`STEP_FIELD_ITERATIONS`] passes; either way the applied fields are the
/// stored samples, so a replay at the design `dt` repeats the step exactly.
fn design_step(
    model: &ControlSystemModel,
    options: &DesignOptions,
    stationary: bool,
    y: &(ComplexMatrix, ComplexMatrix),
    t: f64,
    dt: f64,
    start: &Fields,
) -> Result<Step> {
    let mut mid: Option<Fields> = None;
    let mut end: Option<Fields> = None;
    let mut iteration = 0;
    loop {
        iteration += 1;
        let mut at_mid1: Option<Fields> = None;
        let mut at_mid2: Option<Fields> = None;
        let mut at_end: Option<Fields> = None;
        let next = rk4(y, t, dt, |stage, _, s| {
            let fields = match stage {
                Stage::Start => &start.0,
                Stage::Mid1 => {
                    let f = at_mid1.insert(closed_loop_fields(model, &s.0, &s.1, options));
                    mid.as_ref().map_or(&f.0, |m| &m.0)
                }
                Stage::Mid2 => {
                    at_mid2 = Some(closed_loop_fields(model, &s.0, &s.1, options));
                    match &mid {
                        Some(m) => &m.0,
                        None => &at_mid1.as_ref().unwrap().0,
                    }
                }
                Stage::End => match &end {
                    Some(e) => &e.0,
                    None => {
                        &at_end
                            .insert(closed_loop_fields(model, &s.0, &s.1, options))
                            .0
                    }
                },
            };
            Ok(co_derivative(model, stationary, s, fields))
        })?;
        let applied_mid = mid.take().or_else(|| at_mid1.clone()).unwrap();
        let applied_end = end.take().or(at_end).unwrap();
        let rho_d_next = if stationary { &y.1 } else { &next.1 };
        let (m1, m2) = (at_mid1.unwrap(), at_mid2.unwrap());
        let new_mid: Fields = (
            m1.0.iter().zip(&m2.0).map(|(a, b)| 0.5 * (a + b)).collect(),
            m1.1 || m2.1,
        );
        let new_end = closed_loop_fields(model, &next.0, rho_d_next, options);
        let settled =
            fields_agree(&applied_mid.0, &new_mid.0) && fields_agree(&applied_end.0, &new_end.0);
        if settled || iteration == STEP_FIELD_ITERATIONS {
            return Ok(Step {
                next,
                mid: (applied_mid.0, new_mid.1),
                end: (applied_end.0, new_end.1),
            });
        }
        mid = Some(new_mid);
        end = Some(new_end);
    }
}

/// Output of a closed-loop design run.
#[derive(Debug, Clone)]
pub struct DesignReport {
    pub schedule: ControlSchedule,
    pub config: IntegratorConfig,
    /// Recorded times (every `record_stride` steps, plus the final step).
    pub times: Vec<f64>,
    pub lyapunov_trace: Vec<f64>,
    pub fidelity_trace: Vec<f64>,
    pub target: TargetTrajectory,
    pub final_state: DensityMatrix,
    /// Number of schedule samples whose drift-cancel field was clamped.
    pub drift_cancel_clamps: usize,
    /// Per integration step: did any fields applied in that step clamp.
    pub clamp_mask: Vec<bool>,
    /// Worst physicality seen over every accepted step.
    pub hygiene: Physicality,
}

impl DesignReport {
    pub fn final_fidelity(&self) -> f64 {
        *self.fidelity_trace.last().unwrap()
    }

    /// Fields at the recorded times.
    pub fn field_trace(&self) -> Vec<Vec<f64>> {
        self.times.iter().map(|&t| self.schedule.at(t)).collect()
    }
}

/// Simulates the closed loop from `rho0` towards the freely evolving target
/// `rho_d0` and records the fields it applied.
///
/// Feedback is evaluated at every RK4 stage state and the schedule is
/// sampled every half step. Each step applies exactly its samples: the
/// fields at `tₖ`, a midpoint value shared by the two midpoint stages, and the
/// feedback at the accepted state `ρₖ₊₁`, the latter two found by fixed-point
/// iteration. A replay at the design `dt` therefore retraces the design
/// trajectory, including across drift-cancel guard switches.
pub fn design_schedule(
    model: &ControlSystemModel,
    rho0: &DensityMatrix,
    rho_d0: &DensityMatrix,
    config: &IntegratorConfig,
    options: &DesignOptions,
) -> Result<DesignReport> {
    model.h0().same_dim(rho0.matrix())?;
    model.h0().same_dim(rho_d0.matrix())?;
    options.validate(model.controls().len())?;
    if model.controls().is_empty() {
        return Err(Error::InvalidParameter("model has no controls".into()));
    }
    let purity = rho_d0.purity();
    if (purity - 1.0).abs() > TARGET_PURITY_TOL {
        return Err(Error::InvalidParameter(format!(
            "target must be a pure state (Tr ρ_D² = {purity})"
        )));
    }

    let steps = config.steps()?;
    let record = config.record_steps()?;
    let half = 0.5 * config.dt;
    let stationary = is_stationary(model.h0(), rho_d0.matrix());

    let mut sched_fields: Vec<Vec<f64>> = Vec::with_capacity(2 * steps + 1);
    let mut clamp_mask = Vec::with_capacity(steps);
    let mut clamps = 0usize;
    let mut times = Vec::with_capacity(record.len());
    let mut v_trace = Vec::with_capacity(record.len());
    let mut f_trace = Vec::with_capacity(record.len());
    let mut targets = Vec::new();
    let mut hygiene = Physicality::of(rho0.matrix());

    let mut y = (rho0.matrix().clone(), rho_d0.matrix().clone());
    let mut next_record = 0;
    let mut state = rho0.clone();
    let (mut current_fields, mut current_clamped) = closed_loop_fields(model, &y.0, &y.1, options);
    clamps += usize::from(current_clamped);
    sched_fields.push(current_fields.clone());

    for step in 0..=steps {
        let t = config.time_of(step);
        if record.get(next_record) == Some(&step) {
            let target = DensityMatrix::new_unchecked(y.1.clone());
            times.push(t);
            v_trace.push(lyapunov_raw(&y.1, &y.0));
            f_trace.push(fidelity(&target, &state).map_err(|e| e.at_time(t))?);
            if !stationary {
                targets.push(target);
            }
            next_record += 1;
        }
        if step == steps {
            break;
        }

        let current = (current_fields, current_clamped);
        let Step { next, mid, end } =
            design_step(model, options, stationary, &y, t, config.dt, &current)?;
        clamps += usize::from(mid.1) + usize::from(end.1);
        clamp_mask.push(current.1 || mid.1 || end.1);
        sched_fields.push(mid.0);
        sched_fields.push(end.0.clone());
        (current_fields, current_clamped) = end;

        let t_next = config.time_of(step + 1);
        let (checked, phys) = checked_state(next.0.clone(), t_next)?;
        hygiene = hygiene.worst(phys);
        state = checked;
        y = (next.0, if stationary { y.1 } else { next.1 });
    }

    let sched_times = (0..sched_fields.len()).map(|k| k as f64 * half).collect();
    let schedule = ControlSchedule::new(sched_times, sched_fields, model.fingerprint())?;
    let target = if stationary {
        TargetTrajectory::constant(times.clone(), rho_d0.clone())
    } else {
        TargetTrajectory::varying(times.clone(), targets)
    };

    Ok(DesignReport {
        schedule,
        config: *config,
        times,
        lyapunov_trace: v_trace,
        fidelity_trace: f_trace,
        target,
        final_state: state,
        drift_cancel_clamps: clamps,
        clamp_mask,
        hygiene,
    })
}

/// `|Tr(ρ_d Hₙ ρ − Hₙ ρ_d ρ)|` for every control except the drift-cancelling
/// one, in control order.
pub fn invariant_set_residual(
    model: &ControlSystemModel,
    rho: &DensityMatrix,
    rho_d: &DensityMatrix,
) -> Result<Vec<f64>> {
    model.h0().same_dim(rho.matrix())?;
    model.h0().same_dim(rho_d.matrix())?;
    let c = state_commutator(rho.matrix(), rho_d.matrix());
    Ok(model
        .controls()
        .iter()
        .enumerate()
        .filter(|(n, _)| Some(*n) != model.drift_cancel_index())
        .map(|(_, h)| trace_product_unchecked(h, &c).norm())
        .collect())
}
