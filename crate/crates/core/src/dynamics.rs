//! Lindblad master equation, free target evolution, and the fixed-step RK4
//! integrator shared by the design and replay phases.

use sha2::{Digest, Sha256};

use crate::eigen::HERMITIAN_TOL;
use crate::error::{Error, Result};
use crate::matrix::{commutator, ComplexMatrix, I};
use crate::state::{DensityMatrix, Physicality};

/// Upper bound on integration steps for a single run.
pub const MAX_STEPS: usize = 10_000_000;

/// Jump operators `Jₘ` with rates `λₘ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladChannel {
    jumps: Vec<ComplexMatrix>,
    rates: Vec<f64>,
    // cached J† and J†J
    adjoints: Vec<ComplexMatrix>,
    number_ops: Vec<ComplexMatrix>,
}

impl LindbladChannel {
    pub fn new(jumps: Vec<ComplexMatrix>, rates: Vec<f64>) -> Result<Self> {
        if jumps.len() != rates.len() {
            return Err(Error::InvalidParameter(format!(
                "{} jump operators but {} rates",
                jumps.len(),
                rates.len()
            )));
        }
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "decoherence rates must be finite and >= 0, got {r}"
            )));
        }
        if let Some(first) = jumps.first() {
            for j in &jumps[1..] {
                first.same_dim(j)?;
            }
        }
        let adjoints: Vec<_> = jumps.iter().map(ComplexMatrix::adjoint).collect();
        let number_ops = adjoints.iter().zip(&jumps).map(|(jd, j)| jd * j).collect();
        Ok(Self {
            jumps,
            rates,
            adjoints,
            number_ops,
        })
    }

    /// The channel of a closed system.
    pub fn empty() -> Self {
        Self {
            jumps: Vec::new(),
            rates: Vec::new(),
            adjoints: Vec::new(),
            number_ops: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn jumps(&self) -> &[ComplexMatrix] {
        &self.jumps
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub(crate) fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(rho.dim());
        for (((j, jd), jdj), &rate) in self
            .jumps
            .iter()
            .zip(&self.adjoints)
            .zip(&self.number_ops)
            .zip(&self.rates)
        {
            let sandwich = &(j * rho) * jd;
            let anti = &(jdj * rho) + &(rho * jdj);
            out.axpy(rate, &sandwich);
            out.axpy(-0.5 * rate, &anti);
        }
        out
    }
}

/// `𝓛(ρ) = ½ Σ λₘ([Jₘ, ρJₘ†] + [Jₘρ, Jₘ†])`.
pub fn dissipator(channel: &LindbladChannel, rho: &DensityMatrix) -> Result<ComplexMatrix> {
    if let Some(j) = channel.jumps.first() {
        j.same_dim(rho.matrix())?;
    }
    Ok(channel.apply(rho.matrix()))
}

/// Free Hamiltonian, control Hamiltonians and dissipation of a controlled
/// system. `drift_cancel_index` (0-based) names the control reserved for
/// cancelling the dissipative part of `V̇`; it is present exactly when the
/// channel is nonempty.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSystemModel {
    h0: ComplexMatrix,
    controls: Vec<ComplexMatrix>,
    channel: LindbladChannel,
    drift_cancel_index: Option<usize>,
}

impl ControlSystemModel {
    pub fn new(
        h0: ComplexMatrix,
        controls: Vec<ComplexMatrix>,
        channel: LindbladChannel,
        drift_cancel_index: Option<usize>,
    ) -> Result<Self> {
        check_hermitian(&h0, "free Hamiltonian")?;
        for (n, h) in controls.iter().enumerate() {
            h0.same_dim(h)?;
            check_hermitian(h, &format!("control Hamiltonian {}", n + 1))?;
        }
        if let Some(j) = channel.jumps.first() {
            h0.same_dim(j)?;
        }
        match (channel.is_empty(), drift_cancel_index) {
            (true, Some(_)) => {
                return Err(Error::InvalidParameter(
                    "a closed system has no drift to cancel; drop the drift-cancel index".into(),
                ))
            }
            (false, None) => {
                return Err(Error::InvalidParameter(
                    "a dissipative system needs a drift-cancel control index".into(),
                ))
            }
            (false, Some(n)) if n >= controls.len() => {
                return Err(Error::InvalidParameter(format!(
                    "drift-cancel index {n} out of range for {} controls",
                    controls.len()
                )))
            }
            _ => {}
        }
        Ok(Self {
            h0,
            controls,
            channel,
            drift_cancel_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn h0(&self) -> &ComplexMatrix {
        &self.h0
    }

    pub fn controls(&self) -> &[ComplexMatrix] {
        &self.controls
    }

    pub fn channel(&self) -> &LindbladChannel {
        &self.channel
    }

    pub fn drift_cancel_index(&self) -> Option<usize> {
        self.drift_cancel_index
    }

    /// Same model with the free Hamiltonian replaced.
    pub fn with_h0(&self, h0: ComplexMatrix) -> Result<Self> {
        Self::new(
            h0,
            self.controls.clone(),
            self.channel.clone(),
            self.drift_cancel_index,
        )
    }

    /// `H₀ + Σ fₙ Hₙ`.
    pub fn hamiltonian(&self, fields: &[f64]) -> ComplexMatrix {
        let mut h = self.h0.clone();
        for (f, hn) in fields.iter().zip(&self.controls) {
            if *f != 0.0 {
                h.axpy(*f, hn);
            }
        }
        h
    }

    /// SHA-256 over dimensions, matrix entries and rates, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        let put_matrix = |m: &ComplexMatrix, hasher: &mut Sha256| {
            hasher.update((m.dim() as u64).to_le_bytes());
            for z in m.as_slice() {
                hasher.update(z.re.to_le_bytes());
                hasher.update(z.im.to_le_bytes());
            }
        };
        put_matrix(&self.h0, &mut hasher);
        hasher.update((self.controls.len() as u64).to_le_bytes());
        for h in &self.controls {
            put_matrix(h, &mut hasher);
        }
        hasher.update((self.channel.jumps.len() as u64).to_le_bytes());
        for (j, r) in self.channel.jumps.iter().zip(&self.channel.rates) {
            put_matrix(j, &mut hasher);
            hasher.update(r.to_le_bytes());
        }
        let idx = self.drift_cancel_index.map_or(u64::MAX, |n| n as u64);
        hasher.update(idx.to_le_bytes());
        hex::encode(hasher.finalize())
    }

    pub(crate) fn rhs(&self, rho: &ComplexMatrix, fields: &[f64]) -> ComplexMatrix {
        let h = self.hamiltonian(fields);
        let unitary = &(&h * rho) - &(rho * &h);
        let mut out = unitary.scale(-I);
        if !self.channel.is_empty() {
            out.axpy(1.0, &self.channel.apply(rho));
        }
        out
    }
}

fn check_hermitian(m: &ComplexMatrix, what: &str) -> Result<()> {
    let asymmetry = m.hermitian_asymmetry();
    if asymmetry > HERMITIAN_TOL || !m.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "{what} is not Hermitian (asymmetry {asymmetry:.3e})"
        )));
    }
    Ok(())
}

/// `−i[H₀ + Σ fₙHₙ, ρ] + 𝓛(ρ)`.
pub fn master_rhs(
    model: &ControlSystemModel,
    rho: &DensityMatrix,
    field_values: &[f64],
) -> Result<ComplexMatrix> {
    if field_values.len() != model.controls.len() {
        return Err(Error::DimensionMismatch {
            expected: model.controls.len(),
            found: field_values.len(),
        });
    }
    model.h0.same_dim(rho.matrix())?;
    Ok(model.rhs(rho.matrix(), field_values))
}

/// Step size, horizon and recording stride of a fixed-step integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 10.0,
            record_stride: 10,
        }
    }
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_final: f64, record_stride: usize) -> Result<Self> {
        let config = Self {
            dt,
            t_final,
            record_stride,
        };
        config.steps()?;
        Ok(config)
    }

    /// Number of integration steps, validating the configuration.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_final must be > 0, got {}",
                self.t_final
            )));
        }
        if self.dt > self.t_final {
            return Err(Error::InvalidParameter("dt exceeds t_final".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter("record_stride must be >= 1".into()));
        }
        let ratio = self.t_final / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "t_final / dt = {ratio} is not an integer"
            )));
        }
        let n = n as usize;
        if n > MAX_STEPS {
            return Err(Error::ScheduleOverflow {
                samples: n,
                limit: MAX_STEPS,
            });
        }
        Ok(n)
    }

    /// Step indices at which trajectories are recorded: every
    /// `record_stride`-th step, starting at 0 and always including the last.
    pub fn record_steps(&self) -> Result<Vec<usize>> {
        let n = self.steps()?;
        let mut steps: Vec<usize> = (0..=n).step_by(self.record_stride).collect();
        if *steps.last().unwrap() != n {
            steps.push(n);
        }
        Ok(steps)
    }

    pub fn time_of(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

/// Vector-space operations needed by RK4.
pub(crate) trait OdeState: Clone {
    fn axpy(&mut self, s: f64, other: &Self);
}

impl OdeState for ComplexMatrix {
    fn axpy(&mut self, s: f64, other: &Self) {
        ComplexMatrix::axpy(self, s, other);
    }
}

impl OdeState for (ComplexMatrix, ComplexMatrix) {
    fn axpy(&mut self, s: f64, other: &Self) {
        ComplexMatrix::axpy(&mut self.0, s, &other.0);
        ComplexMatrix::axpy(&mut self.1, s, &other.1);
    }
}

/// Stage of a classical RK4 step; `Mid1`/`Mid2` both sit at `t + dt/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stage {
    Start,
    Mid1,
    Mid2,
    End,
}

/// One classical RK4 step of `y' = f(stage, t, y)`.
pub(crate) fn rk4<S: OdeState>(
    y: &S,
    t: f64,
    dt: f64,
    mut f: impl FnMut(Stage, f64, &S) -> Result<S>,
) -> Result<S> {
    let half = 0.5 * dt;
    let k1 = f(Stage::Start, t, y)?;
    let mut y2 = y.clone();
    y2.axpy(half, &k1);
    let k2 = f(Stage::Mid1, t + half, &y2)?;
    let mut y3 = y.clone();
    y3.axpy(half, &k2);
    let k3 = f(Stage::Mid2, t + half, &y3)?;
    let mut y4 = y.clone();
    y4.axpy(dt, &k3);
    let k4 = f(Stage::End, t + dt, &y4)?;

    let mut out = y.clone();
    out.axpy(dt / 6.0, &k1);
    out.axpy(dt / 3.0, &k2);
    out.axpy(dt / 3.0, &k3);
    out.axpy(dt / 6.0, &k4);
    Ok(out)
}

/// One RK4 step of the master equation with time-dependent fields.
///
/// The output is checked against the loose density-matrix tolerances; a
/// violation is reported as an integration error at `t + dt`.
pub fn rk4_step(
    model: &ControlSystemModel,
    rho: &DensityMatrix,
    fields: impl Fn(f64) -> Vec<f64>,
    t: f64,
    dt: f64,
) -> Result<DensityMatrix> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    model.h0.same_dim(rho.matrix())?;
    let next = rk4(rho.matrix(), t, dt, |_, s, y| {
        let f = fields(s);
        if f.len() != model.controls.len() {
            return Err(Error::DimensionMismatch {
                expected: model.controls.len(),
                found: f.len(),
            });
        }
        Ok(model.rhs(y, &f))
    })?;
    checked_state(next, t + dt).map(|(state, _)| state)
}

pub(crate) fn checked_state(m: ComplexMatrix, t: f64) -> Result<(DensityMatrix, Physicality)> {
    if !m.is_finite() {
        return Err(Error::Integration {
            t,
            reason: "state became non-finite".into(),
        });
    }
    let phys = Physicality::of(&m);
    phys.check().map_err(|e| e.at_time(t))?;
    Ok((DensityMatrix::new_unchecked(m), phys))
}

/// `−i[H₀, ρ_D]`.
pub(crate) fn free_rhs(h0: &ComplexMatrix, rho_d: &ComplexMatrix) -> ComplexMatrix {
    (&(h0 * rho_d) - &(rho_d * h0)).scale(-I)
}

/// Target states at the recorded times of an integration.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrajectory {
    times: Vec<f64>,
    states: TargetStates,
}

#[derive(Debug, Clone, PartialEq)]
enum TargetStates {
    Constant(DensityMatrix),
    Varying(Vec<DensityMatrix>),
}

impl TargetTrajectory {
    pub(crate) fn constant(times: Vec<f64>, state: DensityMatrix) -> Self {
        Self {
            times,
            states: TargetStates::Constant(state),
        }
    }

    pub(crate) fn varying(times: Vec<f64>, states: Vec<DensityMatrix>) -> Self {
        debug_assert_eq!(times.len(), states.len());
        Self {
            times,
            states: TargetStates::Varying(states),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.states, TargetStates::Constant(_))
    }

    pub fn state(&self, k: usize) -> &DensityMatrix {
        match &self.states {
            TargetStates::Constant(s) => s,
            TargetStates::Varying(v) => &v[k],
        }
    }
}

/// `true` when `[H₀, ρ] = 0` within 1e-12 (max entry).
pub(crate) fn is_stationary(h0: &ComplexMatrix, rho: &ComplexMatrix) -> bool {
    commutator(h0, rho)
        .map(|c| c.max_abs() <= 1e-12)
        .unwrap_or(false)
}

/// Integrates `ρ̇_D = −i[H₀, ρ_D]` and returns the recorded states.
/// Stationary targets short-circuit to a constant trajectory.
pub fn propagate_target(
    h0: &ComplexMatrix,
    rho_d0: &DensityMatrix,
    config: &IntegratorConfig,
) -> Result<TargetTrajectory> {
    check_hermitian(h0, "free Hamiltonian")?;
    h0.same_dim(rho_d0.matrix())?;
    let record = config.record_steps()?;
    let times: Vec<f64> = record.iter().map(|&k| config.time_of(k)).collect();
    if is_stationary(h0, rho_d0.matrix()) {
        return Ok(TargetTrajectory::constant(times, rho_d0.clone()));
    }

    let n = config.steps()?;
    let mut states = Vec::with_capacity(record.len());
    let mut y = rho_d0.matrix().clone();
    let mut next_record = 0;
    for step in 0..=n {
        if record.get(next_record) == Some(&step) {
            let (state, _) = checked_state(y.clone(), config.time_of(step))?;
            states.push(state);
            next_record += 1;
        }
        if step == n {
            break;
        }
        y = rk4(&y, config.time_of(step), config.dt, |_, _, s| {
            Ok(free_rhs(h0, s))
        })?;
    }
    Ok(TargetTrajectory::varying(times, states))
}
