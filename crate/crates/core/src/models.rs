//! The two concrete systems: a closed two-level system driven by `σx`, and a
//! dissipative four-level system steered into its decoherence-free subspace.
//!
//! Basis conventions: two-level `(|e⟩, |g⟩)`; four-level `(|0⟩, |1⟩, |2⟩, |3⟩)`
//! with `|0⟩` the excited state.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;

use crate::dynamics::{ControlSystemModel, LindbladChannel};
use crate::error::{Error, Result};
use crate::matrix::{pauli, ComplexMatrix};
use crate::robustness::NoiseSpec;
use crate::state::{project, DensityMatrix, PureState};

/// A model with the initial state and (pure) target of its nominal run.
#[derive(Debug, Clone)]
pub struct NominalSystem {
    pub model: ControlSystemModel,
    pub rho0: DensityMatrix,
    pub rho_d: DensityMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelParams {
    pub omega: f64,
    pub beta0: f64,
    pub phi0: f64,
}

impl TwoLevelParams {
    pub fn validate(&self) -> Result<()> {
        if self.omega == 0.0 || !self.omega.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega must be finite and nonzero, got {}",
                self.omega
            )));
        }
        if !(self.beta0.is_finite() && self.phi0.is_finite()) {
            return Err(Error::InvalidParameter(
                "initial-state angles must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// `cos β₀|e⟩ + sin β₀ e^{iφ₀}|g⟩`.
pub fn two_level_initial_state(beta0: f64, phi0: f64) -> PureState {
    PureState::new(vec![
        C64::new(beta0.cos(), 0.0),
        C64::from_polar(beta0.sin(), phi0),
    ])
    .expect("trigonometric parameterization is normalized")
}

/// `H₀ = ω/2 σz`, single control `σx`, no dissipation, target `|g⟩`.
pub fn two_level_model(p: &TwoLevelParams) -> Result<NominalSystem> {
    p.validate()?;
    let model = ControlSystemModel::new(
        pauli::z().scale_real(p.omega / 2.0),
        vec![pauli::x()],
        LindbladChannel::empty(),
        None,
    )?;
    Ok(NominalSystem {
        model,
        rho0: project(&two_level_initial_state(p.beta0, p.phi0))?,
        rho_d: project(&PureState::basis(2, 1))?,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TwoLevelPerturbation {
    pub delta_x: f64,
    pub delta_z: f64,
    pub d_beta0: f64,
    pub d_phi0: f64,
    pub noise: NoiseSpec,
}

/// Plant with `H₀ + δx σx + δz σz` and initial angles `(β₀+δβ₀, φ₀+δφ₀)`.
pub fn perturb_two_level(
    model: &ControlSystemModel,
    p: &TwoLevelParams,
    d: &TwoLevelPerturbation,
) -> Result<(ControlSystemModel, DensityMatrix)> {
    p.validate()?;
    let mut h0 = model.h0().clone();
    if d.delta_x != 0.0 {
        h0.axpy(d.delta_x, &pauli::x());
    }
    if d.delta_z != 0.0 {
        h0.axpy(d.delta_z, &pauli::z());
    }
    let plant = model.with_h0(h0)?;
    let rho0 = project(&two_level_initial_state(
        p.beta0 + d.d_beta0,
        p.phi0 + d.d_phi0,
    ))?;
    Ok((plant, rho0))
}

/// Orientation of the four-level jump operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LindbladOrientation {
    /// `Jⱼ = |j⟩⟨0|`: the excited state decays into `|j⟩`.
    #[default]
    Decay,
    /// `Jⱼ = |0⟩⟨j|`, the literal operator ordering of the dissipator.
    Absorption,
}

impl FromStr for LindbladOrientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decay" => Ok(Self::Decay),
            "absorption" => Ok(Self::Absorption),
            other => Err(Error::InvalidParameter(format!(
                "unknown lindblad orientation `{other}` (expected decay|absorption)"
            ))),
        }
    }
}

impl fmt::Display for LindbladOrientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Decay => "decay",
            Self::Absorption => "absorption",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourLevelParams {
    /// Ω; the couplings are `Ω₁ = Ω cos φ`, `Ω₂ = Ω sin φ`.
    pub omega_rabi: f64,
    pub phi: f64,
    /// Δ₀, Δ₁, Δ₂. Level `|3⟩` carries no energy term.
    pub delta: [f64; 3],
    /// γ₁, γ₂, γ₃: decay rates of `|0⟩` into `|1⟩`, `|2⟩`, `|3⟩`.
    pub gammas: [f64; 3],
    /// β₁, β₂, β₃ of the initial state.
    pub betas: [f64; 3],
    pub orientation: LindbladOrientation,
}

impl FourLevelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_rabi > 0.0 && self.omega_rabi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "omega_rabi must be > 0, got {}",
                self.omega_rabi
            )));
        }
        if self.gammas.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "gammas >= 0 required, got {:?}",
                self.gammas
            )));
        }
        let finite = std::iter::once(self.phi)
            .chain(self.delta)
            .chain(self.betas)
            .all(f64::is_finite);
        if !finite {
            return Err(Error::InvalidParameter(
                "four-level parameters must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Total decay rate γ = γ₁ + γ₂ + γ₃.
    pub fn gamma_total(&self) -> f64 {
        self.gammas.iter().sum()
    }

    pub fn dark_states(&self) -> (PureState, PureState) {
        let d1 =
            PureState::from_real(&[0.0, -self.phi.sin(), self.phi.cos(), 0.0]).expect("normalized");
        (d1, PureState::basis(4, 3))
    }
}

/// Initial state parameterized by three angles (relative phases omitted).
pub fn four_level_initial_state(b1: f64, b2: f64, b3: f64) -> PureState {
    PureState::from_real(&[
        b1.sin() * b3.cos(),
        b1.cos() * b2.cos(),
        b1.cos() * b2.sin(),
        b1.sin() * b3.sin(),
    ])
    .expect("trigonometric parameterization is normalized")
}

fn four_level_h0(p: &FourLevelParams) -> ComplexMatrix {
    let (o1, o2) = (p.omega_rabi * p.phi.cos(), p.omega_rabi * p.phi.sin());
    let mut h0 = ComplexMatrix::diagonal(&[p.delta[0], p.delta[1], p.delta[2], 0.0]);
    h0[(0, 1)] = C64::new(o1, 0.0);
    h0[(1, 0)] = C64::new(o1, 0.0);
    h0[(0, 2)] = C64::new(o2, 0.0);
    h0[(2, 0)] = C64::new(o2, 0.0);
    h0
}

fn symmetric_outer(a: &PureState, b: &PureState) -> ComplexMatrix {
    &ComplexMatrix::outer(a.amplitudes(), b.amplitudes())
        + &ComplexMatrix::outer(b.amplitudes(), a.amplitudes())
}

/// Four-level system and its dark states `(|D₁⟩, |D₂⟩)`. Controls are
/// `(H₁, H₂, H₃)` with `H₁` (index 0) cancelling the dissipative drift.
pub fn four_level_model(p: &FourLevelParams) -> Result<(NominalSystem, (PureState, PureState))> {
    p.validate()?;
    let (d1, d2) = p.dark_states();
    let ground = PureState::basis(4, 0);

    let h1 = ComplexMatrix::from_fn(4, |_, _| C64::new(1.0, 0.0));
    let h2 = symmetric_outer(&d1, &d2);
    let h3 = symmetric_outer(&ground, &d2);

    let jumps = (1..4)
        .map(|j| {
            let (to, from) = match p.orientation {
                LindbladOrientation::Decay => (j, 0),
                LindbladOrientation::Absorption => (0, j),
            };
            let mut m = ComplexMatrix::zeros(4);
            m[(to, from)] = C64::new(1.0, 0.0);
            m
        })
        .collect();
    let channel = LindbladChannel::new(jumps, p.gammas.to_vec())?;
    let model = ControlSystemModel::new(four_level_h0(p), vec![h1, h2, h3], channel, Some(0))?;

    let [b1, b2, b3] = p.betas;
    let system = NominalSystem {
        model,
        rho0: project(&four_level_initial_state(b1, b2, b3))?,
        rho_d: project(&d1)?,
    };
    Ok((system, (d1, d2)))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FourLevelPerturbation {
    /// Coupling added on `|0⟩⟨1| + |1⟩⟨0|` (absolute energy).
    pub delta_x: f64,
    /// Coupling added on `|0⟩⟨2| + |2⟩⟨0|` (absolute energy).
    pub delta_z: f64,
    pub d_beta1: f64,
    pub d_beta2: f64,
    pub noise: NoiseSpec,
}

pub fn perturb_four_level(
    model: &ControlSystemModel,
    p: &FourLevelParams,
    d: &FourLevelPerturbation,
) -> Result<(ControlSystemModel, DensityMatrix)> {
    p.validate()?;
    let mut h0 = model.h0().clone();
    for (coupling, level) in [(d.delta_x, 1), (d.delta_z, 2)] {
        if coupling != 0.0 {
            h0[(0, level)] += C64::new(coupling, 0.0);
            h0[(level, 0)] += C64::new(coupling, 0.0);
        }
    }
    let plant = model.with_h0(h0)?;
    let [b1, b2, b3] = p.betas;
    let rho0 = project(&four_level_initial_state(
        b1 + d.d_beta1,
        b2 + d.d_beta2,
        b3,
    ))?;
    Ok((plant, rho0))
}

/// Perturbation parameters that a sweep can scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerturbationAxis {
    DeltaX,
    DeltaZ,
    DBeta0,
    DPhi0,
    DBeta1,
    DBeta2,
}

impl PerturbationAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::DeltaX => "delta_x",
            Self::DeltaZ => "delta_z",
            Self::DBeta0 => "d_beta0",
            Self::DPhi0 => "d_phi0",
            Self::DBeta1 => "d_beta1",
            Self::DBeta2 => "d_beta2",
        }
    }
}

impl FromStr for PerturbationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "delta_x" => Self::DeltaX,
            "delta_z" => Self::DeltaZ,
            "d_beta0" => Self::DBeta0,
            "d_phi0" => Self::DPhi0,
            "d_beta1" => Self::DBeta1,
            "d_beta2" => Self::DBeta2,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown perturbation axis `{other}`"
                )))
            }
        })
    }
}

impl fmt::Display for PerturbationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the built-in model families.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFamily {
    TwoLevel(TwoLevelParams),
    FourLevel(FourLevelParams),
}

/// Perturbation matching a [`ModelFamily`].
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    TwoLevel(TwoLevelPerturbation),
    FourLevel(FourLevelPerturbation),
}

impl ModelFamily {
    pub fn nominal(&self) -> Result<NominalSystem> {
        match self {
            Self::TwoLevel(p) => two_level_model(p),
            Self::FourLevel(p) => four_level_model(p).map(|(sys, _)| sys),
        }
    }

    pub fn axes(&self) -> &'static [PerturbationAxis] {
        use PerturbationAxis::*;
        match self {
            Self::TwoLevel(_) => &[DeltaX, DeltaZ, DBeta0, DPhi0],
            Self::FourLevel(_) => &[DeltaX, DeltaZ, DBeta1, DBeta2],
        }
    }

    pub fn zero_perturbation(&self) -> Perturbation {
        match self {
            Self::TwoLevel(_) => Perturbation::TwoLevel(Default::default()),
            Self::FourLevel(_) => Perturbation::FourLevel(Default::default()),
        }
    }

    /// Perturbed plant and initial state built from the nominal model.
    pub fn plant(
        &self,
        nominal: &ControlSystemModel,
        d: &Perturbation,
    ) -> Result<(ControlSystemModel, DensityMatrix)> {
        match (self, d) {
            (Self::TwoLevel(p), Perturbation::TwoLevel(d)) => perturb_two_level(nominal, p, d),
            (Self::FourLevel(p), Perturbation::FourLevel(d)) => perturb_four_level(nominal, p, d),
            _ => Err(Error::InvalidParameter(
                "perturbation does not match the model family".into(),
            )),
        }
    }
}

impl Perturbation {
    pub fn noise(&self) -> &NoiseSpec {
        match self {
            Self::TwoLevel(d) => &d.noise,
            Self::FourLevel(d) => &d.noise,
        }
    }

    pub fn set_noise(&mut self, noise: NoiseSpec) {
        match self {
            Self::TwoLevel(d) => d.noise = noise,
            Self::FourLevel(d) => d.noise = noise,
        }
    }

    pub fn get(&self, axis: PerturbationAxis) -> Result<f64> {
        use PerturbationAxis::*;
        match (self, axis) {
            (Self::TwoLevel(d), DeltaX) => Ok(d.delta_x),
            (Self::TwoLevel(d), DeltaZ) => Ok(d.delta_z),
            (Self::TwoLevel(d), DBeta0) => Ok(d.d_beta0),
            (Self::TwoLevel(d), DPhi0) => Ok(d.d_phi0),
            (Self::FourLevel(d), DeltaX) => Ok(d.delta_x),
            (Self::FourLevel(d), DeltaZ) => Ok(d.delta_z),
            (Self::FourLevel(d), DBeta1) => Ok(d.d_beta1),
            (Self::FourLevel(d), DBeta2) => Ok(d.d_beta2),
            _ => Err(self.wrong_axis(axis)),
        }
    }

    pub fn set(&mut self, axis: PerturbationAxis, value: f64) -> Result<()> {
        use PerturbationAxis::*;
        let slot = match (&mut *self, axis) {
            (Self::TwoLevel(d), DeltaX) => &mut d.delta_x,
            (Self::TwoLevel(d), DeltaZ) => &mut d.delta_z,
            (Self::TwoLevel(d), DBeta0) => &mut d.d_beta0,
            (Self::TwoLevel(d), DPhi0) => &mut d.d_phi0,
            (Self::FourLevel(d), DeltaX) => &mut d.delta_x,
            (Self::FourLevel(d), DeltaZ) => &mut d.delta_z,
            (Self::FourLevel(d), DBeta1) => &mut d.d_beta1,
            (Self::FourLevel(d), DBeta2) => &mut d.d_beta2,
            _ => return Err(self.wrong_axis(axis)),
        };
        *slot = value;
        Ok(())
    }

    fn wrong_axis(&self, axis: PerturbationAxis) -> Error {
        let family = match self {
            Self::TwoLevel(_) => "two-level",
            Self::FourLevel(_) => "four-level",
        };
        Error::InvalidParameter(format!(
            "axis `{axis}` is not defined for the {family} model"
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::dissipator;
    use crate::matrix::commutator;
    use crate::state::population;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

    pub(crate) fn fig4() -> FourLevelParams {
        FourLevelParams {
            omega_rabi: 5.0,
            phi: PI / 5.0,
            delta: [4.0, 2.0, 2.0],
            gammas: [1.0 / 3.0; 3],
            betas: [PI / 5.0, PI / 4.0, PI / 3.0],
            orientation: LindbladOrientation::Decay,
        }
    }

    #[test]
    fn two_level_factory() {
        let sys = two_level_model(&TwoLevelParams {
            omega: 4.0,
            beta0: FRAC_PI_4,
            phi0: FRAC_PI_4,
        })
        .unwrap();
        assert_eq!(sys.model.h0(), &ComplexMatrix::diagonal(&[2.0, -2.0]));
        assert_eq!(sys.model.controls(), &[pauli::x()]);
        assert!(sys.model.channel().is_empty());
        assert_eq!(sys.model.drift_cancel_index(), None);
        let psi = two_level_initial_state(FRAC_PI_4, FRAC_PI_4);
        assert!((psi.amplitudes()[0] - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((psi.amplitudes()[1] - C64::from_polar(FRAC_1_SQRT_2, FRAC_PI_4)).norm() < 1e-15);
        assert_eq!(sys.rho_d.matrix(), &ComplexMatrix::diagonal(&[0.0, 1.0]));

        let at_zero = two_level_model(&TwoLevelParams {
            omega: 4.0,
            beta0: 0.0,
            phi0: 0.3,
        })
        .unwrap();
        assert!((at_zero.rho0.matrix() - &ComplexMatrix::diagonal(&[1.0, 0.0])).max_abs() < 1e-15);
        assert!(two_level_model(&TwoLevelParams {
            omega: 0.0,
            beta0: 0.0,
            phi0: 0.0
        })
        .is_err());
    }

    #[test]
    fn two_level_perturbations() {
        let p = TwoLevelParams {
            omega: 4.0,
            beta0: FRAC_PI_4,
            phi0: FRAC_PI_4,
        };
        let sys = two_level_model(&p).unwrap();
        let (plant, rho0) = perturb_two_level(&sys.model, &p, &Default::default()).unwrap();
        assert_eq!(plant, sys.model);
        assert_eq!(rho0, sys.rho0);

        let d = TwoLevelPerturbation {
            delta_x: 0.5,
            ..Default::default()
        };
        let (plant, _) = perturb_two_level(&sys.model, &p, &d).unwrap();
        let expected = &ComplexMatrix::diagonal(&[2.0, -2.0]) + &pauli::x().scale_real(0.5);
        assert_eq!(plant.h0(), &expected);
        // a σx offset commutes with the σx control
        assert_eq!(
            commutator(&pauli::x(), &pauli::x().scale_real(0.5))
                .unwrap()
                .max_abs(),
            0.0
        );

        let d = TwoLevelPerturbation {
            d_beta0: PI,
            ..Default::default()
        };
        let (_, rho0) = perturb_two_level(&sys.model, &p, &d).unwrap();
        let pe = population(&rho0, &PureState::basis(2, 0)).unwrap();
        assert!((pe - (FRAC_PI_4 + PI).cos().powi(2)).abs() < 1e-15);
        // amplitudes negated: same projector
        assert!((rho0.matrix() - sys.rho0.matrix()).max_abs() < 1e-15);
    }

    #[test]
    fn four_level_dark_states() {
        let p = fig4();
        let (sys, (d1, d2)) = four_level_model(&p).unwrap();
        let h0_d1 = sys.model.h0().apply(d1.amplitudes());
        for (a, b) in h0_d1.iter().zip(d1.amplitudes()) {
            assert!((a - b * 2.0).norm() < 1e-12);
        }
        let h0_d2 = sys.model.h0().apply(d2.amplitudes());
        assert!(h0_d2.iter().all(|z| z.norm() < 1e-15));
        assert!(d1.inner(&d2).norm() < 1e-15);
        assert!(d1.amplitudes()[0].norm() == 0.0 && d2.amplitudes()[0].norm() == 0.0);
        let dark = dissipator(sys.model.channel(), &project(&d1).unwrap()).unwrap();
        assert!(dark.max_abs() < 1e-15);
        assert_eq!(sys.model.drift_cancel_index(), Some(0));
        assert_eq!(
            sys.model.controls()[0],
            ComplexMatrix::from_fn(4, |_, _| C64::new(1.0, 0.0))
        );
    }

    #[test]
    fn excited_state_dissipator() {
        // ρ = |0⟩⟨0|, γⱼ = 1/3 → (1/3)(|1⟩⟨1|+|2⟩⟨2|+|3⟩⟨3|) − |0⟩⟨0|
        let (sys, _) = four_level_model(&fig4()).unwrap();
        let rho = project(&PureState::basis(4, 0)).unwrap();
        let got = dissipator(sys.model.channel(), &rho).unwrap();
        let third = 1.0 / 3.0;
        let expected = ComplexMatrix::diagonal(&[-1.0, third, third, third]);
        assert!((&got - &expected).max_abs() < 1e-15);
    }

    #[test]
    fn absorption_orientation_breaks_the_dark_state() {
        let p = FourLevelParams {
            orientation: LindbladOrientation::Absorption,
            ..fig4()
        };
        let (sys, (d1, _)) = four_level_model(&p).unwrap();
        let l = dissipator(sys.model.channel(), &project(&d1).unwrap()).unwrap();
        assert!(l.max_abs() > 0.1);
    }

    #[test]
    fn four_level_phi_zero() {
        let p = FourLevelParams { phi: 0.0, ..fig4() };
        let (d1, _) = p.dark_states();
        assert_eq!(d1, PureState::from_real(&[0.0, -0.0, 1.0, 0.0]).unwrap());
    }

    #[test]
    fn four_level_perturbations() {
        let p = fig4();
        let (sys, _) = four_level_model(&p).unwrap();
        let (plant, rho0) = perturb_four_level(&sys.model, &p, &Default::default()).unwrap();
        assert_eq!(plant, sys.model);
        assert_eq!(rho0, sys.rho0);

        let d = FourLevelPerturbation {
            delta_x: 0.5,
            ..Default::default()
        };
        let (plant, _) = perturb_four_level(&sys.model, &p, &d).unwrap();
        let diff = plant.h0() - sys.model.h0();
        let mut expected = ComplexMatrix::zeros(4);
        expected[(0, 1)] = C64::new(0.5, 0.0);
        expected[(1, 0)] = C64::new(0.5, 0.0);
        assert!((&diff - &expected).max_abs() < 1e-15);

        let d = FourLevelPerturbation {
            d_beta1: 0.1 * PI,
            d_beta2: -0.1 * PI,
            ..Default::default()
        };
        let (_, rho0) = perturb_four_level(&sys.model, &p, &d).unwrap();
        assert!((rho0.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perturbation_axes() {
        let fam = ModelFamily::FourLevel(fig4());
        let mut d = fam.zero_perturbation();
        d.set(PerturbationAxis::DeltaZ, 0.25).unwrap();
        assert_eq!(d.get(PerturbationAxis::DeltaZ).unwrap(), 0.25);
        assert!(d.set(PerturbationAxis::DBeta0, 1.0).is_err());
        assert!("delta_y".parse::<PerturbationAxis>().is_err());
        for axis in fam.axes() {
            assert_eq!(axis.name().parse::<PerturbationAxis>().unwrap(), *axis);
        }
    }

    #[test]
    fn factories_reject_invalid_params() {
        assert!(four_level_model(&FourLevelParams {
            omega_rabi: 0.0,
            ..fig4()
        })
        .is_err());
        assert!(four_level_model(&FourLevelParams {
            gammas: [-1.0, 0.0, 0.0],
            ..fig4()
        })
        .is_err());
    }
}
