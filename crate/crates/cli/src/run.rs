//! The four subcommands and the files they write.

use std::fmt;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use lyapunov_core::control::design_schedule;
use lyapunov_core::dynamics::{propagate_target, ControlSystemModel, TargetTrajectory};
use lyapunov_core::models::NominalSystem;
use lyapunov_core::robustness::{
    noise_ensemble, replay_open_loop, sweep_uncertainty, Execution, OpenLoopPlan,
};
use lyapunov_core::schedule::{fmt_f64, ControlSchedule};
use lyapunov_core::state::DensityMatrix;
use lyapunov_core::Error;

use crate::config::{ModelConfig, RunConfig};
use crate::matrices::load_raw_system;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Design,
    Replay,
    Sweep,
    Ensemble,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Design => "design",
            Self::Replay => "replay",
            Self::Sweep => "sweep",
            Self::Ensemble => "ensemble",
        }
    }
}

/// Settings that come from the command line rather than the config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory; the config's `output.dir` when unset.
    pub out: Option<PathBuf>,
    pub no_timestamp: bool,
    pub gnuplot_stub: bool,
}

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Core(Error),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    MissingSchedule(PathBuf),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Core(e) => match e {
                Error::Integration { .. } | Error::Unphysical(_) | Error::NotHermitian { .. } => 3,
                Error::Io(_) | Error::Format { .. } => 4,
                _ => 2,
            },
            Self::Io { .. } | Self::MissingSchedule(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Core(e) => match e {
                Error::Integration { .. } => "integration",
                Error::Unphysical(_) | Error::NotHermitian { .. } => "physicality",
                Error::Io(_) => "io",
                Error::Format { .. } => "format",
                _ => "invalid-parameter",
            },
            Self::Io { .. } => "io",
            Self::MissingSchedule(_) => "missing-schedule",
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => f.write_str(m),
            Self::Core(e) => write!(f, "{e}"),
            Self::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Self::MissingSchedule(p) => write!(
                f,
                "schedule {} not found; run `design` first or set output.schedule",
                p.display()
            ),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        Self::Core(e)
    }
}

/// What a finished command reports back.
#[derive(Debug, Default)]
pub struct Summary {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn run(
    command: Command,
    config: &RunConfig,
    options: &RunOptions,
) -> Result<Summary, RunError> {
    let mut ctx = Context::new(command, config, options)?;
    match command {
        Command::Design => ctx.design()?,
        Command::Replay => ctx.replay()?,
        Command::Sweep => ctx.sweep()?,
        Command::Ensemble => ctx.ensemble()?,
    }
    Ok(ctx.summary)
}

struct Context<'a> {
    command: Command,
    config: &'a RunConfig,
    options: &'a RunOptions,
    out: PathBuf,
    nominal: NominalSystem,
    summary: Summary,
}

impl<'a> Context<'a> {
    fn new(
        command: Command,
        config: &'a RunConfig,
        options: &'a RunOptions,
    ) -> Result<Self, RunError> {
        let nominal = match &config.model {
            ModelConfig::RawMatrices(raw) => load_raw_system(raw, config)?,
            _ => config.model.family().unwrap().nominal()?,
        };
        let out = options
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&config.output.dir));
        Ok(Self {
            command,
            config,
            options,
            out,
            nominal,
            summary: Summary::default(),
        })
    }

    fn schedule_path(&self) -> PathBuf {
        match &self.config.output.schedule {
            Some(p) => PathBuf::from(p),
            None => self.out.join("schedule.csv"),
        }
    }

    /// Comment lines shared by every output file.
    fn comments(&self) -> Vec<String> {
        let mut c = vec![
            format!("lyapctl {}", self.command.name()),
            format!("seed: {}", self.config.seed),
        ];
        if !self.options.no_timestamp {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs());
            c.push(format!("generated: {secs} (unix seconds)"));
        }
        c.push("config:".into());
        c.extend(
            self.config
                .normalized()
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| format!("  {l}")),
        );
        c
    }

    fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> lyapunov_core::Result<()>,
    ) -> Result<(), RunError> {
        let path = self.out.join(name);
        self.write_to(path, body)
    }

    fn write_to(
        &mut self,
        path: PathBuf,
        body: impl FnOnce(&mut Vec<u8>) -> lyapunov_core::Result<()>,
    ) -> Result<(), RunError> {
        let mut buf = Vec::new();
        body(&mut buf)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| RunError::Io {
                path: dir.into(),
                source,
            })?;
        }
        fs::write(&path, buf).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        self.summary.files.push(path);
        Ok(())
    }

    fn gnuplot(&mut self, csv: &str, script: String) -> Result<(), RunError> {
        if !self.options.gnuplot_stub {
            return Ok(());
        }
        let name = csv.replace(".csv", ".gp");
        let text = format!("set datafile separator ','\nset datafile commentschars '#'\n{script}");
        self.write(&name, |b| {
            b.extend_from_slice(text.as_bytes());
            Ok(())
        })
    }

    fn target(&self) -> Result<TargetTrajectory, RunError> {
        Ok(propagate_target(
            self.nominal.model.h0(),
            &self.nominal.rho_d,
            &self.config.integrator,
        )?)
    }

    fn load_schedule(&mut self) -> Result<ControlSchedule, RunError> {
        let path = self.schedule_path();
        let file = File::open(&path).map_err(|source| match source.kind() {
            std::io::ErrorKind::NotFound => RunError::MissingSchedule(path.clone()),
            _ => RunError::Io {
                path: path.clone(),
                source,
            },
        })?;
        let schedule = ControlSchedule::read_csv(BufReader::new(file)).map_err(|e| match e {
            Error::Format { line, message } => Error::Format {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?;
        if schedule.model_fingerprint() != self.nominal.model.fingerprint() {
            self.summary.warnings.push(format!(
                "{} was designed on a different model (fingerprint {}, config model {})",
                path.display(),
                short(schedule.model_fingerprint()),
                short(&self.nominal.model.fingerprint())
            ));
        }
        Ok(schedule)
    }

    /// Plant and initial state of the configured (perturbed) system.
    fn plant(&self) -> Result<(ControlSystemModel, DensityMatrix), RunError> {
        match (self.config.model.family(), self.config.perturbation()) {
            (Some(family), Some(d)) => Ok(family.plant(&self.nominal.model, &d)?),
            _ => Ok((self.nominal.model.clone(), self.nominal.rho0.clone())),
        }
    }

    fn design(&mut self) -> Result<(), RunError> {
        let c = self.config;
        let report = design_schedule(
            &self.nominal.model,
            &self.nominal.rho0,
            &self.nominal.rho_d,
            &c.integrator,
            &c.design,
        )?;
        let comments = self.comments();
        let path = self.schedule_path();
        self.write_to(path, |b| report.schedule.write_csv(b, &comments))?;

        let fields = report.field_trace();
        let width = report.schedule.num_fields();
        self.write("design.csv", |b| {
            use std::io::Write;
            for line in &comments {
                writeln!(b, "# {line}")?;
            }
            write!(b, "t,V,fidelity")?;
            for n in 1..=width {
                write!(b, ",f_{n}")?;
            }
            writeln!(b)?;
            for (k, row) in fields.iter().enumerate() {
                write!(
                    b,
                    "{},{},{}",
                    fmt_f64(report.times[k]),
                    fmt_f64(report.lyapunov_trace[k]),
                    fmt_f64(report.fidelity_trace[k])
                )?;
                for v in row {
                    write!(b, ",{}", fmt_f64(*v))?;
                }
                writeln!(b)?;
            }
            Ok(())
        })?;
        let plots: Vec<String> = (0..width)
            .map(|n| {
                format!(
                    "'design.csv' using 1:{} with lines title 'f_{}'",
                    n + 4,
                    n + 1
                )
            })
            .collect();
        self.gnuplot(
            "design.csv",
            format!(
                "set multiplot layout 2,1\nplot 'design.csv' using 1:2 with lines title 'V', '' using 1:3 with lines title 'fidelity'\nplot {}\nunset multiplot\n",
                plots.join(", ")
            ),
        )?;
        self.summary.lines.push(format!(
            "design: final fidelity {:.10}, {} schedule samples, {} drift-cancel clamps",
            report.final_fidelity(),
            report.schedule.len(),
            report.drift_cancel_clamps
        ));
        Ok(())
    }

    fn replay(&mut self) -> Result<(), RunError> {
        let schedule = self.load_schedule()?;
        let target = self.target()?;
        let (plant, rho0) = self.plant()?;
        let out = replay_open_loop(
            &plant,
            &rho0,
            &schedule,
            &target,
            &self.config.noise_spec(),
            0,
            &self.config.integrator,
        )?;
        let comments = self.comments();
        self.write("replay.csv", |b| {
            use std::io::Write;
            for line in &comments {
                writeln!(b, "# {line}")?;
            }
            writeln!(b, "t,fidelity")?;
            for (t, f) in out.times.iter().zip(&out.fidelity) {
                writeln!(b, "{},{}", fmt_f64(*t), fmt_f64(*f))?;
            }
            Ok(())
        })?;
        self.gnuplot(
            "replay.csv",
            "plot 'replay.csv' using 1:2 with lines title 'fidelity'\n".into(),
        )?;
        self.summary.lines.push(format!(
            "replay: final fidelity {:.10}",
            out.final_fidelity()
        ));
        Ok(())
    }

    fn sweep(&mut self) -> Result<(), RunError> {
        let c = self.config;
        let (Some(family), Some(base), Some(grid)) =
            (c.model.family(), c.perturbation(), c.sweep_grid())
        else {
            return Err(RunError::Config(format!(
                "sweep needs a two-level or four-level model, not {}",
                c.model.family_name()
            )));
        };
        let schedule = self.load_schedule()?;
        let target = self.target()?;
        let plan = OpenLoopPlan {
            schedule: &schedule,
            target: &target,
            config: &c.integrator,
        };
        let result = sweep_uncertainty(plan, &family, &base, &grid, Execution::Parallel)?;
        let mut comments = self.comments();
        if let ModelConfig::FourLevel(p) = &c.model {
            comments.push(format!(
                "axis values are absolute; delta offsets in the config are multiples of gamma = {}",
                p.gamma_total()
            ));
        }
        if !self.options.no_timestamp {
            comments.push(format!(
                "wall time: {:.3} s",
                result.wall_time.as_secs_f64()
            ));
        }
        self.write("sweep.csv", |b| result.write_csv(b, &comments))?;
        self.gnuplot(
            "sweep.csv",
            format!(
                "set dgrid3d {},{}\nset xlabel '{}'\nset ylabel '{}'\nsplot 'sweep.csv' using 1:2:3 with pm3d title 'final fidelity'\n",
                grid.axis2.count, grid.axis1.count, grid.axis1.axis, grid.axis2.axis
            ),
        )?;
        self.summary.lines.push(format!(
            "sweep: {} points, min final fidelity {:.10}",
            result.values.len(),
            result.min()
        ));
        Ok(())
    }

    fn ensemble(&mut self) -> Result<(), RunError> {
        let c = self.config;
        let schedule = self.load_schedule()?;
        let target = self.target()?;
        let (plant, rho0) = self.plant()?;
        let plan = OpenLoopPlan {
            schedule: &schedule,
            target: &target,
            config: &c.integrator,
        };
        let result = noise_ensemble(
            plan,
            &plant,
            &rho0,
            &c.noise_spec(),
            c.noise.trials,
            Execution::Parallel,
        )?;
        let mut comments = self.comments();
        comments.push(format!("trials: {}", c.noise.trials));
        comments.push(format!(
            "mean final fidelity: {}",
            fmt_f64(result.mean_final())
        ));
        self.write("ensemble.csv", |b| result.write_csv(b, &comments))?;
        self.gnuplot(
            "ensemble.csv",
            "plot 'ensemble.csv' using 1:3:4 with filledcurves title 'min-max', '' using 1:2 with lines title 'mean', '' using 1:6 with lines title 'trial 0'\n".into(),
        )?;
        self.summary.lines.push(format!(
            "ensemble: {} trials, mean final fidelity {:.10}",
            c.noise.trials,
            result.mean_final()
        ));
        Ok(())
    }
}

fn short(fingerprint: &str) -> &str {
    &fingerprint[..fingerprint.len().min(12)]
}
