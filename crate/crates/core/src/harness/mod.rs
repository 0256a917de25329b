//! Experiment orchestration: configs, figure pipelines and CSV tables.

pub mod config;
pub mod presets;
pub mod table;

use std::fs::File;
use std::io::{BufWriter, Write};

use nalgebra::DVector;
use thiserror::Error;

use crate::channels::{ChannelError, ChannelSpec, LinkParams, Scenario, SystemSpec, TripleSampler};
use crate::multiuser::{capacity_scaling_experiment, MultiuserError, ScalingSetup};
use crate::par::{self, Merge};
use crate::power::{
    awgn_capacity, ergodic_capacity_mc, solve_lambda, AverageSnrs, InterferenceConstraints,
    PowerError, MIN_CALIBRATION_RUNS,
};
use crate::rab::{
    artificial_fading_component, draw_weights, LosBeamspaceMatrix, RabConfig, RabError, RabSystem,
    ReceiveMode,
};
use crate::rng::{domain, substream};
use crate::stats::rayleigh_envelope_cdf;
use crate::Complex64;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind, Figure, Level};
pub use table::{Cell, ResultTable, TableError};

/// Version string recorded in every table.
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Output(#[from] TableError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 2 for config problems, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}

impl From<PowerError> for HarnessError {
    fn from(e: PowerError) -> Self {
        match e {
            PowerError::Invalid { field, detail } => ConfigError::Invalid {
                field: field.into(),
                detail,
            }
            .into(),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

impl From<ChannelError> for HarnessError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::Invalid { field, value } => ConfigError::Invalid {
                field: format!("channel.{field}"),
                detail: value.to_string(),
            }
            .into(),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

impl From<RabError> for HarnessError {
    fn from(e: RabError) -> Self {
        match e {
            RabError::Invalid { field, detail } => ConfigError::Invalid {
                field: format!("rab.{field}"),
                detail,
            }
            .into(),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

impl From<MultiuserError> for HarnessError {
    fn from(e: MultiuserError) -> Self {
        match e {
            MultiuserError::Invalid { field, detail } => ConfigError::Invalid {
                field: format!("sweep.{field}"),
                detail,
            }
            .into(),
            MultiuserError::Channel(c) => c.into(),
            MultiuserError::Rab(r) => r.into(),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

/// Runs the pipeline selected by `cfg.figure` and returns its table, with
/// metadata attached. Output depends only on the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let mut table = match cfg.figure.kind() {
        ExperimentKind::CapacitySweep => capacity_sweep(cfg)?,
        ExperimentKind::Scaling => scaling(cfg)?,
        ExperimentKind::ArtificialFading => artificial_fading(cfg)?,
        ExperimentKind::RabDistribution => rab_distribution(cfg)?,
        ExperimentKind::TimeSeries => time_series(cfg)?,
    };
    table.add_metadata("experiment", cfg.figure.id());
    table.add_metadata("description", cfg.figure.description());
    table.add_metadata("seed", cfg.seed.to_string());
    table.add_metadata("runs", cfg.runs.to_string());
    table.add_metadata("code_version", CODE_VERSION);
    table.add_metadata("config", cfg.source.to_toml());
    Ok(table)
}

/// Runs the experiment and writes the CSV to `cfg.output_path`, or to
/// `fallback` when no path is configured.
pub fn run_and_write<W: Write>(
    cfg: &ExperimentConfig,
    fallback: W,
) -> Result<ResultTable, HarnessError> {
    let table = run_experiment(cfg)?;
    match &cfg.output_path {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            table.write_csv(&mut out)?;
            out.flush()?;
        }
        None => table.write_csv(fallback)?,
    }
    Ok(table)
}

fn rab_label(rab: Option<&RabConfig>) -> (usize, usize, &'static str) {
    match rab {
        None => (0, 0, "none"),
        Some(c) => (
            c.m_t,
            c.m_r,
            match c.receive_mode {
                ReceiveMode::Random => "random",
                ReceiveMode::Smart => "smart",
            },
        ),
    }
}

/// One curve of a capacity sweep: a scenario, optionally with RAB.
fn capacity_curves(
    cfg: &ExperimentConfig,
) -> Result<Vec<(Scenario, Option<RabConfig>)>, HarnessError> {
    let mut curves: Vec<_> = cfg.scenarios.iter().map(|&s| (s, None)).collect();
    for &s in &cfg.rab.scenarios {
        if cfg.figure == Figure::Fig13 {
            for &m in &cfg.patterns {
                curves.push((s, Some(cfg.rab.config(s, m, m)?)));
            }
        } else {
            curves.push((s, Some(cfg.rab.config(s, cfg.rab.m_t, cfg.rab.m_r)?)));
        }
    }
    Ok(curves)
}

fn capacity_sweep(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let mut table = ResultTable::new([
        "q_av_db",
        "scenario",
        "rho",
        "capacity_bps_hz",
        "std_err",
        "gbar_s_db",
        "rab_mt",
        "rab_mr",
        "receive_mode",
        "awgn_capacity_bps_hz",
        "lambda",
    ]);
    let calibration_runs = cfg.runs.max(MIN_CALIBRATION_RUNS);
    table.add_metadata("calibration_runs", calibration_runs.to_string());
    for gbar_s in &cfg.gbar_s {
        let link = LinkParams {
            gbar_s: gbar_s.linear,
            ..cfg.link
        };
        let snr = AverageSnrs {
            gbar_s: link.gbar_s,
            gbar_sp: link.gbar_sp,
            gbar_ps: link.gbar_ps,
            gbar_p: link.gbar_p,
        };
        for (scenario, rab) in capacity_curves(cfg)? {
            let system = scenario.system(&link)?;
            let rab_system = rab
                .map(|c| RabSystem::new(c, &system, cfg.seed))
                .transpose()?;
            let sampler: &dyn TripleSampler = match &rab_system {
                Some(r) => r,
                None => &system,
            };
            let (m_t, m_r, mode) = rab_label(rab.as_ref());
            for &rho in &cfg.rho {
                for q_av in &cfg.q_av {
                    let constraints = InterferenceConstraints::from_rho(q_av.linear, rho)?;
                    let policy = solve_lambda(sampler, constraints, calibration_runs, cfg.seed)?;
                    let cap = ergodic_capacity_mc(sampler, &policy, cfg.runs, cfg.seed);
                    table.push(vec![
                        q_av.db.into(),
                        scenario.label().into(),
                        rho.into(),
                        cap.mean.into(),
                        cap.std_err.into(),
                        gbar_s.db.into(),
                        m_t.into(),
                        m_r.into(),
                        mode.into(),
                        awgn_capacity(q_av.linear, &snr).into(),
                        policy.lambda.into(),
                    ])?;
                }
            }
        }
    }
    Ok(table)
}

fn scaling(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let mut table = ResultTable::new([
        "n",
        "scenario",
        "rab_mt",
        "rab_mr",
        "norm_capacity",
        "norm_by_logN",
        "norm_by_loglogN",
        "std_err",
        "capacity_bps_hz",
    ]);
    let mut curves: Vec<(Scenario, Option<RabConfig>)> =
        cfg.scenarios.iter().map(|&s| (s, None)).collect();
    for &s in &cfg.rab.scenarios {
        curves.push((s, Some(cfg.rab.config(s, cfg.rab.m_t, cfg.rab.m_r)?)));
    }
    for (scenario, rab) in curves {
        let setup = ScalingSetup {
            scenario,
            params: cfg.link,
            q_p: cfg.q_p.linear,
            rab,
        };
        let (m_t, m_r, _) = rab_label(rab.as_ref());
        for p in capacity_scaling_experiment(&setup, &cfg.n_list, cfg.runs, cfg.seed)? {
            table.push(vec![
                p.n.into(),
                scenario.label().into(),
                m_t.into(),
                m_r.into(),
                p.norm_capacity.into(),
                p.norm_by_log_n.into(),
                p.norm_by_log_log_n.into(),
                p.std_err.into(),
                p.capacity.into(),
            ])?;
        }
    }
    Ok(table)
}

/// Bin counts over `[0, max)`; values outside are counted separately.
#[derive(Debug, Clone)]
struct Histogram {
    counts: Vec<u64>,
    outside: u64,
}

impl Histogram {
    fn new(bins: usize) -> Self {
        Self {
            counts: vec![0; bins],
            outside: 0,
        }
    }

    fn add(&mut self, x: f64, max: f64) {
        let bins = self.counts.len();
        let i = (x / max * bins as f64).floor();
        if i >= 0.0 && (i as usize) < bins {
            self.counts[i as usize] += 1;
        } else {
            self.outside += 1;
        }
    }
}

impl Merge for Histogram {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.outside += other.outside;
    }
}

fn density_columns() -> [&'static str; 6] {
    [
        "series",
        "patterns",
        "magnitude",
        "density",
        "rayleigh_density",
        "fraction_outside_range",
    ]
}

/// Appends one histogram as density rows, with the Rayleigh envelope
/// density of the same mean square for reference (bin-averaged).
fn push_density(
    table: &mut ResultTable,
    series: &str,
    patterns: usize,
    h: &Histogram,
    max: f64,
    mean_square: f64,
) -> Result<(), HarnessError> {
    let total = (h.counts.iter().sum::<u64>() + h.outside) as f64;
    let width = max / h.counts.len() as f64;
    for (i, &c) in h.counts.iter().enumerate() {
        let (lo, hi) = (i as f64 * width, (i + 1) as f64 * width);
        let reference = (rayleigh_envelope_cdf(hi, mean_square)
            - rayleigh_envelope_cdf(lo, mean_square))
            / width;
        table.push(vec![
            series.into(),
            patterns.into(),
            (0.5 * (lo + hi)).into(),
            (c as f64 / (total * width)).into(),
            reference.into(),
            (h.outside as f64 / total).into(),
        ])?;
    }
    Ok(())
}

fn artificial_fading(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let mut table = ResultTable::new(density_columns());
    let unit = DVector::from_element(1, Complex64::new(1.0, 0.0));
    let spec = ChannelSpec::awgn(1.0);
    for &m in &cfg.patterns {
        let mut geo = substream(cfg.seed, domain::GEOMETRY + m as u64);
        let los = LosBeamspaceMatrix::random(1, m, 1.0, &mut geo)?;
        let hist = par::reduce_chunks(
            cfg.runs,
            cfg.seed,
            domain::EVALUATION,
            || Histogram::new(cfg.bins),
            |rng, range, acc| {
                for _ in range {
                    let w_t = draw_weights(m, rng);
                    let u = artificial_fading_component(&spec, &los, &unit, &w_t)
                        .expect("shapes match");
                    acc.add(u.norm(), cfg.max_magnitude);
                }
            },
        );
        push_density(
            &mut table,
            "artificial_fading",
            m,
            &hist,
            cfg.max_magnitude,
            1.0,
        )?;
    }
    Ok(table)
}

fn rab_distribution(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let mut table = ResultTable::new(density_columns());
    let system = Scenario::RicianRician.system(&cfg.link)?;
    // Fig. 10 looks at the SU→PU link with transmit-side RAB only; Fig. 12
    // at the SU→SU link with both ends, random vs matched receive phases.
    let (modes, su_su): (&[ReceiveMode], bool) = match cfg.figure {
        Figure::Fig12 => (&[ReceiveMode::Random, ReceiveMode::Smart], true),
        _ => (&[ReceiveMode::Random], false),
    };
    for &m in &cfg.patterns {
        for &mode in modes {
            let m_r = if su_su { m } else { 1 };
            let rab = RabConfig::new(m, m_r, mode)?.with_scatterers(cfg.rab.scatterers);
            let sys = RabSystem::new(rab, &system, cfg.seed)?;
            let hist = par::reduce_chunks(
                cfg.runs,
                cfg.seed,
                domain::EVALUATION,
                || Histogram::new(cfg.bins),
                |rng, range, acc| {
                    for _ in range {
                        let slot = sys.sample_slot(rng);
                        acc.add(
                            if su_su {
                                slot.h_s.norm()
                            } else {
                                slot.h_sp.norm()
                            },
                            cfg.max_magnitude,
                        );
                    }
                },
            );
            let (series, gbar) = if su_su {
                (
                    if mode == ReceiveMode::Smart {
                        "su_su_smart"
                    } else {
                        "su_su_random"
                    },
                    cfg.link.gbar_s,
                )
            } else {
                ("su_pu", cfg.link.gbar_sp)
            };
            push_density(&mut table, series, m, &hist, cfg.max_magnitude, gbar)?;
        }
    }
    Ok(table)
}

fn time_series(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let mut table = ResultTable::new(["slot", "los_magnitude", "rab_magnitude"]);
    let system: SystemSpec = Scenario::RicianRician.system(&cfg.link)?;
    let rab =
        RabConfig::new(cfg.rab.m_t, 1, ReceiveMode::Random)?.with_scatterers(cfg.rab.scatterers);
    let sys = RabSystem::new(rab, &system, cfg.seed)?;
    let mut plain = substream(cfg.seed, domain::EVALUATION);
    let mut with_rab = substream(cfg.seed, domain::EVALUATION + 1);
    for slot in 0..cfg.slots {
        let before = crate::channels::sample_rician(&system.su_pu, &mut plain).norm();
        let after = sys.sample_slot(&mut with_rab).h_sp.norm();
        table.push(vec![slot.into(), before.into(), after.into()])?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(figure: Figure, extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            "[experiment]\nid = \"{}\"\nruns = 2000\n{extra}",
            figure.id()
        ))
        .unwrap()
    }

    #[test]
    fn every_figure_runs_small() {
        for f in Figure::ALL {
            let extra = match f.kind() {
                ExperimentKind::CapacitySweep => "[sweep]\nq_av_db = [0.0]\n",
                ExperimentKind::Scaling => "[sweep]\nn_list = [1, 2, 4]\n",
                _ => "",
            };
            let t = run_experiment(&small(f, extra)).unwrap();
            assert!(!t.rows().is_empty(), "{f}");
            assert!(t.metadata().iter().any(|(k, v)| k == "seed" && v == "1"));
        }
    }

    #[test]
    fn output_is_thread_count_independent() {
        let cfg = small(
            Figure::Fig8,
            "[sweep]\nq_av_db = [0.0, 4.0]\nscenarios = [\"rayleigh-rayleigh\"]\n",
        );
        let a = par::with_threads(1, || run_experiment(&cfg).unwrap());
        let b = par::with_threads(3, || run_experiment(&cfg).unwrap());
        assert_eq!(a.body_string(), b.body_string());
    }

    #[test]
    fn densities_integrate_to_one() {
        let t = run_experiment(&small(Figure::Fig7, "")).unwrap();
        let d = t.numeric_column("density").unwrap();
        let out = t.numeric_column("fraction_outside_range").unwrap();
        let width = 3.2 / 60.0;
        for (chunk, o) in d.chunks(60).zip(out.iter().step_by(60)) {
            let mass: f64 = chunk.iter().sum::<f64>() * width + o;
            assert!((mass - 1.0).abs() < 1e-9, "{mass}");
        }
    }

    #[test]
    fn invalid_rho_is_a_config_error() {
        let e = ExperimentConfig::from_toml("[experiment]\nid = \"fig8\"\n[sweep]\nrho = [0.9]\n")
            .unwrap_err();
        assert_eq!(HarnessError::from(e).exit_code(), 2);
    }
}
