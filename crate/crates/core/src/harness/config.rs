//! Experiment configuration files.
//!
//! A config is a TOML document with an `[experiment]` header naming one of
//! the figure presets and optional `[channel]`, `[sweep]` and `[rab]`
//! sections that override the preset field by field. All dB quantities are
//! converted to linear units once, in [`ExperimentConfig::resolve`].
//!
//! ```toml
//! [experiment]
//! id = "fig8"
//! seed = 7
//! runs = 20000
//!
//! [sweep]
//! q_av_db = [0.0, 5.0, 10.0]
//! rho = [inf, 1.2]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channels::{LinkParams, Scenario};
use crate::rab::{RabConfig, ReceiveMode, ScattererModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid {field}: {detail}")]
    Invalid { field: String, detail: String },
    #[error("unknown experiment id {0:?} (see list-figures)")]
    UnknownExperiment(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub(crate) fn invalid(field: &str, detail: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        detail: detail.to_string(),
    }
}

/// Smallest accepted Monte Carlo run count.
pub const MIN_RUNS: usize = 1_000;

/// Figure presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Figure {
    Fig7,
    Fig8,
    Fig9,
    Fig10,
    Fig11,
    Fig12,
    Fig13,
    Fig14,
    Fig15,
    Fig16,
}

impl Figure {
    pub const ALL: [Figure; 10] = [
        Figure::Fig7,
        Figure::Fig8,
        Figure::Fig9,
        Figure::Fig10,
        Figure::Fig11,
        Figure::Fig12,
        Figure::Fig13,
        Figure::Fig14,
        Figure::Fig15,
        Figure::Fig16,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Figure::Fig7 => "fig7",
            Figure::Fig8 => "fig8",
            Figure::Fig9 => "fig9",
            Figure::Fig10 => "fig10",
            Figure::Fig11 => "fig11",
            Figure::Fig12 => "fig12",
            Figure::Fig13 => "fig13",
            Figure::Fig14 => "fig14",
            Figure::Fig15 => "fig15",
            Figure::Fig16 => "fig16",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Figure::Fig7 => "density of the artificial fading magnitude for several basis-pattern counts",
            Figure::Fig8 => "ergodic capacity vs average interference cap, all fading scenarios, rho in {inf, 1.2}",
            Figure::Fig9 => "Rayleigh-Rician capacity normalised by AWGN capacity for several SU-SU SNRs",
            Figure::Fig10 => "density of the SU-PU channel magnitude after RAB for several pattern counts",
            Figure::Fig11 => "SU-PU channel magnitude over time with and without RAB",
            Figure::Fig12 => "density of the SU-SU channel magnitude after RAB, random vs matched receive phases",
            Figure::Fig13 => "capacity vs number of basis patterns with RAB",
            Figure::Fig14 => "normalised sum capacity vs number of SU pairs, no RAB",
            Figure::Fig15 => "normalised sum capacity vs number of SU pairs with RAB",
            Figure::Fig16 => "sum capacity normalised by ln N and ln ln N",
        }
    }

    pub fn kind(self) -> ExperimentKind {
        match self {
            Figure::Fig8 | Figure::Fig9 | Figure::Fig13 => ExperimentKind::CapacitySweep,
            Figure::Fig14 | Figure::Fig15 | Figure::Fig16 => ExperimentKind::Scaling,
            Figure::Fig7 => ExperimentKind::ArtificialFading,
            Figure::Fig10 | Figure::Fig12 => ExperimentKind::RabDistribution,
            Figure::Fig11 => ExperimentKind::TimeSeries,
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Figure {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        Figure::ALL
            .into_iter()
            .find(|f| f.id() == key)
            .ok_or_else(|| ConfigError::UnknownExperiment(s.to_string()))
    }
}

/// Pipeline a figure runs through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    CapacitySweep,
    Scaling,
    ArtificialFading,
    RabDistribution,
    TimeSeries,
}

/// A level given in dB together with its linear value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub db: f64,
    pub linear: f64,
}

impl Level {
    pub fn from_db(db: f64) -> Self {
        Self {
            db,
            linear: db_to_linear(db),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExperiment {
    pub id: String,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub output_path: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChannel {
    pub k_db: Option<f64>,
    pub gbar_s_db: Option<f64>,
    pub gbar_sp_db: Option<f64>,
    pub gbar_ps_db: Option<f64>,
    pub gbar_p_db: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub scenarios: Option<Vec<String>>,
    pub q_av_db: Option<Vec<f64>>,
    pub rho: Option<Vec<f64>>,
    pub gbar_s_db: Option<Vec<f64>>,
    pub q_p_db: Option<f64>,
    pub n_list: Option<Vec<usize>>,
    pub patterns: Option<Vec<usize>>,
    pub bins: Option<usize>,
    pub max_magnitude: Option<f64>,
    pub slots: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRab {
    pub scenarios: Option<Vec<String>>,
    pub m_t: Option<usize>,
    pub m_r: Option<usize>,
    /// "random", "smart" or "auto" (smart when the SU→SU link is Rician).
    pub receive_mode: Option<String>,
    /// "gaussian" or "discrete".
    pub scatterers: Option<String>,
    pub scatterer_count: Option<usize>,
}

/// The file format, before presets are applied.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: RawExperiment,
    #[serde(default)]
    pub channel: RawChannel,
    #[serde(default)]
    pub sweep: RawSweep,
    #[serde(default)]
    pub rab: RawRab,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &RawConfig) -> Self {
        overlay!(self.experiment, top.experiment, seed, runs, output_path);
        overlay!(
            self.channel,
            top.channel,
            k_db,
            gbar_s_db,
            gbar_sp_db,
            gbar_ps_db,
            gbar_p_db
        );
        overlay!(
            self.sweep,
            top.sweep,
            scenarios,
            q_av_db,
            rho,
            gbar_s_db,
            q_p_db,
            n_list,
            patterns,
            bins,
            max_magnitude,
            slots
        );
        overlay!(
            self.rab,
            top.rab,
            scenarios,
            m_t,
            m_r,
            receive_mode,
            scatterers,
            scatterer_count
        );
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config structs always serialise")
    }
}

/// How the RAB receiver chooses its phases in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceivePolicy {
    Fixed(ReceiveMode),
    /// Matched phases when the SU→SU link has a LoS part, random otherwise.
    Auto,
}

impl ReceivePolicy {
    pub fn mode_for(self, scenario: Scenario) -> ReceiveMode {
        match self {
            ReceivePolicy::Fixed(m) => m,
            ReceivePolicy::Auto => match scenario {
                Scenario::RicianRician | Scenario::RayleighRician | Scenario::Awgn => {
                    ReceiveMode::Smart
                }
                Scenario::RicianRayleigh | Scenario::RayleighRayleigh => ReceiveMode::Random,
            },
        }
    }
}

/// RAB settings shared by all RAB curves of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RabSettings {
    pub scenarios: Vec<Scenario>,
    pub m_t: usize,
    pub m_r: usize,
    pub receive: ReceivePolicy,
    pub scatterers: ScattererModel,
}

impl RabSettings {
    /// RAB config for `scenario` with pattern counts `(m_t, m_r)`.
    pub fn config(
        &self,
        scenario: Scenario,
        m_t: usize,
        m_r: usize,
    ) -> Result<RabConfig, ConfigError> {
        Ok(RabConfig::new(m_t, m_r, self.receive.mode_for(scenario))
            .map_err(|e| invalid("rab.m_t", e))?
            .with_scatterers(self.scatterers))
    }
}

/// A validated experiment with every quantity in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub figure: Figure,
    pub seed: u64,
    pub runs: usize,
    pub output_path: Option<PathBuf>,
    pub link: LinkParams,
    pub scenarios: Vec<Scenario>,
    pub q_av: Vec<Level>,
    pub rho: Vec<f64>,
    pub gbar_s: Vec<Level>,
    pub q_p: Level,
    pub n_list: Vec<usize>,
    pub patterns: Vec<usize>,
    pub bins: usize,
    pub max_magnitude: f64,
    pub slots: usize,
    pub rab: RabSettings,
    /// The merged file the config was resolved from.
    pub source: RawConfig,
}

fn scenarios(names: &[String], field: &str) -> Result<Vec<Scenario>, ConfigError> {
    names
        .iter()
        .map(|s| s.parse().map_err(|e| invalid(field, e)))
        .collect()
}

fn need<T: Clone>(v: &Option<T>, field: &str) -> Result<T, ConfigError> {
    v.clone().ok_or_else(|| invalid(field, "missing"))
}

fn finite(v: f64, field: &str) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, v))
    }
}

impl ExperimentConfig {
    /// Preset for `figure`, unmodified.
    pub fn preset(figure: Figure) -> Self {
        Self::resolve(super::presets::preset(figure)).expect("presets are valid")
    }

    /// Parses a config file body, applying it on top of its figure preset.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let user = RawConfig::parse(text)?;
        let figure: Figure = user.experiment.id.parse()?;
        Self::resolve(super::presets::preset(figure).overlay(&user))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Validates a fully populated raw config and converts units.
    pub fn resolve(raw: RawConfig) -> Result<Self, ConfigError> {
        let figure: Figure = raw.experiment.id.parse()?;
        let seed = need(&raw.experiment.seed, "experiment.seed")?;
        let runs = need(&raw.experiment.runs, "experiment.runs")?;
        if runs < MIN_RUNS {
            return Err(invalid(
                "experiment.runs",
                format!("{runs} is below {MIN_RUNS}"),
            ));
        }

        let c = &raw.channel;
        let db = |v: &Option<f64>, field: &str| -> Result<f64, ConfigError> {
            Ok(db_to_linear(finite(need(v, field)?, field)?))
        };
        let link = LinkParams {
            k_factor: db(&c.k_db, "channel.k_db")?,
            gbar_s: db(&c.gbar_s_db, "channel.gbar_s_db")?,
            gbar_sp: db(&c.gbar_sp_db, "channel.gbar_sp_db")?,
            gbar_ps: db(&c.gbar_ps_db, "channel.gbar_ps_db")?,
            gbar_p: db(&c.gbar_p_db, "channel.gbar_p_db")?,
            los_phases: [0.0; 3],
        };

        let s = &raw.sweep;
        let levels = |v: &Option<Vec<f64>>, field: &str| -> Result<Vec<Level>, ConfigError> {
            need(v, field)?
                .into_iter()
                .map(|x| finite(x, field).map(Level::from_db))
                .collect()
        };
        let rho = need(&s.rho, "sweep.rho")?;
        if let Some(bad) = rho.iter().find(|r| r.is_nan() || **r < 1.0) {
            return Err(invalid(
                "sweep.rho",
                format!("{bad}: the peak cap must not be below the average cap"),
            ));
        }
        let n_list = need(&s.n_list, "sweep.n_list")?;
        if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(
                "sweep.n_list",
                "must be strictly ascending positive integers",
            ));
        }
        let patterns = need(&s.patterns, "sweep.patterns")?;
        if patterns.contains(&0) {
            return Err(invalid("sweep.patterns", "pattern counts must be positive"));
        }
        let bins = need(&s.bins, "sweep.bins")?;
        if bins == 0 {
            return Err(invalid("sweep.bins", 0));
        }
        let max_magnitude = need(&s.max_magnitude, "sweep.max_magnitude")?;
        if !(max_magnitude > 0.0) || !max_magnitude.is_finite() {
            return Err(invalid("sweep.max_magnitude", max_magnitude));
        }

        let r = &raw.rab;
        let receive = match need(&r.receive_mode, "rab.receive_mode")?.as_str() {
            "random" => ReceivePolicy::Fixed(ReceiveMode::Random),
            "smart" => ReceivePolicy::Fixed(ReceiveMode::Smart),
            "auto" => ReceivePolicy::Auto,
            other => {
                return Err(invalid(
                    "rab.receive_mode",
                    format!("{other:?} (expected random, smart or auto)"),
                ))
            }
        };
        let scatterers = match need(&r.scatterers, "rab.scatterers")?.as_str() {
            "gaussian" => ScattererModel::Gaussian,
            "discrete" => ScattererModel::Discrete {
                count: need(&r.scatterer_count, "rab.scatterer_count")?.max(1),
            },
            other => {
                return Err(invalid(
                    "rab.scatterers",
                    format!("{other:?} (expected gaussian or discrete)"),
                ))
            }
        };
        let (m_t, m_r) = (need(&r.m_t, "rab.m_t")?, need(&r.m_r, "rab.m_r")?);
        if m_t == 0 || m_r == 0 {
            return Err(invalid("rab.m_t", format!("{m_t}x{m_r}")));
        }

        Ok(Self {
            figure,
            seed,
            runs,
            output_path: raw.experiment.output_path.as_ref().map(PathBuf::from),
            link,
            scenarios: scenarios(&need(&s.scenarios, "sweep.scenarios")?, "sweep.scenarios")?,
            q_av: levels(&s.q_av_db, "sweep.q_av_db")?,
            rho,
            gbar_s: levels(&s.gbar_s_db, "sweep.gbar_s_db")?,
            q_p: Level::from_db(finite(need(&s.q_p_db, "sweep.q_p_db")?, "sweep.q_p_db")?),
            n_list,
            patterns,
            bins,
            max_magnitude,
            slots: need(&s.slots, "sweep.slots")?,
            rab: RabSettings {
                scenarios: scenarios(&need(&r.scenarios, "rab.scenarios")?, "rab.scenarios")?,
                m_t,
                m_r,
                receive,
                scatterers,
            },
            source: raw,
        })
    }

    /// Same experiment with a different seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.source.experiment.seed = Some(seed);
        self
    }

    /// Same experiment with a different run count.
    pub fn with_runs(mut self, runs: usize) -> Result<Self, ConfigError> {
        if runs < MIN_RUNS {
            return Err(invalid("runs", format!("{runs} is below {MIN_RUNS}")));
        }
        self.runs = runs;
        self.source.experiment.runs = Some(runs);
        Ok(self)
    }

    pub fn with_output(mut self, path: PathBuf) -> Self {
        self.source.experiment.output_path = Some(path.display().to_string());
        self.output_path = Some(path);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_resolves() {
        for f in Figure::ALL {
            let cfg = ExperimentConfig::preset(f);
            assert_eq!(cfg.figure, f);
            assert!(cfg.runs >= MIN_RUNS);
        }
    }

    #[test]
    fn fig8_preset_matches_parameter_block() {
        let cfg = ExperimentConfig::preset(Figure::Fig8);
        assert_eq!(cfg.link.gbar_s, 1.0);
        assert_eq!(cfg.link.gbar_sp, 1.0);
        assert_eq!(cfg.link.gbar_ps, 1.0);
        assert_eq!(cfg.link.gbar_p, 10.0);
        assert_eq!(cfg.link.k_factor, 10.0);
        assert_eq!(cfg.rho, vec![f64::INFINITY, 1.2]);
        assert_eq!(cfg.q_av.len(), 16);
        assert_eq!(cfg.q_av[0].db, -10.0);
        assert_eq!(cfg.q_av[15].db, 20.0);
    }

    #[test]
    fn overrides_apply_and_convert_once() {
        let cfg = ExperimentConfig::from_toml(
            "[experiment]\nid = \"fig8\"\nruns = 2000\n[channel]\ngbar_p_db = 20\n[sweep]\nq_av_db = [3.0]\nrho = [inf]\n",
        )
        .unwrap();
        assert_eq!(cfg.runs, 2000);
        assert!((cfg.link.gbar_p - 100.0).abs() < 1e-12);
        assert!((cfg.q_av[0].linear - 1.995_262_314_968_879_5).abs() < 1e-12);
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn bad_fields_are_named() {
        let cases = [
            (
                "[experiment]\nid = \"fig8\"\n[sweep]\nrho = [0.5]\n",
                "sweep.rho",
            ),
            (
                "[experiment]\nid = \"fig8\"\nruns = 10\n",
                "experiment.runs",
            ),
            (
                "[experiment]\nid = \"fig14\"\n[sweep]\nn_list = [4, 2]\n",
                "sweep.n_list",
            ),
            (
                "[experiment]\nid = \"fig8\"\n[sweep]\nscenarios = [\"foggy\"]\n",
                "sweep.scenarios",
            ),
            (
                "[experiment]\nid = \"fig13\"\n[rab]\nreceive_mode = \"psychic\"\n",
                "rab.receive_mode",
            ),
        ];
        for (text, field) in cases {
            match ExperimentConfig::from_toml(text) {
                Err(ConfigError::Invalid { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            ExperimentConfig::from_toml("[experiment]\nid = \"fig99\"\n"),
            Err(ConfigError::UnknownExperiment(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml("[experiment]\nid = \"fig8\"\nbogus = 1\n"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::preset(Figure::Fig8);
        let again = ExperimentConfig::from_toml(&cfg.source.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }
}
