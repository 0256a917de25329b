//! Default parameters of each figure preset.

use super::config::{Figure, RawChannel, RawConfig, RawExperiment, RawRab, RawSweep};

fn strings(v: &[&str]) -> Option<Vec<String>> {
    Some(v.iter().map(|s| s.to_string()).collect())
}

/// Average-interference grid, -10 dB to 20 dB in 2 dB steps.
pub fn default_q_av_db() -> Vec<f64> {
    (0..16).map(|i| -10.0 + 2.0 * i as f64).collect()
}

/// `N = 1, 2, 4, …, 512`.
pub fn default_n_list() -> Vec<usize> {
    (0..10).map(|i| 1usize << i).collect()
}

fn base(figure: Figure) -> RawConfig {
    RawConfig {
        experiment: RawExperiment {
            id: figure.id().to_string(),
            seed: Some(1),
            runs: Some(100_000),
            output_path: None,
        },
        channel: RawChannel {
            k_db: Some(10.0),
            gbar_s_db: Some(0.0),
            gbar_sp_db: Some(0.0),
            gbar_ps_db: Some(0.0),
            gbar_p_db: Some(10.0),
        },
        sweep: RawSweep {
            scenarios: strings(&[
                "awgn",
                "rician-rician",
                "rician-rayleigh",
                "rayleigh-rayleigh",
                "rayleigh-rician",
            ]),
            q_av_db: Some(default_q_av_db()),
            rho: Some(vec![f64::INFINITY, 1.2]),
            gbar_s_db: Some(vec![0.0]),
            q_p_db: Some(0.0),
            n_list: Some(default_n_list()),
            patterns: Some(vec![1, 2, 3, 5]),
            bins: Some(60),
            max_magnitude: Some(3.0),
            slots: Some(200),
        },
        rab: RawRab {
            scenarios: Some(Vec::new()),
            m_t: Some(2),
            m_r: Some(2),
            receive_mode: Some("auto".into()),
            scatterers: Some("gaussian".into()),
            scatterer_count: Some(20),
        },
    }
}

/// Fully populated preset for `figure`.
pub fn preset(figure: Figure) -> RawConfig {
    let mut c = base(figure);
    let s = &mut c.sweep;
    let r = &mut c.rab;
    match figure {
        Figure::Fig7 => {
            s.patterns = Some(vec![2, 3, 5, 10]);
            s.max_magnitude = Some(3.2);
        }
        Figure::Fig8 => {}
        Figure::Fig9 => {
            s.scenarios = strings(&["rayleigh-rician"]);
            s.gbar_s_db = Some(vec![0.0, 10.0, 20.0]);
            s.rho = Some(vec![f64::INFINITY]);
        }
        Figure::Fig10 => {
            s.patterns = Some(vec![1, 2, 3, 5]);
            r.scatterers = Some("discrete".into());
        }
        Figure::Fig11 => {
            r.m_t = Some(5);
            r.m_r = Some(1);
            r.scatterers = Some("discrete".into());
        }
        Figure::Fig12 => {
            s.patterns = Some(vec![2, 4]);
        }
        Figure::Fig13 => {
            s.scenarios = strings(&["rician-rician", "rician-rayleigh", "rayleigh-rayleigh"]);
            s.q_av_db = Some(vec![0.0]);
            s.rho = Some(vec![f64::INFINITY]);
            s.patterns = Some(vec![1, 2, 3, 4, 5]);
            r.scenarios = strings(&["rician-rayleigh", "rician-rician"]);
        }
        Figure::Fig14 => {
            s.scenarios = strings(&[
                "rayleigh-rayleigh",
                "rician-rayleigh",
                "rician-rician",
                "rayleigh-rician",
            ]);
        }
        Figure::Fig15 => {
            s.scenarios = strings(&["rayleigh-rayleigh"]);
            r.scenarios = strings(&["rician-rayleigh", "rician-rician"]);
        }
        Figure::Fig16 => {
            s.scenarios = strings(&["rayleigh-rayleigh", "rician-rayleigh"]);
            r.scenarios = strings(&["rician-rayleigh"]);
        }
    }
    c
}
