//! Built-in configurations for the figure reproductions.
//!
//! `smoke` keeps each figure within about ten minutes on one core, except
//! fig7b, whose trajectory estimator needs roughly ten minutes per seed.
//! `desk` uses more seeds and data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentId, Sizes, TrainSettings};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig5,
    Fig6b,
    Fig7b,
    Fig9b,
    Fig10b,
}

impl Figure {
    pub const ALL: [Figure; 5] = [Self::Fig5, Self::Fig6b, Self::Fig7b, Self::Fig9b, Self::Fig10b];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fig5 => "fig5",
            Self::Fig6b => "fig6b",
            Self::Fig7b => "fig7b",
            Self::Fig9b => "fig9b",
            Self::Fig10b => "fig10b",
        }
    }

    pub fn experiment(self) -> ExperimentId {
        match self {
            Self::Fig5 => ExperimentId::AoaAblation,
            Self::Fig6b => ExperimentId::TapMse,
            Self::Fig7b => ExperimentId::ParamNmse,
            Self::Fig9b => ExperimentId::CsiSweep,
            Self::Fig10b => ExperimentId::GanMeta,
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| Error::UnknownExperiment(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Smoke,
    Desk,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Self::Smoke),
            "desk" => Ok(Self::Desk),
            _ => Err(Error::config(format!("unknown profile `{s}` (smoke | desk)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Smoke => "smoke",
            Self::Desk => "desk",
        })
    }
}

/// The figure's configuration with seeds `base_seed, base_seed + 1, …`.
pub fn figure_config(figure: Figure, profile: Profile, base_seed: u64) -> ExperimentConfig {
    let desk = profile == Profile::Desk;
    let mut sizes = Sizes::default();
    let mut train = TrainSettings::default();
    let (snr_grid_db, seed_count) = match figure {
        Figure::Fig5 => {
            // one array element per grid angle keeps the detector small
            sizes.g = 16;
            if desk {
                train.aoa.train_samples = 4000;
                train.aoa.ensemble = 5;
                train.aoa.epochs = 60;
                train.aoa.test_samples = 2000;
            }
            (vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0], if desk { 10 } else { 5 })
        }
        Figure::Fig6b => {
            if desk {
                train.tap.train_samples = 30_000;
                train.tap.hidden = vec![384, 384];
                train.tap.epochs = 40;
                train.tap.test_samples = 2000;
            }
            (vec![10.0, 15.0, 20.0, 25.0, 30.0], if desk { 5 } else { 3 })
        }
        Figure::Fig7b => {
            if desk {
                train.param.train_sequences = 6000;
                train.param.test_sequences = 1000;
            }
            (vec![10.0], if desk { 5 } else { 3 })
        }
        Figure::Fig9b => {
            if desk {
                train.csi.train_samples = 20_000;
                train.csi.test_samples = 5000;
            }
            (vec![20.0], if desk { 5 } else { 3 })
        }
        Figure::Fig10b => {
            if desk {
                train.gan.meta_iterations = 6000;
                train.gan.test_samples = 5000;
            }
            (vec![10.0], if desk { 10 } else { 5 })
        }
    };
    ExperimentConfig {
        experiment: figure.experiment(),
        snr_grid_db,
        seeds: (base_seed..base_seed + seed_count).collect(),
        sizes,
        train,
        output: Some(format!("{figure}.csv").into()),
    }
}
