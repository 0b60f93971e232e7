//! Run configuration: a single JSON document with every default
//! materialized, echoed verbatim into the manifest.

use brakeorb_core::{MinimizeConfig, PotentialSpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Connection,
    Brake,
    Strip,
    #[serde(alias = "sweepT")]
    SweepT,
    #[serde(alias = "sweepL")]
    SweepL,
    Verify,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub extent: f64,
    pub h: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { extent: 12.0, h: 0.01 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BrakeConfig {
    pub t_period: f64,
    pub h: f64,
    /// Confinement level for the reported entry time.
    pub q_band: f64,
}

impl Default for BrakeConfig {
    fn default() -> Self {
        Self {
            t_period: 40.0,
            h: 0.01,
            q_band: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepTConfig {
    pub t_list: Vec<f64>,
    pub h: f64,
    /// Half-width of the comparison window around t = 0.
    pub window: f64,
}

impl Default for SweepTConfig {
    fn default() -> Self {
        Self {
            t_list: vec![20.0, 40.0, 80.0],
            h: 0.01,
            window: 5.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct StripConfig {
    pub period_l: f64,
    pub y_extent: f64,
    pub hx: f64,
    pub hy: f64,
    /// Sup-norm ball as a multiple of the minima radius.
    pub ball_factor: f64,
    /// Distance threshold for unambiguous fiber decompositions;
    /// 0 means calibrate from the connection.
    pub qbar: f64,
}

impl Default for StripConfig {
    fn default() -> Self {
        Self {
            period_l: 40.0,
            y_extent: 10.0,
            hx: 0.1,
            hy: 0.1,
            ball_factor: 3.0,
            qbar: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepLConfig {
    pub l_list: Vec<f64>,
    pub y_extent: f64,
    pub hx: f64,
    pub hy: f64,
    pub ball_factor: f64,
    pub qbar: f64,
}

impl Default for SweepLConfig {
    fn default() -> Self {
        Self {
            l_list: vec![20.0, 40.0, 80.0],
            y_extent: 10.0,
            hx: 0.1,
            hy: 0.1,
            ball_factor: 3.0,
            qbar: 0.0,
        }
    }
}

fn default_potential() -> PotentialSpec {
    PotentialSpec::ScalarQuartic
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_potential")]
    pub potential: PotentialSpec,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub out_dir: Option<String>,
    /// Field file to re-check (mode = verify).
    #[serde(default)]
    pub field_path: Option<String>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub brake: BrakeConfig,
    #[serde(default)]
    pub sweep_t: SweepTConfig,
    #[serde(default)]
    pub strip: StripConfig,
    #[serde(default)]
    pub sweep_l: SweepLConfig,
    #[serde(default)]
    pub minimize: MinimizeConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
