//! JSON job configuration.
//!
//! ```json
//! {
//!   "inputs": {
//!     "density": ["density_0000.volf"],
//!     "velocity": ["velocity_0000.volf"],
//!     "style": "builtin:fire"
//!   },
//!   "render": { "gamma": 1.0, "steps": 64, "r_max": 1.0, "views_deg": [0.0] },
//!   "features": { "layers": ["relu2_1", "relu3_1"], "tiles": 1, "beta": 1.0 },
//!   "optimize": { "iterations": 300, "window": 1, "seed": 0 },
//!   "export": { "output_dir": "out" }
//! }
//! ```
//!
//! Instead of `density` files, `inputs.procedural` may describe generated
//! smoke: `{"kind": "plume", "dims": [32, 32], "frames": 4, "seed": 0}`.
//! Relative paths resolve against the directory holding the config file.
//! Every section other than `inputs` may be omitted.

use serde::{Deserialize, Serialize};

use smokestyle_core::{
    Dims, Layer, LossWeights, RenderSettings, StylizationConfig, TemporalWindow, ViewAngle,
};

use crate::procedural::SmokeKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub inputs: Inputs,
    #[serde(default)]
    pub render: RenderSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub export: ExportSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// One VOLF density file per frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<String>>,
    /// One VOLF velocity file per frame carrying it to the next; zero
    /// velocities when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub procedural: Option<Procedural>,
    /// PNG path or `builtin:<name>`.
    pub style: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Procedural {
    pub kind: SmokeKind,
    pub dims: Vec<usize>,
    #[serde(default = "one")]
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub gamma: f64,
    pub steps: usize,
    pub r_max: f64,
    /// Output `[width, height]`; the grid's x/y face when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[usize; 2]>,
    /// View angles about the vertical axis, in degrees.
    pub views_deg: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view_weights: Option<Vec<f64>>,
}

impl Default for RenderSection {
    fn default() -> Self {
        let r = RenderSettings::default();
        Self {
            gamma: r.gamma,
            steps: r.steps,
            r_max: r.r_max,
            resolution: None,
            views_deg: vec![0.0],
            view_weights: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub layers: Vec<String>,
    /// Equal weights when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer_weights: Option<Vec<f64>>,
    pub tiles: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            layers: vec!["relu2_1".into(), "relu3_1".into()],
            layer_weights: None,
            tiles: 1,
            alpha: 0.0,
            beta: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub iterations: usize,
    /// 0.5 for 2D and 1.0 for 3D when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    pub window: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_weights: Option<Vec<f64>>,
    pub seed: u64,
    pub dt: f64,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self {
            iterations: 300,
            learning_rate: None,
            window: 1,
            window_weights: None,
            seed: 0,
            dt: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    pub output_dir: String,
    pub png: bool,
    pub volf: bool,
    pub loss_csv: bool,
    /// Dump a render and the loss every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for ExportSection {
    fn default() -> Self {
        Self {
            output_dir: "out".into(),
            png: true,
            volf: true,
            loss_csv: true,
            checkpoint_every: 0,
        }
    }
}

impl JobConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let config: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        match (&config.inputs.density, &config.inputs.procedural) {
            (Some(_), Some(_)) => Err("inputs.density and inputs.procedural are exclusive".into()),
            (None, None) => Err("inputs needs density files or a procedural source".into()),
            (Some(d), None) if d.is_empty() => Err("inputs.density is empty".into()),
            _ => Ok(config),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn layers(&self) -> Result<Vec<Layer>, String> {
        self.features
            .layers
            .iter()
            .map(|n| n.parse::<Layer>().map_err(|e| e.to_string()))
            .collect()
    }

    /// Optimization settings for grids of extent `dims`.
    pub fn stylization(&self, dims: Dims) -> Result<StylizationConfig, String> {
        let err = |e: smokestyle_core::Error| e.to_string();
        let layers = self.layers()?;
        let layer_weights = self
            .features
            .layer_weights
            .clone()
            .unwrap_or_else(|| vec![1.0; layers.len()]);
        let weights = LossWeights::new(self.features.alpha, self.features.beta, layer_weights).map_err(err)?;
        let views = self
            .render
            .views_deg
            .iter()
            .map(|d| ViewAngle::new(d.to_radians()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let mut window = TemporalWindow::new(self.optimize.window).map_err(err)?;
        if let Some(w) = &self.optimize.window_weights {
            window = window.with_weights(w.clone()).map_err(err)?;
        }
        let base = StylizationConfig::for_dims(dims);
        let config = StylizationConfig {
            iterations: self.optimize.iterations,
            learning_rate: self.optimize.learning_rate.unwrap_or(base.learning_rate),
            layers,
            views,
            view_weights: self.render.view_weights.clone(),
            window,
            tiles: self.features.tiles,
            seed: self.optimize.seed,
            weights,
            render: RenderSettings {
                gamma: self.render.gamma,
                steps: self.render.steps,
                r_max: self.render.r_max,
                resolution: self.render.resolution.map(|[w, h]| (w, h)),
            },
            dt: self.optimize.dt,
            ..base
        };
        if let Some(w) = &config.view_weights {
            if w.len() != config.views.len() {
                return Err(format!("{} view weights for {} views", w.len(), config.views.len()));
            }
        }
        config.validate(dims).map_err(err)?;
        Ok(config)
    }
}
