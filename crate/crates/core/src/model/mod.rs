//! The encoder-processor-decoder network.
//!
//! * Encoder: every station embeds `[x ; w_enc ⊙ Y(station)]`, an MLP turns it
//!   into a message, and each mesh node aggregates the messages of its
//!   `k_station_mesh` nearest stations.
//! * Processor: mesh states are augmented with `w_proc ⊙ Y(node)`, then `L`
//!   rounds of message passing over the mesh kNN graph follow, each with a
//!   message MLP on `[h_src ; h_dst]` and an update MLP on `[h ; m]`.
//! * Decoder: each mesh node emits a scalar from `[h ; location]`; a station
//!   prediction aggregates the scalars of its `k_station_mesh` nearest mesh
//!   nodes.
//!
//! With a temporal head, per-step processor outputs are concatenated per mesh
//! node, projected linearly and split into one state per forecast step.

mod checkpoint;
mod graph;
mod mlp;
mod network;
mod params;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{NormStats, Variable};
use crate::error::{Error, Result};
use crate::healpix::MAX_LEVEL;
use crate::sh::{basis_len, MAX_DEGREE};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION,
};
pub use graph::{
    aggregate, aggregate_backward, Aggregation, DecoderTargets, EncoderInput, MeshContext,
    PreparedSample,
};
pub use mlp::{Activation, Linear, Mlp};
pub use network::ForwardTrace;
pub use params::{GradientSet, ParamSet, Tensor, TensorId};

/// Location features appended to mesh states before decoding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderLocation {
    /// Learnable spherical-harmonic embedding.
    #[default]
    Sh,
    /// Raw `(lon, lat)` in radians.
    Raw,
    /// Nothing appended.
    None,
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden width `H`.
    pub hidden: usize,
    /// Processor rounds `L`.
    pub layers: usize,
    /// Affine maps per MLP.
    pub mlp_layers: usize,
    pub mesh_level: u32,
    pub k_station_mesh: usize,
    pub k_mesh_mesh: usize,
    /// Maximum spherical-harmonic degree `N`.
    pub sh_degree: usize,
    pub encoder_sh: bool,
    pub processor_sh: bool,
    pub decoder_location: DecoderLocation,
    pub aggregation: Aggregation,
    pub activation: Activation,
    /// Append the great-circle edge length to processor message inputs.
    pub edge_distance: bool,
    /// Input days `n + 1`.
    pub input_steps: usize,
    /// Forecast days `m`.
    pub output_steps: usize,
    /// Force the linear temporal head even for one-in/one-out.
    pub temporal_head: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            layers: 2,
            mlp_layers: 2,
            mesh_level: 3,
            k_station_mesh: 10,
            k_mesh_mesh: 10,
            sh_degree: 2,
            encoder_sh: true,
            processor_sh: true,
            decoder_location: DecoderLocation::Sh,
            aggregation: Aggregation::Mean,
            activation: Activation::Silu,
            edge_distance: false,
            input_steps: 1,
            output_steps: 1,
            temporal_head: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.hidden == 0 {
            return fail("hidden width must be >= 1".into());
        }
        if self.mlp_layers == 0 {
            return fail("mlp_layers must be >= 1".into());
        }
        if self.mesh_level > MAX_LEVEL {
            return fail(format!(
                "mesh_level {} exceeds {MAX_LEVEL}",
                self.mesh_level
            ));
        }
        if self.k_station_mesh == 0 || self.k_mesh_mesh == 0 {
            return fail("neighbour counts must be >= 1".into());
        }
        if self.sh_degree > MAX_DEGREE {
            return fail(format!("sh_degree {} exceeds {MAX_DEGREE}", self.sh_degree));
        }
        if self.input_steps == 0 || self.output_steps == 0 {
            return fail("input_steps and output_steps must be >= 1".into());
        }
        Ok(())
    }

    /// Whether the model carries the temporal projection.
    pub fn has_temporal_head(&self) -> bool {
        self.temporal_head || self.input_steps > 1 || self.output_steps > 1
    }

    pub fn sh_len(&self) -> usize {
        basis_len(self.sh_degree)
    }

    fn encoder_in(&self) -> usize {
        1 + if self.encoder_sh { self.sh_len() } else { 0 }
    }

    fn processor_in(&self) -> usize {
        self.hidden + if self.processor_sh { self.sh_len() } else { 0 }
    }

    fn decoder_loc_width(&self) -> usize {
        match self.decoder_location {
            DecoderLocation::Sh => self.sh_len(),
            DecoderLocation::Raw => 2,
            DecoderLocation::None => 0,
        }
    }

    /// Tiny configuration used for gradient checks and determinism tests.
    pub fn tiny() -> Self {
        ModelConfig {
            hidden: 8,
            layers: 2,
            mesh_level: 1,
            ..ModelConfig::default()
        }
    }
}

/// Tensor handles for every component, derived from the config alone.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub encoder: Mlp,
    pub messages: Vec<Mlp>,
    pub updates: Vec<Mlp>,
    /// Only present when `layers == 0`.
    pub projection: Option<Linear>,
    pub decoder: Mlp,
    pub sh_encoder: Option<TensorId>,
    pub sh_processor: Option<TensorId>,
    pub sh_decoder: Option<TensorId>,
    pub temporal: Option<Linear>,
}

impl Layout {
    fn build(cfg: &ModelConfig, params: &mut ParamSet) -> Self {
        let h = cfg.hidden;
        let d0 = cfg.processor_in();
        let encoder = Mlp::new(params, "encoder", cfg.encoder_in(), h, h, cfg.mlp_layers);
        let mut messages = Vec::with_capacity(cfg.layers);
        let mut updates = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let d = if l == 0 { d0 } else { h };
            let msg_in = 2 * d + usize::from(cfg.edge_distance);
            messages.push(Mlp::new(
                params,
                &format!("processor.{l}.message"),
                msg_in,
                h,
                h,
                cfg.mlp_layers,
            ));
            updates.push(Mlp::new(
                params,
                &format!("processor.{l}.update"),
                d + h,
                h,
                h,
                cfg.mlp_layers,
            ));
        }
        let projection =
            (cfg.layers == 0).then(|| Linear::new(params, "processor.projection", d0, h));
        let decoder = Mlp::new(
            params,
            "decoder",
            h + cfg.decoder_loc_width(),
            h,
            1,
            cfg.mlp_layers,
        );
        let s = cfg.sh_len();
        let sh_encoder = cfg.encoder_sh.then(|| params.push("sh.encoder", vec![s]));
        let sh_processor = cfg
            .processor_sh
            .then(|| params.push("sh.processor", vec![s]));
        let sh_decoder = (cfg.decoder_location == DecoderLocation::Sh)
            .then(|| params.push("sh.decoder", vec![s]));
        let temporal = cfg.has_temporal_head().then(|| {
            Linear::new(
                params,
                "temporal",
                cfg.input_steps * h,
                cfg.output_steps * h,
            )
        });
        Layout {
            encoder,
            messages,
            updates,
            projection,
            decoder,
            sh_encoder,
            sh_processor,
            sh_decoder,
            temporal,
        }
    }

    fn linears(&self) -> Vec<Linear> {
        let mut out: Vec<Linear> = self.encoder.layers.clone();
        for (m, u) in self.messages.iter().zip(&self.updates) {
            out.extend(&m.layers);
            out.extend(&u.layers);
        }
        out.extend(self.projection);
        out.extend(&self.decoder.layers);
        out.extend(self.temporal);
        out
    }
}

/// All trainable parameters plus the metadata needed to use them.
#[derive(Clone, Debug, PartialEq)]
pub struct MignModel {
    config: ModelConfig,
    params: ParamSet,
    layout: Layout,
    norm: NormStats,
    variable: Option<Variable>,
}

impl MignModel {
    /// Fresh model: weights and biases uniform in `±1/sqrt(fan_in)`, SH
    /// coefficients one.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for lin in model.layout.linears() {
            let bound = 1.0 / (lin.fan_in.max(1) as f64).sqrt();
            for id in [lin.weight, lin.bias] {
                for v in model.params.tensor_mut(id).data_mut() {
                    *v = rng.random_range(-bound..=bound);
                }
            }
        }
        let sh_sites = [
            model.layout.sh_encoder,
            model.layout.sh_processor,
            model.layout.sh_decoder,
        ];
        for id in sh_sites.into_iter().flatten() {
            model.params.tensor_mut(id).data_mut().fill(1.0);
        }
        Ok(model)
    }

    /// Model with every parameter zero.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let layout = Layout::build(&config, &mut params);
        Ok(MignModel {
            config,
            params,
            layout,
            norm: NormStats::IDENTITY,
            variable: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn norm(&self) -> NormStats {
        self.norm
    }

    pub fn set_norm(&mut self, norm: NormStats) {
        self.norm = norm;
    }

    pub fn variable(&self) -> Option<Variable> {
        self.variable
    }

    pub fn set_variable(&mut self, variable: Option<Variable>) {
        self.variable = variable;
    }

    pub fn encoder_mlp(&self) -> &Mlp {
        &self.layout.encoder
    }

    pub fn message_mlps(&self) -> &[Mlp] {
        &self.layout.messages
    }

    pub fn update_mlps(&self) -> &[Mlp] {
        &self.layout.updates
    }

    pub fn decoder_mlp(&self) -> &Mlp {
        &self.layout.decoder
    }

    pub fn processor_projection(&self) -> Option<Linear> {
        self.layout.projection
    }

    pub fn temporal_projection(&self) -> Option<Linear> {
        self.layout.temporal
    }

    pub fn sh_encoder(&self) -> Option<TensorId> {
        self.layout.sh_encoder
    }

    pub fn sh_processor(&self) -> Option<TensorId> {
        self.layout.sh_processor
    }

    pub fn sh_decoder(&self) -> Option<TensorId> {
        self.layout.sh_decoder
    }

    /// Applies an MLP of this model to one vector.
    pub fn mlp_apply(&self, mlp: &Mlp, v: &[f64]) -> Result<Vec<f64>> {
        mlp.apply(&self.params, self.config.activation, v)
    }
}
