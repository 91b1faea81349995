//! Forward evaluation with recorded intermediates, and the matching
//! reverse-mode pass.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use super::graph::{
    aggregate, aggregate_backward, DecoderTargets, EncoderInput, MeshContext, PreparedSample,
};
use super::mlp::MlpCache;
use super::{DecoderLocation, MignModel};
use crate::error::{Error, Result};
use crate::geo::GeoCoord;
use crate::model::params::ParamSet;
use crate::snapshot::StationSnapshot;

struct EncodeCache {
    mlp: MlpCache,
    argmax: Vec<u32>,
}

struct LayerCache {
    h_in: Array2<f64>,
    message: MlpCache,
    argmax: Vec<u32>,
    update: MlpCache,
}

struct ProcessCache {
    h0: Array2<f64>,
    layers: Vec<LayerCache>,
}

struct DecodeCache {
    mlp: MlpCache,
    argmax: Vec<u32>,
}

struct InputTrace {
    encode: EncodeCache,
    process: ProcessCache,
}

/// Everything a forward pass recorded, plus its predictions.
pub struct ForwardTrace {
    inputs: Vec<InputTrace>,
    /// Per-step processor outputs concatenated, when the temporal head is used.
    stacked: Option<Array2<f64>>,
    decodes: Vec<DecodeCache>,
    pub predictions: Vec<Vec<f64>>,
}

fn shape_err(context: &'static str, expected: usize, actual: usize) -> Error {
    Error::Shape {
        context,
        expected,
        actual,
    }
}

/// Adds `sum_i d[i, offset + j] * basis[i, j]` into the coefficient gradient.
fn accumulate_sh_grad(
    grads: &mut ParamSet,
    id: super::TensorId,
    d: ArrayView2<'_, f64>,
    offset: usize,
    basis: &Array2<f64>,
) {
    let mut g = grads.vector_mut(id);
    for (drow, brow) in d.outer_iter().zip(basis.outer_iter()) {
        for j in 0..brow.len() {
            g[j] += drow[offset + j] * brow[j];
        }
    }
}

/// `[left | w ⊙ basis]`
fn append_weighted_basis(
    left: ArrayView2<'_, f64>,
    w: ndarray::ArrayView1<'_, f64>,
    basis: &Array2<f64>,
) -> Array2<f64> {
    let weighted = basis * &w;
    concatenate![Axis(1), left, weighted]
}

impl MignModel {
    fn encode_fwd(&self, inp: &EncoderInput) -> (Array2<f64>, EncodeCache) {
        let p = &self.params;
        let values = ArrayView2::from_shape((inp.len(), 1), &inp.values).expect("column");
        let x = match self.layout.sh_encoder {
            Some(id) => append_weighted_basis(values, p.vector(id), &inp.basis),
            None => values.to_owned(),
        };
        let (msg, mlp) = self.layout.encoder.forward(p, self.config.activation, x);
        let (h0, argmax) = aggregate(self.config.aggregation, msg.view(), &inp.edges);
        (h0, EncodeCache { mlp, argmax })
    }

    fn encode_bwd(
        &self,
        inp: &EncoderInput,
        cache: &EncodeCache,
        d_h0: ArrayView2<'_, f64>,
        grads: &mut ParamSet,
    ) {
        let d_msg = aggregate_backward(
            self.config.aggregation,
            d_h0,
            &inp.edges,
            &cache.argmax,
            inp.len(),
        );
        let dx = self.layout.encoder.backward(
            &self.params,
            self.config.activation,
            &cache.mlp,
            d_msg,
            grads,
        );
        if let Some(id) = self.layout.sh_encoder {
            accumulate_sh_grad(grads, id, dx.view(), 1, &inp.basis);
        }
    }

    fn process_fwd(
        &self,
        h_enc: ArrayView2<'_, f64>,
        mesh: &MeshContext,
    ) -> (Array2<f64>, ProcessCache) {
        let p = &self.params;
        let act = self.config.activation;
        let h0 = match self.layout.sh_processor {
            Some(id) => append_weighted_basis(h_enc, p.vector(id), mesh.basis()),
            None => h_enc.to_owned(),
        };
        if let Some(proj) = self.layout.projection {
            let out = proj.forward(p, h0.view());
            return (
                out,
                ProcessCache {
                    h0,
                    layers: Vec::new(),
                },
            );
        }
        let edges = mesh.edges();
        let degree = edges.degree();
        let mut layers = Vec::with_capacity(self.config.layers);
        let mut h = h0.clone();
        for (msg_mlp, upd_mlp) in self.layout.messages.iter().zip(&self.layout.updates) {
            let d = h.ncols();
            let first = msg_mlp.layers[0];
            let w = p.matrix(first.weight);
            // first affine map of the message MLP, split by endpoint
            let from_src = h.dot(&w.slice(s![0..d, ..]));
            let mut from_dst = h.dot(&w.slice(s![d..2 * d, ..]));
            from_dst += &p.vector(first.bias);
            let w_dist = self.config.edge_distance.then(|| w.row(2 * d));
            let mut pre = Array2::zeros((edges.len(), first.fan_out));
            for (e, mut row) in pre.outer_iter_mut().enumerate() {
                let src = edges.sources()[e];
                row.assign(&from_src.row(src));
                row += &from_dst.row(e / degree);
                if let Some(wd) = &w_dist {
                    row.scaled_add(edges.distances()[e], wd);
                }
            }
            let (msg, message) = msg_mlp.forward_tail(p, act, pre);
            let (agg, argmax) =
                aggregate(self.config.aggregation, msg.view(), mesh.message_slots());
            let upd_in = concatenate![Axis(1), h, agg];
            let (h_next, update) = upd_mlp.forward(p, act, upd_in);
            layers.push(LayerCache {
                h_in: std::mem::replace(&mut h, h_next),
                message,
                argmax,
                update,
            });
        }
        (h, ProcessCache { h0, layers })
    }

    /// Returns the gradient with respect to the encoder output.
    fn process_bwd(
        &self,
        mesh: &MeshContext,
        cache: &ProcessCache,
        d_out: Array2<f64>,
        grads: &mut ParamSet,
    ) -> Array2<f64> {
        let p = &self.params;
        let act = self.config.activation;
        let mut dh = match self.layout.projection {
            Some(proj) => proj.backward(p, cache.h0.view(), d_out.view(), grads),
            None => d_out,
        };
        let edges = mesh.edges();
        let degree = edges.degree();
        for (l, lc) in cache.layers.iter().enumerate().rev() {
            let d = lc.h_in.ncols();
            let d_upd = self.layout.updates[l].backward(p, act, &lc.update, dh, grads);
            let mut dh_prev = d_upd.slice(s![.., ..d]).to_owned();
            let d_agg = d_upd.slice(s![.., d..]);
            let msg_mlp = &self.layout.messages[l];
            let d_msg = aggregate_backward(
                self.config.aggregation,
                d_agg,
                mesh.message_slots(),
                &lc.argmax,
                edges.len(),
            );
            let d_pre = msg_mlp.backward_tail(p, act, &lc.message, d_msg, grads);

            let first = msg_mlp.layers[0];
            let hid = first.fan_out;
            let n = lc.h_in.nrows();
            let mut d_src = Array2::<f64>::zeros((n, hid));
            let mut d_dst = Array2::<f64>::zeros((n, hid));
            let mut d_wdist = self
                .config
                .edge_distance
                .then(|| ndarray::Array1::<f64>::zeros(hid));
            for (e, g) in d_pre.outer_iter().enumerate() {
                d_src.row_mut(edges.sources()[e]).scaled_add(1.0, &g);
                d_dst.row_mut(e / degree).scaled_add(1.0, &g);
                if let Some(wd) = d_wdist.as_mut() {
                    wd.scaled_add(edges.distances()[e], &g);
                }
            }
            {
                let mut gw = grads.matrix_mut(first.weight);
                gw.slice_mut(s![0..d, ..])
                    .scaled_add(1.0, &lc.h_in.t().dot(&d_src));
                gw.slice_mut(s![d..2 * d, ..])
                    .scaled_add(1.0, &lc.h_in.t().dot(&d_dst));
                if let Some(wd) = &d_wdist {
                    gw.row_mut(2 * d).scaled_add(1.0, wd);
                }
            }
            grads
                .vector_mut(first.bias)
                .scaled_add(1.0, &d_dst.sum_axis(Axis(0)));
            let w = p.matrix(first.weight);
            dh_prev += &d_src.dot(&w.slice(s![0..d, ..]).t());
            dh_prev += &d_dst.dot(&w.slice(s![d..2 * d, ..]).t());
            dh = dh_prev;
        }
        let h = self.config.hidden;
        if let Some(id) = self.layout.sh_processor {
            accumulate_sh_grad(grads, id, dh.view(), h, mesh.basis());
        }
        dh.slice(s![.., ..h]).to_owned()
    }

    fn decoder_input(&self, h: ArrayView2<'_, f64>, mesh: &MeshContext) -> Array2<f64> {
        match self.config.decoder_location {
            DecoderLocation::Sh => {
                let id = self.layout.sh_decoder.expect("decoder SH coefficients");
                append_weighted_basis(h, self.params.vector(id), mesh.basis())
            }
            DecoderLocation::Raw => concatenate![Axis(1), h, mesh.raw_coords().view()],
            DecoderLocation::None => h.to_owned(),
        }
    }

    fn decode_fwd(
        &self,
        h: ArrayView2<'_, f64>,
        targets: &DecoderTargets,
        mesh: &MeshContext,
    ) -> (Vec<f64>, DecodeCache) {
        let x = self.decoder_input(h, mesh);
        let (msg, mlp) = self
            .layout
            .decoder
            .forward(&self.params, self.config.activation, x);
        let (y, argmax) = aggregate(self.config.aggregation, msg.view(), &targets.edges);
        (y.into_raw_vec_and_offset().0, DecodeCache { mlp, argmax })
    }

    fn decode_bwd(
        &self,
        targets: &DecoderTargets,
        mesh: &MeshContext,
        cache: &DecodeCache,
        d_y: &[f64],
        grads: &mut ParamSet,
    ) -> Array2<f64> {
        let d_y = ArrayView2::from_shape((d_y.len(), 1), d_y).expect("column");
        let d_msg = aggregate_backward(
            self.config.aggregation,
            d_y,
            &targets.edges,
            &cache.argmax,
            mesh.len(),
        );
        let dx = self.layout.decoder.backward(
            &self.params,
            self.config.activation,
            &cache.mlp,
            d_msg,
            grads,
        );
        let h = self.config.hidden;
        if let Some(id) = self.layout.sh_decoder {
            accumulate_sh_grad(grads, id, dx.view(), h, mesh.basis());
        }
        dx.slice(s![.., ..h]).to_owned()
    }

    fn check_sample(&self, sample: &PreparedSample) -> Result<()> {
        let cfg = &self.config;
        let (n_in, n_out) = if cfg.has_temporal_head() {
            (cfg.input_steps, cfg.output_steps)
        } else {
            (1, 1)
        };
        if sample.inputs.len() != n_in {
            return Err(shape_err("input steps", n_in, sample.inputs.len()));
        }
        if sample.targets.len() != n_out {
            return Err(shape_err("output steps", n_out, sample.targets.len()));
        }
        Ok(())
    }

    /// Forward pass over a prepared sample, keeping what the backward pass
    /// needs.
    pub fn forward_trace(
        &self,
        sample: &PreparedSample,
        mesh: &MeshContext,
    ) -> Result<ForwardTrace> {
        mesh.check(&self.config)?;
        self.check_sample(sample)?;
        let h = self.config.hidden;
        let mut inputs = Vec::with_capacity(sample.inputs.len());
        let mut states = Vec::with_capacity(sample.inputs.len());
        for inp in &sample.inputs {
            let (h0, encode) = self.encode_fwd(inp);
            let (hl, process) = self.process_fwd(h0.view(), mesh);
            inputs.push(InputTrace { encode, process });
            states.push(hl);
        }
        let (stacked, outputs) = match self.layout.temporal {
            Some(lin) => {
                let views: Vec<_> = states.iter().map(|s| s.view()).collect();
                let stacked = concatenate(Axis(1), &views).expect("equal row counts");
                let projected = lin.forward(&self.params, stacked.view());
                let outs = (0..self.config.output_steps)
                    .map(|j| projected.slice(s![.., j * h..(j + 1) * h]).to_owned())
                    .collect();
                (Some(stacked), outs)
            }
            None => (None, states),
        };
        let mut decodes = Vec::with_capacity(outputs.len());
        let mut predictions = Vec::with_capacity(outputs.len());
        for (state, targets) in outputs.iter().zip(&sample.targets) {
            let (y, cache) = self.decode_fwd(state.view(), targets, mesh);
            decodes.push(cache);
            predictions.push(y);
        }
        Ok(ForwardTrace {
            inputs,
            stacked,
            decodes,
            predictions,
        })
    }

    /// Accumulates parameter gradients given `d loss / d prediction`.
    pub fn backward(
        &self,
        sample: &PreparedSample,
        mesh: &MeshContext,
        trace: &ForwardTrace,
        d_predictions: &[Vec<f64>],
        grads: &mut ParamSet,
    ) {
        let h = self.config.hidden;
        let d_states: Vec<Array2<f64>> = trace
            .decodes
            .iter()
            .zip(&sample.targets)
            .zip(d_predictions)
            .map(|((cache, targets), dy)| self.decode_bwd(targets, mesh, cache, dy, grads))
            .collect();
        let d_inputs: Vec<Array2<f64>> = match (self.layout.temporal, &trace.stacked) {
            (Some(lin), Some(stacked)) => {
                let views: Vec<_> = d_states.iter().map(|s| s.view()).collect();
                let d_proj = concatenate(Axis(1), &views).expect("equal row counts");
                let d_stacked = lin.backward(&self.params, stacked.view(), d_proj.view(), grads);
                (0..self.config.input_steps)
                    .map(|i| d_stacked.slice(s![.., i * h..(i + 1) * h]).to_owned())
                    .collect()
            }
            _ => d_states,
        };
        for ((inp, tr), d_hl) in sample.inputs.iter().zip(&trace.inputs).zip(d_inputs) {
            let d_h0 = self.process_bwd(mesh, &tr.process, d_hl, grads);
            self.encode_bwd(inp, &tr.encode, d_h0.view(), grads);
        }
    }

    /// Predictions for every forecast step of a prepared sample.
    pub fn predict(&self, sample: &PreparedSample, mesh: &MeshContext) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward_trace(sample, mesh)?.predictions)
    }

    /// Mesh states after the encoder, `|mesh| x H`.
    pub fn encode(&self, snapshot: &StationSnapshot, mesh: &MeshContext) -> Result<Array2<f64>> {
        mesh.check(&self.config)?;
        let inp = EncoderInput::new(snapshot.values(), snapshot.coords(), mesh)?;
        Ok(self.encode_fwd(&inp).0)
    }

    /// Mesh states after all processor rounds, `|mesh| x H`.
    pub fn process(&self, h_enc: &Array2<f64>, mesh: &MeshContext) -> Result<Array2<f64>> {
        mesh.check(&self.config)?;
        if h_enc.nrows() != mesh.len() {
            return Err(shape_err("processor rows", mesh.len(), h_enc.nrows()));
        }
        if h_enc.ncols() != self.config.hidden {
            return Err(shape_err(
                "processor width",
                self.config.hidden,
                h_enc.ncols(),
            ));
        }
        Ok(self.process_fwd(h_enc.view(), mesh).0)
    }

    /// Scalar predictions at arbitrary target coordinates.
    pub fn decode(
        &self,
        h: &Array2<f64>,
        targets: &[GeoCoord],
        mesh: &MeshContext,
    ) -> Result<Vec<f64>> {
        mesh.check(&self.config)?;
        if h.nrows() != mesh.len() || h.ncols() != self.config.hidden {
            return Err(shape_err(
                "decoder input",
                mesh.len() * self.config.hidden,
                h.len(),
            ));
        }
        let targets = DecoderTargets::new(targets, mesh)?;
        Ok(self.decode_fwd(h.view(), &targets, mesh).0)
    }

    /// Single-step forecast, bypassing any temporal head.
    pub fn forward(
        &self,
        snapshot: &StationSnapshot,
        targets: &[GeoCoord],
        mesh: &MeshContext,
    ) -> Result<Vec<f64>> {
        self.forward_values(snapshot.values(), snapshot.coords(), targets, mesh)
    }

    /// [`forward`](Self::forward) on bare values and coordinates.
    pub fn forward_values(
        &self,
        values: &[f64],
        coords: &[GeoCoord],
        targets: &[GeoCoord],
        mesh: &MeshContext,
    ) -> Result<Vec<f64>> {
        mesh.check(&self.config)?;
        let inp = EncoderInput::new(values, coords, mesh)?;
        let h0 = self.encode_fwd(&inp).0;
        let hl = self.process_fwd(h0.view(), mesh).0;
        self.decode(&hl, targets, mesh)
    }

    /// Multi-day forecast through the temporal head.
    pub fn temporal_forward(
        &self,
        snapshots: &[StationSnapshot],
        target_sets: &[Vec<GeoCoord>],
        mesh: &MeshContext,
    ) -> Result<Vec<Vec<f64>>> {
        if self.layout.temporal.is_none() {
            return Err(Error::Config("model has no temporal head".into()));
        }
        let inputs = snapshots
            .iter()
            .map(|s| EncoderInput::new(s.values(), s.coords(), mesh))
            .collect::<Result<Vec<_>>>()?;
        let targets = target_sets
            .iter()
            .map(|c| DecoderTargets::new(c, mesh))
            .collect::<Result<Vec<_>>>()?;
        let truth = targets.iter().map(|t| vec![0.0; t.len()]).collect();
        self.predict(
            &PreparedSample {
                inputs,
                targets,
                truth,
            },
            mesh,
        )
    }
}
