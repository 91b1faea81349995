//! Precomputed graph structure: mesh basis and neighbour tables, per-sample
//! station embeddings, and neighbourhood aggregation.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::geo::{knn_edges_with, EdgeList, GeoCoord};
use crate::healpix::{build_mesh, mesh_graph_with, HealpixMesh};
use crate::par::Execution;
use crate::sh::sh_basis_matrix;
use crate::snapshot::Sample;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
    Max,
}

/// Reduces source rows into target rows over `edges`.
///
/// Neighbours are accumulated in edge order (nearest first). For `Max` the
/// returned vector holds, per output element, the source row that won.
pub fn aggregate(
    kind: Aggregation,
    x: ArrayView2<'_, f64>,
    edges: &EdgeList,
) -> (Array2<f64>, Vec<u32>) {
    let width = x.ncols();
    let n_targets = edges.n_targets();
    let mut out = Array2::zeros((n_targets, width));
    let mut argmax = Vec::new();
    if kind == Aggregation::Max {
        argmax = vec![0u32; n_targets * width];
        out.fill(f64::NEG_INFINITY);
    }
    let degree = edges.degree();
    let scale = match kind {
        Aggregation::Mean => 1.0 / degree as f64,
        _ => 1.0,
    };
    for (t, mut row) in out.outer_iter_mut().enumerate() {
        let row = row.as_slice_mut().expect("standard layout");
        for &s in edges.sources_of(t) {
            let src = x.row(s);
            match kind {
                Aggregation::Mean | Aggregation::Sum => {
                    for (o, v) in row.iter_mut().zip(src.iter()) {
                        *o += v;
                    }
                }
                Aggregation::Max => {
                    for (j, (o, v)) in row.iter_mut().zip(src.iter()).enumerate() {
                        if *v > *o {
                            *o = *v;
                            argmax[t * width + j] = s as u32;
                        }
                    }
                }
            }
        }
        if kind == Aggregation::Mean {
            row.iter_mut().for_each(|o| *o *= scale);
        }
    }
    (out, argmax)
}

/// Gradient of [`aggregate`] with respect to its source rows.
pub fn aggregate_backward(
    kind: Aggregation,
    d_out: ArrayView2<'_, f64>,
    edges: &EdgeList,
    argmax: &[u32],
    n_sources: usize,
) -> Array2<f64> {
    let width = d_out.ncols();
    let mut dx = Array2::zeros((n_sources, width));
    let scale = match kind {
        Aggregation::Mean => 1.0 / edges.degree() as f64,
        _ => 1.0,
    };
    for t in 0..edges.n_targets() {
        let g = d_out.row(t);
        match kind {
            Aggregation::Mean | Aggregation::Sum => {
                for &s in edges.sources_of(t) {
                    let mut dst = dx.row_mut(s);
                    dst.scaled_add(scale, &g);
                }
            }
            Aggregation::Max => {
                for j in 0..width {
                    dx[[argmax[t * width + j] as usize, j]] += g[j];
                }
            }
        }
    }
    dx
}

/// Everything about the mesh that does not depend on the sample.
#[derive(Clone, Debug)]
pub struct MeshContext {
    mesh: HealpixMesh,
    sh_degree: usize,
    k_station_mesh: usize,
    k_mesh_mesh: usize,
    basis: Array2<f64>,
    raw: Array2<f64>,
    edges: EdgeList,
    /// Identity table over edge rows, for reducing per-edge messages.
    message_slots: EdgeList,
}

impl MeshContext {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        Self::from_mesh(build_mesh(config.mesh_level)?, config)
    }

    pub fn from_mesh(mesh: HealpixMesh, config: &ModelConfig) -> Result<Self> {
        let basis = sh_basis_matrix(mesh.nodes(), config.sh_degree);
        let mut raw = Array2::zeros((mesh.len(), 2));
        for (i, c) in mesh.nodes().iter().enumerate() {
            raw[[i, 0]] = c.lon();
            raw[[i, 1]] = c.lat();
        }
        let edges = mesh_graph_with(&mesh, config.k_mesh_mesh, Execution::Sequential)?;
        let message_slots = EdgeList::from_parts(
            edges.degree(),
            (0..edges.len()).collect(),
            edges.distances().to_vec(),
        );
        Ok(MeshContext {
            mesh,
            sh_degree: config.sh_degree,
            k_station_mesh: config.k_station_mesh,
            k_mesh_mesh: config.k_mesh_mesh,
            basis,
            raw,
            edges,
            message_slots,
        })
    }

    pub fn mesh(&self) -> &HealpixMesh {
        &self.mesh
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    pub(crate) fn raw_coords(&self) -> &Array2<f64> {
        &self.raw
    }

    pub fn edges(&self) -> &EdgeList {
        &self.edges
    }

    pub(crate) fn message_slots(&self) -> &EdgeList {
        &self.message_slots
    }

    pub fn k_station_mesh(&self) -> usize {
        self.k_station_mesh
    }

    /// Errors unless the context was built for a model with this config.
    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        let ok = self.mesh.level() == config.mesh_level
            && self.sh_degree == config.sh_degree
            && self.k_station_mesh == config.k_station_mesh
            && self.k_mesh_mesh == config.k_mesh_mesh;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "mesh context (level {}, degree {}, k {}/{}) does not match the model config",
                self.mesh.level(),
                self.sh_degree,
                self.k_station_mesh,
                self.k_mesh_mesh
            )))
        }
    }
}

/// One input day ready for the encoder.
#[derive(Clone, Debug)]
pub struct EncoderInput {
    pub(crate) values: Vec<f64>,
    pub(crate) basis: Array2<f64>,
    /// Station -> mesh edges, one row of `k` stations per mesh node.
    pub(crate) edges: EdgeList,
}

impl EncoderInput {
    pub fn new(values: &[f64], coords: &[GeoCoord], mesh: &MeshContext) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("encoder input has no stations".into()));
        }
        if values.len() != coords.len() {
            return Err(Error::Shape {
                context: "encoder input coordinates",
                expected: values.len(),
                actual: coords.len(),
            });
        }
        let edges = knn_edges_with(
            coords,
            mesh.mesh.nodes(),
            mesh.k_station_mesh,
            Execution::Sequential,
        )?;
        Ok(EncoderInput {
            values: values.to_vec(),
            basis: sh_basis_matrix(coords, mesh.sh_degree),
            edges,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Target stations of one forecast day, ready for the decoder.
#[derive(Clone, Debug)]
pub struct DecoderTargets {
    /// Mesh -> station edges, one row of `k` mesh nodes per target.
    pub(crate) edges: EdgeList,
}

impl DecoderTargets {
    pub fn new(coords: &[GeoCoord], mesh: &MeshContext) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("decoder has no target stations".into()));
        }
        let edges = knn_edges_with(
            mesh.mesh.nodes(),
            coords,
            mesh.k_station_mesh,
            Execution::Sequential,
        )?;
        Ok(DecoderTargets { edges })
    }

    pub fn len(&self) -> usize {
        self.edges.n_targets()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mesh nodes feeding target `t`.
    pub fn mesh_neighbours(&self, t: usize) -> &[usize] {
        self.edges.sources_of(t)
    }
}

/// A sample with all graph structure resolved.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub inputs: Vec<EncoderInput>,
    pub targets: Vec<DecoderTargets>,
    pub truth: Vec<Vec<f64>>,
}

impl PreparedSample {
    pub fn new(sample: &Sample, mesh: &MeshContext) -> Result<Self> {
        sample.validate()?;
        let inputs = sample
            .inputs
            .iter()
            .map(|s| EncoderInput::new(s.values(), s.coords(), mesh))
            .collect::<Result<_>>()?;
        let targets = sample
            .targets
            .iter()
            .map(|s| DecoderTargets::new(s.coords(), mesh))
            .collect::<Result<_>>()?;
        let truth = sample.targets.iter().map(|s| s.values().to_vec()).collect();
        Ok(PreparedSample {
            inputs,
            targets,
            truth,
        })
    }

    pub fn n_predictions(&self) -> usize {
        self.truth.iter().map(Vec::len).sum()
    }
}
