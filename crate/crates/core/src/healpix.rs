//! Equal-area iso-latitude pixel centres (ring ordering) used as the latent
//! mesh, plus the mesh-to-mesh neighbour graph.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::{knn_edges_excluding_self, EdgeList, GeoCoord};
use crate::par::Execution;

/// Highest supported refinement level (49152 nodes).
pub const MAX_LEVEL: u32 = 6;

/// Number of pixels at refinement level `level`: `12 * 4^level`.
pub fn mesh_node_count(level: u32) -> usize {
    12usize << (2 * level)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HealpixMesh {
    level: u32,
    nodes: Vec<GeoCoord>,
}

impl HealpixMesh {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn nside(&self) -> usize {
        1 << self.level
    }

    pub fn nodes(&self) -> &[GeoCoord] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of iso-latitude rings, `4 * nside - 1`.
    pub fn ring_count(&self) -> usize {
        4 * self.nside() - 1
    }

    /// Writes `index,lon_deg,lat_deg` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(out, "index,lon_deg,lat_deg")?;
            for (i, c) in self.nodes.iter().enumerate() {
                writeln!(out, "{i},{},{}", c.lon_deg(), c.lat_deg())?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

/// Pixel centres of the ring scheme at the given refinement level, ordered
/// north to south and west to east within each ring.
pub fn build_mesh(level: u32) -> Result<HealpixMesh> {
    if level > MAX_LEVEL {
        return Err(Error::Config(format!(
            "mesh refinement level {level} exceeds the maximum of {MAX_LEVEL}"
        )));
    }
    let nside = 1usize << level;
    let ns = nside as f64;
    // (z, longitudes) for rings 1 ..= 2*nside; the southern rings mirror these.
    let mut north: Vec<(f64, Vec<f64>)> = Vec::with_capacity(2 * nside);
    for i in 1..nside {
        let fi = i as f64;
        let z = 1.0 - fi * fi / (3.0 * ns * ns);
        let lons = (1..=4 * i)
            .map(|j| PI / (2.0 * fi) * (j as f64 - 0.5))
            .collect();
        north.push((z, lons));
    }
    for i in nside..=2 * nside {
        let z = 4.0 / 3.0 - 2.0 * i as f64 / (3.0 * ns);
        let shift = ((i - nside + 1) % 2) as f64;
        let lons = (1..=4 * nside)
            .map(|j| PI / (2.0 * ns) * (j as f64 - shift / 2.0))
            .collect();
        north.push((z, lons));
    }
    let equator = north.len() - 1;
    let rings = north
        .iter()
        .map(|(z, l)| (*z, l))
        .chain(north[..equator].iter().rev().map(|(z, l)| (-z, l)));

    let mut nodes = Vec::with_capacity(mesh_node_count(level));
    for (z, lons) in rings {
        let lat = z.asin();
        for &lon in lons {
            nodes.push(GeoCoord::new(lon, lat)?);
        }
    }
    debug_assert_eq!(nodes.len(), mesh_node_count(level));
    Ok(HealpixMesh { level, nodes })
}

/// Directed kNN edges into every mesh node from its `k_neighbors` nearest
/// other mesh nodes (no self-loops).
pub fn mesh_graph(mesh: &HealpixMesh, k_neighbors: usize) -> Result<EdgeList> {
    mesh_graph_with(mesh, k_neighbors, Execution::default())
}

pub fn mesh_graph_with(
    mesh: &HealpixMesh,
    k_neighbors: usize,
    exec: Execution,
) -> Result<EdgeList> {
    knn_edges_excluding_self(&mesh.nodes, k_neighbors, exec)
}
