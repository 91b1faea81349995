//! Mesh interpolation graph network for next-day forecasting of irregular
//! weather-station observations on the sphere.
//!
//! Observations are embedded with learnable spherical-harmonic location
//! features, interpolated onto a HEALPix mesh, propagated by message passing
//! on the mesh and interpolated back to arbitrary station coordinates.

pub mod data;
pub mod error;
pub mod eval;
pub mod geo;
pub mod healpix;
pub mod model;
pub mod par;
pub mod sh;
pub mod snapshot;
mod spatial;
pub mod synthetic;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use geo::{great_circle_distance, knn_edges, make_geo, EdgeList, GeoCoord};
pub use healpix::{build_mesh, mesh_graph, mesh_node_count, HealpixMesh};
pub use model::{MeshContext, MignModel, ModelConfig};
pub use par::Execution;
pub use snapshot::{Sample, StationSnapshot};
