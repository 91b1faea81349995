//! Points on the unit sphere, great-circle distances and k-nearest-neighbour
//! graphs between point sets.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::spatial::KdTree;

/// A point on the unit sphere, in radians.
///
/// Longitude lies in `[-π, π]` and latitude in `[-π/2, π/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoCoord {
    lon: f64,
    lat: f64,
}

impl GeoCoord {
    /// Builds a coordinate from radians. Longitude is wrapped into `[-π, π]`;
    /// a latitude outside `[-π/2, π/2]` is rejected.
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite coordinate ({lon}, {lat})"
            )));
        }
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&lat) {
            return Err(Error::Validation(format!(
                "latitude {lat} rad outside [-pi/2, pi/2]"
            )));
        }
        Ok(GeoCoord {
            lon: wrap_radians(lon),
            lat,
        })
    }

    /// Builds a coordinate from degrees; see [`make_geo`].
    pub fn from_degrees(lon_deg: f64, lat_deg: f64) -> Result<Self> {
        make_geo(lon_deg, lat_deg)
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon_deg(&self) -> f64 {
        self.lon.to_degrees()
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat.to_degrees()
    }

    /// Colatitude `π/2 - lat`.
    pub fn colatitude(&self) -> f64 {
        FRAC_PI_2 - self.lat
    }

    pub fn to_unit_vec(&self) -> [f64; 3] {
        geo_to_unit_vec(*self)
    }

    /// Inverse of [`geo_to_unit_vec`]. The input need not be normalised.
    pub fn from_unit_vec(v: [f64; 3]) -> Result<Self> {
        let [x, y, z] = v;
        let lat = z.atan2(x.hypot(y));
        GeoCoord::new(y.atan2(x), lat)
    }
}

fn wrap_radians(lon: f64) -> f64 {
    if (-PI..=PI).contains(&lon) {
        lon
    } else {
        (lon + PI).rem_euclid(2.0 * PI) - PI
    }
}

/// Degrees to a validated [`GeoCoord`].
///
/// Longitude is wrapped in degree space first so that e.g. `-190°` maps to
/// exactly `170°`.
pub fn make_geo(lon_deg: f64, lat_deg: f64) -> Result<GeoCoord> {
    if !lat_deg.is_finite() || !(-90.0..=90.0).contains(&lat_deg) {
        return Err(Error::Validation(format!(
            "latitude {lat_deg} deg outside [-90, 90]"
        )));
    }
    if !lon_deg.is_finite() {
        return Err(Error::Validation(format!("longitude {lon_deg} deg")));
    }
    let lon_deg = if (-180.0..=180.0).contains(&lon_deg) {
        lon_deg
    } else {
        (lon_deg + 180.0).rem_euclid(360.0) - 180.0
    };
    GeoCoord::new(lon_deg.to_radians(), lat_deg.to_radians())
}

pub fn geo_to_unit_vec(c: GeoCoord) -> [f64; 3] {
    let (sin_lat, cos_lat) = c.lat.sin_cos();
    let (sin_lon, cos_lon) = c.lon.sin_cos();
    [cos_lat * cos_lon, cos_lat * sin_lon, sin_lat]
}

/// Haversine distance in radians on the unit sphere, in `[0, π]`.
pub fn great_circle_distance(a: GeoCoord, b: GeoCoord) -> f64 {
    let s_lat = ((b.lat - a.lat) * 0.5).sin();
    let s_lon = ((b.lon - a.lon) * 0.5).sin();
    let h = s_lat * s_lat + a.lat.cos() * b.lat.cos() * s_lon * s_lon;
    2.0 * h.clamp(0.0, 1.0).sqrt().asin()
}

/// A directed edge `src -> dst` with its great-circle length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub distance: f64,
}

/// Directed edges grouped by target, every target having the same in-degree.
///
/// The incoming edges of target `t` occupy slots `t*degree .. (t+1)*degree`,
/// ordered by ascending distance and then ascending source index.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeList {
    degree: usize,
    sources: Vec<usize>,
    distances: Vec<f64>,
}

impl EdgeList {
    pub(crate) fn from_parts(degree: usize, sources: Vec<usize>, distances: Vec<f64>) -> Self {
        debug_assert_eq!(sources.len(), distances.len());
        debug_assert!(degree == 0 || sources.len().is_multiple_of(degree));
        EdgeList {
            degree,
            sources,
            distances,
        }
    }

    /// In-degree shared by every target.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_targets(&self) -> usize {
        self.sources.len().checked_div(self.degree).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Source indices feeding target `t`, nearest first.
    pub fn sources_of(&self, t: usize) -> &[usize] {
        &self.sources[t * self.degree..(t + 1) * self.degree]
    }

    pub fn distances_of(&self, t: usize) -> &[f64] {
        &self.distances[t * self.degree..(t + 1) * self.degree]
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn iter(&self) -> impl Iterator<Item = Edge> + '_ {
        self.sources.iter().zip(&self.distances).enumerate().map(
            move |(slot, (&src, &distance))| Edge {
                src,
                dst: slot / self.degree,
                distance,
            },
        )
    }
}

/// For each target, the `min(k, |sources|)` nearest sources by great-circle
/// distance, ties broken by the lower source index.
pub fn knn_edges(sources: &[GeoCoord], targets: &[GeoCoord], k: usize) -> Result<EdgeList> {
    knn_edges_with(sources, targets, k, Execution::default())
}

pub fn knn_edges_with(
    sources: &[GeoCoord],
    targets: &[GeoCoord],
    k: usize,
    exec: Execution,
) -> Result<EdgeList> {
    if sources.is_empty() {
        return Err(Error::Empty("kNN source set".into()));
    }
    if k == 0 {
        return Err(Error::Config("kNN requires k >= 1".into()));
    }
    let tree = KdTree::new(sources);
    let degree = k.min(sources.len());
    let rows = par::map_slice(exec, targets, |t| tree.nearest(*t, degree, None));
    Ok(collect_rows(degree, rows))
}

/// kNN of a point set onto itself with self-loops removed: every point gets
/// `min(k, n - 1)` incoming edges from the other points.
pub(crate) fn knn_edges_excluding_self(
    points: &[GeoCoord],
    k: usize,
    exec: Execution,
) -> Result<EdgeList> {
    if points.len() < 2 {
        return Err(Error::Empty(format!(
            "self-kNN needs at least 2 points, got {}",
            points.len()
        )));
    }
    if k == 0 {
        return Err(Error::Config("kNN requires k >= 1".into()));
    }
    let tree = KdTree::new(points);
    let degree = k.min(points.len() - 1);
    let rows = par::map_range(exec, points.len(), |i| {
        tree.nearest(points[i], degree, Some(i))
    });
    Ok(collect_rows(degree, rows))
}

fn collect_rows(degree: usize, rows: Vec<Vec<(f64, usize)>>) -> EdgeList {
    let mut sources = Vec::with_capacity(rows.len() * degree);
    let mut distances = Vec::with_capacity(rows.len() * degree);
    for row in rows {
        debug_assert_eq!(row.len(), degree);
        for (d, s) in row {
            sources.push(s);
            distances.push(d);
        }
    }
    EdgeList::from_parts(degree, sources, distances)
}
