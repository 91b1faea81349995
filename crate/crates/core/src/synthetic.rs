//! Seeded synthetic stations and smooth fields for tests, benchmarks and
//! demos.

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Variable;
use crate::geo::GeoCoord;
use crate::sh::{basis_len, sh_basis};
use crate::snapshot::{Sample, StationSnapshot};

/// Points distributed uniformly over the sphere.
pub fn random_stations<R: Rng>(n: usize, rng: &mut R) -> Vec<GeoCoord> {
    (0..n)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..=1.0);
            let lon: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            GeoCoord::new(lon, z.asin()).expect("valid by construction")
        })
        .collect()
}

/// Zero-padded ids `s0000`, `s0001`, ...
pub fn station_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:04}")).collect()
}

/// A linear combination of real spherical harmonics.
#[derive(Clone, Debug, PartialEq)]
pub struct ShField {
    pub degree: usize,
    pub coeffs: Vec<f64>,
}

impl ShField {
    /// Standard normal coefficients up to `degree`.
    pub fn random<R: Rng>(degree: usize, rng: &mut R) -> Self {
        let coeffs = (0..basis_len(degree))
            .map(|_| StandardNormal.sample(rng))
            .collect();
        ShField { degree, coeffs }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.coeffs.iter_mut().for_each(|c| *c *= factor);
        self
    }

    pub fn eval(&self, c: GeoCoord) -> f64 {
        sh_basis(c, self.degree)
            .iter()
            .zip(&self.coeffs)
            .map(|(y, w)| y * w)
            .sum()
    }

    pub fn eval_all(&self, coords: &[GeoCoord]) -> Vec<f64> {
        coords.iter().map(|&c| self.eval(c)).collect()
    }
}

pub fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

fn snapshot(
    date: NaiveDate,
    ids: &[String],
    coords: &[GeoCoord],
    values: Vec<f64>,
) -> StationSnapshot {
    StationSnapshot::new(date, Variable::Max, ids.to_vec(), coords.to_vec(), values)
        .expect("consistent columns")
}

/// One sample whose input and target days both observe `field` at the same
/// stations.
pub fn static_field_sample(coords: &[GeoCoord], field: &ShField) -> Sample {
    let ids = station_ids(coords.len());
    let values = field.eval_all(coords);
    let d0 = base_date();
    Sample::single(
        snapshot(d0, &ids, coords, values.clone()),
        snapshot(d0 + Days::new(1), &ids, coords, values),
    )
}

/// Daily fields following `x[t+1] = decay * x[t] + forcing + noise[t]`,
/// all of degree `degree`, observed at fixed stations.
#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    pub ids: Vec<String>,
    pub coords: Vec<GeoCoord>,
    /// Station values per day.
    pub days: Vec<Vec<f64>>,
}

impl SyntheticWorld {
    pub fn generate<R: Rng>(n_stations: usize, n_days: usize, degree: usize, rng: &mut R) -> Self {
        let coords = random_stations(n_stations, rng);
        let decay = 0.6;
        let forcing = ShField::random(degree, rng);
        let mut state = ShField::random(degree, rng);
        let mut days = Vec::with_capacity(n_days);
        for _ in 0..n_days {
            days.push(state.eval_all(&coords));
            let noise = ShField::random(degree, rng).scaled(0.3);
            let coeffs = (0..state.coeffs.len())
                .map(|j| decay * state.coeffs[j] + forcing.coeffs[j] + noise.coeffs[j])
                .collect();
            state = ShField { degree, coeffs };
        }
        SyntheticWorld {
            ids: station_ids(n_stations),
            coords,
            days,
        }
    }

    /// Single-step samples over consecutive days, all stations.
    pub fn samples(&self) -> Vec<Sample> {
        let d0 = base_date();
        let snap = |t: usize| {
            snapshot(
                d0 + Days::new(t as u64),
                &self.ids,
                &self.coords,
                self.days[t].clone(),
            )
        };
        (0..self.days.len().saturating_sub(1))
            .map(|t| Sample::single(snap(t), snap(t + 1)))
            .collect()
    }
}
