//! Spherical Albers equal-area conic projection.
//!
//! Defaults approximate the continental-US setup (standard parallels 29.5°N
//! and 45.5°N, latitude of origin 40°N, central meridian 96°W) on a sphere
//! with the authalic radius of GRS80. The spherical form is within half a
//! percent of the ellipsoidal one for areas, which is all the evaluation
//! metrics consume since they are area ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AUTHALIC_RADIUS_M: f64 = 6_371_007.181;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlbersParams {
    pub lat1: f64,
    pub lat2: f64,
    pub lat0: f64,
    pub lon0: f64,
    pub radius: f64,
}

impl Default for AlbersParams {
    fn default() -> Self {
        AlbersParams {
            lat1: 29.5,
            lat2: 45.5,
            lat0: 40.0,
            lon0: -96.0,
            radius: AUTHALIC_RADIUS_M,
        }
    }
}

/// Coordinate reference system of a dataset or geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Crs {
    /// WGS84 longitude/latitude in degrees.
    GeographicWgs84,
    /// Albers equal-area conic, meters.
    AlbersConicProjected(AlbersParams),
}

impl Crs {
    pub fn is_projected(&self) -> bool {
        matches!(self, Crs::AlbersConicProjected(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            Crs::GeographicWgs84 => "geographic-wgs84",
            Crs::AlbersConicProjected(_) => "albers-conic-projected",
        }
    }

    pub fn require_projected(&self, what: &str) -> Result<()> {
        if self.is_projected() {
            Ok(())
        } else {
            Err(Error::state(format!(
                "{what} requires projected coordinates; project first"
            )))
        }
    }
}

/// Precomputed constants for the forward and inverse equations.
#[derive(Debug, Clone, Copy)]
pub struct Albers {
    params: AlbersParams,
    n: f64,
    c: f64,
    rho0: f64,
}

impl Albers {
    pub fn new(params: AlbersParams) -> Result<Self> {
        let phi1 = params.lat1.to_radians();
        let phi2 = params.lat2.to_radians();
        let n = (phi1.sin() + phi2.sin()) / 2.0;
        if n.abs() < 1e-12 || !params.radius.is_finite() || params.radius <= 0.0 {
            return Err(Error::Config(format!(
                "degenerate Albers parameters: {params:?}"
            )));
        }
        let c = phi1.cos().powi(2) + 2.0 * n * phi1.sin();
        let rho0 = params.radius * (c - 2.0 * n * params.lat0.to_radians().sin()).sqrt() / n;
        Ok(Albers { params, n, c, rho0 })
    }

    pub fn params(&self) -> AlbersParams {
        self.params
    }

    /// (longitude, latitude) in degrees to (x, y) in meters.
    pub fn forward(&self, lon: f64, lat: f64) -> (f64, f64) {
        let phi = lat.to_radians();
        let rho = self.params.radius * (self.c - 2.0 * self.n * phi.sin()).sqrt() / self.n;
        let theta = self.n * (lon - self.params.lon0).to_radians();
        (rho * theta.sin(), self.rho0 - rho * theta.cos())
    }

    /// (x, y) in meters back to (longitude, latitude) in degrees.
    pub fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        let dy = self.rho0 - y;
        let sign = self.n.signum();
        let rho = sign * x.hypot(dy);
        let theta = (sign * x).atan2(sign * dy);
        let scaled = rho * self.n / self.params.radius;
        let sin_phi = ((self.c - scaled * scaled) / (2.0 * self.n)).clamp(-1.0, 1.0);
        let lat = sin_phi.asin().to_degrees();
        let lon = self.params.lon0 + (theta / self.n).to_degrees();
        (lon, lat)
    }
}
