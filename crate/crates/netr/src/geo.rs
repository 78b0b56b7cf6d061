//! Great-circle geometry over WGS-ish spherical coordinates.
//!
//! Distances are haversine kilometers on a sphere of radius 6371 km. The
//! point-to-rectangle minimum accounts for the fact that rectangle edges at
//! fixed longitude are meridian arcs: the nearest point on such an edge sits
//! poleward of the query latitude, so naive coordinate clamping would
//! overestimate the minimum and break lower-bound guarantees downstream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        check_coordinates(lat, lon).map_err(Error::InvalidParameter)?;
        Ok(GeoPoint { lat, lon })
    }
}

/// Validates latitude/longitude ranges; the message names the offending field.
pub fn check_coordinates(lat: f64, lon: f64) -> std::result::Result<(), String> {
    if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
        return Err(format!("latitude {lat} out of range [-90, 90]"));
    }
    if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
        return Err(format!("longitude {lon} out of range [-180, 180]"));
    }
    Ok(())
}

pub fn haversine_km(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let lat_a = a.lat.to_radians();
    let lat_b = b.lat.to_radians();
    let d_lat = (b.lat - a.lat).to_radians();
    let d_lon = (b.lon - a.lon).to_radians();
    let h = (d_lat / 2.0).sin().powi(2) + lat_a.cos() * lat_b.cos() * (d_lon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Axis-aligned bounding rectangle in degrees. Never wraps the antimeridian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mbr {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl Mbr {
    pub fn of_point(p: &GeoPoint) -> Self {
        Mbr {
            min_lat: p.lat,
            max_lat: p.lat,
            min_lon: p.lon,
            max_lon: p.lon,
        }
    }

    pub fn expand_point(&mut self, p: &GeoPoint) {
        self.min_lat = self.min_lat.min(p.lat);
        self.max_lat = self.max_lat.max(p.lat);
        self.min_lon = self.min_lon.min(p.lon);
        self.max_lon = self.max_lon.max(p.lon);
    }

    pub fn expand_mbr(&mut self, other: &Mbr) {
        self.min_lat = self.min_lat.min(other.min_lat);
        self.max_lat = self.max_lat.max(other.max_lat);
        self.min_lon = self.min_lon.min(other.min_lon);
        self.max_lon = self.max_lon.max(other.max_lon);
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat)
            && (self.min_lon..=self.max_lon).contains(&p.lon)
    }

    pub fn contains_mbr(&self, other: &Mbr) -> bool {
        self.min_lat <= other.min_lat
            && self.max_lat >= other.max_lat
            && self.min_lon <= other.min_lon
            && self.max_lon >= other.max_lon
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lat: (self.min_lat + self.max_lat) / 2.0,
            lon: (self.min_lon + self.max_lon) / 2.0,
        }
    }
}

/// Minimum great-circle distance from `p` to any point of `mbr`.
///
/// The minimum over a rectangle is attained on its boundary (for an exterior
/// point), so each of the four edges is minimized separately:
/// - fixed-latitude edges: distance grows monotonically with the longitude
///   gap, so clamping the query longitude is exact;
/// - fixed-longitude edges: the stationary latitude satisfies
///   tan(lat*) = tan(lat_q) / (1 - 2 sin^2(d_lon / 2)), clamped to the edge.
///   Both edge endpoints are evaluated as well, which keeps the result exact
///   even when the stationary-point formula degenerates (longitude gaps of
///   90 degrees or more).
pub fn min_distance_km(p: &GeoPoint, mbr: &Mbr) -> f64 {
    if mbr.contains(p) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    let lon_clamped = p.lon.clamp(mbr.min_lon, mbr.max_lon);
    for lat_edge in [mbr.min_lat, mbr.max_lat] {
        let candidate = GeoPoint {
            lat: lat_edge,
            lon: lon_clamped,
        };
        best = best.min(haversine_km(p, &candidate));
    }
    for lon_edge in [mbr.min_lon, mbr.max_lon] {
        let s = ((p.lon - lon_edge).to_radians() / 2.0).sin().powi(2);
        let phi = p.lat.to_radians();
        let stationary = phi.sin().atan2(phi.cos() * (1.0 - 2.0 * s)).to_degrees();
        for lat in [
            stationary.clamp(mbr.min_lat, mbr.max_lat),
            mbr.min_lat,
            mbr.max_lat,
        ] {
            let candidate = GeoPoint { lat, lon: lon_edge };
            best = best.min(haversine_km(p, &candidate));
        }
    }
    best
}
