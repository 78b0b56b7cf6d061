//! Density clustering of check-ins over space and hour of day.
//!
//! Two check-ins are neighbors when they lie within `eps_km` great-circle
//! kilometers AND within `eps_hours` on the circular 24-hour clock. Check-ins
//! sharing an object and hour are density-identical, so they are collapsed
//! into one weighted point before clustering; the weight counts toward the
//! `min_pts` core threshold exactly as the individual records would.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::geo::{haversine_km, GeoPoint, EARTH_RADIUS_KM};
use crate::model::{CheckIn, Corpus, ObjectId};

pub const DEFAULT_EPS_KM: f64 = 0.5;
pub const DEFAULT_EPS_HOURS: f64 = 2.0;
pub const DEFAULT_MIN_PTS: usize = 10;

const KM_PER_DEGREE_LAT: f64 = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StDbscanParams {
    pub eps_km: f64,
    pub eps_hours: f64,
    pub min_pts: usize,
}

impl Default for StDbscanParams {
    fn default() -> Self {
        StDbscanParams {
            eps_km: DEFAULT_EPS_KM,
            eps_hours: DEFAULT_EPS_HOURS,
            min_pts: DEFAULT_MIN_PTS,
        }
    }
}

impl StDbscanParams {
    fn validate(&self) -> Result<()> {
        if !(self.eps_km > 0.0) || !self.eps_km.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "eps_km {} must be positive",
                self.eps_km
            )));
        }
        if !(self.eps_hours >= 0.0) || !self.eps_hours.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "eps_hours {} must be non-negative",
                self.eps_hours
            )));
        }
        if self.min_pts == 0 {
            return Err(Error::InvalidParameter("min_pts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-check-in cluster labels, aligned with the input slice; `None` marks
/// noise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<Option<usize>>,
    pub cluster_count: usize,
}

#[derive(Debug)]
struct Point {
    location: GeoPoint,
    hour: u32,
    weight: usize,
    members: Vec<usize>,
}

fn circular_hour_gap(a: u32, b: u32) -> f64 {
    let d = a.abs_diff(b) as f64;
    d.min(24.0 - d)
}

/// Runs the clustering. Deterministic for a given check-in multiset: points
/// are visited in (object id, hour) order and neighbor lists are kept sorted,
/// so cluster numbering and border assignment never depend on input order.
pub fn st_dbscan_clusters(
    checkins: &[CheckIn],
    corpus: &Corpus,
    params: &StDbscanParams,
) -> Result<ClusterAssignment> {
    params.validate()?;

    // Collapse to distinct (object, hour) points, visiting order fixed by the
    // BTreeMap key.
    let mut grouped: BTreeMap<(ObjectId, u32), Vec<usize>> = BTreeMap::new();
    for (idx, c) in checkins.iter().enumerate() {
        if corpus.get(&c.object).is_none() {
            return Err(Error::UnknownObject {
                id: c.object.0.clone(),
            });
        }
        use chrono::Timelike;
        grouped
            .entry((c.object.clone(), c.time.hour()))
            .or_default()
            .push(idx);
    }
    let points: Vec<Point> = grouped
        .into_iter()
        .map(|((object, hour), members)| Point {
            location: corpus.get(&object).expect("validated above").location,
            hour,
            weight: members.len(),
            members,
        })
        .collect();

    let neighbors = neighbor_lists(&points, params);
    let density: Vec<usize> = neighbors
        .iter()
        .map(|list| list.iter().map(|&j| points[j].weight).sum())
        .collect();

    #[derive(Clone, Copy, PartialEq)]
    enum Label {
        Unvisited,
        Noise,
        Cluster(usize),
    }
    let mut labels = vec![Label::Unvisited; points.len()];
    let mut cluster_count = 0;
    for seed in 0..points.len() {
        if labels[seed] != Label::Unvisited {
            continue;
        }
        if density[seed] < params.min_pts {
            labels[seed] = Label::Noise;
            continue;
        }
        let cluster = Label::Cluster(cluster_count);
        cluster_count += 1;
        labels[seed] = cluster;
        let mut queue: VecDeque<usize> = neighbors[seed]
            .iter()
            .copied()
            .filter(|&j| j != seed)
            .collect();
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                Label::Cluster(_) => continue,
                // A previously rejected seed on a cluster edge becomes a
                // border member but does not expand further.
                Label::Noise => labels[j] = cluster,
                Label::Unvisited => {
                    labels[j] = cluster;
                    if density[j] >= params.min_pts {
                        queue.extend(neighbors[j].iter().copied().filter(|&x| x != j));
                    }
                }
            }
        }
    }

    let mut out = vec![None; checkins.len()];
    for (idx, point) in points.iter().enumerate() {
        let label = match labels[idx] {
            Label::Cluster(c) => Some(c),
            Label::Noise => None,
            Label::Unvisited => unreachable!("every point is labeled"),
        };
        for &member in &point.members {
            out[member] = label;
        }
    }
    Ok(ClusterAssignment {
        labels: out,
        cluster_count,
    })
}

/// Sorted neighbor index lists (each point includes itself). Points are
/// bucketed by latitude band and hour; within each bucket a longitude-sorted
/// vector is range-scanned, which keeps candidate generation exact without
/// quadratic comparisons.
fn neighbor_lists(points: &[Point], params: &StDbscanParams) -> Vec<Vec<usize>> {
    let lat_step = params.eps_km / KM_PER_DEGREE_LAT;
    let mut buckets: HashMap<(i64, u32), Vec<(f64, usize)>> = HashMap::new();
    for (idx, p) in points.iter().enumerate() {
        let band = (p.location.lat / lat_step).floor() as i64;
        buckets
            .entry((band, p.hour))
            .or_default()
            .push((p.location.lon, idx));
    }
    for list in buckets.values_mut() {
        list.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite lon").then(a.1.cmp(&b.1)));
    }

    let mut lists = Vec::with_capacity(points.len());
    for (idx, p) in points.iter().enumerate() {
        let mut found = Vec::new();
        let band = (p.location.lat / lat_step).floor() as i64;
        // Longitude degrees shrink with latitude; size the scan window by the
        // widest latitude reachable within the band neighborhood.
        let max_abs_lat = (p.location.lat.abs() + 2.0 * lat_step).min(90.0);
        let cos_floor = max_abs_lat.to_radians().cos().max(1e-9);
        let lon_span = params.eps_km / (KM_PER_DEGREE_LAT * cos_floor);
        for band_offset in -1..=1 {
            for hour in 0..24u32 {
                if circular_hour_gap(hour, p.hour) > params.eps_hours {
                    continue;
                }
                let Some(list) = buckets.get(&(band + band_offset, hour)) else {
                    continue;
                };
                let lo = list.partition_point(|&(lon, _)| lon < p.location.lon - lon_span);
                for &(_, other) in list[lo..].iter() {
                    let q = &points[other];
                    if q.location.lon > p.location.lon + lon_span {
                        break;
                    }
                    if haversine_km(&p.location, &q.location) <= params.eps_km
                        && circular_hour_gap(p.hour, q.hour) <= params.eps_hours
                    {
                        found.push(other);
                    }
                }
            }
        }
        debug_assert!(found.contains(&idx), "a point neighbors itself");
        found.sort_unstable();
        found.dedup();
        lists.push(found);
    }
    lists
}
