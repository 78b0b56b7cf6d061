//! Synthetic corpus generator: objects, check-ins, friendships, and a query
//! batch with the statistical texture the index is built to exploit.
//!
//! Venues belong to categories with fixed opening-hour profiles, so most of
//! the map is closed in the small hours. Objects clump into geographic
//! clusters; users belong to communities with a home cluster and category
//! tastes, check in near home at hours their venue is open, and befriend
//! mostly within their community. Everything is driven by one seed.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Days, NaiveDate, NaiveDateTime, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::{haversine_km, GeoPoint};

pub const DEFAULT_CHECKINS_PER_USER: usize = 100;
pub const DEFAULT_QUERY_COUNT: usize = 50;

const GEO_CLUSTERS: usize = 8;
const COMMUNITIES: usize = 8;
/// Check-in appeal halves roughly every 2 km from the user's home point.
const DISTANCE_SCALE_KM: f64 = 3.0;
const MAP_LAT: (f64, f64) = (39.75, 40.05);
const MAP_LON: (f64, f64) = (116.20, 116.60);
const DAY_WINDOW: u64 = 120;

/// Hourly check-in propensity per category. A zero means the venue type is
/// closed at that hour and can never receive a check-in there, so its
/// visiting-time probability at that hour is exactly zero. At 04:00 only
/// nightclubs and hotels are open.
const CATEGORIES: [(&str, [u32; 24]); 12] = [
    ("bar",        [2, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 3, 4, 5, 5, 4, 3]),
    ("nightclub",  [5, 5, 4, 3, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 3, 4]),
    ("cafe",       [0, 0, 0, 0, 0, 0, 0, 3, 5, 4, 3, 3, 3, 2, 2, 3, 2, 2, 1, 0, 0, 0, 0, 0]),
    ("museum",     [0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 3, 3, 2, 2, 3, 3, 2, 1, 0, 0, 0, 0, 0, 0]),
    ("library",    [0, 0, 0, 0, 0, 0, 0, 0, 2, 3, 3, 3, 2, 2, 2, 3, 3, 3, 2, 2, 1, 0, 0, 0]),
    ("restaurant", [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 3, 5, 3, 1, 0, 0, 2, 4, 5, 4, 2, 1, 0]),
    ("gym",        [0, 0, 0, 0, 0, 0, 2, 3, 2, 1, 1, 1, 1, 1, 1, 1, 2, 3, 4, 4, 3, 2, 1, 0]),
    ("park",       [0, 0, 0, 0, 0, 0, 1, 2, 3, 3, 3, 2, 2, 2, 2, 3, 3, 3, 2, 1, 0, 0, 0, 0]),
    ("cinema",     [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 2, 2, 2, 2, 2, 3, 4, 5, 4, 3, 2]),
    ("mall",       [0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 3, 3, 3, 3, 3, 3, 3, 4, 4, 3, 2, 1, 0, 0]),
    ("hotel",      [3, 2, 2, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 3, 4, 4, 3]),
    ("theater",    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 2, 4, 5, 5, 4, 2, 1]),
];

const CATEGORY_WORDS: [[&str; 6]; 12] = [
    ["beer", "cocktails", "pub", "draft", "whiskey", "snacks"],
    ["dance", "dj", "neon", "vip", "late", "basement"],
    ["coffee", "espresso", "latte", "pastry", "wifi", "brunch"],
    ["art", "history", "exhibits", "sculpture", "gallery", "relics"],
    ["books", "reading", "study", "archive", "quiet", "lending"],
    ["dinner", "noodles", "seafood", "grill", "spicy", "dumplings"],
    ["fitness", "weights", "yoga", "cardio", "trainer", "sauna"],
    ["garden", "trails", "lake", "picnic", "playground", "lawn"],
    ["movies", "screen", "popcorn", "premiere", "imax", "tickets"],
    ["shopping", "fashion", "outlets", "arcade", "foodcourt", "boutique"],
    ["rooms", "suite", "lodging", "breakfast", "spa", "lounge"],
    ["stage", "drama", "opera", "ballet", "orchestra", "matinee"],
];

const GENERIC_WORDS: [&str; 30] = [
    "downtown", "riverside", "cozy", "modern", "classic", "family", "local",
    "popular", "historic", "rooftop", "terrace", "vintage", "live", "music",
    "craft", "organic", "budget", "luxury", "central", "scenic", "famous",
    "hidden", "spacious", "friendly", "traditional", "trendy", "artisan",
    "seasonal", "waterfront", "courtyard",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthParams {
    pub objects: usize,
    pub users: usize,
    pub checkins: usize,
    pub queries: usize,
    pub seed: u64,
}

impl SynthParams {
    pub fn new(objects: usize, users: usize, seed: u64) -> Self {
        SynthParams {
            objects,
            users,
            checkins: users * DEFAULT_CHECKINS_PER_USER,
            queries: DEFAULT_QUERY_COUNT,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.objects == 0 {
            return Err(Error::InvalidParameter("object count must be at least 1".into()));
        }
        if self.users == 0 {
            return Err(Error::InvalidParameter("user count must be at least 1".into()));
        }
        if self.checkins < self.users {
            return Err(Error::InvalidParameter(format!(
                "{} check-ins cannot cover {} users; every user checks in at least once",
                self.checkins, self.users
            )));
        }
        Ok(())
    }
}

/// The generated corpus as CSV text, ready to write or ingest.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub objects_csv: String,
    pub checkins_csv: String,
    pub friends_csv: String,
    pub queries_csv: String,
}

impl SynthCorpus {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("objects.csv"), &self.objects_csv)?;
        std::fs::write(dir.join("checkins.csv"), &self.checkins_csv)?;
        std::fs::write(dir.join("friends.csv"), &self.friends_csv)?;
        std::fs::write(dir.join("queries.csv"), &self.queries_csv)?;
        Ok(())
    }
}

struct ObjectSpec {
    id: String,
    location: GeoPoint,
    category: usize,
    keywords: Vec<(String, u32)>,
}

/// Rank-weighted pick: item `i` drawn with weight `1 / (i + 1)`.
fn zipf_index(rng: &mut ChaCha8Rng, len: usize) -> usize {
    let total: f64 = (1..=len).map(|r| 1.0 / r as f64).sum();
    let mut draw = rng.gen::<f64>() * total;
    for i in 0..len {
        draw -= 1.0 / (i + 1) as f64;
        if draw <= 0.0 {
            return i;
        }
    }
    len - 1
}

fn weighted_index(rng: &mut ChaCha8Rng, weights: &[f64], total: f64) -> usize {
    let mut draw = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        draw -= w;
        if draw <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

fn hour_from_profile(rng: &mut ChaCha8Rng, profile: &[u32; 24]) -> u32 {
    let total: u32 = profile.iter().sum();
    let mut draw = rng.gen_range(0..total);
    for (hour, &w) in profile.iter().enumerate() {
        if draw < w {
            return hour as u32;
        }
        draw -= w;
    }
    23
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn generate(params: &SynthParams) -> Result<SynthCorpus> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let cluster_centers: Vec<GeoPoint> = (0..GEO_CLUSTERS)
        .map(|_| GeoPoint {
            lat: rng.gen_range(MAP_LAT.0..MAP_LAT.1),
            lon: rng.gen_range(MAP_LON.0..MAP_LON.1),
        })
        .collect();

    let id_width = params.objects.max(2).ilog10() as usize + 1;
    let objects: Vec<ObjectSpec> = (0..params.objects)
        .map(|i| {
            let category = rng.gen_range(0..CATEGORIES.len());
            let location = if rng.gen::<f64>() < 0.1 {
                GeoPoint {
                    lat: rng.gen_range(MAP_LAT.0..MAP_LAT.1),
                    lon: rng.gen_range(MAP_LON.0..MAP_LON.1),
                }
            } else {
                let center = &cluster_centers[rng.gen_range(0..GEO_CLUSTERS)];
                jitter_km(&mut rng, center, 1.5)
            };
            let mut keywords: Vec<(String, u32)> = Vec::new();
            for _ in 0..rng.gen_range(2..=4) {
                let word = if rng.gen::<f64>() < 0.7 {
                    CATEGORY_WORDS[category][zipf_index(&mut rng, 6)]
                } else {
                    GENERIC_WORDS[zipf_index(&mut rng, GENERIC_WORDS.len())]
                };
                let count = rng.gen_range(1..=3);
                match keywords.iter_mut().find(|(w, _)| w == word) {
                    Some(slot) => slot.1 += count,
                    None => keywords.push((word.to_string(), count)),
                }
            }
            ObjectSpec {
                id: format!("o{i:0id_width$}"),
                location,
                category,
                keywords,
            }
        })
        .collect();

    // community tastes: sharpened random category preferences plus a home
    // cluster each, so users of one community co-visit the same venues
    let tastes: Vec<[f64; 12]> = (0..COMMUNITIES)
        .map(|_| {
            let mut t = [0.0; 12];
            for slot in &mut t {
                let e = -f64::ln(1.0 - rng.gen::<f64>());
                *slot = e * e;
            }
            let sum: f64 = t.iter().sum();
            for slot in &mut t {
                *slot = *slot / sum + 0.01;
            }
            t
        })
        .collect();
    let home_clusters: Vec<usize> = (0..COMMUNITIES).map(|c| c % GEO_CLUSTERS).collect();

    let user_width = params.users.max(2).ilog10() as usize + 1;
    let user_ids: Vec<String> = (0..params.users)
        .map(|i| format!("u{i:0user_width$}"))
        .collect();
    let communities: Vec<usize> = (0..params.users)
        .map(|_| rng.gen_range(0..COMMUNITIES))
        .collect();
    let homes: Vec<GeoPoint> = (0..params.users)
        .map(|u| jitter_km(&mut rng, &cluster_centers[home_clusters[communities[u]]], 2.5))
        .collect();

    // lognormal activity split of the check-in budget, one guaranteed each
    let activity: Vec<f64> = (0..params.users)
        .map(|_| {
            let u: f64 = rng.gen_range(1e-9..1.0);
            let v: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let normal = (-2.0 * u.ln()).sqrt() * v.cos();
            (0.7 * normal).exp()
        })
        .collect();
    let activity_total: f64 = activity.iter().sum();
    let mut checkin_counts = vec![1usize; params.users];
    for _ in 0..params.checkins - params.users {
        checkin_counts[weighted_index(&mut rng, &activity, activity_total)] += 1;
    }

    let base_date = NaiveDate::from_ymd_opt(2010, 4, 1).expect("valid date");
    let mut checkin_rows: Vec<String> = Vec::with_capacity(params.checkins);
    let mut appeal = vec![0.0f64; params.objects];
    for u in 0..params.users {
        let taste = &tastes[communities[u]];
        let mut total = 0.0;
        for (slot, o) in appeal.iter_mut().zip(&objects) {
            let d = haversine_km(&homes[u], &o.location);
            *slot = (-d / DISTANCE_SCALE_KM).exp() * taste[o.category];
            total += *slot;
        }
        for _ in 0..checkin_counts[u] {
            let o = &objects[weighted_index(&mut rng, &appeal, total)];
            let date = base_date
                .checked_add_days(Days::new(rng.gen_range(0..DAY_WINDOW)))
                .expect("date in range");
            let time = NaiveTime::from_hms_opt(
                hour_from_profile(&mut rng, &CATEGORIES[o.category].1),
                rng.gen_range(0..60),
                rng.gen_range(0..60),
            )
            .expect("valid time");
            checkin_rows.push(format!(
                "{},{},{}",
                user_ids[u],
                o.id,
                NaiveDateTime::new(date, time).format("%Y-%m-%dT%H:%M:%S")
            ));
        }
    }

    // friendships: ~4 edges per user, four in five inside the community
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    if params.users > 1 {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); COMMUNITIES];
        for (u, &c) in communities.iter().enumerate() {
            members[c].push(u);
        }
        let target = params.users * 4;
        let mut attempts = 0;
        while edges.len() < target && attempts < target * 20 {
            attempts += 1;
            let pool: &[usize] = if rng.gen::<f64>() < 0.8 {
                let c = communities[rng.gen_range(0..params.users)];
                &members[c]
            } else {
                &[]
            };
            let (a, b) = if pool.len() >= 2 {
                (
                    pool[rng.gen_range(0..pool.len())],
                    pool[rng.gen_range(0..pool.len())],
                )
            } else {
                (
                    rng.gen_range(0..params.users),
                    rng.gen_range(0..params.users),
                )
            };
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
    }

    let queries = (0..params.queries)
        .map(|_| {
            let user = &user_ids[rng.gen_range(0..params.users)];
            let near = rng.gen_range(0..GEO_CLUSTERS);
            let at = jitter_km(&mut rng, &cluster_centers[near], 2.0);
            let mut words: Vec<&str> = Vec::new();
            for _ in 0..rng.gen_range(1..=5) {
                let w = if rng.gen::<f64>() < 0.6 {
                    let c = rng.gen_range(0..CATEGORIES.len());
                    CATEGORY_WORDS[c][zipf_index(&mut rng, 6)]
                } else {
                    GENERIC_WORDS[zipf_index(&mut rng, GENERIC_WORDS.len())]
                };
                if !words.contains(&w) {
                    words.push(w);
                }
            }
            let date = base_date
                .checked_add_days(Days::new(rng.gen_range(0..DAY_WINDOW)))
                .expect("date in range");
            let time = NaiveTime::from_hms_opt(rng.gen_range(0..24), rng.gen_range(0..60), 0)
                .expect("valid time");
            format!(
                "{},{:.6},{:.6},{},{},5",
                user,
                at.lat,
                at.lon,
                csv_field(&words.join("|")),
                NaiveDateTime::new(date, time).format("%Y-%m-%dT%H:%M:%S")
            )
        })
        .collect::<Vec<_>>();

    let mut objects_csv = String::from("id,lat,lon,category,keywords\n");
    for o in &objects {
        let keywords = o
            .keywords
            .iter()
            .map(|(w, c)| format!("{w}:{c}"))
            .collect::<Vec<_>>()
            .join("|");
        objects_csv.push_str(&format!(
            "{},{:.6},{:.6},{},{}\n",
            o.id,
            o.location.lat,
            o.location.lon,
            CATEGORIES[o.category].0,
            csv_field(&keywords)
        ));
    }
    let mut checkins_csv = String::from("user_id,object_id,timestamp\n");
    for row in &checkin_rows {
        checkins_csv.push_str(row);
        checkins_csv.push('\n');
    }
    let mut friends_csv = String::from("user_a,user_b\n");
    for &(a, b) in &edges {
        friends_csv.push_str(&format!("{},{}\n", user_ids[a], user_ids[b]));
    }
    let mut queries_csv = String::from("user_id,lat,lon,keywords,timestamp,k\n");
    for q in &queries {
        queries_csv.push_str(q);
        queries_csv.push('\n');
    }

    Ok(SynthCorpus {
        objects_csv,
        checkins_csv,
        friends_csv,
        queries_csv,
    })
}

/// Gaussian scatter around `center` with the given standard deviation.
fn jitter_km(rng: &mut ChaCha8Rng, center: &GeoPoint, sigma_km: f64) -> GeoPoint {
    let u: f64 = rng.gen_range(1e-9..1.0);
    let v: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (-2.0 * u.ln()).sqrt();
    let (dx, dy) = (r * v.cos() * sigma_km, r * v.sin() * sigma_km);
    let km_per_deg_lat = 111.32;
    let km_per_deg_lon = 111.32 * center.lat.to_radians().cos();
    GeoPoint {
        lat: (center.lat + dy / km_per_deg_lat).clamp(-89.9, 89.9),
        lon: center.lon + dx / km_per_deg_lon,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ingest, IntervalScheme};
    use std::collections::BTreeMap;

    fn small() -> SynthParams {
        SynthParams {
            objects: 120,
            users: 40,
            checkins: 2000,
            queries: 10,
            seed: 7,
        }
    }

    fn ingest_generated(
        params: &SynthParams,
    ) -> (
        crate::model::Corpus,
        Vec<crate::model::CheckIn>,
        Vec<(crate::model::UserId, crate::model::UserId)>,
    ) {
        let corpus = generate(params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        corpus.write_to(dir.path()).unwrap();
        ingest(
            &dir.path().join("objects.csv"),
            &dir.path().join("checkins.csv"),
            &dir.path().join("friends.csv"),
            IntervalScheme::new(24).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn same_seed_reproduces_every_byte() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.objects_csv, b.objects_csv);
        assert_eq!(a.checkins_csv, b.checkins_csv);
        assert_eq!(a.friends_csv, b.friends_csv);
        assert_eq!(a.queries_csv, b.queries_csv);
        let other = generate(&SynthParams { seed: 8, ..small() }).unwrap();
        assert_ne!(a.checkins_csv, other.checkins_csv);
    }

    #[test]
    fn generated_files_pass_ingestion() {
        let params = small();
        let (corpus, checkins, friendships) = ingest_generated(&params);
        assert_eq!(corpus.len(), params.objects);
        assert_eq!(checkins.len(), params.checkins);
        assert!(!friendships.is_empty());

        let mut active: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &checkins {
            *active.entry(c.user.0.as_str()).or_default() += 1;
        }
        assert_eq!(active.len(), params.users, "every user checks in");
    }

    #[test]
    fn checkin_hours_respect_opening_profiles() {
        let (corpus, checkins, _) = ingest_generated(&small());
        let mut bar_hist = [0u32; 24];
        let mut bar_total = 0u32;
        for c in &checkins {
            let category = &corpus.get(&c.object).unwrap().category;
            if category == "bar" {
                bar_hist[chrono::Timelike::hour(&c.time) as usize] += 1;
                bar_total += 1;
            }
        }
        assert!(bar_total > 50, "enough bar traffic to judge ({bar_total})");
        for hour in 3..=16 {
            assert_eq!(bar_hist[hour], 0, "bars are closed at {hour}:00");
        }
        let evening: u32 = (17..24).map(|h| bar_hist[h]).sum();
        assert!(evening > 0);
    }

    #[test]
    fn most_objects_are_closed_before_dawn() {
        let (corpus, _, _) = ingest_generated(&small());
        let closed = corpus
            .objects()
            .iter()
            .filter(|o| o.time_dist.score_at(4) == 0.0)
            .count();
        let share = closed as f64 / corpus.len() as f64;
        assert!(share > 0.6, "only {share:.2} of objects closed at 04:00");
    }

    #[test]
    fn rejects_budget_smaller_than_roster() {
        let params = SynthParams {
            checkins: 10,
            ..small()
        };
        assert!(matches!(
            generate(&params),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            generate(&SynthParams::new(0, 5, 1)),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn query_batch_references_known_users() {
        let params = small();
        let generated = generate(&params).unwrap();
        let (_, checkins, _) = ingest_generated(&params);
        let known: BTreeSet<&str> = checkins.iter().map(|c| c.user.0.as_str()).collect();
        let mut rows = 0;
        for line in generated.queries_csv.lines().skip(1) {
            let user = line.split(',').next().unwrap();
            assert!(known.contains(user), "query user {user} never checks in");
            rows += 1;
        }
        assert_eq!(rows, params.queries);
    }
}
