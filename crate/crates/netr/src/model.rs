//! Corpus model: spatial objects, check-in records, and the derived
//! per-object statistics (check-in time distributions, TF-IDF keyword
//! weights) that the index layers consume.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{check_coordinates, GeoPoint};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Even partition of the 24-hour day. A timestamp maps to exactly one
/// interval through its local hour of day; minutes and seconds are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalScheme {
    count: usize,
}

impl IntervalScheme {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 || count > 24 {
            return Err(Error::InvalidParameter(format!(
                "interval count {count} out of range [1, 24]"
            )));
        }
        Ok(IntervalScheme { count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn interval_of_hour(&self, hour: u32) -> usize {
        debug_assert!(hour < 24);
        hour as usize * self.count / 24
    }

    pub fn interval_of(&self, t: &NaiveDateTime) -> usize {
        self.interval_of_hour(t.hour())
    }
}

/// Discrete probability distribution of an object's check-ins over the day's
/// intervals. All-zero when the object has no check-ins; otherwise the
/// entries sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeDistribution {
    probs: Vec<f64>,
}

impl TimeDistribution {
    pub fn empty(scheme: IntervalScheme) -> Self {
        TimeDistribution {
            probs: vec![0.0; scheme.count()],
        }
    }

    pub fn from_times<'a, I>(times: I, scheme: IntervalScheme) -> Self
    where
        I: IntoIterator<Item = &'a NaiveDateTime>,
    {
        let mut counts = vec![0u64; scheme.count()];
        let mut total = 0u64;
        for t in times {
            counts[scheme.interval_of(t)] += 1;
            total += 1;
        }
        if total == 0 {
            return TimeDistribution::empty(scheme);
        }
        TimeDistribution {
            probs: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        }
    }

    /// Rebuilds a distribution from already-validated probabilities, e.g.
    /// when loading a persisted index.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        let ok = probs.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (sum == 0.0 || (sum - 1.0).abs() <= 1e-9);
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "time distribution entries must be non-negative and sum to 0 or 1, got sum {sum}"
            )));
        }
        Ok(TimeDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, interval: usize) -> f64 {
        self.probs[interval]
    }

    pub fn is_zero(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0)
    }

    /// Per-interval probability divided by the peak probability: the exact
    /// visiting-time score of the object at each interval. All-zero for
    /// objects without check-ins.
    pub fn score_profile(&self) -> Vec<f64> {
        let peak = self.probs.iter().cloned().fold(0.0_f64, f64::max);
        if peak == 0.0 {
            return vec![0.0; self.probs.len()];
        }
        self.probs.iter().map(|&p| p / peak).collect()
    }

    /// Single entry of [`score_profile`](Self::score_profile) without
    /// materializing the whole vector.
    pub fn score_at(&self, interval: usize) -> f64 {
        let peak = self.probs.iter().cloned().fold(0.0_f64, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        self.probs[interval] / peak
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialObject {
    pub id: ObjectId,
    pub location: GeoPoint,
    pub category: String,
    /// Raw keyword occurrence counts as ingested.
    pub keyword_counts: BTreeMap<String, u32>,
    /// TF-IDF weight per keyword; empty until weights are computed.
    pub keywords: BTreeMap<String, f64>,
    pub time_dist: TimeDistribution,
    pub total_checkins: u32,
}

impl SpatialObject {
    pub fn keyword_weight(&self, keyword: &str) -> f64 {
        self.keywords.get(keyword).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckIn {
    pub user: UserId,
    pub object: ObjectId,
    pub time: NaiveDateTime,
}

/// Immutable object collection with corpus-level keyword statistics.
#[derive(Debug, Clone)]
pub struct Corpus {
    objects: Vec<SpatialObject>,
    by_id: HashMap<ObjectId, usize>,
    doc_freq: BTreeMap<String, u32>,
    phi_max: f64,
    categories: Vec<String>,
}

impl Corpus {
    /// Builds a corpus from objects. Objects are sorted by id; duplicate ids
    /// are rejected. Keyword weights are not computed here.
    pub fn from_objects(mut objects: Vec<SpatialObject>) -> Result<Self> {
        objects.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in objects.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::InvalidParameter(format!(
                    "duplicate object id `{}`",
                    pair[0].id
                )));
            }
        }
        let by_id = objects
            .iter()
            .enumerate()
            .map(|(i, o)| (o.id.clone(), i))
            .collect();
        let mut doc_freq: BTreeMap<String, u32> = BTreeMap::new();
        let mut categories: BTreeSet<String> = BTreeSet::new();
        for o in &objects {
            categories.insert(o.category.clone());
            for word in o.keyword_counts.keys() {
                *doc_freq.entry(word.clone()).or_insert(0) += 1;
            }
        }
        Ok(Corpus {
            objects,
            by_id,
            doc_freq,
            phi_max: 0.0,
            categories: categories.into_iter().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn objects(&self) -> &[SpatialObject] {
        &self.objects
    }

    pub fn get(&self, id: &ObjectId) -> Option<&SpatialObject> {
        self.by_id.get(id).map(|&i| &self.objects[i])
    }

    pub fn contains(&self, id: &ObjectId) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn doc_freq(&self, keyword: &str) -> u32 {
        self.doc_freq.get(keyword).copied().unwrap_or(0)
    }

    /// Largest single-keyword TF-IDF weight across the corpus; 0 until
    /// weights are computed and for corpora where every keyword is ubiquitous.
    pub fn phi_max(&self) -> f64 {
        self.phi_max
    }

    /// Recovers the corpus-level peak keyword weight from weights already
    /// present on the objects, for corpora rebuilt from persisted form where
    /// [`compute_tf_idf`] must not run again.
    pub fn restore_phi_max(&mut self) {
        self.phi_max = self
            .objects
            .iter()
            .flat_map(|o| o.keywords.values())
            .fold(0.0_f64, |acc, &w| acc.max(w));
    }

    /// Distinct categories, sorted.
    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn category_index(&self, category: &str) -> Option<usize> {
        self.categories.binary_search_by(|c| c.as_str().cmp(category)).ok()
    }

    /// Attaches the aggregated check-in time distribution and total to each
    /// object. Check-ins must reference known objects.
    pub fn attach_time_distributions(
        &mut self,
        checkins: &[CheckIn],
        scheme: IntervalScheme,
    ) -> Result<()> {
        let mut times: HashMap<&ObjectId, Vec<&NaiveDateTime>> = HashMap::new();
        for c in checkins {
            if !self.by_id.contains_key(&c.object) {
                return Err(Error::UnknownObject {
                    id: c.object.0.clone(),
                });
            }
            times.entry(&c.object).or_default().push(&c.time);
        }
        let dists: Vec<(usize, TimeDistribution, u32)> = times
            .iter()
            .map(|(id, ts)| {
                let idx = self.by_id[*id];
                let dist = TimeDistribution::from_times(ts.iter().copied(), scheme);
                (idx, dist, ts.len() as u32)
            })
            .collect();
        for o in &mut self.objects {
            o.time_dist = TimeDistribution::empty(scheme);
            o.total_checkins = 0;
        }
        for (idx, dist, total) in dists {
            self.objects[idx].time_dist = dist;
            self.objects[idx].total_checkins = total;
        }
        Ok(())
    }
}

/// Fills every object's keyword weights with tf * ln(N / df) and records the
/// corpus-wide maximum. A keyword present in every object weighs 0; a
/// single-object corpus therefore weighs everything 0.
pub fn compute_tf_idf(corpus: &mut Corpus) {
    let n = corpus.objects.len() as f64;
    let doc_freq = corpus.doc_freq.clone();
    let mut phi_max = 0.0_f64;
    for o in &mut corpus.objects {
        o.keywords = o
            .keyword_counts
            .iter()
            .map(|(word, &count)| {
                let df = doc_freq[word] as f64;
                let weight = count as f64 * (n / df).ln();
                phi_max = phi_max.max(weight);
                (word.clone(), weight)
            })
            .collect();
    }
    corpus.phi_max = phi_max;
}

/// Parses a `word[:count]` keyword token; the count defaults to 1.
fn parse_keyword_token(token: &str) -> std::result::Result<(String, u32), String> {
    let (word, count) = match token.split_once(':') {
        Some((w, c)) => {
            let count: u32 = c
                .parse()
                .map_err(|_| format!("keyword count `{c}` is not a positive integer"))?;
            (w, count)
        }
        None => (token, 1),
    };
    if word.is_empty() {
        return Err("empty keyword".to_string());
    }
    if count == 0 {
        return Err(format!("keyword `{word}` has zero count"));
    }
    Ok((word.to_string(), count))
}

fn open_csv(path: &Path, expected_header: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::corrupt(path.display().to_string(), format!("cannot open: {e}"))
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), 1, e.to_string()))?;
    let actual: Vec<&str> = headers.iter().collect();
    if actual != expected_header {
        return Err(Error::parse(
            path.display().to_string(),
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected_header.join(","),
                actual.join(",")
            ),
        ));
    }
    Ok(reader)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn read_object_rows(path: &Path) -> Result<Vec<SpatialObject>> {
    let file_name = path.display().to_string();
    let mut reader = open_csv(path, &["id", "lat", "lon", "category", "keywords"])?;
    let mut objects = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for row in reader.records() {
        let record = row.map_err(|e| Error::parse(&file_name, 0, e.to_string()))?;
        let line = record_line(&record);
        let field = |i: usize, name: &str| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| Error::parse(&file_name, line, format!("missing field `{name}`")))
        };
        let id = field(0, "id")?;
        if id.is_empty() {
            return Err(Error::parse(&file_name, line, "empty field `id`"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(
                &file_name,
                line,
                format!("duplicate object id `{id}`"),
            ));
        }
        let lat: f64 = field(1, "lat")?.parse().map_err(|_| {
            Error::parse(&file_name, line, format!("field `lat`: `{}` is not a number", record.get(1).unwrap_or("")))
        })?;
        let lon: f64 = field(2, "lon")?.parse().map_err(|_| {
            Error::parse(&file_name, line, format!("field `lon`: `{}` is not a number", record.get(2).unwrap_or("")))
        })?;
        check_coordinates(lat, lon)
            .map_err(|msg| Error::parse(&file_name, line, format!("field `lat`/`lon`: {msg}")))?;
        let category = field(3, "category")?;
        if category.is_empty() {
            return Err(Error::parse(&file_name, line, "empty field `category`"));
        }
        let mut keyword_counts: BTreeMap<String, u32> = BTreeMap::new();
        let keywords_field = field(4, "keywords")?;
        if !keywords_field.is_empty() {
            for token in keywords_field.split('|') {
                let (word, count) = parse_keyword_token(token).map_err(|msg| {
                    Error::parse(&file_name, line, format!("field `keywords`: {msg}"))
                })?;
                *keyword_counts.entry(word).or_insert(0) += count;
            }
        }
        objects.push(SpatialObject {
            id: ObjectId(id.to_string()),
            location: GeoPoint { lat, lon },
            category: category.to_string(),
            keyword_counts,
            keywords: BTreeMap::new(),
            time_dist: TimeDistribution { probs: Vec::new() },
            total_checkins: 0,
        });
    }
    Ok(objects)
}

fn read_checkin_rows(path: &Path, corpus: &Corpus) -> Result<Vec<CheckIn>> {
    let file_name = path.display().to_string();
    let mut reader = open_csv(path, &["user_id", "object_id", "timestamp"])?;
    let mut checkins = Vec::new();
    for row in reader.records() {
        let record = row.map_err(|e| Error::parse(&file_name, 0, e.to_string()))?;
        let line = record_line(&record);
        let user = record.get(0).unwrap_or("");
        let object = record.get(1).unwrap_or("");
        let stamp = record.get(2).unwrap_or("");
        if user.is_empty() {
            return Err(Error::parse(&file_name, line, "empty field `user_id`"));
        }
        if object.is_empty() {
            return Err(Error::parse(&file_name, line, "empty field `object_id`"));
        }
        let object_id = ObjectId(object.to_string());
        if !corpus.contains(&object_id) {
            return Err(Error::UnknownObject {
                id: object.to_string(),
            });
        }
        let time = NaiveDateTime::parse_from_str(stamp, TIMESTAMP_FORMAT).map_err(|_| {
            Error::parse(
                &file_name,
                line,
                format!("field `timestamp`: `{stamp}` is not an ISO-8601 local time (expected e.g. 2010-05-01T20:13:00)"),
            )
        })?;
        checkins.push(CheckIn {
            user: UserId(user.to_string()),
            object: object_id,
            time,
        });
    }
    Ok(checkins)
}

fn read_friend_rows(path: &Path) -> Result<Vec<(UserId, UserId)>> {
    let file_name = path.display().to_string();
    let mut reader = open_csv(path, &["user_a", "user_b"])?;
    let mut pairs: BTreeSet<(UserId, UserId)> = BTreeSet::new();
    for row in reader.records() {
        let record = row.map_err(|e| Error::parse(&file_name, 0, e.to_string()))?;
        let line = record_line(&record);
        let a = record.get(0).unwrap_or("");
        let b = record.get(1).unwrap_or("");
        if a.is_empty() || b.is_empty() {
            return Err(Error::parse(&file_name, line, "empty user id field"));
        }
        if a == b {
            return Err(Error::parse(
                &file_name,
                line,
                format!("self friendship for user `{a}`"),
            ));
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        pairs.insert((UserId(lo.to_string()), UserId(hi.to_string())));
    }
    Ok(pairs.into_iter().collect())
}

/// Loads the three input files and assembles the corpus: objects sorted by
/// id, per-object time distributions attached, friendship edges deduplicated.
/// Keyword weights are left for [`compute_tf_idf`].
pub fn ingest(
    objects_path: &Path,
    checkins_path: &Path,
    friends_path: &Path,
    scheme: IntervalScheme,
) -> Result<(Corpus, Vec<CheckIn>, Vec<(UserId, UserId)>)> {
    let objects = read_object_rows(objects_path)?;
    let mut corpus = Corpus::from_objects(objects)?;
    let checkins = read_checkin_rows(checkins_path, &corpus)?;
    let friends = read_friend_rows(friends_path)?;
    corpus.attach_time_distributions(&checkins, scheme)?;
    Ok((corpus, checkins, friends))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn scheme(count: usize) -> IntervalScheme {
        IntervalScheme::new(count).unwrap()
    }

    fn time(hms: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(&format!("2010-05-01T{hms}"), TIMESTAMP_FORMAT).unwrap()
    }

    fn object(id: &str, keywords: &[(&str, u32)]) -> SpatialObject {
        SpatialObject {
            id: ObjectId(id.to_string()),
            location: GeoPoint { lat: 0.0, lon: 0.0 },
            category: "cafe".to_string(),
            keyword_counts: keywords
                .iter()
                .map(|(w, c)| (w.to_string(), *c))
                .collect(),
            keywords: BTreeMap::new(),
            time_dist: TimeDistribution::empty(scheme(24)),
            total_checkins: 0,
        }
    }

    #[test]
    fn interval_mapping_partitions_the_day() {
        let hourly = scheme(24);
        for h in 0..24 {
            assert_eq!(hourly.interval_of_hour(h), h as usize);
        }
        let four_hour = scheme(6);
        assert_eq!(four_hour.interval_of_hour(0), 0);
        assert_eq!(four_hour.interval_of_hour(3), 0);
        assert_eq!(four_hour.interval_of_hour(4), 1);
        assert_eq!(four_hour.interval_of_hour(23), 5);
        assert!(IntervalScheme::new(0).is_err());
        assert!(IntervalScheme::new(25).is_err());
    }

    #[test]
    fn time_distribution_from_observed_hours() {
        let times = vec![
            time("20:13:00"),
            time("20:45:00"),
            time("21:01:00"),
            time("23:59:00"),
        ];
        let dist = TimeDistribution::from_times(&times, scheme(24));
        assert_eq!(dist.prob(20), 0.5);
        assert_eq!(dist.prob(21), 0.25);
        assert_eq!(dist.prob(22), 0.0);
        assert_eq!(dist.prob(23), 0.25);
        let sum: f64 = dist.probs().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn time_distribution_single_and_empty() {
        let single = TimeDistribution::from_times(&[time("09:30:00")], scheme(24));
        assert_eq!(single.prob(9), 1.0);
        assert_eq!(single.probs().iter().filter(|&&p| p > 0.0).count(), 1);

        let none = TimeDistribution::from_times(&[], scheme(24));
        assert!(none.is_zero());
        assert!(none.score_profile().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn score_profile_peaks_at_one() {
        let times = vec![time("20:00:00"), time("20:30:00"), time("21:00:00")];
        let dist = TimeDistribution::from_times(&times, scheme(24));
        let profile = dist.score_profile();
        assert_eq!(profile[20], 1.0);
        assert_eq!(profile[21], 0.5);
        assert_eq!(profile[5], 0.0);
    }

    #[test]
    fn tf_idf_weights_and_phi_max() {
        let mut objects: Vec<SpatialObject> = (0..100)
            .map(|i| object(&format!("o{i:03}"), &[("shared", 1)]))
            .collect();
        objects[0].keyword_counts.insert("rare".to_string(), 1);
        let mut corpus = Corpus::from_objects(objects).unwrap();
        compute_tf_idf(&mut corpus);
        let first = corpus.get(&ObjectId("o000".to_string())).unwrap();
        // A keyword carried by every object is worthless.
        assert_eq!(first.keyword_weight("shared"), 0.0);
        let expected = (100.0_f64).ln();
        assert!((first.keyword_weight("rare") - expected).abs() < 1e-12);
        assert!((corpus.phi_max() - expected).abs() < 1e-12);
    }

    #[test]
    fn tf_idf_single_object_corpus_is_all_zero() {
        let mut corpus =
            Corpus::from_objects(vec![object("only", &[("coffee", 3)])]).unwrap();
        compute_tf_idf(&mut corpus);
        assert_eq!(corpus.phi_max(), 0.0);
        assert_eq!(
            corpus
                .get(&ObjectId("only".to_string()))
                .unwrap()
                .keyword_weight("coffee"),
            0.0
        );
    }

    #[test]
    fn tf_idf_scales_with_term_frequency() {
        let mut corpus = Corpus::from_objects(vec![
            object("a", &[("beer", 2)]),
            object("b", &[("wine", 1)]),
            object("c", &[("wine", 1), ("beer", 1)]),
        ])
        .unwrap();
        compute_tf_idf(&mut corpus);
        let a = corpus.get(&ObjectId("a".to_string())).unwrap();
        let c = corpus.get(&ObjectId("c".to_string())).unwrap();
        let idf_beer = (3.0_f64 / 2.0).ln();
        assert!((a.keyword_weight("beer") - 2.0 * idf_beer).abs() < 1e-12);
        assert!((c.keyword_weight("beer") - idf_beer).abs() < 1e-12);
        let max = corpus
            .objects()
            .iter()
            .flat_map(|o| o.keywords.values())
            .cloned()
            .fold(0.0_f64, f64::max);
        assert_eq!(corpus.phi_max(), max);
    }

    fn write_file(dir: &std::path::Path, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    const OBJECTS_CSV: &str = "id,lat,lon,category,keywords\n\
        o001,39.90,116.40,bar,beer:2|cocktail\n\
        o002,39.91,116.41,cafe,coffee|wifi\n\
        o003,39.92,116.42,museum,art\n";

    const CHECKINS_CSV: &str = "user_id,object_id,timestamp\n\
        u01,o001,2010-05-01T20:13:00\n\
        u01,o001,2010-05-02T21:40:00\n\
        u02,o002,2010-05-01T09:05:00\n\
        u02,o003,2010-05-03T14:00:00\n\
        u03,o001,2010-05-04T22:30:00\n";

    const FRIENDS_CSV: &str = "user_a,user_b\nu01,u02\nu02,u01\nu02,u03\n";

    #[test]
    fn ingest_assembles_corpus_checkins_and_friends() {
        let dir = tempfile::tempdir().unwrap();
        let objects = write_file(dir.path(), "objects.csv", OBJECTS_CSV);
        let checkins = write_file(dir.path(), "checkins.csv", CHECKINS_CSV);
        let friends = write_file(dir.path(), "friends.csv", FRIENDS_CSV);
        let (corpus, records, pairs) =
            ingest(&objects, &checkins, &friends, scheme(24)).unwrap();

        assert_eq!(corpus.len(), 3);
        assert_eq!(records.len(), 5);
        let total: u32 = corpus.objects().iter().map(|o| o.total_checkins).sum();
        assert_eq!(total, 5);
        let bar = corpus.get(&ObjectId("o001".to_string())).unwrap();
        assert_eq!(bar.total_checkins, 3);
        assert_eq!(bar.keyword_counts["beer"], 2);
        assert!((bar.time_dist.prob(20) - 1.0 / 3.0).abs() < 1e-12);
        // Reversed duplicate edge collapses.
        assert_eq!(pairs.len(), 2);
        assert_eq!(corpus.categories(), ["bar", "cafe", "museum"]);
    }

    #[test]
    fn ingest_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let objects = write_file(dir.path(), "objects.csv", OBJECTS_CSV);
        let checkins = write_file(dir.path(), "checkins.csv", CHECKINS_CSV);
        let friends = write_file(dir.path(), "friends.csv", FRIENDS_CSV);
        let (corpus_a, records_a, pairs_a) =
            ingest(&objects, &checkins, &friends, scheme(24)).unwrap();
        let (corpus_b, records_b, pairs_b) =
            ingest(&objects, &checkins, &friends, scheme(24)).unwrap();
        assert_eq!(corpus_a.objects(), corpus_b.objects());
        assert_eq!(records_a, records_b);
        assert_eq!(pairs_a, pairs_b);
    }

    #[test]
    fn ingest_rejects_out_of_range_latitude_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let objects = write_file(
            dir.path(),
            "objects.csv",
            "id,lat,lon,category,keywords\no001,91.0,10.0,bar,beer\n",
        );
        let checkins = write_file(dir.path(), "checkins.csv", "user_id,object_id,timestamp\n");
        let friends = write_file(dir.path(), "friends.csv", "user_a,user_b\n");
        let err = ingest(&objects, &checkins, &friends, scheme(24)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("objects.csv"), "{msg}");
        assert!(msg.contains(":2:"), "{msg}");
        assert!(msg.contains("latitude"), "{msg}");
    }

    #[test]
    fn ingest_rejects_dangling_checkin() {
        let dir = tempfile::tempdir().unwrap();
        let objects = write_file(
            dir.path(),
            "objects.csv",
            "id,lat,lon,category,keywords\no001,10.0,10.0,bar,beer\n",
        );
        let checkins = write_file(
            dir.path(),
            "checkins.csv",
            "user_id,object_id,timestamp\nu01,ghost,2010-05-01T20:00:00\n",
        );
        let friends = write_file(dir.path(), "friends.csv", "user_a,user_b\n");
        let err = ingest(&objects, &checkins, &friends, scheme(24)).unwrap_err();
        assert!(matches!(err, Error::UnknownObject { ref id } if id == "ghost"));
    }

    #[test]
    fn ingest_rejects_bad_timestamp_and_self_friendship() {
        let dir = tempfile::tempdir().unwrap();
        let objects = write_file(
            dir.path(),
            "objects.csv",
            "id,lat,lon,category,keywords\no001,10.0,10.0,bar,beer\n",
        );
        let bad_time = write_file(
            dir.path(),
            "checkins.csv",
            "user_id,object_id,timestamp\nu01,o001,yesterday\n",
        );
        let friends = write_file(dir.path(), "friends.csv", "user_a,user_b\n");
        let err = ingest(&objects, &bad_time, &friends, scheme(24)).unwrap_err();
        assert!(err.to_string().contains("timestamp"), "{err}");

        let ok_checkins = write_file(dir.path(), "ok.csv", "user_id,object_id,timestamp\n");
        let self_loop = write_file(dir.path(), "friends2.csv", "user_a,user_b\nu01,u01\n");
        let err = ingest(&objects, &ok_checkins, &self_loop, scheme(24)).unwrap_err();
        assert!(err.to_string().contains("self friendship"), "{err}");
    }

    #[test]
    fn ingest_rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let objects = write_file(
            dir.path(),
            "objects.csv",
            "object,lat,lon,category,keywords\n",
        );
        let checkins = write_file(dir.path(), "checkins.csv", "user_id,object_id,timestamp\n");
        let friends = write_file(dir.path(), "friends.csv", "user_a,user_b\n");
        let err = ingest(&objects, &checkins, &friends, scheme(24)).unwrap_err();
        assert!(err.to_string().contains("expected header"), "{err}");
    }

    #[test]
    fn ingest_with_no_checkins_leaves_zero_distributions() {
        let dir = tempfile::tempdir().unwrap();
        let objects = write_file(dir.path(), "objects.csv", OBJECTS_CSV);
        let checkins = write_file(dir.path(), "checkins.csv", "user_id,object_id,timestamp\n");
        let friends = write_file(dir.path(), "friends.csv", "user_a,user_b\n");
        let (corpus, records, _) = ingest(&objects, &checkins, &friends, scheme(24)).unwrap();
        assert!(records.is_empty());
        assert!(corpus.objects().iter().all(|o| o.time_dist.is_zero()));
        assert!(corpus.objects().iter().all(|o| o.total_checkins == 0));
    }

    proptest! {
        /// Distributions are insensitive to check-in order and always sum to
        /// 1 (or are all-zero).
        #[test]
        fn time_distribution_permutation_invariant(
            hours in proptest::collection::vec(0u32..24, 0..60),
            interval_count in 1usize..=24,
        ) {
            let s = scheme(interval_count);
            let times: Vec<NaiveDateTime> =
                hours.iter().map(|h| time(&format!("{h:02}:15:00"))).collect();
            let dist = TimeDistribution::from_times(&times, s);
            let mut reversed = times.clone();
            reversed.reverse();
            prop_assert_eq!(&dist, &TimeDistribution::from_times(&reversed, s));
            let sum: f64 = dist.probs().iter().sum();
            if times.is_empty() {
                prop_assert!(dist.is_zero());
            } else {
                prop_assert!((sum - 1.0).abs() <= 1e-9);
            }
            let profile = dist.score_profile();
            prop_assert!(profile.iter().all(|&v| (0.0..=1.0).contains(&v)));
            if !times.is_empty() {
                prop_assert!(profile.iter().any(|&v| v == 1.0));
            }
        }
    }
}
