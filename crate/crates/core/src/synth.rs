//! Deterministic synthetic photo corpora with a ground-truth manifest.
//!
//! The generator plants every fact the pipeline is supposed to recover:
//! home cities, the origin-destination trip table, per-cell photo counts,
//! label contradictions, and the exact number of duplicate, out-of-window,
//! bad-timestamp, and malformed rows. The manifest records what was actually
//! emitted, so tests compare pipeline output against it cell-for-cell.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{SourceLabel, TimeWindow, INPUT_HEADER};
use crate::registry::{City, CityId, CityRegistry, LatLon};
use crate::spatial::GridSpec;

/// One planted activity cell inside a city grid. Weights set the share of
/// that city's photos landing in the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
}

/// Per-city population of synthetic users.
///
/// `residents` get a guaranteed-recoverable home: at least `home_photos.0`
/// photos spread over more than 180 days. `adversarial_users` sit exactly on
/// the wrong side of the home thresholds (9 photos, or a span of exactly 180
/// days) and must never be homed. `unknown_users` take 1..=3 photos.
/// The first `contradiction_users` residents get one trip written with a
/// resident label in the destination city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCity {
    pub city_id: CityId,
    pub residents: u32,
    pub adversarial_users: u32,
    pub unknown_users: u32,
    pub contradiction_users: u32,
    pub clusters: Vec<ClusterSpec>,
}

/// One directed tourism flow: `travelers` residents of `origin` each take a
/// single trip (at most 14 days) to `dest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripSpec {
    pub origin: CityId,
    pub dest: CityId,
    pub travelers: u32,
    /// Inclusive range of photos each traveler takes on the trip.
    pub photos_per_traveler: (u32, u32),
}

/// Full corpus recipe. Same seed, same spec: byte-identical output tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub window: TimeWindow,
    pub cell_size_m: f64,
    /// Inclusive range of home photos per resident; the minimum must stay at
    /// or above the 10-photo home threshold.
    pub home_photos: (u32, u32),
    /// Inclusive range of days between a resident's first and last home
    /// photo; the minimum must exceed 180.
    pub home_span_days: (u32, u32),
    /// Fraction of clean rows duplicated verbatim, in [0, 1).
    pub duplicate_rate: f64,
    pub out_of_window_rows: u32,
    pub bad_timestamp_rows: u32,
    pub malformed_rows: u32,
    /// 0 puts every photo at its cell center; 1 spreads photos across most of
    /// the cell. Never moves a photo out of its cell.
    pub position_jitter: f64,
    pub cities: Vec<SynthCity>,
    pub trips: Vec<TripSpec>,
}

/// Exact per-cell photo counts by eventual activity category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellTruth {
    pub row: usize,
    pub col: usize,
    pub resident: u64,
    pub domestic: u64,
    pub foreign: u64,
    pub unknown: u64,
    pub total: u64,
}

/// Everything the generator planted, written alongside the corpus as
/// `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub window: TimeWindow,
    pub cell_size_m: f64,
    pub files: Vec<String>,
    /// Total data rows across all files, junk included.
    pub records_written: u64,
    /// Distinct in-window rows; what ingest must keep.
    pub clean_records: u64,
    pub duplicates_planted: u64,
    pub out_of_window_planted: u64,
    pub bad_timestamp_planted: u64,
    pub malformed_planted: u64,
    /// user_id to home city for every user the pipeline must home.
    pub homes: BTreeMap<String, String>,
    /// Users the pipeline must leave without a home.
    pub unhomed_users: Vec<String>,
    /// Clean photos of homed users by (home city, photo city); loops
    /// included. Equals the OD matrix over an all-cities region map.
    pub trip_table: BTreeMap<String, BTreeMap<String, u64>>,
    /// Per-city planted cell counts; equals the density field of the clean
    /// corpus.
    pub cell_counts: BTreeMap<String, Vec<CellTruth>>,
    pub users_compared: u64,
    pub contradictions: u64,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<GroundTruth> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: bad manifest: {e}", path.display())))
    }

    pub fn contradiction_rate(&self) -> Option<f64> {
        if self.users_compared == 0 {
            None
        } else {
            Some(self.contradictions as f64 / self.users_compared as f64)
        }
    }
}

const MANIFEST_FILE: &str = "manifest.json";

/// Shortest adversarial long-span; keeps the 9-photo users comfortably over
/// the 180-day span threshold so only the photo count disqualifies them.
const ADVERSARIAL_SPAN_MIN: i64 = 220;
const ADVERSARIAL_SPAN_MAX: i64 = 380;
const TRIP_LEN_MAX: i64 = 13;

impl SynthSpec {
    /// Ten-city demo corpus. Residents vary by city so per-region photo
    /// volume stays proportional to user counts, and the trip table sends a
    /// far larger share of American trips across the Atlantic than the
    /// reverse, giving the flow analyses a planted direction to find.
    pub fn demo(seed: u64) -> SynthSpec {
        let us = ["nyc", "sf", "washington", "chicago", "la"];
        let eu = ["london", "paris", "barcelona", "rome", "berlin"];
        let residents: HashMap<&str, u32> = [
            ("nyc", 340),
            ("sf", 160),
            ("washington", 150),
            ("chicago", 180),
            ("la", 260),
            ("london", 320),
            ("paris", 300),
            ("barcelona", 170),
            ("rome", 190),
            ("berlin", 210),
        ]
        .into_iter()
        .collect();

        let mut cities = Vec::new();
        for id in us.iter().chain(eu.iter()) {
            cities.push(SynthCity {
                city_id: CityId::new(*id),
                residents: residents[id],
                adversarial_users: 12,
                unknown_users: 10,
                contradiction_users: 4,
                clusters: vec![
                    ClusterSpec { row: 2, col: 2, weight: 6.0 },
                    ClusterSpec { row: 2, col: 6, weight: 3.0 },
                    ClusterSpec { row: 6, col: 3, weight: 1.5 },
                ],
            });
        }

        // Trip volume per ordered pair as a fraction of origin residents.
        // American trips concentrate on Europe; European trips stay mostly
        // within Europe.
        let mut trips = Vec::new();
        let all: Vec<&str> = us.iter().chain(eu.iter()).copied().collect();
        for &o in &all {
            for &d in &all {
                if o == d {
                    continue;
                }
                let frac = match (us.contains(&o), us.contains(&d)) {
                    (true, false) => 0.16,
                    (true, true) => 0.05,
                    (false, false) => 0.225,
                    (false, true) => 0.02,
                };
                let travelers = ((residents[o] as f64) * frac).round() as u32;
                trips.push(TripSpec {
                    origin: CityId::new(o),
                    dest: CityId::new(d),
                    travelers: travelers.max(1),
                    photos_per_traveler: (6, 12),
                });
            }
        }

        SynthSpec {
            seed,
            window: TimeWindow::default_window(),
            cell_size_m: 500.0,
            home_photos: (14, 26),
            home_span_days: (381, 650),
            duplicate_rate: 0.0933,
            out_of_window_rows: 400,
            bad_timestamp_rows: 120,
            malformed_rows: 90,
            position_jitter: 0.0,
            cities,
            trips,
        }
    }

    /// Same shape as [`SynthSpec::demo`] with every user population scaled,
    /// for tests that need corpus size rather than structure.
    pub fn demo_scaled(seed: u64, user_scale: f64) -> SynthSpec {
        let mut spec = SynthSpec::demo(seed);
        if user_scale == 1.0 {
            return spec;
        }
        let scale = |n: u32| ((n as f64) * user_scale).round().max(1.0) as u32;
        for c in &mut spec.cities {
            c.residents = scale(c.residents);
            c.adversarial_users = scale(c.adversarial_users);
            c.unknown_users = scale(c.unknown_users);
            c.contradiction_users = scale(c.contradiction_users);
        }
        for t in &mut spec.trips {
            t.travelers = scale(t.travelers);
        }
        spec
    }

    fn validate(&self, registry: &CityRegistry) -> Result<()> {
        if self.cities.is_empty() {
            return Err(Error::config("synth spec has no cities"));
        }
        if !(self.cell_size_m > 0.0) || !self.cell_size_m.is_finite() {
            return Err(Error::config(format!(
                "cell size must be positive, got {}",
                self.cell_size_m
            )));
        }
        if !(0.0..1.0).contains(&self.duplicate_rate) {
            return Err(Error::config(format!(
                "duplicate rate must be in [0, 1), got {}",
                self.duplicate_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.position_jitter) {
            return Err(Error::config(format!(
                "position jitter must be in [0, 1], got {}",
                self.position_jitter
            )));
        }
        if self.home_photos.0 < 10 || self.home_photos.0 > self.home_photos.1 {
            return Err(Error::config(format!(
                "home photo range ({}, {}) cannot guarantee the 10-photo home threshold",
                self.home_photos.0, self.home_photos.1
            )));
        }
        if self.home_span_days.0 <= 180 || self.home_span_days.0 > self.home_span_days.1 {
            return Err(Error::config(format!(
                "home span range ({}, {}) cannot guarantee a span beyond 180 days",
                self.home_span_days.0, self.home_span_days.1
            )));
        }
        let window_days = (self.window.end - self.window.start).num_days();
        if window_days < self.home_span_days.1 as i64 + 1 {
            return Err(Error::config(format!(
                "window spans {window_days} days; home spans up to {} do not fit",
                self.home_span_days.1
            )));
        }
        let has_adversarial = self.cities.iter().any(|c| c.adversarial_users > 0);
        if has_adversarial && window_days < ADVERSARIAL_SPAN_MAX + 1 {
            return Err(Error::config(format!(
                "window spans {window_days} days; adversarial users need at least {}",
                ADVERSARIAL_SPAN_MAX + 1
            )));
        }
        if window_days < TRIP_LEN_MAX + 1 {
            return Err(Error::config(format!(
                "window spans {window_days} days; trips need at least {}",
                TRIP_LEN_MAX + 1
            )));
        }

        let mut seen = HashSet::new();
        for c in &self.cities {
            let city = registry
                .get(&c.city_id)
                .ok_or_else(|| Error::config(format!("synth city `{}` is not in the registry", c.city_id)))?;
            if !seen.insert(c.city_id.clone()) {
                return Err(Error::config(format!("synth city `{}` listed twice", c.city_id)));
            }
            if c.contradiction_users > c.residents {
                return Err(Error::config(format!(
                    "{}: {} contradiction users exceed {} residents",
                    c.city_id, c.contradiction_users, c.residents
                )));
            }
            if c.clusters.is_empty() {
                return Err(Error::config(format!("{}: no activity clusters", c.city_id)));
            }
            let grid = GridSpec::for_city(city, self.cell_size_m)?;
            for cl in &c.clusters {
                if !(cl.weight > 0.0) || !cl.weight.is_finite() {
                    return Err(Error::config(format!(
                        "{}: cluster ({}, {}) weight must be positive",
                        c.city_id, cl.row, cl.col
                    )));
                }
                if cl.row >= grid.n_rows || cl.col >= grid.n_cols {
                    return Err(Error::config(format!(
                        "{}: cluster ({}, {}) is outside the {}x{} grid",
                        c.city_id, cl.row, cl.col, grid.n_rows, grid.n_cols
                    )));
                }
                let center = cell_center(&grid, cl.row, cl.col);
                if !city.bbox.contains(center) {
                    return Err(Error::config(format!(
                        "{}: cluster ({}, {}) center falls outside the city bounding box",
                        c.city_id, cl.row, cl.col
                    )));
                }
            }
        }

        let mut pairs = HashSet::new();
        for t in &self.trips {
            if t.origin == t.dest {
                return Err(Error::config(format!("trip {} -> {} is a loop", t.origin, t.dest)));
            }
            if !pairs.insert((t.origin.clone(), t.dest.clone())) {
                return Err(Error::config(format!(
                    "trip {} -> {} listed twice",
                    t.origin, t.dest
                )));
            }
            let origin = self
                .cities
                .iter()
                .find(|c| c.city_id == t.origin)
                .ok_or_else(|| Error::config(format!("trip origin `{}` is not a synth city", t.origin)))?;
            if !self.cities.iter().any(|c| c.city_id == t.dest) {
                return Err(Error::config(format!("trip destination `{}` is not a synth city", t.dest)));
            }
            if t.travelers > origin.residents {
                return Err(Error::config(format!(
                    "trip {} -> {}: {} travelers exceed {} residents",
                    t.origin, t.dest, t.travelers, origin.residents
                )));
            }
            if t.photos_per_traveler.0 == 0 || t.photos_per_traveler.0 > t.photos_per_traveler.1 {
                return Err(Error::config(format!(
                    "trip {} -> {}: bad photo range ({}, {})",
                    t.origin, t.dest, t.photos_per_traveler.0, t.photos_per_traveler.1
                )));
            }
        }
        Ok(())
    }
}

fn cell_center(grid: &GridSpec, row: usize, col: usize) -> LatLon {
    let corners = grid.cell_polygon(row, col);
    LatLon::new(
        (corners[0].lat + corners[2].lat) / 2.0,
        (corners[0].lon + corners[2].lon) / 2.0,
    )
}

struct CityCtx<'a> {
    spec: &'a SynthCity,
    city: &'a City,
    /// Per cluster: center and the cell's half-extent in degrees.
    centers: Vec<(LatLon, f64, f64)>,
    cum_weights: Vec<f64>,
}

impl<'a> CityCtx<'a> {
    fn new(spec: &'a SynthCity, city: &'a City, cell_size_m: f64) -> Result<CityCtx<'a>> {
        let grid = GridSpec::for_city(city, cell_size_m)?;
        let mut centers = Vec::with_capacity(spec.clusters.len());
        let mut cum_weights = Vec::with_capacity(spec.clusters.len());
        let mut acc = 0.0;
        for cl in &spec.clusters {
            let corners = grid.cell_polygon(cl.row, cl.col);
            let center = cell_center(&grid, cl.row, cl.col);
            centers.push((
                center,
                (corners[2].lat - corners[0].lat) / 2.0,
                (corners[2].lon - corners[0].lon) / 2.0,
            ));
            acc += cl.weight;
            cum_weights.push(acc);
        }
        Ok(CityCtx { spec, city, centers, cum_weights })
    }

    fn pick_cluster(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cum_weights.last().unwrap();
        let x = rng.gen::<f64>() * total;
        self.cum_weights.iter().position(|&w| x < w).unwrap_or(self.cum_weights.len() - 1)
    }

    /// A position inside cluster `idx`; jitter never crosses the cell edge.
    fn position(&self, idx: usize, jitter: f64, rng: &mut ChaCha8Rng) -> LatLon {
        let (center, half_lat, half_lon) = self.centers[idx];
        if jitter == 0.0 {
            return center;
        }
        let dlat = rng.gen_range(-0.9..0.9) * half_lat * jitter;
        let dlon = rng.gen_range(-0.9..0.9) * half_lon * jitter;
        LatLon::new(center.lat + dlat, center.lon + dlon)
    }
}

/// Which removal bucket, if any, a junk row is destined for.
enum JunkKind {
    OutOfWindow,
    BadTimestamp,
    Malformed,
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    rng: ChaCha8Rng,
    photo_counter: u64,
    /// Clean rows in generation order: (file name, csv line).
    rows: Vec<(String, String)>,
    cell_counts: BTreeMap<String, BTreeMap<(usize, usize), [u64; 4]>>,
    trip_table: BTreeMap<String, BTreeMap<String, u64>>,
    homes: BTreeMap<String, String>,
    unhomed: Vec<String>,
    contradictions: u64,
}

const CAT_RESIDENT: usize = 0;
const CAT_DOMESTIC: usize = 1;
const CAT_FOREIGN: usize = 2;
const CAT_UNKNOWN: usize = 3;

impl<'a> Generator<'a> {
    fn timestamp(&self, day: i64, secs: i64) -> DateTime<Utc> {
        self.spec.window.start + Duration::days(day) + Duration::seconds(secs)
    }

    fn next_photo_id(&mut self) -> String {
        self.photo_counter += 1;
        format!("p{:08}", self.photo_counter)
    }

    fn push_photo(
        &mut self,
        ctx: &CityCtx<'_>,
        label: SourceLabel,
        category: usize,
        user_id: &str,
        taken_at: DateTime<Utc>,
        cluster: usize,
    ) {
        let pos = ctx.position(cluster, self.spec.position_jitter, &mut self.rng);
        let photo_id = self.next_photo_id();
        let mut line = String::with_capacity(64);
        let _ = write!(
            line,
            "{},{},{},{:.7},{:.7}",
            photo_id,
            user_id,
            taken_at.to_rfc3339_opts(SecondsFormat::Secs, true),
            pos.lat,
            pos.lon
        );
        self.rows.push((file_name(&ctx.spec.city_id, label), line));
        let cl = &ctx.spec.clusters[cluster];
        let counts = self
            .cell_counts
            .entry(ctx.spec.city_id.to_string())
            .or_default()
            .entry((cl.row, cl.col))
            .or_insert([0; 4]);
        counts[category] += 1;
    }

    /// Photo days for one user-city stay: anchors at `d0` and `d0 + span`
    /// share a clock time so the span is exactly `span` days; the middle
    /// photos stay strictly between the anchors.
    fn stay_days(&mut self, d0: i64, span: i64, photos: u32) -> Vec<(i64, i64)> {
        let anchor_secs = self.rng.gen_range(6 * 3600..22 * 3600);
        let mut out = Vec::with_capacity(photos as usize);
        out.push((d0, anchor_secs));
        for _ in 0..photos.saturating_sub(2) {
            let day = self.rng.gen_range(d0 + 1..=d0 + span - 1);
            let secs = self.rng.gen_range(0..86400);
            out.push((day, secs));
        }
        out.push((d0 + span, anchor_secs));
        out
    }
}

fn file_name(city_id: &CityId, label: SourceLabel) -> String {
    format!("{}_{}.csv", city_id, label.as_str())
}

/// Generate the corpus under `out_dir` and write `manifest.json` next to it.
/// Same spec and seed produce a byte-identical tree.
pub fn generate(spec: &SynthSpec, registry: &CityRegistry, out_dir: &Path) -> Result<GroundTruth> {
    spec.validate(registry)?;
    let window_days = (spec.window.end - spec.window.start).num_days();

    let mut ctxs = Vec::with_capacity(spec.cities.len());
    for c in &spec.cities {
        let city = registry.get(&c.city_id).expect("validated");
        ctxs.push(CityCtx::new(c, city, spec.cell_size_m)?);
    }

    let mut g = Generator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        photo_counter: 0,
        rows: Vec::new(),
        cell_counts: BTreeMap::new(),
        trip_table: BTreeMap::new(),
        homes: BTreeMap::new(),
        unhomed: Vec::new(),
        contradictions: 0,
    };

    // Residents photograph their home city across a span the home inference
    // must accept.
    for ctx in &ctxs {
        let city_key = ctx.spec.city_id.to_string();
        for i in 0..ctx.spec.residents {
            let user_id = format!("res_{}_{:05}", ctx.spec.city_id, i);
            let photos = g.rng.gen_range(spec.home_photos.0..=spec.home_photos.1);
            let span = g.rng.gen_range(spec.home_span_days.0 as i64..=spec.home_span_days.1 as i64);
            let d0 = g.rng.gen_range(0..=window_days - 1 - span);
            let days = g.stay_days(d0, span, photos);
            for (day, secs) in days {
                let t = g.timestamp(day, secs);
                let cluster = ctx.pick_cluster(&mut g.rng);
                g.push_photo(ctx, SourceLabel::Resident, CAT_RESIDENT, &user_id, t, cluster);
            }
            g.homes.insert(user_id.clone(), city_key.clone());
            *g.trip_table
                .entry(city_key.clone())
                .or_default()
                .entry(city_key.clone())
                .or_insert(0) += photos as u64;
        }
    }

    // Adversarial users sit exactly on the home thresholds: type A has nine
    // photos over a qualifying span, type B has plenty of photos over exactly
    // 180 days. Neither may ever be homed.
    for ctx in &ctxs {
        for i in 0..ctx.spec.adversarial_users {
            let user_id = format!("adv_{}_{:03}", ctx.spec.city_id, i);
            let (photos, span) = if i % 2 == 0 {
                (9, g.rng.gen_range(ADVERSARIAL_SPAN_MIN..=ADVERSARIAL_SPAN_MAX))
            } else {
                (12, 180)
            };
            let d0 = g.rng.gen_range(0..=window_days - 1 - span);
            let days = g.stay_days(d0, span, photos);
            for (day, secs) in days {
                let t = g.timestamp(day, secs);
                let cluster = ctx.pick_cluster(&mut g.rng);
                g.push_photo(ctx, SourceLabel::Unknown, CAT_UNKNOWN, &user_id, t, cluster);
            }
            g.unhomed.push(user_id);
        }
    }

    // Unknown users never reach ten photos anywhere.
    for ctx in &ctxs {
        for i in 0..ctx.spec.unknown_users {
            let user_id = format!("unk_{}_{:03}", ctx.spec.city_id, i);
            let photos = g.rng.gen_range(1..=3);
            for _ in 0..photos {
                let day = g.rng.gen_range(0..window_days);
                let secs = g.rng.gen_range(0..86400);
                let t = g.timestamp(day, secs);
                let cluster = ctx.pick_cluster(&mut g.rng);
                g.push_photo(ctx, SourceLabel::Tourist, CAT_UNKNOWN, &user_id, t, cluster);
            }
            g.unhomed.push(user_id);
        }
    }

    // Trips. Travelers rotate through each origin's residents; a traveler's
    // first trip carries the contradiction label when the resident is marked
    // for one.
    let ctx_by_id: HashMap<&CityId, usize> =
        ctxs.iter().enumerate().map(|(i, c)| (&c.spec.city_id, i)).collect();
    let mut cursors: HashMap<String, u32> = HashMap::new();
    let mut contradiction_pending: HashSet<String> = HashSet::new();
    for ctx in &ctxs {
        for i in 0..ctx.spec.contradiction_users {
            contradiction_pending.insert(format!("res_{}_{:05}", ctx.spec.city_id, i));
        }
    }
    for trip in &spec.trips {
        let octx = &ctxs[ctx_by_id[&trip.origin]];
        let dctx = &ctxs[ctx_by_id[&trip.dest]];
        if octx.spec.residents == 0 || trip.travelers == 0 {
            continue;
        }
        let origin_key = trip.origin.to_string();
        let dest_key = trip.dest.to_string();
        let category = if octx.city.country_code == dctx.city.country_code {
            CAT_DOMESTIC
        } else {
            CAT_FOREIGN
        };
        let cursor = cursors.entry(origin_key.clone()).or_insert(0);
        let start = *cursor;
        *cursor = (*cursor + trip.travelers) % octx.spec.residents;
        for t in 0..trip.travelers {
            let idx = (start + t) % octx.spec.residents;
            let user_id = format!("res_{}_{:05}", trip.origin, idx);
            let label = if contradiction_pending.remove(&user_id) {
                g.contradictions += 1;
                SourceLabel::Resident
            } else {
                SourceLabel::Tourist
            };
            let photos = g
                .rng
                .gen_range(trip.photos_per_traveler.0..=trip.photos_per_traveler.1);
            let len = g.rng.gen_range(2..=TRIP_LEN_MAX);
            let t0 = g.rng.gen_range(0..=window_days - 1 - len);
            for _ in 0..photos {
                let day = g.rng.gen_range(t0..=t0 + len);
                let secs = g.rng.gen_range(0..86400);
                let t = g.timestamp(day, secs);
                let cluster = dctx.pick_cluster(&mut g.rng);
                g.push_photo(dctx, label, category, &user_id, t, cluster);
            }
            *g.trip_table
                .entry(origin_key.clone())
                .or_default()
                .entry(dest_key.clone())
                .or_insert(0) += photos as u64;
        }
    }

    let clean_records = g.rows.len() as u64;
    let duplicates = (spec.duplicate_rate * clean_records as f64).round() as u64;
    let dup_rows: HashSet<usize> =
        rand::seq::index::sample(&mut g.rng, g.rows.len(), duplicates as usize)
            .into_iter()
            .collect();

    let mut buffers: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (idx, (file, line)) in g.rows.iter().enumerate() {
        let buf = buffers.entry(file.clone()).or_default();
        buf.push(line.clone());
        if dup_rows.contains(&idx) {
            buf.push(line.clone());
        }
    }

    // Junk rows go at the tail of existing files, rotating across them.
    let files: Vec<String> = buffers.keys().cloned().collect();
    let junk = [
        (JunkKind::OutOfWindow, spec.out_of_window_rows),
        (JunkKind::BadTimestamp, spec.bad_timestamp_rows),
        (JunkKind::Malformed, spec.malformed_rows),
    ];
    for (kind, count) in junk {
        for i in 0..count {
            let file = &files[i as usize % files.len()];
            let city_id = file.rsplit_once('_').expect("generated name").0;
            let ctx = &ctxs[ctx_by_id[&CityId::new(city_id)]];
            let pos = ctx.centers[0].0;
            let photo_id = g.next_photo_id();
            let line = match kind {
                JunkKind::OutOfWindow => {
                    let t = if i % 2 == 0 {
                        spec.window.start - Duration::days(30 + i as i64 % 300)
                    } else {
                        spec.window.end + Duration::days(i as i64 % 300)
                    };
                    format!(
                        "{},jnk_out_{:04},{},{:.7},{:.7}",
                        photo_id,
                        i,
                        t.to_rfc3339_opts(SecondsFormat::Secs, true),
                        pos.lat,
                        pos.lon
                    )
                }
                JunkKind::BadTimestamp => {
                    let t = if i % 2 == 0 { "0000-00-00T00:00:00Z" } else { "1985-06-01T00:00:00Z" };
                    format!("{},jnk_bad_{:04},{},{:.7},{:.7}", photo_id, i, t, pos.lat, pos.lon)
                }
                JunkKind::Malformed => {
                    let t = g.timestamp(10, 43200).to_rfc3339_opts(SecondsFormat::Secs, true);
                    if i % 2 == 0 {
                        // Latitude far out of range.
                        format!("{},jnk_bad_{:04},{},95.0000000,{:.7}", photo_id, i, t, pos.lon)
                    } else {
                        // Missing user id.
                        format!("{},,{},{:.7},{:.7}", photo_id, t, pos.lat, pos.lon)
                    }
                }
            };
            buffers.get_mut(file).expect("existing file").push(line);
        }
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records_written = 0u64;
    for (file, lines) in &buffers {
        records_written += lines.len() as u64;
        let path = out_dir.join(file);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(f);
        writeln!(w, "{}", INPUT_HEADER.join(",")).map_err(|e| Error::io(&path, e))?;
        for line in lines {
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    let cell_counts = g
        .cell_counts
        .iter()
        .map(|(city, cells)| {
            let truths = cells
                .iter()
                .map(|(&(row, col), c)| CellTruth {
                    row,
                    col,
                    resident: c[CAT_RESIDENT],
                    domestic: c[CAT_DOMESTIC],
                    foreign: c[CAT_FOREIGN],
                    unknown: c[CAT_UNKNOWN],
                    total: c.iter().sum(),
                })
                .collect();
            (city.clone(), truths)
        })
        .collect();

    let users_compared = spec.cities.iter().map(|c| c.residents as u64).sum();
    let truth = GroundTruth {
        seed: spec.seed,
        window: spec.window,
        cell_size_m: spec.cell_size_m,
        files,
        records_written,
        clean_records,
        duplicates_planted: duplicates,
        out_of_window_planted: spec.out_of_window_rows as u64,
        bad_timestamp_planted: spec.bad_timestamp_rows as u64,
        malformed_planted: spec.malformed_rows as u64,
        homes: g.homes,
        unhomed_users: g.unhomed,
        trip_table: g.trip_table,
        cell_counts,
        users_compared,
        contradictions: g.contradictions,
    };

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&truth).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{build_od_matrix, RegionMap};
    use crate::homes::{
        assign_homes, categorize_all, resident_label_consistency, summarize_user_city_activity,
        HomeParams, LocatedPhoto,
    };
    use crate::ingest::ingest_dir;
    use crate::spatial::{accumulate_density, DensityCategory};

    fn tiny_spec(seed: u64) -> SynthSpec {
        SynthSpec {
            seed,
            window: TimeWindow::default_window(),
            cell_size_m: 500.0,
            home_photos: (12, 18),
            home_span_days: (200, 400),
            duplicate_rate: 0.0933,
            out_of_window_rows: 17,
            bad_timestamp_rows: 9,
            malformed_rows: 6,
            position_jitter: 0.0,
            cities: vec![
                SynthCity {
                    city_id: CityId::new("nyc"),
                    residents: 30,
                    adversarial_users: 6,
                    unknown_users: 5,
                    contradiction_users: 3,
                    clusters: vec![
                        ClusterSpec { row: 2, col: 2, weight: 4.0 },
                        ClusterSpec { row: 5, col: 6, weight: 1.0 },
                    ],
                },
                SynthCity {
                    city_id: CityId::new("london"),
                    residents: 25,
                    adversarial_users: 4,
                    unknown_users: 5,
                    contradiction_users: 2,
                    clusters: vec![
                        ClusterSpec { row: 3, col: 3, weight: 3.0 },
                        ClusterSpec { row: 7, col: 1, weight: 1.0 },
                    ],
                },
                SynthCity {
                    city_id: CityId::new("chicago"),
                    residents: 20,
                    adversarial_users: 0,
                    unknown_users: 3,
                    contradiction_users: 0,
                    clusters: vec![ClusterSpec { row: 1, col: 1, weight: 1.0 }],
                },
            ],
            trips: vec![
                TripSpec {
                    origin: CityId::new("nyc"),
                    dest: CityId::new("london"),
                    travelers: 12,
                    photos_per_traveler: (5, 9),
                },
                TripSpec {
                    origin: CityId::new("nyc"),
                    dest: CityId::new("chicago"),
                    travelers: 8,
                    photos_per_traveler: (4, 7),
                },
                TripSpec {
                    origin: CityId::new("london"),
                    dest: CityId::new("nyc"),
                    travelers: 5,
                    photos_per_traveler: (5, 9),
                },
                TripSpec {
                    origin: CityId::new("chicago"),
                    dest: CityId::new("nyc"),
                    travelers: 6,
                    photos_per_traveler: (3, 6),
                },
            ],
        }
    }

    fn locate_all(records: &[crate::ingest::PhotoRecord], registry: &CityRegistry) -> Vec<LocatedPhoto> {
        records
            .iter()
            .map(|r| {
                let city = registry
                    .locate(&r.location_id, LatLon::new(r.lat, r.lon))
                    .expect("synthetic records resolve");
                LocatedPhoto {
                    user_id: r.user_id.clone(),
                    city_id: city.city_id.clone(),
                    taken_at: r.taken_at,
                    lat: r.lat,
                    lon: r.lon,
                    source_label: r.source_label,
                }
            })
            .collect()
    }

    #[test]
    fn same_seed_same_bytes() {
        let registry = CityRegistry::bundled();
        let spec = tiny_spec(42);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let truth_a = generate(&spec, &registry, dir_a.path()).unwrap();
        let truth_b = generate(&spec, &registry, dir_b.path()).unwrap();
        assert_eq!(truth_a, truth_b);

        let mut names_a: Vec<_> = fs::read_dir(dir_a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names_a.sort();
        let mut names_b: Vec<_> = fs::read_dir(dir_b.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names_b.sort();
        assert_eq!(names_a, names_b);
        assert!(names_a.contains(&"manifest.json".to_owned()));
        for name in &names_a {
            let a = fs::read(dir_a.path().join(name)).unwrap();
            let b = fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
    }

    #[test]
    fn different_seed_different_corpus() {
        let registry = CityRegistry::bundled();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = generate(&tiny_spec(1), &registry, dir_a.path()).unwrap();
        let b = generate(&tiny_spec(2), &registry, dir_b.path()).unwrap();
        assert_ne!(a.trip_table, b.trip_table);
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let registry = CityRegistry::bundled();
        let dir = tempfile::tempdir().unwrap();
        let truth = generate(&tiny_spec(7), &registry, dir.path()).unwrap();
        let loaded = GroundTruth::load(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(truth, loaded);
    }

    #[test]
    fn duplicate_count_follows_rate() {
        let registry = CityRegistry::bundled();
        let dir = tempfile::tempdir().unwrap();
        let truth = generate(&tiny_spec(3), &registry, dir.path()).unwrap();
        let expected = (0.0933 * truth.clean_records as f64).round() as u64;
        assert_eq!(truth.duplicates_planted, expected);
        assert_eq!(
            truth.records_written,
            truth.clean_records
                + truth.duplicates_planted
                + truth.out_of_window_planted
                + truth.bad_timestamp_planted
                + truth.malformed_planted
        );
    }

    #[test]
    fn ingest_recovers_planted_removal_counts() {
        let registry = CityRegistry::bundled();
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec(11);
        let truth = generate(&spec, &registry, dir.path()).unwrap();
        let (records, stats) = ingest_dir(dir.path(), &spec.window, 2).unwrap();
        assert_eq!(stats.records_read, truth.records_written);
        assert_eq!(stats.duplicates_removed, truth.duplicates_planted);
        assert_eq!(stats.out_of_window_removed, truth.out_of_window_planted);
        assert_eq!(stats.bad_timestamps_removed, truth.bad_timestamp_planted);
        assert_eq!(stats.malformed_removed, truth.malformed_planted);
        assert_eq!(stats.records_kept, truth.clean_records);
        assert_eq!(records.len() as u64, truth.clean_records);
        assert!(stats.is_balanced());
    }

    #[test]
    fn homes_recovered_exactly_and_near_threshold_users_left_out() {
        let registry = CityRegistry::bundled();
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec(5);
        let truth = generate(&spec, &registry, dir.path()).unwrap();
        let (records, _) = ingest_dir(dir.path(), &spec.window, 2).unwrap();
        let photos = locate_all(&records, &registry);
        let summaries = summarize_user_city_activity(&photos);
        let homes = assign_homes(&summaries, &HomeParams::default(), &registry);

        for (user, city) in &truth.homes {
            let h = homes.get(user).expect("planted resident present");
            assert_eq!(
                h.home_city_id.as_ref().map(|c| c.to_string()).as_deref(),
                Some(city.as_str()),
                "{user} homed wrong"
            );
        }
        for user in &truth.unhomed_users {
            if let Some(h) = homes.get(user) {
                assert!(h.home_city_id.is_none(), "{user} must stay unhomed");
            }
        }
        let homed = homes.values().filter(|h| h.home_city_id.is_some()).count();
        assert_eq!(homed as u64, truth.homes.len() as u64);
    }

    #[test]
    fn od_matrix_equals_manifest_trip_table() {
        let registry = CityRegistry::bundled();
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec(13);
        let truth = generate(&spec, &registry, dir.path()).unwrap();
        let (records, _) = ingest_dir(dir.path(), &spec.window, 2).unwrap();
        let photos = locate_all(&records, &registry);
        let summaries = summarize_user_city_activity(&photos);
        let homes = assign_homes(&summaries, &HomeParams::default(), &registry);
        let map = RegionMap::all_cities(&registry);
        let od = build_od_matrix(&photos, &homes, &map);

        let mut expected = vec![vec![0u64; map.len()]; map.len()];
        for (origin, dests) in &truth.trip_table {
            let i = map.region_of_city(&CityId::new(origin)).unwrap();
            for (dest, count) in dests {
                let j = map.region_of_city(&CityId::new(dest)).unwrap();
                expected[i][j] = *count;
            }
        }
        assert_eq!(od.a, expected);
    }

    #[test]
    fn density_fields_match_manifest_cells() {
        let registry = CityRegistry::bundled();
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec(19);
        let truth = generate(&spec, &registry, dir.path()).unwrap();
        let (records, _) = ingest_dir(dir.path(), &spec.window, 2).unwrap();
        let photos = locate_all(&records, &registry);
        let summaries = summarize_user_city_activity(&photos);
        let homes = assign_homes(&summaries, &HomeParams::default(), &registry);
        let categorized = categorize_all(photos, &homes, &registry);

        for city_spec in &spec.cities {
            let city = registry.get(&city_spec.city_id).unwrap();
            let grid = GridSpec::for_city(city, spec.cell_size_m).unwrap();
            let in_city: Vec<_> = categorized
                .iter()
                .filter(|c| c.photo.city_id == city_spec.city_id)
                .cloned()
                .collect();
            let field = accumulate_density(&in_city, &grid);
            let truths = &truth.cell_counts[&city_spec.city_id.to_string()];
            let mut expected_total = 0u64;
            for t in truths {
                assert_eq!(field.count(DensityCategory::Resident, t.row, t.col), t.resident);
                assert_eq!(field.count(DensityCategory::Domestic, t.row, t.col), t.domestic);
                assert_eq!(field.count(DensityCategory::Foreign, t.row, t.col), t.foreign);
                assert_eq!(field.count(DensityCategory::Unknown, t.row, t.col), t.unknown);
                assert_eq!(field.count(DensityCategory::Total, t.row, t.col), t.total);
                expected_total += t.total;
            }
            assert_eq!(field.total_activity(DensityCategory::Total), expected_total);
            assert_eq!(field.outside, 0);
        }
    }

    #[test]
    fn contradiction_bookkeeping_matches_consistency_scan() {
        let registry = CityRegistry::bundled();
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec(23);
        let truth = generate(&spec, &registry, dir.path()).unwrap();
        assert!(truth.contradictions > 0, "spec plants contradictions");
        let (records, _) = ingest_dir(dir.path(), &spec.window, 2).unwrap();
        let photos = locate_all(&records, &registry);
        let summaries = summarize_user_city_activity(&photos);
        let homes = assign_homes(&summaries, &HomeParams::default(), &registry);
        let report = resident_label_consistency(&photos, &homes);
        assert_eq!(report.users_compared, truth.users_compared);
        assert_eq!(report.contradictions, truth.contradictions);
    }

    #[test]
    fn demo_spec_validates_and_generates() {
        let registry = CityRegistry::bundled();
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec::demo_scaled(29, 0.1);
        let truth = generate(&spec, &registry, dir.path()).unwrap();
        assert_eq!(truth.homes.len() as u64, truth.users_compared);
        assert_eq!(truth.cell_counts.len(), 10);
        for city in spec.cities {
            assert!(truth.trip_table.contains_key(&city.city_id.to_string()));
        }
    }

    #[test]
    fn rejects_specs_that_cannot_keep_their_promises() {
        let registry = CityRegistry::bundled();
        let dir = tempfile::tempdir().unwrap();

        let mut s = tiny_spec(1);
        s.home_photos = (9, 12);
        assert!(generate(&s, &registry, dir.path()).is_err());

        let mut s = tiny_spec(1);
        s.home_span_days = (180, 300);
        assert!(generate(&s, &registry, dir.path()).is_err());

        let mut s = tiny_spec(1);
        s.duplicate_rate = 1.0;
        assert!(generate(&s, &registry, dir.path()).is_err());

        let mut s = tiny_spec(1);
        s.cities[0].city_id = CityId::new("atlantis");
        assert!(generate(&s, &registry, dir.path()).is_err());

        let mut s = tiny_spec(1);
        s.cities[0].clusters[0].row = 100_000;
        assert!(generate(&s, &registry, dir.path()).is_err());

        let mut s = tiny_spec(1);
        s.trips[0].travelers = 10_000;
        assert!(generate(&s, &registry, dir.path()).is_err());

        let mut s = tiny_spec(1);
        s.trips[0].dest = s.trips[0].origin.clone();
        assert!(generate(&s, &registry, dir.path()).is_err());

        let mut s = tiny_spec(1);
        let dup = s.trips[0].clone();
        s.trips.push(dup);
        assert!(generate(&s, &registry, dir.path()).is_err());

        let mut s = tiny_spec(1);
        s.window = TimeWindow::parse("2007-01-01..2007-06-01").unwrap();
        assert!(generate(&s, &registry, dir.path()).is_err());
    }
}
