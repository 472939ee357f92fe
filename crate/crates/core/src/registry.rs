//! City metadata: country, continent, population, geometry. The registry
//! resolves photo locations to cities and computes inter-city distances.
//!
//! A registry is immutable after load and safe to share across workers.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometers, spherical model.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Populations below this raw value are read as millions (the usual way city
/// tables are published); anything larger is taken as a plain person count.
/// No real city sits between ten thousand million people and a ten-thousand
/// person hamlet worth registering, so the split is unambiguous in practice.
const POPULATION_MILLIONS_CUTOFF: f64 = 10_000.0;

/// Opaque city identifier, unique within a registry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CityId(pub String);

impl CityId {
    pub fn new(id: impl Into<String>) -> Self {
        CityId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CityId {
    fn from(s: &str) -> Self {
        CityId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continent {
    Africa,
    Antarctica,
    Asia,
    Europe,
    NorthAmerica,
    Oceania,
    SouthAmerica,
}

impl Continent {
    pub fn parse(s: &str) -> Option<Continent> {
        match s.trim().to_ascii_lowercase().as_str() {
            "africa" => Some(Continent::Africa),
            "antarctica" => Some(Continent::Antarctica),
            "asia" => Some(Continent::Asia),
            "europe" | "eu" => Some(Continent::Europe),
            "north_america" | "na" => Some(Continent::NorthAmerica),
            "oceania" => Some(Continent::Oceania),
            "south_america" | "sa" => Some(Continent::SouthAmerica),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Continent::Africa => "africa",
            Continent::Antarctica => "antarctica",
            Continent::Asia => "asia",
            Continent::Europe => "europe",
            Continent::NorthAmerica => "north_america",
            Continent::Oceania => "oceania",
            Continent::SouthAmerica => "south_america",
        }
    }
}

impl fmt::Display for Continent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A point on the sphere in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Axis-aligned bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BBox {
    pub fn contains(&self, p: LatLon) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    /// Degree-space area, used only for specificity tie-breaking.
    pub fn area_deg2(&self) -> f64 {
        (self.max_lat - self.min_lat) * (self.max_lon - self.min_lon)
    }

    pub fn south_west(&self) -> LatLon {
        LatLon::new(self.min_lat, self.min_lon)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct City {
    pub city_id: CityId,
    pub name: String,
    /// ISO-3166 alpha-2, uppercase.
    pub country_code: String,
    pub continent: Continent,
    /// Residents, stored as persons regardless of the units in the source file.
    pub population: f64,
    pub centroid: LatLon,
    pub bbox: BBox,
}

/// Immutable city table with an alias map from source location ids.
#[derive(Debug, Clone, Default)]
pub struct CityRegistry {
    cities: Vec<City>,
    by_id: HashMap<CityId, usize>,
    aliases: HashMap<String, CityId>,
}

impl CityRegistry {
    /// The ten-city reference registry bundled with the crate (2008
    /// populations), aliases included.
    pub fn bundled() -> CityRegistry {
        let mut reg = CityRegistry::from_csv_reader(BUNDLED_CITIES.as_bytes(), "<bundled cities>")
            .expect("bundled registry parses");
        reg.load_aliases_reader(BUNDLED_ALIASES.as_bytes(), "<bundled aliases>")
            .expect("bundled aliases parse");
        reg
    }

    pub fn load(path: &Path) -> Result<CityRegistry> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        CityRegistry::from_csv_reader(file, &path.display().to_string())
    }

    /// Parse the registry CSV schema
    /// `city_id,name,country_code,continent,population,lat,lon,min_lat,min_lon,max_lat,max_lon`.
    pub fn from_csv_reader<R: Read>(reader: R, source: &str) -> Result<CityRegistry> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut reg = CityRegistry::default();
        for (idx, row) in rdr.records().enumerate() {
            let line = idx + 2; // header is line 1
            let row = row.map_err(|e| Error::data(format!("{source}:{line}: {e}")))?;
            let city = parse_city_row(&row, source, line)?;
            if reg.by_id.contains_key(&city.city_id) {
                return Err(Error::data(format!(
                    "{source}:{line}: duplicate city_id `{}`",
                    city.city_id
                )));
            }
            reg.by_id.insert(city.city_id.clone(), reg.cities.len());
            reg.cities.push(city);
        }
        if reg.cities.is_empty() {
            log::warn!("{source}: registry is empty (header only)");
        } else {
            log::info!("{source}: loaded {} cities", reg.cities.len());
        }
        Ok(reg)
    }

    pub fn load_aliases(&mut self, path: &Path) -> Result<()> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        self.load_aliases_reader(file, &path.display().to_string())
    }

    /// Parse the alias CSV schema `location_id,city_id` and merge it in.
    pub fn load_aliases_reader<R: Read>(&mut self, reader: R, source: &str) -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        for (idx, row) in rdr.records().enumerate() {
            let line = idx + 2;
            let row = row.map_err(|e| Error::data(format!("{source}:{line}: {e}")))?;
            if row.len() != 2 {
                return Err(Error::data(format!(
                    "{source}:{line}: expected 2 fields, got {}",
                    row.len()
                )));
            }
            let location_id = row[0].to_owned();
            let city_id = CityId::new(&row[1]);
            if !self.by_id.contains_key(&city_id) {
                return Err(Error::data(format!(
                    "{source}:{line}: alias target `{city_id}` is not in the registry"
                )));
            }
            self.aliases.insert(location_id, city_id);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cities.is_empty()
    }

    pub fn cities(&self) -> &[City] {
        &self.cities
    }

    pub fn get(&self, id: &CityId) -> Option<&City> {
        self.by_id.get(id).map(|&i| &self.cities[i])
    }

    pub fn contains(&self, id: &CityId) -> bool {
        self.by_id.contains_key(id)
    }

    /// Resolve a photo to a city. The alias table wins when the source
    /// location id is known; otherwise the point is tested against city
    /// bounding boxes, preferring the smallest (most specific) box and then
    /// the lexicographically first city id. Returns `None` when nothing
    /// matches; such records are excluded from city-level analyses.
    pub fn locate(&self, location_id: &str, point: LatLon) -> Option<&City> {
        if let Some(id) = self.aliases.get(location_id) {
            return self.get(id);
        }
        self.locate_by_point(point)
    }

    pub fn locate_by_point(&self, point: LatLon) -> Option<&City> {
        self.cities
            .iter()
            .filter(|c| c.bbox.contains(point))
            .min_by(|a, b| {
                a.bbox
                    .area_deg2()
                    .partial_cmp(&b.bbox.area_deg2())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.city_id.cmp(&b.city_id))
            })
    }
}

fn parse_city_row(row: &csv::StringRecord, source: &str, line: usize) -> Result<City> {
    if row.len() != 11 {
        return Err(Error::data(format!(
            "{source}:{line}: expected 11 fields, got {}",
            row.len()
        )));
    }
    let field = |i: usize| -> &str { &row[i] };
    let num = |i: usize, what: &str| -> Result<f64> {
        field(i)
            .parse::<f64>()
            .map_err(|_| Error::data(format!("{source}:{line}: bad {what} `{}`", field(i))))
    };

    let city_id = CityId::new(field(0));
    // Ids end up in output file names, so keep them path-safe.
    if city_id.as_str().is_empty()
        || !city_id
            .as_str()
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
    {
        return Err(Error::data(format!(
            "{source}:{line}: city_id `{city_id}` must be nonempty [A-Za-z0-9_-]"
        )));
    }
    let country_code = field(2).to_ascii_uppercase();
    if country_code.len() != 2 || !country_code.bytes().all(|b| b.is_ascii_uppercase()) {
        return Err(Error::data(format!(
            "{source}:{line}: invalid country code `{}`",
            field(2)
        )));
    }
    let continent = Continent::parse(field(3)).ok_or_else(|| {
        Error::data(format!("{source}:{line}: unknown continent `{}`", field(3)))
    })?;
    let raw_population = num(4, "population")?;
    if raw_population <= 0.0 {
        return Err(Error::data(format!(
            "{source}:{line}: population must be positive"
        )));
    }
    // Head counts are integers; rounding hides the float error of values
    // that were written in millions.
    let population = if raw_population < POPULATION_MILLIONS_CUTOFF {
        (raw_population * 1_000_000.0).round()
    } else {
        raw_population
    };
    let centroid = LatLon::new(num(5, "lat")?, num(6, "lon")?);
    if !centroid.is_valid() {
        return Err(Error::data(format!(
            "{source}:{line}: centroid out of range"
        )));
    }
    let bbox = BBox {
        min_lat: num(7, "min_lat")?,
        min_lon: num(8, "min_lon")?,
        max_lat: num(9, "max_lat")?,
        max_lon: num(10, "max_lon")?,
    };
    if !LatLon::new(bbox.min_lat, bbox.min_lon).is_valid()
        || !LatLon::new(bbox.max_lat, bbox.max_lon).is_valid()
        || bbox.min_lat >= bbox.max_lat
        || bbox.min_lon >= bbox.max_lon
    {
        return Err(Error::data(format!("{source}:{line}: malformed bbox")));
    }
    if !bbox.contains(centroid) {
        return Err(Error::data(format!(
            "{source}:{line}: bbox does not contain centroid"
        )));
    }
    if bbox.max_lat - bbox.min_lat >= 5.0 || bbox.max_lon - bbox.min_lon >= 5.0 {
        return Err(Error::data(format!(
            "{source}:{line}: bbox spans 5 degrees or more on an axis, not a city"
        )));
    }
    Ok(City {
        city_id,
        name: field(1).to_owned(),
        country_code,
        continent,
        population,
        centroid,
        bbox,
    })
}

/// Haversine great-circle distance in kilometers on a sphere of radius
/// `EARTH_RADIUS_KM`. Symmetric, non-negative, at most pi * R.
pub fn great_circle_km(a: LatLon, b: LatLon) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

pub const BUNDLED_CITIES: &str = include_str!("../data/cities_top10.csv");
pub const BUNDLED_ALIASES: &str = include_str!("../data/aliases_top10.csv");
