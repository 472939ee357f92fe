//! Origin-destination photo flows over regions: marginals, per-capita rates,
//! activity breakdowns, the homogeneous null model, and distance decay.
//!
//! Regions are either individual cities or one of three catch-all buckets
//! (rest of Europe, rest of the US, rest of the world) that absorb every
//! registry city not in the chosen top list.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::homes::{ActivityCategory, CategorizedPhoto, HomeAssignment, LocatedPhoto};
use crate::registry::{great_circle_km, CityId, CityRegistry, Continent, LatLon};
use crate::stats::{fit_exponential, linear_regression_r2, ExponentialFit, LinearFit};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    City(CityId),
    RestOfEu,
    RestOfUs,
    RestOfWorld,
}

impl Region {
    pub fn id(&self) -> &str {
        match self {
            Region::City(id) => id.as_str(),
            Region::RestOfEu => "rest_of_eu",
            Region::RestOfUs => "rest_of_us",
            Region::RestOfWorld => "rest_of_world",
        }
    }

    pub fn is_city(&self) -> bool {
        matches!(self, Region::City(_))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

/// Which side of the transatlantic comparison a region sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CountryGroup {
    Us,
    Eu,
    Other,
}

/// 2008 aggregate populations for the three catch-all buckets, overridable
/// through configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketPopulations {
    pub rest_of_eu: f64,
    pub rest_of_us: f64,
    pub rest_of_world: f64,
}

impl Default for BucketPopulations {
    fn default() -> Self {
        BucketPopulations {
            rest_of_eu: 482.61e6,
            rest_of_us: 287.61e6,
            rest_of_world: 5905.14e6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionInfo {
    pub region: Region,
    /// Persons. Buckets carry configured aggregates.
    pub population: f64,
    /// None for rest_of_eu and rest_of_world, which span countries.
    pub country_code: Option<String>,
    /// None for buckets; city centroid otherwise.
    pub centroid: Option<LatLon>,
    pub group: CountryGroup,
}

/// Total map from registry cities to regions, with per-region metadata.
#[derive(Debug, Clone)]
pub struct RegionMap {
    infos: Vec<RegionInfo>,
    city_to_region: HashMap<CityId, usize>,
}

fn city_group(country_code: &str, continent: Continent) -> CountryGroup {
    if country_code == "US" {
        CountryGroup::Us
    } else if continent == Continent::Europe {
        CountryGroup::Eu
    } else {
        CountryGroup::Other
    }
}

impl RegionMap {
    /// Named cities stay individual regions, in the order given; every other
    /// registry city falls into rest_of_eu (continent), rest_of_us (country),
    /// or rest_of_world.
    pub fn top_cities_with_rest(
        registry: &CityRegistry,
        top: &[CityId],
        buckets: &BucketPopulations,
    ) -> Result<RegionMap> {
        let mut infos = Vec::with_capacity(top.len() + 3);
        let mut city_to_region = HashMap::new();
        let mut seen = BTreeSet::new();
        for id in top {
            let city = registry
                .get(id)
                .ok_or_else(|| Error::config(format!("region city `{id}` is not in the registry")))?;
            if !seen.insert(id.clone()) {
                return Err(Error::config(format!("region city `{id}` listed twice")));
            }
            city_to_region.insert(id.clone(), infos.len());
            infos.push(RegionInfo {
                region: Region::City(id.clone()),
                population: city.population,
                country_code: Some(city.country_code.clone()),
                centroid: Some(city.centroid),
                group: city_group(&city.country_code, city.continent),
            });
        }
        let eu_idx = infos.len();
        infos.push(RegionInfo {
            region: Region::RestOfEu,
            population: buckets.rest_of_eu,
            country_code: None,
            centroid: None,
            group: CountryGroup::Eu,
        });
        let us_idx = infos.len();
        infos.push(RegionInfo {
            region: Region::RestOfUs,
            population: buckets.rest_of_us,
            country_code: Some("US".to_owned()),
            centroid: None,
            group: CountryGroup::Us,
        });
        let world_idx = infos.len();
        infos.push(RegionInfo {
            region: Region::RestOfWorld,
            population: buckets.rest_of_world,
            country_code: None,
            centroid: None,
            group: CountryGroup::Other,
        });
        for city in registry.cities() {
            if city_to_region.contains_key(&city.city_id) {
                continue;
            }
            let idx = match city_group(&city.country_code, city.continent) {
                CountryGroup::Us => us_idx,
                CountryGroup::Eu => eu_idx,
                CountryGroup::Other => world_idx,
            };
            city_to_region.insert(city.city_id.clone(), idx);
        }
        Ok(RegionMap {
            infos,
            city_to_region,
        })
    }

    /// Every registry city as its own region, registry order, no buckets.
    pub fn all_cities(registry: &CityRegistry) -> RegionMap {
        let mut infos = Vec::with_capacity(registry.len());
        let mut city_to_region = HashMap::new();
        for city in registry.cities() {
            city_to_region.insert(city.city_id.clone(), infos.len());
            infos.push(RegionInfo {
                region: Region::City(city.city_id.clone()),
                population: city.population,
                country_code: Some(city.country_code.clone()),
                centroid: Some(city.centroid),
                group: city_group(&city.country_code, city.continent),
            });
        }
        RegionMap {
            infos,
            city_to_region,
        }
    }

    pub fn len(&self) -> usize {
        self.infos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infos.is_empty()
    }

    pub fn infos(&self) -> &[RegionInfo] {
        &self.infos
    }

    pub fn info(&self, idx: usize) -> &RegionInfo {
        &self.infos[idx]
    }

    pub fn regions(&self) -> Vec<Region> {
        self.infos.iter().map(|i| i.region.clone()).collect()
    }

    pub fn region_of_city(&self, city: &CityId) -> Option<usize> {
        self.city_to_region.get(city).copied()
    }

    pub fn index_of(&self, region: &Region) -> Option<usize> {
        self.infos.iter().position(|i| &i.region == region)
    }
}

/// a[i][j] = photos taken in destination region j by residents of origin
/// region i; the diagonal is resident activity at home.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdMatrix {
    pub regions: Vec<Region>,
    pub a: Vec<Vec<u64>>,
}

impl OdMatrix {
    pub fn zero(regions: Vec<Region>) -> OdMatrix {
        let n = regions.len();
        OdMatrix {
            regions,
            a: vec![vec![0; n]; n],
        }
    }

    pub fn n(&self) -> usize {
        self.regions.len()
    }

    pub fn total(&self) -> u64 {
        self.a.iter().flatten().sum()
    }

    pub fn scaled(&self, c: u64) -> OdMatrix {
        OdMatrix {
            regions: self.regions.clone(),
            a: self
                .a
                .iter()
                .map(|row| row.iter().map(|&v| v * c).collect())
                .collect(),
        }
    }
}

/// Count photos by homed users into the region matrix; unknown-home photos
/// are excluded.
pub fn build_od_matrix(
    photos: &[LocatedPhoto],
    homes: &BTreeMap<String, HomeAssignment>,
    map: &RegionMap,
) -> OdMatrix {
    let mut od = OdMatrix::zero(map.regions());
    for p in photos {
        let Some(home_city) = homes.get(&p.user_id).and_then(|h| h.home_city_id.as_ref()) else {
            continue;
        };
        let (Some(origin), Some(dest)) = (
            map.region_of_city(home_city),
            map.region_of_city(&p.city_id),
        ) else {
            continue;
        };
        od.a[origin][dest] += 1;
    }
    od
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowMarginals {
    /// Total photos taken in each region, any origin.
    pub w_in: Vec<u64>,
    /// Total photos taken anywhere by each region's residents.
    pub w_out: Vec<u64>,
    /// w_in minus the loop; visitor photos only.
    pub w_in_star: Vec<u64>,
    /// w_out minus the loop; photos taken away from home.
    pub w_out_star: Vec<u64>,
}

pub fn flow_marginals(od: &OdMatrix) -> FlowMarginals {
    let n = od.n();
    let mut m = FlowMarginals {
        w_in: vec![0; n],
        w_out: vec![0; n],
        w_in_star: vec![0; n],
        w_out_star: vec![0; n],
    };
    for i in 0..n {
        for j in 0..n {
            m.w_out[i] += od.a[i][j];
            m.w_in[j] += od.a[i][j];
        }
    }
    for i in 0..n {
        m.w_in_star[i] = m.w_in[i] - od.a[i][i];
        m.w_out_star[i] = m.w_out[i] - od.a[i][i];
    }
    m
}

/// Photographs per 1000 residents, per origin region.
pub fn per_capita_rates(marginals: &FlowMarginals, map: &RegionMap) -> Vec<f64> {
    marginals
        .w_out
        .iter()
        .zip(map.infos())
        .map(|(&w, info)| 1000.0 * w as f64 / info.population)
        .collect()
}

/// Incoming visitor photos per destination resident, split by whether the
/// visitor's home country matches the destination country.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeAttractiveness {
    pub domestic_per_capita: f64,
    pub foreign_per_capita: f64,
}

pub fn relative_attractiveness(
    od: &OdMatrix,
    map: &RegionMap,
    dest: usize,
) -> Result<RelativeAttractiveness> {
    let dest_info = map.info(dest);
    let dest_country = dest_info.country_code.as_deref().ok_or_else(|| {
        Error::config(format!(
            "destination {} is a bucket, not a city",
            dest_info.region
        ))
    })?;
    let mut domestic = 0u64;
    let mut foreign = 0u64;
    for i in 0..od.n() {
        if i == dest {
            continue;
        }
        match map.info(i).country_code.as_deref() {
            Some(c) if c == dest_country => domestic += od.a[i][dest],
            _ => foreign += od.a[i][dest],
        }
    }
    Ok(RelativeAttractiveness {
        domestic_per_capita: domestic as f64 / dest_info.population,
        foreign_per_capita: foreign as f64 / dest_info.population,
    })
}

/// Raw category counts of photos taken in one city.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CityBreakdown {
    pub city_id: CityId,
    pub resident: u64,
    pub domestic_tourist: u64,
    pub foreign_tourist: u64,
    pub unknown_home: u64,
}

impl CityBreakdown {
    pub fn classified(&self) -> u64 {
        self.resident + self.domestic_tourist + self.foreign_tourist
    }

    /// Shares over classified photos; None when the city has none.
    pub fn shares(&self) -> Option<(f64, f64, f64)> {
        let total = self.classified();
        if total == 0 {
            return None;
        }
        let t = total as f64;
        Some((
            self.resident as f64 / t,
            self.domestic_tourist as f64 / t,
            self.foreign_tourist as f64 / t,
        ))
    }
}

pub fn city_activity_breakdown(photos: &[CategorizedPhoto], city: &CityId) -> CityBreakdown {
    let mut b = CityBreakdown {
        city_id: city.clone(),
        resident: 0,
        domestic_tourist: 0,
        foreign_tourist: 0,
        unknown_home: 0,
    };
    for p in photos.iter().filter(|p| &p.photo.city_id == city) {
        match p.category {
            ActivityCategory::Resident => b.resident += 1,
            ActivityCategory::DomesticTourist => b.domestic_tourist += 1,
            ActivityCategory::ForeignTourist => b.foreign_tourist += 1,
            ActivityCategory::UnknownHome => b.unknown_home += 1,
        }
    }
    b
}

/// Where one region's residents photograph: at home, elsewhere in their
/// country, or abroad. Shares of w_out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DestinationBreakdown {
    pub home: f64,
    pub domestic: f64,
    pub foreign: f64,
}

/// None when the origin's residents took no photos at all. Origins without a
/// single country (rest_of_eu, rest_of_world) count every non-loop photo as
/// foreign.
pub fn resident_destination_breakdown(
    od: &OdMatrix,
    map: &RegionMap,
    origin: usize,
) -> Option<DestinationBreakdown> {
    let w_out: u64 = od.a[origin].iter().sum();
    if w_out == 0 {
        return None;
    }
    let origin_country = map.info(origin).country_code.as_deref();
    let home = od.a[origin][origin];
    let mut domestic = 0u64;
    for j in 0..od.n() {
        if j == origin {
            continue;
        }
        if let (Some(oc), Some(dc)) = (origin_country, map.info(j).country_code.as_deref()) {
            if oc == dc {
                domestic += od.a[origin][j];
            }
        }
    }
    let foreign = w_out - home - domestic;
    let t = w_out as f64;
    Some(DestinationBreakdown {
        home: home as f64 / t,
        domestic: domestic as f64 / t,
        foreign: foreign as f64 / t,
    })
}

/// Expected flows under homogeneous mixing and the observed/expected ratios.
/// `model[i][j]` is None on the diagonal and on undefined rows; `ratio[i][j]`
/// additionally requires model > 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullModelResult {
    pub regions: Vec<Region>,
    pub model: Vec<Vec<Option<f64>>>,
    pub ratio: Vec<Vec<Option<f64>>>,
    /// Origins whose visitor inflow everywhere else sums to zero.
    pub undefined_origins: Vec<usize>,
}

/// model(i,j) = w_out*(i) * w_in*(j) / sum over k != i of w_in*(k).
/// An origin's expected outflows reproduce w_out*(i) exactly.
pub fn null_model_matrix(od: &OdMatrix, marginals: &FlowMarginals) -> Result<NullModelResult> {
    let n = od.n();
    if n < 2 {
        return Err(Error::config(format!(
            "null model needs at least two regions, got {n}"
        )));
    }
    let total_in_star: u64 = marginals.w_in_star.iter().sum();
    let mut model = vec![vec![None; n]; n];
    let mut ratio = vec![vec![None; n]; n];
    let mut undefined_origins = Vec::new();
    for i in 0..n {
        let denom = (total_in_star - marginals.w_in_star[i]) as f64;
        if denom == 0.0 {
            undefined_origins.push(i);
            log::warn!(
                "null model: origin {} has no visitor inflow anywhere else; row undefined",
                od.regions[i]
            );
            continue;
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let m = marginals.w_out_star[i] as f64 * marginals.w_in_star[j] as f64 / denom;
            model[i][j] = Some(m);
            if m > 0.0 {
                ratio[i][j] = Some(od.a[i][j] as f64 / m);
            }
        }
    }
    Ok(NullModelResult {
        regions: od.regions.clone(),
        model,
        ratio,
        undefined_origins,
    })
}

/// One usable point for the distance-decay fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayPair {
    pub origin: Region,
    pub dest: Region,
    pub distance_km: f64,
    pub ratio: f64,
    /// ln(ratio) minus the fitted line at this distance.
    pub residual_log: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceDecay {
    pub fit: ExponentialFit,
    pub pairs: Vec<DecayPair>,
    /// Mean ratio over pairs from US regions to European regions.
    pub us_to_eu_mean_ratio: Option<f64>,
    /// Mean ratio over pairs from European regions to US regions.
    pub eu_to_us_mean_ratio: Option<f64>,
}

/// Fit ratio = A * exp(-beta * distance) over city-to-city pairs with a
/// defined positive ratio. Buckets have no centroid and are skipped.
pub fn distance_decay_fit(null: &NullModelResult, map: &RegionMap) -> Result<DistanceDecay> {
    let n = null.regions.len();
    let mut raw = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (Some(ci), Some(cj)) = (map.info(i).centroid, map.info(j).centroid) else {
                continue;
            };
            let Some(r) = null.ratio[i][j] else { continue };
            if r <= 0.0 {
                continue;
            }
            raw.push((i, j, great_circle_km(ci, cj), r));
        }
    }
    if raw.len() < 3 {
        return Err(Error::numeric(format!(
            "distance decay needs at least 3 positive city pairs, got {}",
            raw.len()
        )));
    }
    let xs: Vec<f64> = raw.iter().map(|p| p.2).collect();
    let ys: Vec<f64> = raw.iter().map(|p| p.3).collect();
    let fit = fit_exponential(&xs, &ys)?;
    let pairs: Vec<DecayPair> = raw
        .iter()
        .map(|&(i, j, d, r)| DecayPair {
            origin: null.regions[i].clone(),
            dest: null.regions[j].clone(),
            distance_km: d,
            ratio: r,
            residual_log: r.ln() - (fit.amplitude.ln() - fit.decay_rate * d),
        })
        .collect();

    let group_mean = |from: CountryGroup, to: CountryGroup| -> Option<f64> {
        let vals: Vec<f64> = raw
            .iter()
            .filter(|&&(i, j, _, _)| map.info(i).group == from && map.info(j).group == to)
            .map(|p| p.3)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    Ok(DistanceDecay {
        fit,
        pairs,
        us_to_eu_mean_ratio: group_mean(CountryGroup::Us, CountryGroup::Eu),
        eu_to_us_mean_ratio: group_mean(CountryGroup::Eu, CountryGroup::Us),
    })
}

/// Linear fit of per-origin photo volume against distinct homed users.
pub fn users_vs_photos_fit(
    homes: &BTreeMap<String, HomeAssignment>,
    od: &OdMatrix,
    map: &RegionMap,
) -> Result<LinearFit> {
    let mut users_per_region = vec![0u64; map.len()];
    for h in homes.values() {
        if let Some(city) = &h.home_city_id {
            if let Some(idx) = map.region_of_city(city) {
                users_per_region[idx] += 1;
            }
        }
    }
    let marginals = flow_marginals(od);
    let xs: Vec<f64> = users_per_region.iter().map(|&u| u as f64).collect();
    let ys: Vec<f64> = marginals.w_out.iter().map(|&w| w as f64).collect();
    linear_regression_r2(&xs, &ys)
}
