//! Pipeline configuration: a flat JSON document in which every key can be
//! overridden by the CLI flag of the same name.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{BucketPopulations, RegionMap};
use crate::homes::HomeParams;
use crate::ingest::TimeWindow;
use crate::registry::{CityId, CityRegistry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory of `<location>_<label>.csv` input files.
    pub input: Option<PathBuf>,
    /// City registry CSV; the bundled ten-city registry when absent.
    pub registry: Option<PathBuf>,
    /// Extra alias CSV merged into the registry.
    pub aliases: Option<PathBuf>,
    /// Analysis window, `start..end`, each side a date or an RFC 3339 instant.
    pub window: String,
    pub min_photos: u64,
    pub min_span_days: f64,
    /// Grid cell edge in meters.
    pub cell_size: f64,
    /// Hotspots requested per city; also the depth of the coverage series.
    pub hotspots: usize,
    /// Region set: `cities`, `topN+rest`, or `id,id,...+rest`.
    pub regions: String,
    pub out: Option<PathBuf>,
    /// Ingest worker threads.
    pub workers: usize,
    /// Corpus generation seed; analysis stages never draw randomness.
    pub seed: u64,
    pub rest_of_eu_population: f64,
    pub rest_of_us_population: f64,
    pub rest_of_world_population: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let buckets = BucketPopulations::default();
        PipelineConfig {
            input: None,
            registry: None,
            aliases: None,
            window: "2007-01-01..2010-01-01".to_owned(),
            min_photos: 10,
            min_span_days: 180.0,
            cell_size: 500.0,
            hotspots: 12,
            regions: "top10+rest".to_owned(),
            out: None,
            workers: 1,
            seed: 42,
            rest_of_eu_population: buckets.rest_of_eu,
            rest_of_us_population: buckets.rest_of_us,
            rest_of_world_population: buckets.rest_of_world,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        // An unreadable config file is a configuration mistake like any
        // other bad path in the file, not a data-stage failure.
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Cheap structural checks plus existence of every referenced path.
    pub fn validate(&self) -> Result<()> {
        self.window()?;
        if self.min_photos == 0 {
            return Err(Error::config("min_photos must be positive"));
        }
        if !(self.min_span_days > 0.0) {
            return Err(Error::config(format!(
                "min_span_days must be positive, got {}",
                self.min_span_days
            )));
        }
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(Error::config(format!(
                "cell_size must be positive, got {}",
                self.cell_size
            )));
        }
        if self.hotspots == 0 {
            return Err(Error::config("hotspots must be positive"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be positive"));
        }
        for pop in [
            self.rest_of_eu_population,
            self.rest_of_us_population,
            self.rest_of_world_population,
        ] {
            if !(pop > 0.0) || !pop.is_finite() {
                return Err(Error::config(format!("bucket population must be positive, got {pop}")));
            }
        }
        parse_region_set(&self.regions)?;
        for (key, path) in [
            ("input", &self.input),
            ("registry", &self.registry),
            ("aliases", &self.aliases),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::config(format!(
                        "{key} path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn window(&self) -> Result<TimeWindow> {
        TimeWindow::parse(&self.window)
    }

    pub fn home_params(&self) -> HomeParams {
        HomeParams {
            min_photos: self.min_photos,
            min_span_days: self.min_span_days,
        }
    }

    pub fn bucket_populations(&self) -> BucketPopulations {
        BucketPopulations {
            rest_of_eu: self.rest_of_eu_population,
            rest_of_us: self.rest_of_us_population,
            rest_of_world: self.rest_of_world_population,
        }
    }

    /// Load the configured registry (bundled when unset) and merge aliases.
    pub fn registry(&self) -> Result<CityRegistry> {
        let mut reg = match &self.registry {
            Some(path) => CityRegistry::load(path)?,
            None => CityRegistry::bundled(),
        };
        if let Some(path) = &self.aliases {
            reg.load_aliases(path)?;
        }
        Ok(reg)
    }

    pub fn region_map(&self, registry: &CityRegistry) -> Result<RegionMap> {
        build_region_map(&self.regions, registry, &self.bucket_populations())
    }

    pub fn input_dir(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::config("no input directory; pass --input or set `input`"))
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::config("no output directory; pass --out or set `out`"))
    }
}

/// How the OD regions are chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegionSet {
    /// Every registry city is its own region, no rest buckets.
    AllCities,
    /// First `n` registry cities plus the three rest buckets.
    TopWithRest(usize),
    /// Explicit cities plus the three rest buckets.
    ListWithRest(Vec<CityId>),
}

pub fn parse_region_set(s: &str) -> Result<RegionSet> {
    let s = s.trim();
    if s == "cities" {
        return Ok(RegionSet::AllCities);
    }
    let Some(prefix) = s.strip_suffix("+rest") else {
        return Err(Error::config(format!(
            "region set `{s}` is not `cities`, `topN+rest`, or `id,id,...+rest`"
        )));
    };
    if let Some(digits) = prefix.strip_prefix("top") {
        if let Ok(n) = digits.parse::<usize>() {
            if n == 0 {
                return Err(Error::config("region set needs at least one city"));
            }
            return Ok(RegionSet::TopWithRest(n));
        }
    }
    let ids: Vec<CityId> = prefix
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(CityId::new)
        .collect();
    if ids.is_empty() {
        return Err(Error::config("region set needs at least one city"));
    }
    Ok(RegionSet::ListWithRest(ids))
}

pub fn build_region_map(
    spec: &str,
    registry: &CityRegistry,
    buckets: &BucketPopulations,
) -> Result<RegionMap> {
    match parse_region_set(spec)? {
        RegionSet::AllCities => Ok(RegionMap::all_cities(registry)),
        RegionSet::TopWithRest(n) => {
            if registry.len() < n {
                return Err(Error::config(format!(
                    "region set top{n}+rest needs {n} cities, registry has {}",
                    registry.len()
                )));
            }
            let top: Vec<CityId> = registry.cities()[..n]
                .iter()
                .map(|c| c.city_id.clone())
                .collect();
            RegionMap::top_cities_with_rest(registry, &top, buckets)
        }
        RegionSet::ListWithRest(ids) => RegionMap::top_cities_with_rest(registry, &ids, buckets),
    }
}
