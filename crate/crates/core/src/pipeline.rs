//! End-to-end orchestration: ingest, home inference, flow analyses, per-city
//! spatial analyses, and all file exports.
//!
//! Outputs are a pure function of (corpus bytes, config): map iteration is
//! ordered, parallel merges are order-stable, and nothing time- or
//! scheduling-dependent is written to the output tree. Timings and worker
//! counts go to the log on stderr instead.

use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::export;
use crate::flows::{
    build_od_matrix, city_activity_breakdown, distance_decay_fit, flow_marginals,
    null_model_matrix, per_capita_rates, relative_attractiveness,
    resident_destination_breakdown, users_vs_photos_fit, DistanceDecay, OdMatrix, Region,
    RegionMap,
};
use crate::homes::{
    assign_homes, categorize_all, resident_label_consistency, summarize_user_city_activity,
    CategorizedPhoto, ConsistencyReport, HomeAssignment, LocatedPhoto,
};
use crate::ingest::{ingest_dir, IngestStats, PhotoRecord, TimeWindow};
use crate::registry::{CityId, CityRegistry, LatLon};
use crate::spatial::{
    accumulate_density, density_distribution_fit, extract_hotspots, hotspot_coverage,
    hotspot_rank_profile, quintile_area_curve, tourist_resident_area_ratio, AreaRatios,
    CoveragePoint, DensityCategory, DensityField, GridSpec, Hotspot, QuintileCurve,
};
use crate::stats::{ExponentialFit, LinearFit, PowerLawFit, TruncatedLogNormalFit};

/// A result the pipeline records instead of failing on: per-city or per-fit
/// shortfalls are data facts, not stage errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Computed<T> {
    Ok(T),
    Skipped(String),
}

impl<T> Computed<T> {
    pub fn from_result(r: Result<T>) -> Computed<T> {
        match r {
            Ok(v) => Computed::Ok(v),
            Err(e) => Computed::Skipped(e.to_string()),
        }
    }

    pub fn ok(&self) -> Option<&T> {
        match self {
            Computed::Ok(v) => Some(v),
            Computed::Skipped(_) => None,
        }
    }
}

/// Which output families a run writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sections {
    pub homes: bool,
    pub flows: bool,
    pub spatial: bool,
}

impl Sections {
    pub fn all() -> Sections {
        Sections { homes: true, flows: true, spatial: true }
    }

    pub fn homes_only() -> Sections {
        Sections { homes: true, flows: false, spatial: false }
    }

    pub fn flows_only() -> Sections {
        Sections { homes: true, flows: true, spatial: false }
    }

    pub fn spatial_only() -> Sections {
        Sections { homes: true, flows: false, spatial: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
    GeoJson,
}

/// Restricts which file kinds the exports write; the run report is always
/// written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportFilter(Option<Vec<ExportFormat>>);

impl ExportFilter {
    pub fn all() -> ExportFilter {
        ExportFilter(None)
    }

    pub fn parse(s: &str) -> Result<ExportFilter> {
        let mut formats = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let f = match part {
                "csv" => ExportFormat::Csv,
                "json" => ExportFormat::Json,
                "geojson" => ExportFormat::GeoJson,
                other => {
                    return Err(Error::config(format!(
                        "unknown export format `{other}`; expected csv, json, geojson"
                    )))
                }
            };
            if !formats.contains(&f) {
                formats.push(f);
            }
        }
        if formats.is_empty() {
            return Err(Error::config("no export formats given"));
        }
        Ok(ExportFilter(Some(formats)))
    }

    fn allows(&self, f: ExportFormat) -> bool {
        match &self.0 {
            None => true,
            Some(list) => list.contains(&f),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowsReport {
    pub regions: Vec<String>,
    pub od_total_photos: u64,
    /// Regions with zero visitor inflow elsewhere; their null-model rows are
    /// undefined.
    pub null_model_undefined_origins: Vec<String>,
    pub distance_decay_fit: Computed<ExponentialFit>,
    pub us_to_eu_mean_ratio: Option<f64>,
    pub eu_to_us_mean_ratio: Option<f64>,
    pub users_vs_photos: Computed<LinearFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CitySpatialSummary {
    pub city_id: CityId,
    pub photos: u64,
    pub outside_grid: u64,
    pub nonzero_cells: usize,
    pub hotspots_requested: usize,
    pub hotspots_extracted: usize,
}

/// Machine-readable run record, written as `run_report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub window: TimeWindow,
    pub ingest: IngestStats,
    pub located: u64,
    pub unlocated: u64,
    pub users_total: u64,
    pub users_homed: u64,
    pub label_consistency: ConsistencyReport,
    pub flows: Option<FlowsReport>,
    pub cities: Option<Vec<CitySpatialSummary>>,
    /// Every file written besides this report, sorted.
    pub files: Vec<String>,
}

/// Locate each record's city; unresolved records are counted and dropped.
pub fn locate_records(
    records: &[PhotoRecord],
    registry: &CityRegistry,
) -> (Vec<LocatedPhoto>, u64) {
    let mut located = Vec::with_capacity(records.len());
    let mut unlocated = 0u64;
    for r in records {
        match registry.locate(&r.location_id, LatLon::new(r.lat, r.lon)) {
            Some(city) => located.push(LocatedPhoto {
                user_id: r.user_id.clone(),
                city_id: city.city_id.clone(),
                taken_at: r.taken_at,
                lat: r.lat,
                lon: r.lon,
                source_label: r.source_label,
            }),
            None => unlocated += 1,
        }
    }
    (located, unlocated)
}

/// Everything the flow analyses produce for one region map.
pub struct FlowsOutcome {
    pub map: RegionMap,
    pub od: OdMatrix,
    pub rates: Vec<f64>,
    pub null: crate::flows::NullModelResult,
    pub decay: Computed<DistanceDecay>,
    pub users_vs_photos: Computed<LinearFit>,
}

pub fn flows_stage(
    located: &[LocatedPhoto],
    homes: &BTreeMap<String, HomeAssignment>,
    map: RegionMap,
) -> Result<FlowsOutcome> {
    let od = build_od_matrix(located, homes, &map);
    let marginals = flow_marginals(&od);
    let rates = per_capita_rates(&marginals, &map);
    let null = null_model_matrix(&od, &marginals)?;
    let decay = Computed::from_result(distance_decay_fit(&null, &map));
    let users_vs_photos = Computed::from_result(users_vs_photos_fit(homes, &od, &map));
    Ok(FlowsOutcome { map, od, rates, null, decay, users_vs_photos })
}

/// Spatial analyses of one city.
pub struct CitySpatial {
    pub city_id: CityId,
    pub grid: GridSpec,
    pub field: DensityField,
    pub lognormal: BTreeMap<&'static str, Computed<TruncatedLogNormalFit>>,
    pub quintiles: Vec<QuintileCurve>,
    pub area_ratios: AreaRatios,
    pub hotspots: Vec<Hotspot>,
    pub rank_fit: Computed<PowerLawFit>,
    pub coverage: Vec<CoveragePoint>,
}

/// Categories that get distribution fits and quantile curves.
const ANALYZED: [DensityCategory; 4] = [
    DensityCategory::Resident,
    DensityCategory::Domestic,
    DensityCategory::Foreign,
    DensityCategory::Total,
];

pub fn spatial_stage(
    categorized: &[CategorizedPhoto],
    registry: &CityRegistry,
    cell_size_m: f64,
    hotspots_requested: usize,
) -> Result<Vec<CitySpatial>> {
    let mut by_city: BTreeMap<&CityId, Vec<CategorizedPhoto>> = BTreeMap::new();
    for p in categorized {
        by_city.entry(&p.photo.city_id).or_default().push(p.clone());
    }
    let mut out = Vec::new();
    for (city_id, photos) in by_city {
        let city = registry
            .get(city_id)
            .ok_or_else(|| Error::data(format!("located photo in unknown city `{city_id}`")))?;
        let grid = GridSpec::for_city(city, cell_size_m)?;
        let field = accumulate_density(&photos, &grid);

        let mut lognormal = BTreeMap::new();
        for cat in ANALYZED {
            lognormal.insert(
                cat.as_str(),
                Computed::from_result(density_distribution_fit(&field, cat)),
            );
        }
        let quintiles: Vec<QuintileCurve> = ANALYZED
            .iter()
            .filter_map(|&cat| quintile_area_curve(&field, cat).ok())
            .collect();
        let area_ratios = tourist_resident_area_ratio(&field);

        let nonzero = field.nonzero_entries(DensityCategory::Total).len();
        let n_eff = hotspots_requested.min(nonzero);
        let hotspots = if n_eff == 0 {
            Vec::new()
        } else {
            extract_hotspots(&field, DensityCategory::Total, n_eff)?
        };
        let rank_fit = Computed::from_result(hotspot_rank_profile(&hotspots));
        let coverage = hotspot_coverage(&field, DensityCategory::Total, hotspots_requested);

        out.push(CitySpatial {
            city_id: city_id.clone(),
            grid,
            field,
            lognormal,
            quintiles,
            area_ratios,
            hotspots,
            rank_fit,
            coverage,
        });
    }
    Ok(out)
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    run_pipeline_with(cfg, Sections::all(), &ExportFilter::all())
}

pub fn run_pipeline_with(
    cfg: &PipelineConfig,
    sections: Sections,
    formats: &ExportFilter,
) -> Result<RunReport> {
    cfg.validate()?;
    let window = cfg.window()?;
    let params = cfg.home_params();
    let registry = cfg.registry()?;
    let input = cfg.input_dir()?;
    let out = cfg.out_dir()?.to_owned();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let t0 = Instant::now();
    let (records, stats) = ingest_dir(input, &window, cfg.workers)?;
    log::info!(
        "ingest: kept {} of {} records with {} workers in {:.2?}",
        stats.records_kept,
        stats.records_read,
        cfg.workers,
        t0.elapsed()
    );

    let t1 = Instant::now();
    let (located, unlocated) = locate_records(&records, &registry);
    drop(records);
    log::info!("locate: {} located, {unlocated} unresolved in {:.2?}", located.len(), t1.elapsed());

    let t2 = Instant::now();
    let summaries = summarize_user_city_activity(&located);
    let homes = assign_homes(&summaries, &params, &registry);
    let users_homed = homes.values().filter(|h| h.home_city_id.is_some()).count() as u64;
    let consistency = resident_label_consistency(&located, &homes);
    log::info!("homes: {users_homed} of {} users homed in {:.2?}", homes.len(), t2.elapsed());

    let mut files: Vec<String> = Vec::new();
    let mut write = |name: &str| files.push(name.to_owned());

    if sections.homes && formats.allows(ExportFormat::Csv) {
        export::write_homes(&out.join("homes.csv"), &homes)?;
        write("homes.csv");
    }

    let flows_report = if sections.flows {
        let t3 = Instant::now();
        let map = cfg.region_map(&registry)?;
        let outcome = flows_stage(&located, &homes, map)?;
        let marginals = flow_marginals(&outcome.od);
        log::info!("flows: {} regions in {:.2?}", outcome.map.len(), t3.elapsed());

        if formats.allows(ExportFormat::Csv) {
            export::write_per_capita(&out.join("per_capita.csv"), &outcome.map, &marginals, &outcome.rates)?;
            write("per_capita.csv");
            export::write_od_edges(&out.join("od_edges.csv"), &outcome.od)?;
            write("od_edges.csv");
            export::write_ratio_matrix(&out.join("null_model_ratios.csv"), &outcome.null)?;
            write("null_model_ratios.csv");

            let city_regions: Vec<(usize, CityId)> = outcome
                .map
                .infos()
                .iter()
                .enumerate()
                .filter_map(|(i, info)| match &info.region {
                    Region::City(id) => Some((i, id.clone())),
                    _ => None,
                })
                .collect();
            let attractiveness: Vec<_> = city_regions
                .iter()
                .map(|(i, id)| {
                    relative_attractiveness(&outcome.od, &outcome.map, *i).map(|r| (id.clone(), r))
                })
                .collect::<Result<_>>()?;
            export::write_relative_attractiveness(
                &out.join("relative_attractiveness.csv"),
                &attractiveness,
            )?;
            write("relative_attractiveness.csv");
            let destinations: Vec<_> = city_regions
                .iter()
                .map(|(i, id)| (id.clone(), resident_destination_breakdown(&outcome.od, &outcome.map, *i)))
                .collect();
            export::write_destination_breakdowns(&out.join("destination_breakdown.csv"), &destinations)?;
            write("destination_breakdown.csv");
        }
        if formats.allows(ExportFormat::Json) {
            export::write_json(&out.join("distance_decay.json"), &outcome.decay)?;
            write("distance_decay.json");
            export::write_json(&out.join("users_vs_photos.json"), &outcome.users_vs_photos)?;
            write("users_vs_photos.json");
        }

        let (fit, us_eu, eu_us) = match outcome.decay {
            Computed::Ok(d) => (Computed::Ok(d.fit), d.us_to_eu_mean_ratio, d.eu_to_us_mean_ratio),
            Computed::Skipped(why) => (Computed::Skipped(why), None, None),
        };
        Some(FlowsReport {
            regions: outcome.map.infos().iter().map(|i| i.region.id().to_owned()).collect(),
            od_total_photos: outcome.od.total(),
            null_model_undefined_origins: outcome
                .null
                .undefined_origins
                .iter()
                .map(|&i| outcome.null.regions[i].id().to_owned())
                .collect(),
            distance_decay_fit: fit,
            us_to_eu_mean_ratio: us_eu,
            eu_to_us_mean_ratio: eu_us,
            users_vs_photos: outcome.users_vs_photos,
        })
    } else {
        None
    };

    let categorized = categorize_all(located, &homes, &registry);

    // Per-city activity mix: a flow product, though it is computed from the
    // categorized photos rather than the region map.
    if sections.flows && formats.allows(ExportFormat::Csv) {
        let mut city_ids: Vec<CityId> =
            categorized.iter().map(|p| p.photo.city_id.clone()).collect();
        city_ids.sort();
        city_ids.dedup();
        let breakdowns: Vec<_> = city_ids
            .iter()
            .map(|id| city_activity_breakdown(&categorized, id))
            .collect();
        export::write_activity_breakdowns(&out.join("activity_breakdown.csv"), &breakdowns)?;
        write("activity_breakdown.csv");
    }

    let city_summaries = if sections.spatial {
        let t4 = Instant::now();
        let cities = spatial_stage(&categorized, &registry, cfg.cell_size, cfg.hotspots)?;
        log::info!("spatial: {} cities in {:.2?}", cities.len(), t4.elapsed());

        if formats.allows(ExportFormat::Csv) {
            let curves: Vec<_> = cities
                .iter()
                .flat_map(|c| c.quintiles.iter().map(|q| (c.city_id.clone(), q.clone())))
                .collect();
            export::write_quintile_curves(&out.join("quintile_curves.csv"), &curves)?;
            write("quintile_curves.csv");

            let ratios: Vec<_> = cities.iter().map(|c| (c.city_id.clone(), c.area_ratios)).collect();
            export::write_area_ratios(&out.join("area_ratios.csv"), &ratios)?;
            write("area_ratios.csv");

            let coverage: Vec<_> =
                cities.iter().map(|c| (c.city_id.clone(), c.coverage.clone())).collect();
            export::write_coverage(&out.join("hotspot_coverage.csv"), &coverage)?;
            write("hotspot_coverage.csv");

            for c in &cities {
                let name = format!("density_{}.csv", c.city_id);
                export::write_density(&out.join(&name), &c.field)?;
                write(&name);
            }
        }
        if formats.allows(ExportFormat::Json) {
            let lognormal: BTreeMap<_, _> =
                cities.iter().map(|c| (c.city_id.to_string(), &c.lognormal)).collect();
            export::write_json(&out.join("lognormal_fits.json"), &lognormal)?;
            write("lognormal_fits.json");
            let rank_fits: BTreeMap<_, _> =
                cities.iter().map(|c| (c.city_id.to_string(), &c.rank_fit)).collect();
            export::write_json(&out.join("rank_fits.json"), &rank_fits)?;
            write("rank_fits.json");
        }
        if formats.allows(ExportFormat::GeoJson) {
            for c in &cities {
                let name = format!("hotspots_{}.geojson", c.city_id);
                let doc = export::hotspots_feature_collection(&c.city_id, &c.grid, &c.hotspots);
                export::write_json(&out.join(&name), &doc)?;
                write(&name);
            }
        }

        Some(
            cities
                .iter()
                .map(|c| CitySpatialSummary {
                    city_id: c.city_id.clone(),
                    photos: c.field.total_activity(DensityCategory::Total) + c.field.outside,
                    outside_grid: c.field.outside,
                    nonzero_cells: c.field.nonzero_entries(DensityCategory::Total).len(),
                    hotspots_requested: cfg.hotspots,
                    hotspots_extracted: c.hotspots.len(),
                })
                .collect(),
        )
    } else {
        None
    };

    files.sort();
    let report = RunReport {
        window,
        ingest: stats,
        located: categorized.len() as u64,
        unlocated,
        users_total: homes.len() as u64,
        users_homed,
        label_consistency: consistency,
        flows: flows_report,
        cities: city_summaries,
        files,
    };
    export::write_json(&out.join("run_report.json"), &report)?;
    Ok(report)
}
