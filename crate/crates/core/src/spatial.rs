//! Within-city spatial analysis on square grids: per-category photo density,
//! truncated log-normal fits of cell counts, activity quantile areas, hotspot
//! extraction, and hotspot rank profiles.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::homes::{ActivityCategory, CategorizedPhoto};
use crate::registry::{City, CityId, LatLon};
use crate::stats::{fit_power_law, fit_truncated_lognormal, PowerLawFit, TruncatedLogNormalFit};

/// Mean Earth radius in meters; matches the distance computations elsewhere.
const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Square grid over a city bounding box, anchored at its south-west corner.
/// Projection is local equirectangular about the anchor: at city scale the
/// distortion is far below one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub city_id: CityId,
    pub anchor: LatLon,
    pub cell_size_m: f64,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl GridSpec {
    pub fn for_city(city: &City, cell_size_m: f64) -> Result<GridSpec> {
        if !(cell_size_m > 0.0) || !cell_size_m.is_finite() {
            return Err(Error::config(format!(
                "cell size must be positive, got {cell_size_m}"
            )));
        }
        let anchor = city.bbox.south_west();
        let y_max = EARTH_RADIUS_M * (city.bbox.max_lat - anchor.lat).to_radians();
        let x_max =
            EARTH_RADIUS_M * anchor.lat.to_radians().cos() * (city.bbox.max_lon - anchor.lon).to_radians();
        // floor + 1 keeps the closed bbox inside even when the extent is an
        // exact multiple of the cell size.
        Ok(GridSpec {
            city_id: city.city_id.clone(),
            anchor,
            cell_size_m,
            n_rows: (y_max / cell_size_m).floor() as usize + 1,
            n_cols: (x_max / cell_size_m).floor() as usize + 1,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Cell of a point, None when it falls off the grid.
    pub fn grid_index(&self, p: LatLon) -> Option<(usize, usize)> {
        let y = EARTH_RADIUS_M * (p.lat - self.anchor.lat).to_radians();
        let x = EARTH_RADIUS_M * self.anchor.lat.to_radians().cos()
            * (p.lon - self.anchor.lon).to_radians();
        let row = (y / self.cell_size_m).floor();
        let col = (x / self.cell_size_m).floor();
        if row < 0.0 || col < 0.0 || row >= self.n_rows as f64 || col >= self.n_cols as f64 {
            return None;
        }
        Some((row as usize, col as usize))
    }

    fn lat_of_y(&self, y: f64) -> f64 {
        self.anchor.lat + (y / EARTH_RADIUS_M).to_degrees()
    }

    fn lon_of_x(&self, x: f64) -> f64 {
        self.anchor.lon + (x / (EARTH_RADIUS_M * self.anchor.lat.to_radians().cos())).to_degrees()
    }

    /// Cell corners in counter-clockwise order starting south-west.
    pub fn cell_polygon(&self, row: usize, col: usize) -> [LatLon; 4] {
        let y0 = row as f64 * self.cell_size_m;
        let y1 = y0 + self.cell_size_m;
        let x0 = col as f64 * self.cell_size_m;
        let x1 = x0 + self.cell_size_m;
        [
            LatLon::new(self.lat_of_y(y0), self.lon_of_x(x0)),
            LatLon::new(self.lat_of_y(y0), self.lon_of_x(x1)),
            LatLon::new(self.lat_of_y(y1), self.lon_of_x(x1)),
            LatLon::new(self.lat_of_y(y1), self.lon_of_x(x0)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityCategory {
    Resident,
    Domestic,
    Foreign,
    Unknown,
    Total,
}

impl DensityCategory {
    pub const ALL: [DensityCategory; 5] = [
        DensityCategory::Resident,
        DensityCategory::Domestic,
        DensityCategory::Foreign,
        DensityCategory::Unknown,
        DensityCategory::Total,
    ];

    /// Categories the distribution analyses run over.
    pub const FITTED: [DensityCategory; 3] = [
        DensityCategory::Resident,
        DensityCategory::Domestic,
        DensityCategory::Foreign,
    ];

    pub fn from_activity(cat: ActivityCategory) -> DensityCategory {
        match cat {
            ActivityCategory::Resident => DensityCategory::Resident,
            ActivityCategory::DomesticTourist => DensityCategory::Domestic,
            ActivityCategory::ForeignTourist => DensityCategory::Foreign,
            ActivityCategory::UnknownHome => DensityCategory::Unknown,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DensityCategory::Resident => "resident",
            DensityCategory::Domestic => "domestic",
            DensityCategory::Foreign => "foreign",
            DensityCategory::Unknown => "unknown",
            DensityCategory::Total => "total",
        }
    }

    fn idx(&self) -> usize {
        *self as usize
    }
}

/// Per-cell, per-category photo counts over one city grid; row-major flat
/// storage. A cell's total always equals the sum of the four categories.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: GridSpec,
    counts: [Vec<u64>; 5],
    /// Records whose coordinates missed the grid.
    pub outside: u64,
}

impl DensityField {
    pub fn new(grid: GridSpec) -> DensityField {
        let n = grid.n_cells();
        DensityField {
            grid,
            counts: std::array::from_fn(|_| vec![0; n]),
            outside: 0,
        }
    }

    pub fn count(&self, cat: DensityCategory, row: usize, col: usize) -> u64 {
        self.counts[cat.idx()][row * self.grid.n_cols + col]
    }

    /// Flat row-major cell counts for one category.
    pub fn cells(&self, cat: DensityCategory) -> &[u64] {
        &self.counts[cat.idx()]
    }

    pub fn add(&mut self, cat: DensityCategory, row: usize, col: usize, k: u64) {
        let i = row * self.grid.n_cols + col;
        self.counts[cat.idx()][i] += k;
        if cat != DensityCategory::Total {
            self.counts[DensityCategory::Total.idx()][i] += k;
        }
    }

    pub fn total_activity(&self, cat: DensityCategory) -> u64 {
        self.cells(cat).iter().sum()
    }

    pub fn nonzero_cells(&self, cat: DensityCategory) -> Vec<f64> {
        self.cells(cat)
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| c as f64)
            .collect()
    }

    /// Nonzero cells of a category as (row, col, count).
    pub fn nonzero_entries(&self, cat: DensityCategory) -> Vec<(usize, usize, u64)> {
        self.cells(cat)
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i / self.grid.n_cols, i % self.grid.n_cols, c))
            .collect()
    }
}

/// Bin categorized photos into the grid. Deterministic: one pass in input
/// order over plain counters.
pub fn accumulate_density(photos: &[CategorizedPhoto], grid: &GridSpec) -> DensityField {
    let mut field = DensityField::new(grid.clone());
    for p in photos {
        debug_assert_eq!(p.photo.city_id, grid.city_id);
        match grid.grid_index(LatLon::new(p.photo.lat, p.photo.lon)) {
            Some((row, col)) => {
                field.add(DensityCategory::from_activity(p.category), row, col, 1)
            }
            None => field.outside += 1,
        }
    }
    field
}

/// Fit a log-normal left-truncated at one photo to the nonzero cell counts
/// of a category.
pub fn density_distribution_fit(
    field: &DensityField,
    cat: DensityCategory,
) -> Result<TruncatedLogNormalFit> {
    let samples = field.nonzero_cells(cat);
    if samples.len() < 30 {
        return Err(Error::numeric(format!(
            "category {} has {} nonzero cells in {}; the distribution fit needs at least 30",
            cat.as_str(),
            samples.len(),
            field.grid.city_id
        )));
    }
    fit_truncated_lognormal(&samples, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuintilePoint {
    /// Activity quantile in (0, 1).
    pub q: f64,
    /// Minimal number of top cells holding at least q of the activity.
    pub cells: usize,
    /// cells divided by cells at q = 0.5.
    pub normalized_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuintileCurve {
    pub category: DensityCategory,
    pub points: Vec<QuintilePoint>,
}

/// Quantiles the area curves are evaluated at.
pub const AREA_QUANTILES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Minimal prefix length of the descending cell counts reaching each decile
/// of total activity, normalized by the median prefix.
pub fn quintile_area_curve(field: &DensityField, cat: DensityCategory) -> Result<QuintileCurve> {
    let mut counts: Vec<u64> = field
        .cells(cat)
        .iter()
        .copied()
        .filter(|&c| c > 0)
        .collect();
    let total: u128 = counts.iter().map(|&c| c as u128).sum();
    if total == 0 {
        return Err(Error::data(format!(
            "category {} has no activity in {}",
            cat.as_str(),
            field.grid.city_id
        )));
    }
    counts.sort_unstable_by(|a, b| b.cmp(a));

    // cells(k/10) for k = 1..9 in one sweep; exact integer comparisons.
    let mut cells_at = [0usize; 9];
    let mut prefix: u128 = 0;
    let mut k = 0;
    for (i, &c) in counts.iter().enumerate() {
        prefix += c as u128;
        while k < 9 && prefix * 10 >= (k as u128 + 1) * total {
            cells_at[k] = i + 1;
            k += 1;
        }
        if k == 9 {
            break;
        }
    }
    debug_assert_eq!(k, 9);
    let median_cells = cells_at[4] as f64;
    let points = AREA_QUANTILES
        .iter()
        .zip(cells_at)
        .map(|(&q, cells)| QuintilePoint {
            q,
            cells,
            normalized_area: cells as f64 / median_cells,
        })
        .collect();
    Ok(QuintileCurve {
        category: cat,
        points,
    })
}

/// How compact tourist activity is relative to resident activity: the mean
/// over deciles of the category's cell prefix divided by the resident one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AreaRatios {
    pub domestic: Option<f64>,
    pub foreign: Option<f64>,
}

pub fn tourist_resident_area_ratio(field: &DensityField) -> AreaRatios {
    let curve = |cat| quintile_area_curve(field, cat).ok();
    let resident = curve(DensityCategory::Resident);
    let ratio_to_resident = |cat| -> Option<f64> {
        let res = resident.as_ref()?;
        let other = curve(cat)?;
        let mean = other
            .points
            .iter()
            .zip(&res.points)
            .map(|(o, r)| o.cells as f64 / r.cells as f64)
            .sum::<f64>()
            / res.points.len() as f64;
        Some(mean)
    };
    AreaRatios {
        domestic: ratio_to_resident(DensityCategory::Domestic),
        foreign: ratio_to_resident(DensityCategory::Foreign),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hotspot {
    /// 1-based, ordered by decreasing activity.
    pub rank: usize,
    /// Sorted (row, col) cells; one 8-connected component.
    pub cells: Vec<(usize, usize)>,
    pub activity: u64,
    /// Cell count level at which the component set was frozen.
    pub threshold_a: u64,
}

struct Component {
    cells: Vec<(usize, usize)>,
    activity: u64,
    min_row: usize,
    min_col: usize,
}

/// 8-connected components of the given cells.
fn connected_components(cells: &[(usize, usize, u64)]) -> Vec<Component> {
    let count_of: HashMap<(usize, usize), u64> =
        cells.iter().map(|&(r, c, v)| ((r, c), v)).collect();
    let mut visited: HashSet<(usize, usize)> = HashSet::new();
    let mut out = Vec::new();
    for &(r0, c0, _) in cells {
        if visited.contains(&(r0, c0)) {
            continue;
        }
        let mut comp = Component {
            cells: Vec::new(),
            activity: 0,
            min_row: usize::MAX,
            min_col: usize::MAX,
        };
        let mut stack = vec![(r0, c0)];
        visited.insert((r0, c0));
        while let Some((r, c)) = stack.pop() {
            comp.activity += count_of[&(r, c)];
            comp.min_row = comp.min_row.min(r);
            comp.min_col = comp.min_col.min(c);
            comp.cells.push((r, c));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 {
                        continue;
                    }
                    let key = (nr as usize, nc as usize);
                    if count_of.contains_key(&key) && visited.insert(key) {
                        stack.push(key);
                    }
                }
            }
        }
        comp.cells.sort_unstable();
        out.push(comp);
    }
    out
}

/// The iterative top-n extraction: start from the n highest cells, take every
/// cell at or above the lowest of them, and keep lowering that level by the
/// component shortfall until the threshold set splits into at least n
/// 8-connected components. Runs out of cells first on very flat fields, in
/// which case all components of the nonzero support are returned.
pub fn extract_hotspots(
    field: &DensityField,
    cat: DensityCategory,
    n: usize,
) -> Result<Vec<Hotspot>> {
    if n == 0 {
        return Err(Error::config("hotspot count must be at least 1"));
    }
    let mut cells = field.nonzero_entries(cat);
    if cells.len() < n {
        return Err(Error::data(format!(
            "category {} has {} nonzero cells in {}; cannot extract {n} hotspots",
            cat.as_str(),
            cells.len(),
            field.grid.city_id
        )));
    }
    cells.sort_unstable_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut k = n;
    let (threshold, components) = loop {
        // Pull in every cell tied with the current lowest level a.
        let a = cells[k - 1].2;
        while k < cells.len() && cells[k].2 == a {
            k += 1;
        }
        let comps = connected_components(&cells[..k]);
        if comps.len() >= n || k == cells.len() {
            break (a, comps);
        }
        k = (k + n - comps.len()).min(cells.len());
    };

    let mut components = components;
    components.sort_by(|x, y| {
        y.activity
            .cmp(&x.activity)
            .then(x.min_row.cmp(&y.min_row))
            .then(x.min_col.cmp(&y.min_col))
    });
    Ok(components
        .into_iter()
        .enumerate()
        .map(|(i, comp)| Hotspot {
            rank: i + 1,
            cells: comp.cells,
            activity: comp.activity,
            threshold_a: threshold,
        })
        .collect())
}

/// Power law of hotspot activity against rank, activities normalized so the
/// top hotspot is one.
pub fn hotspot_rank_profile(hotspots: &[Hotspot]) -> Result<PowerLawFit> {
    if hotspots.len() < 3 {
        return Err(Error::numeric(format!(
            "rank profile needs at least 3 hotspots, got {}",
            hotspots.len()
        )));
    }
    let top = hotspots[0].activity;
    if top == 0 {
        return Err(Error::numeric("top hotspot has zero activity"));
    }
    let xs: Vec<f64> = hotspots.iter().map(|h| h.rank as f64).collect();
    let ys: Vec<f64> = hotspots
        .iter()
        .map(|h| h.activity as f64 / top as f64)
        .collect();
    fit_power_law(&xs, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoveragePoint {
    pub n: usize,
    pub hotspots: usize,
    pub covered_activity: u64,
    /// Share of the category's total activity inside the hotspots.
    pub coverage: f64,
}

/// Coverage as a function of the requested hotspot count. Stops early when
/// the field runs out of nonzero cells.
pub fn hotspot_coverage(
    field: &DensityField,
    cat: DensityCategory,
    max_n: usize,
) -> Vec<CoveragePoint> {
    let total = field.total_activity(cat);
    if total == 0 {
        return Vec::new();
    }
    let mut points = Vec::new();
    for n in 1..=max_n {
        let hotspots = match extract_hotspots(field, cat, n) {
            Ok(h) => h,
            Err(_) => break,
        };
        let covered: u64 = hotspots.iter().map(|h| h.activity).sum();
        points.push(CoveragePoint {
            n,
            hotspots: hotspots.len(),
            covered_activity: covered,
            coverage: covered as f64 / total as f64,
        });
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homes::LocatedPhoto;
    use crate::ingest::SourceLabel;
    use crate::registry::CityRegistry;
    use chrono::{DateTime, Utc};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn equator_grid(n_rows: usize, n_cols: usize) -> GridSpec {
        GridSpec {
            city_id: CityId::from("test"),
            anchor: LatLon::new(0.0, 0.0),
            cell_size_m: 500.0,
            n_rows,
            n_cols,
        }
    }

    fn field_from(rows: &[&[u64]]) -> DensityField {
        let grid = equator_grid(rows.len(), rows[0].len());
        let mut field = DensityField::new(grid);
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v > 0 {
                    field.add(DensityCategory::Resident, r, c, v);
                }
            }
        }
        field
    }

    #[test]
    fn grid_covers_city_bbox() {
        let reg = CityRegistry::bundled();
        for city in reg.cities() {
            let grid = GridSpec::for_city(city, 500.0).unwrap();
            assert_eq!(grid.grid_index(city.bbox.south_west()), Some((0, 0)));
            let corners = [
                LatLon::new(city.bbox.min_lat, city.bbox.max_lon),
                LatLon::new(city.bbox.max_lat, city.bbox.min_lon),
                LatLon::new(city.bbox.max_lat, city.bbox.max_lon),
                city.centroid,
            ];
            for p in corners {
                assert!(grid.grid_index(p).is_some(), "{} {:?}", city.city_id, p);
            }
        }
        let nyc = reg.get(&CityId::from("nyc")).unwrap();
        assert!(GridSpec::for_city(nyc, 0.0).is_err());
        assert!(GridSpec::for_city(nyc, -5.0).is_err());
    }

    #[test]
    fn grid_index_matches_projection_oracle() {
        let grid = equator_grid(40, 40);
        assert_eq!(grid.grid_index(LatLon::new(0.0, 0.0)), Some((0, 0)));
        // One degree of latitude is 111194.9266 m at R = 6371 km, so the
        // first row boundary sits at 500 m = 0.00449661 degrees.
        assert_eq!(grid.grid_index(LatLon::new(0.0044966, 0.0)), Some((0, 0)));
        assert_eq!(grid.grid_index(LatLon::new(0.0044967, 0.0)), Some((1, 0)));
        // Half a cell up lands mid first row.
        assert_eq!(grid.grid_index(LatLon::new(0.0022483, 0.0)), Some((0, 0)));
        // Same arc along the equator moves columns.
        assert_eq!(grid.grid_index(LatLon::new(0.0, 0.0044967)), Some((0, 1)));
        // Off-grid points.
        assert_eq!(grid.grid_index(LatLon::new(-0.001, 0.0)), None);
        assert_eq!(grid.grid_index(LatLon::new(0.0, -0.001)), None);
        assert_eq!(grid.grid_index(LatLon::new(1.0, 0.0)), None);
    }

    #[test]
    fn cell_polygon_roundtrips_through_grid_index() {
        let reg = CityRegistry::bundled();
        let city = reg.get(&CityId::from("paris")).unwrap();
        let grid = GridSpec::for_city(city, 500.0).unwrap();
        for (row, col) in [(0, 0), (3, 7), (grid.n_rows - 1, grid.n_cols - 1)] {
            let poly = grid.cell_polygon(row, col);
            let mid = LatLon::new(
                (poly[0].lat + poly[2].lat) / 2.0,
                (poly[0].lon + poly[2].lon) / 2.0,
            );
            assert_eq!(grid.grid_index(mid), Some((row, col)), "cell {row},{col}");
        }
    }

    fn photo_at(cat: ActivityCategory, lat: f64, lon: f64) -> CategorizedPhoto {
        CategorizedPhoto {
            photo: LocatedPhoto {
                user_id: "u".into(),
                city_id: CityId::from("test"),
                taken_at: DateTime::parse_from_rfc3339("2008-01-01T00:00:00Z")
                    .unwrap()
                    .with_timezone(&Utc),
                lat,
                lon,
                source_label: SourceLabel::Unknown,
            },
            category: cat,
        }
    }

    #[test]
    fn accumulate_counts_categories_and_outside() {
        let grid = equator_grid(10, 10);
        let photos = vec![
            photo_at(ActivityCategory::Resident, 0.001, 0.001),
            photo_at(ActivityCategory::Resident, 0.001, 0.001),
            photo_at(ActivityCategory::Resident, 0.0012, 0.0011),
            photo_at(ActivityCategory::ForeignTourist, 0.001, 0.001),
            photo_at(ActivityCategory::UnknownHome, 0.001, 0.001),
            photo_at(ActivityCategory::DomesticTourist, 0.0055, 0.0055),
            photo_at(ActivityCategory::Resident, -5.0, 0.0),
        ];
        let field = accumulate_density(&photos, &grid);
        assert_eq!(field.count(DensityCategory::Resident, 0, 0), 3);
        assert_eq!(field.count(DensityCategory::Foreign, 0, 0), 1);
        assert_eq!(field.count(DensityCategory::Unknown, 0, 0), 1);
        assert_eq!(field.count(DensityCategory::Total, 0, 0), 5);
        assert_eq!(field.count(DensityCategory::Domestic, 1, 1), 1);
        assert_eq!(field.outside, 1);
        // Per-cell totals decompose into the four categories everywhere.
        for i in 0..grid.n_cells() {
            let parts: u64 = [
                DensityCategory::Resident,
                DensityCategory::Domestic,
                DensityCategory::Foreign,
                DensityCategory::Unknown,
            ]
            .iter()
            .map(|c| field.cells(*c)[i])
            .sum();
            assert_eq!(field.cells(DensityCategory::Total)[i], parts);
        }

        let empty = accumulate_density(&[], &grid);
        assert_eq!(empty.total_activity(DensityCategory::Total), 0);
        assert_eq!(empty.outside, 0);
    }

    /// Cells sampled from a log-normal law must give the variance back
    /// through the truncated MLE within the sampling tolerance. The law is
    /// planted at busy-city count levels (median ~3000 photos per cell) so
    /// that rounding to integer counts stays far below the sampling noise;
    /// near count 1 the rounding alone shifts the fitted variance by several
    /// tenths. Recovery with the truncation boundary actually biting is
    /// exercised on continuous samples in the stats tests.
    #[test]
    fn lognormal_field_recovers_variance() {
        let sigma_sq = 2.37f64;
        let normal = Normal::new(8.0, sigma_sq.sqrt()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n_cells = 10_000;
        let grid = equator_grid(100, 100);
        let mut field = DensityField::new(grid);
        let mut placed = 0usize;
        while placed < n_cells {
            let z: f64 = normal.sample(&mut rng);
            let x = z.exp();
            if x < 1.0 {
                continue;
            }
            let count = x.round() as u64;
            field.add(DensityCategory::Resident, placed / 100, placed % 100, count);
            placed += 1;
        }
        let fit = density_distribution_fit(&field, DensityCategory::Resident).unwrap();
        assert!(fit.converged);
        assert!(
            (fit.sigma_sq - sigma_sq).abs() < 0.15,
            "sigma_sq = {}",
            fit.sigma_sq
        );
        // The field-level fit is exactly the stats-level fit of the nonzero
        // cells.
        let direct = crate::stats::fit_truncated_lognormal(
            &field.nonzero_cells(DensityCategory::Resident),
            1.0,
        )
        .unwrap();
        assert_eq!(fit.mu, direct.mu);
        assert_eq!(fit.sigma_sq, direct.sigma_sq);
    }

    #[test]
    fn flat_field_fit_is_flagged_degenerate() {
        let grid = equator_grid(10, 10);
        let mut field = DensityField::new(grid);
        for i in 0..100 {
            field.add(DensityCategory::Resident, i / 10, i % 10, 4);
        }
        assert!(density_distribution_fit(&field, DensityCategory::Resident).is_err());
        // Too few cells is refused before fitting.
        let small = field_from(&[&[5, 3, 8], &[2, 1, 9]]);
        assert!(density_distribution_fit(&small, DensityCategory::Resident).is_err());
    }

    #[test]
    fn quintiles_on_uniform_field_are_linear() {
        let mut rows = vec![vec![0u64; 10]; 10];
        for row in rows.iter_mut() {
            for v in row.iter_mut() {
                *v = 7;
            }
        }
        let refs: Vec<&[u64]> = rows.iter().map(|r| r.as_slice()).collect();
        let field = field_from(&refs);
        let curve = quintile_area_curve(&field, DensityCategory::Resident).unwrap();
        for p in &curve.points {
            let expect_cells = (p.q * 100.0).ceil() as usize;
            assert_eq!(p.cells, expect_cells, "q={}", p.q);
            assert!((p.normalized_area - p.q / 0.5).abs() < 1e-12);
        }
        assert!((curve.points[8].normalized_area - 1.8).abs() < 1e-12);
    }

    #[test]
    fn quintiles_concentrated_field_stays_flat() {
        // One cell of 90 plus nine cells of 1: the top cell alone holds 90/99
        // of the activity, past the 0.9 quantile.
        let field = field_from(&[
            &[90, 1, 1, 1, 1],
            &[1, 1, 1, 1, 1],
        ]);
        let curve = quintile_area_curve(&field, DensityCategory::Resident).unwrap();
        for p in &curve.points {
            assert_eq!(p.cells, 1, "q={}", p.q);
            assert_eq!(p.normalized_area, 1.0);
        }
    }

    #[test]
    fn quintiles_single_cell_and_empty() {
        let field = field_from(&[&[42]]);
        let curve = quintile_area_curve(&field, DensityCategory::Resident).unwrap();
        assert!(curve.points.iter().all(|p| p.normalized_area == 1.0));

        let empty = field_from(&[&[0, 0], &[0, 0]]);
        assert!(quintile_area_curve(&empty, DensityCategory::Resident).is_err());
    }

    #[test]
    fn quintile_curve_is_monotone_and_unit_at_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..50 {
            let grid = equator_grid(12, 12);
            let mut field = DensityField::new(grid);
            for i in 0..144 {
                let v = rng.gen_range(0..20u64);
                if v > 0 {
                    field.add(DensityCategory::Resident, i / 12, i % 12, v);
                }
            }
            if field.total_activity(DensityCategory::Resident) == 0 {
                continue;
            }
            let curve = quintile_area_curve(&field, DensityCategory::Resident).unwrap();
            assert_eq!(curve.points[4].normalized_area, 1.0);
            for w in curve.points.windows(2) {
                assert!(w[1].normalized_area >= w[0].normalized_area);
            }
        }
    }

    #[test]
    fn area_ratio_identity_and_half_support() {
        // Identical resident and domestic distributions: ratio exactly 1.
        let grid = equator_grid(10, 10);
        let mut field = DensityField::new(grid);
        for i in 0..40 {
            field.add(DensityCategory::Resident, i / 10, i % 10, (i % 5 + 1) as u64);
            field.add(DensityCategory::Domestic, i / 10, i % 10, (i % 5 + 1) as u64);
        }
        let ratios = tourist_resident_area_ratio(&field);
        assert_eq!(ratios.domestic, Some(1.0));
        assert_eq!(ratios.foreign, None);

        // Same flat shape on half the support: every decile needs half the
        // cells.
        let grid = equator_grid(10, 10);
        let mut field = DensityField::new(grid);
        for i in 0..20 {
            field.add(DensityCategory::Resident, i / 10, i % 10, 5);
        }
        for i in 0..10 {
            field.add(DensityCategory::Domestic, 5 + i / 10, i % 10, 5);
        }
        let ratios = tourist_resident_area_ratio(&field);
        assert!((ratios.domestic.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hotspots_hand_trace() {
        let field = field_from(&[
            &[9, 9, 0, 0],
            &[0, 0, 0, 7],
            &[5, 0, 0, 7],
            &[5, 0, 0, 0],
        ]);
        let hs = extract_hotspots(&field, DensityCategory::Resident, 2).unwrap();
        assert_eq!(hs.len(), 2);
        assert_eq!(hs[0].rank, 1);
        assert_eq!(hs[0].cells, vec![(0, 0), (0, 1)]);
        assert_eq!(hs[0].activity, 18);
        assert_eq!(hs[1].cells, vec![(1, 3), (2, 3)]);
        assert_eq!(hs[1].activity, 14);
        assert_eq!(hs[0].threshold_a, 7);

        let top1 = extract_hotspots(&field, DensityCategory::Resident, 1).unwrap();
        assert_eq!(top1.len(), 1);
        assert_eq!(top1[0].cells, vec![(0, 0), (0, 1)]);

        // Coverage of the hand field: hotspots hold 32 of 42 photos.
        let points = hotspot_coverage(&field, DensityCategory::Resident, 2);
        let at2 = points.iter().find(|p| p.n == 2).unwrap();
        assert_eq!(at2.covered_activity, 32);
        assert!((at2.coverage - 32.0 / 42.0).abs() < 1e-12);
    }

    #[test]
    fn hotspot_errors() {
        let field = field_from(&[&[3, 0], &[0, 2]]);
        assert!(extract_hotspots(&field, DensityCategory::Resident, 3).is_err());
        assert!(extract_hotspots(&field, DensityCategory::Resident, 0).is_err());
        assert!(extract_hotspots(&field, DensityCategory::Foreign, 1).is_err());
    }

    #[test]
    fn hotspots_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let grid = equator_grid(15, 15);
        let mut field = DensityField::new(grid.clone());
        let mut scaled = DensityField::new(grid);
        for i in 0..225 {
            let v = rng.gen_range(0..9u64);
            if v > 0 {
                field.add(DensityCategory::Resident, i / 15, i % 15, v);
                scaled.add(DensityCategory::Resident, i / 15, i % 15, v * 7);
            }
        }
        for n in [1, 3, 6] {
            let base = extract_hotspots(&field, DensityCategory::Resident, n).unwrap();
            let big = extract_hotspots(&scaled, DensityCategory::Resident, n).unwrap();
            assert_eq!(base.len(), big.len());
            for (a, b) in base.iter().zip(&big) {
                assert_eq!(a.cells, b.cells);
                assert_eq!(a.activity * 7, b.activity);
                assert_eq!(a.threshold_a * 7, b.threshold_a);
            }
        }
    }

    /// Independent oracle: sweep thresholds downward over the distinct count
    /// values, flood-filling with a visited grid, and freeze the first level
    /// with at least n components (or the full nonzero support).
    mod oracle {
        pub fn components_at(
            rows: &[Vec<u64>],
            threshold: u64,
        ) -> Vec<(Vec<(usize, usize)>, u64)> {
            let h = rows.len();
            let w = rows[0].len();
            let included = |r: usize, c: usize| rows[r][c] >= threshold && rows[r][c] > 0;
            let mut seen = vec![vec![false; w]; h];
            let mut comps = Vec::new();
            for r in 0..h {
                for c in 0..w {
                    if !included(r, c) || seen[r][c] {
                        continue;
                    }
                    let mut cells = Vec::new();
                    let mut act = 0;
                    let mut queue = std::collections::VecDeque::from([(r, c)]);
                    seen[r][c] = true;
                    while let Some((cr, cc)) = queue.pop_front() {
                        cells.push((cr, cc));
                        act += rows[cr][cc];
                        for nr in cr.saturating_sub(1)..=(cr + 1).min(h - 1) {
                            for nc in cc.saturating_sub(1)..=(cc + 1).min(w - 1) {
                                if !seen[nr][nc] && included(nr, nc) {
                                    seen[nr][nc] = true;
                                    queue.push_back((nr, nc));
                                }
                            }
                        }
                    }
                    cells.sort_unstable();
                    comps.push((cells, act));
                }
            }
            comps
        }

        pub fn sweep(rows: &[Vec<u64>], n: usize) -> Vec<(Vec<(usize, usize)>, u64)> {
            let mut levels: Vec<u64> = rows.iter().flatten().copied().filter(|&v| v > 0).collect();
            levels.sort_unstable_by(|a, b| b.cmp(a));
            levels.dedup();
            let mut last = Vec::new();
            for &a in &levels {
                last = components_at(rows, a);
                if last.len() >= n {
                    return last;
                }
            }
            last
        }
    }

    #[test]
    fn hotspots_match_threshold_sweep_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for trial in 0..30 {
            let h = 20;
            let w = 20;
            let mut rows = vec![vec![0u64; w]; h];
            let grid = equator_grid(h, w);
            let mut field = DensityField::new(grid);
            for r in 0..h {
                for c in 0..w {
                    // Plenty of ties and zeros to stress the level logic.
                    let v = rng.gen_range(0..6u64);
                    rows[r][c] = v;
                    if v > 0 {
                        field.add(DensityCategory::Resident, r, c, v);
                    }
                }
            }
            for n in 1..=6 {
                let nonzero = field.nonzero_cells(DensityCategory::Resident).len();
                if nonzero < n {
                    continue;
                }
                let got = extract_hotspots(&field, DensityCategory::Resident, n).unwrap();
                let mut got_sets: Vec<(Vec<(usize, usize)>, u64)> = got
                    .iter()
                    .map(|hspot| (hspot.cells.clone(), hspot.activity))
                    .collect();
                got_sets.sort();
                let mut want = oracle::sweep(&rows, n);
                want.sort();
                assert_eq!(got_sets, want, "trial {trial}, n={n}");

                // Structural invariants of the returned ranking.
                for w2 in got.windows(2) {
                    assert!(w2[0].activity >= w2[1].activity);
                }
                let mut all_cells = std::collections::HashSet::new();
                for hspot in &got {
                    for cell in &hspot.cells {
                        assert!(all_cells.insert(*cell), "overlapping hotspots");
                    }
                }
            }
        }
    }

    #[test]
    fn rank_profile_exact_power_law() {
        let hotspots: Vec<Hotspot> = (1..=12)
            .map(|r| Hotspot {
                rank: r,
                cells: vec![(0, r)],
                activity: (100_000_000.0 * (r as f64).powf(-1.5)).round() as u64,
                threshold_a: 1,
            })
            .collect();
        let fit = hotspot_rank_profile(&hotspots).unwrap();
        assert!((fit.exponent - 1.5).abs() < 1e-3, "q = {}", fit.exponent);
        assert!((fit.prefactor - 1.0).abs() < 1e-3);
        assert!(fit.r_squared > 0.999999);

        let flat: Vec<Hotspot> = (1..=5)
            .map(|r| Hotspot {
                rank: r,
                cells: vec![(0, r)],
                activity: 500,
                threshold_a: 1,
            })
            .collect();
        let fit = hotspot_rank_profile(&flat).unwrap();
        assert_eq!(fit.exponent, 0.0);

        assert!(hotspot_rank_profile(&flat[..2]).is_err());
    }

    #[test]
    fn rank_exponent_recovery_under_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for q_star in [0.5, 1.0, 2.0, 3.0] {
            let mut errors: Vec<f64> = (0..50)
                .map(|_| {
                    let hotspots: Vec<Hotspot> = (1..=12)
                        .map(|r| {
                            let noise = 1.0 + rng.gen_range(-0.05..0.05);
                            let act = 1e9 * (r as f64).powf(-q_star) * noise;
                            Hotspot {
                                rank: r,
                                cells: vec![(0, r)],
                                activity: act.round() as u64,
                                threshold_a: 1,
                            }
                        })
                        .collect();
                    let fit = hotspot_rank_profile(&hotspots).unwrap();
                    (fit.exponent - q_star).abs()
                })
                .collect();
            errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = errors[25];
            assert!(median < 0.1, "q*={q_star}: median error {median}");
        }
    }

    #[test]
    fn coverage_reaches_one_and_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let grid = equator_grid(10, 10);
        let mut field = DensityField::new(grid);
        let mut nonzero = 0;
        for i in 0..100 {
            let v = rng.gen_range(0..5u64);
            if v > 0 {
                field.add(DensityCategory::Resident, i / 10, i % 10, v);
                nonzero += 1;
            }
        }
        let points = hotspot_coverage(&field, DensityCategory::Resident, nonzero);
        assert!(!points.is_empty());
        for w in points.windows(2) {
            assert!(w[1].coverage >= w[0].coverage - 1e-12);
        }
        for p in &points {
            assert!(p.coverage <= 1.0 + 1e-12);
        }
        let last = points.last().unwrap();
        assert_eq!(last.n, nonzero);
        assert!((last.coverage - 1.0).abs() < 1e-12);
    }
}
