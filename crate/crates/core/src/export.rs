//! Writers for every analysis output: CSV tables, JSON fit documents, and
//! hotspot GeoJSON. All output is deterministic: map keys are sorted and
//! floats use the shortest representation that parses back exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::flows::{
    CityBreakdown, DestinationBreakdown, FlowMarginals, NullModelResult, OdMatrix,
    RegionMap, RelativeAttractiveness,
};
use crate::homes::HomeAssignment;
use crate::registry::CityId;
use crate::spatial::{
    AreaRatios, CoveragePoint, DensityCategory, DensityField, GridSpec, Hotspot, QuintileCurve,
};

/// Shortest decimal form that round-trips through `str::parse::<f64>`.
fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

fn finish(mut w: BufWriter<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// `region,population,photos,photos_per_1000`: photo volume by home region
/// against population.
pub fn write_per_capita(
    path: &Path,
    map: &RegionMap,
    marginals: &FlowMarginals,
    rates: &[f64],
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "region,population,photos,photos_per_1000").map_err(|e| Error::io(path, e))?;
    for (i, info) in map.infos().iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            info.region.id(),
            num(info.population),
            marginals.w_out[i],
            num(rates[i])
        )
        .map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

/// Every ordered non-loop region pair with its photo flow.
pub fn write_od_edges(path: &Path, od: &OdMatrix) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "origin,dest,photos").map_err(|e| Error::io(path, e))?;
    let n = od.n();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            writeln!(w, "{},{},{}", od.regions[i].id(), od.regions[j].id(), od.a[i][j])
                .map_err(|e| Error::io(path, e))?;
        }
    }
    finish(w, path)
}

/// Ratio matrix as a square CSV: first column the origin, remaining columns
/// one per destination. Loops and undefined ratios are empty cells, never 0.
pub fn write_ratio_matrix(path: &Path, null: &NullModelResult) -> Result<()> {
    let mut w = create(path)?;
    let ids: Vec<String> = null.regions.iter().map(|r| r.id().to_owned()).collect();
    writeln!(w, "origin,{}", ids.join(",")).map_err(|e| Error::io(path, e))?;
    for (i, row) in null.ratio.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| opt(*c)).collect();
        writeln!(w, "{},{}", ids[i], cells.join(",")).map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

/// Inverse of [`write_ratio_matrix`]: destination ids plus the cell matrix.
pub fn read_ratio_matrix(path: &Path) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::data(format!("{}: empty matrix", path.display())))?;
    let ids: Vec<String> = header.split(',').skip(1).map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let mut parts = line.split(',');
        let origin = parts
            .next()
            .ok_or_else(|| Error::data(format!("{}: row {} empty", path.display(), k + 2)))?;
        if ids.get(k).map(String::as_str) != Some(origin) {
            return Err(Error::data(format!(
                "{}: row {} origin `{origin}` does not match header order",
                path.display(),
                k + 2
            )));
        }
        let mut row = Vec::with_capacity(ids.len());
        for cell in parts {
            if cell.is_empty() {
                row.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::data(format!("{}: bad ratio cell `{cell}`", path.display()))
                })?;
                row.push(Some(v));
            }
        }
        if row.len() != ids.len() {
            return Err(Error::data(format!(
                "{}: row {} has {} cells, expected {}",
                path.display(),
                k + 2,
                row.len(),
                ids.len()
            )));
        }
        rows.push(row);
    }
    if rows.len() != ids.len() {
        return Err(Error::data(format!(
            "{}: {} rows for {} regions",
            path.display(),
            rows.len(),
            ids.len()
        )));
    }
    Ok((ids, rows))
}

/// Photo counts by visitor class per city, with shares over classified
/// (known-home) activity.
pub fn write_activity_breakdowns(path: &Path, rows: &[CityBreakdown]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "city,resident,domestic_tourist,foreign_tourist,unknown_home,resident_share,domestic_share,foreign_share"
    )
    .map_err(|e| Error::io(path, e))?;
    for b in rows {
        let shares = b.shares();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            b.city_id,
            b.resident,
            b.domestic_tourist,
            b.foreign_tourist,
            b.unknown_home,
            opt(shares.map(|s| s.0)),
            opt(shares.map(|s| s.1)),
            opt(shares.map(|s| s.2)),
        )
        .map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

/// Where each city's residents photograph: home, elsewhere domestic, abroad.
pub fn write_destination_breakdowns(
    path: &Path,
    rows: &[(CityId, Option<DestinationBreakdown>)],
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "city,home_share,domestic_share,foreign_share").map_err(|e| Error::io(path, e))?;
    for (city, b) in rows {
        writeln!(
            w,
            "{},{},{},{}",
            city,
            opt(b.as_ref().map(|b| b.home)),
            opt(b.as_ref().map(|b| b.domestic)),
            opt(b.as_ref().map(|b| b.foreign)),
        )
        .map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

pub fn write_relative_attractiveness(
    path: &Path,
    rows: &[(CityId, RelativeAttractiveness)],
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "city,domestic_per_capita,foreign_per_capita").map_err(|e| Error::io(path, e))?;
    for (city, r) in rows {
        writeln!(w, "{},{},{}", city, num(r.domestic_per_capita), num(r.foreign_per_capita))
            .map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

pub fn write_homes(path: &Path, homes: &BTreeMap<String, HomeAssignment>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "user_id,home_city_id,home_country,photo_count,span_days")
        .map_err(|e| Error::io(path, e))?;
    for (user, h) in homes {
        let (count, span) = match &h.evidence {
            Some(e) => (e.photo_count.to_string(), num(e.span_days())),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{}",
            user,
            h.home_city_id.as_ref().map(|c| c.as_str()).unwrap_or(""),
            h.home_country.as_deref().unwrap_or(""),
            count,
            span,
        )
        .map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

/// Nonzero grid cells of one city, all categories side by side.
pub fn write_density(path: &Path, field: &DensityField) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "row,col,resident,domestic,foreign,unknown,total").map_err(|e| Error::io(path, e))?;
    for (row, col, total) in field.nonzero_entries(DensityCategory::Total) {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            row,
            col,
            field.count(DensityCategory::Resident, row, col),
            field.count(DensityCategory::Domestic, row, col),
            field.count(DensityCategory::Foreign, row, col),
            field.count(DensityCategory::Unknown, row, col),
            total,
        )
        .map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

pub fn write_quintile_curves(path: &Path, rows: &[(CityId, QuintileCurve)]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "city,category,q,cells,normalized_area").map_err(|e| Error::io(path, e))?;
    for (city, curve) in rows {
        for p in &curve.points {
            writeln!(
                w,
                "{},{},{},{},{}",
                city,
                curve.category.as_str(),
                num(p.q),
                p.cells,
                num(p.normalized_area)
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    finish(w, path)
}

pub fn write_area_ratios(path: &Path, rows: &[(CityId, AreaRatios)]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "city,domestic_over_resident,foreign_over_resident")
        .map_err(|e| Error::io(path, e))?;
    for (city, r) in rows {
        writeln!(w, "{},{},{}", city, opt(r.domestic), opt(r.foreign))
            .map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

pub fn write_coverage(path: &Path, rows: &[(CityId, Vec<CoveragePoint>)]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "city,n,hotspots,covered_activity,coverage").map_err(|e| Error::io(path, e))?;
    for (city, points) in rows {
        for p in points {
            writeln!(
                w,
                "{},{},{},{},{}",
                city, p.n, p.hotspots, p.covered_activity,
                num(p.coverage)
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    finish(w, path)
}

/// Hotspots of one city as a GeoJSON FeatureCollection: one MultiPolygon per
/// hotspot, one polygon per grid cell, exterior rings counter-clockwise.
pub fn hotspots_feature_collection(
    city: &CityId,
    grid: &GridSpec,
    hotspots: &[Hotspot],
) -> serde_json::Value {
    let features: Vec<serde_json::Value> = hotspots
        .iter()
        .map(|h| {
            let polygons: Vec<serde_json::Value> = h
                .cells
                .iter()
                .map(|&(row, col)| {
                    let corners = grid.cell_polygon(row, col);
                    let mut ring: Vec<serde_json::Value> =
                        corners.iter().map(|c| json!([c.lon, c.lat])).collect();
                    ring.push(ring[0].clone());
                    json!([ring])
                })
                .collect();
            json!({
                "type": "Feature",
                "properties": {
                    "city": city.as_str(),
                    "rank": h.rank,
                    "activity": h.activity,
                    "threshold": h.threshold_a,
                    "cells": h.cells.len(),
                },
                "geometry": {
                    "type": "MultiPolygon",
                    "coordinates": polygons,
                }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}
