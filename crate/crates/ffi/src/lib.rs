//! C bindings for geophoto-core. Every symbol is `gp_`-prefixed; fallible
//! calls return a [`GpStatus`] and leave a message readable through
//! [`gp_last_error_message`]. The generated header lives in
//! `include/geophoto.h`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::Path;
use std::slice;

use geophoto_core::config::PipelineConfig;
use geophoto_core::flows::{flow_marginals, null_model_matrix, OdMatrix, Region};
use geophoto_core::pipeline::run_pipeline;
use geophoto_core::registry::{great_circle_km, CityId, CityRegistry, LatLon};
use geophoto_core::spatial::{
    extract_hotspots, DensityCategory, DensityField, GridSpec, Hotspot,
};
use geophoto_core::stats::{
    fit_exponential, fit_power_law, fit_truncated_lognormal, linear_regression_r2,
};
use geophoto_core::Error;

/// Call outcome. Nonzero codes match the CLI exit codes (2 config, 3 data,
/// 4 numeric); 1 marks misuse of the binding itself, such as a null pointer
/// or an undersized buffer.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpStatus {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    Data = 3,
    Numeric = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(e: &Error) -> GpStatus {
    set_error(&e.to_string());
    match e.exit_code() {
        2 => GpStatus::Config,
        4 => GpStatus::Numeric,
        _ => GpStatus::Data,
    }
}

fn invalid(msg: &str) -> GpStatus {
    set_error(msg);
    GpStatus::InvalidArgument
}

/// Message for the most recent failing call on this thread. The pointer
/// stays valid until the next failing call on the same thread; the string is
/// empty if nothing failed yet.
#[no_mangle]
pub extern "C" fn gp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Great-circle distance in kilometers on a sphere of radius 6371 km.
#[no_mangle]
pub extern "C" fn gp_great_circle_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    great_circle_km(LatLon::new(lat1, lon1), LatLon::new(lat2, lon2))
}

/// Expected flows under homogeneous mixing for a trip matrix, and the
/// observed/expected ratios.
///
/// `counts` is row-major `n_regions * n_regions`; the diagonal holds home
/// loops and is ignored by the model. On success `model_out` and `ratio_out`
/// (each `n_regions * n_regions` doubles, row-major, either may be NULL to
/// skip) receive the expectations and ratios, with NaN wherever the quantity
/// is undefined: the diagonal, rows whose origin sees no visitor inflow
/// anywhere else, and ratios over zero expectations.
///
/// # Safety
/// `counts` must point to `n_regions * n_regions` readable elements and the
/// non-NULL outputs to as many writable ones.
#[no_mangle]
pub unsafe extern "C" fn gp_null_model(
    counts: *const u64,
    n_regions: usize,
    model_out: *mut f64,
    ratio_out: *mut f64,
) -> GpStatus {
    if counts.is_null() {
        return invalid("counts must not be NULL");
    }
    let n2 = match n_regions.checked_mul(n_regions) {
        Some(n2) => n2,
        None => return invalid("n_regions overflows"),
    };
    let flat = slice::from_raw_parts(counts, n2);
    let regions = (0..n_regions)
        .map(|i| Region::City(CityId::new(format!("r{i}"))))
        .collect();
    let mut od = OdMatrix::zero(regions);
    for i in 0..n_regions {
        od.a[i].copy_from_slice(&flat[i * n_regions..(i + 1) * n_regions]);
    }
    let marginals = flow_marginals(&od);
    let res = match null_model_matrix(&od, &marginals) {
        Ok(res) => res,
        Err(e) => return fail(&e),
    };
    for (dst, src) in [(model_out, &res.model), (ratio_out, &res.ratio)] {
        if dst.is_null() {
            continue;
        }
        let out = slice::from_raw_parts_mut(dst, n2);
        for i in 0..n_regions {
            for j in 0..n_regions {
                out[i * n_regions + j] = src[i][j].unwrap_or(f64::NAN);
            }
        }
    }
    GpStatus::Ok
}

/// Least-squares line `y = slope*x + intercept` with its R-squared.
#[repr(C)]
pub struct GpLinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Power law `y = prefactor * x^(-exponent)` fitted in log-log space.
#[repr(C)]
pub struct GpPowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Exponential decay `y = amplitude * exp(-decay_rate * x)` fitted in
/// semi-log space.
#[repr(C)]
pub struct GpExponentialFit {
    pub amplitude: f64,
    pub decay_rate: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Maximum-likelihood log-normal parameters for samples left-truncated at a
/// known point. `mu` and `sigma_sq` describe ln x of the untruncated law.
#[repr(C)]
pub struct GpLognormalFit {
    pub mu: f64,
    pub sigma_sq: f64,
    pub log_likelihood: f64,
    pub n_points: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub iterations: usize,
}

unsafe fn pair_slices<'a>(
    xs: *const f64,
    ys: *const f64,
    len: usize,
) -> Result<(&'a [f64], &'a [f64]), GpStatus> {
    if xs.is_null() || ys.is_null() {
        return Err(invalid("xs and ys must not be NULL"));
    }
    Ok((slice::from_raw_parts(xs, len), slice::from_raw_parts(ys, len)))
}

/// Ordinary least squares of ys on xs. Needs at least 3 points.
///
/// # Safety
/// `xs` and `ys` must point to `len` readable doubles, `out` to writable
/// memory.
#[no_mangle]
pub unsafe extern "C" fn gp_fit_linear(
    xs: *const f64,
    ys: *const f64,
    len: usize,
    out: *mut GpLinearFit,
) -> GpStatus {
    if out.is_null() {
        return invalid("out must not be NULL");
    }
    let (xs, ys) = match pair_slices(xs, ys, len) {
        Ok(v) => v,
        Err(s) => return s,
    };
    match linear_regression_r2(xs, ys) {
        Ok(f) => {
            *out = GpLinearFit {
                slope: f.slope,
                intercept: f.intercept,
                r_squared: f.r_squared,
                n_points: f.n_points,
            };
            GpStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Fit `y = c * x^(-q)` by least squares on log-log axes. All inputs must be
/// positive.
///
/// # Safety
/// Same contract as [`gp_fit_linear`].
#[no_mangle]
pub unsafe extern "C" fn gp_fit_power_law(
    xs: *const f64,
    ys: *const f64,
    len: usize,
    out: *mut GpPowerLawFit,
) -> GpStatus {
    if out.is_null() {
        return invalid("out must not be NULL");
    }
    let (xs, ys) = match pair_slices(xs, ys, len) {
        Ok(v) => v,
        Err(s) => return s,
    };
    match fit_power_law(xs, ys) {
        Ok(f) => {
            *out = GpPowerLawFit {
                exponent: f.exponent,
                prefactor: f.prefactor,
                r_squared: f.r_squared,
                n_points: f.n_points,
            };
            GpStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Fit `y = A * exp(-beta * x)` by least squares of ln y on x. The ys must
/// be positive.
///
/// # Safety
/// Same contract as [`gp_fit_linear`].
#[no_mangle]
pub unsafe extern "C" fn gp_fit_exponential(
    xs: *const f64,
    ys: *const f64,
    len: usize,
    out: *mut GpExponentialFit,
) -> GpStatus {
    if out.is_null() {
        return invalid("out must not be NULL");
    }
    let (xs, ys) = match pair_slices(xs, ys, len) {
        Ok(v) => v,
        Err(s) => return s,
    };
    match fit_exponential(xs, ys) {
        Ok(f) => {
            *out = GpExponentialFit {
                amplitude: f.amplitude,
                decay_rate: f.decay_rate,
                r_squared: f.r_squared,
                n_points: f.n_points,
            };
            GpStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Maximum-likelihood fit of a log-normal law left-truncated at
/// `truncation_point` to samples that all lie at or above it.
///
/// # Safety
/// `samples` must point to `len` readable doubles, `out` to writable memory.
#[no_mangle]
pub unsafe extern "C" fn gp_fit_truncated_lognormal(
    samples: *const f64,
    len: usize,
    truncation_point: f64,
    out: *mut GpLognormalFit,
) -> GpStatus {
    if samples.is_null() || out.is_null() {
        return invalid("samples and out must not be NULL");
    }
    let samples = slice::from_raw_parts(samples, len);
    match fit_truncated_lognormal(samples, truncation_point) {
        Ok(f) => {
            *out = GpLognormalFit {
                mu: f.mu,
                sigma_sq: f.sigma_sq,
                log_likelihood: f.log_likelihood,
                n_points: f.n_points,
                converged: f.converged,
                gradient_norm: f.gradient_norm,
                iterations: f.iterations,
            };
            GpStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Hotspot components extracted from one activity grid. Opaque; read through
/// the `gp_hotspot_*` accessors and release with [`gp_hotspots_free`].
pub struct GpHotspots {
    hotspots: Vec<Hotspot>,
}

/// Extract up to `n_hotspots` components from a row-major
/// `n_rows * n_cols` grid of activity counts: take the cells at or above the
/// n-th highest value and lower that threshold until the selected cells
/// split into at least n 8-connected components. Components are ranked by
/// activity. Fails when the grid has fewer than `n_hotspots` nonzero cells;
/// flat fields may legitimately return fewer components than asked.
///
/// # Safety
/// `counts` must point to `n_rows * n_cols` readable elements; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn gp_hotspots_extract(
    counts: *const u64,
    n_rows: usize,
    n_cols: usize,
    n_hotspots: usize,
    out: *mut *mut GpHotspots,
) -> GpStatus {
    if counts.is_null() || out.is_null() {
        return invalid("counts and out must not be NULL");
    }
    let n_cells = match n_rows.checked_mul(n_cols) {
        Some(n) if n > 0 => n,
        _ => return invalid("grid must have at least one cell"),
    };
    let flat = slice::from_raw_parts(counts, n_cells);
    let grid = GridSpec {
        city_id: CityId::new("grid"),
        anchor: LatLon::new(0.0, 0.0),
        cell_size_m: 500.0,
        n_rows,
        n_cols,
    };
    let mut field = DensityField::new(grid);
    for (i, &c) in flat.iter().enumerate() {
        if c > 0 {
            field.add(DensityCategory::Total, i / n_cols, i % n_cols, c);
        }
    }
    match extract_hotspots(&field, DensityCategory::Total, n_hotspots) {
        Ok(hotspots) => {
            *out = Box::into_raw(Box::new(GpHotspots { hotspots }));
            GpStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Number of components in the set. NULL yields 0.
///
/// # Safety
/// `h` must be NULL or a live handle from [`gp_hotspots_extract`].
#[no_mangle]
pub unsafe extern "C" fn gp_hotspots_len(h: *const GpHotspots) -> usize {
    h.as_ref().map_or(0, |h| h.hotspots.len())
}

/// Total activity of the component at `index` (0 = highest ranked). Out of
/// range yields 0.
///
/// # Safety
/// Same contract as [`gp_hotspots_len`].
#[no_mangle]
pub unsafe extern "C" fn gp_hotspot_activity(h: *const GpHotspots, index: usize) -> u64 {
    h.as_ref()
        .and_then(|h| h.hotspots.get(index))
        .map_or(0, |s| s.activity)
}

/// Cell-count level at which the component at `index` was frozen. Out of
/// range yields 0.
///
/// # Safety
/// Same contract as [`gp_hotspots_len`].
#[no_mangle]
pub unsafe extern "C" fn gp_hotspot_threshold(h: *const GpHotspots, index: usize) -> u64 {
    h.as_ref()
        .and_then(|h| h.hotspots.get(index))
        .map_or(0, |s| s.threshold_a)
}

/// Number of cells in the component at `index`. Out of range yields 0.
///
/// # Safety
/// Same contract as [`gp_hotspots_len`].
#[no_mangle]
pub unsafe extern "C" fn gp_hotspot_cell_count(h: *const GpHotspots, index: usize) -> usize {
    h.as_ref()
        .and_then(|h| h.hotspots.get(index))
        .map_or(0, |s| s.cells.len())
}

/// Copy up to `cap` of the component's (row, col) cells, sorted, into
/// `rows_out`/`cols_out`. Returns the number copied.
///
/// # Safety
/// `rows_out` and `cols_out` must point to `cap` writable elements.
#[no_mangle]
pub unsafe extern "C" fn gp_hotspot_cells(
    h: *const GpHotspots,
    index: usize,
    rows_out: *mut usize,
    cols_out: *mut usize,
    cap: usize,
) -> usize {
    if rows_out.is_null() || cols_out.is_null() {
        return 0;
    }
    let cells = match h.as_ref().and_then(|h| h.hotspots.get(index)) {
        Some(s) => &s.cells,
        None => return 0,
    };
    let n = cells.len().min(cap);
    let rows = slice::from_raw_parts_mut(rows_out, n);
    let cols = slice::from_raw_parts_mut(cols_out, n);
    for (i, &(r, c)) in cells[..n].iter().enumerate() {
        rows[i] = r;
        cols[i] = c;
    }
    n
}

/// Release a hotspot set. NULL is a no-op.
///
/// # Safety
/// `h` must be NULL or a live handle; the handle is dead afterwards.
#[no_mangle]
pub unsafe extern "C" fn gp_hotspots_free(h: *mut GpHotspots) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// City registry handle. Opaque; release with [`gp_registry_free`].
pub struct GpRegistry {
    reg: CityRegistry,
}

/// The registry compiled into the library.
#[no_mangle]
pub extern "C" fn gp_registry_bundled() -> *mut GpRegistry {
    Box::into_raw(Box::new(GpRegistry {
        reg: CityRegistry::bundled(),
    }))
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, GpStatus> {
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(s),
        Err(_) => Err(invalid(&format!("{what} is not valid UTF-8"))),
    }
}

/// Load a registry from a city CSV, with an optional alias CSV
/// (`aliases_path` may be NULL).
///
/// # Safety
/// The paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_registry_open(
    cities_path: *const c_char,
    aliases_path: *const c_char,
    out: *mut *mut GpRegistry,
) -> GpStatus {
    if cities_path.is_null() || out.is_null() {
        return invalid("cities_path and out must not be NULL");
    }
    let cities = match cstr(cities_path, "cities_path") {
        Ok(s) => s,
        Err(s) => return s,
    };
    let mut reg = match CityRegistry::load(Path::new(cities)) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if !aliases_path.is_null() {
        let aliases = match cstr(aliases_path, "aliases_path") {
            Ok(s) => s,
            Err(s) => return s,
        };
        if let Err(e) = reg.load_aliases(Path::new(aliases)) {
            return fail(&e);
        }
    }
    *out = Box::into_raw(Box::new(GpRegistry { reg }));
    GpStatus::Ok
}

/// Number of cities in the registry. NULL yields 0.
///
/// # Safety
/// `reg` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gp_registry_len(reg: *const GpRegistry) -> usize {
    reg.as_ref().map_or(0, |r| r.reg.len())
}

/// Resolve a photo record to a city: the alias table first, then the
/// smallest bounding box containing the point. Writes the city id
/// NUL-terminated into `city_id_out` (empty string when nothing matches);
/// `location_id` may be NULL when only coordinates are known.
///
/// # Safety
/// `city_id_out` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gp_registry_locate(
    reg: *const GpRegistry,
    location_id: *const c_char,
    lat: f64,
    lon: f64,
    city_id_out: *mut c_char,
    cap: usize,
) -> GpStatus {
    let reg = match reg.as_ref() {
        Some(r) => &r.reg,
        None => return invalid("reg must not be NULL"),
    };
    if city_id_out.is_null() || cap == 0 {
        return invalid("city_id_out must hold at least one byte");
    }
    let loc = if location_id.is_null() {
        ""
    } else {
        match cstr(location_id, "location_id") {
            Ok(s) => s,
            Err(s) => return s,
        }
    };
    let id = reg
        .locate(loc, LatLon::new(lat, lon))
        .map_or("", |c| c.city_id.as_str());
    if id.len() + 1 > cap {
        return invalid(&format!("city_id_out needs {} bytes", id.len() + 1));
    }
    let out = slice::from_raw_parts_mut(city_id_out as *mut u8, id.len() + 1);
    out[..id.len()].copy_from_slice(id.as_bytes());
    out[id.len()] = 0;
    GpStatus::Ok
}

/// Release a registry. NULL is a no-op.
///
/// # Safety
/// `reg` must be NULL or a live handle; the handle is dead afterwards.
#[no_mangle]
pub unsafe extern "C" fn gp_registry_free(reg: *mut GpRegistry) {
    if !reg.is_null() {
        drop(Box::from_raw(reg));
    }
}

/// Run the full pipeline. `config_json` uses the same flat schema as the
/// CLI's --config file. On success, when `report_json_out` is not NULL it
/// receives the run report as an owned JSON string; release it with
/// [`gp_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `report_json_out` must be
/// NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn gp_run_pipeline(
    config_json: *const c_char,
    report_json_out: *mut *mut c_char,
) -> GpStatus {
    if config_json.is_null() {
        return invalid("config_json must not be NULL");
    }
    let raw = match cstr(config_json, "config_json") {
        Ok(s) => s,
        Err(s) => return s,
    };
    let cfg: PipelineConfig = match serde_json::from_str(raw) {
        Ok(c) => c,
        Err(e) => return fail(&Error::config(format!("bad config JSON: {e}"))),
    };
    let report = match run_pipeline(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if !report_json_out.is_null() {
        let json = match serde_json::to_string_pretty(&report) {
            Ok(j) => j,
            Err(e) => return fail(&Error::data(format!("cannot serialize report: {e}"))),
        };
        match CString::new(json) {
            Ok(c) => *report_json_out = c.into_raw(),
            Err(_) => return invalid("report contains a NUL byte"),
        }
    }
    GpStatus::Ok
}

/// Release a string produced by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or an owned string from this library; it is dead
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn gp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
