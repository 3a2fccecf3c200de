//! C ABI over `lppm-core`.
//!
//! Objects cross the boundary as opaque handles created by `lppm_*_new` or
//! returned through out-parameters, and released with the matching
//! `lppm_*_free`. Fallible calls return an [`LppmStatus`]; on failure
//! `lppm_last_error_message` describes the most recent error on the calling
//! thread. Panics are caught and reported as `LPPM_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::OnceLock;

use lppm_core::attacks::{self, AttackError, Poi, RoadGraph};
use lppm_core::datasets::{Trace, TracePoint};
use lppm_core::geo::{self, GeoError, GeoPoint};
use lppm_core::mechanisms::{self, AdaptiveParams, ClusterParams, Epsilon, MechanismError, Seed};
use lppm_core::metrics::{self, MetricError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LppmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IndexOutOfRange = 3,
    Io = 4,
    /// The requested value is not defined for the inputs, e.g. recall
    /// with no original POIs.
    Undefined = 5,
    Panic = 6,
}

/// A single user's time-ordered trace.
pub struct LppmTrace {
    inner: Trace,
}

/// Road network nodes used for map matching.
pub struct LppmRoadGraph {
    nodes: Vec<(u64, GeoPoint)>,
    index: OnceLock<RoadGraph>,
}

/// POIs extracted from a trace.
pub struct LppmPoiList {
    inner: Vec<Poi>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LppmPoi {
    pub lat: f64,
    pub lon: f64,
    pub t_start: i64,
    pub t_end: i64,
    pub n_points: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(LppmStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(LppmStatus::NullPointer, format!("{what} is NULL"))
    }

    fn invalid(msg: impl Into<String>) -> Self {
        Failure(LppmStatus::InvalidArgument, msg.into())
    }
}

impl From<MechanismError> for Failure {
    fn from(e: MechanismError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<GeoError> for Failure {
    fn from(e: GeoError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<AttackError> for Failure {
    fn from(e: AttackError) -> Self {
        let status = match e {
            AttackError::Io { .. } => LppmStatus::Io,
            _ => LppmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, recording any error or panic for `lppm_last_error_message`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LppmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LppmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            LppmStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn string_arg(s: *const c_char, what: &str) -> Result<String, Failure> {
    let s = deref(s, what)?;
    CStr::from_ptr(s)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))
}

fn eps(value: f64) -> Result<Epsilon, Failure> {
    Ok(Epsilon::new(value)?)
}

unsafe fn emit_trace(out: *mut *mut LppmTrace, tr: Result<Trace, Failure>) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    let handle = Box::into_raw(Box::new(LppmTrace { inner: tr? }));
    out.write(handle);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lppm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lppm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Great-circle distance in meters.
#[no_mangle]
pub unsafe extern "C" fn lppm_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64, out_m: *mut f64) -> LppmStatus {
    guard(|| {
        let (a, b) = (GeoPoint::new(lat1, lon1)?, GeoPoint::new(lat2, lon2)?);
        write(out_m, geo::distance(&a, &b), "out_m")
    })
}

/// Noise radius at cumulative probability `p` in [0, 1).
#[no_mangle]
pub unsafe extern "C" fn lppm_inverse_cdf_radius(p: f64, epsilon: f64, out_m: *mut f64) -> LppmStatus {
    guard(|| {
        let r = mechanisms::inverse_cdf_radius(p, eps(epsilon)?)?;
        write(out_m, r, "out_m")
    })
}

/// New empty trace. Returns NULL if `user_id` is NULL or not UTF-8.
#[no_mangle]
pub unsafe extern "C" fn lppm_trace_new(user_id: *const c_char) -> *mut LppmTrace {
    let mut handle = ptr::null_mut();
    let status = guard(|| {
        let user = string_arg(user_id, "user_id")?;
        handle = Box::into_raw(Box::new(LppmTrace {
            inner: Trace::new(user, Vec::new()),
        }));
        Ok(())
    });
    if status == LppmStatus::Ok {
        handle
    } else {
        ptr::null_mut()
    }
}

#[no_mangle]
pub unsafe extern "C" fn lppm_trace_free(trace: *mut LppmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Appends a point. Timestamps (Unix seconds) must not decrease.
#[no_mangle]
pub unsafe extern "C" fn lppm_trace_push(trace: *mut LppmTrace, t: i64, lat: f64, lon: f64) -> LppmStatus {
    guard(|| {
        let tr = &mut trace.as_mut().ok_or_else(|| Failure::null("trace"))?.inner;
        let pos = GeoPoint::new(lat, lon)?;
        if let Some(last) = tr.points.last() {
            if t < last.t {
                return Err(Failure::invalid(format!(
                    "timestamp {t} precedes the previous point ({})",
                    last.t
                )));
            }
        }
        tr.points.push(TracePoint::new(t, pos));
        Ok(())
    })
}

/// Number of points; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn lppm_trace_len(trace: *const LppmTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.len())
}

/// Reads point `index`. Any of the out-pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn lppm_trace_get(
    trace: *const LppmTrace,
    index: usize,
    out_t: *mut i64,
    out_lat: *mut f64,
    out_lon: *mut f64,
) -> LppmStatus {
    guard(|| {
        let tr = &deref(trace, "trace")?.inner;
        let p = tr.points.get(index).ok_or_else(|| {
            Failure(
                LppmStatus::IndexOutOfRange,
                format!("index {index} out of range for {} points", tr.len()),
            )
        })?;
        if !out_t.is_null() {
            out_t.write(p.t);
        }
        if !out_lat.is_null() {
            out_lat.write(p.pos.lat());
        }
        if !out_lon.is_null() {
            out_lon.write(p.pos.lon());
        }
        Ok(())
    })
}

/// Planar Laplace noise on every point. The result goes to `*out` and must
/// be freed with `lppm_trace_free`.
#[no_mangle]
pub unsafe extern "C" fn lppm_obfuscate_planar_laplace(
    trace: *const LppmTrace,
    epsilon: f64,
    seed: u64,
    out: *mut *mut LppmTrace,
) -> LppmStatus {
    guard(|| {
        let tr = &deref(trace, "trace")?.inner;
        let e = eps(epsilon)?;
        emit_trace(out, mechanisms::obfuscate_pl(tr, e, Seed(seed)).map_err(Failure::from))
    })
}

/// Adaptive mechanism with the default window and thresholds.
#[no_mangle]
pub unsafe extern "C" fn lppm_obfuscate_adaptive(
    trace: *const LppmTrace,
    epsilon: f64,
    seed: u64,
    out: *mut *mut LppmTrace,
) -> LppmStatus {
    guard(|| {
        let tr = &deref(trace, "trace")?.inner;
        let params = AdaptiveParams::with_defaults(eps(epsilon)?);
        emit_trace(
            out,
            mechanisms::obfuscate_adaptive(tr, &params, Seed(seed)).map_err(Failure::from),
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn lppm_obfuscate_clustering(
    trace: *const LppmTrace,
    radius_m: f64,
    epsilon: f64,
    seed: u64,
    out: *mut *mut LppmTrace,
) -> LppmStatus {
    guard(|| {
        let tr = &deref(trace, "trace")?.inner;
        let params = ClusterParams::new(radius_m, eps(epsilon)?)?;
        emit_trace(
            out,
            mechanisms::obfuscate_clustering(tr, &params, Seed(seed)).map_err(Failure::from),
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn lppm_obfuscate_memory_clustering(
    trace: *const LppmTrace,
    radius_m: f64,
    epsilon: f64,
    seed: u64,
    out: *mut *mut LppmTrace,
) -> LppmStatus {
    guard(|| {
        let tr = &deref(trace, "trace")?.inner;
        let params = ClusterParams::new(radius_m, eps(epsilon)?)?;
        emit_trace(
            out,
            mechanisms::obfuscate_memory_clustering(tr, &params, Seed(seed)).map_err(Failure::from),
        )
    })
}

/// Replaces each point by the centroid of its `k` neighbours on each side.
#[no_mangle]
pub unsafe extern "C" fn lppm_sliding_average(
    trace: *const LppmTrace,
    k: usize,
    out: *mut *mut LppmTrace,
) -> LppmStatus {
    guard(|| {
        let tr = &deref(trace, "trace")?.inner;
        emit_trace(out, attacks::sliding_average(tr, k).map_err(Failure::from))
    })
}

#[no_mangle]
pub extern "C" fn lppm_road_graph_new() -> *mut LppmRoadGraph {
    Box::into_raw(Box::new(LppmRoadGraph {
        nodes: Vec::new(),
        index: OnceLock::new(),
    }))
}

/// Loads a `node_id,lat,lon` CSV file.
#[no_mangle]
pub unsafe extern "C" fn lppm_road_graph_load(path: *const c_char, out: *mut *mut LppmRoadGraph) -> LppmStatus {
    guard(|| {
        let path = string_arg(path, "path")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let graph = attacks::load_road_graph(&path)?;
        let handle = LppmRoadGraph {
            nodes: graph.nodes().collect(),
            index: OnceLock::from(graph),
        };
        out.write(Box::into_raw(Box::new(handle)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lppm_road_graph_free(graph: *mut LppmRoadGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Adds a node. Ids must be unique.
#[no_mangle]
pub unsafe extern "C" fn lppm_road_graph_add_node(
    graph: *mut LppmRoadGraph,
    id: u64,
    lat: f64,
    lon: f64,
) -> LppmStatus {
    guard(|| {
        let g = graph.as_mut().ok_or_else(|| Failure::null("graph"))?;
        let pos = GeoPoint::new(lat, lon)?;
        if g.nodes.iter().any(|&(n, _)| n == id) {
            return Err(AttackError::DuplicateNode(id).into());
        }
        g.nodes.push((id, pos));
        g.index = OnceLock::new();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lppm_road_graph_len(graph: *const LppmRoadGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.nodes.len())
}

/// Snaps every point to its nearest graph node.
#[no_mangle]
pub unsafe extern "C" fn lppm_map_match(
    trace: *const LppmTrace,
    graph: *const LppmRoadGraph,
    out: *mut *mut LppmTrace,
) -> LppmStatus {
    guard(|| {
        let tr = &deref(trace, "trace")?.inner;
        let g = deref(graph, "graph")?;
        let index = match g.index.get() {
            Some(i) => i,
            None => {
                let built = RoadGraph::new(g.nodes.clone())?;
                // Another thread may have won the race; either index is identical.
                let _ = g.index.set(built);
                g.index.get().expect("just initialised")
            }
        };
        emit_trace(out, Ok(attacks::map_match(tr, index)))
    })
}

/// Stays of diameter at most `max_diameter_m` lasting at least
/// `min_dwell_s` seconds.
#[no_mangle]
pub unsafe extern "C" fn lppm_extract_pois(
    trace: *const LppmTrace,
    max_diameter_m: f64,
    min_dwell_s: i64,
    out: *mut *mut LppmPoiList,
) -> LppmStatus {
    guard(|| {
        let tr = &deref(trace, "trace")?.inner;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let pois = attacks::extract_pois(tr, max_diameter_m, min_dwell_s)?;
        out.write(Box::into_raw(Box::new(LppmPoiList { inner: pois })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lppm_poi_list_free(list: *mut LppmPoiList) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

#[no_mangle]
pub unsafe extern "C" fn lppm_poi_list_len(list: *const LppmPoiList) -> usize {
    list.as_ref().map_or(0, |l| l.inner.len())
}

#[no_mangle]
pub unsafe extern "C" fn lppm_poi_list_get(list: *const LppmPoiList, index: usize, out: *mut LppmPoi) -> LppmStatus {
    guard(|| {
        let l = &deref(list, "list")?.inner;
        let p = l.get(index).ok_or_else(|| {
            Failure(
                LppmStatus::IndexOutOfRange,
                format!("index {index} out of range for {} POIs", l.len()),
            )
        })?;
        let poi = LppmPoi {
            lat: p.centroid.lat(),
            lon: p.centroid.lon(),
            t_start: p.t_start,
            t_end: p.t_end,
            n_points: p.n_points,
        };
        write(out, poi, "out")
    })
}

/// Mean distance in meters between corresponding points of two traces with
/// the same timestamps.
#[no_mangle]
pub unsafe extern "C" fn lppm_average_error(
    orig: *const LppmTrace,
    other: *const LppmTrace,
    out_m: *mut f64,
) -> LppmStatus {
    guard(|| {
        let (a, b) = (&deref(orig, "orig")?.inner, &deref(other, "other")?.inner);
        write(out_m, metrics::average_error(a, b)?, "out_m")
    })
}

/// Fraction of points within each of the `n` radii in `alphas` (ascending,
/// meters); writes `n` values to `out_deltas`.
#[no_mangle]
pub unsafe extern "C" fn lppm_usefulness(
    orig: *const LppmTrace,
    other: *const LppmTrace,
    alphas: *const f64,
    n: usize,
    out_deltas: *mut f64,
) -> LppmStatus {
    guard(|| {
        let (a, b) = (&deref(orig, "orig")?.inner, &deref(other, "other")?.inner);
        if n > 0 && (alphas.is_null() || out_deltas.is_null()) {
            return Err(Failure::null("alphas or out_deltas"));
        }
        let grid = if n == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(alphas, n)
        };
        let curve = metrics::usefulness_curve(a, b, grid)?;
        if n > 0 {
            std::slice::from_raw_parts_mut(out_deltas, n).copy_from_slice(&curve.deltas);
        }
        Ok(())
    })
}

/// Share of original POIs matched by at least one attacked POI. Returns
/// `LPPM_STATUS_UNDEFINED` when `orig` is empty.
#[no_mangle]
pub unsafe extern "C" fn lppm_poi_recall(
    orig: *const LppmPoiList,
    attacked: *const LppmPoiList,
    out_recall: *mut f64,
) -> LppmStatus {
    guard(|| {
        let (o, a) = (&deref(orig, "orig")?.inner, &deref(attacked, "attacked")?.inner);
        let recall = metrics::poi_report(o, a).recall.ok_or_else(|| {
            Failure(
                LppmStatus::Undefined,
                "recall is undefined without original POIs".into(),
            )
        })?;
        write(out_recall, recall, "out_recall")
    })
}
