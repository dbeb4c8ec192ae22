//! C bindings for deepfreight.
//!
//! Every fallible function returns a [`DfStatus`]; on failure a message is
//! available from [`df_last_error_message`] on the same thread. Objects
//! are opaque handles released with their `_free` function, and strings
//! handed out by the library are released with [`df_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use deepfreight::hybrid::{run_hybrid, HybridConfig};
use deepfreight::matcher::{match_request, Decision, DispatchGraph, MatchMode, MatchOptions, RequestStatus};
use deepfreight::milp::{build_model, solve, write_lp, MilpInstance, NamedSolution, SolveLimits};
use deepfreight::qmix::Checkpoint;
use deepfreight::world::{Request, ScenarioConfig, WorldNetwork};
use deepfreight::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Config = 4,
    /// The inputs were well-formed but violated a model contract.
    Domain = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DfMatchMode {
    MultiTransfer = 0,
    SingleTruck = 1,
}

/// One truck move: leave `from` at `depart_s`, arrive at `to` after `eta_s`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DfDecision {
    pub truck: usize,
    pub epoch: usize,
    pub from: usize,
    pub to: usize,
    pub depart_s: u64,
    pub eta_s: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DfRequest {
    pub id: usize,
    pub source: usize,
    pub destination: usize,
    pub size: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct DfMatchResult {
    pub matched: bool,
    /// Number of edges on the chosen path (0 when unmatched).
    pub hops: usize,
    pub added_cost_s: u64,
}

pub struct DfWorld {
    inner: WorldNetwork,
}

pub struct DfGraph {
    inner: DispatchGraph,
}

pub struct DfCheckpoint {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(DfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) => DfStatus::Config,
            Error::Input(_) | Error::Json(_) | Error::Csv(_) => DfStatus::InvalidInput,
            Error::Io(_) => DfStatus::Io,
            _ if e.is_domain() => DfStatus::Domain,
            _ => DfStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            DfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DfStatus::NullArgument, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DfStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(DfStatus::InvalidInput, "output contains a nul byte".into()))?;
    write_out(out, c.into_raw(), "output pointer")
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn df_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. The pointer stays valid until the next library call
/// on the same thread.
#[no_mangle]
pub extern "C" fn df_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn df_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Built-in ten-centre synthetic network.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn df_world_sample(out: *mut *mut DfWorld) -> DfStatus {
    guard(|| {
        let w = Box::new(DfWorld { inner: WorldNetwork::sample() });
        write_out(out, Box::into_raw(w), "out")
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn df_world_from_json(json: *const c_char, out: *mut *mut DfWorld) -> DfStatus {
    guard(|| {
        let w = WorldNetwork::from_json_str(read_str(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(DfWorld { inner: w })), "out")
    })
}

/// # Safety
/// `world` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_world_num_locations(world: *const DfWorld, out: *mut usize) -> DfStatus {
    guard(|| write_out(out, borrow(world, "world")?.inner.num_locations(), "out"))
}

/// # Safety
/// `world` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_world_eta(world: *const DfWorld, from: usize, to: usize, out: *mut u64) -> DfStatus {
    guard(|| {
        let w = &borrow(world, "world")?.inner;
        if !w.contains(from) || !w.contains(to) {
            return Err(Failure(DfStatus::InvalidInput, format!("location out of range: {from} or {to}")));
        }
        write_out(out, w.eta(from, to), "out")
    })
}

/// # Safety
/// `world` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn df_world_free(world: *mut DfWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Empty dispatch graph over `num_locations` stops for `num_trucks`
/// trucks with the given capacities.
///
/// # Safety
/// `capacities` must point to `num_trucks` values (it may be NULL when
/// `num_trucks` is 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_graph_new(
    num_locations: usize,
    capacities: *const u64,
    num_trucks: usize,
    out: *mut *mut DfGraph,
) -> DfStatus {
    guard(|| {
        let caps = if num_trucks == 0 {
            Vec::new()
        } else if capacities.is_null() {
            return Err(null("capacities"));
        } else {
            std::slice::from_raw_parts(capacities, num_trucks).to_vec()
        };
        let g = DfGraph { inner: DispatchGraph::new(num_locations, caps) };
        write_out(out, Box::into_raw(Box::new(g)), "out")
    })
}

/// # Safety
/// `graph` must be a live handle; `decision` must point to a valid value.
#[no_mangle]
pub unsafe extern "C" fn df_graph_add_decision(graph: *mut DfGraph, decision: *const DfDecision) -> DfStatus {
    guard(|| {
        let g = borrow_mut(graph, "graph")?;
        let d = borrow(decision, "decision")?;
        g.inner.add_decision(&Decision {
            truck: d.truck,
            epoch: d.epoch,
            from: d.from,
            to: d.to,
            depart_s: d.depart_s,
            eta_s: d.eta_s,
        })?;
        Ok(())
    })
}

/// # Safety
/// `graph` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_graph_num_edges(graph: *const DfGraph, out: *mut usize) -> DfStatus {
    guard(|| write_out(out, borrow(graph, "graph")?.inner.edges().len(), "out"))
}

/// Remaining capacity of edge `edge` (edges are numbered in insertion
/// order).
///
/// # Safety
/// `graph` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_graph_edge_remaining(graph: *const DfGraph, edge: usize, out: *mut u64) -> DfStatus {
    guard(|| {
        let g = &borrow(graph, "graph")?.inner;
        let e = g
            .edges()
            .get(edge)
            .ok_or_else(|| Failure(DfStatus::InvalidInput, format!("edge {edge} does not exist")))?;
        write_out(out, e.remaining, "out")
    })
}

/// Greedily matches one request, reserving capacity on success. An
/// unmatched request is not an error: `out->matched` is false.
///
/// # Safety
/// `graph` must be a live handle, `request` valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_graph_match_request(
    graph: *mut DfGraph,
    request: *const DfRequest,
    mode: DfMatchMode,
    out: *mut DfMatchResult,
) -> DfStatus {
    guard(|| {
        let g = borrow_mut(graph, "graph")?;
        let r = borrow(request, "request")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = g.inner.num_locations();
        if r.source >= n || r.destination >= n {
            return Err(Failure(DfStatus::InvalidInput, format!("request {} leaves the graph", r.id)));
        }
        let opts = MatchOptions {
            mode: match mode {
                DfMatchMode::MultiTransfer => MatchMode::MultiTransfer,
                DfMatchMode::SingleTruck => MatchMode::SingleTruck,
            },
            ..Default::default()
        };
        let req = Request { id: r.id, source: r.source, destination: r.destination, size: r.size };
        let result = match match_request(&mut g.inner, &req, &opts) {
            RequestStatus::Matched(p) => DfMatchResult { matched: true, hops: p.hops(), added_cost_s: p.added_cost_s },
            _ => DfMatchResult::default(),
        };
        write_out(out, result, "out")
    })
}

/// # Safety
/// `graph` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn df_graph_free(graph: *mut DfGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Solves a routing instance given as JSON and returns the solution as
/// JSON (`status`, `objective`, `nodes`, nonzero `values` by name).
/// `max_nodes` of 0 keeps the default node budget.
///
/// # Safety
/// `instance_json` must be a NUL-terminated string; `out_json` writable.
/// The returned string must be released with [`df_string_free`].
#[no_mangle]
pub unsafe extern "C" fn df_milp_solve_json(
    instance_json: *const c_char,
    max_nodes: usize,
    out_json: *mut *mut c_char,
) -> DfStatus {
    guard(|| {
        let inst = MilpInstance::from_json_str(read_str(instance_json, "instance_json")?)?;
        let mut limits = SolveLimits::default();
        if max_nodes > 0 {
            limits.max_nodes = max_nodes;
        }
        let model = build_model(&inst);
        let sol = solve(&model, &limits);
        let text = serde_json::to_string(&NamedSolution::from_solution(&model, &sol)).map_err(Error::from)?;
        write_string(out_json, text)
    })
}

/// LP-format text of the routing model of an instance.
///
/// # Safety
/// As for [`df_milp_solve_json`].
#[no_mangle]
pub unsafe extern "C" fn df_milp_export_lp(instance_json: *const c_char, out_lp: *mut *mut c_char) -> DfStatus {
    guard(|| {
        let inst = MilpInstance::from_json_str(read_str(instance_json, "instance_json")?)?;
        write_string(out_lp, write_lp(&build_model(&inst)))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_checkpoint_load(path: *const c_char, out: *mut *mut DfCheckpoint) -> DfStatus {
    guard(|| {
        let ckpt = Checkpoint::load(Path::new(read_str(path, "path")?))?;
        write_out(out, Box::into_raw(Box::new(DfCheckpoint { inner: ckpt })), "out")
    })
}

/// # Safety
/// `ckpt` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn df_checkpoint_free(ckpt: *mut DfCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}

/// Runs the learned dispatch plus rescue pipeline and returns the report
/// as JSON. `scenario_json` and `config_json` may be NULL for defaults.
///
/// # Safety
/// Handles must be live; strings NUL-terminated or NULL; `out_json`
/// writable. Release the result with [`df_string_free`].
#[no_mangle]
pub unsafe extern "C" fn df_hybrid_run_json(
    world: *const DfWorld,
    ckpt: *const DfCheckpoint,
    scenario_json: *const c_char,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> DfStatus {
    guard(|| {
        let w = &borrow(world, "world")?.inner;
        let c = &borrow(ckpt, "checkpoint")?.inner;
        let scenario = if scenario_json.is_null() {
            ScenarioConfig::default()
        } else {
            ScenarioConfig::from_json_str(read_str(scenario_json, "scenario_json")?)?
        };
        let cfg: HybridConfig = if config_json.is_null() {
            HybridConfig::default()
        } else {
            serde_json::from_str(read_str(config_json, "config_json")?).map_err(Error::from)?
        };
        cfg.validate()?;
        let report = run_hybrid(w, c, &scenario, &cfg)?;
        write_string(out_json, serde_json::to_string(&report).map_err(Error::from)?)
    })
}
