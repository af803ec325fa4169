//! C interface to the graph learning engine.
//!
//! Every fallible function returns a [`GranetStatus`]. On failure the
//! message is kept per thread and read with [`granet_last_error`].
//! Handles are created by `*_new`/`*_load` functions and released with
//! the matching `*_free`. Handles are not thread-safe.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use granet_core::graph::{generate_synthetic, load_dataset, Graph, LoadOptions, Split, SyntheticSpec};
use granet_core::nn::{gradcheck, load_architecture, LayerKind, Model};
use granet_core::train::{execute_run, write_metrics_csv, RunConfig};
use granet_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GranetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Shape = 4,
    InvalidGraph = 5,
    Io = 6,
    NonFiniteLoss = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GranetSplit {
    Train = 0,
    Val = 1,
    Test = 2,
}

impl From<GranetSplit> for Split {
    fn from(s: GranetSplit) -> Split {
        match s {
            GranetSplit::Train => Split::Train,
            GranetSplit::Val => Split::Val,
            GranetSplit::Test => Split::Test,
        }
    }
}

/// A node-classification graph.
pub struct GranetGraph(Graph);

/// A layered model with its parameters.
pub struct GranetModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GranetStatus {
    match e {
        Error::Io { .. } => GranetStatus::Io,
        Error::Parse { .. } => GranetStatus::Parse,
        Error::Shape(_) => GranetStatus::Shape,
        Error::InvalidGraph(_) => GranetStatus::InvalidGraph,
        Error::InvalidArgument(_) => GranetStatus::InvalidArgument,
        Error::NonFiniteLoss { .. } => GranetStatus::NonFiniteLoss,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GranetStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GranetStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            GranetStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            GranetStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument(format!("{what} is not valid UTF-8")).into())
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    str_arg(p, what).map(PathBuf::from)
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn granet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads `edges.tsv`, `features.txt`, `labels.tsv` and `splits.tsv` from
/// `dir`.
///
/// # Safety
/// `dir` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn granet_graph_load(
    dir: *const c_char,
    symmetrize: bool,
    out: *mut *mut GranetGraph,
) -> GranetStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dir = path_arg(dir, "dir")?;
        let g = load_dataset(
            &dir,
            &LoadOptions {
                symmetrize,
                features_override: None,
            },
        )?;
        *out = Box::into_raw(Box::new(GranetGraph(g)));
        Ok(())
    })
}

/// Stochastic block model graph with equal intra- and inter-class degree.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn granet_graph_synthetic(
    nodes: usize,
    classes: usize,
    homophily: f64,
    noise: f64,
    degree: f64,
    seed: u64,
    out: *mut *mut GranetGraph,
) -> GranetStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let g = generate_synthetic(&SyntheticSpec {
            num_nodes: nodes,
            num_classes: classes,
            homophily,
            feature_noise: noise,
            intra_degree: degree,
            inter_degree: degree,
            seed,
        })?;
        *out = Box::into_raw(Box::new(GranetGraph(g)));
        Ok(())
    })
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn granet_graph_num_nodes(graph: *const GranetGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_nodes())
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn granet_graph_num_edges(graph: *const GranetGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_edges())
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn granet_graph_num_features(graph: *const GranetGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_features())
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn granet_graph_num_classes(graph: *const GranetGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_classes())
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn granet_graph_free(graph: *mut GranetGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Model from an architecture file, initialized with `seed`.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn granet_model_new(
    path: *const c_char,
    seed: u64,
    out: *mut *mut GranetModel,
) -> GranetStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = path_arg(path, "path")?;
        let name = path
            .file_stem()
            .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
        let m = Model::from_specs(name, &load_architecture(&path)?, seed)?;
        *out = Box::into_raw(Box::new(GranetModel(m)));
        Ok(())
    })
}

/// Copies checkpoint values into matching parameters. Writes the number
/// of parameters loaded to `loaded` when it is not null.
///
/// # Safety
/// `model` must be live, `path` nul-terminated, `loaded` null or writable.
#[no_mangle]
pub unsafe extern "C" fn granet_model_load_checkpoint(
    model: *const GranetModel,
    path: *const c_char,
    loaded: *mut usize,
) -> GranetStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let n = m.0.load_checkpoint(&path_arg(path, "path")?)?;
        if let Some(l) = loaded.as_mut() {
            *l = n;
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be live and `path` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn granet_model_save_checkpoint(
    model: *const GranetModel,
    path: *const c_char,
) -> GranetStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        m.0.save_checkpoint(&path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Output width of the model's last layer, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn granet_model_out_dim(model: *const GranetModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.out_dim())
}

/// Full-graph forward pass. Writes `nodes x out_dim` row-major values to
/// `out`, which must hold `len` doubles.
///
/// # Safety
/// Handles must be live; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn granet_model_predict(
    model: *const GranetModel,
    graph: *const GranetGraph,
    out: *mut f64,
    len: usize,
) -> GranetStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let g = ref_arg(graph, "graph")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let y = m.0.predict(&g.0)?;
        let values = y.as_slice();
        if values.len() != len {
            return Err(Error::Shape(format!("output has {} values, buffer holds {len}", values.len())).into());
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(values);
        Ok(())
    })
}

/// Accuracy on one split.
///
/// # Safety
/// Handles must be live; `accuracy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn granet_model_evaluate(
    model: *const GranetModel,
    graph: *const GranetGraph,
    split: GranetSplit,
    accuracy: *mut f64,
) -> GranetStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let g = ref_arg(graph, "graph")?;
        let acc = out_arg(accuracy, "accuracy")?;
        *acc = granet_core::train::evaluate(&m.0, &g.0, split.into())?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn granet_model_free(model: *mut GranetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trains the run config at `config_path` with `seed`. Writes the
/// per-epoch metrics CSV to `metrics_path` unless it is null, and the
/// final-epoch and best-validation-epoch test accuracies to the outputs
/// that are not null.
///
/// # Safety
/// Strings must be nul-terminated; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn granet_train(
    config_path: *const c_char,
    seed: u64,
    metrics_path: *const c_char,
    final_test_acc: *mut f64,
    best_val_test_acc: *mut f64,
) -> GranetStatus {
    guard(|| {
        let cfg = RunConfig::load(&path_arg(config_path, "config_path")?)?;
        let (result, _) = execute_run(&cfg, seed)?;
        if !metrics_path.is_null() {
            write_metrics_csv(&result.epochs, &path_arg(metrics_path, "metrics_path")?)?;
        }
        if let Some(a) = final_test_acc.as_mut() {
            *a = result.final_test_acc;
        }
        if let Some(a) = best_val_test_acc.as_mut() {
            *a = result.best_val_test_acc;
        }
        Ok(())
    })
}

/// Largest finite-difference relative error of `layer` (a kind name such
/// as "gatv2") over `trials` random trials.
///
/// # Safety
/// `layer` must be nul-terminated; `max_error` writable.
#[no_mangle]
pub unsafe extern "C" fn granet_gradcheck(
    layer: *const c_char,
    trials: usize,
    seed: u64,
    max_error: *mut f64,
) -> GranetStatus {
    guard(|| {
        let out = out_arg(max_error, "max_error")?;
        let kind: LayerKind = str_arg(layer, "layer")?.parse()?;
        *out = gradcheck(kind, trials, seed)?;
        Ok(())
    })
}
