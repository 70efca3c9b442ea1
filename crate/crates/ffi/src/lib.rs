//! C interface to the embedding store, the nearest-neighbor index and the
//! recommendation query.
//!
//! Conventions:
//! * Every fallible function returns an [`AltrecStatus`]; on failure a
//!   message is available from [`altrec_last_error`] on the same thread.
//! * Objects are opaque handles created by `*_load` / `*_build` / query
//!   functions and released with the matching `*_free`. Freeing NULL is a
//!   no-op.
//! * Strings are NUL-terminated UTF-8. Strings returned by the library stay
//!   valid until the owning handle is freed (or, for the error message,
//!   until the next failing call on the thread).
//! * Panics never cross the boundary; they surface as
//!   `ALTREC_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use altrec::ann::{build_index, top_n_recommendations, AnnIndex, IndexParams};
use altrec::embedding_store::EmbeddingStore;
use altrec::neural::{contrastive_loss, cosine_energy};
use altrec::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AltrecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    UnknownProduct = 5,
    DimMismatch = 6,
    Numerical = 7,
    StaleArtifact = 8,
    Internal = 9,
}

/// Loaded embedding store.
pub struct AltrecStore {
    inner: EmbeddingStore,
}

/// Nearest-neighbor index over a store.
pub struct AltrecIndex {
    inner: AnnIndex,
}

/// Ranked `(product id, similarity)` list from a query.
pub struct AltrecResults {
    ids: Vec<CString>,
    similarities: Vec<f64>,
}

struct Failure(AltrecStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } | Error::MissingArtifact(_) => AltrecStatus::Io,
            Error::Parse { .. } | Error::Format { .. } | Error::DuplicateId(_) => AltrecStatus::Format,
            Error::UnknownProduct(_) | Error::NoCoverage(_) => AltrecStatus::UnknownProduct,
            Error::DimMismatch { .. } => AltrecStatus::DimMismatch,
            Error::Numerical(_) | Error::ZeroNorm(_) => AltrecStatus::Numerical,
            Error::StaleArtifact { .. } => AltrecStatus::StaleArtifact,
            _ => AltrecStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AltrecStatus::NullPointer, format!("`{what}` is NULL"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(AltrecStatus::InvalidArgument, msg.into())
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AltrecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AltrecStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            AltrecStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn results(hits: impl IntoIterator<Item = (String, f64)>) -> Box<AltrecResults> {
    let (ids, similarities) = hits
        .into_iter()
        .map(|(id, s)| (CString::new(id).unwrap_or_default(), s))
        .unzip();
    Box::new(AltrecResults { ids, similarities })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn altrec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if none.
#[no_mangle]
pub extern "C" fn altrec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a binary embedding store written by `altrec embed`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn altrec_store_load(path: *const c_char, out: *mut *mut AltrecStore) -> AltrecStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(path, "path")?);
        let inner = EmbeddingStore::load(&path)?;
        *out = Box::into_raw(Box::new(AltrecStore { inner }));
        Ok(())
    })
}

/// # Safety
/// `store` must be NULL or a handle from `altrec_store_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn altrec_store_free(store: *mut AltrecStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Number of products in the store; 0 for NULL.
///
/// # Safety
/// `store` must be NULL or a live store handle.
#[no_mangle]
pub unsafe extern "C" fn altrec_store_len(store: *const AltrecStore) -> usize {
    store.as_ref().map_or(0, |s| s.inner.len())
}

/// Vector dimension; 0 for NULL.
///
/// # Safety
/// `store` must be NULL or a live store handle.
#[no_mangle]
pub unsafe extern "C" fn altrec_store_dim(store: *const AltrecStore) -> usize {
    store.as_ref().map_or(0, |s| s.inner.dim())
}

/// Copies the vector of `product_id` into `buf`, which must hold `buf_len`
/// values and `buf_len` must equal the store dimension.
///
/// # Safety
/// Pointers must be valid; `buf` must have room for `buf_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn altrec_store_get(
    store: *const AltrecStore,
    product_id: *const c_char,
    buf: *mut f64,
    buf_len: usize,
) -> AltrecStatus {
    guard(|| {
        let store = &handle(store, "store")?.inner;
        let id = str_arg(product_id, "product_id")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = store.get(id).ok_or_else(|| Error::UnknownProduct(id.to_string()))?;
        if buf_len != v.len() {
            return Err(Error::DimMismatch {
                expected: v.len(),
                actual: buf_len,
            }
            .into());
        }
        std::slice::from_raw_parts_mut(buf, buf_len).copy_from_slice(v);
        Ok(())
    })
}

/// Builds an index over every vector of `store`.
///
/// # Safety
/// `store` must be a live store handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn altrec_index_build(
    store: *const AltrecStore,
    m: usize,
    ef_construction: usize,
    ef_search: usize,
    seed: u64,
    out: *mut *mut AltrecIndex,
) -> AltrecStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let store = &handle(store, "store")?.inner;
        let params = IndexParams {
            m,
            ef_construction,
            ef_search,
        };
        let inner = build_index(store, params, seed)?;
        *out = Box::into_raw(Box::new(AltrecIndex { inner }));
        Ok(())
    })
}

/// Loads an index file and checks it was built from `store`.
///
/// # Safety
/// `path` must be a NUL-terminated string, `store` a live handle and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn altrec_index_load(
    path: *const c_char,
    store: *const AltrecStore,
    out: *mut *mut AltrecIndex,
) -> AltrecStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(path, "path")?);
        let store = &handle(store, "store")?.inner;
        let inner = AnnIndex::load_for_store(&path, store)?;
        *out = Box::into_raw(Box::new(AltrecIndex { inner }));
        Ok(())
    })
}

/// # Safety
/// `index` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn altrec_index_save(index: *const AltrecIndex, path: *const c_char) -> AltrecStatus {
    guard(|| {
        let index = &handle(index, "index")?.inner;
        let path = PathBuf::from(str_arg(path, "path")?);
        index.save(&path)?;
        Ok(())
    })
}

/// # Safety
/// `index` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn altrec_index_free(index: *mut AltrecIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Approximate `k` nearest neighbors of `query` (length `dim`) by cosine
/// similarity, most similar first.
///
/// # Safety
/// `query` must point to `dim` doubles; `index` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn altrec_index_knn(
    index: *const AltrecIndex,
    query: *const f64,
    dim: usize,
    k: usize,
    ef_search: usize,
    out: *mut *mut AltrecResults,
) -> AltrecStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let index = &handle(index, "index")?.inner;
        let query = slice_arg(query, dim, "query")?;
        let hits = index.knn(query, k, ef_search)?;
        *out = Box::into_raw(results(hits));
        Ok(())
    })
}

/// Up to `n` alternatives to `anchor_id` with similarity at least
/// `threshold`, excluding the anchor itself.
///
/// # Safety
/// Handles must be live, `anchor_id` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn altrec_recommend(
    index: *const AltrecIndex,
    store: *const AltrecStore,
    anchor_id: *const c_char,
    n: usize,
    threshold: f64,
    ef_search: usize,
    out: *mut *mut AltrecResults,
) -> AltrecStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let index = &handle(index, "index")?.inner;
        let store = &handle(store, "store")?.inner;
        let anchor = str_arg(anchor_id, "anchor_id")?;
        if !(-1.0..=1.0).contains(&threshold) {
            return Err(invalid("threshold must be in [-1, 1]"));
        }
        let recs = top_n_recommendations(index, store, anchor, n, threshold, ef_search)?;
        *out = Box::into_raw(results(recs.into_iter().map(|r| (r.neighbor_id, r.similarity))));
        Ok(())
    })
}

/// Number of entries; 0 for NULL.
///
/// # Safety
/// `results` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn altrec_results_len(results: *const AltrecResults) -> usize {
    results.as_ref().map_or(0, |r| r.ids.len())
}

/// Product id of entry `i`, or NULL when out of range.
///
/// # Safety
/// `results` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn altrec_results_id(results: *const AltrecResults, i: usize) -> *const c_char {
    results
        .as_ref()
        .and_then(|r| r.ids.get(i))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Similarity of entry `i`, or NaN when out of range.
///
/// # Safety
/// `results` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn altrec_results_similarity(results: *const AltrecResults, i: usize) -> f64 {
    results
        .as_ref()
        .and_then(|r| r.similarities.get(i).copied())
        .unwrap_or(f64::NAN)
}

/// # Safety
/// `results` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn altrec_results_free(results: *mut AltrecResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Cosine similarity of two vectors of length `dim`.
///
/// # Safety
/// `u` and `v` must each point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn altrec_cosine_energy(u: *const f64, v: *const f64, dim: usize, out: *mut f64) -> AltrecStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = cosine_energy(slice_arg(u, dim, "u")?, slice_arg(v, dim, "v")?)?;
        Ok(())
    })
}

/// Contrastive loss of one pair given its energy and a 0/1 label.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn altrec_contrastive_loss(energy: f64, label: u8, out: *mut f64) -> AltrecStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if label > 1 {
            return Err(invalid(format!("label must be 0 or 1, got {label}")));
        }
        if !(-1.0..=1.0).contains(&energy) {
            return Err(invalid(format!("energy must be in [-1, 1], got {energy}")));
        }
        *out = contrastive_loss(energy, label);
        Ok(())
    })
}
