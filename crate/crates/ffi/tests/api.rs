use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use altrec::ann::{build_index, top_n_recommendations, IndexParams};
use altrec::embedding_store::EmbeddingStore;
use altrec::fingerprint::Fingerprint;
use altrec_ffi::*;
use tempfile::TempDir;

fn sample_store() -> EmbeddingStore {
    let mut store = EmbeddingStore::new(3, Fingerprint::default());
    let rows: [(&str, [f64; 3]); 6] = [
        ("a", [1.0, 0.0, 0.0]),
        ("b", [0.95, 0.1, 0.0]),
        ("c", [0.9, 0.3, 0.1]),
        ("d", [0.0, 1.0, 0.0]),
        ("e", [0.0, 0.9, 0.2]),
        ("f", [-1.0, 0.0, 0.0]),
    ];
    for (id, v) in rows {
        store.insert(id, v.to_vec()).unwrap();
    }
    store
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn c_path(p: &Path) -> CString {
    c(p.to_str().unwrap())
}

fn last_error() -> String {
    let p = altrec_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn collect(r: *const AltrecResults) -> Vec<(String, f64)> {
    (0..altrec_results_len(r))
        .map(|i| {
            let id = CStr::from_ptr(altrec_results_id(r, i)).to_str().unwrap().to_string();
            (id, altrec_results_similarity(r, i))
        })
        .collect()
}

struct Loaded {
    _dir: TempDir,
    store: *mut AltrecStore,
    index_path: CString,
}

fn loaded() -> Loaded {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("embeddings.bin");
    sample_store().save(&path).unwrap();
    let mut store = ptr::null_mut();
    assert_eq!(unsafe { altrec_store_load(c_path(&path).as_ptr(), &mut store) }, AltrecStatus::Ok);
    Loaded {
        index_path: c_path(&dir.path().join("index.bin")),
        _dir: dir,
        store,
    }
}

#[test]
fn store_round_trip() {
    let l = loaded();
    unsafe {
        assert_eq!(altrec_store_len(l.store), 6);
        assert_eq!(altrec_store_dim(l.store), 3);
        let mut buf = [0.0; 3];
        assert_eq!(altrec_store_get(l.store, c("c").as_ptr(), buf.as_mut_ptr(), 3), AltrecStatus::Ok);
        assert_eq!(buf, [0.9, 0.3, 0.1]);
        assert_eq!(
            altrec_store_get(l.store, c("zz").as_ptr(), buf.as_mut_ptr(), 3),
            AltrecStatus::UnknownProduct
        );
        assert!(last_error().contains("zz"));
        assert_eq!(
            altrec_store_get(l.store, c("a").as_ptr(), buf.as_mut_ptr(), 2),
            AltrecStatus::DimMismatch
        );
        altrec_store_free(l.store);
    }
}

#[test]
fn recommendations_match_the_library() {
    let l = loaded();
    let store = sample_store();
    let index = build_index(&store, IndexParams::default(), 9).unwrap();
    let want = top_n_recommendations(&index, &store, "a", 3, 0.8, 100).unwrap();
    unsafe {
        let mut idx = ptr::null_mut();
        assert_eq!(altrec_index_build(l.store, 16, 200, 100, 9, &mut idx), AltrecStatus::Ok);
        let mut res = ptr::null_mut();
        assert_eq!(
            altrec_recommend(idx, l.store, c("a").as_ptr(), 3, 0.8, 100, &mut res),
            AltrecStatus::Ok
        );
        let got = collect(res);
        altrec_results_free(res);
        assert_eq!(got, want.iter().map(|r| (r.neighbor_id.clone(), r.similarity)).collect::<Vec<_>>());
        assert_eq!(got.iter().map(|g| g.0.as_str()).collect::<Vec<_>>(), ["b", "c"]);

        assert_eq!(
            altrec_recommend(idx, l.store, c("nope").as_ptr(), 3, 0.8, 100, &mut res),
            AltrecStatus::UnknownProduct
        );
        assert!(res.is_null());
        assert_eq!(
            altrec_recommend(idx, l.store, c("a").as_ptr(), 3, 1.5, 100, &mut res),
            AltrecStatus::InvalidArgument
        );
        altrec_index_free(idx);
        altrec_store_free(l.store);
    }
}

#[test]
fn index_save_load_and_knn() {
    let l = loaded();
    unsafe {
        let mut built = ptr::null_mut();
        assert_eq!(altrec_index_build(l.store, 4, 20, 10, 1, &mut built), AltrecStatus::Ok);
        assert_eq!(altrec_index_save(built, l.index_path.as_ptr()), AltrecStatus::Ok);
        let mut idx = ptr::null_mut();
        assert_eq!(altrec_index_load(l.index_path.as_ptr(), l.store, &mut idx), AltrecStatus::Ok);
        let q = [0.0, 1.0, 0.1];
        let (mut r1, mut r2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(altrec_index_knn(built, q.as_ptr(), 3, 2, 10, &mut r1), AltrecStatus::Ok);
        assert_eq!(altrec_index_knn(idx, q.as_ptr(), 3, 2, 10, &mut r2), AltrecStatus::Ok);
        assert_eq!(collect(r1), collect(r2));
        assert_eq!(collect(r1)[0].0, "d");
        assert!(altrec_results_id(r1, 2).is_null());
        assert!(altrec_results_similarity(r1, 2).is_nan());
        altrec_results_free(r1);
        altrec_results_free(r2);
        assert_eq!(altrec_index_knn(idx, q.as_ptr(), 2, 2, 10, &mut r1), AltrecStatus::DimMismatch);
        altrec_index_free(built);
        altrec_index_free(idx);
        altrec_store_free(l.store);
    }
}

#[test]
fn index_for_another_store_is_rejected() {
    let l = loaded();
    let other_dir = TempDir::new().unwrap();
    let mut other = sample_store();
    other.insert("g", vec![0.0, 0.0, 1.0]).unwrap();
    let other_path = other_dir.path().join("other.bin");
    other.save(&other_path).unwrap();
    unsafe {
        let mut idx = ptr::null_mut();
        assert_eq!(altrec_index_build(l.store, 16, 200, 100, 1, &mut idx), AltrecStatus::Ok);
        assert_eq!(altrec_index_save(idx, l.index_path.as_ptr()), AltrecStatus::Ok);
        altrec_index_free(idx);
        let mut other_store = ptr::null_mut();
        assert_eq!(altrec_store_load(c_path(&other_path).as_ptr(), &mut other_store), AltrecStatus::Ok);
        let mut stale = ptr::null_mut();
        let status = altrec_index_load(l.index_path.as_ptr(), other_store, &mut stale);
        assert_ne!(status, AltrecStatus::Ok);
        assert!(stale.is_null());
        altrec_store_free(other_store);
        altrec_store_free(l.store);
    }
}

#[test]
fn loss_and_energy() {
    let u = [1.0, 2.0, 3.0];
    let v = [-2.0, 1.0, 0.5];
    let mut out = f64::NAN;
    unsafe {
        assert_eq!(altrec_cosine_energy(u.as_ptr(), v.as_ptr(), 3, &mut out), AltrecStatus::Ok);
        assert_eq!(out, altrec::neural::cosine_energy(&u, &v).unwrap());
        let zero = [0.0; 3];
        assert_eq!(altrec_cosine_energy(u.as_ptr(), zero.as_ptr(), 3, &mut out), AltrecStatus::Numerical);
        for (e, label, want) in [(1.0, 1, 0.0), (0.25, 1, 0.75), (0.5, 0, 0.5), (-0.3, 0, 0.0)] {
            assert_eq!(altrec_contrastive_loss(e, label, &mut out), AltrecStatus::Ok);
            assert_eq!(out, want);
        }
        assert_eq!(altrec_contrastive_loss(0.5, 2, &mut out), AltrecStatus::InvalidArgument);
        assert_eq!(altrec_contrastive_loss(0.5, 1, ptr::null_mut()), AltrecStatus::NullPointer);
    }
}

#[test]
fn null_and_bad_inputs() {
    unsafe {
        let mut store = ptr::null_mut();
        assert_eq!(altrec_store_load(ptr::null(), &mut store), AltrecStatus::NullPointer);
        assert_eq!(altrec_store_load(c("/no/such/file").as_ptr(), &mut store), AltrecStatus::Io);
        assert!(store.is_null());
        let dir = TempDir::new().unwrap();
        let junk = dir.path().join("junk.bin");
        std::fs::write(&junk, b"not a store").unwrap();
        assert_eq!(altrec_store_load(c_path(&junk).as_ptr(), &mut store), AltrecStatus::Format);
        assert_eq!(altrec_store_len(ptr::null()), 0);
        altrec_store_free(ptr::null_mut());
        altrec_index_free(ptr::null_mut());
        altrec_results_free(ptr::null_mut());
        let mut idx = ptr::null_mut();
        assert_eq!(altrec_index_build(ptr::null(), 16, 200, 100, 0, &mut idx), AltrecStatus::NullPointer);
    }
    let version = unsafe { CStr::from_ptr(altrec_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}
