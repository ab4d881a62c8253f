use std::ffi::{CStr, CString};
use std::ptr;

use salesim_ffi::*;

const SMALL: &str = "[data.generator]\npool_size = 800\n[world]\nk = 4\n";

fn last_error() -> String {
    let p = salesim_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_world() -> *mut SalesimWorld {
    let cfg = CString::new(SMALL).unwrap();
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { salesim_world_new(cfg.as_ptr(), 7, &mut w) }, SalesimStatus::Ok);
    assert!(!w.is_null());
    w
}

#[test]
fn version_and_status_names() {
    let v = unsafe { CStr::from_ptr(salesim_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let n = unsafe { CStr::from_ptr(salesim_status_name(SalesimStatus::Verification)) };
    assert_eq!(n.to_str().unwrap(), "verification");
}

#[test]
fn rule_grid() {
    assert_eq!(salesim_rule_based_choose(9.99), SALESIM_ACTION_A);
    assert_eq!(salesim_rule_based_choose(10.0), SALESIM_ACTION_C);
    assert_eq!(salesim_rule_based_choose(20.0), SALESIM_ACTION_C);
    assert_eq!(salesim_rule_based_choose(20.01), SALESIM_ACTION_B);
}

#[test]
fn null_and_bad_arguments_report_codes() {
    let mut w = ptr::null_mut();
    let bad = CString::new("[world]\nkk = 3\n").unwrap();
    assert_eq!(unsafe { salesim_world_new(bad.as_ptr(), 1, &mut w) }, SalesimStatus::Config);
    assert!(w.is_null());
    assert!(last_error().contains("kk"));

    let mut dim = 0usize;
    assert_eq!(
        unsafe { salesim_world_context_dim(ptr::null(), &mut dim) },
        SalesimStatus::NullPointer
    );
    assert!(last_error().contains("world"));

    let mut l = ptr::null_mut();
    assert_eq!(unsafe { salesim_linucb_new(2, -1.0, &mut l) }, SalesimStatus::InvalidArgument);
    assert!(l.is_null());
    unsafe {
        salesim_world_free(ptr::null_mut());
        salesim_result_free(ptr::null_mut());
        salesim_linucb_free(ptr::null_mut());
        salesim_string_free(ptr::null_mut());
    }
}

#[test]
fn linucb_round_trip() {
    let mut l = ptr::null_mut();
    assert_eq!(unsafe { salesim_linucb_new(2, 1.0, &mut l) }, SalesimStatus::Ok);
    let xs = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    for (i, x) in xs.iter().enumerate() {
        let st = unsafe { salesim_linucb_update(l, x.as_ptr(), 2, SALESIM_ACTION_B, (i % 2) as u8) };
        assert_eq!(st, SalesimStatus::Ok);
    }
    let mut theta = [0.0; 2];
    assert_eq!(
        unsafe { salesim_linucb_theta(l, SALESIM_ACTION_B, theta.as_mut_ptr(), 2) },
        SalesimStatus::Ok
    );
    // A = I + sum x x^T = [[3,1],[1,3]], b = [0,1] -> theta = [-1/8, 3/8].
    assert!((theta[0] + 0.125).abs() < 1e-12 && (theta[1] - 0.375).abs() < 1e-12, "{theta:?}");

    let mut scores = [0.0; 3];
    let x = [0.5, 0.5];
    assert_eq!(
        unsafe { salesim_linucb_scores(l, x.as_ptr(), 2, scores.as_mut_ptr()) },
        SalesimStatus::Ok
    );
    let mut a = 99;
    assert_eq!(unsafe { salesim_linucb_choose(l, x.as_ptr(), 2, &mut a) }, SalesimStatus::Ok);
    let best = (0..3).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
    assert_eq!(a as usize, best);

    assert_eq!(
        unsafe { salesim_linucb_update(l, x.as_ptr(), 2, 7, 1) },
        SalesimStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { salesim_linucb_theta(l, 0, theta.as_mut_ptr(), 3) },
        SalesimStatus::InvalidArgument
    );
    unsafe { salesim_linucb_free(l) };
}

#[test]
fn world_simulate_verify() {
    let w = small_world();
    let mut dim = 0usize;
    assert_eq!(unsafe { salesim_world_context_dim(w, &mut dim) }, SalesimStatus::Ok);
    assert!(dim > 0);

    let policy = CString::new("lin_ucb").unwrap();
    let coll = CString::new("observational").unwrap();
    let run = |seed| {
        let mut r = ptr::null_mut();
        let st = unsafe { salesim_simulate(w, policy.as_ptr(), coll.as_ptr(), 20, 60, 30, seed, &mut r) };
        assert_eq!(st, SalesimStatus::Ok, "{}", last_error());
        r
    };
    let r = run(3);
    assert_eq!(unsafe { salesim_result_verify(r) }, SalesimStatus::Ok);

    let mut total = 0u64;
    let mut events = 0usize;
    unsafe {
        salesim_result_cumulative_reward(r, &mut total);
        salesim_result_event_count(r, &mut events);
    }
    assert_eq!(events, 60 * 30);

    let mut len = 10usize;
    let mut days = vec![0u64; 60];
    assert_eq!(
        unsafe { salesim_result_daily_rewards(r, days.as_mut_ptr(), &mut len) },
        SalesimStatus::InvalidArgument
    );
    assert_eq!(len, 60);
    assert_eq!(unsafe { salesim_result_daily_rewards(r, days.as_mut_ptr(), &mut len) }, SalesimStatus::Ok);
    assert_eq!(days.iter().sum::<u64>(), total);

    let mut log = ptr::null_mut();
    assert_eq!(unsafe { salesim_result_log(r, &mut log) }, SalesimStatus::Ok);
    let text = unsafe { CStr::from_ptr(log) }.to_str().unwrap().to_owned();
    unsafe { salesim_string_free(log) };

    let again = run(3);
    let mut log2 = ptr::null_mut();
    unsafe { salesim_result_log(again, &mut log2) };
    assert_eq!(unsafe { CStr::from_ptr(log2) }.to_str().unwrap(), text);
    unsafe {
        salesim_string_free(log2);
        salesim_result_free(again);
        salesim_result_free(r);
    }

    let unknown = CString::new("magic").unwrap();
    let mut r = ptr::null_mut();
    let st = unsafe { salesim_simulate(w, unknown.as_ptr(), ptr::null(), 0, 10, 5, 1, &mut r) };
    assert_ne!(st, SalesimStatus::Ok);
    assert!(r.is_null());
    unsafe { salesim_world_free(w) };
}

#[test]
fn snapshot_round_trip() {
    let w = small_world();
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { salesim_world_to_json(w, &mut json) }, SalesimStatus::Ok);
    let mut w2 = ptr::null_mut();
    assert_eq!(unsafe { salesim_world_from_json(json, &mut w2) }, SalesimStatus::Ok);
    let mut json2 = ptr::null_mut();
    unsafe { salesim_world_to_json(w2, &mut json2) };
    assert_eq!(unsafe { CStr::from_ptr(json) }, unsafe { CStr::from_ptr(json2) });

    let garbage = CString::new("{not json").unwrap();
    let mut w3 = ptr::null_mut();
    assert_eq!(unsafe { salesim_world_from_json(garbage.as_ptr(), &mut w3) }, SalesimStatus::Parse);
    unsafe {
        salesim_string_free(json);
        salesim_string_free(json2);
        salesim_world_free(w);
        salesim_world_free(w2);
    }
}
