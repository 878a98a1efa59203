use std::ffi::{c_char, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use mixcut_ffi::*;

fn two_state(alpha: f64, beta: f64) -> *mut MixChain {
    let k = [1.0 - alpha, alpha, beta, 1.0 - beta];
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mix_chain_from_dense(2, k.as_ptr(), &mut out) }, MixStatus::Ok);
    out
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { mix_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn chain_round_trip() {
    let c = two_state(0.3, 0.1);
    unsafe {
        let mut n = 0usize;
        assert_eq!(mix_chain_num_states(c, &mut n), MixStatus::Ok);
        assert_eq!(n, 2);
        let mut pi = [0.0; 2];
        assert_eq!(mix_chain_stationary(c, pi.as_mut_ptr(), 2), MixStatus::Ok);
        assert!((pi[0] - 0.25).abs() < 1e-12 && (pi[1] - 0.75).abs() < 1e-12);
        assert_eq!(mix_chain_stationary(c, pi.as_mut_ptr(), 1), MixStatus::BufferTooSmall);
        let mut gap = 0.0;
        assert_eq!(mix_chain_spectral_gap(c, &mut gap), MixStatus::Ok);
        assert!((gap - 0.4).abs() < 1e-12);
        // d_TV(δ0 H_t, π) = π(1) e^{−(α+β)t}
        let mut d = 0.0;
        assert_eq!(mix_chain_distance_at(c, MIX_KIND_TV, 0, 1.0, &mut d), MixStatus::Ok);
        assert!((d - 0.75 * (-0.4f64).exp()).abs() < 1e-12);
        let mut t = 0.0;
        assert_eq!(mix_chain_mixing_time(c, MIX_KIND_TV, 0.1, 0, false, &mut t), MixStatus::Ok);
        assert!((t - (7.5f64).ln() / 0.4).abs() < 1e-5 * t);
        mix_chain_free(c);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let bad = [0.5, 0.6, 0.5, 0.5];
        let mut out = ptr::null_mut();
        assert_ne!(mix_chain_from_dense(2, bad.as_ptr(), &mut out), MixStatus::Ok);
        assert!(out.is_null());
        assert!(!last_error().is_empty());

        let reducible = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(mix_chain_from_dense(2, reducible.as_ptr(), &mut out), MixStatus::ValidationFailed);

        assert_eq!(mix_chain_from_dense(2, ptr::null(), &mut out), MixStatus::NullPointer);
        let c = two_state(0.5, 0.5);
        let mut d = 0.0;
        assert_eq!(mix_chain_distance_at(c, 7, 0, 1.0, &mut d), MixStatus::InvalidInput);
        assert_eq!(mix_chain_distance_at(c, MIX_KIND_TV, 2, 1.0, &mut d), MixStatus::InvalidInput);
        assert!(last_error().contains("start state"));
        mix_chain_free(c);
        mix_chain_free(ptr::null_mut());
    }
}

#[test]
fn json_chain() {
    let json = CString::new(r#"{"label":"flip","matrix":[[0.5,0.5],[0.5,0.5]]}"#).unwrap();
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(mix_chain_from_json(json.as_ptr(), &mut c), MixStatus::Ok);
        let mut d = 1.0;
        assert_eq!(mix_chain_distance_at(c, MIX_KIND_HELLINGER, MIX_START_MAX, 0.0, &mut d), MixStatus::Ok);
        // From a point mass on a uniform two-point space: 1 − √½.
        assert!((d * d - (1.0 - 0.5f64.sqrt())).abs() < 1e-12);
        mix_chain_free(c);
    }
    let garbage = CString::new("{").unwrap();
    assert_eq!(unsafe { mix_chain_from_json(garbage.as_ptr(), &mut c) }, MixStatus::InvalidInput);
}

#[test]
fn distances() {
    let mu = [1.0, 0.0];
    let nu = [0.5, 0.5];
    let mut d = 0.0;
    unsafe {
        assert_eq!(mix_distance(MIX_KIND_TV, mu.as_ptr(), nu.as_ptr(), 2, &mut d), MixStatus::Ok);
        assert!((d - 0.5).abs() < 1e-15);
        assert_eq!(mix_distance(MIX_KIND_L2, mu.as_ptr(), nu.as_ptr(), 2, &mut d), MixStatus::Ok);
        assert!((d - 1.0).abs() < 1e-15);
    }
}

#[test]
fn product_of_two_state_chains() {
    let a = two_state(0.5, 0.5);
    let b = two_state(0.3, 0.1);
    let chains = [a as *const MixChain, b as *const MixChain];
    let weights = [1.0, 2.0];
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(mix_product_new(chains.as_ptr(), weights.as_ptr(), 2, &mut p), MixStatus::Ok);
        mix_chain_free(a);
        mix_chain_free(b);
        let (mut h, mut lo, mut hi) = (0.0, 0.0, 0.0);
        assert_eq!(mix_product_hellinger(p, 1.5, &mut h), MixStatus::Ok);
        assert_eq!(mix_product_tv_bracket(p, 1.5, &mut lo, &mut hi), MixStatus::Ok);
        assert!(0.0 < h && h < 1.0);
        assert!(lo <= hi && 0.0 < lo);
        // d_TV ≥ d_H² and d_TV ≤ d_H √(2 − d_H²).
        assert!(hi >= h * h && lo <= h * (2.0 - h * h).sqrt());
        mix_product_free(p);
        let neg = [1.0, -1.0];
        let c = two_state(0.5, 0.5);
        let chains = [c as *const MixChain, c as *const MixChain];
        assert_eq!(mix_product_new(chains.as_ptr(), neg.as_ptr(), 2, &mut p), MixStatus::InvalidInput);
        mix_chain_free(c);
    }
}

#[test]
fn header_is_generated_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mixcut.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["mix_chain_from_dense", "mix_product_tv_bracket", "MIX_STATUS_OK", "typedef struct MixChain MixChain"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    // Syntax check only where a C compiler is installed.
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
