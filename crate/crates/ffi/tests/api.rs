use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use fgwclust_ffi::*;

fn last_error() -> String {
    let p = fgw_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Two 6-node cliques joined by one edge, with separable features.
fn two_cliques() -> *mut FgwGraph {
    let n = 12;
    let mut x = vec![0.0; n * 2];
    let mut labels = vec![0u64; n];
    for i in 0..n {
        let c = i / 6;
        x[i * 2 + c] = 1.0 + 0.05 * (i % 6) as f64;
        labels[i] = c as u64;
    }
    let mut edges = Vec::new();
    for c in 0..2u64 {
        for i in 0..6 {
            for j in i + 1..6 {
                edges.extend([c * 6 + i, c * 6 + j]);
            }
        }
    }
    edges.extend([5, 6]);
    let mut g = ptr::null_mut();
    let st = unsafe {
        fgw_graph_new(
            x.as_ptr(),
            n,
            2,
            edges.as_ptr(),
            edges.len() / 2,
            labels.as_ptr(),
            &mut g,
        )
    };
    assert_eq!(st, FgwStatus::Ok);
    g
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(fgw_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn graph_handle_lifecycle() {
    let g = two_cliques();
    unsafe {
        assert_eq!(fgw_graph_n_nodes(g), 12);
        assert_eq!(fgw_graph_n_features(g), 2);
        assert_eq!(fgw_graph_n_edges(g), 31);
        fgw_graph_free(g);
        fgw_graph_free(ptr::null_mut());
        assert_eq!(fgw_graph_n_nodes(ptr::null()), 0);
    }
}

#[test]
fn bad_edges_report_shape() {
    let x = [0.0; 4];
    let edges = [0u64, 7];
    let mut g = ptr::null_mut();
    let st = unsafe { fgw_graph_new(x.as_ptr(), 2, 2, edges.as_ptr(), 1, ptr::null(), &mut g) };
    assert_eq!(st, FgwStatus::Shape);
    assert!(g.is_null());
    assert!(last_error().contains("out of range"), "{}", last_error());
}

#[test]
fn null_buffers_are_rejected() {
    let mut plan = [0.0; 4];
    let st = unsafe {
        fgw_sinkhorn(
            ptr::null(),
            2,
            2,
            ptr::null(),
            ptr::null(),
            0.1,
            plan.as_mut_ptr(),
        )
    };
    assert_eq!(st, FgwStatus::NullPointer);
    assert_eq!(last_error(), "cost is null");
}

#[test]
fn missing_directory_is_io() {
    let dir = CString::new("/nonexistent/fgw").unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { fgw_graph_load(dir.as_ptr(), &mut g) },
        FgwStatus::Io
    );
    assert!(last_error().contains("edges.txt"));
}

#[test]
fn sinkhorn_plan_has_requested_marginals() {
    let cost = [0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.5, 0.5, 0.0];
    let nu = [0.5, 0.25, 0.25];
    let mut plan = [0.0; 9];
    let st = unsafe {
        fgw_sinkhorn(
            cost.as_ptr(),
            3,
            3,
            ptr::null(),
            nu.as_ptr(),
            0.05,
            plan.as_mut_ptr(),
        )
    };
    assert_eq!(st, FgwStatus::Ok);
    for i in 0..3 {
        let row: f64 = plan[i * 3..i * 3 + 3].iter().sum();
        let col: f64 = (0..3).map(|r| plan[r * 3 + i]).sum();
        assert!((row - 1.0 / 3.0).abs() < 1e-6);
        assert!((col - nu[i]).abs() < 1e-6);
    }
}

#[test]
fn invalid_marginal_and_epsilon() {
    let cost = [0.0; 4];
    let mu = [0.7, 0.7];
    let mut plan = [0.0; 4];
    let st = unsafe {
        fgw_sinkhorn(
            cost.as_ptr(),
            2,
            2,
            mu.as_ptr(),
            ptr::null(),
            0.1,
            plan.as_mut_ptr(),
        )
    };
    assert_eq!(st, FgwStatus::InvalidArgument);
    let st = unsafe {
        fgw_sinkhorn(
            cost.as_ptr(),
            2,
            2,
            ptr::null(),
            ptr::null(),
            -1.0,
            plan.as_mut_ptr(),
        )
    };
    assert_eq!(st, FgwStatus::Config);
}

#[test]
fn fused_gw_recovers_blocks() {
    let g = two_cliques();
    let n = 12;
    // weak attribute hint; structure alone sits on the symmetric saddle of mu nu^T
    let cost: Vec<f64> = (0..n * 2)
        .map(|k| if (k / 2) / 6 == k % 2 { 0.0 } else { 0.2 })
        .collect();
    let b = [1.0, 0.0, 0.0, 1.0];
    let mut plan = vec![0.0; n * 2];
    let st = unsafe {
        fgw_fused_gw(
            cost.as_ptr(),
            g,
            b.as_ptr(),
            2,
            ptr::null(),
            ptr::null(),
            0.5,
            0.05,
            plan.as_mut_ptr(),
        )
    };
    assert_eq!(st, FgwStatus::Ok, "{}", last_error());
    // nodes of the same clique share a prototype
    let side: Vec<usize> = (0..n)
        .map(|i| usize::from(plan[i * 2 + 1] > plan[i * 2]))
        .collect();
    assert!(side[..6].iter().all(|&s| s == side[0]));
    assert!(side[6..].iter().all(|&s| s == side[6]));
    assert_eq!(side[0], 0);
    assert_eq!(side[6], 1);

    let bad_b = [2.0, 0.0, 0.0, 1.0];
    let st = unsafe {
        fgw_fused_gw(
            cost.as_ptr(),
            g,
            bad_b.as_ptr(),
            2,
            ptr::null(),
            ptr::null(),
            0.5,
            0.05,
            plan.as_mut_ptr(),
        )
    };
    assert_eq!(st, FgwStatus::InvalidArgument);
    unsafe { fgw_graph_free(g) };
}

#[test]
fn train_infer_save_load() {
    let g = two_cliques();
    let cfg = CString::new(
        r#"{"S": 2, "epochs": 3, "tau": 0.5, "lr": 0.01, "dims": {"d1": 8, "d_h": 8, "d": 4}}"#,
    )
    .unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { fgw_train(g, cfg.as_ptr(), &mut m) },
        FgwStatus::Ok,
        "{}",
        last_error()
    );
    unsafe {
        assert_eq!(fgw_model_n_prototypes(m), 2);
        assert_eq!(fgw_model_input_dim(m), 2);
        assert_eq!(fgw_model_n_epochs(m), 3);
    }
    let mut trace = [0.0; 3];
    assert_eq!(
        unsafe { fgw_model_loss_trace(m, trace.as_mut_ptr()) },
        FgwStatus::Ok
    );
    assert!(trace.iter().all(|l| l.is_finite()));

    let mut r = vec![0.0; 24];
    assert_eq!(
        unsafe { fgw_model_infer(m, g, r.as_mut_ptr()) },
        FgwStatus::Ok
    );
    assert!(r.iter().all(|v| v.abs() <= 1.0 + 1e-12));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.fgm").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fgw_model_save(m, path.as_ptr()) }, FgwStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(
        unsafe { fgw_model_load(path.as_ptr(), &mut back) },
        FgwStatus::Ok
    );
    let mut r2 = vec![0.0; 24];
    assert_eq!(
        unsafe { fgw_model_infer(back, g, r2.as_mut_ptr()) },
        FgwStatus::Ok
    );
    // checkpoints hold f32 weights
    for (a, b) in r.iter().zip(&r2) {
        assert!((a - b).abs() < 1e-4);
    }
    unsafe {
        fgw_model_free(m);
        fgw_model_free(back);
        fgw_graph_free(g);
    }
}

#[test]
fn train_rejects_bad_config() {
    let g = two_cliques();
    let mut m = ptr::null_mut();
    for cfg in [r#"{"S": 1}"#, r#"{"bogus": 1}"#, "not json"] {
        let c = CString::new(cfg).unwrap();
        assert_eq!(
            unsafe { fgw_train(g, c.as_ptr(), &mut m) },
            FgwStatus::Config,
            "{cfg}"
        );
        assert!(m.is_null());
    }
    unsafe { fgw_graph_free(g) };
}

#[test]
fn infer_rejects_other_width() {
    let g = two_cliques();
    let cfg =
        CString::new(r#"{"S": 2, "epochs": 0, "dims": {"d1": 4, "d_h": 4, "d": 2}}"#).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { fgw_train(g, cfg.as_ptr(), &mut m) }, FgwStatus::Ok);
    let x = [0.0; 9];
    let mut other = ptr::null_mut();
    assert_eq!(
        unsafe { fgw_graph_new(x.as_ptr(), 3, 3, ptr::null(), 0, ptr::null(), &mut other) },
        FgwStatus::Ok
    );
    let mut r = [0.0; 6];
    assert_eq!(
        unsafe { fgw_model_infer(m, other, r.as_mut_ptr()) },
        FgwStatus::Shape
    );
    unsafe {
        fgw_model_free(m);
        fgw_graph_free(other);
        fgw_graph_free(g);
    }
}

#[test]
fn kmeans_and_evaluate() {
    let x = [0.0, 0.0, 0.1, 0.0, 5.0, 5.0, 5.1, 5.0, 0.0, 0.1, 5.0, 5.1];
    let mut labels = [0u64; 6];
    let mut inertia = -1.0;
    let st = unsafe { fgw_kmeans(x.as_ptr(), 6, 2, 2, 4, 7, labels.as_mut_ptr(), &mut inertia) };
    assert_eq!(st, FgwStatus::Ok);
    assert!((0.0..0.1).contains(&inertia));
    let truth = [1u64, 1, 0, 0, 1, 0];
    let mut m = FgwMetrics::default();
    assert_eq!(
        unsafe { fgw_evaluate(labels.as_ptr(), truth.as_ptr(), 6, 2, 2, &mut m) },
        FgwStatus::Ok
    );
    assert_eq!(
        m,
        FgwMetrics {
            acc: 1.0,
            macro_f1: 1.0,
            nmi: 1.0,
            ari: 1.0
        }
    );

    let st = unsafe {
        fgw_kmeans(
            x.as_ptr(),
            6,
            2,
            7,
            4,
            7,
            labels.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, FgwStatus::Shape);
    let bad = [0u64, 0, 0, 0, 0, 5];
    assert_eq!(
        unsafe { fgw_evaluate(bad.as_ptr(), truth.as_ptr(), 6, 2, 2, &mut m) },
        FgwStatus::Shape
    );
}

#[test]
fn errors_are_per_thread() {
    let mut plan = [0.0; 1];
    let st = unsafe {
        fgw_sinkhorn(
            ptr::null(),
            1,
            1,
            ptr::null(),
            ptr::null(),
            0.1,
            plan.as_mut_ptr(),
        )
    };
    assert_eq!(st, FgwStatus::NullPointer);
    std::thread::spawn(|| assert!(fgw_last_error().is_null()))
        .join()
        .unwrap();
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/fgwclust.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in [
        "fgw_graph_load",
        "fgw_train",
        "fgw_model_infer",
        "fgw_kmeans",
        "fgw_evaluate",
        "FGW_STATUS_PANIC",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, header])
            .output()
        else {
            eprintln!("{compiler} not found; skipping");
            continue;
        };
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
