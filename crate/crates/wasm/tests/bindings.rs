use optomech_wasm::{branches, params, psd_curve, stability};

#[test]
fn psd_peaks_near_mechanics_when_uncoupled() {
    let p = params(190.0, 190.0, 193.0, 4.0, 0.0, 1e4).unwrap();
    let v = psd_curve(&p, 100.0, 300.0, 401).unwrap();
    assert_eq!(v.len(), 802);
    let (f, _) = v
        .chunks(2)
        .map(|c| (c[0], c[1]))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!((f - 190.0).abs() < 1.0, "{f}");
}

#[test]
fn branches_anticross_at_strong_coupling() {
    let p = params(190.0, 190.0, 193.0, 4.0, 0.35 * 190.0, 0.0).unwrap();
    let v = branches(&p, 95.0, 570.0, 101).unwrap();
    assert_eq!(v.len(), 505);
    assert!(v.chunks(5).all(|r| r[1] > r[2]));
    assert!(v.chunks(5).all(|r| r[3] > 0.0 && r[4] > 0.0));
    // linewidths are shared between the branches
    assert!(v.chunks(5).all(|r| (r[3] + r[4] - 197.0).abs() < 1e-6));
}

#[test]
fn stability_boundary_matches_grid() {
    let p = params(190.0, 190.0, 193.0, 4.0, 0.0, 0.0).unwrap();
    let (nd, ng) = (30, 40);
    let v = stability(&p, 3.0, 1.0, nd, ng).unwrap();
    assert_eq!(v.len(), nd * ng + nd);
    let crit = &v[nd * ng..];
    for i in 0..nd {
        for j in 0..ng {
            let g = j as f64 / (ng - 1) as f64;
            let stable = v[i * ng + j] == 1.0;
            if (g - crit[i]).abs() > 1e-9 {
                assert_eq!(stable, g < crit[i], "d index {i}, g {g}, crit {}", crit[i]);
            }
        }
    }
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(params(190.0, 190.0, -1.0, 4.0, 0.0, 0.0).unwrap_err().contains("kappa"));
    let p = params(190.0, 190.0, 193.0, 4.0, 50.0, 0.0).unwrap();
    assert!(psd_curve(&p, 300.0, 100.0, 10).is_err());
    assert!(branches(&p, 0.0, 100.0, 10).is_err());
    assert!(stability(&p, 3.0, 1.0, 1, 10).is_err());
}
