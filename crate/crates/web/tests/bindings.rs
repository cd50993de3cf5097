use sarcd::Raster;
use sarcd_web::{counts_report, difference, make_scene, to_rgba};

#[test]
fn rgba_is_opaque_grey() {
    let r = Raster::from_fn(3, 2, |i, j| (i * 3 + j) as f64);
    let px = to_rgba(&r, 0.0, 5.0);
    assert_eq!(px.len(), 24);
    assert_eq!(&px[..4], &[0, 0, 0, 255]);
    assert_eq!(&px[20..], &[255, 255, 255, 255]);
    assert!(to_rgba(&Raster::filled(2, 2, 7.0), 7.0, 7.0).chunks(4).all(|p| p == [0, 0, 0, 255]));
}

#[test]
fn scene_and_difference() {
    let pair = make_scene(64, 2.0, 4.0, 3.0, 1).unwrap();
    assert_eq!(pair.i1.width(), 64);
    let d = difference(&pair, "msrdi").unwrap();
    let report: serde_json::Value = serde_json::from_str(&d.report()).unwrap();
    assert!(report["pcc"].as_f64().unwrap() > 90.0);
    assert_eq!(d.binary_rgba().len() / 4, 64 * 64);
    assert!(difference(&pair, "median").is_err());
    assert!(make_scene(64, 2.0, 0.0, 3.0, 1).is_err());
}

#[test]
fn counts_reproduce_the_reference_figures() {
    let m: serde_json::Value = serde_json::from_str(&counts_report(4468, 279, 217, 60572).unwrap()).unwrap();
    assert_eq!(m["pcc"], 99.24);
    assert_eq!(m["kc"], 94.33);
    assert!(counts_report(0, 0, 0, 0).is_err());
}
