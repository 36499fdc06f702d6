use rand::Rng;
use rand_distr::StandardNormal;

use eivcp::detect::{self, StatKind, TABLE_INT, TABLE_SUP};
use eivcp::{limit_sim, rng};

#[test]
fn path_increments_are_scaled_normals() {
    let m = 500;
    let mut a = rng::substream(3, 0);
    let mut b = a.clone();
    let path = limit_sim::simulate_path(m, &mut a).unwrap();
    assert_eq!(path.values()[0], 0.0);
    let scale = 1.0 / (m as f64).sqrt();
    for w in path.values().windows(2) {
        let xi: f64 = b.sample(StandardNormal);
        assert!((w[1] - w[0] - scale * xi).abs() < 1e-12);
    }
}

#[test]
fn limit_draw_is_reproducible_per_replicate() {
    assert_eq!(limit_sim::replicate_draw(200, 4, 17).unwrap(), limit_sim::replicate_draw(200, 4, 17).unwrap());
    assert_ne!(limit_sim::replicate_draw(200, 4, 17).unwrap(), limit_sim::replicate_draw(200, 4, 18).unwrap());
}

#[test]
fn published_quantiles_and_p_values_at_full_resolution() {
    let table = limit_sim::simulate_quantiles(1000, 100_000, &[0.90, 0.95], 1).unwrap();
    let sup95 = table.critical_value(StatKind::Sup, 0.95).unwrap();
    let int90 = table.critical_value(StatKind::Int, 0.90).unwrap();
    assert!((sup95 - TABLE_SUP[1]).abs() <= 0.02, "sup 95% {sup95}");
    assert!((int90 - TABLE_INT[0]).abs() <= 0.12, "int 90% {int90}");
    let p_sup = detect::p_value(TABLE_SUP[1], &table, StatKind::Sup).unwrap();
    let p_int = detect::p_value(TABLE_INT[0], &table, StatKind::Int).unwrap();
    assert!((p_sup - 0.05).abs() < 0.005, "p sup {p_sup}");
    assert!((p_int - 0.10).abs() < 0.01, "p int {p_int}");
}

#[test]
fn table_file_round_trip() {
    let table = limit_sim::simulate_quantiles(50, 300, &detect::TABLE_LEVELS, 2).unwrap();
    assert!(table.low_precision());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.txt");
    limit_sim::write_table(&table, &path).unwrap();
    let back = limit_sim::read_table(&path).unwrap();
    for kind in [StatKind::Sup, StatKind::Int] {
        let (a, b) = (back.quantiles(kind), table.quantiles(kind));
        assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
        assert!(a.values().zip(b.values()).all(|(x, y)| (x - y).abs() <= 5e-7));
    }
    assert_eq!(limit_sim::render_table(&back), limit_sim::render_table(&table));
}
