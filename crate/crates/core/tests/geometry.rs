#[path = "support/geometry.rs"]
mod geometry;

#[test]
fn interval_geometry_invariants_hold() {
    geometry::run(10_000).unwrap();
}
