//! Documents bundled with the crate.

pub const GEN3_CHAIN: &str = include_str!("../data/gen3.chain");

/// Bundled scenario ids, in order.
pub const SCENARIOS: [&str; 3] = ["s1_floor", "s2_sphere", "s3_twoarm"];

/// Bundled chain document by name.
pub fn chain_document(name: &str) -> Option<&'static str> {
    match name {
        "gen3" => Some(GEN3_CHAIN),
        _ => None,
    }
}

/// Bundled scenario document by id.
pub fn scenario_document(id: &str) -> Option<&'static str> {
    match id {
        "s1_floor" => Some(include_str!("../data/scenarios/s1_floor.toml")),
        "s2_sphere" => Some(include_str!("../data/scenarios/s2_sphere.toml")),
        "s3_twoarm" => Some(include_str!("../data/scenarios/s3_twoarm.toml")),
        _ => None,
    }
}
