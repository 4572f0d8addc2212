//! Built-in configuration documents.

macro_rules! preset {
    ($name:literal) => {
        ($name, include_str!(concat!("../presets/", $name, ".toml")))
    };
}

pub const PRESETS: &[(&str, &str)] = &[
    preset!("free-evolution"),
    preset!("primitive-pi"),
    preset!("dcg-not"),
    preset!("cp6-bangbang"),
    preset!("cp6-primitive"),
    preset!("cp6-dcg"),
    preset!("udd6-bangbang"),
    preset!("udd6-primitive"),
    preset!("udd6-dcg"),
    preset!("fig4-primitive-sigma1"),
    preset!("fig4-primitive-sigma0.1"),
    preset!("fig4-breakdown"),
];

const ALIASES: &[(&str, &str)] = &[
    ("fig4-primitive-σ1", "fig4-primitive-sigma1"),
    ("fig4-primitive-σ0.1", "fig4-primitive-sigma0.1"),
];

/// Canonical name and document text.
pub fn lookup(name: &str) -> Option<(&'static str, &'static str)> {
    let name = ALIASES.iter().find(|(a, _)| *a == name).map_or(name, |(_, c)| c);
    PRESETS.iter().find(|(n, _)| *n == name).copied()
}

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}
