//! Configuration files shipped with the crate.

pub const REGISTRY_JSON: &str = include_str!("../data/registry.json");
pub const TEMPLATES_JSON: &str = include_str!("../data/templates.json");
pub const CORPUS_JSON: &str = include_str!("../data/corpus.json");

pub const SCENE_PRESETS: [(u8, &str); 3] = [
    (1, include_str!("../data/scenes/scenario1.json")),
    (2, include_str!("../data/scenes/scenario2.json")),
    (3, include_str!("../data/scenes/scenario3.json")),
];

pub const SCRIPTS: [(u8, &str); 3] = [
    (1, include_str!("../data/scripts/scenario1.json")),
    (2, include_str!("../data/scripts/scenario2.json")),
    (3, include_str!("../data/scripts/scenario3.json")),
];
