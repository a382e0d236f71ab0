//! Configurations shipped with the binary.

pub struct Preset {
    pub name: &'static str,
    pub text: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "synthetic-nospm", text: include_str!("../presets/synthetic-nospm.toml") },
    Preset { name: "synthetic-spm", text: include_str!("../presets/synthetic-spm.toml") },
    Preset { name: "powerwindow-like", text: include_str!("../presets/powerwindow-like.toml") },
    Preset { name: "predictable", text: include_str!("../presets/predictable.toml") },
];

pub fn get(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

impl Preset {
    /// The `description` key of the preset.
    pub fn description(&self) -> String {
        crate::config::parse(self.text).map(|c| c.description).unwrap_or_default()
    }
}
