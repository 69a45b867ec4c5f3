//! Bundled experiment configs, one per published figure layout.

pub const PRESET_NAMES: [&str; 6] = ["fig2", "fig3", "fig4a", "fig4b", "fig4c", "fig5"];

/// The preset's JSON text.
pub fn preset(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig2" => include_str!("../presets/fig2.json"),
        "fig3" => include_str!("../presets/fig3.json"),
        "fig4a" => include_str!("../presets/fig4a.json"),
        "fig4b" => include_str!("../presets/fig4b.json"),
        "fig4c" => include_str!("../presets/fig4c.json"),
        "fig5" => include_str!("../presets/fig5.json"),
        _ => return None,
    })
}
