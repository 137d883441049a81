//! Receptive-field report for the refinement blocks.

use std::path::Path;

use anyhow::Result;
use clap::ValueEnum;
use rfbtd_core::rf::{compute_block_profile, compute_rf_profile, plans, render_rf_map, support, RfProfile};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Rfb,
    RfbS,
    Plain,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Rfb, Variant::RfbS, Variant::Plain];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Rfb => "rfb",
            Variant::RfbS => "rfb_s",
            Variant::Plain => "plain",
        }
    }

    pub fn profile(self) -> RfProfile {
        // The plans are static and valid, so these cannot fail.
        match self {
            Variant::Rfb => compute_block_profile(&plans::rfb()).expect("rfb plan"),
            Variant::RfbS => compute_block_profile(&plans::rfb_s()).expect("rfb_s plan"),
            Variant::Plain => compute_rf_profile(&plans::plain_refinement()).expect("plain plan"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RfReport {
    pub variant: Variant,
    pub profile: RfProfile,
    /// Nonzero pixels of the rendered map.
    pub support: usize,
}

/// Profiles `variants` and, when `map_dir` is given, writes one
/// `rf_<variant>.png` of `map_size`² pixels per variant.
pub fn analyze(variants: &[Variant], map_dir: Option<&Path>, map_size: u32) -> Result<Vec<RfReport>> {
    if let Some(d) = map_dir {
        std::fs::create_dir_all(d)?;
    }
    let mut out = Vec::new();
    for &v in variants {
        let profile = v.profile();
        let map = render_rf_map(&profile, map_size, map_size);
        if let Some(d) = map_dir {
            map.save(d.join(format!("rf_{}.png", v.name())))?;
        }
        out.push(RfReport { variant: v, support: support(&map), profile });
    }
    Ok(out)
}
