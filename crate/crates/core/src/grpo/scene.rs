//! Synthetic grounding scenes with a controllable ambiguity profile.
//!
//! A scene is a filled grid of elements, one per cell, each carrying a small
//! set of categorical attributes. Each perspective describes the target
//! through one attribute; its feature vector is the per-cell match mask of
//! that attribute value, so a unique perspective yields a one-hot mask and
//! an ambiguous one a multi-hot mask.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::types::Perspective;

use super::GrpoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementAttributes {
    pub color_id: u32,
    pub icon_id: u32,
    pub text_id: u32,
    pub function_id: u32,
    pub region_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneElement {
    /// (col, row) within the grid.
    pub cell: (u32, u32),
    pub attributes: ElementAttributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub grid_w: u32,
    pub grid_h: u32,
    pub elements: Vec<SceneElement>,
    pub target_index: usize,
    /// Perspective -> per-cell match mask (length `n_cells`).
    pub instruction_features: BTreeMap<Perspective, Vec<f64>>,
}

impl SyntheticScene {
    pub fn n_cells(&self) -> usize {
        (self.grid_w * self.grid_h) as usize
    }

    /// Row-major cell index of an element.
    pub fn cell_index(&self, element: &SceneElement) -> usize {
        (element.cell.1 * self.grid_w + element.cell.0) as usize
    }

    pub fn target_cell(&self) -> usize {
        self.cell_index(&self.elements[self.target_index])
    }

    pub fn features(&self, p: Perspective) -> &[f64] {
        &self.instruction_features[&p]
    }

    /// Number of elements a perspective's mask matches.
    pub fn match_count(&self, p: Perspective) -> usize {
        self.features(p).iter().filter(|&&v| v != 0.0).count()
    }

    /// True when the perspective pins down the target alone.
    pub fn is_unique(&self, p: Perspective) -> bool {
        self.match_count(p) == 1
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.target_index >= self.elements.len() {
            return Err(GrpoError::InvalidScene("target_index out of range".into()));
        }
        for e in &self.elements {
            if e.cell.0 >= self.grid_w || e.cell.1 >= self.grid_h {
                return Err(GrpoError::InvalidScene(format!("cell {:?} outside grid", e.cell)));
            }
        }
        for (p, mask) in &self.instruction_features {
            if mask.len() != self.n_cells() {
                return Err(GrpoError::InvalidScene(format!("{p} mask length mismatch")));
            }
            if mask.iter().all(|&v| v == 0.0) {
                return Err(GrpoError::InvalidScene(format!("{p} mask matches nothing")));
            }
            if mask[self.target_cell()] == 0.0 {
                return Err(GrpoError::InvalidScene(format!("{p} mask misses the target")));
            }
        }
        Ok(())
    }
}

/// Which perspectives uniquely identify the target.
///
/// The appearance perspective is unique under every profile; the mixed
/// profile additionally makes one more perspective unique in a controlled
/// fraction of scenes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum AmbiguityProfile {
    AllUnique,
    UniqueAppearanceOnly,
    MixedUnique { p_second_unique: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_scenes: usize,
    pub grid_w: u32,
    pub grid_h: u32,
    pub profile: AmbiguityProfile,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.n_scenes < 1 {
            return Err(GrpoError::ConfigError("n_scenes must be >= 1".into()));
        }
        if self.grid_w < 2 || self.grid_h < 2 {
            return Err(GrpoError::ConfigError("grid must be at least 2x2".into()));
        }
        if let AmbiguityProfile::MixedUnique { p_second_unique } = self.profile {
            if !(0.0..=1.0).contains(&p_second_unique) {
                return Err(GrpoError::ConfigError("p_second_unique must be in [0,1]".into()));
            }
        }
        Ok(())
    }
}

// Which attribute each perspective reads.
fn attr_of(attrs: &ElementAttributes, p: Perspective) -> u32 {
    match p {
        Perspective::Appearance => attrs.color_id,
        Perspective::Function => attrs.function_id,
        Perspective::Spatial => attrs.region_id,
        Perspective::Goal => attrs.text_id,
        Perspective::Original => unreachable!("scenes carry augmented perspectives only"),
    }
}

fn set_attr(attrs: &mut ElementAttributes, p: Perspective, v: u32) {
    match p {
        Perspective::Appearance => attrs.color_id = v,
        Perspective::Function => attrs.function_id = v,
        Perspective::Spatial => attrs.region_id = v,
        Perspective::Goal => attrs.text_id = v,
        Perspective::Original => unreachable!(),
    }
}

fn gen_scene(config: &SceneConfig, rng: &mut ChaCha8Rng) -> SyntheticScene {
    let n_cells = (config.grid_w * config.grid_h) as usize;
    let target_index = rng.gen_range(0..n_cells);

    let mut unique = BTreeMap::new();
    match config.profile {
        AmbiguityProfile::AllUnique => {
            for p in Perspective::AUGMENTED {
                unique.insert(p, true);
            }
        }
        AmbiguityProfile::UniqueAppearanceOnly => {
            for p in Perspective::AUGMENTED {
                unique.insert(p, p == Perspective::Appearance);
            }
        }
        AmbiguityProfile::MixedUnique { p_second_unique } => {
            for p in Perspective::AUGMENTED {
                unique.insert(p, p == Perspective::Appearance);
            }
            if rng.gen_bool(p_second_unique) {
                let others = [Perspective::Function, Perspective::Spatial, Perspective::Goal];
                let second = others[rng.gen_range(0..others.len())];
                unique.insert(second, true);
            }
        }
    }

    let mut elements: Vec<SceneElement> = (0..n_cells)
        .map(|i| SceneElement {
            cell: (i as u32 % config.grid_w, i as u32 / config.grid_w),
            attributes: ElementAttributes {
                color_id: 0,
                icon_id: rng.gen_range(0..8),
                text_id: 0,
                function_id: 0,
                region_id: 0,
            },
        })
        .collect();

    // The target's attribute value is 0 for every perspective; non-target
    // elements get non-zero values, and ambiguous perspectives share value 0
    // with a few extra elements.
    for p in Perspective::AUGMENTED {
        for (i, e) in elements.iter_mut().enumerate() {
            let v = if i == target_index { 0 } else { 1 + rng.gen_range(0..5) };
            set_attr(&mut e.attributes, p, v);
        }
        if !unique[&p] {
            let extra = rng.gen_range(1..=3usize);
            let mut granted = 0usize;
            while granted < extra {
                let i = rng.gen_range(0..n_cells);
                if i != target_index && attr_of(&elements[i].attributes, p) != 0 {
                    set_attr(&mut elements[i].attributes, p, 0);
                    granted += 1;
                }
            }
        }
    }

    let target_attrs = elements[target_index].attributes;
    let mut instruction_features = BTreeMap::new();
    for p in Perspective::AUGMENTED {
        let mask: Vec<f64> = elements
            .iter()
            .map(|e| (attr_of(&e.attributes, p) == attr_of(&target_attrs, p)) as u32 as f64)
            .collect();
        instruction_features.insert(p, mask);
    }

    SyntheticScene {
        grid_w: config.grid_w,
        grid_h: config.grid_h,
        elements,
        target_index,
        instruction_features,
    }
}

/// Generates `n_scenes` scenes deterministically. Scene `i` is drawn from a
/// dedicated rng stream: `ChaCha8Rng::seed_from_u64(seed)` with stream `i`,
/// so generation can be parallelized without changing the output.
pub fn gen_scenes(config: &SceneConfig, seed: u64) -> Result<Vec<SyntheticScene>, GrpoError> {
    config.validate()?;
    let mut scenes = Vec::with_capacity(config.n_scenes);
    for i in 0..config.n_scenes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let scene = gen_scene(config, &mut rng);
        debug_assert!(scene.validate().is_ok());
        scenes.push(scene);
    }
    Ok(scenes)
}
