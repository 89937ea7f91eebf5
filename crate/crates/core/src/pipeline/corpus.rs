//! SFT and RL corpus construction from verified samples.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, Point};
use crate::types::{GroundingSample, Perspective};

/// One supervised training example: the instruction is phrased in one
/// perspective, the reasoning target in a different one, and the coordinate
/// target is the box center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftExample {
    pub sample_id: String,
    pub screenshot_id: String,
    pub instruction_perspective: Perspective,
    pub instruction_text: String,
    pub reasoning_perspective: Perspective,
    pub reasoning_text: String,
    pub gt_point: Point,
}

/// One RL training example: a single (sample, perspective) pair scored by
/// point-in-box against the ground-truth box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlExample {
    pub sample_id: String,
    pub screenshot_id: String,
    pub instruction_text: String,
    pub instruction_perspective: Perspective,
    #[serde(with = "crate::types::bbox_array")]
    pub gt_bbox: BBox,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SftCorpus {
    pub examples: Vec<SftExample>,
    /// Samples skipped for having fewer than two non-original perspectives.
    pub skipped: usize,
}

/// Builds the SFT corpus: per sample, an ordered pair of distinct augmented
/// perspectives drawn uniformly (first is the instruction, second the
/// reasoning). Deterministic for a given seed.
pub fn build_sft_corpus(samples: &[GroundingSample], rng_seed: u64) -> SftCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut examples = Vec::new();
    let mut skipped = 0usize;
    for sample in samples {
        let perspectives: Vec<Perspective> = Perspective::AUGMENTED
            .iter()
            .copied()
            .filter(|p| sample.instructions.contains_key(p))
            .collect();
        if perspectives.len() < 2 {
            skipped += 1;
            continue;
        }
        let i = rng.gen_range(0..perspectives.len());
        let mut j = rng.gen_range(0..perspectives.len() - 1);
        if j >= i {
            j += 1;
        }
        let instruction_perspective = perspectives[i];
        let reasoning_perspective = perspectives[j];
        examples.push(SftExample {
            sample_id: sample.id.clone(),
            screenshot_id: sample.screenshot.id.clone(),
            instruction_perspective,
            instruction_text: sample.instructions[&instruction_perspective].clone(),
            reasoning_perspective,
            reasoning_text: sample.instructions[&reasoning_perspective].clone(),
            gt_point: sample.gt_bbox.center(),
        });
    }
    SftCorpus { examples, skipped }
}

/// Builds the RL corpus: one example per (sample, available perspective).
pub fn build_rl_corpus(samples: &[GroundingSample]) -> Vec<RlExample> {
    let mut examples = Vec::new();
    for sample in samples {
        for (perspective, text) in &sample.instructions {
            examples.push(RlExample {
                sample_id: sample.id.clone(),
                screenshot_id: sample.screenshot.id.clone(),
                instruction_text: text.clone(),
                instruction_perspective: *perspective,
                gt_bbox: sample.gt_bbox,
            });
        }
    }
    examples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Screenshot;
    use std::collections::BTreeMap;

    fn sample(id: &str, perspectives: &[Perspective]) -> GroundingSample {
        let mut instructions = BTreeMap::new();
        instructions.insert(Perspective::Original, "orig".to_string());
        for p in perspectives {
            instructions.insert(*p, format!("{p} text"));
        }
        GroundingSample {
            id: id.into(),
            screenshot: Screenshot { id: format!("{id}-shot"), width: 100, height: 100, image_ref: "x".into() },
            gt_bbox: BBox::new(10.0, 10.0, 30.0, 20.0),
            instructions,
            source: "t".into(),
            tags: vec![],
            extra: serde_json::Map::new(),
        }
    }

    #[test]
    fn sft_corpus_is_deterministic_for_seed() {
        let samples: Vec<_> =
            (0..50).map(|i| sample(&format!("s{i}"), &Perspective::AUGMENTED)).collect();
        let a = build_sft_corpus(&samples, 7);
        let b = build_sft_corpus(&samples, 7);
        assert_eq!(a.examples, b.examples);
        let c = build_sft_corpus(&samples, 8);
        assert_ne!(a.examples, c.examples);
    }

    #[test]
    fn sft_pair_is_distinct_and_gt_point_is_center() {
        let samples = vec![sample("s0", &Perspective::AUGMENTED)];
        let corpus = build_sft_corpus(&samples, 1);
        let ex = &corpus.examples[0];
        assert_ne!(ex.instruction_perspective, ex.reasoning_perspective);
        assert_eq!(ex.gt_point, Point::new(20.0, 15.0));
    }

    #[test]
    fn sft_two_perspective_sample_uses_the_only_pair() {
        let samples = vec![sample("s0", &[Perspective::Appearance, Perspective::Goal])];
        for seed in 0..20 {
            let corpus = build_sft_corpus(&samples, seed);
            let ex = &corpus.examples[0];
            let pair = (ex.instruction_perspective, ex.reasoning_perspective);
            assert!(
                pair == (Perspective::Appearance, Perspective::Goal)
                    || pair == (Perspective::Goal, Perspective::Appearance)
            );
        }
    }

    #[test]
    fn sft_skips_underfilled_samples_with_count() {
        let samples = vec![
            sample("ok", &Perspective::AUGMENTED),
            sample("thin", &[Perspective::Appearance]),
            sample("bare", &[]),
        ];
        let corpus = build_sft_corpus(&samples, 3);
        assert_eq!(corpus.examples.len(), 1);
        assert_eq!(corpus.skipped, 2);
    }

    #[test]
    fn sft_conservation_at_scale() {
        let samples: Vec<_> =
            (0..1000).map(|i| sample(&format!("s{i}"), &Perspective::AUGMENTED)).collect();
        let corpus = build_sft_corpus(&samples, 42);
        assert_eq!(corpus.examples.len(), 1000);
        assert_eq!(corpus.skipped, 0);
    }

    #[test]
    fn sft_pair_marginals_are_uniform() {
        // With 4 perspectives there are 12 ordered pairs; over n draws each
        // should land within 3 sigma of n/12.
        let samples: Vec<_> =
            (0..12000).map(|i| sample(&format!("s{i}"), &Perspective::AUGMENTED)).collect();
        let corpus = build_sft_corpus(&samples, 99);
        let mut counts = std::collections::HashMap::new();
        for ex in &corpus.examples {
            *counts.entry((ex.instruction_perspective, ex.reasoning_perspective)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 12);
        let n = corpus.examples.len() as f64;
        let p = 1.0 / 12.0;
        let sigma = (n * p * (1.0 - p)).sqrt();
        for (&pair, &count) in &counts {
            let dev = (count as f64 - n * p).abs();
            assert!(dev <= 3.0 * sigma, "pair {pair:?} count {count} deviates {dev:.1} > 3 sigma");
        }
    }

    #[test]
    fn rl_corpus_counts() {
        assert!(build_rl_corpus(&[]).is_empty());
        let samples = vec![sample("s0", &Perspective::AUGMENTED)];
        // 4 augmented + original
        assert_eq!(build_rl_corpus(&samples).len(), 5);
        let samples: Vec<_> = (0..100)
            .map(|i| sample(&format!("s{i}"), &Perspective::AUGMENTED[..(i % 3) + 1]))
            .collect();
        let expected: usize = samples.iter().map(|s| s.instructions.len()).sum();
        assert_eq!(build_rl_corpus(&samples).len(), expected);
    }
}
